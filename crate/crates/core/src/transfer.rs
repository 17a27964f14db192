//! Student initialization from a deeper teacher: pick evenly spaced teacher
//! blocks and copy their weights.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::{LanguageModel, LmConfig};
use crate::nn::Module;
use crate::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapStrategy {
    /// `floor((k+1)·N/K) − 1`: ends on the last teacher layer.
    #[default]
    Equidistant,
    /// `min(floor(k·N/(K−1)), N−1)`: starts on the first, ends on the last.
    AnchorFirst,
}

/// Student layer `k` ↔ teacher layer `map[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMapping {
    pub student_layers: usize,
    pub teacher_layers: usize,
    pub map: Vec<usize>,
}

fn check_depths(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return invalid(format!("layer mapping needs 1 <= student layers ({k}) <= teacher layers ({n})"));
    }
    Ok(())
}

pub fn equidistant_map(student_layers: usize, teacher_layers: usize) -> Result<LayerMapping> {
    check_depths(student_layers, teacher_layers)?;
    let (k, n) = (student_layers, teacher_layers);
    Ok(LayerMapping {
        student_layers: k,
        teacher_layers: n,
        map: (0..k).map(|i| (i + 1) * n / k - 1).collect(),
    })
}

pub fn anchor_first_map(student_layers: usize, teacher_layers: usize) -> Result<LayerMapping> {
    check_depths(student_layers, teacher_layers)?;
    let (k, n) = (student_layers, teacher_layers);
    let map = if k == 1 {
        vec![n - 1]
    } else {
        (0..k).map(|i| (i * n / (k - 1)).min(n - 1)).collect()
    };
    Ok(LayerMapping {
        student_layers: k,
        teacher_layers: n,
        map,
    })
}

pub fn layer_map(strategy: MapStrategy, student_layers: usize, teacher_layers: usize) -> Result<LayerMapping> {
    match strategy {
        MapStrategy::Equidistant => equidistant_map(student_layers, teacher_layers),
        MapStrategy::AnchorFirst => anchor_first_map(student_layers, teacher_layers),
    }
}

/// Checks that every student block has the shape of a teacher block.
pub fn check_transfer_compat(teacher: &LmConfig, student: &LmConfig) -> Result<()> {
    if teacher.dim != student.dim {
        return Err(Error::ShapeMismatch {
            op: "weight transfer (student dim vs teacher dim)",
            lhs: vec![student.dim],
            rhs: vec![teacher.dim],
        });
    }
    let geometry = |c: &LmConfig| {
        vec![c.heads, c.ffn_mult, c.codebooks, c.cardinality, c.max_time, c.conditioner.dim, c.conditioner.vocab]
    };
    if geometry(teacher) != geometry(student) || teacher.conditioner != student.conditioner {
        return Err(Error::ShapeMismatch {
            op: "weight transfer (heads, ffn, K, C, max_time, conditioner)",
            lhs: geometry(student),
            rhs: geometry(teacher),
        });
    }
    if student.layers > teacher.layers {
        return invalid(format!(
            "student has more layers ({}) than teacher ({})",
            student.layers, teacher.layers
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub mapping: Vec<usize>,
    pub copied_tensors: usize,
}

/// Teacher parameter name feeding the student parameter `name`.
fn source_name(name: &str, mapping: &LayerMapping) -> Option<String> {
    let Some(rest) = name.strip_prefix("blocks.") else {
        return Some(name.to_string());
    };
    let (idx, tail) = rest.split_once('.')?;
    let k: usize = idx.parse().ok()?;
    Some(format!("blocks.{}.{tail}", mapping.map.get(k)?))
}

/// Copies teacher block `mapping.map[k]` into student block `k`, and the
/// conditioner, embeddings, final norm and heads directly. Copies are fresh
/// trainable tensors, so a frozen teacher does not freeze the student.
pub fn transfer_weights<S: Scalar>(
    teacher: &LanguageModel<S>,
    student: &mut LanguageModel<S>,
    mapping: &LayerMapping,
) -> Result<TransferReport> {
    check_transfer_compat(&teacher.cfg, &student.cfg)?;
    if mapping.student_layers != student.blocks.len() || mapping.teacher_layers != teacher.blocks.len() {
        return Err(Error::ShapeMismatch {
            op: "weight transfer mapping",
            lhs: vec![mapping.student_layers, mapping.teacher_layers],
            rhs: vec![student.blocks.len(), teacher.blocks.len()],
        });
    }
    let source: HashMap<String, Tensor<S>> = teacher.named_params().into_iter().collect();
    let mut copied = 0;
    let mut failure: Option<Error> = None;
    student.visit_mut("", &mut |name, t| {
        if failure.is_some() {
            return;
        }
        match source_name(name, mapping).and_then(|n| source.get(&n)) {
            Some(s) if s.shape() == t.shape() => {
                *t = Tensor::param(s.to_vec(), s.shape()).expect("shape checked");
                copied += 1;
            }
            Some(s) => {
                failure = Some(Error::ShapeMismatch {
                    op: "weight transfer",
                    lhs: t.shape().to_vec(),
                    rhs: s.shape().to_vec(),
                })
            }
            None => failure = Some(Error::MissingTensor(name.to_string())),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(TransferReport {
            mapping: mapping.map.clone(),
            copied_tensors: copied,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ConditionerConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mapping_examples() {
        assert_eq!(equidistant_map(4, 24).unwrap().map, vec![5, 11, 17, 23]);
        assert_eq!(equidistant_map(7, 24).unwrap().map, vec![2, 5, 9, 12, 16, 19, 23]);
        assert_eq!(equidistant_map(5, 5).unwrap().map, vec![0, 1, 2, 3, 4]);
        assert_eq!(anchor_first_map(4, 24).unwrap().map, vec![0, 8, 16, 23]);
        assert!(equidistant_map(5, 4).is_err());
        assert!(equidistant_map(0, 4).is_err());
    }

    #[test]
    fn mappings_are_increasing_and_end_on_last_layer() {
        for n in 1..=64 {
            for k in 1..=n {
                for m in [equidistant_map(k, n).unwrap(), anchor_first_map(k, n).unwrap()] {
                    assert_eq!(m.map.len(), k);
                    assert!(m.map.windows(2).all(|w| w[0] < w[1]), "{k} {n} {:?}", m.map);
                    assert_eq!(*m.map.last().unwrap(), n - 1);
                }
            }
        }
    }

    fn cfg(layers: usize, dim: usize, heads: usize) -> LmConfig {
        LmConfig {
            layers,
            heads,
            dim,
            codebooks: 2,
            cardinality: 6,
            max_time: 8,
            ffn_mult: 2,
            conditioner: ConditionerConfig {
                vocab: 5,
                dim: 4,
                layers: 1,
                heads: 1,
                max_len: 4,
            },
        }
    }

    #[test]
    fn copied_blocks_match_teacher_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let teacher = LanguageModel::<f32>::new(&mut rng, &cfg(6, 8, 2)).unwrap();
        let mut student = LanguageModel::<f32>::new(&mut rng, &cfg(3, 8, 2)).unwrap();
        let m = equidistant_map(3, 6).unwrap();
        transfer_weights(&teacher, &mut student, &m).unwrap();
        let before: Vec<_> = student.named_params().into_iter().map(|(_, t)| t.to_vec()).collect();
        for (k, &tm) in m.map.iter().enumerate() {
            let a: Vec<_> = student.blocks[k].named_params().into_iter().map(|(_, t)| t.to_vec()).collect();
            let b: Vec<_> = teacher.blocks[tm].named_params().into_iter().map(|(_, t)| t.to_vec()).collect();
            assert_eq!(a, b);
        }
        transfer_weights(&teacher, &mut student, &m).unwrap();
        let after: Vec<_> = student.named_params().into_iter().map(|(_, t)| t.to_vec()).collect();
        assert_eq!(before, after);
        assert!(student.named_params().iter().all(|(_, t)| t.requires_grad()));
    }

    #[test]
    fn width_mismatch_names_both_dims() {
        let err = check_transfer_compat(&LmConfig::full_teacher(), &LmConfig::full_v2()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("720") && msg.contains("1024"), "{msg}");
        assert!(check_transfer_compat(&LmConfig::full_teacher(), &LmConfig::full_v1()).is_ok());
    }
}
