//! Set-level audio metrics: Fréchet distance between Gaussian fits of
//! embedding sets, mean pairwise KL between classifier posteriors, and a
//! frozen random-conv stand-in for the pretrained embedding/classifier nets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::Conv1d;
use crate::Tensor;

/// Row-major `[n, dim]` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub n: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return invalid("feature rows must share a dimension");
        }
        Ok(Self {
            n: rows.len(),
            dim,
            data: rows.concat(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    pub dim: usize,
    pub mean: Vec<f64>,
    /// Row-major `[dim, dim]`.
    pub cov: Vec<f64>,
}

/// Sample mean and unbiased covariance, symmetrized.
pub fn gaussian_stats(fs: &FeatureSet) -> Result<GaussianStats> {
    if fs.n < 2 {
        return invalid(format!("gaussian stats need at least 2 rows, got {}", fs.n));
    }
    let d = fs.dim;
    let mut mean = vec![0.0; d];
    for i in 0..fs.n {
        mean.iter_mut().zip(fs.row(i)).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= fs.n as f64);
    let mut cov = vec![0.0; d * d];
    for i in 0..fs.n {
        let c: Vec<f64> = fs.row(i).iter().zip(&mean).map(|(v, m)| v - m).collect();
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += c[a] * c[b];
            }
        }
    }
    let denom = (fs.n - 1) as f64;
    let mut sym = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            sym[a * d + b] = 0.5 * (cov[a * d + b] + cov[b * d + a]) / denom;
        }
    }
    Ok(GaussianStats { dim: d, mean, cov: sym })
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors as columns)`, or `None` without
/// convergence.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            return Some(((0..n).map(|i| a[i * n + i]).collect(), v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    None
}

/// Principal square root of a symmetric PSD matrix (negative eigenvalues
/// floored at 0). Retries once with `1e-6·I` added if Jacobi fails.
pub fn sqrt_psd(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return invalid("matrix square root of a non-finite matrix");
    }
    let (vals, vecs) = match symmetric_eigen(a, n) {
        Some(e) => e,
        None => {
            let mut j = a.to_vec();
            (0..n).for_each(|i| j[i * n + i] += 1e-6);
            symmetric_eigen(&j, n).ok_or_else(|| Error::Invalid("eigendecomposition did not converge".into()))?
        }
    };
    let roots: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|k| vecs[i * n + k] * roots[k] * vecs[j * n + k]).sum();
        }
    }
    Ok(out)
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// `‖μ₁ − μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁^½ Σ₂ Σ₁^½)^½)`.
pub fn frechet_distance(g1: &GaussianStats, g2: &GaussianStats) -> Result<f64> {
    if g1.dim != g2.dim {
        return Err(Error::ShapeMismatch {
            op: "frechet_distance",
            lhs: vec![g1.dim],
            rhs: vec![g2.dim],
        });
    }
    if g1.cov.iter().chain(&g2.cov).any(|v| !v.is_finite()) {
        return invalid("non-finite covariance");
    }
    let n = g1.dim;
    let dmu: f64 = g1.mean.iter().zip(&g2.mean).map(|(a, b)| (a - b).powi(2)).sum();
    let s1 = sqrt_psd(&g1.cov, n)?;
    let inner = matmul(&matmul(&s1, &g2.cov, n), &s1, n);
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = 0.5 * (inner[i * n + j] + inner[j * n + i]);
        }
    }
    let cross = sqrt_psd(&sym, n)?;
    let tr = |m: &[f64]| (0..n).map(|i| m[i * n + i]).sum::<f64>();
    Ok((dmu + tr(&g1.cov) + tr(&g2.cov) - 2.0 * tr(&cross)).max(0.0))
}

/// Mean over paired rows of `KL(ref ‖ gen)`, probabilities floored at 1e-12.
pub fn pairwise_kl(gen: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    if gen.len() != reference.len() || gen.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "pairwise_kl",
            lhs: vec![gen.len()],
            rhs: vec![reference.len()],
        });
    }
    let check = |row: &[f64]| {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 || row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return invalid(format!("row is not a probability vector (sum {s})"));
        }
        Ok(())
    };
    let mut total = 0.0;
    for (g, r) in gen.iter().zip(reference) {
        check(g)?;
        check(r)?;
        if g.len() != r.len() {
            return Err(Error::ShapeMismatch {
                op: "pairwise_kl row",
                lhs: vec![g.len()],
                rhs: vec![r.len()],
            });
        }
        total += r
            .iter()
            .zip(g)
            .filter(|(&rp, _)| rp > 0.0)
            .map(|(&rp, &gp)| rp * (rp.max(1e-12).ln() - gp.max(1e-12).ln()))
            .sum::<f64>();
    }
    Ok(total / gen.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub seed: u64,
    /// Embedding width D.
    pub dim: usize,
    /// Number of posterior classes C.
    pub classes: usize,
    pub channels: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            seed: 1234,
            dim: 16,
            classes: 8,
            channels: 16,
        }
    }
}

/// Frozen, randomly initialized conv net producing an embedding and a class
/// posterior per clip.
#[derive(Debug, Clone)]
pub struct ToyExtractor {
    pub cfg: ExtractorConfig,
    convs: Vec<Conv1d<f64>>,
    embed: Tensor<f64>,
    classify: Tensor<f64>,
}

/// First-layer kernel is long enough to resolve a few hundred Hz at 8 kHz.
const KERNELS: [usize; 3] = [33, 9, 9];
const STRIDE: usize = 4;

impl ToyExtractor {
    pub fn new(cfg: &ExtractorConfig) -> Result<Self> {
        if cfg.dim == 0 || cfg.classes < 2 || cfg.channels == 0 {
            return invalid("extractor needs dim > 0, classes >= 2, channels > 0");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let ch = cfg.channels;
        // He-scaled frozen weights so activations keep their scale with depth
        let mut conv = |cin: usize, k: usize| -> Result<Conv1d<f64>> {
            Ok(Conv1d {
                weight: crate::nn::normal(&mut rng, &[ch, cin, k], (2.0 / (cin * k) as f64).sqrt())?.detach(),
                bias: Tensor::zeros(&[ch]),
                stride: STRIDE,
                padding: 0,
            })
        };
        let convs = vec![conv(1, KERNELS[0])?, conv(ch, KERNELS[1])?, conv(ch, KERNELS[2])?];
        let embed = crate::nn::normal(&mut rng, &[2 * ch, cfg.dim], 1.0 / (2.0 * ch as f64).sqrt())?.detach();
        let classify = crate::nn::normal(&mut rng, &[cfg.dim, cfg.classes], 1.0 / (cfg.dim as f64).sqrt())?.detach();
        Ok(Self {
            cfg: cfg.clone(),
            convs,
            embed,
            classify,
        })
    }

    pub fn receptive_field(&self) -> usize {
        KERNELS.iter().rev().fold(1, |r, k| (r - 1) * STRIDE + k)
    }

    /// `(embedding [D], posterior [C])` for one clip.
    pub fn features(&self, clip: &[f32]) -> Result<(Vec<f64>, Vec<f64>)> {
        if clip.len() < self.receptive_field() {
            return invalid(format!(
                "clip of {} samples shorter than extractor receptive field {}",
                clip.len(),
                self.receptive_field()
            ));
        }
        let mut h = Tensor::<f64>::new(clip.iter().map(|&v| v as f64).collect(), &[1, 1, clip.len()])?;
        for c in &self.convs {
            h = c.forward(&h)?.relu();
        }
        let ch = self.cfg.channels;
        // per-channel log energy and mean activation
        let energy = h.square().mean(2, false)?.sqrt().add_scalar(1e-2).ln();
        let pooled = Tensor::concat(&[energy, h.mean(2, false)?], 1)?.reshape(&[1, 2 * ch])?;
        let emb = pooled.matmul(&self.embed)?;
        let post = emb.tanh().matmul(&self.classify)?.scale(4.0).softmax(1)?;
        Ok((emb.to_vec(), post.to_vec()))
    }

    /// Embeddings and posteriors for many clips, on up to `threads` workers.
    /// Results do not depend on the thread count.
    pub fn extract_all(&self, clips: &[Vec<f32>], threads: usize) -> Result<(FeatureSet, Vec<Vec<f64>>)> {
        let threads = threads.max(1).min(clips.len().max(1));
        let chunk = clips.len().div_ceil(threads).max(1);
        type Part = Result<Vec<(Vec<f64>, Vec<f64>)>>;
        let results: Vec<Part> = std::thread::scope(|s| {
            let handles: Vec<_> = clips
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|c| self.features(c)).collect()))
                .collect();
            handles.into_iter().map(|h| h.join().expect("extractor worker panicked")).collect()
        });
        let mut rows = Vec::with_capacity(clips.len());
        let mut posts = Vec::with_capacity(clips.len());
        for part in results {
            for (e, p) in part? {
                rows.push(e);
                posts.push(p);
            }
        }
        Ok((FeatureSet::new(&rows)?, posts))
    }
}

/// Set-level evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frechet: f64,
    pub kl: f64,
    pub n_samples: usize,
    pub extractor_seed: u64,
}

/// Fréchet distance between embedding sets and mean KL between paired
/// posteriors of `generated` against `reference`.
pub fn evaluate(extractor: &ToyExtractor, generated: &[Vec<f32>], reference: &[Vec<f32>], threads: usize) -> Result<EvalReport> {
    let (fg, pg) = extractor.extract_all(generated, threads)?;
    let (fr, pr) = extractor.extract_all(reference, threads)?;
    Ok(EvalReport {
        frechet: frechet_distance(&gaussian_stats(&fg)?, &gaussian_stats(&fr)?)?,
        kl: pairwise_kl(&pg, &pr)?,
        n_samples: generated.len(),
        extractor_seed: extractor.cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_point_stats() {
        let fs = FeatureSet::new(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let g = gaussian_stats(&fs).unwrap();
        assert_eq!(g.mean, vec![1.0, 0.0]);
        assert_eq!(g.cov, vec![2.0, 0.0, 0.0, 0.0]);
        let same = FeatureSet::new(&vec![vec![1.0, 3.0]; 4]).unwrap();
        assert!(gaussian_stats(&same).unwrap().cov.iter().all(|&c| c == 0.0));
        assert!(gaussian_stats(&FeatureSet::new(&[vec![1.0]]).unwrap()).is_err());
    }

    #[test]
    fn normal_draws_estimate_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let g = gaussian_stats(&FeatureSet::new(&rows).unwrap()).unwrap();
        assert!(g.mean.iter().all(|m| m.abs() < 0.05));
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((g.cov[a * 3 + b] - want).abs() < 0.1);
            }
        }
    }

    #[test]
    fn diagonal_closed_form() {
        let g1 = GaussianStats {
            dim: 2,
            mean: vec![0.0, 0.0],
            cov: vec![1.0, 0.0, 0.0, 1.0],
        };
        let g2 = GaussianStats {
            dim: 2,
            mean: vec![1.0, 0.0],
            cov: vec![4.0, 0.0, 0.0, 4.0],
        };
        assert!((frechet_distance(&g1, &g2).unwrap() - 3.0).abs() < 1e-10);
        assert!(frechet_distance(&g1, &g1).unwrap() < 1e-12);
    }

    #[test]
    fn symmetric_and_monotone_in_mean_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows = |rng: &mut ChaCha8Rng, shift: f64| -> Vec<Vec<f64>> {
            (0..50).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0) + shift).collect()).collect()
        };
        let a = gaussian_stats(&FeatureSet::new(&rows(&mut rng, 0.0)).unwrap()).unwrap();
        let b = gaussian_stats(&FeatureSet::new(&rows(&mut rng, 0.3)).unwrap()).unwrap();
        let (ab, ba) = (frechet_distance(&a, &b).unwrap(), frechet_distance(&b, &a).unwrap());
        assert!((ab - ba).abs() < 1e-6, "{ab} {ba}");
        let mut prev = frechet_distance(&a, &a).unwrap();
        for step in 1..5 {
            let mut c = a.clone();
            c.mean[0] += step as f64;
            let d = frechet_distance(&a, &c).unwrap();
            assert!(d > prev);
            prev = d;
        }
        let wrong = GaussianStats {
            dim: 1,
            mean: vec![0.0],
            cov: vec![1.0],
        };
        assert!(frechet_distance(&a, &wrong).is_err());
    }

    #[test]
    fn sqrt_of_psd_squares_back() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let r = sqrt_psd(&a, 3).unwrap();
        let back = matmul(&r, &r, 3);
        assert!(back.iter().zip(&a).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn kl_closed_forms() {
        let r = vec![vec![1.0, 0.0]];
        let g = vec![vec![0.5, 0.5]];
        assert!((pairwise_kl(&g, &r).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(pairwise_kl(&r, &r).unwrap(), 0.0);
        let two = pairwise_kl(&[g[0].clone(), r[0].clone()], &[r[0].clone(), r[0].clone()]).unwrap();
        assert!((two - 2f64.ln() / 2.0).abs() < 1e-12);
        assert!(pairwise_kl(&[vec![0.7, 0.7]], &r).is_err());
    }

    #[test]
    fn extractor_is_deterministic_and_separates_noise_from_tones() {
        let ex = ToyExtractor::new(&ExtractorConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tone = |rng: &mut ChaCha8Rng| -> Vec<f32> {
            let f = rng.random_range(200.0..800.0);
            (0..1024).map(|i| (0.6 * (2.0 * std::f64::consts::PI * f * i as f64 / 8000.0).sin()) as f32).collect()
        };
        let noise = |rng: &mut ChaCha8Rng| -> Vec<f32> { (0..1024).map(|_| rng.random_range(-0.6..0.6)).collect() };
        let tones: Vec<_> = (0..1200).map(|_| tone(&mut rng)).collect();
        let noises: Vec<_> = (0..600).map(|_| noise(&mut rng)).collect();
        let (e1, p1) = ex.features(&tones[0]).unwrap();
        let (e2, p2) = ex.features(&tones[0]).unwrap();
        assert_eq!((e1.len(), p1.len()), (16, 8));
        assert_eq!((e1, p1), (e2, p2));

        let (fa, _) = ex.extract_all(&tones[..600], 1).unwrap();
        let (fb, _) = ex.extract_all(&tones[600..], 3).unwrap();
        let (fn_, _) = ex.extract_all(&noises, 2).unwrap();
        let base = frechet_distance(&gaussian_stats(&fa).unwrap(), &gaussian_stats(&fb).unwrap()).unwrap();
        let sep = frechet_distance(&gaussian_stats(&fa).unwrap(), &gaussian_stats(&fn_).unwrap()).unwrap();
        assert!(sep > 10.0 * base, "{sep} vs {base}");
        assert!(ex.features(&[0.0; 8]).is_err());
    }
}
