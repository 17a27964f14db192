use super::Tensor;
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over components of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the reverse-mode gradient of `f` at `x` with central differences.
pub fn grad_check<S, F>(f: F, x: &Tensor<S>, eps: f64) -> Result<GradCheckReport>
where
    S: Scalar,
    F: Fn(&Tensor<S>) -> Result<Tensor<S>>,
{
    if !(1e-5..=1e-2).contains(&eps) {
        return Err(Error::Invalid(format!("grad_check: eps {eps} outside [1e-5, 1e-2]")));
    }
    let leaf = x.detach().requires_grad_(true);
    let out = f(&leaf)?;
    if out.numel() != 1 {
        return Err(Error::NonScalarLoss(out.shape().to_vec()));
    }
    let analytic: Vec<f64> = if out.requires_grad() {
        out.backward()?.wrt(&leaf).to_f64_vec()
    } else {
        vec![0.0; x.numel()]
    };

    let base = x.to_f64_vec();
    let mut numeric = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let probe = |delta: f64| -> Result<f64> {
            let mut v = base.clone();
            v[i] += delta;
            f(&Tensor::from_f64(&v, x.shape())?)?.item()
        };
        let hi = probe(eps)?;
        let lo = probe(-eps)?;
        numeric.push((hi - lo) / (2.0 * eps));
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
        analytic,
        numeric,
    };
    for (i, (a, n)) in report.analytic.iter().zip(&report.numeric).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(1e-8);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_of_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor::<f64>::from_f64(&v, &[8]).unwrap();
        let r = grad_check(|x| Ok(x.square().sum_all()), &x, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor::<f64>::from_f64(&[0.2, 0.4], &[2]).unwrap();
        let r = grad_check(|_| Ok(Tensor::scalar(3.0)), &x, 1e-4).unwrap();
        assert!(r.analytic.iter().all(|&a| a == 0.0));
        assert!(r.numeric.iter().all(|n| n.abs() < 1e-9));
    }

    #[test]
    fn rejects_bad_eps_and_vector_outputs() {
        let x = Tensor::<f64>::from_f64(&[0.2, 0.4], &[2]).unwrap();
        assert!(grad_check(|x| Ok(x.sum_all()), &x, 1.0).is_err());
        assert!(matches!(
            grad_check(|x| Ok(x.relu()), &x, 1e-4),
            Err(Error::NonScalarLoss(_))
        ));
    }
}
