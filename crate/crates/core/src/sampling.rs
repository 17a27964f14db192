//! Random loss weights on the probability simplex.
//!
//! Two strategies: normalized iid uniforms (not uniform on the simplex) and
//! sorted differences of distinct integers in `[1, M)` divided by `M`
//! (uniform on the simplex).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Resolution of the sorted-differences sampler.
pub const SIMPLEX_RESOLUTION: u64 = 1 << 32;

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights(pub Vec<f64>);

impl SimplexWeights {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return invalid(format!("simplex weights out of [0, 1]: {a:?}"));
        }
        let s: f64 = a.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return invalid(format!("simplex weights sum to {s}, not 1"));
        }
        Ok(Self(a))
    }

    /// `(1/n, .., 1/n)`.
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Zeroes the inactive coordinates and renormalizes the rest.
    /// `None` when no active coordinate carries mass.
    pub fn restricted(&self, active: &[bool]) -> Option<Self> {
        let kept: Vec<f64> = self
            .0
            .iter()
            .zip(active)
            .map(|(&a, &on)| if on { a } else { 0.0 })
            .collect();
        let s: f64 = kept.iter().sum();
        (s > 0.0).then(|| Self(kept.into_iter().map(|a| a / s).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Fixed weights: no sampling.
    #[default]
    None,
    S1,
    S2,
}

impl std::str::FromStr for Strategy {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "s1" => Ok(Self::S1),
            "s2" => Ok(Self::S2),
            other => invalid(format!("unknown sampling strategy `{other}` (expected none, s1, s2)")),
        }
    }
}

/// Normalized iid uniforms.
pub fn sample_s1(rng: &mut impl Rng, n: usize) -> SimplexWeights {
    assert!(n >= 1);
    loop {
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let s: f64 = u.iter().sum();
        if s > 0.0 {
            return SimplexWeights(u.into_iter().map(|v| v / s).collect());
        }
    }
}

/// Sorted differences of `n - 1` distinct integers in `[1, M)`, over `M`.
///
/// Every coordinate is a multiple of `1/M` with `M = 2^32`, so the sum is
/// exactly one in floating point.
pub fn sample_s2(rng: &mut impl Rng, n: usize) -> SimplexWeights {
    assert!(n >= 1);
    let mut cuts: Vec<u64> = Vec::with_capacity(n + 1);
    while cuts.len() < n - 1 {
        let c = rng.random_range(1..SIMPLEX_RESOLUTION);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.push(0);
    cuts.push(SIMPLEX_RESOLUTION);
    cuts.sort_unstable();
    let m = SIMPLEX_RESOLUTION as f64;
    SimplexWeights(cuts.windows(2).map(|w| (w[1] - w[0]) as f64 / m).collect())
}

pub fn sample(strategy: Strategy, rng: &mut impl Rng, n: usize) -> Option<SimplexWeights> {
    match strategy {
        Strategy::None => None,
        Strategy::S1 => Some(sample_s1(rng, n)),
        Strategy::S2 => Some(sample_s2(rng, n)),
    }
}

/// Draws on the full `active.len()`-simplex and marginalizes onto the active
/// coordinates by renormalization, redrawing in the probability-zero case
/// where every active coordinate is 0.
pub fn sample_active(strategy: Strategy, rng: &mut impl Rng, active: &[bool]) -> Option<SimplexWeights> {
    if strategy == Strategy::None || !active.iter().any(|&a| a) {
        return None;
    }
    loop {
        let w = sample(strategy, rng, active.len())?;
        if let Some(r) = w.restricted(active) {
            return Some(r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_lie_on_the_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            for w in [sample_s1(&mut rng, 3), sample_s2(&mut rng, 3)] {
                assert!((w.0.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                assert!(w.0.iter().all(|&a| (0.0..=1.0).contains(&a)));
            }
            let w = sample_s2(&mut rng, 3);
            assert!(w.0.iter().all(|&a| a >= 1.0 / SIMPLEX_RESOLUTION as f64));
            assert_eq!(w.0.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn seeds_reproduce() {
        let a = sample_s2(&mut ChaCha8Rng::seed_from_u64(11), 3);
        let b = sample_s2(&mut ChaCha8Rng::seed_from_u64(11), 3);
        assert_eq!(a, b);
    }

    #[test]
    fn two_coordinate_closed_forms() {
        // n = 2: S2 gives a1 ~ U(0,1); S1 gives a1 = u1/(u1+u2), P(a1 > 3/4) = 1/6.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let s2 = (0..n).filter(|_| sample_s2(&mut rng, 2).0[0] > 0.75).count() as f64 / n as f64;
        let s1 = (0..n).filter(|_| sample_s1(&mut rng, 2).0[0] > 0.75).count() as f64 / n as f64;
        assert!((s2 - 0.25).abs() < 0.01, "{s2}");
        assert!((s1 - 1.0 / 6.0).abs() < 0.01, "{s1}");
    }

    #[test]
    fn restriction_renormalizes_active_terms() {
        let w = SimplexWeights(vec![0.5, 0.25, 0.25]);
        let r = w.restricted(&[true, false, true]).unwrap();
        assert_eq!(r.0, vec![2.0 / 3.0, 0.0, 1.0 / 3.0]);
        assert!(SimplexWeights(vec![0.0, 1.0]).restricted(&[true, false]).is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_active(Strategy::None, &mut rng, &[true, true, true]).is_none());
        let a = sample_active(Strategy::S1, &mut rng, &[false, true, true]).unwrap();
        assert_eq!(a.0[0], 0.0);
        assert!((a.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(SimplexWeights::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexWeights::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexWeights::new(vec![1.5, -0.5]).is_err());
        assert_eq!("S2".parse::<Strategy>().unwrap(), Strategy::S2);
        assert!("s3".parse::<Strategy>().is_err());
    }
}
