use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kdforge::checkpoint::Checkpoint;
use kdforge::data::{gen_token_corpus, MarkovConfig, MarkovSpec, TokenCorpus};
use kdforge::kd_loss::{teacher_loss, KdOptions};
use kdforge::metrics::{frechet_distance, GaussianStats};
use kdforge::models::LogitsBatch;
use kdforge::nn::Linear;
use kdforge::sampling::{sample_s1, sample_s2};
use kdforge::transfer::equidistant_map;
use kdforge::Tensor;

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len)
}

fn naive_conv(x: &[f64], w: &[f64], (b, cin, l): (usize, usize, usize), (cout, k): (usize, usize), s: usize, p: usize) -> Vec<f64> {
    let lout = (l + 2 * p - k) / s + 1;
    let mut y = vec![0.0; b * cout * lout];
    for bi in 0..b {
        for o in 0..cout {
            for t in 0..lout {
                let mut acc = 0.0;
                for i in 0..cin {
                    for j in 0..k {
                        let pos = (t * s + j) as isize - p as isize;
                        if pos >= 0 && (pos as usize) < l {
                            acc += x[(bi * cin + i) * l + pos as usize] * w[(o * cin + i) * k + j];
                        }
                    }
                }
                y[(bi * cout + o) * lout + t] = acc;
            }
        }
    }
    y
}

fn naive_conv_t(x: &[f64], w: &[f64], (b, cin, l): (usize, usize, usize), (cout, k): (usize, usize), s: usize, p: usize) -> Vec<f64> {
    let lout = (l - 1) * s + k - 2 * p;
    let mut y = vec![0.0; b * cout * lout];
    for bi in 0..b {
        for i in 0..cin {
            for t in 0..l {
                for o in 0..cout {
                    for j in 0..k {
                        let pos = (t * s + j) as isize - p as isize;
                        if pos >= 0 && (pos as usize) < lout {
                            y[(bi * cout + o) * lout + pos as usize] += x[(bi * cin + i) * l + t] * w[(i * cout + o) * k + j];
                        }
                    }
                }
            }
        }
    }
    y
}

fn conv_case() -> impl Strategy<Value = (usize, usize, usize, usize, usize, usize, usize)> {
    (1usize..3, 1usize..4, 1usize..4, 1usize..6, 1usize..4, 0usize..3, 4usize..20)
        .prop_filter("kernel fits", |&(_, _, _, k, _, p, l)| l + 2 * p >= k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv1d_matches_direct_sum((b, cin, cout, k, s, p, l) in conv_case(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect() };
        let (xv, wv) = (draw(b * cin * l), draw(cout * cin * k));
        let x = Tensor::<f64>::from_f64(&xv, &[b, cin, l]).unwrap();
        let w = Tensor::<f64>::from_f64(&wv, &[cout, cin, k]).unwrap();
        let got = x.conv1d(&w, None, s, p).unwrap().to_vec();
        let want = naive_conv(&xv, &wv, (b, cin, l), (cout, k), s, p);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_transpose1d_matches_scatter_sum((b, cin, cout, k, s, p, l) in conv_case(), seed in any::<u64>()) {
        prop_assume!((l - 1) * s + k > 2 * p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect() };
        let (xv, wv) = (draw(b * cin * l), draw(cin * cout * k));
        let x = Tensor::<f64>::from_f64(&xv, &[b, cin, l]).unwrap();
        let w = Tensor::<f64>::from_f64(&wv, &[cin, cout, k]).unwrap();
        let got = x.conv_transpose1d(&w, None, s, p).unwrap().to_vec();
        let want = naive_conv_t(&xv, &wv, (b, cin, l), (cout, k), s, p);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_draws_sum_to_one(n in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in [sample_s1(&mut rng, n), sample_s2(&mut rng, n)] {
            prop_assert_eq!(w.len(), n);
            prop_assert!(w.as_slice().iter().all(|&a| (0.0..=1.0).contains(&a)));
            prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equidistant_maps_are_strictly_increasing(n in 1usize..64, frac in 0.0f64..1.0) {
        let k = 1 + ((n - 1) as f64 * frac) as usize;
        let m = equidistant_map(k, n).unwrap().map;
        prop_assert_eq!(m.len(), k);
        prop_assert_eq!(*m.last().unwrap(), n - 1);
        prop_assert!(m.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(equidistant_map(n + 1, n).is_err());
    }

    #[test]
    fn teacher_kl_is_nonnegative(c in 2usize..10, t in 1usize..4, p in values(27), q in values(27)) {
        let shape = [1, 1, t.min(3), c.min(9)];
        let n: usize = shape.iter().product();
        let lp = LogitsBatch(Tensor::<f64>::from_f64(&p[..n], &shape).unwrap());
        let lq = LogitsBatch(Tensor::<f64>::from_f64(&q[..n], &shape).unwrap());
        let kl = teacher_loss(&lp, &lq, &KdOptions::default()).unwrap().item().unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert_eq!(teacher_loss(&lp, &lp, &KdOptions::default()).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn checkpoints_round_trip(input in 1usize..6, output in 1usize..6, bias in any::<bool>(), seed in any::<u64>()) {
        let layer = Linear::<f32>::new(&mut ChaCha8Rng::seed_from_u64(seed), input, output, bias).unwrap();
        let bytes = Checkpoint::from_module(&layer).to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes.clone());
        for cut in [0, 3, 7, bytes.len() / 2, bytes.len() - 1] {
            prop_assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn token_corpora_round_trip(k in 1usize..4, c in 2usize..12, t in 1usize..8, clips in 0usize..6, seed in any::<u64>()) {
        let cfg = MarkovConfig { codebooks: k, cardinality: c, clip_len: t, seed, ..Default::default() };
        let spec = MarkovSpec::from_config(&cfg).unwrap();
        let corpus = gen_token_corpus(&spec, clips, seed);
        let bytes = corpus.to_bytes().unwrap();
        let back = TokenCorpus::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &corpus);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn frechet_is_symmetric_and_nonnegative(mu in values(3), nu in values(3), a in prop::collection::vec(0.1f64..3.0, 3), b in prop::collection::vec(0.1f64..3.0, 3)) {
        let stats = |m: &[f64], v: &[f64]| GaussianStats {
            dim: 3,
            mean: m.to_vec(),
            cov: (0..9).map(|i| if i % 4 == 0 { v[i / 4] } else { 0.0 }).collect(),
        };
        let (g1, g2) = (stats(&mu, &a), stats(&nu, &b));
        let (d12, d21) = (frechet_distance(&g1, &g2).unwrap(), frechet_distance(&g2, &g1).unwrap());
        prop_assert!(d12 >= -1e-12);
        prop_assert!((d12 - d21).abs() < 1e-9 * (1.0 + d12));
    }
}
