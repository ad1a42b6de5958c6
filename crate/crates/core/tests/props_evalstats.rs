//! Property tests of the comparison statistics.

mod common;

use common::oracles::{auc_pair_count, t_two_sided_p_quadrature};
use meniscus::datapipe::Mask;
use meniscus::evalstats::{bland_altman, bonferroni, dice, has_meniscus, pearson, roc_auc, t_two_sided_p};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn mask_strategy(w: usize, h: usize) -> impl Strategy<Value = Mask> {
    prop::collection::vec(0u8..2, w * h).prop_map(move |d| Mask::new(w, h, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dice_is_symmetric_and_bounded(a in mask_strategy(9, 7), b in mask_strategy(9, 7)) {
        let ab = dice(&a, &b).unwrap();
        prop_assert_eq!(ab, dice(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn auc_matches_pair_counting(
        probs in prop::collection::vec(prop::sample::select(vec![0.0f32, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0]), 48),
        truth in mask_strategy(8, 6),
    ) {
        let pos = truth.count();
        prop_assume!(pos > 0 && pos < 48);
        let roc = roc_auc(&[&probs], &[&truth]).unwrap();
        let (num, den) = auc_pair_count(&probs, &truth.data().iter().map(|&v| v == 1).collect::<Vec<_>>());
        prop_assert_eq!(roc.auc, num as f64 / den as f64);
        prop_assert!((0.0..=1.0).contains(&roc.auc));
        prop_assert_eq!(roc.curve.first().copied(), Some((0.0, 0.0)));
        prop_assert_eq!(roc.curve.last().copied(), Some((1.0, 1.0)));
        prop_assert!(roc.curve.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
    }

    #[test]
    fn bonferroni_is_bounded_and_monotone(p in 0.0f64..=1.0, m in 1usize..50) {
        let adj = bonferroni(p, m);
        prop_assert!(adj >= p && adj <= 1.0);
        prop_assert!(bonferroni(p, m + 1) >= adj);
    }

    #[test]
    fn pearson_is_bounded(xy in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let Ok((r, p)) = pearson(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&r), "r = {}", r);
            prop_assert!((0.0..=1.0).contains(&p), "p = {}", p);
        }
    }

    #[test]
    fn meniscus_detection_is_translation_invariant(
        m in mask_strategy(6, 5), dx in 0usize..5, dy in 0usize..5,
    ) {
        let (w, h) = (6 + dx + 4, 5 + dy + 4);
        let mut data = vec![0u8; w * h];
        for y in 0..5 {
            for x in 0..6 {
                data[(y + dy) * w + x + dx] = u8::from(m.get(x, y));
            }
        }
        let shifted = Mask::new(w, h, data).unwrap();
        prop_assert_eq!(has_meniscus(&m), has_meniscus(&shifted));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn t_p_values_match_quadrature(t in -8.0f64..8.0, df in 1u32..60) {
        let p = t_two_sided_p(t, f64::from(df));
        let q = t_two_sided_p_quadrature(t, f64::from(df));
        prop_assert!((p - q).abs() < 1e-7 * q.max(1e-3), "t {} df {}: {} vs {}", t, df, p, q);
    }
}

#[test]
fn bland_altman_limits_cover_95_percent_of_gaussian_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let noise = Normal::new(0.0, 3.0).unwrap();
    let x: Vec<f64> = (0..n).map(|i| 50.0 + f64::from(i % 97)).collect();
    let y: Vec<f64> = x.iter().map(|v| v + 1.5 + noise.sample(&mut rng)).collect();
    let ba = bland_altman(&x, &y).unwrap();
    let inside = ba
        .points
        .iter()
        .filter(|(_, d)| *d >= ba.loa_low && *d <= ba.loa_high)
        .count();
    let coverage = inside as f64 / n as f64;
    assert!(coverage >= 0.93, "coverage {coverage}");
    assert!((ba.bias + 1.5).abs() < 0.1, "bias {}", ba.bias);
}
