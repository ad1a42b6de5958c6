//! Property tests of the phantom generator and acquisition simulator.

use meniscus::phantom::{generate, make_subject, simulate_acquisition, PhantomSpec};
use meniscus::relaxfit::{fit_volume, MapKind, SequenceParams};
use proptest::prelude::*;

fn small_spec() -> PhantomSpec {
    PhantomSpec {
        grid: [48, 48, 4],
        ..PhantomSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn subtraction_contrast_is_positive(seed in any::<u64>(), i in 0usize..8) {
        let spec = small_spec();
        let subject = make_subject(i, &spec, &SequenceParams::default(), seed).unwrap();
        let mask = &subject.truth.mask_union.data;
        let tissue = &subject.truth.params.s0.data;
        let (mut men, mut nm, mut bg, mut nb) = (0.0f64, 0usize, 0.0f64, 0usize);
        for (v, &s) in subject.subtraction.data.iter().enumerate() {
            if mask[v] == 1 {
                men += f64::from(s);
                nm += 1;
            } else if tissue[v] > 0.0 {
                bg += f64::from(s);
                nb += 1;
            }
        }
        prop_assert!(nm > 0 && nb > 0);
        prop_assert!(men / nm as f64 > bg / nb as f64, "meniscus {} vs background {}", men / nm as f64, bg / nb as f64);
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), i in 0usize..8) {
        let spec = small_spec();
        let seq = SequenceParams::default();
        let a = make_subject(i, &spec, &seq, seed).unwrap();
        let b = make_subject(i, &spec, &seq, seed).unwrap();
        prop_assert_eq!(&a.truth, &b.truth);
        prop_assert_eq!(&a.acquisitions, &b.acquisitions);
        prop_assert_eq!(&a.subtraction, &b.subtraction);
        prop_assert!(a.truth.mask_union.data.iter().all(|&v| v <= 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    /// Noiseless simulation followed by fitting recovers the generating
    /// parameters on every voxel of the volume.
    #[test]
    fn noiseless_simulation_then_fit_is_identity(seed in any::<u64>()) {
        let spec = PhantomSpec { grid: [40, 40, 3], ..PhantomSpec::default() };
        let seq = SequenceParams::default();
        let truth = generate(&spec, seed, "sub000").unwrap();
        let sim = simulate_acquisition(&truth.params, &seq, 0.0, spec.b1_amplitude, seed).unwrap();
        let maps = fit_volume(&sim.acquisitions, &seq, None, false).unwrap();
        let mut worst = [0.0f64; 4];
        for v in 0..truth.mask_union.data.len() {
            let pairs = [
                (maps.map(MapKind::T1)[v], truth.params.t1.data[v]),
                (maps.map(MapKind::T1rho)[v], truth.params.t1rho.data[v]),
                (maps.map(MapKind::T2star)[v], truth.params.t2star.data[v]),
                (maps.map(MapKind::B1)[v], sim.b1.data[v]),
            ];
            for (k, (fit, t)) in pairs.into_iter().enumerate() {
                worst[k] = worst[k].max((f64::from(fit) - f64::from(t)).abs() / f64::from(t));
            }
        }
        prop_assert!(worst.iter().all(|&e| e < 1e-5), "worst relative errors T1/T1rho/T2*/B1: {:?}", worst);
    }
}
