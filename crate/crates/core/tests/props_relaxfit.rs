//! Property tests of the least-squares solver and relaxation fits.

use meniscus::datapipe::MaskVolume;
use meniscus::phantom::{generate, simulate_acquisition, PhantomSpec};
use meniscus::relaxfit::{
    afi_flip_angle, afi_ratio, fit_t1rho, fit_t2star, fit_vfa_t1, fit_volume, lm_solve, model_t1rho, model_t2star,
    model_vfa, LmOptions, MapKind, SequenceParams,
};
use proptest::prelude::*;

fn noisy(clean: &[f64], noise: &[f64], sigma: f64) -> Vec<f64> {
    clean
        .iter()
        .zip(noise.iter().cycle())
        .map(|(c, n)| c + sigma * n)
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rss_never_increases_and_fit_invariants_hold(
        a in 0.5f64..3.0, b in 0.05f64..1.0, c in -1.0f64..1.0,
        start in prop::collection::vec(0.3f64..2.0, 3), noise in prop::collection::vec(-0.1f64..0.1, 25),
    ) {
        let t: Vec<f64> = (0..25).map(|i| f64::from(i) * 0.3).collect();
        let y: Vec<f64> = t.iter().zip(&noise).map(|(&x, n)| a * (-b * x).exp() + c + n).collect();
        let tt = t.clone();
        let model = move |p: &[f64], f: &mut [f64], j: &mut [f64]| {
            for (i, &x) in tt.iter().enumerate() {
                let e = (-p[1] * x).exp();
                f[i] = p[0] * e + p[2];
                j[3 * i] = e;
                j[3 * i + 1] = -p[0] * x * e;
                j[3 * i + 2] = 1.0;
            }
        };
        let p0 = [a * start[0], b * start[1], c * start[2]];
        let opts = LmOptions::default();
        let fit = lm_solve(&model, &y, &p0, &opts).unwrap();
        prop_assert!(fit.rss_trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", fit.rss_trace);
        prop_assert!(fit.rss <= fit.rss_trace[0]);
        prop_assert!(fit.iterations <= opts.max_iter);
        if fit.converged {
            prop_assert!(fit.params.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn fits_are_scale_equivariant(
        s0 in 200.0f64..2000.0, t2 in 5.0f64..40.0, t1rho in 15.0f64..60.0, t1 in 600.0f64..1500.0,
        b1 in 0.8f64..1.2, scale in 0.01f64..100.0, noise in prop::collection::vec(-1.0f64..1.0, 7),
    ) {
        let seq = SequenceParams::default();
        let sigma = 0.01 * s0;
        let e = noisy(&model_t2star(&seq.t2star_tes, s0, t2), &noise, sigma);
        let r = noisy(&model_t1rho(&seq.t1rho_nafp, seq.tau_afp, s0, t1rho), &noise, sigma);
        let v = noisy(&model_vfa(&seq.vfa_fas, seq.vfa_tr, b1, s0, t1), &noise, sigma * 0.05);
        let scaled = |x: &[f64]| x.iter().map(|v| v * scale).collect::<Vec<_>>();
        let pairs = [
            (fit_t2star(&e, &seq).unwrap(), fit_t2star(&scaled(&e), &seq).unwrap()),
            (fit_t1rho(&r, &seq).unwrap(), fit_t1rho(&scaled(&r), &seq).unwrap()),
            (
                fit_vfa_t1(&v, &seq.vfa_fas, seq.vfa_tr, b1).unwrap(),
                fit_vfa_t1(&scaled(&v), &seq.vfa_fas, seq.vfa_tr, b1).unwrap(),
            ),
        ];
        for (base, sc) in pairs {
            prop_assume!(base.converged && sc.converged);
            prop_assert!(rel(sc.params[0], scale * base.params[0]) < 1e-6, "{:?} vs {:?}", base.params, sc.params);
            prop_assert!(rel(sc.params[1], base.params[1]) < 1e-6, "{:?} vs {:?}", base.params, sc.params);
        }
    }

    #[test]
    fn noiseless_round_trips(
        s0 in 200.0f64..2000.0, t2 in 2.0f64..60.0, t1rho in 5.0f64..100.0, t1 in 300.0f64..2500.0, b1 in 0.7f64..1.3,
    ) {
        let seq = SequenceParams::default();
        let f = fit_t2star(&model_t2star(&seq.t2star_tes, s0, t2), &seq).unwrap();
        prop_assert!(f.converged && rel(f.params[1], t2) < 1e-6 && rel(f.params[0], s0) < 1e-6);
        let f = fit_t1rho(&model_t1rho(&seq.t1rho_nafp, seq.tau_afp, s0, t1rho), &seq).unwrap();
        prop_assert!(f.converged && rel(f.params[1], t1rho) < 1e-6 && rel(f.params[0], s0) < 1e-6);
        let f = fit_vfa_t1(&model_vfa(&seq.vfa_fas, seq.vfa_tr, b1, s0, t1), &seq.vfa_fas, seq.vfa_tr, b1).unwrap();
        prop_assert!(f.converged && rel(f.params[1], t1) < 1e-6 && rel(f.params[0], s0) < 1e-6);
    }

    #[test]
    fn afi_inversion_is_identity(alpha in 0.01f64..89.99, n in 1.5f64..10.0) {
        let back = afi_flip_angle(2.0, 2.0 * afi_ratio(alpha, n), n).unwrap();
        prop_assert!((back - alpha).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    /// A voxel's fit does not depend on which other voxels are fitted or in
    /// what order they are processed.
    #[test]
    fn voxel_fits_are_independent_of_iteration_set(seed in any::<u64>(), stride in 2usize..5) {
        let spec = PhantomSpec { grid: [32, 32, 3], ..PhantomSpec::default() };
        let seq = SequenceParams::default();
        let truth = generate(&spec, seed, "sub000").unwrap();
        let sim = simulate_acquisition(&truth.params, &seq, spec.noise_sigma, spec.b1_amplitude, seed).unwrap();
        let union = &truth.mask_union;
        let sparse = MaskVolume::new(
            union.header.clone(),
            union.data.iter().enumerate().map(|(v, &m)| u8::from(m == 1 && v % stride == 0)).collect(),
        )
        .unwrap();
        let full = fit_volume(&sim.acquisitions, &seq, Some(union), true).unwrap();
        let serial = fit_volume(&sim.acquisitions, &seq, Some(union), false).unwrap();
        let part = fit_volume(&sim.acquisitions, &seq, Some(&sparse), false).unwrap();
        for kind in MapKind::ALL {
            let (a, b, c) = (full.map(kind), serial.map(kind), part.map(kind));
            for v in 0..a.len() {
                prop_assert_eq!(a[v].to_bits(), b[v].to_bits());
                if sparse.data[v] == 1 {
                    prop_assert_eq!(a[v].to_bits(), c[v].to_bits());
                }
            }
        }
    }
}
