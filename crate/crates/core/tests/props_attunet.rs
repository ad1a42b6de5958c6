//! Property tests of the attention U-Net and its weight container.

use meniscus::attunet::{
    khkwio_to_oikhkw, oikhkw_to_khkwio, predict, predict_batch, AttentionUNet, KernelLayout, NetConfig, WeightContainer,
};
use meniscus::datapipe::SliceImage;
use meniscus::nnkit::Tensor;
use proptest::prelude::*;

fn net(depth: usize, size: usize, width_mult: f64, seed: u64) -> AttentionUNet<f32> {
    AttentionUNet::new(NetConfig {
        input_size: size,
        depth,
        width_mult,
        seed,
        ..NetConfig::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn output_matches_input_size_and_probabilities_are_open_interval(
        depth in 1usize..4, mult in 1usize..4, width in prop::sample::select(vec![0.03125, 0.0625]),
        seed in any::<u64>(), scale in prop::sample::select(vec![1.0f32, 100.0, 1e4]),
        values in prop::collection::vec(-1.0f32..1.0, 16),
    ) {
        let size = (1 << depth) * mult;
        let net = net(depth, size, width, seed);
        let x: Vec<f32> = values.iter().cycle().take(2 * size * size).map(|v| v * scale).collect();
        let prob = net.infer(&Tensor::from_vec(&[2, 1, size, size], x).unwrap()).unwrap();
        prop_assert_eq!(prob.shape(), &[2, 1, size, size]);
        prop_assert!(prob.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn prediction_is_invariant_to_batch_packing(
        seed in any::<u64>(), values in prop::collection::vec(-1.0f32..1.0, 3 * 16 * 16),
    ) {
        let net = net(2, 16, 0.0625, seed);
        let slices: Vec<SliceImage> = values
            .chunks(256)
            .map(|c| SliceImage::new(16, 16, c.to_vec()).unwrap())
            .collect();
        let batch = predict_batch(&net, &slices).unwrap();
        for (s, (bp, bm)) in slices.iter().zip(&batch) {
            let (p, m) = predict(&net, s).unwrap();
            prop_assert_eq!(&p, bp);
            prop_assert_eq!(&m, bm);
        }
    }

    #[test]
    fn layout_conversion_round_trips(
        kh in 1usize..4, kw in 1usize..4, ci in 1usize..5, co in 1usize..5, seed in any::<u32>(),
    ) {
        let n = kh * kw * ci * co;
        let values: Vec<f32> = (0..n).map(|i| (i as u32 ^ seed) as f32).collect();
        let (s1, v1) = khkwio_to_oikhkw(&[kh, kw, ci, co], &values);
        prop_assert_eq!(&s1, &vec![co, ci, kh, kw]);
        let (s2, v2) = oikhkw_to_khkwio(&s1, &v1);
        prop_assert_eq!(&s2, &vec![kh, kw, ci, co]);
        prop_assert_eq!(&v2, &values);
        let (s3, v3) = khkwio_to_oikhkw(&oikhkw_to_khkwio(&s1, &v1).0, &oikhkw_to_khkwio(&s1, &v1).1);
        prop_assert_eq!((s3, v3), (s1, v1));
    }

    #[test]
    fn checksum_rejects_any_corrupted_payload_byte(
        values in prop::collection::vec(-10.0f32..10.0, 1..40), pick in any::<usize>(), flip in 1u8..=255,
    ) {
        let mut c = WeightContainer::new(KernelLayout::OutInKhKw);
        c.insert("t", &[values.len()], &values).unwrap();
        let mut bytes = c.to_bytes().unwrap();
        prop_assert_eq!(WeightContainer::from_bytes(&bytes).unwrap(), c);
        let payload_start = bytes.len() - 4 * values.len();
        let i = payload_start + pick % (4 * values.len());
        bytes[i] ^= flip;
        prop_assert!(WeightContainer::from_bytes(&bytes).is_err());
    }
}
