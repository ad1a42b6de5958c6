//! Property tests of slice preprocessing and dataset splitting.

use meniscus::datapipe::{
    augment, crop_center, crop_center_mask, hflip, hflip_mask, resize, resize_mask, rotate, rotate_mask,
    split_subjects, HealthStatus, Interp, Mask, PrepConfig, SliceImage, Subject, AUGMENT_ANGLES,
};
use proptest::prelude::*;

const BITS: usize = 6;

/// Images whose values are the x (or y) pixel coordinate.
fn coordinate_field(w: usize, h: usize, axis_x: bool) -> SliceImage {
    let data = (0..w * h)
        .map(|i| if axis_x { (i % w) as f32 } else { (i / w) as f32 })
        .collect();
    SliceImage::new(w, h, data).unwrap()
}

/// Bit plane `k` of the x (or y) coordinate as a mask.
fn coordinate_bit(w: usize, h: usize, axis_x: bool, k: usize) -> Mask {
    Mask::from_fn(w, h, |x, y| ((if axis_x { x } else { y }) >> k) & 1 == 1)
}

/// Applies a (slice op, mask op) pair to coordinate grids and checks that,
/// wherever both outputs come from inside the source, the source coordinate
/// the mask op sampled is the nearest pixel to the one the slice op
/// interpolated.
fn same_transform(
    w: usize,
    h: usize,
    slice_op: &dyn Fn(&SliceImage) -> SliceImage,
    mask_op: &dyn Fn(&Mask) -> Mask,
) -> Result<(), TestCaseError> {
    let ones = slice_op(&SliceImage::filled(w, h, 1.0));
    let inside = mask_op(&Mask::from_fn(w, h, |_, _| true));
    for axis_x in [true, false] {
        let field = slice_op(&coordinate_field(w, h, axis_x));
        let planes: Vec<Mask> = (0..BITS).map(|k| mask_op(&coordinate_bit(w, h, axis_x, k))).collect();
        prop_assert_eq!((field.width, field.height), (inside.width(), inside.height()));
        for y in 0..inside.height() {
            for x in 0..inside.width() {
                if !inside.get(x, y) || (ones.get(x, y) - 1.0).abs() > 1e-5 {
                    continue;
                }
                let sampled: usize = (0..BITS).map(|k| usize::from(planes[k].get(x, y)) << k).sum();
                let interpolated = f64::from(field.get(x, y));
                prop_assert!(
                    (interpolated - sampled as f64).abs() <= 0.5 + 1e-4,
                    "axis_x {} at ({}, {}): slice {} vs mask {}",
                    axis_x,
                    x,
                    y,
                    interpolated,
                    sampled
                );
            }
        }
    }
    Ok(())
}

fn is_binary(m: &Mask) -> bool {
    m.data().iter().all(|&v| v <= 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flip_and_rotation_move_slice_and_mask_alike(
        w in 4usize..40, h in 4usize..40, angle in -30.0f64..30.0,
    ) {
        same_transform(w, h, &hflip, &hflip_mask)?;
        same_transform(w, h, &|s| rotate(s, angle), &|m| rotate_mask(m, angle))?;
        for a in AUGMENT_ANGLES {
            same_transform(w, h, &|s| rotate(s, a), &|m| rotate_mask(m, a))?;
        }
    }

    #[test]
    fn crop_and_resize_move_slice_and_mask_alike(
        w in 8usize..64, h in 8usize..64, crop_frac in 0.3f64..1.0, out in 4usize..64,
    ) {
        let crop = ((w.min(h) as f64 * crop_frac) as usize).max(2);
        same_transform(w, h, &|s| crop_center(s, crop).unwrap(), &|m| crop_center_mask(m, crop).unwrap())?;
        same_transform(w, h, &|s| resize(s, out, out + 1, Interp::Bilinear).unwrap(), &|m| resize_mask(m, out, out + 1).unwrap())?;
    }

    #[test]
    fn masks_stay_binary_through_preprocessing(
        w in 16usize..48, bits in prop::collection::vec(any::<bool>(), 48 * 48), size in 8usize..40,
    ) {
        let mask = Mask::new(w, w, bits[..w * w].iter().map(|&b| u8::from(b)).collect()).unwrap();
        let slice = SliceImage::new(w, w, bits[..w * w].iter().map(|&b| if b { 3.0 } else { -1.0 }).collect()).unwrap();
        let prep = PrepConfig { crop: w / 2 + 4, size, augment: true, ..PrepConfig::default() };
        let prepared = prep.prepare_mask(&mask).unwrap();
        prop_assert!(is_binary(&prepared));
        prop_assert!(is_binary(&prep.restore_mask(&prepared, w, w).unwrap()));
        for (_, m) in augment(&slice, &mask).unwrap() {
            prop_assert!(is_binary(&m));
        }
        prop_assert!(is_binary(&Mask::threshold(w, w, &slice.data, 0.5).unwrap()));
    }

    #[test]
    fn splits_never_leak_subjects(
        n in 3usize..60, val_frac in 0.05f64..0.3, test_frac in 0.05f64..0.3, seed in any::<u64>(),
        statuses in prop::collection::vec(any::<bool>(), 60),
    ) {
        let subjects: Vec<Subject> = (0..n)
            .map(|i| Subject {
                id: format!("sub{i:03}"),
                status: if statuses[i] { HealthStatus::Healthy } else { HealthStatus::Patient },
            })
            .collect();
        let val = ((n as f64 * val_frac) as usize).max(1);
        let test = ((n as f64 * test_frac) as usize).max(1);
        prop_assume!(val + test < n);
        let Ok(split) = split_subjects(&subjects, (n - val - test, val, test), seed) else {
            // Stratification can make some counts infeasible; those are errors, never leaks.
            return Ok(());
        };
        prop_assert!(split.is_disjoint());
        let mut all: Vec<&String> = split.train.iter().chain(&split.validation).chain(&split.test).collect();
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!((split.validation.len(), split.test.len()), (val, test));
        for s in &subjects {
            prop_assert!(split.split_of(&s.id).is_some());
        }
    }
}
