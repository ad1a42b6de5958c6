//! Volume I/O, slice extraction and the preprocessing chain that turns
//! acquisitions into network-ready slices.

pub mod image;
pub mod prepare;
pub mod preprocess;
pub mod split;
pub mod volume;

pub use image::{Mask, SliceImage, SliceMeta};
pub use prepare::PrepConfig;
pub use preprocess::{
    augment, crop_center, crop_center_mask, enhance_contrast, hflip, hflip_mask, percentile, resize, resize_mask,
    rotate, rotate_mask, select_meniscus_slices, subtract_volumes, uncrop_mask, ContrastStage, Interp, PercentileGamma,
    SliceSelection, AUGMENT_ANGLES,
};
pub use split::{
    read_manifest, split_subjects, write_manifest, DatasetSplit, HealthStatus, ManifestRow, SplitName, Subject,
};
pub use volume::{
    load_mask_volume, load_volume, save_mask_volume, save_volume, Acquisition, DType, MaskVolume, Volume, VolumeHeader,
};
