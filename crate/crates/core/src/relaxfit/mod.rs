//! Quantitative relaxometry: Levenberg–Marquardt fitting of the UTE-Cones
//! signal models (T2*, adiabatic T1ρ, AFI B1 mapping, VFA T1), per-voxel
//! maps and ROI statistics.

mod lm;
mod maps;
mod models;
mod roi;
mod sequence;

pub use lm::{lm_solve, FitResult, LmOptions, Model};
pub use maps::{fit_volume, status, AcquisitionSet, MapKind, RelaxMaps, VoxelDiagnostics};
pub use models::{
    afi_flip_angle, afi_ratio, b1_scale, fit_decay, fit_t1rho, fit_t2star, fit_vfa_t1, model_decay, model_t1rho,
    model_t2star, model_vfa, B1_WINDOW,
};
pub use roi::{roi_stats, summarize, RoiStats, Summary};
pub use sequence::SequenceParams;
