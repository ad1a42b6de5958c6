//! Synthetic knee phantoms with crescent-shaped menisci of known relaxation
//! parameters, forward-simulated UTE-Cones acquisitions and on-disk cohorts.

mod dataset;
mod generate;
mod simulate;
mod spec;

pub use dataset::{
    acquisition_paths, load_acquisitions, load_truth_masks, make_dataset, make_subject, prepare_subject, subject_id,
    subject_seed, subject_status, subtraction_image, StoredTruth, SubjectData,
};
pub use generate::{generate, Crescent, ParameterMaps, PhantomTruth};
pub use simulate::{b1_field, simulate_acquisition, Simulation, AFI_AMPLITUDE};
pub use spec::{PhantomSpec, Range, TissueRanges};
