//! Comparison statistics: Dice, Pearson, Bland–Altman, ROC/AUC, paired
//! t-tests with Bonferroni correction, relative errors and slice-level
//! detection.

pub mod compare;
pub mod metrics;

pub use compare::{
    compare_pair, CompareOptions, Detection, DiceStats, EvalReport, PairInput, PairReport, Quantity,
    QuantityComparison, Region, SliceQuant,
};
pub use metrics::{
    bland_altman, bonferroni, dice, has_meniscus, pearson, rel_abs_error, roc_auc, sample_sd, t_test_bonferroni,
    t_two_sided_p, thin_curve, BlandAltman, Roc, TTest,
};
