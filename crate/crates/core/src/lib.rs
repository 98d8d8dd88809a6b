//! Covariate-adjusted estimation of unconditional treatment effects in
//! randomized trials.
//!
//! The crate fits canonical-link GLM working models (maximum likelihood or
//! Firth-corrected), turns them into treatment-specific mean estimators —
//! plain g-computation and debiased generalized Oaxaca-Blinder (gOB)
//! variants — and provides influence-function variance estimation with an
//! optional small-sample leverage adjustment, Wald/score inference, and a
//! Monte-Carlo harness for operating characteristics.

pub mod analysis;
pub mod data;
pub mod design;
pub mod error;
pub mod estimators;
pub mod fit;
pub mod inference;
pub mod link;
pub mod linalg;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod variance;

pub use analysis::{analyze, AnalysisOptions, AnalysisOutcome};
pub use data::TrialData;
pub use design::{build_design, DesignMatrix, ModelMode, WorkingModelSpec};
pub use error::{Error, Result};
pub use estimators::{
    debias_fc, debias_mle, estimate_effect, gcomp_means, gob_means, plugin_first_order_bias,
    predict_counterfactual, BiasEstimate, Contrast, CorrectionLevel, DebiasedNuisance,
    EffectEstimate, EstimatorKind, MeansEstimate,
};
pub use fit::{
    bread_meat, detect_separation, fit_firth, fit_mle, hat_values, influence_beta, FitMethod,
    FitOptions, FittedModel, SeparationReport, SeparationThresholds,
};
pub use inference::{score_inference, wald_inference, InferenceResult, TestMethod};
pub use link::LinkFamily;
pub use variance::{
    empirical_if, theoretical_if, vcov_contrast, vcov_from_if, CovMatrix, IfMatrix, VarianceMode,
};
