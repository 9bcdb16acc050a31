//! Ensembles of learned dynamics models and their one-vs-rest disagreement.

mod categorical;
mod gaussian;
mod kl;

pub use categorical::{train_categorical, CategoricalEnsemble};
pub use gaussian::{
    train_gaussian, FitReport, GaussianConfig, GaussianEnsemble, GaussianTrainer, MemberNodes, Normalizer, StepNodes,
    LOGVAR_MAX, LOGVAR_MIN,
};
pub use kl::{
    kl_categorical, kl_gaussian_diag, ovr_categorical, ovr_gaussian, ovr_gaussian_tape, rest_mean, rest_moments,
    UncertaintyEstimate,
};
