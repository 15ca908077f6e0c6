//! Detection of context-dependent changes in neural population codes via
//! cross-context decoding accuracy.
//!
//! The pipeline: independent train/test partitioning over subdatasets,
//! covariate matching of label distributions across all decoders, linear
//! decoding (Poisson naive Bayes, logistic regression, linear SVM), a
//! conservative one-sided Z-test on the symmetric decoding divergence with
//! variance inflation for temporal dependence, plus classical univariate and
//! multivariate two-sample tests for comparison and a generative simulator
//! for calibration studies.

pub mod alt;
pub mod data;
pub mod decoders;
pub mod divergence;
pub mod error;
pub mod labeler;
pub mod matching;
pub mod partition;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod sweeps;
pub mod vif;

pub use data::{
    build_windowed, load_session, save_session, Context, Direction, SessionDataset, SplitSpec,
    Stratum, WindowedDesign,
};
pub use decoders::{
    cross_validate, fit_decoder, CvConfig, DecoderKind, Hyperparams, TrainedDecoder,
};
pub use divergence::{
    accuracy, aggregated_p, combined_z_test, run_context_test, symmetric_divergence,
    AccuracyEstimate, ContextTestOutput, DivergenceReport, TestSettings, VifMode,
};
pub use error::{Error, Result};
pub use matching::{match_test, match_train, SplitRows};
pub use partition::{partition_subdatasets, Partition};
pub use sim::{generate, SimSpec};
pub use vif::{apply_vif, estimate_vif, VifEstimate};
