//! Donor-pool screening for synthetic control with convergent cross mapping.
//!
//! The crate covers panel handling, delay embedding and cross mapping, a
//! simplex-constrained synthetic control solver, the screening pipeline that
//! joins them, AR(1) ground truth for the cross-mapping scores and
//! generators for artificial control units.

pub mod adversary;
pub mod artheory;
pub mod ccm;
pub mod embedding;
pub mod error;
pub mod format;
pub mod panel;
pub mod rng;
pub mod scm;
pub mod screening;
pub mod stats;

pub use ccm::{
    ccm_curve, ccm_score, convergence_diagnostic, CcmConfig, CcmCurve, ConvergenceDiagnostic, PredictionMode,
};
pub use embedding::{delay_embed, DelayEmbedding, EmbeddingConfig};
pub use error::{Error, ErrorKind, Result};
pub use panel::{load_panel, read_panel, PanelData, PanelWindow, TimeSeries, Unit};
pub use rng::{derive_seed, SeededRng};
pub use scm::{effect_path, fit_weights, predict_counterfactual, EffectPath, ScmFit, SimplexWeights};
pub use screening::{
    ccm_scm_pipeline, screen_controls, NullMethod, PipelineReport, ScreeningConfig, ScreeningDecision,
};
