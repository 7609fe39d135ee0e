//! Continual-learning algorithms: importance regularization, distillation
//! with nearest-mean inference, bias correction and the temporal-consistency
//! loss.

pub mod bic;
pub mod icarl;
pub mod importance;
pub mod losses;
pub mod tc;

pub use bic::{apply_bias_correction, bic_fit, fit_bias_correction, BiasCorrectionLayer};
pub use icarl::{distillation_targets, icarl_loss, nearest_mean_classify, Prototypes};
pub use importance::{ewc_importance, mas_importance, regularization_penalty, ImportanceState};
pub use tc::{tc_gradient, tc_loss, TcConfig};
