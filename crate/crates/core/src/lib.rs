//! Tied-weight autoencoder anomaly detector trained on a joint objective:
//! robust (median/MAD) Mahalanobis distance in latent space, reconstruction
//! error, and a matrix-based Cauchy-Schwarz mutual-information term between
//! input and latent Gram matrices. Test samples are scored by robust distance
//! and classified with a two-sided band so that both "near" anomalies (below
//! the normal band) and "far" anomalies (above it) are flagged.
//!
//! Module map:
//!
//! | module      | contents                                                   |
//! |-------------|------------------------------------------------------------|
//! | [`ndmath`]  | dense matrices, Gaussian Gram matrices, ridge inverse       |
//! | [`robust`]  | median, MAD, robust correlation, robust/classical MD       |
//! | [`itl`]     | Renyi quadratic entropies, CS divergence, MI, total corr.  |
//! | [`autoenc`] | tied-weight network, forward and backward passes           |
//! | [`train`]   | joint loss, ADAM, fitting, grid search, checkpoints        |
//! | [`data`]    | CSV ingestion, min-max, skew filter, splits, synthetic data |
//! | [`detect`]  | scoring modes, band classification, metrics, reports       |

pub mod autoenc;
pub mod data;
pub mod detect;
pub mod error;
pub mod itl;
pub mod ndmath;
pub mod robust;
pub mod train;

pub use error::{Error, Result};
pub use ndmath::Matrix;
