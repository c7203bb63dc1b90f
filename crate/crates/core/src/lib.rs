//! MMD autoencoders with Coulomb kernels.
//!
//! The crate is organized around the pieces of that pipeline:
//!
//! - [`kernel`]: closed-form kernels (Coulomb for any latent dimension,
//!   Gaussian, inverse multiquadric), their gradients, and numerical
//!   harmonicity checks.
//! - [`mmd`]: the unbiased maximum-mean-discrepancy estimator, its gradient
//!   with respect to one sample set, and signed-charge energy landscapes.
//! - [`particles`]: gradient descent of free particles on the MMD landscape
//!   and permutation matching against a target set.
//! - [`net`]: a small fully-connected network with hand-derived
//!   backpropagation and the Adam optimizer.
//! - [`trainer`]: the autoencoder objective (reconstruction + weighted MMD),
//!   the training loop, sampling, and reconstruction summaries.
//! - [`data`]: synthetic datasets (grid of Gaussians, standard-normal prior)
//!   and CSV persistence.
//! - [`eval`]: KDE log-likelihood and mode-coverage diagnostics.
//! - [`bound`]: a probabilistic bound on the gap between the empirical and
//!   population objectives, with empirical inputs.
//! - [`svg`]: minimal SVG line plots and heatmaps for landscape output.

pub mod bound;
pub mod data;
pub mod error;
#[cfg(test)]
pub(crate) mod testutil;
pub mod eval;
pub mod kernel;
pub mod mmd;
pub mod net;
pub mod particles;
pub mod svg;
pub mod trainer;

pub use error::{Error, Result};
pub use kernel::{KernelFamily, KernelSpec};
pub use mmd::{ChargeSystem, SampleSet};
