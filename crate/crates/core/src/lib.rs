//! Scalable message passing networks.
//!
//! Pre-LN residual blocks that use graph convolution for node-to-node
//! communication, a linear global attention variant, transductive training,
//! and numerical experiments on oversmoothing and on the injectivity of
//! residual graph convolutions.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`graph`] | CSR graphs, `Ã`, `L_norm`, Dirichlet energy, sampling, generators |
//! | [`autodiff`] | reverse-mode tape and finite-difference gradient checks |
//! | [`model`] | the block, the stacked model, ablations, global attention |
//! | [`train`] | Adam, full-graph and mini-batch training, metrics, sweeps |
//! | [`theory`] | kernel witnesses, Kronecker invertibility trials, Gordon bound |
//! | [`io`] | file formats, checkpoints, reports, manifests, scaling bench |

pub mod autodiff;
pub mod error;
pub mod graph;
pub mod io;
pub mod model;
pub mod seed;
pub mod tensor;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
