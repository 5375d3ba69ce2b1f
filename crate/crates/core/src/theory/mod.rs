//! Numerical checks of when residual graph convolutions stay injective.
//!
//! Without a residual, a convolution over the complete graph sends every
//! signal orthogonal to the all-ones vector to zero ([`kernel_witness`]).
//! With a residual, the linearized map `vec(X) ↦ (I + Ã ⊗ W) vec(X)` is
//! invertible with high probability when `W` has small Gaussian entries
//! ([`residual_injectivity_trial`]). [`gordon_bound_trial`] checks the
//! singular-value concentration that the argument relies on, and
//! [`oversmoothing_trace`] follows Dirichlet energy through deep stacks.

mod gordon;
mod injectivity;
mod kronecker;
mod oversmoothing;
mod witness;

pub use gordon::{gordon_bound_trial, run_gordon, GordonSummary, GordonTrial};
pub use injectivity::{
    default_varsigma, residual_injectivity_trial, run_injectivity, InjectivitySummary,
    InjectivityTrial, InjectivityTrialConfig,
};
pub use kronecker::{
    eigenvalue_norm, eigenvalues, kron_eigen_identity_error, kron_operator, kron_singular_values,
    kron_singular_values_blockwise, spectral_norm, KronMethod, KRONECKER_DENSE_LIMIT,
    KRONECKER_DENSE_SVD_LIMIT,
};
pub use oversmoothing::{
    classify_frequency, oversmoothing_trace, spectrum_report, FrequencyClass, OversmoothingMode,
    SpectrumReport,
};
pub use witness::{complete_adjacency, kernel_sweep, kernel_witness, KernelWitness};
