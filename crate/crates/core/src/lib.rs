//! QFT-based quantum fidelity kernels for short-term time-series forecasting.
//!
//! Windows of each feature are amplitude-encoded, Fourier transformed and
//! passed through a data-dependent rotation layer; the resulting fidelity
//! kernels are fused with convex weights and fed to kernel ridge regression.
//! Classical RBF and polynomial kernels run through the same pipeline for
//! comparison.

pub mod cache;
pub mod ckernel;
pub mod gram;
pub mod krr;
pub mod metrics;
pub mod pipeline;
pub mod qkernel;
pub mod qsim;
pub mod mixopt;
pub mod surrogate;
pub mod experiment;
pub mod stations;
pub mod synth;
