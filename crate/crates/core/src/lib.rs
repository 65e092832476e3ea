//! Sparsification of sums of semi-norms by importance sampling.
//!
//! A [`SumNorm`] represents N(x)^p = Σ w_i N_i(x)^p. The library samples
//! from the log-concave density e^{-N(x)^p̂}, estimates per-term importance
//! masses, draws a reweighted subset of the terms, and measures how far the
//! result Ñ is from N.

pub mod cli;
pub mod error;
pub mod lewis;
pub mod linalg;
pub mod norms;
pub mod rng;
pub mod sampler;
pub mod sparsify;
pub mod submodular;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
pub use lewis::{block_lewis_fixed_point, certify, BlockStructure, LewisResult};
pub use norms::{apply_weights, Instance, NormTerm, SumNorm};
pub use rng::SeedStream;
pub use sampler::{sample_mu, uniform_ball_walk, RoundedNorm, SampleBatch, SamplerConfig};
pub use sparsify::{homotopy_sparsify, sparsify_once, sparsify_p_power, SparsifierResult, SparsifyConfig};
pub use submodular::{lovasz_extension, CutFunction, SetFunction, Subset};
pub use verify::{empirical_eps, exact_cut_eps, VerificationReport};
pub use weights::{estimate_tau, to_probabilities, ProbabilityVector, TauVector};
