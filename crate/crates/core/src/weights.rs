//! Importance masses τ and sampling probabilities ρ.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::norms::{pow, NormTerm, SumNorm};
use crate::sampler::SampleBatch;

/// Multiplier on the empirical mean so that, after concentration, each τ_i
/// lands in [σ_i, 2σ_i] where σ_i is the exact mean.
pub const TAU_INFLATION: f64 = 1.5;

/// Default constant in the τ sample count k = ⌈C_w·ψ_n·log(m+n)⌉.
pub const DEFAULT_C_W: f64 = 200.0;

/// Concentration constant ψ_n, instantiated as √(log max(n, 3)).
pub fn psi(n: usize) -> f64 {
    (n.max(3) as f64).ln().sqrt()
}

/// Number of μ-samples used to estimate τ for m terms in dimension n.
pub fn tau_sample_count(n: usize, m: usize, c_w: f64) -> usize {
    (c_w * psi(n) * ((m + n) as f64).ln()).ceil().max(1.0) as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauVector {
    pub tau: Vec<f64>,
    pub p: f64,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    pub rho: Vec<f64>,
}

impl ProbabilityVector {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

/// τ_i = 1.5 · (1/k) Σ_j w_i N_i(X_j)^p.
pub fn estimate_tau(norm: &SumNorm, batch: &SampleBatch, p: f64) -> Result<TauVector> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if batch.dim() != norm.dim() {
        return Err(Error::DimensionMismatch {
            expected: norm.dim(),
            got: batch.dim(),
        });
    }
    let k = batch.len();
    norm.counter().add((k * norm.len()) as u64);
    let terms = norm.terms();
    let weights = norm.weights();
    let tau = (0..norm.len())
        .into_par_iter()
        .map(|i| {
            let total: f64 = batch.points.iter().map(|x| pow(terms[i].value(x), p)).sum();
            TAU_INFLATION * weights[i] * total / k as f64
        })
        .collect();
    Ok(TauVector { tau, p, k })
}

/// Relative floor applied to every mass before normalizing.
pub const FLOOR_REL: f64 = 1e-12;

/// ρ_i = max(τ_i, floor) / Σ_j max(τ_j, floor) with floor = ‖τ‖₁·10⁻¹²/m.
pub fn to_probabilities(tau: &TauVector) -> Result<ProbabilityVector> {
    normalize(&tau.tau)
}

pub(crate) fn normalize(mass: &[f64]) -> Result<ProbabilityVector> {
    let m = mass.len();
    if m == 0 {
        return Err(Error::ZeroMass);
    }
    if mass.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter("masses must be finite and nonnegative".into()));
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let floor = total * FLOOR_REL / m as f64;
    let lifted: Vec<f64> = mass.iter().map(|&t| t.max(floor)).collect();
    let z: f64 = lifted.iter().sum();
    Ok(ProbabilityVector {
        rho: lifted.into_iter().map(|t| t / z).collect(),
    })
}

/// Stacks the coefficient vectors of Linear terms into a matrix.
pub fn linear_rows(terms: &[NormTerm]) -> Result<DMatrix<f64>> {
    let mut rows = Vec::with_capacity(terms.len());
    for (index, t) in terms.iter().enumerate() {
        match t {
            NormTerm::Linear { a } => rows.push(a.clone()),
            _ => {
                return Err(Error::InvalidTerm {
                    index,
                    reason: "leverage scores need Linear terms".into(),
                })
            }
        }
    }
    let k = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    Ok(DMatrix::from_row_iterator(k, n, rows.into_iter().flatten()))
}

/// ρ_i = ⟨a_i, (AᵀA)⁻¹ a_i⟩ / n. For rank-deficient A the pseudo-inverse on
/// the row span is used and the normalizer is the rank.
pub fn exact_leverage_probs(terms: &[NormTerm]) -> Result<ProbabilityVector> {
    let a = linear_rows(terms)?;
    let lev = leverage_scores(&a)?;
    let total: f64 = lev.iter().sum();
    Ok(ProbabilityVector {
        rho: lev.into_iter().map(|l| l / total).collect(),
    })
}

/// Leverage scores ⟨a_i, (AᵀA)⁺ a_i⟩ of the rows of `a`.
pub fn leverage_scores(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = a.ncols();
    let g = linalg::gram(a, &vec![1.0; a.nrows()])?;
    let eig = g.as_matrix().clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if !(lmax > 0.0) {
        return Err(Error::ZeroMass);
    }
    let cutoff = 1e-12 * lmax;
    let rank = eig.eigenvalues.iter().filter(|&&l| l > cutoff).count();
    if rank < n {
        log::warn!("leverage scores: rank {rank} < {n}; using the pseudo-inverse on the row span");
    }
    let pinv = {
        let q = &eig.eigenvectors;
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            eig.eigenvalues.iter().map(|&l| if l > cutoff { 1.0 / l } else { 0.0 }),
        ));
        SymMatrix::new(q * d * q.transpose())?
    };
    Ok((0..a.nrows())
        .map(|i| {
            let row: Vec<f64> = a.row(i).iter().cloned().collect();
            pinv.quad_form(&row).max(0.0)
        })
        .collect())
}

/// ρ_i ∝ τ_i + α_i^p.
pub fn augment_with_lewis(tau: &TauVector, alpha: &[f64], p: f64) -> Result<ProbabilityVector> {
    if alpha.len() != tau.tau.len() {
        return Err(Error::DimensionMismatch {
            expected: tau.tau.len(),
            got: alpha.len(),
        });
    }
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p = {p} not in [1, 2]")));
    }
    let mass: Vec<f64> = tau.tau.iter().zip(alpha).map(|(t, a)| t + a.powf(p)).collect();
    normalize(&mass)
}
