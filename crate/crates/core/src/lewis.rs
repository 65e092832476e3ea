//! Block Lewis weights.
//!
//! For a k×n matrix A with rows a_i, a partition of the rows into blocks S_j
//! carrying ℓ_{p_j} norms and an outer ℓ_q norm, find a diagonal W ≥ 0 such
//! that with U = (AᵀWA)^{-1/2} and u_i = ‖U a_i‖₂ the block norms
//! α_j = ‖u_{S_j}‖_{p_j} satisfy
//!
//! ```text
//! N_j(Ax) ≤ α_j ‖U⁻¹x‖₂ ≤ α_j N(Ax),    Σ_j α_j^q = n (q ≤ 2) or n^{q/2} (q > 2).
//! ```

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::norms::{lp_norm, NormTerm};
use crate::weights::{normalize, ProbabilityVector};

/// Relative eigenvalue floor for (AᵀWA)^{-1/2}.
pub const EIGEN_FLOOR: f64 = 1e-12;
pub const DEFAULT_SLACK: f64 = 1e-9;
pub const DEFAULT_SUM_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub start: usize,
    pub end: usize,
    pub p: f64,
}

impl Block {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// A partition of the rows [0, k) into index ranges with per-block exponents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStructure {
    pub blocks: Vec<Block>,
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_q() -> f64 {
    2.0
}

impl BlockStructure {
    pub fn new(blocks: Vec<Block>, q: f64, k: usize) -> Result<Self> {
        let b = BlockStructure { blocks, q };
        b.validate(k)?;
        Ok(b)
    }

    /// Every row its own block with exponent `p`.
    pub fn singletons(k: usize, p: f64, q: f64) -> Result<Self> {
        Self::new((0..k).map(|i| Block { start: i, end: i + 1, p }).collect(), q, k)
    }

    /// Consecutive blocks of equal size.
    pub fn uniform(k: usize, size: usize, p: f64, q: f64) -> Result<Self> {
        if size == 0 || k % size != 0 {
            return Err(Error::InvalidParameter(format!("{k} rows do not split into blocks of {size}")));
        }
        Self::new(
            (0..k / size)
                .map(|j| Block {
                    start: j * size,
                    end: (j + 1) * size,
                    p,
                })
                .collect(),
            q,
            k,
        )
    }

    pub fn load(path: &Path, k: usize) -> Result<Self> {
        let b: BlockStructure = serde_json::from_str(&fs::read_to_string(path)?)?;
        b.validate(k)?;
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.q >= 1.0) || !self.q.is_finite() {
            return Err(Error::InvalidParameter(format!("q = {} must be in [1, ∞)", self.q)));
        }
        let mut covered = vec![false; k];
        for (j, b) in self.blocks.iter().enumerate() {
            if !(b.p >= 2.0) || !b.p.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "block {j}: p = {} must be finite and ≥ 2",
                    b.p
                )));
            }
            if b.start >= b.end || b.end > k {
                return Err(Error::InvalidParameter(format!(
                    "block {j}: range {}..{} invalid for {k} rows",
                    b.start, b.end
                )));
            }
            for c in &mut covered[b.start..b.end] {
                if *c {
                    return Err(Error::InvalidParameter(format!("block {j} overlaps another block")));
                }
                *c = true;
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidParameter(format!("row {i} is in no block")));
        }
        Ok(())
    }

    fn max_p(&self) -> f64 {
        self.blocks.iter().map(|b| b.p).fold(2.0, f64::max)
    }

    /// Σ_j α_j^q at the Lewis point.
    pub fn target_sum(&self, n: usize) -> f64 {
        let n = n as f64;
        if self.q <= 2.0 {
            n
        } else {
            n.powf(self.q / 2.0)
        }
    }

    /// (Σ_j N_j(y)^q)^{1/q}, N_j = ℓ_{p_j} on the block.
    pub fn outer_norm(&self, y: &[f64]) -> f64 {
        let s: f64 = self.block_norms(y).iter().map(|v| v.powf(self.q)).sum();
        s.powf(1.0 / self.q)
    }

    pub fn block_norms(&self, y: &[f64]) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| lp_norm(y[b.start..b.end].iter().map(|v| v.abs()), b.p))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LewisResult {
    pub w: Vec<f64>,
    /// U = (AᵀWA)^{-1/2}
    #[serde(skip)]
    pub u_factor: Option<SymMatrix>,
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Residuals over the last ten iterations were non-increasing.
    pub monotone_tail: bool,
    pub q: f64,
}

impl LewisResult {
    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().map(|a| a.powf(self.q)).sum()
    }
}

struct Eval {
    u: Vec<f64>,
    norms: Vec<f64>,
    factor: SymMatrix,
}

fn evaluate(a: &DMatrix<f64>, blocks: &BlockStructure, w: &[f64]) -> Result<Eval> {
    let g = linalg::gram(a, w)?;
    let factor = linalg::inv_sqrt(&g, EIGEN_FLOOR).matrix;
    let au = a * factor.as_matrix();
    let u: Vec<f64> = (0..a.nrows()).map(|i| au.row(i).norm()).collect();
    let norms = blocks.block_norms(&u);
    Ok(Eval { u, norms, factor })
}

fn fixed_point_target(blocks: &BlockStructure, e: &Eval, out: &mut [f64]) {
    let q = blocks.q;
    for (b, &nj) in blocks.blocks.iter().zip(&e.norms) {
        for i in b.start..b.end {
            out[i] = if nj == 0.0 {
                0.0
            } else if b.p == 2.0 {
                nj.powf(q - 2.0)
            } else {
                e.u[i].powf(b.p - 2.0) * nj.powf(q - b.p)
            };
        }
    }
}

fn check_rank(a: &DMatrix<f64>) -> Result<()> {
    let n = a.ncols();
    let g = linalg::gram(a, &vec![1.0; a.nrows()])?;
    let eig = g.as_matrix().clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let rank = eig.eigenvalues.iter().filter(|&&l| l > EIGEN_FLOOR * lmax && l > 0.0).count();
    if rank < n {
        return Err(Error::RankDeficient { rank, n });
    }
    Ok(())
}

/// Damped iteration W ← W^{1−θ}·T(W)^θ, θ = min(1, 2/max p_j), from W = I,
/// where T(W)_i = u_i^{p_j−2} N_j(u)^{q−p_j}. At a fixed point Σ α_j^q = n;
/// for q > 2 the result is rescaled so that Σ α_j^q = n^{q/2}.
///
/// Stops when max_i |W_i − T_i| / W_i ≤ tol. If that never happens within
/// `max_iter` the iterate with the smallest residual is returned with
/// `converged = false`.
pub fn block_lewis_fixed_point(
    a: &DMatrix<f64>,
    blocks: &BlockStructure,
    tol: f64,
    max_iter: usize,
) -> Result<LewisResult> {
    let (k, n) = a.shape();
    blocks.validate(k)?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(0));
    }
    check_rank(a)?;
    let theta = (2.0 / blocks.max_p()).min(1.0);

    let mut w = vec![1.0; k];
    let mut target = vec![0.0; k];
    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..=max_iter {
        iterations = it;
        let e = evaluate(a, blocks, &w)?;
        fixed_point_target(blocks, &e, &mut target);
        let residual = w
            .iter()
            .zip(&target)
            .map(|(wi, ti)| (wi - ti).abs() / (wi + 1e-300))
            .fold(0.0, f64::max);
        history.push(residual);
        if best.as_ref().is_none_or(|(r, _)| residual < *r) {
            best = Some((residual, w.clone()));
        }
        if residual <= tol {
            converged = true;
            break;
        }
        if it == max_iter {
            break;
        }
        for (wi, &ti) in w.iter_mut().zip(&target) {
            *wi = if ti == 0.0 || *wi == 0.0 {
                0.0
            } else {
                wi.powf(1.0 - theta) * ti.powf(theta)
            };
        }
    }
    let tail = &history[history.len().saturating_sub(10)..];
    let monotone_tail = tail.windows(2).all(|p| p[1] <= p[0]);
    if !monotone_tail {
        log::warn!("block Lewis iteration: residual not monotone over the last {} steps", tail.len());
    }
    let (residual, mut w) = best.expect("at least one iteration");
    if !converged {
        log::warn!("block Lewis iteration did not reach tol {tol:e} in {max_iter} steps; best residual {residual:e}");
    }
    if blocks.q > 2.0 {
        let s = (n as f64).powf(-(1.0 - 2.0 / blocks.q));
        w.iter_mut().for_each(|v| *v *= s);
    }
    let e = evaluate(a, blocks, &w)?;
    Ok(LewisResult {
        w,
        u_factor: Some(e.factor),
        alpha: e.norms,
        iterations,
        residual,
        converged,
        monotone_tail,
        q: blocks.q,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    /// "a": N_j(Ax) ≤ α_j‖U⁻¹x‖, "b": ‖U⁻¹x‖ ≤ N(Ax), "c": Σα^q identity.
    pub check: String,
    pub pass: bool,
    /// Largest relative excess over the bound (negative when slack remains).
    pub worst: f64,
    pub witness: Option<Vec<f64>>,
    pub block: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub pass: bool,
    pub probes: usize,
    pub slack: f64,
    pub sum_tol: f64,
    pub alpha_sum: f64,
    pub target_sum: f64,
    pub checks: Vec<CheckOutcome>,
}

impl CertificateReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// [`certify_with`] at the default slack 1e−9 and α-sum tolerance 1e−6.
pub fn certify<R: Rng + ?Sized>(
    result: &LewisResult,
    a: &DMatrix<f64>,
    blocks: &BlockStructure,
    probes: usize,
    rng: &mut R,
) -> Result<CertificateReport> {
    certify_with(result, a, blocks, probes, DEFAULT_SLACK, DEFAULT_SUM_TOL, rng)
}

/// Recomputes U and α from `result.w` and checks both inequalities on
/// `probes` Gaussian vectors, plus the α-sum identity.
pub fn certify_with<R: Rng + ?Sized>(
    result: &LewisResult,
    a: &DMatrix<f64>,
    blocks: &BlockStructure,
    probes: usize,
    slack: f64,
    sum_tol: f64,
    rng: &mut R,
) -> Result<CertificateReport> {
    let (k, n) = a.shape();
    blocks.validate(k)?;
    if result.w.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: result.w.len(),
        });
    }
    let e = evaluate(a, blocks, &result.w)?;
    let alpha = e.norms;
    let g = linalg::gram(a, &result.w)?;

    let mut a_out = CheckOutcome {
        check: "a".into(),
        pass: true,
        worst: f64::NEG_INFINITY,
        witness: None,
        block: None,
    };
    let mut b_out = CheckOutcome {
        check: "b".into(),
        ..a_out.clone()
    };
    for _ in 0..probes {
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let ax = a * nalgebra::DVector::from_column_slice(&x);
        let ax = ax.as_slice();
        let uinv = g.quad_form(&x).max(0.0).sqrt();
        let nj = blocks.block_norms(ax);
        for (j, (&v, &al)) in nj.iter().zip(&alpha).enumerate() {
            let bound = al * uinv;
            let excess = if bound > 0.0 { v / bound - 1.0 } else if v > 0.0 { f64::INFINITY } else { -1.0 };
            if excess > a_out.worst {
                a_out.worst = excess;
                if excess > slack {
                    a_out.pass = false;
                    a_out.witness = Some(x.clone());
                    a_out.block = Some(j);
                }
            }
        }
        let outer = nj.iter().map(|v| v.powf(blocks.q)).sum::<f64>().powf(1.0 / blocks.q);
        let excess = if outer > 0.0 { uinv / outer - 1.0 } else if uinv > 0.0 { f64::INFINITY } else { -1.0 };
        if excess > b_out.worst {
            b_out.worst = excess;
            if excess > slack {
                b_out.pass = false;
                b_out.witness = Some(x);
            }
        }
    }
    let alpha_sum: f64 = alpha.iter().map(|v| v.powf(blocks.q)).sum();
    let target = blocks.target_sum(n);
    let rel = (alpha_sum - target).abs() / target;
    let c_out = CheckOutcome {
        check: "c".into(),
        pass: rel <= sum_tol,
        worst: rel,
        witness: None,
        block: None,
    };
    let pass = a_out.pass && b_out.pass && c_out.pass;
    Ok(CertificateReport {
        pass,
        probes,
        slack,
        sum_tol,
        alpha_sum,
        target_sum: target,
        checks: vec![a_out, b_out, c_out],
    })
}

/// ρ_j = α_j² / Σ α², the block sampling distribution for N(x)² = Σ N_j(Ax)².
pub fn sos_lp_probs(a: &DMatrix<f64>, blocks: &BlockStructure, result: &LewisResult) -> Result<ProbabilityVector> {
    blocks.validate(a.nrows())?;
    if blocks.q != 2.0 {
        return Err(Error::InvalidParameter(format!(
            "block probabilities need q = 2, got {}",
            blocks.q
        )));
    }
    if result.alpha.len() != blocks.len() {
        return Err(Error::DimensionMismatch {
            expected: blocks.len(),
            got: result.alpha.len(),
        });
    }
    let mass: Vec<f64> = result.alpha.iter().map(|a| a * a).collect();
    normalize(&mass)
}

/// Row blocks for a collection of terms: Linear and GraphEdge terms give a
/// single ℓ₂ row, LpImage gives its rows with p (or ⌈ln rows⌉ for p = ∞),
/// and a hyperedge gives the rows √c(e_u − e_v) over its vertex pairs under
/// ℓ_{max(2, ⌈ln d⌉)}, d the number of pairs, as a stand-in for ℓ∞.
pub fn lp_blocks_from_terms(n: usize, terms: &[NormTerm], q: f64) -> Result<(DMatrix<f64>, BlockStructure)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut blocks = Vec::with_capacity(terms.len());
    let inf_p = |d: usize| (d.max(1) as f64).ln().ceil().max(2.0);
    for (index, t) in terms.iter().enumerate() {
        let start = rows.len();
        let p = match t {
            NormTerm::Linear { a } => {
                rows.push(a.clone());
                2.0
            }
            NormTerm::GraphEdge { u, v, c } => {
                let mut r = vec![0.0; n];
                r[*u] = *c;
                r[*v] = -*c;
                rows.push(r);
                2.0
            }
            NormTerm::Hyperedge { vertices, c } => {
                let s = c.sqrt();
                for (x, &u) in vertices.iter().enumerate() {
                    for &v in &vertices[x + 1..] {
                        let mut r = vec![0.0; n];
                        r[u] = s;
                        r[v] = -s;
                        rows.push(r);
                    }
                }
                if rows.len() == start {
                    rows.push(vec![0.0; n]);
                }
                inf_p(rows.len() - start)
            }
            NormTerm::LpImage { rows: r, p } => {
                if *p < 2.0 {
                    return Err(Error::InvalidTerm {
                        index,
                        reason: format!("block exponent {p} < 2"),
                    });
                }
                rows.extend(r.iter().cloned());
                if p.is_infinite() {
                    inf_p(r.len())
                } else {
                    *p
                }
            }
            _ => {
                return Err(Error::InvalidTerm {
                    index,
                    reason: "no explicit row representation".into(),
                })
            }
        };
        blocks.push(Block {
            start,
            end: rows.len(),
            p,
        });
    }
    let k = rows.len();
    let a = DMatrix::from_row_iterator(k, n, rows.into_iter().flatten());
    let b = BlockStructure::new(blocks, q, k)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use crate::weights::leverage_scores;

    fn gaussian(k: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = SeedStream::new(seed).rng();
        DMatrix::from_fn(k, n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn identity_singletons() {
        let a = DMatrix::<f64>::identity(4, 4);
        let b = BlockStructure::singletons(4, 2.0, 2.0).unwrap();
        let r = block_lewis_fixed_point(&a, &b, 1e-12, 100).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        for (w, al) in r.w.iter().zip(&r.alpha) {
            assert!((w - 1.0).abs() < 1e-14);
            assert!((al - 1.0).abs() < 1e-14);
        }
        assert!((r.alpha_sum() - 4.0).abs() < 1e-12);
        let mut rng = SeedStream::new(0).rng();
        let c = certify_with(&r, &a, &b, 200, 0.0, 0.0, &mut rng);
        // equality cases may round either way by an ulp
        let c = c.unwrap();
        assert!(c.checks[2].worst < 1e-14);
        assert!(c.checks[0].worst < 1e-14 && c.checks[1].worst < 1e-14);
    }

    #[test]
    fn singleton_p2_is_leverage() {
        let a = gaussian(30, 5, 1);
        let b = BlockStructure::singletons(30, 2.0, 2.0).unwrap();
        let r = block_lewis_fixed_point(&a, &b, 1e-12, 100).unwrap();
        let lev = leverage_scores(&a).unwrap();
        for (al, l) in r.alpha.iter().zip(&lev) {
            assert!((al * al - l).abs() < 1e-10);
        }
        assert!((r.alpha_sum() - 5.0).abs() < 1e-10);
        let rho = sos_lp_probs(&a, &b, &r).unwrap();
        for (p, l) in rho.rho.iter().zip(&lev) {
            assert!((p - l / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_full_block() {
        let a = gaussian(12, 3, 2);
        let b = BlockStructure::new(vec![Block { start: 0, end: 12, p: 2.0 }], 2.0, 12).unwrap();
        let r = block_lewis_fixed_point(&a, &b, 1e-12, 100).unwrap();
        assert!((r.alpha[0] * r.alpha[0] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn p4_blocks_certify() {
        let a = gaussian(20, 4, 3);
        let b = BlockStructure::uniform(20, 4, 4.0, 2.0).unwrap();
        let r = block_lewis_fixed_point(&a, &b, 1e-13, 2000).unwrap();
        assert!(r.converged, "residual {}", r.residual);
        assert!(r.monotone_tail);
        let mut rng = SeedStream::new(4).rng();
        let c = certify(&r, &a, &b, 2000, &mut rng).unwrap();
        assert!(c.pass, "{c:?}");
        assert!((c.alpha_sum - 4.0).abs() < 1e-8);
    }

    #[test]
    fn q_above_two_rescaled() {
        let a = gaussian(18, 3, 5);
        let b = BlockStructure::uniform(18, 3, 4.0, 3.0).unwrap();
        let r = block_lewis_fixed_point(&a, &b, 1e-13, 3000).unwrap();
        assert!(r.converged, "residual {}", r.residual);
        assert!((r.alpha_sum() - 3f64.powf(1.5)).abs() < 1e-8);
        let mut rng = SeedStream::new(5).rng();
        assert!(certify(&r, &a, &b, 1000, &mut rng).unwrap().pass);
    }

    #[test]
    fn perturbed_w_fails_sum_check() {
        let a = gaussian(10, 3, 6);
        let b = BlockStructure::singletons(10, 2.0, 2.0).unwrap();
        let mut r = block_lewis_fixed_point(&a, &b, 1e-12, 100).unwrap();
        r.w[3] *= 2.0;
        let mut rng = SeedStream::new(6).rng();
        let c = certify(&r, &a, &b, 100, &mut rng).unwrap();
        assert!(!c.pass);
        assert!(!c.checks[2].pass);
        assert!(c.failures().any(|f| f.check == "c"));
    }

    #[test]
    fn rotation_leaves_probabilities_unchanged() {
        let a = gaussian(24, 4, 7);
        let q = gaussian(4, 4, 8).qr().q();
        let b = BlockStructure::uniform(24, 3, 4.0, 2.0).unwrap();
        let r1 = block_lewis_fixed_point(&a, &b, 1e-13, 2000).unwrap();
        let aq = &a * &q;
        let r2 = block_lewis_fixed_point(&aq, &b, 1e-13, 2000).unwrap();
        let p1 = sos_lp_probs(&a, &b, &r1).unwrap();
        let p2 = sos_lp_probs(&aq, &b, &r2).unwrap();
        for (x, y) in p1.rho.iter().zip(&p2.rho) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn identical_blocks_split_evenly() {
        let top = gaussian(3, 3, 9);
        let a = DMatrix::from_fn(6, 3, |i, j| top[(i % 3, j)]);
        let b = BlockStructure::uniform(6, 3, 4.0, 2.0).unwrap();
        let r = block_lewis_fixed_point(&a, &b, 1e-13, 2000).unwrap();
        let rho = sos_lp_probs(&a, &b, &r).unwrap();
        assert!((rho.rho[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn hyperedge_surrogate_probabilities() {
        let terms = vec![
            NormTerm::Hyperedge {
                vertices: vec![0, 1, 2, 3],
                c: 1.0,
            },
            NormTerm::Hyperedge {
                vertices: vec![2, 3, 4],
                c: 2.0,
            },
            NormTerm::GraphEdge { u: 4, v: 0, c: 1.0 },
            NormTerm::Linear {
                a: vec![1.0, 1.0, 1.0, 1.0, 1.0],
            },
        ];
        let (a, b) = lp_blocks_from_terms(5, &terms, 2.0).unwrap();
        assert_eq!(a.nrows(), 6 + 3 + 1 + 1);
        assert_eq!(b.blocks[0].p, 2.0);
        let r = block_lewis_fixed_point(&a, &b, 1e-12, 2000).unwrap();
        let rho = sos_lp_probs(&a, &b, &r).unwrap();
        assert!((rho.rho.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(rho.rho.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn zero_block_gets_zero_weight() {
        let mut a = gaussian(9, 3, 10);
        for c in 0..3 {
            for r in 3..6 {
                a[(r, c)] = 0.0;
            }
        }
        let b = BlockStructure::uniform(9, 3, 4.0, 2.0).unwrap();
        let r = block_lewis_fixed_point(&a, &b, 1e-13, 2000).unwrap();
        assert!(r.converged);
        assert_eq!(r.alpha[1], 0.0);
        assert!(r.w[3..6].iter().all(|&w| w == 0.0));
    }

    #[test]
    fn invalid_inputs() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0]);
        let b = BlockStructure::singletons(3, 2.0, 2.0).unwrap();
        assert!(matches!(
            block_lewis_fixed_point(&a, &b, 1e-10, 10),
            Err(Error::RankDeficient { rank: 1, n: 2 })
        ));
        assert!(BlockStructure::singletons(3, 1.5, 2.0).is_err());
        assert!(BlockStructure::singletons(3, 2.0, 0.5).is_err());
        let gap = vec![Block { start: 0, end: 1, p: 2.0 }, Block { start: 2, end: 3, p: 2.0 }];
        assert!(BlockStructure::new(gap, 2.0, 3).is_err());
        let overlap = vec![Block { start: 0, end: 2, p: 2.0 }, Block { start: 1, end: 3, p: 2.0 }];
        assert!(BlockStructure::new(overlap, 2.0, 3).is_err());
    }

    #[test]
    fn nonconvergence_flagged() {
        let a = gaussian(20, 4, 11);
        let b = BlockStructure::uniform(20, 5, 6.0, 2.0).unwrap();
        let r = block_lewis_fixed_point(&a, &b, 1e-15, 2).unwrap();
        assert!(!r.converged);
        assert!(r.residual > 0.0);
    }

    #[test]
    fn blocks_json() {
        let s = r#"{"blocks":[{"start":0,"end":2,"p":4},{"start":2,"end":3,"p":2}],"q":2}"#;
        let b: BlockStructure = serde_json::from_str(s).unwrap();
        b.validate(3).unwrap();
        assert_eq!(b.blocks[0].p, 4.0);
        let s = r#"{"blocks":[{"start":0,"end":3,"p":2}]}"#;
        let b: BlockStructure = serde_json::from_str(s).unwrap();
        assert_eq!(b.q, 2.0);
    }
}
