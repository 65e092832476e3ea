//! Semi-norm terms and weighted p-power sums `N(x)^p = Σ w_i N_i(x)^p`.

use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::submodular::{lovasz_unchecked, SetFunction};

/// Counts single-term evaluations. Clones share the same tally.
#[derive(Clone, Debug, Default)]
pub struct EvalCounter(Arc<AtomicU64>);

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

/// One semi-norm summand.
#[derive(Clone)]
pub enum NormTerm {
    /// |⟨a, x⟩|
    Linear { a: Vec<f64> },
    /// c·|x_u − x_v|
    GraphEdge { u: usize, v: usize, c: f64 },
    /// √c · max over pairs in `vertices` of |x_u − x_v|
    Hyperedge { vertices: Vec<usize>, c: f64 },
    /// ‖A x‖_p for a dense row-major k×n matrix; `p` may be infinite.
    LpImage { rows: Vec<Vec<f64>>, p: f64 },
    /// Lovász extension of a set function vanishing on ∅ and V.
    Lovasz(Arc<dyn SetFunction>),
    /// t‖x‖₂
    Euclidean { t: f64 },
    /// Sum of the component semi-norms.
    Sum(Vec<NormTerm>),
}

impl fmt::Debug for NormTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormTerm::Linear { a } => f.debug_struct("Linear").field("a", a).finish(),
            NormTerm::GraphEdge { u, v, c } => f
                .debug_struct("GraphEdge")
                .field("u", u)
                .field("v", v)
                .field("c", c)
                .finish(),
            NormTerm::Hyperedge { vertices, c } => f
                .debug_struct("Hyperedge")
                .field("vertices", vertices)
                .field("c", c)
                .finish(),
            NormTerm::LpImage { rows, p } => f
                .debug_struct("LpImage")
                .field("rows", &rows.len())
                .field("p", p)
                .finish(),
            NormTerm::Lovasz(func) => write!(f, "Lovasz(n={})", func.ground_size()),
            NormTerm::Euclidean { t } => f.debug_struct("Euclidean").field("t", t).finish(),
            NormTerm::Sum(parts) => f.debug_tuple("Sum").field(parts).finish(),
        }
    }
}

impl NormTerm {
    /// Lovász-extension term. Fails unless f(∅) = f(V) = 0.
    pub fn lovasz(f: Arc<dyn SetFunction>) -> Result<Self> {
        crate::submodular::check_vanishing(f.as_ref())?;
        Ok(NormTerm::Lovasz(f))
    }

    /// Checks indices, exponents and scales against ambient dimension `n`.
    pub fn validate(&self, n: usize) -> std::result::Result<(), String> {
        let nonneg = |c: f64| {
            if c.is_finite() && c >= 0.0 {
                Ok(())
            } else {
                Err(format!("scale {c} must be finite and nonnegative"))
            }
        };
        match self {
            NormTerm::Linear { a } => {
                if a.len() != n {
                    return Err(format!("vector has length {} but dim is {n}", a.len()));
                }
                if a.iter().any(|v| !v.is_finite()) {
                    return Err("non-finite coefficient".into());
                }
                Ok(())
            }
            NormTerm::GraphEdge { u, v, c } => {
                if *u >= n || *v >= n {
                    return Err(format!("edge ({u},{v}) out of range for dim {n}"));
                }
                nonneg(*c)
            }
            NormTerm::Hyperedge { vertices, c } => {
                if vertices.is_empty() {
                    return Err("hyperedge has no vertices".into());
                }
                if let Some(v) = vertices.iter().find(|&&v| v >= n) {
                    return Err(format!("vertex {v} out of range for dim {n}"));
                }
                nonneg(*c)
            }
            NormTerm::LpImage { rows, p } => {
                if p.is_nan() || *p < 1.0 {
                    return Err(format!("exponent {p} must be at least 1"));
                }
                if let Some(r) = rows.iter().find(|r| r.len() != n) {
                    return Err(format!("row has length {} but dim is {n}", r.len()));
                }
                if rows.iter().flatten().any(|v| !v.is_finite()) {
                    return Err("non-finite matrix entry".into());
                }
                Ok(())
            }
            NormTerm::Lovasz(f) => {
                if f.ground_size() != n {
                    return Err(format!(
                        "set function on {} elements but dim is {n}",
                        f.ground_size()
                    ));
                }
                Ok(())
            }
            NormTerm::Euclidean { t } => nonneg(*t),
            NormTerm::Sum(parts) => parts.iter().try_for_each(|p| p.validate(n)),
        }
    }

    /// Value at `x`; no validation.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            NormTerm::Linear { a } => a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>().abs(),
            NormTerm::GraphEdge { u, v, c } => c * (x[*u] - x[*v]).abs(),
            NormTerm::Hyperedge { vertices, c } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &v in vertices {
                    lo = lo.min(x[v]);
                    hi = hi.max(x[v]);
                }
                c.sqrt() * (hi - lo)
            }
            NormTerm::LpImage { rows, p } => {
                let img = rows
                    .iter()
                    .map(|r| r.iter().zip(x).map(|(a, x)| a * x).sum::<f64>().abs());
                lp_norm(img, *p)
            }
            NormTerm::Lovasz(f) => f.extension(x).unwrap_or_else(|| lovasz_unchecked(f.as_ref(), x)),
            NormTerm::Euclidean { t } => t * x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            NormTerm::Sum(parts) => parts.iter().map(|p| p.value(x)).sum(),
        }
    }
}

/// ℓ_p norm of a sequence of nonnegative magnitudes.
pub(crate) fn lp_norm<I: Iterator<Item = f64>>(mags: I, p: f64) -> f64 {
    if p.is_infinite() {
        mags.fold(0.0, f64::max)
    } else if p == 1.0 {
        mags.sum()
    } else if p == 2.0 {
        mags.map(|v| v * v).sum::<f64>().sqrt()
    } else {
        // scale by the max to avoid overflow at large p
        let v: Vec<f64> = mags.collect();
        let m = v.iter().cloned().fold(0.0, f64::max);
        if m == 0.0 {
            return 0.0;
        }
        m * v.iter().map(|x| (x / m).powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

pub(crate) fn check_vector(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Evaluates a single term after checking `x`.
pub fn eval_term(term: &NormTerm, x: &[f64], n: usize) -> Result<f64> {
    check_vector(x, n)?;
    term.validate(n)
        .map_err(|reason| Error::InvalidTerm { index: 0, reason })?;
    Ok(term.value(x))
}

/// `N(x)^p = Σ w_i N_i(x)^p` over a list of semi-norm terms.
#[derive(Clone, Debug)]
pub struct SumNorm {
    dim: usize,
    p: f64,
    terms: Arc<Vec<NormTerm>>,
    weights: Vec<f64>,
    /// Index of each kept term in the list this norm was derived from.
    source: Vec<usize>,
    counter: EvalCounter,
}

impl SumNorm {
    pub fn new(dim: usize, p: f64, terms: Vec<NormTerm>) -> Result<Self> {
        let m = terms.len();
        Self::with_weights(dim, p, terms, vec![1.0; m])
    }

    pub fn with_weights(dim: usize, p: f64, terms: Vec<NormTerm>, weights: Vec<f64>) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidParameter(format!("power p = {p} must be finite and ≥ 1")));
        }
        if weights.len() != terms.len() {
            return Err(Error::DimensionMismatch {
                expected: terms.len(),
                got: weights.len(),
            });
        }
        check_weights(&weights)?;
        for (index, t) in terms.iter().enumerate() {
            t.validate(dim)
                .map_err(|reason| Error::InvalidTerm { index, reason })?;
        }
        let source = (0..terms.len()).collect();
        Ok(SumNorm {
            dim,
            p,
            terms: Arc::new(terms),
            weights,
            source,
            counter: EvalCounter::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// min(p, 2), the exponent of the sampling measure.
    pub fn phat(&self) -> f64 {
        self.p.min(2.0)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[NormTerm] {
        &self.terms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// For a norm produced by [`apply_weights`], the original index of each term.
    pub fn source_indices(&self) -> &[usize] {
        &self.source
    }

    pub fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    /// Replaces the evaluation counter (shared with derived norms).
    pub fn with_counter(mut self, counter: EvalCounter) -> Self {
        self.counter = counter;
        self
    }

    /// Appends a term with the given weight.
    pub fn push_term(&self, term: NormTerm, weight: f64) -> Result<SumNorm> {
        term.validate(self.dim).map_err(|reason| Error::InvalidTerm {
            index: self.terms.len(),
            reason,
        })?;
        check_weights(&[weight])?;
        let mut terms = (*self.terms).clone();
        terms.push(term);
        let mut weights = self.weights.clone();
        weights.push(weight);
        let mut source = self.source.clone();
        source.push(usize::MAX);
        Ok(SumNorm {
            dim: self.dim,
            p: self.p,
            terms: Arc::new(terms),
            weights,
            source,
            counter: self.counter.clone(),
        })
    }

    /// Same terms and weights under a different power.
    pub fn with_power(&self, p: f64) -> Result<SumNorm> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidParameter(format!("power p = {p} must be finite and ≥ 1")));
        }
        let mut out = self.clone();
        out.p = p;
        Ok(out)
    }

    /// Scales every weight by `c ≥ 0`.
    pub fn scaled_weights(&self, c: f64) -> SumNorm {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= c);
        out
    }

    /// `w_i N_i(x)^p` for term `i`, unchecked.
    #[inline]
    pub fn summand(&self, i: usize, x: &[f64]) -> f64 {
        self.counter.add(1);
        self.weights[i] * pow(self.terms[i].value(x), self.p)
    }

    /// `N(x)^p` without input checks.
    pub fn eval_pow_unchecked(&self, x: &[f64]) -> f64 {
        self.counter.add(self.terms.len() as u64);
        let p = self.p;
        self.terms
            .iter()
            .zip(&self.weights)
            .map(|(t, &w)| if w == 0.0 { 0.0 } else { w * pow(t.value(x), p) })
            .sum()
    }

    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        root(self.eval_pow_unchecked(x), self.p)
    }

    /// `N(x)^p`.
    pub fn eval_pow(&self, x: &[f64]) -> Result<f64> {
        check_vector(x, self.dim)?;
        Ok(self.eval_pow_unchecked(x))
    }
}

#[inline]
pub(crate) fn pow(v: f64, p: f64) -> f64 {
    if p == 1.0 {
        v
    } else if p == 2.0 {
        v * v
    } else {
        v.powf(p)
    }
}

#[inline]
pub(crate) fn root(v: f64, p: f64) -> f64 {
    if p == 1.0 {
        v
    } else if p == 2.0 {
        v.sqrt()
    } else {
        v.powf(1.0 / p)
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    for (index, &value) in w.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    Ok(())
}

/// `(Σ w_i N_i(x)^p)^{1/p}`.
pub fn eval_sum(norm: &SumNorm, x: &[f64]) -> Result<f64> {
    check_vector(x, norm.dim)?;
    Ok(norm.eval_unchecked(x))
}

/// Multiplies the weights of `norm` by `w` and drops terms whose weight
/// becomes zero.
pub fn apply_weights(norm: &SumNorm, w: &[f64]) -> Result<SumNorm> {
    if w.len() != norm.len() {
        return Err(Error::DimensionMismatch {
            expected: norm.len(),
            got: w.len(),
        });
    }
    check_weights(w)?;
    let mut terms = Vec::new();
    let mut weights = Vec::new();
    let mut source = Vec::new();
    for (i, (&wi, t)) in w.iter().zip(norm.terms.iter()).enumerate() {
        let nw = wi * norm.weights[i];
        if nw > 0.0 {
            terms.push(t.clone());
            weights.push(nw);
            source.push(norm.source[i]);
        }
    }
    Ok(SumNorm {
        dim: norm.dim,
        p: norm.p,
        terms: Arc::new(terms),
        weights,
        source,
        counter: norm.counter.clone(),
    })
}

// ---------------------------------------------------------------------------
// Instance files

/// Exponent in instance files: a number or the string "inf".
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exponent {
    Finite(f64),
    Named(InfName),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InfName {
    #[serde(rename = "inf", alias = "infinity", alias = "Infinity")]
    Inf,
}

impl Exponent {
    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(v) => v,
            Exponent::Named(_) => f64::INFINITY,
        }
    }

    pub fn from_value(v: f64) -> Self {
        if v.is_infinite() {
            Exponent::Named(InfName::Inf)
        } else {
            Exponent::Finite(v)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TermSpec {
    Linear { a: Vec<f64> },
    GraphEdge { u: usize, v: usize, c: f64 },
    Hyperedge { vertices: Vec<usize>, c: f64 },
    LpImage { p: Exponent, rows: Vec<Vec<f64>> },
    Euclidean { t: f64 },
    Sum { terms: Vec<TermSpec> },
}

impl TermSpec {
    pub fn to_term(&self) -> NormTerm {
        match self {
            TermSpec::Linear { a } => NormTerm::Linear { a: a.clone() },
            TermSpec::GraphEdge { u, v, c } => NormTerm::GraphEdge { u: *u, v: *v, c: *c },
            TermSpec::Hyperedge { vertices, c } => NormTerm::Hyperedge {
                vertices: vertices.clone(),
                c: *c,
            },
            TermSpec::LpImage { p, rows } => NormTerm::LpImage {
                rows: rows.clone(),
                p: p.value(),
            },
            TermSpec::Euclidean { t } => NormTerm::Euclidean { t: *t },
            TermSpec::Sum { terms } => NormTerm::Sum(terms.iter().map(|t| t.to_term()).collect()),
        }
    }

    /// `None` for Lovász terms, which have no serialized form.
    pub fn from_term(term: &NormTerm) -> Option<TermSpec> {
        Some(match term {
            NormTerm::Linear { a } => TermSpec::Linear { a: a.clone() },
            NormTerm::GraphEdge { u, v, c } => TermSpec::GraphEdge { u: *u, v: *v, c: *c },
            NormTerm::Hyperedge { vertices, c } => TermSpec::Hyperedge {
                vertices: vertices.clone(),
                c: *c,
            },
            NormTerm::LpImage { rows, p } => TermSpec::LpImage {
                p: Exponent::from_value(*p),
                rows: rows.clone(),
            },
            NormTerm::Euclidean { t } => TermSpec::Euclidean { t: *t },
            NormTerm::Sum(parts) => TermSpec::Sum {
                terms: parts.iter().map(TermSpec::from_term).collect::<Option<_>>()?,
            },
            NormTerm::Lovasz(_) => return None,
        })
    }
}

/// On-disk instance: `{ "dim": n, "p": p, "terms": [...], "weights": [...]? }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub dim: usize,
    pub p: f64,
    pub terms: Vec<TermSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Instance {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_norm(&self) -> Result<SumNorm> {
        let terms: Vec<NormTerm> = self.terms.iter().map(TermSpec::to_term).collect();
        match &self.weights {
            Some(w) => SumNorm::with_weights(self.dim, self.p, terms, w.clone()),
            None => SumNorm::new(self.dim, self.p, terms),
        }
    }

    pub fn from_norm(norm: &SumNorm) -> Option<Self> {
        let terms = norm
            .terms()
            .iter()
            .map(TermSpec::from_term)
            .collect::<Option<Vec<_>>>()?;
        let weights = if norm.weights().iter().all(|&w| w == 1.0) {
            None
        } else {
            Some(norm.weights().to_vec())
        };
        Some(Instance {
            dim: norm.dim(),
            p: norm.p(),
            terms,
            weights,
        })
    }
}

/// Reads weights from a JSON array or from CSV lines `index,weight`.
pub fn read_weights(path: &Path, m: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let w: Vec<f64> = serde_json::from_str(trimmed)?;
        if w.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: w.len(),
            });
        }
        return Ok(w);
    }
    if trimmed.starts_with('{') {
        #[derive(Deserialize)]
        struct Wrapped {
            weights: Vec<f64>,
        }
        let w: Wrapped = serde_json::from_str(trimmed)?;
        if w.weights.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: w.weights.len(),
            });
        }
        return Ok(w.weights);
    }
    let mut w = vec![0.0; m];
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    for rec in rdr.records() {
        let rec = rec?;
        let (Some(i), Some(v)) = (rec.get(0), rec.get(1)) else {
            continue;
        };
        let (Ok(i), Ok(v)) = (i.parse::<usize>(), v.parse::<f64>()) else {
            continue; // header
        };
        if i >= m {
            return Err(Error::InvalidParameter(format!("weight index {i} out of range")));
        }
        w[i] = v;
    }
    Ok(w)
}

/// Writes weights as CSV `index,weight` when `path` ends in `.csv`, else as a JSON array.
pub fn write_weights(path: &Path, w: &[f64]) -> Result<()> {
    if path.extension().is_some_and(|e| e == "csv") {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(["index", "weight"])?;
        for (i, v) in w.iter().enumerate() {
            wtr.write_record([i.to_string(), format!("{v:e}")])?;
        }
        wtr.flush()?;
    } else {
        std::fs::write(path, serde_json::to_string(w)?)?;
    }
    Ok(())
}
