//! Symmetric submodular set functions, their Lovász extensions, and the
//! sparsification pipeline for sums of them.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::norms::{NormTerm, SumNorm};
use crate::rng::SeedStream;
use crate::sparsify::{homotopy_sparsify, SparsifierResult, SparsifyConfig};

/// Subset of a ground set {0, …, n−1}, stored as a bitset.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Subset {
    n: usize,
    words: Vec<u64>,
}

impl Subset {
    pub fn empty(n: usize) -> Self {
        Subset {
            n,
            words: vec![0; n.div_ceil(64).max(1)],
        }
    }

    pub fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        (0..n).for_each(|i| s.insert(i));
        s
    }

    /// From a bitmask; bit i set means i ∈ S. Requires n ≤ 64.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        assert!(n <= 64, "bitmask subsets need n ≤ 64");
        let mut s = Self::empty(n);
        s.words[0] = if n == 64 { mask } else { mask & ((1u64 << n) - 1) };
        s
    }

    pub fn from_indices(n: usize, idx: &[usize]) -> Self {
        let mut s = Self::empty(n);
        idx.iter().for_each(|&i| s.insert(i));
        s
    }

    pub fn ground_size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        debug_assert!(i < self.n);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn complement(&self) -> Subset {
        let mut c = Subset::full(self.n);
        for (cw, w) in c.words.iter_mut().zip(&self.words) {
            *cw &= !w;
        }
        c
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.contains(i)).collect()
    }

    /// Indicator vector 1_S.
    pub fn indicator(&self) -> Vec<f64> {
        (0..self.n).map(|i| if self.contains(i) { 1.0 } else { 0.0 }).collect()
    }
}

/// A deterministic nonnegative set function on {0, …, n−1}.
///
/// Implementations must be safe to call from several threads at once.
pub trait SetFunction: Send + Sync {
    fn ground_size(&self) -> usize;

    fn value(&self, set: &Subset) -> f64;

    /// Whether f(S) = f(V∖S) is claimed.
    fn is_symmetric(&self) -> bool {
        false
    }

    /// Whether f takes integer values, which enables the zero-consistency check.
    fn is_integer_valued(&self) -> bool {
        false
    }

    /// The Lovász extension at x in closed form, when one is known. Norm
    /// evaluation uses it in place of the sorted level-set sum.
    fn extension(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// Edge of a cut function: a set of vertices (two for a graph edge) and a weight.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutEdge {
    pub vertices: Vec<usize>,
    pub c: f64,
}

/// Weighted (hyper)graph cut function: f(S) = Σ c_e over edges e crossing S.
#[derive(Clone, Debug, PartialEq)]
pub struct CutFunction {
    n: usize,
    edges: Vec<CutEdge>,
}

impl CutFunction {
    pub fn new(n: usize, edges: Vec<CutEdge>) -> Result<Self> {
        for (index, e) in edges.iter().enumerate() {
            if e.vertices.is_empty() || e.vertices.iter().any(|&v| v >= n) {
                return Err(Error::InvalidTerm {
                    index,
                    reason: format!("edge vertices {:?} invalid for n = {n}", e.vertices),
                });
            }
            if !(e.c.is_finite() && e.c >= 0.0) {
                return Err(Error::InvalidTerm {
                    index,
                    reason: format!("edge weight {} must be nonnegative", e.c),
                });
            }
        }
        Ok(CutFunction { n, edges })
    }

    pub fn graph(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        Self::new(
            n,
            edges
                .iter()
                .map(|&(u, v, c)| CutEdge {
                    vertices: vec![u, v],
                    c,
                })
                .collect(),
        )
    }

    /// Complete graph on n vertices, unit weights, edges in lexicographic order.
    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                edges.push((u, v, 1.0));
            }
        }
        Self::graph(n, &edges).expect("valid by construction")
    }

    pub fn edges(&self) -> &[CutEdge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Cut function of edge `i` alone.
    pub fn edge_function(&self, i: usize) -> CutFunction {
        CutFunction {
            n: self.n,
            edges: vec![self.edges[i].clone()],
        }
    }

    /// One single-edge cut function per edge.
    pub fn components(&self) -> Vec<Arc<dyn SetFunction>> {
        (0..self.edges.len())
            .map(|i| Arc::new(self.edge_function(i)) as Arc<dyn SetFunction>)
            .collect()
    }

    /// Whether edge `i` crosses `set`.
    pub fn crosses(&self, i: usize, set: &Subset) -> bool {
        let e = &self.edges[i];
        let first = set.contains(e.vertices[0]);
        e.vertices[1..].iter().any(|&v| set.contains(v) != first)
    }

    /// Lovász extension of the cut function, computed directly:
    /// Σ c_e (max_e x − min_e x).
    pub fn energy(&self, x: &[f64]) -> f64 {
        self.edges
            .iter()
            .map(|e| {
                let (lo, hi) = e
                    .vertices
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(x[v]), hi.max(x[v]))
                    });
                e.c * (hi - lo)
            })
            .sum()
    }
}

impl SetFunction for CutFunction {
    fn ground_size(&self) -> usize {
        self.n
    }

    fn value(&self, set: &Subset) -> f64 {
        (0..self.edges.len())
            .filter(|&i| self.crosses(i, set))
            .map(|i| self.edges[i].c)
            .sum()
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn is_integer_valued(&self) -> bool {
        self.edges.iter().all(|e| e.c.fract() == 0.0)
    }

    fn extension(&self, x: &[f64]) -> Option<f64> {
        Some(self.energy(x))
    }
}

/// Absolute tolerance for f(∅) = f(V) = 0.
const VANISH_TOL: f64 = 1e-12;

pub(crate) fn check_vanishing(f: &dyn SetFunction) -> Result<()> {
    let n = f.ground_size();
    let e = f.value(&Subset::empty(n));
    if e.abs() > VANISH_TOL {
        return Err(Error::NonVanishing {
            which: "empty",
            value: e,
        });
    }
    let v = f.value(&Subset::full(n));
    if v.abs() > VANISH_TOL {
        return Err(Error::NonVanishing {
            which: "full",
            value: v,
        });
    }
    Ok(())
}

/// Ascending order of coordinates; ties keep index order.
fn ascending_order(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    idx
}

/// Lovász extension `∫ f({i : x_i ≤ t}) dt`, evaluated from the sorted
/// prefix level sets with exactly n+1 oracle calls.
pub fn lovasz_extension(f: &dyn SetFunction, x: &[f64]) -> Result<f64> {
    crate::norms::check_vector(x, f.ground_size())?;
    let (value, empty, full) = lovasz_with_ends(f, x);
    if empty.abs() > VANISH_TOL {
        return Err(Error::NonVanishing {
            which: "empty",
            value: empty,
        });
    }
    if full.abs() > VANISH_TOL {
        return Err(Error::NonVanishing {
            which: "full",
            value: full,
        });
    }
    Ok(value)
}

fn lovasz_with_ends(f: &dyn SetFunction, x: &[f64]) -> (f64, f64, f64) {
    lovasz_in_order(f, x, &ascending_order(x))
}

/// Level-set sum along a given nondecreasing order of the coordinates.
fn lovasz_in_order(f: &dyn SetFunction, x: &[f64], order: &[usize]) -> (f64, f64, f64) {
    let n = x.len();
    let mut set = Subset::empty(n);
    let empty = f.value(&set);
    let mut acc = 0.0;
    for k in 0..n {
        set.insert(order[k]);
        let fk = f.value(&set);
        if k + 1 < n {
            acc += fk * (x[order[k + 1]] - x[order[k]]);
        } else {
            return (acc, empty, fk);
        }
    }
    (acc, empty, 0.0)
}

/// Hot-path evaluation for terms already checked at construction.
pub(crate) fn lovasz_unchecked(f: &dyn SetFunction, x: &[f64]) -> f64 {
    lovasz_with_ends(f, x).0
}

/// Spot-check of f(S) = f(V∖S) on `trials` random subsets.
pub fn spot_check_symmetry<R: Rng + ?Sized>(f: &dyn SetFunction, trials: usize, rng: &mut R) -> bool {
    let n = f.ground_size();
    (0..trials).all(|_| {
        let mut s = Subset::empty(n);
        (0..n).filter(|_| rng.random_bool(0.5)).for_each(|i| s.insert(i));
        let a = f.value(&s);
        let b = f.value(&s.complement());
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    })
}

/// Spot-check of f(S+v) − f(S) ≥ f(T+v) − f(T) for random S ⊆ T, v ∉ T.
pub fn spot_check_submodular<R: Rng + ?Sized>(f: &dyn SetFunction, trials: usize, rng: &mut R) -> bool {
    let n = f.ground_size();
    if n == 0 {
        return true;
    }
    (0..trials).all(|_| {
        let v = rng.random_range(0..n);
        let mut t = Subset::empty(n);
        (0..n)
            .filter(|&i| i != v && rng.random_bool(0.5))
            .for_each(|i| t.insert(i));
        let mut s = t.clone();
        for i in t.indices() {
            if rng.random_bool(0.5) {
                s.remove(i);
            }
        }
        let mut sv = s.clone();
        sv.insert(v);
        let mut tv = t.clone();
        tv.insert(v);
        let gain_s = f.value(&sv) - f.value(&s);
        let gain_t = f.value(&tv) - f.value(&t);
        gain_s + 1e-12 * gain_s.abs().max(1.0) >= gain_t
    })
}

/// Output of [`sfm_sparsify`].
#[derive(Clone, Debug, Serialize)]
pub struct SfmResult {
    pub weights: Vec<f64>,
    pub weight_sum: f64,
    pub attempts: usize,
    /// Result of the zero-consistency check (None when n > 20 or values are not integral).
    pub zero_consistent: Option<bool>,
    pub sparsifier: SparsifierResult,
}

/// Sparsifies F = f_1 + ⋯ + f_m for symmetric submodular f_i.
///
/// Each term becomes f̄_i(x) + m⁻⁵‖x‖₂, so the sum F̄ + m⁻⁴‖x‖₂ is a norm
/// rounded with r = m⁻⁴. The homotopy driver is rerun with fresh seeds
/// while Σw_i > 2m, up to `max_attempts` times.
pub fn sfm_sparsify(
    fs: &[Arc<dyn SetFunction>],
    epsilon: f64,
    cfg: &SparsifyConfig,
    max_attempts: usize,
) -> Result<SfmResult> {
    let m = fs.len();
    if m == 0 {
        return Err(Error::InvalidParameter("no set functions given".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} not in (0,1)")));
    }
    let n = fs[0].ground_size();
    let mut check_rng = SeedStream::new(cfg.seed).child("sfm-symmetry", 0).rng();
    for f in fs {
        if f.ground_size() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: f.ground_size(),
            });
        }
        check_vanishing(f.as_ref())?;
        if !f.is_symmetric() || !spot_check_symmetry(f.as_ref(), 32, &mut check_rng) {
            return Err(Error::Asymmetric);
        }
    }
    if epsilon < (m as f64).powf(-0.5) {
        log::warn!("epsilon {epsilon} below m^(-1/2) = {:.4}; sparsity bound is vacuous here", (m as f64).powf(-0.5));
    }

    let mf = m as f64;
    let reg = mf.powi(-5);
    let terms: Vec<NormTerm> = fs
        .iter()
        .map(|f| NormTerm::Sum(vec![NormTerm::Lovasz(f.clone()), NormTerm::Euclidean { t: reg }]))
        .collect();
    let norm = SumNorm::new(n, 1.0, terms)?;
    let r = mf.powi(-4);
    let big_r = estimate_upper_rounding(&norm, SeedStream::new(cfg.seed).child("sfm-round", 0));

    let mut last = None;
    for attempt in 0..max_attempts.max(1) {
        let mut stage_cfg = cfg.clone();
        stage_cfg.epsilon = epsilon;
        stage_cfg.seed = SeedStream::new(cfg.seed).child("sfm-attempt", attempt as u64).seed();
        let res = homotopy_sparsify(&norm, r, big_r, &stage_cfg)?;
        let sum: f64 = res.weights.iter().sum();
        let ok = sum <= 2.0 * mf;
        if !ok {
            log::info!("sfm attempt {attempt}: Σw = {sum:.3} > 2m, reseeding");
        }
        last = Some((res, sum, attempt + 1));
        if ok {
            break;
        }
    }
    let (res, sum, attempts) = last.expect("at least one attempt");
    if sum > 2.0 * mf {
        return Err(Error::WeightSumBudget(attempts));
    }
    let zero_consistent = if n <= 20 && fs.iter().all(|f| f.is_integer_valued()) {
        Some(crate::verify::zero_consistent(fs, &res.weights)?)
    } else {
        None
    };
    Ok(SfmResult {
        weights: res.weights.clone(),
        weight_sum: sum,
        attempts,
        zero_consistent,
        sparsifier: res,
    })
}

/// Upper rounding constant R ≥ max N(x)/‖x‖₂, from f̄ ≤ 2‖x‖_∞ · max_S f(S)
/// bounded above by the sum over terms of 2√n · max over probed sets, plus
/// a direct probe maximum.
fn estimate_upper_rounding(norm: &SumNorm, stream: SeedStream) -> f64 {
    let n = norm.dim();
    let mut rng = stream.rng();
    let mut best: f64 = 0.0;
    for _ in 0..256 {
        let x: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx > 0.0 {
            best = best.max(norm.eval_unchecked(&x) / nx);
        }
    }
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        best = best.max(norm.eval_unchecked(&e));
    }
    // probes underestimate the max; the extension is at most 2‖x‖_∞·max f ≤ 2‖x‖₂·max f
    2.0 * best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// f(S) = |S|·(n−|S|): symmetric, submodular, not a cut of a single edge.
    struct SizeProduct(usize);
    impl SetFunction for SizeProduct {
        fn ground_size(&self) -> usize {
            self.0
        }
        fn value(&self, s: &Subset) -> f64 {
            let k = s.len() as f64;
            k * (self.0 as f64 - k)
        }
        fn is_symmetric(&self) -> bool {
            true
        }
    }

    struct Counting<F: SetFunction>(F, std::sync::atomic::AtomicUsize);
    impl<F: SetFunction> SetFunction for Counting<F> {
        fn ground_size(&self) -> usize {
            self.0.ground_size()
        }
        fn value(&self, s: &Subset) -> f64 {
            self.1.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            self.0.value(s)
        }
    }

    #[test]
    fn subset_basics() {
        let s = Subset::from_mask(5, 0b10110);
        assert_eq!(s.indices(), vec![1, 2, 4]);
        assert_eq!(s.complement().indices(), vec![0, 3]);
        assert_eq!(s.len(), 3);
        let big = Subset::from_indices(130, &[0, 64, 129]);
        assert!(big.contains(129) && !big.contains(128));
        assert_eq!(big.complement().len(), 127);
    }

    #[test]
    fn extension_at_indicators_equals_f() {
        let f = SizeProduct(6);
        for mask in 0u64..64 {
            let s = Subset::from_mask(6, mask);
            let v = lovasz_extension(&f, &s.indicator()).unwrap();
            assert_eq!(v, f.value(&s));
        }
    }

    #[test]
    fn single_edge_matches_riemann_sum() {
        // oracle: midpoint rule for ∫ f({i : x_i ≤ t}) dt on a fine grid
        let f = CutFunction::graph(4, &[(1, 3, 2.5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min) - 0.1;
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.1;
            let steps = 400_000;
            let h = (hi - lo) / steps as f64;
            let mut integral = 0.0;
            for s in 0..steps {
                let t = lo + (s as f64 + 0.5) * h;
                let set = Subset::from_indices(4, &(0..4).filter(|&i| x[i] <= t).collect::<Vec<_>>());
                integral += f.value(&set) * h;
            }
            let ext = lovasz_extension(&f, &x).unwrap();
            assert!((ext - integral).abs() < 1e-4, "{ext} vs {integral}");
            assert!((ext - 2.5 * (x[1] - x[3]).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_vector_gives_zero() {
        let f = CutFunction::complete(5);
        assert_eq!(lovasz_extension(&f, &[3.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn exactly_n_plus_one_oracle_calls() {
        let f = Counting(CutFunction::complete(7), Default::default());
        lovasz_extension(&f, &[0.3, -1.0, 2.0, 0.0, 0.0, 5.0, 1.0]).unwrap();
        assert_eq!(f.1.load(std::sync::atomic::Ordering::Relaxed), 8);
    }

    #[test]
    fn non_vanishing_full_set_rejected() {
        struct Card(usize);
        impl SetFunction for Card {
            fn ground_size(&self) -> usize {
                self.0
            }
            fn value(&self, s: &Subset) -> f64 {
                s.len() as f64
            }
        }
        assert!(matches!(
            lovasz_extension(&Card(3), &[1.0, 2.0, 3.0]),
            Err(Error::NonVanishing { which: "full", .. })
        ));
        assert!(NormTerm::lovasz(Arc::new(Card(3))).is_err());
    }

    #[test]
    fn tie_permutation_invariance() {
        use rand::seq::SliceRandom;
        let f = CutFunction::graph(6, &[(0, 1, 1.0), (1, 2, 2.0), (2, 5, 0.5), (3, 4, 1.5), (0, 5, 3.0)])
            .unwrap();
        let x = [1.0, 0.5, 1.0, 0.5, 2.0, 1.0];
        let base = lovasz_extension(&f, &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            // shuffle within each tie group, keeping groups in ascending order
            let mut order = Vec::new();
            for v in [0.5, 1.0, 2.0] {
                let mut group: Vec<usize> = (0..6).filter(|&i| x[i] == v).collect();
                group.shuffle(&mut rng);
                order.extend(group);
            }
            let (val, _, _) = lovasz_in_order(&f, &x, &order);
            assert!((val - base).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetry_and_submodularity_spot_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = CutFunction::complete(6);
        assert!(spot_check_symmetry(&f, 64, &mut rng));
        assert!(spot_check_submodular(&f, 256, &mut rng));
        assert!(spot_check_submodular(&SizeProduct(7), 256, &mut rng));
        struct Supermod(usize);
        impl SetFunction for Supermod {
            fn ground_size(&self) -> usize {
                self.0
            }
            fn value(&self, s: &Subset) -> f64 {
                (s.len() as f64).powi(2)
            }
        }
        assert!(!spot_check_submodular(&Supermod(6), 256, &mut rng));
        assert!(!spot_check_symmetry(&Supermod(6), 64, &mut rng));
    }

    #[test]
    fn hyperedge_cut_extension() {
        let f = CutFunction::new(
            5,
            vec![CutEdge {
                vertices: vec![0, 2, 4],
                c: 3.0,
            }],
        )
        .unwrap();
        let x = [0.1, 9.0, -1.0, 7.0, 2.0];
        assert!((lovasz_extension(&f, &x).unwrap() - 9.0).abs() < 1e-12);
        assert!((f.energy(&x) - 9.0).abs() < 1e-12);
    }
}
