//! Measuring how well Ñ approximates N.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{NormTerm, SumNorm, TermSpec};
use crate::sampler::unit_direction;
use crate::submodular::{CutEdge, CutFunction, SetFunction, Subset};

/// Largest ground set accepted by exhaustive cut enumeration.
pub const MAX_EXACT_N: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub max_rel_err: f64,
    pub argmax: Option<Vec<f64>>,
    pub argmax_family: Option<String>,
    pub probe_counts: BTreeMap<String, usize>,
    /// Set only by cut enumeration.
    pub exact: bool,
    pub epsilon: f64,
    pub pass: bool,
    /// A set S with F(S) = 0 but Σ w_i f_i(S) > 0, if one exists.
    pub zero_violation: Option<Vec<usize>>,
}

/// Probe families for [`empirical_eps`].
#[derive(Clone, Debug)]
pub struct Probes {
    /// Total budget, split evenly over the families.
    pub budget: usize,
    pub mu_samples: Vec<Vec<f64>>,
    pub extra: Vec<Vec<f64>>,
}

impl Default for Probes {
    fn default() -> Self {
        Probes {
            budget: 10_000,
            mu_samples: Vec::new(),
            extra: Vec::new(),
        }
    }
}

impl Probes {
    pub fn with_budget(budget: usize) -> Self {
        Probes {
            budget,
            ..Default::default()
        }
    }

    /// Adds every indicator vector 1_S for S ⊆ {0..n−1} (n ≤ 20).
    pub fn with_indicators(mut self, n: usize) -> Result<Self> {
        if n > MAX_EXACT_N {
            return Err(Error::TooLarge(n));
        }
        for mask in 1..(1u64 << n) - 1 {
            self.extra.push(Subset::from_mask(n, mask).indicator());
        }
        Ok(self)
    }
}

struct Tracker {
    epsilon: f64,
    worst: f64,
    argmax: Option<(Vec<f64>, String)>,
    counts: BTreeMap<String, usize>,
}

impl Tracker {
    fn visit(&mut self, n: &SumNorm, nt: &SumNorm, family: &str, x: &[f64]) {
        *self.counts.entry(family.to_string()).or_default() += 1;
        let a = n.eval_pow_unchecked(x);
        if !(a > 0.0) {
            return;
        }
        let b = nt.eval_pow_unchecked(x);
        let err = (a - b).abs() / a;
        if err > self.worst || self.argmax.is_none() {
            self.worst = err.max(self.worst);
            self.argmax = Some((x.to_vec(), family.to_string()));
        }
    }

    fn finish(self) -> VerificationReport {
        let (argmax, fam) = match self.argmax {
            Some((x, f)) => (Some(x), Some(f)),
            None => (None, None),
        };
        VerificationReport {
            max_rel_err: self.worst,
            argmax,
            argmax_family: fam,
            probe_counts: self.counts,
            exact: false,
            epsilon: self.epsilon,
            pass: self.worst <= self.epsilon,
            zero_violation: None,
        }
    }
}

/// max over probes of |N(x)^p − Ñ(x)^p| / N(x)^p, skipping N(x) = 0.
///
/// Families: Gaussian vectors, uniform sphere points, coordinate vectors,
/// pairwise differences e_i − e_j, μ-samples and caller-supplied extras.
pub fn empirical_eps<R: Rng + ?Sized>(
    n: &SumNorm,
    ntilde: &SumNorm,
    probes: &Probes,
    epsilon: f64,
    rng: &mut R,
) -> Result<VerificationReport> {
    if n.dim() != ntilde.dim() {
        return Err(Error::DimensionMismatch {
            expected: n.dim(),
            got: ntilde.dim(),
        });
    }
    if n.p() != ntilde.p() {
        return Err(Error::InvalidParameter(format!(
            "powers differ: {} vs {}",
            n.p(),
            ntilde.p()
        )));
    }
    let d = n.dim();
    let families = 4 + usize::from(!probes.mu_samples.is_empty());
    let share = (probes.budget / families).max(1);
    let mut t = Tracker {
        epsilon,
        worst: 0.0,
        argmax: None,
        counts: BTreeMap::new(),
    };

    for _ in 0..share {
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        t.visit(n, ntilde, "gaussian", &x);
    }
    for _ in 0..share {
        let x = unit_direction(d, rng);
        t.visit(n, ntilde, "sphere", &x);
    }
    let coords: Vec<usize> = if d <= share {
        (0..d).collect()
    } else {
        (0..share).map(|_| rng.random_range(0..d)).collect()
    };
    for i in coords {
        let mut x = vec![0.0; d];
        x[i] = 1.0;
        t.visit(n, ntilde, "coordinate", &x);
    }
    let pairs = d * d.saturating_sub(1) / 2;
    if pairs > 0 {
        let list: Vec<(usize, usize)> = if pairs <= share {
            (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect()
        } else {
            (0..share)
                .map(|_| {
                    let i = rng.random_range(0..d);
                    let mut j = rng.random_range(0..d - 1);
                    if j >= i {
                        j += 1;
                    }
                    (i, j)
                })
                .collect()
        };
        for (i, j) in list {
            let mut x = vec![0.0; d];
            x[i] = 1.0;
            x[j] = -1.0;
            t.visit(n, ntilde, "pairwise", &x);
        }
    }
    for x in probes.mu_samples.iter().take(share) {
        t.visit(n, ntilde, "mu", x);
    }
    for x in &probes.extra {
        t.visit(n, ntilde, "extra", x);
    }
    Ok(t.finish())
}

/// Exact max over all cuts S (vertex n−1 kept outside S) of
/// |F(S) − Σ w_i f_i(S)| / F(S), where f_i is the cut function of edge i.
pub fn exact_cut_eps(f: &CutFunction, w: &[f64], epsilon: f64) -> Result<VerificationReport> {
    let n = f.ground_size();
    if n > MAX_EXACT_N {
        return Err(Error::TooLarge(n));
    }
    if w.len() != f.num_edges() {
        return Err(Error::DimensionMismatch {
            expected: f.num_edges(),
            got: w.len(),
        });
    }
    let mut worst: f64 = 0.0;
    let mut argmax = None;
    let mut zero_violation = None;
    let half = if n == 0 { 0 } else { 1u64 << (n - 1) };
    for mask in 0..half {
        let s = Subset::from_mask(n, mask);
        let mut exact = 0.0;
        let mut approx = 0.0;
        for (i, e) in f.edges().iter().enumerate() {
            if f.crosses(i, &s) {
                exact += e.c;
                approx += w[i] * e.c;
            }
        }
        if exact == 0.0 {
            if approx > 0.0 && zero_violation.is_none() {
                zero_violation = Some(s.indices());
            }
            continue;
        }
        let err = (exact - approx).abs() / exact;
        if err > worst || argmax.is_none() {
            worst = worst.max(err);
            argmax = Some(s.indicator());
        }
    }
    let mut counts = BTreeMap::new();
    counts.insert("cuts".to_string(), half as usize);
    Ok(VerificationReport {
        max_rel_err: worst,
        argmax,
        argmax_family: Some("cut".into()),
        probe_counts: counts,
        exact: true,
        epsilon,
        pass: worst <= epsilon && zero_violation.is_none(),
        zero_violation,
    })
}

/// Exact max over all S of |F(S) − Σ w_i f_i(S)| / F(S) for arbitrary set functions.
pub fn exact_set_eps(fs: &[Arc<dyn SetFunction>], w: &[f64], epsilon: f64) -> Result<VerificationReport> {
    let n = fs.first().map_or(0, |f| f.ground_size());
    if n > MAX_EXACT_N {
        return Err(Error::TooLarge(n));
    }
    if w.len() != fs.len() {
        return Err(Error::DimensionMismatch {
            expected: fs.len(),
            got: w.len(),
        });
    }
    let mut worst: f64 = 0.0;
    let mut argmax = None;
    let mut zero_violation = None;
    let total = 1u64 << n;
    for mask in 0..total {
        let s = Subset::from_mask(n, mask);
        let mut exact = 0.0;
        let mut approx = 0.0;
        for (f, &wi) in fs.iter().zip(w) {
            let v = f.value(&s);
            exact += v;
            approx += wi * v;
        }
        if exact == 0.0 {
            if approx > 0.0 && zero_violation.is_none() {
                zero_violation = Some(s.indices());
            }
            continue;
        }
        let err = (exact - approx).abs() / exact;
        if err > worst || argmax.is_none() {
            worst = worst.max(err);
            argmax = Some(s.indicator());
        }
    }
    let mut counts = BTreeMap::new();
    counts.insert("sets".to_string(), total as usize);
    Ok(VerificationReport {
        max_rel_err: worst,
        argmax,
        argmax_family: Some("set".into()),
        probe_counts: counts,
        exact: true,
        epsilon,
        pass: worst <= epsilon && zero_violation.is_none(),
        zero_violation,
    })
}

/// Whether Σ w_i f_i(S) = 0 on every S with F(S) = 0.
pub fn zero_consistent(fs: &[Arc<dyn SetFunction>], w: &[f64]) -> Result<bool> {
    Ok(exact_set_eps(fs, w, f64::INFINITY)?.zero_violation.is_none())
}

/// The cut function F(S) = N(1_S)^p of a graph/hyperedge instance: edge i
/// has capacity w_i·N_i(1_S)^p for any S it crosses (w_i·c^p for graph edges,
/// w_i·c^{p/2} for hyperedges).
pub fn cut_function_of(norm: &SumNorm) -> Result<CutFunction> {
    let p = norm.p();
    let edges = norm
        .terms()
        .iter()
        .zip(norm.weights())
        .enumerate()
        .map(|(index, (t, &w))| match t {
            NormTerm::GraphEdge { u, v, c } => Ok(CutEdge {
                vertices: vec![*u, *v],
                c: w * c.powf(p),
            }),
            NormTerm::Hyperedge { vertices, c } => Ok(CutEdge {
                vertices: vertices.clone(),
                c: w * c.sqrt().powf(p),
            }),
            other => Err(Error::InvalidTerm {
                index,
                reason: format!(
                    "exact cut verification needs graph or hyperedge terms, found {:?}",
                    TermSpec::from_term(other).map(|s| format!("{s:?}")).unwrap_or_else(|| "lovasz".into())
                ),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    CutFunction::new(norm.dim(), edges)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub trials: usize,
    /// max |N(λx) − |λ|N(x)| / (|λ|N(x))
    pub homogeneity: f64,
    /// max (N(x+y) − N(x) − N(y)) / (N(x) + N(y)), clipped below at 0
    pub triangle: f64,
    /// max |N(−x) − N(x)| / N(x)
    pub symmetry: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Homogeneity, triangle inequality and symmetry on random inputs.
pub fn seminorm_suite<R: Rng + ?Sized>(n: &SumNorm, trials: usize, rng: &mut R) -> SeminormReport {
    let tol = 1e-10;
    let d = n.dim();
    let mut homog: f64 = 0.0;
    let mut tri: f64 = 0.0;
    let mut sym: f64 = 0.0;
    let gauss = |rng: &mut R| -> Vec<f64> { (0..d).map(|_| rng.sample(StandardNormal)).collect() };
    for _ in 0..trials {
        let x = gauss(rng);
        let y = gauss(rng);
        let lambda: f64 = rng.random_range(-10.0..10.0);
        let nx = n.eval_unchecked(&x);
        let ny = n.eval_unchecked(&y);
        let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
        let ns = n.eval_unchecked(&scaled);
        let want = lambda.abs() * nx;
        if want > 0.0 {
            homog = homog.max((ns - want).abs() / want);
        } else {
            homog = homog.max(ns);
        }
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let nsum = n.eval_unchecked(&sum);
        let denom = (nx + ny).max(f64::MIN_POSITIVE);
        tri = tri.max((nsum - nx - ny) / denom);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let diff = (n.eval_unchecked(&neg) - nx).abs();
        sym = sym.max(if nx > 0.0 { diff / nx } else { diff });
    }
    SeminormReport {
        trials,
        homogeneity: homog,
        triangle: tri,
        symmetry: sym,
        tolerance: tol,
        pass: homog <= tol && tri <= tol && sym <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::apply_weights;
    use crate::rng::SeedStream;

    fn coords(n: usize, p: f64) -> SumNorm {
        let terms = (0..n)
            .map(|i| {
                let mut a = vec![0.0; n];
                a[i] = 1.0;
                NormTerm::Linear { a }
            })
            .collect();
        SumNorm::new(n, p, terms).unwrap()
    }

    #[test]
    fn identical_norms_have_zero_error() {
        let n = coords(5, 1.5);
        let mut rng = SeedStream::new(1).rng();
        let r = empirical_eps(&n, &n, &Probes::with_budget(400), 0.1, &mut rng).unwrap();
        assert_eq!(r.max_rel_err, 0.0);
        assert!(r.pass && !r.exact);
        assert_eq!(r.probe_counts["coordinate"], 5);
        assert_eq!(r.probe_counts["pairwise"], 10);
    }

    #[test]
    fn uniform_inflation_is_measured_exactly() {
        let n = coords(4, 2.0);
        let delta = 0.3;
        let nt = apply_weights(&n, &[1.0 + delta; 4]).unwrap();
        let mut rng = SeedStream::new(2).rng();
        let r = empirical_eps(&n, &nt, &Probes::with_budget(400), 0.5, &mut rng).unwrap();
        assert!((r.max_rel_err - delta).abs() < 1e-12);
    }

    #[test]
    fn dropped_term_detected_at_coordinate() {
        let n = coords(2, 1.0);
        let nt = apply_weights(&n, &[1.0, 0.0]).unwrap();
        let mut rng = SeedStream::new(3).rng();
        let r = empirical_eps(&n, &nt, &Probes::with_budget(100), 0.5, &mut rng).unwrap();
        assert_eq!(r.max_rel_err, 1.0);
        assert!(!r.pass);
        assert_eq!(r.argmax.unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn triangle_cut_example() {
        // edges (0,1), (1,2), (0,2)
        let f = CutFunction::complete(3);
        assert_eq!(exact_cut_eps(&f, &[1.0; 3], 0.0).unwrap().max_rel_err, 0.0);
        let r = exact_cut_eps(&f, &[1.5, 1.5, 0.0], 0.5).unwrap();
        // cuts {0}: 1.5 vs 2; {1}: 3 vs 2; {0,1}: 1.5 vs 2 → max 1/2
        assert_eq!(r.max_rel_err, 0.5);
        assert!(r.exact && r.pass);
        assert_eq!(r.probe_counts["cuts"], 4);
    }

    #[test]
    fn zero_consistent_for_positive_cut_weights() {
        let fs: Vec<Arc<dyn SetFunction>> = vec![
            Arc::new(CutFunction::graph(4, &[(0, 1, 1.0)]).unwrap()),
            Arc::new(CutFunction::graph(4, &[(2, 3, 1.0)]).unwrap()),
        ];
        assert!(zero_consistent(&fs, &[1.0, 3.0]).unwrap());
        let r = exact_set_eps(&fs, &[1.0, 1.0], 0.0).unwrap();
        assert_eq!(r.max_rel_err, 0.0);
        assert_eq!(r.probe_counts["sets"], 16);
    }

    #[test]
    fn constructed_zero_violation_reported() {
        struct Neg;
        impl SetFunction for Neg {
            fn ground_size(&self) -> usize {
                3
            }
            fn value(&self, s: &Subset) -> f64 {
                if s.contains(0) != s.contains(1) {
                    -1.0
                } else {
                    0.0
                }
            }
        }
        // F = cut(0,1) + Neg vanishes on every S, yet w_0 f_0 > 0 when 0,1 separated
        let fs: Vec<Arc<dyn SetFunction>> =
            vec![Arc::new(CutFunction::graph(3, &[(0, 1, 1.0)]).unwrap()), Arc::new(Neg)];
        let r = exact_set_eps(&fs, &[2.0, 1.0], 0.5).unwrap();
        assert!(r.zero_violation.is_some());
        assert!(!r.pass);
        assert!(!zero_consistent(&fs, &[2.0, 1.0]).unwrap());
    }

    #[test]
    fn too_large_rejected() {
        let f = CutFunction::complete(21);
        assert!(matches!(exact_cut_eps(&f, &vec![1.0; 210], 0.1), Err(Error::TooLarge(21))));
    }

    #[test]
    fn seminorm_suite_passes_on_norms_and_fails_on_nonconvex() {
        let mut rng = SeedStream::new(4).rng();
        assert!(seminorm_suite(&coords(3, 1.0), 200, &mut rng).pass);

        // symmetric but not submodular, so its extension is not convex
        struct Singletons;
        impl SetFunction for Singletons {
            fn ground_size(&self) -> usize {
                4
            }
            fn value(&self, s: &Subset) -> f64 {
                if s.len() == 1 || s.len() == 3 {
                    1.0
                } else {
                    0.0
                }
            }
        }
        let t = NormTerm::lovasz(Arc::new(Singletons)).unwrap();
        let bad = SumNorm::new(4, 1.0, vec![t]).unwrap();
        let r = seminorm_suite(&bad, 500, &mut rng);
        assert!(!r.pass);
        assert!(r.triangle > 1e-3);
        assert!(r.homogeneity < 1e-12);
    }

    #[test]
    fn cut_function_from_instance() {
        let norm = SumNorm::new(
            3,
            2.0,
            vec![
                NormTerm::GraphEdge { u: 0, v: 1, c: 3.0 },
                NormTerm::Hyperedge {
                    vertices: vec![0, 1, 2],
                    c: 4.0,
                },
            ],
        )
        .unwrap();
        let f = cut_function_of(&norm).unwrap();
        assert_eq!(f.edges()[0].c, 9.0);
        assert_eq!(f.edges()[1].c, 4.0);
        // agrees with N(1_S)^p on indicators
        for mask in 1..7u64 {
            let s = Subset::from_mask(3, mask);
            let np = norm.eval_pow_unchecked(&s.indicator());
            assert!((f.value(&s) - np).abs() < 1e-12);
        }
        let lin = SumNorm::new(1, 1.0, vec![NormTerm::Linear { a: vec![1.0] }]).unwrap();
        assert!(cut_function_of(&lin).is_err());
    }
}
