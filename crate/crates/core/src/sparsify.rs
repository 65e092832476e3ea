//! Importance-sampling sparsifiers and the homotopy driver.
//!
//! Given probabilities ρ over the m terms, M indices are drawn independently
//! from ρ and term i receives weight c_i/(M·ρ_i), where c_i counts how often
//! it was drawn. This makes Σ w_i N_i(x)^p an unbiased estimate of N(x)^p.
//!
//! The homotopy driver handles norms that cannot be sampled directly. It
//! starts at N_R(x)^p = N(x)^p + R^p‖x‖₂^p, which is within a factor 2 of the
//! Euclidean norm and so can be sampled exactly, and halves the regularizer
//! scale t until it reaches ε·r. Each stage samples from the previous stage's
//! sparsifier. The regularizer is never sampled: it is carried with weight one
//! and stripped at the end.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{apply_weights, pow, root, NormTerm, SumNorm};
use crate::rng::SeedStream;
use crate::sampler::{
    mean_power_check, sample_euclidean, sample_mu, unit_direction, MomentCheck, RoundedNorm,
    SampleBatch, SamplerConfig,
};
use crate::weights::{estimate_tau, tau_sample_count, to_probabilities, ProbabilityVector, DEFAULT_C_W};

/// Accuracy of every intermediate homotopy stage.
pub const STAGE_ACCURACY: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct SparsifyConfig {
    pub epsilon: f64,
    /// Constant in front of the draw count M.
    pub c_m: f64,
    /// Constant in front of the τ sample count.
    pub c_w: f64,
    /// Overrides the τ sample count.
    pub k_tau: Option<usize>,
    /// Sampling surrogate for p > 2.
    pub surrogate: Option<SumNorm>,
    /// Declared (r, R) with r‖x‖₂ ≤ N(x) ≤ R‖x‖₂ on ker(N)^⊥.
    pub rounding: Option<(f64, f64)>,
    pub sampler: SamplerConfig,
    pub seed: u64,
    /// Fresh-seed reruns of a stage whose equivalence check fails.
    pub max_retries: usize,
    /// Gaussian probes added to the sample points in each stage check.
    pub check_probes: usize,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        SparsifyConfig {
            epsilon: 0.25,
            c_m: 0.5,
            c_w: DEFAULT_C_W,
            k_tau: None,
            surrogate: None,
            rounding: None,
            sampler: SamplerConfig::default(),
            seed: 0,
            max_retries: 3,
            check_probes: 64,
        }
    }
}

impl SparsifyConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon {} not in (0, 1)", self.epsilon)));
        }
        if !(self.c_m > 0.0 && self.c_m.is_finite()) {
            return Err(Error::InvalidParameter(format!("C_M = {} must be positive", self.c_m)));
        }
        if self.k_tau == Some(0) {
            return Err(Error::InvalidParameter("k_tau must be at least 1".into()));
        }
        self.sampler.validate()
    }

    fn tau_count(&self, n: usize, m: usize) -> usize {
        self.k_tau.unwrap_or_else(|| tau_sample_count(n, m, self.c_w))
    }
}

/// One homotopy stage (or the single stage of a direct sparsification).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    /// Regularizer scale of the sampling norm; `None` when sampled directly.
    pub sample_t: Option<f64>,
    /// Regularizer scale of the norm being sparsified.
    pub target_t: f64,
    pub accuracy: f64,
    pub samples: usize,
    pub draws: usize,
    pub support: usize,
    pub attempts: usize,
    /// max over probes of max(N_t/Ñ_t, Ñ_t/N_t).
    pub max_ratio: f64,
    pub moment: Option<MomentCheck>,
    pub evals: u64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsifierResult {
    /// Multipliers on the input norm's weights, one per term.
    pub weights: Vec<f64>,
    /// Number of draws M.
    pub draws: usize,
    pub support: Vec<usize>,
    pub stage_log: Vec<StageRecord>,
    pub seed: u64,
    pub tau: Option<Vec<f64>>,
    pub rho: Vec<f64>,
    /// Term evaluations charged to the input norm's counter during the run.
    pub evals: u64,
    /// Measured max/min of N/𝒩 over probes when a surrogate was used.
    pub equivalence_ratio: Option<f64>,
}

/// Draw count M for accuracy ε.
///
/// For p ≤ 2: ⌈C_M·n·log(n/ε)^p·ψ_n·(log n)²/ε²⌉ with ψ_n = √(log n).
/// For p > 2: ⌈C_M·((n+p)/2)^{p/2}·p²·(log(n/ε)·log n·√log n)²/ε²⌉.
/// `log n` is taken as ln max(n, 3) so that small n keep a positive count.
pub fn choose_m(n: usize, epsilon: f64, p: f64, c_m: f64) -> usize {
    let nf = n as f64;
    let ln_n = (n.max(3) as f64).ln();
    let ln_ne = (nf / epsilon).ln().max(f64::MIN_POSITIVE);
    let m = if p <= 2.0 {
        c_m * nf * ln_ne.powf(p) * ln_n.sqrt() * ln_n * ln_n / (epsilon * epsilon)
    } else {
        let inner = ln_ne * ln_n * ln_n.sqrt();
        c_m * ((nf + p) / 2.0).powf(p / 2.0) * p * p * inner * inner / (epsilon * epsilon)
    };
    m.ceil().max(1.0) as usize
}

/// Draws M indices from ρ and sets w_i = c_i/(M·ρ_i).
pub fn sample_support<R: Rng + ?Sized>(rho: &ProbabilityVector, draws: usize, rng: &mut R) -> SparsifierResult {
    let m = rho.len();
    let mut prefix = Vec::with_capacity(m);
    let mut acc = 0.0;
    for &r in &rho.rho {
        acc += r;
        prefix.push(acc);
    }
    let total = acc;
    let mut counts = vec![0usize; m];
    for _ in 0..draws {
        let u = rng.random::<f64>() * total;
        let i = prefix.partition_point(|&c| c <= u).min(m - 1);
        counts[i] += 1;
    }
    let mf = draws as f64;
    let weights: Vec<f64> = counts
        .iter()
        .zip(&rho.rho)
        .map(|(&c, &r)| if c == 0 { 0.0 } else { c as f64 / (mf * r) })
        .collect();
    let support = (0..m).filter(|&i| counts[i] > 0).collect();
    SparsifierResult {
        weights,
        draws,
        support,
        stage_log: Vec::new(),
        seed: 0,
        tau: None,
        rho: rho.rho.clone(),
        evals: 0,
        equivalence_ratio: None,
    }
}

/// τ from `batch`, then ρ, M and the sampled support.
pub fn sparsify_once(norm: &SumNorm, batch: &SampleBatch, cfg: &SparsifyConfig) -> Result<SparsifierResult> {
    cfg.validate()?;
    let before = norm.counter().get();
    let tau = estimate_tau(norm, batch, norm.p())?;
    let rho = to_probabilities(&tau)?;
    let draws = choose_m(norm.dim(), cfg.epsilon, norm.p(), cfg.c_m);
    let mut rng = SeedStream::new(cfg.seed).child("support", 0).rng();
    let mut res = sample_support(&rho, draws, &mut rng);
    res.seed = cfg.seed;
    res.tau = Some(tau.tau);
    res.evals = norm.counter().get() - before;
    Ok(res)
}

fn euclid_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// N_t(x) = (N(x)^p + t^p‖x‖₂^p)^{1/p} as a SumNorm sharing the counter of `norm`.
fn regularized(norm: &SumNorm, t: f64) -> Result<SumNorm> {
    norm.push_term(NormTerm::Euclidean { t }, 1.0)
}

/// Worst two-sided ratio between N_t and the reweighted Ñ_t over probes.
fn equivalence_ratio(norm: &SumNorm, w: &[f64], t: f64, probes: &[Vec<f64>]) -> Result<f64> {
    let sparse = apply_weights(norm, w)?;
    let p = norm.p();
    let mut worst: f64 = 1.0;
    for x in probes {
        let reg = pow(t * euclid_norm(x), p);
        let exact = root(norm.eval_pow_unchecked(x) + reg, p);
        let approx = root(sparse.eval_pow_unchecked(x) + reg, p);
        if exact > 0.0 && approx > 0.0 {
            worst = worst.max(exact / approx).max(approx / exact);
        } else if exact != approx {
            return Ok(f64::INFINITY);
        }
    }
    Ok(worst)
}

/// How a stage obtains its μ-samples.
enum Source<'a> {
    /// exp(−(s‖x‖₂)^p̂), exact.
    Euclidean(f64),
    /// exp(−Ñ_t(x)^p̂) for the previous stage's sparsifier.
    Walk { sparse: &'a [f64], t: f64 },
}

struct StageOutcome {
    weights: Vec<f64>,
    tau: Vec<f64>,
    rho: Vec<f64>,
    draws: usize,
    record: StageRecord,
}

struct Homotopy<'a> {
    norm: &'a SumNorm,
    big_r: f64,
    cfg: &'a SparsifyConfig,
    root: SeedStream,
    k: usize,
    phat: f64,
}

impl Homotopy<'_> {
    fn sample(&self, source: &Source<'_>, seed: SeedStream) -> Result<(SampleBatch, Option<MomentCheck>)> {
        let n = self.norm.dim();
        match *source {
            Source::Euclidean(scale) => {
                let batch = sample_euclidean(n, scale, self.phat, self.k, seed.seed())?;
                Ok((batch, None))
            }
            Source::Walk { sparse, t } => {
                let sampling = regularized(&apply_weights(self.norm, sparse)?, t)?;
                let p = self.norm.p();
                // Ñ_t ≥ t‖x‖₂; above, a 1/2-approximation of N_t stays below 3^{1/p}(R^p+t^p)^{1/p}
                let upper = 4.0 * root(pow(self.big_r, p) + pow(t, p), p);
                let rounded = RoundedNorm::new(sampling.clone(), t, upper)?;
                let mut scfg = self.cfg.sampler.clone();
                scfg.seed = seed.seed();
                let batch = sample_mu(&rounded, self.phat, self.k, &scfg)?;
                let moment = mean_power_check(&batch, &sampling)?;
                Ok((batch, Some(moment)))
            }
        }
    }

    fn stage(&self, index: usize, source: Source<'_>, target_t: f64, accuracy: f64) -> Result<StageOutcome> {
        let started = Instant::now();
        let before = self.norm.counter().get();
        let n = self.norm.dim();
        let draws = choose_m(n, accuracy, self.norm.p(), self.cfg.c_m);
        let threshold = 2.0 * (1.0 + accuracy);
        let attempts_allowed = self.cfg.max_retries + 1;
        let mut last_reason = String::new();
        for attempt in 0..attempts_allowed {
            let seed = self.root.child("stage", index as u64).child("attempt", attempt as u64);
            let (batch, moment) = match self.sample(&source, seed.child("sample", 0)) {
                Ok(v) => v,
                Err(e @ (Error::NotRounded { .. } | Error::ChordFailure(_) | Error::KernelDirection)) => {
                    last_reason = e.to_string();
                    continue;
                }
                Err(e) => return Err(e),
            };
            if index == 0 {
                self.check_upper_rounding(&batch)?;
            }
            if let Some(m) = &moment {
                if !m.pass {
                    log::warn!("stage {index}: moment check outside band: {m:?}");
                }
            }
            let tau = estimate_tau(self.norm, &batch, self.norm.p())?;
            let rho = to_probabilities(&tau)?;
            let mut rng = seed.child("support", 0).rng();
            let res = sample_support(&rho, draws, &mut rng);

            let mut probes = batch.points.clone();
            let mut prng = seed.child("probes", 0).rng();
            probes.extend((0..self.cfg.check_probes).map(|_| unit_direction(n, &mut prng)));
            let ratio = equivalence_ratio(self.norm, &res.weights, target_t, &probes)?;
            log::debug!(
                "stage {index} attempt {attempt}: t = {target_t:.4e}, M = {draws}, support = {}, ratio = {ratio:.4}",
                res.support.len()
            );
            if ratio <= threshold {
                let record = StageRecord {
                    stage: index,
                    sample_t: match source {
                        Source::Euclidean(_) => None,
                        Source::Walk { t, .. } => Some(t),
                    },
                    target_t,
                    accuracy,
                    samples: batch.len(),
                    draws,
                    support: res.support.len(),
                    attempts: attempt + 1,
                    max_ratio: ratio,
                    moment,
                    evals: self.norm.counter().get() - before,
                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                };
                return Ok(StageOutcome {
                    weights: res.weights,
                    tau: tau.tau,
                    rho: rho.rho,
                    draws,
                    record,
                });
            }
            last_reason = format!("equivalence ratio {ratio:.4} exceeds {threshold:.4}");
        }
        Err(Error::StageFailure {
            stage: index,
            attempts: attempts_allowed,
            reason: last_reason,
        })
    }

    /// N(x) ≤ R‖x‖₂ must hold everywhere; test it on the first stage's samples.
    fn check_upper_rounding(&self, batch: &SampleBatch) -> Result<()> {
        for x in &batch.points {
            let nx = euclid_norm(x);
            if nx == 0.0 {
                continue;
            }
            let ratio = self.norm.eval_unchecked(x) / nx;
            if ratio > self.big_r * (1.0 + 1e-9) {
                return Err(Error::NotRounded {
                    r: 0.0,
                    big_r: self.big_r,
                    ratio,
                });
            }
        }
        Ok(())
    }
}

/// Number of halvings from R down to ε·r.
pub fn halving_count(r: f64, big_r: f64, epsilon: f64) -> usize {
    let ratio = big_r / (epsilon * r);
    if ratio <= 1.0 {
        0
    } else {
        (ratio.log2() - 1e-12).ceil() as usize
    }
}

/// Sparsifies N with 1 ≤ p ≤ 2 through the homotopy N_t, t = R, R/2, …, ε·r.
///
/// Intermediate stages build 1/2-approximations. The last stage samples from
/// the sparsifier of N_{εr} and draws M = choose_m(n, ε) terms of N itself;
/// the regularizer is never part of the output.
/// The log has at most ⌈log₂(R/(εr))⌉ + 2 entries.
pub fn homotopy_sparsify(norm: &SumNorm, r: f64, big_r: f64, cfg: &SparsifyConfig) -> Result<SparsifierResult> {
    cfg.validate()?;
    if norm.is_empty() {
        return Err(Error::InvalidParameter("norm has no terms".into()));
    }
    let p = norm.p();
    if p > 2.0 {
        return Err(Error::InvalidParameter(format!(
            "homotopy needs p ≤ 2 (got {p}); use sparsify_p_power with a surrogate"
        )));
    }
    if !(r > 0.0 && r <= big_r && big_r.is_finite()) {
        return Err(Error::InvalidParameter(format!("need 0 < r ≤ R < ∞ (got {r}, {big_r})")));
    }
    let eps = cfg.epsilon;
    let n = norm.dim();
    let before = norm.counter().get();
    let driver = Homotopy {
        norm,
        big_r,
        cfg,
        root: SeedStream::new(cfg.seed),
        k: cfg.tau_count(n, norm.len() + 1),
        phat: norm.phat(),
    };

    let t_final = eps * r;
    let mut log = Vec::new();
    let first = driver.stage(0, Source::Euclidean(big_r), big_r, STAGE_ACCURACY)?;
    let mut weights = first.weights;
    log.push(first.record);
    let mut t = big_r;
    let halvings = halving_count(r, big_r, eps);
    for j in 1..=halvings {
        let next = (big_r / 2f64.powi(j as i32)).max(t_final);
        let out = driver.stage(j, Source::Walk { sparse: &weights, t }, next, STAGE_ACCURACY)?;
        weights = out.weights;
        log.push(out.record);
        t = next;
    }
    let last = driver.stage(halvings + 1, Source::Walk { sparse: &weights, t }, t_final, eps)?;
    log.push(last.record);
    let support = (0..last.weights.len()).filter(|&i| last.weights[i] > 0.0).collect();
    Ok(SparsifierResult {
        weights: last.weights,
        draws: last.draws,
        support,
        stage_log: log,
        seed: cfg.seed,
        tau: Some(last.tau),
        rho: last.rho,
        evals: norm.counter().get() - before,
        equivalence_ratio: None,
    })
}

/// Entry point for any p ≥ 1.
///
/// For p ≤ 2 this is the homotopy driver and needs `cfg.rounding`. For p > 2,
/// τ is estimated under exp(−𝒩(x)²) where 𝒩 is `cfg.surrogate` or, by
/// default, R̂‖x‖₂ with R̂ the largest probed value of N(x)/‖x‖₂.
pub fn sparsify_p_power(norm: &SumNorm, cfg: &SparsifyConfig) -> Result<SparsifierResult> {
    cfg.validate()?;
    let p = norm.p();
    if p <= 2.0 {
        let (r, big_r) = cfg.rounding.ok_or_else(|| {
            Error::InvalidParameter("p ≤ 2 needs declared rounding constants (r, R)".into())
        })?;
        return homotopy_sparsify(norm, r, big_r, cfg);
    }
    if norm.is_empty() {
        return Err(Error::InvalidParameter("norm has no terms".into()));
    }
    let started = Instant::now();
    let before = norm.counter().get();
    let n = norm.dim();
    let root_seed = SeedStream::new(cfg.seed);
    let k = cfg.tau_count(n, norm.len());

    let mut prng = root_seed.child("probes", 0).rng();
    let probes: Vec<Vec<f64>> = (0..512).map(|_| unit_direction(n, &mut prng)).collect();
    let (batch, surrogate_at): (SampleBatch, Box<dyn Fn(&[f64]) -> f64>) = match &cfg.surrogate {
        Some(sur) => {
            if sur.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: sur.dim(),
                });
            }
            let (lo, hi) = probe_range(&probes, |x| sur.eval_unchecked(x));
            if !(lo > 0.0) {
                return Err(Error::InvalidParameter("surrogate vanishes on a probe direction".into()));
            }
            let rounded = RoundedNorm::new(sur.clone(), 0.5 * lo, 2.0 * hi)?;
            let mut scfg = cfg.sampler.clone();
            scfg.seed = root_seed.child("sample", 0).seed();
            let sur2 = sur.clone();
            (sample_mu(&rounded, 2.0, k, &scfg)?, Box::new(move |x| sur2.eval_unchecked(x)))
        }
        None => {
            let (_, hi) = probe_range(&probes, |x| norm.eval_unchecked(x));
            if !(hi > 0.0) {
                return Err(Error::InvalidParameter("norm vanishes on every probe".into()));
            }
            let batch = sample_euclidean(n, hi, 2.0, k, root_seed.child("sample", 0).seed())?;
            (batch, Box::new(move |x| hi * euclid_norm(x)))
        }
    };
    let (lo, hi) = probe_range(&probes, |x| norm.eval_unchecked(x) / surrogate_at(x));
    let ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if ratio > 4.0 {
        log::warn!("surrogate equivalence ratio {ratio:.3}; sampling probabilities may be far from optimal");
    }
    let tau = estimate_tau(norm, &batch, p)?;
    let rho = to_probabilities(&tau)?;
    let draws = choose_m(n, cfg.epsilon, p, cfg.c_m);
    let mut rng = root_seed.child("support", 0).rng();
    let mut res = sample_support(&rho, draws, &mut rng);
    res.seed = cfg.seed;
    res.tau = Some(tau.tau);
    res.evals = norm.counter().get() - before;
    res.equivalence_ratio = Some(ratio);
    res.stage_log.push(StageRecord {
        stage: 0,
        sample_t: None,
        target_t: 0.0,
        accuracy: cfg.epsilon,
        samples: batch.len(),
        draws,
        support: res.support.len(),
        attempts: 1,
        max_ratio: ratio,
        moment: None,
        evals: res.evals,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    });
    Ok(res)
}

fn probe_range<F: Fn(&[f64]) -> f64>(probes: &[Vec<f64>], f: F) -> (f64, f64) {
    probes.iter().map(|x| f(x)).fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

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

    fn quick_cfg(eps: f64, seed: u64) -> SparsifyConfig {
        SparsifyConfig {
            epsilon: eps,
            k_tau: Some(300),
            sampler: SamplerConfig {
                burn_in: Some(200),
                steps_per_sample: Some(10),
                chains: 2,
                ..Default::default()
            },
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn choose_m_scaling() {
        for &(n, p) in &[(5usize, 1.0), (20, 1.5), (10, 2.0)] {
            let a = choose_m(n, 0.2, p, 0.5) as f64;
            let b = choose_m(n, 0.1, p, 0.5) as f64;
            // ε⁻² dominates; the log(n/ε) factor only grows
            assert!(b >= 4.0 * a - 4.0, "{a} {b}");
            let c = choose_m(n, 0.2, p, 1.0) as f64;
            assert!((c - 2.0 * a).abs() <= 2.0);
        }
        let m1 = choose_m(1, 0.5, 1.0, 0.5);
        assert!(m1 >= 1);
        let big = choose_m(6, 0.25, 4.0, 0.5);
        assert!(big > choose_m(6, 0.25, 2.0, 0.5));
    }

    #[test]
    fn sample_support_single_term() {
        let rho = ProbabilityVector { rho: vec![1.0] };
        let mut rng = SeedStream::new(1).rng();
        for m in [1, 7, 100] {
            let r = sample_support(&rho, m, &mut rng);
            assert_eq!(r.weights, vec![1.0]);
        }
    }

    #[test]
    fn sample_support_law_of_large_numbers() {
        let rho = ProbabilityVector { rho: vec![0.5, 0.5] };
        let mut rng = SeedStream::new(2).rng();
        let r = sample_support(&rho, 100_000, &mut rng);
        for w in &r.weights {
            assert!((w - 1.0).abs() < 0.05);
        }
        // Σ w_i ρ_i M = M
        let s: f64 = r.weights.iter().zip(&rho.rho).map(|(w, p)| w * p).sum::<f64>() * r.draws as f64;
        assert!((s - r.draws as f64).abs() < 1e-6);
    }

    #[test]
    fn sample_support_deterministic_and_bounded() {
        let rho = ProbabilityVector {
            rho: vec![0.1, 0.2, 0.3, 0.4],
        };
        let a = sample_support(&rho, 3, &mut SeedStream::new(5).rng());
        let b = sample_support(&rho, 3, &mut SeedStream::new(5).rng());
        assert_eq!(a, b);
        assert!(a.support.len() <= 3);
    }

    #[test]
    fn single_term_sparsifies_to_itself() {
        let norm = SumNorm::new(3, 1.0, vec![NormTerm::Euclidean { t: 2.0 }]).unwrap();
        let batch = sample_euclidean(3, 2.0, 1.0, 50, 1).unwrap();
        let r = sparsify_once(&norm, &batch, &quick_cfg(0.5, 1)).unwrap();
        assert_eq!(r.weights, vec![1.0]);
    }

    #[test]
    fn once_counts_k_times_m_evaluations() {
        let norm = coords(4, 1.0);
        let batch = sample_euclidean(4, 1.0, 1.0, 37, 2).unwrap();
        let r = sparsify_once(&norm, &batch, &quick_cfg(0.5, 3)).unwrap();
        assert_eq!(r.evals, 37 * 4);
    }

    #[test]
    fn homotopy_on_euclidean_term() {
        let norm = SumNorm::new(3, 1.0, vec![NormTerm::Euclidean { t: 1.5 }]).unwrap();
        let r = homotopy_sparsify(&norm, 1.5, 1.5, &quick_cfg(0.3, 4)).unwrap();
        assert!((r.weights[0] - 1.0).abs() <= 0.3);
        assert!(r.stage_log.len() <= halving_count(1.5, 1.5, 0.3) + 2);
    }

    #[test]
    fn homotopy_rejects_bad_inputs() {
        let norm = coords(2, 3.0);
        assert!(homotopy_sparsify(&norm, 1.0, 2.0, &quick_cfg(0.5, 0)).is_err());
        let norm = coords(2, 1.0);
        assert!(homotopy_sparsify(&norm, 2.0, 1.0, &quick_cfg(0.5, 0)).is_err());
        assert!(homotopy_sparsify(&norm, 1.0, 2.0, &quick_cfg(1.5, 0)).is_err());
        // ‖x‖₁ ≤ √2‖x‖₂, so R = 1 is wrong
        let r = homotopy_sparsify(&norm, 1.0, 1.0, &quick_cfg(0.5, 0));
        assert!(matches!(r, Err(Error::NotRounded { .. })), "{r:?}");
    }

    #[test]
    fn halving_schedule() {
        assert_eq!(halving_count(1.0, 8.0, 0.5), 4);
        assert_eq!(halving_count(1.0, 1.0, 0.5), 1);
        assert_eq!(halving_count(1.0, 3.0, 0.5), 3);
    }

    #[test]
    fn p_power_uniform_for_symmetric_terms() {
        let norm = coords(4, 2.0);
        let mut cfg = quick_cfg(0.5, 6);
        cfg.rounding = Some((0.999, 1.001));
        let r = sparsify_p_power(&norm, &cfg).unwrap();
        // the last stage samples from the previous sparsifier, so ρ is only roughly uniform
        for &rho in &r.rho {
            assert!(rho > 0.1 && rho < 0.45, "{:?}", r.rho);
        }
        assert_eq!(r.stage_log.len(), halving_count(0.999, 1.001, 0.5) + 2);
        let last = r.stage_log.last().unwrap();
        assert!(last.max_ratio <= 2.0 * (1.0 + 0.5));
    }

    #[test]
    fn p_power_above_two_equal_terms() {
        let t = vec![NormTerm::LpImage { rows: vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]], p: 4.0 }; 6];
        let norm = SumNorm::new(3, 4.0, t).unwrap();
        let r = sparsify_p_power(&norm, &quick_cfg(0.5, 7)).unwrap();
        for &rho in &r.rho {
            assert!((rho - 1.0 / 6.0).abs() < 1e-12);
        }
        let total: f64 = r.weights.iter().sum();
        assert!((total - 6.0).abs() < 1e-9);
        assert!(r.equivalence_ratio.unwrap() >= 1.0);
    }
}
