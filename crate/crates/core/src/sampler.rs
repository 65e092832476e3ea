//! Sampling from dμ(x) ∝ exp(−N(x)^p̂) for a rounded norm N.
//!
//! A hit-and-run walk produces approximately uniform points X on the unit
//! ball B_N using only evaluations of N. An independent radius λ with
//! density ∝ exp(−λ^p̂) λ^{n−1} then gives Z = λ·X/N(X), whose law is μ.
//! Substituting u = λ^p̂ turns the radial density into Gamma(n/p̂, 1).

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{pow, SumNorm};
use crate::rng::SeedStream;

/// Slack on the roundedness spot check.
const ROUNDING_SLACK: f64 = 1e-9;

/// A norm together with declared constants r‖x‖₂ ≤ N(x) ≤ R‖x‖₂.
#[derive(Clone, Debug)]
pub struct RoundedNorm {
    norm: SumNorm,
    r: f64,
    big_r: f64,
}

impl RoundedNorm {
    /// Spot-checks the declared rounding on random unit directions.
    pub fn new(norm: SumNorm, r: f64, big_r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= big_r && big_r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rounding constants must satisfy 0 < r ≤ R < ∞ (got r = {r}, R = {big_r})"
            )));
        }
        let n = norm.dim();
        let mut rng = SeedStream::new(0x5eed).child("rounding", n as u64).rng();
        for _ in 0..64 {
            let d = unit_direction(n, &mut rng);
            let ratio = norm.eval_unchecked(&d);
            if ratio < r * (1.0 - ROUNDING_SLACK) || ratio > big_r * (1.0 + ROUNDING_SLACK) {
                return Err(Error::NotRounded { r, big_r, ratio });
            }
        }
        Ok(RoundedNorm { norm, r, big_r })
    }

    pub fn norm(&self) -> &SumNorm {
        &self.norm
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn big_r(&self) -> f64 {
        self.big_r
    }
}

/// Walk parameters. `None` step counts resolve to the dimension-based defaults
/// burn_in = 50n², steps_per_sample = 10n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub burn_in: Option<usize>,
    pub steps_per_sample: Option<usize>,
    pub chord_tol: f64,
    pub seed: u64,
    pub chains: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            burn_in: None,
            steps_per_sample: None,
            chord_tol: 1e-8,
            seed: 0,
            chains: 4,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn burn_in_for(&self, n: usize) -> usize {
        self.burn_in.unwrap_or(50 * n * n)
    }

    pub fn steps_for(&self, n: usize) -> usize {
        self.steps_per_sample.unwrap_or(10 * n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chord_tol > 0.0 && self.chord_tol <= 1e-3) {
            return Err(Error::InvalidParameter(format!(
                "chord_tol {} not in (0, 1e-3]",
                self.chord_tol
            )));
        }
        if self.chains == 0 || self.burn_in == Some(0) || self.steps_per_sample == Some(0) {
            return Err(Error::InvalidParameter("sampler counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Walk bookkeeping carried with a batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WalkDiagnostics {
    pub steps: u64,
    pub chord_evals: u64,
    pub mean_chord_length: f64,
    /// Largest N over the returned walk points (≤ 1 + chord_tol).
    pub max_norm: f64,
}

/// Points with provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub points: Vec<Vec<f64>>,
    /// Exponent of the target measure; `None` for uniform points on B_N.
    pub phat: Option<f64>,
    pub config: SamplerConfig,
    pub diagnostics: WalkDiagnostics,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }
}

pub(crate) fn unit_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let d: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let len = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len > 1e-300 {
            return d.into_iter().map(|v| v / len).collect();
        }
    }
}

/// Illinois false position for g(t) = 0 on [a, b] with g(a) < 0 ≤ g(b).
fn find_crossing<F: FnMut(f64) -> f64>(
    mut g: F,
    mut a: f64,
    mut ga: f64,
    mut b: f64,
    mut gb: f64,
    tol: f64,
) -> Result<f64> {
    let mut side = 0i8;
    let mut best = (b, gb.abs());
    for _ in 0..200 {
        let mut c = (a * gb - b * ga) / (gb - ga);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let gc = g(c);
        if gc.abs() < best.1 {
            best = (c, gc.abs());
        }
        if gc.abs() <= tol {
            return Ok(c);
        }
        if gc < 0.0 {
            if side == -1 {
                gb *= 0.5;
            }
            a = c;
            ga = gc;
            side = -1;
        } else {
            if side == 1 {
                ga *= 0.5;
            }
            b = c;
            gb = gc;
            side = 1;
        }
        if b - a <= f64::EPSILON * b.abs().max(a.abs()) {
            break;
        }
    }
    if best.1 <= tol {
        Ok(best.0)
    } else {
        Err(Error::ChordFailure(best.1))
    }
}

/// Scratch state for one walker.
struct Chord<'a> {
    norm: &'a SumNorm,
    buf: Vec<f64>,
    evals: u64,
}

impl<'a> Chord<'a> {
    fn new(norm: &'a SumNorm) -> Self {
        Chord {
            norm,
            buf: vec![0.0; norm.dim()],
            evals: 0,
        }
    }

    fn at(&mut self, x: &[f64], d: &[f64], t: f64) -> f64 {
        for ((b, xi), di) in self.buf.iter_mut().zip(x).zip(d) {
            *b = xi + t * di;
        }
        self.evals += 1;
        self.norm.eval_unchecked(&self.buf)
    }

    /// Positive t with N(x + t d) = 1, given n_x = N(x) < 1 and n_d = N(d) > 0.
    fn forward(&mut self, x: &[f64], d: &[f64], nx: f64, nd: f64, tol: f64) -> Result<f64> {
        // N(x + t d) ≥ t·N(d) − N(x) ≥ 1 at t = (1 + N(x)) / N(d)
        let mut hi = (1.0 + nx) / nd;
        let mut ghi = self.at(x, d, hi) - 1.0;
        let mut grow = 0;
        while ghi < 0.0 {
            grow += 1;
            if grow > 60 {
                return Err(Error::KernelDirection);
            }
            hi *= 2.0;
            ghi = self.at(x, d, hi) - 1.0;
        }
        if ghi <= tol {
            return Ok(hi);
        }
        find_crossing(|t| self.at(x, d, t) - 1.0, 0.0, nx - 1.0, hi, ghi, tol)
    }

    fn endpoints(&mut self, x: &[f64], d: &[f64], tol: f64) -> Result<(f64, f64, f64)> {
        self.evals += 2;
        let nx = self.norm.eval_unchecked(x);
        let nd = self.norm.eval_unchecked(d);
        if !(nd > 0.0) || !nd.is_finite() {
            return Err(Error::KernelDirection);
        }
        if !(nx < 1.0) {
            return Err(Error::InvalidParameter(format!("start point has N(x) = {nx} ≥ 1")));
        }
        let up = self.forward(x, d, nx, nd, tol)?;
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        let down = self.forward(x, &neg, nx, nd, tol)?;
        Ok((-down, up, nx))
    }
}

/// Endpoints t⁻ < 0 < t⁺ of the chord of B_N through x in direction d.
pub fn chord_endpoints(norm: &SumNorm, x: &[f64], d: &[f64], tol: f64) -> Result<(f64, f64)> {
    crate::norms::check_vector(x, norm.dim())?;
    crate::norms::check_vector(d, norm.dim())?;
    let mut ch = Chord::new(norm);
    let (lo, hi, _) = ch.endpoints(x, d, tol)?;
    Ok((lo, hi))
}

fn run_chain(
    norm: &SumNorm,
    count: usize,
    burn_in: usize,
    steps: usize,
    tol: f64,
    stream: SeedStream,
) -> Result<(Vec<Vec<f64>>, WalkDiagnostics)> {
    let n = norm.dim();
    let mut rng = stream.rng();
    let mut ch = Chord::new(norm);
    let mut x = vec![0.0; n];
    let mut out = Vec::with_capacity(count);
    let mut diag = WalkDiagnostics::default();
    let mut chord_total = 0.0;
    let total = burn_in + count * steps;
    for step in 1..=total {
        let d = unit_direction(n, &mut rng);
        let (lo, hi, _) = ch.endpoints(&x, &d, tol)?;
        chord_total += hi - lo;
        let t = rng.random_range(lo..hi);
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += t * di;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("walk state became non-finite".into()));
        }
        if step > burn_in && (step - burn_in) % steps == 0 {
            // numerical drift can push a point marginally past the boundary
            let nx = norm.eval_unchecked(&x);
            ch.evals += 1;
            diag.max_norm = diag.max_norm.max(nx);
            out.push(x.clone());
        }
    }
    diag.steps = total as u64;
    diag.chord_evals = ch.evals;
    diag.mean_chord_length = chord_total / total.max(1) as f64;
    Ok((out, diag))
}

/// Approximately uniform points on B_N by hit-and-run from the origin,
/// split across independent chains with their own seed streams.
pub fn uniform_ball_walk(norm: &RoundedNorm, k: usize, cfg: &SamplerConfig) -> Result<SampleBatch> {
    cfg.validate()?;
    let n = norm.norm.dim();
    let burn = cfg.burn_in_for(n);
    let steps = cfg.steps_for(n);
    let chains = cfg.chains.min(k.max(1));
    let root = SeedStream::new(cfg.seed);
    let parts: Vec<Result<(Vec<Vec<f64>>, WalkDiagnostics)>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let share = k / chains + usize::from(c < k % chains);
            run_chain(&norm.norm, share, burn, steps, cfg.chord_tol, root.child("walk", c as u64))
        })
        .collect();
    let mut points = Vec::with_capacity(k);
    let mut diag = WalkDiagnostics::default();
    let mut chord_weighted = 0.0;
    for part in parts {
        let (pts, d) = part?;
        points.extend(pts);
        diag.steps += d.steps;
        diag.chord_evals += d.chord_evals;
        chord_weighted += d.mean_chord_length * d.steps as f64;
        diag.max_norm = diag.max_norm.max(d.max_norm);
    }
    diag.mean_chord_length = chord_weighted / diag.steps.max(1) as f64;
    let mut config = cfg.clone();
    config.burn_in = Some(burn);
    config.steps_per_sample = Some(steps);
    config.chains = chains;
    Ok(SampleBatch {
        points,
        phat: None,
        config,
        diagnostics: diag,
    })
}

fn radius_law(n: usize, phat: f64) -> Result<Gamma<f64>> {
    if !(1.0..=2.0).contains(&phat) {
        return Err(Error::InvalidParameter(format!("phat {phat} not in [1, 2]")));
    }
    Gamma::new(n as f64 / phat, 1.0)
        .map_err(|e| Error::InvalidParameter(format!("gamma law: {e}")))
}

/// Turns uniform points on B_N into draws from exp(−N(x)^p̂): Z = λ·X/N(X)
/// with λ = u^{1/p̂}, u ~ Gamma(n/p̂, 1).
pub fn radial_resample<R: Rng + ?Sized>(
    batch: &SampleBatch,
    norm: &SumNorm,
    phat: f64,
    rng: &mut R,
) -> Result<SampleBatch> {
    let n = norm.dim();
    let law = radius_law(n, phat)?;
    let mut points = Vec::with_capacity(batch.len());
    for x in &batch.points {
        let nx = norm.eval_unchecked(x);
        if !(nx > 0.0) {
            return Err(Error::ZeroNormSample);
        }
        let u: f64 = law.sample(rng);
        let lambda = u.powf(1.0 / phat);
        points.push(x.iter().map(|v| lambda * v / nx).collect());
    }
    Ok(SampleBatch {
        points,
        phat: Some(phat),
        config: batch.config.clone(),
        diagnostics: batch.diagnostics.clone(),
    })
}

/// Samples from exp(−N(x)^p̂): walk on B_N, then radial resampling.
pub fn sample_mu(norm: &RoundedNorm, phat: f64, k: usize, cfg: &SamplerConfig) -> Result<SampleBatch> {
    radius_law(norm.norm.dim(), phat)?;
    let uniform = uniform_ball_walk(norm, k, cfg)?;
    let mut rng = SeedStream::new(cfg.seed).child("radial", 0).rng();
    radial_resample(&uniform, &norm.norm, phat, &mut rng)
}

/// Exact draws from exp(−(s‖x‖₂)^p̂): uniform direction over s times a
/// Gamma radius. No walk is needed for Euclidean balls.
pub fn sample_euclidean(n: usize, scale: f64, phat: f64, k: usize, seed: u64) -> Result<SampleBatch> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale {scale} must be positive")));
    }
    let law = radius_law(n, phat)?;
    let mut rng = SeedStream::new(seed).child("euclidean", 0).rng();
    let points = (0..k)
        .map(|_| {
            let d = unit_direction(n, &mut rng);
            let lambda = law.sample(&mut rng).powf(1.0 / phat);
            d.into_iter().map(|v| lambda * v / scale).collect()
        })
        .collect();
    Ok(SampleBatch {
        points,
        phat: Some(phat),
        config: SamplerConfig::default().with_seed(seed),
        diagnostics: WalkDiagnostics::default(),
    })
}

/// Outcome of [`mean_power_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub mean: f64,
    pub expected: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

/// The mean of N(Z)^p̂ under μ is exactly n/p̂. Checks the empirical mean
/// lies within n/p̂·(1 ± 4/√(k·n)).
pub fn mean_power_check(batch: &SampleBatch, norm: &SumNorm) -> Result<MomentCheck> {
    let phat = batch
        .phat
        .ok_or_else(|| Error::InvalidParameter("batch is not radially resampled".into()))?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let k = batch.len() as f64;
    let n = norm.dim() as f64;
    let mean = batch
        .points
        .iter()
        .map(|z| pow(norm.eval_unchecked(z), phat))
        .sum::<f64>()
        / k;
    let expected = n / phat;
    let band = 4.0 / (k * n).sqrt();
    let lower = expected * (1.0 - band);
    let upper = expected * (1.0 + band);
    Ok(MomentCheck {
        mean,
        expected,
        lower,
        upper,
        pass: mean >= lower && mean <= upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::NormTerm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

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

    fn euclid(n: usize, t: f64) -> SumNorm {
        SumNorm::new(n, 1.0, vec![NormTerm::Euclidean { t }]).unwrap()
    }

    #[test]
    fn chord_examples() {
        let (lo, hi) = chord_endpoints(&euclid(2, 1.0), &[0.0, 0.0], &[1.0, 0.0], 1e-10).unwrap();
        assert!((lo + 1.0).abs() < 1e-9 && (hi - 1.0).abs() < 1e-9);
        let l1 = coords(2, 1.0);
        let (lo, hi) = chord_endpoints(&l1, &[0.5, 0.0], &[0.0, 1.0], 1e-10).unwrap();
        assert!((lo + 0.5).abs() < 1e-9 && (hi - 0.5).abs() < 1e-9);
    }

    #[test]
    fn chord_random_polytope() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 4;
        let terms = (0..9)
            .map(|_| NormTerm::Linear {
                a: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
            })
            .collect();
        let norm = SumNorm::new(n, 1.0, terms).unwrap();
        for _ in 0..50 {
            let d = unit_direction(n, &mut rng);
            let mut x = unit_direction(n, &mut rng);
            let s = rng.random_range(0.0..0.9) / norm.eval_unchecked(&x);
            x.iter_mut().for_each(|v| *v *= s);
            let (lo, hi) = chord_endpoints(&norm, &x, &d, 1e-9).unwrap();
            assert!(lo < 0.0 && hi > 0.0);
            for t in [lo, hi] {
                let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                assert!((norm.eval_unchecked(&y) - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn chord_kernel_direction_errors() {
        let edge = SumNorm::new(2, 1.0, vec![NormTerm::GraphEdge { u: 0, v: 1, c: 1.0 }]).unwrap();
        let r = chord_endpoints(&edge, &[0.0, 0.0], &[1.0, 1.0], 1e-9);
        assert!(matches!(r, Err(Error::KernelDirection)));
    }

    #[test]
    fn rounding_check_rejects_bad_constants() {
        let l1 = coords(3, 1.0);
        // ‖x‖₂ ≤ ‖x‖₁ ≤ √3‖x‖₂
        assert!(RoundedNorm::new(l1.clone(), 1.0, 3f64.sqrt()).is_ok());
        assert!(matches!(
            RoundedNorm::new(l1.clone(), 1.0, 1.1),
            Err(Error::NotRounded { .. })
        ));
        assert!(RoundedNorm::new(l1, 2.0, 1.0).is_err());
    }

    #[test]
    fn walk_points_stay_in_ball() {
        let norm = RoundedNorm::new(coords(3, 1.0), 1.0, 3f64.sqrt()).unwrap();
        let cfg = SamplerConfig {
            chord_tol: 1e-6,
            seed: 5,
            ..Default::default()
        };
        let batch = uniform_ball_walk(&norm, 500, &cfg).unwrap();
        assert_eq!(batch.len(), 500);
        for x in &batch.points {
            assert!(norm.norm().eval_unchecked(x) <= 1.0 + 1e-6);
        }
        assert!(batch.diagnostics.max_norm <= 1.0 + 1e-6);
    }

    #[test]
    fn euclidean_ball_radial_moment() {
        // uniform on the unit 3-ball: E‖X‖ = ∫r·r² dr / ∫r² dr = 3/4
        let norm = RoundedNorm::new(euclid(3, 1.0), 1.0, 1.0).unwrap();
        let cfg = SamplerConfig {
            seed: 1,
            ..Default::default()
        };
        let batch = uniform_ball_walk(&norm, 20_000, &cfg).unwrap();
        let mean = batch
            .points
            .iter()
            .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / batch.len() as f64;
        assert!((mean - 0.75).abs() < 0.02 * 0.75, "mean radius {mean}");
    }

    #[test]
    fn radial_moments_match_gamma() {
        let n = 5;
        for phat in [1.0, 2.0] {
            let norm = coords(n, 1.0);
            let rn = RoundedNorm::new(norm.clone(), 1.0, (n as f64).sqrt()).unwrap();
            let cfg = SamplerConfig {
                seed: 3,
                ..Default::default()
            };
            let batch = sample_mu(&rn, phat, 4000, &cfg).unwrap();
            let check = mean_power_check(&batch, &norm).unwrap();
            assert!(check.pass, "{check:?}");
        }
    }

    #[test]
    fn radial_rejects_zero_norm_point() {
        let norm = coords(2, 1.0);
        let batch = SampleBatch {
            points: vec![vec![0.0, 0.0]],
            phat: None,
            config: SamplerConfig::default(),
            diagnostics: WalkDiagnostics::default(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            radial_resample(&batch, &norm, 1.0, &mut rng),
            Err(Error::ZeroNormSample)
        ));
        assert!(radial_resample(&batch, &norm, 3.0, &mut rng).is_err());
    }

    #[test]
    fn identical_seed_identical_batch() {
        let rn = RoundedNorm::new(coords(3, 1.0), 1.0, 3f64.sqrt()).unwrap();
        let cfg = SamplerConfig {
            seed: 42,
            ..Default::default()
        };
        let a = sample_mu(&rn, 1.0, 200, &cfg).unwrap();
        let b = sample_mu(&rn, 1.0, 200, &cfg).unwrap();
        assert_eq!(a, b);
        let c = sample_mu(&rn, 1.0, 200, &cfg.clone().with_seed(43)).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SamplerConfig::default();
        cfg.chord_tol = 0.1;
        assert!(cfg.validate().is_err());
        cfg.chord_tol = 1e-6;
        cfg.chains = 0;
        assert!(cfg.validate().is_err());
        assert_eq!(SamplerConfig::default().burn_in_for(4), 800);
        assert_eq!(SamplerConfig::default().steps_for(4), 40);
    }
}
