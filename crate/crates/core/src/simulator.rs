//! Euler–Maruyama simulation of `dX = b(X) dt + sigma(X-) dL`, its mollified
//! and cutoff variants, killed runs, the regularized ODE flow and Monte-Carlo
//! functionals built on them.
//!
//! Every path `i` draws from its own random stream `(seed, i)`; reductions
//! run in path-index order, so results do not depend on the worker count.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{convolve_drift, cutoff, mollify, norm, CoefficientField, Mollifier};
use crate::hashing::{config_hash, fmt_f64};
use crate::operator::{apply_generator, v_p, QuadratureSpec, TestFunction};
use crate::rng::stream_rng;
use crate::stable_noise::{draw_unit_increment, StableSpec};

/// Drift discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `X + h b(X)`.
    #[default]
    Explicit,
    /// `X + h b(X) / (1 + h |b(X)|)`.
    Tamed,
}

/// Which states a trajectory keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Record {
    /// Initial and terminal state.
    #[default]
    TerminalOnly,
    FullPath,
    /// Every `k`-th grid state plus the terminal one.
    Strided(usize),
}

/// Discretization and Monte-Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub step: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Simulate the field mollified at this radius.
    pub mollify_eps: Option<f64>,
    /// Simulate the field cut off at this radius (applied after mollification).
    pub cutoff_m: Option<f64>,
    /// The run fails once `ln |X|` exceeds this bound.
    pub exponent_guard: f64,
    pub record: Record,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            horizon: 1.0,
            n_paths: 1,
            seed: 0,
            scheme: Scheme::Explicit,
            mollify_eps: None,
            cutoff_m: None,
            exponent_guard: 700.0,
            record: Record::TerminalOnly,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid("sim.step", "must be positive and finite"));
        }
        if !(self.horizon >= self.step && self.horizon.is_finite()) {
            return Err(invalid("sim.horizon", "must be finite and at least one step"));
        }
        if self.n_paths == 0 {
            return Err(invalid("sim.n_paths", "must be at least 1"));
        }
        if !(self.exponent_guard > 0.0) {
            return Err(invalid("sim.exponent_guard", "must be positive"));
        }
        if let Record::Strided(0) = self.record {
            return Err(invalid("sim.record", "stride must be at least 1"));
        }
        Ok(())
    }

    /// Number of grid steps; the last one is shortened to end exactly at the horizon.
    pub fn n_steps(&self) -> usize {
        ((self.horizon / self.step) - 1e-9).ceil().max(1.0) as usize
    }

    fn time(&self, k: usize) -> f64 {
        (k as f64 * self.step).min(self.horizon)
    }

    fn steps_for(&self, t: f64) -> usize {
        (t / self.step).round() as usize
    }
}

/// Grid times and states of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// First grid time and state outside the domain, for killed runs.
    pub exited_at: Option<(f64, Vec<f64>)>,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("trajectories contain the initial state")
    }
}

/// Post-burn-in draws from long runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub dim: usize,
    pub alpha: f64,
    pub field_label: String,
    pub config_hash: String,
    pub burn_in: f64,
    pub thinning: f64,
    pub n_paths: usize,
    pub draws_per_path: usize,
    /// Chain time of each draw.
    pub times: Vec<f64>,
    /// Draws in path-major order.
    pub states: Vec<Vec<f64>>,
}

impl SampleBatch {
    /// First coordinate of every draw.
    pub fn first_coordinates(&self) -> Vec<f64> {
        self.states.iter().map(|s| s[0]).collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.states.iter().map(|s| norm(s)).collect()
    }
}

/// A field prepared for simulation: transforms applied and noise calibrated.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub field: CoefficientField,
    pub noise: StableSpec,
    pub cfg: SimConfig,
}

impl Simulator {
    pub fn new(field: &CoefficientField, cfg: &SimConfig) -> Result<Self> {
        Self::with_quadrature(field, cfg, &QuadratureSpec::default())
    }

    pub fn with_quadrature(
        field: &CoefficientField,
        cfg: &SimConfig,
        quad: &QuadratureSpec,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut f = field.clone();
        if let Some(eps) = cfg.mollify_eps {
            f = mollify(&f, &Mollifier::new(f.dim, eps)?, quad)?;
        }
        if let Some(m) = cfg.cutoff_m {
            f = cutoff(&f, m)?;
        }
        Ok(Self {
            noise: StableSpec::new(field.alpha, field.dim)?,
            field: f,
            cfg: cfg.clone(),
        })
    }

    /// Steps path `path` from `x0`, calling `visit(k, t, x)` at every grid
    /// index (including 0). Stops early when `|X| >= kill` and returns the
    /// exit time and state.
    fn run<V: FnMut(usize, f64, &[f64])>(
        &self,
        x0: &[f64],
        path: u64,
        kill: Option<f64>,
        mut visit: V,
    ) -> Result<Option<(f64, Vec<f64>)>> {
        let d = self.field.dim;
        if x0.len() != d {
            return Err(invalid("x0", format!("expected {d} coordinates")));
        }
        let cfg = &self.cfg;
        let n = cfg.n_steps();
        let alpha = self.noise.alpha;
        let mut rng = stream_rng(cfg.seed, path);
        let mut x = x0.to_vec();
        let (mut b, mut z, mut sz) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        visit(0, 0.0, &x);
        let full = self.noise.step_factor(cfg.step);
        for k in 1..=n {
            let t = cfg.time(k);
            let h = t - cfg.time(k - 1);
            let factor = if k == n { self.noise.step_factor(h) } else { full };
            self.field.drift_into(&x, &mut b);
            let scale = match cfg.scheme {
                Scheme::Explicit => h,
                Scheme::Tamed => h / (1.0 + h * norm(&b)),
            };
            if !self.field.deterministic {
                draw_unit_increment(alpha, &mut rng, &mut z);
                z.iter_mut().for_each(|v| *v *= factor);
                self.field.sigma_value(&x).apply(&z, &mut sz);
            }
            for i in 0..d {
                x[i] += scale * b[i] + sz[i];
            }
            let r = norm(&x);
            if !r.is_finite() || r.ln() > cfg.exponent_guard {
                return Err(Error::NumericGuard { step: k, time: t });
            }
            visit(k, t, &x);
            if kill.is_some_and(|big_r| r >= big_r) {
                return Ok(Some((t, x)));
            }
        }
        Ok(None)
    }

    fn recorded(&self, x0: &[f64], path: u64, kill: Option<f64>) -> Result<Trajectory> {
        let n = self.cfg.n_steps();
        let keep = |k: usize| match self.cfg.record {
            Record::FullPath => true,
            Record::TerminalOnly => k == 0,
            Record::Strided(s) => k % s == 0,
        };
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut last = (0usize, 0.0, x0.to_vec());
        let exited = self.run(x0, path, kill, |k, t, x| {
            if keep(k) {
                times.push(t);
                states.push(x.to_vec());
            }
            last = (k, t, x.to_vec());
        })?;
        let (k, t, x) = last;
        if !keep(k) && (k == n || exited.is_some()) {
            times.push(t);
            states.push(x);
        }
        Ok(Trajectory {
            times,
            states,
            exited_at: exited,
        })
    }

    /// Path `path` from `x0` on the uniform grid.
    pub fn path(&self, x0: &[f64], path: u64) -> Result<Trajectory> {
        self.recorded(x0, path, None)
    }

    /// `n_paths` independent paths.
    pub fn paths(&self, x0: &[f64]) -> Result<Vec<Trajectory>> {
        (0..self.cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| self.path(x0, i))
            .collect()
    }

    /// Path truncated at the first grid time with `|X| >= domain_radius`.
    pub fn killed_path(&self, x0: &[f64], domain_radius: f64, path: u64) -> Result<Trajectory> {
        if !(norm(x0) < domain_radius) {
            return Err(invalid("x0", "must lie inside the domain"));
        }
        self.recorded(x0, path, Some(domain_radius))
    }

    /// Terminal states of all paths.
    pub fn terminal_states(&self, x0: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut last = Vec::new();
                self.run(x0, i, None, |_, _, x| last = x.to_vec())?;
                Ok(last)
            })
            .collect()
    }
}

/// One path (stream 0) of the configured field from `x0`.
pub fn euler_maruyama(field: &CoefficientField, x0: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    Simulator::new(field, cfg)?.path(x0, 0)
}

/// [`sample_invariant_from`] started at the origin.
pub fn sample_invariant(
    field: &CoefficientField,
    cfg: &SimConfig,
    burn_in: f64,
    thinning: f64,
) -> Result<SampleBatch> {
    sample_invariant_from(field, &vec![0.0; field.dim], cfg, burn_in, thinning)
}

/// Runs `n_paths` chains over `[0, horizon]` and keeps the states at
/// `burn_in + j thinning`, `j = 0, 1, ...`.
pub fn sample_invariant_from(
    field: &CoefficientField,
    x0: &[f64],
    cfg: &SimConfig,
    burn_in: f64,
    thinning: f64,
) -> Result<SampleBatch> {
    let sim = Simulator::new(field, cfg)?;
    if !(burn_in >= 0.0 && thinning > 0.0) {
        return Err(invalid("thinning", "burn-in must be nonnegative and thinning positive"));
    }
    let nb = cfg.steps_for(burn_in);
    let nt = cfg.steps_for(thinning).max(1);
    let n = cfg.n_steps();
    if nb + nt > n {
        return Err(invalid(
            "sim.horizon",
            "must cover the burn-in plus at least one thinning interval",
        ));
    }
    let draws = (n - nb) / nt + 1;
    let chains: Vec<Vec<(f64, Vec<f64>)>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::with_capacity(draws);
            sim.run(x0, i, None, |k, t, x| {
                if k >= nb && (k - nb) % nt == 0 {
                    out.push((t, x.to_vec()));
                }
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let (times, states) = chains.into_iter().flatten().unzip();
    Ok(SampleBatch {
        dim: field.dim,
        alpha: field.alpha,
        field_label: sim.field.label.clone(),
        config_hash: config_hash(&(cfg, &sim.field.label, x0, burn_in, thinning)),
        burn_in,
        thinning,
        n_paths: cfg.n_paths,
        draws_per_path: draws,
        times,
        states,
    })
}

/// Step-doubling tolerance of [`theta_flow`], relative to `1 + |theta|`.
const FLOW_TOL: f64 = 1e-9;
/// Maximal number of step halvings before giving up.
const FLOW_HALVINGS: u32 = 12;

/// Regularized flow `d theta / ds = (b * phi_{s^{1/alpha}})(theta)`,
/// `theta_0 = x`, integrated to time `t` by classic RK4 with step
/// `min(t/50, 0.01)` and step-doubling error control; `moll` supplies the
/// bump, rescaled to radius `s^{1/alpha}` at time `s`.
pub fn theta_flow(
    field: &CoefficientField,
    x: &[f64],
    t: f64,
    moll: &Mollifier,
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t", "must be finite and nonnegative"));
    }
    if moll.dim != field.dim || x.len() != field.dim {
        return Err(invalid("x", "dimension mismatch"));
    }
    if t == 0.0 {
        return Ok(x.to_vec());
    }
    let nodes = moll.nodes(quad);
    let d = field.dim;
    let inv_alpha = 1.0 / field.alpha;
    let rhs = |s: f64, y: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        convolve_drift(field, &nodes, s.max(0.0).powf(inv_alpha), y, &mut out);
        out
    };
    let axpy = |y: &[f64], a: f64, k: &[f64]| -> Vec<f64> {
        y.iter().zip(k).map(|(yi, ki)| yi + a * ki).collect()
    };
    let rk4 = |s: f64, y: &[f64], h: f64| -> Vec<f64> {
        let k1 = rhs(s, y);
        let k2 = rhs(s + h / 2.0, &axpy(y, h / 2.0, &k1));
        let k3 = rhs(s + h / 2.0, &axpy(y, h / 2.0, &k2));
        let k4 = rhs(s + h, &axpy(y, h, &k3));
        (0..d)
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    };
    let h0 = (t / 50.0).min(0.01);
    let floor = h0 / 2f64.powi(FLOW_HALVINGS as i32);
    let mut y = x.to_vec();
    let mut s = 0.0;
    while s < t {
        let mut h = h0.min(t - s);
        loop {
            let whole = rk4(s, &y, h);
            let half = rk4(s + h / 2.0, &rk4(s, &y, h / 2.0), h / 2.0);
            let err = norm(&whole.iter().zip(&half).map(|(a, b)| a - b).collect::<Vec<_>>());
            if err <= FLOW_TOL * (1.0 + norm(&half)) && half.iter().all(|v| v.is_finite()) {
                y = half;
                break;
            }
            if h / 2.0 < floor {
                return Err(Error::StepControl { time: s });
            }
            h /= 2.0;
        }
        s = if t - (s + h) < 1e-12 * t { t } else { s + h };
    }
    Ok(y)
}

/// Killed path (stream 0) for the ball `B_R`.
pub fn killed_run(
    field: &CoefficientField,
    x0: &[f64],
    domain_radius: f64,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    Simulator::new(field, cfg)?.killed_path(x0, domain_radius, 0)
}

/// Fraction of paths still inside `B_R` at the horizon.
pub fn survival_fraction(
    field: &CoefficientField,
    x0: &[f64],
    domain_radius: f64,
    cfg: &SimConfig,
) -> Result<Proportion> {
    let sim = Simulator::new(field, &SimConfig { record: Record::TerminalOnly, ..cfg.clone() })?;
    let alive = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| Ok(sim.killed_path(x0, domain_radius, i)?.exited_at.is_none()))
        .collect::<Result<Vec<bool>>>()?;
    Ok(Proportion::new(alive.iter().filter(|a| **a).count(), alive.len()))
}

/// Binomial frequency with its Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Proportion {
    pub fn new(successes: usize, trials: usize) -> Self {
        let (lo, hi) = wilson_interval(successes, trials);
        Self {
            successes,
            trials,
            estimate: successes as f64 / trials as f64,
            ci_low: lo,
            ci_high: hi,
        }
    }
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval at 95% for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if k == 0.0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Frequency of `{X_t in B_r(y0)} and {t < tau}` with `tau` the first grid
/// exit time from `B_R`; `t = cfg.horizon`.
pub fn hitting_probability(
    field: &CoefficientField,
    x0: &[f64],
    y0: &[f64],
    r: f64,
    domain_radius: f64,
    cfg: &SimConfig,
) -> Result<Proportion> {
    if !(norm(x0) < domain_radius && norm(y0) + r < domain_radius) {
        return Err(invalid("domain_radius", "need |x0| < R and |y0| + r < R"));
    }
    let sim = Simulator::new(field, &SimConfig { record: Record::TerminalOnly, ..cfg.clone() })?;
    let hits = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let tr = sim.killed_path(x0, domain_radius, i)?;
            let end = tr.terminal();
            let dist = norm(&end.iter().zip(y0).map(|(a, b)| a - b).collect::<Vec<_>>());
            Ok(tr.exited_at.is_none() && dist < r)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(Proportion::new(hits.iter().filter(|h| **h).count(), hits.len()))
}

/// Monte-Carlo estimate of `E V_p(X_t)` with a bootstrap 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub time: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Bootstrap resamples used by [`moment_curve`].
pub const BOOTSTRAP_RESAMPLES: usize = 400;

/// `E V_p(X_t(x0))` at each requested time (rounded to the grid).
pub fn moment_curve(
    field: &CoefficientField,
    x0: &[f64],
    p: f64,
    times: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<MomentPoint>> {
    if !(p > 0.0 && p < field.alpha) {
        return Err(invalid(
            "p",
            format!("moments of order p >= alpha = {} are infinite", field.alpha),
        ));
    }
    if times.iter().any(|&t| !(t >= 0.0 && t <= cfg.horizon * (1.0 + 1e-12))) {
        return Err(invalid("times", "must lie in [0, horizon]"));
    }
    let sim = Simulator::new(field, cfg)?;
    let idx: Vec<usize> = times.iter().map(|&t| cfg.steps_for(t).min(cfg.n_steps())).collect();
    let values: Vec<Vec<f64>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; idx.len()];
            sim.run(x0, i, None, |k, _, x| {
                let v = v_p(x, p);
                for (o, &want) in out.iter_mut().zip(&idx) {
                    if want == k {
                        *o = v;
                    }
                }
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let n = values.len();
    Ok(times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let col: Vec<f64> = values.iter().map(|v| v[j]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let (lo, hi) = bootstrap_mean_ci(&col, cfg.seed, j as u64);
            MomentPoint {
                time: t,
                estimate: mean,
                ci_low: lo.min(mean),
                ci_high: hi.max(mean),
            }
        })
        .collect())
}

/// Percentile bootstrap 95% interval of the mean.
pub fn bootstrap_mean_ci(xs: &[f64], seed: u64, stream: u64) -> (f64, f64) {
    let n = xs.len();
    // Streams from the top of the range never collide with path streams.
    let mut rng = stream_rng(seed, u64::MAX - stream);
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let at = |q: f64| means[((q * (BOOTSTRAP_RESAMPLES - 1) as f64).round()) as usize];
    (at(0.025), at(0.975))
}

/// Finite-difference semigroup derivative against the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCheck {
    /// `(E f(X_delta) - f(x)) / delta` over one Euler step.
    pub finite_difference: f64,
    /// Standard error of `finite_difference`.
    pub standard_error: f64,
    /// `L f(x)` by quadrature.
    pub operator: f64,
    pub operator_error: f64,
    /// `|finite_difference - operator| / |operator|`.
    pub discrepancy: f64,
}

/// Antithetic pairs per random stream in [`generator_consistency`].
const PAIRS_PER_STREAM: usize = 8192;

/// Compares one Euler step of size `delta` from `x` (averaged over `n`
/// draws in antithetic pairs) with `L f(x)`.
pub fn generator_consistency<F: TestFunction + Sync + ?Sized>(
    field: &CoefficientField,
    f: &F,
    x: &[f64],
    delta: f64,
    n: usize,
    quad: &QuadratureSpec,
    seed: u64,
) -> Result<GeneratorCheck> {
    if !(delta > 0.0) || n < 2 {
        return Err(invalid("delta", "need delta > 0 and at least two draws"));
    }
    let d = field.dim;
    let noise = StableSpec::new(field.alpha, d)?;
    let factor = noise.step_factor(delta);
    let b = field.drift(x);
    let sigma = field.sigma_value(x);
    let fx = f.value(x);
    let pairs = n / 2;
    let streams = pairs.div_ceil(PAIRS_PER_STREAM);
    let sums: Vec<(f64, f64)> = (0..streams)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, s as u64);
            let count = PAIRS_PER_STREAM.min(pairs - s * PAIRS_PER_STREAM);
            let (mut z, mut sz) = (vec![0.0; d], vec![0.0; d]);
            let (mut y1, mut y2) = (vec![0.0; d], vec![0.0; d]);
            let (mut sum, mut sum2) = (0.0, 0.0);
            for _ in 0..count {
                draw_unit_increment(field.alpha, &mut rng, &mut z);
                z.iter_mut().for_each(|v| *v *= factor);
                sigma.apply(&z, &mut sz);
                for i in 0..d {
                    y1[i] = x[i] + delta * b[i] + sz[i];
                    y2[i] = x[i] + delta * b[i] - sz[i];
                }
                let v = 0.5 * (f.value(&y1) + f.value(&y2)) - fx;
                sum += v;
                sum2 += v * v;
            }
            (sum, sum2)
        })
        .collect();
    let (sum, sum2) = sums.iter().fold((0.0, 0.0), |a, s| (a.0 + s.0, a.1 + s.1));
    let m = pairs as f64;
    let mean = sum / m;
    let var = (sum2 / m - mean * mean).max(0.0);
    let op = apply_generator(field, f, x, quad)?;
    let fd = mean / delta;
    let diff = (fd - op.value).abs();
    Ok(GeneratorCheck {
        finite_difference: fd,
        standard_error: (var / m).sqrt() / delta,
        operator: op.value,
        operator_error: op.error,
        discrepancy: if op.value != 0.0 { diff / op.value.abs() } else { diff },
    })
}

/// CSV with a `# config_hash=...` comment line, then `t,x_1,...,x_d` rows.
pub fn write_csv<W: Write>(
    mut w: W,
    dim: usize,
    hash: &str,
    rows: impl IntoIterator<Item = (f64, Vec<f64>)>,
) -> io::Result<()> {
    writeln!(w, "# config_hash={hash}")?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=dim).map(|i| format!("x_{i}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (t, x) in rows {
        let cols: Vec<String> = std::iter::once(fmt_f64(t))
            .chain(x.iter().map(|v| fmt_f64(*v)))
            .collect();
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}

/// One JSON object per row: `{"config_hash", "t", "x"}`.
pub fn write_ndjson<W: Write>(
    mut w: W,
    hash: &str,
    rows: impl IntoIterator<Item = (f64, Vec<f64>)>,
) -> io::Result<()> {
    for (t, x) in rows {
        let xs: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(
            w,
            "{{\"config_hash\":\"{hash}\",\"t\":{},\"x\":[{}]}}",
            fmt_f64(t),
            xs.join(",")
        )?;
    }
    Ok(())
}

impl SampleBatch {
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        write_csv(
            w,
            self.dim,
            &self.config_hash,
            self.times.iter().copied().zip(self.states.iter().cloned()),
        )
    }

    pub fn write_ndjson<W: Write>(&self, w: W) -> io::Result<()> {
        write_ndjson(
            w,
            &self.config_hash,
            self.times.iter().copied().zip(self.states.iter().cloned()),
        )
    }
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, w: W, hash: &str) -> io::Result<()> {
        let dim = self.states.first().map_or(0, |s| s.len());
        write_csv(w, dim, hash, self.times.iter().copied().zip(self.states.iter().cloned()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{example_exp, SigmaValue};

    fn linear(sign: f64) -> CoefficientField {
        CoefficientField::deterministic(1.5, 1, move |x, o| o[0] = sign * x[0]).unwrap()
    }

    fn cfg(step: f64, horizon: f64) -> SimConfig {
        SimConfig {
            step,
            horizon,
            ..SimConfig::default()
        }
    }

    #[test]
    fn frozen_without_coefficients() {
        let f = CoefficientField::deterministic(1.5, 2, |_, o| o.fill(0.0)).unwrap();
        let c = SimConfig {
            record: Record::FullPath,
            ..cfg(0.1, 1.0)
        };
        let tr = euler_maruyama(&f, &[1.0, -2.0], &c).unwrap();
        assert_eq!(tr.times.len(), 11);
        assert_eq!(tr.times[0], 0.0);
        assert!(tr.states.iter().all(|s| s == &vec![1.0, -2.0]));
    }

    #[test]
    fn linear_recursion() {
        let tr = euler_maruyama(&linear(-1.0), &[2.0], &cfg(1e-3, 1.0)).unwrap();
        let exact = 2.0 * (1.0 - 1e-3f64).powi(1000);
        assert!((tr.terminal()[0] - exact).abs() < 1e-12);
        assert!((tr.terminal()[0] / (2.0 * (-1.0f64).exp()) - 1.0).abs() < 1e-3);
        assert_eq!(tr.states.len(), 2);
    }

    #[test]
    fn explicit_blows_up_tamed_survives() {
        let f = example_exp(1, 1.5, 0.8).unwrap();
        let c = SimConfig {
            scheme: Scheme::Explicit,
            seed: 3,
            ..cfg(1e-3, 0.05)
        };
        // Direct iteration of the drift recursion overflows within a few steps.
        let mut x: f64 = 8.0;
        let mut blown = None;
        for k in 1..=50 {
            x += 1e-3 * (-x * x.abs().exp());
            if !x.is_finite() || x.abs().ln() > 700.0 {
                blown = Some(k);
                break;
            }
        }
        assert!(blown.is_some());
        match euler_maruyama(&f, &[8.0], &c) {
            Err(Error::NumericGuard { step, .. }) => assert!(step <= blown.unwrap() + 1),
            other => panic!("expected guard, got {other:?}"),
        }
        let tamed = SimConfig {
            scheme: Scheme::Tamed,
            ..c
        };
        let tr = euler_maruyama(&f, &[8.0], &tamed).unwrap();
        assert!(tr.terminal()[0].is_finite());
    }

    #[test]
    fn contraction_batch() {
        let c = SimConfig {
            n_paths: 3,
            ..cfg(1e-2, 12.0)
        };
        let b = sample_invariant_from(&linear(-1.0), &[5.0], &c, 10.0, 0.5).unwrap();
        assert_eq!(b.states.len(), 3 * 5);
        for s in &b.states {
            assert!(s[0].abs() <= 5.0 * (-10.0f64 * 0.99).exp());
        }
        assert_eq!(b.config_hash, sample_invariant_from(&linear(-1.0), &[5.0], &c, 10.0, 0.5).unwrap().config_hash);
        assert!(sample_invariant_from(&linear(-1.0), &[5.0], &c, 12.0, 0.5).is_err());
    }

    #[test]
    fn exit_of_expanding_recursion() {
        let c = cfg(0.1, 10.0);
        let tr = killed_run(&linear(1.0), &[1.0], 2.0, &c).unwrap();
        // 1.1^k >= 2 first at k = 8.
        let (t, x) = tr.exited_at.clone().unwrap();
        assert!((t - 0.8).abs() < 1e-12);
        assert!((x[0] - 1.1f64.powi(8)).abs() < 1e-12);
        assert!(killed_run(&linear(-1.0), &[1.0], 2.0, &c).unwrap().exited_at.is_none());
    }

    #[test]
    fn flow_of_linear_drift() {
        let moll = Mollifier::new(1, 0.5).unwrap();
        let y = theta_flow(&linear(-1.0), &[3.0], 0.5, &moll, &QuadratureSpec::default()).unwrap();
        assert!((y[0] - 3.0 * (-0.5f64).exp()).abs() < 1e-8);
        let zero = CoefficientField::deterministic(1.5, 2, |_, o| o.fill(0.0)).unwrap();
        let m2 = Mollifier::new(2, 0.5).unwrap();
        assert_eq!(theta_flow(&zero, &[1.0, 2.0], 0.7, &m2, &QuadratureSpec::default()).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn wilson_edges() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
    }

    #[test]
    fn deterministic_moment_curve() {
        let c = SimConfig {
            n_paths: 4,
            ..cfg(1e-4, 1.0)
        };
        let f = CoefficientField::deterministic(1.5, 1, |x, o| o[0] = -x[0]).unwrap();
        let pts = moment_curve(&f, &[3.0], 1.0, &[0.0, 0.5, 1.0], &c).unwrap();
        for p in pts {
            let exact = (1.0 + 9.0 * (-2.0 * p.time).exp()).sqrt();
            assert!((p.estimate - exact).abs() < 1e-3 * exact, "{p:?}");
            assert!(p.ci_low <= p.estimate && p.estimate <= p.ci_high);
        }
        assert!(moment_curve(&f, &[3.0], 1.5, &[0.5], &c).is_err());
    }

    #[test]
    fn constant_test_function() {
        let f = CoefficientField::new(1.5, 1, |_, o| o[0] = 0.0, |_| SigmaValue::Scalar(1.0)).unwrap();
        let g = generator_consistency(&f, &|_: &[f64]| 2.0, &[0.3], 1e-3, 1000, &QuadratureSpec::default(), 1).unwrap();
        assert_eq!(g.finite_difference, 0.0);
        assert!(g.operator.abs() < 1e-12);
    }

    #[test]
    fn paths_are_reproducible() {
        let f = CoefficientField::pure_noise(1.2, 2).unwrap();
        let c = SimConfig {
            n_paths: 5,
            seed: 9,
            record: Record::Strided(7),
            ..cfg(0.01, 0.5)
        };
        let sim = Simulator::new(&f, &c).unwrap();
        let a = sim.paths(&[0.0, 0.0]).unwrap();
        let b = sim.paths(&[0.0, 0.0]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert_eq!(*a[0].times.last().unwrap(), 0.5);
        let mut buf = Vec::new();
        a[0].write_csv(&mut buf, "abc").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# config_hash=abc\nt,x_1,x_2\n"));
    }
}
