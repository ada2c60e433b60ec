//! Distribution-matching and ergodicity diagnostics: target CDFs by
//! quadrature, Kolmogorov–Smirnov distances, Hill tail indices, heat-kernel
//! shape checks and ergodic averages.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};
use crate::fields::{CoefficientField, Mollifier, ScalarFn, TargetSpec};
use crate::hashing::{config_hash, fmt_f64};
use crate::operator::QuadratureSpec;
use crate::quadrature::{gk15, integrate, integrate_to_infinity, sphere_area, Tolerance};
use crate::simulator::{theta_flow, wilson_interval, MomentPoint, SampleBatch, SimConfig, Simulator, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

/// Two-sided 95% Kolmogorov quantile.
pub const KS_C95: f64 = 1.358;

/// Default number of equal-mass bins for heat-kernel checks.
pub const HK_BINS: usize = 48;

/// Default comparability band for heat-kernel checks.
pub const HK_C_BAND: f64 = 25.0;

/// Cell width of the cumulative table in the `s = asinh(x)` variable.
const CELL: f64 = 0.02;
/// Number of cells on each side; the table ends near `|x| = 10^8`.
const HALF_CELLS: usize = 955;

/// Whether a CDF is over the real line or over the radius `|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdfKind {
    Line,
    Radial,
}

/// CDF of `e^{-U}/Z` (d = 1) or of `|X|` under it (isotropic, d >= 2),
/// tabulated on a grid uniform in `asinh`.
#[derive(Clone)]
pub struct TargetCdf {
    pub kind: CdfKind,
    pub dim: usize,
    /// Normalizer `Z = int e^{-U}`.
    pub z: f64,
    pub z_error: f64,
    potential: ScalarFn,
    shift: f64,
    s_lo: f64,
    /// Unnormalized mass below each grid node.
    cum: Vec<f64>,
    total: f64,
    tol: Tolerance,
    max_sub: usize,
}

impl std::fmt::Debug for TargetCdf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetCdf")
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("z", &self.z)
            .field("z_error", &self.z_error)
            .finish()
    }
}

/// Builds the CDF evaluator of a target.
pub fn target_cdf(target: &TargetSpec, quad: &QuadratureSpec) -> Result<TargetCdf> {
    let kind = if target.dim == 1 {
        CdfKind::Line
    } else if target.isotropic {
        CdfKind::Radial
    } else {
        return Err(invalid(
            "target",
            "distribution checks in d >= 2 need an isotropic target",
        ));
    };
    target.check_tail().map_err(|e| match e {
        Error::NonIntegrable(_) => e,
        other => Error::NonIntegrable(other.to_string()),
    })?;
    let potential = target.potential_fn();
    let origin = vec![0.0; target.dim];
    let mut shift = potential(&origin);
    if !shift.is_finite() {
        let mut e1 = origin.clone();
        e1[0] = 1.0;
        shift = potential(&e1);
    }
    if !shift.is_finite() {
        return Err(Error::NonIntegrable("U is not finite near the origin".into()));
    }
    let tol = Tolerance {
        abs: 1e-15,
        rel: quad.rel_tol,
    };
    let mut cdf = TargetCdf {
        kind,
        dim: target.dim,
        z: f64::NAN,
        z_error: 0.0,
        potential,
        shift,
        s_lo: match kind {
            CdfKind::Line => -(HALF_CELLS as f64) * CELL,
            CdfKind::Radial => 0.0,
        },
        cum: Vec::new(),
        total: 0.0,
        tol,
        max_sub: quad.max_subdivisions,
    };
    let n_cells = match kind {
        CdfKind::Line => 2 * HALF_CELLS,
        CdfKind::Radial => HALF_CELLS,
    };
    let mut err = 0.0;
    let mut acc = match kind {
        CdfKind::Line => {
            let x_far = cdf.s_lo.sinh().abs();
            let e = cdf.tail_mass(x_far, -1.0)?;
            err += e.1;
            e.0
        }
        CdfKind::Radial => 0.0,
    };
    cdf.cum.reserve(n_cells + 1);
    cdf.cum.push(acc);
    for i in 0..n_cells {
        let a = cdf.node(i);
        let b = cdf.node(i + 1);
        let g = |s: f64| cdf.density_s(s);
        let est = integrate(g, a, b, &[], tol, cdf.max_sub).into_result()?;
        acc += est.value;
        err += est.error;
        cdf.cum.push(acc);
    }
    let x_far = cdf.node(n_cells).sinh();
    let upper = cdf.tail_mass(x_far, 1.0)?;
    cdf.total = acc + upper.0;
    err += upper.1;
    if !(cdf.total > 0.0 && cdf.total.is_finite()) {
        return Err(Error::NonIntegrable(format!(
            "normalizer quadrature returned {}",
            cdf.total
        )));
    }
    let scale = (-shift).exp();
    cdf.z = cdf.total * scale;
    cdf.z_error = err * scale;
    Ok(cdf)
}

impl TargetCdf {
    fn node(&self, i: usize) -> f64 {
        self.s_lo + i as f64 * CELL
    }

    fn s_hi(&self) -> f64 {
        self.node(self.cum.len() - 1)
    }

    fn u_at(&self, v: f64) -> f64 {
        match self.kind {
            CdfKind::Line => (self.potential)(&[v]),
            CdfKind::Radial => {
                let mut x = vec![0.0; self.dim];
                x[0] = v;
                (self.potential)(&x)
            }
        }
    }

    /// Unnormalized density in the original variable (`x` or `r`).
    fn density(&self, v: f64) -> f64 {
        let base = (-(self.u_at(v) - self.shift)).exp();
        match self.kind {
            CdfKind::Line => base,
            CdfKind::Radial => sphere_area(self.dim) * v.abs().powi(self.dim as i32 - 1) * base,
        }
    }

    fn density_s(&self, s: f64) -> f64 {
        self.density(s.sinh()) * s.cosh()
    }

    /// Unnormalized mass of `{sign * v > x}` for `x > 0`, with its error.
    fn tail_mass(&self, x: f64, sign: f64) -> Result<(f64, f64)> {
        let f = |v: f64| self.density(sign * v);
        let est = integrate_to_infinity(f, x, &[], 2.0 * x, self.tol, self.max_sub).into_result()?;
        Ok((est.value, est.error))
    }

    /// Normalized density `e^{-U}/Z` (line) or of the radius (radial).
    pub fn pdf(&self, v: f64) -> f64 {
        if self.kind == CdfKind::Radial && v < 0.0 {
            return 0.0;
        }
        self.density(v) / self.total
    }

    /// `P(X <= v)` (line) or `P(|X| <= v)` (radial), in `[0, 1]`.
    pub fn cdf(&self, v: f64) -> f64 {
        if v.is_nan() {
            return f64::NAN;
        }
        let v = match self.kind {
            CdfKind::Radial if v <= 0.0 => return 0.0,
            _ => v,
        };
        let s = v.asinh();
        let mass = if s < self.s_lo {
            // Only reachable on the line.
            self.tail_mass(-v, -1.0).map(|m| m.0).unwrap_or(0.0).min(self.cum[0])
        } else if s >= self.s_hi() {
            (self.total - self.tail_mass(v, 1.0).map(|m| m.0).unwrap_or(0.0)).max(self.cum[self.cum.len() - 1])
        } else {
            let i = (((s - self.s_lo) / CELL).floor() as usize).min(self.cum.len() - 2);
            let a = self.node(i);
            let part = if s > a {
                gk15(&mut |t| self.density_s(t), a, s).value
            } else {
                0.0
            };
            (self.cum[i] + part).clamp(self.cum[i], self.cum[i + 1])
        };
        (mass / self.total).clamp(0.0, 1.0)
    }

    /// Numerical inverse of [`TargetCdf::cdf`] by bisection in `asinh(v)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("p", "quantile level must lie in (0, 1)"));
        }
        let target = p * self.total;
        let last = self.cum.len() - 1;
        let (mut lo, mut hi) = if target < self.cum[0] {
            (self.s_lo - 60.0, self.s_lo)
        } else if target >= self.cum[last] {
            (self.s_hi(), self.s_hi() + 60.0)
        } else {
            let i = self.cum.partition_point(|&c| c <= target) - 1;
            (self.node(i), self.node(i + 1))
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid.sinh()) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((0.5 * (lo + hi)).sinh())
    }

    /// Expectation of a bounded `f` of `x` (line) or `r` (radial) under the target.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let g = |s: f64| {
            let v = s.sinh();
            f(v) * self.density(v) * s.cosh()
        };
        let tol = Tolerance {
            abs: self.tol.abs,
            rel: self.tol.rel,
        };
        let a = self.s_lo;
        let b = self.s_hi();
        let mut acc = 0.0;
        let n = self.cum.len() - 1;
        for i in 0..n {
            let (lo, hi) = (self.node(i), self.node(i + 1));
            acc += integrate(g, lo, hi, &[], tol, self.max_sub).into_result()?.value;
        }
        let x_hi = b.sinh();
        acc += integrate_to_infinity(|v| f(v) * self.density(v), x_hi, &[], 2.0 * x_hi, tol, self.max_sub)
            .into_result()?
            .value;
        if self.kind == CdfKind::Line {
            let x_lo = a.sinh().abs();
            acc += integrate_to_infinity(|v| f(-v) * self.density(-v), x_lo, &[], 2.0 * x_lo, tol, self.max_sub)
                .into_result()?
                .value;
        }
        Ok(acc / self.total)
    }

    /// Reduces a batch to the scalar this CDF describes.
    pub fn project(&self, batch: &SampleBatch) -> Vec<f64> {
        match self.kind {
            CdfKind::Line => batch.first_coordinates(),
            CdfKind::Radial => batch.radii(),
        }
    }
}

/// One-sample KS statistic against a CDF with its 95% null band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub null_band: f64,
    pub n: usize,
    pub m: Option<usize>,
    pub within_band: bool,
}

/// 95% two-sided Kolmogorov band for `n` draws (Stephens' correction).
pub fn ks_null_band(n: usize) -> f64 {
    let r = (n as f64).sqrt();
    KS_C95 / (r + 0.12 + 0.11 / r)
}

/// 95% band for the two-sample statistic.
pub fn ks_two_sample_band(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    KS_C95 * ((n + m) / (n * m)).sqrt()
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(invalid("samples", "need at least one sample"));
    }
    if xs.iter().any(|v| v.is_nan()) {
        return Err(invalid("samples", "samples contain NaN"));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

/// Exact `sup |F_n - F|` for scalar samples.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let xs = sorted(samples)?;
    let n = xs.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let statistic = d.clamp(0.0, 1.0);
    let band = ks_null_band(n);
    Ok(KsResult {
        statistic,
        null_band: band,
        n,
        m: None,
        within_band: statistic <= band,
    })
}

/// KS distance of a batch to a target CDF, using `|X|` when the CDF is radial.
pub fn ks_batch(batch: &SampleBatch, cdf: &TargetCdf) -> Result<KsResult> {
    if batch.dim != cdf.dim {
        return Err(invalid("batch", "dimension differs from the target"));
    }
    ks_distance(&cdf.project(batch), |v| cdf.cdf(v))
}

/// Two-sample KS statistic `sup |F_n - G_m|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let xa = sorted(a)?;
    let xb = sorted(b)?;
    let (n, m) = (xa.len(), xb.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xa[i].min(xb[j]);
        while i < n && xa[i] <= v {
            i += 1;
        }
        while j < m && xb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let band = ks_two_sample_band(n, m);
    Ok(KsResult {
        statistic: d,
        null_band: band,
        n,
        m: Some(m),
        within_band: d <= band,
    })
}

/// Hill estimate of the tail index of `|X|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillEstimate {
    pub index: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub k: usize,
    pub n: usize,
    /// Estimate from the `k/4` largest order statistics.
    pub index_quarter: f64,
    /// Set when the `k/4` and `k` estimates differ by more than 3.5 standard errors.
    pub unstable: bool,
}

fn hill_at(desc: &[f64], k: usize) -> f64 {
    let base = desc[k].ln();
    let mean = desc[..k].iter().map(|x| x.ln() - base).sum::<f64>() / k as f64;
    1.0 / mean
}

/// Hill estimator on the `k` largest values of `|X|`, with a 95% interval
/// `index (1 +- 1.96 / sqrt(k))`.
pub fn hill_tail_index(samples: &[f64], k: usize) -> Result<HillEstimate> {
    let n = samples.len();
    if k < 1 || 2 * k >= n {
        return Err(invalid("k", format!("need 1 <= k < N/2 (N = {n}, k = {k})")));
    }
    let mut desc: Vec<f64> = samples.iter().map(|v| v.abs()).collect();
    if desc.iter().any(|v| v.is_nan()) {
        return Err(invalid("samples", "samples contain NaN"));
    }
    desc.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if !(desc[k] > 0.0) {
        return Err(invalid("k", "order statistic k is zero"));
    }
    let index = hill_at(&desc, k);
    let kq = (k / 4).max(1);
    let index_quarter = hill_at(&desc, kq);
    let se = index / (k as f64).sqrt();
    // The two estimates share their top kq terms, so the difference has
    // variance index^2 (1/kq - 1/k).
    let sd_diff = index * (1.0 / kq as f64 - 1.0 / k as f64).sqrt();
    let unstable = kq < k && (index_quarter - index).abs() > 3.5 * sd_diff;
    Ok(HillEstimate {
        index,
        ci_low: index - 1.96 * se,
        ci_high: index + 1.96 * se,
        k,
        n,
        index_quarter,
        unstable,
    })
}

/// One equal-mass bin of a heat-kernel check. Infinite edges are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HkBin {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub count: usize,
    pub reference_mass: f64,
    pub ratio: f64,
    pub ratio_low: f64,
    pub ratio_high: f64,
}

/// Histogram of `X_t(y0)` against the normalized profile
/// `t (t^{1/alpha} + |x - theta_t(y0)|)^{-d-alpha}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelCheck {
    pub schema_version: u32,
    pub t: f64,
    pub y0: Vec<f64>,
    pub theta_ref: Vec<f64>,
    pub alpha: f64,
    pub n_paths: usize,
    pub c_band: f64,
    pub bins: Vec<HkBin>,
    pub profile_ratios: Vec<f64>,
    pub coverage: f64,
    /// Fraction of draws falling in some bin.
    pub binned_mass: f64,
    pub config_hash: String,
}

impl HeatKernelCheck {
    /// Fraction of draws in bins whose ratio lies in `[1/c, c]`.
    pub fn coverage_at(&self, c_band: f64) -> f64 {
        let inside: usize = self
            .bins
            .iter()
            .filter(|b| b.ratio >= 1.0 / c_band && b.ratio <= c_band)
            .map(|b| b.count)
            .sum();
        inside as f64 / self.n_paths as f64
    }

    /// Bin edges, counts, ratios and their intervals as CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# config_hash={}", self.config_hash)?;
        writeln!(w, "lo,hi,count,reference_mass,ratio,ratio_low,ratio_high")?;
        let edge = |e: Option<f64>, inf: &str| e.map(fmt_f64).unwrap_or_else(|| inf.to_string());
        for b in &self.bins {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                edge(b.lo, "-inf"),
                edge(b.hi, "inf"),
                b.count,
                fmt_f64(b.reference_mass),
                fmt_f64(b.ratio),
                fmt_f64(b.ratio_low),
                fmt_f64(b.ratio_high)
            )?;
        }
        Ok(())
    }
}

/// Options of [`heatkernel_shape`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatKernelOptions {
    pub n_bins: usize,
    pub c_band: f64,
}

impl Default for HeatKernelOptions {
    fn default() -> Self {
        Self {
            n_bins: HK_BINS,
            c_band: HK_C_BAND,
        }
    }
}

/// Quantile of the normalized profile `(alpha/2) tau^alpha (tau + |u|)^{-1-alpha}`
/// with `tau = t^{1/alpha}`.
pub fn hk_reference_quantile(p: f64, t: f64, alpha: f64) -> f64 {
    let tau = t.powf(1.0 / alpha);
    if p >= 0.5 {
        tau * ((2.0 * (1.0 - p)).powf(-1.0 / alpha) - 1.0)
    } else {
        -tau * ((2.0 * p).powf(-1.0 / alpha) - 1.0)
    }
}

/// CDF of the normalized reference profile in `u = x - theta`.
pub fn hk_reference_cdf(u: f64, t: f64, alpha: f64) -> f64 {
    let tau = t.powf(1.0 / alpha);
    let tail = 0.5 * (1.0 + u.abs() / tau).powf(-alpha);
    if u >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Simulates `cfg.n_paths` paths from `y0` to time `t` and compares the
/// terminal histogram with the reference profile centred at `theta_t(y0)`.
pub fn heatkernel_shape(
    field: &CoefficientField,
    y0: &[f64],
    t: f64,
    cfg: &SimConfig,
    moll: &Mollifier,
    quad: &QuadratureSpec,
    opts: &HeatKernelOptions,
) -> Result<HeatKernelCheck> {
    if field.dim != 1 || y0.len() != 1 {
        return Err(invalid("dim", "histogram mode needs d = 1"));
    }
    if opts.n_bins < 2 {
        return Err(invalid("n_bins", "need at least two bins"));
    }
    if !(opts.c_band >= 1.0) {
        return Err(invalid("c_band", "band constant must be at least 1"));
    }
    let cfg = SimConfig {
        horizon: t,
        ..cfg.clone()
    };
    cfg.validate()?;
    let theta = theta_flow(field, y0, t, moll, quad)?;
    let sim = Simulator::with_quadrature(field, &cfg, quad)?;
    let terminal = sim.terminal_states(y0)?;
    let alpha = field.alpha;
    let nb = opts.n_bins;
    let edges: Vec<f64> = (1..nb)
        .map(|j| theta[0] + hk_reference_quantile(j as f64 / nb as f64, t, alpha))
        .collect();
    let mut counts = vec![0usize; nb];
    for x in &terminal {
        counts[edges.partition_point(|&e| e < x[0])] += 1;
    }
    let n = terminal.len();
    let mass = 1.0 / nb as f64;
    let bins: Vec<HkBin> = counts
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let (lo, hi) = wilson_interval(c, n);
            HkBin {
                lo: (j > 0).then(|| edges[j - 1]),
                hi: (j + 1 < nb).then(|| edges[j]),
                count: c,
                reference_mass: mass,
                ratio: c as f64 / n as f64 / mass,
                ratio_low: lo / mass,
                ratio_high: hi / mass,
            }
        })
        .collect();
    let mut check = HeatKernelCheck {
        schema_version: SCHEMA_VERSION,
        t,
        y0: y0.to_vec(),
        theta_ref: theta,
        alpha,
        n_paths: n,
        c_band: opts.c_band,
        profile_ratios: bins.iter().map(|b| b.ratio).collect(),
        bins,
        coverage: 0.0,
        binned_mass: counts.iter().sum::<usize>() as f64 / n as f64,
        config_hash: config_hash(&(&cfg, &field.label, y0, t, opts)),
    };
    check.coverage = check.coverage_at(opts.c_band);
    Ok(check)
}

/// Running time averages of `f` along a path, with a batch-means interval
/// for the terminal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicAverage {
    pub times: Vec<f64>,
    pub averages: Vec<f64>,
    pub limit: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reference: Option<f64>,
    pub gap: Option<f64>,
}

/// Number of batches behind the interval of [`ergodic_average`].
pub const ERGODIC_BATCHES: usize = 20;

/// `(1/t) int_0^t f(X_s) ds` by the left-point rule on the recorded grid.
pub fn ergodic_average(
    f: impl Fn(&[f64]) -> f64,
    traj: &Trajectory,
    mu_f: Option<f64>,
) -> Result<ErgodicAverage> {
    let n = traj.times.len();
    if n < 3 {
        return Err(invalid(
            "trajectory",
            "need a full-path or strided trajectory with at least two intervals",
        ));
    }
    let mut times = Vec::with_capacity(n - 1);
    let mut averages = Vec::with_capacity(n - 1);
    let mut weights = Vec::with_capacity(n - 1);
    let mut values = Vec::with_capacity(n - 1);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..n - 1 {
        let dt = traj.times[k + 1] - traj.times[k];
        let v = f(&traj.states[k]);
        num += v * dt;
        den += dt;
        weights.push(dt);
        values.push(v);
        times.push(traj.times[k + 1]);
        averages.push(num / den);
    }
    let limit = *averages.last().unwrap();
    let m = values.len();
    let nb = ERGODIC_BATCHES.min(m);
    let batch: Vec<f64> = (0..nb)
        .map(|b| {
            let (lo, hi) = (b * m / nb, (b + 1) * m / nb);
            let w: f64 = weights[lo..hi].iter().sum();
            values[lo..hi].iter().zip(&weights[lo..hi]).map(|(v, w)| v * w).sum::<f64>() / w
        })
        .collect();
    let (ci_low, ci_high) = if nb >= 2 {
        let mean = batch.iter().sum::<f64>() / nb as f64;
        let var = batch.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (nb - 1) as f64;
        let tq = StudentsT::new(0.0, 1.0, (nb - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        let half = tq * (var / nb as f64).sqrt();
        ((limit - half).min(limit), (limit + half).max(limit))
    } else {
        (limit, limit)
    };
    Ok(ErgodicAverage {
        times,
        averages,
        limit,
        ci_low,
        ci_high,
        reference: mu_f,
        gap: mu_f.map(|m| limit - m),
    })
}

/// Terminal level of a moment curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentPlateau {
    pub x0: Vec<f64>,
    pub time: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MomentPlateau {
    pub fn from_curve(x0: &[f64], curve: &[MomentPoint]) -> Result<Self> {
        let last = curve
            .last()
            .ok_or_else(|| invalid("curve", "moment curve is empty"))?;
        Ok(Self {
            x0: x0.to_vec(),
            time: last.time,
            estimate: last.estimate,
            ci_low: last.ci_low,
            ci_high: last.ci_high,
        })
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

/// Summary of a distribution check on a sample batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub n: usize,
    pub cdf_kind: CdfKind,
    pub normalizer: f64,
    pub ks: f64,
    pub ks_null_band: f64,
    pub hill_index: Option<HillEstimate>,
    pub moment_plateaus: Vec<MomentPlateau>,
    pub notes: Vec<String>,
}

/// KS (and optionally Hill) diagnostics of a batch against a target.
pub fn diagnose_batch(batch: &SampleBatch, cdf: &TargetCdf, hill_k: Option<usize>) -> Result<DiagnosticsReport> {
    let ks = ks_batch(batch, cdf)?;
    let values = cdf.project(batch);
    let hill_index = hill_k.map(|k| hill_tail_index(&values, k)).transpose()?;
    let mut notes = vec![
        "KS distance to the target is reported as a proxy for total-variation convergence".to_string(),
    ];
    if cdf.kind == CdfKind::Radial {
        notes.push("d >= 2: KS and Hill use the radius |X|".into());
    }
    if hill_index.is_some_and(|h| h.unstable) {
        notes.push("Hill estimate changes with k: the tail may not be polynomial".into());
    }
    if !ks.within_band {
        notes.push("KS statistic exceeds the 95% null band; the gap includes discretization bias".into());
    }
    Ok(DiagnosticsReport {
        schema_version: SCHEMA_VERSION,
        config_hash: batch.config_hash.clone(),
        n: ks.n,
        cdf_kind: cdf.kind,
        normalizer: cdf.z,
        ks: ks.statistic,
        ks_null_band: ks.null_band,
        hill_index,
        moment_plateaus: Vec::new(),
        notes,
    })
}

/// Empirical and target CDF at each sorted sample, as CSV.
pub fn write_cdf_overlay<W: Write>(mut w: W, hash: &str, samples: &[f64], cdf: &TargetCdf) -> io::Result<()> {
    let xs = sorted(samples).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    writeln!(w, "# config_hash={hash}")?;
    writeln!(w, "x,empirical,target")?;
    let n = xs.len() as f64;
    for (i, x) in xs.iter().enumerate() {
        writeln!(w, "{},{},{}", fmt_f64(*x), fmt_f64((i + 1) as f64 / n), fmt_f64(cdf.cdf(*x)))?;
    }
    Ok(())
}
