//! Coefficient fields: the density `rho_alpha`, the vector field `B`, the
//! sampling coefficients built from a target potential, the additive
//! baseline, analytic presets, mollification and cutoff.

mod bfield;
pub mod expr;
mod presets;
mod transform;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};

pub use bfield::{b_field, div_b, BProfile};
pub use presets::{example_exp, example_poly};
pub(crate) use transform::convolve_drift;
pub use transform::{cutoff, cutoff_weight, mollify, Mollifier};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Vector-valued evaluator writing into the supplied buffer.
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type SigmaFn = Arc<dyn Fn(&[f64]) -> SigmaValue + Send + Sync>;

/// Value of the noise coefficient at a point.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaValue {
    /// `s * I`.
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

impl SigmaValue {
    /// `out = sigma * v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            SigmaValue::Scalar(s) => {
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = s * vi;
                }
            }
            SigmaValue::Matrix(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..v.len()).map(|j| m[(i, j)] * v[j]).sum();
                }
            }
        }
    }

    /// Smallest and largest singular values.
    pub fn singular_bounds(&self) -> (f64, f64) {
        match self {
            SigmaValue::Scalar(s) => (s.abs(), s.abs()),
            SigmaValue::Matrix(m) => {
                let sv = m.clone().singular_values();
                (sv.min(), sv.max())
            }
        }
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        self.singular_bounds().1
    }

    pub fn to_matrix(&self, d: usize) -> DMatrix<f64> {
        match self {
            SigmaValue::Scalar(s) => DMatrix::identity(d, d) * *s,
            SigmaValue::Matrix(m) => m.clone(),
        }
    }

    /// Spectral norm of `self - other`.
    pub fn distance(&self, other: &SigmaValue, d: usize) -> f64 {
        match (self, other) {
            (SigmaValue::Scalar(a), SigmaValue::Scalar(b)) => (a - b).abs(),
            _ => SigmaValue::Matrix(self.to_matrix(d) - other.to_matrix(d)).norm(),
        }
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `rho_alpha(x) = (1 + |x|^2)^{-(d + alpha)/2}`.
pub fn rho_alpha(x: &[f64], alpha: f64) -> f64 {
    (1.0 + norm2(x)).powf(-(x.len() as f64 + alpha) / 2.0)
}

pub fn ln_rho_alpha(x: &[f64], alpha: f64) -> f64 {
    -(x.len() as f64 + alpha) / 2.0 * norm2(x).ln_1p()
}

/// `grad rho_alpha(x) = -(d + alpha) x (1 + |x|^2)^{-(d + alpha)/2 - 1}`.
pub fn grad_rho_alpha(x: &[f64], alpha: f64) -> Vec<f64> {
    let k = x.len() as f64 + alpha;
    let c = -k * (1.0 + norm2(x)).powf(-k / 2.0 - 1.0);
    x.iter().map(|v| c * v).collect()
}

/// `int rho_alpha = pi^{d/2} Gamma(alpha/2) / Gamma((d + alpha)/2)`.
pub fn rho_normalizer(d: usize, alpha: f64) -> f64 {
    let df = d as f64;
    std::f64::consts::PI.powf(df / 2.0) * gamma(alpha / 2.0) / gamma((df + alpha) / 2.0)
}

/// Target law `mu(dx) ~ exp(-U(x)) dx` with tail parameters
/// `U(x) >= (d + beta) ln|x| - C0` for `|x| >= 1`.
#[derive(Clone)]
pub struct TargetSpec {
    pub dim: usize,
    potential: ScalarFn,
    gradient: Option<VectorFn>,
    pub tail_beta: f64,
    pub tail_c: f64,
    pub holder_gamma: f64,
    pub normalizer: Option<f64>,
    /// Whether `U` depends on `|x|` only.
    pub isotropic: bool,
    pub label: String,
}

impl fmt::Debug for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetSpec")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("tail_beta", &self.tail_beta)
            .field("tail_c", &self.tail_c)
            .field("normalizer", &self.normalizer)
            .finish()
    }
}

impl TargetSpec {
    pub fn new(
        dim: usize,
        potential: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        tail_beta: f64,
        tail_c: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "dimension must be at least 1"));
        }
        if !(tail_beta > 0.0) {
            return Err(invalid("beta", "tail exponent must be positive"));
        }
        Ok(Self {
            dim,
            potential: Arc::new(potential),
            gradient: None,
            tail_beta,
            tail_c,
            holder_gamma: 1.0,
            normalizer: None,
            isotropic: false,
            label: "custom".into(),
        })
    }

    /// Student-like target `U = ((d + beta)/2) ln(1 + |x|^2)` with `C0 = 0`.
    pub fn student(dim: usize, beta: f64) -> Result<Self> {
        let k = (dim as f64 + beta) / 2.0;
        let mut t = Self::new(dim, move |x| k * norm2(x).ln_1p(), beta, 0.0)?;
        t.gradient = Some(Arc::new(move |x, out| {
            let c = 2.0 * k / (1.0 + norm2(x));
            for (o, v) in out.iter_mut().zip(x) {
                *o = c * v;
            }
        }));
        t.normalizer = Some(rho_normalizer(dim, beta));
        t.isotropic = true;
        t.label = format!("student(beta={beta})");
        Ok(t)
    }

    /// Multivariate Cauchy law, the Student-like target with `beta = 1`.
    pub fn cauchy_like(dim: usize) -> Result<Self> {
        let mut t = Self::student(dim, 1.0)?;
        t.label = "cauchy-like".into();
        Ok(t)
    }

    /// `U = -ln rho_alpha`; its normalizer is that of `rho_alpha`.
    pub fn rho_alpha(dim: usize, alpha: f64) -> Result<Self> {
        crate::stable_noise::check_alpha(alpha)?;
        let mut t = Self::new(dim, move |x| -ln_rho_alpha(x, alpha), alpha, 0.0)?;
        t.normalizer = Some(rho_normalizer(dim, alpha));
        t.isotropic = true;
        t.label = format!("rho-alpha(alpha={alpha})");
        Ok(t)
    }

    /// Target from a potential expression. Missing tail parameters are
    /// estimated by a radial scan.
    pub fn from_expression(
        source: &str,
        dim: usize,
        tail_beta: Option<f64>,
        tail_c: Option<f64>,
    ) -> Result<Self> {
        let e = expr::Expr::parse(source, dim)?;
        let f = move |x: &[f64]| e.eval(x);
        let (beta, c0) = match (tail_beta, tail_c) {
            (Some(b), Some(c)) => (b, c),
            _ => {
                let (b, c) = scan_tail(&f, dim)?;
                (tail_beta.unwrap_or(b), tail_c.unwrap_or(c))
            }
        };
        let mut t = Self::new(dim, f, beta, c0)?;
        t.label = format!("expr({source})");
        t.check_tail()?;
        Ok(t)
    }

    pub fn with_normalizer(mut self, z: f64) -> Self {
        self.normalizer = Some(z);
        self
    }

    pub fn with_isotropy(mut self, isotropic: bool) -> Self {
        self.isotropic = isotropic;
        self
    }

    pub fn u(&self, x: &[f64]) -> f64 {
        (self.potential)(x)
    }

    pub fn potential_fn(&self) -> ScalarFn {
        self.potential.clone()
    }

    /// Analytic gradient of `U`, when known.
    pub fn grad_u(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| {
            let mut out = vec![0.0; x.len()];
            g(x, &mut out);
            out
        })
    }

    /// Spot-checks the tail condition on a radial grid along the axes and diagonals.
    pub fn check_tail(&self) -> Result<()> {
        for dir in probe_directions(self.dim) {
            for k in 0..=60 {
                let r = 10f64.powf(k as f64 * 0.1);
                let x: Vec<f64> = dir.iter().map(|v| r * v).collect();
                let u = self.u(&x);
                let bound = (self.dim as f64 + self.tail_beta) * r.ln() - self.tail_c;
                if !(u >= bound - 1e-9 * (1.0 + bound.abs())) {
                    return Err(Error::NonIntegrable(format!(
                        "U({x:?}) = {u} is below (d + beta) ln|x| - C0 = {bound}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Unit axes and the main diagonal (both signs).
pub(crate) fn probe_directions(d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[i] = s;
            out.push(v);
        }
    }
    if d > 1 {
        let c = 1.0 / (d as f64).sqrt();
        out.push(vec![c; d]);
        out.push(vec![-c; d]);
    }
    out
}

/// Estimates `(beta, C0)` from the growth of `U` between `|x| = 10` and `10^6`.
fn scan_tail(u: &dyn Fn(&[f64]) -> f64, d: usize) -> Result<(f64, f64)> {
    let dirs = probe_directions(d);
    let at = |dir: &[f64], r: f64| u(&dir.iter().map(|v| r * v).collect::<Vec<_>>());
    let mut beta = f64::INFINITY;
    for dir in &dirs {
        // Local log-log slopes over the far range; the offset is recovered below.
        for k in 0..30 {
            let (r0, r1) = (10f64.powf(3.0 + k as f64 * 0.1), 10f64.powf(3.1 + k as f64 * 0.1));
            let slope = (at(dir, r1) - at(dir, r0)) / (r1 / r0).ln();
            beta = beta.min(slope - d as f64);
        }
    }
    if !(beta > 0.0) {
        return Err(Error::NonIntegrable(format!(
            "potential grows too slowly: estimated tail exponent {beta}"
        )));
    }
    // Keep a margin so the estimate is not overly optimistic.
    let beta = 0.99 * beta.min(1e6);
    let mut c0: f64 = 0.0;
    for dir in &dirs {
        for k in 0..=60 {
            let r = 10f64.powf(k as f64 * 0.1);
            c0 = c0.max((d as f64 + beta) * r.ln() - at(dir, r));
        }
    }
    Ok((beta, c0))
}

/// Drift and noise coefficients of the SDE together with the regularity
/// metadata used by the verifier.
#[derive(Clone)]
pub struct CoefficientField {
    pub alpha: f64,
    pub dim: usize,
    drift: VectorFn,
    sigma: SigmaFn,
    pub holder_gamma: f64,
    ell1: ScalarFn,
    ell2: ScalarFn,
    /// Nondegeneracy constants `C_m` keyed by radius.
    pub local_bounds: Vec<(f64, f64)>,
    pub label: String,
    /// Exact normalizer of the invariant law when known.
    pub normalizer: Option<f64>,
    /// Target the field was built for, if any.
    pub target: Option<TargetSpec>,
    /// `sigma` vanishes identically.
    pub deterministic: bool,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("label", &self.label)
            .field("alpha", &self.alpha)
            .field("dim", &self.dim)
            .field("holder_gamma", &self.holder_gamma)
            .field("local_bounds", &self.local_bounds)
            .finish()
    }
}

/// Radii at which nondegeneracy constants are recorded by default.
pub const DEFAULT_BOUND_RADII: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];

impl CoefficientField {
    /// Field with numerically estimated Hölder moduli (`gamma = 1`) and no stored bounds.
    pub fn new(
        alpha: f64,
        dim: usize,
        drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        sigma: impl Fn(&[f64]) -> SigmaValue + Send + Sync + 'static,
    ) -> Result<Self> {
        crate::stable_noise::check_alpha(alpha)?;
        if dim == 0 {
            return Err(invalid("dim", "dimension must be at least 1"));
        }
        let drift: VectorFn = Arc::new(drift);
        let sigma: SigmaFn = Arc::new(sigma);
        let gamma = 1.0;
        Ok(Self {
            alpha,
            dim,
            ell1: holder_estimator_drift(drift.clone(), dim, gamma),
            ell2: holder_estimator_sigma(sigma.clone(), dim, gamma),
            drift,
            sigma,
            holder_gamma: gamma,
            local_bounds: Vec::new(),
            label: "custom".into(),
            normalizer: None,
            target: None,
            deterministic: false,
        })
    }

    /// `b = 0`, `sigma = I`.
    pub fn pure_noise(alpha: f64, dim: usize) -> Result<Self> {
        let mut f = Self::new(alpha, dim, |_, out| out.fill(0.0), |_| SigmaValue::Scalar(1.0))?;
        f.ell1 = Arc::new(|_| 0.0);
        f.ell2 = Arc::new(|_| 0.0);
        f.local_bounds = DEFAULT_BOUND_RADII.iter().map(|&m| (m, 1.0)).collect();
        f.label = "pure-noise".into();
        Ok(f)
    }

    /// Noise-free field with drift `b`.
    pub fn deterministic(
        alpha: f64,
        dim: usize,
        drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        let mut f = Self::new(alpha, dim, drift, |_| SigmaValue::Scalar(0.0))?;
        f.ell2 = Arc::new(|_| 0.0);
        f.deterministic = true;
        f.label = "deterministic".into();
        Ok(f)
    }

    /// Field from drift component expressions (separated by `;`) and a scalar
    /// noise expression.
    pub fn from_expressions(alpha: f64, dim: usize, drift: &str, sigma: &str) -> Result<Self> {
        let b = expr::VectorExpr::parse(drift, dim)?;
        let s = expr::Expr::parse(sigma, dim)?;
        let mut f = Self::new(alpha, dim, move |x, out| b.eval_into(x, out), move |x| {
            SigmaValue::Scalar(s.eval(x))
        })?;
        f.local_bounds = scan_local_bounds(&f.sigma, dim, &DEFAULT_BOUND_RADII);
        f.label = format!("expr(b={drift}; sigma={sigma})");
        Ok(f)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_holder(
        mut self,
        gamma: f64,
        ell1: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        ell2: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.holder_gamma = gamma;
        self.ell1 = Arc::new(ell1);
        self.ell2 = Arc::new(ell2);
        self
    }

    pub fn with_local_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.local_bounds = bounds;
        self
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.drift)(x, &mut out);
        out
    }

    #[inline]
    pub fn sigma_value(&self, x: &[f64]) -> SigmaValue {
        (self.sigma)(x)
    }

    pub fn ell1(&self, x: &[f64]) -> f64 {
        (self.ell1)(x)
    }

    pub fn ell2(&self, x: &[f64]) -> f64 {
        (self.ell2)(x)
    }

    pub fn drift_fn(&self) -> VectorFn {
        self.drift.clone()
    }

    pub fn sigma_fn(&self) -> SigmaFn {
        self.sigma.clone()
    }

    /// Stored `C_m` for the smallest recorded radius `>= m`.
    pub fn local_bound(&self, m: f64) -> Option<f64> {
        self.local_bounds
            .iter()
            .filter(|(r, _)| *r >= m)
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .map(|(_, c)| *c)
    }

    pub(crate) fn replace_drift(&mut self, drift: VectorFn) {
        self.drift = drift;
    }

    pub(crate) fn replace_sigma(&mut self, sigma: SigmaFn) {
        self.sigma = sigma;
    }
}

/// Probe offsets for numerical Hölder quotients.
const HOLDER_PROBES: [f64; 3] = [1.0, 0.5, 0.25];
const HOLDER_SAFETY: f64 = 1.5;

pub(crate) fn holder_estimator_drift(b: VectorFn, d: usize, gamma: f64) -> ScalarFn {
    Arc::new(move |x| {
        let mut b0 = vec![0.0; d];
        let mut b1 = vec![0.0; d];
        b(x, &mut b0);
        let mut y = x.to_vec();
        let mut q: f64 = 0.0;
        for dir in probe_directions(d) {
            for h in HOLDER_PROBES {
                for i in 0..d {
                    y[i] = x[i] + h * dir[i];
                }
                b(&y, &mut b1);
                let diff: f64 = b0.iter().zip(&b1).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
                q = q.max(diff / h.powf(gamma));
            }
        }
        HOLDER_SAFETY * q
    })
}

pub(crate) fn holder_estimator_sigma(s: SigmaFn, d: usize, gamma: f64) -> ScalarFn {
    Arc::new(move |x| {
        let s0 = s(x);
        let mut y = x.to_vec();
        let mut q: f64 = 0.0;
        for dir in probe_directions(d) {
            for h in HOLDER_PROBES {
                for i in 0..d {
                    y[i] = x[i] + h * dir[i];
                }
                q = q.max(s0.distance(&s(&y), d) / h.powf(gamma));
            }
        }
        HOLDER_SAFETY * q
    })
}

/// `C_m = max(max sigma, 1 / min sigma)` over a radial grid of `B_m`.
pub(crate) fn scan_local_bounds(sigma: &SigmaFn, d: usize, radii: &[f64]) -> Vec<(f64, f64)> {
    let dirs = probe_directions(d);
    radii
        .iter()
        .map(|&m| {
            let mut c: f64 = 1.0;
            for k in 0..=32 {
                let r = m * k as f64 / 32.0;
                for dir in &dirs {
                    let x: Vec<f64> = dir.iter().map(|v| r * v).collect();
                    let (lo, hi) = sigma(&x).singular_bounds();
                    c = c.max(hi).max(1.0 / lo);
                }
            }
            (m, c)
        })
        .collect()
}

/// Options for the log-space evaluation of the sampling coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingOptions {
    /// Exponents are clamped to `[-bound, bound]` before exponentiation.
    pub exponent_bound: f64,
    /// Construction fails if the bound is reached within this radius.
    pub scan_radius: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            exponent_bound: 700.0,
            scan_radius: 100.0,
        }
    }
}

/// Sampling coefficients `sigma = (rho_alpha e^U)^{1/alpha} I`, `b = B e^U`,
/// whose invariant law is `exp(-U)`.
pub fn make_sampling_coefficients(
    target: &TargetSpec,
    alpha: f64,
    quad: &crate::operator::QuadratureSpec,
) -> Result<CoefficientField> {
    make_sampling_coefficients_with(target, alpha, quad, &SamplingOptions::default())
}

pub fn make_sampling_coefficients_with(
    target: &TargetSpec,
    alpha: f64,
    quad: &crate::operator::QuadratureSpec,
    opts: &SamplingOptions,
) -> Result<CoefficientField> {
    crate::stable_noise::check_alpha(alpha)?;
    let d = target.dim;
    let profile = BProfile::shared(alpha, d, quad)?;
    let bound = opts.exponent_bound;
    let log_scale = {
        let u = target.potential_fn();
        move |x: &[f64]| ln_rho_alpha(x, alpha) + u(x)
    };
    for dir in probe_directions(d) {
        for k in 0..=80 {
            let r = opts.scan_radius * k as f64 / 80.0;
            let x: Vec<f64> = dir.iter().map(|v| r * v).collect();
            let l = log_scale(&x);
            let lw = (profile.w(r) * r.max(1.0)).ln();
            let worst = (l + lw).abs().max(l.abs() / alpha);
            if !(worst <= bound) {
                return Err(Error::Saturation {
                    log_magnitude: worst,
                    bound,
                    radius: r,
                });
            }
        }
    }
    let ls = log_scale.clone();
    let p = profile.clone();
    let drift = move |x: &[f64], out: &mut [f64]| {
        let r = norm(x);
        let lw = p.w(r).ln();
        let l = ls(x) + lw;
        for (o, xi) in out.iter_mut().zip(x) {
            if *xi == 0.0 {
                *o = 0.0;
            } else {
                let e = (l + xi.abs().ln()).clamp(-bound, bound);
                *o = -xi.signum() * e.exp();
            }
        }
    };
    let ls = log_scale.clone();
    let sigma = move |x: &[f64]| SigmaValue::Scalar((ls(x) / alpha).clamp(-bound, bound).exp());
    let mut field = CoefficientField::new(alpha, d, drift, sigma)?;
    field.holder_gamma = target.holder_gamma;
    field.ell1 = holder_estimator_drift(field.drift.clone(), d, field.holder_gamma);
    field.ell2 = holder_estimator_sigma(field.sigma.clone(), d, field.holder_gamma);
    field.local_bounds = scan_local_bounds(&field.sigma, d, &DEFAULT_BOUND_RADII);
    field.label = format!("sampling[{}]", target.label);
    field.normalizer = target.normalizer;
    field.target = Some(target.clone());
    Ok(field)
}

/// Additive-noise baseline `dX = (B / rho_alpha)(X) dt + dL`, invariant law `rho_alpha / Z`.
pub fn make_additive_baseline(
    alpha: f64,
    dim: usize,
    quad: &crate::operator::QuadratureSpec,
) -> Result<CoefficientField> {
    crate::stable_noise::check_alpha(alpha)?;
    let profile = BProfile::shared(alpha, dim, quad)?;
    let p = profile.clone();
    let drift = move |x: &[f64], out: &mut [f64]| {
        let w = p.w(norm(x));
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -w * xi;
        }
    };
    let mut field = CoefficientField::new(alpha, dim, drift, |_| SigmaValue::Scalar(1.0))?;
    field.ell2 = Arc::new(|_| 0.0);
    field.local_bounds = DEFAULT_BOUND_RADII.iter().map(|&m| (m, 1.0)).collect();
    field.label = format!("additive-baseline(alpha={alpha})");
    field.normalizer = Some(rho_normalizer(dim, alpha));
    field.target = Some(TargetSpec::rho_alpha(dim, alpha)?);
    Ok(field)
}
