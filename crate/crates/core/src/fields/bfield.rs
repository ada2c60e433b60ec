//! The vector field
//!
//! ```text
//! B(x) = c'(d, alpha) int y [rho_alpha(x + y) - rho_alpha(x - y)] |y|^{-d-alpha} dy
//! c'(d, alpha) = 2^alpha Gamma((d + alpha)/2) / (Gamma(d/2) Gamma((2 - alpha)/2))
//! ```
//!
//! Since `rho_alpha` is radial, `B(x) = g(|x|) x / |x|` and only the radial
//! component `g(r) = B_1(r e_1)` is integrated. In polar coordinates around
//! `x = r e_1` the angular integrand depends on the polar angle `psi` only and
//! is symmetric under `psi -> pi - psi`, so the outer integral runs over
//! `[0, pi/2]` and is doubled.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::fields::{norm, rho_alpha, rho_normalizer};
use crate::operator::{drift_field_constant, frac_laplacian, ray_breakpoints, QuadratureSpec};
use crate::quadrature::{integrate, integrate_half_line, sphere_area, Estimate, HalfLine, Tolerance};

/// Radial integral `int_0^inf [rho(x + t theta) - rho(x - t theta)] t^{-alpha} dt`
/// for `x = (r, 0)` and `theta = (cos psi, sin psi)` embedded in `R^d`.
fn ray_integral(
    r: f64,
    psi: f64,
    alpha: f64,
    d: usize,
    split: f64,
    tol: Tolerance,
    quad: &QuadratureSpec,
) -> Result<(Estimate, bool)> {
    let (c, s) = (psi.cos(), psi.sin());
    let k = -(d as f64 + alpha) / 2.0;
    let rho_pm = |t: f64| {
        let base = r * r + t * t;
        let cross = 2.0 * r * t * c;
        ((1.0 + base + cross).powf(k), (1.0 + base - cross).powf(k))
    };
    let far = (4.0 * (1.0 + r)).max(4.0 * split);
    // The difference vanishes to first order at t = 0; its rounding noise
    // limits how close to the origin the integrand is sampled.
    let noise = 8.0 * f64::EPSILON * (1.0 + r * r).powf(k);
    let g_split = {
        let (p, m) = rho_pm(split);
        (p - m).abs() * split.powf(1.0 - alpha)
    };
    let tol_ref = tol.abs.max(tol.rel * g_split);
    let eps_min = if alpha > 1.0 {
        (10.0 * noise / ((alpha - 1.0) * tol_ref)).powf(1.0 / (alpha - 1.0))
    } else {
        0.0
    }
    .max(split * 1e-9);
    let geometry = HalfLine {
        split,
        eps_min,
        far,
        breakpoints: ray_breakpoints(&[r, 0.0], &[c, s], split, far),
        inner_exponent: 1.0 - alpha,
        far_policy: quad.far_cutoff_policy,
    };
    let out = integrate_half_line(
        |t, _| {
            let (p, m) = rho_pm(t);
            (p - m) * t.powf(-alpha)
        },
        &geometry,
        tol,
        quad.max_subdivisions,
    )?;
    Ok((out.estimate, out.converged))
}

/// Radial component `g(r)` with `B(x) = g(|x|) x / |x|`.
pub fn b_radial(r: f64, alpha: f64, d: usize, quad: &QuadratureSpec) -> Result<Estimate> {
    crate::stable_noise::check_alpha(alpha)?;
    quad.validate()?;
    if r == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    let cp = drift_field_constant(d, alpha);
    let split = quad.split_radius.unwrap_or(0.05 * (1.0 + r));
    if d == 1 {
        let tol = Tolerance {
            abs: quad.abs_tol / (2.0 * cp),
            rel: quad.rel_tol,
        };
        let (est, ok) = ray_integral(r, 0.0, alpha, d, split, tol, quad)?;
        let est = est.scale(2.0 * cp);
        check_converged(est, ok, quad)?;
        return Ok(est);
    }
    let pre = 2.0 * cp * sphere_area(d - 1);
    let inner_tol = Tolerance {
        abs: 0.1 * quad.abs_tol / (pre * FRAC_PI_2),
        rel: 0.1 * quad.rel_tol,
    };
    let mut inner_ok = true;
    let mut inner_err: f64 = 0.0;
    let mut failure = None;
    let mut breaks = Vec::new();
    if r > 1.0 {
        let mut p = 1.0 / (16.0 * r);
        while p < FRAC_PI_2 {
            breaks.push(p);
            p *= 2.0;
        }
    }
    breaks.push(FRAC_PI_2 / 2.0);
    let weight_power = (d - 2) as i32;
    let outer = integrate(
        |psi| {
            if failure.is_some() {
                return 0.0;
            }
            match ray_integral(r, psi, alpha, d, split, inner_tol, quad) {
                Ok((est, ok)) => {
                    inner_ok &= ok;
                    inner_err = inner_err.max(est.error);
                    psi.cos() * psi.sin().powi(weight_power) * est.value
                }
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        0.0,
        FRAC_PI_2,
        &breaks,
        Tolerance {
            abs: quad.abs_tol / pre,
            rel: quad.rel_tol,
        },
        quad.max_subdivisions,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let est = Estimate::new(
        outer.estimate.value,
        outer.estimate.error + inner_err * FRAC_PI_2,
    )
    .scale(pre);
    check_converged(est, inner_ok && outer.converged, quad)?;
    Ok(est)
}

fn check_converged(est: Estimate, ok: bool, quad: &QuadratureSpec) -> Result<()> {
    let target = quad.abs_tol.max(quad.rel_tol * est.value.abs());
    if !ok && est.error > target {
        return Err(Error::NonConvergence {
            best: est.value,
            achieved: est.error,
            requested: target,
        });
    }
    Ok(())
}

/// `B(x)` by quadrature, with per-component error estimates.
pub fn b_field(x: &[f64], alpha: f64, quad: &QuadratureSpec) -> Result<Vec<Estimate>> {
    let r = norm(x);
    if r == 0.0 {
        return Ok(vec![Estimate::exact(0.0); x.len()]);
    }
    let g = b_radial(r, alpha, x.len(), quad)?;
    Ok(x.iter().map(|xi| g.scale(xi / r)).collect())
}

/// `div B(x)` by fourth-order central differences of [`b_field`].
pub fn div_b(x: &[f64], alpha: f64, quad: &QuadratureSpec) -> Result<Estimate> {
    let h = 1e-3 * (1.0 + norm(x));
    let mut y = x.to_vec();
    let mut total = Estimate::default();
    for i in 0..x.len() {
        let mut at = |t: f64| -> Result<Estimate> {
            y[i] = x[i] + t;
            let v = b_field(&y, alpha, quad)?[i];
            y[i] = x[i];
            Ok(v)
        };
        let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
        let fourth = (-p2.value + 8.0 * p1.value - 8.0 * m1.value + m2.value) / (12.0 * h);
        let second = (p1.value - m1.value) / (2.0 * h);
        let noise = (p2.error + 8.0 * p1.error + 8.0 * m1.error + m2.error) / (12.0 * h);
        total = total + Estimate::new(fourth, noise + 1e-2 * (fourth - second).abs());
    }
    Ok(total)
}

/// Tabulated radial profile `w` with `B(x) = -x w(|x|) rho_alpha(x)`, used
/// for fast drift evaluation.
///
/// Nodes are uniform in `s = asinh(r)` up to `r = 10^4`, interpolated by a
/// cubic spline (clamped at `s = 0`, where `w` is even, natural at the far
/// end). Beyond the table `w` approaches its limit `2 c' Z` as
/// `w_inf + (w(r_max) - w_inf) (r_max / r)^alpha`.
#[derive(Debug, Clone)]
pub struct BProfile {
    pub alpha: f64,
    pub dim: usize,
    step: f64,
    values: Vec<f64>,
    second: Vec<f64>,
    r_max: f64,
    /// `lim_{r -> inf} w(r)`.
    pub w_inf: f64,
}

const PROFILE_STEP: f64 = 0.025;
const PROFILE_R_MAX: f64 = 1e4;

impl BProfile {
    pub fn build(alpha: f64, d: usize, quad: &QuadratureSpec) -> Result<Self> {
        crate::stable_noise::check_alpha(alpha)?;
        let cp = drift_field_constant(d, alpha);
        let w_inf = 2.0 * cp * rho_normalizer(d, alpha);
        let n = (PROFILE_R_MAX.asinh() / PROFILE_STEP).ceil() as usize;
        let mut values = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let r = (i as f64 * PROFILE_STEP).sinh();
            let w = if i == 0 {
                let origin = vec![0.0; d];
                let lap = frac_laplacian(&|y: &[f64]| rho_alpha(y, alpha), &origin, alpha, quad)?;
                -lap.value / d as f64
            } else {
                let rho = rho_alpha(&[r], alpha + d as f64 - 1.0);
                let scaled = QuadratureSpec {
                    abs_tol: 1e-3 * quad.rel_tol * w_inf * r * rho,
                    ..quad.clone()
                };
                -b_radial(r, alpha, d, &scaled)?.value / (r * rho)
            };
            values.push(w);
        }
        let second = spline_second_derivatives(&values, PROFILE_STEP);
        Ok(Self {
            alpha,
            dim: d,
            step: PROFILE_STEP,
            r_max: (n as f64 * PROFILE_STEP).sinh(),
            values,
            second,
            w_inf,
        })
    }

    /// Profile for `(alpha, d)` built once per process and shared.
    pub fn shared(alpha: f64, d: usize, quad: &QuadratureSpec) -> Result<Arc<Self>> {
        type Key = (u64, usize, u64, u64);
        static CACHE: OnceLock<Mutex<HashMap<Key, Arc<BProfile>>>> = OnceLock::new();
        let key = (
            alpha.to_bits(),
            d,
            quad.rel_tol.to_bits(),
            quad.sphere_rule_order as u64,
        );
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(p) = guard.get(&key) {
            return Ok(p.clone());
        }
        let p = Arc::new(Self::build(alpha, d, quad)?);
        guard.insert(key, p.clone());
        Ok(p)
    }

    /// `w(r)`.
    #[inline]
    pub fn w(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.r_max {
            let last = *self.values.last().unwrap();
            return self.w_inf + (last - self.w_inf) * (self.r_max / r).powf(self.alpha);
        }
        let s = r.asinh() / self.step;
        let i = (s as usize).min(self.values.len() - 2);
        let t = s - i as f64;
        let u = 1.0 - t;
        let h2 = self.step * self.step / 6.0;
        u * self.values[i]
            + t * self.values[i + 1]
            + h2 * ((u * u * u - u) * self.second[i] + (t * t * t - t) * self.second[i + 1])
    }

    /// Radial component `g(r) = -r w(r) rho_alpha(r)`.
    pub fn radial(&self, r: f64) -> f64 {
        -r * self.w(r) * rho_alpha(&[r], self.alpha + self.dim as f64 - 1.0)
    }
}

/// Second derivatives of the cubic spline through equispaced `y`, zero
/// slope at the left end and natural at the right.
fn spline_second_derivatives(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let lower_coef = h / 6.0;
    // Clamped left end: (h/3) M0 + (h/6) M1 = (y1 - y0)/h.
    diag[0] = h / 3.0;
    upper[0] = h / 6.0;
    rhs[0] = (y[1] - y[0]) / h;
    for i in 1..n - 1 {
        diag[i] = 2.0 * h / 3.0;
        upper[i] = h / 6.0;
        rhs[i] = (y[i + 1] - 2.0 * y[i] + y[i - 1]) / h;
    }
    diag[n - 1] = 1.0;
    rhs[n - 1] = 0.0;
    // Thomas algorithm; the last row has no sub-diagonal entry.
    for i in 1..n {
        let lower = if i == n - 1 { 0.0 } else { lower_coef };
        let m = lower / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    let mut out = vec![0.0; n];
    out[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = (rhs[i] - upper[i] * out[i + 1]) / diag[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_to_infinity;

    fn quad() -> QuadratureSpec {
        QuadratureSpec {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_subdivisions: 20_000,
            ..QuadratureSpec::default()
        }
    }

    /// Direct one-dimensional evaluation over `y in (0, inf)` for `d = 1`.
    fn b_1d_oracle(x: f64, alpha: f64) -> f64 {
        let rho = |z: f64| (1.0 + z * z).powf(-(1.0 + alpha) / 2.0);
        let tol = Tolerance { abs: 1e-15, rel: 1e-12 };
        let pts = [0.5 * x.abs(), x.abs(), 1.5 * x.abs(), 2.0 * x.abs()];
        let v = integrate_to_infinity(
            |y| (rho(x + y) - rho(x - y)) * y.powf(-alpha),
            0.0,
            &pts,
            4.0 * (1.0 + x.abs()),
            tol,
            20_000,
        );
        2.0 * drift_field_constant(1, alpha) * v.estimate.value
    }

    #[test]
    fn b_vanishes_at_origin_and_is_odd() {
        let q = quad();
        assert_eq!(b_field(&[0.0], 1.5, &q).unwrap()[0].value, 0.0);
        for &x in &[0.5, 1.0, 3.0] {
            let p = b_field(&[x], 1.5, &q).unwrap()[0].value;
            let m = b_field(&[-x], 1.5, &q).unwrap()[0].value;
            assert!((p + m).abs() <= 1e-8 * p.abs());
            assert!(p < 0.0);
        }
    }

    #[test]
    fn one_dimensional_matches_direct_integral() {
        for &alpha in &[0.8, 1.5] {
            for &x in &[0.3, 2.0, 7.0] {
                let v = b_field(&[x], alpha, &quad()).unwrap()[0].value;
                let o = b_1d_oracle(x, alpha);
                assert!(((v - o) / o).abs() < 1e-6, "alpha {alpha}, x {x}: {v} vs {o}");
            }
        }
    }

    #[test]
    fn two_dimensional_is_radial_and_inward() {
        let q = QuadratureSpec::default();
        let a = b_field(&[3.0, 0.0], 1.5, &q).unwrap();
        let b = b_field(&[0.0, 3.0], 1.5, &q).unwrap();
        assert!(a[0].value < 0.0 && a[1].value == 0.0);
        assert!((a[0].value - b[1].value).abs() < 1e-14);
    }

    #[test]
    fn profile_limits() {
        let alpha = 1.5;
        let p = BProfile::build(alpha, 1, &QuadratureSpec::default()).unwrap();
        let lap0 = frac_laplacian(&|y: &[f64]| rho_alpha(y, alpha), &[0.0], alpha, &quad()).unwrap();
        assert!((p.w(0.0) + lap0.value).abs() < 1e-7);
        let far = p.w(1e5);
        assert!(((far - p.w_inf) / p.w_inf).abs() < 1e-3, "{far} vs {}", p.w_inf);
        for &r in &[0.37, 2.9, 41.0] {
            let direct = b_radial(r, alpha, 1, &quad()).unwrap().value;
            assert!(((p.radial(r) - direct) / direct).abs() < 1e-6);
        }
    }

    #[test]
    fn spline_reproduces_cubic_even_function() {
        let h = 0.1;
        let y: Vec<f64> = (0..60).map(|i| 1.0 + (i as f64 * h).powi(2)).collect();
        let m = spline_second_derivatives(&y, h);
        for v in &m[1..40] {
            assert!((v - 2.0).abs() < 1e-6, "{v}");
        }
    }
}
