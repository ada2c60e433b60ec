//! Quadrature evaluation of the nonlocal operators.
//!
//! The jump part of the generator is
//!
//! ```text
//! L_sigma f(x) = c(d, alpha) * int [f(x + sigma(x) z) + f(x - sigma(x) z) - 2 f(x)] |z|^{-d-alpha} dz
//! c(d, alpha)  = alpha 2^alpha Gamma((d + alpha)/2) / (Gamma(d/2) Gamma((2 - alpha)/2))
//! ```
//!
//! evaluated in polar coordinates: a symmetric angular rule over the unit
//! sphere and, per direction, a graded radial integral (see
//! [`crate::quadrature::integrate_half_line`]).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::fields::{CoefficientField, SigmaValue};
use crate::quadrature::{
    integrate_half_line, sphere_area, DirectionRule, Estimate, FarPolicy, HalfLine, Tolerance,
};

/// Policy for the singular-integral quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Inner/outer split radius; `None` picks `0.1 (1 + |x|) / (1 + |sigma(x)|)`.
    pub split_radius: Option<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Angular nodes for `d` in {2, 3}.
    pub sphere_rule_order: usize,
    /// Directions for the quasi-random rule used when `d >= 4`.
    pub mc_fallback_samples: usize,
    pub far_cutoff_policy: FarPolicy,
    /// Smallest admissible singular value of `sigma(x)`.
    pub sigma_floor: f64,
    pub qmc_seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            split_radius: None,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_subdivisions: 4000,
            sphere_rule_order: 32,
            mc_fallback_samples: 4096,
            far_cutoff_policy: FarPolicy::ChangeOfVariable,
            sigma_floor: 1e-12,
            qmc_seed: 0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(invalid("quad.rel_tol", "must be positive"));
        }
        if !(self.abs_tol > 0.0) {
            return Err(invalid("quad.abs_tol", "must be positive"));
        }
        if let Some(s) = self.split_radius {
            if !(s > 0.0) {
                return Err(invalid("quad.split_radius", "must be positive"));
            }
        }
        if self.max_subdivisions == 0 {
            return Err(invalid("quad.max_subdivisions", "must be at least 1"));
        }
        Ok(())
    }

    /// Same policy with tolerances scaled by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol * factor,
            max_subdivisions: self.max_subdivisions * 4,
            ..self.clone()
        }
    }

    pub(crate) fn direction_rule(&self, d: usize) -> DirectionRule {
        DirectionRule::symmetric(d, self.sphere_rule_order, self.mc_fallback_samples, self.qmc_seed)
    }
}

/// Scalar test function for the generator, optionally with an analytic gradient.
pub trait TestFunction {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

impl<F: Fn(&[f64]) -> f64> TestFunction for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Prefactor `alpha 2^alpha Gamma((d+alpha)/2) / (Gamma(d/2) Gamma((2-alpha)/2))` of the jump operator.
pub fn jump_constant(d: usize, alpha: f64) -> f64 {
    alpha * drift_field_constant(d, alpha)
}

/// Prefactor of the vector field `B`; the jump constant divided by `alpha`.
pub fn drift_field_constant(d: usize, alpha: f64) -> f64 {
    let d = d as f64;
    2f64.powf(alpha) * gamma((d + alpha) / 2.0) / (gamma(d / 2.0) * gamma((2.0 - alpha) / 2.0))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Breakpoints along the ray `x + r v`: unit and `|x|`-scaled radii, plus a
/// geometric cluster around the closest approach to the origin, where the
/// radially decaying fields used here vary fastest.
pub(crate) fn ray_breakpoints(x: &[f64], v: &[f64], split: f64, far: f64) -> Vec<f64> {
    let sv = norm(v);
    let xn = norm(x);
    let mut pts = vec![1.0 / sv, 0.5 * xn / sv, xn / sv, 2.0 * xn / sv];
    let proj = dot(x, v) / (sv * sv);
    let r_star = proj.abs();
    let dist2 = (xn * xn - proj * proj * sv * sv).max(0.0);
    let width = dist2.sqrt().max(0.25) / sv;
    if r_star > split {
        pts.push(r_star);
        let mut w = width;
        while r_star - w > split || r_star + w < far {
            pts.push(r_star - w);
            pts.push(r_star + w);
            w *= 2.0;
        }
    }
    pts.retain(|p| p.is_finite() && *p > split && *p < far);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts
}

fn sigma_bounds(s: &SigmaValue, x: &[f64], floor: f64) -> Result<f64> {
    let (lo, hi) = s.singular_bounds();
    if !(lo >= floor) {
        return Err(Error::SingularSigma {
            x: x.to_vec(),
            value: lo,
            floor,
        });
    }
    Ok(hi)
}

/// `c(d,alpha) int [f(x+sz)+f(x-sz)-2f(x)] |z|^{-d-alpha} dz` with `s = sigma`.
fn jump_integral<F: TestFunction + ?Sized>(
    f: &F,
    x: &[f64],
    alpha: f64,
    sigma: &SigmaValue,
    quad: &QuadratureSpec,
) -> Result<Estimate> {
    quad.validate()?;
    crate::stable_noise::check_alpha(alpha)?;
    let d = x.len();
    let sigma_norm = sigma_bounds(sigma, x, quad.sigma_floor)?;
    let xn = norm(x);
    let split = quad
        .split_radius
        .unwrap_or(0.1 * (1.0 + xn) / (1.0 + sigma_norm));
    let c = jump_constant(d, alpha);
    let f0 = f.value(x);
    let abs_dir = quad.abs_tol / (c * sphere_area(d));
    let rule = quad.direction_rule(d);
    let mut failed = false;
    let mut y = vec![0.0; d];
    let mut v = vec![0.0; d];

    let per_direction = rule.integrate(|theta| {
        sigma.apply(theta, &mut v);
        let sv = norm(&v);
        let far = (4.0 * (1.0 + xn) / sv).max(4.0 * split);
        let eval = |r: f64, sign: f64, y: &mut [f64]| {
            for i in 0..d {
                y[i] = x[i] + sign * r * v[i];
            }
            f.value(y)
        };
        let g_split = eval(split, 1.0, &mut y) + eval(split, -1.0, &mut y) - 2.0 * f0;
        let fscale = f0
            .abs()
            .max(eval(split, 1.0, &mut y).abs())
            .max(eval(split, -1.0, &mut y).abs());
        let tol_ref = abs_dir.max(quad.rel_tol * g_split.abs() * split.powf(-alpha));
        let noise = 8.0 * f64::EPSILON * fscale;
        let eps_min = if noise > 0.0 {
            (10.0 * noise / (alpha * tol_ref)).powf(1.0 / alpha)
        } else {
            0.0
        }
        .max(split * 1e-9);
        let geometry = HalfLine {
            split,
            eps_min,
            far,
            breakpoints: ray_breakpoints(x, &v, split, far),
            inner_exponent: 1.0 - alpha,
            far_policy: quad.far_cutoff_policy,
        };
        let tol = Tolerance {
            abs: abs_dir,
            rel: quad.rel_tol,
        };
        let out = integrate_half_line(
            |r, is_far| {
                let s = eval(r, 1.0, &mut y) + eval(r, -1.0, &mut y);
                let g = if is_far { s } else { s - 2.0 * f0 };
                g * r.powf(-1.0 - alpha)
            },
            &geometry,
            tol,
            quad.max_subdivisions,
        )?;
        failed |= !out.converged;
        let mut est = out.estimate;
        if quad.far_cutoff_policy == FarPolicy::ChangeOfVariable {
            // The constant part of the far field integrates in closed form.
            est.value += -2.0 * f0 * far.powf(-alpha) / alpha;
        }
        Ok(vec![est])
    })?;
    let total = per_direction[0].scale(c);
    let target = quad.abs_tol.max(quad.rel_tol * total.value.abs());
    if failed && total.error > target {
        return Err(Error::NonConvergence {
            best: total.value,
            achieved: total.error,
            requested: target,
        });
    }
    Ok(total)
}

/// Fractional Laplacian `Delta^{alpha/2} f(x)` in the crate's normalization.
pub fn frac_laplacian<F: TestFunction + ?Sized>(
    f: &F,
    x: &[f64],
    alpha: f64,
    quad: &QuadratureSpec,
) -> Result<Estimate> {
    jump_integral(f, x, alpha, &SigmaValue::Scalar(1.0), quad)
}

/// Jump part `L_sigma f(x)` of the generator of `field`.
pub fn apply_l_sigma<F: TestFunction + ?Sized>(
    field: &CoefficientField,
    f: &F,
    x: &[f64],
    quad: &QuadratureSpec,
) -> Result<Estimate> {
    let sigma = field.sigma_value(x);
    jump_integral(f, x, field.alpha, &sigma, quad)
}

/// Fourth-order central-difference gradient with its second-order companion
/// used as an error proxy.
pub fn fd_gradient<F: TestFunction + ?Sized>(f: &F, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = 1e-5f64.max(1e-5 * norm(x));
    let mut y = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    let mut err = vec![0.0; x.len()];
    for i in 0..x.len() {
        let mut at = |t: f64| {
            y[i] = x[i] + t;
            let v = f.value(&y);
            y[i] = x[i];
            v
        };
        let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
        let fourth = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
        let second = (p1 - m1) / (2.0 * h);
        grad[i] = fourth;
        err[i] = (fourth - second).abs();
    }
    (grad, err)
}

/// Full generator `L f(x) = L_sigma f(x) + <b(x), grad f(x)>`.
pub fn apply_generator<F: TestFunction + ?Sized>(
    field: &CoefficientField,
    f: &F,
    x: &[f64],
    quad: &QuadratureSpec,
) -> Result<Estimate> {
    let jump = apply_l_sigma(field, f, x, quad)?;
    let b = field.drift(x);
    let (grad, gerr) = match f.gradient(x) {
        Some(g) => {
            let n = g.len();
            (g, vec![0.0; n])
        }
        None => fd_gradient(f, x),
    };
    let transport = dot(&b, &grad);
    let terr: f64 = b.iter().zip(&gerr).map(|(bi, e)| bi.abs() * e).sum();
    Ok(jump + Estimate::new(transport, terr))
}

/// `V_p(x) = (1 + |x|^2)^{p/2}`.
pub fn v_p(x: &[f64], p: f64) -> f64 {
    (1.0 + dot(x, x)).powf(p / 2.0)
}

/// `grad V_p(x) = p x (1 + |x|^2)^{p/2 - 1}`.
pub fn grad_v_p(x: &[f64], p: f64) -> Vec<f64> {
    let c = p * (1.0 + dot(x, x)).powf(p / 2.0 - 1.0);
    x.iter().map(|xi| c * xi).collect()
}

/// `V_p` as a [`TestFunction`] with its analytic gradient.
#[derive(Debug, Clone, Copy)]
pub struct Lyapunov {
    pub p: f64,
}

impl TestFunction for Lyapunov {
    fn value(&self, x: &[f64]) -> f64 {
        v_p(x, self.p)
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(grad_v_p(x, self.p))
    }
}

/// The constant `q(d, alpha, p)` entering the dissipativity condition.
pub fn q_constant(d: usize, alpha: f64, p: f64) -> Result<f64> {
    crate::stable_noise::check_alpha(alpha)?;
    if !(p > 0.0 && p < alpha) {
        return Err(invalid("p", format!("must lie in (0, alpha = {alpha}), got {p}")));
    }
    let df = d as f64;
    let gd = gamma(df / 2.0);
    let pre = 2f64.powf(4.0 + 2.0 * alpha) * std::f64::consts::PI.powf(df / 2.0)
        * gamma((df + alpha) / 2.0)
        / (gd * gd * gamma((2.0 - alpha) / 2.0));
    Ok(pre * (alpha / (2.0 - alpha) + alpha / ((alpha - p) * p)))
}

/// Parameters of the Lyapunov function and dissipativity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub p: f64,
    pub r: f64,
    pub q: f64,
    pub epsilon0: f64,
}

impl LyapunovParams {
    /// Validates `r > -alpha`, `p in ((-r) v 0, alpha)`, `epsilon0 in [0, 1]` and computes `q`.
    pub fn new(d: usize, alpha: f64, p: f64, r: f64, epsilon0: f64) -> Result<Self> {
        crate::stable_noise::check_alpha(alpha)?;
        if !(r > -alpha) {
            return Err(invalid("r", format!("must exceed -alpha = {}", -alpha)));
        }
        let lo = (-r).max(0.0);
        if !(p > lo && p < alpha) {
            return Err(invalid(
                "p",
                format!("must lie in ({lo}, {alpha}) for r = {r}, got {p}"),
            ));
        }
        if !(0.0..=1.0).contains(&epsilon0) {
            return Err(invalid("epsilon0", "must lie in [0, 1]"));
        }
        Ok(Self {
            p,
            r,
            q: q_constant(d, alpha, p)?,
            epsilon0,
        })
    }
}

/// `L V_p(x)` for the given field.
pub fn lyapunov_drift(
    field: &CoefficientField,
    params: &LyapunovParams,
    x: &[f64],
    quad: &QuadratureSpec,
) -> Result<Estimate> {
    apply_generator(field, &Lyapunov { p: params.p }, x, quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn quad() -> QuadratureSpec {
        QuadratureSpec {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
            max_subdivisions: 20_000,
            ..QuadratureSpec::default()
        }
    }

    /// int_R (1 - cos u) |u|^{-1-alpha} du = pi / (Gamma(1+alpha) sin(pi alpha / 2)).
    fn cosine_identity(alpha: f64) -> f64 {
        PI / (gamma(1.0 + alpha) * (PI * alpha / 2.0).sin())
    }

    #[test]
    fn constant_is_annihilated() {
        let f = |_: &[f64]| 3.5;
        for d in 1..=3 {
            let x = vec![0.3; d];
            let v = frac_laplacian(&f, &x, 1.2, &quad()).unwrap();
            assert!(v.value.abs() < 1e-12, "d = {d}: {v:?}");
        }
    }

    #[test]
    fn gaussian_matches_closed_form() {
        // int_0^inf (1 - e^{-y^2/2}) y^{-1-alpha} dy = 2^{-alpha/2} Gamma(1 - alpha/2) / alpha
        for &alpha in &[0.5, 1.0, 1.5] {
            let f = |y: &[f64]| (-0.5 * y[0] * y[0]).exp();
            let v = frac_laplacian(&f, &[0.0], alpha, &quad()).unwrap();
            // The operator integrates the symmetric second difference over all of R.
            let expected = -4.0 * jump_constant(1, alpha) * 2f64.powf(-alpha / 2.0)
                * gamma(1.0 - alpha / 2.0)
                / alpha;
            assert!(
                ((v.value - expected) / expected).abs() < 1e-8,
                "alpha = {alpha}: {} vs {expected}",
                v.value
            );
        }
    }

    #[test]
    fn plane_wave_symbol_matches_cosine_identity() {
        for &alpha in &[0.5, 1.0, 1.5] {
            let s = crate::stable_noise::calibrate_convention_scale(alpha, 1).unwrap();
            let expected = jump_constant(1, alpha) * 2.0 * cosine_identity(alpha);
            assert!(((s - expected) / expected).abs() < 1e-8, "alpha = {alpha}");
        }
    }

    #[test]
    fn scaling_off_origin() {
        // L[f(lambda .)](x) = lambda^alpha (L f)(lambda x)
        let (alpha, lambda, x) = (1.3, 2.0, 0.4);
        let f = |y: &[f64]| 1.0 / (1.0 + y[0] * y[0]);
        let g = |y: &[f64]| 1.0 / (1.0 + lambda * lambda * y[0] * y[0]);
        let q = QuadratureSpec::default();
        let lhs = frac_laplacian(&g, &[x], alpha, &q).unwrap().value;
        let rhs = lambda.powf(alpha) * frac_laplacian(&f, &[lambda * x], alpha, &q).unwrap().value;
        assert!((lhs - rhs).abs() < 1e-8 * rhs.abs(), "{lhs} vs {rhs}");
    }

    #[test]
    fn v_p_gradient_matches_finite_differences() {
        let p = 0.5;
        for d in 1..=3 {
            let x = vec![1.0; d];
            let g = grad_v_p(&x, p);
            let (fd, _) = fd_gradient(&|y: &[f64]| v_p(y, p), &x);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-8);
            }
            assert_eq!(v_p(&vec![0.0; d], p), 1.0);
        }
    }

    #[test]
    fn q_constant_reference_value() {
        let q = q_constant(1, 1.0, 0.5).unwrap();
        assert!(((q - 320.0 / PI) / q).abs() < 1e-12);
        assert!(q_constant(1, 1.0, 1.0).is_err());
        assert!(q_constant(1, 1.0, 0.0).is_err());
        let a = 1.5;
        let q1 = q_constant(2, a, 0.9 * a).unwrap();
        let q2 = q_constant(2, a, 0.99 * a).unwrap();
        assert!(q2 > q1 && q1 > 0.0);
    }

    #[test]
    fn empty_admissible_range_rejected() {
        assert!(LyapunovParams::new(1, 1.5, 1.0, -1.5, 0.0).is_err());
        assert!(LyapunovParams::new(1, 1.5, 0.5, -0.5, 0.0).is_err());
        assert!(LyapunovParams::new(1, 1.5, 1.0, -0.5, 0.0).is_ok());
    }

    #[test]
    fn fractional_laplacian_positive_at_minimum_of_v_p() {
        let v = frac_laplacian(&Lyapunov { p: 0.5 }, &[0.0], 1.5, &quad()).unwrap();
        assert!(v.value > 0.0);
    }

    #[test]
    fn growing_test_function_converges() {
        // |y|^p growth with p < alpha still integrable.
        let f = Lyapunov { p: 1.2 };
        let v = frac_laplacian(&f, &[3.0], 1.5, &QuadratureSpec::default()).unwrap();
        assert!(v.value.is_finite());
        let g = |y: &[f64]| (1.0 + y[0] * y[0]).powf(0.9);
        assert!(frac_laplacian(&g, &[0.0], 1.5, &QuadratureSpec::default()).is_err());
    }
}
