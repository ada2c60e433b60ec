//! Symmetric and rotationally invariant alpha-stable variates.
//!
//! All draws are for the *standard* process whose characteristic exponent
//! is `-|xi|^alpha`. The generator used throughout the crate carries a
//! different jump-measure prefactor, so simulated time is rescaled by the
//! convention scale `s(alpha, d)` returned by [`calibrate_convention_scale`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use rand::distr::{Distribution, Open01};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Result};
use crate::operator::{frac_laplacian, QuadratureSpec};
use crate::quadrature::sphere_area;
use crate::rng::stream_rng;

/// Stability index, dimension and the time-rescaling factor tying the
/// standard stable process to the operator normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableSpec {
    pub alpha: f64,
    pub dim: usize,
    pub convention_scale: f64,
}

impl StableSpec {
    /// Validates `(alpha, dim)` and calibrates the convention scale by
    /// quadrature (once per process for each pair).
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        let convention_scale = convention_scale(alpha, dim)?;
        Ok(Self {
            alpha,
            dim,
            convention_scale,
        })
    }

    /// Builds a spec with an explicitly supplied scale (e.g. from a manifest).
    pub fn with_scale(alpha: f64, dim: usize, convention_scale: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if dim == 0 {
            return Err(invalid("dim", "dimension must be at least 1"));
        }
        if !(convention_scale > 0.0 && convention_scale.is_finite()) {
            return Err(invalid("convention_scale", "must be positive and finite"));
        }
        Ok(Self {
            alpha,
            dim,
            convention_scale,
        })
    }

    /// Multiplier applied to a standard unit draw to get an increment over `h`.
    pub fn step_factor(&self, h: f64) -> f64 {
        (self.convention_scale * h).powf(1.0 / self.alpha)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("must lie in (0, 2), got {alpha}")))
    }
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

/// One Chambers–Mallows–Stuck draw with characteristic function `exp(-|xi|^alpha)`.
#[inline]
pub fn draw_sym_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (open01(rng) - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    let w = -open01(rng).ln();
    let av = alpha * v;
    av.sin() / v.cos().powf(1.0 / alpha) * ((v - av).cos() / w).powf((1.0 - alpha) / alpha)
}

/// One draw of the one-sided stable law with Laplace transform `exp(-lambda^a)`, `0 < a < 1`.
#[inline]
pub fn draw_positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u = PI * open01(rng);
    let e = -open01(rng).ln();
    let x = (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / e).powf((1.0 - a) / a);
    // Underflow guard: the law has no atom at zero.
    x.max(f64::MIN_POSITIVE)
}

/// Fills `out` with one standard isotropic draw by Gaussian subordination.
#[inline]
pub fn draw_isotropic<R: Rng + ?Sized>(alpha: f64, rng: &mut R, out: &mut [f64]) {
    let a = draw_positive_stable(alpha / 2.0, rng);
    let scale = (2.0 * a).sqrt();
    for o in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *o = scale * z;
    }
}

/// Fills `out` with a standard unit increment: CMS in one dimension,
/// subordination otherwise.
#[inline]
pub fn draw_unit_increment<R: Rng + ?Sized>(alpha: f64, rng: &mut R, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = draw_sym_stable(alpha, rng);
    } else {
        draw_isotropic(alpha, rng, out);
    }
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(invalid("n", "sample count must be at least 1"))
    } else {
        Ok(())
    }
}

pub fn sample_sym_stable_1d(alpha: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_count(n)?;
    let mut rng = stream_rng(seed, 0);
    Ok((0..n).map(|_| draw_sym_stable(alpha, &mut rng)).collect())
}

pub fn sample_positive_stable(alpha_half: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(alpha_half > 0.0 && alpha_half < 1.0) {
        return Err(invalid(
            "alpha_half",
            format!("must lie in (0, 1), got {alpha_half}"),
        ));
    }
    check_count(n)?;
    let mut rng = stream_rng(seed, 0);
    Ok((0..n)
        .map(|_| draw_positive_stable(alpha_half, &mut rng))
        .collect())
}

/// `n` i.i.d. draws of the standard isotropic `L_1`, always via subordination
/// `X = sqrt(2A) Z` (also in one dimension).
pub fn sample_isotropic_stable(spec: &StableSpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_alpha(spec.alpha)?;
    check_count(n)?;
    let mut rng = stream_rng(seed, 0);
    Ok((0..n)
        .map(|_| {
            let mut v = vec![0.0; spec.dim];
            draw_isotropic(spec.alpha, &mut rng, &mut v);
            v
        })
        .collect())
}

/// Increments of the calibrated process over a step `h`.
pub fn stable_increment(spec: &StableSpec, h: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(h > 0.0) {
        return Err(invalid("h", "time step must be positive"));
    }
    check_count(n)?;
    let factor = spec.step_factor(h);
    let mut rng = stream_rng(seed, 0);
    Ok((0..n)
        .map(|_| {
            let mut v = vec![0.0; spec.dim];
            draw_unit_increment(spec.alpha, &mut rng, &mut v);
            v.iter_mut().for_each(|x| *x *= factor);
            v
        })
        .collect())
}

/// Quadrature settings used for calibration.
pub fn calibration_quadrature() -> QuadratureSpec {
    QuadratureSpec {
        rel_tol: 1e-10,
        abs_tol: 1e-13,
        max_subdivisions: 40_000,
        ..QuadratureSpec::default()
    }
}

/// Time-rescaling factor `s(alpha, d)`: the operator acts on the plane wave
/// `e^{i<xi, .>}` as multiplication by `-s |xi|^alpha`.
pub fn calibrate_convention_scale(alpha: f64, d: usize) -> Result<f64> {
    calibrate_with(alpha, d, 1.0, &calibration_quadrature())
}

/// [`calibrate_convention_scale`], memoized per `(alpha, d)`.
pub fn convention_scale(alpha: f64, d: usize) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (alpha.to_bits(), d);
    if let Some(s) = cache.lock().unwrap_or_else(|p| p.into_inner()).get(&key) {
        return Ok(*s);
    }
    let s = calibrate_convention_scale(alpha, d)?;
    cache.lock().unwrap_or_else(|p| p.into_inner()).insert(key, s);
    Ok(s)
}

/// Calibration against the Gaussian `exp(-xi^2 |y|^2 / 2)` at the origin.
///
/// Its Fourier transform is positive and rapidly decaying, so the symbol
/// `-s |xi|^alpha` integrates to `-s xi^alpha m(alpha, d)` with the Gaussian
/// moment `m = (2 pi)^{-d/2} |S^{d-1}| 2^{(d+alpha)/2 - 1} Gamma((d+alpha)/2)`.
/// Unlike a plane wave, the jump integral of a Gaussian has no oscillatory
/// far field.
pub fn calibrate_with(alpha: f64, d: usize, xi_norm: f64, quad: &QuadratureSpec) -> Result<f64> {
    check_alpha(alpha)?;
    if d == 0 {
        return Err(invalid("dim", "dimension must be at least 1"));
    }
    if !(xi_norm > 0.0) {
        return Err(invalid("xi", "frequency must be positive"));
    }
    let origin = vec![0.0; d];
    let k = 0.5 * xi_norm * xi_norm;
    let bump = move |y: &[f64]| (-k * y.iter().map(|v| v * v).sum::<f64>()).exp();
    let est = frac_laplacian(&bump, &origin, alpha, quad)?;
    let a = (d as f64 + alpha) / 2.0;
    let moment = (2.0 * PI).powf(-(d as f64) / 2.0)
        * sphere_area(d)
        * 2f64.powf(a - 1.0)
        * gamma(a);
    Ok(-est.value / (xi_norm.powf(alpha) * moment))
}

/// Frequency radii of the default characteristic-function grid.
pub const CHARFN_RADII: [f64; 8] = [0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0];

/// Empirical against exact characteristic function at one frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharFnPoint {
    pub xi: Vec<f64>,
    pub empirical_re: f64,
    pub empirical_im: f64,
    pub exact: f64,
    pub error: f64,
}

/// Sup-distance of the empirical characteristic function to `exp(-|xi|^alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharFnCheck {
    pub alpha: f64,
    pub dim: usize,
    pub n: usize,
    pub seed: u64,
    pub points: Vec<CharFnPoint>,
    pub sup_error: f64,
    /// `3 / sqrt(n) + 0.005`.
    pub tolerance: f64,
    pub pass: bool,
}

/// Frequencies `r e` for `r` in [`CHARFN_RADII`], with `e` the first axis,
/// the last axis and the main diagonal (only `+1` in one dimension).
pub fn charfn_grid(dim: usize) -> Vec<Vec<f64>> {
    let mut dirs = vec![{
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        e
    }];
    if dim > 1 {
        let mut e = vec![0.0; dim];
        e[dim - 1] = 1.0;
        dirs.push(e);
        dirs.push(vec![1.0 / (dim as f64).sqrt(); dim]);
    }
    dirs.iter()
        .flat_map(|e| CHARFN_RADII.iter().map(move |r| e.iter().map(|v| r * v).collect()))
        .collect()
}

/// Draws `n` standard variates (one-dimensional sampler for `dim = 1`,
/// subordination otherwise) and compares their characteristic function on
/// [`charfn_grid`].
pub fn charfn_check(alpha: f64, dim: usize, n: usize, seed: u64) -> Result<CharFnCheck> {
    check_alpha(alpha)?;
    if dim == 0 {
        return Err(invalid("dim", "dimension must be at least 1"));
    }
    let draws: Vec<Vec<f64>> = if dim == 1 {
        sample_sym_stable_1d(alpha, n, seed)?.into_iter().map(|x| vec![x]).collect()
    } else {
        sample_isotropic_stable(&StableSpec::with_scale(alpha, dim, 1.0)?, n, seed)?
    };
    let points: Vec<CharFnPoint> = charfn_grid(dim)
        .into_iter()
        .map(|xi| {
            let (mut re, mut im) = (0.0, 0.0);
            for x in &draws {
                let phase: f64 = xi.iter().zip(x).map(|(a, b)| a * b).sum();
                re += phase.cos();
                im += phase.sin();
            }
            re /= n as f64;
            im /= n as f64;
            let exact = (-xi.iter().map(|v| v * v).sum::<f64>().sqrt().powf(alpha)).exp();
            CharFnPoint {
                error: (re - exact).hypot(im),
                xi,
                empirical_re: re,
                empirical_im: im,
                exact,
            }
        })
        .collect();
    let sup_error = points.iter().map(|p| p.error).fold(0.0, f64::max);
    let tolerance = 3.0 / (n as f64).sqrt() + 0.005;
    Ok(CharFnCheck {
        alpha,
        dim,
        n,
        seed,
        points,
        sup_error,
        tolerance,
        pass: sup_error <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_cos(xs: &[f64], xi: f64) -> f64 {
        xs.iter().map(|x| (xi * x).cos()).sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn charfn_check_small_run() {
        let c = charfn_check(1.2, 2, 20_000, 4).unwrap();
        assert_eq!(c.points.len(), 3 * CHARFN_RADII.len());
        assert!(c.pass, "{} > {}", c.sup_error, c.tolerance);
        assert!(charfn_check(1.2, 0, 10, 1).is_err());
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(sample_sym_stable_1d(2.0, 5, 1).is_err());
        assert!(sample_sym_stable_1d(0.0, 5, 1).is_err());
        assert!(sample_positive_stable(1.0, 5, 1).is_err());
        assert!(sample_positive_stable(0.0, 5, 1).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = sample_sym_stable_1d(1.3, 5, 42).unwrap();
        let b = sample_sym_stable_1d(1.3, 5, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_sym_stable_1d(1.3, 5, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn cauchy_characteristic_function() {
        let n = 1_000_000;
        let xs = sample_sym_stable_1d(1.0, n, 3).unwrap();
        let tol = 3.0 / (n as f64).sqrt();
        assert!((mean_cos(&xs, 1.0) - (-1.0f64).exp()).abs() < tol);
    }

    #[test]
    fn near_gaussian_limit_has_variance_two() {
        // alpha close to 2: the bulk behaves like N(0, 2); trim the rare
        // heavy tail before estimating the variance.
        let xs = sample_sym_stable_1d(1.999, 200_000, 9).unwrap();
        let trimmed: Vec<f64> = xs.into_iter().filter(|x| x.abs() < 8.0).collect();
        let var = trimmed.iter().map(|x| x * x).sum::<f64>() / trimmed.len() as f64;
        assert!((var - 2.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn positive_stable_laplace_transform() {
        let n = 1_000_000;
        let tol = 3.0 / (n as f64).sqrt();
        let a = sample_positive_stable(0.5, n, 5).unwrap();
        assert!(a.iter().all(|&x| x > 0.0));
        let lt = a.iter().map(|x| (-x).exp()).sum::<f64>() / n as f64;
        assert!((lt - (-1.0f64).exp()).abs() < tol, "{lt}");

        let a = sample_positive_stable(0.25, n, 6).unwrap();
        let lt = a.iter().map(|x| (-2.0 * x).exp()).sum::<f64>() / n as f64;
        assert!((lt - (-(2.0f64.powf(0.25))).exp()).abs() < tol, "{lt}");
    }

    #[test]
    fn isotropic_rotation_invariance() {
        let spec = StableSpec::with_scale(1.2, 2, 1.0).unwrap();
        let n = 400_000;
        let xs = sample_isotropic_stable(&spec, n, 11).unwrap();
        let tol = 3.0 / (n as f64).sqrt();
        let target = (-1.0f64).exp();
        for k in 0..6 {
            let phi = PI * k as f64 / 6.0;
            let (c, s) = (phi.cos(), phi.sin());
            let m = xs.iter().map(|x| (c * x[0] + s * x[1]).cos()).sum::<f64>() / n as f64;
            assert!((m - target).abs() < tol, "direction {k}: {m}");
        }
        let sign_mean = xs.iter().map(|x| x[0].signum()).sum::<f64>() / n as f64;
        assert!(sign_mean.abs() < tol);
    }

    #[test]
    fn tiny_step_increments_vanish() {
        let spec = StableSpec::with_scale(1.5, 1, 4.0).unwrap();
        let inc = stable_increment(&spec, 1e-12, 1000, 2).unwrap();
        let max = inc.iter().map(|v| v[0].abs()).fold(0.0, f64::max);
        assert!(max < 1e-3, "max increment {max}");
    }

    #[test]
    fn convention_scale_is_twice_sphere_area() {
        for &alpha in &[0.7, 1.0, 1.5] {
            let s1 = calibrate_convention_scale(alpha, 1).unwrap();
            assert!((s1 - 4.0).abs() < 1e-7, "d = 1, alpha = {alpha}: {s1}");
            let s2 = calibrate_convention_scale(alpha, 2).unwrap();
            assert!((s2 - 4.0 * PI).abs() < 1e-6, "d = 2, alpha = {alpha}: {s2}");
        }
    }

    #[test]
    fn calibration_is_frequency_independent() {
        let quad = calibration_quadrature();
        for &(alpha, d) in &[(1.0, 1), (1.5, 2)] {
            let s1 = calibrate_with(alpha, d, 0.5, &quad).unwrap();
            let s2 = calibrate_with(alpha, d, 2.0, &quad).unwrap();
            assert!(((s1 - s2) / s1).abs() < 1e-6, "{s1} vs {s2}");
        }
    }
}
