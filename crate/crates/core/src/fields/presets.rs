//! Analytic coefficient presets with polynomial and exponential growth.

use crate::error::{invalid, Result};
use crate::fields::{norm, CoefficientField, SigmaValue, DEFAULT_BOUND_RADII};

/// `b(x) = -x (1 + |x|^2)^{beta/2}`, `sigma(x) = (1 + |x|^2)^{gamma/2} I`,
/// for `beta > -alpha` and `gamma < 1 + beta/alpha`.
pub fn example_poly(dim: usize, beta: f64, gamma_exp: f64, alpha: f64) -> Result<CoefficientField> {
    crate::stable_noise::check_alpha(alpha)?;
    if !(beta > -alpha) {
        return Err(invalid("beta", format!("must exceed -alpha = {}", -alpha)));
    }
    if !(gamma_exp < 1.0 + beta / alpha) {
        return Err(invalid(
            "gamma",
            format!("must be below 1 + beta/alpha = {}", 1.0 + beta / alpha),
        ));
    }
    let drift = move |x: &[f64], out: &mut [f64]| {
        let s = (1.0 + x.iter().map(|v| v * v).sum::<f64>()).powf(beta / 2.0);
        for (o, v) in out.iter_mut().zip(x) {
            *o = -v * s;
        }
    };
    let sigma = move |x: &[f64]| {
        SigmaValue::Scalar((1.0 + x.iter().map(|v| v * v).sum::<f64>()).powf(gamma_exp / 2.0))
    };
    // Lipschitz moduli: sup of the Jacobian norm over the unit ball around x.
    let ell1 = move |x: &[f64]| {
        let r = norm(x) + 1.0;
        (1.0 + beta.abs()) * (1.0 + r * r).powf(beta / 2.0).max(1.0)
    };
    let ell2 = move |x: &[f64]| {
        let r = norm(x) + 1.0;
        gamma_exp.abs() * (1.0 + r * r).powf((gamma_exp - 1.0) / 2.0).max(1.0)
    };
    let bounds = DEFAULT_BOUND_RADII
        .iter()
        .map(|&m| {
            let s = (1.0 + m * m).powf(gamma_exp / 2.0);
            (m, s.max(1.0 / s))
        })
        .collect();
    Ok(CoefficientField::new(alpha, dim, drift, sigma)?
        .with_holder(1.0, ell1, ell2)
        .with_local_bounds(bounds)
        .with_label(format!(
            "example-poly(beta={beta}, gamma={gamma_exp}, alpha={alpha})"
        )))
}

/// `b(x) = -x e^{|x|}`, `sigma(x) = e^{|x|/beta} I` for `beta in (alpha, 2)`,
/// with moduli `l1(x) = (1 + |x|) e^{|x| + 1}` and `l2(x) = e^{(|x| + 1)/beta}`.
pub fn example_exp(dim: usize, beta: f64, alpha: f64) -> Result<CoefficientField> {
    crate::stable_noise::check_alpha(alpha)?;
    if !(beta > alpha && beta < 2.0) {
        return Err(invalid(
            "beta",
            format!("must lie in (alpha, 2) = ({alpha}, 2), got {beta}"),
        ));
    }
    let drift = |x: &[f64], out: &mut [f64]| {
        let s = norm(x).exp();
        for (o, v) in out.iter_mut().zip(x) {
            *o = -v * s;
        }
    };
    let sigma = move |x: &[f64]| SigmaValue::Scalar((norm(x) / beta).exp());
    let bounds = DEFAULT_BOUND_RADII
        .iter()
        .map(|&m| (m, (m / beta).exp()))
        .collect();
    Ok(CoefficientField::new(alpha, dim, drift, sigma)?
        .with_holder(
            1.0,
            |x| {
                let r = norm(x);
                (1.0 + r) * (r + 1.0).exp()
            },
            move |x| ((norm(x) + 1.0) / beta).exp(),
        )
        .with_local_bounds(bounds)
        .with_label(format!("example-exp(beta={beta}, alpha={alpha})")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_values() {
        let f = example_poly(1, 1.0, 0.5, 1.5).unwrap();
        assert_eq!(f.drift(&[0.0]), vec![0.0]);
        assert_eq!(f.sigma_value(&[0.0]), SigmaValue::Scalar(1.0));
        assert!((f.drift(&[2.0])[0] + 2.0 * 5f64.sqrt()).abs() < 1e-12);
        assert!((f.local_bound(5.0).unwrap() - 26f64.powf(0.25)).abs() < 1e-12);
        assert!(example_poly(1, -2.0, 0.0, 1.5).is_err());
        assert!(example_poly(1, 1.0, 2.0, 1.5).is_err());
    }

    #[test]
    fn exp_values() {
        let f = example_exp(1, 1.5, 0.8).unwrap();
        assert_eq!(f.drift(&[0.0]), vec![0.0]);
        assert_eq!(f.sigma_value(&[0.0]), SigmaValue::Scalar(1.0));
        assert!((f.drift(&[1.0])[0] + std::f64::consts::E).abs() < 1e-12);
        assert!((f.ell1(&[1.0]) - 2.0 * std::f64::consts::E.powi(2)).abs() < 1e-12);
        assert!(example_exp(1, 0.7, 0.8).is_err());
        assert!(example_exp(1, 2.0, 0.8).is_err());
    }

    #[test]
    fn moduli_bound_sampled_increments() {
        let f = example_poly(2, 1.0, 0.5, 1.5).unwrap();
        for &r in &[0.0, 1.0, 4.0] {
            let x = [r, -0.5 * r];
            for &h in &[1.0, 0.5, 0.1] {
                let y = [x[0] + 0.6 * h, x[1] - 0.8 * h];
                let db: f64 = f
                    .drift(&x)
                    .iter()
                    .zip(f.drift(&y))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(db <= f.ell1(&x) * h);
                let ds = f.sigma_value(&x).distance(&f.sigma_value(&y), 2);
                assert!(ds <= f.ell2(&x) * h);
            }
        }
    }
}
