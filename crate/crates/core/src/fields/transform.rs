//! Mollification and radial cutoff of coefficient fields.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::fields::{
    holder_estimator_drift, holder_estimator_sigma, norm, scan_local_bounds, CoefficientField,
    SigmaValue, DEFAULT_BOUND_RADII,
};
use crate::operator::QuadratureSpec;
use crate::quadrature::{gauss_legendre_on, integrate, sphere_area, DirectionRule, Tolerance};

/// Even bump `phi(y) ~ exp(-1 / (1 - |y|^2))` on the unit ball, scaled to radius `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollifier {
    pub dim: usize,
    pub eps: f64,
    normalization: f64,
}

fn raw_bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

impl Mollifier {
    pub fn new(dim: usize, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid("eps", format!("must lie in (0, 1), got {eps}")));
        }
        Self::with_radius(dim, eps)
    }

    /// Same bump at an arbitrary radius `eps >= 0` (used for time-dependent smoothing).
    pub fn with_radius(dim: usize, eps: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "dimension must be at least 1"));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(invalid("eps", "radius must be finite and nonnegative"));
        }
        let radial = integrate(
            |r| r.powi(dim as i32 - 1) * raw_bump(r * r),
            0.0,
            1.0,
            &[0.5, 0.9],
            Tolerance {
                abs: 1e-16,
                rel: 1e-13,
            },
            2000,
        );
        Ok(Self {
            dim,
            eps,
            normalization: sphere_area(dim) * radial.estimate.value,
        })
    }

    pub fn rescaled(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }

    /// Unit-mass bump on the unit ball (radius 1, independent of `eps`).
    pub fn bump(&self, y: &[f64]) -> f64 {
        raw_bump(y.iter().map(|v| v * v).sum()) / self.normalization
    }

    /// Symmetric nodes in the unit ball with weights summing to one. Every
    /// node comes with its mirror image, so odd moments vanish exactly.
    pub fn nodes(&self, quad: &QuadratureSpec) -> Arc<Vec<(Vec<f64>, f64)>> {
        let d = self.dim;
        let radial_order = 24;
        let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
        if d == 1 {
            for (y, w) in gauss_legendre_on(48, -1.0, 1.0) {
                out.push((vec![y], w * raw_bump(y * y)));
            }
        } else {
            let dirs: Vec<(Vec<f64>, f64)> = match quad.direction_rule(d) {
                DirectionRule::Deterministic { nodes, .. } => nodes,
                DirectionRule::QuasiRandom { replicates } => {
                    replicates.into_iter().next().unwrap_or_default()
                }
            };
            for (r, wr) in gauss_legendre_on(radial_order, 0.0, 1.0) {
                let radial = wr * r.powi(d as i32 - 1) * raw_bump(r * r);
                for (theta, wt) in &dirs {
                    // Half-sphere weights already count both antipodes.
                    let w = 0.5 * wt * radial;
                    out.push((theta.iter().map(|t| r * t).collect(), w));
                    out.push((theta.iter().map(|t| -r * t).collect(), w));
                }
            }
        }
        let total: f64 = out.iter().map(|(_, w)| w).sum();
        for (_, w) in &mut out {
            *w /= total;
        }
        Arc::new(out)
    }
}

/// `out = sum_j w_j b(x - eps y_j)`.
pub(crate) fn convolve_drift(
    field: &CoefficientField,
    nodes: &[(Vec<f64>, f64)],
    eps: f64,
    x: &[f64],
    out: &mut [f64],
) {
    if eps == 0.0 {
        field.drift_into(x, out);
        return;
    }
    let d = x.len();
    let mut y = vec![0.0; d];
    let mut b = vec![0.0; d];
    out.fill(0.0);
    for (node, w) in nodes {
        for i in 0..d {
            y[i] = x[i] - eps * node[i];
        }
        field.drift_into(&y, &mut b);
        for i in 0..d {
            out[i] += w * b[i];
        }
    }
}

fn convolve_sigma(
    field: &CoefficientField,
    nodes: &[(Vec<f64>, f64)],
    eps: f64,
    x: &[f64],
) -> SigmaValue {
    let d = x.len();
    let mut y = vec![0.0; d];
    let mut scalar = 0.0;
    let mut matrix: Option<nalgebra::DMatrix<f64>> = None;
    for (node, w) in nodes {
        for i in 0..d {
            y[i] = x[i] - eps * node[i];
        }
        match field.sigma_value(&y) {
            SigmaValue::Scalar(s) => scalar += w * s,
            SigmaValue::Matrix(m) => {
                let acc = matrix.get_or_insert_with(|| nalgebra::DMatrix::zeros(d, d));
                *acc += m * *w;
            }
        }
    }
    match matrix {
        None => SigmaValue::Scalar(scalar),
        Some(m) => SigmaValue::Matrix(m + nalgebra::DMatrix::identity(d, d) * scalar),
    }
}

/// Convolution of `b` and `sigma` with the mollifier at radius `moll.eps`.
pub fn mollify(
    field: &CoefficientField,
    moll: &Mollifier,
    quad: &QuadratureSpec,
) -> Result<CoefficientField> {
    if moll.dim != field.dim {
        return Err(invalid("mollifier.dim", "does not match the field dimension"));
    }
    let nodes = moll.nodes(quad);
    let eps = moll.eps;
    let mut out = field.clone();
    let (f, n) = (field.clone(), nodes.clone());
    out.replace_drift(Arc::new(move |x, o| convolve_drift(&f, &n, eps, x, o)));
    let (f, n) = (field.clone(), nodes);
    out.replace_sigma(Arc::new(move |x| convolve_sigma(&f, &n, eps, x)));
    // The convolution inherits the moduli of the eps-neighbourhood.
    let (f1, f2, d) = (field.clone(), field.clone(), field.dim);
    let probes = move |x: &[f64]| -> Vec<Vec<f64>> {
        let mut pts = vec![x.to_vec()];
        for i in 0..d {
            for s in [eps, -eps] {
                let mut y = x.to_vec();
                y[i] += s;
                pts.push(y);
            }
        }
        pts
    };
    let p1 = probes.clone();
    out = out.with_holder(
        field.holder_gamma,
        move |x| p1(x).iter().map(|y| f1.ell1(y)).fold(0.0, f64::max),
        move |x| probes(x).iter().map(|y| f2.ell2(y)).fold(0.0, f64::max),
    );
    out.local_bounds = scan_local_bounds(&out.sigma_fn(), field.dim, &DEFAULT_BOUND_RADII);
    out.label = format!("mollified(eps={eps})[{}]", field.label);
    Ok(out)
}

/// Smooth radial step: 1 on `[0, 1/2]`, 0 on `[1, inf)`.
pub fn cutoff_weight(s: f64) -> f64 {
    if s <= 0.5 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let g = |t: f64| (-1.0 / t).exp();
        let a = g(1.0 - s);
        a / (a + g(s - 0.5))
    }
}

/// `b_m(x) = b(x) chi(|x|/m)`, `sigma_m(x) = sigma(x chi(|x|/m))`.
pub fn cutoff(field: &CoefficientField, m: f64) -> Result<CoefficientField> {
    if !(m >= 1.0) {
        return Err(invalid("m", format!("cutoff radius must be at least 1, got {m}")));
    }
    let mut out = field.clone();
    let f = field.clone();
    out.replace_drift(Arc::new(move |x, o| {
        let r = norm(x);
        if r <= 0.5 * m {
            f.drift_into(x, o);
        } else if r >= m {
            o.fill(0.0);
        } else {
            f.drift_into(x, o);
            let c = cutoff_weight(r / m);
            o.iter_mut().for_each(|v| *v *= c);
        }
    }));
    let f = field.clone();
    out.replace_sigma(Arc::new(move |x| {
        let r = norm(x);
        if r <= 0.5 * m {
            f.sigma_value(x)
        } else {
            let c = cutoff_weight(r / m);
            let y: Vec<f64> = x.iter().map(|v| v * c).collect();
            f.sigma_value(&y)
        }
    }));
    let d = field.dim;
    let gamma = field.holder_gamma;
    let (drift, sigma) = (out.drift_fn(), out.sigma_fn());
    let e1 = holder_estimator_drift(drift, d, gamma);
    let e2 = holder_estimator_sigma(sigma, d, gamma);
    out = out.with_holder(gamma, move |x| e1(x), move |x| e2(x));
    let mut radii: Vec<f64> = DEFAULT_BOUND_RADII.to_vec();
    radii.extend([m, 10.0 * m]);
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    radii.dedup();
    out.local_bounds = scan_local_bounds(&out.sigma_fn(), d, &radii);
    out.label = format!("cutoff(m={m})[{}]", field.label);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::example_poly;

    #[test]
    fn bump_has_unit_mass() {
        for d in 1..=3 {
            let m = Mollifier::new(d, 0.1).unwrap();
            // Independent radial quadrature of the normalized bump.
            let radial = integrate(
                |r| {
                    let mut y = vec![0.0; d];
                    y[0] = r;
                    r.powi(d as i32 - 1) * m.bump(&y)
                },
                0.0,
                1.0,
                &[0.25, 0.5, 0.75],
                Tolerance {
                    abs: 1e-15,
                    rel: 1e-12,
                },
                4000,
            );
            let mass = sphere_area(d) * radial.estimate.value;
            assert!((mass - 1.0).abs() < 1e-8, "d = {d}: {mass}");
            assert_eq!(m.bump(&vec![1.0; d]), 0.0);
            let w: f64 = m.nodes(&QuadratureSpec::default()).iter().map(|(_, w)| w).sum();
            assert!((w - 1.0).abs() < 1e-12, "d = {d}: weights sum to {w}");
        }
        assert!(Mollifier::new(1, 1.0).is_err());
    }

    #[test]
    fn affine_drift_and_constant_sigma_are_preserved() {
        for d in 1..=2 {
            let f = CoefficientField::new(
                1.5,
                d,
                |x, o| {
                    for (i, v) in o.iter_mut().enumerate() {
                        *v = 2.0 * x[i] - 1.0 + i as f64;
                    }
                },
                |_| SigmaValue::Scalar(3.0),
            )
            .unwrap();
            let m = mollify(&f, &Mollifier::new(d, 0.2).unwrap(), &QuadratureSpec::default()).unwrap();
            let x = vec![0.7; d];
            for (a, b) in m.drift(&x).iter().zip(f.drift(&x)) {
                assert!((a - b).abs() < 1e-13);
            }
            match m.sigma_value(&x) {
                SigmaValue::Scalar(s) => assert!((s - 3.0).abs() < 1e-13),
                SigmaValue::Matrix(_) => panic!("scalar sigma expected"),
            }
        }
    }

    #[test]
    fn mollified_poly_within_holder_bound() {
        let f = example_poly(1, 1.0, 0.5, 1.5).unwrap();
        let eps = 0.1;
        let m = mollify(&f, &Mollifier::new(1, eps).unwrap(), &QuadratureSpec::default()).unwrap();
        let mut sup: f64 = 0.0;
        let mut ell: f64 = 0.0;
        for k in -40..=40 {
            let x = [k as f64 * 0.25];
            sup = sup.max((m.drift(&x)[0] - f.drift(&x)[0]).abs());
            ell = ell.max(f.ell1(&x));
        }
        assert!(sup <= eps.powf(f.holder_gamma) * ell);
    }

    #[test]
    fn cutoff_locality_and_vanishing() {
        let f = example_poly(1, 1.0, 0.5, 1.5).unwrap();
        let m = 4.0;
        let c = cutoff(&f, m).unwrap();
        for &x in &[0.0, 1.0, -2.0] {
            assert_eq!(c.drift(&[x]), f.drift(&[x]));
            assert_eq!(c.sigma_value(&[x]), f.sigma_value(&[x]));
        }
        for &x in &[4.0, -7.0, 100.0] {
            assert_eq!(c.drift(&[x]), vec![0.0]);
        }
        let cm = f.local_bound(m).unwrap();
        for k in 0..=400 {
            let x = [k as f64 * 0.1];
            let (lo, _) = c.sigma_value(&x).singular_bounds();
            assert!(lo >= 1.0 / cm);
        }
    }

    #[test]
    fn cutoff_weight_is_monotone() {
        let mut prev = 1.0;
        for k in 0..=100 {
            let w = cutoff_weight(k as f64 / 80.0);
            assert!(w <= prev && (0.0..=1.0).contains(&w));
            prev = w;
        }
    }
}
