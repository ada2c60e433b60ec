//! Low-level quadrature machinery shared by the operator, field and
//! diagnostics modules.
//!
//! The central routine is [`integrate_half_line`], which integrates a
//! radial profile over `(0, inf)` with three regions:
//!
//! * an inner region `(0, split]` split into panels graded geometrically
//!   (ratio 2) toward the origin, with the last sliver `(0, eps_min]`
//!   replaced by a two-term power-series remainder,
//! * a middle region `[split, far]` with user breakpoints,
//! * a far region `[far, inf)` mapped to `u = 1/r` on `(0, 1/far]` and
//!   graded toward `u = 0`.
//!
//! All panels go into a single globally adaptive Gauss–Kronrod (7/15)
//! loop which bisects the panel with the largest error estimate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// A value together with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }

    pub fn scale(self, c: f64) -> Self {
        Self {
            value: self.value * c,
            error: self.error * c.abs(),
        }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Gauss–Kronrod panel, QUADPACK error heuristics.
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Estimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..3 {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        resg += WG[j] * (f1 + f2);
        resk += WGK[jtw] * (f1 + f2);
        resabs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..4 {
        let jtwm1 = 2 * j;
        let dx = half * XGK[jtwm1];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        resk += WGK[jtwm1] * (f1 + f2);
        resabs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let result = resk * half;
    resabs *= half.abs();
    resasc *= half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    if !result.is_finite() {
        err = f64::INFINITY;
    }
    Estimate::new(result, err)
}

/// Absolute/relative tolerance pair.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

/// Variable in which a panel is parametrised.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    /// Integrate `h(r) dr` directly.
    Direct,
    /// Integrate `h(1/u) / u^2 du` (far field).
    Inverse,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    var: Var,
    est: Estimate,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.est
            .error
            .partial_cmp(&other.est.error)
            .unwrap_or(Ordering::Equal)
    }
}

fn eval_panel<F: FnMut(f64, bool) -> f64>(h: &mut F, lo: f64, hi: f64, var: Var) -> Panel {
    let est = match var {
        Var::Direct => gk15(&mut |r| h(r, false), lo, hi),
        Var::Inverse => gk15(
            &mut |u| {
                if u <= 0.0 {
                    0.0
                } else {
                    h(1.0 / u, true) / (u * u)
                }
            },
            lo,
            hi,
        ),
    };
    Panel { lo, hi, var, est }
}

/// Result of an adaptive integration. `converged == false` still carries the
/// best available estimate.
#[derive(Debug, Clone, Copy)]
pub struct Outcome {
    pub estimate: Estimate,
    pub converged: bool,
    pub target: f64,
}

impl Outcome {
    pub fn into_result(self) -> Result<Estimate> {
        if self.converged {
            Ok(self.estimate)
        } else {
            Err(Error::NonConvergence {
                best: self.estimate.value,
                achieved: self.estimate.error,
                requested: self.target,
            })
        }
    }
}

fn adapt<F: FnMut(f64, bool) -> f64>(
    h: &mut F,
    initial: Vec<(f64, f64, Var)>,
    fixed: Estimate,
    tol: Tolerance,
    max_subdivisions: usize,
) -> Outcome {
    let mut heap = BinaryHeap::with_capacity(initial.len() + max_subdivisions + 1);
    for (lo, hi, var) in initial {
        if hi > lo {
            heap.push(eval_panel(h, lo, hi, var));
        }
    }
    let sum = |heap: &BinaryHeap<Panel>| {
        let mut v = fixed.value;
        let mut e = fixed.error;
        for p in heap.iter() {
            v += p.est.value;
            e += p.est.error;
        }
        Estimate::new(v, e)
    };
    let mut total = sum(&heap);
    let mut splits = 0;
    while total.error > tol.target(total.value) && splits < max_subdivisions {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            heap.push(worst);
            break;
        }
        let left = eval_panel(h, worst.lo, mid, worst.var);
        let right = eval_panel(h, mid, worst.hi, worst.var);
        heap.push(left);
        heap.push(right);
        splits += 1;
        // Recompute from scratch every few splits to avoid drift in the sums.
        if splits % 64 == 0 {
            total = sum(&heap);
        } else {
            total.value += left.est.value + right.est.value - worst.est.value;
            total.error += left.est.error + right.est.error - worst.est.error;
        }
    }
    let total = sum(&heap);
    let target = tol.target(total.value);
    Outcome {
        estimate: total,
        converged: total.error <= target && total.error.is_finite(),
        target,
    }
}

/// Adaptive integration of `f` over `[a, b]` with optional interior breakpoints.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: Tolerance,
    max_subdivisions: usize,
) -> Outcome {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|&p| p > a && p < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let initial = pts.windows(2).map(|w| (w[0], w[1], Var::Direct)).collect();
    adapt(
        &mut |r, _| f(r),
        initial,
        Estimate::default(),
        tol,
        max_subdivisions,
    )
}

/// Adaptive integration of `f` over `[a, inf)`, with the tail mapped by `u = 1/r`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    breakpoints: &[f64],
    far: f64,
    tol: Tolerance,
    max_subdivisions: usize,
) -> Outcome {
    let far = far.max(a + 1.0);
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|&p| p > a && p < far))
        .chain(std::iter::once(far))
        .collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let mut initial: Vec<(f64, f64, Var)> =
        pts.windows(2).map(|w| (w[0], w[1], Var::Direct)).collect();
    let u0 = 1.0 / far;
    for k in 0..FAR_PIECES {
        let hi = u0 * 0.5f64.powi(k as i32);
        let lo = if k + 1 == FAR_PIECES { 0.0 } else { hi * 0.5 };
        initial.push((lo, hi, Var::Inverse));
    }
    adapt(
        &mut |r, _| f(r),
        initial,
        Estimate::default(),
        tol,
        max_subdivisions,
    )
}

const FAR_PIECES: usize = 64;

/// Geometry of a half-line radial integral.
#[derive(Debug, Clone)]
pub struct HalfLine {
    /// Inner/outer split radius.
    pub split: f64,
    /// Radius below which the integrand is replaced by its power series.
    pub eps_min: f64,
    /// Start of the `u = 1/r` mapped far field.
    pub far: f64,
    /// Interior breakpoints (anywhere in `(split, far)`; others ignored).
    pub breakpoints: Vec<f64>,
    /// Leading exponent `e` of the integrand near 0: `h(r) ~ r^e (a + b r^2)`.
    pub inner_exponent: f64,
    /// How to treat the far field.
    pub far_policy: FarPolicy,
}

/// Far-field treatment of half-line integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FarPolicy {
    /// Map `[far, inf)` onto `(0, 1/far]` by `u = 1/r`.
    #[default]
    ChangeOfVariable,
    /// Integrate up to `far * 2^64` in `r` and bound the rest by the decay of the last panel.
    TruncateWithBound,
}

/// Integrate a radial profile over `(0, inf)`.
///
/// `h(r, far)` evaluates the integrand; `far == true` means the caller may
/// return a far-field variant (e.g. with a constant term removed and
/// accounted for analytically). Returns the estimate of
/// `int_0^inf h(r) dr` (far-field variant beyond `geometry.far`).
pub fn integrate_half_line<F: FnMut(f64, bool) -> f64>(
    mut h: F,
    geometry: &HalfLine,
    tol: Tolerance,
    max_subdivisions: usize,
) -> std::result::Result<Outcome, Error> {
    let split = geometry.split;
    let far = geometry.far;
    debug_assert!(far > split, "far field must start beyond the split radius");
    let eps_min = geometry.eps_min.clamp(split * 1e-12, split * 0.25);

    // Power-series remainder on (0, eps_min].
    let e = geometry.inner_exponent;
    let q1 = h(eps_min, false) / eps_min.powf(e);
    let q2 = h(2.0 * eps_min, false) / (2.0 * eps_min).powf(e);
    let b = (q2 - q1) / (3.0 * eps_min * eps_min);
    let a = q1 - b * eps_min * eps_min;
    let lead = a * eps_min.powf(e + 1.0) / (e + 1.0);
    let corr = b * eps_min.powf(e + 3.0) / (e + 3.0);
    let remainder = if (lead + corr).is_finite() {
        Estimate::new(lead + corr, (corr * eps_min * eps_min).abs())
    } else {
        Estimate::new(0.0, f64::INFINITY)
    };

    let mut initial = Vec::new();
    let mut hi = split;
    while hi * 0.5 > eps_min * 1.5 {
        initial.push((hi * 0.5, hi, Var::Direct));
        hi *= 0.5;
    }
    initial.push((eps_min, hi, Var::Direct));

    let mut pts: Vec<f64> = std::iter::once(split)
        .chain(
            geometry
                .breakpoints
                .iter()
                .copied()
                .filter(|&p| p.is_finite() && p > split && p < far),
        )
        .chain(std::iter::once(far))
        .collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    for w in pts.windows(2) {
        initial.push((w[0], w[1], Var::Direct));
    }

    let n_far = initial.len();
    match geometry.far_policy {
        FarPolicy::ChangeOfVariable => {
            let u0 = 1.0 / far;
            for k in 0..FAR_PIECES {
                let hi = u0 * 0.5f64.powi(k as i32);
                initial.push((hi * 0.5, hi, Var::Inverse));
            }
        }
        FarPolicy::TruncateWithBound => {
            let mut lo = far;
            for _ in 0..FAR_PIECES {
                initial.push((lo, lo * 2.0, Var::Direct));
                lo *= 2.0;
            }
        }
    }

    // Geometric tail beyond the last far piece, extrapolated from the decay of
    // the three outermost pieces; the error is the disagreement between the
    // extrapolations started one piece apart.
    let tail = {
        let pieces: Vec<f64> = initial[n_far..]
            .iter()
            .rev()
            .take(3)
            .map(|&(lo, hi, var)| eval_panel(&mut h, lo, hi, var).est.value)
            .collect();
        let (last, prev, prev2) = (pieces[0], pieces[1], pieces[2]);
        let geometric = |a: f64, b: f64| {
            let ratio = a / b;
            (b != 0.0 && ratio > 0.0 && ratio < 1.0).then(|| a * ratio / (1.0 - ratio))
        };
        if last == 0.0 {
            Estimate::default()
        } else if let Some(t) = geometric(last, prev) {
            let err = match geometric(prev, prev2) {
                Some(t2) => ((t2 - last) - t).abs().max(64.0 * f64::EPSILON * t.abs()),
                None => t.abs(),
            };
            Estimate::new(t, err)
        } else if (last / prev).abs() >= 1.0 && last.abs() > tol.abs {
            return Err(Error::GrowthViolation {
                ratio: (last / prev).abs(),
            });
        } else {
            Estimate::new(0.0, last.abs())
        }
    };

    Ok(adapt(&mut h, initial, remainder + tail, tol, max_subdivisions))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    x.iter().zip(&w).map(|(&xi, &wi)| (c + h * xi, h * wi)).collect()
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / statrs::function::gamma::gamma(d as f64 / 2.0)
}

/// Node of the coarse companion rule used for the angular error estimate.
#[derive(Debug, Clone)]
pub enum Coarse {
    Shared(usize),
    Own(Vec<f64>),
}

/// Angular integration rule over the unit sphere, exploiting antipodal
/// symmetry of the integrand (half-sphere nodes, doubled weights).
#[derive(Debug, Clone)]
pub enum DirectionRule {
    Deterministic {
        nodes: Vec<(Vec<f64>, f64)>,
        coarse: Vec<(Coarse, f64)>,
    },
    QuasiRandom {
        replicates: Vec<Vec<(Vec<f64>, f64)>>,
    },
}

impl DirectionRule {
    /// Rule for integrands with `F(theta) = F(-theta)`.
    pub fn symmetric(d: usize, order: usize, mc_samples: usize, seed: u64) -> Self {
        let pi = std::f64::consts::PI;
        match d {
            1 => DirectionRule::Deterministic {
                nodes: vec![(vec![1.0], 2.0)],
                coarse: vec![(Coarse::Shared(0), 2.0)],
            },
            2 => {
                let n = order.max(4) & !1;
                let nodes: Vec<(Vec<f64>, f64)> = (0..n)
                    .map(|j| {
                        let phi = pi * (j as f64 + 0.5) / n as f64;
                        (vec![phi.cos(), phi.sin()], 2.0 * pi / n as f64)
                    })
                    .collect();
                // Every other node is itself an equispaced rule of half the order.
                let coarse = (0..n)
                    .step_by(2)
                    .map(|j| (Coarse::Shared(j), 4.0 * pi / n as f64))
                    .collect();
                DirectionRule::Deterministic { nodes, coarse }
            }
            3 => {
                let build = |nz: usize, nphi: usize| -> Vec<(Vec<f64>, f64)> {
                    let mut out = Vec::with_capacity(nz * nphi);
                    for (z, wz) in gauss_legendre_on(nz, 0.0, 1.0) {
                        let s = (1.0 - z * z).max(0.0).sqrt();
                        for j in 0..nphi {
                            let phi = 2.0 * pi * (j as f64 + 0.5) / nphi as f64;
                            out.push((
                                vec![s * phi.cos(), s * phi.sin(), z],
                                2.0 * wz * 2.0 * pi / nphi as f64,
                            ));
                        }
                    }
                    out
                };
                let nz = (order / 2).max(4);
                let nphi = order.max(8) & !1;
                let nodes = build(nz, nphi);
                let coarse = build((nz / 2).max(2), nphi / 2)
                    .into_iter()
                    .map(|(v, w)| (Coarse::Own(v), w))
                    .collect();
                DirectionRule::Deterministic { nodes, coarse }
            }
            _ => {
                let reps = 8usize;
                let per = (mc_samples / reps).max(8);
                let area = sphere_area(d);
                let mut rng = stream_rng(seed, u64::MAX - d as u64);
                let replicates = (0..reps)
                    .map(|_| {
                        let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                        (0..per)
                            .map(|i| {
                                let v = halton_normal(i + 1, d, &shift, &mut rng);
                                (v, area / per as f64)
                            })
                            .collect()
                    })
                    .collect();
                DirectionRule::QuasiRandom { replicates }
            }
        }
    }

    /// Integrate a vector-valued integrand over the sphere.
    pub fn integrate<F>(&self, mut f: F) -> Result<Vec<Estimate>>
    where
        F: FnMut(&[f64]) -> Result<Vec<Estimate>>,
    {
        match self {
            DirectionRule::Deterministic { nodes, coarse } => {
                let mut vals: Vec<Vec<Estimate>> = Vec::with_capacity(nodes.len());
                for (v, _) in nodes {
                    vals.push(f(v)?);
                }
                let k = vals[0].len();
                let mut fine = vec![Estimate::default(); k];
                for ((_, w), val) in nodes.iter().zip(&vals) {
                    for c in 0..k {
                        fine[c] = fine[c] + val[c].scale(*w);
                    }
                }
                let mut rough = vec![0.0; k];
                for (node, w) in coarse {
                    let val = match node {
                        Coarse::Shared(i) => vals[*i].clone(),
                        Coarse::Own(v) => f(v)?,
                    };
                    for c in 0..k {
                        rough[c] += w * val[c].value;
                    }
                }
                Ok(fine
                    .into_iter()
                    .zip(rough)
                    .map(|(e, r)| Estimate::new(e.value, e.error + (e.value - r).abs()))
                    .collect())
            }
            DirectionRule::QuasiRandom { replicates } => {
                let mut means: Vec<Vec<f64>> = Vec::new();
                let mut errs: Vec<f64> = Vec::new();
                for rep in replicates {
                    let mut acc: Vec<f64> = Vec::new();
                    let mut err_acc: Vec<f64> = Vec::new();
                    for (v, w) in rep {
                        let val = f(v)?;
                        if acc.is_empty() {
                            acc = vec![0.0; val.len()];
                            err_acc = vec![0.0; val.len()];
                        }
                        for c in 0..val.len() {
                            acc[c] += w * val[c].value;
                            err_acc[c] += w * val[c].error;
                        }
                    }
                    means.push(acc);
                    if errs.is_empty() {
                        errs = err_acc;
                    } else {
                        for (e, x) in errs.iter_mut().zip(err_acc) {
                            *e = e.max(x);
                        }
                    }
                }
                let r = means.len() as f64;
                let k = means[0].len();
                Ok((0..k)
                    .map(|c| {
                        let m = means.iter().map(|v| v[c]).sum::<f64>() / r;
                        let var = means.iter().map(|v| (v[c] - m).powi(2)).sum::<f64>() / (r - 1.0);
                        Estimate::new(m, 2.0 * (var / r).sqrt() + errs[c])
                    })
                    .collect())
            }
        }
    }
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// Cranley–Patterson shifted Halton point mapped to a uniform direction.
/// Dimensions beyond the prime table fall back to pseudo-random normals.
fn halton_normal<R: Rng>(i: usize, d: usize, shift: &[f64], rng: &mut R) -> Vec<f64> {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::standard();
    let mut v: Vec<f64> = (0..d)
        .map(|k| {
            if k < PRIMES.len() {
                let u = (radical_inverse(i as u64, PRIMES[k]) + shift[k]).fract();
                normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12))
            } else {
                rng.sample(StandardNormal)
            }
        })
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= n;
    }
    v
}
