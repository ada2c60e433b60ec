//! Grid checks of local regularity, dissipativity, the Lyapunov drift
//! inequality and the properties of the drift field `B`.
//!
//! Every check evaluates its inequality pointwise on a [`SamplingPlan`] and
//! returns a [`VerificationReport`]. Results hold on the scanned grid only;
//! reports record the largest scanned radius and make no claim beyond it.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fields::{b_field, div_b, norm, rho_alpha, CoefficientField};
use crate::operator::{frac_laplacian, lyapunov_drift, v_p, LyapunovParams, QuadratureSpec};
use crate::rng::stream_rng;

/// Version of the serialized report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Largest admissible fraction of indeterminate grid points.
pub const INDETERMINATE_CAP: f64 = 0.05;

/// Smallest fitted additive constant.
const FIT_FLOOR: f64 = 1e-9;

/// Points at which an inequality is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub dim: usize,
    pub radii: Vec<f64>,
    /// Directions used at each radius (the same count at every radius).
    pub directions_per_radius: usize,
    pub points: Vec<Vec<f64>>,
}

impl SamplingPlan {
    /// `n_radii` radii log-spaced over `(r_lo, r_hi]`, each carrying the `2d`
    /// signed axes plus `n_random` seeded random directions (none in `d = 1`,
    /// where they would repeat the axes).
    pub fn log_radial(
        dim: usize,
        r_lo: f64,
        r_hi: f64,
        n_radii: usize,
        n_random: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(r_lo > 0.0 && r_hi > r_lo) {
            return Err(invalid("grid", format!("need 0 < r_lo < r_hi, got ({r_lo}, {r_hi})")));
        }
        let radii: Vec<f64> = (1..=n_radii)
            .map(|k| r_lo * (r_hi / r_lo).powf(k as f64 / n_radii as f64))
            .collect();
        Self::on_radii(dim, radii, n_random, seed)
    }

    /// Default grid: 16 radii over `(1, 100]`, axes plus 8 random directions.
    pub fn default_grid(dim: usize) -> Self {
        Self::log_radial(dim, 1.0, 100.0, 16, 8, 0).expect("static grid is valid")
    }

    /// Radii `m k / n` for `k = 0..=n` filling the closed ball `B_m`.
    pub fn ball(dim: usize, m: f64, n_radii: usize, n_random: usize, seed: u64) -> Result<Self> {
        if !(m > 0.0) || n_radii == 0 {
            return Err(invalid("grid", "ball radius and radius count must be positive"));
        }
        let radii = (0..=n_radii).map(|k| m * k as f64 / n_radii as f64).collect();
        Self::on_radii(dim, radii, n_random, seed)
    }

    /// Plan on explicit radii.
    pub fn on_radii(dim: usize, radii: Vec<f64>, n_random: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "dimension must be at least 1"));
        }
        if radii.is_empty() {
            return Err(invalid("grid", "grid must be nonempty"));
        }
        let n_random = if dim == 1 { 0 } else { n_random };
        let mut points = Vec::new();
        for (k, &r) in radii.iter().enumerate() {
            for dir in directions(dim, n_random, seed, k as u64) {
                points.push(dir.iter().map(|v| r * v).collect());
            }
        }
        Ok(Self {
            dim,
            directions_per_radius: 2 * dim + n_random,
            radii,
            points,
        })
    }

    /// Plan on explicit points.
    pub fn from_points(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("grid", "grid must be nonempty"));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(invalid("grid", format!("every point must have {dim} coordinates")));
        }
        let mut radii: Vec<f64> = points.iter().map(|p| norm(p)).collect();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        radii.dedup();
        Ok(Self {
            dim,
            radii,
            directions_per_radius: 1,
            points,
        })
    }

    pub fn max_radius(&self) -> f64 {
        self.points.iter().map(|p| norm(p)).fold(0.0, f64::max)
    }

    fn summary(&self, used: usize, pass: bool) -> GridSummary {
        GridSummary {
            n_points: used,
            radii: self.radii.clone(),
            directions_per_radius: self.directions_per_radius,
            max_radius: self.max_radius(),
            grid_certified: pass,
        }
    }
}

fn directions(dim: usize, n_random: usize, seed: u64, stream: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * dim + n_random);
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[i] = s;
            out.push(e);
        }
    }
    let mut rng = stream_rng(seed, stream);
    while out.len() < 2 * dim + n_random {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            out.push(v.iter().map(|c| c / n).collect());
        }
    }
    out
}

/// Summary of the scanned grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    /// Points that entered the check.
    pub n_points: usize,
    pub radii: Vec<f64>,
    pub directions_per_radius: usize,
    pub max_radius: f64,
    /// The inequality held at every scanned point. No claim is made beyond
    /// `max_radius`.
    pub grid_certified: bool,
}

/// Slack of the checked inequality at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub x: Vec<f64>,
    pub radius: f64,
    /// Left side of the inequality.
    pub lhs: f64,
    /// Fitted right side.
    pub bound: f64,
    /// Numerical error of `lhs`.
    pub error: f64,
    /// `bound - lhs - error`, absent when the point is indeterminate.
    pub slack: Option<f64>,
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub check: String,
    pub field: String,
    pub grid: GridSummary,
    pub q_used: Option<f64>,
    pub params: Option<LyapunovParams>,
    pub margins: Vec<Margin>,
    /// Fitted constants and empirical extrema, keyed by name.
    pub fitted: BTreeMap<String, f64>,
    pub pass: bool,
    pub tolerances: Option<QuadratureSpec>,
    pub indeterminate: usize,
    pub warnings: Vec<String>,
}

impl VerificationReport {
    fn new(check: &str, field: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            check: check.into(),
            field: field.into(),
            grid: GridSummary {
                n_points: 0,
                radii: Vec::new(),
                directions_per_radius: 0,
                max_radius: 0.0,
                grid_certified: false,
            },
            q_used: None,
            params: None,
            margins: Vec::new(),
            fitted: BTreeMap::new(),
            pass: false,
            tolerances: None,
            indeterminate: 0,
            warnings: Vec::new(),
        }
    }

    /// Smallest slack over determinate points.
    pub fn min_slack(&self) -> Option<f64> {
        self.margins
            .iter()
            .filter_map(|m| m.slack)
            .reduce(f64::min)
    }

    pub fn fitted_value(&self, key: &str) -> Option<f64> {
        self.fitted.get(key).copied()
    }
}

/// Pointwise evaluation `(x, |x|, lhs, error, growth)`; `None` marks an indeterminate point.
struct Sample {
    x: Vec<f64>,
    radius: f64,
    value: Option<(f64, f64)>,
    growth: f64,
}

/// Fit `lhs <= -lead * growth + offset`.
///
/// `lead` is the smallest normalized deficit `(-lhs - err) / growth` over the
/// outer half of the grid (`|x| >= max_radius / 2`), clamped at 0; `offset`
/// is the smallest constant making the inequality hold on the inner half.
/// With `lead > 0` the outer points then hold automatically, so the check
/// passes iff the decay is visible at the largest scanned radii.
fn fit_and_margins(samples: &[Sample], max_radius: f64) -> (f64, f64, Vec<Margin>) {
    let tail_from = 0.5 * max_radius;
    let lead = samples
        .iter()
        .filter(|s| s.radius >= tail_from)
        .filter_map(|s| s.value.map(|(l, e)| (-l - e) / s.growth))
        .fold(f64::INFINITY, f64::min);
    // A few ulps inward on both constants, so that rounding in `bound` cannot
    // turn the extremal slacks negative.
    let guard = 8.0 * f64::EPSILON;
    let lead = if lead.is_finite() { (lead * (1.0 - guard)).max(0.0) } else { 0.0 };
    let offset = samples
        .iter()
        .filter(|s| s.radius < tail_from)
        .filter_map(|s| {
            s.value.map(|(l, e)| {
                let g = lead * s.growth;
                l + e + g + guard * (l.abs() + e + g)
            })
        })
        .fold(FIT_FLOOR, f64::max);
    let margins = samples
        .iter()
        .map(|s| {
            let bound = -lead * s.growth + offset;
            let (lhs, error, slack) = match s.value {
                Some((l, e)) => (l, e, Some(bound - l - e)),
                None => (0.0, 0.0, None),
            };
            Margin {
                x: s.x.clone(),
                radius: s.radius,
                lhs,
                bound,
                error,
                slack,
            }
        })
        .collect();
    (lead, offset, margins)
}

fn finish_fit(
    report: &mut VerificationReport,
    plan: &SamplingPlan,
    samples: Vec<Sample>,
    names: (&str, &str),
) {
    let used = samples.len();
    let indeterminate = samples.iter().filter(|s| s.value.is_none()).count();
    let (lead, offset, margins) = fit_and_margins(&samples, plan.max_radius());
    let all_hold = margins.iter().all(|m| m.slack.is_none_or(|s| s >= 0.0));
    let few_unknown = (indeterminate as f64) <= INDETERMINATE_CAP * used as f64;
    if indeterminate > 0 {
        report.warnings.push(format!(
            "{indeterminate} of {used} points indeterminate (quadrature did not converge); excluded"
        ));
    }
    if !few_unknown {
        report.warnings.push(format!(
            "indeterminate fraction exceeds {}%",
            100.0 * INDETERMINATE_CAP
        ));
    }
    if lead <= 0.0 {
        report
            .warnings
            .push("no decay at the outer radii: fitted leading constant is 0".into());
    }
    report.fitted.insert(names.0.into(), lead);
    report.fitted.insert(names.1.into(), offset);
    report.indeterminate = indeterminate;
    report.margins = margins;
    report.pass = lead > 0.0 && all_hold && few_unknown && used > indeterminate;
    report.grid = plan.summary(used, report.pass);
}

fn skip_inner<'a>(plan: &'a SamplingPlan, report: &mut VerificationReport) -> Vec<&'a Vec<f64>> {
    let pts: Vec<&Vec<f64>> = plan.points.iter().filter(|p| norm(p) > 1.0).collect();
    let skipped = plan.points.len() - pts.len();
    if skipped > 0 {
        report
            .warnings
            .push(format!("{skipped} points with |x| <= 1 skipped"));
    }
    pts
}

/// Nondegeneracy and Hölder increments on `B_m`.
///
/// Reports the empirical `C_m = max(max sigma, 1 / min sigma)` over grid
/// points in `B_m`, and the largest normalized increments
/// `|b(x) - b(y)| / (l1(x) |x - y|^gamma)` (likewise for `sigma` with `l2`)
/// over probes `y = x + h e` with `h in {1, 1/2, 1/4}` along the signed axes.
/// Passes iff both normalized quotients are at most 1 and the empirical
/// `C_m` does not exceed the field's recorded bound (when one is recorded).
pub fn check_hloc(field: &CoefficientField, m: f64, plan: &SamplingPlan) -> VerificationReport {
    let mut report = VerificationReport::new("hloc", &field.label);
    let d = field.dim;
    let gamma = field.holder_gamma;
    let pts: Vec<&Vec<f64>> = plan.points.iter().filter(|p| norm(p) <= m * (1.0 + 1e-12)).collect();
    let rows: Vec<(f64, f64, f64, f64, f64, Margin)> = pts
        .par_iter()
        .map(|x| {
            let (lo, hi) = field.sigma_value(x).singular_bounds();
            let c = hi.max(1.0 / lo);
            let b0 = field.drift(x);
            let s0 = field.sigma_value(x);
            let (l1, l2) = (field.ell1(x), field.ell2(x));
            let (mut qb, mut qs, mut rb, mut rs) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            let mut y = x.to_vec();
            for i in 0..d {
                for h in [1.0, -1.0, 0.5, -0.5, 0.25, -0.25] {
                    y[i] = x[i] + h;
                    let hg = f64::abs(h).powf(gamma);
                    let db = norm(
                        &b0.iter()
                            .zip(field.drift(&y))
                            .map(|(a, b)| a - b)
                            .collect::<Vec<_>>(),
                    );
                    let ds = s0.distance(&field.sigma_value(&y), d);
                    rb = rb.max(db / hg);
                    rs = rs.max(ds / hg);
                    qb = qb.max(ratio(db, l1 * hg));
                    qs = qs.max(ratio(ds, l2 * hg));
                }
                y[i] = x[i];
            }
            let lhs = qb.max(qs);
            let margin = Margin {
                x: x.to_vec(),
                radius: norm(x),
                lhs,
                bound: 1.0,
                error: 0.0,
                slack: Some(1.0 - lhs),
            };
            (c, qb, qs, rb, rs, margin)
        })
        .collect();
    let fold = |k: usize| {
        rows.iter()
            .map(|r| [r.0, r.1, r.2, r.3, r.4][k])
            .fold(0.0, f64::max)
    };
    let c_emp = fold(0);
    report.fitted.insert("c_m_empirical".into(), c_emp);
    report.fitted.insert("holder_quotient_drift".into(), fold(1));
    report.fitted.insert("holder_quotient_sigma".into(), fold(2));
    report.fitted.insert("holder_increment_drift".into(), fold(3));
    report.fitted.insert("holder_increment_sigma".into(), fold(4));
    report.fitted.insert("m".into(), m);
    let mut pass = !rows.is_empty();
    if rows.is_empty() {
        report.warnings.push(format!("no grid point inside B_{m}"));
    }
    match field.local_bound(m) {
        Some(c_m) => {
            report.fitted.insert("c_m_recorded".into(), c_m);
            if c_emp > c_m * (1.0 + 1e-12) {
                report
                    .warnings
                    .push(format!("empirical C_m = {c_emp} exceeds recorded {c_m}"));
                pass = false;
            }
        }
        None => {
            if !c_emp.is_finite() {
                pass = false;
            }
        }
    }
    report.margins = rows.into_iter().map(|r| r.5).collect();
    pass &= report.margins.iter().all(|m| m.slack.is_some_and(|s| s >= 0.0));
    report.pass = pass;
    report.grid = plan.summary(report.margins.len(), pass);
    report
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den > 0.0 {
        num / den
    } else {
        f64::MAX
    }
}

/// Dissipativity
/// `<x, b> + eps0 l1 |x| + q (|sigma| + eps0 l2)^alpha |x|^{2 - alpha} <= -c0 |x|^{2 + r} + c1`
/// on grid points with `|x| > 1`, with the spectral norm of `sigma`.
pub fn check_dissipativity(
    field: &CoefficientField,
    params: &LyapunovParams,
    plan: &SamplingPlan,
) -> VerificationReport {
    let mut report = VerificationReport::new("dissipativity", &field.label);
    report.q_used = Some(params.q);
    report.params = Some(*params);
    let alpha = field.alpha;
    let pts = skip_inner(plan, &mut report);
    let samples: Vec<Sample> = pts
        .par_iter()
        .map(|x| {
            let r = norm(x);
            let b = field.drift(x);
            let xb: f64 = x.iter().zip(&b).map(|(a, c)| a * c).sum();
            let eps = params.epsilon0;
            let l1 = if eps > 0.0 { field.ell1(x) } else { 0.0 };
            let l2 = if eps > 0.0 { field.ell2(x) } else { 0.0 };
            let s = field.sigma_value(x).norm();
            let lhs = xb + eps * l1 * r + params.q * (s + eps * l2).powf(alpha) * r.powf(2.0 - alpha);
            let err = 8.0 * f64::EPSILON * (xb.abs() + lhs.abs());
            Sample {
                x: x.to_vec(),
                radius: r,
                value: lhs.is_finite().then_some((lhs, err)),
                growth: r.powf(2.0 + params.r),
            }
        })
        .collect();
    finish_fit(&mut report, plan, samples, ("c0", "c1"));
    report
}

/// Lyapunov drift `L V_p(x) <= -kappa0 V_p(x)^{1 + r/p} + kappa1` with
/// `L V_p` by quadrature; points where the quadrature fails are indeterminate.
pub fn check_lyapunov(
    field: &CoefficientField,
    params: &LyapunovParams,
    plan: &SamplingPlan,
    quad: &QuadratureSpec,
) -> VerificationReport {
    let mut report = VerificationReport::new("lyapunov", &field.label);
    report.q_used = Some(params.q);
    report.params = Some(*params);
    report.tolerances = Some(quad.clone());
    let pts = skip_inner(plan, &mut report);
    let samples: Vec<Sample> = pts
        .par_iter()
        .map(|x| {
            let value = lyapunov_drift(field, params, x, quad)
                .ok()
                .map(|e| (e.value, e.error));
            Sample {
                x: x.to_vec(),
                radius: norm(x),
                value,
                growth: v_p(x, params.p).powf(1.0 + params.r / params.p),
            }
        })
        .collect();
    finish_fit(&mut report, plan, samples, ("kappa0", "kappa1"));
    report
}

/// Tolerances for [`check_b_properties`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BCheckTolerances {
    /// `|B(0)|`.
    pub origin: f64,
    /// `|B(-x) + B(x)| / |B(x)|`.
    pub oddness: f64,
    /// `|div B - frac_laplacian rho_alpha| / |frac_laplacian rho_alpha|`.
    pub divergence: f64,
}

impl Default for BCheckTolerances {
    fn default() -> Self {
        Self {
            origin: 1e-12,
            oddness: 1e-8,
            divergence: 1e-3,
        }
    }
}

/// Decay, sign and divergence properties of `B` for `(alpha, d)`.
///
/// On nonzero grid points: `kappa0_hat = max |B(x)| |x|^{d+alpha-1}`,
/// the normalized inner product `<x, B(x)> |x|^{d+alpha-2}` (its maximum must
/// be negative; `kappa1_hat` is minus that maximum) and oddness. At
/// `div_points`, the relative error of `div B` against the fractional
/// Laplacian of `rho_alpha`. Quadrature failures surface as errors.
pub fn check_b_properties(
    alpha: f64,
    dim: usize,
    plan: &SamplingPlan,
    quad: &QuadratureSpec,
    div_points: &[Vec<f64>],
    tol: &BCheckTolerances,
) -> Result<VerificationReport> {
    crate::stable_noise::check_alpha(alpha)?;
    let mut report = VerificationReport::new("b-properties", &format!("B(alpha={alpha}, d={dim})"));
    report.tolerances = Some(quad.clone());
    let pts: Vec<&Vec<f64>> = plan.points.iter().filter(|p| norm(p) > 0.0).collect();
    let df = dim as f64;
    let rows: Vec<(Margin, f64, f64)> = pts
        .par_iter()
        .map(|x| -> Result<(Margin, f64, f64)> {
            let r = norm(x);
            let b = b_field(x, alpha, quad)?;
            let minus: Vec<f64> = x.iter().map(|v| -v).collect();
            let bm = b_field(&minus, alpha, quad)?;
            let bv: Vec<f64> = b.iter().map(|e| e.value).collect();
            let bn = norm(&bv);
            let odd = norm(&bv.iter().zip(&bm).map(|(a, c)| a + c.value).collect::<Vec<_>>());
            let odd_rel = if bn > 0.0 { odd / bn } else { odd };
            let ip: f64 = x.iter().zip(&bv).map(|(a, c)| a * c).sum();
            let ip_err: f64 = x.iter().zip(&b).map(|(a, c)| a.abs() * c.error).sum();
            let scale = r.powf(df + alpha - 2.0);
            let (lhs, error) = (ip * scale, ip_err * scale);
            let margin = Margin {
                x: x.to_vec(),
                radius: r,
                lhs,
                bound: 0.0,
                error,
                slack: Some(-lhs - error),
            };
            Ok((margin, bn * r.powf(df + alpha - 1.0), odd_rel))
        })
        .collect::<Result<Vec<_>>>()?;
    let kappa0 = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let ip_max = rows.iter().map(|r| r.0.lhs).fold(f64::NEG_INFINITY, f64::max);
    let odd_max = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let origin = norm(
        &b_field(&vec![0.0; dim], alpha, quad)?
            .iter()
            .map(|e| e.value)
            .collect::<Vec<_>>(),
    );
    let div_errs: Vec<f64> = div_points
        .par_iter()
        .map(|x| -> Result<f64> {
            let div = div_b(x, alpha, quad)?;
            let lap = frac_laplacian(&|y: &[f64]| rho_alpha(y, alpha), x, alpha, quad)?;
            Ok((div.value - lap.value).abs() / lap.value.abs())
        })
        .collect::<Result<Vec<_>>>()?;
    let div_max = div_errs.iter().copied().fold(0.0, f64::max);
    report.fitted.insert("kappa0_hat".into(), kappa0);
    report.fitted.insert("kappa1_hat".into(), -ip_max);
    report.fitted.insert("inner_product_normalized_max".into(), ip_max);
    report.fitted.insert("oddness_rel_max".into(), odd_max);
    report.fitted.insert("origin_norm".into(), origin);
    report.fitted.insert("divergence_rel_max".into(), div_max);
    let mut pass = !rows.is_empty();
    if origin > tol.origin {
        report.warnings.push(format!("|B(0)| = {origin} exceeds {}", tol.origin));
        pass = false;
    }
    if odd_max > tol.oddness {
        report.warnings.push(format!("oddness defect {odd_max} exceeds {}", tol.oddness));
        pass = false;
    }
    if div_max > tol.divergence {
        report
            .warnings
            .push(format!("divergence identity defect {div_max} exceeds {}", tol.divergence));
        pass = false;
    }
    if !kappa0.is_finite() {
        pass = false;
    }
    report.margins = rows.into_iter().map(|r| r.0).collect();
    pass &= report.margins.iter().all(|m| m.slack.is_some_and(|s| s > 0.0));
    report.pass = pass;
    report.grid = plan.summary(report.margins.len(), pass);
    Ok(report)
}

/// Radius `(2 q / kappa1)^{1/alpha} v 1` beyond which the sampling
/// coefficients satisfy the dissipativity inequality.
pub fn sampling_dissipativity_radius(q: f64, kappa1: f64, alpha: f64) -> f64 {
    (2.0 * q / kappa1).powf(1.0 / alpha).max(1.0)
}
