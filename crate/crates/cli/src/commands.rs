//! Command implementations. Each returns the process exit status.

use std::io::BufRead;

use serde::Serialize;
use serde_json::json;
use stablesde::diagnostics::{
    diagnose_batch, heatkernel_shape, target_cdf, write_cdf_overlay, HeatKernelOptions,
};
use stablesde::fields::{
    example_exp, example_poly, make_additive_baseline, make_sampling_coefficients,
    CoefficientField, Mollifier, TargetSpec,
};
use stablesde::hashing::fmt_f64;
use stablesde::operator::LyapunovParams;
use stablesde::simulator::{hitting_probability, sample_invariant, SampleBatch, SimConfig};
use stablesde::stable_noise::{calibrate_with, calibration_quadrature, charfn_check, convention_scale};
use stablesde::verifier::{
    check_b_properties, check_dissipativity, check_hloc, check_lyapunov, BCheckTolerances,
    SamplingPlan, VerificationReport,
};

use crate::config::{Check, Command, Format, RunConfig};
use crate::output::RunDir;
use crate::CliError;

pub fn dispatch(cmd: Command, cfg: &RunConfig, dir: &mut RunDir) -> Result<i32, CliError> {
    match cmd {
        Command::StableTest => stable_test(cfg, dir),
        Command::Calibrate => calibrate(cfg, dir),
        Command::Field => field(cfg, dir),
        Command::Verify => verify(cfg, dir),
        Command::Sample => sample(cfg, dir),
        Command::Diagnose => diagnose(cfg, dir),
        Command::HkCheck => hk_check(cfg, dir),
        Command::Hitprob => hitprob(cfg, dir),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn build_target(cfg: &RunConfig) -> Result<TargetSpec, CliError> {
    let d = cfg.d;
    let t = match cfg.target.as_deref() {
        Some("student") => TargetSpec::student(d, cfg.beta.unwrap_or(1.0))?,
        Some("cauchy") => TargetSpec::cauchy_like(d)?,
        Some("rho-alpha") => TargetSpec::rho_alpha(d, cfg.alpha)?,
        Some("custom") | None if cfg.potential.is_some() => {
            let src = cfg.potential.as_deref().expect("guarded");
            TargetSpec::from_expression(src, d, cfg.beta, None)?
        }
        Some(other) => {
            return Err(usage(format!(
                "`target`: unknown target `{other}` (student, cauchy, rho-alpha, custom)"
            )))
        }
        None => return Err(usage("`target`: no target given")),
    };
    Ok(t)
}

fn preset_name(cfg: &RunConfig) -> Result<&str, CliError> {
    if let Some(p) = cfg.preset.as_deref() {
        return Ok(p);
    }
    if cfg.drift.is_some() {
        Ok("custom")
    } else if cfg.target.is_some() || cfg.potential.is_some() {
        Ok("sampling")
    } else {
        Err(usage("`preset`: no field given (use preset, drift or target)"))
    }
}

pub fn build_field(cfg: &RunConfig) -> Result<CoefficientField, CliError> {
    let (a, d) = (cfg.alpha, cfg.d);
    let f = match preset_name(cfg)? {
        "example13" => example_poly(d, cfg.beta.unwrap_or(1.0), cfg.gamma.unwrap_or(0.5), a)?,
        "example14" => example_exp(d, cfg.beta.unwrap_or(1.5), a)?,
        "pure-noise" => CoefficientField::pure_noise(a, d)?,
        "additive" => make_additive_baseline(a, d, &cfg.quad)?,
        "sampling" => make_sampling_coefficients(&build_target(cfg)?, a, &cfg.quad)?,
        "custom" => {
            let drift = cfg
                .drift
                .as_deref()
                .ok_or_else(|| usage("`drift`: the custom preset needs a drift expression"))?;
            CoefficientField::from_expressions(a, d, drift, cfg.sigma.as_deref().unwrap_or("1"))?
        }
        other => {
            return Err(usage(format!(
                "`preset`: unknown preset `{other}` (example13, example14, pure-noise, additive, sampling, custom)"
            )))
        }
    };
    Ok(f)
}

/// Growth exponent `r` implied by the preset unless given.
fn lyapunov_params(cfg: &RunConfig, field: &CoefficientField) -> Result<LyapunovParams, CliError> {
    let r = match cfg.r {
        Some(r) => r,
        None => match preset_name(cfg)? {
            "example13" => cfg.beta.unwrap_or(1.0),
            "example14" => 1.0,
            "sampling" => field.target.as_ref().map_or(0.0, |t| t.tail_beta) - cfg.alpha,
            _ => 0.0,
        },
    };
    let p = cfg.p.unwrap_or_else(|| 0.5 * ((-r).max(0.0) + cfg.alpha));
    Ok(LyapunovParams::new(cfg.d, cfg.alpha, p, r, cfg.epsilon0)?)
}

fn plan(cfg: &RunConfig) -> Result<SamplingPlan, CliError> {
    let g = &cfg.grid;
    Ok(SamplingPlan::log_radial(cfg.d, g.r_lo, g.r_hi, g.n_radii, g.n_random, g.seed)?)
}

fn stable_test(cfg: &RunConfig, dir: &mut RunDir) -> Result<i32, CliError> {
    let check = charfn_check(cfg.alpha, cfg.d, cfg.n.unwrap_or(1_000_000), cfg.sim.seed)?;
    dir.write_json("report.json", &check)?;
    println!(
        "stable-test: sup error {} (tolerance {}) {}",
        fmt_f64(check.sup_error),
        fmt_f64(check.tolerance),
        if check.pass { "pass" } else { "FAIL" }
    );
    Ok(if check.pass { 0 } else { 1 })
}

fn calibrate(cfg: &RunConfig, dir: &mut RunDir) -> Result<i32, CliError> {
    if cfg.xi.is_empty() {
        return Err(usage("`xi`: need at least one frequency"));
    }
    let quad = calibration_quadrature();
    let scales = cfg
        .xi
        .iter()
        .map(|&x| calibrate_with(cfg.alpha, cfg.d, x, &quad))
        .collect::<stablesde::Result<Vec<f64>>>()?;
    let s = convention_scale(cfg.alpha, cfg.d)?;
    let spread = scales.iter().map(|v| (v - s).abs() / s).fold(0.0, f64::max);
    dir.write_json(
        "report.json",
        &json!({
            "alpha": cfg.alpha,
            "d": cfg.d,
            "xi": cfg.xi,
            "scales": scales,
            "convention_scale": s,
            "max_rel_spread": spread,
        }),
    )?;
    println!("calibrate: s = {} (spread {})", fmt_f64(s), fmt_f64(spread));
    Ok(0)
}

#[derive(Serialize)]
struct FieldRow {
    x: Vec<f64>,
    drift: Vec<f64>,
    sigma_norm: f64,
    ell1: f64,
    ell2: f64,
}

fn field(cfg: &RunConfig, dir: &mut RunDir) -> Result<i32, CliError> {
    let f = build_field(cfg)?;
    let mut points = vec![vec![0.0; cfg.d]];
    points.extend(plan(cfg)?.points);
    let rows: Vec<FieldRow> = points
        .into_iter()
        .map(|x| FieldRow {
            drift: f.drift(&x),
            sigma_norm: f.sigma_value(&x).norm(),
            ell1: f.ell1(&x),
            ell2: f.ell2(&x),
            x,
        })
        .collect();
    let summary = json!({
        "label": f.label,
        "alpha": f.alpha,
        "d": f.dim,
        "holder_gamma": f.holder_gamma,
        "local_bounds": f.local_bounds,
        "normalizer": f.normalizer,
    });
    dir.write_json("summary.json", &summary)?;
    match cfg.format {
        Format::Json => dir.write_json("field.json", &rows)?,
        Format::Ndjson => dir.write_with("field.ndjson", |w| {
            for r in &rows {
                serde_json::to_writer(&mut *w, r)?;
                writeln!(w)?;
            }
            Ok(())
        })?,
        Format::Csv => {
            let hash = dir.hash().to_string();
            dir.write_with("field.csv", |w| {
            writeln!(w, "# config_hash={hash}")?;
            let d = cfg.d;
            let xs: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
            let bs: Vec<String> = (1..=d).map(|i| format!("b_{i}")).collect();
            writeln!(w, "{},{},sigma_norm,ell1,ell2", xs.join(","), bs.join(","))?;
            for r in &rows {
                let cols: Vec<String> = r
                    .x
                    .iter()
                    .chain(&r.drift)
                    .chain([&r.sigma_norm, &r.ell1, &r.ell2])
                    .map(|v| fmt_f64(*v))
                    .collect();
                writeln!(w, "{}", cols.join(","))?;
            }
            Ok(())
        })?
        }
    }
    println!("field: {} evaluated at {} points", f.label, rows.len());
    Ok(0)
}

#[derive(Serialize)]
struct VerifySummary {
    pass: bool,
    reports: Vec<VerificationReport>,
}

fn verify(cfg: &RunConfig, dir: &mut RunDir) -> Result<i32, CliError> {
    let checks = cfg
        .checks
        .clone()
        .unwrap_or_else(|| vec![Check::Dissipativity, Check::Lyapunov]);
    let needs_field = checks.iter().any(|c| *c != Check::BProperties);
    let field = if needs_field { Some(build_field(cfg)?) } else { None };
    let grid = plan(cfg)?;
    let mut reports = Vec::new();
    for check in &checks {
        let report = match check {
            Check::Dissipativity => {
                let f = field.as_ref().expect("field built");
                check_dissipativity(f, &lyapunov_params(cfg, f)?, &grid)
            }
            Check::Lyapunov => {
                let f = field.as_ref().expect("field built");
                check_lyapunov(f, &lyapunov_params(cfg, f)?, &grid, &cfg.quad)
            }
            Check::Hloc => {
                let f = field.as_ref().expect("field built");
                let m = cfg.m.unwrap_or(5.0);
                let ball = SamplingPlan::ball(cfg.d, m, 20, cfg.grid.n_random, cfg.grid.seed)?;
                check_hloc(f, m, &ball)
            }
            Check::BProperties => {
                let (div_points, divergence) = if cfg.d == 1 {
                    ([0.5, 1.0, 2.0, 5.0, 10.0].iter().map(|&r| vec![r]).collect(), 1e-3)
                } else {
                    let spot = |v: &[f64]| {
                        let mut x = vec![0.0; cfg.d];
                        x[..2].copy_from_slice(v);
                        x
                    };
                    (vec![spot(&[0.5, 0.0]), spot(&[1.0, 1.0]), spot(&[3.0, 0.0])], 5e-3)
                };
                let tol = BCheckTolerances {
                    divergence,
                    ..BCheckTolerances::default()
                };
                check_b_properties(cfg.alpha, cfg.d, &grid, &cfg.quad, &div_points, &tol)?
            }
        };
        println!(
            "verify {}: {}",
            report.check,
            if report.pass { "pass" } else { "FAIL" }
        );
        reports.push(report);
    }
    let pass = reports.iter().all(|r| r.pass);
    dir.write_json("report.json", &VerifySummary { pass, reports })?;
    Ok(if pass { 0 } else { 1 })
}

/// Batch of exactly `n` draws from `sim.n_paths` chains.
fn simulate_batch(cfg: &RunConfig, field: &CoefficientField) -> Result<SampleBatch, CliError> {
    let n = cfg.n.unwrap_or(10_000);
    if n == 0 {
        return Err(usage("`n`: need at least one draw"));
    }
    let chains = cfg.sim.n_paths;
    let per_chain = n.div_ceil(chains);
    // At least two draws per chain so the horizon covers one thinning interval.
    let sim = SimConfig {
        horizon: cfg.burn_in + (per_chain.max(2) - 1) as f64 * cfg.thinning,
        ..cfg.sim.clone()
    };
    let mut batch = match &cfg.x0 {
        Some(x0) => stablesde::simulator::sample_invariant_from(field, x0, &sim, cfg.burn_in, cfg.thinning)?,
        None => sample_invariant(field, &sim, cfg.burn_in, cfg.thinning)?,
    };
    let dp = batch.draws_per_path;
    let keep = |i: usize| i % dp < per_chain && (i / dp) * per_chain + i % dp < n;
    batch.times = batch.times.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, t)| *t).collect();
    batch.states = std::mem::take(&mut batch.states)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, x)| x)
        .collect();
    batch.draws_per_path = per_chain;
    Ok(batch)
}

fn sample(cfg: &RunConfig, dir: &mut RunDir) -> Result<i32, CliError> {
    let f = build_field(cfg)?;
    let mut batch = simulate_batch(cfg, &f)?;
    batch.config_hash = dir.hash().to_string();
    match cfg.format {
        Format::Csv => dir.write_with("samples.csv", |w| batch.write_csv(w))?,
        Format::Ndjson => dir.write_with("samples.ndjson", |w| batch.write_ndjson(w))?,
        Format::Json => dir.write_json("samples.json", &batch)?,
    }
    println!("sample: {} draws from {}", batch.states.len(), batch.field_label);
    Ok(0)
}

fn read_samples(path: &str, d: usize) -> Result<SampleBatch, CliError> {
    let file = std::fs::File::open(path).map_err(|e| usage(format!("`input`: {path}: {e}")))?;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut hash = String::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| usage(format!("`input`: {path}: {e}")))?;
        if let Some(h) = line.strip_prefix("# config_hash=") {
            hash = h.trim().to_string();
            continue;
        }
        if line.starts_with('#') || line.starts_with('t') || line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| usage(format!("`input`: line {} is not numeric", i + 1)))?;
        if vals.len() != d + 1 {
            return Err(usage(format!("`input`: line {} has {} columns, expected {}", i + 1, vals.len(), d + 1)));
        }
        times.push(vals[0]);
        states.push(vals[1..].to_vec());
    }
    if states.is_empty() {
        return Err(usage("`input`: no samples"));
    }
    Ok(SampleBatch {
        dim: d,
        alpha: f64::NAN,
        field_label: format!("file:{path}"),
        config_hash: hash,
        burn_in: 0.0,
        thinning: 0.0,
        n_paths: 1,
        draws_per_path: states.len(),
        times,
        states,
    })
}

fn diagnose(cfg: &RunConfig, dir: &mut RunDir) -> Result<i32, CliError> {
    let (batch, target) = match &cfg.input {
        Some(path) => (read_samples(path, cfg.d)?, build_target(cfg)?),
        None => {
            let f = build_field(cfg)?;
            let target = match f.target.clone() {
                Some(t) => t,
                None => build_target(cfg)?,
            };
            (simulate_batch(cfg, &f)?, target)
        }
    };
    let cdf = target_cdf(&target, &cfg.quad)?;
    let mut report = diagnose_batch(&batch, &cdf, cfg.hill_k)?;
    report.config_hash = dir.hash().to_string();
    dir.write_json("report.json", &report)?;
    let hash = dir.hash().to_string();
    let values = cdf.project(&batch);
    dir.write_with("cdf_overlay.csv", |w| write_cdf_overlay(w, &hash, &values, &cdf))?;
    println!(
        "diagnose: KS {} (null band {})",
        fmt_f64(report.ks),
        fmt_f64(report.ks_null_band)
    );
    let ok = cfg.ks_max.is_none_or(|m| report.ks <= m);
    Ok(if ok { 0 } else { 1 })
}

fn hk_check(cfg: &RunConfig, dir: &mut RunDir) -> Result<i32, CliError> {
    let f = if cfg.preset.is_none() && cfg.drift.is_none() && cfg.target.is_none() {
        CoefficientField::pure_noise(cfg.alpha, cfg.d)?
    } else {
        build_field(cfg)?
    };
    let y0 = cfg.y0.clone().unwrap_or_else(|| vec![0.0; cfg.d]);
    let t = cfg.t.unwrap_or(0.05);
    let sim = SimConfig {
        n_paths: cfg.n.unwrap_or(cfg.sim.n_paths),
        ..cfg.sim.clone()
    };
    let moll = Mollifier::new(cfg.d, cfg.sim.mollify_eps.unwrap_or(0.5))?;
    let opts = HeatKernelOptions {
        n_bins: cfg.n_bins,
        c_band: cfg.c_band,
    };
    let mut check = heatkernel_shape(&f, &y0, t, &sim, &moll, &cfg.quad, &opts)?;
    check.config_hash = dir.hash().to_string();
    dir.write_json("report.json", &check)?;
    dir.write_with("histogram.csv", |w| check.write_csv(w))?;
    println!("hk-check: coverage {} at band {}", fmt_f64(check.coverage), fmt_f64(check.c_band));
    let ok = cfg.min_coverage.is_none_or(|m| check.coverage >= m);
    Ok(if ok { 0 } else { 1 })
}

fn hitprob(cfg: &RunConfig, dir: &mut RunDir) -> Result<i32, CliError> {
    let f = build_field(cfg)?;
    let axis = |v: f64| {
        let mut x = vec![0.0; cfg.d];
        x[0] = v;
        x
    };
    let x0 = cfg.x0.clone().unwrap_or_else(|| axis(-1.0));
    let y0 = cfg.y0.clone().unwrap_or_else(|| axis(1.0));
    let sim = SimConfig {
        horizon: cfg.t.unwrap_or(cfg.sim.horizon),
        n_paths: cfg.n.unwrap_or(cfg.sim.n_paths),
        ..cfg.sim.clone()
    };
    let p = hitting_probability(&f, &x0, &y0, cfg.hit_radius, cfg.domain_radius, &sim)?;
    dir.write_json(
        "report.json",
        &json!({
            "field": f.label,
            "x0": x0,
            "y0": y0,
            "r": cfg.hit_radius,
            "domain_radius": cfg.domain_radius,
            "t": sim.horizon,
            "result": p,
        }),
    )?;
    println!(
        "hitprob: {} in [{}, {}]",
        fmt_f64(p.estimate),
        fmt_f64(p.ci_low),
        fmt_f64(p.ci_high)
    );
    Ok(0)
}
