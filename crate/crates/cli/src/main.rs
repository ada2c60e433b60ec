//! `stablesde`: batch front-end for sampling, verification and diagnostics.
//!
//! Exit status: 0 success, 1 a check failed, 2 usage error, 3 numeric error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde_json::{Map, Value};

use config::{parse_list, parse_value, set_dotted, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<stablesde::Error> for CliError {
    fn from(e: stablesde::Error) -> Self {
        match e {
            stablesde::Error::InvalidParameter { .. } | stablesde::Error::Expression(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CommandArg {
    StableTest,
    Field,
    Verify,
    Sample,
    Diagnose,
    HkCheck,
    Hitprob,
    Calibrate,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::StableTest => Command::StableTest,
            CommandArg::Field => Command::Field,
            CommandArg::Verify => Command::Verify,
            CommandArg::Sample => Command::Sample,
            CommandArg::Diagnose => Command::Diagnose,
            CommandArg::HkCheck => Command::HkCheck,
            CommandArg::Hitprob => Command::Hitprob,
            CommandArg::Calibrate => Command::Calibrate,
        }
    }
}

/// Flags override the config file; `--set` entries are applied last.
#[derive(Debug, Parser)]
#[command(name = "stablesde", version, about = "Heavy-tailed sampling with stable-driven SDEs")]
struct Cli {
    command: CommandArg,
    /// JSON config document or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root (default: $STABLESDE_OUT, else ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Dotted override `key=value`, value parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, alias = "dim")]
    d: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    r: Option<f64>,
    #[arg(long)]
    epsilon0: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    drift: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    potential: Option<String>,
    /// Comma-separated: dissipativity, lyapunov, hloc, b-properties.
    #[arg(long)]
    checks: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    y0: Option<String>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    hill_k: Option<usize>,
    #[arg(long)]
    input: Option<String>,
    /// csv, ndjson or json.
    #[arg(long)]
    format: Option<String>,
}

impl Cli {
    fn overrides(&self) -> Result<Vec<(String, Value)>, CliError> {
        let mut out: Vec<(String, Value)> = Vec::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        put("preset", self.preset.clone().map(Value::from));
        put("target", self.target.clone().map(Value::from));
        put("alpha", self.alpha.map(Value::from));
        put("d", self.d.map(Value::from));
        put("beta", self.beta.map(Value::from));
        put("gamma", self.gamma.map(Value::from));
        put("p", self.p.map(Value::from));
        put("r", self.r.map(Value::from));
        put("epsilon0", self.epsilon0.map(Value::from));
        put("m", self.m.map(Value::from));
        put("drift", self.drift.clone().map(Value::from));
        put("sigma", self.sigma.clone().map(Value::from));
        put("potential", self.potential.clone().map(Value::from));
        put(
            "checks",
            self.checks
                .as_ref()
                .map(|c| Value::Array(c.split(',').map(|s| Value::from(s.trim())).collect())),
        );
        put("n", self.n.map(Value::from));
        put("sim.seed", self.seed.map(Value::from));
        put("t", self.t.map(Value::from));
        put("sim.step", self.step.map(Value::from));
        put("sim.scheme", self.scheme.clone().map(Value::from));
        put("hill_k", self.hill_k.map(Value::from));
        put("input", self.input.clone().map(Value::from));
        put("format", self.format.clone().map(Value::from));
        if let Some(x) = &self.x0 {
            out.push(("x0".into(), parse_list("x0", x)?));
        }
        if let Some(y) = &self.y0 {
            out.push(("y0".into(), parse_list("y0", y)?));
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set `{s}`: expected KEY=VALUE")))?;
            out.push((k.trim().to_string(), parse_value(v.trim())));
        }
        Ok(out)
    }
}

fn run(cli: &Cli) -> Result<(i32, PathBuf), CliError> {
    let command: Command = cli.command.into();
    let mut doc = match &cli.config {
        Some(path) => config::load_document(path)?,
        None => Value::Object(Map::new()),
    };
    if let Some(c) = doc.get("command") {
        let named: Command = serde_json::from_value(c.clone())
            .map_err(|e| CliError::Usage(format!("`command`: {e}")))?;
        if named != command {
            return Err(CliError::Usage(format!(
                "`command`: config is for `{}`, invoked as `{}`",
                named.name(),
                command.name()
            )));
        }
    }
    set_dotted(&mut doc, "command", serde_json::to_value(command).expect("enum serializes"))?;
    for (k, v) in cli.overrides()? {
        set_dotted(&mut doc, &k, v)?;
    }
    let cfg = config::from_value(doc)?;
    cfg.quad.validate()?;
    cfg.sim.validate()?;
    let root = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(output::OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(output::DEFAULT_ROOT));
    let mut dir = output::RunDir::create(&root, command.name(), &cfg)?;
    let status = commands::dispatch(command, &cfg, &mut dir)?;
    let path = dir.finish(command.name(), &cfg, status)?;
    Ok((status, path))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", CliError::Usage(format!("`threads`: {e}")));
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok((status, path)) => {
            println!("run directory: {}", path.display());
            ExitCode::from(status as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
