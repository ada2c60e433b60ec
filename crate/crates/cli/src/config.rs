//! Run configuration: JSON documents, flag overrides and dotted `--set` keys.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use stablesde::operator::QuadratureSpec;
use stablesde::simulator::SimConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    StableTest,
    Field,
    Verify,
    Sample,
    Diagnose,
    HkCheck,
    Hitprob,
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::StableTest => "stable-test",
            Command::Field => "field",
            Command::Verify => "verify",
            Command::Sample => "sample",
            Command::Diagnose => "diagnose",
            Command::HkCheck => "hk-check",
            Command::Hitprob => "hitprob",
            Command::Calibrate => "calibrate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Ndjson,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Dissipativity,
    Lyapunov,
    Hloc,
    BProperties,
}

/// Log-radial verification grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub r_lo: f64,
    pub r_hi: f64,
    pub n_radii: usize,
    pub n_random: usize,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            r_lo: 1.0,
            r_hi: 100.0,
            n_radii: 16,
            n_random: 8,
            seed: 0,
        }
    }
}

/// Fully resolved run configuration. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    /// Coefficient preset: example13, example14, pure-noise, additive, sampling, custom.
    pub preset: Option<String>,
    /// Target preset for sampling and diagnostics: student, cauchy, rho-alpha, custom.
    pub target: Option<String>,
    pub alpha: f64,
    pub d: usize,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub p: Option<f64>,
    pub r: Option<f64>,
    pub epsilon0: f64,
    /// Radius for the local Hölder check.
    pub m: Option<f64>,
    pub drift: Option<String>,
    pub sigma: Option<String>,
    pub potential: Option<String>,
    pub checks: Option<Vec<Check>>,
    pub grid: GridConfig,
    pub n: Option<usize>,
    pub burn_in: f64,
    pub thinning: f64,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub hit_radius: f64,
    pub domain_radius: f64,
    pub xi: Vec<f64>,
    pub hill_k: Option<usize>,
    pub ks_max: Option<f64>,
    pub c_band: f64,
    pub n_bins: usize,
    pub min_coverage: Option<f64>,
    /// Sample CSV to diagnose instead of simulating.
    pub input: Option<String>,
    pub quad: QuadratureSpec,
    pub sim: SimConfig,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            preset: None,
            target: None,
            alpha: 1.5,
            d: 1,
            beta: None,
            gamma: None,
            p: None,
            r: None,
            epsilon0: 0.0,
            m: None,
            drift: None,
            sigma: None,
            potential: None,
            checks: None,
            grid: GridConfig::default(),
            n: None,
            burn_in: 20.0,
            thinning: 0.1,
            x0: None,
            y0: None,
            t: None,
            hit_radius: 0.5,
            domain_radius: 5.0,
            xi: vec![0.5, 1.0, 2.0],
            hill_k: None,
            ks_max: None,
            c_band: stablesde::diagnostics::HK_C_BAND,
            n_bins: stablesde::diagnostics::HK_BINS,
            min_coverage: None,
            input: None,
            quad: QuadratureSpec::default(),
            sim: SimConfig::default(),
            format: Format::Csv,
        }
    }
}

/// Reads a config document. A manifest written by an earlier run is
/// accepted and unwrapped to the configuration it records.
pub fn load_document(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(mut obj) = v else {
        return Err(CliError::Usage("config must be a JSON object".into()));
    };
    if obj.contains_key("config_hash") && obj.get("config").is_some_and(Value::is_object) {
        let recorded = obj.get("config_hash").and_then(Value::as_str).map(str::to_owned);
        let inner = obj.remove("config").expect("checked above");
        if let Some(h) = recorded {
            let resolved: RunConfig = from_value(inner.clone())?;
            if stablesde::hashing::config_hash(&resolved) != h {
                return Err(CliError::Usage("manifest config does not match its config_hash".into()));
            }
        }
        return Ok(inner);
    }
    Ok(Value::Object(obj))
}

/// Sets `key` (dotted for nested tables) to `value`.
pub fn set_dotted(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("malformed key `{key}`")));
    }
    let mut cur = doc;
    for part in &parts[..parts.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("key `{key}`: `{part}` is not a table")))?;
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    cur.as_object_mut()
        .ok_or_else(|| CliError::Usage(format!("key `{key}`: parent is not a table")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses an override value as JSON, falling back to a plain string.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Parses `a,b,c` as a list of numbers.
pub fn parse_list(key: &str, raw: &str) -> Result<Value, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map(Value::from)
                .map_err(|_| CliError::Usage(format!("`{key}`: `{s}` is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Value::Array)
}

pub fn from_value(v: Value) -> Result<RunConfig, CliError> {
    serde_json::from_value(v).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_create_tables() {
        let mut v = Value::Object(Map::new());
        set_dotted(&mut v, "quad.rel_tol", Value::from(1e-6)).unwrap();
        set_dotted(&mut v, "alpha", Value::from(1.2)).unwrap();
        let c = from_value(v).unwrap();
        assert_eq!(c.quad.rel_tol, 1e-6);
        assert_eq!(c.alpha, 1.2);
    }

    #[test]
    fn unknown_keys_are_named() {
        let v: Value = serde_json::from_str(r#"{"alpah": 1.0}"#).unwrap();
        let err = from_value(v).unwrap_err().to_string();
        assert!(err.contains("alpah"), "{err}");
        let v: Value = serde_json::from_str(r#"{"sim": {"stepp": 1.0}}"#).unwrap();
        assert!(from_value(v).unwrap_err().to_string().contains("stepp"));
    }

    #[test]
    fn values_parse_as_json_or_string() {
        assert_eq!(parse_value("2"), Value::from(2));
        assert_eq!(parse_value("tamed"), Value::from("tamed"));
        assert_eq!(parse_list("x0", "1, -2.5").unwrap(), serde_json::json!([1.0, -2.5]));
        assert!(parse_list("x0", "1,a").is_err());
    }

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(from_value(v).unwrap(), c);
    }
}
