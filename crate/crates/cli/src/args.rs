use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use harvest_core::{Error, GEParams, Result, RewardConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Arrival-chain parameters, either `(p, q)` or `(pi_g, t_b)`.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainArgs {
    /// G -> B transition probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// B -> G transition probability.
    #[arg(long)]
    pub q: Option<f64>,
    /// Stationary probability of the good state.
    #[arg(long = "pi-g")]
    pub pi_g: Option<f64>,
    /// Mean length of a bad burst, in slots.
    #[arg(long = "t-b")]
    pub t_b: Option<f64>,
}

impl ChainArgs {
    pub fn params(&self) -> Result<GEParams> {
        match (self.p, self.q, self.pi_g, self.t_b) {
            (Some(p), Some(q), None, None) => GEParams::new(p, q),
            (None, None, Some(pi), Some(tb)) => GEParams::from_burst_parameterization(pi, tb),
            (None, None, None, None) => Err(usage("give either --p/--q or --pi-g/--t-b")),
            (Some(_), Some(_), _, _) | (_, _, Some(_), Some(_)) => {
                Err(usage("--p/--q and --pi-g/--t-b are mutually exclusive"))
            }
            _ => Err(usage("incomplete parameters: give both of --p/--q or both of --pi-g/--t-b")),
        }
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardArgs {
    /// Reward for a successful harvest.
    #[arg(long)]
    pub r1: Option<f64>,
    /// Cost of a failed harvest (positive).
    #[arg(long)]
    pub r0: Option<f64>,
    /// Discount factor in [0, 1) [default: 0.99].
    #[arg(long)]
    pub gamma: Option<f64>,
}

impl RewardArgs {
    pub fn config(&self) -> Result<RewardConfig> {
        let r1 = self.r1.ok_or_else(|| usage("--r1 is required"))?;
        let r0 = self.r0.ok_or_else(|| usage("--r0 is required"))?;
        RewardConfig::new(r1, r0, self.gamma.unwrap_or(0.99))
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputArgs {
    /// Write to this file instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl OutputArgs {
    pub fn write(&self, text: &str) -> Result<()> {
        match &self.output {
            Some(path) => std::fs::write(path, text)?,
            None => {
                use std::io::Write;
                std::io::stdout().write_all(text.as_bytes())?;
            }
        }
        Ok(())
    }
}

pub fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Overlays command-line values on an optional TOML config file. Keys in the
/// file mirror the flag names with `-` replaced by `_`; flags win.
pub fn merge_with_config<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else {
        return Ok(serde_json::from_value(serde_json::to_value(flags)?)?);
    };
    let text = std::fs::read_to_string(path)?;
    let mut base: Value = toml::from_str(&text)?;
    let over = serde_json::to_value(flags)?;
    overlay(&mut base, over);
    Ok(serde_json::from_value(base)?)
}

fn overlay(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                if v.is_null() {
                    continue;
                }
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) if !o.is_null() => *b = o,
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "p = 0.1\nq = 0.2\n").unwrap();
        let flags = ChainArgs { q: Some(0.3), ..Default::default() };
        let merged = merge_with_config(&flags, Some(&path)).unwrap();
        assert_eq!((merged.p, merged.q), (Some(0.1), Some(0.3)));
    }

    #[test]
    fn conflicting_parameterizations_rejected() {
        let a = ChainArgs { p: Some(0.2), q: Some(0.3), pi_g: Some(0.6), t_b: Some(2.5) };
        assert!(a.params().unwrap_err().is_usage());
        let b = ChainArgs { p: Some(0.2), ..Default::default() };
        assert!(b.params().is_err());
    }
}
