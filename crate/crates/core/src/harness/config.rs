use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::policies::PolicyKind;
use crate::sim::RolloutConfig;
use crate::terrain::GapWorldParams;

/// Prefix of environment variables that override config keys. Nested keys
/// are joined with a double underscore: `GAPCROSS_EVAL__EPISODES=200` sets
/// `eval.episodes`.
pub const ENV_PREFIX: &str = "GAPCROSS_";

/// How the worlds of one evaluation are laid out. Each episode gets a fresh
/// world whose gaps all share the cell's width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    /// Gap widths to evaluate, m.
    pub widths: Vec<f64>,
    pub episodes: usize,
    pub gaps_per_world: usize,
    /// Flat ground ahead of the start before the randomized lead-in, m.
    pub run_up: f64,
    pub flat_min: f64,
    pub flat_max: f64,
    pub final_flat: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            widths: vec![0.04, 0.08, 0.12, 0.16],
            episodes: 100,
            gaps_per_world: 1,
            run_up: 0.3,
            flat_min: 0.5,
            flat_max: 0.86,
            final_flat: 1.0,
        }
    }
}

impl EvalParams {
    pub fn world_params(&self, width: f64) -> GapWorldParams {
        GapWorldParams {
            w_min: width,
            w_max: width,
            n_gaps: self.gaps_per_world,
            flat_min: self.flat_min,
            flat_max: self.flat_max,
            origin_x: -1.0,
            run_up: self.run_up,
            final_flat: self.final_flat,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes == 0 {
            return Err(HarnessError::Config("eval.episodes must be at least 1".into()));
        }
        if self.widths.iter().any(|w| !(*w >= 0.0)) {
            return Err(HarnessError::Config("eval.widths must be non-negative".into()));
        }
        if !(self.flat_max >= self.flat_min && self.flat_min > 0.0) {
            return Err(HarnessError::Config("eval.flat_min..flat_max is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub policy: PolicyKind,
    pub rollout: RolloutConfig,
    pub eval: EvalParams,
    /// Terrain used by `gen-terrain` and single rollouts.
    pub terrain: GapWorldParams,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            out: PathBuf::from("out"),
            policy: PolicyKind::Blind { v_cmd: 1.0 },
            rollout: RolloutConfig::default(),
            eval: EvalParams::default(),
            terrain: GapWorldParams::default(),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), HarnessError> {
    let (last, parents) = path.split_last().expect("path is non-empty");
    let mut cur = table;
    for key in parents {
        let entry = cur.entry(key.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("{key} is not a section")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl Config {
    /// Parses TOML text, then applies overrides given as
    /// `(variable name, value)` pairs carrying [`ENV_PREFIX`].
    pub fn from_toml_with_overrides<I>(text: &str, vars: I) -> Result<Self, HarnessError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        let mut overrides: Vec<(String, String)> =
            vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        overrides.sort();
        for (key, raw) in overrides {
            let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_lowercase()).collect();
            if path.iter().any(|p| p.is_empty()) {
                return Err(HarnessError::Config(format!("malformed override {key}")));
            }
            set_path(&mut table, &path, parse_value(&raw))?;
        }
        let cfg: Config = table.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or defaults when `None`) and applies the process
    /// environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, HarnessError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, std::env::vars())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.eval.validate()?;
        self.rollout.model.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.workers == 0 {
            return Err(HarnessError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = Config::from_toml_with_overrides("", Vec::new()).unwrap();
        assert_eq!(cfg, Config::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = Config::default();
        let back = Config::from_toml_with_overrides(&cfg.to_toml(), Vec::new()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let text = "[eval]\nepisodes = 5\n";
        let vars = vec![
            ("GAPCROSS_EVAL__EPISODES".to_string(), "7".to_string()),
            ("GAPCROSS_SEED".to_string(), "42".to_string()),
            ("GAPCROSS_EVAL__WIDTHS".to_string(), "[0.1, 0.2]".to_string()),
            ("GAPCROSS_ROLLOUT__SIM__MAX_STEPS".to_string(), "90".to_string()),
            ("OTHER_SEED".to_string(), "1".to_string()),
        ];
        let cfg = Config::from_toml_with_overrides(text, vars).unwrap();
        assert_eq!(cfg.eval.episodes, 7);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.eval.widths, vec![0.1, 0.2]);
        assert_eq!(cfg.rollout.sim.max_steps, 90);
    }

    #[test]
    fn policy_section_selects_kind() {
        let text = "[policy]\nkind = \"fpa\"\nv_cmd = 1.0\ndelta_max = 0.04\n";
        let cfg = Config::from_toml_with_overrides(text, Vec::new()).unwrap();
        assert_eq!(cfg.policy.name(), "fpa");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::from_toml_with_overrides("[eval]\nepisodes = 0\n", Vec::new()).is_err());
        assert!(Config::from_toml_with_overrides("seed = \"x\"\n", Vec::new()).is_err());
        assert!(Config::from_toml_with_overrides("workers = 0\n", Vec::new()).is_err());
    }
}
