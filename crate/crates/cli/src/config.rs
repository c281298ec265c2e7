//! Run configuration: one TOML file with `[model]`, `[train]`, `[sampler]`,
//! `[data]` and `[eval]` sections, plus `section.key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dinterp::metrics::EvalProtocol;
use dinterp::model::ModelConfig;
use dinterp::motion::SamplerConfig;
use dinterp::par::Exec;
use dinterp::training::TrainConfig;

use crate::error::{CliError, CliResult};

pub const RESOLVED_CONFIG_FILE: &str = "run_config.toml";
/// Default data directory when neither a flag nor the config names one.
pub const DATA_ENV: &str = "DINTERP_DATA";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Offset between training windows.
    pub window_offset: usize,
    /// Offset between evaluation windows.
    pub eval_window_offset: usize,
    pub dataset_id: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: None,
            test: None,
            window_offset: 20,
            eval_window_offset: 40,
            dataset_id: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub parallel: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub data: DataConfig,
    pub eval: EvalProtocol,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            parallel: true,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sampler: SamplerConfig::default(),
            data: DataConfig::default(),
            eval: EvalProtocol::default(),
        }
    }
}

/// Parses `value` as a TOML literal, falling back to a bare string.
fn literal(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn apply_override(root: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for p in path {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    table.insert(last.to_string(), literal(value.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {}", p.display(), e.message())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without data. The joint count
    /// is taken from the dataset later.
    pub fn validate(&self) -> CliResult<()> {
        let mut m = self.model.clone();
        m.joints = m.joints.max(1);
        m.validate()?;
        self.train.validate()?;
        self.sampler.validate()?;
        if self.sampler.window_len > self.model.max_frame_index {
            return Err(CliError::Config(format!(
                "sampler.window_len {} exceeds model.max_frame_index {}",
                self.sampler.window_len, self.model.max_frame_index
            )));
        }
        if self.data.window_offset == 0 || self.data.eval_window_offset == 0 {
            return Err(CliError::Config("window offsets must be positive".into()));
        }
        if self.eval.lengths.is_empty() || self.eval.lengths.contains(&0) {
            return Err(CliError::Config("eval.lengths must be non-empty and positive".into()));
        }
        for &n in &self.eval.lengths {
            let need = self.eval.pattern(n)?.len();
            if need > self.sampler.window_len {
                return Err(CliError::Config(format!(
                    "eval length {n} needs {need}-frame windows, sampler.window_len is {}",
                    self.sampler.window_len
                )));
            }
        }
        Ok(())
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn write_resolved(&self, dir: &Path) -> CliResult<()> {
        let p = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&p, self.to_toml()?).map_err(|e| CliError::io(&p, e))
    }

    /// Training data: flag, then `[data].train`, then the environment.
    pub fn train_dir(&self, flag: Option<&Path>) -> CliResult<PathBuf> {
        resolve_dir(flag, self.data.train.as_deref(), "training")
    }

    /// Evaluation data: flag, then `[data].test`, then the environment.
    pub fn test_dir(&self, flag: Option<&Path>) -> CliResult<PathBuf> {
        resolve_dir(flag, self.data.test.as_deref(), "evaluation")
    }
}

fn resolve_dir(flag: Option<&Path>, cfg: Option<&Path>, what: &str) -> CliResult<PathBuf> {
    if let Some(p) = flag.or(cfg) {
        return Ok(p.to_path_buf());
    }
    match std::env::var_os(DATA_ENV) {
        Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
        _ => Err(CliError::Config(format!(
            "no {what} data: pass --data, set it in the config, or set {DATA_ENV}"
        ))),
    }
}

/// Creates `dir`, refusing to reuse a non-empty directory.
pub fn fresh_dir(dir: &Path) -> CliResult<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
        if entries.next().is_some() {
            return Err(CliError::Config(format!(
                "output directory {} is not empty; refusing to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Refuses to overwrite an existing file.
pub fn fresh_file(path: &Path) -> CliResult<()> {
    if path.exists() {
        return Err(CliError::Config(format!(
            "{} already exists; refusing to overwrite",
            path.display()
        )));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(())
}
