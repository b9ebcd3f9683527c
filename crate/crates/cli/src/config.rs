use std::path::{Path, PathBuf};

use lcsc::arch::NetworkConfig;
use lcsc::data::default_patch_size;
use lcsc::train::TrainSchedule;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DATA_ROOT_ENV: &str = "LCSC_DATA_ROOT";
pub const EFFECTIVE_CONFIG: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    #[serde(default)]
    pub schedule: TrainSchedule,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub run: RunSection,
}

/// Where training images come from and how they are cut into patches.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// A directory with `train/` and `val/`, or a manifest file. Falls back to
    /// `$LCSC_DATA_ROOT`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    /// LR patch side; the per-scale default when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch: Option<usize>,
    /// LR stride between patches; non-overlapping when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    pub no_rotations: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            out: PathBuf::from("run"),
        }
    }
}

impl DataConfig {
    pub fn patch_and_stride(&self, scale: usize) -> Result<(usize, usize), CliError> {
        let patch = match self.patch {
            Some(p) => p,
            None => default_patch_size(scale)
                .map(|(lr, _)| lr)
                .ok_or_else(|| CliError::Config(format!("no default patch size for scale {scale}")))?,
        };
        let stride = self.stride.unwrap_or(patch);
        if patch == 0 || stride == 0 {
            return Err(CliError::Config("data.patch and data.stride must be positive".into()));
        }
        Ok((patch, stride))
    }

    pub fn resolved_root(&self) -> Result<PathBuf, CliError> {
        let root = match &self.root {
            Some(r) => r.clone(),
            None => std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from).ok_or_else(|| {
                CliError::Config(format!("no data.root in the config and {DATA_ROOT_ENV} is not set"))
            })?,
        };
        if !root.exists() {
            return Err(CliError::Config(format!("data root {} does not exist", root.display())));
        }
        Ok(root)
    }
}

/// Set `section.key = value` in a parsed document. The value is read as a TOML
/// literal when it parses as one and as a bare string otherwise.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{spec}' is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override key '{path}' is malformed")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = doc;
    for key in parents {
        table = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override '{path}': '{key}' is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.network.validate()?;
        cfg.schedule.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[network]
blocks = 2
units_per_block = 1
width = 8
rho = [0.5, 0.25]
scale = 2
"#;

    #[test]
    fn overrides_and_round_trip() {
        let cfg = RunConfig::parse(
            BASE,
            &["schedule.total_epochs=3".into(), "run.out=somewhere".into(), "network.fusion=true".into()],
        )
        .unwrap();
        assert_eq!(cfg.schedule.total_epochs, 3);
        assert_eq!(cfg.run.out, PathBuf::from("somewhere"));
        assert!(cfg.network.fusion);
        assert_eq!(RunConfig::parse(&cfg.to_toml(), &[]).unwrap(), cfg);
    }

    #[test]
    fn rejects_typos_and_bad_rho() {
        assert!(RunConfig::parse(BASE, &["network.rhoo=[0.5]".into()]).is_err());
        assert!(RunConfig::parse(BASE, &["schedule".into()]).is_err());
        let err = RunConfig::parse(BASE, &["network.rho=[0.3, 0.5]".into()]).unwrap_err();
        assert!(err.to_string().contains("rho not integral"));
    }
}
