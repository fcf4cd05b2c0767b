//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown keys are rejected.
//! Precedence, lowest first: built-in defaults, config file, the
//! `DEPTRAIL_DATA` environment variable (dataset root only), command-line
//! `--set key=value` overrides.

use std::path::PathBuf;

use thiserror::Error;

use crate::evaluation::{ActionSubset, ExperimentConfig, Protocol, Selection, TuneGrid};
use crate::glac::GradientOperator;
use crate::mtm::ZRange;
use crate::parallel::Execution;
use crate::representation::FeatureSet;

pub const DATA_ENV: &str = "DEPTRAIL_DATA";

/// Every accepted run-config key.
pub const KEYS: &[&str] = &[
    "dataset",
    "out_dir",
    "protocol",
    "subset",
    "train",
    "test",
    "features",
    "threads",
    "folds",
    "parallel",
    "zeta_m",
    "zeta_s",
    "occupancy_zeta_m",
    "occupancy_zeta_s",
    "z_bins",
    "z_range",
    "crop",
    "template_size",
    "bins",
    "delta_r",
    "spatial_bins",
    "gradient",
    "signed",
    "mu",
    "retention",
];

/// Keys accepted in a tuning grid file (comma-separated value lists).
pub const GRID_KEYS: &[&str] = &["bins", "delta_r", "spatial_bins", "mu"];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Parses `key = value` lines into ordered pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s.split_once('=').ok_or(ConfigError::Syntax { line: 0 })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| bad(key, value, e.to_string()))
}

fn boolean(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true/false")),
    }
}

/// `RxC` (e.g. `1x2`).
pub fn parse_dims(key: &str, value: &str) -> Result<(usize, usize), ConfigError> {
    let (a, b) = value
        .split_once(['x', 'X', '×'])
        .ok_or_else(|| bad(key, value, "expected AxB"))?;
    Ok((num(key, a.trim())?, num(key, b.trim())?))
}

fn selection(key: &str, value: &str) -> Result<Selection, ConfigError> {
    let list = |s: &str| -> Vec<String> {
        s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
    };
    match value {
        "all" => Ok(Selection::All),
        "rest" => Ok(Selection::Rest),
        v if v.starts_with("subjects:") => Ok(Selection::Subjects(
            list(&v["subjects:".len()..])
                .iter()
                .map(|s| num(key, s))
                .collect::<Result<_, _>>()?,
        )),
        v if v.starts_with("ids:") => Ok(Selection::Ids(list(&v["ids:".len()..]))),
        v if !v.is_empty() && v.chars().all(|c| c.is_ascii_digit() || c == ',' || c == ' ') => {
            Ok(Selection::Subjects(
                list(v).iter().map(|s| num(key, s)).collect::<Result<_, _>>()?,
            ))
        }
        v => Err(bad(key, v, "expected all | rest | 1,3 | subjects:1,3 | ids:a01_s01_e01,…")),
    }
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub protocol: Protocol,
    pub experiment: ExperimentConfig,
    pub threads: usize,
    pub folds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            out_dir: PathBuf::from("out"),
            protocol: Protocol::MsrAllCross,
            experiment: ExperimentConfig::default(),
            threads: 0,
            folds: 5,
        }
    }
}

impl RunConfig {
    /// Applies `pairs` in order over the defaults, then resolves the protocol.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut protocol_name = "msr_all_cross".to_string();
        let mut subset: Option<ActionSubset> = None;
        let mut train: Option<Selection> = None;
        let mut test: Option<Selection> = None;

        for (key, value) in pairs {
            let (k, v) = (key.as_str(), value.as_str());
            let e = &mut cfg.experiment;
            match k {
                "dataset" => cfg.dataset = Some(PathBuf::from(v)),
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                "protocol" => protocol_name = v.to_string(),
                "subset" => {
                    subset = match v {
                        "" | "none" => None,
                        s => Some(s.parse().map_err(|r: String| bad(k, v, r))?),
                    }
                }
                "train" => train = Some(selection(k, v)?),
                "test" => test = Some(selection(k, v)?),
                "features" => e.features = v.parse::<FeatureSet>().map_err(|r| bad(k, v, r))?,
                "threads" => cfg.threads = num(k, v)?,
                "folds" => cfg.folds = num(k, v)?,
                "parallel" => {
                    e.exec = if boolean(k, v)? {
                        Execution::Parallel
                    } else {
                        Execution::Sequential
                    }
                }
                "zeta_m" => e.mtm.zeta_m = num(k, v)?,
                "zeta_s" => e.mtm.zeta_s = num(k, v)?,
                "occupancy_zeta_m" => e.mtm.occupancy_zeta_m = num(k, v)?,
                "occupancy_zeta_s" => e.mtm.occupancy_zeta_s = num(k, v)?,
                "z_bins" => e.mtm.z_bins = num(k, v)?,
                "z_range" => {
                    e.mtm.z_range = if v == "auto" {
                        ZRange::Auto
                    } else {
                        let (a, b) = v
                            .split_once("..")
                            .ok_or_else(|| bad(k, v, "expected auto or MIN..MAX"))?;
                        ZRange::Explicit {
                            min: num(k, a.trim())?,
                            max: num(k, b.trim())?,
                        }
                    }
                }
                "crop" => e.template.crop = boolean(k, v)?,
                "template_size" => {
                    e.template.size = if v == "native" {
                        None
                    } else {
                        Some(parse_dims(k, v)?)
                    }
                }
                "bins" => e.glac.bins = num(k, v)?,
                "delta_r" => e.glac.delta_r = num(k, v)?,
                "spatial_bins" => e.glac.spatial_bins = parse_dims(k, v)?,
                "gradient" => e.glac.operator = v.parse::<GradientOperator>().map_err(|r| bad(k, v, r))?,
                "signed" => e.glac.signed = boolean(k, v)?,
                "mu" => e.mu = num(k, v)?,
                "retention" => e.retention = num(k, v)?,
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }

        let mut protocol =
            Protocol::from_name(&protocol_name, subset).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        match &mut protocol {
            Protocol::Custom { train: tr, test: te } => {
                if let Some(s) = train {
                    *tr = s;
                }
                if let Some(s) = test {
                    *te = s;
                }
            }
            _ if train.is_some() || test.is_some() => {
                return Err(ConfigError::Invalid(
                    "train/test selections are only valid with protocol = custom".into(),
                ))
            }
            _ => {}
        }
        cfg.protocol = protocol;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let e = &self.experiment;
        e.mtm.validate().map_err(|x| ConfigError::Invalid(x.to_string()))?;
        e.glac.validate().map_err(|x| ConfigError::Invalid(x.to_string()))?;
        if e.mu.is_nan() || e.mu <= 0.0 {
            return Err(ConfigError::Invalid(format!("mu must be > 0, got {}", e.mu)));
        }
        if !(e.retention > 0.0 && e.retention <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "retention must be in (0, 1], got {}",
                e.retention
            )));
        }
        if matches!(e.template.size, Some((w, h)) if w < 2 || h < 2) {
            return Err(ConfigError::Invalid("template_size must be at least 2x2".into()));
        }
        if self.folds < 2 {
            return Err(ConfigError::Invalid("folds must be >= 2".into()));
        }
        Ok(())
    }

    /// Resolved configuration as `key = value` pairs for the run manifest.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out = self.protocol.echo();
        out.push((
            "dataset".into(),
            self.dataset.as_ref().map_or("".into(), |p| p.display().to_string()),
        ));
        out.push(("out_dir".into(), self.out_dir.display().to_string()));
        out.push(("threads".into(), self.threads.to_string()));
        out.push(("folds".into(), self.folds.to_string()));
        out.extend(self.experiment.echo());
        out
    }
}

/// Builds the effective pair list: file pairs, then the env dataset root, then overrides.
pub fn layered_pairs(
    file: Vec<(String, String)>,
    env_data: Option<String>,
    overrides: Vec<(String, String)>,
) -> Vec<(String, String)> {
    let mut pairs = file;
    if let Some(root) = env_data.filter(|r| !r.is_empty()) {
        pairs.push(("dataset".into(), root));
    }
    pairs.extend(overrides);
    pairs
}

/// Parses a tuning grid; missing axes take the single value from `base`.
pub fn parse_grid(text: &str, base: &ExperimentConfig) -> Result<TuneGrid, ConfigError> {
    let pairs = parse_pairs(text)?;
    if pairs.is_empty() {
        return Err(ConfigError::Invalid("tuning grid has no axes".into()));
    }
    let mut grid = TuneGrid {
        bins: vec![base.glac.bins],
        delta_r: vec![base.glac.delta_r],
        spatial_bins: vec![base.glac.spatial_bins],
        mu: vec![base.mu],
    };
    for (k, v) in &pairs {
        let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        match k.as_str() {
            "bins" => grid.bins = items.iter().map(|s| num(k, s)).collect::<Result<_, _>>()?,
            "delta_r" => grid.delta_r = items.iter().map(|s| num(k, s)).collect::<Result<_, _>>()?,
            "spatial_bins" => {
                grid.spatial_bins = items.iter().map(|s| parse_dims(k, s)).collect::<Result<_, _>>()?
            }
            "mu" => grid.mu = items.iter().map(|s| num(k, s)).collect::<Result<_, _>>()?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
    }
    if grid.is_empty() {
        return Err(ConfigError::Invalid("tuning grid has an empty axis".into()));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_pairs(&parse_pairs(text)?)
    }

    #[test]
    fn defaults_and_overrides() {
        let c = cfg("# comment\nbins = 6\nspatial_bins = 3x5\nmu = 0.001 # inline\n").unwrap();
        assert_eq!(c.experiment.glac.bins, 6);
        assert_eq!(c.experiment.glac.spatial_bins, (3, 5));
        assert_eq!(c.experiment.mu, 0.001);
        assert_eq!(c.experiment.mtm.zeta_m, 10.0);
        assert_eq!(c.protocol, Protocol::MsrAllCross);
    }

    #[test]
    fn unknown_key_rejected() {
        assert_eq!(cfg("bogus = 1").unwrap_err(), ConfigError::UnknownKey("bogus".into()));
        assert_eq!(cfg("just text").unwrap_err(), ConfigError::Syntax { line: 1 });
    }

    #[test]
    fn custom_protocol_selections() {
        let c = cfg("protocol = custom\ntrain = subjects:1,3\ntest = rest\n").unwrap();
        assert_eq!(
            c.protocol,
            Protocol::Custom {
                train: Selection::Subjects(vec![1, 3]),
                test: Selection::Rest
            }
        );
        assert!(cfg("protocol = dha_cross\ntrain = all").is_err());
        assert!(cfg("protocol = msr_subset_test1").is_err());
        let c = cfg("protocol = msr_subset_test1\nsubset = as2").unwrap();
        assert_eq!(c.protocol.subset(), Some(ActionSubset::As2));
    }

    #[test]
    fn value_errors() {
        assert!(matches!(cfg("bins = eight"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(cfg("bins = 1"), Err(ConfigError::Invalid(_))));
        assert!(matches!(cfg("z_range = 5..5"), Err(ConfigError::Invalid(_))));
        assert!(matches!(cfg("retention = 1.5"), Err(ConfigError::Invalid(_))));
        let c = cfg("z_range = 100..4000\ntemplate_size = native\ncrop = no").unwrap();
        assert_eq!(c.experiment.mtm.z_range, ZRange::Explicit { min: 100, max: 4000 });
        assert_eq!(c.experiment.template.size, None);
    }

    #[test]
    fn layering_order() {
        let pairs = layered_pairs(
            vec![("dataset".into(), "a".into()), ("mu".into(), "1".into())],
            Some("b".into()),
            vec![("mu".into(), "2".into())],
        );
        let c = RunConfig::from_pairs(&pairs).unwrap();
        assert_eq!(c.dataset, Some(PathBuf::from("b")));
        assert_eq!(c.experiment.mu, 2.0);
    }

    #[test]
    fn echo_keys_are_accepted() {
        let c = RunConfig::default();
        let echoed: Vec<(String, String)> = c
            .echo()
            .into_iter()
            .filter(|(k, v)| KEYS.contains(&k.as_str()) && !v.is_empty())
            .collect();
        assert_eq!(RunConfig::from_pairs(&echoed).unwrap(), RunConfig {
            dataset: None,
            ..c
        });
    }

    #[test]
    fn grid_parsing() {
        let base = ExperimentConfig::default();
        let g = parse_grid("bins = 4, 8\nmu = 0.0001,0.01\n", &base).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.spatial_bins, vec![(1, 2)]);
        assert!(parse_grid("", &base).is_err());
        assert!(parse_grid("bins = \n", &base).is_err());
        assert!(matches!(parse_grid("gamma = 1", &base), Err(ConfigError::UnknownKey(_))));
    }
}
