//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExperimentId {
    Gradcheck,
    QpDigits,
    NcutSeg,
    Graphmatch,
    Levelset,
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Gradcheck => "gradcheck",
            ExperimentId::QpDigits => "qp-digits",
            ExperimentId::NcutSeg => "ncut-seg",
            ExperimentId::Graphmatch => "graphmatch",
            ExperimentId::Levelset => "levelset",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(s, false).ok()
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {value}")]
    BadValue { key: String, value: String },
    #[error("`{0}` must be positive")]
    NotPositive(&'static str),
    #[error("config is for `{found}` but `{expected}` was requested")]
    WrongExperiment { expected: ExperimentId, found: String },
}

/// Fully resolved settings for one run. Unused keys for a given experiment
/// are still recorded so the resolved file is self-contained.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Number of generated samples (before the 9:1 split).
    pub count: usize,
    /// Hidden width of the digits network.
    pub hidden: usize,
    /// Inequality constraints in the digits QP layer.
    pub constraints: usize,
    /// Image side for segmentation, grid side for the level set.
    pub size: usize,
    pub noise: f64,
    pub keypoints: usize,
    pub jitter: f64,
    /// Residual tolerance every implicit forward pass must meet.
    pub forward_tol: f64,
    /// Interior-point stopping tolerance.
    pub ip_tol: f64,
    pub out: PathBuf,
}

const KEYS: &[&str] = &[
    "seed",
    "epochs",
    "lr",
    "batch_size",
    "count",
    "hidden",
    "constraints",
    "size",
    "noise",
    "keypoints",
    "jitter",
    "forward_tol",
    "ip_tol",
    "out",
];

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentId) -> Self {
        let base = ExperimentConfig {
            experiment,
            seed: 1,
            epochs: 10,
            lr: 0.01,
            batch_size: 10,
            count: 100,
            hidden: 32,
            constraints: 10,
            size: 10,
            noise: 0.3,
            keypoints: 6,
            jitter: 0.05,
            forward_tol: 1e-8,
            ip_tol: 1e-10,
            out: PathBuf::from("runs").join(experiment.as_str()),
        };
        match experiment {
            ExperimentId::Gradcheck => ExperimentConfig {
                epochs: 1,
                size: 5,
                hidden: 8,
                constraints: 4,
                count: 3,
                ..base
            },
            ExperimentId::QpDigits => ExperimentConfig {
                epochs: 15,
                lr: 0.001,
                count: 2000,
                noise: 0.2,
                ..base
            },
            ExperimentId::NcutSeg => ExperimentConfig {
                epochs: 8,
                lr: 0.05,
                batch_size: 4,
                count: 60,
                noise: 0.25,
                ..base
            },
            ExperimentId::Graphmatch => ExperimentConfig {
                epochs: 10,
                lr: 0.05,
                batch_size: 5,
                count: 400,
                ..base
            },
            ExperimentId::Levelset => ExperimentConfig {
                epochs: 60,
                lr: 0.02,
                size: 15,
                ..base
            },
        }
    }

    /// Defaults overlaid with the contents of a config file.
    pub fn load(experiment: ExperimentId, path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::defaults(experiment);
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; `#` starts a comment. An `experiment`
    /// key, if present, must name this experiment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: k + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if key == "experiment" {
                if ExperimentId::parse(value) != Some(self.experiment) {
                    return Err(ConfigError::WrongExperiment {
                        expected: self.experiment,
                        found: value.into(),
                    });
                }
                continue;
            }
            self.set(key, value)?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: value.into(),
            })
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "count" => self.count = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "constraints" => self.constraints = num(key, value)?,
            "size" => self.size = num(key, value)?,
            "noise" => self.noise = num(key, value)?,
            "keypoints" => self.keypoints = num(key, value)?,
            "jitter" => self.jitter = num(key, value)?,
            "forward_tol" => self.forward_tol = num(key, value)?,
            "ip_tol" => self.ip_tol = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ints = [
            ("seed", self.seed as usize),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("count", self.count),
            ("hidden", self.hidden),
            ("constraints", self.constraints),
            ("size", self.size),
            ("keypoints", self.keypoints),
        ];
        for (name, v) in ints {
            if v == 0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        let reals = [
            ("lr", self.lr),
            ("noise", self.noise),
            ("jitter", self.jitter),
            ("forward_tol", self.forward_tol),
            ("ip_tol", self.ip_tol),
        ];
        for (name, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::NotPositive(name));
            }
        }
        Ok(())
    }

    /// The resolved config as `key = value` lines, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = format!("experiment = {}\n", self.experiment);
        for key in KEYS {
            let value = match *key {
                "seed" => self.seed.to_string(),
                "epochs" => self.epochs.to_string(),
                "lr" => self.lr.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "count" => self.count.to_string(),
                "hidden" => self.hidden.to_string(),
                "constraints" => self.constraints.to_string(),
                "size" => self.size.to_string(),
                "noise" => self.noise.to_string(),
                "keypoints" => self.keypoints.to_string(),
                "jitter" => self.jitter.to_string(),
                "forward_tol" => self.forward_tol.to_string(),
                "ip_tol" => self.ip_tol.to_string(),
                "out" => self.out.display().to_string(),
                _ => unreachable!(),
            };
            s.push_str(&format!("{key} = {value}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_text() {
        let mut cfg = ExperimentConfig::defaults(ExperimentId::NcutSeg);
        cfg.apply_text("# tweak\nseed = 7\nlr=0.5  # faster\n\nout = /tmp/x\n")
            .unwrap();
        assert_eq!((cfg.seed, cfg.lr), (7, 0.5));
        let mut back = ExperimentConfig::defaults(ExperimentId::NcutSeg);
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = ExperimentConfig::defaults(ExperimentId::Levelset);
        assert!(matches!(
            cfg.apply_text("epochs = 0"),
            Err(ConfigError::NotPositive("epochs"))
        ));
        assert!(matches!(cfg.apply_text("nope = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(cfg.apply_text("lr = fast"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(cfg.apply_text("lr"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(
            cfg.apply_text("experiment = qp-digits"),
            Err(ConfigError::WrongExperiment { .. })
        ));
        assert_eq!(ExperimentId::parse("ncut-seg"), Some(ExperimentId::NcutSeg));
        assert_eq!(ExperimentId::parse("mnist"), None);
    }
}
