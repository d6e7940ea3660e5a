//! Flat `key=value` configuration.
//!
//! One pair per line, `#` starts a comment. Unknown keys are rejected and
//! every value is validated against the preconditions of the module that
//! owns it. Relative NVM image paths resolve against the config file's
//! directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::controller::{MacMode, Seccs};
use crate::keygen::KeyGenerator;
use crate::puf::{PufDevice, Trng, DEFAULT_STAGES, MAX_STAGES};
use crate::simulator::{DEFAULT_THRESHOLD_OFF, DEFAULT_THRESHOLD_SAVE, MAX_TOTAL_STEPS};

/// Device seed of the shipped default PUF instance.
pub const DEFAULT_DEVICE_SEED: u64 = 0x5ECC_5A11_D00D_F00D;
pub const DEFAULT_TRNG_SEED: u64 = 1;
pub const DEFAULT_TOTAL_STEPS: u64 = 10_000;

pub const TARGET_NVM_CAPACITY: usize = 256;
pub const KEY_NVM_CAPACITY: usize = 64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("{key}: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrngMode {
    Os,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub puf_n_stages: usize,
    pub puf_noise_sigma: f64,
    pub puf_device_seed: u64,
    pub trng_mode: TrngMode,
    pub trng_seed: u64,
    pub threshold_save: f64,
    pub threshold_off: f64,
    pub total_steps: u64,
    pub target_path: PathBuf,
    pub key_path: PathBuf,
    pub mode: MacMode,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            puf_n_stages: DEFAULT_STAGES,
            puf_noise_sigma: 0.0,
            puf_device_seed: DEFAULT_DEVICE_SEED,
            trng_mode: TrngMode::Deterministic,
            trng_seed: DEFAULT_TRNG_SEED,
            threshold_save: DEFAULT_THRESHOLD_SAVE,
            threshold_off: DEFAULT_THRESHOLD_OFF,
            total_steps: DEFAULT_TOTAL_STEPS,
            target_path: PathBuf::from("target.nvm"),
            key_path: PathBuf::from("key.nvm"),
            mode: MacMode::EncryptAndMac,
        }
    }
}

fn parse_u64(key: &str, v: &str) -> Result<u64, ConfigError> {
    let parsed = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16),
        None => v.replace('_', "").parse(),
    };
    parsed.map_err(|e| invalid(key, e.to_string()))
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| invalid(key, e.to_string()))
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                text: raw.to_string(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            match key {
                "puf.n_stages" => cfg.puf_n_stages = parse_num(key, value)?,
                "puf.noise_sigma" => cfg.puf_noise_sigma = parse_num(key, value)?,
                "puf.device_seed" => cfg.puf_device_seed = parse_u64(key, value)?,
                "trng.mode" => {
                    cfg.trng_mode = match value {
                        "os" => TrngMode::Os,
                        "deterministic" => TrngMode::Deterministic,
                        _ => return Err(invalid(key, "expected \"os\" or \"deterministic\"")),
                    }
                }
                "trng.seed" => cfg.trng_seed = parse_u64(key, value)?,
                "sim.threshold_save" => cfg.threshold_save = parse_num(key, value)?,
                "sim.threshold_off" => cfg.threshold_off = parse_num(key, value)?,
                "sim.total_steps" => cfg.total_steps = parse_u64(key, value)?,
                "nvm.target_path" => cfg.target_path = PathBuf::from(value),
                "nvm.key_path" => cfg.key_path = PathBuf::from(value),
                "controller.mode" => {
                    cfg.mode = match value {
                        "paper" => MacMode::EncryptAndMac,
                        "etm" => MacMode::EncryptThenMac,
                        _ => return Err(invalid(key, "expected \"paper\" or \"etm\"")),
                    }
                }
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line: line_no,
                        key: key.to_string(),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a config file, resolving relative image paths
    /// against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.target_path = base.join(&cfg.target_path);
        cfg.key_path = base.join(&cfg.key_path);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.puf_n_stages == 0 || self.puf_n_stages > MAX_STAGES {
            return Err(invalid(
                "puf.n_stages",
                format!("must be in 1..={MAX_STAGES}"),
            ));
        }
        if !self.puf_noise_sigma.is_finite() || self.puf_noise_sigma < 0.0 {
            return Err(invalid("puf.noise_sigma", "must be finite and >= 0"));
        }
        if !self.threshold_save.is_finite() || !self.threshold_off.is_finite() {
            return Err(invalid("sim.threshold_save", "thresholds must be finite"));
        }
        if self.threshold_off >= self.threshold_save {
            return Err(invalid(
                "sim.threshold_off",
                "must be below sim.threshold_save",
            ));
        }
        if self.total_steps > MAX_TOTAL_STEPS {
            return Err(invalid(
                "sim.total_steps",
                format!("must be <= {MAX_TOTAL_STEPS}"),
            ));
        }
        Ok(())
    }

    pub fn trng(&self) -> Trng {
        match self.trng_mode {
            TrngMode::Os => Trng::os(),
            TrngMode::Deterministic => Trng::deterministic(self.trng_seed),
        }
    }

    pub fn puf(&self) -> PufDevice {
        PufDevice::new(
            self.puf_device_seed,
            self.puf_n_stages,
            self.puf_noise_sigma,
        )
        .expect("validated")
    }

    pub fn build_seccs(&self) -> Seccs {
        Seccs::new(KeyGenerator::new(self.trng(), self.puf()), self.mode)
    }
}
