//! Flat `key = value` training configuration files.
//!
//! ```text
//! # comments and blank lines are ignored
//! loss = aucm
//! margin = 1.0
//! epochs = 200
//! batch_size = 64
//! lr_primal = 0.01
//! lr_dual = 0.01
//! seed = 7
//! arch = mlp
//! hidden = 16,8
//! train = data/train.csv
//! val = data/val.csv
//! ```
//!
//! Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::losses::{LossKind, DEFAULT_MARGIN};
use crate::scorer::Architecture;
use crate::training::TrainConfig;
use crate::{Error, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "loss",
    "margin",
    "epochs",
    "batch_size",
    "lr_primal",
    "lr_dual",
    "seed",
    "arch",
    "hidden",
    "train",
    "val",
];

/// Raw key/value pairs after syntax and key-name checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, found {line:?}",
                    i + 1
                ))
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key {key:?}",
                    i + 1
                )));
            }
            if map
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key:?}",
                    i + 1
                )));
            }
        }
        Ok(Self(map))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        self.0.insert(key.to_string(), value.into());
        Ok(())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }
}

/// Everything `train` needs: optimization settings, architecture and data paths.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSetup {
    pub train: TrainConfig,
    /// `linear` or `mlp`; the input dimension is taken from the data.
    pub arch_kind: String,
    pub hidden: Vec<usize>,
    pub train_path: Option<PathBuf>,
    pub val_path: Option<PathBuf>,
}

impl TrainSetup {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = TrainConfig::default();
        let margin = kv.parsed::<f64>("margin")?.unwrap_or(DEFAULT_MARGIN);
        let loss = LossKind::from_name(kv.get("loss").unwrap_or("ce"), margin)?;
        let hidden = match kv.get("hidden") {
            None => vec![16],
            Some(text) => text
                .split(',')
                .map(|h| {
                    h.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("hidden: cannot parse {text:?}")))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let arch_kind = kv.get("arch").unwrap_or("linear").to_string();
        if arch_kind != "linear" && arch_kind != "mlp" {
            return Err(Error::Config(format!(
                "arch must be linear or mlp, got {arch_kind:?}"
            )));
        }
        let train = TrainConfig {
            loss,
            epochs: kv.parsed("epochs")?.unwrap_or(d.epochs),
            batch_size: kv.parsed("batch_size")?.unwrap_or(d.batch_size),
            lr_primal: kv.parsed("lr_primal")?.unwrap_or(d.lr_primal),
            lr_dual: kv.parsed("lr_dual")?.unwrap_or(d.lr_dual),
            seed: kv.parsed("seed")?.unwrap_or(d.seed),
        };
        train.validate()?;
        Ok(Self {
            train,
            arch_kind,
            hidden,
            train_path: kv.get("train").map(PathBuf::from),
            val_path: kv.get("val").map(PathBuf::from),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_key_values(&KeyValues::parse(&text)?)
    }

    pub fn architecture(&self, d: usize) -> Result<Architecture> {
        let arch = match self.arch_kind.as_str() {
            "mlp" => Architecture::Mlp {
                d,
                hidden: self.hidden.clone(),
            },
            _ => Architecture::Linear { d },
        };
        arch.validate()?;
        Ok(arch)
    }
}
