//! Plain-text `key = value` overrides for [`SweepConfig`].
//!
//! Blank lines and lines starting with `#` are ignored. Keys:
//!
//! | key | value |
//! |-----|-------|
//! | `n_sites`, `samples`, `seed` | integer |
//! | `bx_range`, `bz_range` | `start:stop:step` |
//! | `partition` | `half` or `quarter` |
//! | `quantities` | comma list, see [`Quantity::parse_list`] |
//! | `out` | directory |
//! | `delta` | shift for fidelity susceptibility |
//! | `solver_tol`, `solver_max_iter`, `krylov_dim` | eigensolver |
//! | `learning_rate`, `momentum`, `dropout_rate`, `batch_size`, `max_iterations`, `split_fraction`, `ema_gamma`, `ma_window`, `validation_period`, `ensemble_size` | training |
//! | `patience` | integer or `none` |
//! | `selection` | `ma` or `ema` |
//! | `gradient` | `plain` or `ema:<rate>` |
//! | `shuffle` | `per_batch` or `per_run` |
//! | `shared_dropout_mask` | `true` or `false` |
//! | `terminal_size`, `plugin_threshold` | MICE |

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mine::{CurveSelection, GradientMode, ShuffleMode};
use crate::sweep::{Quantity, SweepConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    pub entries: Vec<ConfigEntry>,
}

impl ConfigFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse { line: i + 1, message: format!("expected key = value, found {line:?}") });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse { line: i + 1, message: "empty key".into() });
            }
            entries.push(ConfigEntry { line: i + 1, key: key.to_string(), value: value.trim().to_string() });
        }
        Ok(Self { entries })
    }

    /// Applies entries in file order; later keys win.
    pub fn apply(&self, config: &mut SweepConfig) -> Result<()> {
        for e in &self.entries {
            apply_entry(config, &e.key, &e.value)
                .map_err(|err| Error::Config(format!("line {}: {}: {err}", e.line, e.key)))?;
        }
        Ok(())
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T> {
    value.parse::<T>().map_err(|_| Error::Config(format!("cannot parse {value:?}")))
}

fn apply_entry(c: &mut SweepConfig, key: &str, v: &str) -> Result<()> {
    let t = &mut c.train;
    match key {
        "n_sites" => c.n_sites = parse(v)?,
        "samples" => c.samples = parse(v)?,
        "seed" => c.seed = parse(v)?,
        "bx_range" => c.bx = v.parse()?,
        "bz_range" => c.bz = v.parse()?,
        "partition" => c.partition = v.parse()?,
        "quantities" => c.quantities = Quantity::parse_list(v)?,
        "out" => c.out_dir = PathBuf::from(v),
        "delta" => c.delta = parse(v)?,
        "solver_tol" => c.solver.tol = parse(v)?,
        "solver_max_iter" => c.solver.max_iter = parse(v)?,
        "krylov_dim" => c.solver.krylov_dim = parse(v)?,
        "learning_rate" => t.learning_rate = parse(v)?,
        "momentum" => t.momentum = parse(v)?,
        "dropout_rate" => t.dropout_rate = parse(v)?,
        "batch_size" => t.batch_size = parse(v)?,
        "max_iterations" => t.max_iterations = parse(v)?,
        "split_fraction" => t.split_fraction = parse(v)?,
        "ema_gamma" => t.ema_gamma = parse(v)?,
        "ma_window" => t.ma_window = parse(v)?,
        "validation_period" => t.validation_period = parse(v)?,
        "ensemble_size" => t.ensemble_size = parse(v)?,
        "patience" => t.patience = if v == "none" { None } else { Some(parse(v)?) },
        "selection" => {
            t.selection = match v {
                "ma" => CurveSelection::MovingAverage,
                "ema" => CurveSelection::Exponential,
                _ => return Err(Error::Config(format!("expected ma or ema, got {v:?}"))),
            }
        }
        "gradient" => {
            t.gradient = match v.split_once(':') {
                None if v == "plain" => GradientMode::Plain,
                Some(("ema", rate)) => GradientMode::EmaCorrected { rate: parse(rate)? },
                _ => return Err(Error::Config(format!("expected plain or ema:<rate>, got {v:?}"))),
            }
        }
        "shuffle" => {
            t.shuffle = match v {
                "per_batch" => ShuffleMode::PerBatch,
                "per_run" => ShuffleMode::PerRun,
                _ => return Err(Error::Config(format!("expected per_batch or per_run, got {v:?}"))),
            }
        }
        "shared_dropout_mask" => t.shared_dropout_mask = parse(v)?,
        "terminal_size" => c.mice.terminal_size = parse(v)?,
        "plugin_threshold" => c.mice.plugin_threshold = parse(v)?,
        _ => return Err(Error::Config("unknown key".into())),
    }
    c.mice.train = c.train.clone();
    Ok(())
}
