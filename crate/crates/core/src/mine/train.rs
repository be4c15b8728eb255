//! Training protocol: 80/20 split, random batches, periodic validation on the
//! held-out set, smoothing, and stopping at the maximum of the smoothed
//! validation curve. Ensembles average independently seeded runs.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mlp::{backward_masked, dv_objective, sgd_step, DropoutMasks, GradientMode, MlpParams, PartitionAverage};
use super::smooth::{ema_smooth, half_widths, ma_smooth};
use crate::error::{Error, Result};
use crate::exact::Partition;
use crate::sampling::{pair_indices, project, BitstringDataset};
use crate::seeds;

/// Which smoothed validation curve supplies the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveSelection {
    MovingAverage,
    Exponential,
}

/// When the marginal-side permutation is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShuffleMode {
    /// Fresh permutation within every batch.
    PerBatch,
    /// One permutation of the training B-side per run.
    PerRun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub split_fraction: f64,
    /// Smoothing rate of the per-iteration training EMA.
    pub ema_gamma: f64,
    /// Moving-average window, in iterations.
    pub ma_window: usize,
    pub validation_period: usize,
    pub ensemble_size: usize,
    /// Iterations without improvement of the smoothed validation curve before stopping.
    pub patience: Option<usize>,
    pub selection: CurveSelection,
    pub gradient: GradientMode,
    pub shuffle: ShuffleMode,
    /// Use one dropout mask for the joint and marginal passes of an iteration.
    pub shared_dropout_mask: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.8,
            dropout_rate: 0.1,
            batch_size: 256,
            max_iterations: 20000,
            split_fraction: 0.8,
            ema_gamma: 0.001,
            ma_window: 500,
            validation_period: 100,
            ensemble_size: 15,
            patience: Some(2000),
            selection: CurveSelection::MovingAverage,
            gradient: GradientMode::Plain,
            shuffle: ShuffleMode::PerBatch,
            shared_dropout_mask: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction must be in (0, 1), got {}", self.split_fraction));
        }
        if !(self.ema_gamma > 0.0 && self.ema_gamma <= 1.0) {
            return bad(format!("ema_gamma must be in (0, 1], got {}", self.ema_gamma));
        }
        if self.batch_size == 0 || self.max_iterations == 0 || self.validation_period == 0 {
            return bad("batch_size, max_iterations and validation_period must be positive".into());
        }
        if self.ma_window == 0 || self.ensemble_size == 0 {
            return bad("ma_window and ensemble_size must be positive".into());
        }
        if let GradientMode::EmaCorrected { rate } = self.gradient {
            if !(rate > 0.0 && rate <= 1.0) {
                return bad(format!("EMA gradient rate must be in (0, 1], got {rate}"));
            }
        }
        Ok(())
    }

    /// Smallest dataset with a full training batch.
    pub fn min_dataset_size(&self) -> usize {
        (self.batch_size as f64 / self.split_fraction).ceil() as usize
    }

    fn ma_points(&self) -> usize {
        ((self.ma_window as f64 / self.validation_period as f64).round() as usize).max(1)
    }

    fn validation_gamma(&self) -> f64 {
        (self.ema_gamma * self.validation_period as f64).min(1.0)
    }
}

/// Per-run learning curves.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurves {
    pub raw_train: Vec<f64>,
    pub ema_train: Vec<f64>,
    /// Iteration numbers (1-based) at which validation ran.
    pub valid_iterations: Vec<usize>,
    pub raw_valid: Vec<f64>,
    pub smoothed_valid: Vec<f64>,
}

impl TrainingCurves {
    /// CSV with columns `iteration,raw_train,ema_train,raw_valid,ma_valid`;
    /// validation columns are empty between validation steps.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,raw_train,ema_train,raw_valid,ma_valid")?;
        let mut v = 0;
        for (i, (raw, ema)) in self.raw_train.iter().zip(&self.ema_train).enumerate() {
            let it = i + 1;
            write!(out, "{it},{raw},{ema},")?;
            if self.valid_iterations.get(v) == Some(&it) {
                writeln!(out, "{},{}", self.raw_valid[v], self.smoothed_valid[v])?;
                v += 1;
            } else {
                writeln!(out, ",")?;
            }
        }
        out.flush()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Maximum of the smoothed validation curve, in bits.
    pub value: f64,
    pub stop_iteration: usize,
    pub iterations_run: usize,
    pub curves: TrainingCurves,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiEstimate {
    pub value: f64,
    pub per_network: Vec<f64>,
    pub std: f64,
    pub stop_iterations: Vec<usize>,
    pub diagnostics: Vec<TrainingCurves>,
}

/// Positions of A and B sites in the network input, in site order.
#[derive(Debug, Clone)]
pub struct InputLayout {
    slots: Vec<Slot>,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    A(usize),
    B(usize),
}

impl InputLayout {
    pub fn new(part: &Partition) -> Self {
        let mut tagged: Vec<(usize, Slot)> = part
            .sites_a()
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, Slot::A(i)))
            .chain(part.sites_b().iter().enumerate().map(|(i, &s)| (s, Slot::B(i))))
            .collect();
        tagged.sort_by_key(|t| t.0);
        Self { slots: tagged.into_iter().map(|t| t.1).collect() }
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    /// One column of 0/1 values per `(a, b)` pair.
    pub fn encode(&self, pairs: &[(u32, u32)]) -> DMatrix<f64> {
        DMatrix::from_fn(self.slots.len(), pairs.len(), |r, c| {
            let (a, b) = pairs[c];
            let bit = match self.slots[r] {
                Slot::A(i) => (a >> i) & 1,
                Slot::B(i) => (b >> i) & 1,
            };
            bit as f64
        })
    }
}

/// Online tracker of the smoothed validation maximum for early stopping.
struct StopTracker {
    right: usize,
    best: f64,
    best_iteration: usize,
}

impl StopTracker {
    /// Returns true once the last complete smoothed point is `patience` past the best.
    fn update(&mut self, raw: &[f64], iterations: &[usize], window: usize, patience: usize) -> bool {
        let k = raw.len();
        if k <= self.right {
            return false;
        }
        let center = k - 1 - self.right;
        let (left, _) = half_widths(window);
        let lo = center.saturating_sub(left);
        let value = raw[lo..k].iter().sum::<f64>() / (k - lo) as f64;
        if value > self.best {
            self.best = value;
            self.best_iteration = iterations[center];
        }
        iterations[center] - self.best_iteration >= patience
    }
}

pub fn train_single(
    dataset: &BitstringDataset,
    part: &Partition,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    let n = dataset.len();
    let need = config.min_dataset_size();
    if n < need {
        return Err(Error::DatasetTooSmall { have: n, need });
    }
    let a = project(dataset, part.sites_a())?;
    let b = project(dataset, part.sites_b())?;
    let layout = InputLayout::new(part);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = ((config.split_fraction * n as f64).floor() as usize).max(config.batch_size);
    if n_train >= n {
        return Err(Error::DatasetTooSmall { have: n, need: n_train + 1 });
    }
    let (train_idx, valid_idx) = order.split_at(n_train);

    let valid_pairs: Vec<(u32, u32)> = valid_idx.iter().map(|&i| (a[i], b[i])).collect();
    let valid_joint = layout.encode(&valid_pairs);
    let mut valid_b: Vec<u32> = valid_pairs.iter().map(|p| p.1).collect();

    let run_b: Vec<u32> = match config.shuffle {
        ShuffleMode::PerBatch => Vec::new(),
        ShuffleMode::PerRun => {
            let mut perm: Vec<u32> = train_idx.iter().map(|&i| b[i]).collect();
            perm.shuffle(&mut rng);
            perm
        }
    };

    let mut params = MlpParams::glorot(layout.dim(), &mut rng);
    let mut velocity = params.zeros_like();
    let mut average = PartitionAverage::default();
    let mut curves = TrainingCurves::default();
    let window = config.ma_points();
    let (_, right) = half_widths(window);
    let mut tracker = StopTracker { right, best: f64::NEG_INFINITY, best_iteration: 0 };
    let mut ema = None;

    let mut iterations_run = 0;
    for it in 1..=config.max_iterations {
        let picks = rand::seq::index::sample(&mut rng, n_train, config.batch_size);
        let (joint, marginal) = match config.shuffle {
            ShuffleMode::PerBatch => {
                let idx: Vec<usize> = picks.iter().map(|p| train_idx[p]).collect();
                pair_indices(&a, &b, &idx, &mut rng)?
            }
            ShuffleMode::PerRun => picks
                .iter()
                .map(|p| {
                    let i = train_idx[p];
                    ((a[i], b[i]), (a[i], run_b[p]))
                })
                .unzip(),
        };
        let xj = layout.encode(&joint);
        let xm = layout.encode(&marginal);
        let masks = (config.dropout_rate > 0.0).then(|| {
            DropoutMasks::sample(&params, config.batch_size, config.dropout_rate, &mut rng)
        });
        let marginal_masks = match (&masks, config.shared_dropout_mask) {
            (Some(_), false) => Some(DropoutMasks::sample(&params, config.batch_size, config.dropout_rate, &mut rng)),
            _ => None,
        };
        let (value, grad) = backward_masked(
            &params,
            &xj,
            &xm,
            masks.as_ref(),
            marginal_masks.as_ref().or(masks.as_ref()),
            config.gradient,
            &mut average,
        )?;
        if !value.is_finite() || !grad.is_finite() {
            return Err(Error::Numeric(format!("training diverged at iteration {it}")));
        }
        sgd_step(&mut params, &grad, &mut velocity, config.learning_rate, config.momentum)?;
        let e = match ema {
            None => value,
            Some(prev) => prev + config.ema_gamma * (value - prev),
        };
        ema = Some(e);
        curves.raw_train.push(value);
        curves.ema_train.push(e);
        iterations_run = it;

        if it % config.validation_period == 0 {
            valid_b.shuffle(&mut rng);
            let marg: Vec<(u32, u32)> = valid_pairs.iter().zip(&valid_b).map(|(p, &bt)| (p.0, bt)).collect();
            let v = dv_objective(&params, &valid_joint, &layout.encode(&marg))?;
            if !v.is_finite() {
                return Err(Error::Numeric(format!("validation diverged at iteration {it}")));
            }
            curves.raw_valid.push(v);
            curves.valid_iterations.push(it);
            if let Some(p) = config.patience {
                if tracker.update(&curves.raw_valid, &curves.valid_iterations, window, p) {
                    break;
                }
            }
        }
    }

    if curves.raw_valid.is_empty() {
        // Runs shorter than one validation period still get one validation point.
        valid_b.shuffle(&mut rng);
        let marg: Vec<(u32, u32)> = valid_pairs.iter().zip(&valid_b).map(|(p, &bt)| (p.0, bt)).collect();
        curves.raw_valid.push(dv_objective(&params, &valid_joint, &layout.encode(&marg))?);
        curves.valid_iterations.push(iterations_run);
    }
    curves.smoothed_valid = match config.selection {
        CurveSelection::MovingAverage => ma_smooth(&curves.raw_valid, window)?,
        CurveSelection::Exponential => ema_smooth(&curves.raw_valid, config.validation_gamma())?,
    };
    let (best, value) = curves
        .smoothed_valid
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    Ok(TrainOutcome {
        value,
        stop_iteration: curves.valid_iterations[best],
        iterations_run,
        curves,
    })
}

/// Ensemble of independently seeded runs.
pub fn estimate_mi(dataset: &BitstringDataset, part: &Partition, config: &TrainConfig) -> Result<MiEstimate> {
    config.validate()?;
    let outcomes: Vec<TrainOutcome> = (0..config.ensemble_size)
        .into_par_iter()
        .map(|i| train_single(dataset, part, config, seeds::derive(config.seed, i as u64)))
        .collect::<Result<_>>()?;
    let per_network: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    let (value, std) = mean_std(&per_network);
    Ok(MiEstimate {
        value,
        std,
        stop_iterations: outcomes.iter().map(|o| o.stop_iteration).collect(),
        per_network,
        diagnostics: outcomes.into_iter().map(|o| o.curves).collect(),
    })
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
