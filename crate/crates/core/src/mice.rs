//! Specific entropy from mutual informations of successively halved blocks:
//!
//! ```text
//! s₀ = s_k − ½ Σ_{j=1..k} M(A_j) / V_j,    V_j = 2^{−j} V₀,
//! ```
//!
//! where `M(A_j)` is the mutual information between the two halves of the
//! level-`j−1` block and `s_k` is the entropy per site of the smallest block.

use crate::error::{Error, Result};
use crate::exact::{entropy_bits, marginalize, shannon_entropy, state_probabilities, table_mutual_information, Partition, ProbabilityTable};
use crate::mine::{estimate_mi, TrainConfig};
use crate::plugin::plugin_mi;
use crate::sampling::{project, BitstringDataset};
use crate::wavefunction::WaveFunction;

/// One halving step: `half` is kept for the next level, `twin` is the other half.
#[derive(Debug, Clone, PartialEq)]
pub struct HalvingLevel {
    pub half: Vec<usize>,
    pub twin: Vec<usize>,
}

impl HalvingLevel {
    pub fn volume(&self) -> usize {
        self.half.len()
    }
}

/// Contiguous left/right halvings of `sites` down to `terminal_size`.
pub fn halving_schedule(sites: &[usize], terminal_size: usize) -> Result<Vec<HalvingLevel>> {
    if terminal_size == 0 {
        return Err(Error::InvalidParams("terminal size must be positive".into()));
    }
    let n = sites.len();
    if n < 2 * terminal_size || !n.is_multiple_of(terminal_size) || !(n / terminal_size).is_power_of_two() {
        return Err(Error::InvalidParams(format!(
            "{n} sites is not a power-of-two multiple (≥ 2) of terminal size {terminal_size}"
        )));
    }
    let mut levels = Vec::new();
    let mut block = sites;
    while block.len() > terminal_size {
        let (left, right) = block.split_at(block.len() / 2);
        levels.push(HalvingLevel { half: left.to_vec(), twin: right.to_vec() });
        block = left;
    }
    Ok(levels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorTag {
    Exact,
    Plugin,
    Mine,
}

impl EstimatorTag {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorTag::Exact => "exact",
            EstimatorTag::Plugin => "plugin",
            EstimatorTag::Mine => "mine",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiceLevel {
    pub half: Vec<usize>,
    pub twin: Vec<usize>,
    pub volume: usize,
    pub mi: f64,
    pub mi_std: f64,
    pub estimator: EstimatorTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiceDecomposition {
    pub levels: Vec<MiceLevel>,
    pub v0: usize,
    pub terminal_sites: Vec<usize>,
    /// Entropy per site of the terminal block.
    pub s_k: f64,
    pub s0: f64,
}

impl MiceDecomposition {
    fn assemble(v0: usize, terminal_sites: Vec<usize>, s_k: f64, levels: Vec<MiceLevel>) -> Self {
        let mut d = Self { levels, v0, terminal_sites, s_k, s0: 0.0 };
        d.s0 = d.reconstruct_s0();
        d
    }

    /// `s_k − ½ Σ M(A_j)/V_j` from the stored parts.
    pub fn reconstruct_s0(&self) -> f64 {
        self.s_k - 0.5 * self.levels.iter().map(|l| l.mi / l.volume as f64).sum::<f64>()
    }
}

/// How sampled levels are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiceMode {
    /// Plug-in at every level.
    Plugin,
    /// Neural estimates for halves larger than the threshold, plug-in below.
    Mine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiceConfig {
    pub terminal_size: usize,
    /// Largest half size estimated by plug-in in [`MiceMode::Mine`].
    pub plugin_threshold: usize,
    pub train: TrainConfig,
}

impl Default for MiceConfig {
    fn default() -> Self {
        Self { terminal_size: 1, plugin_threshold: 4, train: TrainConfig::default() }
    }
}

/// Specific entropy of a measured dataset over the block `0..N`.
pub fn specific_entropy(dataset: &BitstringDataset, config: &MiceConfig, mode: MiceMode) -> Result<MiceDecomposition> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sites: Vec<usize> = (0..dataset.n_sites()).collect();
    let schedule = halving_schedule(&sites, config.terminal_size)?;
    let mut levels = Vec::with_capacity(schedule.len());
    for (j, level) in schedule.into_iter().enumerate() {
        let part = Partition::new(level.half.clone(), level.twin.clone(), dataset.n_sites())?;
        let use_mine = mode == MiceMode::Mine && level.volume() > config.plugin_threshold;
        let (mi, mi_std, estimator) = if use_mine {
            let mut train = config.train.clone();
            train.seed = crate::seeds::derive(config.train.seed, j as u64);
            let est = estimate_mi(dataset, &part, &train)?;
            (est.value, est.std, EstimatorTag::Mine)
        } else {
            (plugin_mi(dataset, &part)?, 0.0, EstimatorTag::Plugin)
        };
        levels.push(MiceLevel { volume: level.volume(), half: level.half, twin: level.twin, mi, mi_std, estimator });
    }
    let terminal = terminal_block(&sites, config.terminal_size);
    let s_k = empirical_entropy(&project(dataset, &terminal)?, terminal.len()) / terminal.len() as f64;
    Ok(MiceDecomposition::assemble(sites.len(), terminal, s_k, levels))
}

/// Exact-mode decomposition of a distribution over the block `0..n_bits`.
pub fn specific_entropy_exact(table: &ProbabilityTable, terminal_size: usize) -> Result<MiceDecomposition> {
    let n = table.n_bits();
    let sites: Vec<usize> = (0..n).collect();
    let schedule = halving_schedule(&sites, terminal_size)?;
    let levels = schedule
        .into_iter()
        .map(|level| {
            let part = Partition::new(level.half.clone(), level.twin.clone(), n)?;
            Ok(MiceLevel {
                volume: level.volume(),
                mi: table_mutual_information(table, &part)?,
                half: level.half,
                twin: level.twin,
                mi_std: 0.0,
                estimator: EstimatorTag::Exact,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let terminal = terminal_block(&sites, terminal_size);
    let s_k = shannon_entropy(&marginalize(table, &terminal)?) / terminal.len() as f64;
    Ok(MiceDecomposition::assemble(n, terminal, s_k, levels))
}

/// `H(|ψ|²)/N`.
pub fn exact_specific_entropy(psi: &WaveFunction) -> f64 {
    shannon_entropy(&state_probabilities(psi)) / psi.n_sites() as f64
}

fn terminal_block(sites: &[usize], terminal_size: usize) -> Vec<usize> {
    sites[..terminal_size].to_vec()
}

fn empirical_entropy(configs: &[u32], width: usize) -> f64 {
    let mut counts = vec![0.0; 1 << width];
    for &c in configs {
        counts[c as usize] += 1.0;
    }
    let n = configs.len() as f64;
    counts.iter_mut().for_each(|c| *c /= n);
    entropy_bits(&counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_sizes() {
        let sites: Vec<usize> = (0..16).collect();
        let sizes: Vec<usize> = halving_schedule(&sites, 1).unwrap().iter().map(|l| l.volume()).collect();
        assert_eq!(sizes, vec![8, 4, 2, 1]);
        let sizes: Vec<usize> = halving_schedule(&sites[..8], 2).unwrap().iter().map(|l| l.volume()).collect();
        assert_eq!(sizes, vec![4, 2]);
        let twelve: Vec<usize> = (0..12).collect();
        assert!(halving_schedule(&twelve, 1).is_err());
        let first = &halving_schedule(&sites, 1).unwrap()[0];
        assert_eq!(first.half, (0..8).collect::<Vec<_>>());
        assert_eq!(first.twin, (8..16).collect::<Vec<_>>());
    }

    #[test]
    fn exact_mode_cat_state() {
        let cat = WaveFunction::neel_cat(16).unwrap();
        let d = specific_entropy_exact(&state_probabilities(&cat), 1).unwrap();
        assert!((d.s_k - 1.0).abs() < 1e-12);
        for level in &d.levels {
            assert!((level.mi - 1.0).abs() < 1e-12);
        }
        assert!((d.s0 - 1.0 / 16.0).abs() < 1e-12);
        assert_eq!(d.s0, d.reconstruct_s0());
    }

    #[test]
    fn exact_mode_trivial_states() {
        let fm = state_probabilities(&WaveFunction::basis_state(8, 0).unwrap());
        let d = specific_entropy_exact(&fm, 1).unwrap();
        assert_eq!((d.s_k, d.s0), (0.0, 0.0));
        assert!(d.levels.iter().all(|l| l.mi == 0.0));

        let d = specific_entropy_exact(&ProbabilityTable::uniform(8), 1).unwrap();
        assert!((d.s0 - 1.0).abs() < 1e-12);
        assert!(d.levels.iter().all(|l| l.mi.abs() < 1e-12));
    }

    #[test]
    fn exact_specific_entropy_examples() {
        assert_eq!(exact_specific_entropy(&WaveFunction::basis_state(8, 0).unwrap()), 0.0);
        assert!((exact_specific_entropy(&WaveFunction::neel_cat(16).unwrap()) - 1.0 / 16.0).abs() < 1e-15);
        assert!((exact_specific_entropy(&WaveFunction::uniform(8).unwrap()) - 1.0).abs() < 1e-12);
    }
}
