//! Exact σᶻ-basis distributions and the entropies derived from them.
//!
//! All entropies are in bits.

use nalgebra::DMatrix;

use crate::bits;
use crate::error::{Error, Result};
use crate::wavefunction::WaveFunction;

/// Default `M` below which the α ratio is reported as undefined.
pub const ALPHA_FLOOR: f64 = 1e-6;
/// Squared Schmidt coefficients below this count as exact zeros.
pub const SCHMIDT_CUTOFF: f64 = 1e-14;

/// Two disjoint ordered site lists defining subsystems A and B.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    sites_a: Vec<usize>,
    sites_b: Vec<usize>,
}

impl Partition {
    pub fn new(sites_a: Vec<usize>, sites_b: Vec<usize>, n_sites: usize) -> Result<Self> {
        if sites_a.is_empty() || sites_b.is_empty() {
            return Err(Error::Partition("both subsystems must be non-empty".into()));
        }
        let mut seen = vec![false; n_sites];
        for &s in sites_a.iter().chain(&sites_b) {
            if s >= n_sites {
                return Err(Error::IndexOutOfRange { index: s, width: n_sites });
            }
            if std::mem::replace(&mut seen[s], true) {
                return Err(Error::Partition(format!("site {s} appears twice")));
            }
        }
        Ok(Self { sites_a, sites_b })
    }

    /// Contiguous halves of the ring: A = 0..N/2, B = N/2..N.
    pub fn half(n_sites: usize) -> Result<Self> {
        if !n_sites.is_multiple_of(2) || n_sites < 2 {
            return Err(Error::Partition(format!("half partition needs an even chain, got {n_sites}")));
        }
        let h = n_sites / 2;
        Self::new((0..h).collect(), (h..n_sites).collect(), n_sites)
    }

    /// Adjacent quarter blocks: A = 0..N/4, B = N/4..N/2.
    pub fn quarter(n_sites: usize) -> Result<Self> {
        if !n_sites.is_multiple_of(4) {
            return Err(Error::Partition(format!(
                "quarter partition needs N divisible by 4, got {n_sites}"
            )));
        }
        let q = n_sites / 4;
        Self::new((0..q).collect(), (q..2 * q).collect(), n_sites)
    }

    pub fn sites_a(&self) -> &[usize] {
        &self.sites_a
    }

    pub fn sites_b(&self) -> &[usize] {
        &self.sites_b
    }

    /// A's sites followed by B's: joint configurations are `a | b << |A|`.
    pub fn joint_sites(&self) -> Vec<usize> {
        self.sites_a.iter().chain(&self.sites_b).copied().collect()
    }

    pub fn swapped(&self) -> Self {
        Self { sites_a: self.sites_b.clone(), sites_b: self.sites_a.clone() }
    }

    pub fn covers(&self, n_sites: usize) -> bool {
        self.sites_a.len() + self.sites_b.len() == n_sites
    }

    pub fn max_site(&self) -> usize {
        self.sites_a.iter().chain(&self.sites_b).copied().max().unwrap_or(0)
    }

    fn check_width(&self, width: usize) -> Result<()> {
        let m = self.max_site();
        if m >= width {
            return Err(Error::IndexOutOfRange { index: m, width });
        }
        Ok(())
    }
}

/// A probability distribution over `n_bits`-wide configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    probs: Vec<f64>,
    n_bits: usize,
}

impl ProbabilityTable {
    pub fn new(probs: Vec<f64>, n_bits: usize) -> Result<Self> {
        if probs.len() != 1usize << n_bits {
            return Err(Error::Dimension { expected: 1 << n_bits, got: probs.len() });
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::Numeric(format!("negative or non-finite probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self { probs, n_bits })
    }

    pub fn uniform(n_bits: usize) -> Self {
        let dim = 1usize << n_bits;
        Self { probs: vec![1.0 / dim as f64; dim], n_bits }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Born-rule probabilities `|ψ(s)|²`.
pub fn state_probabilities(psi: &WaveFunction) -> ProbabilityTable {
    ProbabilityTable {
        probs: psi.amplitudes().iter().map(|a| a * a).collect(),
        n_bits: psi.n_sites(),
    }
}

/// Marginal over `sites`; output configurations are packed in list order.
pub fn marginalize(table: &ProbabilityTable, sites: &[usize]) -> Result<ProbabilityTable> {
    if let Some(&s) = sites.iter().find(|&&s| s >= table.n_bits) {
        return Err(Error::IndexOutOfRange { index: s, width: table.n_bits });
    }
    let mut probs = vec![0.0; 1 << sites.len()];
    for (s, &p) in table.probs.iter().enumerate() {
        if p != 0.0 {
            probs[bits::gather(s as u32, sites) as usize] += p;
        }
    }
    Ok(ProbabilityTable { probs, n_bits: sites.len() })
}

pub fn shannon_entropy(table: &ProbabilityTable) -> f64 {
    entropy_bits(&table.probs)
}

/// `−Σ pᵢ log₂ pᵢ` with `0 log 0 = 0`.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum::<f64>() + 0.0
}

/// `H(A) + H(B) − H(A,B)` of a distribution.
pub fn table_mutual_information(table: &ProbabilityTable, part: &Partition) -> Result<f64> {
    part.check_width(table.n_bits)?;
    let joint = marginalize(table, &part.joint_sites())?;
    let na = part.sites_a.len();
    let a_sites: Vec<usize> = (0..na).collect();
    let b_sites: Vec<usize> = (na..na + part.sites_b.len()).collect();
    let pa = marginalize(&joint, &a_sites)?;
    let pb = marginalize(&joint, &b_sites)?;
    Ok(shannon_entropy(&pa) + shannon_entropy(&pb) - shannon_entropy(&joint))
}

/// Classical mutual information of the σᶻ measurement outcomes of A and B.
pub fn exact_mutual_information(psi: &WaveFunction, part: &Partition) -> Result<f64> {
    table_mutual_information(&state_probabilities(psi), part)
}

/// `−Tr ρ_A log₂ ρ_A` from the Schmidt spectrum across a full bipartition.
pub fn von_neumann_entropy(psi: &WaveFunction, part: &Partition) -> Result<f64> {
    let n = psi.n_sites();
    part.check_width(n)?;
    if !part.covers(n) {
        return Err(Error::Partition(format!(
            "von Neumann entropy needs a full bipartition of {n} sites, got {} + {}",
            part.sites_a.len(),
            part.sites_b.len()
        )));
    }
    let rows = 1 << part.sites_a.len();
    let cols = 1 << part.sites_b.len();
    let mut m = DMatrix::<f64>::zeros(rows, cols);
    for (s, &a) in psi.amplitudes().iter().enumerate() {
        let s = s as u32;
        m[(bits::gather(s, &part.sites_a) as usize, bits::gather(s, &part.sites_b) as usize)] = a;
    }
    let weights: Vec<f64> = m
        .singular_values()
        .iter()
        .map(|l| l * l)
        .filter(|&w| w >= SCHMIDT_CUTOFF)
        .collect();
    Ok(entropy_bits(&weights))
}

/// `S_vN / M`, or `None` when `M < floor`.
pub fn alpha_ratio(psi: &WaveFunction, part: &Partition, floor: f64) -> Result<Option<f64>> {
    let m = exact_mutual_information(psi, part)?;
    if m < floor {
        return Ok(None);
    }
    Ok(Some(von_neumann_entropy(psi, part)? / m))
}

/// Site-averaged magnetization `(1/N) Σᵢ ⟨σᶻᵢ⟩`.
pub fn mean_sz(psi: &WaveFunction) -> f64 {
    let n = psi.n_sites() as f64;
    psi.amplitudes()
        .iter()
        .enumerate()
        .map(|(s, a)| a * a * (n - 2.0 * (s as u32).count_ones() as f64) / n)
        .sum()
}
