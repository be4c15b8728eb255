use crate::bits;
use crate::error::{Error, Result};

/// Normalization tolerance on the squared norm.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Real amplitudes over the 2^N computational basis of an N-spin chain.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    amplitudes: Vec<f64>,
    n_sites: usize,
}

impl WaveFunction {
    /// Wraps already-normalized amplitudes.
    pub fn new(amplitudes: Vec<f64>, n_sites: usize) -> Result<Self> {
        check_len(amplitudes.len(), n_sites)?;
        let norm2: f64 = amplitudes.iter().map(|a| a * a).sum();
        if (norm2 - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(norm2));
        }
        Ok(Self { amplitudes, n_sites })
    }

    pub fn normalized(mut amplitudes: Vec<f64>, n_sites: usize) -> Result<Self> {
        check_len(amplitudes.len(), n_sites)?;
        let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Numeric(format!("cannot normalize vector with norm {norm}")));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { amplitudes, n_sites })
    }

    pub fn basis_state(n_sites: usize, config: u32) -> Result<Self> {
        let mut amplitudes = vec![0.0; 1 << n_sites];
        let slot = amplitudes
            .get_mut(config as usize)
            .ok_or(Error::IndexOutOfRange { index: config as usize, width: 1 << n_sites })?;
        *slot = 1.0;
        Ok(Self { amplitudes, n_sites })
    }

    /// `(|0101…⟩ + |1010…⟩)/√2` on an even chain.
    pub fn neel_cat(n_sites: usize) -> Result<Self> {
        if !n_sites.is_multiple_of(2) {
            return Err(Error::InvalidParams("Néel states need an even chain".into()));
        }
        let even: u32 = (0..n_sites).filter(|k| k % 2 == 1).map(|k| 1u32 << k).sum();
        let odd = !even & bits::low_mask(n_sites);
        let mut amplitudes = vec![0.0; 1 << n_sites];
        amplitudes[even as usize] = std::f64::consts::FRAC_1_SQRT_2;
        amplitudes[odd as usize] = std::f64::consts::FRAC_1_SQRT_2;
        Ok(Self { amplitudes, n_sites })
    }

    /// Equal-weight superposition of every basis state.
    pub fn uniform(n_sites: usize) -> Result<Self> {
        let dim = 1usize << n_sites;
        Self::normalized(vec![1.0; dim], n_sites)
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<f64> {
        self.amplitudes
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn dot(&self, other: &WaveFunction) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: other.dim() });
        }
        Ok(dot(&self.amplitudes, &other.amplitudes))
    }
}

fn check_len(len: usize, n_sites: usize) -> Result<()> {
    if n_sites >= usize::BITS as usize || len != 1usize << n_sites {
        return Err(Error::Dimension { expected: 1usize.checked_shl(n_sites as u32).unwrap_or(0), got: len });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
