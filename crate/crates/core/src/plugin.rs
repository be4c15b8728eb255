//! Brute-force mutual information from empirical histograms, and the
//! `M(n) = M₀ + k/(n − n₀)` extrapolation in the sample count.

use rayon::prelude::*;

use crate::bits;
use crate::error::{Error, Result};
use crate::exact::{entropy_bits, Partition};
use crate::mine::mean_std;
use crate::sampling::{sample_bitstrings, BitstringDataset};
use crate::seeds;
use crate::wavefunction::WaveFunction;

/// Plug-in `H(A) + H(B) − H(A,B)` of the dataset's empirical distribution.
pub fn plugin_mi(dataset: &BitstringDataset, part: &Partition) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    weighted_plugin_mi(dataset.samples(), None, dataset.n_sites(), part)
}

/// Plug-in estimate on configurations with optional weights (unit weights if `None`).
pub fn weighted_plugin_mi(
    configs: &[u32],
    weights: Option<&[f64]>,
    n_sites: usize,
    part: &Partition,
) -> Result<f64> {
    if part.max_site() >= n_sites {
        return Err(Error::IndexOutOfRange { index: part.max_site(), width: n_sites });
    }
    if let Some(w) = weights {
        if w.len() != configs.len() {
            return Err(Error::Dimension { expected: configs.len(), got: w.len() });
        }
    }
    let na = part.sites_a().len();
    let nb = part.sites_b().len();
    let mut ha = vec![0.0; 1 << na];
    let mut hb = vec![0.0; 1 << nb];
    let mut hab = vec![0.0; 1 << (na + nb)];
    for (i, &c) in configs.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let a = bits::gather(c, part.sites_a()) as usize;
        let b = bits::gather(c, part.sites_b()) as usize;
        ha[a] += w;
        hb[b] += w;
        hab[a | (b << na)] += w;
    }
    let total: f64 = ha.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyDataset);
    }
    let norm = |h: &mut Vec<f64>| h.iter_mut().for_each(|x| *x /= total);
    norm(&mut ha);
    norm(&mut hb);
    norm(&mut hab);
    let m = entropy_bits(&ha) + entropy_bits(&hb) - entropy_bits(&hab);
    Ok(if m < 0.0 && m > -1e-12 { 0.0 } else { m })
}

/// Mean and sample std of [`plugin_mi`] over `repeats` datasets of size `n`.
pub fn plugin_mi_ensemble(
    psi: &WaveFunction,
    part: &Partition,
    n: usize,
    repeats: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if repeats < 2 {
        return Err(Error::InvalidParams(format!("repeats must be at least 2, got {repeats}")));
    }
    let values: Vec<f64> = (0..repeats)
        .into_par_iter()
        .map(|r| plugin_mi(&sample_bitstrings(psi, n, seeds::derive(seed, r as u64))?, part))
        .collect::<Result<_>>()?;
    Ok(mean_std(&values))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    pub n: f64,
    pub value: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitWeighting {
    Unweighted,
    /// Weights `1/std²`; points with zero std fall back to unit weight.
    InverseVariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub m0: f64,
    pub k: f64,
    pub n0: f64,
    /// Weighted sum of squared errors at the returned parameters.
    pub residual: f64,
    /// Best residual of the coarse `n₀` scan, before refinement.
    pub scan_residual: f64,
    pub points: Vec<ConvergencePoint>,
}

impl FitResult {
    pub fn predict(&self, n: f64) -> f64 {
        self.m0 + self.k / (n - self.n0)
    }
}

const SCAN_STEPS: usize = 1000;

/// Least-squares fit of `M₀ + k/(n − n₀)`: a scan of `n₀` over `(−n_min, n_min)`
/// with closed-form `(M₀, k)` at each candidate, then golden-section refinement.
pub fn fit_convergence(points: &[ConvergencePoint], weighting: FitWeighting) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|p| !(p.n > 0.0) || !p.value.is_finite()) {
        return Err(Error::Fit("sample counts must be positive and values finite".into()));
    }
    let n_min = points.iter().map(|p| p.n).fold(f64::INFINITY, f64::min);
    let n_max = points.iter().map(|p| p.n).fold(f64::NEG_INFINITY, f64::max);
    if n_max - n_min <= 0.0 {
        return Err(Error::Fit("all points share one sample count".into()));
    }
    let weights: Vec<f64> = points
        .iter()
        .map(|p| match weighting {
            FitWeighting::InverseVariance if p.std > 0.0 => 1.0 / (p.std * p.std),
            _ => 1.0,
        })
        .collect();
    let solve = |n0: f64| linear_fit(points, &weights, n0);

    let h = 2.0 * n_min / SCAN_STEPS as f64;
    let (mut best_i, mut best) = (1, solve(-n_min + h));
    for i in 2..SCAN_STEPS {
        let fit = solve(-n_min + i as f64 * h);
        if fit.2 < best.2 {
            best = fit;
            best_i = i;
        }
    }
    let scan_residual = best.2;
    let mut n0 = -n_min + best_i as f64 * h;

    // Golden-section search on the bracket around the best scan node.
    let mut lo = -n_min + (best_i as f64 - 1.0) * h;
    let mut hi = (-n_min + (best_i as f64 + 1.0) * h).min(n_min - 1e-9 * n_min);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = solve(x1).2;
    let mut f2 = solve(x2).2;
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-12 * (1.0 + n_min) {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = solve(x1).2;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = solve(x2).2;
        }
    }
    let (cand, cand_fit) = if f1 < f2 { (x1, solve(x1)) } else { (x2, solve(x2)) };
    if cand_fit.2 < best.2 {
        best = cand_fit;
        n0 = cand;
    }
    let (m0, k, residual) = best;
    if !m0.is_finite() || !k.is_finite() {
        return Err(Error::Fit("degenerate least-squares system".into()));
    }
    Ok(FitResult { m0, k, n0, residual, scan_residual, points: points.to_vec() })
}

/// Weighted least squares of `value ≈ M₀ + k·x` with `x = 1/(n − n₀)`.
fn linear_fit(points: &[ConvergencePoint], weights: &[f64], n0: f64) -> (f64, f64, f64) {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, &w) in points.iter().zip(weights) {
        let x = 1.0 / (p.n - n0);
        sw += w;
        sx += w * x;
        sy += w * p.value;
        sxx += w * x * x;
        sxy += w * x * p.value;
    }
    let det = sw * sxx - sx * sx;
    let (m0, k) = if det.abs() <= f64::EPSILON * sw * sxx {
        (sy / sw, 0.0)
    } else {
        ((sxx * sy - sx * sxy) / det, (sw * sxy - sx * sy) / det)
    };
    let residual = points
        .iter()
        .zip(weights)
        .map(|(p, &w)| w * (p.value - m0 - k / (p.n - n0)).powi(2))
        .sum();
    (m0, k, residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::DatasetMeta;

    fn meta() -> DatasetMeta {
        DatasetMeta { field_x: 0.0, field_z: 0.0, seed: 0 }
    }

    #[test]
    fn identical_strings_have_zero_mi() {
        let d = BitstringDataset::new(6, vec![0b101100; 50], meta()).unwrap();
        assert_eq!(plugin_mi(&d, &Partition::half(6).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn proportional_product_enumeration_is_zero() {
        // P(a) ∝ (1, 3) on site 0, P(b) ∝ (2, 1, 1) over sites 1-2 configs {0, 1, 2}.
        let mut samples = Vec::new();
        for (a, ca) in [(0u32, 1), (1, 3)] {
            for (b, cb) in [(0u32, 2), (1, 1), (2, 1)] {
                for _ in 0..ca * cb {
                    samples.push(a | (b << 1));
                }
            }
        }
        let d = BitstringDataset::new(3, samples, meta()).unwrap();
        let part = Partition::new(vec![0], vec![1, 2], 3).unwrap();
        assert!(plugin_mi(&d, &part).unwrap().abs() < 1e-14);
    }

    #[test]
    fn constant_points_fit_flat() {
        let pts: Vec<_> = [1000.0, 2000.0, 4000.0, 8000.0]
            .iter()
            .map(|&n| ConvergencePoint { n, value: 0.75, std: 0.0 })
            .collect();
        let fit = fit_convergence(&pts, FitWeighting::Unweighted).unwrap();
        assert!((fit.m0 - 0.75).abs() < 1e-12);
        assert!(fit.k.abs() < 1e-6);
        assert!(fit.residual < 1e-20);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let same: Vec<_> = (0..5).map(|i| ConvergencePoint { n: 100.0, value: i as f64, std: 0.0 }).collect();
        assert!(matches!(fit_convergence(&same, FitWeighting::Unweighted), Err(Error::Fit(_))));
        assert!(fit_convergence(&same[..3], FitWeighting::Unweighted).is_err());
    }

    #[test]
    fn ensemble_requires_two_repeats() {
        let psi = WaveFunction::basis_state(4, 0).unwrap();
        let part = Partition::half(4).unwrap();
        assert!(plugin_mi_ensemble(&psi, &part, 10, 1, 0).is_err());
        assert_eq!(plugin_mi_ensemble(&psi, &part, 10, 3, 0).unwrap(), (0.0, 0.0));
    }
}
