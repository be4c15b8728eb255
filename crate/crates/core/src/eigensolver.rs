//! Ground states by Lanczos iteration with full reorthogonalization.
//!
//! For `Bˣ > 0` the off-diagonal elements are all `−Bˣ ≤ 0` and single flips
//! connect the whole basis, so the ground state is unique and has positive
//! amplitudes. It is therefore invariant under lattice translation. The start
//! vector is projected onto the translation-invariant sector, which keeps the
//! Krylov space away from the exponentially close odd partner of the AFM cat
//! state at weak transverse field.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits;
use crate::error::{Error, Result};
use crate::spin_model::{dense_hamiltonian, IsingOperator, ModelParams};
use crate::wavefunction::{dot, norm, WaveFunction};

/// Gaps below this are reported as a degenerate ground manifold.
pub const DEGENERACY_GAP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Residual `‖Hψ − Eψ‖` required for convergence.
    pub tol: f64,
    /// Total budget of Hamiltonian applications.
    pub max_iter: usize,
    /// Krylov basis size before an explicit restart from the current Ritz vector.
    pub krylov_dim: usize,
    pub seed: u64,
    /// Project the start vector onto the translation-invariant sector.
    pub symmetrize: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 500, krylov_dim: 120, seed: 0, symmetrize: true }
    }
}

impl SolverOptions {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParams(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter < 1 || self.krylov_dim < 2 {
            return Err(Error::InvalidParams("max_iter ≥ 1 and krylov_dim ≥ 2 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub energy: f64,
    pub state: WaveFunction,
    pub residual: f64,
    pub iterations: usize,
    /// Distance to the next Ritz value of the final Krylov space.
    pub gap_estimate: f64,
}

impl GroundStateResult {
    pub fn near_degenerate(&self) -> bool {
        self.gap_estimate < DEGENERACY_GAP
    }
}

/// Field axis varied by a susceptibility scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Z,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Z => "z",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::Config(format!("unknown axis {other:?}, expected x or z"))),
        }
    }
}

pub fn ground_state(params: &ModelParams, opts: &SolverOptions) -> Result<GroundStateResult> {
    opts.validate()?;
    let op = IsingOperator::new(*params);
    let dim = op.dim();
    let n = params.n_sites();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if opts.symmetrize {
        start = translation_average(&start, n);
    }
    normalize(&mut start)?;

    let mut iterations = 0;
    let mut best_residual = f64::INFINITY;
    let mut hv = vec![0.0; dim];
    loop {
        let cycle = lanczos_cycle(&op, &start, opts, &mut iterations)?;
        let mut x = cycle.ritz_vector;
        if opts.symmetrize {
            x = translation_average(&x, n);
        }
        normalize(&mut x)?;
        op.apply_into(&x, &mut hv)?;
        let energy = dot(&x, &hv);
        let residual = hv.iter().zip(&x).map(|(h, v)| (h - energy * v).powi(2)).sum::<f64>().sqrt();
        best_residual = best_residual.min(residual);
        if residual < opts.tol {
            fix_gauge(&mut x);
            return Ok(GroundStateResult {
                energy,
                state: WaveFunction::normalized(x, n)?,
                residual,
                iterations,
                gap_estimate: cycle.gap_estimate,
            });
        }
        if iterations >= opts.max_iter || cycle.exhausted {
            return Err(Error::Convergence { iterations, residual: best_residual });
        }
        start = x;
    }
}

struct CycleOutcome {
    ritz_vector: Vec<f64>,
    gap_estimate: f64,
    /// The Krylov space became invariant without meeting the tolerance.
    exhausted: bool,
}

fn lanczos_cycle(
    op: &IsingOperator,
    start: &[f64],
    opts: &SolverOptions,
    iterations: &mut usize,
) -> Result<CycleOutcome> {
    let dim = op.dim();
    let max_steps = opts.krylov_dim.min(dim);
    let mut basis: Vec<Vec<f64>> = vec![start.to_vec()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let scale = op.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()))
        + op.params().field_x().abs() * op.params().n_sites() as f64;
    let breakdown = 1e-13 * scale.max(1.0);

    loop {
        let j = alphas.len();
        op.apply_into(&basis[j], &mut w)?;
        *iterations += 1;
        let alpha = dot(&w, &basis[j]);
        alphas.push(alpha);
        // Two Gram-Schmidt sweeps against the whole basis.
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
            }
        }
        let beta = norm(&w);
        let steps = alphas.len();
        let invariant = beta < breakdown;
        let out_of_room = steps >= max_steps || *iterations >= opts.max_iter;
        if invariant || out_of_room || steps.is_multiple_of(4) {
            let (values, vectors) = tridiagonal_eigen(&alphas, &betas);
            let low = argmin(&values);
            let estimate = beta * vectors[(steps - 1, low)].abs();
            if invariant || out_of_room || estimate < 0.1 * opts.tol {
                let gap_estimate = values
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != low)
                    .map(|(_, v)| v - values[low])
                    .fold(f64::INFINITY, f64::min);
                let mut x = vec![0.0; dim];
                for (i, v) in basis.iter().enumerate() {
                    let c = vectors[(i, low)];
                    x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += c * vi);
                }
                return Ok(CycleOutcome { ritz_vector: x, gap_estimate, exhausted: invariant && estimate >= opts.tol });
            }
        }
        betas.push(beta);
        let next: Vec<f64> = w.iter().map(|x| x / beta).collect();
        basis.push(next);
    }
}

fn tridiagonal_eigen(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Average over all cyclic translations: the projector onto momentum zero.
fn translation_average(v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (s, &a) in v.iter().enumerate() {
        let mut t = s as u32;
        for _ in 0..n {
            out[t as usize] += a;
            t = bits::rotate(t, n);
        }
    }
    out
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let nrm = norm(v);
    if !(nrm > 0.0 && nrm.is_finite()) {
        return Err(Error::Numeric(format!("degenerate Lanczos vector with norm {nrm}")));
    }
    v.iter_mut().for_each(|x| *x /= nrm);
    Ok(())
}

/// Makes the largest-magnitude amplitude positive (first one on ties).
fn fix_gauge(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Full diagonalization of the dense matrix, for chains of at most ten sites.
pub fn dense_ground_state(params: &ModelParams) -> Result<(f64, WaveFunction)> {
    let h = dense_hamiltonian(params)?;
    let eig = SymmetricEigen::new(h);
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let low = argmin(&values);
    let mut v: Vec<f64> = eig.eigenvectors.column(low).iter().copied().collect();
    fix_gauge(&mut v);
    Ok((values[low], WaveFunction::normalized(v, params.n_sites())?))
}

/// All eigenvalues of the dense matrix in ascending order.
pub fn dense_spectrum(params: &ModelParams) -> Result<Vec<f64>> {
    let h = dense_hamiltonian(params)?;
    let mut values: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// `|⟨ψ₁|ψ₂⟩|`, clamped to [0, 1].
pub fn fidelity(psi1: &WaveFunction, psi2: &WaveFunction) -> Result<f64> {
    Ok(psi1.dot(psi2)?.abs().min(1.0))
}

/// `2(1 − F)/δ²` between ground states at the given fields and at the field
/// along `vary` shifted by `delta`.
pub fn fidelity_susceptibility(
    params: &ModelParams,
    vary: Axis,
    delta: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParams(format!("delta must be positive, got {delta}")));
    }
    let shifted = match vary {
        Axis::X => params.with_fields(params.field_x() + delta, params.field_z())?,
        Axis::Z => params.with_fields(params.field_x(), params.field_z() + delta)?,
    };
    let psi = ground_state(params, opts)?.state;
    let psi_shifted = ground_state(&shifted, opts)?.state;
    susceptibility_from_states(&psi, &psi_shifted, delta)
}

pub fn susceptibility_from_states(psi: &WaveFunction, psi_shifted: &WaveFunction, delta: f64) -> Result<f64> {
    let f = fidelity(psi, psi_shifted)?;
    Ok((2.0 * (1.0 - f) / (delta * delta)).max(0.0))
}
