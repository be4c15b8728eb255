//! The periodic Ising chain
//!
//! ```text
//! H = J Σ_i σᶻ_i σᶻ_{i+1} − Bˣ Σ_i σˣ_i − Bᶻ Σ_i σᶻ_i,     site N+1 ≡ site 1,
//! ```
//!
//! as a matrix-free operator on the 2^N computational basis. Bit value 0 of a
//! basis index is σᶻ = +1, bit value 1 is σᶻ = −1.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bits;
use crate::error::{Error, Result};

pub const MIN_SITES: usize = 3;
pub const MAX_SITES: usize = 24;
/// Largest chain for which the dense Kronecker-product matrix is built.
pub const MAX_DENSE_SITES: usize = 10;

const PARALLEL_DIM: usize = 1 << 14;

/// Couplings and fields of the chain, in units of `J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    n_sites: usize,
    coupling: f64,
    field_x: f64,
    field_z: f64,
}

impl ModelParams {
    /// Antiferromagnetic chain with `J = 1`.
    pub fn new(n_sites: usize, field_x: f64, field_z: f64) -> Result<Self> {
        Self::with_coupling(n_sites, 1.0, field_x, field_z)
    }

    pub fn with_coupling(n_sites: usize, coupling: f64, field_x: f64, field_z: f64) -> Result<Self> {
        if !(MIN_SITES..=MAX_SITES).contains(&n_sites) {
            return Err(Error::InvalidParams(format!(
                "n_sites must be in [{MIN_SITES}, {MAX_SITES}], got {n_sites}"
            )));
        }
        if !(coupling > 0.0 && coupling.is_finite()) {
            return Err(Error::InvalidParams(format!("coupling must be positive, got {coupling}")));
        }
        if !field_x.is_finite() || !field_z.is_finite() {
            return Err(Error::InvalidParams("fields must be finite".into()));
        }
        Ok(Self { n_sites, coupling, field_x, field_z })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn field_x(&self) -> f64 {
        self.field_x
    }

    pub fn field_z(&self) -> f64 {
        self.field_z
    }

    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    pub fn with_fields(&self, field_x: f64, field_z: f64) -> Result<Self> {
        Self::with_coupling(self.n_sites, self.coupling, field_x, field_z)
    }
}

/// A σᶻ-basis configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState(pub u32);

impl BasisState {
    /// σᶻ eigenvalue of spin `site`.
    #[inline]
    pub fn spin(self, site: usize) -> f64 {
        if (self.0 >> site) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// `J Σ s_i s_{i+1} − Bᶻ Σ s_i` for a basis state.
pub fn diagonal_energy(params: &ModelParams, state: BasisState) -> f64 {
    let n = params.n_sites as i64;
    let s = state.0;
    // Antialigned bonds are the set bits of s XOR (s rotated by one).
    let broken = (s ^ bits::rotate(s, params.n_sites)).count_ones() as i64;
    let bonds = n - 2 * broken;
    let magnetization = n - 2 * s.count_ones() as i64;
    params.coupling * bonds as f64 - params.field_z * magnetization as f64
}

/// `H · input` without forming the matrix.
pub fn apply_hamiltonian(params: &ModelParams, input: &[f64]) -> Result<Vec<f64>> {
    IsingOperator::new(*params).apply(input)
}

/// The Hamiltonian with its diagonal cached, for repeated products.
#[derive(Debug, Clone)]
pub struct IsingOperator {
    params: ModelParams,
    diagonal: Vec<f64>,
}

impl IsingOperator {
    pub fn new(params: ModelParams) -> Self {
        let diagonal = (0..params.dim() as u32)
            .map(|s| diagonal_energy(&params, BasisState(s)))
            .collect();
        Self { params, diagonal }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn apply(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(input, &mut out)?;
        Ok(out)
    }

    /// `out ← H · input`.
    pub fn apply_into(&self, input: &[f64], out: &mut [f64]) -> Result<()> {
        let dim = self.dim();
        if input.len() != dim {
            return Err(Error::Dimension { expected: dim, got: input.len() });
        }
        if out.len() != dim {
            return Err(Error::Dimension { expected: dim, got: out.len() });
        }
        const CHUNK: usize = 4096;
        if dim >= PARALLEL_DIM {
            out.par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| self.apply_chunk(input, c * CHUNK, chunk));
        } else {
            for (c, chunk) in out.chunks_mut(CHUNK).enumerate() {
                self.apply_chunk(input, c * CHUNK, chunk);
            }
        }
        Ok(())
    }

    /// Rows `base..base + out.len()` of `H · input`; `base` is a multiple of the
    /// power-of-two chunk length.
    fn apply_chunk(&self, input: &[f64], base: usize, out: &mut [f64]) {
        let len = out.len();
        let bx = self.params.field_x;
        let diag = &self.diagonal[base..base + len];
        let local = &input[base..base + len];
        for ((o, d), x) in out.iter_mut().zip(diag).zip(local) {
            *o = d * x;
        }
        for k in 0..self.params.n_sites {
            let stride = 1usize << k;
            if stride >= len {
                // The flipped partners of this chunk form another contiguous chunk.
                let start = base ^ stride;
                for (o, x) in out.iter_mut().zip(&input[start..start + len]) {
                    *o -= bx * x;
                }
                continue;
            }
            for block in (0..len).step_by(2 * stride) {
                let (lo_in, hi_in) = local[block..block + 2 * stride].split_at(stride);
                let (lo_out, hi_out) = out[block..block + 2 * stride].split_at_mut(stride);
                for (o, x) in lo_out.iter_mut().zip(hi_in) {
                    *o -= bx * x;
                }
                for (o, x) in hi_out.iter_mut().zip(lo_in) {
                    *o -= bx * x;
                }
            }
        }
    }
}

/// Dense Hamiltonian built from Kronecker products of Pauli matrices.
///
/// Shares no code with the bitwise kernel, so the two can check each other.
pub fn dense_hamiltonian(params: &ModelParams) -> Result<DMatrix<f64>> {
    let n = params.n_sites;
    if n > MAX_DENSE_SITES {
        return Err(Error::InvalidParams(format!(
            "dense construction limited to {MAX_DENSE_SITES} sites, got {n}"
        )));
    }
    let sz = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let sx = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let embed = |op: &DMatrix<f64>, site: usize| -> DMatrix<f64> {
        // Site 0 is the least significant factor.
        let left = DMatrix::<f64>::identity(1 << (n - 1 - site), 1 << (n - 1 - site));
        let right = DMatrix::<f64>::identity(1 << site, 1 << site);
        left.kronecker(op).kronecker(&right)
    };
    let dim = 1 << n;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let z_ops: Vec<_> = (0..n).map(|i| embed(&sz, i)).collect();
    for i in 0..n {
        let j = (i + 1) % n;
        h += params.coupling * (&z_ops[i] * &z_ops[j]);
        h -= params.field_x * embed(&sx, i);
        h -= params.field_z * &z_ops[i];
    }
    Ok(h)
}
