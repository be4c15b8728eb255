//! Exact diagonalization and mutual-information estimation for the Ising
//! ring in transverse and longitudinal fields.
//!
//! Measured bitstrings of the ground state feed a neural Donsker–Varadhan
//! estimator, a plug-in histogram estimator and a recursive specific-entropy
//! decomposition; exact values come from the state vector itself.

pub mod bits;
pub mod config;
pub mod eigensolver;
pub mod error;
pub mod exact;
pub mod mice;
pub mod mine;
pub mod plugin;
pub mod sampling;
pub mod seeds;
pub mod spin_model;
pub mod sweep;
pub mod wavefunction;

pub use config::ConfigFile;
pub use eigensolver::{
    dense_ground_state, fidelity, fidelity_susceptibility, ground_state, Axis, GroundStateResult, SolverOptions,
};
pub use error::{Error, Result};
pub use exact::{
    alpha_ratio, exact_mutual_information, marginalize, mean_sz, shannon_entropy, state_probabilities,
    von_neumann_entropy, Partition, ProbabilityTable,
};
pub use mice::{exact_specific_entropy, specific_entropy, specific_entropy_exact, MiceConfig, MiceDecomposition, MiceMode};
pub use mine::{estimate_mi, train_single, MiEstimate, TrainConfig};
pub use plugin::{fit_convergence, plugin_mi, ConvergencePoint, FitResult, FitWeighting};
pub use sampling::{read_dataset, sample_bitstrings, write_dataset, BitstringDataset, DatasetMeta};
pub use spin_model::{apply_hamiltonian, BasisState, IsingOperator, ModelParams};
pub use sweep::{run_point, run_sweep, FieldRange, PartitionKind, PhaseGrid, PointRecord, Quantity, SweepConfig};
pub use wavefunction::WaveFunction;
