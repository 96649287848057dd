//! Joint base-station activation and beamforming for multi-cell
//! heterogeneous networks.
//!
//! * [`net_model`] — problem data, random instance generation, SINR / rate /
//!   MSE evaluation.
//! * [`admm`] — ADMM solver for sparse minimum-power beamforming with
//!   reweighting and debiasing.
//! * [`swmmse`] — sparse weighted-MMSE solver for penalized sum-rate
//!   maximization, with optional per-user clustering.
//! * [`oracle`] — brute-force and analytic reference solvers.
//! * [`experiment`] — seeded Monte Carlo runs, baselines and CSV/JSON output.
//!
//! Loops over users, base stations, cells and realizations run on rayon when
//! the `parallel` feature is on (default) and [`Execution::Parallel`] is
//! selected; [`Execution::Sequential`] is bit-for-bit reproducible.

pub mod admm;
pub mod swmmse;
pub mod error;
pub mod experiment;
pub mod net_model;
pub mod oracle;
pub mod par;
pub mod report;

pub use admm::{admm_solve, AdmmConfig};
pub use error::{Error, Result};
pub use experiment::{run_experiment, Baseline, ExperimentSpec, Mode, ResultRow};
pub use net_model::{generate_network, BeamformerSet, NetworkInstance, NetworkParams, Topology};
pub use oracle::{miso_power_oracle, Graph, PowerOracle};
pub use par::Execution;
pub use report::{SolveReport, Status};
pub use swmmse::{sparse_sum_rate, swmmse_solve, SwmmseConfig};
