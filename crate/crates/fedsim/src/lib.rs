//! Deterministic federated-optimization simulator.
//!
//! `fedsim` runs desk-scale federated learning experiments with bitwise
//! reproducibility: FedTOGA (global-update-corrected SAM perturbations plus
//! a corrected dynamic regularizer) next to the FedAvg, FedSAM, FedDyn,
//! FedSMOO and FedLESAM-D baselines, on per-client quadratic objectives or
//! synthetic classification tasks split heterogeneously across clients.
//!
//! The crate is a library first; the `examples/` directory holds one
//! runnable program per capability and a thin `fedsim` binary exposes
//! `run`, `compare` and `selftest` for file-driven workflows.
//!
//! ```
//! use fedsim::prelude::*;
//!
//! let config = ExperimentConfig {
//!     algorithm: Algorithm::FedToga,
//!     model: ModelSource::QuadraticRandom { dim: 3, seed: 1 },
//!     data: None,
//!     partition: None,
//!     n_clients: 4,
//!     clients_per_round: 4,
//!     rounds: 20,
//!     hp: HyperParams::default(),
//!     seed: 7,
//!     eval_every: 5,
//!     sharpness: None,
//! };
//! let log = run_experiment_with_threads(&config, Some(0)).unwrap();
//! assert!(log.final_row().train_loss <= log.rows[0].train_loss);
//! ```

pub mod cli;
pub mod client;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod rng;
pub mod server;
pub mod vector;

pub mod prelude {
    pub use crate::client::{
        compute_perturbation, fedavg_local_update, feddyn_local_update,
        fedlesam_d_local_update, fedsam_local_update, fedsmoo_local_update,
        fedtoga_local_update, BatchCycle, ClientReport, ClientState, DualDivisor, HyperParams,
        PerturbationMode,
    };
    pub use crate::data::{
        dirichlet_partition, gen_synthetic_classification, load_csv, partition,
        pathological_partition, ClientShard, Dataset, PartitionScheme, PartitionSpec,
    };
    pub use crate::error::{Error, Result};
    pub use crate::harness::{
        evaluate, rounds_to_target, run_experiment, run_experiment_with_threads, run_id,
        sharpness_probe, Algorithm, DataSource, ExperimentConfig, MetricsLog, MetricsRow,
        ModelSource, RoundOutcome, SharpnessProbeCfg, Simulation,
    };
    pub use crate::model::{finite_diff_grad, grad, loss, predict, Batch, ModelSpec};
    pub use crate::rng::StreamRng;
    pub use crate::server::{
        fedavg_server_step, feddyn_server_step, fedsmoo_server_step, fedtoga_server_step,
        sample_clients, GlobalState, RoundPlan,
    };
    pub use crate::vector::{normalize_to_radius, ParamVector};
}
