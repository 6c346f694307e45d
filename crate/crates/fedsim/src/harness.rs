//! Experiment orchestration: the round loop, evaluation, the sharpness
//! probe and metrics collection.
//!
//! A `Simulation` owns the federation (models, shards, client states,
//! global state) and advances one communication round at a time, so tests
//! can inspect every intermediate quantity. `run_experiment` drives the
//! full loop and returns a `MetricsLog` that is a pure function of the
//! `ExperimentConfig`: per-client randomness is keyed by
//! `(seed, round, client_id)` and aggregation is order-canonical, so
//! sequential and parallel execution produce identical logs.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::client::{
    fedavg_local_update, feddyn_local_update, fedlesam_d_local_update, fedsam_local_update,
    fedsmoo_local_update, fedtoga_local_update, BatchCycle, ClientReport, ClientState,
    HyperParams,
};
use crate::data::{gen_synthetic_classification, load_csv, partition, Dataset, PartitionSpec};
use crate::error::{Error, Result};
use crate::model::{grad, loss, predict, Batch, ModelSpec};
use crate::rng::{tag, StreamRng};
use crate::server::{
    fedavg_server_step, feddyn_server_step, fedsmoo_server_step, fedtoga_server_step,
    sample_clients, GlobalState,
};
use crate::vector::ParamVector;

/// Federated algorithms the harness can drive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Algorithm {
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedsam")]
    FedSam,
    #[serde(rename = "feddyn")]
    FedDyn,
    #[serde(rename = "fedtoga")]
    FedToga,
    #[serde(rename = "fedsmoo")]
    FedSmoo,
    #[serde(rename = "fedlesam_d")]
    FedLesamD,
}

impl Algorithm {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "fedavg" => Ok(Algorithm::FedAvg),
            "fedsam" => Ok(Algorithm::FedSam),
            "feddyn" => Ok(Algorithm::FedDyn),
            "fedtoga" => Ok(Algorithm::FedToga),
            "fedsmoo" => Ok(Algorithm::FedSmoo),
            "fedlesam_d" => Ok(Algorithm::FedLesamD),
            other => Err(Error::config(format!(
                "algorithm: unknown value {other:?} (expected one of fedavg, fedsam, \
                 feddyn, fedtoga, fedsmoo, fedlesam_d)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedSam => "fedsam",
            Algorithm::FedDyn => "feddyn",
            Algorithm::FedToga => "fedtoga",
            Algorithm::FedSmoo => "fedsmoo",
            Algorithm::FedLesamD => "fedlesam_d",
        }
    }
}

/// What objective each client optimizes. The quadratic family is the only
/// per-client source (every client gets its own random PSD bowl); the data
/// models are shared and heterogeneity comes from the partition.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    /// Per-client quadratics `1/2 (theta - c_i)^T A_i (theta - c_i)` with
    /// random PSD `A_i` and random center `c_i`, keyed by `seed`.
    QuadraticRandom { dim: usize, seed: u64 },
    Logistic { input_dim: usize },
    Mlp { layers: Vec<usize> },
}

impl ModelSource {
    pub fn is_quadratic(&self) -> bool {
        matches!(self, ModelSource::QuadraticRandom { .. })
    }

    fn instantiate(&self, n_clients: usize) -> Result<Vec<ModelSpec>> {
        match self {
            ModelSource::QuadraticRandom { dim, seed } => (0..n_clients)
                .map(|i| random_quadratic(*dim, *seed, i))
                .collect(),
            ModelSource::Logistic { input_dim } => {
                let spec = ModelSpec::logistic(*input_dim)?;
                Ok(vec![spec; n_clients])
            }
            ModelSource::Mlp { layers } => {
                let spec = ModelSpec::mlp(layers.clone())?;
                Ok(vec![spec; n_clients])
            }
        }
    }
}

/// One random well-conditioned PSD quadratic. The matrix is a scaled
/// Wishart draw plus a ridge, so eigenvalues stay in roughly [0.1, 3] and
/// the default learning rate is stable.
fn random_quadratic(dim: usize, seed: u64, client: usize) -> Result<ModelSpec> {
    if dim == 0 {
        return Err(Error::config("quadratic dim must be >= 1"));
    }
    let mut rng = StreamRng::from_parts(&[seed, tag::QUADRATIC, client as u64]);
    let b: Vec<f64> = (0..dim * dim).map(|_| rng.normal()).collect();
    let scale = 0.5 / dim as f64;
    let mut a = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let mut dot = 0.0;
            for k in 0..dim {
                dot += b[k * dim + i] * b[k * dim + j];
            }
            a[i * dim + j] = scale * dot + if i == j { 0.1 } else { 0.0 };
        }
    }
    let center = ParamVector::new((0..dim).map(|_| rng.normal()).collect());
    ModelSpec::quadratic(a, center)
}

/// Where the classification data comes from.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        n_samples: usize,
        feature_dim: usize,
        num_classes: usize,
        class_sep: f64,
        seed: u64,
    },
    Csv { path: String },
}

impl DataSource {
    fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Synthetic {
                n_samples,
                feature_dim,
                num_classes,
                class_sep,
                seed,
            } => gen_synthetic_classification(
                *seed,
                *n_samples,
                *feature_dim,
                *num_classes,
                *class_sep,
            ),
            DataSource::Csv { path } => load_csv(path),
        }
    }
}

/// Monte-Carlo sharpness probe settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SharpnessProbeCfg {
    pub rho: f64,
    pub directions: usize,
}

impl Default for SharpnessProbeCfg {
    fn default() -> Self {
        SharpnessProbeCfg {
            rho: 0.1,
            directions: 64,
        }
    }
}

/// Full description of one experiment. A `MetricsLog` is a pure function
/// of this value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub model: ModelSource,
    /// Required for logistic/mlp models, ignored by the quadratic family.
    pub data: Option<DataSource>,
    /// Required when `data` is present.
    pub partition: Option<PartitionSpec>,
    pub n_clients: usize,
    pub clients_per_round: usize,
    pub rounds: usize,
    pub hp: HyperParams,
    pub seed: u64,
    pub eval_every: usize,
    pub sharpness: Option<SharpnessProbeCfg>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if self.n_clients == 0 {
            return Err(Error::config("N must be >= 1"));
        }
        if self.clients_per_round == 0 {
            return Err(Error::config("M must be >= 1"));
        }
        if self.clients_per_round > self.n_clients {
            return Err(Error::config(format!(
                "M exceeds N ({} > {})",
                self.clients_per_round, self.n_clients
            )));
        }
        if self.rounds == 0 {
            return Err(Error::config("T must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be >= 1"));
        }
        if let Some(probe) = &self.sharpness {
            if probe.directions == 0 {
                return Err(Error::config("sharpness_directions must be >= 1"));
            }
            if !probe.rho.is_finite() || probe.rho <= 0.0 {
                return Err(Error::config("sharpness_rho must be > 0"));
            }
        }
        if !self.model.is_quadratic() {
            if self.data.is_none() {
                return Err(Error::config(
                    "dataset is required for logistic/mlp models",
                ));
            }
            let Some(partition) = &self.partition else {
                return Err(Error::config("partition is required when a dataset is used"));
            };
            if partition.num_clients != self.n_clients {
                return Err(Error::config(format!(
                    "partition num_clients ({}) disagrees with N ({})",
                    partition.num_clients, self.n_clients
                )));
            }
        }
        Ok(())
    }
}

/// One evaluated round.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub sharpness: Option<f64>,
    pub grad_norm: f64,
    pub delta_norm: f64,
    pub h_norm: f64,
}

/// Metrics of a full run plus the resolved config and its stable id.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsLog {
    pub run_id: String,
    pub config: ExperimentConfig,
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn final_row(&self) -> &MetricsRow {
        self.rows.last().expect("a log always has the round-0 row")
    }
}

/// Stable hex id derived from the resolved config (seed included).
pub fn run_id(config: &ExperimentConfig) -> String {
    let encoded = serde_json::to_string(config).expect("config serialization cannot fail");
    let digest = Sha256::digest(encoded.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

/// First logged round whose test accuracy reaches `target`.
pub fn rounds_to_target(log: &MetricsLog, target_accuracy: f64) -> Option<usize> {
    log.rows
        .iter()
        .find(|row| row.test_accuracy >= target_accuracy)
        .map(|row| row.round)
}

/// Full-dataset loss and argmax accuracy (accuracy 0 for the quadratic).
pub fn evaluate(model: &ModelSpec, params: &ParamVector, dataset: &Dataset) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::contract("cannot evaluate on an empty dataset"));
    }
    let batch = full_batch(dataset);
    let l = loss(model, params, &batch)?;
    if matches!(model, ModelSpec::Quadratic { .. }) {
        return Ok((l, 0.0));
    }
    let preds = predict(model, params, &batch)?;
    let correct = preds
        .iter()
        .zip(&batch.labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok((l, correct as f64 / batch.len() as f64))
}

fn full_batch(dataset: &Dataset) -> Batch {
    let mut inputs = Vec::with_capacity(dataset.len());
    let mut labels = Vec::with_capacity(dataset.len());
    for (x, y) in dataset.samples() {
        inputs.push(x.clone());
        labels.push(*y);
    }
    Batch { inputs, labels }
}

/// Core of the sharpness probe: mean over `n_directions` random unit
/// directions of the antithetic pair average
/// `([f(theta + rho u) - f(theta)] + [f(theta - rho u) - f(theta)]) / 2`,
/// clamped at zero. The pairing cancels the linear term of the loss.
fn probe_core<F>(
    eval: F,
    params: &ParamVector,
    rho: f64,
    n_directions: usize,
    key: &[u64],
) -> Result<f64>
where
    F: Fn(&ParamVector) -> Result<f64>,
{
    assert!(n_directions >= 1, "need at least one probe direction");
    assert!(rho > 0.0, "probe radius must be positive");
    let mut rng = StreamRng::from_parts(key);
    let base = eval(params)?;
    let d = params.len();
    let mut acc = 0.0;
    for _ in 0..n_directions {
        let u = loop {
            let v = ParamVector::new((0..d).map(|_| rng.normal()).collect());
            let norm = v.norm();
            if norm > 1e-12 {
                break v.scale(1.0 / norm);
            }
        };
        let up = eval(&params.add_scaled(rho, &u))? - base;
        let down = eval(&params.add_scaled(-rho, &u))? - base;
        acc += 0.5 * (up + down);
    }
    Ok((acc / n_directions as f64).max(0.0))
}

/// Monte-Carlo sharpness of the loss surface around `params`, deterministic
/// in `seed`.
pub fn sharpness_probe(
    model: &ModelSpec,
    params: &ParamVector,
    dataset: &Dataset,
    rho_probe: f64,
    n_directions: usize,
    seed: u64,
) -> Result<f64> {
    let batch = full_batch(dataset);
    probe_core(
        |p| loss(model, p, &batch),
        params,
        rho_probe,
        n_directions,
        &[seed, tag::SHARPNESS],
    )
}

/// Reads `FEDOPT_THREADS`: unset means a default-size worker pool,
/// 0 means strictly sequential, any other value caps the pool size.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("FEDOPT_THREADS") {
        Ok(raw) => raw
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::config("FEDOPT_THREADS must be a nonnegative integer")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(Error::config("FEDOPT_THREADS is not valid unicode"))
        }
    }
}

/// Everything a round hands back for inspection.
#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub round: usize,
    pub selected: Vec<usize>,
    pub theta_before: ParamVector,
    pub reports: Vec<(usize, ClientReport)>,
}

/// A running federation. Construct once, then call [`Simulation::round`]
/// repeatedly or let [`run_experiment`] drive the whole schedule.
pub struct Simulation {
    config: ExperimentConfig,
    models: Vec<ModelSpec>,
    train: Option<Dataset>,
    test: Option<Dataset>,
    shards: Vec<Vec<usize>>,
    train_batch: Batch,
    test_batch: Batch,
    global: GlobalState,
    clients: Vec<ClientState>,
    pool: Option<rayon::ThreadPool>,
}

impl Simulation {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_clients;
        let models = config.model.instantiate(n)?;

        let (train, test, shards) = if config.model.is_quadratic() {
            (None, None, vec![Vec::new(); n])
        } else {
            let full = config.data.as_ref().unwrap().load()?;
            let model = &models[0];
            if full.feature_dim() != model.input_dim() {
                return Err(Error::config(format!(
                    "model expects {} input features, dataset has {}",
                    model.input_dim(),
                    full.feature_dim()
                )));
            }
            if full.num_classes() != model.num_classes() {
                return Err(Error::config(format!(
                    "model predicts {} classes, dataset has {}",
                    model.num_classes(),
                    full.num_classes()
                )));
            }
            let (train, test) = full.train_test_split(config.seed)?;
            let shards_raw = partition(&train, config.partition.as_ref().unwrap())?;
            let shards = shards_raw.into_iter().map(|s| s.indices).collect();
            (Some(train), Some(test), shards)
        };

        let train_batch = train.as_ref().map(full_batch).unwrap_or_default();
        let test_batch = test.as_ref().map(full_batch).unwrap_or_default();

        let mut init_rng = StreamRng::from_parts(&[config.seed, tag::INIT]);
        let theta0 = models[0].init_params(&mut init_rng);
        let d = theta0.len();
        let global = GlobalState::new(theta0, config.algorithm == Algorithm::FedSmoo);

        Ok(Simulation {
            config,
            models,
            train,
            test,
            shards,
            train_batch,
            test_batch,
            global,
            clients: vec![ClientState::new(d); n],
            pool: None,
        })
    }

    /// `Some(0)` runs clients strictly sequentially, `Some(n)` uses a pool
    /// of `n` workers, `None` a default-size pool. Results are identical
    /// in all cases.
    pub fn set_parallelism(&mut self, threads: Option<usize>) -> Result<()> {
        self.pool = match threads {
            Some(0) => None,
            other => {
                let workers = other.unwrap_or(0); // 0 lets the pool pick
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(workers)
                        .build()
                        .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?,
                )
            }
        };
        Ok(())
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn global(&self) -> &GlobalState {
        &self.global
    }

    pub fn client_state(&self, client: usize) -> &ClientState {
        &self.clients[client]
    }

    /// Mutable access for drivers that pre-load client state (e.g. seeding
    /// FedLESAM-D's stored historical model).
    pub fn client_state_mut(&mut self, client: usize) -> &mut ClientState {
        &mut self.clients[client]
    }

    pub fn model(&self, client: usize) -> &ModelSpec {
        &self.models[client]
    }

    pub fn shard(&self, client: usize) -> &[usize] {
        &self.shards[client]
    }

    pub fn train_dataset(&self) -> Option<&Dataset> {
        self.train.as_ref()
    }

    pub fn test_dataset(&self) -> Option<&Dataset> {
        self.test.as_ref()
    }

    /// Run one communication round: sample clients, fan out local updates,
    /// aggregate.
    pub fn round(&mut self) -> Result<RoundOutcome> {
        let t = self.global.round;
        let cfg = &self.config;
        let hp = cfg.hp;
        let eta = hp.eta_at_round(t);
        let plan = sample_clients(cfg.n_clients, cfg.clients_per_round, cfg.seed, t)?;
        let theta_before = self.global.theta.clone();

        let zero = ParamVector::zeros(theta_before.len());
        let theta = &self.global.theta;
        let delta = &self.global.delta;
        let s_global = self.global.s.as_ref().unwrap_or(&zero);
        let models = &self.models;
        let shards = &self.shards;
        let clients = &self.clients;
        let train = self.train.as_ref();
        let algorithm = cfg.algorithm;
        let seed = cfg.seed;

        let job = |client: usize| -> Result<(ClientReport, ClientState)> {
            let rng = StreamRng::from_parts(&[seed, tag::CLIENT, t as u64, client as u64]);
            let mut batches = match train {
                Some(ds) => BatchCycle::new(ds, &shards[client], hp.batch_size, rng),
                None => BatchCycle::empty(rng),
            };
            let state = clients[client].clone();
            let model = &models[client];
            match algorithm {
                Algorithm::FedAvg => fedavg_local_update(theta, model, &mut batches, &hp, eta)
                    .map(|r| (r, state)),
                Algorithm::FedSam => fedsam_local_update(theta, model, &mut batches, &hp, eta)
                    .map(|r| (r, state)),
                Algorithm::FedDyn => {
                    feddyn_local_update(theta, state, model, &mut batches, &hp, eta)
                }
                Algorithm::FedToga => {
                    fedtoga_local_update(theta, delta, state, model, &mut batches, &hp, eta)
                }
                Algorithm::FedSmoo => {
                    fedsmoo_local_update(theta, s_global, state, model, &mut batches, &hp, eta)
                }
                Algorithm::FedLesamD => {
                    fedlesam_d_local_update(theta, state, model, &mut batches, &hp, eta)
                }
            }
        };

        let results: Vec<Result<(ClientReport, ClientState)>> = match &self.pool {
            None => plan.selected.iter().map(|&c| job(c)).collect(),
            Some(pool) => {
                use rayon::prelude::*;
                pool.install(|| plan.selected.par_iter().map(|&c| job(c)).collect())
            }
        };

        let mut reports = Vec::with_capacity(results.len());
        for (slot, result) in results.into_iter().enumerate() {
            let client = plan.selected[slot];
            let (report, new_state) = result.map_err(|e| match e {
                Error::Divergence { step, .. } => Error::Divergence {
                    round: t,
                    client,
                    step,
                },
                other => other,
            })?;
            self.clients[client] = new_state;
            reports.push((client, report));
        }

        self.global = match algorithm {
            Algorithm::FedAvg | Algorithm::FedSam => {
                fedavg_server_step(&self.global, &reports, &hp)?
            }
            Algorithm::FedToga => {
                fedtoga_server_step(&self.global, &reports, &hp, cfg.n_clients)?
            }
            Algorithm::FedDyn | Algorithm::FedLesamD => {
                feddyn_server_step(&self.global, &reports, &hp, cfg.n_clients)?
            }
            Algorithm::FedSmoo => {
                fedsmoo_server_step(&self.global, &reports, &hp, cfg.n_clients)?
            }
        };

        Ok(RoundOutcome {
            round: t,
            selected: plan.selected,
            theta_before,
            reports,
        })
    }

    /// Mean loss of the federation objective `(1/N) sum_i f_i(theta)`;
    /// equals the full-train loss for shared data models.
    fn federation_loss(&self, params: &ParamVector, batch: &Batch) -> Result<f64> {
        if self.config.model.is_quadratic() {
            let mut total = 0.0;
            for model in &self.models {
                total += loss(model, params, batch)?;
            }
            Ok(total / self.models.len() as f64)
        } else {
            loss(&self.models[0], params, batch)
        }
    }

    fn federation_grad_norm(&self, params: &ParamVector) -> Result<f64> {
        if self.config.model.is_quadratic() {
            let mut sum = ParamVector::zeros(params.len());
            for model in &self.models {
                sum = sum.add(&grad(model, params, &Batch::empty())?);
            }
            Ok(sum.scale(1.0 / self.models.len() as f64).norm())
        } else {
            Ok(grad(&self.models[0], params, &self.train_batch)?.norm())
        }
    }

    /// Evaluate the current global model.
    pub fn metrics_row(&self) -> Result<MetricsRow> {
        let theta = &self.global.theta;
        let round = self.global.round;
        let (train_loss, test_loss, test_accuracy) = if self.config.model.is_quadratic() {
            let l = self.federation_loss(theta, &Batch::empty())?;
            (l, l, 0.0)
        } else {
            let train_loss = self.federation_loss(theta, &self.train_batch)?;
            let model = &self.models[0];
            let preds = predict(model, theta, &self.test_batch)?;
            let correct = preds
                .iter()
                .zip(&self.test_batch.labels)
                .filter(|(p, y)| p == y)
                .count();
            let test_loss = loss(model, theta, &self.test_batch)?;
            (
                train_loss,
                test_loss,
                correct as f64 / self.test_batch.len() as f64,
            )
        };

        let sharpness = match &self.config.sharpness {
            Some(probe) => {
                let batch = if self.config.model.is_quadratic() {
                    Batch::empty()
                } else {
                    self.train_batch.clone()
                };
                Some(probe_core(
                    |p| self.federation_loss(p, &batch),
                    theta,
                    probe.rho,
                    probe.directions,
                    &[self.config.seed, tag::SHARPNESS, round as u64],
                )?)
            }
            None => None,
        };

        let row = MetricsRow {
            round,
            train_loss,
            test_loss,
            test_accuracy,
            sharpness,
            grad_norm: self.federation_grad_norm(theta)?,
            delta_norm: self.global.delta.norm(),
            h_norm: self.global.h.norm(),
        };
        for (name, value) in [
            ("train_loss", row.train_loss),
            ("test_loss", row.test_loss),
            ("test_accuracy", row.test_accuracy),
            ("grad_norm", row.grad_norm),
            ("delta_norm", row.delta_norm),
            ("h_norm", row.h_norm),
        ] {
            if !value.is_finite() {
                return Err(Error::contract(format!(
                    "metric {name} is not finite at round {round}"
                )));
            }
        }
        Ok(row)
    }
}

/// Run the full schedule with the worker-pool size taken from
/// `FEDOPT_THREADS`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsLog> {
    run_experiment_with_threads(config, threads_from_env()?)
}

/// Run the full schedule with an explicit parallelism setting; see
/// [`Simulation::set_parallelism`]. Rounds are evaluated at round 0, every
/// `eval_every` rounds, and at the final round.
pub fn run_experiment_with_threads(
    config: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<MetricsLog> {
    let mut sim = Simulation::new(config.clone())?;
    sim.set_parallelism(threads)?;
    let mut rows = vec![sim.metrics_row()?];
    for t in 0..config.rounds {
        sim.round()?;
        let done = t + 1;
        if done % config.eval_every == 0 || done == config.rounds {
            rows.push(sim.metrics_row()?);
        }
    }
    Ok(MetricsLog {
        run_id: run_id(config),
        config: config.clone(),
        rows,
    })
}
