//! Client-side local training loops.
//!
//! Each algorithm runs `K` local steps from the received global model and
//! reports its final parameters. The SAM family perturbs the model by a
//! radius-`rho` ascent direction before taking the descent gradient; the
//! dynamically regularized family adds a proximal pull toward the round's
//! starting point plus a local dual variable. FedTOGA combines both and
//! additionally folds the server's global update into the perturbation
//! (`kappa`) and into the effective dual (`beta`).

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{grad, Batch, ModelSpec};
use crate::rng::StreamRng;
use crate::vector::{normalize_to_radius, ParamVector, NORM_EPS};

/// Abort threshold for parameter magnitudes; beyond this the round is
/// reported as diverged instead of letting NaNs spread.
pub const MAGNITUDE_GUARD: f64 = 1e12;

/// Which vectors feed the SAM ascent direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    /// Current gradient only (plain FedSAM).
    Plain,
    /// Current gradient plus `kappa` times the global update.
    #[default]
    Toga,
    /// Previous step's SAM gradient replaces the current gradient; falls
    /// back to `Toga` on the first step of a round.
    Neighborhood,
    /// Current gradient plus the cached SAM gradient plus the global update.
    Fusion,
}

/// Which population count divides the server dual update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DualDivisor {
    /// The `M` sampled clients of the round.
    Participants,
    /// All `N` clients.
    AllClients,
}

/// Tunables shared by all algorithms. Fields an algorithm does not use are
/// simply ignored by it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HyperParams {
    /// Local learning rate.
    pub eta_l: f64,
    /// Per-round multiplier on the learning rate.
    pub lr_decay: f64,
    /// SAM perturbation radius.
    pub rho: f64,
    /// Penalty coefficient of the quadratic proximal term.
    pub alpha: f64,
    /// Dual-correction coefficient on the global update.
    pub beta: f64,
    /// Perturbation-correction coefficient on the global update.
    pub kappa: f64,
    /// Local gradient steps per round (one mini-batch each).
    pub local_steps: usize,
    pub batch_size: usize,
    pub perturbation_mode: PerturbationMode,
    /// Disabling this represents the alpha -> infinity limit used by
    /// non-regularized baselines: no proximal pull, duals frozen at zero.
    pub prox_enabled: bool,
    /// Overrides each algorithm's own choice of dual divisor when set.
    pub dual_divisor: Option<DualDivisor>,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            eta_l: 0.1,
            lr_decay: 0.998,
            rho: 0.1,
            alpha: 0.1,
            beta: 0.9,
            kappa: 1.0,
            local_steps: 5,
            batch_size: 50,
            perturbation_mode: PerturbationMode::Toga,
            prox_enabled: true,
            dual_divisor: None,
        }
    }
}

fn require(ok: bool, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(message))
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        require(finite_pos(self.eta_l), "eta_l must be > 0")?;
        require(
            finite_pos(self.lr_decay) && self.lr_decay <= 1.0,
            "lr_decay must be in (0, 1]",
        )?;
        require(finite_nonneg(self.rho), "rho must be >= 0")?;
        require(finite_pos(self.alpha), "alpha must be > 0")?;
        require(finite_nonneg(self.beta), "beta must be >= 0")?;
        require(finite_nonneg(self.kappa), "kappa must be >= 0")?;
        require(self.local_steps >= 1, "K must be >= 1")?;
        require(self.batch_size >= 1, "batch_size must be >= 1")?;
        Ok(())
    }

    /// Effective learning rate at a communication round.
    pub fn eta_at_round(&self, round: usize) -> f64 {
        self.eta_l * self.lr_decay.powi(round as i32)
    }

    pub fn with_mode(mut self, mode: PerturbationMode) -> Self {
        self.perturbation_mode = mode;
        self
    }
}

/// Per-client state that survives across rounds. `mu` exists only once the
/// client has run FedSMOO; `theta_old` only once it has run FedLESAM-D.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientState {
    /// Local dual variable, initialized to zero.
    pub h: ParamVector,
    /// Last SAM gradient of the current round, for the neighborhood and
    /// fusion modes. Cleared at every round start.
    pub cached_sam_grad: Option<ParamVector>,
    /// Global model stored at the client's previous activation (FedLESAM-D).
    pub theta_old: Option<ParamVector>,
    /// Perturbation dual variable (FedSMOO).
    pub mu: Option<ParamVector>,
}

impl ClientState {
    pub fn new(param_count: usize) -> Self {
        ClientState {
            h: ParamVector::zeros(param_count),
            cached_sam_grad: None,
            theta_old: None,
            mu: None,
        }
    }
}

/// What a client sends back: its final parameters, plus the perturbation
/// consensus term for FedSMOO only.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientReport {
    pub theta_out: ParamVector,
    pub extra: Option<ParamVector>,
}

/// Deterministic mini-batch source: one epoch-cycle samples the shard
/// without replacement, reshuffling between cycles from the client's own
/// stream. An empty source (quadratic models) yields empty batches and
/// never touches the stream.
pub struct BatchCycle<'a> {
    data: Option<(&'a Dataset, &'a [usize])>,
    batch_size: usize,
    order: Vec<usize>,
    pos: usize,
    rng: StreamRng,
}

impl<'a> BatchCycle<'a> {
    pub fn new(
        dataset: &'a Dataset,
        shard_indices: &'a [usize],
        batch_size: usize,
        rng: StreamRng,
    ) -> Self {
        assert!(batch_size >= 1, "batch_size must be >= 1");
        assert!(!shard_indices.is_empty(), "shard must not be empty");
        let order: Vec<usize> = (0..shard_indices.len()).collect();
        let pos = order.len(); // force a shuffle before the first batch
        BatchCycle {
            data: Some((dataset, shard_indices)),
            batch_size,
            order,
            pos,
            rng,
        }
    }

    /// Source for data-free models.
    pub fn empty(rng: StreamRng) -> Self {
        BatchCycle {
            data: None,
            batch_size: 0,
            order: Vec::new(),
            pos: 0,
            rng,
        }
    }

    pub fn next_batch(&mut self) -> Batch {
        let Some((dataset, shard)) = self.data else {
            return Batch::empty();
        };
        if self.pos >= self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let take = self.batch_size.min(self.order.len() - self.pos);
        let mut inputs = Vec::with_capacity(take);
        let mut labels = Vec::with_capacity(take);
        for &slot in &self.order[self.pos..self.pos + take] {
            let (x, y) = dataset.sample(shard[slot]);
            inputs.push(x.to_vec());
            labels.push(y);
        }
        self.pos += take;
        Batch { inputs, labels }
    }
}

/// SAM ascent direction scaled to radius `rho`. The mode decides the
/// numerator; a zero radius or a vanishing numerator yields the zero vector.
pub fn compute_perturbation(
    g: &ParamVector,
    cached: Option<&ParamVector>,
    delta_global: &ParamVector,
    hp: &HyperParams,
) -> ParamVector {
    if hp.rho == 0.0 {
        return ParamVector::zeros(g.len());
    }
    let with_kappa = |v: &ParamVector| -> ParamVector {
        if hp.kappa == 0.0 {
            v.clone()
        } else {
            v.add_scaled(hp.kappa, delta_global)
        }
    };
    let numerator = match hp.perturbation_mode {
        PerturbationMode::Plain => g.clone(),
        PerturbationMode::Toga => with_kappa(g),
        PerturbationMode::Neighborhood => match cached {
            Some(c) => with_kappa(c),
            None => with_kappa(g),
        },
        PerturbationMode::Fusion => match cached {
            Some(c) => with_kappa(&g.add(c)),
            None => with_kappa(g),
        },
    };
    normalize_to_radius(&numerator, hp.rho, NORM_EPS)
}

fn check_divergence(theta: &ParamVector, step: usize) -> Result<()> {
    if theta.exceeds_magnitude(MAGNITUDE_GUARD) {
        return Err(Error::Divergence {
            round: 0,
            client: 0,
            step,
        });
    }
    Ok(())
}

/// Ends a dyn-regularized round: `h <- h - (1/alpha)(theta_K - theta_0)`.
fn update_dual(h: &ParamVector, theta_end: &ParamVector, theta_start: &ParamVector, alpha: f64) -> ParamVector {
    h.add_scaled(-1.0 / alpha, &theta_end.sub(theta_start))
}

/// Plain local SGD (FedAvg).
pub fn fedavg_local_update(
    theta_global: &ParamVector,
    model: &ModelSpec,
    batches: &mut BatchCycle,
    hp: &HyperParams,
    eta: f64,
) -> Result<ClientReport> {
    let mut theta = theta_global.clone();
    for k in 0..hp.local_steps {
        let batch = batches.next_batch();
        let g = grad(model, &theta, &batch)?;
        theta = theta.add_scaled(-eta, &g);
        check_divergence(&theta, k)?;
    }
    Ok(ClientReport {
        theta_out: theta,
        extra: None,
    })
}

/// Local SAM: ascend by the normalized gradient, descend with the gradient
/// taken at the perturbed point.
pub fn fedsam_local_update(
    theta_global: &ParamVector,
    model: &ModelSpec,
    batches: &mut BatchCycle,
    hp: &HyperParams,
    eta: f64,
) -> Result<ClientReport> {
    let plain = hp.with_mode(PerturbationMode::Plain);
    let zero_delta = ParamVector::zeros(theta_global.len());
    let mut theta = theta_global.clone();
    for k in 0..hp.local_steps {
        let batch = batches.next_batch();
        let g = grad(model, &theta, &batch)?;
        let delta = compute_perturbation(&g, None, &zero_delta, &plain);
        let g_tilde = grad(model, &theta.add(&delta), &batch)?;
        theta = theta.add_scaled(-eta, &g_tilde);
        check_divergence(&theta, k)?;
    }
    Ok(ClientReport {
        theta_out: theta,
        extra: None,
    })
}

/// Shared inner step of the dyn-regularized family:
/// `theta -= eta * (g_eff - h + (1/alpha)(theta - theta_0) + beta * delta)`.
/// The proximal term is skipped when disabled, the `beta` term when zero.
#[inline]
fn dyn_descent_step(
    theta: &ParamVector,
    g_eff: &ParamVector,
    h: &ParamVector,
    theta_start: &ParamVector,
    hp: &HyperParams,
    beta_delta: Option<&ParamVector>,
    eta: f64,
) -> ParamVector {
    let inv_alpha = 1.0 / hp.alpha;
    let mut update = g_eff.sub(h);
    if hp.prox_enabled {
        update = update.add_scaled(inv_alpha, &theta.sub(theta_start));
    }
    if let Some(delta) = beta_delta {
        if hp.beta != 0.0 {
            update = update.add_scaled(hp.beta, delta);
        }
    }
    theta.add_scaled(-eta, &update)
}

/// FedDyn: dynamic regularization without any perturbation.
pub fn feddyn_local_update(
    theta_global: &ParamVector,
    mut state: ClientState,
    model: &ModelSpec,
    batches: &mut BatchCycle,
    hp: &HyperParams,
    eta: f64,
) -> Result<(ClientReport, ClientState)> {
    let mut theta = theta_global.clone();
    for k in 0..hp.local_steps {
        let batch = batches.next_batch();
        let g = grad(model, &theta, &batch)?;
        theta = dyn_descent_step(&theta, &g, &state.h, theta_global, hp, None, eta);
        check_divergence(&theta, k)?;
    }
    if hp.prox_enabled {
        state.h = update_dual(&state.h, &theta, theta_global, hp.alpha);
    }
    Ok((
        ClientReport {
            theta_out: theta,
            extra: None,
        },
        state,
    ))
}

/// FedTOGA: SAM ascent corrected by the global update (`kappa`), dynamic
/// regularization corrected by the global update (`beta`), optional
/// neighborhood/fusion reuse of the cached SAM gradient.
pub fn fedtoga_local_update(
    theta_global: &ParamVector,
    delta_global: &ParamVector,
    mut state: ClientState,
    model: &ModelSpec,
    batches: &mut BatchCycle,
    hp: &HyperParams,
    eta: f64,
) -> Result<(ClientReport, ClientState)> {
    let mut theta = theta_global.clone();
    state.cached_sam_grad = None; // the register does not carry across rounds
    for k in 0..hp.local_steps {
        let batch = batches.next_batch();
        let g = grad(model, &theta, &batch)?;
        let delta = compute_perturbation(&g, state.cached_sam_grad.as_ref(), delta_global, hp);
        let g_tilde = grad(model, &theta.add(&delta), &batch)?;
        theta = dyn_descent_step(
            &theta,
            &g_tilde,
            &state.h,
            theta_global,
            hp,
            Some(delta_global),
            eta,
        );
        state.cached_sam_grad = Some(g_tilde);
        check_divergence(&theta, k)?;
    }
    if hp.prox_enabled {
        state.h = update_dual(&state.h, &theta, theta_global, hp.alpha);
    }
    Ok((
        ClientReport {
            theta_out: theta,
            extra: None,
        },
        state,
    ))
}

/// FedSMOO: the perturbation carries its own dual variable `mu` pulling the
/// local ascent direction toward the server's global perturbation `s`.
pub fn fedsmoo_local_update(
    theta_global: &ParamVector,
    s_global: &ParamVector,
    mut state: ClientState,
    model: &ModelSpec,
    batches: &mut BatchCycle,
    hp: &HyperParams,
    eta: f64,
) -> Result<(ClientReport, ClientState)> {
    let d = theta_global.len();
    let mut mu = state.mu.take().unwrap_or_else(|| ParamVector::zeros(d));
    let mut theta = theta_global.clone();
    let mut last_s_hat = ParamVector::zeros(d);
    for k in 0..hp.local_steps {
        let batch = batches.next_batch();
        let g = grad(model, &theta, &batch)?;
        let combined = g.sub(&mu).sub(s_global);
        let s_hat = normalize_to_radius(&combined, hp.rho, NORM_EPS);
        mu = mu.add(&s_hat.sub(s_global));
        let g_tilde = grad(model, &theta.add(&s_hat), &batch)?;
        theta = dyn_descent_step(&theta, &g_tilde, &state.h, theta_global, hp, None, eta);
        last_s_hat = s_hat;
        check_divergence(&theta, k)?;
    }
    let s_report = mu.sub(&last_s_hat);
    if hp.prox_enabled {
        state.h = update_dual(&state.h, &theta, theta_global, hp.alpha);
    }
    state.mu = Some(mu);
    Ok((
        ClientReport {
            theta_out: theta,
            extra: Some(s_report),
        },
        state,
    ))
}

/// FedLESAM-D: the perturbation is the displacement from the stored
/// historical global model to the current one, fixed for the whole round.
pub fn fedlesam_d_local_update(
    theta_global: &ParamVector,
    mut state: ClientState,
    model: &ModelSpec,
    batches: &mut BatchCycle,
    hp: &HyperParams,
    eta: f64,
) -> Result<(ClientReport, ClientState)> {
    let delta = match &state.theta_old {
        Some(old) => normalize_to_radius(&old.sub(theta_global), hp.rho, NORM_EPS),
        None => ParamVector::zeros(theta_global.len()),
    };
    let mut theta = theta_global.clone();
    for k in 0..hp.local_steps {
        let batch = batches.next_batch();
        let g_tilde = grad(model, &theta.add(&delta), &batch)?;
        theta = dyn_descent_step(&theta, &g_tilde, &state.h, theta_global, hp, None, eta);
        check_divergence(&theta, k)?;
    }
    if hp.prox_enabled {
        state.h = update_dual(&state.h, &theta, theta_global, hp.alpha);
    }
    state.theta_old = Some(theta_global.clone());
    Ok((
        ClientReport {
            theta_out: theta,
            extra: None,
        },
        state,
    ))
}
