//! Server-side aggregation and round state.
//!
//! The server owns the global model, the global dual variable `h`, the
//! global update `Delta` (average per-step client displacement, sign
//! flipped) and, for FedSMOO, the global perturbation `s`. Reports are
//! always accumulated in ascending client-id order, which makes every
//! aggregate bitwise permutation-invariant.

use crate::client::{ClientReport, DualDivisor, HyperParams};
use crate::error::{Error, Result};
use crate::rng::{tag, StreamRng};
use crate::vector::{normalize_to_radius, ParamVector, NORM_EPS};

/// Round state held by the server.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalState {
    /// Current global model.
    pub theta: ParamVector,
    /// Global dual variable, zero-initialized.
    pub h: ParamVector,
    /// Global update of the previous round, zero-initialized so round 0
    /// clients see no correction.
    pub delta: ParamVector,
    /// Global perturbation (FedSMOO only).
    pub s: Option<ParamVector>,
    /// Communication round counter, incremented by every server step.
    pub round: usize,
}

impl GlobalState {
    pub fn new(theta: ParamVector, with_perturbation_consensus: bool) -> Self {
        let d = theta.len();
        GlobalState {
            theta,
            h: ParamVector::zeros(d),
            delta: ParamVector::zeros(d),
            s: with_perturbation_consensus.then(|| ParamVector::zeros(d)),
            round: 0,
        }
    }
}

/// The clients selected for one round, distinct and sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundPlan {
    pub selected: Vec<usize>,
}

/// Uniform without-replacement draw of `m` of `n` clients, keyed by
/// `(seed, round)` so every round has its own stream.
pub fn sample_clients(n: usize, m: usize, seed: u64, round: usize) -> Result<RoundPlan> {
    if n == 0 || m == 0 {
        return Err(Error::config("need at least one client (N >= 1, M >= 1)"));
    }
    if m > n {
        return Err(Error::config(format!("M exceeds N ({m} > {n})")));
    }
    let mut rng = StreamRng::from_parts(&[seed, tag::SAMPLING, round as u64]);
    Ok(RoundPlan {
        selected: rng.sample_indices(n, m),
    })
}

/// Sum of displacements from the global model and mean of the reported
/// models, both accumulated in ascending client-id order.
fn aggregate(
    theta: &ParamVector,
    reports: &[(usize, ClientReport)],
) -> Result<(ParamVector, ParamVector)> {
    if reports.is_empty() {
        return Err(Error::Protocol("server step received no reports".into()));
    }
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by_key(|&i| reports[i].0);
    for w in order.windows(2) {
        if reports[w[0]].0 == reports[w[1]].0 {
            return Err(Error::Protocol(format!(
                "duplicate report from client {}",
                reports[w[0]].0
            )));
        }
    }
    let d = theta.len();
    let mut sum_disp = ParamVector::zeros(d);
    let mut sum_theta = ParamVector::zeros(d);
    for &i in &order {
        let out = &reports[i].1.theta_out;
        sum_disp = sum_disp.add(&out.sub(theta));
        sum_theta = sum_theta.add(out);
    }
    let mean = sum_theta.scale(1.0 / reports.len() as f64);
    Ok((sum_disp, mean))
}

fn dual_count(
    divisor: DualDivisor,
    participants: usize,
    all_clients: usize,
) -> f64 {
    match divisor {
        DualDivisor::Participants => participants as f64,
        DualDivisor::AllClients => all_clients as f64,
    }
}

/// FedTOGA aggregation: dual update over the participants, the global
/// update `Delta`, and the dual-shifted model average.
pub fn fedtoga_server_step(
    state: &GlobalState,
    reports: &[(usize, ClientReport)],
    hp: &HyperParams,
    n_total: usize,
) -> Result<GlobalState> {
    let (sum_disp, mean) = aggregate(&state.theta, reports)?;
    let m = reports.len();
    let delta = sum_disp.scale(-1.0 / (m * hp.local_steps) as f64);
    let mut next = state.clone();
    if hp.prox_enabled {
        let count = dual_count(
            hp.dual_divisor.unwrap_or(DualDivisor::Participants),
            m,
            n_total,
        );
        next.h = state.h.add_scaled(-1.0 / (hp.alpha * count), &sum_disp);
        next.theta = mean.add_scaled(-hp.alpha, &next.h);
    } else {
        next.theta = mean;
    }
    next.delta = delta;
    next.round += 1;
    Ok(next)
}

/// Plain averaging; `Delta` is still computed as a diagnostic but `h` is
/// left untouched.
pub fn fedavg_server_step(
    state: &GlobalState,
    reports: &[(usize, ClientReport)],
    hp: &HyperParams,
) -> Result<GlobalState> {
    let (sum_disp, mean) = aggregate(&state.theta, reports)?;
    let m = reports.len();
    let mut next = state.clone();
    next.theta = mean;
    next.delta = sum_disp.scale(-1.0 / (m * hp.local_steps) as f64);
    next.round += 1;
    Ok(next)
}

/// FedDyn-style aggregation: dual update divided by the full client count.
pub fn feddyn_server_step(
    state: &GlobalState,
    reports: &[(usize, ClientReport)],
    hp: &HyperParams,
    n_total: usize,
) -> Result<GlobalState> {
    let (sum_disp, mean) = aggregate(&state.theta, reports)?;
    let m = reports.len();
    let mut next = state.clone();
    if hp.prox_enabled {
        let count = dual_count(
            hp.dual_divisor.unwrap_or(DualDivisor::AllClients),
            m,
            n_total,
        );
        next.h = state.h.add_scaled(-1.0 / (hp.alpha * count), &sum_disp);
        next.theta = mean.add_scaled(-hp.alpha, &next.h);
    } else {
        next.theta = mean;
    }
    next.delta = sum_disp.scale(-1.0 / (m * hp.local_steps) as f64);
    next.round += 1;
    Ok(next)
}

/// FedSMOO aggregation: FedDyn plus the renormalized mean of the reported
/// perturbation terms.
pub fn fedsmoo_server_step(
    state: &GlobalState,
    reports: &[(usize, ClientReport)],
    hp: &HyperParams,
    n_total: usize,
) -> Result<GlobalState> {
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by_key(|&i| reports[i].0);
    let d = state.theta.len();
    let mut sum_s = ParamVector::zeros(d);
    for &i in &order {
        let Some(extra) = &reports[i].1.extra else {
            return Err(Error::Protocol(format!(
                "report from client {} is missing the perturbation term",
                reports[i].0
            )));
        };
        sum_s = sum_s.add(extra);
    }
    let mut next = feddyn_server_step(state, reports, hp, n_total)?;
    let mean_s = sum_s.scale(1.0 / reports.len() as f64);
    next.s = Some(normalize_to_radius(&mean_s, hp.rho, NORM_EPS));
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(alpha: f64, k: usize) -> HyperParams {
        HyperParams {
            alpha,
            local_steps: k,
            ..HyperParams::default()
        }
    }

    fn report(theta: Vec<f64>) -> ClientReport {
        ClientReport {
            theta_out: ParamVector::new(theta),
            extra: None,
        }
    }

    #[test]
    fn fedtoga_scalar_example() {
        let state = GlobalState::new(ParamVector::new(vec![1.0]), false);
        let reports = vec![(0usize, report(vec![0.85]))];
        let next = fedtoga_server_step(&state, &reports, &hp(1.0, 1), 1).unwrap();
        assert!((next.h[0] - 0.15).abs() < 1e-15);
        assert!((next.delta[0] - 0.15).abs() < 1e-15);
        assert!((next.theta[0] - 0.70).abs() < 1e-15);
        assert_eq!(next.round, 1);
    }

    #[test]
    fn fedtoga_fixed_point_when_reports_equal_theta() {
        let state = GlobalState::new(ParamVector::new(vec![0.4, -0.2]), false);
        let reports = vec![
            (0usize, report(vec![0.4, -0.2])),
            (1usize, report(vec![0.4, -0.2])),
        ];
        let next = fedtoga_server_step(&state, &reports, &hp(0.5, 3), 2).unwrap();
        assert_eq!(next.h, state.h);
        assert_eq!(next.delta.as_slice(), &[0.0, 0.0]);
        assert_eq!(next.theta.as_slice(), state.theta.as_slice());
    }

    #[test]
    fn fedtoga_symmetric_reports_cancel() {
        let state = GlobalState::new(ParamVector::new(vec![1.0]), false);
        let reports = vec![(0usize, report(vec![1.25])), (1usize, report(vec![0.75]))];
        let next = fedtoga_server_step(&state, &reports, &hp(1.0, 1), 2).unwrap();
        assert_eq!(next.h.as_slice(), &[0.0]);
        assert_eq!(next.delta.as_slice(), &[0.0]);
        assert!((next.theta[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fedavg_examples() {
        let state = GlobalState::new(ParamVector::new(vec![1.0]), false);
        let reports = vec![(0usize, report(vec![0.8])), (1usize, report(vec![1.2]))];
        let next = fedavg_server_step(&state, &reports, &hp(1.0, 1)).unwrap();
        assert!((next.theta[0] - 1.0).abs() < 1e-15);
        assert_eq!(next.h.as_slice(), &[0.0]);

        let single = vec![(3usize, report(vec![0.6]))];
        let next = fedavg_server_step(&state, &single, &hp(1.0, 1)).unwrap();
        assert_eq!(next.theta.as_slice(), &[0.6]);
    }

    #[test]
    fn server_steps_are_permutation_invariant_bitwise() {
        let state = GlobalState::new(ParamVector::new(vec![0.3, 0.7, -1.1]), false);
        let a = (
            0usize,
            report(vec![0.301234567, 0.75, -1.0]),
        );
        let b = (1usize, report(vec![0.25, 0.6999999, -1.2000001]));
        let c = (2usize, report(vec![0.35, 0.71, -1.05]));
        let fwd = vec![a.clone(), b.clone(), c.clone()];
        let rev = vec![c, b, a];
        let hp = hp(0.1, 5);
        let n1 = fedtoga_server_step(&state, &fwd, &hp, 5).unwrap();
        let n2 = fedtoga_server_step(&state, &rev, &hp, 5).unwrap();
        for j in 0..3 {
            assert_eq!(n1.theta[j].to_bits(), n2.theta[j].to_bits());
            assert_eq!(n1.h[j].to_bits(), n2.h[j].to_bits());
            assert_eq!(n1.delta[j].to_bits(), n2.delta[j].to_bits());
        }
    }

    #[test]
    fn feddyn_scalar_example_uses_full_client_count() {
        let state = GlobalState::new(ParamVector::new(vec![1.0]), false);
        let reports = vec![(0usize, report(vec![0.9]))];
        let next = feddyn_server_step(&state, &reports, &hp(1.0, 1), 2).unwrap();
        assert!((next.h[0] - 0.05).abs() < 1e-15);
        assert!((next.theta[0] - 0.85).abs() < 1e-15);
    }

    #[test]
    fn feddyn_reports_at_theta_fix_h() {
        let mut state = GlobalState::new(ParamVector::new(vec![2.0]), false);
        state.h = ParamVector::new(vec![0.3]);
        let reports = vec![(0usize, report(vec![2.0]))];
        let next = feddyn_server_step(&state, &reports, &hp(0.5, 1), 4).unwrap();
        assert_eq!(next.h.as_slice(), &[0.3]);
        assert!((next.theta[0] - (2.0 - 0.5 * 0.3)).abs() < 1e-15);
    }

    #[test]
    fn dual_divisor_changes_by_factor_n_over_m() {
        // With M < N the toga (participants) and dyn (all clients) dual
        // updates differ by exactly N/M.
        let state = GlobalState::new(ParamVector::new(vec![1.0]), false);
        let reports = vec![(0usize, report(vec![0.9]))];
        let hp = hp(1.0, 1);
        let toga = fedtoga_server_step(&state, &reports, &hp, 4).unwrap();
        let dynv = feddyn_server_step(&state, &reports, &hp, 4).unwrap();
        assert!((toga.h[0] - 4.0 * dynv.h[0]).abs() < 1e-15);

        // The override makes them agree.
        let hp_override = HyperParams {
            dual_divisor: Some(DualDivisor::AllClients),
            ..hp
        };
        let toga_n = fedtoga_server_step(&state, &reports, &hp_override, 4).unwrap();
        assert_eq!(toga_n.h[0].to_bits(), dynv.h[0].to_bits());
    }

    #[test]
    fn fedsmoo_server_examples() {
        let mut state = GlobalState::new(ParamVector::new(vec![0.0, 0.0]), true);
        state.theta = ParamVector::new(vec![0.0, 0.0]);
        let hp_s = HyperParams {
            rho: 0.2,
            ..hp(1.0, 1)
        };
        let with_extra = |id: usize, t: Vec<f64>, e: Vec<f64>| {
            (
                id,
                ClientReport {
                    theta_out: ParamVector::new(t),
                    extra: Some(ParamVector::new(e)),
                },
            )
        };
        let reports = vec![
            with_extra(0, vec![0.0, 0.0], vec![1.0, 0.0]),
            with_extra(1, vec![0.0, 0.0], vec![0.0, 1.0]),
        ];
        let next = fedsmoo_server_step(&state, &reports, &hp_s, 2).unwrap();
        let s = next.s.unwrap();
        assert!((s[0] - 0.141_421_4).abs() < 1e-6);
        assert!((s[1] - 0.141_421_4).abs() < 1e-6);

        // All-zero perturbation reports hit the eps branch.
        let reports = vec![
            with_extra(0, vec![0.0, 0.0], vec![0.0, 0.0]),
            with_extra(1, vec![0.0, 0.0], vec![0.0, 0.0]),
        ];
        let next = fedsmoo_server_step(&state, &reports, &hp_s, 2).unwrap();
        assert_eq!(next.s.unwrap().as_slice(), &[0.0, 0.0]);

        // Single report, rho = 0.1.
        let hp_s = HyperParams {
            rho: 0.1,
            ..hp(1.0, 1)
        };
        let reports = vec![with_extra(0, vec![0.0, 0.0], vec![3.0, 4.0])];
        let next = fedsmoo_server_step(&state, &reports, &hp_s, 2).unwrap();
        let s = next.s.unwrap();
        assert!((s[0] - 0.06).abs() < 1e-15);
        assert!((s[1] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn fedsmoo_missing_extra_is_protocol_error() {
        let state = GlobalState::new(ParamVector::new(vec![0.0]), true);
        let reports = vec![(0usize, report(vec![0.1]))];
        let err = fedsmoo_server_step(&state, &reports, &hp(1.0, 1), 1).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
    }

    #[test]
    fn empty_round_is_protocol_error() {
        let state = GlobalState::new(ParamVector::new(vec![0.0]), false);
        let err = fedavg_server_step(&state, &[], &hp(1.0, 1)).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn server_linear_identity() {
        // theta' - mean(reports) = -alpha * h' for arbitrary inputs.
        let mut state = GlobalState::new(ParamVector::new(vec![0.9, -0.4]), false);
        state.h = ParamVector::new(vec![0.05, -0.03]);
        let reports = vec![
            (0usize, report(vec![0.8, -0.5])),
            (1usize, report(vec![1.1, -0.2])),
            (2usize, report(vec![0.7, -0.6])),
        ];
        let hp = hp(0.1, 5);
        let next = fedtoga_server_step(&state, &reports, &hp, 3).unwrap();
        let mean = {
            let mut m = ParamVector::zeros(2);
            for (_, r) in &reports {
                m = m.add(&r.theta_out);
            }
            m.scale(1.0 / 3.0)
        };
        for j in 0..2 {
            let lhs = next.theta[j] - mean[j];
            let rhs = -hp.alpha * next.h[j];
            assert!((lhs - rhs).abs() <= 1e-12, "component {j}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn delta_matches_sum_of_displacements_bitwise() {
        let state = GlobalState::new(ParamVector::new(vec![0.25, 1.5]), false);
        let reports = vec![
            (0usize, report(vec![0.125, 1.25])),
            (1usize, report(vec![0.5, 1.75])),
        ];
        let hp = hp(0.1, 8); // M*K = 16, a power of two
        let next = fedavg_server_step(&state, &reports, &hp).unwrap();
        let mut sum = ParamVector::zeros(2);
        for (_, r) in &reports {
            sum = sum.add(&r.theta_out.sub(&state.theta));
        }
        for j in 0..2 {
            // Recomputed quotient agrees bitwise...
            assert_eq!(
                next.delta[j].to_bits(),
                (-sum[j] / 16.0).to_bits()
            );
            // ...and with a power-of-two M*K the product identity is exact.
            assert_eq!(next.delta[j] * 16.0 + sum[j], 0.0);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_respects_bounds() {
        let a = sample_clients(5, 5, 9, 0).unwrap();
        assert_eq!(a.selected, vec![0, 1, 2, 3, 4]);
        let b = sample_clients(10, 3, 9, 7).unwrap();
        let c = sample_clients(10, 3, 9, 7).unwrap();
        assert_eq!(b, c);
        let d = sample_clients(10, 3, 9, 8).unwrap();
        assert!(b != d || b.selected.len() == 3);
        assert!(sample_clients(10, 11, 9, 0).is_err());
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        // N=10, M=1 over 1e5 rounds: each client within 3 sigma of 10%.
        let n_rounds = 100_000usize;
        let mut counts = [0usize; 10];
        for round in 0..n_rounds {
            let plan = sample_clients(10, 1, 2024, round).unwrap();
            counts[plan.selected[0]] += 1;
        }
        let expected = n_rounds as f64 / 10.0;
        let sigma = (n_rounds as f64 * 0.1 * 0.9).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() <= 3.0 * sigma,
                "client {i}: count {c} vs expected {expected}"
            );
        }
    }
}
