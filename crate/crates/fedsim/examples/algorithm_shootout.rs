//! All six algorithms on one heterogeneous classification federation.
//!
//! A 4-class Gaussian mixture is split across 20 clients with a Dirichlet
//! coefficient of 0.1 (strongly non-IID); 4 clients participate per round.
//! The table reports final test accuracy, the first round at which each
//! run crosses a fixed accuracy target, and the round-cost ratio against
//! FedTOGA.
//!
//! Run with: cargo run --release --example algorithm_shootout

use fedsim::prelude::*;

fn config(algorithm: Algorithm) -> ExperimentConfig {
    ExperimentConfig {
        algorithm,
        model: ModelSource::Mlp {
            layers: vec![8, 16, 4],
        },
        data: Some(DataSource::Synthetic {
            n_samples: 2000,
            feature_dim: 8,
            num_classes: 4,
            class_sep: 2.0,
            seed: 42,
        }),
        partition: Some(PartitionSpec {
            scheme: PartitionScheme::Dirichlet { concentration: 0.1 },
            num_clients: 20,
            seed: 1,
        }),
        n_clients: 20,
        clients_per_round: 4,
        rounds: 300,
        hp: HyperParams {
            local_steps: 10,
            batch_size: 20,
            ..HyperParams::default()
        },
        seed: 1,
        eval_every: 10,
        sharpness: None,
    }
}

fn main() {
    let target = 0.65;
    let algorithms = [
        Algorithm::FedToga,
        Algorithm::FedSmoo,
        Algorithm::FedLesamD,
        Algorithm::FedDyn,
        Algorithm::FedSam,
        Algorithm::FedAvg,
    ];

    println!("4-class MLP federation, Dirichlet(0.1), N=20, M=4, T=300\n");
    println!(
        "{:<12} {:>10} {:>10} {:>14} {:>8}",
        "algorithm", "test acc", "test loss", "rounds@", "cost"
    );
    println!(
        "{:<12} {:>10} {:>10} {:>14} {:>8}",
        "", "", "", format!("{target:.2}"), ""
    );

    let mut baseline: Option<usize> = None;
    for algorithm in algorithms {
        let log = run_experiment(&config(algorithm)).expect("run");
        let row = log.final_row();
        let reached = rounds_to_target(&log, target);
        if baseline.is_none() {
            baseline = reached;
        }
        let cost = match (baseline, reached) {
            (Some(base), Some(r)) if base > 0 => format!("{:.1}x", r as f64 / base as f64),
            _ => "—".into(),
        };
        println!(
            "{:<12} {:>10.4} {:>10.4} {:>14} {:>8}",
            algorithm.name(),
            row.test_accuracy,
            row.test_loss,
            reached.map(|r| r.to_string()).unwrap_or_else(|| "—".into()),
            cost
        );
    }
}
