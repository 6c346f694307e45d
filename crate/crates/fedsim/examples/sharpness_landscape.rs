//! Monte-Carlo sharpness of final models under growing heterogeneity.
//!
//! Sharpness here is the mean loss increase over random unit directions at
//! a fixed probe radius (antithetic pairs cancel the linear term). Two
//! views: the same algorithm across Dirichlet coefficients, and different
//! algorithms at fixed heterogeneity.
//!
//! Run with: cargo run --release --example sharpness_landscape

use fedsim::prelude::*;

fn config(algorithm: Algorithm, concentration: f64) -> ExperimentConfig {
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
            scheme: PartitionScheme::Dirichlet { concentration },
            num_clients: 20,
            seed: 1,
        }),
        n_clients: 20,
        clients_per_round: 4,
        rounds: 200,
        hp: HyperParams {
            local_steps: 10,
            batch_size: 20,
            ..HyperParams::default()
        },
        seed: 1,
        eval_every: 50,
        sharpness: Some(SharpnessProbeCfg {
            rho: 0.1,
            directions: 64,
        }),
    }
}

fn main() {
    println!("sharpness of the final FedAvg model vs heterogeneity (u small = more non-IID):");
    for u in [0.1, 0.6, 10.0] {
        let log = run_experiment(&config(Algorithm::FedAvg, u)).expect("run");
        let row = log.final_row();
        println!(
            "  dirichlet u = {u:<5} sharpness {:.6}  (test acc {:.4})",
            row.sharpness.unwrap(),
            row.test_accuracy
        );
    }

    println!("\nsharpness by algorithm at u = 0.1:");
    for algorithm in [
        Algorithm::FedAvg,
        Algorithm::FedSam,
        Algorithm::FedDyn,
        Algorithm::FedSmoo,
        Algorithm::FedToga,
    ] {
        let log = run_experiment(&config(algorithm, 0.1)).expect("run");
        let row = log.final_row();
        println!(
            "  {:<10} sharpness {:.6}  (test acc {:.4})",
            algorithm.name(),
            row.sharpness.unwrap(),
            row.test_accuracy
        );
    }
}
