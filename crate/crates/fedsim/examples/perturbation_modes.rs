//! The four SAM ascent-direction modes of FedTOGA, side by side.
//!
//! `plain` uses only the current gradient, `toga` adds the global update,
//! `neighborhood` reuses the previous step's SAM gradient (saving one
//! gradient evaluation per step), and `fusion` sums all three. The demo
//! also shows the mode algebra on a single perturbation call.
//!
//! Run with: cargo run --release --example perturbation_modes

use fedsim::prelude::*;

fn main() {
    // Mode algebra on one call: g points along x, the global update along y.
    let g = ParamVector::new(vec![1.0, 0.0]);
    let cached = ParamVector::new(vec![0.0, 3.0]);
    let delta = ParamVector::new(vec![0.0, 1.0]);
    println!("single perturbation call, g=(1,0), cached=(0,3), Delta=(0,1), rho=0.2, kappa=1:");
    for mode in [
        PerturbationMode::Plain,
        PerturbationMode::Toga,
        PerturbationMode::Neighborhood,
        PerturbationMode::Fusion,
    ] {
        let hp = HyperParams {
            rho: 0.2,
            kappa: 1.0,
            perturbation_mode: mode,
            ..HyperParams::default()
        };
        let p = compute_perturbation(&g, Some(&cached), &delta, &hp);
        println!("  {mode:?}: ({:+.4}, {:+.4})  |.| = {:.4}", p[0], p[1], p.norm());
    }

    // Full runs: same federation, only the mode changes.
    println!("\nFedTOGA on a Dirichlet(0.1) MLP federation, mode sweep:");
    println!("{:<14} {:>10} {:>10}", "mode", "test acc", "train loss");
    for mode in [
        PerturbationMode::Plain,
        PerturbationMode::Toga,
        PerturbationMode::Neighborhood,
        PerturbationMode::Fusion,
    ] {
        let cfg = ExperimentConfig {
            algorithm: Algorithm::FedToga,
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
            rounds: 200,
            hp: HyperParams {
                local_steps: 10,
                batch_size: 20,
                perturbation_mode: mode,
                ..HyperParams::default()
            },
            seed: 1,
            eval_every: 10,
            sharpness: None,
        };
        let log = run_experiment(&cfg).expect("run");
        let row = log.final_row();
        println!(
            "{:<14} {:>10.4} {:>10.4}",
            format!("{mode:?}").to_lowercase(),
            row.test_accuracy,
            row.train_loss
        );
    }
}
