//! Heterogeneous quadratic federation with a closed-form optimum.
//!
//! Every client owns its own random PSD bowl `f_i`, so the federation
//! objective `(1/N) sum f_i` has the exact minimizer
//! `theta* = (sum A_i)^-1 (sum A_i c_i)`. This example runs several
//! algorithms on the same federation and prints how close each gets.
//!
//! Run with: cargo run --release --example quadratic_convergence

use fedsim::prelude::*;

/// Solve `S x = b` by Gaussian elimination with partial pivoting.
fn solve(mut s: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| s[i][col].abs().partial_cmp(&s[j][col].abs()).unwrap())
            .unwrap();
        s.swap(col, pivot);
        b.swap(col, pivot);
        let diag = s[col][col];
        assert!(diag.abs() > 1e-12, "federation matrix is singular");
        for row in col + 1..n {
            let factor = s[row][col] / diag;
            for k in col..n {
                s[row][k] -= factor * s[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= s[row][k] * x[k];
        }
        x[row] = acc / s[row][row];
    }
    x
}

/// Closed-form minimizer of the federation objective.
fn federation_optimum(sim: &Simulation, n_clients: usize, dim: usize) -> Vec<f64> {
    let mut sum_a = vec![vec![0.0; dim]; dim];
    let mut sum_ac = vec![0.0; dim];
    for client in 0..n_clients {
        let ModelSpec::Quadratic { matrix, center } = sim.model(client) else {
            panic!("expected a quadratic model");
        };
        for i in 0..dim {
            for j in 0..dim {
                sum_a[i][j] += matrix[i * dim + j];
            }
            let mut ac = 0.0;
            for j in 0..dim {
                ac += matrix[i * dim + j] * center[j];
            }
            sum_ac[i] += ac;
        }
    }
    solve(sum_a, sum_ac)
}

fn main() {
    let n_clients = 10;
    let dim = 5;
    let rounds = 500;

    let base = ExperimentConfig {
        algorithm: Algorithm::FedToga,
        model: ModelSource::QuadraticRandom { dim, seed: 2024 },
        data: None,
        partition: None,
        n_clients,
        clients_per_round: n_clients,
        rounds,
        hp: HyperParams::default(),
        seed: 1,
        eval_every: 50,
        sharpness: None,
    };

    let sim = Simulation::new(base.clone()).expect("valid config");
    let optimum = federation_optimum(&sim, n_clients, dim);
    println!("closed-form optimum: {optimum:.6?}\n");

    println!(
        "{:<12} {:>14} {:>14} {:>12}",
        "algorithm", "final loss", "|theta-opt|inf", "best round"
    );
    for algorithm in [
        Algorithm::FedAvg,
        Algorithm::FedSam,
        Algorithm::FedDyn,
        Algorithm::FedSmoo,
        Algorithm::FedLesamD,
        Algorithm::FedToga,
    ] {
        let mut config = base.clone();
        config.algorithm = algorithm;
        let mut sim = Simulation::new(config).expect("valid config");
        let mut best = (f64::INFINITY, 0usize);
        for round in 0..rounds {
            sim.round().expect("round");
            let theta = &sim.global().theta;
            let dist = theta
                .as_slice()
                .iter()
                .zip(&optimum)
                .map(|(t, o)| (t - o).abs())
                .fold(0.0f64, f64::max);
            if dist < best.0 {
                best = (dist, round + 1);
            }
        }
        let row = sim.metrics_row().expect("metrics");
        let theta = &sim.global().theta;
        let dist = theta
            .as_slice()
            .iter()
            .zip(&optimum)
            .map(|(t, o)| (t - o).abs())
            .fold(0.0f64, f64::max);
        println!(
            "{:<12} {:>14.6e} {:>14.6e} {:>6} ({:.2e})",
            algorithm.name(),
            row.train_loss,
            dist,
            best.1,
            best.0,
        );
    }
}
