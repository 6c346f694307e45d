//! What Dirichlet and pathological splits actually do to client data.
//!
//! Prints a client-by-class sample-count matrix for several Dirichlet
//! coefficients and for a pathological split, plus the mean per-client
//! label entropy (higher = closer to IID).
//!
//! Run with: cargo run --release --example partitioning

use fedsim::prelude::*;

fn show(dataset: &Dataset, shards: &[ClientShard], title: &str) {
    println!("{title}");
    print!("  client |");
    for c in 0..dataset.num_classes() {
        print!(" class{c:>2}");
    }
    println!(" | total");
    let mut entropy_sum = 0.0;
    for shard in shards {
        let mut counts = vec![0usize; dataset.num_classes()];
        for &i in &shard.indices {
            counts[dataset.label(i)] += 1;
        }
        print!("  {:>6} |", shard.client_id);
        for &c in &counts {
            print!(" {c:>7}");
        }
        println!(" | {:>5}", shard.indices.len());
        let n = shard.indices.len() as f64;
        entropy_sum += counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum::<f64>();
    }
    println!(
        "  mean per-client label entropy: {:.3} (uniform over {} classes = {:.3})\n",
        entropy_sum / shards.len() as f64,
        dataset.num_classes(),
        (dataset.num_classes() as f64).ln()
    );
}

fn main() {
    let dataset = gen_synthetic_classification(7, 1200, 4, 6, 2.0).expect("dataset");
    println!(
        "synthetic dataset: {} samples, {} classes, {} features\n",
        dataset.len(),
        dataset.num_classes(),
        dataset.feature_dim()
    );

    for u in [0.1, 0.6, 10.0] {
        let shards = dirichlet_partition(&dataset, 8, u, 3).expect("partition");
        show(&dataset, &shards, &format!("dirichlet(u = {u}), 8 clients:"));
    }

    let shards = pathological_partition(&dataset, 8, 2, 3).expect("partition");
    show(
        &dataset,
        &shards,
        "pathological(c = 2), 8 clients — every client sees exactly 2 classes:",
    );
}
