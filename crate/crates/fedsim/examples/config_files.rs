//! The file-driven workflow end to end: write a sweep config, execute it,
//! inspect the emitted CSV, and tabulate the runs with the same machinery
//! the `fedsim` binary uses.
//!
//! Run with: cargo run --release --example config_files

use fedsim::cli;

fn main() {
    let dir = std::env::temp_dir().join(format!("fedsim-demo-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");

    // A sweep: the array-valued "seed" key expands into three runs.
    let config_path = dir.join("sweep.json");
    std::fs::write(
        &config_path,
        r#"{
  "algorithm": "fedtoga",
  "model": "mlp(8,16,4)",
  "dataset": "synthetic(n=800,d=8,classes=4,sep=2.0,seed=42)",
  "partition": "dirichlet(0.3)",
  "N": 10,
  "M": 3,
  "T": 60,
  "K": 5,
  "batch_size": 20,
  "eval_every": 20,
  "seed": [1, 2, 3]
}"#,
    )
    .expect("write config");

    let out = dir.join("out");
    let written = cli::run_command(&config_path, &out).expect("run sweep");
    println!("sweep produced {} runs:", written.len());
    for path in &written {
        println!("  {}", path.display());
    }

    let first = std::fs::read_to_string(&written[0]).expect("read csv");
    println!("\nfirst run's metrics.csv:\n{first}");

    println!("comparison at target accuracy 0.60 (cost is relative to the first run):");
    let mut stdout = std::io::stdout();
    cli::compare_command(&written, 0.60, &mut stdout).expect("compare");

    std::fs::remove_dir_all(&dir).ok();
}
