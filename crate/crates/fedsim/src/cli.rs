//! File-driven workflows: flat JSON configs, sweep expansion, metrics CSV
//! and manifest emission, run comparison, and a fast self-test.
//!
//! Config files are a single flat JSON object; every key mirrors an
//! [`ExperimentConfig`] field. Any key may hold an array instead of a
//! scalar, which turns the file into a sweep: the cartesian product of all
//! array-valued keys is executed, one sibling output directory per entry.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::client::{DualDivisor, HyperParams, PerturbationMode};
use crate::data::{PartitionScheme, PartitionSpec};
use crate::error::{Error, Result};
use crate::harness::{
    run_experiment, run_id, Algorithm, DataSource, ExperimentConfig, MetricsLog,
    SharpnessProbeCfg,
};

/// Header of every metrics.csv produced by [`run_command`].
pub const METRICS_HEADER: &str =
    "round,train_loss,test_loss,test_accuracy,sharpness,grad_norm,delta_norm,h_norm";

/// Raw file schema. Unknown keys are rejected by name.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    algorithm: String,
    model: String,
    dataset: Option<String>,
    partition: Option<String>,
    partition_seed: Option<u64>,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: Option<usize>,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "K")]
    k: Option<usize>,
    seed: Option<u64>,
    eval_every: Option<usize>,
    eta_l: Option<f64>,
    lr_decay: Option<f64>,
    rho: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    kappa: Option<f64>,
    batch_size: Option<usize>,
    perturbation_mode: Option<String>,
    prox_enabled: Option<bool>,
    dual_divisor: Option<String>,
    sharpness_probe: Option<bool>,
    sharpness_rho: Option<f64>,
    sharpness_directions: Option<usize>,
}

/// Split `name(arg, arg, ...)` into the name and raw argument strings.
fn parse_call(text: &str) -> Result<(String, Vec<String>)> {
    let text = text.trim();
    let Some(open) = text.find('(') else {
        return Ok((text.to_string(), Vec::new()));
    };
    if !text.ends_with(')') {
        return Err(Error::config(format!("malformed value {text:?}: missing ')'")));
    }
    let name = text[..open].trim().to_string();
    let inner = &text[open + 1..text.len() - 1];
    let args = inner
        .split(',')
        .map(|a| a.trim().to_string())
        .filter(|a| !a.is_empty())
        .collect();
    Ok((name, args))
}

/// Key-value arguments (`d=5`) with optional positional fallback.
fn kv_args(args: &[String]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for arg in args {
        let Some((k, v)) = arg.split_once('=') else {
            return Err(Error::config(format!(
                "expected key=value argument, found {arg:?}"
            )));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(field: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::config(format!("{field}: cannot parse {raw:?}")))
}

fn parse_model(text: &str) -> Result<crate::harness::ModelSource> {
    use crate::harness::ModelSource;
    let (name, args) = parse_call(text)?;
    match name.as_str() {
        "quadratic-random" => {
            let kv = kv_args(&args)?;
            let dim = parse_num(
                "model",
                kv.get("d")
                    .ok_or_else(|| Error::config("model quadratic-random needs d=<dim>"))?,
            )?;
            let seed = match kv.get("seed") {
                Some(raw) => parse_num("model", raw)?,
                None => 0,
            };
            for key in kv.keys() {
                if key != "d" && key != "seed" {
                    return Err(Error::config(format!(
                        "model quadratic-random: unknown argument {key:?}"
                    )));
                }
            }
            Ok(ModelSource::QuadraticRandom { dim, seed })
        }
        "logistic" => {
            let dim = match args.len() {
                1 if args[0].contains('=') => parse_num("model", &kv_args(&args)?["d"])?,
                1 => parse_num("model", &args[0])?,
                _ => return Err(Error::config("model logistic needs exactly one dimension")),
            };
            Ok(ModelSource::Logistic { input_dim: dim })
        }
        "mlp" => {
            if args.len() < 3 {
                return Err(Error::config(
                    "model mlp needs at least input, hidden and output widths",
                ));
            }
            let layers = args
                .iter()
                .map(|a| parse_num("model", a))
                .collect::<Result<Vec<usize>>>()?;
            Ok(ModelSource::Mlp { layers })
        }
        other => Err(Error::config(format!(
            "model: unknown kind {other:?} (expected quadratic-random, logistic or mlp)"
        ))),
    }
}

fn parse_dataset(text: &str) -> Result<DataSource> {
    if let Some(path) = text.strip_prefix("csv:") {
        return Ok(DataSource::Csv {
            path: path.trim().to_string(),
        });
    }
    let (name, args) = parse_call(text)?;
    if name != "synthetic" {
        return Err(Error::config(format!(
            "dataset: unknown kind {name:?} (expected synthetic(...) or csv:<path>)"
        )));
    }
    let kv = kv_args(&args)?;
    let get = |key: &str| -> Result<&String> {
        kv.get(key)
            .ok_or_else(|| Error::config(format!("dataset synthetic needs {key}=<value>")))
    };
    Ok(DataSource::Synthetic {
        n_samples: parse_num("dataset", get("n")?)?,
        feature_dim: parse_num("dataset", get("d")?)?,
        num_classes: parse_num("dataset", get("classes")?)?,
        class_sep: parse_num("dataset", get("sep")?)?,
        seed: match kv.get("seed") {
            Some(raw) => parse_num("dataset", raw)?,
            None => 0,
        },
    })
}

fn parse_partition(text: &str, num_clients: usize, seed: u64) -> Result<PartitionSpec> {
    let (name, args) = parse_call(text)?;
    let scheme = match name.as_str() {
        "dirichlet" => {
            if args.len() != 1 {
                return Err(Error::config("partition dirichlet needs one coefficient"));
            }
            let raw = args[0].strip_prefix("u=").unwrap_or(&args[0]);
            PartitionScheme::Dirichlet {
                concentration: parse_num("partition", raw)?,
            }
        }
        "pathological" => {
            if args.len() != 1 {
                return Err(Error::config("partition pathological needs one coefficient"));
            }
            let raw = args[0].strip_prefix("c=").unwrap_or(&args[0]);
            PartitionScheme::Pathological {
                classes_per_client: parse_num("partition", raw)?,
            }
        }
        other => Err(Error::config(format!(
            "partition: unknown scheme {other:?} (expected dirichlet or pathological)"
        )))?,
    };
    Ok(PartitionSpec {
        scheme,
        num_clients,
        seed,
    })
}

fn build_config(file: ConfigFile) -> Result<ExperimentConfig> {
    let algorithm = Algorithm::parse(&file.algorithm)?;
    let model = parse_model(&file.model)?;
    let seed = file.seed.unwrap_or(0);
    let data = file.dataset.as_deref().map(parse_dataset).transpose()?;
    let partition = file
        .partition
        .as_deref()
        .map(|p| parse_partition(p, file.n, file.partition_seed.unwrap_or(seed)))
        .transpose()?;

    let perturbation_mode = match file.perturbation_mode.as_deref() {
        None => PerturbationMode::Toga,
        Some("plain") => PerturbationMode::Plain,
        Some("toga") => PerturbationMode::Toga,
        Some("neighborhood") => PerturbationMode::Neighborhood,
        Some("fusion") => PerturbationMode::Fusion,
        Some(other) => {
            return Err(Error::config(format!(
                "perturbation_mode: unknown value {other:?}"
            )))
        }
    };
    let dual_divisor = match file.dual_divisor.as_deref() {
        None => None,
        Some("participants") => Some(DualDivisor::Participants),
        Some("all_clients") => Some(DualDivisor::AllClients),
        Some(other) => {
            return Err(Error::config(format!(
                "dual_divisor: unknown value {other:?}"
            )))
        }
    };

    let defaults = HyperParams::default();
    let hp = HyperParams {
        eta_l: file.eta_l.unwrap_or(defaults.eta_l),
        lr_decay: file.lr_decay.unwrap_or(defaults.lr_decay),
        rho: file.rho.unwrap_or(defaults.rho),
        alpha: file.alpha.unwrap_or(defaults.alpha),
        beta: file.beta.unwrap_or(defaults.beta),
        kappa: file.kappa.unwrap_or(defaults.kappa),
        local_steps: file.k.unwrap_or(defaults.local_steps),
        batch_size: file.batch_size.unwrap_or(defaults.batch_size),
        perturbation_mode,
        prox_enabled: file.prox_enabled.unwrap_or(true),
        dual_divisor,
    };

    let sharpness = if file.sharpness_probe.unwrap_or(false) {
        let defaults = SharpnessProbeCfg::default();
        Some(SharpnessProbeCfg {
            rho: file.sharpness_rho.unwrap_or(defaults.rho),
            directions: file.sharpness_directions.unwrap_or(defaults.directions),
        })
    } else {
        None
    };

    let config = ExperimentConfig {
        algorithm,
        model,
        data,
        partition,
        n_clients: file.n,
        clients_per_round: file.m.unwrap_or(file.n),
        rounds: file.t,
        hp,
        seed,
        eval_every: file.eval_every.unwrap_or(10),
        sharpness,
    };
    config.validate()?;
    Ok(config)
}

fn config_from_value(value: Value) -> Result<ExperimentConfig> {
    let file: ConfigFile = serde_json::from_value(value)
        .map_err(|e| Error::config(format!("invalid config: {e}")))?;
    build_config(file)
}

/// Parse and fully validate a single (non-sweep) config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("config is not valid JSON: {e}")))?;
    config_from_value(value)
}

fn label_of(value: &Value) -> String {
    match value {
        Value::String(s) => s.replace(['/', '\\'], "-"),
        other => other.to_string(),
    }
}

/// Expand a config file into (label, config) pairs. Array-valued keys are
/// sweep axes; their cartesian product is returned in deterministic key
/// order. A plain config yields a single entry with an empty label.
pub fn expand_sweep(path: impl AsRef<Path>) -> Result<Vec<(String, ExperimentConfig)>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("config is not valid JSON: {e}")))?;
    let Value::Object(map) = &value else {
        return Err(Error::config("config must be a JSON object"));
    };

    let mut axes: Vec<(String, Vec<Value>)> = Vec::new();
    for (key, val) in map {
        if let Value::Array(options) = val {
            if options.is_empty() {
                return Err(Error::config(format!("sweep axis {key:?} is empty")));
            }
            axes.push((key.clone(), options.clone()));
        }
    }

    if axes.is_empty() {
        return Ok(vec![(String::new(), config_from_value(value)?)]);
    }

    let mut expanded = Vec::new();
    let mut counters = vec![0usize; axes.len()];
    loop {
        let mut concrete = map.clone();
        let mut label = String::new();
        for (axis, &idx) in axes.iter().zip(&counters) {
            let chosen = axis.1[idx].clone();
            if !label.is_empty() {
                label.push('_');
            }
            let _ = write!(label, "{}={}", axis.0, label_of(&chosen));
            concrete.insert(axis.0.clone(), chosen);
        }
        expanded.push((label, config_from_value(Value::Object(concrete))?));

        // Odometer increment over the axes.
        let mut pos = axes.len();
        loop {
            if pos == 0 {
                return Ok(expanded);
            }
            pos -= 1;
            counters[pos] += 1;
            if counters[pos] < axes[pos].1.len() {
                break;
            }
            counters[pos] = 0;
        }
    }
}

/// 17-significant-digit formatting: round-trips every f64 exactly.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render the metrics log as CSV (numeric fields at 17 significant digits,
/// sharpness empty when the probe is disabled).
pub fn metrics_csv(log: &MetricsLog) -> String {
    let mut out = String::with_capacity(64 * (log.rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for row in &log.rows {
        let sharp = row.sharpness.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.round,
            fmt_f64(row.train_loss),
            fmt_f64(row.test_loss),
            fmt_f64(row.test_accuracy),
            sharp,
            fmt_f64(row.grad_norm),
            fmt_f64(row.delta_norm),
            fmt_f64(row.h_norm),
        );
    }
    out
}

/// What `manifest.json` records about a run: provenance plus the fully
/// resolved config. `run_id` is stable across identical configs; only
/// `created_unix` differs between reruns.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_path: String,
    pub output_dir: String,
    pub created_unix: u64,
    pub config: ExperimentConfig,
}

/// Pick non-colliding `metrics[-k].csv` / `manifest[-k].json` names so
/// existing outputs are never overwritten.
fn output_slot(dir: &Path) -> (PathBuf, PathBuf) {
    for k in 0u32.. {
        let (metrics, manifest) = if k == 0 {
            (dir.join("metrics.csv"), dir.join("manifest.json"))
        } else {
            (
                dir.join(format!("metrics-{k}.csv")),
                dir.join(format!("manifest-{k}.json")),
            )
        };
        if !metrics.exists() && !manifest.exists() {
            return (metrics, manifest);
        }
    }
    unreachable!()
}

/// Execute a config (sweep-aware) and write `metrics.csv` plus
/// `manifest.json` under `out_dir`; sweep entries land in sibling
/// subdirectories named by their axis values. Returns the metrics paths.
pub fn run_command(config_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = expand_sweep(config_path)?;
    let mut written = Vec::with_capacity(entries.len());
    for (label, config) in entries {
        let target = if label.is_empty() {
            out_dir.to_path_buf()
        } else {
            out_dir.join(&label)
        };
        std::fs::create_dir_all(&target)?;
        let log = run_experiment(&config)?;
        let (metrics_path, manifest_path) = output_slot(&target);

        std::fs::write(&metrics_path, metrics_csv(&log))?;

        let manifest = RunManifest {
            run_id: run_id(&config),
            config_path: config_path.display().to_string(),
            output_dir: target.display().to_string(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config,
        };
        std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
        written.push(metrics_path);
    }
    Ok(written)
}

struct ParsedRun {
    name: String,
    final_accuracy: f64,
    rounds_to_target: Option<usize>,
}

fn read_metrics_csv(path: &Path, target: f64) -> Result<ParsedRun> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == METRICS_HEADER => {}
        Some((_, other)) => {
            return Err(Error::config(format!(
                "{}: schema mismatch, header is {other:?}",
                path.display()
            )))
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: format!("{}: empty file", path.display()),
            })
        }
    }
    let mut final_accuracy = None;
    let mut reached = None;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let round: usize = parse_num("round", fields[0]).map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("bad round {:?}", fields[0]),
        })?;
        let acc: f64 = fields[3].parse().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("bad test_accuracy {:?}", fields[3]),
        })?;
        if acc >= target && reached.is_none() {
            reached = Some(round);
        }
        final_accuracy = Some(acc);
    }
    let Some(final_accuracy) = final_accuracy else {
        return Err(Error::Parse {
            line: 1,
            message: format!("{}: no data rows", path.display()),
        });
    };
    Ok(ParsedRun {
        name: path.display().to_string(),
        final_accuracy,
        rounds_to_target: reached,
    })
}

/// Tabulate final accuracy, rounds-to-target and the round-cost ratio
/// against the first listed run.
pub fn compare_command(paths: &[PathBuf], target: f64, out: &mut impl Write) -> Result<()> {
    if paths.is_empty() {
        return Err(Error::config("compare needs at least one metrics.csv"));
    }
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::config("target accuracy must be in (0, 1]"));
    }
    let runs = paths
        .iter()
        .map(|p| read_metrics_csv(p, target))
        .collect::<Result<Vec<_>>>()?;

    let baseline = runs[0].rounds_to_target;
    writeln!(out, "{:<40} {:>12} {:>14} {:>8}", "run", "final_acc", "rounds@target", "cost")?;
    for run in &runs {
        let rounds = run
            .rounds_to_target
            .map(|r| r.to_string())
            .unwrap_or_else(|| "—".into());
        let cost = match (baseline, run.rounds_to_target) {
            (Some(base), Some(r)) if base > 0 => format!("{:.1}x", r as f64 / base as f64),
            (Some(0), Some(0)) => "1.0x".into(),
            _ => "—".into(),
        };
        writeln!(
            out,
            "{:<40} {:>12.4} {:>14} {:>8}",
            run.name, run.final_accuracy, rounds, cost
        )?;
    }
    Ok(())
}

/// Fast subset of the invariant suite, for `fedsim selftest`.
pub fn selftest(out: &mut impl Write) -> Result<()> {
    use crate::client::{compute_perturbation, ClientState};
    use crate::harness::{run_experiment_with_threads, ModelSource, Simulation};
    use crate::model::{finite_diff_grad, grad, Batch, ModelSpec};
    use crate::rng::StreamRng;
    use crate::vector::ParamVector;

    let mut pass = |name: &str| -> Result<()> {
        writeln!(out, "ok — {name}")?;
        Ok(())
    };

    // Perturbation algebra: output norm is 0 or rho.
    {
        let mut rng = StreamRng::from_parts(&[991]);
        let modes = [
            PerturbationMode::Plain,
            PerturbationMode::Toga,
            PerturbationMode::Neighborhood,
            PerturbationMode::Fusion,
        ];
        for i in 0..1000 {
            let d = 1 + rng.next_below(8);
            let g = ParamVector::new((0..d).map(|_| rng.normal()).collect());
            let delta = ParamVector::new((0..d).map(|_| rng.normal()).collect());
            let hp = HyperParams {
                rho: if i % 7 == 0 { 0.0 } else { rng.uniform(0.01, 1.0) },
                kappa: rng.uniform(0.0, 2.0),
                perturbation_mode: modes[i % 4],
                ..HyperParams::default()
            };
            let p = compute_perturbation(&g, Some(&g), &delta, &hp);
            let n = p.norm();
            if n.min((n - hp.rho).abs()) > 1e-10 {
                return Err(Error::contract(format!(
                    "perturbation norm {n} not in {{0, {}}}",
                    hp.rho
                )));
            }
        }
        pass("perturbation norm is 0 or rho (1000 random tuples)")?;
    }

    // Gradient oracle on all three model kinds.
    {
        let mut rng = StreamRng::from_parts(&[992]);
        let quad = ModelSpec::quadratic(
            vec![1.2, 0.1, 0.1, 0.8],
            ParamVector::new(vec![0.4, -0.6]),
        )?;
        let logistic = ModelSpec::logistic(3)?;
        let mlp = ModelSpec::mlp(vec![3, 5, 2])?;
        for _ in 0..5 {
            let batch = Batch::new(
                (0..6).map(|_| (0..3).map(|_| rng.normal()).collect()).collect(),
                (0..6).map(|_| rng.next_below(2)).collect(),
            )?;
            for (model, params) in [
                (&quad, ParamVector::new(vec![rng.normal(), rng.normal()])),
                (&logistic, ParamVector::new((0..3).map(|_| rng.normal()).collect())),
                (
                    &mlp,
                    ParamVector::new(
                        (0..mlp.param_count()).map(|_| 0.3 * rng.normal()).collect(),
                    ),
                ),
            ] {
                let b = if matches!(model, ModelSpec::Quadratic { .. }) {
                    Batch::empty()
                } else {
                    batch.clone()
                };
                let g = grad(model, &params, &b)?;
                let fd = finite_diff_grad(model, &params, &b, 1e-5)?;
                let err = g.sub(&fd).norm_inf() / (1.0 + g.norm_inf());
                if err > 1e-4 {
                    return Err(Error::contract(format!("gradient check failed: {err:e}")));
                }
            }
        }
        pass("analytic gradients match finite differences")?;
    }

    // Reduction: degenerate FedTOGA tracks FedDyn bitwise.
    {
        let base = ExperimentConfig {
            algorithm: Algorithm::FedToga,
            model: ModelSource::QuadraticRandom { dim: 3, seed: 2 },
            data: None,
            partition: None,
            n_clients: 4,
            clients_per_round: 4,
            rounds: 3,
            hp: HyperParams {
                rho: 0.0,
                kappa: 0.0,
                beta: 0.0,
                ..HyperParams::default()
            },
            seed: 5,
            eval_every: 1,
            sharpness: None,
        };
        let mut dyn_cfg = base.clone();
        dyn_cfg.algorithm = Algorithm::FedDyn;
        dyn_cfg.hp.dual_divisor = Some(DualDivisor::Participants);
        let a = run_experiment_with_threads(&base, Some(0))?;
        let b = run_experiment_with_threads(&dyn_cfg, Some(0))?;
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            if ra.train_loss.to_bits() != rb.train_loss.to_bits() {
                return Err(Error::contract(
                    "FedTOGA(rho=0,kappa=0,beta=0) diverged from FedDyn",
                ));
            }
        }
        pass("degenerate FedTOGA reduces to FedDyn bitwise")?;
    }

    // Dual identity over a short run.
    {
        let cfg = ExperimentConfig {
            algorithm: Algorithm::FedToga,
            model: ModelSource::QuadraticRandom { dim: 3, seed: 9 },
            data: None,
            partition: None,
            n_clients: 4,
            clients_per_round: 2,
            rounds: 10,
            hp: HyperParams::default(),
            seed: 3,
            eval_every: 1,
            sharpness: None,
        };
        let mut sim = Simulation::new(cfg.clone())?;
        for _ in 0..cfg.rounds {
            let before: Vec<ClientState> = (0..cfg.n_clients)
                .map(|i| sim.client_state(i).clone())
                .collect();
            let outcome = sim.round()?;
            for (client, report) in &outcome.reports {
                let dh = sim.client_state(*client).h.sub(&before[*client].h);
                let dtheta = report.theta_out.sub(&outcome.theta_before);
                let residual = dh.scale(cfg.hp.alpha).add(&dtheta).norm_inf();
                if residual > 1e-12 {
                    return Err(Error::contract(format!(
                        "dual identity violated: residual {residual:e}"
                    )));
                }
            }
        }
        pass("client dual identity alpha*dh + dtheta = 0")?;
    }

    // Determinism of the CSV bytes.
    {
        let cfg = ExperimentConfig {
            algorithm: Algorithm::FedSam,
            model: ModelSource::QuadraticRandom { dim: 2, seed: 1 },
            data: None,
            partition: None,
            n_clients: 3,
            clients_per_round: 2,
            rounds: 5,
            hp: HyperParams::default(),
            seed: 8,
            eval_every: 1,
            sharpness: Some(SharpnessProbeCfg::default()),
        };
        let a = metrics_csv(&run_experiment_with_threads(&cfg, Some(0))?);
        let b = metrics_csv(&run_experiment_with_threads(&cfg, Some(2))?);
        if a != b {
            return Err(Error::contract(
                "sequential and parallel runs produced different CSV bytes",
            ));
        }
        pass("sequential vs parallel CSV bytes identical")?;
    }

    writeln!(out, "selftest passed")?;
    Ok(())
}
