//! Synthetic datasets, heterogeneous partitioning and CSV ingestion.
//!
//! A `Dataset` is a flat list of labelled feature vectors. Partitioners
//! carve it into per-client shards: the Dirichlet scheme draws per-client
//! class proportions from a Dirichlet distribution and rounds them with the
//! largest-remainder rule, the pathological scheme gives every client
//! exactly `c` classes. Both are deterministic in the spec seed and always
//! produce disjoint, exhaustive shards.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{tag, StreamRng};

/// Labelled classification samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<(Vec<f64>, usize)>,
    num_classes: usize,
    feature_dim: usize,
}

impl Dataset {
    /// Validating constructor: label range, uniform feature length, and at
    /// least one sample per class (so any class-based partition is feasible).
    pub fn new(samples: Vec<(Vec<f64>, usize)>, num_classes: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::contract("dataset must contain at least one sample"));
        }
        if num_classes == 0 {
            return Err(Error::contract("num_classes must be >= 1"));
        }
        let feature_dim = samples[0].0.len();
        let mut seen = vec![false; num_classes];
        for (i, (x, y)) in samples.iter().enumerate() {
            if x.len() != feature_dim {
                return Err(Error::contract(format!(
                    "sample {i} has {} features, expected {feature_dim}",
                    x.len()
                )));
            }
            if *y >= num_classes {
                return Err(Error::contract(format!(
                    "sample {i} has label {y}, valid range is [0, {num_classes})"
                )));
            }
            seen[*y] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::contract(format!(
                "class {missing} has no samples"
            )));
        }
        Ok(Dataset {
            samples,
            num_classes,
            feature_dim,
        })
    }

    /// Constructor for internally produced subsets (train/test splits),
    /// where a class may legitimately be absent.
    pub(crate) fn from_subset(
        samples: Vec<(Vec<f64>, usize)>,
        num_classes: usize,
        feature_dim: usize,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::contract("dataset subset is empty"));
        }
        Ok(Dataset {
            samples,
            num_classes,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        let (x, y) = &self.samples[i];
        (x, *y)
    }

    pub fn samples(&self) -> &[(Vec<f64>, usize)] {
        &self.samples
    }

    pub fn label(&self, i: usize) -> usize {
        self.samples[i].1
    }

    /// 80/20 train/test split by a seeded shuffle of the sample indices.
    pub fn train_test_split(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = StreamRng::from_parts(&[seed, tag::SPLIT]);
        rng.shuffle(&mut order);
        let n_train = (self.len() * 4) / 5;
        if n_train == 0 || n_train == self.len() {
            return Err(Error::contract(
                "dataset too small for an 80/20 train/test split",
            ));
        }
        let take = |ids: &[usize]| -> Vec<(Vec<f64>, usize)> {
            ids.iter().map(|&i| self.samples[i].clone()).collect()
        };
        let train = Dataset::from_subset(
            take(&order[..n_train]),
            self.num_classes,
            self.feature_dim,
        )?;
        let test = Dataset::from_subset(
            take(&order[n_train..]),
            self.num_classes,
            self.feature_dim,
        )?;
        Ok((train, test))
    }
}

/// How to carve a dataset into client shards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum PartitionScheme {
    /// Per-client class proportions from Dirichlet(u * 1); smaller `u`
    /// means more heterogeneity.
    Dirichlet { concentration: f64 },
    /// Every client holds samples from exactly `classes_per_client` classes.
    Pathological { classes_per_client: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PartitionSpec {
    pub scheme: PartitionScheme,
    pub num_clients: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::config("partition needs num_clients >= 1"));
        }
        match self.scheme {
            PartitionScheme::Dirichlet { concentration } => {
                if !concentration.is_finite() || concentration <= 0.0 {
                    return Err(Error::config(
                        "dirichlet concentration must be > 0",
                    ));
                }
            }
            PartitionScheme::Pathological { classes_per_client } => {
                if classes_per_client == 0 || classes_per_client > num_classes {
                    return Err(Error::config(format!(
                        "pathological classes_per_client must be in [1, {num_classes}]"
                    )));
                }
                if self.num_clients * classes_per_client < num_classes {
                    return Err(Error::config(format!(
                        "infeasible pathological split: {} clients x {} classes per client \
                         cannot cover {} classes",
                        self.num_clients, classes_per_client, num_classes
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One client's slice of the dataset: unique sample indices, disjoint from
/// every other shard, exhaustive in union.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientShard {
    pub client_id: usize,
    pub indices: Vec<usize>,
}

/// Dispatch on the scheme inside `spec`.
pub fn partition(dataset: &Dataset, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    spec.validate(dataset.num_classes())?;
    match spec.scheme {
        PartitionScheme::Dirichlet { concentration } => {
            dirichlet_partition(dataset, spec.num_clients, concentration, spec.seed)
        }
        PartitionScheme::Pathological { classes_per_client } => {
            pathological_partition(dataset, spec.num_clients, classes_per_client, spec.seed)
        }
    }
}

/// Per-class sample indices in a seeded shuffled order.
fn shuffled_class_lists(dataset: &Dataset, seed: u64) -> Vec<Vec<usize>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for i in 0..dataset.len() {
        by_class[dataset.label(i)].push(i);
    }
    for (c, list) in by_class.iter_mut().enumerate() {
        let mut rng = StreamRng::from_parts(&[seed, tag::PARTITION, c as u64]);
        rng.shuffle(list);
    }
    by_class
}

/// Split `total` into integer counts proportional to `weights` using the
/// largest-remainder rule (ties break toward lower index).
fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let mut counts = vec![0usize; weights.len()];
    if sum <= 0.0 {
        // Degenerate weights: give everything to the first slot.
        if !weights.is_empty() {
            counts[0] = total;
        }
        return counts;
    }
    let mut fractions: Vec<(f64, usize)> = Vec::with_capacity(weights.len());
    let mut assigned = 0usize;
    for (i, &w) in weights.iter().enumerate() {
        let exact = total as f64 * w / sum;
        let base = exact.floor() as usize;
        counts[i] = base;
        assigned += base;
        fractions.push((exact - base as f64, i));
    }
    fractions.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for k in 0..total - assigned {
        counts[fractions[k].1] += 1;
    }
    counts
}

/// Dirichlet non-IID split. Per client, a class-proportion vector is drawn
/// from Dirichlet(u * 1); each class's samples are then distributed across
/// clients proportionally to those draws.
pub fn dirichlet_partition(
    dataset: &Dataset,
    num_clients: usize,
    concentration: f64,
    seed: u64,
) -> Result<Vec<ClientShard>> {
    if num_clients == 0 {
        return Err(Error::config("num_clients must be >= 1"));
    }
    if !concentration.is_finite() || concentration <= 0.0 {
        return Err(Error::config("dirichlet concentration must be > 0"));
    }
    let num_classes = dataset.num_classes();
    let mut rng = StreamRng::from_parts(&[seed, tag::PARTITION]);
    let proportions: Vec<Vec<f64>> = (0..num_clients)
        .map(|_| rng.dirichlet(concentration, num_classes))
        .collect();

    let by_class = shuffled_class_lists(dataset, seed);
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for (c, class_samples) in by_class.iter().enumerate() {
        if class_samples.is_empty() {
            continue;
        }
        let weights: Vec<f64> = proportions.iter().map(|p| p[c]).collect();
        let counts = largest_remainder(class_samples.len(), &weights);
        let mut pos = 0;
        for (client, &count) in counts.iter().enumerate() {
            shards[client].extend_from_slice(&class_samples[pos..pos + count]);
            pos += count;
        }
    }

    // No client may end up empty: the local loop needs at least one batch.
    // Move single samples out of the currently largest shard.
    loop {
        let Some(empty) = shards.iter().position(Vec::is_empty) else {
            break;
        };
        let largest = shards
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        if shards[largest].len() <= 1 {
            return Err(Error::config(
                "dataset too small to give every client at least one sample",
            ));
        }
        let moved = shards[largest].pop().unwrap();
        shards[empty].push(moved);
    }

    Ok(finish_shards(shards))
}

/// Pathological split: classes are shuffled once and dealt round-robin so
/// client `i` receives `c` consecutive classes of the cycle; each class's
/// samples are split equally among the clients holding it.
pub fn pathological_partition(
    dataset: &Dataset,
    num_clients: usize,
    classes_per_client: usize,
    seed: u64,
) -> Result<Vec<ClientShard>> {
    let num_classes = dataset.num_classes();
    let spec = PartitionSpec {
        scheme: PartitionScheme::Pathological { classes_per_client },
        num_clients,
        seed,
    };
    spec.validate(num_classes)?;

    let mut class_order: Vec<usize> = (0..num_classes).collect();
    let mut rng = StreamRng::from_parts(&[seed, tag::PARTITION]);
    rng.shuffle(&mut class_order);

    // Client i takes slots [i*c, (i+1)*c) of the cyclic class sequence.
    // Consecutive slots of a cycle of distinct classes are distinct because
    // classes_per_client <= num_classes.
    let mut assignees: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for client in 0..num_clients {
        for slot in 0..classes_per_client {
            let class = class_order[(client * classes_per_client + slot) % num_classes];
            assignees[class].push(client);
        }
    }

    let by_class = shuffled_class_lists(dataset, seed);
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for (c, clients) in assignees.iter().enumerate() {
        let samples = &by_class[c];
        if clients.is_empty() {
            continue;
        }
        if samples.len() < clients.len() {
            return Err(Error::config(format!(
                "class {c} has {} samples but {} assigned clients; \
                 every assignee needs at least one sample",
                samples.len(),
                clients.len()
            )));
        }
        let weights = vec![1.0; clients.len()];
        let counts = largest_remainder(samples.len(), &weights);
        let mut pos = 0;
        for (k, &client) in clients.iter().enumerate() {
            shards[client].extend_from_slice(&samples[pos..pos + counts[k]]);
            pos += counts[k];
        }
    }

    Ok(finish_shards(shards))
}

fn finish_shards(shards: Vec<Vec<usize>>) -> Vec<ClientShard> {
    shards
        .into_iter()
        .enumerate()
        .map(|(client_id, mut indices)| {
            indices.sort_unstable();
            ClientShard { client_id, indices }
        })
        .collect()
}

/// Gaussian-mixture classification task: per-class means on a sphere of
/// radius `class_sep`, unit covariance, labels balanced to within one
/// sample per class. Deterministic in `seed`.
pub fn gen_synthetic_classification(
    seed: u64,
    n_samples: usize,
    feature_dim: usize,
    num_classes: usize,
    class_sep: f64,
) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::contract("need at least 2 classes"));
    }
    if n_samples < num_classes {
        return Err(Error::contract(
            "need at least one sample per class (n_samples >= num_classes)",
        ));
    }
    if feature_dim == 0 {
        return Err(Error::contract("feature_dim must be >= 1"));
    }
    if !class_sep.is_finite() || class_sep <= 0.0 {
        return Err(Error::contract("class_sep must be positive"));
    }

    let mut rng = StreamRng::from_parts(&[seed, tag::DATA]);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| {
            loop {
                let v: Vec<f64> = (0..feature_dim).map(|_| rng.normal()).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-9 {
                    return v.iter().map(|x| x * class_sep / norm).collect();
                }
            }
        })
        .collect();

    // Balanced counts: the first (n mod classes) classes get one extra.
    let base = n_samples / num_classes;
    let extra = n_samples % num_classes;
    let mut samples = Vec::with_capacity(n_samples);
    for (c, mean) in means.iter().enumerate() {
        let count = base + usize::from(c < extra);
        for _ in 0..count {
            let x: Vec<f64> = mean.iter().map(|m| m + rng.normal()).collect();
            samples.push((x, c));
        }
    }
    rng.shuffle(&mut samples);
    Dataset::new(samples, num_classes)
}

/// Load `f1,...,fd,label` rows with a mandatory header line.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Parse {
            line: 1,
            message: "missing header line".into(),
        });
    };
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "header must name at least one feature column and the label".into(),
        });
    }
    let feature_dim = columns - 1;

    let mut samples = Vec::new();
    let mut max_label = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {columns} fields, found {}", fields.len()),
            });
        }
        let mut features = Vec::with_capacity(feature_dim);
        for (col, raw) in fields[..feature_dim].iter().enumerate() {
            let value: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("field {} is not a number: {raw:?}", col + 1),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("field {} is not finite", col + 1),
                });
            }
            features.push(value);
        }
        let label: usize = fields[feature_dim].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!(
                "label is not a nonnegative integer: {:?}",
                fields[feature_dim]
            ),
        })?;
        max_label = max_label.max(label);
        samples.push((features, label));
    }
    if samples.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no samples".into(),
        });
    }
    Dataset::new(samples, max_label + 1)
}

/// Assert the partition law: disjoint shards whose union is the index set.
pub fn check_partition_law(shards: &[ClientShard], dataset_len: usize) -> Result<()> {
    let mut seen = vec![false; dataset_len];
    for shard in shards {
        for &i in &shard.indices {
            if i >= dataset_len {
                return Err(Error::contract(format!(
                    "shard {} references sample {i} outside the dataset",
                    shard.client_id
                )));
            }
            if seen[i] {
                return Err(Error::contract(format!(
                    "sample {i} assigned to more than one shard"
                )));
            }
            seen[i] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::contract(format!(
            "sample {missing} not assigned to any shard"
        )));
    }
    Ok(())
}
