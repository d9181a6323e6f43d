//! Simulated active learning: select, reveal labels, evaluate, record.

use std::cell::Cell;
use std::time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::coverage::CoverageState;
use crate::error::{Error, Result};
use crate::features::{normalize_rows, FeatureStore};
use crate::kernels::{sq_euclidean, Kernel};
use crate::rng::{hash64, seeded};
use crate::selectors::{select, LabeledPool, Method, ProbMatrix, SelectorConfig};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

/// Hands out training labels and counts reads of labels that were never
/// revealed.
#[derive(Debug)]
pub struct Annotator<'a> {
    labels: &'a [u32],
    revealed: Vec<bool>,
    unrevealed_reads: Cell<usize>,
}

impl<'a> Annotator<'a> {
    pub fn new(labels: &'a [u32]) -> Self {
        Annotator {
            labels,
            revealed: vec![false; labels.len()],
            unrevealed_reads: Cell::new(0),
        }
    }

    pub fn reveal(&mut self, indices: &[usize]) {
        for &i in indices {
            self.revealed[i] = true;
        }
    }

    pub fn label(&self, i: usize) -> u32 {
        if !self.revealed[i] {
            self.unrevealed_reads.set(self.unrevealed_reads.get() + 1);
        }
        self.labels[i]
    }

    pub fn unrevealed_reads(&self) -> usize {
        self.unrevealed_reads.get()
    }
}

fn check_dims(train: &FeatureStore, query: &FeatureStore) -> Result<()> {
    if train.dim() != query.dim() {
        return Err(Error::Data(format!(
            "query dimension {} differs from training dimension {}",
            query.dim(),
            train.dim()
        )));
    }
    Ok(())
}

/// 1-NN labels for every row of `query`, with labels fetched through `label_of`.
pub fn nn1_predict_with(
    train: &FeatureStore,
    pool: &LabeledPool,
    query: &FeatureStore,
    label_of: impl Fn(usize) -> u32,
) -> Result<Vec<u32>> {
    if pool.is_empty() {
        return Err(Error::State("cannot predict from an empty labeled pool".into()));
    }
    check_dims(train, query)?;
    Ok(query
        .rows()
        .map(|q| {
            let mut best = (f64::INFINITY, usize::MAX);
            for &l in pool.indices() {
                let d = sq_euclidean(q, train.row(l));
                if d < best.0 || (d == best.0 && l < best.1) {
                    best = (d, l);
                }
            }
            label_of(best.1)
        })
        .collect())
}

/// Each query gets the label of its nearest labeled point; ties go to the
/// lowest labeled index.
pub fn nn1_predict(train: &FeatureStore, pool: &LabeledPool, query: &FeatureStore) -> Result<Vec<u32>> {
    let labels = train.require_labels()?;
    nn1_predict_with(train, pool, query, |i| labels[i])
}

pub fn soft_nn_probs_with(
    train: &FeatureStore,
    pool: &LabeledPool,
    query: &FeatureStore,
    n_classes: usize,
    temperature: f64,
    label_of: impl Fn(usize) -> u32,
) -> Result<ProbMatrix> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    if pool.is_empty() {
        return Err(Error::State("cannot score queries from an empty labeled pool".into()));
    }
    check_dims(train, query)?;
    let pooled: Vec<(usize, usize)> = pool.indices().iter().map(|&l| (l, label_of(l) as usize)).collect();
    let mut probs = Vec::with_capacity(query.n_samples() * n_classes);
    let mut nearest = vec![f64::INFINITY; n_classes];
    for q in query.rows() {
        nearest.iter_mut().for_each(|d| *d = f64::INFINITY);
        for &(l, c) in &pooled {
            let d = sq_euclidean(q, train.row(l));
            if d < nearest[c] {
                nearest[c] = d;
            }
        }
        let logits: Vec<f64> = nearest.iter().map(|d| -d.sqrt() / temperature).collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|&z| (z - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        probs.extend(weights.iter().map(|w| w / total));
    }
    ProbMatrix::new(query.n_samples(), n_classes, probs)
}

/// Softmax over classes of `-d_c / temperature`, where `d_c` is the distance
/// to the nearest labeled point of class `c`. Classes missing from the pool
/// get probability 0.
pub fn soft_nn_probs(train: &FeatureStore, pool: &LabeledPool, query: &FeatureStore, temperature: f64) -> Result<ProbMatrix> {
    let labels = train.require_labels()?;
    let n_classes = train.n_classes().unwrap_or(1);
    soft_nn_probs_with(train, pool, query, n_classes, temperature, |i| labels[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub selector: SelectorConfig,
    pub budget: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Randomly labeled points before the first iteration.
    pub initial: usize,
    /// Kernel for the coverage column of the records.
    pub coverage_kernel: Kernel,
    /// Softmax temperature for the uncertainty baselines.
    pub temperature: f64,
    pub normalize: bool,
    pub run_id: String,
    /// When false, `wall_ms` is recorded as 0 so repeated runs compare equal.
    pub timing: bool,
}

impl LoopConfig {
    pub fn new(selector: SelectorConfig, budget: usize, iterations: usize, seed: u64) -> Self {
        LoopConfig {
            coverage_kernel: selector.kernel,
            selector,
            budget,
            iterations,
            seed,
            initial: 0,
            temperature: DEFAULT_TEMPERATURE,
            normalize: false,
            run_id: String::new(),
            timing: true,
        }
    }

    fn run_id(&self) -> String {
        if self.run_id.is_empty() {
            format!("{}-s{}", self.selector.method, self.seed)
        } else {
            self.run_id.clone()
        }
    }
}

fn nn1_name() -> String {
    "nn1".into()
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub iteration: usize,
    pub labeled_size: usize,
    pub accuracy: f64,
    pub coverage: f64,
    pub wall_ms: f64,
    pub method: String,
    pub seed: u64,
    /// Evaluator that produced `accuracy`; only `nn1` exists.
    #[serde(default = "nn1_name")]
    pub eval: String,
    /// Set on the last record when the pool ran out before the final iteration.
    #[serde(default, skip_serializing_if = "is_false")]
    pub truncated: bool,
}

/// Random split into `(train, test)`; both keep their labels.
pub fn split_train_test(store: &FeatureStore, test_fraction: f64, seed: u64) -> Result<(FeatureStore, FeatureStore)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n = store.n_samples();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::Config(format!("cannot split {n} samples with fraction {test_fraction}")));
    }
    let mut is_test = vec![false; n];
    for i in index::sample(&mut seeded(seed), n, n_test) {
        is_test[i] = true;
    }
    let test: Vec<usize> = (0..n).filter(|&i| is_test[i]).collect();
    let train: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
    Ok((store.subset(&train)?, store.subset(&test)?))
}

fn original_ids(store: &FeatureStore) -> Result<Vec<u32>> {
    let ids = store.require_labels()?;
    Ok(match store.label_map() {
        Some(map) => ids.iter().map(|&c| map[c as usize]).collect(),
        None => ids.to_vec(),
    })
}

pub fn run_loop(train: &FeatureStore, test: &FeatureStore, config: &LoopConfig) -> Result<Vec<RunRecord>> {
    run_loop_audited(train, test, config).map(|(records, _)| records)
}

/// [`run_loop`] that also returns how many unrevealed training labels were read.
pub fn run_loop_audited(
    train: &FeatureStore,
    test: &FeatureStore,
    config: &LoopConfig,
) -> Result<(Vec<RunRecord>, usize)> {
    if config.iterations == 0 || config.budget == 0 {
        return Err(Error::Config("budget and iterations must be at least 1".into()));
    }
    let train_labels = train.require_labels()?;
    // Train and test may have been remapped to dense ids independently.
    let test_labels = original_ids(test)?;
    let train_map = train.label_map();
    let n_classes = train.n_classes().unwrap_or(1);
    let (features, test) = if config.normalize {
        (normalize_rows(&train.without_labels())?, normalize_rows(test)?)
    } else {
        (train.without_labels(), test.clone())
    };
    check_dims(&features, &test)?;
    let n = features.n_samples();
    if config.initial >= n {
        return Err(Error::Config(format!("initial pool {} leaves nothing to select", config.initial)));
    }

    let mut annotator = Annotator::new(train_labels);
    let mut pool = LabeledPool::new(n);
    let mut coverage = CoverageState::new(&features, config.coverage_kernel);
    if config.initial > 0 {
        let init: Vec<usize> = index::sample(&mut seeded(hash64(config.seed, 0)), n, config.initial).into_vec();
        pool.extend(&init, 0)?;
        annotator.reveal(&init);
        for &i in &init {
            coverage.add_point(i)?;
        }
    }

    let run_id = config.run_id();
    let mut records = Vec::with_capacity(config.iterations);
    for t in 1..=config.iterations {
        let remaining = pool.n_unlabeled();
        if remaining == 0 {
            break;
        }
        let budget = config.budget.min(remaining);
        let truncated = budget < config.budget || (t < config.iterations && remaining == budget);
        let mut selector = config.selector.clone();
        selector.seed = hash64(config.seed, t as u64);

        let started = Instant::now();
        let batch = match config.selector.method.uncertainty_mode() {
            Some(_) if pool.is_empty() => {
                selector.method = Method::Random;
                select(&features, &pool, budget, &selector, None)?
            }
            Some(_) => {
                let probs = soft_nn_probs_with(&features, &pool, &features, n_classes, config.temperature, |i| {
                    annotator.label(i)
                })?;
                select(&features, &pool, budget, &selector, Some(&probs))?
            }
            None => select(&features, &pool, budget, &selector, None)?,
        };
        let wall_ms = if config.timing {
            started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };

        pool.extend(&batch.indices, t as u32)?;
        annotator.reveal(&batch.indices);
        for &i in &batch.indices {
            coverage.add_point(i)?;
        }
        let predicted = nn1_predict_with(&features, &pool, &test, |i| annotator.label(i))?;
        let correct = predicted
            .iter()
            .map(|&p| train_map.map_or(p, |m| m[p as usize]))
            .zip(&test_labels)
            .filter(|(p, y)| p == *y)
            .count();
        records.push(RunRecord {
            run_id: run_id.clone(),
            iteration: t,
            labeled_size: pool.len(),
            accuracy: correct as f64 / test_labels.len() as f64,
            coverage: coverage.coverage(),
            wall_ms,
            method: config.selector.describe(),
            seed: config.seed,
            eval: nn1_name(),
            truncated,
        });
        if truncated {
            break;
        }
    }
    Ok((records, annotator.unrevealed_reads()))
}

/// One JSON object per line.
pub fn records_to_jsonl(records: &[RunRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}
