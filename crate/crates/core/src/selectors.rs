//! Batch selection strategies.
//!
//! Every selector returns exactly `budget` distinct indices outside the
//! labeled pool, in pick order. Wherever a selector takes an argmax or argmin
//! the lowest index wins ties, which keeps different implementations of the
//! same objective comparable index for index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans_default, typicality_within};
use crate::coverage::CoverageState;
use crate::error::{check_index, Error, Result};
use crate::features::FeatureStore;
use crate::kernels::{Kernel, KernelFamily};
use crate::kmedoids::{select_kmedoids, KMedoidsOptions};
use crate::rng::seeded;

pub const DEFAULT_TYPICALITY_M: usize = 20;
pub const DEFAULT_CLUSTER_CAP: usize = 500;

/// Indices whose labels have been acquired, with the round each joined in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPool {
    n_total: usize,
    indices: Vec<usize>,
    rounds: Vec<u32>,
    member: Vec<bool>,
}

impl LabeledPool {
    pub fn new(n_total: usize) -> Self {
        LabeledPool {
            n_total,
            indices: Vec::new(),
            rounds: Vec::new(),
            member: vec![false; n_total],
        }
    }

    pub fn from_indices(n_total: usize, indices: &[usize]) -> Result<Self> {
        let mut pool = Self::new(n_total);
        pool.extend(indices, 0)?;
        Ok(pool)
    }

    pub fn extend(&mut self, indices: &[usize], round: u32) -> Result<()> {
        for &i in indices {
            check_index(i, self.n_total)?;
            if self.member[i] {
                return Err(Error::State(format!("index {i} is already labeled")));
            }
            self.member[i] = true;
            self.indices.push(i);
            self.rounds.push(round);
        }
        Ok(())
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn rounds(&self) -> &[u32] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.member[i]
    }

    pub fn n_unlabeled(&self) -> usize {
        self.n_total - self.indices.len()
    }

    /// Unlabeled indices in ascending order.
    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.n_total).filter(|&i| !self.member[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionBatch {
    pub indices: Vec<usize>,
    /// Per-pick objective gain, for selectors that have one.
    pub gains: Option<Vec<f64>>,
}

/// Row-stochastic class-probability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    n_rows: usize,
    n_classes: usize,
    probs: Vec<f64>,
}

impl ProbMatrix {
    pub fn new(n_rows: usize, n_classes: usize, probs: Vec<f64>) -> Result<Self> {
        if n_classes == 0 || probs.len() != n_rows * n_classes {
            return Err(Error::Data(format!(
                "{} probabilities do not form a {n_rows}x{n_classes} matrix",
                probs.len()
            )));
        }
        for (i, row) in probs.chunks_exact(n_classes).enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Data(format!("row {i} has an entry outside [0, 1]")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::Data(format!("row {i} sums to {total}")));
            }
        }
        Ok(ProbMatrix {
            n_rows,
            n_classes,
            probs,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.n_classes..(i + 1) * self.n_classes]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMode {
    LeastConfident,
    Entropy,
    Margin,
}

impl UncertaintyMode {
    /// Higher means more uncertain.
    pub fn score(self, row: &[f64]) -> f64 {
        match self {
            UncertaintyMode::LeastConfident => -row.iter().copied().fold(0.0, f64::max),
            UncertaintyMode::Entropy => -row
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.ln())
                .sum::<f64>(),
            UncertaintyMode::Margin => {
                let (mut p1, mut p2) = (0.0, 0.0);
                for &p in row {
                    if p > p1 {
                        p2 = p1;
                        p1 = p;
                    } else if p > p2 {
                        p2 = p;
                    }
                }
                -(p1 - p2)
            }
        }
    }
}

fn check_budget(store: &FeatureStore, pool: &LabeledPool, budget: usize) -> Result<()> {
    if pool.n_total() != store.n_samples() {
        return Err(Error::Config(format!(
            "pool spans {} samples but the store has {}",
            pool.n_total(),
            store.n_samples()
        )));
    }
    if budget > pool.n_unlabeled() {
        return Err(Error::Config(format!(
            "budget {budget} exceeds the {} unlabeled samples",
            pool.n_unlabeled()
        )));
    }
    Ok(())
}

pub fn select_random(
    store: &FeatureStore,
    pool: &LabeledPool,
    budget: usize,
    seed: u64,
) -> Result<SelectionBatch> {
    check_budget(store, pool, budget)?;
    let unlabeled = pool.unlabeled();
    let mut rng = seeded(seed);
    let indices = index::sample(&mut rng, unlabeled.len(), budget)
        .into_iter()
        .map(|k| unlabeled[k])
        .collect();
    Ok(SelectionBatch {
        indices,
        gains: None,
    })
}

/// Heap entry for lazy greedy: a stale or fresh upper bound on a gain.
#[derive(Debug, Clone, Copy)]
struct Bound {
    value: f64,
    index: usize,
    epoch: usize,
}

impl PartialEq for Bound {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Bound {}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    // Max-heap on value, lowest index first among equal values.
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Greedy maximization of generalized coverage.
///
/// Marginal gains only shrink as the labeled set grows, so a gain computed
/// against an earlier state is an upper bound on the current one. Candidates
/// are kept in a heap of such bounds and re-evaluated only when they reach
/// the top; a fresh bound at the top is the exact argmax. The result equals
/// evaluating every candidate at every step, at the cost of one full sweep
/// plus a handful of O(N) re-evaluations per pick.
pub fn select_maxherding(
    store: &FeatureStore,
    pool: &LabeledPool,
    budget: usize,
    kernel: &Kernel,
) -> Result<SelectionBatch> {
    check_budget(store, pool, budget)?;
    let mut state = CoverageState::with_labeled(store, *kernel, pool.indices())?;
    let (indices, gains) = greedy_coverage(&mut state, budget);
    Ok(SelectionBatch {
        indices,
        gains: Some(gains),
    })
}

/// Runs `budget` greedy picks on `state`, which is updated in place.
pub(crate) fn greedy_coverage(state: &mut CoverageState<'_>, budget: usize) -> (Vec<usize>, Vec<f64>) {
    let n = state.store().n_samples();
    let mut heap: BinaryHeap<Bound> = (0..n)
        .filter(|&c| !state.is_labeled(c))
        .map(|c| Bound {
            value: state.gain_sum_direct(c),
            index: c,
            epoch: 0,
        })
        .collect();
    let mut picks = Vec::with_capacity(budget);
    let mut gains = Vec::with_capacity(budget);
    let mut column = vec![0.0; n];
    while picks.len() < budget {
        let Some(top) = heap.pop() else { break };
        if top.epoch == picks.len() {
            state.kernel().column_into(state.store(), top.index, &mut column);
            state.absorb(top.index, &column);
            picks.push(top.index);
            gains.push(top.value / n as f64);
        } else {
            heap.push(Bound {
                value: state.gain_sum_direct(top.index),
                index: top.index,
                epoch: picks.len(),
            });
        }
    }
    (picks, gains)
}

/// Kernel herding: reward (mean similarity to the pool) minus penalty (sum
/// of similarities to earlier picks over `picks + 1`). Pool members count as
/// earlier picks unless `ignore_pool` is set.
pub fn select_kernelherding(
    store: &FeatureStore,
    pool: &LabeledPool,
    budget: usize,
    kernel: &Kernel,
    ignore_pool: bool,
) -> Result<SelectionBatch> {
    check_budget(store, pool, budget)?;
    let n = store.n_samples();
    let mut candidate: Vec<bool> = (0..n).map(|i| !pool.contains(i)).collect();
    let mut column = vec![0.0; n];
    let mut reward = vec![0.0; n];
    for c in (0..n).filter(|&c| candidate[c]) {
        kernel.column_into(store, c, &mut column);
        reward[c] = column.iter().sum::<f64>() / n as f64;
    }
    let mut penalty = vec![0.0; n];
    let mut prior = 0usize;
    let add_prior = |p: usize, penalty: &mut [f64], candidate: &[bool], column: &mut [f64]| {
        kernel.column_into(store, p, column);
        for c in 0..n {
            if candidate[c] {
                penalty[c] += column[c];
            }
        }
    };
    if !ignore_pool {
        for &l in pool.indices() {
            add_prior(l, &mut penalty, &candidate, &mut column);
            prior += 1;
        }
    }
    let mut indices = Vec::with_capacity(budget);
    let mut gains = Vec::with_capacity(budget);
    for _ in 0..budget {
        let scale = 1.0 / (prior + 1) as f64;
        let mut best: Option<(f64, usize)> = None;
        for c in (0..n).filter(|&c| candidate[c]) {
            let score = reward[c] - scale * penalty[c];
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, c));
            }
        }
        let (score, pick) = best.expect("budget checked against unlabeled count");
        candidate[pick] = false;
        indices.push(pick);
        gains.push(score);
        add_prior(pick, &mut penalty, &candidate, &mut column);
        prior += 1;
    }
    Ok(SelectionBatch {
        indices,
        gains: Some(gains),
    })
}

/// Symmetric radius graph `{(i, j) : ||x_i - x_j|| <= delta}`, self loops included.
fn radius_graph(store: &FeatureStore, delta: f64) -> Vec<Vec<u32>> {
    let n = store.n_samples();
    let mut adj: Vec<Vec<u32>> = (0..n).map(|i| vec![i as u32]).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if store.dist(i, j) <= delta {
                adj[i].push(j as u32);
                adj[j].push(i as u32);
            }
        }
    }
    adj
}

/// ProbCover on an explicit radius graph: repeatedly take the candidate with
/// the most still-uncovered neighbors, then mark its neighborhood covered.
pub fn select_probcover_graph(
    store: &FeatureStore,
    pool: &LabeledPool,
    budget: usize,
    delta: f64,
) -> Result<SelectionBatch> {
    check_budget(store, pool, budget)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    let n = store.n_samples();
    let adj = radius_graph(store, delta);
    let mut covered = vec![false; n];
    let mut uncovered_nbrs: Vec<usize> = adj.iter().map(Vec::len).collect();
    let cover = |center: usize, covered: &mut [bool], counts: &mut [usize]| {
        for &u in &adj[center] {
            let u = u as usize;
            if !covered[u] {
                covered[u] = true;
                for &v in &adj[u] {
                    counts[v as usize] -= 1;
                }
            }
        }
    };
    for &l in pool.indices() {
        cover(l, &mut covered, &mut uncovered_nbrs);
    }
    let mut taken: Vec<bool> = (0..n).map(|i| pool.contains(i)).collect();
    let mut indices = Vec::with_capacity(budget);
    let mut gains = Vec::with_capacity(budget);
    for _ in 0..budget {
        let mut best: Option<usize> = None;
        for c in (0..n).filter(|&c| !taken[c]) {
            if best.is_none_or(|b| uncovered_nbrs[c] > uncovered_nbrs[b]) {
                best = Some(c);
            }
        }
        let pick = best.expect("budget checked against unlabeled count");
        gains.push(uncovered_nbrs[pick] as f64 / n as f64);
        taken[pick] = true;
        indices.push(pick);
        cover(pick, &mut covered, &mut uncovered_nbrs);
    }
    Ok(SelectionBatch {
        indices,
        gains: Some(gains),
    })
}

/// k-center greedy: repeatedly take the candidate farthest from everything
/// labeled or picked so far. With an empty pool the first pick is random.
pub fn select_coreset(
    store: &FeatureStore,
    pool: &LabeledPool,
    budget: usize,
    seed: u64,
) -> Result<SelectionBatch> {
    check_budget(store, pool, budget)?;
    let (indices, _) = coreset_picks(store, pool, budget, seed);
    Ok(SelectionBatch {
        indices,
        gains: None,
    })
}

/// Returns the picks and the final squared min-distance state.
fn coreset_picks(store: &FeatureStore, pool: &LabeledPool, budget: usize, seed: u64) -> (Vec<usize>, Vec<f64>) {
    let n = store.n_samples();
    let mut min_sq = vec![f64::INFINITY; n];
    let mut taken: Vec<bool> = (0..n).map(|i| pool.contains(i)).collect();
    let absorb = |p: usize, min_sq: &mut [f64]| {
        for (i, m) in min_sq.iter_mut().enumerate() {
            let d = store.sq_dist(i, p);
            if d < *m {
                *m = d;
            }
        }
    };
    for &l in pool.indices() {
        absorb(l, &mut min_sq);
    }
    let mut picks = Vec::with_capacity(budget);
    if pool.is_empty() && budget > 0 {
        let first = seeded(seed).random_range(0..n);
        taken[first] = true;
        picks.push(first);
        absorb(first, &mut min_sq);
    }
    while picks.len() < budget {
        let mut best: Option<usize> = None;
        for c in (0..n).filter(|&c| !taken[c]) {
            if best.is_none_or(|b| min_sq[c] > min_sq[b]) {
                best = Some(c);
            }
        }
        let pick = best.expect("budget checked against unlabeled count");
        taken[pick] = true;
        picks.push(pick);
        absorb(pick, &mut min_sq);
    }
    (picks, min_sq)
}

/// Typiclust: k-means with `min(|L| + B, cluster_cap, N)` clusters, then the
/// most typical unlabeled point of each of the largest clusters without a
/// labeled member. When those run out, picks continue round-robin over
/// uncovered then covered clusters (each ordered by size) until `budget`
/// points are chosen.
pub fn select_typiclust(
    store: &FeatureStore,
    pool: &LabeledPool,
    budget: usize,
    seed: u64,
    m: usize,
    cluster_cap: usize,
) -> Result<SelectionBatch> {
    check_budget(store, pool, budget)?;
    if budget == 0 {
        return Ok(SelectionBatch::default());
    }
    if cluster_cap == 0 || m == 0 {
        return Err(Error::Config("cluster cap and m must be positive".into()));
    }
    let n = store.n_samples();
    let k = (pool.len() + budget).min(cluster_cap).min(n);
    let clusters = kmeans_default(store, k, seed)?;
    let mut members = vec![Vec::new(); k];
    for (i, &a) in clusters.assignments.iter().enumerate() {
        members[a].push(i);
    }
    let covered: Vec<bool> = members
        .iter()
        .map(|ms| ms.iter().any(|&i| pool.contains(i)))
        .collect();
    let mut order: Vec<usize> = (0..k).filter(|&c| !members[c].is_empty()).collect();
    order.sort_by_key(|&c| (covered[c], std::cmp::Reverse(members[c].len()), c));

    // Per cluster: unlabeled members by typicality (desc), filled on first visit.
    let mut ranked: Vec<Option<std::vec::IntoIter<usize>>> = vec![None; k];
    let mut indices = Vec::with_capacity(budget);
    while indices.len() < budget {
        let before = indices.len();
        for &c in &order {
            if indices.len() == budget {
                break;
            }
            let queue = ranked[c].get_or_insert_with(|| {
                let scores = typicality_within(store, &members[c], m);
                let mut cand: Vec<(f64, usize)> = members[c]
                    .iter()
                    .zip(scores)
                    .filter(|(&i, _)| !pool.contains(i))
                    .map(|(&i, s)| (s, i))
                    .collect();
                cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                cand.into_iter().map(|(_, i)| i).collect::<Vec<_>>().into_iter()
            });
            if let Some(i) = queue.next() {
                indices.push(i);
            }
        }
        if indices.len() == before {
            return Err(Error::State("typiclust ran out of unlabeled points".into()));
        }
    }
    Ok(SelectionBatch {
        indices,
        gains: None,
    })
}

pub fn select_uncertain(
    probs: &ProbMatrix,
    pool: &LabeledPool,
    budget: usize,
    mode: UncertaintyMode,
) -> Result<SelectionBatch> {
    if probs.n_rows() != pool.n_total() {
        return Err(Error::Data(format!(
            "probability matrix has {} rows for {} samples",
            probs.n_rows(),
            pool.n_total()
        )));
    }
    if budget > pool.n_unlabeled() {
        return Err(Error::Config(format!(
            "budget {budget} exceeds the {} unlabeled samples",
            pool.n_unlabeled()
        )));
    }
    let mut scored: Vec<(f64, usize)> = pool
        .unlabeled()
        .into_iter()
        .map(|i| (mode.score(probs.row(i)), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(SelectionBatch {
        indices: scored.into_iter().take(budget).map(|(_, i)| i).collect(),
        gains: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Random,
    MaxHerding,
    KernelHerding,
    ProbCover,
    Coreset,
    Typiclust,
    Uncertainty,
    Entropy,
    Margin,
    KMedoids,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Random,
        Method::MaxHerding,
        Method::KernelHerding,
        Method::ProbCover,
        Method::Coreset,
        Method::Typiclust,
        Method::Uncertainty,
        Method::Entropy,
        Method::Margin,
        Method::KMedoids,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::MaxHerding => "maxherding",
            Method::KernelHerding => "kernelherding",
            Method::ProbCover => "probcover",
            Method::Coreset => "coreset",
            Method::Typiclust => "typiclust",
            Method::Uncertainty => "uncertainty",
            Method::Entropy => "entropy",
            Method::Margin => "margin",
            Method::KMedoids => "kmedoids",
        }
    }

    pub fn uncertainty_mode(self) -> Option<UncertaintyMode> {
        match self {
            Method::Uncertainty => Some(UncertaintyMode::LeastConfident),
            Method::Entropy => Some(UncertaintyMode::Entropy),
            Method::Margin => Some(UncertaintyMode::Margin),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Everything a selector may need besides the data and the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorConfig {
    pub method: Method,
    pub kernel: Kernel,
    /// Radius for ProbCover.
    pub delta: f64,
    pub seed: u64,
    pub typicality_m: usize,
    pub cluster_cap: usize,
    pub herding_ignore_pool: bool,
    pub kmedoids: KMedoidsOptions,
}

impl SelectorConfig {
    pub fn new(method: Method) -> Self {
        SelectorConfig {
            method,
            kernel: Kernel::default(),
            delta: 1.0,
            seed: 0,
            typicality_m: DEFAULT_TYPICALITY_M,
            cluster_cap: DEFAULT_CLUSTER_CAP,
            herding_ignore_pool: false,
            kmedoids: KMedoidsOptions::default(),
        }
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Label for reports, e.g. `maxherding` or `probcover(delta=0.5)`.
    pub fn describe(&self) -> String {
        match self.method {
            Method::ProbCover => format!("probcover(delta={})", self.delta),
            Method::MaxHerding | Method::KernelHerding | Method::KMedoids
                if self.kernel != Kernel::default() =>
            {
                format!(
                    "{}({}:{})",
                    self.method,
                    self.kernel.family(),
                    self.kernel.lengthscale()
                )
            }
            m => m.to_string(),
        }
    }
}

/// Dispatches to the configured selector. Uncertainty methods need `probs`.
pub fn select(
    store: &FeatureStore,
    pool: &LabeledPool,
    budget: usize,
    config: &SelectorConfig,
    probs: Option<&ProbMatrix>,
) -> Result<SelectionBatch> {
    match config.method {
        Method::Random => select_random(store, pool, budget, config.seed),
        Method::MaxHerding => select_maxherding(store, pool, budget, &config.kernel),
        Method::KernelHerding => {
            select_kernelherding(store, pool, budget, &config.kernel, config.herding_ignore_pool)
        }
        Method::ProbCover => select_probcover_graph(store, pool, budget, config.delta),
        Method::Coreset => select_coreset(store, pool, budget, config.seed),
        Method::Typiclust => select_typiclust(
            store,
            pool,
            budget,
            config.seed,
            config.typicality_m,
            config.cluster_cap,
        ),
        Method::KMedoids => {
            select_kmedoids(store, pool, budget, &config.kernel, config.seed, &config.kmedoids)
        }
        Method::Uncertainty | Method::Entropy | Method::Margin => {
            let probs = probs.ok_or_else(|| {
                Error::Config(format!("{} needs a probability matrix", config.method))
            })?;
            check_budget(store, pool, budget)?;
            select_uncertain(probs, pool, budget, config.method.uncertainty_mode().unwrap())
        }
    }
}

/// Top-hat MaxHerding with radius `delta`, for comparison with ProbCover.
pub fn select_maxherding_tophat(
    store: &FeatureStore,
    pool: &LabeledPool,
    budget: usize,
    delta: f64,
) -> Result<SelectionBatch> {
    select_maxherding(store, pool, budget, &Kernel::new(KernelFamily::TopHat, delta)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::coverage_of;
    use crate::features::{generate_mixture, MixtureComponent, MixtureSpec};

    fn random_store(n: usize, d: usize, seed: u64) -> FeatureStore {
        let mut rng = seeded(seed);
        FeatureStore::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn line(xs: &[f64]) -> FeatureStore {
        FeatureStore::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    /// Evaluates every candidate from scratch at every step.
    fn naive_maxherding(store: &FeatureStore, labeled: &[usize], budget: usize, k: &Kernel) -> Vec<usize> {
        let mut set = labeled.to_vec();
        let mut picks = Vec::new();
        for _ in 0..budget {
            let base = coverage_of(store, k, &set);
            let mut best: Option<(f64, usize)> = None;
            for c in (0..store.n_samples()).filter(|c| !set.contains(c)) {
                let mut with = set.clone();
                with.push(c);
                let g = coverage_of(store, k, &with) - base;
                if best.is_none_or(|(b, _)| g > b) {
                    best = Some((g, c));
                }
            }
            let (_, c) = best.unwrap();
            set.push(c);
            picks.push(c);
        }
        picks
    }

    #[test]
    fn random_examples() {
        let s = random_store(20, 2, 0);
        let pool = LabeledPool::from_indices(20, &[3, 4, 5]).unwrap();
        let all = select_random(&s, &pool, 17, 9).unwrap();
        let mut sorted = all.indices.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, pool.unlabeled());
        assert_eq!(select_random(&s, &pool, 5, 1).unwrap(), select_random(&s, &pool, 5, 1).unwrap());
        assert!(select_random(&s, &pool, 0, 1).unwrap().indices.is_empty());
        assert!(matches!(select_random(&s, &pool, 18, 1), Err(Error::Config(_))));
    }

    #[test]
    fn maxherding_single_candidate() {
        let s = line(&[0.0, 1.0, 2.0]);
        let pool = LabeledPool::from_indices(3, &[0, 2]).unwrap();
        let b = select_maxherding(&s, &pool, 1, &Kernel::default()).unwrap();
        assert_eq!(b.indices, vec![1]);
    }

    #[test]
    fn maxherding_matches_naive_greedy() {
        for seed in 0..6 {
            let s = random_store(60, 3, seed);
            let k = Kernel::gaussian(0.5).unwrap();
            let labeled = if seed % 2 == 0 { vec![] } else { vec![7, 30] };
            let pool = LabeledPool::from_indices(60, &labeled).unwrap();
            let batch = select_maxherding(&s, &pool, 8, &k).unwrap();
            assert_eq!(batch.indices, naive_maxherding(&s, &labeled, 8, &k));
            let gains = batch.gains.unwrap();
            assert!(gains.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }

    #[test]
    fn kernelherding_first_pick_is_max_reward() {
        let s = random_store(40, 2, 3);
        let k = Kernel::gaussian(0.7).unwrap();
        let pool = LabeledPool::new(40);
        let b = select_kernelherding(&s, &pool, 1, &k, false).unwrap();
        let reward = |c| (0..40).map(|n| k.between(&s, n, c)).sum::<f64>() / 40.0;
        let best = (0..40).fold(0, |b, c| if reward(c) > reward(b) { c } else { b });
        assert_eq!(b.indices, vec![best]);
    }

    #[test]
    fn kernelherding_identical_points() {
        let s = FeatureStore::from_rows(&vec![vec![0.5, 0.5]; 6]).unwrap();
        let pool = LabeledPool::new(6);
        let b = select_kernelherding(&s, &pool, 3, &Kernel::default(), false).unwrap();
        assert_eq!(b.indices, vec![0, 1, 2]);
        // reward 1, penalty t / (t + 1) after t picks.
        let g = b.gains.unwrap();
        for (t, v) in g.iter().enumerate() {
            assert!((v - (1.0 - t as f64 / (t as f64 + 1.0))).abs() < 1e-15);
        }
    }

    #[test]
    fn kernelherding_pool_enters_penalty_unless_ignored() {
        let s = line(&[0.0, 0.05, 0.1, 3.0, 3.05]);
        let pool = LabeledPool::from_indices(5, &[1]).unwrap();
        let k = Kernel::gaussian(1.0).unwrap();
        let with_pool = select_kernelherding(&s, &pool, 1, &k, false).unwrap();
        let without = select_kernelherding(&s, &pool, 1, &k, true).unwrap();
        assert!(with_pool.indices[0] >= 3);
        assert!(without.indices[0] < 3);
    }

    #[test]
    fn probcover_degenerate_radii() {
        let s = line(&[0.0, 1.0, 2.5, 4.5, 7.0]);
        let pool = LabeledPool::from_indices(5, &[1]).unwrap();
        let small = select_probcover_graph(&s, &pool, 3, 0.5).unwrap();
        assert_eq!(small.indices, vec![0, 2, 3]);
        let pool = LabeledPool::new(5);
        let big = select_probcover_graph(&s, &pool, 3, 100.0).unwrap();
        assert_eq!(big.indices, vec![0, 1, 2]);
        assert_eq!(big.gains.unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn probcover_equals_tophat_maxherding() {
        for seed in 0..5 {
            let s = random_store(150, 2, 100 + seed);
            let pool = LabeledPool::from_indices(150, &[(seed * 7) as usize]).unwrap();
            for delta in [0.05, 0.2, 0.4, 1.0] {
                let a = select_probcover_graph(&s, &pool, 12, delta).unwrap();
                let b = select_maxherding_tophat(&s, &pool, 12, delta).unwrap();
                assert_eq!(a.indices, b.indices, "seed {seed} delta {delta}");
                assert_eq!(a.gains, b.gains);
            }
        }
    }

    #[test]
    fn coreset_examples() {
        let s = line(&[0.0, 1.0, 10.0]);
        let pool = LabeledPool::from_indices(3, &[0]).unwrap();
        assert_eq!(select_coreset(&s, &pool, 1, 0).unwrap().indices, vec![2]);
        let pool = LabeledPool::from_indices(3, &[0, 2]).unwrap();
        assert_eq!(select_coreset(&s, &pool, 1, 0).unwrap().indices, vec![1]);
    }

    #[test]
    fn coreset_state_matches_naive() {
        let s = random_store(100, 3, 8);
        let pool = LabeledPool::from_indices(100, &[5, 50]).unwrap();
        for budget in 1..8 {
            let (picks, min_sq) = coreset_picks(&s, &pool, budget, 0);
            let centers: Vec<usize> = pool.indices().iter().copied().chain(picks.iter().copied()).collect();
            for i in 0..100 {
                let naive = centers.iter().map(|&c| s.sq_dist(i, c)).fold(f64::INFINITY, f64::min);
                assert_eq!(min_sq[i], naive);
            }
            // Each pick was the farthest candidate at its time.
            let last = *picks.last().unwrap();
            let (before, _) = coreset_picks(&s, &pool, budget - 1, 0);
            let prev_centers: Vec<usize> = pool.indices().iter().copied().chain(before).collect();
            let dist_to = |i: usize| prev_centers.iter().map(|&c| s.sq_dist(i, c)).fold(f64::INFINITY, f64::min);
            let far = (0..100).filter(|i| !prev_centers.contains(i)).map(dist_to).fold(0.0, f64::max);
            assert_eq!(dist_to(last), far);
        }
    }

    fn blobs(centers: &[[f64; 2]], per: usize, seed: u64) -> FeatureStore {
        let comps = centers
            .iter()
            .map(|c| MixtureComponent { mean: c.to_vec(), stddev: 0.05, weight: 1.0 / centers.len() as f64 })
            .collect();
        generate_mixture(&MixtureSpec { components: comps, n_samples: per * centers.len(), seed }).unwrap()
    }

    #[test]
    fn typiclust_one_pick_per_blob() {
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let s = blobs(&centers, 10, 4);
        let labels = s.labels().unwrap().to_vec();
        let pool = LabeledPool::new(s.n_samples());
        let batch = select_typiclust(&s, &pool, 3, 1, 20, 500).unwrap();
        let mut seen: Vec<u32> = batch.indices.iter().map(|&i| labels[i]).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2]);
        for &pick in &batch.indices {
            let blob: Vec<usize> = (0..s.n_samples()).filter(|&i| labels[i] == labels[pick]).collect();
            let scores = typicality_within(&s, &blob, 20);
            let best = scores.iter().copied().fold(f64::MIN, f64::max);
            let pos = blob.iter().position(|&i| i == pick).unwrap();
            assert_eq!(scores[pos], best);
        }
    }

    #[test]
    fn typiclust_cap_and_fill() {
        let s = random_store(30, 2, 6);
        let pool = LabeledPool::new(30);
        let b = select_typiclust(&s, &pool, 5, 0, 3, 1).unwrap();
        let all: Vec<usize> = (0..30).collect();
        let scores = typicality_within(&s, &all, 3);
        let mut ranked: Vec<usize> = all.clone();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        assert_eq!(b.indices, ranked[..5].to_vec());

        // Every cluster holds a labeled point: the fill rule still returns B picks.
        let centers = [[0.0, 0.0], [10.0, 0.0]];
        let s = blobs(&centers, 10, 2);
        let labels = s.labels().unwrap();
        let first0 = labels.iter().position(|&l| l == 0).unwrap();
        let first1 = labels.iter().position(|&l| l == 1).unwrap();
        let pool = LabeledPool::from_indices(20, &[first0, first1]).unwrap();
        let b = select_typiclust(&s, &pool, 1, 0, 5, 500).unwrap();
        assert_eq!(b.indices.len(), 1);
        assert!(!pool.contains(b.indices[0]));
        let b = select_typiclust(&s, &pool, 18, 0, 5, 500).unwrap();
        let mut sorted = b.indices.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, pool.unlabeled());
    }

    #[test]
    fn uncertainty_scores() {
        let one_hot = [0.0, 1.0, 0.0];
        let uniform = [1.0 / 3.0; 3];
        assert_eq!(UncertaintyMode::Entropy.score(&one_hot), 0.0);
        assert_eq!(UncertaintyMode::Margin.score(&one_hot), -1.0);
        assert_eq!(UncertaintyMode::LeastConfident.score(&one_hot), -1.0);
        assert!((UncertaintyMode::Entropy.score(&uniform) - 3f64.ln()).abs() < 1e-15);
        assert_eq!(UncertaintyMode::Margin.score(&uniform), 0.0);

        let probs = ProbMatrix::new(3, 3, [one_hot, uniform, [0.2, 0.5, 0.3]].concat()).unwrap();
        let pool = LabeledPool::new(3);
        for mode in [UncertaintyMode::LeastConfident, UncertaintyMode::Entropy, UncertaintyMode::Margin] {
            let b = select_uncertain(&probs, &pool, 3, mode).unwrap();
            assert_eq!(b.indices[0], 1);
            assert_eq!(b.indices[2], 0);
        }
    }

    #[test]
    fn uncertainty_two_rows() {
        let probs = ProbMatrix::new(2, 2, vec![0.6, 0.4, 0.9, 0.1]).unwrap();
        let pool = LabeledPool::new(2);
        for mode in [UncertaintyMode::LeastConfident, UncertaintyMode::Entropy, UncertaintyMode::Margin] {
            assert_eq!(select_uncertain(&probs, &pool, 1, mode).unwrap().indices, vec![0]);
        }
        assert!(matches!(ProbMatrix::new(1, 2, vec![0.6, 0.6]), Err(Error::Data(_))));
        assert!(matches!(ProbMatrix::new(1, 2, vec![1.5, -0.5]), Err(Error::Data(_))));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("badge".parse::<Method>().is_err());
    }
}
