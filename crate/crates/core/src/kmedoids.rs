//! Kernel k-medoids with the labeled set frozen as medoids.
//!
//! Maximizing coverage over a batch is the k-medoids problem on the
//! dissimilarity `2 - 2 k(x, x')` when `k` has a constant diagonal, so PAM
//! style swaps between a free medoid and a non-medoid improve the same
//! objective the greedy selector climbs. Labeled points stay medoids
//! throughout; only the batch moves.

use rand::seq::index;

use crate::error::{check_index, Error, Result};
use crate::features::FeatureStore;
use crate::kernels::Kernel;
use crate::rng::{hash64, seeded};
use crate::selectors::{select_maxherding, LabeledPool, SelectionBatch};

/// Swaps must raise the objective by more than this to be accepted.
pub const MIN_IMPROVEMENT: f64 = 1e-12;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Plain,
    Frozen,
    Free(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KMedoidsOptions {
    /// Start restart 0 from the greedy batch instead of a random one.
    pub warm_start: bool,
    /// Defaults to `100 * budget`.
    pub max_swaps: Option<usize>,
    /// Independent runs; the best final objective wins. 0 is treated as 1.
    pub restarts: usize,
}

/// Medoid configuration with per-point caches of the best and second-best
/// similarity to any medoid.
#[derive(Debug, Clone)]
pub struct MedoidState<'a> {
    store: &'a FeatureStore,
    kernel: Kernel,
    frozen: Vec<usize>,
    free: Vec<usize>,
    role: Vec<Role>,
    near: Vec<f64>,
    near_id: Vec<usize>,
    second: Vec<f64>,
    second_id: Vec<usize>,
    objective: f64,
}

impl<'a> MedoidState<'a> {
    pub fn new(store: &'a FeatureStore, kernel: Kernel, frozen: &[usize], free: &[usize]) -> Result<Self> {
        let n = store.n_samples();
        let mut role = vec![Role::Plain; n];
        for &f in frozen {
            check_index(f, n)?;
            if role[f] != Role::Plain {
                return Err(Error::State(format!("index {f} is frozen twice")));
            }
            role[f] = Role::Frozen;
        }
        for (slot, &m) in free.iter().enumerate() {
            check_index(m, n)?;
            if role[m] != Role::Plain {
                return Err(Error::State(format!("medoid {m} is already a medoid")));
            }
            role[m] = Role::Free(slot);
        }
        let mut state = MedoidState {
            store,
            kernel,
            frozen: frozen.to_vec(),
            free: free.to_vec(),
            role,
            near: vec![0.0; n],
            near_id: vec![NONE; n],
            second: vec![0.0; n],
            second_id: vec![NONE; n],
            objective: 0.0,
        };
        for p in 0..n {
            state.rescan(p);
        }
        state.objective = state.near.iter().sum::<f64>() / n as f64;
        Ok(state)
    }

    pub fn frozen(&self) -> &[usize] {
        &self.frozen
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    /// Coverage of `frozen ∪ free`.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    fn medoids(&self) -> impl Iterator<Item = usize> + '_ {
        self.frozen.iter().chain(&self.free).copied()
    }

    fn rescan(&mut self, p: usize) {
        let (mut best, mut best_id, mut sec, mut sec_id) = (0.0, NONE, 0.0, NONE);
        for m in self.medoids() {
            let s = self.kernel.between(self.store, p, m);
            if best_id == NONE || s > best {
                (sec, sec_id) = (best, best_id);
                (best, best_id) = (s, m);
            } else if sec_id == NONE || s > sec {
                (sec, sec_id) = (s, m);
            }
        }
        self.near[p] = best;
        self.near_id[p] = best_id;
        self.second[p] = sec;
        self.second_id[p] = sec_id;
    }

    fn check_swap(&self, out_medoid: usize, in_candidate: usize) -> Result<usize> {
        let n = self.store.n_samples();
        check_index(out_medoid, n)?;
        check_index(in_candidate, n)?;
        let Role::Free(slot) = self.role[out_medoid] else {
            return Err(Error::State(format!("{out_medoid} is not a free medoid")));
        };
        if self.role[in_candidate] != Role::Plain {
            return Err(Error::State(format!("{in_candidate} is already a medoid")));
        }
        Ok(slot)
    }

    /// Exact change in the objective if `out_medoid` is replaced by `in_candidate`.
    pub fn swap_delta(&self, out_medoid: usize, in_candidate: usize) -> Result<f64> {
        self.check_swap(out_medoid, in_candidate)?;
        let mut sum = 0.0;
        for p in 0..self.store.n_samples() {
            let k = self.kernel.between(self.store, p, in_candidate);
            let rest = if self.near_id[p] == out_medoid { self.second[p] } else { self.near[p] };
            sum += k.max(rest) - self.near[p];
        }
        Ok(sum / self.store.n_samples() as f64)
    }

    /// Deltas of swapping `candidate` in for every free slot, from one
    /// kernel column.
    fn slot_deltas(&self, column: &[f64], out: &mut [f64]) {
        let mut shared = 0.0;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (p, &k) in column.iter().enumerate() {
            let base = (k - self.near[p]).max(0.0);
            shared += base;
            if let Some(Role::Free(slot)) = self.role.get(self.near_id[p]).copied() {
                out[slot] += k.max(self.second[p]) - self.near[p] - base;
            }
        }
        let n = column.len() as f64;
        out.iter_mut().for_each(|o| *o = (*o + shared) / n);
    }

    /// Best strictly improving swap as `(out_medoid, in_candidate, delta)`;
    /// ties go to the lowest candidate, then the lowest slot.
    pub fn best_swap(&self) -> Option<(usize, usize, f64)> {
        let n = self.store.n_samples();
        let mut column = vec![0.0; n];
        let mut deltas = vec![0.0; self.free.len()];
        let mut best: Option<(usize, usize, f64)> = None;
        for c in (0..n).filter(|&c| self.role[c] == Role::Plain) {
            self.kernel.column_into(self.store, c, &mut column);
            self.slot_deltas(&column, &mut deltas);
            for (slot, &d) in deltas.iter().enumerate() {
                if d > MIN_IMPROVEMENT && best.is_none_or(|(_, _, b)| d > b) {
                    best = Some((self.free[slot], c, d));
                }
            }
        }
        best
    }

    /// Performs the swap and returns the new objective.
    pub fn apply_swap(&mut self, out_medoid: usize, in_candidate: usize) -> Result<f64> {
        let slot = self.check_swap(out_medoid, in_candidate)?;
        self.free[slot] = in_candidate;
        self.role[out_medoid] = Role::Plain;
        self.role[in_candidate] = Role::Free(slot);
        for p in 0..self.store.n_samples() {
            if self.near_id[p] == out_medoid || self.second_id[p] == out_medoid {
                self.rescan(p);
                continue;
            }
            let k = self.kernel.between(self.store, p, in_candidate);
            if k > self.near[p] || self.near_id[p] == NONE {
                self.second[p] = self.near[p];
                self.second_id[p] = self.near_id[p];
                self.near[p] = k;
                self.near_id[p] = in_candidate;
            } else if k > self.second[p] || self.second_id[p] == NONE {
                self.second[p] = k;
                self.second_id[p] = in_candidate;
            }
        }
        self.objective = self.near.iter().sum::<f64>() / self.store.n_samples() as f64;
        Ok(self.objective)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMedoidsFit {
    pub free: Vec<usize>,
    pub objective: f64,
    /// Objective after initialization and after every accepted swap, for
    /// the winning restart.
    pub trace: Vec<f64>,
    pub swaps: usize,
    pub restart: usize,
}

pub fn fit_kmedoids(
    store: &FeatureStore,
    pool: &LabeledPool,
    budget: usize,
    kernel: &Kernel,
    seed: u64,
    options: &KMedoidsOptions,
) -> Result<KMedoidsFit> {
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
    let max_swaps = options.max_swaps.unwrap_or(100 * budget);
    let unlabeled = pool.unlabeled();
    let mut best: Option<KMedoidsFit> = None;
    for restart in 0..options.restarts.max(1) {
        let init = if restart == 0 && options.warm_start {
            select_maxherding(store, pool, budget, kernel)?.indices
        } else {
            let mut rng = seeded(hash64(seed, restart as u64));
            index::sample(&mut rng, unlabeled.len(), budget)
                .into_iter()
                .map(|k| unlabeled[k])
                .collect()
        };
        let mut state = MedoidState::new(store, *kernel, pool.indices(), &init)?;
        let mut trace = vec![state.objective()];
        while trace.len() <= max_swaps {
            let Some((out, cand, _)) = state.best_swap() else { break };
            trace.push(state.apply_swap(out, cand)?);
        }
        let fit = KMedoidsFit {
            free: state.free().to_vec(),
            objective: state.objective(),
            swaps: trace.len() - 1,
            trace,
            restart,
        };
        if best.as_ref().is_none_or(|b| fit.objective > b.objective) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn select_kmedoids(
    store: &FeatureStore,
    pool: &LabeledPool,
    budget: usize,
    kernel: &Kernel,
    seed: u64,
    options: &KMedoidsOptions,
) -> Result<SelectionBatch> {
    let fit = fit_kmedoids(store, pool, budget, kernel, seed, options)?;
    Ok(SelectionBatch {
        indices: fit.free,
        gains: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::coverage_of;
    use rand::Rng as _;

    fn random_store(n: usize, d: usize, seed: u64) -> FeatureStore {
        let mut rng = seeded(seed);
        FeatureStore::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn swapped(free: &[usize], out: usize, cand: usize) -> Vec<usize> {
        free.iter().map(|&m| if m == out { cand } else { m }).collect()
    }

    #[test]
    fn every_swap_delta_matches_recomputation() {
        let s = random_store(40, 3, 21);
        let k = Kernel::gaussian(0.6).unwrap();
        let frozen = [0, 13];
        let free = [5, 22, 31];
        let state = MedoidState::new(&s, k, &frozen, &free).unwrap();
        let all: Vec<usize> = frozen.iter().chain(&free).copied().collect();
        let before = coverage_of(&s, &k, &all);
        assert!((state.objective() - before).abs() < 1e-12);
        let mut checked = 0;
        for &out in &free {
            for c in (0..40).filter(|c| !all.contains(c)) {
                let after: Vec<usize> = frozen.iter().copied().chain(swapped(&free, out, c)).collect();
                let want = coverage_of(&s, &k, &after) - before;
                let got = state.swap_delta(out, c).unwrap();
                assert!((got - want).abs() < 1e-12, "{out}->{c}: {got} vs {want}");
                checked += 1;
            }
        }
        assert_eq!(checked, 3 * 35);
    }

    #[test]
    fn slot_deltas_agree_with_swap_delta() {
        let s = random_store(30, 2, 4);
        let k = Kernel::gaussian(0.4).unwrap();
        let state = MedoidState::new(&s, k, &[1], &[7, 8, 20]).unwrap();
        let mut deltas = vec![0.0; 3];
        for c in (0..30).filter(|c| ![1, 7, 8, 20].contains(c)) {
            state.slot_deltas(&k.column(&s, c), &mut deltas);
            for (slot, &m) in [7, 8, 20].iter().enumerate() {
                assert!((deltas[slot] - state.swap_delta(m, c).unwrap()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn illegal_swaps() {
        let s = random_store(10, 2, 0);
        let state = MedoidState::new(&s, Kernel::default(), &[0], &[3, 4]).unwrap();
        assert!(matches!(state.swap_delta(3, 3), Err(Error::State(_))));
        assert!(matches!(state.swap_delta(0, 5), Err(Error::State(_))));
        assert!(matches!(state.swap_delta(3, 0), Err(Error::State(_))));
        assert!(matches!(state.swap_delta(3, 4), Err(Error::State(_))));
        assert!(matches!(state.swap_delta(3, 10), Err(Error::Index { .. })));
        assert!(MedoidState::new(&s, Kernel::default(), &[0], &[0]).is_err());
    }

    #[test]
    fn duplicate_of_a_medoid_adds_nothing() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0], vec![3.0, 1.0], vec![2.0, 2.0]];
        let s = FeatureStore::from_rows(&rows).unwrap();
        let state = MedoidState::new(&s, Kernel::default(), &[0], &[3]).unwrap();
        assert!(state.swap_delta(3, 2).unwrap() <= 0.0);
    }

    #[test]
    fn applied_swaps_keep_caches_exact() {
        let s = random_store(50, 2, 9);
        let k = Kernel::gaussian(0.3).unwrap();
        let frozen = [2, 40];
        let mut state = MedoidState::new(&s, k, &frozen, &[10, 11, 12, 13]).unwrap();
        let mut rng = seeded(3);
        for _ in 0..40 {
            let out = state.free()[rng.random_range(0..4)];
            let cand = loop {
                let c = rng.random_range(0..50);
                if !frozen.contains(&c) && !state.free().contains(&c) {
                    break c;
                }
            };
            let predicted = state.objective() + state.swap_delta(out, cand).unwrap();
            state.apply_swap(out, cand).unwrap();
            let all: Vec<usize> = frozen.iter().chain(state.free()).copied().collect();
            assert!((state.objective() - coverage_of(&s, &k, &all)).abs() < 1e-12);
            assert!((state.objective() - predicted).abs() < 1e-12);
            assert_eq!(state.frozen(), &frozen);
        }
    }

    #[test]
    fn full_budget_covers_everything() {
        let s = random_store(12, 2, 5);
        let pool = LabeledPool::from_indices(12, &[0, 6]).unwrap();
        let fit = fit_kmedoids(&s, &pool, 10, &Kernel::default(), 1, &KMedoidsOptions::default()).unwrap();
        assert!((fit.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_swaps_returns_initialization() {
        let s = random_store(30, 2, 5);
        let pool = LabeledPool::new(30);
        let opts = KMedoidsOptions { max_swaps: Some(0), ..Default::default() };
        let fit = fit_kmedoids(&s, &pool, 4, &Kernel::default(), 8, &opts).unwrap();
        assert_eq!(fit.swaps, 0);
        let mut rng = seeded(hash64(8, 0));
        let init: Vec<usize> = index::sample(&mut rng, 30, 4).into_iter().collect();
        assert_eq!(fit.free, init);

        let warm = KMedoidsOptions { warm_start: true, max_swaps: Some(0), restarts: 1 };
        let fit = fit_kmedoids(&s, &pool, 4, &Kernel::default(), 8, &warm).unwrap();
        assert_eq!(fit.free, select_maxherding(&s, &pool, 4, &Kernel::default()).unwrap().indices);
    }

    #[test]
    fn trace_is_monotone_and_warm_start_beats_greedy() {
        for seed in 0..4 {
            let s = random_store(80, 2, 30 + seed);
            let k = Kernel::gaussian(0.35).unwrap();
            let pool = LabeledPool::from_indices(80, &[3]).unwrap();
            let greedy = select_maxherding(&s, &pool, 6, &k).unwrap().indices;
            let mut with_pool = greedy.clone();
            with_pool.push(3);
            let greedy_obj = coverage_of(&s, &k, &with_pool);
            let opts = KMedoidsOptions { warm_start: true, max_swaps: None, restarts: 3 };
            let fit = fit_kmedoids(&s, &pool, 6, &k, seed, &opts).unwrap();
            assert!(fit.objective >= greedy_obj - 1e-12);
            assert!(fit.trace.windows(2).all(|w| w[1] > w[0]));
            assert!(!fit.free.contains(&3));
        }
    }
}
