//! Generalized coverage of a labeled set and the matching impurity estimate.
//!
//! `maxima[i]` holds `max_{l in L} k(x_i, x_l)` (0 for an empty `L`). Adding
//! a point costs one kernel column, O(N), and so does the marginal gain of a
//! candidate, which is what makes greedy selection O(N) per evaluated point.

use crate::error::{check_index, Error, Result};
use crate::features::FeatureStore;
use crate::kernels::{sq_euclidean, Kernel};

#[derive(Debug, Clone)]
pub struct CoverageState<'a> {
    store: &'a FeatureStore,
    kernel: Kernel,
    maxima: Vec<f64>,
    labeled: Vec<usize>,
    is_labeled: Vec<bool>,
}

impl<'a> CoverageState<'a> {
    pub fn new(store: &'a FeatureStore, kernel: Kernel) -> Self {
        let n = store.n_samples();
        CoverageState {
            store,
            kernel,
            maxima: vec![0.0; n],
            labeled: Vec::new(),
            is_labeled: vec![false; n],
        }
    }

    pub fn with_labeled(store: &'a FeatureStore, kernel: Kernel, labeled: &[usize]) -> Result<Self> {
        let mut state = Self::new(store, kernel);
        let mut column = vec![0.0; store.n_samples()];
        for &i in labeled {
            state.check_new(i)?;
            kernel.column_into(store, i, &mut column);
            state.absorb(i, &column);
        }
        Ok(state)
    }

    pub fn store(&self) -> &'a FeatureStore {
        self.store
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn maxima(&self) -> &[f64] {
        &self.maxima
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.is_labeled[i]
    }

    /// Monte Carlo estimate of the generalized coverage over the pool.
    pub fn coverage(&self) -> f64 {
        if self.maxima.is_empty() {
            return 0.0;
        }
        self.maxima.iter().sum::<f64>() / self.maxima.len() as f64
    }

    pub fn add_point(&mut self, index: usize) -> Result<()> {
        self.check_new(index)?;
        let column = self.kernel.column(self.store, index);
        self.absorb(index, &column);
        Ok(())
    }

    fn check_new(&self, index: usize) -> Result<()> {
        check_index(index, self.store.n_samples())?;
        if self.is_labeled[index] {
            return Err(Error::State(format!("index {index} is already labeled")));
        }
        Ok(())
    }

    /// Updates the maxima with a precomputed kernel column of `index`.
    pub(crate) fn absorb(&mut self, index: usize, column: &[f64]) {
        for (m, &k) in self.maxima.iter_mut().zip(column) {
            if k > *m {
                *m = k;
            }
        }
        self.labeled.push(index);
        self.is_labeled[index] = true;
    }

    /// Coverage improvement from adding `candidate`; zero for labeled points.
    pub fn marginal_gain(&self, candidate: usize) -> Result<f64> {
        check_index(candidate, self.store.n_samples())?;
        let column = self.kernel.column(self.store, candidate);
        Ok(self.gain_sum(&column) / self.maxima.len() as f64)
    }

    /// `sum_n max(column[n] - maxima[n], 0)`, not yet divided by N.
    #[inline]
    pub(crate) fn gain_sum(&self, column: &[f64]) -> f64 {
        self.maxima
            .iter()
            .zip(column)
            .map(|(&m, &k)| if k > m { k - m } else { 0.0 })
            .sum()
    }

    /// Gain sum computed straight from the rows, without a column buffer.
    #[inline]
    pub(crate) fn gain_sum_direct(&self, candidate: usize) -> f64 {
        let c = self.store.row(candidate);
        self.maxima
            .iter()
            .zip(self.store.rows())
            .map(|(&m, row)| {
                let k = self.kernel.similarity_sq(sq_euclidean(row, c));
                if k > m {
                    k - m
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// The max kernel `max(k(x_n, x~) - max_{l in L} k(x_n, x_l), 0)`.
    pub fn max_kernel(&self, n: usize, candidate: usize) -> f64 {
        (self.kernel.between(self.store, n, candidate) - self.maxima[n]).max(0.0)
    }

    /// Herding-style penalty of the max kernel: its sum over the labeled
    /// points, scaled by `1 / (|L| + 1)`. Vanishes identically whenever the
    /// kernel peaks on the diagonal.
    pub fn max_kernel_penalty(&self, candidate: usize) -> f64 {
        let total: f64 = self
            .labeled
            .iter()
            .map(|&l| self.max_kernel(l, candidate))
            .sum();
        total / (self.labeled.len() + 1) as f64
    }
}

/// Coverage of `set` computed from scratch, O(N |set|).
pub fn coverage_of(store: &FeatureStore, kernel: &Kernel, set: &[usize]) -> f64 {
    let n = store.n_samples();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .map(|i| {
            set.iter()
                .map(|&j| kernel.between(store, i, j))
                .fold(0.0, f64::max)
        })
        .sum();
    total / n as f64
}

/// For each point, the squared distance to its nearest differently-labeled
/// point. Errors when fewer than two classes are present.
pub fn nearest_foreign_sq_distances(store: &FeatureStore, labels: &[u32]) -> Result<Vec<f64>> {
    let n = store.n_samples();
    if labels.len() != n {
        return Err(Error::Data(format!("{} labels for {n} samples", labels.len())));
    }
    if labels.iter().all(|&l| Some(&l) == labels.first()) {
        return Err(Error::Domain(
            "impurity needs at least two distinct labels".into(),
        ));
    }
    let mut nearest = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] != labels[j] {
                let d = store.sq_dist(i, j);
                if d < nearest[i] {
                    nearest[i] = d;
                }
                if d < nearest[j] {
                    nearest[j] = d;
                }
            }
        }
    }
    Ok(nearest)
}

/// Mean over points of the largest similarity to any differently-labeled
/// point. Kernels are non-increasing in distance, so only the nearest
/// foreign point matters.
pub fn estimate_impurity(store: &FeatureStore, kernel: &Kernel, labels: &[u32]) -> Result<f64> {
    let nearest = nearest_foreign_sq_distances(store, labels)?;
    Ok(impurity_from_nearest(&nearest, kernel))
}

pub fn impurity_from_nearest(nearest_sq: &[f64], kernel: &Kernel) -> f64 {
    nearest_sq
        .iter()
        .map(|&d| kernel.similarity_sq(d))
        .sum::<f64>()
        / nearest_sq.len() as f64
}
