//! Lloyd k-means with k-means++ seeding, and m-NN typicality.

use rand::Rng as _;

use crate::error::{check_index, Error, Result};
use crate::features::FeatureStore;
use crate::kernels::sq_euclidean;
use crate::rng::seeded;

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-4;
/// Typicality reported when the m nearest neighbors all coincide with the point.
pub const TYPICALITY_SENTINEL: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `k x d`, row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after every assignment step, final one included.
    pub inertia_trace: Vec<f64>,
    k: usize,
    dim: usize,
}

impl KMeansResult {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn assignments_u32(&self) -> Vec<u32> {
        self.assignments.iter().map(|&a| a as u32).collect()
    }
}

pub fn kmeans_default(store: &FeatureStore, k: usize, seed: u64) -> Result<KMeansResult> {
    kmeans(store, k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL)
}

pub fn kmeans(
    store: &FeatureStore,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult> {
    let n = store.n_samples();
    let d = store.dim();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} must lie in 1..={n}")));
    }
    let mut centroids = plus_plus_init(store, k, seed);
    let mut assignments = vec![0usize; n];
    let mut point_cost = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations_run = 0;

    for _ in 0..max_iter {
        trace.push(assign(store, &centroids, k, &mut assignments, &mut point_cost));
        iterations_run += 1;

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a * d..(a + 1) * d].iter_mut().zip(store.row(i)) {
                *s += v;
            }
        }
        let mut updated = sums;
        let mut reseeded = Vec::new();
        for c in 0..k {
            let slot = &mut updated[c * d..(c + 1) * d];
            if counts[c] > 0 {
                slot.iter_mut().for_each(|s| *s /= counts[c] as f64);
            } else {
                // Empty cluster: move it onto the worst-served point.
                let far = (0..n)
                    .filter(|i| !reseeded.contains(i))
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if point_cost[b] >= point_cost[i] => Some(b),
                        _ => Some(i),
                    })
                    .unwrap_or(0);
                reseeded.push(far);
                slot.copy_from_slice(store.row(far));
            }
        }
        let shift = (0..k)
            .map(|c| sq_euclidean(&centroids[c * d..(c + 1) * d], &updated[c * d..(c + 1) * d]))
            .fold(0.0, f64::max)
            .sqrt();
        centroids = updated;
        if shift < tol {
            break;
        }
    }
    let inertia = assign(store, &centroids, k, &mut assignments, &mut point_cost);
    trace.push(inertia);
    Ok(KMeansResult {
        centroids,
        assignments,
        inertia,
        iterations_run,
        inertia_trace: trace,
        k,
        dim: d,
    })
}

fn plus_plus_init(store: &FeatureStore, k: usize, seed: u64) -> Vec<f64> {
    let n = store.n_samples();
    let d = store.dim();
    let mut rng = seeded(seed);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = store.row(first).to_vec();
    let mut closest: Vec<f64> = (0..n).map(|i| store.sq_dist(i, first)).collect();
    for _ in 1..k {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in closest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Round-off can leave `acc` short of `target`; fall back to the last positive weight.
            pick.unwrap_or_else(|| closest.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[next] = true;
        centroids.extend_from_slice(store.row(next));
        for (i, c) in closest.iter_mut().enumerate() {
            let dn = store.sq_dist(i, next);
            if dn < *c {
                *c = dn;
            }
        }
    }
    debug_assert_eq!(centroids.len(), k * d);
    centroids
}

/// Assigns every point to its nearest centroid (lowest id on ties) and
/// returns the inertia.
fn assign(
    store: &FeatureStore,
    centroids: &[f64],
    k: usize,
    assignments: &mut [usize],
    point_cost: &mut [f64],
) -> f64 {
    let d = store.dim();
    let mut inertia = 0.0;
    for (i, row) in store.rows().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for c in 0..k {
            let dist = sq_euclidean(row, &centroids[c * d..(c + 1) * d]);
            if dist < best.0 {
                best = (dist, c);
            }
        }
        assignments[i] = best.1;
        point_cost[i] = best.0;
        inertia += best.0;
    }
    inertia
}

/// Inverse mean distance from `index` to its `m` nearest other points.
pub fn typicality(store: &FeatureStore, index: usize, m: usize) -> Result<f64> {
    let n = store.n_samples();
    check_index(index, n)?;
    if m == 0 || m >= n {
        return Err(Error::Config(format!("m = {m} must lie in 1..={}", n.saturating_sub(1))));
    }
    let mut dists: Vec<f64> = (0..n)
        .filter(|&j| j != index)
        .map(|j| store.dist(index, j))
        .collect();
    Ok(typicality_from_distances(&mut dists, m))
}

/// Typicality of each member computed among `members` only; `m` is capped
/// at `members.len() - 1`. A singleton gets typicality 0.
pub fn typicality_within(store: &FeatureStore, members: &[usize], m: usize) -> Vec<f64> {
    let m = m.min(members.len().saturating_sub(1));
    if m == 0 {
        return vec![0.0; members.len()];
    }
    let mut dists = Vec::with_capacity(members.len());
    members
        .iter()
        .map(|&i| {
            dists.clear();
            dists.extend(members.iter().filter(|&&j| j != i).map(|&j| store.dist(i, j)));
            typicality_from_distances(&mut dists, m)
        })
        .collect()
}

fn typicality_from_distances(dists: &mut [f64], m: usize) -> f64 {
    dists.select_nth_unstable_by(m - 1, f64::total_cmp);
    let mean = dists[..m].iter().sum::<f64>() / m as f64;
    if mean > 0.0 {
        1.0 / mean
    } else {
        TYPICALITY_SENTINEL
    }
}
