//! Choosing a radius or lengthscale from cluster purity.
//!
//! Pseudo-labels come from k-means with one cluster per class. A radius is
//! good when almost every ball of that radius stays inside one cluster; the
//! sweep keeps the largest grid value whose purity is still at the target.

use crate::clustering::kmeans_default;
use crate::coverage::impurity_from_nearest;
use crate::error::{Error, Result};
use crate::features::{normalize_rows, FeatureStore};
use crate::kernels::{Kernel, KernelFamily};

pub const DEFAULT_TARGET: f64 = 0.95;

/// `steps` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

pub fn default_grid() -> Vec<f64> {
    linspace(0.05, 1.0, 20)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurityConfig {
    pub grid: Vec<f64>,
    pub target: f64,
    pub seed: u64,
    /// Project rows onto the unit sphere before clustering and measuring.
    pub normalize: bool,
}

impl Default for PurityConfig {
    fn default() -> Self {
        PurityConfig {
            grid: default_grid(),
            target: DEFAULT_TARGET,
            seed: 0,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PuritySweep {
    pub grid: Vec<f64>,
    pub purity_rates: Vec<f64>,
    pub chosen: f64,
    pub target: f64,
    /// Set when even the first grid value falls below the target.
    pub warning: bool,
}

impl PuritySweep {
    /// Applies the selection rule to precomputed rates.
    pub fn from_rates(grid: Vec<f64>, purity_rates: Vec<f64>, target: f64) -> Result<Self> {
        validate_grid(&grid)?;
        if purity_rates.len() != grid.len() {
            return Err(Error::Config(format!(
                "{} purity rates for a grid of {}",
                purity_rates.len(),
                grid.len()
            )));
        }
        let (chosen, warning) = match purity_rates.iter().position(|&p| p < target) {
            None => (grid[grid.len() - 1], false),
            Some(0) => (grid[0], true),
            Some(first_below) => (grid[first_below - 1], false),
        };
        Ok(PuritySweep {
            grid,
            purity_rates,
            chosen,
            target,
            warning,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,purity_rate\n");
        for (v, p) in self.grid.iter().zip(&self.purity_rates) {
            out.push_str(&format!("{v},{p}\n"));
        }
        out
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("grid is empty".into()));
    }
    if grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("grid must be positive and strictly ascending".into()));
    }
    Ok(())
}

/// Fraction of points whose closed ball of `radius` holds only points with
/// their own assignment.
pub fn blob_purity(store: &FeatureStore, assignments: &[u32], radius: f64) -> Result<f64> {
    let n = store.n_samples();
    if assignments.len() != n {
        return Err(Error::Data(format!("{} assignments for {n} samples", assignments.len())));
    }
    let pure = (0..n)
        .filter(|&i| (0..n).all(|j| assignments[j] == assignments[i] || store.dist(i, j) > radius))
        .count();
    Ok(pure as f64 / n as f64)
}

/// Distance from each point to its nearest point with another assignment
/// (infinite when there is none).
pub fn nearest_foreign_distances(store: &FeatureStore, assignments: &[u32]) -> Result<Vec<f64>> {
    let n = store.n_samples();
    if assignments.len() != n {
        return Err(Error::Data(format!("{} assignments for {n} samples", assignments.len())));
    }
    let mut nearest = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if assignments[i] != assignments[j] {
                let d = store.dist(i, j);
                nearest[i] = nearest[i].min(d);
                nearest[j] = nearest[j].min(d);
            }
        }
    }
    Ok(nearest)
}

/// Blob purity at `radius` given [`nearest_foreign_distances`].
pub fn purity_from_nearest(nearest: &[f64], radius: f64) -> f64 {
    nearest.iter().filter(|&&r| r > radius).count() as f64 / nearest.len() as f64
}

/// A radius whose blob purity is as close as possible to `purity`: the
/// midpoint between the two nearest-foreign distances that bracket the
/// corresponding quantile.
pub fn radius_for_purity(nearest: &[f64], purity: f64) -> Result<f64> {
    if nearest.is_empty() || !(0.0..=1.0).contains(&purity) {
        return Err(Error::Config(format!("cannot match purity {purity}")));
    }
    let mut sorted: Vec<f64> = nearest.iter().copied().filter(|r| r.is_finite()).collect();
    if sorted.is_empty() {
        return Err(Error::Domain("every point is pure at any radius".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let n = nearest.len();
    let impure = (((1.0 - purity) * n as f64).round() as usize).clamp(0, sorted.len());
    Ok(match impure {
        0 => sorted[0] / 2.0,
        m if m == sorted.len() => sorted[m - 1] * 1.5,
        m => 0.5 * (sorted[m - 1] + sorted[m]),
    })
}

/// Normalized (if asked) store and its k-means pseudo-labels.
pub fn pseudo_labels(store: &FeatureStore, n_classes: usize, config: &PurityConfig) -> Result<(FeatureStore, Vec<u32>)> {
    let store = if config.normalize {
        normalize_rows(store)?
    } else {
        store.clone()
    };
    let clusters = kmeans_default(&store, n_classes, config.seed)?;
    let labels = clusters.assignments_u32();
    Ok((store, labels))
}

/// Top-hat radius sweep.
pub fn choose_delta(store: &FeatureStore, n_classes: usize, config: &PurityConfig) -> Result<PuritySweep> {
    validate_grid(&config.grid)?;
    let (store, labels) = pseudo_labels(store, n_classes, config)?;
    let nearest = nearest_foreign_distances(&store, &labels)?;
    let rates = config.grid.iter().map(|&r| purity_from_nearest(&nearest, r)).collect();
    PuritySweep::from_rates(config.grid.clone(), rates, config.target)
}

/// Smooth-kernel lengthscale sweep; purity is one minus the estimated impurity.
pub fn choose_lengthscale(
    store: &FeatureStore,
    n_classes: usize,
    family: KernelFamily,
    config: &PurityConfig,
) -> Result<PuritySweep> {
    if !family.is_smooth() {
        return Err(Error::Config("use choose_delta for the top-hat kernel".into()));
    }
    validate_grid(&config.grid)?;
    let (store, labels) = pseudo_labels(store, n_classes, config)?;
    let nearest = nearest_foreign_distances(&store, &labels)?;
    let nearest_sq: Vec<f64> = nearest.iter().map(|r| r * r).collect();
    let rates = config
        .grid
        .iter()
        .map(|&l| Ok(1.0 - impurity_from_nearest(&nearest_sq, &Kernel::new(family, l)?)))
        .collect::<Result<Vec<_>>>()?;
    PuritySweep::from_rates(config.grid.clone(), rates, config.target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::estimate_impurity;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn two_clusters() -> (FeatureStore, Vec<u32>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for i in 0..5 {
                let a = i as f64 * std::f64::consts::TAU / 5.0;
                rows.push(vec![10.0 * c as f64 + 0.1 * a.cos(), 0.1 * a.sin()]);
                labels.push(c);
            }
        }
        (FeatureStore::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn blob_purity_examples() {
        let (s, labels) = two_clusters();
        assert_eq!(blob_purity(&s, &labels, 1.0).unwrap(), 1.0);
        assert_eq!(blob_purity(&s, &labels, 11.0).unwrap(), 0.0);
        assert_eq!(blob_purity(&s, &labels, 1e-3).unwrap(), 1.0);
        let nearest = nearest_foreign_distances(&s, &labels).unwrap();
        for r in [0.5, 9.8, 9.9, 10.0, 10.1, 11.0] {
            assert_eq!(purity_from_nearest(&nearest, r), blob_purity(&s, &labels, r).unwrap());
        }
        let one = vec![0; 10];
        assert_eq!(blob_purity(&s, &one, 100.0).unwrap(), 1.0);
    }

    #[test]
    fn selection_rule() {
        let grid = vec![0.1, 0.2, 0.3, 0.4];
        let s = PuritySweep::from_rates(grid.clone(), vec![1.0, 0.97, 0.93, 0.5], 0.95).unwrap();
        assert_eq!(s.chosen, 0.2);
        assert!(!s.warning);
        let s = PuritySweep::from_rates(grid.clone(), vec![1.0, 0.97, 0.93, 0.5], 0.0).unwrap();
        assert_eq!(s.chosen, 0.4);
        let s = PuritySweep::from_rates(grid.clone(), vec![0.9, 0.8, 0.7, 0.5], 0.95).unwrap();
        assert_eq!(s.chosen, 0.1);
        assert!(s.warning);
        assert!(PuritySweep::from_rates(vec![0.2, 0.1], vec![1.0, 1.0], 0.9).is_err());
        assert!(PuritySweep::from_rates(vec![], vec![], 0.9).is_err());
    }

    #[test]
    fn default_grid_spacing() {
        let g = default_grid();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[19], 1.0);
        assert!((g[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn lengthscale_purity_limits_and_monotonicity() {
        let mut rng = seeded(2);
        let rows: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let s = FeatureStore::from_rows(&rows).unwrap();
        let cfg = PurityConfig {
            grid: linspace(0.001, 2.0, 60),
            normalize: false,
            target: 0.95,
            seed: 3,
        };
        let sweep = choose_lengthscale(&s, 3, KernelFamily::Gaussian, &cfg).unwrap();
        assert!(sweep.purity_rates[0] > 0.999);
        assert!(sweep.purity_rates.windows(2).all(|w| w[1] <= w[0]));
        // Same rates as the direct impurity estimate.
        let (_, labels) = pseudo_labels(&s, 3, &cfg).unwrap();
        for (&l, &p) in cfg.grid.iter().zip(&sweep.purity_rates).step_by(7) {
            let direct = estimate_impurity(&s, &Kernel::gaussian(l).unwrap(), &labels).unwrap();
            assert!((1.0 - direct - p).abs() < 1e-12);
        }
        assert!(choose_lengthscale(&s, 3, KernelFamily::TopHat, &cfg).is_err());
    }

    #[test]
    fn coincident_cross_label_points_are_always_impure() {
        let s = FeatureStore::from_rows(&[vec![0.0], vec![0.0], vec![5.0], vec![6.0]]).unwrap();
        let labels = [0, 1, 1, 1];
        let nearest = nearest_foreign_distances(&s, &labels).unwrap();
        let sq: Vec<f64> = nearest.iter().map(|r| r * r).collect();
        for l in [1e-6, 1.0, 100.0] {
            assert!(impurity_from_nearest(&sq, &Kernel::gaussian(l).unwrap()) >= 2.0 / 4.0);
        }
    }

    #[test]
    fn delta_sweep_brackets_threshold() {
        let mut rng = seeded(5);
        let rows: Vec<Vec<f64>> = (0..150).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0]).collect();
        let s = FeatureStore::from_rows(&rows).unwrap();
        let cfg = PurityConfig { seed: 1, ..Default::default() };
        let sweep = choose_delta(&s, 4, &cfg).unwrap();
        assert!(sweep.purity_rates.windows(2).all(|w| w[1] <= w[0]));
        let pos = sweep.grid.iter().position(|&g| g == sweep.chosen).unwrap();
        if !sweep.warning {
            assert!(sweep.purity_rates[pos] >= cfg.target);
            if pos + 1 < sweep.grid.len() {
                assert!(sweep.purity_rates[pos + 1] < cfg.target);
            }
        }
        assert_eq!(sweep, choose_delta(&s, 4, &cfg).unwrap());
    }

    #[test]
    fn radius_matches_requested_purity() {
        let nearest = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        let r = radius_for_purity(&nearest, 0.7).unwrap();
        assert!((r - 0.35).abs() < 1e-12);
        assert_eq!(purity_from_nearest(&nearest, r), 0.7);
        assert_eq!(purity_from_nearest(&nearest, radius_for_purity(&nearest, 1.0).unwrap()), 1.0);
        assert_eq!(purity_from_nearest(&nearest, radius_for_purity(&nearest, 0.0).unwrap()), 0.0);
    }
}
