//! Selection timing and parameter sweeps.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::evalloop::{run_loop, soft_nn_probs, LoopConfig, DEFAULT_TEMPERATURE};
use crate::features::{normalize_rows, FeatureStore};
use crate::purity::{nearest_foreign_distances, pseudo_labels, purity_from_nearest, PurityConfig};
use crate::coverage::impurity_from_nearest;
use crate::rng::hash64;
use crate::selectors::{select, LabeledPool, Method, SelectorConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub iteration: usize,
    pub ms_per_selection: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub method: String,
    pub mean_ms: f64,
    pub median_ms: f64,
}

/// Times `iters` successive selections of `budget` points per method, each
/// method growing its own pool.
pub fn cmd_bench(
    store: &FeatureStore,
    methods: &[SelectorConfig],
    budget: usize,
    iters: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let features = store.without_labels();
    let mut rows = Vec::with_capacity(methods.len() * iters);
    for config in methods {
        let mut pool = LabeledPool::new(store.n_samples());
        for t in 1..=iters {
            let mut config = config.clone();
            config.seed = hash64(seed, t as u64);
            let probs = match config.method.uncertainty_mode() {
                Some(_) if pool.is_empty() => {
                    config.method = Method::Random;
                    None
                }
                Some(_) => Some(soft_nn_probs(store, &pool, store, DEFAULT_TEMPERATURE)?),
                None => None,
            };
            let started = Instant::now();
            let batch = select(&features, &pool, budget, &config, probs.as_ref())?;
            let ms = started.elapsed().as_secs_f64() * 1e3;
            pool.extend(&batch.indices, t as u32)?;
            rows.push(BenchRow {
                method: config.describe(),
                iteration: t,
                ms_per_selection: ms,
            });
        }
    }
    Ok(rows)
}

/// Mean and median per method, in first-appearance order.
pub fn summarize_bench(rows: &[BenchRow]) -> Vec<BenchSummary> {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let mut ms: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.ms_per_selection).collect();
            ms.sort_by(f64::total_cmp);
            let mid = ms.len() / 2;
            let median = if ms.len() % 2 == 1 { ms[mid] } else { 0.5 * (ms[mid - 1] + ms[mid]) };
            BenchSummary {
                method: m.to_string(),
                mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
                median_ms: median,
            }
        })
        .collect()
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("method,iteration,ms_per_selection\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.method, r.iteration, r.ms_per_selection));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub purity_rate: f64,
    pub seed: u64,
    pub iteration: usize,
    pub labeled_size: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Template loop; its kernel lengthscale (or radius, for ProbCover) is
    /// replaced by each grid value, and its seed by each entry of `seeds`.
    pub loop_config: LoopConfig,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Pseudo-label cluster count for the purity column.
    pub n_classes: usize,
    pub purity: PurityConfig,
}

/// Runs the full loop for every grid value and seed.
pub fn cmd_sweep(train: &FeatureStore, test: &FeatureStore, config: &SweepConfig) -> Result<Vec<SweepRow>> {
    if config.grid.is_empty() || config.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one grid value and one seed".into()));
    }
    let base = &config.loop_config;
    let features = if base.normalize { normalize_rows(&train.without_labels())? } else { train.without_labels() };
    let (_, pseudo) = pseudo_labels(&features, config.n_classes, &PurityConfig { normalize: false, ..config.purity.clone() })?;
    let nearest = nearest_foreign_distances(&features, &pseudo)?;
    let nearest_sq: Vec<f64> = nearest.iter().map(|r| r * r).collect();
    let is_radius = base.selector.method == Method::ProbCover || !base.selector.kernel.family().is_smooth();

    let mut rows = Vec::new();
    for &param in &config.grid {
        let mut loop_config = base.clone();
        let purity_rate = if base.selector.method == Method::ProbCover {
            loop_config.selector.delta = param;
            purity_from_nearest(&nearest, param)
        } else {
            let kernel = base.selector.kernel.with_lengthscale(param)?;
            loop_config.selector.kernel = kernel;
            loop_config.coverage_kernel = kernel;
            if is_radius {
                purity_from_nearest(&nearest, param)
            } else {
                1.0 - impurity_from_nearest(&nearest_sq, &kernel)
            }
        };
        for &seed in &config.seeds {
            loop_config.seed = seed;
            loop_config.run_id = format!("{}-p{param}-s{seed}", base.selector.method);
            for r in run_loop(train, test, &loop_config)? {
                rows.push(SweepRow {
                    param,
                    purity_rate,
                    seed,
                    iteration: r.iteration,
                    labeled_size: r.labeled_size,
                    accuracy: r.accuracy,
                });
            }
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("param,purity_rate,seed,iteration,labeled_size,accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.param, r.purity_rate, r.seed, r.iteration, r.labeled_size, r.accuracy
        ));
    }
    out
}

/// Max minus min final-iteration accuracy across grid values, averaged over seeds.
pub fn final_accuracy_spread(rows: &[SweepRow]) -> f64 {
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let spreads: Vec<f64> = seeds
        .iter()
        .map(|&s| {
            let last = rows.iter().filter(|r| r.seed == s).map(|r| r.iteration).max().unwrap_or(0);
            let finals: Vec<f64> = rows
                .iter()
                .filter(|r| r.seed == s && r.iteration == last)
                .map(|r| r.accuracy)
                .collect();
            let hi = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = finals.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .collect();
    spreads.iter().sum::<f64>() / spreads.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalloop::split_train_test;
    use crate::features::{generate_mixture, MixtureComponent, MixtureSpec};

    fn data() -> (FeatureStore, FeatureStore) {
        let components = (0..3)
            .map(|c| MixtureComponent { mean: vec![4.0 * c as f64, 0.0], stddev: 0.8, weight: 1.0 / 3.0 })
            .collect();
        let s = generate_mixture(&MixtureSpec { components, n_samples: 150, seed: 3 }).unwrap();
        split_train_test(&s, 0.3, 0).unwrap()
    }

    #[test]
    fn bench_reports_every_iteration() {
        let (train, _) = data();
        let methods = [SelectorConfig::new(Method::Random), SelectorConfig::new(Method::MaxHerding)];
        let rows = cmd_bench(&train, &methods, 3, 4, 0).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.ms_per_selection.is_finite() && r.ms_per_selection >= 0.0));
        let summary = summarize_bench(&rows);
        assert_eq!(summary.len(), 2);
        assert_eq!(summary[0].method, "random");
        assert!(bench_csv(&rows).starts_with("method,iteration,ms_per_selection\n"));
    }

    #[test]
    fn median_of_even_count() {
        let rows: Vec<BenchRow> = [4.0, 1.0, 3.0, 2.0]
            .iter()
            .enumerate()
            .map(|(i, &ms)| BenchRow { method: "m".into(), iteration: i + 1, ms_per_selection: ms })
            .collect();
        let s = &summarize_bench(&rows)[0];
        assert_eq!((s.mean_ms, s.median_ms), (2.5, 2.5));
    }

    #[test]
    fn sweep_schema_and_single_value() {
        let (train, test) = data();
        let mut out = Vec::new();
        for method in [Method::ProbCover, Method::MaxHerding] {
            let mut lc = LoopConfig::new(SelectorConfig::new(method), 3, 2, 0);
            lc.timing = false;
            let cfg = SweepConfig {
                loop_config: lc.clone(),
                grid: vec![0.7],
                seeds: vec![5],
                n_classes: 3,
                purity: PurityConfig::default(),
            };
            let rows = cmd_sweep(&train, &test, &cfg).unwrap();
            let mut single = lc.clone();
            single.seed = 5;
            if method == Method::ProbCover {
                single.selector.delta = 0.7;
            } else {
                single.selector.kernel = single.selector.kernel.with_lengthscale(0.7).unwrap();
                single.coverage_kernel = single.selector.kernel;
            }
            let direct = run_loop(&train, &test, &single).unwrap();
            let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
            assert_eq!(acc, direct.iter().map(|r| r.accuracy).collect::<Vec<_>>());
            assert_eq!(final_accuracy_spread(&rows), 0.0);
            out.push(sweep_csv(&rows).lines().next().unwrap().to_string());
        }
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn spread_reduction() {
        let row = |param, seed, iteration, accuracy| SweepRow { param, purity_rate: 1.0, seed, iteration, labeled_size: 0, accuracy };
        let rows = vec![
            row(1.0, 0, 1, 0.9),
            row(1.0, 0, 2, 0.5),
            row(2.0, 0, 2, 0.7),
            row(1.0, 1, 2, 0.6),
            row(2.0, 1, 2, 0.6),
        ];
        assert!((final_accuracy_spread(&rows) - 0.1).abs() < 1e-12);
    }
}
