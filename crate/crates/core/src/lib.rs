//! Subset selection by generalized coverage.
//!
//! The generalized coverage of a labeled set `L` under a similarity kernel `k`
//! is the pool average of `max_{x' in L} k(x, x')`. This crate maximizes it
//! greedily (MaxHerding) or by k-medoids swap search with the labeled set
//! frozen, and ships the usual low-budget active learning baselines next to it
//! so they can be compared inside one simulation loop with a 1-NN evaluator.
//!
//! ```
//! use covsel::features::FeatureStore;
//! use covsel::kernels::Kernel;
//! use covsel::selectors::{select_maxherding, LabeledPool};
//!
//! let store = FeatureStore::from_rows(&[vec![0.0, 0.0], vec![0.1, 0.0], vec![5.0, 5.0]]).unwrap();
//! let pool = LabeledPool::new(store.n_samples());
//! let batch = select_maxherding(&store, &pool, 2, &Kernel::gaussian(1.0).unwrap()).unwrap();
//! assert_eq!(batch.indices.len(), 2);
//! ```

pub mod bench;
pub mod clustering;
pub mod coverage;
pub mod error;
pub mod evalloop;
pub mod features;
pub mod kernels;
pub mod kmedoids;
pub mod purity;
pub mod rng;
pub mod selectors;

pub use error::{Error, Result};
