//! Distance-based similarity kernels.
//!
//! Every family is a non-increasing function of `u = dist / lengthscale` with
//! value 1 at distance 0, so `k(x, x)` is the same constant for every `x`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};
use crate::features::FeatureStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    TopHat,
    StudentT,
    Laplace,
    Cauchy,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 5] = [
        KernelFamily::Gaussian,
        KernelFamily::TopHat,
        KernelFamily::StudentT,
        KernelFamily::Laplace,
        KernelFamily::Cauchy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::TopHat => "tophat",
            KernelFamily::StudentT => "studentt",
            KernelFamily::Laplace => "laplace",
            KernelFamily::Cauchy => "cauchy",
        }
    }

    pub fn is_smooth(self) -> bool {
        self != KernelFamily::TopHat
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelFamily::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown kernel family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    family: KernelFamily,
    lengthscale: f64,
    nu: f64,
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel {
            family: KernelFamily::Gaussian,
            lengthscale: 1.0,
            nu: 1.0,
        }
    }
}

impl Kernel {
    pub fn new(family: KernelFamily, lengthscale: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::Config(format!(
                "lengthscale must be positive and finite, got {lengthscale}"
            )));
        }
        Ok(Kernel {
            family,
            lengthscale,
            nu: 1.0,
        })
    }

    pub fn gaussian(lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, lengthscale)
    }

    pub fn tophat(delta: f64) -> Result<Self> {
        Self::new(KernelFamily::TopHat, delta)
    }

    /// Student-t degrees of freedom; ignored by other families.
    pub fn with_nu(mut self, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::Config(format!("nu must be positive, got {nu}")));
        }
        self.nu = nu;
        Ok(self)
    }

    pub fn with_lengthscale(self, lengthscale: f64) -> Result<Self> {
        Ok(Kernel {
            nu: self.nu,
            ..Kernel::new(self.family, lengthscale)?
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Similarity at Euclidean distance `dist`.
    pub fn eval(&self, dist: f64) -> Result<f64> {
        if !(dist >= 0.0 && dist.is_finite()) {
            return Err(Error::Domain(format!(
                "distance must be finite and non-negative, got {dist}"
            )));
        }
        Ok(self.similarity(dist))
    }

    /// Unchecked form of [`Kernel::eval`].
    #[inline]
    pub fn similarity(&self, dist: f64) -> f64 {
        match self.family {
            KernelFamily::TopHat => {
                if dist <= self.lengthscale {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFamily::Laplace => (-dist / self.lengthscale).exp(),
            _ => self.similarity_sq(dist * dist),
        }
    }

    /// Similarity from a squared distance. The top-hat and Laplace families
    /// take the square root so their results agree bit-for-bit with
    /// [`Kernel::similarity`] on `sqrt(sq_dist)`.
    #[inline]
    pub fn similarity_sq(&self, sq_dist: f64) -> f64 {
        let l2 = self.lengthscale * self.lengthscale;
        match self.family {
            KernelFamily::Gaussian => (-0.5 * sq_dist / l2).exp(),
            KernelFamily::Cauchy => 1.0 / (1.0 + sq_dist / l2),
            KernelFamily::StudentT => {
                (1.0 + sq_dist / (l2 * self.nu)).powf(-0.5 * (self.nu + 1.0))
            }
            KernelFamily::TopHat | KernelFamily::Laplace => self.similarity(sq_dist.sqrt()),
        }
    }

    /// Similarity between rows `i` and `j` of `store`.
    #[inline]
    pub fn between(&self, store: &FeatureStore, i: usize, j: usize) -> f64 {
        self.similarity_sq(store.sq_dist(i, j))
    }

    /// Fills `out[n] = k(x_n, x_target)` for every row of `store`.
    pub fn column_into(&self, store: &FeatureStore, target: usize, out: &mut [f64]) {
        let t = store.row(target);
        for (o, row) in out.iter_mut().zip(store.rows()) {
            *o = self.similarity_sq(sq_euclidean(row, t));
        }
    }

    pub fn column(&self, store: &FeatureStore, target: usize) -> Vec<f64> {
        let mut out = vec![0.0; store.n_samples()];
        self.column_into(store, target, &mut out);
        out
    }
}

/// Squared Euclidean distance accumulated in binary64 from coordinate
/// differences (exactly zero for identical rows, never negative, symmetric
/// in its arguments). Four partial sums let the compiler vectorize.
#[inline]
pub fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Distances from row `query` to each of `targets`, in target order.
pub fn pairwise_to_set(store: &FeatureStore, query: usize, targets: &[usize]) -> Result<Vec<f64>> {
    let n = store.n_samples();
    check_index(query, n)?;
    targets
        .iter()
        .map(|&t| {
            check_index(t, n)?;
            Ok(store.dist(query, t))
        })
        .collect()
}
