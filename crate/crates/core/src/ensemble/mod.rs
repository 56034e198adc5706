//! Finite-n non-intersecting bridges: Gaussian weights, the biorthogonal kernel, samplers and brute-force checks.

mod oracle;
mod sampler;
mod stats;
mod system;

pub use oracle::BruteForceOracle;
pub use sampler::{sample_dpp, sample_paths, PathBundle, PathRow, SamplerMode, SamplerStats};
pub use stats::{histogram_band_check, kolmogorov_smirnov, BandReport};
pub use system::{gaussian_cross_moment, BasisMode, GaussianSystem, Group, KernelEvaluator};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::EquilibriumSolution;
use crate::graph::{build_tree, finite_counts, Counts, GraphError, PathTree, ProblemConfig, Rounding, TransitionMatrix};
use crate::quadrature::integrate_adaptive;
use crate::scalar::Real;

/// Largest n accepted by the Gram route.
pub const MAX_PATHS: usize = 64;
/// Gram matrices with a larger 1-norm condition number are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid ensemble input: {0}")]
    InvalidInput(String),
    #[error("n = {n} exceeds the cap of {cap} paths")]
    TooLarge { n: usize, cap: usize },
    #[error("Gram matrix condition estimate {condition:e} exceeds 1e12 at n = {n}")]
    IllConditioned { condition: f64, n: usize },
    #[error("rejection budget exhausted after {rejected} rejections ({accepted} bundles accepted)")]
    RejectionBudgetExhausted { accepted: usize, rejected: usize },
    #[error("brute-force quadrature needs {needed} evaluations for n = {n}, budget {budget}")]
    QuadratureBudgetExhausted { n: usize, needed: f64, budget: f64 },
}

/// n paths from the starting points a_k to the ending points b_l, with variance σ² = T/n per unit time.
#[derive(Debug, Clone)]
pub struct EnsembleSpec<T> {
    pub config: ProblemConfig<T>,
    pub tree: PathTree,
    pub counts: Counts,
    pub sigma2: T,
}

impl<T: Real> EnsembleSpec<T> {
    pub fn new(config: ProblemConfig<T>, matrix: &TransitionMatrix, n: usize, rounding: Rounding) -> Result<Self, EnsembleError> {
        config.validate()?;
        if n == 0 {
            return Err(EnsembleError::InvalidInput("need at least one path".into()));
        }
        if config.a.len() != matrix.p() || config.b.len() != matrix.q() {
            return Err(EnsembleError::InvalidInput("endpoint counts do not match the transition matrix".into()));
        }
        let tree = build_tree(matrix)?;
        let counts = finite_counts(matrix, n, rounding)?;
        let sigma2 = config.temperature / T::from_usize_lossy(n);
        Ok(Self { config, tree, counts, sigma2 })
    }

    pub fn n(&self) -> usize {
        self.counts.n
    }

    /// w_{1,k}(x) = exp(−(x − a_k)²/(2tσ²)) with its count n_k.
    pub fn start_group(&self, k: usize, t: T) -> Group<T> {
        Group { center: self.config.a[k], variance: t * self.sigma2, count: self.counts.n_k[k] }
    }

    /// w_{2,l}(x) = exp(−(x − b_l)²/(2(1−t)σ²)) with its count m_l.
    pub fn end_group(&self, l: usize, t: T) -> Group<T> {
        Group { center: self.config.b[l], variance: (T::one() - t) * self.sigma2, count: self.counts.m_l[l] }
    }

    /// ∫ x^m w_{1,k} w_{2,l} dx at the configured time.
    pub fn cross_moment(&self, k: usize, l: usize, m: usize) -> T {
        gaussian_cross_moment(&self.start_group(k, self.config.t), &self.end_group(l, self.config.t), m)
    }

    /// The biorthogonal system of the positions at time t ∈ (0, 1).
    pub fn system_at(&self, t: T) -> GaussianSystem<T> {
        let ks: Vec<usize> = (0..self.config.a.len()).filter(|&k| self.counts.n_k[k] > 0).collect();
        let ls: Vec<usize> = (0..self.config.b.len()).filter(|&l| self.counts.m_l[l] > 0).collect();
        let transport = self
            .tree
            .edges()
            .iter()
            .filter(|e| self.counts.n_kl[e.k][e.l] > 0)
            .map(|e| {
                let fi = ks.iter().position(|&k| k == e.k).expect("positive row");
                let gi = ls.iter().position(|&l| l == e.l).expect("positive column");
                (fi, gi, self.counts.n_kl[e.k][e.l])
            })
            .collect();
        GaussianSystem {
            f_groups: ks.iter().map(|&k| self.start_group(k, t)).collect(),
            g_groups: ls.iter().map(|&l| self.end_group(l, t)).collect(),
            transport,
        }
    }

    pub fn kernel(&self, mode: BasisMode) -> Result<KernelEvaluator<T>, EnsembleError> {
        let t = self.config.t;
        if !(t > T::zero() && t < T::one()) {
            return Err(EnsembleError::InvalidInput("kernel needs 0 < t < 1".into()));
        }
        KernelEvaluator::new(self.system_at(t), mode)
    }

    /// (k, l) of each path, topmost first.
    pub fn path_edges(&self) -> Vec<(usize, usize)> {
        self.tree
            .edges()
            .iter()
            .flat_map(|e| std::iter::repeat_n((e.k, e.l), self.counts.n_kl[e.k][e.l]))
            .collect()
    }
}

/// One row of the "x,kxx_over_n" export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow<T> {
    pub x: T,
    pub kxx_over_n: T,
}

pub fn mean_density_curve<T: Real>(ke: &KernelEvaluator<T>, grid: &[T]) -> Vec<DensityRow<T>> {
    use rayon::prelude::*;
    grid.par_iter().map(|&x| DensityRow { x, kxx_over_n: ke.mean_density(x) }).collect()
}

/// ∫ |Σ_i ρ_i(x) − (1/n)K(x, x)| dx, split at every support endpoint.
pub fn density_l1_distance<T: Real>(ke: &KernelEvaluator<T>, sol: &EquilibriumSolution<T>) -> T {
    let mut breaks: Vec<T> = sol.supports.iter().flatten().flat_map(|&(a, b)| [a, b]).collect();
    for (lo, hi) in ke.system.envelope() {
        breaks.push(lo);
        breaks.push(hi);
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let gap = |x: T| {
        let rho: T = (0..sol.components()).filter(|&i| sol.supports[i].is_some()).map(|i| sol.density(i, x)).sum();
        (rho - ke.mean_density(x)).abs()
    };
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(100.0));
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| integrate_adaptive(gap, w[0], w[1], tol, tol, 2000).value)
        .sum()
}
