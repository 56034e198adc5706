use serde::{Deserialize, Serialize};

use crate::graph::{PathTree, ProblemConfig};
use crate::scalar::Real;

/// Quadratic external fields V_i(x) = (x − x_i(t))² / (2t(1−t)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalFieldSet<T> {
    pub centers: Vec<T>,
    pub curvature: T,
    pub temperature: T,
}

impl<T: Real> ExternalFieldSet<T> {
    pub fn new(config: &ProblemConfig<T>, tree: &PathTree) -> Self {
        let t = config.t;
        let centers = tree
            .edges()
            .iter()
            .map(|e| (T::one() - t) * config.a[e.k] + t * config.b[e.l])
            .collect();
        let curvature = T::one() / (T::lit(2.0) * t * (T::one() - t));
        Self { centers, curvature, temperature: config.temperature }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn value(&self, i: usize, x: T) -> T {
        let d = x - self.centers[i];
        self.curvature * d * d
    }

    pub fn derivative(&self, i: usize, x: T) -> T {
        T::lit(2.0) * self.curvature * (x - self.centers[i])
    }

    /// V_i(x) / T.
    pub fn scaled(&self, i: usize, x: T) -> T {
        self.value(i, x) / self.temperature
    }

    /// Mean of V_i / T over the cell [lo, hi].
    pub fn scaled_cell_average(&self, i: usize, lo: T, hi: T) -> T {
        let (u, v) = (lo - self.centers[i], hi - self.centers[i]);
        // (v³ − u³)/(3(v − u)) written without the cancelling difference.
        self.curvature * (u * u + u * v + v * v) / (T::lit(3.0) * self.temperature)
    }

    /// Natural length scale √(T t(1−t)) of an isolated component.
    pub fn width(&self) -> T {
        (self.temperature / (T::lit(2.0) * self.curvature)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_tree, TransitionMatrix};
    use num_rational::Rational64;

    #[test]
    fn centers_follow_straight_lines() {
        let cfg = ProblemConfig::new(vec![1.0, -1.0], vec![1.0, -1.0], 0.5, 0.05).unwrap();
        let third = Rational64::new(1, 3);
        let zero = Rational64::new(0, 1);
        let m = TransitionMatrix::new(vec![vec![third, zero], vec![third, third]]).unwrap();
        let f = ExternalFieldSet::new(&cfg, &build_tree(&m).unwrap());
        assert_eq!(f.centers, vec![1.0, 0.0, -1.0]);
        assert_eq!(f.curvature, 2.0);
        for i in 0..3 {
            assert_eq!(f.value(i, f.centers[i]), 0.0);
            assert!(f.value(i, f.centers[i] + 0.1) > 0.0);
        }
        let avg = f.scaled_cell_average(1, -0.2, 0.4);
        let exact = 2.0 * (0.4f64.powi(3) + 0.2f64.powi(3)) / (3.0 * 0.6) / 0.05;
        assert!((avg - exact).abs() < 1e-12);
        assert!((f.width() - (0.05f64 * 0.25).sqrt()).abs() < 1e-15);
    }
}
