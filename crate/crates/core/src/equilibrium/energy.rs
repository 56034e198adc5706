use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fields::ExternalFieldSet;
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Raised (not fatal) when the grids of two interacting components overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOverlapWarning {
    pub first: usize,
    pub second: usize,
}

/// Discrete energy E(w) = wᵀQw + cᵀw over the concatenated cell masses.
#[derive(Debug, Clone)]
pub struct DiscreteEnergy<T> {
    pub q: Matrix<T>,
    pub c: Vec<T>,
    /// Component i owns variables offsets[i]..offsets[i + 1].
    pub offsets: Vec<usize>,
    pub grids: Vec<Vec<T>>,
    pub warnings: Vec<GridOverlapWarning>,
}

/// F(u) = u²/2 · log|u| − 3u²/4, a second antiderivative of log|u|.
fn g2<T: Real>(u: T) -> T {
    if u == T::zero() {
        return T::zero();
    }
    let u2 = u * u;
    u2 * (u.abs().ln() / T::lit(2.0) - T::lit(0.75))
}

/// Mean of log|x − y|⁻¹ over x ∈ [a, b], y ∈ [c, d].
pub fn cell_log_kernel<T: Real>(a: T, b: T, c: T, d: T) -> T {
    let (h1, h2) = (b - a, d - c);
    let dist = ((a + b) - (c + d)).abs() / T::lit(2.0);
    let hmax = h1.max(h2);
    if dist > T::lit(30.0) * hmax {
        // Moment expansion of log|D + ξ| with ξ the difference of two uniforms.
        let s2 = (h1 * h1 + h2 * h2) / T::lit(12.0);
        let s4 = (h1.powi(4) + h2.powi(4)) / T::lit(80.0) + h1 * h1 * h2 * h2 / T::lit(24.0);
        let d2 = dist * dist;
        return -(dist.ln() - s2 / (T::lit(2.0) * d2) - s4 / (T::lit(4.0) * d2 * d2));
    }
    let integral = g2(b - c) - g2(a - c) - g2(b - d) + g2(a - d);
    -integral / (h1 * h2)
}

pub fn assemble_energy<T: Real>(
    fields: &ExternalFieldSet<T>,
    interaction: &Matrix<T>,
    grids: &[Vec<T>],
) -> DiscreteEnergy<T> {
    let m = grids.len();
    assert_eq!(m, fields.len());
    for g in grids {
        assert!(g.len() >= 2 && g.windows(2).all(|w| w[1] > w[0]), "grid must be strictly increasing");
    }
    let mut offsets = vec![0];
    for g in grids {
        offsets.push(offsets.last().unwrap() + g.len() - 1);
    }
    let n = offsets[m];
    let owner: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..grids[i].len() - 1).map(move |c| (i, c))).collect();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let (i, c) = owner[r];
            let (a, b) = (grids[i][c], grids[i][c + 1]);
            (0..n)
                .map(|s| {
                    let (j, d) = owner[s];
                    let aij = interaction[(i, j)];
                    if aij == T::zero() {
                        T::zero()
                    } else {
                        aij * cell_log_kernel(a, b, grids[j][d], grids[j][d + 1])
                    }
                })
                .collect()
        })
        .collect();
    let q = Matrix::from_rows(&rows);
    let c = owner
        .iter()
        .map(|&(i, cell)| fields.scaled_cell_average(i, grids[i][cell], grids[i][cell + 1]))
        .collect();
    let mut warnings = vec![];
    for i in 0..m {
        for j in (i + 1)..m {
            let overlap = grids[i][0] < *grids[j].last().unwrap() && grids[j][0] < *grids[i].last().unwrap();
            if interaction[(i, j)] != T::zero() && overlap {
                warnings.push(GridOverlapWarning { first: i, second: j });
            }
        }
    }
    DiscreteEnergy { q, c, offsets, grids: grids.to_vec(), warnings }
}

impl<T: Real> DiscreteEnergy<T> {
    pub fn components(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn size(&self) -> usize {
        self.c.len()
    }

    pub fn value(&self, w: &[T]) -> T {
        let qw = self.q_times(w);
        w.iter().zip(&qw).zip(&self.c).map(|((&wi, &qi), &ci)| wi * qi + ci * wi).sum()
    }

    /// ∇E = 2Qw + c, the cell-averaged effective potential.
    pub fn gradient(&self, w: &[T]) -> Vec<T> {
        let qw = self.q_times(w);
        qw.iter().zip(&self.c).map(|(&qi, &ci)| T::lit(2.0) * qi + ci).collect()
    }

    pub fn q_times(&self, w: &[T]) -> Vec<T> {
        let nz: Vec<usize> = (0..w.len()).filter(|&k| w[k] != T::zero()).collect();
        (0..self.size())
            .into_par_iter()
            .map(|r| {
                let row = self.q.row(r);
                nz.iter().map(|&k| row[k] * w[k]).sum()
            })
            .collect()
    }
}
