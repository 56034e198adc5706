use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EquilibriumError, EquilibriumSolution, ExternalFieldSet};
use crate::potential::CellMeasure;
use crate::scalar::{linspace, median, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElComponent<T> {
    /// L_i, the median of U_i over the support; `None` for zero mass.
    pub constant: Option<T>,
    /// max |U_i − L_i| over support test points.
    pub on_support_max: T,
    /// max |U_i'| over support test points (differentiated condition).
    pub derivative_max: T,
    /// min (U_i − L_i) over off-support test points.
    pub off_support_min: T,
    /// (x, U_i(x) − L_i) at the midpoints of the gaps adjacent to this support.
    pub gap_midpoints: Vec<(T, T)>,
    /// Field magnitude max(1, max |V_i/T|) on the support.
    pub scale: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElReport<T> {
    pub components: Vec<ElComponent<T>>,
}

impl<T: Real> ElReport<T> {
    pub fn max_on_support(&self) -> T {
        self.components.iter().fold(T::zero(), |m, c| m.max(c.on_support_max))
    }

    pub fn max_scaled_on_support(&self) -> T {
        self.components.iter().fold(T::zero(), |m, c| m.max(c.on_support_max / c.scale))
    }

    pub fn max_derivative(&self) -> T {
        self.components.iter().fold(T::zero(), |m, c| m.max(c.derivative_max))
    }

    pub fn min_off_support(&self) -> T {
        self.components.iter().fold(T::infinity(), |m, c| m.min(c.off_support_min))
    }

    pub fn min_gap_midpoint(&self) -> T {
        self.components
            .iter()
            .flat_map(|c| c.gap_midpoints.iter().map(|g| g.1))
            .fold(T::infinity(), T::min)
    }

    /// Worst violation over both the potential and the differentiated conditions.
    pub fn residual(&self) -> T {
        self.max_on_support().max(self.max_derivative())
    }
}

/// Support test points: interior cell midpoints for grid measures, Chebyshev points otherwise.
fn support_points<T: Real>(sol: &EquilibriumSolution<T>, i: usize, (alpha, beta): (T, T)) -> Vec<T> {
    if sol.is_refined() && sol.refined[i].is_some() {
        let n = 201;
        let (c, r) = ((alpha + beta) / T::lit(2.0), (beta - alpha) / T::lit(2.0));
        return (0..n)
            .map(|j| c + r * (T::PI() * (T::from_usize_lossy(j) + T::lit(0.5)) / T::from_usize_lossy(n)).cos())
            .collect();
    }
    let cells = &sol.measures.components[i];
    let inside: Vec<usize> = (0..cells.cells())
        .filter(|&c| {
            let (lo, hi) = (cells.edges[c], cells.edges[c + 1]);
            lo >= alpha && hi <= beta
        })
        .collect();
    if inside.len() <= 4 {
        return inside.iter().map(|&c| cells.midpoint(c)).collect();
    }
    inside[2..inside.len() - 2].iter().map(|&c| cells.midpoint(c)).collect()
}

/// Euler–Lagrange report on a verification grid covering all supports with margin.
pub fn el_residual<T: Real>(sol: &EquilibriumSolution<T>) -> ElReport<T> {
    let present: Vec<(T, T)> = sol.supports.iter().flatten().copied().collect();
    let lo = present.iter().map(|s| s.0).fold(T::infinity(), T::min);
    let hi = present.iter().map(|s| s.1).fold(T::neg_infinity(), T::max);
    let span = (hi - lo).max(sol.fields.width());
    let window = linspace(lo - span, hi + span, 4001);
    let m = sol.components();
    let components = (0..m)
        .into_par_iter()
        .map(|i| {
            let Some((alpha, beta)) = sol.supports[i] else {
                return ElComponent {
                    constant: None,
                    on_support_max: T::zero(),
                    derivative_max: T::zero(),
                    off_support_min: T::infinity(),
                    gap_midpoints: vec![],
                    scale: T::one(),
                };
            };
            let pts = support_points(sol, i, (alpha, beta));
            let values: Vec<T> = pts.iter().map(|&x| sol.effective_potential(i, x)).collect();
            let l = median(&values).unwrap_or(T::zero());
            let on_support_max = values.iter().fold(T::zero(), |m, &u| m.max((u - l).abs()));
            let derivative_max =
                pts.iter().fold(T::zero(), |m, &x| m.max(sol.effective_potential_derivative(i, x).abs()));
            let off_support_min = window
                .iter()
                .filter(|&&x| x < alpha || x > beta)
                .map(|&x| sol.effective_potential(i, x) - l)
                .fold(T::infinity(), T::min);
            let mut gap_midpoints = vec![];
            let neighbours = [(0..i).rev().find(|&j| sol.supports[j].is_some()), (i + 1..m).find(|&j| sol.supports[j].is_some())];
            if let Some(j) = neighbours[0] {
                let (aj, _) = sol.supports[j].unwrap();
                if aj > beta {
                    let x = (beta + aj) / T::lit(2.0);
                    gap_midpoints.push((x, sol.effective_potential(i, x) - l));
                }
            }
            if let Some(j) = neighbours[1] {
                let (_, bj) = sol.supports[j].unwrap();
                if bj < alpha {
                    let x = (bj + alpha) / T::lit(2.0);
                    gap_midpoints.push((x, sol.effective_potential(i, x) - l));
                }
            }
            let scale = pts.iter().fold(T::one(), |m, &x| m.max(sol.fields.scaled(i, x).abs()));
            ElComponent { constant: Some(l), on_support_max, derivative_max, off_support_min, gap_midpoints, scale }
        })
        .collect();
    ElReport { components }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndpointSide {
    Left,
    Right,
}

/// Log–log least-squares fit ρ ≈ C·d^γ over the 10% of the support next to one endpoint.
pub fn fit_edge_exponent<T: Real>(
    cells: &CellMeasure<T>,
    support: (T, T),
    side: EndpointSide,
) -> Option<(T, T, usize)> {
    let (alpha, beta) = support;
    let reach = (beta - alpha) / T::lit(10.0);
    let mut pts = vec![];
    for c in 0..cells.cells() {
        let x = cells.midpoint(c);
        let h = cells.width(c);
        let d = match side {
            EndpointSide::Right => beta - x,
            EndpointSide::Left => x - alpha,
        };
        let density = cells.cell_density(c);
        // Skip the partially covered outermost cell.
        if d > h && d <= reach && density > T::zero() {
            pts.push((d.ln(), density.ln()));
        }
    }
    let n = pts.len();
    if n < 4 {
        return None;
    }
    let nf = T::from_usize_lossy(n);
    let mx = pts.iter().map(|p| p.0).sum::<T>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<T>() / nf;
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let gamma = sxy / sxx;
    let coeff = (my - gamma * mx).exp();
    Some((gamma, coeff, n))
}

/// Edge exponent and leading coefficient of ρ_i at one endpoint of the grid solution.
pub fn edge_exponent_fit<T: Real>(
    sol: &EquilibriumSolution<T>,
    i: usize,
    side: EndpointSide,
) -> Result<(T, T), EquilibriumError<T>> {
    let cells = &sol.measures.components[i];
    let support = sol.supports[i].ok_or(EquilibriumError::InsufficientResolution { component: i, cells: 0 })?;
    let in_support = (0..cells.cells())
        .filter(|&c| cells.midpoint(c) > support.0 && cells.midpoint(c) < support.1)
        .count();
    if in_support < 32 {
        return Err(EquilibriumError::InsufficientResolution { component: i, cells: in_support });
    }
    fit_edge_exponent(cells, support, side)
        .map(|(g, c, _)| (g, c))
        .ok_or(EquilibriumError::InsufficientResolution { component: i, cells: in_support })
}

/// Whether each support lies in [x_i(t) − ε, x_i(t) + ε].
pub fn support_containment_check<T: Real>(sol: &EquilibriumSolution<T>, fields: &ExternalFieldSet<T>, eps: T) -> Vec<bool> {
    sol.supports
        .iter()
        .zip(&fields.centers)
        .map(|(s, &c)| match s {
            Some((a, b)) => *a >= c - eps && *b <= c + eps,
            None => true,
        })
        .collect()
}
