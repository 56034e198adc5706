//! Numerical solution of the graph-indexed vector equilibrium problem.

pub mod diagnostics;
pub mod energy;
pub mod fields;
pub mod onecut;
pub mod qp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{interaction_matrix, PathTree, ProblemConfig};
use crate::linalg::{FullPivLu, Matrix};
use crate::potential::{CellMeasure, LogMeasure, OneCutDensity};
use crate::scalar::{linspace, Real};

pub use diagnostics::{edge_exponent_fit, el_residual, support_containment_check, ElComponent, ElReport, EndpointSide};
pub use energy::{assemble_energy, DiscreteEnergy, GridOverlapWarning};
pub use fields::ExternalFieldSet;
pub use onecut::{refine_one_cut, RefineStats};
pub use qp::{solve_grid_qp, QpResult, QpSettings};

#[derive(Debug, Error)]
pub enum EquilibriumError<T: Real> {
    #[error("solver stopped after {iterations} iterations with residual {residual:e}")]
    MaxIterationsExceeded { iterations: usize, residual: T, best: Box<EquilibriumSolution<T>> },
    #[error("component {component}: support splits or meets another support ({reason})")]
    SupportSplitDetected { component: usize, reason: String },
    #[error("component {component} has only {cells} usable cells near the requested endpoint")]
    InsufficientResolution { component: usize, cells: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Per-component discretized measures and their target masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureVector<T> {
    pub components: Vec<CellMeasure<T>>,
    pub targets: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution<T> {
    pub fields: ExternalFieldSet<T>,
    pub interaction: Vec<Vec<T>>,
    pub measures: MeasureVector<T>,
    /// One-cut representations after refinement; empty when not refined.
    pub refined: Vec<Option<OneCutDensity<T>>>,
    pub supports: Vec<Option<(T, T)>>,
    pub constants: Vec<Option<T>>,
    pub residual: T,
    pub energy: T,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<GridOverlapWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings<T> {
    /// Cells per component on the first pass.
    pub initial_cells: usize,
    /// Cells per component after re-gridding around the detected support.
    pub cells: usize,
    pub tol: T,
    pub max_iters: usize,
    /// Relative density threshold for support detection.
    pub support_threshold: T,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        Self { initial_cells: 512, cells: 512, tol: T::lit(1e-6), max_iters: 100_000, support_threshold: T::lit(1e-6) }
    }
}

impl<T: Real> EquilibriumSolution<T> {
    pub fn components(&self) -> usize {
        self.measures.components.len()
    }

    pub fn is_refined(&self) -> bool {
        !self.refined.is_empty()
    }

    pub fn interaction_matrix(&self) -> Matrix<T> {
        Matrix::from_rows(&self.interaction)
    }

    /// Best available representation of μ_i.
    pub fn measure(&self, i: usize) -> &dyn LogMeasure<T> {
        match self.refined.get(i) {
            Some(Some(d)) => d,
            _ => &self.measures.components[i],
        }
    }

    pub fn density(&self, i: usize, x: T) -> T {
        self.measure(i).density(x)
    }

    /// Effective potential U_i(x) = 2Σ_j a_ij U^{μ_j}(x) + V_i(x)/T.
    pub fn effective_potential(&self, i: usize, x: T) -> T {
        let mut u = self.fields.scaled(i, x);
        for j in 0..self.components() {
            let a = self.interaction[i][j];
            if a != T::zero() && self.measures.targets[j] > T::zero() {
                u += T::lit(2.0) * a * self.measure(j).potential(x);
            }
        }
        u
    }

    /// Derivative of the effective potential, with principal values on supports.
    pub fn effective_potential_derivative(&self, i: usize, x: T) -> T {
        let mut d = self.fields.derivative(i, x) / self.fields.temperature;
        for j in 0..self.components() {
            let a = self.interaction[i][j];
            if a != T::zero() && self.measures.targets[j] > T::zero() {
                d -= T::lit(2.0) * a * self.measure(j).cauchy_boundary(x, crate::potential::Side::Plus).re;
            }
        }
        d
    }

    /// True when consecutive positive-mass supports satisfy β_{i+1} < α_i.
    pub fn supports_disjoint(&self) -> bool {
        let present: Vec<(T, T)> = self.supports.iter().flatten().copied().collect();
        present.windows(2).all(|w| w[1].1 < w[0].0)
    }
}

/// Cell masses of a semicircle of radius `radius` about `centre` on the given grid.
fn semicircle_weights<T: Real>(grid: &[T], centre: T, radius: T, mass: T) -> Vec<T> {
    let cdf = |x: T| {
        let s = ((x - centre) / radius).max(-T::one()).min(T::one());
        (s * (T::one() - s * s).sqrt() + s.asin()) / T::PI() + T::lit(0.5)
    };
    let mut w: Vec<T> = grid.windows(2).map(|c| (cdf(c[1]) - cdf(c[0])).max(T::zero())).collect();
    let total: T = w.iter().copied().sum();
    if total > T::zero() {
        for x in &mut w {
            *x *= mass / total;
        }
    } else {
        let mid = w.len() / 2;
        w[mid] = mass;
    }
    w
}

/// Transfers a piecewise-constant density onto a new grid by exact cell overlaps.
fn transfer<T: Real>(old: &CellMeasure<T>, grid: &[T]) -> Vec<T> {
    grid.windows(2)
        .map(|c| {
            let mut acc = T::zero();
            for k in 0..old.cells() {
                let lo = c[0].max(old.edges[k]);
                let hi = c[1].min(old.edges[k + 1]);
                if hi > lo {
                    acc += old.cell_density(k) * (hi - lo);
                }
            }
            acc
        })
        .collect()
}

/// Least-squares quadratic through (x, y), returning its zero on the outer side of the data.
fn quadratic_root_fit<T: Real>(xs: &[T], ys: &[T], toward_right: bool) -> Option<T> {
    let nf = T::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<T>() / nf;
    let scale = xs.iter().fold(T::zero(), |m, &x| m.max((x - mx).abs()));
    if scale <= T::zero() {
        return None;
    }
    let mut normal = Matrix::zeros(3, 3);
    let mut rhs = vec![T::zero(); 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let u = (x - mx) / scale;
        let basis = [T::one(), u, u * u];
        for r in 0..3 {
            rhs[r] += basis[r] * y;
            for c in 0..3 {
                normal[(r, c)] += basis[r] * basis[c];
            }
        }
    }
    let lu = FullPivLu::new(&normal);
    if !lu.is_invertible() {
        return None;
    }
    let coef = lu.solve(&rhs);
    let (a0, a1, a2) = (coef[0], coef[1], coef[2]);
    let outward = if toward_right { T::one() } else { -T::one() };
    // Density² must decrease outward at the data centre.
    if a1 * outward >= T::zero() {
        return None;
    }
    let u = if a2.abs() <= T::epsilon() * a1.abs() {
        -a0 / a1
    } else {
        let disc = a1 * a1 - T::lit(4.0) * a2 * a0;
        if disc < T::zero() {
            return None;
        }
        let sq = disc.sqrt();
        let roots = [(-a1 + sq) / (T::lit(2.0) * a2), (-a1 - sq) / (T::lit(2.0) * a2)];
        let mut best: Option<T> = None;
        for r in roots {
            if r * outward > -T::one() && best.is_none_or(|b| (r - outward).abs() < (b - outward).abs()) {
                best = Some(r);
            }
        }
        best?
    };
    Some(mx + u * scale)
}

/// Support detection: thresholded cells plus square-root extrapolation of each endpoint.
pub fn detect_support<T: Real>(cells: &CellMeasure<T>, threshold: T) -> Option<(T, T)> {
    let dens: Vec<T> = (0..cells.cells()).map(|c| cells.cell_density(c)).collect();
    let peak = dens.iter().fold(T::zero(), |m, &d| m.max(d));
    if peak <= T::zero() {
        return None;
    }
    let inside: Vec<usize> = (0..dens.len()).filter(|&c| dens[c] > threshold * peak).collect();
    let (first, last) = (*inside.first()?, *inside.last()?);
    let span = last - first + 1;
    let k = (span / 20).max(3);
    let fit_edge = |cells_idx: Vec<usize>, fallback: T, toward_right: bool| -> T {
        if cells_idx.len() < 3 {
            return fallback;
        }
        let xs: Vec<T> = cells_idx.iter().map(|&c| cells.midpoint(c)).collect();
        let ys: Vec<T> = cells_idx.iter().map(|&c| dens[c] * dens[c]).collect();
        let Some(root) = quadratic_root_fit(&xs, &ys, toward_right) else {
            return fallback;
        };
        let h = cells.width(if toward_right { last } else { first });
        let (lo, hi) = if toward_right {
            (cells.midpoint(last - 1), cells.edges[last + 1] + h)
        } else {
            (cells.edges[first] - h, cells.midpoint(first + 1))
        };
        if root >= lo && root <= hi {
            root
        } else {
            fallback
        }
    };
    if span < 6 {
        return Some((cells.edges[first], cells.edges[last + 1]));
    }
    let right: Vec<usize> = ((last - k)..last).collect();
    let left: Vec<usize> = ((first + 1)..=(first + k)).collect();
    let beta = fit_edge(right, cells.edges[last + 1], true);
    let alpha = fit_edge(left, cells.edges[first], false);
    Some((alpha, beta))
}

fn touches_edge<T: Real>(cells: &CellMeasure<T>, threshold: T) -> (bool, bool) {
    let dens: Vec<T> = (0..cells.cells()).map(|c| cells.cell_density(c)).collect();
    let peak = dens.iter().fold(T::zero(), |m, &d| m.max(d));
    if peak <= T::zero() {
        return (false, false);
    }
    let on = |c: usize| dens[c] > threshold * peak;
    (on(0) || on(1), on(dens.len() - 1) || on(dens.len() - 2))
}

struct Pass<T> {
    grids: Vec<Vec<T>>,
    result: QpResult<T>,
    energy: DiscreteEnergy<T>,
}

fn run_pass<T: Real>(
    fields: &ExternalFieldSet<T>,
    a: &Matrix<T>,
    masses: &[T],
    grids: Vec<Vec<T>>,
    initial: Vec<T>,
    settings: &SolverSettings<T>,
) -> Pass<T> {
    let energy = assemble_energy(fields, a, &grids);
    let result = solve_grid_qp(&energy, masses, &QpSettings { tol: settings.tol, max_iters: settings.max_iters }, Some(initial));
    Pass { grids, result, energy }
}

fn split_measures<T: Real>(grids: &[Vec<T>], offsets: &[usize], w: &[T]) -> Vec<CellMeasure<T>> {
    grids
        .iter()
        .enumerate()
        .map(|(i, g)| CellMeasure::new(g.clone(), w[offsets[i]..offsets[i + 1]].to_vec()))
        .collect()
}

/// Grid solve with one adaptive re-grid, expanding any grid the support reaches.
pub fn solve<T: Real>(
    config: &ProblemConfig<T>,
    tree: &PathTree,
    settings: &SolverSettings<T>,
) -> Result<EquilibriumSolution<T>, EquilibriumError<T>> {
    solve_with_masses(config, tree, &tree.masses(), settings)
}

/// As [`solve`] with explicit component masses (zero allowed).
pub fn solve_with_masses<T: Real>(
    config: &ProblemConfig<T>,
    tree: &PathTree,
    masses: &[T],
    settings: &SolverSettings<T>,
) -> Result<EquilibriumSolution<T>, EquilibriumError<T>> {
    config.validate().map_err(|e| EquilibriumError::InvalidInput(e.to_string()))?;
    if masses.len() != tree.edge_count() || masses.iter().any(|&m| m < T::zero()) {
        return Err(EquilibriumError::InvalidInput("one nonnegative mass per edge required".into()));
    }
    if settings.initial_cells < 8 || settings.cells < 8 {
        return Err(EquilibriumError::InvalidInput("at least 8 cells per component".into()));
    }
    let fields = ExternalFieldSet::new(config, tree);
    let a = interaction_matrix(tree).to_real::<T>();
    let m = tree.edge_count();
    let w0 = fields.width();
    let three = T::lit(3.0);

    let mut grids: Vec<Vec<T>> = (0..m)
        .map(|i| {
            if masses[i] > T::zero() {
                linspace(fields.centers[i] - three * w0, fields.centers[i] + three * w0, settings.initial_cells + 1)
            } else {
                vec![fields.centers[i] - w0, fields.centers[i] + w0]
            }
        })
        .collect();
    let mut initial: Vec<T> = grids
        .iter()
        .enumerate()
        .flat_map(|(i, g)| {
            let radius = (T::lit(4.0) * masses[i] * fields.temperature / (T::lit(2.0) * fields.curvature)).sqrt();
            let h = g[1] - g[0];
            semicircle_weights(g, fields.centers[i], radius.max(T::lit(2.0) * h), masses[i])
        })
        .collect();

    let mut total_iters = 0;
    let mut regridded = false;
    let mut expansions = 0;
    loop {
        let pass = run_pass(&fields, &a, masses, grids, initial, settings);
        total_iters += pass.result.iterations;
        let measures = split_measures(&pass.grids, &pass.energy.offsets, &pass.result.weights);
        if !pass.result.converged {
            let best = assemble_solution(&fields, &a, masses, measures, &pass.result, total_iters, &pass.energy, settings);
            return Err(EquilibriumError::MaxIterationsExceeded {
                iterations: total_iters,
                residual: pass.result.residual,
                best: Box::new(best),
            });
        }
        let mut expanded = false;
        let mut next_grids = pass.grids.clone();
        if expansions < 6 {
            for i in 0..m {
                if masses[i] <= T::zero() {
                    continue;
                }
                let (left, right) = touches_edge(&measures[i], settings.support_threshold);
                if left || right {
                    let g = &pass.grids[i];
                    let (lo, hi) = (g[0], g[g.len() - 1]);
                    let grow = hi - lo;
                    let lo = if left { lo - grow / T::lit(2.0) } else { lo };
                    let hi = if right { hi + grow / T::lit(2.0) } else { hi };
                    next_grids[i] = linspace(lo, hi, g.len());
                    expanded = true;
                }
            }
        }
        if expanded {
            expansions += 1;
            initial = (0..m).flat_map(|i| transfer(&measures[i], &next_grids[i])).collect();
            grids = next_grids;
            continue;
        }
        if regridded {
            return Ok(assemble_solution(&fields, &a, masses, measures, &pass.result, total_iters, &pass.energy, settings));
        }
        for i in 0..m {
            if masses[i] <= T::zero() {
                continue;
            }
            if let Some((lo, hi)) = detect_support(&measures[i], settings.support_threshold) {
                let quarter = (hi - lo) / T::lit(4.0);
                next_grids[i] = linspace(lo - quarter, hi + quarter, settings.cells + 1);
            }
        }
        initial = (0..m).flat_map(|i| transfer(&measures[i], &next_grids[i])).collect();
        grids = next_grids;
        regridded = true;
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble_solution<T: Real>(
    fields: &ExternalFieldSet<T>,
    a: &Matrix<T>,
    masses: &[T],
    measures: Vec<CellMeasure<T>>,
    result: &QpResult<T>,
    iterations: usize,
    energy: &DiscreteEnergy<T>,
    settings: &SolverSettings<T>,
) -> EquilibriumSolution<T> {
    let supports = measures
        .iter()
        .zip(masses)
        .map(|(c, &mass)| if mass > T::zero() { detect_support(c, settings.support_threshold) } else { None })
        .collect();
    let n = a.rows();
    EquilibriumSolution {
        fields: fields.clone(),
        interaction: (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect(),
        measures: MeasureVector { components: measures, targets: masses.to_vec() },
        refined: vec![],
        supports,
        constants: result.constants.clone(),
        residual: result.residual,
        energy: result.energy,
        converged: result.converged,
        iterations,
        warnings: energy.warnings.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semicircle_initial_profile_has_requested_mass() {
        let g = linspace(-2.0f64, 2.0, 81);
        let w = semicircle_weights(&g, 0.0, 1.0, 0.7);
        assert!((w.iter().sum::<f64>() - 0.7).abs() < 1e-14);
        assert_eq!(w[0], 0.0);
    }

    #[test]
    fn transfer_preserves_mass_on_covering_grid() {
        let old = CellMeasure::new(linspace(0.0f64, 1.0, 11), vec![0.1; 10]);
        let w = transfer(&old, &linspace(-0.5, 1.5, 37));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn support_detection_on_sampled_semicircle() {
        let g = linspace(-1.5f64, 1.5, 601);
        let w = semicircle_weights(&g, 0.0, 1.0, 1.0);
        let (a, b) = detect_support(&CellMeasure::new(g, w), 1e-6).unwrap();
        assert!((a + 1.0).abs() < 1e-3 && (b - 1.0).abs() < 1e-3, "{a} {b}");
    }
}
