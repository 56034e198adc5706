use serde::{Deserialize, Serialize};

use super::diagnostics::el_residual;
use super::{EquilibriumError, EquilibriumSolution};
use crate::potential::{chebyshev_u_sum, LogMeasure, OneCutDensity, Side};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineStats<T> {
    pub sweeps: usize,
    /// Largest endpoint movement in each sweep.
    pub movement: Vec<T>,
}

const NODES: usize = 64;

fn chebyshev_nodes<T: Real>(n: usize) -> Vec<T> {
    (0..n)
        .map(|k| (T::PI() * (T::from_usize_lossy(k) + T::lit(0.5)) / T::from_usize_lossy(n)).cos())
        .collect()
}

/// Chebyshev coefficients f ≈ Σ d_j T_j from values at first-kind nodes.
fn chebyshev_coefficients<T: Real>(values: &[T]) -> Vec<T> {
    let n = values.len();
    let nf = T::from_usize_lossy(n);
    (0..n)
        .map(|j| {
            let s: T = values
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    v * (T::PI() * T::from_usize_lossy(j) * (T::from_usize_lossy(k) + T::lit(0.5)) / nf).cos()
                })
                .sum();
            let d = T::lit(2.0) * s / nf;
            if j == 0 { d / T::lit(2.0) } else { d }
        })
        .collect()
}

struct Others<'a, T: Real> {
    measures: Vec<(T, &'a dyn LogMeasure<T>)>,
}

impl<T: Real> Others<'_, T> {
    /// Q_i'(x) = V_i'(x)/T − 2Σ_{j≠i} a_ij F_j(x).
    fn field_derivative(&self, sol: &EquilibriumSolution<T>, i: usize, x: T) -> T {
        let mut d = sol.fields.derivative(i, x) / sol.fields.temperature;
        for &(a, m) in &self.measures {
            d -= T::lit(2.0) * a * m.cauchy_boundary(x, Side::Plus).re;
        }
        d
    }

    fn collides(&self, alpha: T, beta: T) -> bool {
        self.measures.iter().any(|(_, m)| match m.support() {
            Some((lo, hi)) => lo <= beta && hi >= alpha,
            None => false,
        })
    }
}

/// Endpoint conditions (d₀, r·d₁/4 − m) and the Chebyshev data of Q_i' on [α, β].
fn endpoint_residual<T: Real>(
    sol: &EquilibriumSolution<T>,
    i: usize,
    others: &Others<'_, T>,
    mass: T,
    alpha: T,
    beta: T,
    nodes: &[T],
) -> ([T; 2], Vec<T>) {
    let (c, r) = ((alpha + beta) / T::lit(2.0), (beta - alpha) / T::lit(2.0));
    let values: Vec<T> = nodes.iter().map(|&s| others.field_derivative(sol, i, c + r * s)).collect();
    let d = chebyshev_coefficients(&values);
    ([d[0], r * d[1] / T::lit(4.0) - mass], d)
}

fn solve_component<T: Real>(
    sol: &EquilibriumSolution<T>,
    i: usize,
    others: &Others<'_, T>,
    start: (T, T),
) -> Result<OneCutDensity<T>, EquilibriumError<T>> {
    let mass = sol.measures.targets[i];
    let nodes = chebyshev_nodes::<T>(NODES);
    let (mut alpha, mut beta) = start;
    let split = |reason: &str| EquilibriumError::SupportSplitDetected { component: i, reason: reason.to_string() };
    let scale = |d: &[T]| d.iter().fold(T::zero(), |m, &v| m.max(v.abs())).max(T::one());
    let (mut res, mut d) = endpoint_residual(sol, i, others, mass, alpha, beta, &nodes);
    let norm = |r: &[T; 2], s: T| (r[0] / s).abs().max((r[1] / mass).abs());
    let tiny = T::epsilon() * T::lit(64.0);
    for _ in 0..60 {
        let s = scale(&d);
        if norm(&res, s) <= tiny {
            break;
        }
        let r = (beta - alpha) / T::lit(2.0);
        let h = r * T::lit(1e-6);
        let col = |da: T, db: T| {
            let (p, _) = endpoint_residual(sol, i, others, mass, alpha + da, beta + db, &nodes);
            let (m, _) = endpoint_residual(sol, i, others, mass, alpha - da, beta - db, &nodes);
            [(p[0] - m[0]) / (T::lit(2.0) * h), (p[1] - m[1]) / (T::lit(2.0) * h)]
        };
        let ja = col(h, T::zero());
        let jb = col(T::zero(), h);
        let det = ja[0] * jb[1] - jb[0] * ja[1];
        if det == T::zero() || !det.is_finite() {
            return Err(split("singular endpoint Jacobian"));
        }
        let step_a = (res[0] * jb[1] - jb[0] * res[1]) / det;
        let step_b = (ja[0] * res[1] - res[0] * ja[1]) / det;
        let mut theta = T::one();
        let current = norm(&res, s);
        let mut moved = false;
        for _ in 0..30 {
            let (na, nb) = (alpha - theta * step_a, beta - theta * step_b);
            if nb > na && !others.collides(na, nb) {
                let (nr, nd) = endpoint_residual(sol, i, others, mass, na, nb, &nodes);
                if norm(&nr, scale(&nd)) < current {
                    alpha = na;
                    beta = nb;
                    res = nr;
                    d = nd;
                    moved = true;
                    break;
                }
            }
            theta /= T::lit(2.0);
        }
        if !moved {
            break;
        }
    }
    if others.collides(alpha, beta) {
        return Err(split("candidate interval meets another support"));
    }
    let r = (beta - alpha) / T::lit(2.0);
    let two_pi_r = T::lit(2.0) * T::PI() * r;
    let mut coeffs: Vec<T> = d[1..].iter().map(|&v| v / two_pi_r).collect();
    let cmax = coeffs.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    while coeffs.len() > 1 && coeffs.last().is_some_and(|v| v.abs() <= cmax * T::epsilon()) {
        coeffs.pop();
    }
    let hmin = (0..=400)
        .map(|k| chebyshev_u_sum(&coeffs, -T::one() + T::lit(2.0) * T::from_usize_lossy(k) / T::lit(400.0)))
        .fold(T::infinity(), T::min);
    if hmin < -T::lit(1e-10) * cmax {
        return Err(split("density changes sign on the candidate interval"));
    }
    Ok(OneCutDensity { alpha, beta, coeffs })
}

/// Cyclic one-interval refinement in the effective fields of the other components.
pub fn refine_one_cut<T: Real>(
    sol: &EquilibriumSolution<T>,
    tol: T,
) -> Result<(EquilibriumSolution<T>, RefineStats<T>), EquilibriumError<T>> {
    let m = sol.components();
    if !sol.supports_disjoint() {
        return Err(EquilibriumError::SupportSplitDetected { component: 0, reason: "supports are not disjoint".into() });
    }
    let mut work = sol.clone();
    if work.refined.is_empty() {
        work.refined = vec![None; m];
    }
    let mut stats = RefineStats { sweeps: 0, movement: vec![] };
    for _ in 0..200 {
        let mut movement = T::zero();
        for i in 0..m {
            let Some(start) = work.refined[i].as_ref().map(|d| (d.alpha, d.beta)).or(work.supports[i]) else {
                continue;
            };
            let updated = {
                let others = Others {
                    measures: (0..m)
                        .filter(|&j| j != i && work.interaction[i][j] != T::zero() && work.measures.targets[j] > T::zero())
                        .map(|j| (work.interaction[i][j], work.measure(j)))
                        .collect(),
                };
                solve_component(&work, i, &others, start)?
            };
            movement = movement.max((updated.alpha - start.0).abs()).max((updated.beta - start.1).abs());
            work.supports[i] = Some((updated.alpha, updated.beta));
            work.refined[i] = Some(updated);
        }
        stats.sweeps += 1;
        stats.movement.push(movement);
        if movement < tol {
            let report = el_residual(&work);
            work.constants = report.components.iter().map(|c| c.constant).collect();
            work.residual = report.residual();
            work.energy = refined_energy(&work);
            return Ok((work, stats));
        }
    }
    Err(EquilibriumError::MaxIterationsExceeded {
        iterations: stats.sweeps,
        residual: stats.movement.last().copied().unwrap_or(T::infinity()),
        best: Box::new(work),
    })
}

/// E(μ) = Σ a_ij I(μ_i, μ_j) + (1/T) Σ ∫ V_i dμ_i by Gauss–Chebyshev quadrature on each support.
fn refined_energy<T: Real>(sol: &EquilibriumSolution<T>) -> T {
    let n = 200;
    let mut total = T::zero();
    for i in 0..sol.components() {
        let Some(Some(d)) = sol.refined.get(i) else { continue };
        let (c, r) = (d.centre(), d.radius());
        for k in 1..=n {
            let theta = T::PI() * T::from_usize_lossy(k) / T::from_usize_lossy(n + 1);
            let s = theta.cos();
            let weight = T::PI() / T::from_usize_lossy(n + 1) * theta.sin() * theta.sin();
            let x = c + r * s;
            let mu = r * r * chebyshev_u_sum(&d.coeffs, s) * weight;
            let mut integrand = sol.fields.scaled(i, x);
            for j in 0..sol.components() {
                let a = sol.interaction[i][j];
                if a != T::zero() && sol.measures.targets[j] > T::zero() {
                    integrand += a * sol.measure(j).potential(x);
                }
            }
            total += integrand * mu;
        }
    }
    total
}
