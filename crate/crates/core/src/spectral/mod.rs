//! ξ- and λ-functions built from an equilibrium solution, with the identities they satisfy.

mod lens;

pub use lens::{lens_feasibility, real_threshold, sign_field_rows, ComplexGridField, LensReport, LensStep, SignRow};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::EquilibriumSolution;
use crate::graph::{leaf_peel_order, PathTree, ProblemConfig, Vertex};
use crate::potential::Side;
use crate::quadrature::composite_gauss_legendre;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("z = {x} lies on the support of component {component}; a side is required")]
    OnCutWithoutSide { component: usize, x: f64 },
    #[error("no contour around component {component} avoids the other supports")]
    ContourIntersectsSupport { component: usize },
    #[error("peel order does not describe the tree")]
    SingularTreeSystem,
    #[error("{point} = {x} lies within one grid cell of a sign change")]
    ResolutionTooCoarse { point: String, x: f64 },
    #[error("sheet {0} out of range")]
    InvalidSheet(usize),
    #[error("edges {0} and {1} are not consecutive")]
    InvalidStep(usize, usize),
    #[error("solution has {found} components, the tree has {expected} edges")]
    ShapeMismatch { expected: usize, found: usize },
}

/// Sheets 0..p belong to starting points a_k, sheets p..p+q to endpoints b_l.
#[derive(Debug, Clone)]
pub struct SpectralContext<T> {
    pub config: ProblemConfig<T>,
    pub tree: PathTree,
    pub solution: EquilibriumSolution<T>,
    /// Additive constants c̃_j of the explicit λ_j.
    pub constants: Vec<T>,
    pub peel_order: Vec<Vertex>,
    /// β_{i_j} with i_j the first edge on sheet j; λ_j has its cut on (−∞, β_{i_j}].
    pub base_points: Vec<Option<T>>,
}

impl<T: Real> SpectralContext<T> {
    pub fn new(config: ProblemConfig<T>, tree: PathTree, solution: EquilibriumSolution<T>) -> Result<Self, SpectralError> {
        let order = leaf_peel_order(&tree);
        Self::with_peel_order(config, tree, solution, order)
    }

    pub fn with_peel_order(
        config: ProblemConfig<T>,
        tree: PathTree,
        solution: EquilibriumSolution<T>,
        order: Vec<Vertex>,
    ) -> Result<Self, SpectralError> {
        if solution.components() != tree.edge_count() {
            return Err(SpectralError::ShapeMismatch { expected: tree.edge_count(), found: solution.components() });
        }
        let sheets = tree.vertex_count();
        let base_points = (0..sheets)
            .map(|j| tree.edges_at_sheet(j).into_iter().find_map(|i| solution.supports[i].map(|s| s.1)))
            .collect();
        let mut ctx = Self { config, tree, solution, constants: vec![T::zero(); sheets], peel_order: order, base_points };
        ctx.constants = solve_lambda_constants(&ctx)?;
        Ok(ctx)
    }

    pub fn sheets(&self) -> usize {
        self.tree.vertex_count()
    }

    pub fn p(&self) -> usize {
        self.tree.p()
    }

    /// Sheets (k(i), p + l(i)) joined along the cut of edge i.
    pub fn edge_sheets(&self, i: usize) -> (usize, usize) {
        let e = self.tree.edges()[i];
        (e.k, self.p() + e.l)
    }

    fn sheet_edges(&self, j: usize) -> Vec<usize> {
        self.tree
            .edges_at_sheet(j)
            .into_iter()
            .filter(|&i| self.solution.measures.targets[i] > T::zero())
            .collect()
    }

    /// Total mass n_k/n or m_l/n carried by sheet j.
    pub fn sheet_mass(&self, j: usize) -> T {
        self.sheet_edges(j).iter().map(|&i| self.solution.measures.targets[i]).sum()
    }

    fn check_sheet(&self, j: usize) -> Result<(), SpectralError> {
        if j < self.sheets() {
            Ok(())
        } else {
            Err(SpectralError::InvalidSheet(j))
        }
    }

    /// Linear part (z − a_k)/(Tt) or −(z − b_l)/(T(1−t)) of ξ_j.
    fn xi_polynomial(&self, j: usize, z: Complex<T>) -> Complex<T> {
        let (t, temp) = (self.config.t, self.config.temperature);
        let p = self.p();
        if j < p {
            (z - self.config.a[j]) / (temp * t)
        } else {
            -(z - self.config.b[j - p]) / (temp * (T::one() - t))
        }
    }

    /// Quadratic part (z − a_k)²/(2Tt) or −(z − b_l)²/(2T(1−t)) of λ_j.
    fn lambda_polynomial(&self, j: usize, z: Complex<T>) -> Complex<T> {
        let (t, temp) = (self.config.t, self.config.temperature);
        let p = self.p();
        let two = T::lit(2.0);
        if j < p {
            let d = z - self.config.a[j];
            d * d / (two * temp * t)
        } else {
            let d = z - self.config.b[j - p];
            -(d * d) / (two * temp * (T::one() - t))
        }
    }
}

fn on_support<T: Real>(sol: &EquilibriumSolution<T>, i: usize, x: T) -> bool {
    sol.measure(i).support().is_some_and(|(lo, hi)| x > lo && x < hi)
}

/// F_i(z) = ∫ dμ_i(x)/(z − x); real z on the support needs a side.
pub fn cauchy_transform<T: Real>(
    sol: &EquilibriumSolution<T>,
    i: usize,
    z: Complex<T>,
    side: Option<Side>,
) -> Result<Complex<T>, SpectralError> {
    let m = sol.measure(i);
    if z.im != T::zero() {
        return Ok(m.cauchy(z));
    }
    match side {
        Some(s) => Ok(m.cauchy_boundary(z.re, s)),
        None if on_support(sol, i, z.re) => {
            Err(SpectralError::OnCutWithoutSide { component: i, x: z.re.to_f64_lossy() })
        }
        None => Ok(m.cauchy_boundary(z.re, Side::Plus)),
    }
}

/// ξ_k = −Σ_{k(i)=k} F_i + (z − a_k)/(Tt) and ξ_{p+l} = Σ_{l(i)=l} F_i − (z − b_l)/(T(1−t)).
pub fn xi<T: Real>(ctx: &SpectralContext<T>, j: usize, z: Complex<T>, side: Option<Side>) -> Result<Complex<T>, SpectralError> {
    ctx.check_sheet(j)?;
    let mut sum = Complex::new(T::zero(), T::zero());
    for i in ctx.sheet_edges(j) {
        sum = sum + cauchy_transform(&ctx.solution, i, z, side)?;
    }
    let sign = if j < ctx.p() { -T::one() } else { T::one() };
    Ok(sum * sign + ctx.xi_polynomial(j, z))
}

/// ξ_j at x ± iδ, a cross-check for the principal-value boundary values.
pub fn xi_offset<T: Real>(ctx: &SpectralContext<T>, j: usize, x: T, side: Side, delta: T) -> Result<Complex<T>, SpectralError> {
    let im = match side {
        Side::Plus => delta,
        Side::Minus => -delta,
    };
    xi(ctx, j, Complex::new(x, im), None)
}

/// ξ_j(z) minus its two leading terms at infinity; O(1/z²).
pub fn xi_remainder<T: Real>(ctx: &SpectralContext<T>, j: usize, z: Complex<T>) -> Result<Complex<T>, SpectralError> {
    let value = xi(ctx, j, z, None)?;
    let lead = z.inv() * ctx.sheet_mass(j);
    let sign = if j < ctx.p() { T::one() } else { -T::one() };
    Ok(value - ctx.xi_polynomial(j, z) + lead * sign)
}

/// Test points in the interior of support i (Chebyshev distribution, ends trimmed).
pub fn support_test_points<T: Real>(sol: &EquilibriumSolution<T>, i: usize, n: usize) -> Vec<T> {
    let Some((alpha, beta)) = sol.supports[i] else { return vec![] };
    let (c, r) = ((alpha + beta) / T::lit(2.0), (beta - alpha) / T::lit(2.0));
    let nf = T::from_usize_lossy(n + 1);
    let mut pts: Vec<T> = (1..=n).map(|k| c + r * (T::PI() * T::from_usize_lossy(k) / nf).cos()).collect();
    if !sol.is_refined() || sol.refined[i].is_none() {
        // Stay clear of the edge cells of a grid measure.
        let cells = &sol.measures.components[i];
        let h = cells.width(0).max(cells.width(cells.cells() - 1));
        pts.retain(|&x| x > alpha + T::lit(3.0) * h && x < beta - T::lit(3.0) * h);
    }
    pts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport<T> {
    /// max |ξ_{k(i),±} − ξ_{p+l(i),∓}| over support test points.
    pub gluing: T,
    /// max |Σ_j ξ_{j,+} − Σ_j ξ_{j,−}| over support test points.
    pub sum_rule: T,
    /// max |Im ξ_{k(i),+}/π − ρ_i| over support test points.
    pub density: T,
}

pub fn boundary_identities<T: Real>(ctx: &SpectralContext<T>, points_per_support: usize) -> Result<IdentityReport<T>, SpectralError> {
    let sol = &ctx.solution;
    let mut report = IdentityReport { gluing: T::zero(), sum_rule: T::zero(), density: T::zero() };
    for i in 0..sol.components() {
        let (ka, lb) = ctx.edge_sheets(i);
        for x in support_test_points(sol, i, points_per_support) {
            let z = Complex::new(x, T::zero());
            let (plus, minus) = (Some(Side::Plus), Some(Side::Minus));
            let g1 = (xi(ctx, ka, z, plus)? - xi(ctx, lb, z, minus)?).norm();
            let g2 = (xi(ctx, ka, z, minus)? - xi(ctx, lb, z, plus)?).norm();
            report.gluing = report.gluing.max(g1).max(g2);
            let mut total = Complex::new(T::zero(), T::zero());
            for j in 0..ctx.sheets() {
                total = total + xi(ctx, j, z, plus)? - xi(ctx, j, z, minus)?;
            }
            report.sum_rule = report.sum_rule.max(total.norm());
            let rho = xi(ctx, ka, z, plus)?.im / T::PI();
            report.density = report.density.max((rho - sol.density(i, x)).abs());
        }
    }
    Ok(report)
}

/// ∮ ξ_j dz counterclockwise around support i, on a rectangle clear of all other supports.
pub fn contour_integral_xi<T: Real>(ctx: &SpectralContext<T>, j: usize, i: usize) -> Result<Complex<T>, SpectralError> {
    ctx.check_sheet(j)?;
    let sol = &ctx.solution;
    let err = SpectralError::ContourIntersectsSupport { component: i };
    let (alpha, beta) = sol.supports[i].ok_or(err.clone())?;
    let mut clearance = (beta - alpha) / T::lit(2.0);
    for (k, s) in sol.supports.iter().enumerate() {
        let Some((lo, hi)) = *s else { continue };
        if k == i || sol.measures.targets[k] <= T::zero() {
            continue;
        }
        let gap = if lo > beta { lo - beta } else if hi < alpha { alpha - hi } else { return Err(err) };
        clearance = clearance.min(gap / T::lit(2.0));
    }
    if clearance <= T::zero() {
        return Err(err);
    }
    let corners = [
        Complex::new(alpha - clearance, -clearance),
        Complex::new(beta + clearance, -clearance),
        Complex::new(beta + clearance, clearance),
        Complex::new(alpha - clearance, clearance),
    ];
    let (nodes, weights) = composite_gauss_legendre(T::zero(), T::one(), 32, 20);
    let mut total = Complex::new(T::zero(), T::zero());
    for side in 0..4 {
        let (from, to) = (corners[side], corners[(side + 1) % 4]);
        let dz = to - from;
        for (&s, &w) in nodes.iter().zip(&weights) {
            total = total + xi(ctx, j, from + dz * s, None)? * dz * w;
        }
    }
    Ok(total)
}

/// Re ∫ log(z − x) dμ summed over the edges of sheet j.
fn sheet_log_integral<T: Real>(ctx: &SpectralContext<T>, j: usize, z: Complex<T>, side: Side) -> Complex<T> {
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in ctx.sheet_edges(j) {
        acc = acc + ctx.solution.measure(i).log_integral(z, side);
    }
    acc
}

/// λ_j from the explicit potentials, without the constant c̃_j.
fn lambda_bare<T: Real>(ctx: &SpectralContext<T>, j: usize, z: Complex<T>, side: Side) -> Complex<T> {
    let logs = sheet_log_integral(ctx, j, z, side);
    let sign = if j < ctx.p() { -T::one() } else { T::one() };
    logs * sign + ctx.lambda_polynomial(j, z)
}

/// λ_j(z). The real part is single valued; the imaginary part depends on the branch.
pub fn lambda<T: Real>(ctx: &SpectralContext<T>, j: usize, z: Complex<T>, side: Side) -> Result<Complex<T>, SpectralError> {
    ctx.check_sheet(j)?;
    Ok(lambda_bare(ctx, j, z, side) + ctx.constants[j])
}

/// λ_j(z) − (polynomial) ± (mass) log z − c̃_j, which is O(1/z).
pub fn lambda_remainder<T: Real>(ctx: &SpectralContext<T>, j: usize, z: Complex<T>) -> Result<Complex<T>, SpectralError> {
    let value = lambda(ctx, j, z, Side::Plus)?;
    let sign = if j < ctx.p() { T::one() } else { -T::one() };
    Ok(value - ctx.lambda_polynomial(j, z) + z.ln() * (ctx.sheet_mass(j) * sign) - ctx.constants[j])
}

/// Re(λ_{k(i)} − λ_{p+l(i)})(x) on the real line.
pub fn lambda_difference<T: Real>(ctx: &SpectralContext<T>, i: usize, x: T) -> T {
    let (ka, lb) = ctx.edge_sheets(i);
    let z = Complex::new(x, T::zero());
    (lambda_bare(ctx, ka, z, Side::Plus) - lambda_bare(ctx, lb, z, Side::Plus)).re + ctx.constants[ka] - ctx.constants[lb]
}

/// c̃_j making Re λ_{k(i)}(β_i) = Re λ_{p+l(i)}(β_i) on every edge; the last vertex of the peel order gets 0.
pub fn solve_lambda_constants<T: Real>(ctx: &SpectralContext<T>) -> Result<Vec<T>, SpectralError> {
    let tree = &ctx.tree;
    let p = tree.p();
    let order = &ctx.peel_order;
    if order.len() != tree.vertex_count() {
        return Err(SpectralError::SingularTreeSystem);
    }
    let mut constants: Vec<Option<T>> = vec![None; tree.vertex_count()];
    constants[order[order.len() - 1].index(p)] = Some(T::zero());
    for pos in (0..order.len() - 1).rev() {
        let v = order[pos].index(p);
        let later: Vec<usize> = order[pos + 1..].iter().map(|u| u.index(p)).collect();
        let edge = (0..tree.edge_count()).find(|&i| {
            let (a, b) = tree.edge_vertices(i);
            let (a, b) = (a.index(p), b.index(p));
            (a == v && later.contains(&b)) || (b == v && later.contains(&a))
        });
        let i = edge.ok_or(SpectralError::SingularTreeSystem)?;
        let (ka, lb) = ctx.edge_sheets(i);
        let x = edge_anchor(ctx, i);
        let z = Complex::new(x, T::zero());
        let jump = (lambda_bare(ctx, ka, z, Side::Plus) - lambda_bare(ctx, lb, z, Side::Plus)).re;
        // jump + c̃_k − c̃_{p+l} = 0
        let known = if v == ka { lb } else { ka };
        let c = constants[known].ok_or(SpectralError::SingularTreeSystem)?;
        constants[v] = Some(if v == ka { c - jump } else { c + jump });
    }
    constants.into_iter().map(|c| c.ok_or(SpectralError::SingularTreeSystem)).collect()
}

/// β_i, or the field centre for a zero-mass edge.
fn edge_anchor<T: Real>(ctx: &SpectralContext<T>, i: usize) -> T {
    ctx.solution.supports[i].map(|s| s.1).unwrap_or(ctx.solution.fields.centers[i])
}

/// max_i |Re λ_{k(i)}(β_i) − Re λ_{p+l(i)}(β_i)|.
pub fn lambda_condition_residual<T: Real>(ctx: &SpectralContext<T>) -> T {
    (0..ctx.tree.edge_count())
        .map(|i| lambda_difference(ctx, i, edge_anchor(ctx, i)).abs())
        .fold(T::zero(), T::max)
}

/// One row of the "sheet,x,re,im" boundary-value export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetRow<T> {
    pub sheet: usize,
    pub x: T,
    pub re: T,
    pub im: T,
}

/// ξ_{j,+} on `xs` for every sheet (sheets numbered from 1).
pub fn xi_boundary_rows<T: Real>(ctx: &SpectralContext<T>, xs: &[T]) -> Result<Vec<SheetRow<T>>, SpectralError> {
    let mut rows = vec![];
    for j in 0..ctx.sheets() {
        for &x in xs {
            let v = xi(ctx, j, Complex::new(x, T::zero()), Some(Side::Plus))?;
            rows.push(SheetRow { sheet: j + 1, x, re: v.re, im: v.im });
        }
    }
    Ok(rows)
}

/// Re(λ_{k(i)} − λ_{p+l(i)}) on `xs` for every edge (edges numbered from 1, im = 0).
pub fn lambda_difference_rows<T: Real>(ctx: &SpectralContext<T>, xs: &[T]) -> Vec<SheetRow<T>> {
    (0..ctx.tree.edge_count())
        .flat_map(|i| xs.iter().map(move |&x| SheetRow { sheet: i + 1, x, re: lambda_difference(ctx, i, x), im: T::zero() }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{ExternalFieldSet, MeasureVector};
    use crate::graph::{build_tree, TransitionMatrix};
    use crate::potential::{CellMeasure, OneCutDensity};

    fn semicircle_context() -> SpectralContext<f64> {
        let config = ProblemConfig::new(vec![0.0], vec![0.0], 0.5, 1.0).unwrap();
        let tree = build_tree(&TransitionMatrix::parse(&[vec!["1".into()]]).unwrap()).unwrap();
        let fields = ExternalFieldSet::new(&config, &tree);
        let density = OneCutDensity { alpha: -1.0, beta: 1.0, coeffs: vec![2.0 / std::f64::consts::PI] };
        let sol = EquilibriumSolution {
            fields,
            interaction: vec![vec![1.0]],
            measures: MeasureVector {
                components: vec![CellMeasure::new(vec![-1.0, 1.0], vec![1.0])],
                targets: vec![1.0],
            },
            refined: vec![Some(density)],
            supports: vec![Some((-1.0, 1.0))],
            constants: vec![Some(0.5 + std::f64::consts::LN_2)],
            residual: 0.0,
            energy: 0.0,
            converged: true,
            iterations: 0,
            warnings: vec![],
        };
        SpectralContext::new(config, tree, sol).unwrap()
    }

    #[test]
    fn point_mass_cauchy() {
        let mut ctx = semicircle_context();
        ctx.solution.refined = vec![];
        ctx.solution.measures.components[0] = CellMeasure::new(vec![-1e-4, 1e-4], vec![1.0]);
        let f = cauchy_transform(&ctx.solution, 0, Complex::new(2.0, 0.0), None).unwrap();
        assert!((f.re - 0.5).abs() < 1e-8);
    }

    #[test]
    fn on_cut_needs_side() {
        let ctx = semicircle_context();
        let z = Complex::new(0.2, 0.0);
        assert!(matches!(cauchy_transform(&ctx.solution, 0, z, None), Err(SpectralError::OnCutWithoutSide { .. })));
        let fp = cauchy_transform(&ctx.solution, 0, z, Some(Side::Plus)).unwrap();
        assert!((fp.im + 2.0 * (1.0f64 - 0.04).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn semicircle_sheets_glue() {
        let ctx = semicircle_context();
        let r = boundary_identities(&ctx, 50).unwrap();
        assert!(r.gluing < 1e-13 && r.sum_rule < 1e-13 && r.density < 1e-14, "{r:?}");
        let d = xi_offset(&ctx, 0, 0.3, Side::Plus, 1e-7).unwrap() - xi(&ctx, 0, Complex::new(0.3, 0.0), Some(Side::Plus)).unwrap();
        assert!(d.norm() < 1e-5);
    }

    #[test]
    fn semicircle_contours_and_constants() {
        let ctx = semicircle_context();
        let two_pi_i = Complex::new(0.0, 2.0 * std::f64::consts::PI);
        assert!((contour_integral_xi(&ctx, 0, 0).unwrap() + two_pi_i).norm() < 1e-9);
        assert!((contour_integral_xi(&ctx, 1, 0).unwrap() - two_pi_i).norm() < 1e-9);
        assert!(lambda_condition_residual(&ctx) < 1e-12);
        assert!(lambda_difference(&ctx, 0, 0.0).abs() < 1e-12);
        assert!(lambda_difference(&ctx, 0, 1.5) > 0.0);
        assert!(matches!(xi(&ctx, 2, Complex::new(0.0, 1.0), None), Err(SpectralError::InvalidSheet(2))));
    }

    #[test]
    fn remainders_decay() {
        let ctx = semicircle_context();
        for j in 0..2 {
            let r2 = xi_remainder(&ctx, j, Complex::new(100.0, 30.0)).unwrap().norm();
            let r3 = xi_remainder(&ctx, j, Complex::new(1000.0, 300.0)).unwrap().norm();
            assert!(r3 < r2 / 50.0, "{r2} {r3}");
            let l2 = lambda_remainder(&ctx, j, Complex::new(100.0, 30.0)).unwrap().norm();
            let l3 = lambda_remainder(&ctx, j, Complex::new(1000.0, 300.0)).unwrap().norm();
            assert!(l3 < l2 / 5.0, "{l2} {l3}");
        }
    }
}
