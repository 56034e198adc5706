use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nibm_core::ensemble::{density_l1_distance, mean_density_curve, sample_paths, EnsembleSpec, PathRow};
use nibm_core::equilibrium::{
    edge_exponent_fit, el_residual, refine_one_cut, solve as solve_equilibrium, EndpointSide, EquilibriumSolution,
};
use nibm_core::graph::{build_tree, interaction_matrix, leaf_peel_order, GraphError, PathTree, ProblemConfig};
use nibm_core::scalar::linspace;
use nibm_core::spectral::*;
use num_complex::Complex;

use crate::config::{EnsembleSection, RunConfig};
use crate::records::*;
use crate::CliError;

const SOLUTION_FILE: &str = "solution.json";

fn problem(cfg: &RunConfig) -> Result<(ProblemConfig<f64>, PathTree), CliError> {
    let m = cfg.matrix()?;
    let tree = build_tree(&m)?;
    let problem = cfg.problem()?;
    if problem.p() != m.p() || problem.q() != m.q() {
        return Err(GraphError::InvalidConfig(format!(
            "{} starting and {} ending points for a {}x{} transition matrix",
            problem.p(),
            problem.q(),
            m.p(),
            m.q()
        ))
        .into());
    }
    Ok((problem, tree))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn validate(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let (_, tree) = problem(cfg)?;
    let im = interaction_matrix(&tree);
    let mut lines = vec![format!("valid: p = {}, q = {}, {} edges", tree.p(), tree.q(), tree.edge_count())];
    lines.push("edges (i k l weight):".into());
    lines.extend(tree.summary_lines().into_iter().map(|l| format!("  {l}")));
    lines.push("interaction matrix:".into());
    for row in &im.a {
        let cells: Vec<String> = row.iter().map(|r| format!("{r:>3}")).collect();
        lines.push(format!("  {}", cells.join(" ")));
    }
    lines.push(format!("smallest eigenvalue: {:.6}", im.smallest_eigenvalue()));
    let order: Vec<String> = leaf_peel_order(&tree).iter().map(|v| v.to_string()).collect();
    lines.push(format!("leaf-peel order: {}", order.join(" ")));
    Ok(lines)
}

pub fn solve(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let (problem, tree) = problem(cfg)?;
    let grid = solve_equilibrium(&problem, &tree, &cfg.solver_settings())?;
    let dir = out_dir(cfg)?;
    let mut lines = vec![format!("grid solve: {} iterations, KKT residual {:.3e}", grid.iterations, grid.residual)];

    let el = el_residual(&grid);
    let el_rows: Vec<ElRow> = el
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| ElRow {
            component: i + 1,
            constant: c.constant,
            on_support: c.on_support_max,
            scaled_on_support: c.on_support_max / c.scale,
            derivative: c.derivative_max,
            off_support_min: c.off_support_min,
            gap_midpoint_min: c.gap_midpoints.iter().map(|g| g.1).fold(f64::INFINITY, f64::min),
        })
        .collect();
    write_csv(&dir.join("el_residual.csv"), &el_rows)?;
    lines.push(format!("EL residual (scaled, on support): {:.3e}", el.max_scaled_on_support()));

    let mut exponents = vec![];
    for i in 0..grid.components() {
        for (side, name) in [(EndpointSide::Left, "left"), (EndpointSide::Right, "right")] {
            if let Ok((exponent, coefficient)) = edge_exponent_fit(&grid, i, side) {
                exponents.push(ExponentRow { component: i + 1, side: name.into(), exponent, coefficient });
            }
        }
    }
    write_csv(&dir.join("edge_exponents.csv"), &exponents)?;

    let disjoint = grid.supports_disjoint();
    let sol = if disjoint {
        match refine_one_cut(&grid, cfg.solver.refine_tol) {
            Ok((refined, stats)) => {
                lines.push(format!("one-cut refinement: {} sweeps, EL residual {:.3e}", stats.sweeps, refined.residual));
                refined
            }
            Err(e) => {
                lines.push(format!("refinement skipped: {e}"));
                grid.clone()
            }
        }
    } else {
        grid.clone()
    };

    let mut density = vec![];
    for (i, cells) in grid.measures.components.iter().enumerate() {
        if sol.supports[i].is_none() {
            continue;
        }
        for c in 0..cells.cells() {
            let x = cells.midpoint(c);
            density.push(DensityPoint { component: i + 1, x, density: sol.density(i, x) });
        }
    }
    write_csv(&dir.join("density.csv"), &density)?;
    let masses: Vec<f64> = tree.masses();
    let supports: Vec<SupportRow> = tree
        .edges()
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            sol.supports[i].map(|(alpha, beta)| SupportRow { component: i + 1, k: e.k + 1, l: e.l + 1, alpha, beta, mass: masses[i] })
        })
        .collect();
    for s in &supports {
        lines.push(format!("support {}: [{:.6}, {:.6}]", s.component, s.alpha, s.beta));
    }
    write_csv(&dir.join("supports.csv"), &supports)?;
    let json = serde_json::to_string(&sol).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(dir.join(SOLUTION_FILE), json)?;
    if !disjoint {
        return Err(CliError::SupportsTouch(format!("{} supports written to {}", supports.len(), dir.display())));
    }
    Ok(lines)
}

fn load_solution(dir: &Path) -> Result<EquilibriumSolution<f64>, CliError> {
    let path = dir.join(SOLUTION_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|_| CliError::MissingPrerequisite(format!("{} not found; run solve first", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::MissingPrerequisite(format!("{}: {e}", path.display())))
}

pub fn spectral(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let (problem, tree) = problem(cfg)?;
    let dir = cfg.out_dir();
    let sol = load_solution(&dir)?;
    if sol.components() != tree.edge_count() {
        return Err(CliError::MissingPrerequisite("stored solution does not match the configuration".into()));
    }
    let sp = &cfg.spectral;
    let ctx = SpectralContext::new(problem, tree, sol)?;
    let el = ctx.solution.residual.max(1e-14);
    let masses: Vec<f64> = ctx.tree.masses();

    let ids = boundary_identities(&ctx, sp.points)?;
    let mut lambda_on_support: f64 = 0.0;
    for i in 0..ctx.tree.edge_count() {
        for x in support_test_points(&ctx.solution, i, sp.points) {
            lambda_on_support = lambda_on_support.max(lambda_difference(&ctx, i, x).abs());
        }
    }
    let z = Complex::new(30.0, 20.0);
    let mut xi_decay = f64::INFINITY;
    let mut lambda_decay = f64::INFINITY;
    for j in 0..ctx.sheets() {
        xi_decay = xi_decay.min(xi_remainder(&ctx, j, z)?.norm() / xi_remainder(&ctx, j, z * 10.0)?.norm());
        lambda_decay = lambda_decay.min(lambda_remainder(&ctx, j, z)?.norm() / lambda_remainder(&ctx, j, z * 10.0)?.norm());
    }
    let row = |check: &str, value: f64, threshold: f64, pass: bool| CheckRow { check: check.into(), value, threshold, pass };
    let checks = vec![
        row("gluing", ids.gluing, 10.0 * el, ids.gluing <= 10.0 * el),
        row("sum_rule", ids.sum_rule, 10.0 * el, ids.sum_rule <= 10.0 * el),
        row("density", ids.density, 10.0 * el, ids.density <= 10.0 * el),
        row("lambda_conditions", lambda_condition_residual(&ctx), 1e-8, lambda_condition_residual(&ctx) <= 1e-8),
        row("lambda_on_support", lambda_on_support, 1e-8, lambda_on_support <= 1e-8),
        row("xi_remainder_decay", xi_decay, 50.0, xi_decay > 50.0),
        row("lambda_remainder_decay", lambda_decay, 5.0, lambda_decay > 5.0),
    ];
    write_csv(&dir.join("identities.csv"), &checks)?;

    let mut contours = vec![];
    for i in 0..ctx.tree.edge_count() {
        if ctx.solution.supports[i].is_none() {
            continue;
        }
        let (k, pl) = ctx.edge_sheets(i);
        for j in 0..ctx.sheets() {
            let expected_im = if j == k {
                -2.0 * PI * masses[i]
            } else if j == pl {
                2.0 * PI * masses[i]
            } else {
                0.0
            };
            let v = contour_integral_xi(&ctx, j, i)?;
            let pass = (v - Complex::new(0.0, expected_im)).norm() <= 1e-6;
            contours.push(ContourRow { sheet: j + 1, cut: i + 1, re: v.re, im: v.im, expected_im, pass });
        }
    }
    write_csv(&dir.join("contours.csv"), &contours)?;

    let mut xs: Vec<f64> = (0..ctx.tree.edge_count()).flat_map(|i| support_test_points(&ctx.solution, i, 41)).collect();
    xs.sort_by(f64::total_cmp);
    write_csv(&dir.join("xi_boundary.csv"), &xi_boundary_rows(&ctx, &xs)?)?;
    write_csv(&dir.join("lambda_difference.csv"), &lambda_difference_rows(&ctx, &xs))?;

    let mut lens = vec![];
    for i in 0..ctx.tree.edge_count().saturating_sub(1) {
        let r = lens_feasibility(&ctx, i, sp.lens_nx, sp.lens_ny)?;
        write_csv(&dir.join(format!("lens_{}.csv", i + 1)), &sign_field_rows(&r.field))?;
        lens.push(LensRow {
            step: i + 1,
            alpha: r.alpha,
            beta_next: r.beta_next,
            alpha_in_positive: r.alpha_in_positive,
            beta_in_negative: r.beta_in_negative,
            unbounded_positive: r.unbounded_positive,
            unbounded_negative: r.unbounded_negative,
            feasible: r.feasible(),
        });
    }
    write_csv(&dir.join("lens.csv"), &lens)?;

    let passed = checks.iter().filter(|c| c.pass).count() + contours.iter().filter(|c| c.pass).count();
    let total = checks.len() + contours.len();
    Ok(vec![
        format!("identity and contour checks passed: {passed}/{total}"),
        format!("lens steps feasible: {}/{}", lens.iter().filter(|l| l.feasible).count(), lens.len()),
    ])
}

fn ensemble_spec(cfg: &RunConfig, e: &EnsembleSection, n: usize) -> Result<EnsembleSpec<f64>, CliError> {
    let (problem, _) = problem(cfg)?;
    Ok(EnsembleSpec::new(problem, &cfg.matrix()?, n, e.rounding())?)
}

pub fn kernel(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let (e, n) = cfg.ensemble()?;
    let ke = ensemble_spec(cfg, e, n)?.kernel(e.basis())?;
    let windows = ke.system.envelope();
    let lo = windows.iter().map(|w| w.0).fold(f64::INFINITY, f64::min);
    let hi = windows.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);
    let rows = mean_density_curve(&ke, &linspace(lo, hi, e.points.max(2)));
    let dir = out_dir(cfg)?;
    write_csv(&dir.join("kernel.csv"), &rows)?;
    Ok(vec![format!("n = {n}: Gram condition {:.3e}, {} points on [{lo:.4}, {hi:.4}]", ke.condition, rows.len())])
}

pub fn sample(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let (e, n) = cfg.ensemble()?;
    let spec = ensemble_spec(cfg, e, n)?;
    let (bundles, stats) = sample_paths(&spec, e.steps, e.seed, e.bundles, e.sampler())?;
    let rows: Vec<PathRow<f64>> = bundles
        .iter()
        .enumerate()
        .flat_map(|(b, bundle)| bundle.rows().into_iter().map(move |r| PathRow { path_id: b * n + r.path_id, ..r }))
        .collect();
    let dir = out_dir(cfg)?;
    write_csv(&dir.join("paths.csv"), &rows)?;
    write_csv(&dir.join("sampler_stats.csv"), &[stats])?;
    Ok(vec![format!(
        "{} bundles of {n} paths on {} steps, {} rejected, seed {}",
        stats.accepted, e.steps, stats.rejected, stats.seed
    )])
}

pub fn compare(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let dir = cfg.out_dir();
    let sol = load_solution(&dir)?;
    let default = EnsembleSection::default();
    let e = cfg.ensemble.as_ref().unwrap_or(&default);
    let mut rows = vec![];
    for &n in &e.sequence {
        let ke = ensemble_spec(cfg, e, n)?.kernel(e.basis())?;
        rows.push(L1Row { n, l1: density_l1_distance(&ke, &sol), condition: ke.condition });
    }
    write_csv(&dir.join("l1.csv"), &rows)?;
    Ok(rows.iter().map(|r| format!("n = {:>3}: L1 = {:.6}", r.n, r.l1)).collect())
}
