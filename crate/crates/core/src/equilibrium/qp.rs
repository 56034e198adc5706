use super::energy::DiscreteEnergy;
use crate::linalg::{Cholesky, FullPivLu, Matrix};
use crate::scalar::{median, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings<T> {
    pub tol: T,
    pub max_iters: usize,
}

impl<T: Real> Default for QpSettings<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-6), max_iters: 100_000 }
    }
}

#[derive(Debug, Clone)]
pub struct QpResult<T> {
    pub weights: Vec<T>,
    pub energy: T,
    /// Discrete Euler–Lagrange (KKT) residual of the returned weights.
    pub residual: T,
    /// Per-component Lagrange constants, `None` for zero-mass components.
    pub constants: Vec<Option<T>>,
    pub iterations: usize,
    pub converged: bool,
    /// Energy after every accepted step, starting with the initial point.
    pub energy_history: Vec<T>,
}

/// Euclidean projection of `v` onto {w ≥ 0, Σw = mass}.
pub fn project_simplex<T: Real>(v: &[T], mass: T) -> Vec<T> {
    if v.is_empty() {
        return vec![];
    }
    if mass <= T::zero() {
        return vec![T::zero(); v.len()];
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = T::zero();
    let mut theta = T::zero();
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - mass) / T::from_usize_lossy(k + 1);
        if u - candidate > T::zero() {
            theta = candidate;
        } else {
            break;
        }
    }
    let mut w: Vec<T> = v.iter().map(|&u| (u - theta).max(T::zero())).collect();
    let total: T = w.iter().copied().sum();
    if total > T::zero() {
        let scale = mass / total;
        for x in &mut w {
            *x *= scale;
        }
    }
    w
}

fn project<T: Real>(energy: &DiscreteEnergy<T>, masses: &[T], v: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(v.len());
    for i in 0..energy.components() {
        let (lo, hi) = (energy.offsets[i], energy.offsets[i + 1]);
        out.extend(project_simplex(&v[lo..hi], masses[i]));
    }
    out
}

/// Weights at or below this are treated as sitting on the bound; simplex projection leaves ~1e-19 residue there.
fn active_floor<T: Real>(mass: T) -> T {
    mass * T::epsilon() * T::lit(64.0)
}

/// KKT residual and median constants for weights `w` with gradient `g`.
pub fn kkt_residual<T: Real>(energy: &DiscreteEnergy<T>, masses: &[T], w: &[T], g: &[T]) -> (T, Vec<Option<T>>) {
    let mut worst = T::zero();
    let mut constants = vec![];
    for i in 0..energy.components() {
        if masses[i] <= T::zero() {
            constants.push(None);
            continue;
        }
        let range = energy.offsets[i]..energy.offsets[i + 1];
        let floor = active_floor(masses[i]);
        let on: Vec<T> = range.clone().filter(|&k| w[k] > floor).map(|k| g[k]).collect();
        let l = median(&on).unwrap_or(T::zero());
        for k in range {
            let dev = if w[k] > floor { (g[k] - l).abs() } else { (l - g[k]).max(T::zero()) };
            worst = worst.max(dev);
        }
        constants.push(Some(l));
    }
    (worst, constants)
}

/// Exact minimiser of the energy on the face {w_k = 0 for k ∉ S} with the mass constraints.
fn face_solve<T: Real>(energy: &DiscreteEnergy<T>, masses: &[T], w: &[T]) -> Option<Vec<T>> {
    let comp_of = |k: usize| energy.offsets.partition_point(|&o| o <= k) - 1;
    let support: Vec<usize> = (0..w.len()).filter(|&k| w[k] > active_floor(masses[comp_of(k)])).collect();
    let s = support.len();
    if s == 0 {
        return None;
    }
    let comps: Vec<usize> = support.iter().map(|&k| comp_of(k)).collect();
    let active: Vec<usize> = (0..energy.components()).filter(|&i| masses[i] > T::zero()).collect();
    let base = energy.q.max_abs() + T::one();
    let mut kappa = T::lit(4.0) * base;
    for _ in 0..12 {
        let qhat = Matrix::from_fn(s, s, |a, b| {
            let v = energy.q[(support[a], support[b])];
            if comps[a] == comps[b] { v + kappa } else { v }
        });
        if let Some(chol) = Cholesky::new(&qhat) {
            let xc = chol.solve(&support.iter().map(|&k| energy.c[k]).collect::<Vec<_>>());
            let xe: Vec<Vec<T>> = active
                .iter()
                .map(|&i| chol.solve(&comps.iter().map(|&c| if c == i { T::one() } else { T::zero() }).collect::<Vec<_>>()))
                .collect();
            let r = active.len();
            let restricted_sum = |v: &[T], j: usize| -> T {
                (0..s).filter(|&a| comps[a] == active[j]).map(|a| v[a]).sum()
            };
            let mmat = Matrix::from_fn(r, r, |j, i| restricted_sum(&xe[i], j));
            let rhs: Vec<T> = (0..r).map(|j| T::lit(2.0) * masses[active[j]] + restricted_sum(&xc, j)).collect();
            let lu = FullPivLu::new(&mmat);
            if !lu.is_invertible() {
                return None;
            }
            let lhat = lu.solve(&rhs);
            let mut out = vec![T::zero(); w.len()];
            for a in 0..s {
                let mut v = -xc[a];
                for j in 0..r {
                    v += lhat[j] * xe[j][a];
                }
                out[support[a]] = v / T::lit(2.0);
            }
            return Some(out);
        }
        kappa *= T::lit(4.0);
    }
    None
}

/// Projected-gradient descent with Armijo backtracking, accelerated by exact face solves.
pub fn solve_grid_qp<T: Real>(
    energy: &DiscreteEnergy<T>,
    masses: &[T],
    settings: &QpSettings<T>,
    initial: Option<Vec<T>>,
) -> QpResult<T> {
    assert_eq!(masses.len(), energy.components());
    let n = energy.size();
    let mut w = match initial {
        Some(w0) => project(energy, masses, &w0),
        None => {
            let mut v = vec![T::zero(); n];
            for i in 0..energy.components() {
                let len = T::from_usize_lossy(energy.offsets[i + 1] - energy.offsets[i]);
                for x in &mut v[energy.offsets[i]..energy.offsets[i + 1]] {
                    *x = masses[i] / len;
                }
            }
            v
        }
    };
    let mut e = energy.value(&w);
    let mut history = vec![e];
    let mut step = T::one() / (T::lit(2.0) * energy.q.max_abs() * T::from_usize_lossy(n.max(1)));
    let mut prev: Option<(Vec<T>, Vec<T>)> = None;
    let sigma = T::lit(1e-4);
    let mut iterations = 0;
    let mut stalled = 0;
    loop {
        let g = energy.gradient(&w);
        let (residual, constants) = kkt_residual(energy, masses, &w, &g);
        // Rounding floor: the energy no longer moves, so further iterations cannot lower the residual.
        if residual <= settings.tol || iterations >= settings.max_iters || stalled >= 50 {
            return QpResult {
                weights: w,
                energy: e,
                residual,
                constants,
                iterations,
                converged: residual <= settings.tol,
                energy_history: history,
            };
        }
        iterations += 1;
        let e_start = e;

        if let Some((pw, pg)) = &prev {
            let dw: Vec<T> = w.iter().zip(pw).map(|(a, b)| *a - *b).collect();
            let dg: Vec<T> = g.iter().zip(pg).map(|(a, b)| *a - *b).collect();
            let num: T = dw.iter().map(|x| *x * *x).sum();
            let den: T = dw.iter().zip(&dg).map(|(a, b)| *a * *b).sum();
            if den > T::zero() && num > T::zero() {
                step = num / den;
            }
        }
        prev = Some((w.clone(), g.clone()));

        let mut accepted = None;
        let mut s = step;
        for _ in 0..60 {
            let trial: Vec<T> = w.iter().zip(&g).map(|(&x, &d)| x - s * d).collect();
            let cand = project(energy, masses, &trial);
            let ec = energy.value(&cand);
            let decrease: T = g.iter().zip(cand.iter().zip(&w)).map(|(&d, (&c, &x))| d * (c - x)).sum();
            if ec <= e + sigma * decrease {
                accepted = Some((cand, ec));
                break;
            }
            s /= T::lit(2.0);
        }
        if let Some((cand, ec)) = accepted {
            w = cand;
            e = ec;
            history.push(e);
        }

        if let Some(target) = face_solve(energy, masses, &w) {
            let mut theta = T::one();
            for _ in 0..40 {
                let trial: Vec<T> = w.iter().zip(&target).map(|(&x, &t)| x + theta * (t - x)).collect();
                let cand = project(energy, masses, &trial);
                let ec = energy.value(&cand);
                if ec <= e {
                    w = cand;
                    e = ec;
                    history.push(e);
                    break;
                }
                theta /= T::lit(2.0);
            }
        }
        if e_start - e <= T::epsilon() * e.abs().max(T::one()) {
            stalled += 1;
        } else {
            stalled = 0;
        }
    }
}
