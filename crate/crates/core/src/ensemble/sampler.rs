use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BasisMode, EnsembleError, EnsembleSpec, GaussianSystem, Group, KernelEvaluator};
use crate::linalg::{FullPivLu, Matrix};
use crate::scalar::{max_abs, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerMode {
    /// Independent bridges, kept only if strictly ordered at every interior grid time.
    Rejection { max_rejects: usize },
    /// Exact Markov steps of the conditioned process between grid times.
    Exact,
}

/// One accepted bundle; `positions[path][step]`, topmost path first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBundle<T> {
    pub times: Vec<T>,
    pub positions: Vec<Vec<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub accepted: usize,
    pub rejected: usize,
    pub seed: u64,
}

/// One row of the "path_id,time,x" export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRow<T> {
    pub path_id: usize,
    pub time: T,
    pub x: T,
}

impl<T: Real> PathBundle<T> {
    pub fn rows(&self) -> Vec<PathRow<T>> {
        self.positions
            .iter()
            .enumerate()
            .flat_map(|(i, xs)| self.times.iter().zip(xs).map(move |(&time, &x)| PathRow { path_id: i, time, x }))
            .collect()
    }

    /// Positions at grid index `step`.
    pub fn slice(&self, step: usize) -> Vec<T> {
        self.positions.iter().map(|xs| xs[step]).collect()
    }
}

fn uniform<T: Real>(rng: &mut ChaCha20Rng) -> T {
    T::lit(rng.random::<f64>())
}

/// `bundles` bundles on a uniform grid of `steps` steps; bundle j uses ChaCha20 stream j of `seed`.
pub fn sample_paths<T: Real>(
    spec: &EnsembleSpec<T>,
    steps: usize,
    seed: u64,
    bundles: usize,
    mode: SamplerMode,
) -> Result<(Vec<PathBundle<T>>, SamplerStats), EnsembleError> {
    if steps == 0 {
        return Err(EnsembleError::InvalidInput("time grid needs at least one step".into()));
    }
    let times: Vec<T> = (0..=steps).map(|j| T::from_usize_lossy(j) / T::from_usize_lossy(steps)).collect();
    let edges = spec.path_edges();
    let results: Vec<Result<(PathBundle<T>, usize), EnsembleError>> = (0..bundles)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            match mode {
                SamplerMode::Rejection { max_rejects } => rejection_bundle(spec, &edges, &times, max_rejects, &mut rng),
                SamplerMode::Exact => exact_bundle(spec, &edges, &times, &mut rng).map(|b| (b, 0)),
            }
        })
        .collect();
    let mut out = Vec::with_capacity(bundles);
    let mut rejected = 0;
    for r in results {
        match r {
            Ok((b, rej)) => {
                rejected += rej;
                out.push(b);
            }
            Err(EnsembleError::RejectionBudgetExhausted { rejected: r, .. }) => {
                return Err(EnsembleError::RejectionBudgetExhausted { accepted: out.len(), rejected: rejected + r });
            }
            Err(e) => return Err(e),
        }
    }
    let accepted = out.len();
    Ok((out, SamplerStats { accepted, rejected, seed }))
}

fn rejection_bundle<T: Real>(
    spec: &EnsembleSpec<T>,
    edges: &[(usize, usize)],
    times: &[T],
    max_rejects: usize,
    rng: &mut ChaCha20Rng,
) -> Result<(PathBundle<T>, usize), EnsembleError> {
    let steps = times.len() - 1;
    let sd = (spec.sigma2 / T::from_usize_lossy(steps)).sqrt();
    let mut rejected = 0;
    loop {
        let positions: Vec<Vec<T>> = edges
            .iter()
            .map(|&(k, l)| {
                let (a, b) = (spec.config.a[k], spec.config.b[l]);
                let mut w = vec![T::zero(); steps + 1];
                for j in 1..=steps {
                    let z: f64 = rng.sample(StandardNormal);
                    w[j] = w[j - 1] + sd * T::lit(z);
                }
                let end = w[steps];
                times.iter().zip(&w).map(|(&t, &wj)| a + (b - a) * t + wj - t * end).collect()
            })
            .collect();
        let ordered = (1..steps).all(|j| positions.windows(2).all(|p| p[0][j] > p[1][j]));
        if ordered {
            return Ok((PathBundle { times: times.to_vec(), positions }, rejected));
        }
        rejected += 1;
        if rejected > max_rejects {
            return Err(EnsembleError::RejectionBudgetExhausted { accepted: 0, rejected });
        }
    }
}

fn exact_bundle<T: Real>(
    spec: &EnsembleSpec<T>,
    edges: &[(usize, usize)],
    times: &[T],
    rng: &mut ChaCha20Rng,
) -> Result<PathBundle<T>, EnsembleError> {
    let steps = times.len() - 1;
    let n = edges.len();
    let mut positions = vec![Vec::with_capacity(steps + 1); n];
    for (i, &(k, _)) in edges.iter().enumerate() {
        positions[i].push(spec.config.a[k]);
    }
    let ends: Vec<usize> = {
        let mut ls: Vec<usize> = edges.iter().map(|e| e.1).collect();
        ls.dedup();
        ls
    };
    for j in 1..=steps {
        if j == steps {
            for (i, &(_, l)) in edges.iter().enumerate() {
                positions[i].push(spec.config.b[l]);
            }
            break;
        }
        let (s, s_next) = (times[j - 1], times[j]);
        let dv = (s_next - s) * spec.sigma2;
        let g_groups: Vec<Group<T>> = ends.iter().map(|&l| spec.end_group(l, s_next)).collect();
        let column = |l: usize| ends.iter().position(|&e| e == l).expect("end group");
        let system = if j == 1 {
            let starts: Vec<usize> = {
                let mut ks: Vec<usize> = edges.iter().map(|e| e.0).collect();
                ks.dedup();
                ks
            };
            let mut transport: Vec<(usize, usize, usize)> = vec![];
            for &(k, l) in edges {
                let f = starts.iter().position(|&e| e == k).expect("start group");
                match transport.last_mut() {
                    Some(last) if last.0 == f && last.1 == column(l) => last.2 += 1,
                    _ => transport.push((f, column(l), 1)),
                }
            }
            GaussianSystem {
                f_groups: starts.iter().map(|&k| Group { center: spec.config.a[k], variance: dv, count: spec.counts.n_k[k] }).collect(),
                g_groups,
                transport,
            }
        } else {
            GaussianSystem {
                f_groups: positions.iter().map(|xs| Group { center: xs[j - 1], variance: dv, count: 1 }).collect(),
                g_groups,
                transport: edges.iter().enumerate().map(|(i, &(_, l))| (i, column(l), 1)).collect(),
            }
        };
        let ke = KernelEvaluator::new(system, BasisMode::Hermite)?;
        let mut xs = sample_dpp(&ke, rng)?;
        xs.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        for (i, x) in xs.into_iter().enumerate() {
            positions[i].push(x);
        }
    }
    Ok(PathBundle { times: times.to_vec(), positions })
}

/// One draw of the projection ensemble of `ke` by the sequential chain rule on a fine grid.
pub fn sample_dpp<T: Real>(ke: &KernelEvaluator<T>, rng: &mut ChaCha20Rng) -> Result<Vec<T>, EnsembleError> {
    let n = ke.n();
    let spacing = ke
        .system
        .transport
        .iter()
        .map(|&(f, g, _)| {
            let (vf, vg) = (ke.system.f_groups[f].variance, ke.system.g_groups[g].variance);
            (vf * vg / (vf + vg)).sqrt()
        })
        .fold(T::infinity(), T::min)
        / T::lit(16.0);
    let mut grid = vec![];
    for (lo, hi) in ke.system.envelope() {
        let cells = ((hi - lo) / spacing).ceil().to_usize().unwrap_or(1).max(1);
        let h = (hi - lo) / T::from_usize_lossy(cells);
        grid.extend((0..=cells).map(|c| lo + h * T::from_usize_lossy(c)));
    }
    // Gauged Φ(y) and AΨ(y) at every node; the per-point gauge cancels in every product used below.
    let table: Vec<(Vec<T>, Vec<T>)> = grid
        .iter()
        .map(|&y| {
            let (phi, psi, _) = ke.families(y);
            let apsi = ke.a_times(&psi);
            (phi, apsi)
        })
        .collect();
    let diag: Vec<T> = table.iter().map(|(p, q)| dot(p, q)).collect();
    let mut chosen: Vec<(Vec<T>, Vec<T>)> = vec![];
    let mut out = Vec::with_capacity(n);
    for m in 0..n {
        let density: Vec<T> = if m == 0 {
            diag.iter().map(|&d| d.max(T::zero())).collect()
        } else {
            let s = Matrix::from_fn(m, m, |j, k| dot(&chosen[j].0, &chosen[k].1));
            let lu = FullPivLu::new(&s);
            if !lu.is_invertible() {
                return Err(EnsembleError::InvalidInput("conditional kernel became singular".into()));
            }
            let sinv = lu.inverse();
            table
                .iter()
                .zip(&diag)
                .map(|((phi, apsi), &d)| {
                    let u: Vec<T> = chosen.iter().map(|c| dot(phi, &c.1)).collect();
                    let w: Vec<T> = chosen.iter().map(|c| dot(&c.0, apsi)).collect();
                    let correction = dot(&u, &sinv.mul_vec(&w));
                    (d - correction).max(T::zero())
                })
                .collect()
        };
        let x = inverse_cdf(&grid, &density, uniform(rng))
            .ok_or_else(|| EnsembleError::InvalidInput("conditional density has no mass on the grid".into()))?;
        let (phi, psi, _) = ke.families(x);
        let apsi = ke.a_times(&psi);
        chosen.push((phi, apsi));
        out.push(x);
    }
    Ok(out)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Inverse CDF of the piecewise-linear density through (grid, density); grid gaps between windows carry no mass.
fn inverse_cdf<T: Real>(grid: &[T], density: &[T], u: T) -> Option<T> {
    let scale = max_abs(density);
    if !(scale > T::zero()) || !scale.is_finite() {
        return None;
    }
    let masses: Vec<T> = grid
        .windows(2)
        .zip(density.windows(2))
        .map(|(g, d)| if g[1] > g[0] { (g[1] - g[0]) * (d[0] + d[1]) / T::lit(2.0) } else { T::zero() })
        .collect();
    let total: T = masses.iter().copied().sum();
    if !(total > T::zero()) {
        return None;
    }
    let mut target = u * total;
    for (c, &m) in masses.iter().enumerate() {
        if target <= m && m > T::zero() {
            let (x0, h) = (grid[c], grid[c + 1] - grid[c]);
            let (d0, d1) = (density[c], density[c + 1]);
            // Solve d0·v + (d1 − d0)·v²/(2h) = target for v ∈ [0, h].
            let slope = (d1 - d0) / h;
            let v = if slope.abs() * h <= T::lit(1e-12) * (d0 + d1) {
                target / ((d0 + d1) / T::lit(2.0))
            } else {
                let disc = (d0 * d0 + T::lit(2.0) * slope * target).max(T::zero());
                T::lit(2.0) * target / (d0 + disc.sqrt())
            };
            return Some(x0 + v.max(T::zero()).min(h));
        }
        target -= m;
    }
    let last = masses.iter().rposition(|&m| m > T::zero())?;
    Some(grid[last + 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_cdf_of_uniform_and_ramp() {
        let grid = [0.0f64, 1.0, 2.0];
        assert!((inverse_cdf(&grid, &[1.0, 1.0, 1.0], 0.25).unwrap() - 0.5).abs() < 1e-15);
        // Density x on [0, 1]: CDF x², median 1/√2.
        let x = inverse_cdf(&[0.0f64, 1.0], &[0.0, 1.0], 0.5).unwrap();
        assert!((x - 0.5f64.sqrt()).abs() < 1e-14);
        assert!(inverse_cdf(&grid, &[0.0, 0.0, 0.0], 0.5).is_none());
    }
}
