use super::{EnsembleError, EnsembleSpec};
use crate::quadrature::composite_gauss_legendre;
use crate::scalar::Real;

const BUDGET: f64 = 5e7;

/// Marginals of the normalized density ∝ det[f_i(x_j)]·det[g_i(x_j)] by tensor Gauss–Legendre quadrature.
///
/// Uses the raw families (x − a_k)^d w_{1,k}(x) and (x − b_l)^d w_{2,l}(x); no Gram matrix is involved.
#[derive(Debug, Clone)]
pub struct BruteForceOracle<T> {
    n: usize,
    starts: Vec<(T, T, usize)>,
    ends: Vec<(T, T, usize)>,
    nodes: Vec<T>,
    weights: Vec<T>,
    /// f_i and g_i at every node, node-major.
    f_table: Vec<Vec<T>>,
    g_table: Vec<Vec<T>>,
    pub normalization: T,
}

fn family<T: Real>(groups: &[(T, T, usize)], x: T) -> Vec<T> {
    let mut out = vec![];
    for &(c, v, count) in groups {
        let w = (-(x - c) * (x - c) / (T::lit(2.0) * v)).exp();
        out.extend((0..count).map(|d| (x - c).powi(d as i32) * w));
    }
    out
}

fn determinant<T: Real>(rows: &[&[T]], cols: usize) -> T {
    match cols {
        1 => rows[0][0],
        2 => rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0],
        3 => {
            rows[0][0] * (rows[1][1] * rows[2][2] - rows[1][2] * rows[2][1])
                - rows[0][1] * (rows[1][0] * rows[2][2] - rows[1][2] * rows[2][0])
                + rows[0][2] * (rows[1][0] * rows[2][1] - rows[1][1] * rows[2][0])
        }
        _ => unreachable!("at most three paths"),
    }
}

impl<T: Real> BruteForceOracle<T> {
    /// `panels` × `order` Gauss–Legendre nodes on each merged envelope window.
    pub fn new(spec: &EnsembleSpec<T>, panels: usize, order: usize) -> Result<Self, EnsembleError> {
        let n = spec.n();
        let t = spec.config.t;
        let system = spec.system_at(t);
        let mut nodes = vec![];
        let mut weights = vec![];
        for (lo, hi) in system.envelope() {
            let (x, w) = composite_gauss_legendre(lo, hi, panels, order);
            nodes.extend(x);
            weights.extend(w);
        }
        let needed = (nodes.len() as f64).powi(n as i32);
        if n > 3 || needed > BUDGET {
            return Err(EnsembleError::QuadratureBudgetExhausted { n, needed, budget: BUDGET });
        }
        let starts: Vec<(T, T, usize)> =
            (0..spec.config.a.len()).map(|k| (spec.config.a[k], t * spec.sigma2, spec.counts.n_k[k])).collect();
        let ends: Vec<(T, T, usize)> = (0..spec.config.b.len())
            .map(|l| (spec.config.b[l], (T::one() - t) * spec.sigma2, spec.counts.m_l[l]))
            .collect();
        let f_table = nodes.iter().map(|&x| family(&starts, x)).collect();
        let g_table = nodes.iter().map(|&x| family(&ends, x)).collect();
        let mut oracle = Self { n, starts, ends, nodes, weights, f_table, g_table, normalization: T::one() };
        oracle.normalization = oracle.integrate(&[]);
        Ok(oracle)
    }

    /// ∫ det[f_i(x_j)] det[g_i(x_j)] over the free variables, with `fixed` as the first arguments.
    fn integrate(&self, fixed: &[T]) -> T {
        let n = self.n;
        let free = n - fixed.len();
        let fixed_f: Vec<Vec<T>> = fixed.iter().map(|&x| family(&self.starts, x)).collect();
        let fixed_g: Vec<Vec<T>> = fixed.iter().map(|&x| family(&self.ends, x)).collect();
        let nodes = self.nodes.len();
        let total = nodes.pow(free as u32);
        let mut sum = T::zero();
        let mut idx = vec![0usize; free];
        for _ in 0..total {
            let mut w = T::one();
            let mut fr: Vec<&[T]> = fixed_f.iter().map(|v| v.as_slice()).collect();
            let mut gr: Vec<&[T]> = fixed_g.iter().map(|v| v.as_slice()).collect();
            for &i in &idx {
                w *= self.weights[i];
                fr.push(&self.f_table[i]);
                gr.push(&self.g_table[i]);
            }
            sum += w * determinant(&fr, n) * determinant(&gr, n);
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < nodes {
                    break;
                }
                *slot = 0;
            }
        }
        sum
    }

    /// m-point marginal density at `xs` (m = xs.len() ≤ n); integrates to 1.
    pub fn marginal(&self, xs: &[T]) -> T {
        self.integrate(xs) / self.normalization
    }

    pub fn nodes(&self) -> usize {
        self.nodes.len()
    }
}
