use serde::{Deserialize, Serialize};

use super::{EnsembleError, CONDITION_LIMIT, MAX_PATHS};
use crate::linalg::{FullPivLu, Matrix};
use crate::quadrature::gauss_hermite;
use crate::scalar::Real;

/// Functions x^d · exp(−(x − center)²/(2·variance)), d < count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Group<T> {
    pub center: T,
    pub variance: T,
    pub count: usize,
}

/// Two families of Gaussian groups and the pairs (f, g, count) that carry paths between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSystem<T> {
    pub f_groups: Vec<Group<T>>,
    pub g_groups: Vec<Group<T>>,
    pub transport: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisMode {
    /// Hermite polynomials localized at each transport pair.
    Hermite,
    /// Plain monomials x^d.
    Monomial,
}

/// log of ∫ exp(−(x−c₁)²/(2v₁) − (x−c₂)²/(2v₂)) dx without the √(2πv) factor, with the product's mean and variance.
fn product_gaussian<T: Real>(f: &Group<T>, g: &Group<T>) -> (T, T, T) {
    let s = f.variance + g.variance;
    let mean = (f.center * g.variance + g.center * f.variance) / s;
    let var = f.variance * g.variance / s;
    let d = f.center - g.center;
    (-(d * d) / (T::lit(2.0) * s), mean, var)
}

/// ∫ x^m exp(−(x−c_f)²/(2v_f) − (x−c_g)²/(2v_g)) dx in closed form.
pub fn gaussian_cross_moment<T: Real>(f: &Group<T>, g: &Group<T>, m: usize) -> T {
    let (log_c, mean, var) = product_gaussian(f, g);
    log_c.exp() * (T::lit(2.0) * T::PI() * var).sqrt() * normal_moment(mean, var, m)
}

/// E[X^m] for X ~ N(mean, var).
fn normal_moment<T: Real>(mean: T, var: T, m: usize) -> T {
    // E[X^k] = mean·E[X^{k−1}] + (k−1)·var·E[X^{k−2}]
    let (mut prev, mut cur) = (T::zero(), T::one());
    for k in 1..=m {
        let next = mean * cur + T::from_usize_lossy(k - 1) * var * prev;
        prev = cur;
        cur = next;
    }
    cur
}

impl<T: Real> GaussianSystem<T> {
    pub fn size(&self) -> usize {
        self.f_groups.iter().map(|g| g.count).sum()
    }

    fn validate(&self) -> Result<(), EnsembleError> {
        let n = self.size();
        if n == 0 || n != self.g_groups.iter().map(|g| g.count).sum::<usize>() {
            return Err(EnsembleError::InvalidInput("families must have equal positive size".into()));
        }
        if n > MAX_PATHS {
            return Err(EnsembleError::TooLarge { n, cap: MAX_PATHS });
        }
        for (fi, g) in self.f_groups.iter().enumerate() {
            let carried: usize = self.transport.iter().filter(|t| t.0 == fi).map(|t| t.2).sum();
            if carried != g.count {
                return Err(EnsembleError::InvalidInput(format!("transport out of group {fi} does not match its size")));
            }
        }
        for (gi, g) in self.g_groups.iter().enumerate() {
            let carried: usize = self.transport.iter().filter(|t| t.1 == gi).map(|t| t.2).sum();
            if carried != g.count {
                return Err(EnsembleError::InvalidInput(format!("transport into group {gi} does not match its size")));
            }
        }
        Ok(())
    }

    /// Windows mean ± (2√n + 8)·√var around every transport pair, merged.
    pub fn envelope(&self) -> Vec<(T, T)> {
        let n = T::from_usize_lossy(self.size());
        let reach = T::lit(2.0) * n.sqrt() + T::lit(8.0);
        let mut windows: Vec<(T, T)> = self
            .transport
            .iter()
            .map(|&(f, g, _)| {
                let (_, mean, var) = product_gaussian(&self.f_groups[f], &self.g_groups[g]);
                let w = reach * var.sqrt();
                (mean - w, mean + w)
            })
            .collect();
        windows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut merged: Vec<(T, T)> = vec![];
        for w in windows {
            match merged.last_mut() {
                Some(last) if w.0 <= last.1 => last.1 = last.1.max(w.1),
                _ => merged.push(w),
            }
        }
        merged
    }

    /// Row and column log-scalings ρ, γ with ρ_f + γ_g ≤ −log C_fg everywhere and equality on transport pairs.
    fn gauge(&self) -> (Vec<T>, Vec<T>) {
        let (nf, ng) = (self.f_groups.len(), self.g_groups.len());
        let cost = |f: usize, g: usize| -product_gaussian(&self.f_groups[f], &self.g_groups[g]).0;
        // Difference constraints on (ρ_f, η_g = −γ_g): ρ_f − η_g ≤ D, and η_g − ρ_f ≤ −D on used pairs.
        let mut arcs = vec![];
        for f in 0..nf {
            for g in 0..ng {
                arcs.push((nf + g, f, cost(f, g)));
            }
        }
        for &(f, g, c) in &self.transport {
            if c > 0 {
                arcs.push((f, nf + g, -cost(f, g)));
            }
        }
        let mut dist = vec![T::zero(); nf + ng];
        let mut settled = false;
        for _ in 0..=(nf + ng) {
            let mut changed = false;
            for &(from, to, w) in &arcs {
                let cand = dist[from] + w;
                // Relative slack keeps rounding from cycling on zero-weight loops.
                if cand < dist[to] - T::lit(1e-12) * (T::one() + dist[to].abs()) {
                    dist[to] = cand;
                    changed = true;
                }
            }
            if !changed {
                settled = true;
                break;
            }
        }
        if settled {
            let rho = dist[..nf].to_vec();
            let gamma = dist[nf..].iter().map(|&e| -e).collect();
            return (rho, gamma);
        }
        // Inconsistent inequalities: keep only the equalities, spreading from each unvisited group.
        let mut rho: Vec<Option<T>> = vec![None; nf];
        let mut gamma: Vec<Option<T>> = vec![None; ng];
        for start in 0..nf {
            if rho[start].is_some() {
                continue;
            }
            rho[start] = Some(T::zero());
            let mut changed = true;
            while changed {
                changed = false;
                for &(f, g, c) in &self.transport {
                    if c == 0 {
                        continue;
                    }
                    match (rho[f], gamma[g]) {
                        (Some(r), None) => {
                            gamma[g] = Some(cost(f, g) - r);
                            changed = true;
                        }
                        (None, Some(s)) => {
                            rho[f] = Some(cost(f, g) - s);
                            changed = true;
                        }
                        _ => {}
                    }
                }
            }
        }
        (
            rho.into_iter().map(|r| r.unwrap_or(T::zero())).collect(),
            gamma.into_iter().map(|r| r.unwrap_or(T::zero())).collect(),
        )
    }
}

/// Polynomial factor of one basis function.
#[derive(Debug, Clone, PartialEq)]
enum Poly<T> {
    /// h_d((x − centre)/scale) · Π ((x − μ)/(centre − μ))^power over the other pairs of the group.
    Hermite { centre: T, scale: T, degree: usize, others: Vec<(T, usize)> },
    Monomial { degree: usize },
}

impl<T: Real> Poly<T> {
    fn eval(&self, x: T) -> T {
        match self {
            Poly::Monomial { degree } => x.powi(*degree as i32),
            Poly::Hermite { centre, scale, degree, others } => {
                let u = (x - *centre) / *scale;
                let (mut prev, mut cur) = (T::zero(), T::one());
                for d in 0..*degree {
                    // Orthonormal Hermite recurrence for He_d/√d!.
                    let df = T::from_usize_lossy(d);
                    let next = (u * cur - df.sqrt() * prev) / (df + T::one()).sqrt();
                    prev = cur;
                    cur = next;
                }
                let mut v = cur;
                for &(mu, power) in others {
                    v *= ((x - mu) / (*centre - mu)).powi(power as i32);
                }
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BasisFn<T> {
    group: usize,
    poly: Poly<T>,
}

fn build_basis<T: Real>(
    groups: &[Group<T>],
    partners: &[Group<T>],
    pairs: &[(usize, usize, usize)],
    mode: BasisMode,
) -> Vec<BasisFn<T>> {
    let mut basis = vec![];
    for (gi, group) in groups.iter().enumerate() {
        if mode == BasisMode::Monomial {
            basis.extend((0..group.count).map(|d| BasisFn { group: gi, poly: Poly::Monomial { degree: d } }));
            continue;
        }
        let mine: Vec<(T, T, usize)> = pairs
            .iter()
            .filter(|p| p.0 == gi && p.2 > 0)
            .map(|&(_, h, c)| {
                let (_, mean, var) = product_gaussian(group, &partners[h]);
                (mean, var.sqrt(), c)
            })
            .collect();
        for (e, &(centre, scale, count)) in mine.iter().enumerate() {
            let others: Vec<(T, usize)> =
                mine.iter().enumerate().filter(|(o, _)| *o != e).map(|(_, &(mu, _, c))| (mu, c)).collect();
            for degree in 0..count {
                basis.push(BasisFn { group: gi, poly: Poly::Hermite { centre, scale, degree, others: others.clone() } });
            }
        }
    }
    basis
}

/// Gram matrix, its inverse and the per-point gauge of a biorthogonal ensemble.
#[derive(Debug, Clone)]
pub struct KernelEvaluator<T> {
    pub system: GaussianSystem<T>,
    pub mode: BasisMode,
    rho: Vec<T>,
    gamma: Vec<T>,
    rows: Vec<BasisFn<T>>,
    cols: Vec<BasisFn<T>>,
    /// Gauged Gram matrix G_rc = ∫ f_r g_c.
    pub gram: Matrix<T>,
    /// G⁻ᵀ, so K(x, y) = Φ(x)ᵀ A Ψ(y).
    a: Matrix<T>,
    /// ‖G‖₁‖G⁻¹‖₁.
    pub condition: T,
}

impl<T: Real> KernelEvaluator<T> {
    pub fn new(system: GaussianSystem<T>, mode: BasisMode) -> Result<Self, EnsembleError> {
        system.validate()?;
        let n = system.size();
        let (rho, gamma) = system.gauge();
        let flipped: Vec<(usize, usize, usize)> = system.transport.iter().map(|&(f, g, c)| (g, f, c)).collect();
        let rows = build_basis(&system.f_groups, &system.g_groups, &system.transport, mode);
        let cols = build_basis(&system.g_groups, &system.f_groups, &flipped, mode);
        let mut gram = Matrix::zeros(n, n);
        let (nodes, weights) = gauss_hermite::<T>(n + 2);
        for (fi, fg) in system.f_groups.iter().enumerate() {
            for (gi, gg) in system.g_groups.iter().enumerate() {
                let (log_c, mean, var) = product_gaussian(fg, gg);
                let log_scale = rho[fi] + gamma[gi] + log_c;
                if log_scale < T::lit(-700.0) {
                    continue;
                }
                let scale = log_scale.exp();
                let ri: Vec<usize> = (0..n).filter(|&r| rows[r].group == fi).collect();
                let ci: Vec<usize> = (0..n).filter(|&c| cols[c].group == gi).collect();
                match mode {
                    BasisMode::Hermite => {
                        let h = (T::lit(2.0) * var).sqrt();
                        let xs: Vec<T> = nodes.iter().map(|&u| mean + h * u).collect();
                        let rv: Vec<Vec<T>> = ri.iter().map(|&r| xs.iter().map(|&x| rows[r].poly.eval(x)).collect()).collect();
                        let cv: Vec<Vec<T>> = ci.iter().map(|&c| xs.iter().map(|&x| cols[c].poly.eval(x)).collect()).collect();
                        for (a, &r) in ri.iter().enumerate() {
                            for (b, &c) in ci.iter().enumerate() {
                                let s: T = (0..xs.len()).map(|k| weights[k] * rv[a][k] * cv[b][k]).sum();
                                gram[(r, c)] = scale * h * s;
                            }
                        }
                    }
                    BasisMode::Monomial => {
                        let norm = (T::lit(2.0) * T::PI() * var).sqrt();
                        for &r in &ri {
                            for &c in &ci {
                                let (Poly::Monomial { degree: d1 }, Poly::Monomial { degree: d2 }) = (&rows[r].poly, &cols[c].poly)
                                else {
                                    unreachable!()
                                };
                                gram[(r, c)] = scale * norm * normal_moment(mean, var, d1 + d2);
                            }
                        }
                    }
                }
            }
        }
        let lu = FullPivLu::new(&gram);
        if !lu.is_invertible() {
            return Err(EnsembleError::IllConditioned { condition: f64::INFINITY, n });
        }
        let condition = lu.condition_number(&gram);
        if !(condition.to_f64_lossy() <= CONDITION_LIMIT) {
            return Err(EnsembleError::IllConditioned { condition: condition.to_f64_lossy(), n });
        }
        let a = lu.inverse().transpose();
        Ok(Self { system, mode, rho, gamma, rows, cols, gram, a, condition })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// max_f [ρ_f − (x − c_f)²/(2v_f)].
    fn gauge_at(&self, x: T) -> T {
        self.system
            .f_groups
            .iter()
            .zip(&self.rho)
            .map(|(g, &r)| {
                let d = x - g.center;
                r - d * d / (T::lit(2.0) * g.variance)
            })
            .fold(T::neg_infinity(), T::max)
    }

    /// Φ(x)e^{−m(x)}, Ψ(x)e^{m(x)} and m(x).
    pub(crate) fn families(&self, x: T) -> (Vec<T>, Vec<T>, T) {
        let m = self.gauge_at(x);
        let two = T::lit(2.0);
        let fw: Vec<T> = self
            .system
            .f_groups
            .iter()
            .zip(&self.rho)
            .map(|(g, &r)| {
                let d = x - g.center;
                (r - d * d / (two * g.variance) - m).exp()
            })
            .collect();
        let gw: Vec<T> = self
            .system
            .g_groups
            .iter()
            .zip(&self.gamma)
            .map(|(g, &s)| {
                let d = x - g.center;
                (s - d * d / (two * g.variance) + m).exp()
            })
            .collect();
        let phi = self.rows.iter().map(|b| fw[b.group] * b.poly.eval(x)).collect();
        let psi = self.cols.iter().map(|b| gw[b.group] * b.poly.eval(x)).collect();
        (phi, psi, m)
    }

    /// A Ψ(x) for the gauged Ψ.
    pub(crate) fn a_times(&self, psi: &[T]) -> Vec<T> {
        self.a.mul_vec(psi)
    }

    pub fn kernel(&self, x: T, y: T) -> T {
        let (phi, _, mx) = self.families(x);
        let (_, psi, my) = self.families(y);
        let apsi = self.a_times(&psi);
        let v: T = phi.iter().zip(&apsi).map(|(&p, &q)| p * q).sum();
        v * (mx - my).exp()
    }

    pub fn kernel_diagonal(&self, x: T) -> T {
        let (phi, psi, _) = self.families(x);
        let apsi = self.a_times(&psi);
        phi.iter().zip(&apsi).map(|(&p, &q)| p * q).sum()
    }

    /// (1/n) K(x, x).
    pub fn mean_density(&self, x: T) -> T {
        self.kernel_diagonal(x) / T::from_usize_lossy(self.n())
    }

    /// ∫ Φ Ψᵀ by composite Gauss–Legendre on the envelope; equals the Gram matrix.
    pub fn quadrature_gram(&self, panels: usize, order: usize) -> Matrix<T> {
        let n = self.n();
        let mut m = Matrix::zeros(n, n);
        for (lo, hi) in self.system.envelope() {
            let (xs, ws) = crate::quadrature::composite_gauss_legendre(lo, hi, panels, order);
            for (&x, &w) in xs.iter().zip(&ws) {
                let (phi, psi, _) = self.families(x);
                for r in 0..n {
                    for c in 0..n {
                        m[(r, c)] += w * phi[r] * psi[c];
                    }
                }
            }
        }
        m
    }

    /// max |G⁻¹ ∫ΦΨᵀ − I|: biorthogonality of the transformed families G⁻¹Φ and Ψ.
    pub fn biorthogonality_defect(&self, panels: usize, order: usize) -> T {
        let q = self.quadrature_gram(panels, order);
        let ginv = self.a.transpose();
        let prod = ginv.mul(&q);
        let n = self.n();
        let mut worst = T::zero();
        for r in 0..n {
            for c in 0..n {
                let target = if r == c { T::one() } else { T::zero() };
                worst = worst.max((prod[(r, c)] - target).abs());
            }
        }
        worst
    }

    /// ∫ K(x, x) dx by adaptive quadrature over the envelope.
    pub fn trace(&self, tol: T) -> T {
        self.system
            .envelope()
            .into_iter()
            .map(|(lo, hi)| crate::quadrature::integrate_adaptive(|x| self.kernel_diagonal(x), lo, hi, tol, tol, 4000).value)
            .sum()
    }
}
