//! Logarithmic potentials and Cauchy transforms of compactly supported densities.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Side of the real axis from which a boundary value is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    fn sign<T: Real>(self) -> T {
        match self {
            Side::Plus => T::one(),
            Side::Minus => -T::one(),
        }
    }
}

/// A positive measure on the real line with an absolutely continuous density.
pub trait LogMeasure<T: Real>: Send + Sync {
    fn mass(&self) -> T;

    /// Closed support interval, `None` for the zero measure.
    fn support(&self) -> Option<(T, T)>;

    fn density(&self, x: T) -> T;

    /// F(z) = ∫ dμ(y) / (z − y) for z off the real support.
    fn cauchy(&self, z: Complex<T>) -> Complex<T>;

    /// Boundary value of F at real x from the given side: PV ∓ iπρ(x).
    fn cauchy_boundary(&self, x: T, side: Side) -> Complex<T>;

    /// ∫ log(z − y) dμ(y) with the principal branch; real z is taken from `side`.
    fn log_integral(&self, z: Complex<T>, side: Side) -> Complex<T>;

    /// U(x) = ∫ log |x − y|⁻¹ dμ(y).
    fn potential(&self, x: T) -> T {
        -self.log_integral(Complex::new(x, T::zero()), Side::Plus).re
    }
}

/// Principal logarithm with real negative arguments resolved by `side`.
fn log_side<T: Real>(z: Complex<T>, side: Side) -> Complex<T> {
    if z.im == T::zero() {
        if z.re < T::zero() {
            return Complex::new((-z.re).ln(), T::PI() * side.sign());
        }
        return Complex::new(z.re.ln(), T::zero());
    }
    z.ln()
}

/// (u log u − u) with the convention 0·log 0 = 0.
fn xlogx_minus_x<T: Real>(u: Complex<T>, side: Side) -> Complex<T> {
    if u.re == T::zero() && u.im == T::zero() {
        return Complex::new(T::zero(), T::zero());
    }
    u * log_side(u, side) - u
}

/// Piecewise-constant density on consecutive cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeasure<T> {
    /// Cell boundaries, strictly increasing, one more than the number of cells.
    pub edges: Vec<T>,
    /// Mass carried by each cell.
    pub weights: Vec<T>,
}

impl<T: Real> CellMeasure<T> {
    pub fn new(edges: Vec<T>, weights: Vec<T>) -> Self {
        assert_eq!(edges.len(), weights.len() + 1, "one weight per cell");
        Self { edges, weights }
    }

    pub fn cells(&self) -> usize {
        self.weights.len()
    }

    pub fn width(&self, c: usize) -> T {
        self.edges[c + 1] - self.edges[c]
    }

    pub fn midpoint(&self, c: usize) -> T {
        (self.edges[c] + self.edges[c + 1]) / T::lit(2.0)
    }

    pub fn cell_density(&self, c: usize) -> T {
        self.weights[c] / self.width(c)
    }

    fn nonzero_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.cells()).filter(|&c| self.weights[c] != T::zero())
    }
}

impl<T: Real> LogMeasure<T> for CellMeasure<T> {
    fn mass(&self) -> T {
        self.weights.iter().copied().sum()
    }

    fn support(&self) -> Option<(T, T)> {
        let first = self.weights.iter().position(|&w| w > T::zero())?;
        let last = self.weights.iter().rposition(|&w| w > T::zero())?;
        Some((self.edges[first], self.edges[last + 1]))
    }

    fn density(&self, x: T) -> T {
        if x < self.edges[0] || x > self.edges[self.cells()] {
            return T::zero();
        }
        let c = self.edges.partition_point(|&e| e <= x).saturating_sub(1).min(self.cells() - 1);
        self.cell_density(c)
    }

    fn cauchy(&self, z: Complex<T>) -> Complex<T> {
        self.nonzero_cells()
            .map(|c| {
                let d = self.cell_density(c);
                (log_side(z - self.edges[c], Side::Plus) - log_side(z - self.edges[c + 1], Side::Plus)) * d
            })
            .sum()
    }

    fn cauchy_boundary(&self, x: T, side: Side) -> Complex<T> {
        let z = Complex::new(x, T::zero());
        self.nonzero_cells()
            .map(|c| {
                let d = self.cell_density(c);
                (log_side(z - self.edges[c], side) - log_side(z - self.edges[c + 1], side)) * d
            })
            .sum()
    }

    fn log_integral(&self, z: Complex<T>, side: Side) -> Complex<T> {
        self.nonzero_cells()
            .map(|c| {
                let d = self.cell_density(c);
                (xlogx_minus_x(z - self.edges[c], side) - xlogx_minus_x(z - self.edges[c + 1], side)) * d
            })
            .sum()
    }

    fn potential(&self, x: T) -> T {
        let f = |u: T| if u == T::zero() { T::zero() } else { u * u.abs().ln() - u };
        -self
            .nonzero_cells()
            .map(|c| self.cell_density(c) * (f(x - self.edges[c]) - f(x - self.edges[c + 1])))
            .sum::<T>()
    }
}

/// Density ρ(y) = r √(1 − s²) Σ c_k U_k(s) on [α, β], s = (y − centre)/r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneCutDensity<T> {
    pub alpha: T,
    pub beta: T,
    pub coeffs: Vec<T>,
}

/// Σ c_k U_k(s) by Clenshaw recurrence.
pub fn chebyshev_u_sum<T: Real>(coeffs: &[T], s: T) -> T {
    let two_s = s + s;
    let (mut b1, mut b2) = (T::zero(), T::zero());
    for &c in coeffs.iter().rev() {
        let b0 = c + two_s * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    b1
}

impl<T: Real> OneCutDensity<T> {
    pub fn centre(&self) -> T {
        (self.alpha + self.beta) / T::lit(2.0)
    }

    pub fn radius(&self) -> T {
        (self.beta - self.alpha) / T::lit(2.0)
    }

    /// Joukowski inverse φ(ζ) = ζ + √(ζ²−1) with |φ| ≥ 1; real ζ resolved by `side`.
    fn joukowski(&self, z: Complex<T>, side: Side) -> Complex<T> {
        let zeta = (z - self.centre()) / self.radius();
        let one = T::one();
        if zeta.im == T::zero() {
            let s = zeta.re;
            if s > one {
                return Complex::new(s + (s * s - one).sqrt(), T::zero());
            }
            if s < -one {
                return Complex::new(s - (s * s - one).sqrt(), T::zero());
            }
            return Complex::new(s, side.sign::<T>() * (one - s * s).max(T::zero()).sqrt());
        }
        let w = (zeta - one).sqrt() * (zeta + one).sqrt();
        zeta + w
    }

    /// Σ c_k φ^{−(k+1)}.
    fn inverse_power_series(&self, phi: Complex<T>) -> Complex<T> {
        let w = phi.inv();
        let mut acc = Complex::new(T::zero(), T::zero());
        for &c in self.coeffs.iter().rev() {
            acc = acc * w + c;
        }
        acc * w
    }

    fn log_series(&self, phi: Complex<T>, side: Side) -> Complex<T> {
        let half_pi = T::FRAC_PI_2();
        let w = phi.inv();
        let w2 = w * w;
        let mut total = Complex::new(T::zero(), T::zero());
        if let Some(&c0) = self.coeffs.first() {
            let lphi = if phi.im == T::zero() && phi.re < T::zero() {
                Complex::new((-phi.re).ln(), T::PI() * side.sign())
            } else {
                phi.ln()
            };
            total += (lphi - T::LN_2() + w2 / T::lit(2.0)) * (c0 * half_pi);
        }
        let mut wk = w;
        for (k, &c) in self.coeffs.iter().enumerate().skip(1) {
            let kf = T::from_usize_lossy(k);
            let g = -wk / kf + wk * w2 / (kf + T::lit(2.0));
            total += g * (c * half_pi);
            wk = wk * w;
        }
        total
    }
}

impl<T: Real> LogMeasure<T> for OneCutDensity<T> {
    fn mass(&self) -> T {
        let r = self.radius();
        r * r * self.coeffs.first().copied().unwrap_or(T::zero()) * T::FRAC_PI_2()
    }

    fn support(&self) -> Option<(T, T)> {
        Some((self.alpha, self.beta))
    }

    fn density(&self, x: T) -> T {
        if x <= self.alpha || x >= self.beta {
            return T::zero();
        }
        let r = self.radius();
        let s = (x - self.centre()) / r;
        r * (T::one() - s * s).sqrt() * chebyshev_u_sum(&self.coeffs, s)
    }

    fn cauchy(&self, z: Complex<T>) -> Complex<T> {
        let phi = self.joukowski(z, Side::Plus);
        self.inverse_power_series(phi) * (self.radius() * T::PI())
    }

    fn cauchy_boundary(&self, x: T, side: Side) -> Complex<T> {
        let phi = self.joukowski(Complex::new(x, T::zero()), side);
        self.inverse_power_series(phi) * (self.radius() * T::PI())
    }

    fn log_integral(&self, z: Complex<T>, side: Side) -> Complex<T> {
        let r = self.radius();
        let phi = self.joukowski(z, side);
        let c0 = self.coeffs.first().copied().unwrap_or(T::zero());
        (self.log_series(phi, side) + Complex::new(r.ln() * c0 * T::FRAC_PI_2(), T::zero())) * (r * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_adaptive;

    fn semicircle() -> OneCutDensity<f64> {
        // (2/π)√(1−x²) = r√(1−s²)·c₀ with r = 1 gives c₀ = 2/π.
        OneCutDensity { alpha: -1.0, beta: 1.0, coeffs: vec![2.0 / std::f64::consts::PI] }
    }

    fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        integrate_adaptive(f, a, b, 1e-13, 1e-13, 4000).value
    }

    #[test]
    fn point_like_cell_cauchy() {
        let m = CellMeasure::new(vec![-1e-3f64, 1e-3], vec![1.0]);
        let f = m.cauchy(Complex::new(2.0, 0.0));
        assert!((f.re - 0.5).abs() < 1e-6 && f.im.abs() < 1e-12);
    }

    #[test]
    fn semicircle_closed_forms() {
        let m = semicircle();
        assert!((m.mass() - 1.0).abs() < 1e-15);
        let z = Complex::new(1000.0, 0.0);
        assert!((m.cauchy(z) * z - 1.0).norm() < 1e-3);
        let x = 0.3;
        let fp = m.cauchy_boundary(x, Side::Plus);
        assert!((fp.im + std::f64::consts::PI * m.density(x)).abs() < 1e-14);
        // PV for the semicircle is 2x.
        assert!((fp.re - 2.0 * x).abs() < 1e-14);
        // U(x) = 1/2 + log 2 − x² on the support.
        for &x in &[-0.9, 0.0, 0.5] {
            assert!((m.potential(x) - (0.5 + std::f64::consts::LN_2 - x * x)).abs() < 1e-13);
        }
    }

    #[test]
    fn one_cut_matches_quadrature() {
        let m = OneCutDensity { alpha: -0.4, beta: 1.2, coeffs: vec![1.3, -0.2, 0.15, 0.05] };
        let mass = quad(|y| m.density(y), m.alpha, m.beta);
        assert!((mass - m.mass()).abs() < 1e-11);
        for z in [Complex::new(0.3, 0.7), Complex::new(-2.0, 0.0), Complex::new(3.0, -0.1), Complex::new(0.1, -1e-3)] {
            let re = quad(|y| (m.density(y) * (z - y).inv()).re, m.alpha, m.beta);
            let im = quad(|y| (m.density(y) * (z - y).inv()).im, m.alpha, m.beta);
            assert!((m.cauchy(z) - Complex::new(re, im)).norm() < 1e-9, "{z}");
            let lre = quad(|y| m.density(y) * (z - y).ln().re, m.alpha, m.beta);
            let lim = quad(|y| m.density(y) * (z - y).ln().im, m.alpha, m.beta);
            assert!((m.log_integral(z, Side::Plus) - Complex::new(lre, lim)).norm() < 1e-9, "{z}");
        }
        // Real axis left of the support from above: arg(z − y) = π.
        let l = m.log_integral(Complex::new(-1.0, 0.0), Side::Plus);
        assert!((l.im - std::f64::consts::PI * m.mass()).abs() < 1e-12);
    }

    #[test]
    fn one_cut_potential_matches_cells() {
        let m = OneCutDensity { alpha: -1.0, beta: 0.5, coeffs: vec![0.9, 0.1] };
        let n = 4000;
        let edges: Vec<f64> = (0..=n).map(|j| m.alpha + (m.beta - m.alpha) * j as f64 / n as f64).collect();
        let weights: Vec<f64> = (0..n).map(|c| quad(|y| m.density(y), edges[c], edges[c + 1])).collect();
        let cells = CellMeasure::new(edges, weights);
        for &x in &[-1.5, -0.3, 0.2, 2.0] {
            assert!((cells.potential(x) - m.potential(x)).abs() < 1e-6);
        }
        let z = Complex::new(0.7, 0.0);
        assert!((cells.cauchy(z) - m.cauchy(z)).norm() < 1e-5);
    }

    #[test]
    fn cell_boundary_values() {
        let m = CellMeasure::new(vec![0.0, 1.0, 2.0], vec![0.5, 1.5]);
        let fp = m.cauchy_boundary(0.5, Side::Plus);
        let fm = m.cauchy_boundary(0.5, Side::Minus);
        assert!((fp.im + std::f64::consts::PI * 0.5).abs() < 1e-14);
        assert!((fm.im - std::f64::consts::PI * 0.5).abs() < 1e-14);
        assert!((fp.re - fm.re).abs() < 1e-14);
        let u_complex = -m.log_integral(Complex::new(1.3, 0.0), Side::Plus).re;
        assert!((u_complex - m.potential(1.3)).abs() < 1e-14);
        assert_eq!(m.support(), Some((0.0, 2.0)));
        assert_eq!(m.density(1.5), 1.5);
    }

    #[test]
    fn single_precision_cells() {
        let m = CellMeasure::new(vec![0.0f32, 1.0], vec![1.0]);
        assert!((m.cauchy(Complex::new(3.0f32, 0.0)).re - (1.5f32).ln()).abs() < 1e-6);
    }
}
