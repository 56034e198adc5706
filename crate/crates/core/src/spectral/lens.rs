use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lambda_bare, SpectralContext, SpectralError};
use crate::potential::Side;
use crate::scalar::{linspace, Real};

/// Which pair of λ-functions separates two consecutive edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LensStep {
    /// Edges (k, l) and (k+1, l): field Re(λ_{k+1} − λ_k).
    Vertical { k: usize },
    /// Edges (k, l) and (k, l+1): field Re(λ_{p+l} − λ_{p+l+1}).
    Horizontal { l: usize },
}

/// A real field sampled on a rectangular grid, with sign components labelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexGridField<T> {
    pub re: Vec<T>,
    pub im: Vec<T>,
    /// values[row * re.len() + col] at re[col] + i·im[row].
    pub values: Vec<T>,
    /// Component id per node; nodes with value exactly 0 get `usize::MAX`.
    pub labels: Vec<usize>,
    /// Sign (+1 or −1) and boundary contact of each component.
    pub components: Vec<(i8, bool)>,
}

impl<T: Real> ComplexGridField<T> {
    pub fn evaluate(re: Vec<T>, im: Vec<T>, f: impl Fn(Complex<T>) -> T + Sync) -> Self {
        let nx = re.len();
        let values: Vec<T> = (0..re.len() * im.len())
            .into_par_iter()
            .map(|idx| f(Complex::new(re[idx % nx], im[idx / nx])))
            .collect();
        let (labels, components) = label_components(&values, nx, im.len());
        Self { re, im, values, labels, components }
    }

    pub fn sign(&self, idx: usize) -> i8 {
        sign_of(self.values[idx])
    }

    pub fn unbounded_count(&self, sign: i8) -> usize {
        self.components.iter().filter(|c| c.0 == sign && c.1).count()
    }

    /// The four nodes around a real point, or `None` outside the grid.
    fn enclosing_cell(&self, x: T) -> Option<[usize; 4]> {
        let nx = self.re.len();
        let col = self.re.partition_point(|&r| r <= x);
        let row = self.im.partition_point(|&r| r <= T::zero());
        if col == 0 || col >= nx || row == 0 || row >= self.im.len() {
            return None;
        }
        let (c0, r0) = (col - 1, row - 1);
        Some([r0 * nx + c0, r0 * nx + c0 + 1, (r0 + 1) * nx + c0, (r0 + 1) * nx + c0 + 1])
    }
}

fn sign_of<T: Real>(v: T) -> i8 {
    if v > T::zero() {
        1
    } else if v < T::zero() {
        -1
    } else {
        0
    }
}

/// 4-neighbour flood fill of equal-sign nodes.
fn label_components<T: Real>(values: &[T], nx: usize, ny: usize) -> (Vec<usize>, Vec<(i8, bool)>) {
    let mut labels = vec![usize::MAX; values.len()];
    let mut components = vec![];
    let mut stack = vec![];
    for start in 0..values.len() {
        let s = sign_of(values[start]);
        if s == 0 || labels[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut boundary = false;
        labels[start] = id;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (col, row) = (idx % nx, idx / nx);
            boundary |= col == 0 || row == 0 || col + 1 == nx || row + 1 == ny;
            let mut visit = |n: usize| {
                if labels[n] == usize::MAX && sign_of(values[n]) == s {
                    labels[n] = id;
                    stack.push(n);
                }
            };
            if col > 0 {
                visit(idx - 1);
            }
            if col + 1 < nx {
                visit(idx + 1);
            }
            if row > 0 {
                visit(idx - nx);
            }
            if row + 1 < ny {
                visit(idx + nx);
            }
        }
        components.push((s, boundary));
    }
    (labels, components)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensReport<T> {
    pub step: LensStep,
    pub alpha: T,
    pub beta_next: T,
    /// α_i lies in the boundary-touching positive component.
    pub alpha_in_positive: bool,
    /// β_{i+1} lies in the boundary-touching negative component.
    pub beta_in_negative: bool,
    pub unbounded_positive: usize,
    pub unbounded_negative: usize,
    pub field: ComplexGridField<T>,
}

impl<T> LensReport<T> {
    pub fn feasible(&self) -> bool {
        self.alpha_in_positive && self.beta_in_negative && self.unbounded_positive == 1 && self.unbounded_negative == 1
    }
}

/// Default window [min α − 2s, max β + 2s] × [−2s, 2s] with s the total support span.
fn default_window<T: Real>(ctx: &SpectralContext<T>) -> (T, T, T) {
    let present: Vec<(T, T)> = ctx.solution.supports.iter().flatten().copied().collect();
    let lo = present.iter().map(|s| s.0).fold(T::infinity(), T::min);
    let hi = present.iter().map(|s| s.1).fold(T::neg_infinity(), T::max);
    let span = hi - lo;
    let margin = T::lit(2.0) * span;
    (lo - margin, hi + margin, margin)
}

/// Sign geometry of the λ-difference separating edges i and i+1.
pub fn lens_feasibility<T: Real>(
    ctx: &SpectralContext<T>,
    i: usize,
    nx: usize,
    ny: usize,
) -> Result<LensReport<T>, SpectralError> {
    let edges = ctx.tree.edges();
    if i + 1 >= edges.len() {
        return Err(SpectralError::InvalidStep(i, i + 1));
    }
    let (e0, e1) = (edges[i], edges[i + 1]);
    let p = ctx.p();
    let (step, plus, minus) = if e1.k == e0.k + 1 && e1.l == e0.l {
        (LensStep::Vertical { k: e0.k }, e1.k, e0.k)
    } else if e1.k == e0.k && e1.l == e0.l + 1 {
        (LensStep::Horizontal { l: e0.l }, p + e0.l, p + e1.l)
    } else {
        return Err(SpectralError::InvalidStep(i, i + 1));
    };
    let (alpha, _) = ctx.solution.supports[i].ok_or(SpectralError::InvalidStep(i, i + 1))?;
    let (_, beta_next) = ctx.solution.supports[i + 1].ok_or(SpectralError::InvalidStep(i, i + 1))?;
    let (lo, hi, h) = default_window(ctx);
    let offset = ctx.constants[plus] - ctx.constants[minus];
    let field = ComplexGridField::evaluate(linspace(lo, hi, nx), linspace(-h, h, ny), |z| {
        (lambda_bare(ctx, plus, z, Side::Plus) - lambda_bare(ctx, minus, z, Side::Plus)).re + offset
    });
    let membership = |x: T, want: i8, name: &str| -> Result<bool, SpectralError> {
        let coarse = || SpectralError::ResolutionTooCoarse { point: name.to_string(), x: x.to_f64_lossy() };
        let cell = field.enclosing_cell(x).ok_or_else(coarse)?;
        let s = field.sign(cell[0]);
        if cell.iter().any(|&n| field.sign(n) != s) {
            return Err(coarse());
        }
        let label = field.labels[cell[0]];
        Ok(s == want && field.components[label].1)
    };
    let alpha_in_positive = membership(alpha, 1, "alpha")?;
    let beta_in_negative = membership(beta_next, -1, "beta")?;
    Ok(LensReport {
        step,
        alpha,
        beta_next,
        alpha_in_positive,
        beta_in_negative,
        unbounded_positive: field.unbounded_count(1),
        unbounded_negative: field.unbounded_count(-1),
        field,
    })
}

/// Smallest X₀ on the sample grid such that every Re(λ_k − λ_{p+l}) is positive for |x| > X₀.
pub fn real_threshold<T: Real>(ctx: &SpectralContext<T>, samples: usize) -> Option<T> {
    let (lo, hi, _) = default_window(ctx);
    let xs = linspace(lo, hi, samples);
    let p = ctx.p();
    let q = ctx.sheets() - p;
    let failing: Vec<T> = xs
        .par_iter()
        .filter(|&&x| {
            let z = Complex::new(x, T::zero());
            (0..p).any(|k| {
                (0..q).any(|l| {
                    let d = (lambda_bare(ctx, k, z, Side::Plus) - lambda_bare(ctx, p + l, z, Side::Plus)).re
                        + ctx.constants[k]
                        - ctx.constants[p + l];
                    d <= T::zero()
                })
            })
        })
        .copied()
        .collect();
    let x0 = failing.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if failing.first() == xs.first() || failing.last() == xs.last() {
        return None;
    }
    Some(x0)
}

/// One row of the "re_z,im_z,sign,component_id" export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignRow<T> {
    pub re_z: T,
    pub im_z: T,
    pub sign: i8,
    pub component_id: i64,
}

pub fn sign_field_rows<T: Real>(field: &ComplexGridField<T>) -> Vec<SignRow<T>> {
    let nx = field.re.len();
    (0..field.values.len())
        .map(|idx| SignRow {
            re_z: field.re[idx % nx],
            im_z: field.im[idx / nx],
            sign: field.sign(idx),
            component_id: if field.labels[idx] == usize::MAX { -1 } else { field.labels[idx] as i64 },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flood_fill_counts_components() {
        // + + - +
        // + - - +
        // + + - +
        let v = [1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0, 1.0];
        let (labels, comps) = label_components(&v, 4, 3);
        assert_eq!(comps.len(), 3);
        assert_eq!(labels[0], labels[8]);
        assert_ne!(labels[0], labels[3]);
        assert!(comps.iter().all(|c| c.1));
    }

    #[test]
    fn interior_island_is_bounded() {
        let mut v = vec![1.0; 25];
        v[12] = -1.0;
        let (_, comps) = label_components(&v, 5, 5);
        assert_eq!(comps, vec![(1, true), (-1, false)]);
    }
}
