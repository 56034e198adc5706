//! Transition data, the bipartite path tree and its interaction matrix.

use std::fmt;

use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("transition matrix is empty")]
    Empty,
    #[error("transition matrix rows have different lengths")]
    Ragged,
    #[error("negative transition number at ({k}, {l})", k = .k + 1, l = .l + 1)]
    NegativeEntry { k: usize, l: usize },
    #[error("transition numbers sum to {0}, expected 1")]
    SumNotOne(Rational64),
    #[error("{which} {index} has no nonzero transition number", index = .index + 1)]
    ZeroRowOrColumn { which: &'static str, index: usize },
    #[error("nonzero pattern is not a connected right-down path from (1,1) to (p,q)")]
    NotConnected,
    #[error(
        "entries ({k1}, {l1}) and ({k2}, {l2}) are both nonzero on anti-diagonal {i}",
        k1 = .first.0 + 1, l1 = .first.1 + 1, k2 = .second.0 + 1, l2 = .second.1 + 1, i = .diagonal + 1
    )]
    AntiDiagonalClash { diagonal: usize, first: (usize, usize), second: (usize, usize) },
    #[error("n * t({k}, {l}) is not an integer for n = {n}", k = .k + 1, l = .l + 1)]
    NonIntegerCounts { k: usize, l: usize, n: usize },
    #[error("invalid problem configuration: {0}")]
    InvalidConfig(String),
}

/// Geometry of the problem: endpoints, observation time and temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub t: T,
    pub temperature: T,
}

impl<T: Real> ProblemConfig<T> {
    pub fn new(a: Vec<T>, b: Vec<T>, t: T, temperature: T) -> Result<Self, GraphError> {
        let cfg = Self { a, b, t, temperature };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |msg: &str| Err(GraphError::InvalidConfig(msg.to_string()));
        if self.a.is_empty() || self.b.is_empty() {
            return bad("need at least one starting and one ending point");
        }
        if self.a.iter().chain(&self.b).any(|x| !x.is_finite()) {
            return bad("endpoints must be finite");
        }
        if self.a.windows(2).any(|w| w[0] <= w[1]) {
            return bad("starting points must be strictly decreasing");
        }
        if self.b.windows(2).any(|w| w[0] <= w[1]) {
            return bad("ending points must be strictly decreasing");
        }
        if !(self.t > T::zero() && self.t < T::one()) {
            return bad("time t must lie in (0, 1)");
        }
        if !(self.temperature > T::zero() && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.a.len()
    }

    pub fn q(&self) -> usize {
        self.b.len()
    }
}

/// p×q matrix of exact nonnegative transition numbers summing to one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    entries: Vec<Vec<Rational64>>,
}

impl TransitionMatrix {
    pub fn new(entries: Vec<Vec<Rational64>>) -> Result<Self, GraphError> {
        let q = entries.first().map_or(0, Vec::len);
        if entries.is_empty() || q == 0 {
            return Err(GraphError::Empty);
        }
        if entries.iter().any(|r| r.len() != q) {
            return Err(GraphError::Ragged);
        }
        for (k, row) in entries.iter().enumerate() {
            for (l, v) in row.iter().enumerate() {
                if v.is_negative() {
                    return Err(GraphError::NegativeEntry { k, l });
                }
            }
        }
        let sum: Rational64 = entries.iter().flatten().copied().sum();
        if !sum.is_one() {
            return Err(GraphError::SumNotOne(sum));
        }
        if let Some(k) = entries.iter().position(|r| r.iter().all(Zero::is_zero)) {
            return Err(GraphError::ZeroRowOrColumn { which: "row", index: k });
        }
        if let Some(l) = (0..q).find(|&l| entries.iter().all(|r| r[l].is_zero())) {
            return Err(GraphError::ZeroRowOrColumn { which: "column", index: l });
        }
        Ok(Self { entries })
    }

    /// Parses rows of "num/den" (or integer) strings.
    pub fn parse(rows: &[Vec<String>]) -> Result<Self, GraphError> {
        let parsed = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|s| {
                        s.trim().parse::<Rational64>().map_err(|_| {
                            GraphError::InvalidConfig(format!("cannot parse rational {s:?}"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(parsed)
    }

    pub fn p(&self) -> usize {
        self.entries.len()
    }

    pub fn q(&self) -> usize {
        self.entries[0].len()
    }

    pub fn get(&self, k: usize, l: usize) -> Rational64 {
        self.entries[k][l]
    }

    pub fn entries(&self) -> &[Vec<Rational64>] {
        &self.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Vertex {
    A(usize),
    B(usize),
}

impl Vertex {
    /// Index with starting points first: a_k ↦ k, b_l ↦ p + l.
    pub fn index(self, p: usize) -> usize {
        match self {
            Vertex::A(k) => k,
            Vertex::B(l) => p + l,
        }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::A(k) => write!(f, "a{}", k + 1),
            Vertex::B(l) => write!(f, "b{}", l + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub k: usize,
    pub l: usize,
    pub weight: Rational64,
}

/// The transition graph: a tree whose edges trace a right-down path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathTree {
    p: usize,
    q: usize,
    edges: Vec<Edge>,
}

pub fn build_tree(m: &TransitionMatrix) -> Result<PathTree, GraphError> {
    let (p, q) = (m.p(), m.q());
    let mut by_diagonal: Vec<Option<(usize, usize)>> = vec![None; p + q - 1];
    for k in 0..p {
        for l in 0..q {
            if m.get(k, l).is_zero() {
                continue;
            }
            let d = k + l;
            if let Some(first) = by_diagonal[d] {
                return Err(GraphError::AntiDiagonalClash { diagonal: d, first, second: (k, l) });
            }
            by_diagonal[d] = Some((k, l));
        }
    }
    let cells: Vec<(usize, usize)> = by_diagonal.into_iter().collect::<Option<_>>().ok_or(GraphError::NotConnected)?;
    for w in cells.windows(2) {
        let ((k0, l0), (k1, l1)) = (w[0], w[1]);
        let step_down = k1 == k0 + 1 && l1 == l0;
        let step_right = k1 == k0 && l1 == l0 + 1;
        if !(step_down || step_right) {
            return Err(GraphError::NotConnected);
        }
    }
    let edges = cells.into_iter().map(|(k, l)| Edge { k, l, weight: m.get(k, l) }).collect();
    Ok(PathTree { p, q, edges })
}

impl PathTree {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn vertex_count(&self) -> usize {
        self.p + self.q
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_vertices(&self, i: usize) -> (Vertex, Vertex) {
        let e = self.edges[i];
        (Vertex::A(e.k), Vertex::B(e.l))
    }

    /// Edges incident to sheet `j` (0..p for a-vertices, p..p+q for b-vertices).
    pub fn edges_at_sheet(&self, j: usize) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&i| if j < self.p { self.edges[i].k == j } else { self.edges[i].l + self.p == j })
            .collect()
    }

    pub fn masses<T: Real>(&self) -> Vec<T> {
        self.edges.iter().map(|e| rational_to_real(e.weight)).collect()
    }

    /// Lines "i k(i) l(i) num/den" with one-based indices.
    pub fn summary_lines(&self) -> Vec<String> {
        self.edges
            .iter()
            .enumerate()
            .map(|(i, e)| format!("{} {} {} {}/{}", i + 1, e.k + 1, e.l + 1, e.weight.numer(), e.weight.denom()))
            .collect()
    }
}

pub fn rational_to_real<T: Real>(r: Rational64) -> T {
    T::from_i64(*r.numer()).expect("numerator") / T::from_i64(*r.denom()).expect("denominator")
}

/// Interaction matrix of the edge-indexed measures and the incidence matrix it comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    pub a: Vec<Vec<Rational64>>,
    pub incidence: Vec<Vec<i64>>,
}

pub fn interaction_matrix(g: &PathTree) -> InteractionMatrix {
    let m = g.edge_count();
    let half = Rational64::new(1, 2);
    let a: Vec<Vec<Rational64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let (ei, ej) = (g.edges[i], g.edges[j]);
                    if i == j {
                        Rational64::one()
                    } else if ei.k == ej.k || ei.l == ej.l {
                        half
                    } else {
                        Rational64::zero()
                    }
                })
                .collect()
        })
        .collect();
    let incidence: Vec<Vec<i64>> = (0..g.vertex_count())
        .map(|v| {
            (0..m)
                .map(|i| {
                    let (va, vb) = g.edge_vertices(i);
                    i64::from(va.index(g.p) == v || vb.index(g.p) == v)
                })
                .collect()
        })
        .collect();
    let im = InteractionMatrix { a, incidence };
    assert_eq!(im.a, im.half_btb(), "interaction matrix must equal half of BᵀB");
    im
}

impl InteractionMatrix {
    pub fn size(&self) -> usize {
        self.a.len()
    }

    pub fn half_btb(&self) -> Vec<Vec<Rational64>> {
        let m = self.a.len();
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        let s: i64 = self.incidence.iter().map(|row| row[i] * row[j]).sum();
                        Rational64::new(s, 2)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn to_real<T: Real>(&self) -> Matrix<T> {
        let m = self.a.len();
        Matrix::from_fn(m, m, |i, j| rational_to_real(self.a[i][j]))
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        symmetric_eigenvalues(&self.to_real::<f64>())[0]
    }
}

/// Leaf-peeling order with the deterministic tie-break: smallest vertex index first.
pub fn leaf_peel_order(g: &PathTree) -> Vec<Vertex> {
    leaf_peel_order_by(g, |v| v.index(g.p) as i64)
}

/// Leaf-peeling order choosing, among current leaves, the one with the smallest `priority`.
pub fn leaf_peel_order_by(g: &PathTree, priority: impl Fn(Vertex) -> i64) -> Vec<Vertex> {
    let nv = g.vertex_count();
    let vertex = |v: usize| if v < g.p { Vertex::A(v) } else { Vertex::B(v - g.p) };
    let mut degree = vec![0usize; nv];
    for i in 0..g.edge_count() {
        let (a, b) = g.edge_vertices(i);
        degree[a.index(g.p)] += 1;
        degree[b.index(g.p)] += 1;
    }
    let mut alive = vec![true; nv];
    let mut order = Vec::with_capacity(nv);
    for _ in 0..nv - 1 {
        let leaf = (0..nv)
            .filter(|&v| alive[v] && degree[v] == 1)
            .min_by_key(|&v| priority(vertex(v)))
            .expect("a finite tree always has a leaf");
        alive[leaf] = false;
        order.push(vertex(leaf));
        for i in 0..g.edge_count() {
            let (a, b) = g.edge_vertices(i);
            let (a, b) = (a.index(g.p), b.index(g.p));
            if a == leaf && alive[b] {
                degree[b] -= 1;
            } else if b == leaf && alive[a] {
                degree[a] -= 1;
            }
        }
        degree[leaf] = 0;
    }
    let root = (0..nv).find(|&v| alive[v]).expect("one vertex survives");
    order.push(vertex(root));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    Strict,
    LargestRemainder,
}

/// Integer path counts for n paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n: usize,
    pub n_kl: Vec<Vec<usize>>,
    pub n_k: Vec<usize>,
    pub m_l: Vec<usize>,
}

pub fn finite_counts(m: &TransitionMatrix, n: usize, mode: Rounding) -> Result<Counts, GraphError> {
    let (p, q) = (m.p(), m.q());
    let nr = Rational64::from_integer(n as i64);
    let mut n_kl = vec![vec![0usize; q]; p];
    let mut remainders = vec![];
    for k in 0..p {
        for l in 0..q {
            let x = m.get(k, l) * nr;
            if !x.is_integer() {
                if mode == Rounding::Strict {
                    return Err(GraphError::NonIntegerCounts { k, l, n });
                }
                remainders.push((x.fract(), k, l));
            }
            n_kl[k][l] = x.floor().to_integer() as usize;
        }
    }
    let assigned: usize = n_kl.iter().flatten().sum();
    remainders.sort_by(|x, y| y.0.cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    for &(_, k, l) in remainders.iter().take(n - assigned) {
        n_kl[k][l] += 1;
    }
    let n_k = n_kl.iter().map(|r| r.iter().sum()).collect();
    let m_l = (0..q).map(|l| n_kl.iter().map(|r| r[l]).sum()).collect();
    Ok(Counts { n, n_kl, n_k, m_l })
}

impl Counts {
    /// Counts along the tree edges, in edge order.
    pub fn edge_counts(&self, g: &PathTree) -> Vec<usize> {
        g.edges().iter().map(|e| self.n_kl[e.k][e.l]).collect()
    }
}

/// Exact rational to f64 (used in reports).
pub fn rational_to_f64(r: Rational64) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    fn matrix(rows: &[&[(i64, i64)]]) -> TransitionMatrix {
        TransitionMatrix::new(rows.iter().map(|row| row.iter().map(|&(n, d)| r(n, d)).collect()).collect()).unwrap()
    }

    #[test]
    fn five_edge_example_tree() {
        let m = matrix(&[&[(4, 30), (4, 30), (0, 1), (0, 1)], &[(0, 1), (4, 30), (7, 30), (11, 30)]]);
        let g = build_tree(&m).unwrap();
        let cells: Vec<_> = g.edges().iter().map(|e| (e.k + 1, e.l + 1)).collect();
        assert_eq!(cells, vec![(1, 1), (1, 2), (2, 2), (2, 3), (2, 4)]);
        assert_eq!(g.summary_lines()[3], "4 2 3 7/30");
    }

    #[test]
    fn single_edge_tree() {
        let g = build_tree(&matrix(&[&[(1, 1)]])).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges()[0].weight, Rational64::one());
    }

    #[test]
    fn diagonal_pattern_is_disconnected() {
        let m = matrix(&[&[(1, 2), (0, 1)], &[(0, 1), (1, 2)]]);
        assert_eq!(build_tree(&m), Err(GraphError::NotConnected));
    }

    #[test]
    fn full_pattern_clashes() {
        let m = matrix(&[&[(1, 4), (1, 4)], &[(1, 4), (1, 4)]]);
        assert!(matches!(
            build_tree(&m),
            Err(GraphError::AntiDiagonalClash { diagonal: 1, first: (0, 1), second: (1, 0) })
        ));
    }

    #[test]
    fn matrix_invariants_enforced() {
        assert_eq!(TransitionMatrix::new(vec![]), Err(GraphError::Empty));
        assert_eq!(TransitionMatrix::new(vec![vec![r(1, 2)], vec![r(1, 3)]]), Err(GraphError::SumNotOne(r(5, 6))));
        assert_eq!(
            TransitionMatrix::new(vec![vec![r(1, 1), r(0, 1)]]),
            Err(GraphError::ZeroRowOrColumn { which: "column", index: 1 })
        );
        assert_eq!(
            TransitionMatrix::new(vec![vec![r(3, 2), r(-1, 2)]]),
            Err(GraphError::NegativeEntry { k: 0, l: 1 })
        );
        let parsed = TransitionMatrix::parse(&[vec!["1/3".into(), "0".into()], vec!["1/3".into(), "1/3".into()]]);
        assert!(parsed.is_ok());
        assert!(TransitionMatrix::parse(&[vec!["x".into()]]).is_err());
    }

    #[test]
    fn two_by_two_interaction() {
        let g = build_tree(&matrix(&[&[(1, 3), (0, 1)], &[(1, 3), (1, 3)]])).unwrap();
        let a = interaction_matrix(&g);
        let h = r(1, 2);
        let (o, z) = (Rational64::one(), Rational64::zero());
        assert_eq!(a.a, vec![vec![o, h, z], vec![h, o, h], vec![z, h, o]]);
    }

    #[test]
    fn peel_order_two_by_two() {
        let g = build_tree(&matrix(&[&[(1, 3), (0, 1)], &[(1, 3), (1, 3)]])).unwrap();
        assert_eq!(leaf_peel_order(&g), vec![Vertex::A(0), Vertex::B(0), Vertex::A(1), Vertex::B(1)]);
        let alt = leaf_peel_order_by(&g, |v| -(v.index(2) as i64));
        assert_eq!(alt, vec![Vertex::B(1), Vertex::A(1), Vertex::B(0), Vertex::A(0)]);
    }

    #[test]
    fn counts_strict_and_rounded() {
        let m = matrix(&[&[(4, 30), (4, 30), (0, 1), (0, 1)], &[(0, 1), (4, 30), (7, 30), (11, 30)]]);
        let c = finite_counts(&m, 30, Rounding::Strict).unwrap();
        assert_eq!(c.n_kl, vec![vec![4, 4, 0, 0], vec![0, 4, 7, 11]]);
        assert_eq!(c.n_k, vec![8, 22]);
        assert_eq!(c.m_l, vec![4, 8, 7, 11]);
        let thirds = matrix(&[&[(1, 3), (0, 1)], &[(1, 3), (1, 3)]]);
        assert_eq!(
            finite_counts(&thirds, 7, Rounding::Strict),
            Err(GraphError::NonIntegerCounts { k: 0, l: 0, n: 7 })
        );
        let c8 = finite_counts(&thirds, 8, Rounding::LargestRemainder).unwrap();
        assert_eq!(c8.n_kl, vec![vec![3, 0], vec![3, 2]]);
        assert_eq!(finite_counts(&matrix(&[&[(1, 1)]]), 5, Rounding::Strict).unwrap().n_kl, vec![vec![5]]);
    }

    #[test]
    fn problem_config_validation() {
        assert!(ProblemConfig::new(vec![1.0, -1.0], vec![0.0], 0.5, 1.0).is_ok());
        assert!(ProblemConfig::new(vec![-1.0, 1.0], vec![0.0], 0.5, 1.0).is_err());
        assert!(ProblemConfig::new(vec![0.0], vec![0.0], 1.0, 1.0).is_err());
        assert!(ProblemConfig::new(vec![0.0f32], vec![0.0], 0.5, 0.0).is_err());
    }

    /// Random right-down path over a p×q board, returned as a move string (true = down).
    fn path_strategy() -> impl Strategy<Value = (usize, usize, Vec<bool>)> {
        (1usize..5, 1usize..5).prop_flat_map(|(p, q)| {
            Just((p, q)).prop_flat_map(move |(p, q)| {
                let moves: Vec<bool> = std::iter::repeat(true).take(p - 1).chain(std::iter::repeat(false).take(q - 1)).collect();
                Just(moves).prop_shuffle().prop_map(move |m| (p, q, m))
            })
        })
    }

    fn path_cells(p: usize, q: usize, moves: &[bool]) -> Vec<(usize, usize)> {
        let mut cells = vec![(0, 0)];
        let (mut k, mut l) = (0, 0);
        for &down in moves {
            if down { k += 1 } else { l += 1 }
            cells.push((k, l));
        }
        assert_eq!((k, l), (p - 1, q - 1));
        cells
    }

    fn matrix_on(p: usize, q: usize, cells: &[(usize, usize)]) -> Result<TransitionMatrix, GraphError> {
        let mut e = vec![vec![Rational64::zero(); q]; p];
        let w = r(1, cells.len() as i64);
        for &(k, l) in cells {
            e[k][l] = w;
        }
        TransitionMatrix::new(e)
    }

    fn is_leaf_sequence(g: &PathTree, order: &[Vertex]) -> bool {
        let mut removed = std::collections::HashSet::new();
        for v in &order[..order.len() - 1] {
            let deg = (0..g.edge_count())
                .filter(|&i| {
                    let (a, b) = g.edge_vertices(i);
                    (a == *v && !removed.contains(&b)) || (b == *v && !removed.contains(&a))
                })
                .count();
            if deg != 1 {
                return false;
            }
            removed.insert(*v);
        }
        removed.len() + 1 == g.vertex_count()
    }

    proptest! {
        #[test]
        fn right_down_paths_build((p, q, moves) in path_strategy()) {
            let cells = path_cells(p, q, &moves);
            let g = build_tree(&matrix_on(p, q, &cells).unwrap()).unwrap();
            prop_assert_eq!(g.edge_count(), p + q - 1);
            for (i, e) in g.edges().iter().enumerate() {
                prop_assert_eq!(e.k + e.l, i);
            }
            let a = interaction_matrix(&g);
            prop_assert!(a.smallest_eigenvalue() > 0.0);
            for i in 0..a.size() {
                prop_assert!(a.a[i][i].is_one());
                for j in 0..a.size() {
                    prop_assert_eq!(a.a[i][j], a.a[j][i]);
                }
            }
            let order = leaf_peel_order(&g);
            prop_assert!(is_leaf_sequence(&g, &order));
            let reversed = leaf_peel_order_by(&g, |v| -(v.index(p) as i64));
            prop_assert!(is_leaf_sequence(&g, &reversed));
        }

        #[test]
        fn broken_paths_rejected((p, q, moves) in path_strategy(), drop in 0usize..8, extra in 0usize..16) {
            let cells = path_cells(p, q, &moves);
            if cells.len() > 1 {
                let mut fewer = cells.clone();
                fewer.remove(drop % cells.len());
                prop_assert!(matrix_on(p, q, &fewer).and_then(|m| build_tree(&m)).is_err());
            }
            let (k, l) = (extra % p, (extra / p) % q);
            if !cells.contains(&(k, l)) {
                let mut more = cells.clone();
                more.push((k, l));
                prop_assert!(matrix_on(p, q, &more).and_then(|m| build_tree(&m)).is_err());
            }
        }

        #[test]
        fn largest_remainder_counts_sum_to_n((p, q, moves) in path_strategy(), n in 1usize..60) {
            let cells = path_cells(p, q, &moves);
            let m = matrix_on(p, q, &cells).unwrap();
            let c = finite_counts(&m, n, Rounding::LargestRemainder).unwrap();
            prop_assert_eq!(c.n_k.iter().sum::<usize>(), n);
            prop_assert_eq!(c.m_l.iter().sum::<usize>(), n);
        }
    }
}
