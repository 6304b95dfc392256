#![allow(dead_code)]

use leader_consensus::graph::{self, NoiseTable};
use leader_consensus::{LeaderTopology, Matrix, WeightedDigraph};
use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;

/// `count` draws from `strategy` with a fixed seed.
pub fn sample<S: Strategy>(strategy: S, count: usize) -> Vec<S::Value> {
    let mut runner = TestRunner::deterministic();
    (0..count)
        .map(|_| strategy.new_tree(&mut runner).expect("strategy").current())
        .collect()
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_row_major(m.nrows(), m.ncols(), m.transpose().as_slice().to_vec()).unwrap()
}

/// Real parts of the eigenvalues of a general square matrix.
pub fn eigen_real_parts(m: &Matrix) -> Vec<f64> {
    to_na(m)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .collect()
}

pub fn eigen_moduli(m: &Matrix) -> Vec<f64> {
    to_na(m)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect()
}

fn weight() -> impl Strategy<Value = f64> {
    0.2f64..3.0
}

fn maybe_weight(p: f64) -> impl Strategy<Value = f64> {
    (proptest::bool::weighted(p), weight()).prop_map(|(on, w)| if on { w } else { 0.0 })
}

fn adjacency(n: usize, density: f64) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(maybe_weight(density), n * n).prop_map(move |w| {
        let mut m = Matrix::from_row_major(n, n, w).unwrap();
        for i in 0..n {
            m[(i, i)] = 0.0;
        }
        m
    })
}

/// Random weighted digraph on 2..=max_n vertices.
pub fn digraph(max_n: usize) -> impl Strategy<Value = WeightedDigraph> {
    (2..=max_n)
        .prop_flat_map(|n| adjacency(n, 0.35))
        .prop_map(|a| WeightedDigraph::from_adjacency(a).unwrap())
}

/// Random digraph that contains a spanning tree rooted at the returned
/// vertex (1-based).
pub fn rooted_digraph(max_n: usize) -> impl Strategy<Value = (WeightedDigraph, usize)> {
    (2..=max_n)
        .prop_flat_map(|n| {
            (
                adjacency(n, 0.25),
                Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
                proptest::collection::vec(any::<prop::sample::Index>(), n),
                proptest::collection::vec(weight(), n),
            )
        })
        .prop_map(|(mut a, order, parents, w)| {
            for k in 1..order.len() {
                let parent = order[parents[k].index(k)];
                a[(order[k], parent)] = w[k];
            }
            (WeightedDigraph::from_adjacency(a).unwrap(), order[0] + 1)
        })
}

/// Sum of weighted directed cycles, hence balanced.
pub fn balanced_digraph(max_n: usize) -> impl Strategy<Value = WeightedDigraph> {
    (2..=max_n).prop_flat_map(balanced_digraph_on)
}

pub fn balanced_digraph_on(n: usize) -> impl Strategy<Value = WeightedDigraph> {
    let cycle = (
        Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        2..=n,
        weight(),
    );
    proptest::collection::vec(cycle, 0..=4).prop_map(move |cycles| {
        let mut a = Matrix::zeros(n, n);
        for (order, len, w) in cycles {
            for k in 0..len {
                let from = order[k];
                let to = order[(k + 1) % len];
                a[(to, from)] += w;
            }
        }
        WeightedDigraph::from_adjacency(a).unwrap()
    })
}

/// Attaches random leader weights (possibly all zero) and uniform noise.
pub fn with_random_leader(
    g: impl Strategy<Value = WeightedDigraph>,
    sigma: f64,
) -> impl Strategy<Value = LeaderTopology> {
    g.prop_flat_map(|g| {
        let n = g.n();
        (Just(g), proptest::collection::vec(maybe_weight(0.4), n))
    })
    .prop_map(move |(g, b)| {
        let n = g.n();
        LeaderTopology::new(g, b, NoiseTable::uniform(n, sigma).unwrap()).unwrap()
    })
}

/// `S + K` with `S` symmetric positive definite and `K` skew, so every
/// eigenvalue has positive real part.
pub fn positive_stable(max_n: usize) -> impl Strategy<Value = Matrix> {
    (2..=max_n)
        .prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(-1.0f64..1.0, n * n),
                proptest::collection::vec(-2.0f64..2.0, n * n),
            )
        })
        .prop_map(|(n, q, k)| {
            let q = Matrix::from_row_major(n, n, q).unwrap();
            let k = Matrix::from_row_major(n, n, k).unwrap();
            q.matmul(&q.transpose())
                .add(&Matrix::identity(n).scale(0.1))
                .add(&k.sub(&k.transpose()))
        })
}

/// Vertices reachable from `v` (0-based) following arcs `j -> i` where
/// `a_ij > 0`.
pub fn reaches_all(g: &WeightedDigraph, v: usize) -> bool {
    let n = g.n();
    let mut seen = vec![false; n];
    let mut stack = vec![v];
    seen[v] = true;
    while let Some(u) = stack.pop() {
        for (i, s) in seen.iter_mut().enumerate() {
            if !*s && g.weight(i + 1, u + 1) > 0.0 {
                *s = true;
                stack.push(i);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

pub fn leader_reachable(t: &LeaderTopology) -> bool {
    graph::is_globally_reachable(t, 0)
}
