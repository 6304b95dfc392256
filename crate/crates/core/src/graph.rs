//! Followers digraph, leader links and the graph predicates used by the
//! convergence conditions.
//!
//! Follower vertices are labeled `1..=n` and the leader is vertex `0`. The
//! stored adjacency entry `a_ij` (1-based `i, j`) means agent `i` listens to
//! agent `j`, i.e. information flows along the arc `j -> i`.

use serde::Serialize;

use crate::linalg::{self, LinalgError, Matrix};

pub const MAX_FOLLOWERS: usize = 64;
const BALANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("follower count must be in 1..={MAX_FOLLOWERS}, got {0}")]
    Size(usize),
    #[error("vertex {vertex} out of range 1..={n}")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("weight {weight} on arc {from}->{to} must be finite and nonnegative")]
    BadWeight { from: usize, to: usize, weight: f64 },
    #[error("noise intensity {value} for ({from},{to}) must be finite and nonnegative")]
    BadSigma { from: usize, to: usize, value: f64 },
    #[error("leader weight vector has length {got}, expected {n}")]
    LeaderLength { got: usize, n: usize },
    #[error("follower digraph is not balanced")]
    NotBalanced,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One directed arc: `to` receives information from `from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

impl Arc {
    pub fn new(from: usize, to: usize, weight: f64) -> Self {
        Self { from, to, weight }
    }
}

/// Weighted digraph on the followers.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    n: usize,
    adjacency: Matrix,
}

impl WeightedDigraph {
    pub fn empty(n: usize) -> Result<Self, GraphError> {
        if n == 0 || n > MAX_FOLLOWERS {
            return Err(GraphError::Size(n));
        }
        Ok(Self {
            n,
            adjacency: Matrix::zeros(n, n),
        })
    }

    /// Builds the digraph from an arc list. Repeated arcs accumulate weight;
    /// zero-weight arcs are ignored.
    pub fn from_arcs(n: usize, arcs: &[Arc]) -> Result<Self, GraphError> {
        let mut g = Self::empty(n)?;
        for arc in arcs {
            for v in [arc.from, arc.to] {
                if v == 0 || v > n {
                    return Err(GraphError::VertexOutOfRange { vertex: v, n });
                }
            }
            if arc.from == arc.to {
                return Err(GraphError::SelfLoop(arc.from));
            }
            if !arc.weight.is_finite() || arc.weight < 0.0 {
                return Err(GraphError::BadWeight {
                    from: arc.from,
                    to: arc.to,
                    weight: arc.weight,
                });
            }
            g.adjacency[(arc.to - 1, arc.from - 1)] += arc.weight;
        }
        Ok(g)
    }

    /// Builds the digraph from an adjacency matrix with `a_ij > 0` meaning
    /// `i` listens to `j`.
    pub fn from_adjacency(adjacency: Matrix) -> Result<Self, GraphError> {
        let n = adjacency.rows();
        if !adjacency.is_square() || n == 0 || n > MAX_FOLLOWERS {
            return Err(GraphError::Size(n));
        }
        for i in 0..n {
            for j in 0..n {
                let w = adjacency[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(GraphError::BadWeight {
                        from: j + 1,
                        to: i + 1,
                        weight: w,
                    });
                }
                if i == j && w != 0.0 {
                    return Err(GraphError::SelfLoop(i + 1));
                }
            }
        }
        Ok(Self { n, adjacency })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    /// Weight `a_ij` with 1-based labels.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i - 1, j - 1)]
    }

    /// Neighbor set `N_i` (1-based labels).
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (1..=self.n).filter(|&j| self.weight(i, j) > 0.0).collect()
    }

    pub fn in_degree(&self, i: usize) -> f64 {
        self.adjacency.row(i - 1).iter().sum()
    }

    pub fn out_degree(&self, i: usize) -> f64 {
        (0..self.n).map(|k| self.adjacency[(k, i - 1)]).sum()
    }

    /// Arcs in `(from, to, weight)` form, row-major over receivers.
    pub fn arcs(&self) -> Vec<Arc> {
        let mut out = Vec::new();
        for i in 1..=self.n {
            for j in 1..=self.n {
                let w = self.weight(i, j);
                if w > 0.0 {
                    out.push(Arc::new(j, i, w));
                }
            }
        }
        out
    }
}

/// `L = D - A` with `D` the in-degree diagonal.
pub fn laplacian(g: &WeightedDigraph) -> Matrix {
    let n = g.n;
    let mut l = g.adjacency.scale(-1.0);
    for i in 0..n {
        l[(i, i)] = g.adjacency.row(i).iter().sum::<f64>();
    }
    l
}

pub fn is_balanced(g: &WeightedDigraph) -> bool {
    (1..=g.n).all(|i| (g.in_degree(i) - g.out_degree(i)).abs() <= BALANCE_TOL)
}

/// Noise intensities `sigma_ji`, `j` in `0..=n` (0 = leader), `i` in `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTable {
    /// (n+1) x n, row `j`, column `i-1`.
    sigma: Matrix,
}

impl NoiseTable {
    pub fn uniform(n: usize, value: f64) -> Result<Self, GraphError> {
        if !value.is_finite() || value < 0.0 {
            return Err(GraphError::BadSigma {
                from: 0,
                to: 0,
                value,
            });
        }
        Ok(Self {
            sigma: Matrix::from_row_major(n + 1, n, vec![value; (n + 1) * n])?,
        })
    }

    pub fn from_entries(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut sigma = Matrix::zeros(n + 1, n);
        for &(from, to, value) in entries {
            if from > n {
                return Err(GraphError::VertexOutOfRange { vertex: from, n });
            }
            if to == 0 || to > n {
                return Err(GraphError::VertexOutOfRange { vertex: to, n });
            }
            if !value.is_finite() || value < 0.0 {
                return Err(GraphError::BadSigma { from, to, value });
            }
            sigma[(from, to - 1)] = value;
        }
        Ok(Self { sigma })
    }

    /// `sigma_ji`: noise on agent `i`'s measurement of agent `j`.
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.sigma[(j, i - 1)]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            sigma: self.sigma.scale(s),
        }
    }
}

/// Followers digraph together with the leader links and noise intensities;
/// the whole augmented graph on `{0, 1, ..., n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderTopology {
    followers: WeightedDigraph,
    b: Vec<f64>,
    sigma: NoiseTable,
}

impl LeaderTopology {
    pub fn new(
        followers: WeightedDigraph,
        b: Vec<f64>,
        sigma: NoiseTable,
    ) -> Result<Self, GraphError> {
        let n = followers.n();
        if b.len() != n {
            return Err(GraphError::LeaderLength { got: b.len(), n });
        }
        for (i, &w) in b.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(GraphError::BadWeight {
                    from: 0,
                    to: i + 1,
                    weight: w,
                });
            }
        }
        if sigma.sigma.rows() != n + 1 || sigma.sigma.cols() != n {
            return Err(GraphError::Size(sigma.sigma.cols()));
        }
        Ok(Self {
            followers,
            b,
            sigma,
        })
    }

    pub fn n(&self) -> usize {
        self.followers.n()
    }

    pub fn followers(&self) -> &WeightedDigraph {
        &self.followers
    }

    pub fn leader_weights(&self) -> &[f64] {
        &self.b
    }

    pub fn noise(&self) -> &NoiseTable {
        &self.sigma
    }

    pub fn with_noise(&self, sigma: NoiseTable) -> Self {
        Self {
            sigma,
            ..self.clone()
        }
    }

    pub fn with_leader_weights(&self, b: Vec<f64>) -> Result<Self, GraphError> {
        Self::new(self.followers.clone(), b, self.sigma.clone())
    }

    pub fn leader_matrix(&self) -> Matrix {
        Matrix::from_diag(&self.b)
    }
}

/// Whether every vertex of the augmented graph is reachable from `v` along
/// arcs in the direction of information flow.
pub fn is_globally_reachable(t: &LeaderTopology, v: usize) -> bool {
    let n = t.n();
    if v > n {
        return false;
    }
    let mut seen = vec![false; n + 1];
    let mut stack = vec![v];
    seen[v] = true;
    while let Some(u) = stack.pop() {
        let receivers: Vec<usize> = if u == 0 {
            (1..=n).filter(|&i| t.b[i - 1] > 0.0).collect()
        } else {
            (1..=n)
                .filter(|&i| t.followers.weight(i, u) > 0.0)
                .collect()
        };
        for w in receivers {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// `L + B`.
pub fn lb_matrix(t: &LeaderTopology) -> Matrix {
    let mut m = laplacian(&t.followers);
    for (i, &b) in t.b.iter().enumerate() {
        m[(i, i)] += b;
    }
    m
}

/// Result of a symmetric spectral check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub label: String,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub positive_definite: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

impl SpectralReport {
    pub fn of(label: &str, s: &Matrix) -> Result<Self, LinalgError> {
        let (lambda_min, lambda_max) = linalg::sym_eig_extremes_labeled(s, label)?;
        Ok(Self {
            label: label.to_string(),
            lambda_min,
            lambda_max,
            positive_definite: lambda_min > linalg::pd_threshold(lambda_max),
            residual: None,
        })
    }
}

/// `(L + B) + (L + B)^T`.
pub fn symmetrized_lb(t: &LeaderTopology) -> Matrix {
    let m = lb_matrix(t);
    m.add(&m.transpose())
}

/// Spectral report on `(L+B) + (L+B)^T` for a balanced follower digraph.
pub fn check_lemma2(t: &LeaderTopology) -> Result<SpectralReport, GraphError> {
    if !is_balanced(&t.followers) {
        return Err(GraphError::NotBalanced);
    }
    Ok(SpectralReport::of("(L+B)+(L+B)^T", &symmetrized_lb(t))?)
}

/// Fixtures shared by unit and integration tests.
pub mod fixtures {
    use super::*;

    /// Followers of the four-agent example network: arcs 2->1, 1->2, 3->2, 1->3.
    pub fn fig1_followers() -> WeightedDigraph {
        WeightedDigraph::from_arcs(
            3,
            &[
                Arc::new(2, 1, 1.0),
                Arc::new(1, 2, 1.0),
                Arc::new(3, 2, 1.0),
                Arc::new(1, 3, 1.0),
            ],
        )
        .expect("valid fixture")
    }

    /// Four-agent example network with leader links to agents 1 and 2.
    pub fn fig1_topology(sigma: f64) -> LeaderTopology {
        LeaderTopology::new(
            fig1_followers(),
            vec![1.0, 1.0, 0.0],
            NoiseTable::uniform(3, sigma).expect("valid sigma"),
        )
        .expect("valid fixture")
    }

    /// Directed 3-cycle 1->2->3->1 with unit weights.
    pub fn three_cycle() -> WeightedDigraph {
        WeightedDigraph::from_arcs(
            3,
            &[
                Arc::new(1, 2, 1.0),
                Arc::new(2, 3, 1.0),
                Arc::new(3, 1, 1.0),
            ],
        )
        .expect("valid fixture")
    }

    /// Bidirectional pair 1<->2 and an isolated vertex 3.
    pub fn pair_plus_isolated() -> WeightedDigraph {
        WeightedDigraph::from_arcs(3, &[Arc::new(1, 2, 1.0), Arc::new(2, 1, 1.0)])
            .expect("valid fixture")
    }

    pub fn with_leader(g: WeightedDigraph, b: &[f64], sigma: f64) -> LeaderTopology {
        let n = g.n();
        LeaderTopology::new(g, b.to_vec(), NoiseTable::uniform(n, sigma).expect("sigma"))
            .expect("valid fixture")
    }
}
