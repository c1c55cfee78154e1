//! Weighted digraphs and periodic switching schedules.
//!
//! Adjacency follows the receiver-row convention: `a[(i, j)] > 0` means agent
//! `j` sends to agent `i`. In-degree of `i` is the row sum, out-degree the
//! column sum.

use crate::Matrix;

/// Tolerance for in-degree / out-degree equality.
pub const BALANCE_TOL: f64 = 1e-12;

/// Relative snap applied to schedule boundaries so that `t = k * dwell`
/// computed in floating point selects the mode that starts at `t`.
const BOUNDARY_SNAP: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("adjacency must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("self-loop weight {weight} at agent {agent}")]
    SelfLoop { agent: usize, weight: f64 },
    #[error("weight a[{row}][{col}] = {weight} is negative or non-finite")]
    BadWeight { row: usize, col: usize, weight: f64 },
    #[error("schedule has no modes")]
    EmptySchedule,
    #[error("mode {mode} has {got} agents, expected {expected}")]
    DimensionMismatch { mode: usize, expected: usize, got: usize },
    #[error("dwell of mode {mode} must be positive and finite, got {dwell}")]
    BadDwell { mode: usize, dwell: f64 },
    #[error("mode {mode} is not weight-balanced at agent {agent}: in-degree {d_in}, out-degree {d_out}")]
    Unbalanced {
        mode: usize,
        agent: usize,
        d_in: f64,
        d_out: f64,
    },
    #[error("no window of consecutive modes is strongly connected, even the whole period")]
    NotJointlyConnected,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedDigraph {
    adjacency: Matrix,
}

impl WeightedDigraph {
    pub fn new(adjacency: Matrix) -> Result<Self, GraphError> {
        let (rows, cols) = adjacency.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        for i in 0..rows {
            for j in 0..cols {
                let w = adjacency[(i, j)];
                if !(w.is_finite() && w >= 0.0) {
                    return Err(GraphError::BadWeight {
                        row: i,
                        col: j,
                        weight: w,
                    });
                }
                if i == j && w != 0.0 {
                    return Err(GraphError::SelfLoop { agent: i, weight: w });
                }
            }
        }
        Ok(WeightedDigraph { adjacency })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GraphError> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(GraphError::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        Self::new(Matrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Graph from `(sender, receiver, weight)` triples, zero-based.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut a = Matrix::zeros(n, n);
        for &(from, to, w) in edges {
            a[(to, from)] += w;
        }
        Self::new(a)
    }

    /// Unit-weight directed cycle visiting `order` (zero-based) and closing back.
    pub fn cycle(n: usize, order: &[usize]) -> Result<Self, GraphError> {
        let edges: Vec<_> = order
            .iter()
            .zip(order.iter().cycle().skip(1))
            .map(|(&a, &b)| (a, b, 1.0))
            .collect();
        Self::from_edges(n, &edges)
    }

    pub fn empty(n: usize) -> Self {
        WeightedDigraph {
            adjacency: Matrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    /// `a_ij`: weight with which `i` receives from `j`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    pub fn in_degree(&self, i: usize) -> f64 {
        self.adjacency.row(i).sum()
    }

    /// `(d_in, d_out)` per agent.
    pub fn degrees(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let d_in = (0..n).map(|i| self.adjacency.row(i).sum()).collect();
        let d_out = (0..n).map(|i| self.adjacency.column(i).sum()).collect();
        (d_in, d_out)
    }

    pub fn is_weight_balanced(&self) -> bool {
        self.first_imbalance().is_none()
    }

    fn first_imbalance(&self) -> Option<(usize, f64, f64)> {
        let (d_in, d_out) = self.degrees();
        d_in.into_iter()
            .zip(d_out)
            .enumerate()
            .find(|(_, (i, o))| (i - o).abs() > BALANCE_TOL)
            .map(|(k, (i, o))| (k, i, o))
    }

    /// `L = diag(A 1) - A`.
    pub fn laplacian(&self) -> Matrix {
        let d = Matrix::from_diagonal(&self.adjacency.column_sum());
        d - &self.adjacency
    }

    /// Senders of agent `i`, with weights.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency
            .row(i)
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, w)| w > 0.0)
            .collect::<Vec<_>>()
            .into_iter()
    }

    /// Edge-wise sum of several graphs on the same agent set.
    pub fn union<'a>(graphs: impl IntoIterator<Item = &'a WeightedDigraph>) -> Option<WeightedDigraph> {
        let mut it = graphs.into_iter();
        let first = it.next()?.adjacency.clone();
        let adjacency = it.fold(first, |acc, g| acc + &g.adjacency);
        Some(WeightedDigraph { adjacency })
    }

    /// Edges present here but absent from `previous`, as `(sender, receiver)`.
    pub fn appeared_edges(&self, previous: &WeightedDigraph) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.adjacency[(i, j)] > 0.0 && previous.adjacency[(i, j)] == 0.0 {
                    out.push((j, i));
                }
            }
        }
        out
    }

    pub fn strongly_connected_components(&self) -> Vec<Vec<usize>> {
        tarjan_scc(self)
    }

    pub fn is_strongly_connected(&self) -> bool {
        let n = self.n();
        n > 0 && tarjan_scc(self).len() == 1
    }
}

/// Iterative Tarjan over the sender -> receiver orientation.
fn tarjan_scc(g: &WeightedDigraph) -> Vec<Vec<usize>> {
    let n = g.n();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|v| (0..n).filter(|&w| g.adjacency[(w, v)] > 0.0).collect())
        .collect();

    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next_index = 0;
    // (vertex, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < succ[v].len() {
                let w = succ[v][*pos];
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    components.push(comp);
                }
            }
        }
    }
    components
}

/// Piecewise-constant periodic sequence of digraphs.
///
/// Time is measured in seconds for continuous-time runs and in steps for
/// discrete-time runs; the schedule itself is unit-agnostic.
#[derive(Clone, Debug)]
pub struct GraphSchedule {
    modes: Vec<WeightedDigraph>,
    dwell: Vec<f64>,
    starts: Vec<f64>,
    period: f64,
}

impl GraphSchedule {
    pub fn new(modes: Vec<WeightedDigraph>, dwell: Vec<f64>) -> Result<Self, GraphError> {
        if modes.is_empty() {
            return Err(GraphError::EmptySchedule);
        }
        if dwell.len() != modes.len() {
            return Err(GraphError::DimensionMismatch {
                mode: dwell.len(),
                expected: modes.len(),
                got: dwell.len(),
            });
        }
        let n = modes[0].n();
        for (k, g) in modes.iter().enumerate() {
            if g.n() != n {
                return Err(GraphError::DimensionMismatch {
                    mode: k,
                    expected: n,
                    got: g.n(),
                });
            }
        }
        for (k, &d) in dwell.iter().enumerate() {
            if !(d > 0.0 && d.is_finite()) {
                return Err(GraphError::BadDwell { mode: k, dwell: d });
            }
        }
        let mut starts = Vec::with_capacity(dwell.len());
        let mut acc = 0.0;
        for &d in &dwell {
            starts.push(acc);
            acc += d;
        }
        Ok(GraphSchedule {
            modes,
            dwell,
            starts,
            period: acc,
        })
    }

    /// Every mode held for the same `dwell`.
    pub fn uniform(modes: Vec<WeightedDigraph>, dwell: f64) -> Result<Self, GraphError> {
        let d = vec![dwell; modes.len()];
        Self::new(modes, d)
    }

    pub fn modes(&self) -> &[WeightedDigraph] {
        &self.modes
    }

    pub fn dwell(&self) -> &[f64] {
        &self.dwell
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn n(&self) -> usize {
        self.modes[0].n()
    }

    /// Index of the active mode at `t >= 0`; switches are right-continuous.
    pub fn mode_index_at(&self, t: f64) -> usize {
        let t = t.max(0.0);
        let snap = BOUNDARY_SNAP * self.period;
        let cycles = ((t + snap) / self.period).floor();
        let mut phase = t - cycles * self.period;
        if phase < 0.0 {
            phase = 0.0;
        }
        let mut idx = 0;
        for (k, &s) in self.starts.iter().enumerate() {
            if phase + snap >= s {
                idx = k;
            } else {
                break;
            }
        }
        idx
    }

    pub fn graph_at(&self, t: f64) -> &WeightedDigraph {
        &self.modes[self.mode_index_at(t)]
    }

    /// Lookup by step index for discrete-time schedules (dwell in steps).
    pub fn graph_at_step(&self, k: u64) -> &WeightedDigraph {
        self.graph_at(k as f64)
    }

    /// Largest in-degree each agent sees over the schedule.
    pub fn max_in_degrees(&self) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| self.modes.iter().map(|g| g.in_degree(i)).fold(0.0, f64::max))
            .collect()
    }

    pub fn check_balanced(&self) -> Result<(), GraphError> {
        for (k, g) in self.modes.iter().enumerate() {
            if let Some((agent, d_in, d_out)) = g.first_imbalance() {
                return Err(GraphError::Unbalanced {
                    mode: k,
                    agent,
                    d_in,
                    d_out,
                });
            }
        }
        Ok(())
    }

    /// Smallest number of consecutive modes whose union is strongly connected
    /// from every phase offset of the period.
    pub fn check_ujsc(&self) -> Result<usize, GraphError> {
        self.check_balanced()?;
        let p = self.modes.len();
        for window in 1..=p {
            let ok = (0..p).all(|offset| {
                let union = WeightedDigraph::union((0..window).map(|k| &self.modes[(offset + k) % p]))
                    .expect("window is non-empty");
                union.is_strongly_connected()
            });
            if ok {
                return Ok(window);
            }
        }
        Err(GraphError::NotJointlyConnected)
    }
}
