//! Undirected graphs in CSR form, the symmetric normalized Laplacian, the
//! sparse-times-dense kernel, and synthetic generators.
//!
//! Graphs are unweighted with implicit unit weights; [`SparseSymMatrix`] adds
//! explicit values so one multiply kernel serves both. Everything is immutable
//! after construction.

use crate::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge ({u}, {v}) references a node outside 0..{num_nodes}")]
    EdgeOutOfRange { u: usize, v: usize, num_nodes: usize },
    #[error("grid dimensions must be positive, got {rows}x{cols}")]
    EmptyGrid { rows: usize, cols: usize },
    #[error("matrix has {matrix_nodes} nodes but signal has {signal_rows} rows")]
    DimensionMismatch {
        matrix_nodes: usize,
        signal_rows: usize,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
}

/// Undirected, unweighted graph stored as CSR adjacency.
///
/// Each undirected edge (u, v) is stored twice, once per direction, with
/// column indices sorted within every row. No self-loops, no duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
}

impl Graph {
    /// Builds a graph from an edge list: symmetrizes, deduplicates, and drops
    /// self-loops. Fails if any endpoint is out of range.
    pub fn from_edges(edges: &[(usize, usize)], num_nodes: usize) -> Result<Self, GraphError> {
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(GraphError::EdgeOutOfRange { u, v, num_nodes });
            }
            if u == v {
                continue;
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for neighbors in &mut adjacency {
            neighbors.sort_unstable();
            neighbors.dedup();
            col_indices.extend_from_slice(neighbors);
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            num_nodes,
            row_offsets,
            col_indices,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored directed edges (twice the undirected edge count).
    pub fn num_stored_edges(&self) -> usize {
        self.col_indices.len()
    }

    pub fn degree(&self, u: usize) -> usize {
        self.row_offsets[u + 1] - self.row_offsets[u]
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[u]..self.row_offsets[u + 1]]
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// All stored directed edges in CSR order.
    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| self.neighbors(u).iter().map(move |&v| (u, v)))
    }
}

/// Sparse symmetric matrix with the same CSR layout as [`Graph`] plus values.
/// Carries the normalized Laplacian and its shifted variant.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    pub fn new(
        num_nodes: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(row_offsets.len(), num_nodes + 1);
        assert_eq!(col_indices.len(), values.len());
        assert_eq!(*row_offsets.last().unwrap_or(&0), col_indices.len());
        Self {
            num_nodes,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Identity-valued diagonal matrix.
    pub fn identity(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            row_offsets: (0..=num_nodes).collect(),
            col_indices: (0..num_nodes).collect(),
            values: vec![1.0; num_nodes],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries of one row as (column, value) pairs, ascending column.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_offsets[r];
        let hi = self.row_offsets[r + 1];
        self.col_indices[lo..hi]
            .iter()
            .zip(&self.values[lo..hi])
            .map(|(&c, &v)| (c, v))
    }

    /// Stored value at (r, c), or 0 if the entry is structurally absent.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let lo = self.row_offsets[r];
        let hi = self.row_offsets[r + 1];
        match self.col_indices[lo..hi].binary_search(&c) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => 0.0,
        }
    }

    /// Largest |m[r][c] - m[c][r]| over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.num_nodes {
            for (c, v) in self.row_entries(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Sparse-matrix times dense-matrix product.
    ///
    /// Per-row accumulation runs in ascending column order, so results are
    /// bit-identical however rows are partitioned.
    pub fn spmm(&self, x: &Matrix) -> Result<Matrix, GraphError> {
        if x.rows() != self.num_nodes {
            return Err(GraphError::DimensionMismatch {
                matrix_nodes: self.num_nodes,
                signal_rows: x.rows(),
            });
        }
        let cols = x.cols();
        let mut out = Matrix::zeros(self.num_nodes, cols);
        for r in 0..self.num_nodes {
            let lo = self.row_offsets[r];
            let hi = self.row_offsets[r + 1];
            let orow = out.row_mut(r);
            for idx in lo..hi {
                let c = self.col_indices[idx];
                let v = self.values[idx];
                let xrow = &x.data()[c * cols..(c + 1) * cols];
                for j in 0..cols {
                    orow[j] += v * xrow[j];
                }
            }
        }
        Ok(out)
    }

    /// Dense copy, for the desk-scale oracle paths only.
    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.num_nodes, self.num_nodes);
        for r in 0..self.num_nodes {
            for (c, v) in self.row_entries(r) {
                out[(r, c)] = v;
            }
        }
        out
    }

    /// Sparsifies a square dense matrix, keeping exact nonzero entries.
    pub fn from_dense(m: &Matrix) -> Self {
        assert_eq!(m.rows(), m.cols(), "matrix must be square");
        let n = m.rows();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for r in 0..n {
            for c in 0..n {
                let v = m[(r, c)];
                if v != 0.0 {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self::new(n, row_offsets, col_indices, values)
    }
}

/// Symmetric normalized Laplacian `I - D^{-1/2} A D^{-1/2}`.
///
/// Isolated nodes get a zero row and column (their `D^{-1/2}` entry is taken
/// as 0), which keeps the spectrum inside [0, 2].
pub fn normalized_laplacian(g: &Graph) -> SparseSymMatrix {
    let n = g.num_nodes();
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|u| {
            let d = g.degree(u);
            if d == 0 {
                0.0
            } else {
                1.0 / (d as f64).sqrt()
            }
        })
        .collect();

    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for u in 0..n {
        if g.degree(u) > 0 {
            let mut diagonal_written = false;
            for &v in g.neighbors(u) {
                if !diagonal_written && v > u {
                    col_indices.push(u);
                    values.push(1.0);
                    diagonal_written = true;
                }
                col_indices.push(v);
                values.push(-inv_sqrt_deg[u] * inv_sqrt_deg[v]);
            }
            if !diagonal_written {
                col_indices.push(u);
                values.push(1.0);
            }
        }
        row_offsets.push(col_indices.len());
    }
    SparseSymMatrix::new(n, row_offsets, col_indices, values)
}

/// 4-neighbor lattice with `rows * cols` nodes; node id is `r * cols + c`.
pub fn grid_graph(rows: usize, cols: usize) -> Result<Graph, GraphError> {
    if rows == 0 || cols == 0 {
        return Err(GraphError::EmptyGrid { rows, cols });
    }
    let mut edges = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let u = r * cols + c;
            if c + 1 < cols {
                edges.push((u, u + 1));
            }
            if r + 1 < rows {
                edges.push((u, u + cols));
            }
        }
    }
    Graph::from_edges(&edges, rows * cols)
}

/// Stochastic block model, deterministic given the seed.
///
/// Returns the graph and the planted block label of every node. Probabilities
/// must lie in [0, 1]; the degenerate values 0 and 1 are exact.
pub fn sbm_graph(
    block_sizes: &[usize],
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> (Graph, Vec<usize>) {
    assert!((0.0..=1.0).contains(&p_in), "p_in outside [0, 1]");
    assert!((0.0..=1.0).contains(&p_out), "p_out outside [0, 1]");
    let mut labels = Vec::new();
    for (block, &size) in block_sizes.iter().enumerate() {
        labels.extend(std::iter::repeat(block).take(size));
    }
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = Graph::from_edges(&edges, n).expect("generated edges are in range");
    (graph, labels)
}

/// Erdős–Rényi G(n, p) graph, deterministic given the seed.
pub fn erdos_renyi_graph(n: usize, p: f64, seed: u64) -> Graph {
    let (graph, _) = sbm_graph(&[n], p, 0.0, seed);
    graph
}

/// Parses the edge-list text format: one `u v` pair per line, 0-based decimal
/// indices, whitespace-separated; `#`-prefixed comment lines and blank lines
/// are ignored. Node count is `num_nodes` if given, else max index + 1.
pub fn parse_edge_list(
    text: &str,
    num_nodes: Option<usize>,
    file: &str,
) -> Result<(Vec<(usize, usize)>, usize), GraphError> {
    let mut edges = Vec::new();
    let mut max_index = None::<usize>;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let parse = |field: Option<&str>, lineno: usize| -> Result<usize, GraphError> {
            let token = field.ok_or_else(|| GraphError::Parse {
                file: file.to_string(),
                line: lineno + 1,
                message: "expected two node indices".to_string(),
            })?;
            token.parse::<usize>().map_err(|_| GraphError::Parse {
                file: file.to_string(),
                line: lineno + 1,
                message: format!("invalid node index `{token}`"),
            })
        };
        let u = parse(fields.next(), lineno)?;
        let v = parse(fields.next(), lineno)?;
        if fields.next().is_some() {
            return Err(GraphError::Parse {
                file: file.to_string(),
                line: lineno + 1,
                message: "expected exactly two node indices".to_string(),
            });
        }
        max_index = Some(max_index.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let inferred = max_index.map_or(0, |m| m + 1);
    let n = num_nodes.unwrap_or(inferred);
    Ok((edges, n))
}
