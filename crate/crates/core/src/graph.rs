//! Item co-occurrence graph, top-K sparsification, symmetric normalized
//! Laplacian and graph total variation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ingest::InteractionLog;
use crate::matrix::EmbeddingMatrix;

/// Undirected weighted graph without self-loops. Edges are keyed `(i, j)` with `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct CooccurrenceGraph {
    num_nodes: usize,
    edges: BTreeMap<(usize, usize), f64>,
    degrees: Vec<f64>,
}

fn key(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl CooccurrenceGraph {
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            edges: BTreeMap::new(),
            degrees: vec![0.0; num_nodes],
        }
    }

    /// Build from `(i, j, weight)` triples; duplicate pairs are summed.
    pub fn from_edges(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, j, w) in edges {
            if i >= num_nodes || j >= num_nodes {
                return Err(Error::Validation(format!(
                    "edge ({i}, {j}) out of range for {num_nodes} nodes"
                )));
            }
            if i == j {
                return Err(Error::Validation(format!("self-loop on node {i}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Validation(format!("edge ({i}, {j}) has weight {w}")));
            }
            *map.entry(key(i, j)).or_insert(0.0) += w;
        }
        Ok(Self::from_map(num_nodes, map))
    }

    fn from_map(num_nodes: usize, edges: BTreeMap<(usize, usize), f64>) -> Self {
        let mut degrees = vec![0.0; num_nodes];
        for (&(i, j), &w) in &edges {
            degrees[i] += w;
            degrees[j] += w;
        }
        Self {
            num_nodes,
            edges,
            degrees,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.edges.get(&key(i, j)).copied().unwrap_or(0.0)
    }

    /// Edges as `(i, j, weight)` with `i < j`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    /// Neighbor lists `(neighbor, weight)` sorted by neighbor id.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for (i, j, w) in self.edges() {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for list in &mut adj {
            list.sort_by_key(|&(n, _)| n);
        }
        adj
    }

    pub fn to_dense_adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.num_nodes, self.num_nodes);
        for (i, j, w) in self.edges() {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        a
    }

    /// Edge-list TSV: a `#nodes=N` header then `i<TAB>j<TAB>weight` with `i < j`.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#nodes={}\n", self.num_nodes);
        for (i, j, w) in self.edges() {
            let _ = writeln!(out, "{i}\t{j}\t{w}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let num_nodes = match lines.next() {
            Some((_, header)) => header
                .trim()
                .strip_prefix("#nodes=")
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    msg: format!("expected `#nodes=N` header, found {header:?}"),
                })?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "missing `#nodes=N` header".into(),
                })
            }
        };
        let mut triples = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |msg: &str| Error::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            if f.len() != 3 {
                return Err(bad("expected i<TAB>j<TAB>weight"));
            }
            let i: usize = f[0].trim().parse().map_err(|_| bad("bad node id"))?;
            let j: usize = f[1].trim().parse().map_err(|_| bad("bad node id"))?;
            let w: f64 = f[2].trim().parse().map_err(|_| bad("bad weight"))?;
            if i >= j {
                return Err(bad("edge rows must have i < j"));
            }
            triples.push((i, j, w));
        }
        Self::from_edges(num_nodes, triples)
    }
}

/// Link every pair of adjacent distinct items in every sequence; the weight
/// of an edge is the number of times the pair occurs adjacently.
pub fn build_cooccurrence(log: &InteractionLog) -> CooccurrenceGraph {
    let mut edges = BTreeMap::new();
    for seq in log.sequences() {
        for pair in seq.items.windows(2) {
            if pair[0] != pair[1] {
                *edges.entry(key(pair[0], pair[1])).or_insert(0.0) += 1.0;
            }
        }
    }
    CooccurrenceGraph::from_map(log.num_items(), edges)
}

/// Keep an edge iff it is among the `k` heaviest incident edges of at least
/// one endpoint. Weight ties go to the smaller neighbor id.
pub fn sparsify_topk(g: &CooccurrenceGraph, k: usize) -> Result<CooccurrenceGraph> {
    if k == 0 {
        return Err(Error::Validation("K must be at least 1".into()));
    }
    let mut kept = BTreeMap::new();
    for (node, mut nbrs) in g.adjacency().into_iter().enumerate() {
        nbrs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(n, w) in nbrs.iter().take(k) {
            kept.insert(key(node, n), w);
        }
    }
    Ok(CooccurrenceGraph::from_map(g.num_nodes, kept))
}

/// Sparse symmetric normalized Laplacian `I - D^{-1/2} A D^{-1/2}` in CSR form.
///
/// Rows and columns of degree-zero nodes are identically zero, so
/// `I - alpha * L` leaves those nodes untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    isolated: Vec<bool>,
}

pub fn normalized_laplacian(g: &CooccurrenceGraph) -> Laplacian {
    let n = g.num_nodes;
    let inv_sqrt: Vec<f64> = g
        .degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let isolated: Vec<bool> = g.degrees.iter().map(|&d| d <= 0.0).collect();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for (i, nbrs) in g.adjacency().into_iter().enumerate() {
        if !isolated[i] {
            // neighbors are sorted; splice the diagonal in order
            let mut diag_done = false;
            for (j, w) in nbrs {
                if !diag_done && j > i {
                    col_idx.push(i);
                    values.push(1.0);
                    diag_done = true;
                }
                if w != 0.0 {
                    col_idx.push(j);
                    values.push(-w * inv_sqrt[i] * inv_sqrt[j]);
                }
            }
            if !diag_done {
                col_idx.push(i);
                values.push(1.0);
            }
        }
        row_ptr.push(col_idx.len());
    }
    Laplacian {
        num_nodes: n,
        row_ptr,
        col_idx,
        values,
        isolated,
    }
}

impl Laplacian {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn isolated_mask(&self) -> &[bool] {
        &self.isolated
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// `L x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.num_nodes);
        (0..self.num_nodes)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `L X` for a row-per-node matrix.
    pub fn apply_rows(&self, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.check_rows(x)?;
        let mut out = EmbeddingMatrix::zeros(x.rows(), x.cols());
        for i in 0..self.num_nodes {
            let dst = out.row_mut(i);
            for (j, v) in self.row(i) {
                for (d, s) in dst.iter_mut().zip(x.row(j)) {
                    *d += v * s;
                }
            }
        }
        Ok(out)
    }

    /// `(I - L) X`, the normalized adjacency applied to a row-per-node matrix.
    pub fn apply_normalized_adjacency(&self, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        let lx = self.apply_rows(x)?;
        let mut out = x.clone();
        for (o, l) in out.as_mut_slice().iter_mut().zip(lx.as_slice()) {
            *o -= l;
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.num_nodes, self.num_nodes);
        for i in 0..self.num_nodes {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub(crate) fn check_rows(&self, x: &EmbeddingMatrix) -> Result<()> {
        if x.rows() != self.num_nodes {
            return Err(Error::Dimension(format!(
                "matrix has {} rows but the graph has {} nodes",
                x.rows(),
                self.num_nodes
            )));
        }
        Ok(())
    }
}

/// `tr(Sᵀ L S)`, accumulated column by column.
pub fn total_variation(signals: &EmbeddingMatrix, lap: &Laplacian) -> Result<f64> {
    lap.check_rows(signals)?;
    let mut total = 0.0;
    for c in 0..signals.cols() {
        let col: Vec<f64> = (0..signals.rows()).map(|i| signals.get(i, c)).collect();
        let lc = lap.apply(&col);
        total += col.iter().zip(&lc).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_interactions;

    fn log(seqs: &[&[usize]]) -> InteractionLog {
        let mut text = String::new();
        for (u, s) in seqs.iter().enumerate() {
            for (t, i) in s.iter().enumerate() {
                text.push_str(&format!("{u}\t{i}\t{t}\n"));
            }
        }
        parse_interactions(&text).unwrap()
    }

    #[test]
    fn chain_gives_two_edges() {
        let g = build_cooccurrence(&log(&[&[0, 1, 2]]));
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1, 1.0), (1, 2, 1.0)]);
        assert_eq!(g.degrees(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn back_and_forth_accumulates() {
        let g = build_cooccurrence(&log(&[&[0, 1, 0, 1]]));
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1, 3.0)]);
    }

    #[test]
    fn repeats_contribute_nothing() {
        let g = build_cooccurrence(&log(&[&[0, 0]]));
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.num_nodes(), 1);
    }

    #[test]
    fn topk_keeps_heaviest_nominations() {
        // hub 0 with spokes weighted 5, 3, 1; every leaf has two heavier
        // private edges so it never nominates its spoke at K <= 2
        let g = CooccurrenceGraph::from_edges(
            10,
            [
                (0, 1, 5.0),
                (0, 2, 3.0),
                (0, 3, 1.0),
                (1, 4, 9.0),
                (1, 5, 8.0),
                (2, 6, 9.0),
                (2, 7, 8.0),
                (3, 8, 9.0),
                (3, 9, 8.0),
            ],
        )
        .unwrap();
        let s1 = sparsify_topk(&g, 1).unwrap();
        assert_eq!(s1.weight(0, 1), 5.0);
        assert_eq!(s1.weight(0, 2), 0.0);
        let s2 = sparsify_topk(&g, 2).unwrap();
        assert_eq!(s2.weight(0, 1), 5.0);
        assert_eq!(s2.weight(0, 2), 3.0);
        assert_eq!(s2.weight(0, 3), 0.0);
        assert_eq!(sparsify_topk(&g, 3).unwrap(), g);
    }

    #[test]
    fn topk_ties_prefer_smaller_neighbor() {
        let g = CooccurrenceGraph::from_edges(4, [(0, 3, 2.0), (0, 2, 2.0), (2, 3, 5.0), (1, 2, 1.0), (1, 3, 1.0)])
            .unwrap();
        let s = sparsify_topk(&g, 1).unwrap();
        // 0 nominates 2 (tie, smaller id); 1 nominates 2; 2 and 3 nominate each other
        let kept: Vec<_> = s.edges().map(|(i, j, _)| (i, j)).collect();
        assert_eq!(kept, vec![(0, 2), (1, 2), (2, 3)]);
    }

    #[test]
    fn topk_zero_rejected() {
        assert!(sparsify_topk(&CooccurrenceGraph::empty(2), 0).is_err());
    }

    #[test]
    fn laplacian_of_single_edge() {
        let g = CooccurrenceGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let l = normalized_laplacian(&g).to_dense();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn edgeless_laplacian_is_zero() {
        let l = normalized_laplacian(&CooccurrenceGraph::empty(3));
        assert_eq!(l.nnz(), 0);
        assert_eq!(l.to_dense(), DMatrix::zeros(3, 3));
        assert!(l.isolated_mask().iter().all(|&b| b));
    }

    #[test]
    fn isolated_node_has_zero_row() {
        let g = CooccurrenceGraph::from_edges(3, [(0, 2, 2.0)]).unwrap();
        let l = normalized_laplacian(&g);
        assert_eq!(l.isolated_mask(), &[false, true, false]);
        let d = l.to_dense();
        assert!(d.row(1).iter().all(|&v| v == 0.0));
        assert!(d.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tv_of_alternating_signal() {
        let g = CooccurrenceGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let l = normalized_laplacian(&g);
        let s = EmbeddingMatrix::new(2, 1, vec![1.0, -1.0]).unwrap();
        assert!((total_variation(&s, &l).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn tv_dimension_mismatch() {
        let l = normalized_laplacian(&CooccurrenceGraph::empty(3));
        assert!(matches!(
            total_variation(&EmbeddingMatrix::zeros(2, 1), &l),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn tsv_round_trip_and_errors() {
        let g = CooccurrenceGraph::from_edges(4, [(0, 1, 3.0), (2, 3, 0.5)]).unwrap();
        let text = g.to_tsv();
        assert_eq!(text, "#nodes=4\n0\t1\t3\n2\t3\t0.5\n");
        assert_eq!(CooccurrenceGraph::from_tsv(&text).unwrap(), g);
        assert!(CooccurrenceGraph::from_tsv("0\t1\t1\n").is_err());
        assert!(CooccurrenceGraph::from_tsv("#nodes=2\n1\t0\t1\n").is_err());
        assert!(CooccurrenceGraph::from_tsv("#nodes=2\n0\t5\t1\n").is_err());
    }
}
