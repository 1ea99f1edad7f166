//! Attributed-network representation, text/CSV ingestion, and the symmetric
//! degree-normalized adjacency operator used by every convolution layer.
//!
//! Graphs are undirected, unweighted, and free of self-loops and duplicate
//! edges; normalization adds the self-connection exactly once. Both
//! [`AttributedGraph`] and [`NormalizedAdjacency`] are immutable after
//! construction and safe to share across threads.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor2;
use crate::sparse::CsrMatrix;

/// Undirected attributed network: 0/1 symmetric adjacency plus a dense
/// per-node attribute matrix.
#[derive(Debug, Clone)]
pub struct AttributedGraph {
    adjacency: CsrMatrix,
    attributes: Tensor2,
    node_ids: Option<Vec<String>>,
    edge_count: usize,
}

impl AttributedGraph {
    /// Build from undirected edges and an n x d attribute matrix. Edges are
    /// normalized to (min, max) order and deduplicated; self-loops are
    /// rejected (the normalization step adds the self-connection itself).
    pub fn new(edges: &[(usize, usize)], attributes: Tensor2) -> Result<Self> {
        let n = attributes.rows();
        if n == 0 {
            return Err(Error::InvalidInput("empty node set".into()));
        }
        attributes.ensure_finite("attribute matrix")?;
        let mut set = BTreeSet::new();
        for &(u, v) in edges {
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop at node {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({u}, {v}) references node >= n = {n}"
                )));
            }
            set.insert((u.min(v), u.max(v)));
        }
        let edge_count = set.len();
        let mut triplets = Vec::with_capacity(2 * edge_count);
        for &(u, v) in &set {
            triplets.push((u, v, 1.0));
            triplets.push((v, u, 1.0));
        }
        let adjacency = CsrMatrix::from_triplets(n, n, triplets)?;
        Ok(AttributedGraph {
            adjacency,
            attributes,
            node_ids: None,
            edge_count,
        })
    }

    pub fn with_node_ids(mut self, node_ids: Vec<String>) -> Result<Self> {
        if node_ids.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "node id list".into(),
                expected: self.n(),
                found: node_ids.len(),
            });
        }
        self.node_ids = Some(node_ids);
        Ok(self)
    }

    /// Same topology, different attribute matrix.
    pub fn with_attributes(&self, attributes: Tensor2) -> Result<Self> {
        if attributes.rows() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "attribute rows".into(),
                expected: self.n(),
                found: attributes.rows(),
            });
        }
        attributes.ensure_finite("attribute matrix")?;
        Ok(AttributedGraph {
            adjacency: self.adjacency.clone(),
            attributes,
            node_ids: self.node_ids.clone(),
            edge_count: self.edge_count,
        })
    }

    pub fn n(&self) -> usize {
        self.attributes.rows()
    }

    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.edge_count
    }

    pub fn attr_dim(&self) -> usize {
        self.attributes.cols()
    }

    pub fn attributes(&self) -> &Tensor2 {
        &self.attributes
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn node_ids(&self) -> Option<&[String]> {
        self.node_ids.as_deref()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency.row(i).0.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.row(i).0
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency.get(u, v) != 0.0
    }

    /// Undirected edge set as (u, v) with u < v, ascending.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .filter(|&(i, j, _)| i < j)
            .map(|(i, j, _)| (i, j))
            .collect()
    }
}

/// The operator S = D~^(-1/2) (A + I) D~^(-1/2) with D~ the degree matrix of
/// A + I. Symmetric, entries in [0, 1], sparsity pattern = A plus diagonal.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    matrix: CsrMatrix,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }
}

/// Compute S for a graph. Never fails: the added self-connection keeps every
/// augmented degree at least 1.
pub fn normalize_adjacency(g: &AttributedGraph) -> NormalizedAdjacency {
    let n = g.n();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / ((1 + g.degree(i)) as f64).sqrt()).collect();
    let mut triplets = Vec::with_capacity(g.adjacency().nnz() + n);
    for (i, j, _) in g.adjacency().iter() {
        triplets.push((i, j, inv_sqrt[i] * inv_sqrt[j]));
    }
    for (i, w) in inv_sqrt.iter().enumerate() {
        triplets.push((i, i, w * w));
    }
    let matrix = CsrMatrix::from_triplets(n, n, triplets)
        .expect("normalized adjacency pattern is valid by construction");
    NormalizedAdjacency { matrix }
}

/// Ingestion bookkeeping surfaced to callers (the CLI reports it on stderr).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub self_loops_dropped: usize,
    pub duplicate_edges_dropped: usize,
    pub attribute_header_skipped: bool,
}

/// A graph loaded from disk together with optional ground-truth labels.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub graph: AttributedGraph,
    pub labels: Option<Vec<u8>>,
    pub stats: LoadStats,
}

/// Load an attributed network from an edge list, an attribute CSV, and an
/// optional label CSV.
///
/// Edge lines are whitespace-separated 0-based integer pairs; `#` lines are
/// comments. Input self-loops are dropped (counted in the stats) and
/// duplicate edges deduplicated. The attribute file fixes the node count;
/// when edges are present their maximum index must match it.
pub fn load_graph(
    edge_path: &Path,
    attr_path: &Path,
    label_path: Option<&Path>,
) -> Result<LoadedDataset> {
    let (attributes, header_skipped) = read_attribute_csv(attr_path)?;
    let n = attributes.rows();
    if n == 0 {
        return Err(Error::InvalidInput(format!(
            "empty node set: {} has no attribute rows",
            attr_path.display()
        )));
    }

    let raw_edges = read_edge_list(edge_path)?;
    let mut stats = LoadStats {
        attribute_header_skipped: header_skipped,
        ..LoadStats::default()
    };
    let mut set = BTreeSet::new();
    let mut max_index = None::<usize>;
    for (u, v) in raw_edges {
        max_index = Some(max_index.map_or(u.max(v), |m| m.max(u).max(v)));
        if u == v {
            stats.self_loops_dropped += 1;
            continue;
        }
        if !set.insert((u.min(v), u.max(v))) {
            stats.duplicate_edges_dropped += 1;
        }
    }
    if let Some(max_index) = max_index {
        if max_index + 1 != n {
            return Err(Error::DimensionMismatch {
                what: format!("attribute rows in {}", attr_path.display()),
                expected: max_index + 1,
                found: n,
            });
        }
    }
    let edges: Vec<(usize, usize)> = set.into_iter().collect();
    let graph = AttributedGraph::new(&edges, attributes)?;

    let labels = match label_path {
        Some(path) => Some(read_label_csv(path, n)?),
        None => None,
    };
    Ok(LoadedDataset {
        graph,
        labels,
        stats,
    })
}

/// Write a graph back out in the same formats `load_graph` reads, so that
/// load -> save -> load is the identity.
pub fn save_graph(g: &AttributedGraph, edge_path: &Path, attr_path: &Path) -> Result<()> {
    let mut edge_out = String::new();
    for (u, v) in g.edges() {
        edge_out.push_str(&format!("{u} {v}\n"));
    }
    fs::write(edge_path, edge_out).map_err(|e| Error::io(edge_path, e))?;
    write_attribute_csv(attr_path, g.attributes())
}

fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::Parse {
                path: path.into(),
                line: line_no,
                message: format!("expected two node indices, found {} tokens", tokens.len()),
            });
        }
        let parse = |tok: &str| {
            tok.parse::<usize>().map_err(|_| Error::Parse {
                path: path.into(),
                line: line_no,
                message: format!("invalid node index {tok:?}"),
            })
        };
        edges.push((parse(tokens[0])?, parse(tokens[1])?));
    }
    Ok(edges)
}

fn read_attribute_csv(path: &Path) -> Result<(Tensor2, bool)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header_skipped = false;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.into(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        let line_no = record
            .position()
            .map_or(idx as u64 + 1, |p| p.line()) as usize;
        let mut row = Vec::with_capacity(record.len());
        let mut numeric = true;
        for field in record.iter() {
            match field.parse::<f64>() {
                Ok(v) => row.push(v),
                Err(_) => {
                    numeric = false;
                    break;
                }
            }
        }
        if !numeric {
            // A non-numeric first line is treated as a header.
            if idx == 0 {
                header_skipped = true;
                continue;
            }
            let bad = record
                .iter()
                .find(|f| f.parse::<f64>().is_err())
                .unwrap_or("");
            return Err(Error::Parse {
                path: path.into(),
                line: line_no,
                message: format!("non-numeric attribute cell {bad:?}"),
            });
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::Parse {
                path: path.into(),
                line: line_no,
                message: "non-finite attribute value".into(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "empty node set: {} has no attribute rows",
            path.display()
        )));
    }
    let width = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 1 + usize::from(header_skipped),
                message: format!("expected {} columns, found {}", width, row.len()),
            });
        }
    }
    Ok((Tensor2::from_rows(&rows)?, header_skipped))
}

pub fn write_attribute_csv(path: &Path, attributes: &Tensor2) -> Result<()> {
    let mut out = Vec::new();
    for i in 0..attributes.rows() {
        let mut first = true;
        for v in attributes.row(i) {
            if !first {
                out.push(b',');
            }
            first = false;
            // `{}` prints the shortest digits that round-trip the f64.
            write!(out, "{v}").expect("write to Vec cannot fail");
        }
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a node_id,label CSV into a dense 0/1 vector of length n. Nodes not
/// listed default to 0.
pub fn read_label_csv(path: &Path, n: usize) -> Result<Vec<u8>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut labels = vec![0u8; n];
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.into(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        let line_no = record.position().map_or(idx as u64 + 1, |p| p.line()) as usize;
        if record.len() != 2 {
            return Err(Error::Parse {
                path: path.into(),
                line: line_no,
                message: format!("expected node_id,label, found {} fields", record.len()),
            });
        }
        let node: usize = match record[0].parse() {
            Ok(v) => v,
            // Header row ("node_id,label") is allowed on the first line.
            Err(_) if idx == 0 => continue,
            Err(_) => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: line_no,
                    message: format!("invalid node id {:?}", &record[0]),
                })
            }
        };
        if node >= n {
            return Err(Error::Parse {
                path: path.into(),
                line: line_no,
                message: format!("node id {node} out of range for n = {n}"),
            });
        }
        labels[node] = match &record[1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: line_no,
                    message: format!("label must be 0 or 1, found {other:?}"),
                })
            }
        };
    }
    Ok(labels)
}

pub fn write_label_csv(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = String::from("node_id,label\n");
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn load(edges: &str, attrs: &str) -> Result<LoadedDataset> {
        let e = write_temp(edges);
        let a = write_temp(attrs);
        load_graph(e.path(), a.path(), None)
    }

    /// Dense reference: D~^(-1/2) (A + I) D~^(-1/2) computed with plain loops.
    fn dense_normalized(g: &AttributedGraph) -> Tensor2 {
        let n = g.n();
        let mut a_tilde = g.adjacency().to_dense();
        for i in 0..n {
            a_tilde.set(i, i, 1.0);
        }
        let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a_tilde.at(i, j)).sum()).collect();
        let mut s = Tensor2::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s.set(i, j, a_tilde.at(i, j) / (deg[i] * deg[j]).sqrt());
            }
        }
        s
    }

    #[test]
    fn load_basic_graph() {
        let ds = load("0 1\n1 2\n", "1,2\n3,4\n5,6\n").unwrap();
        assert_eq!(ds.graph.n(), 3);
        assert_eq!(ds.graph.m(), 2);
        assert_eq!(ds.graph.attr_dim(), 2);
        assert_eq!(ds.stats, LoadStats::default());
    }

    #[test]
    fn load_drops_self_loops_with_count() {
        let ds = load("0 0\n0 1\n", "1\n2\n").unwrap();
        assert_eq!(ds.graph.n(), 2);
        assert_eq!(ds.graph.m(), 1);
        assert_eq!(ds.stats.self_loops_dropped, 1);
    }

    #[test]
    fn load_dedups_edges() {
        let ds = load("0 1\n1 0\n0 1\n", "1\n2\n").unwrap();
        assert_eq!(ds.graph.m(), 1);
        assert_eq!(ds.stats.duplicate_edges_dropped, 2);
    }

    #[test]
    fn load_respects_comments_and_header() {
        let ds = load("# comment\n0 1\n", "f0,f1\n1,2\n3,4\n").unwrap();
        assert_eq!(ds.graph.n(), 2);
        assert!(ds.stats.attribute_header_skipped);
    }

    #[test]
    fn load_rejects_attribute_row_mismatch() {
        let err = load("0 1\n1 2\n", "1\n2\n").unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }), "{err}");
    }

    #[test]
    fn load_reports_parse_error_line() {
        let err = load("0 1\n", "1,2\n3,oops\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn load_rejects_empty_node_set() {
        let err = load("", "").unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)), "{err}");
    }

    #[test]
    fn load_rejects_bad_edge_tokens() {
        let err = load("0 x\n", "1\n2\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn normalize_isolated_node() {
        let g = AttributedGraph::new(&[], Tensor2::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        let s = normalize_adjacency(&g);
        assert_eq!(s.matrix().to_dense().data(), &[1.0]);
    }

    #[test]
    fn normalize_two_node_path_matches_dense_oracle() {
        let g = AttributedGraph::new(
            &[(0, 1)],
            Tensor2::from_rows(&[vec![0.0], vec![0.0]]).unwrap(),
        )
        .unwrap();
        let s = normalize_adjacency(&g).matrix().to_dense();
        for &(i, j) in &[(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((s.at(i, j) - 0.5).abs() < 1e-15);
        }
        let oracle = dense_normalized(&g);
        for i in 0..2 {
            for j in 0..2 {
                assert!((s.at(i, j) - oracle.at(i, j)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalize_triangle_is_uniform() {
        let g = AttributedGraph::new(
            &[(0, 1), (1, 2), (0, 2)],
            Tensor2::zeros(3, 1),
        )
        .unwrap();
        let s = normalize_adjacency(&g).matrix().to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert!((s.at(i, j) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalized_rows_sum_to_one_on_regular_graphs() {
        // Cycle C6 (2-regular) and K5 (4-regular): row sums are exactly 1.
        let cycle: Vec<(usize, usize)> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        let mut complete = Vec::new();
        for i in 0..5 {
            for j in (i + 1)..5 {
                complete.push((i, j));
            }
        }
        for (edges, n) in [(cycle, 6), (complete, 5)] {
            let g = AttributedGraph::new(&edges, Tensor2::zeros(n, 1)).unwrap();
            let s = normalize_adjacency(&g).matrix().to_dense();
            for i in 0..n {
                let sum: f64 = (0..n).map(|j| s.at(i, j)).sum();
                assert!((sum - 1.0).abs() < 1e-12, "row {i} sums to {sum}");
            }
        }
    }

    #[test]
    fn save_load_roundtrip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 17;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.2) {
                    edges.push((i, j));
                }
            }
        }
        let attrs = crate::nn::glorot_init(n, 4, &mut rng);
        let g = AttributedGraph::new(&edges, attrs).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let ep = dir.path().join("edges.txt");
        let ap = dir.path().join("attrs.csv");
        save_graph(&g, &ep, &ap).unwrap();
        let ds = load_graph(&ep, &ap, None).unwrap();
        assert_eq!(ds.graph.edges(), g.edges());
        assert_eq!(ds.graph.attributes(), g.attributes());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]

        #[test]
        fn normalization_matches_dense_oracle(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=50usize);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen_bool(0.15) {
                        edges.push((i, j));
                    }
                }
            }
            let g = AttributedGraph::new(&edges, Tensor2::zeros(n, 1)).unwrap();
            let s = normalize_adjacency(&g);
            prop_assert!(s.matrix().is_symmetric());
            let sparse = s.matrix().to_dense();
            let oracle = dense_normalized(&g);
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((sparse.at(i, j) - oracle.at(i, j)).abs() < 1e-12);
                }
            }
            // every stored entry inside [0, 1], diagonal = 1 / (1 + degree)
            for (i, j, v) in s.matrix().iter() {
                prop_assert!((0.0..=1.0).contains(&v));
                if i == j {
                    prop_assert!((v - 1.0 / (1.0 + g.degree(i) as f64)).abs() < 1e-15);
                }
            }
        }
    }
}
