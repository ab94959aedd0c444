//! Undirected attributed graphs: loading, validation, synthetic generation
//! and stochastic augmentation.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::diff::Tensor;
use crate::io;
use crate::rng::{rng_for, Stream};
use crate::{Error, Result};

/// Unweighted adjacency pattern in CSR form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Csr {
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Csr {
    /// Symmetric pattern from undirected edges. Self-loops and duplicates are
    /// ignored here; callers that need counts use [`build_adjacency`].
    pub fn from_undirected(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Ok(build_adjacency(n, edges)?.0)
    }

    pub fn empty(n: usize) -> Self {
        Csr {
            indptr: vec![0; n + 1],
            indices: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.indptr.len() - 1
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Directed entries; twice the undirected edge count.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.nnz() / 2
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.num_nodes()).all(|u| self.neighbors(u).iter().all(|&v| self.has_edge(v, u)))
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        for u in 0..n {
            let row = self.neighbors(u);
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(format!("row {u} is not strictly increasing")));
            }
            if let Some(&v) = row.iter().find(|&&v| v >= n) {
                return Err(Error::Validation(format!("edge ({u}, {v}) out of range")));
            }
            if row.contains(&u) {
                return Err(Error::Validation(format!("self-loop on node {u}")));
            }
        }
        if !self.is_symmetric() {
            return Err(Error::Validation("adjacency is not symmetric".into()));
        }
        Ok(())
    }

    /// Relabel node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let edges: Vec<_> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        build_adjacency(self.num_nodes(), edges)
            .expect("permutation keeps ids in range")
            .0
    }
}

/// Counts of input edges discarded while building an adjacency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub self_loops_dropped: usize,
    pub duplicates_removed: usize,
}

/// Build a symmetric CSR from undirected edges, dropping self-loops and duplicates.
pub fn build_adjacency(
    n: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> Result<(Csr, LoadReport)> {
    let mut report = LoadReport::default();
    let mut set = BTreeSet::new();
    for (u, v) in edges {
        if u >= n || v >= n {
            return Err(Error::Validation(format!(
                "edge ({u}, {v}) references a node outside 0..{n}"
            )));
        }
        if u == v {
            report.self_loops_dropped += 1;
            continue;
        }
        if !set.insert((u.min(v), u.max(v))) {
            report.duplicates_removed += 1;
        }
    }
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in &set {
        rows[u].push(v);
        rows[v].push(u);
    }
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(2 * set.len());
    indptr.push(0);
    for mut row in rows {
        row.sort_unstable();
        indices.extend(row);
        indptr.push(indices.len());
    }
    Ok((Csr { indptr, indices }, report))
}

/// Immutable undirected graph with node features and optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    adjacency: Csr,
    features: Tensor<f32>,
    labels: Option<Vec<usize>>,
    num_classes: Option<usize>,
}

impl GraphDataset {
    pub fn new(adjacency: Csr, features: Tensor<f32>, labels: Option<Vec<usize>>) -> Result<Self> {
        adjacency.validate()?;
        let n = adjacency.num_nodes();
        if features.rows() != n {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows for {n} nodes",
                features.rows()
            )));
        }
        features.ensure_finite("features")?;
        let num_classes = match &labels {
            None => None,
            Some(l) if l.len() != n => {
                return Err(Error::Shape(format!("{} labels for {n} nodes", l.len())))
            }
            Some(l) => Some(l.iter().max().map_or(0, |m| m + 1)),
        };
        Ok(GraphDataset {
            adjacency,
            features,
            labels,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.num_edges()
    }

    pub fn adjacency(&self) -> &Csr {
        &self.adjacency
    }

    pub fn features(&self) -> &Tensor<f32> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    /// Same nodes and features, different edge set.
    pub fn with_adjacency(&self, adjacency: Csr) -> Result<Self> {
        Self::new(adjacency, self.features.clone(), self.labels.clone())
    }

    /// Relabel node `i` as `perm[i]`, moving features and labels along.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Argument("not a permutation of the node ids".into()));
        }
        let labels = self.labels.as_ref().map(|l| {
            let mut out = vec![0; n];
            for (i, &p) in perm.iter().enumerate() {
                out[p] = l[i];
            }
            out
        });
        Self::new(
            self.adjacency.permute(perm),
            self.features.permute_rows(perm),
            labels,
        )
    }

    pub fn average_degree(&self) -> f64 {
        if self.num_nodes() == 0 {
            0.0
        } else {
            self.adjacency.nnz() as f64 / self.num_nodes() as f64
        }
    }
}

/// Per-node neighbor counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeVector(pub Vec<usize>);

impl DegreeVector {
    pub fn of(adj: &Csr) -> Self {
        DegreeVector((0..adj.num_nodes()).map(|i| adj.degree(i)).collect())
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

pub fn degrees(g: &GraphDataset) -> DegreeVector {
    DegreeVector::of(g.adjacency())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::parse(path, 0, format!("cannot read: {e}")))
}

fn parse_usize(path: &Path, line: usize, tok: Option<&str>, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse(path, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::parse(path, line, format!("{what} `{tok}` is not a nonnegative integer")))
}

/// Parse an edge list: one `u<TAB>v` pair per line, `#` comments.
pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let u = parse_usize(path, lineno + 1, toks.next(), "source node")?;
        let v = parse_usize(path, lineno + 1, toks.next(), "target node")?;
        if toks.next().is_some() {
            return Err(Error::parse(path, lineno + 1, "expected exactly two fields"));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Read a feature matrix in either the `NFEAT` text layout or the `HGB1` binary layout.
pub fn read_features(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::parse(path, 0, format!("cannot read: {e}")))?;
    if bytes.starts_with(io::HGB_MAGIC) {
        return io::read_tensor(&mut bytes.as_slice());
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::parse(path, 1, "not UTF-8 text"))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hl, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing NFEAT header"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("NFEAT") {
        return Err(Error::parse(path, hl + 1, "expected `NFEAT N F` header"));
    }
    let n = parse_usize(path, hl + 1, toks.next(), "node count")?;
    let f = parse_usize(path, hl + 1, toks.next(), "feature count")?;
    let mut data = Vec::with_capacity(n * f);
    let mut rows = 0;
    for (lineno, line) in lines {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f32 = tok
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, format!("`{tok}` is not a number")))?;
            data.push(v);
        }
        if data.len() - before != f {
            return Err(Error::Shape(format!(
                "{}:{}: {} values, expected {f}",
                path.display(),
                lineno + 1,
                data.len() - before
            )));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Shape(format!(
            "{}: header declares {n} rows, found {rows}",
            path.display()
        )));
    }
    Tensor::from_vec(n, f, data)
}

/// Parse `node_id<TAB>label` lines; every node must be labelled exactly once.
pub fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut labels: Vec<Option<usize>> = vec![None; n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let node = parse_usize(path, lineno + 1, toks.next(), "node id")?;
        let label = parse_usize(path, lineno + 1, toks.next(), "label")?;
        if node >= n {
            return Err(Error::Validation(format!(
                "{}:{}: node {node} out of range for {n} nodes",
                path.display(),
                lineno + 1
            )));
        }
        if labels[node].replace(label).is_some() {
            return Err(Error::Validation(format!("node {node} labelled twice")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::Validation(format!("node {i} has no label"))))
        .collect()
}

/// Load and validate a graph from edge, feature and optional label files.
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<(GraphDataset, LoadReport)> {
    let features = read_features(feature_path)?;
    let n = features.rows();
    let edges = read_edges(edge_path)?;
    let (adjacency, report) = build_adjacency(n, edges)?;
    if report.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loop(s)",
            edge_path.display(),
            report.self_loops_dropped
        );
    }
    let labels = label_path.map(|p| read_labels(p, n)).transpose()?;
    Ok((GraphDataset::new(adjacency, features, labels)?, report))
}

/// Write a graph in the edge-list / features / labels text formats.
pub fn save_graph(g: &GraphDataset, edge_path: &Path, feature_path: &Path, label_path: Option<&Path>) -> Result<()> {
    use std::fmt::Write as _;
    let mut e = String::new();
    for (u, v) in g.adjacency().edges() {
        writeln!(e, "{u}\t{v}").expect("write to String");
    }
    fs::write(edge_path, e)?;
    let f = g.features();
    let mut s = format!("NFEAT {} {}\n", f.rows(), f.cols());
    for i in 0..f.rows() {
        let row: Vec<String> = f.row(i).iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    fs::write(feature_path, s)?;
    if let (Some(p), Some(labels)) = (label_path, g.labels()) {
        let mut l = String::new();
        for (i, y) in labels.iter().enumerate() {
            writeln!(l, "{i}\t{y}").expect("write to String");
        }
        fs::write(p, l)?;
    }
    Ok(())
}

/// Stochastic block model parameters.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    #[serde(default)]
    pub feature_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Sample an SBM graph. Features are the one-hot block indicator plus
/// Gaussian noise of standard deviation `feature_noise`; labels are block ids.
pub fn generate_sbm(spec: &SbmSpec) -> Result<GraphDataset> {
    if spec.block_sizes.len() < 2 {
        return Err(Error::Argument("an SBM needs at least two blocks".into()));
    }
    if spec.block_sizes.contains(&0) {
        return Err(Error::Argument("SBM block sizes must be positive".into()));
    }
    for (name, p) in [("p_in", spec.p_in), ("p_out", spec.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Argument(format!("{name} = {p} is not a probability")));
        }
    }
    if !(spec.feature_noise >= 0.0) || !spec.feature_noise.is_finite() {
        return Err(Error::Argument("feature_noise must be a nonnegative number".into()));
    }
    let labels: Vec<usize> = spec
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let n = labels.len();
    let k = spec.block_sizes.len();
    let mut rng = rng_for(spec.seed, Stream::Sbm, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { spec.p_in } else { spec.p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let noise = Normal::new(0.0, spec.feature_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Argument(e.to_string()))?;
    let mut features = Tensor::zeros(n, k);
    for (i, &b) in labels.iter().enumerate() {
        for j in 0..k {
            let base = if j == b { 1.0 } else { 0.0 };
            let eps = if spec.feature_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            features.set(i, j, (base + eps) as f32);
        }
    }
    let (adjacency, _) = build_adjacency(n, edges)?;
    GraphDataset::new(adjacency, features, Some(labels))
}

/// One stochastic view of a graph: a subset of its edges and a copy of its
/// features with whole columns zeroed.
#[derive(Clone, Debug)]
pub struct GraphView<'a> {
    pub base: &'a GraphDataset,
    pub kept_edges: Csr,
    pub masked_features: Tensor<f32>,
    pub masked_columns: Vec<bool>,
    pub drop_seed: u64,
    pub p_e: f64,
    pub p_x: f64,
}

impl<'a> GraphView<'a> {
    /// The unaugmented view.
    pub fn identity(base: &'a GraphDataset) -> Self {
        GraphView {
            base,
            kept_edges: base.adjacency().clone(),
            masked_features: base.features().clone(),
            masked_columns: vec![false; base.num_features()],
            drop_seed: 0,
            p_e: 0.0,
            p_x: 0.0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.base.num_nodes()
    }
}

/// Drop each undirected edge with probability `p_e` (one coin per edge) and
/// zero each feature column with probability `p_x`.
pub fn augment(g: &GraphDataset, p_e: f64, p_x: f64, seed: u64) -> Result<GraphView<'_>> {
    for (name, p) in [("p_e", p_e), ("p_x", p_x)] {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Argument(format!("{name} = {p} must lie in [0, 1)")));
        }
    }
    let mut rng = rng_for(seed, Stream::Augment, 0);
    let masked_columns: Vec<bool> = (0..g.num_features()).map(|_| rng.gen::<f64>() < p_x).collect();
    let kept: Vec<(usize, usize)> = g
        .adjacency()
        .edges()
        .filter(|_| rng.gen::<f64>() >= p_e)
        .collect();
    let (kept_edges, _) = build_adjacency(g.num_nodes(), kept)?;
    let mut masked_features = g.features().clone();
    if masked_columns.iter().any(|&m| m) {
        for i in 0..masked_features.rows() {
            for (v, &m) in masked_features.row_mut(i).iter_mut().zip(&masked_columns) {
                if m {
                    *v = 0.0;
                }
            }
        }
    }
    Ok(GraphView {
        base: g,
        kept_edges,
        masked_features,
        masked_columns,
        drop_seed: seed,
        p_e,
        p_x,
    })
}
