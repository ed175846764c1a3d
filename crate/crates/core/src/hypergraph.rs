//! Labeled `s`-uniform multi-hypergraphs over dictionary vertices.
//!
//! One hyperedge per pin, in pin order; repeated supports are kept as repeated
//! entries. The expanded multi-hypergraph replaces each hyperedge by `d - s`
//! copies so that rigidity becomes a `(d-1, 0)` count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HypergraphError {
    #[error("invalid dimensions d={d}, s={s}: need d >= 3 and 2 <= s <= d-1")]
    InvalidDims { d: usize, s: usize },
    #[error("edge {edge} has {found} distinct vertices, expected {expected}")]
    EdgeSizeMismatch {
        edge: usize,
        expected: usize,
        found: usize,
    },
    #[error("edge {edge} references vertex {vertex}, but n = {n}")]
    VertexOutOfRange {
        edge: usize,
        vertex: usize,
        n: usize,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

/// Ambient dimension `d` and subspace sparsity `s`.
///
/// Points live in the affine chart of projective `(d-1)`-space, so every
/// point has `d - 1` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDims")]
pub struct Dims {
    d: usize,
    s: usize,
}

#[derive(Deserialize)]
struct RawDims {
    d: usize,
    s: usize,
}

impl TryFrom<RawDims> for Dims {
    type Error = HypergraphError;
    fn try_from(raw: RawDims) -> Result<Self, Self::Error> {
        Dims::new(raw.d, raw.s)
    }
}

impl Dims {
    pub fn new(d: usize, s: usize) -> Result<Self, HypergraphError> {
        if d < 3 || s < 2 || s > d - 1 {
            return Err(HypergraphError::InvalidDims { d, s });
        }
        Ok(Self { d, s })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn s(&self) -> usize {
        self.s
    }

    /// Coordinates per point in the affine chart, `d - 1`.
    pub fn coords(&self) -> usize {
        self.d - 1
    }

    /// Copies of each hyperedge in the expansion, `d - s`; also the number of
    /// independent incidence equations contributed by one pin.
    pub fn copies(&self) -> usize {
        self.d - self.s
    }

    /// Number of `s x s` minors of an `s x (d-1)` incidence matrix.
    pub fn minors_per_pin(&self) -> usize {
        binomial(self.d - 1, self.s)
    }
}

/// `C(n, k)`, saturating on overflow.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] != i + n - k) else {
            break;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    dims: Dims,
    n_vertices: usize,
    edges: Vec<Vec<usize>>,
}

impl Hypergraph {
    /// Validate and canonicalize: each edge is sorted, list order is kept.
    pub fn new(
        n_vertices: usize,
        dims: Dims,
        edges: Vec<Vec<usize>>,
    ) -> Result<Self, HypergraphError> {
        let s = dims.s();
        let mut canon = Vec::with_capacity(edges.len());
        for (i, mut e) in edges.into_iter().enumerate() {
            if let Some(&v) = e.iter().find(|&&v| v >= n_vertices) {
                return Err(HypergraphError::VertexOutOfRange {
                    edge: i,
                    vertex: v,
                    n: n_vertices,
                });
            }
            e.sort_unstable();
            e.dedup();
            if e.len() != s {
                return Err(HypergraphError::EdgeSizeMismatch {
                    edge: i,
                    expected: s,
                    found: e.len(),
                });
            }
            canon.push(e);
        }
        Ok(Self {
            dims,
            n_vertices,
            edges: canon,
        })
    }

    /// Every `s`-subset of `n` vertices, once.
    pub fn complete(n: usize, dims: Dims) -> Self {
        Self {
            dims,
            n_vertices: n,
            edges: subsets(n, dims.s()),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &[usize] {
        &self.edges[id]
    }

    /// Append an edge, validating it like [`Hypergraph::new`].
    pub fn push_edge(&mut self, edge: Vec<usize>) -> Result<(), HypergraphError> {
        let checked =
            Hypergraph::new(self.n_vertices, self.dims, vec![edge]).map_err(|e| match e {
                HypergraphError::EdgeSizeMismatch {
                    expected, found, ..
                } => HypergraphError::EdgeSizeMismatch {
                    edge: self.edges.len(),
                    expected,
                    found,
                },
                HypergraphError::VertexOutOfRange { vertex, n, .. } => {
                    HypergraphError::VertexOutOfRange {
                        edge: self.edges.len(),
                        vertex,
                        n,
                    }
                }
                other => other,
            })?;
        self.edges.extend(checked.edges);
        Ok(())
    }

    /// Grow the vertex set; existing ids are unchanged.
    pub fn add_vertices(&mut self, count: usize) -> std::ops::Range<usize> {
        let start = self.n_vertices;
        self.n_vertices += count;
        start..self.n_vertices
    }

    /// Edge ids sharing a support with an earlier edge.
    pub fn repeated_supports(&self) -> Vec<usize> {
        let mut seen = std::collections::HashSet::new();
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| !seen.insert(e.as_slice()))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_repeated_supports(&self) -> bool {
        !self.repeated_supports().is_empty()
    }

    /// Ids of edges whose vertices all lie in `vertices`.
    pub fn induced_edge_ids(&self, vertices: &[usize]) -> Vec<usize> {
        let mut member = vec![false; self.n_vertices];
        for &v in vertices {
            member[v] = true;
        }
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.iter().all(|&v| member[v]))
            .map(|(i, _)| i)
            .collect()
    }

    /// Induced sub-hypergraph, relabeled to `0..vertices.len()` in the given order.
    pub fn induced(&self, vertices: &[usize]) -> Hypergraph {
        let mut relabel = vec![usize::MAX; self.n_vertices];
        for (i, &v) in vertices.iter().enumerate() {
            relabel[v] = i;
        }
        let edges = self
            .induced_edge_ids(vertices)
            .into_iter()
            .map(|id| {
                let mut e: Vec<usize> = self.edges[id].iter().map(|&v| relabel[v]).collect();
                e.sort_unstable();
                e
            })
            .collect();
        Hypergraph {
            dims: self.dims,
            n_vertices: vertices.len(),
            edges,
        }
    }

    /// Vertex-disjoint union; `other`'s vertices are shifted past ours.
    pub fn disjoint_union(&self, other: &Hypergraph) -> Hypergraph {
        assert_eq!(self.dims, other.dims, "dims must agree");
        let shift = self.n_vertices;
        let mut edges = self.edges.clone();
        edges.extend(
            other
                .edges
                .iter()
                .map(|e| e.iter().map(|&v| v + shift).collect()),
        );
        Hypergraph {
            dims: self.dims,
            n_vertices: self.n_vertices + other.n_vertices,
            edges,
        }
    }

    pub fn expand(&self) -> ExpandedMultiHypergraph {
        ExpandedMultiHypergraph {
            base: self.clone(),
            copies: self.dims.copies(),
        }
    }

    pub fn tightness_counts(&self) -> TightnessCounts {
        TightnessCounts {
            lhs: self.dims.copies() * self.edges.len(),
            rhs: self.dims.coords() * self.n_vertices,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&HypergraphFile::from(self)).expect("hypergraph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HypergraphError> {
        let file: HypergraphFile =
            serde_json::from_str(text).map_err(|e| HypergraphError::Parse(e.to_string()))?;
        file.try_into()
            .map_err(|e: HypergraphError| HypergraphError::Parse(e.to_string()))
    }
}

/// `((d-s)|E|, (d-1)|V|)`; tightness asks for `lhs == rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TightnessCounts {
    pub lhs: usize,
    pub rhs: usize,
}

impl TightnessCounts {
    pub fn balanced(&self) -> bool {
        self.lhs == self.rhs
    }
}

impl std::ops::Add for TightnessCounts {
    type Output = TightnessCounts;
    fn add(self, o: Self) -> Self {
        TightnessCounts {
            lhs: self.lhs + o.lhs,
            rhs: self.rhs + o.rhs,
        }
    }
}

/// Each base hyperedge repeated `d - s` times.
///
/// Expanded id of copy `c` of base edge `e` is `e * copies + c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedMultiHypergraph {
    base: Hypergraph,
    copies: usize,
}

impl ExpandedMultiHypergraph {
    pub fn base(&self) -> &Hypergraph {
        &self.base
    }

    pub fn dims(&self) -> Dims {
        self.base.dims
    }

    pub fn copies_per_edge(&self) -> usize {
        self.copies
    }

    pub fn n_vertices(&self) -> usize {
        self.base.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.copies * self.base.edges.len()
    }

    pub fn expanded_id(&self, base_edge: usize, copy: usize) -> usize {
        debug_assert!(copy < self.copies);
        base_edge * self.copies + copy
    }

    /// Inverse of [`Self::expanded_id`].
    pub fn base_of(&self, expanded: usize) -> (usize, usize) {
        (expanded / self.copies, expanded % self.copies)
    }

    pub fn edge(&self, expanded: usize) -> &[usize] {
        &self.base.edges[expanded / self.copies]
    }

    /// Base edge of every expanded edge, in expanded-id order.
    pub fn project(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::with_capacity(self.base.edges.len());
        for id in 0..self.n_edges() {
            let (b, c) = self.base_of(id);
            if c == 0 {
                out.push(self.base.edges[b].clone());
            }
        }
        out
    }
}

/// On-disk form: `{"d": int, "s": int, "n": int, "edges": [[int,...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypergraphFile {
    pub d: usize,
    pub s: usize,
    pub n: usize,
    pub edges: Vec<Vec<usize>>,
}

impl From<&Hypergraph> for HypergraphFile {
    fn from(h: &Hypergraph) -> Self {
        Self {
            d: h.dims.d(),
            s: h.dims.s(),
            n: h.n_vertices,
            edges: h.edges.clone(),
        }
    }
}

impl TryFrom<HypergraphFile> for Hypergraph {
    type Error = HypergraphError;
    fn try_from(f: HypergraphFile) -> Result<Self, Self::Error> {
        let dims = Dims::new(f.d, f.s)?;
        if let Some((i, e)) = f.edges.iter().enumerate().find(|(_, e)| e.len() != f.s) {
            return Err(HypergraphError::EdgeSizeMismatch {
                edge: i,
                expected: f.s,
                found: e.len(),
            });
        }
        Hypergraph::new(f.n, dims, f.edges)
    }
}
