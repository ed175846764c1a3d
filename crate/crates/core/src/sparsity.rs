//! `(k, 0)`-pebble games on expanded multi-hypergraphs.
//!
//! The game keeps `k` pebbles per vertex. Placing an edge consumes one pebble
//! from one of its vertices, which becomes the edge's tail; a pebble found
//! elsewhere is brought over by reversing tails along a path. When no pebble is
//! reachable, the reachable vertex set spans more than `k|V'|` edges and is
//! returned as the witness.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{binomial, subsets, Dims, ExpandedMultiHypergraph, Hypergraph};
use crate::seed;

/// Reseeds attempted by the randomized generators before giving up.
pub const DEFAULT_RETRY_BUDGET: u64 = 64;

/// Largest vertex count accepted by [`brute_force_sparsity`].
pub const BRUTE_FORCE_MAX_VERTICES: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SparsityError {
    #[error("brute-force sparsity limited to {max} vertices, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("expanded hypergraph is not tight ({kind:?})")]
    NotTight { kind: VerdictKind },
    #[error("no tight hypergraph with distinct supports: {0}")]
    Infeasible(String),
    #[error("random generation stuck after {attempts} attempts")]
    GenerationStuck { attempts: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictKind {
    Tight,
    SparseNotTight,
    NotSparse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityVerdict {
    pub kind: VerdictKind,
    /// Vertex set whose induced expanded subgraph violates the count; present
    /// iff `kind == NotSparse`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Vec<usize>>,
}

impl SparsityVerdict {
    fn of(kind: VerdictKind) -> Self {
        Self {
            kind,
            witness: None,
        }
    }

    /// Re-check the witness by counting on the induced subgraph.
    pub fn witness_violates(&self, h: &Hypergraph) -> bool {
        match &self.witness {
            Some(w) => {
                let c = h.induced(w).tightness_counts();
                c.lhs > c.rhs
            }
            None => false,
        }
    }
}

/// Pebble counts and tail assignment of a `(k, 0)` game.
///
/// Keeps `pebbles[v] + outdeg(v) == k` for every vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PebbleState {
    k: usize,
    pebbles: Vec<usize>,
    edges: Vec<Vec<usize>>,
    tails: Vec<usize>,
    out: Vec<Vec<usize>>,
}

impl PebbleState {
    pub fn new(n_vertices: usize, k: usize) -> Self {
        assert!(k >= 1, "pebble game needs k >= 1");
        Self {
            k,
            pebbles: vec![k; n_vertices],
            edges: Vec::new(),
            tails: Vec::new(),
            out: vec![Vec::new(); n_vertices],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_vertices(&self) -> usize {
        self.pebbles.len()
    }

    pub fn pebbles(&self) -> &[usize] {
        &self.pebbles
    }

    pub fn free_pebbles(&self) -> usize {
        self.pebbles.iter().sum()
    }

    /// Tail vertex of each placed edge, in placement order.
    pub fn tails(&self) -> &[usize] {
        &self.tails
    }

    pub fn placed_edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    /// Edges tailed at `v`.
    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    pub fn add_vertices(&mut self, count: usize) {
        let n = self.pebbles.len() + count;
        self.pebbles.resize(n, self.k);
        self.out.resize(n, Vec::new());
    }

    /// Place one edge. On failure returns the (sorted) vertex set reachable
    /// from the edge in the tail orientation; the state is left unchanged.
    pub fn try_add(&mut self, edge: &[usize]) -> Result<usize, Vec<usize>> {
        let n = self.pebbles.len();
        let mut visited = vec![false; n];
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut stack = Vec::new();
        let mut found = None;
        for &v in edge {
            if !visited[v] {
                visited[v] = true;
                stack.push(v);
            }
            if found.is_none() && self.pebbles[v] > 0 {
                found = Some(v);
            }
        }
        while found.is_none() {
            let Some(w) = stack.pop() else { break };
            'scan: for &f in &self.out[w] {
                for &u in &self.edges[f] {
                    if visited[u] {
                        continue;
                    }
                    visited[u] = true;
                    parent[u] = Some((w, f));
                    if self.pebbles[u] > 0 {
                        found = Some(u);
                        break 'scan;
                    }
                    stack.push(u);
                }
            }
        }
        let Some(mut cur) = found else {
            return Err((0..n).filter(|&v| visited[v]).collect());
        };
        self.pebbles[cur] -= 1;
        while let Some((w, f)) = parent[cur] {
            let pos = self.out[w].iter().position(|&x| x == f).expect("tail list");
            self.out[w].swap_remove(pos);
            self.out[cur].push(f);
            self.tails[f] = cur;
            cur = w;
        }
        let id = self.edges.len();
        self.edges.push(edge.to_vec());
        self.tails.push(cur);
        self.out[cur].push(id);
        Ok(id)
    }

    /// Place all `copies` of a hyperedge or none of them.
    pub fn try_add_copies(&mut self, edge: &[usize], copies: usize) -> Result<(), Vec<usize>> {
        let mut trial = self.clone();
        for _ in 0..copies {
            trial.try_add(edge)?;
        }
        *self = trial;
        Ok(())
    }
}

/// Run the `(k, 0)` pebble game over every expanded edge, stopping at the
/// first edge copy that cannot be placed.
pub fn pebble_game(eh: &ExpandedMultiHypergraph, k: usize) -> (SparsityVerdict, PebbleState) {
    let mut state = PebbleState::new(eh.n_vertices(), k);
    for id in 0..eh.n_edges() {
        if let Err(witness) = state.try_add(eh.edge(id)) {
            let verdict = SparsityVerdict {
                kind: VerdictKind::NotSparse,
                witness: Some(witness),
            };
            return (verdict, state);
        }
    }
    let kind = if state.free_pebbles() == 0 {
        VerdictKind::Tight
    } else {
        VerdictKind::SparseNotTight
    };
    (SparsityVerdict::of(kind), state)
}

/// Generic rigidity read off the expanded multi-hypergraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum RigidityVerdict {
    MinimallyRigid,
    IndependentFlexible,
    Overconstrained { witness: Vec<usize> },
}

impl RigidityVerdict {
    pub fn is_minimally_rigid(&self) -> bool {
        matches!(self, RigidityVerdict::MinimallyRigid)
    }

    pub fn is_independent(&self) -> bool {
        !matches!(self, RigidityVerdict::Overconstrained { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            RigidityVerdict::MinimallyRigid => "MinimallyRigid",
            RigidityVerdict::IndependentFlexible => "IndependentFlexible",
            RigidityVerdict::Overconstrained { .. } => "Overconstrained",
        }
    }
}

pub fn check_rigidity_combinatorial(h: &Hypergraph) -> RigidityVerdict {
    let (verdict, _) = pebble_game(&h.expand(), h.dims().coords());
    match verdict.kind {
        VerdictKind::Tight => RigidityVerdict::MinimallyRigid,
        VerdictKind::SparseNotTight => RigidityVerdict::IndependentFlexible,
        VerdictKind::NotSparse => RigidityVerdict::Overconstrained {
            witness: verdict.witness.unwrap_or_default(),
        },
    }
}

/// Exhaustive `(d-1, 0)` sparsity check over all vertex subsets.
pub fn brute_force_sparsity(h: &Hypergraph) -> Result<SparsityVerdict, SparsityError> {
    let n = h.n_vertices();
    if n > BRUTE_FORCE_MAX_VERTICES {
        return Err(SparsityError::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_VERTICES,
        });
    }
    let dims = h.dims();
    let masks: Vec<u32> = h
        .edges()
        .iter()
        .map(|e| e.iter().fold(0u32, |m, &v| m | (1 << v)))
        .collect();
    for subset in 0u32..(1u32 << n) {
        let inside = masks.iter().filter(|&&m| m & subset == m).count();
        if dims.copies() * inside > dims.coords() * subset.count_ones() as usize {
            let witness = (0..n).filter(|&v| subset & (1 << v) != 0).collect();
            return Ok(SparsityVerdict {
                kind: VerdictKind::NotSparse,
                witness: Some(witness),
            });
        }
    }
    let kind = if h.tightness_counts().balanced() {
        VerdictKind::Tight
    } else {
        VerdictKind::SparseNotTight
    };
    Ok(SparsityVerdict::of(kind))
}

/// Edge coloring of a tight expanded multi-hypergraph into `d-1` maps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapDecomposition {
    /// Map index in `0..d-1` per expanded edge.
    pub color: Vec<usize>,
    /// Tail vertex per expanded edge.
    pub tail: Vec<usize>,
    pub maps: usize,
}

impl MapDecomposition {
    /// Expanded edge ids of one map, ordered by tail vertex.
    pub fn map_edges(&self, color: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.color.len())
            .filter(|&e| self.color[e] == color)
            .collect();
        ids.sort_by_key(|&e| self.tail[e]);
        ids
    }

    /// Every vertex tails exactly one edge of every color, and tails are members.
    pub fn is_valid(&self, eh: &ExpandedMultiHypergraph) -> bool {
        if self.color.len() != eh.n_edges() || self.tail.len() != eh.n_edges() {
            return false;
        }
        let n = eh.n_vertices();
        let mut count = vec![0usize; n * self.maps];
        for e in 0..eh.n_edges() {
            let (c, t) = (self.color[e], self.tail[e]);
            if c >= self.maps || !eh.edge(e).contains(&t) {
                return false;
            }
            count[t * self.maps + c] += 1;
        }
        count.into_iter().all(|x| x == 1)
    }
}

pub fn map_decomposition(eh: &ExpandedMultiHypergraph) -> Result<MapDecomposition, SparsityError> {
    let k = eh.dims().coords();
    let (verdict, state) = pebble_game(eh, k);
    if verdict.kind != VerdictKind::Tight {
        return Err(SparsityError::NotTight { kind: verdict.kind });
    }
    let mut color = vec![0; eh.n_edges()];
    for v in 0..eh.n_vertices() {
        let mut tailed = state.out_edges(v).to_vec();
        tailed.sort_unstable();
        debug_assert_eq!(tailed.len(), k);
        for (c, e) in tailed.into_iter().enumerate() {
            color[e] = c;
        }
    }
    Ok(MapDecomposition {
        color,
        tail: state.tails().to_vec(),
        maps: k,
    })
}

/// Candidate supports above this count are sampled instead of enumerated.
const ENUMERATION_LIMIT: usize = 200_000;

/// A random hypergraph on `n` vertices with pairwise-distinct supports whose
/// expansion is `(d-1, 0)`-tight, grown by randomized add-edge moves that each
/// place all `d - s` copies of a hyperedge.
pub fn random_tight_hypergraph(
    n: usize,
    dims: Dims,
    seed: u64,
) -> Result<Hypergraph, SparsityError> {
    let total = dims.coords() * n;
    if !total.is_multiple_of(dims.copies()) {
        return Err(SparsityError::Infeasible(format!(
            "(d-1)n = {total} not divisible by d-s = {}",
            dims.copies()
        )));
    }
    let target = total / dims.copies();
    if binomial(n, dims.s()) < target {
        return Err(SparsityError::Infeasible(format!(
            "need {target} distinct supports, only C({n},{}) = {} exist",
            dims.s(),
            binomial(n, dims.s())
        )));
    }
    for attempt in 0..DEFAULT_RETRY_BUDGET {
        let mut rng = seed::rng(seed::derive(seed, "random_tight", attempt));
        let mut state = PebbleState::new(n, dims.coords());
        let mut edges = Vec::with_capacity(target);
        if binomial(n, dims.s()) <= ENUMERATION_LIMIT {
            let mut candidates = subsets(n, dims.s());
            candidates.shuffle(&mut rng);
            for cand in candidates {
                if edges.len() == target {
                    break;
                }
                if state.try_add_copies(&cand, dims.copies()).is_ok() {
                    edges.push(cand);
                }
            }
        } else {
            let mut tried = HashSet::new();
            let budget = 50 * target + 1000;
            for _ in 0..budget {
                if edges.len() == target {
                    break;
                }
                let mut cand: Vec<usize> =
                    rand::seq::index::sample(&mut rng, n, dims.s()).into_vec();
                cand.sort_unstable();
                if !tried.insert(cand.clone()) {
                    continue;
                }
                if state.try_add_copies(&cand, dims.copies()).is_ok() {
                    edges.push(cand);
                }
            }
        }
        if edges.len() == target {
            return Ok(Hypergraph::new(n, dims, edges).expect("generated edges are valid"));
        }
    }
    Err(SparsityError::GenerationStuck {
        attempts: DEFAULT_RETRY_BUDGET,
    })
}
