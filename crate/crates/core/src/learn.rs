//! Linear-time construct-and-solve dictionary learning.
//!
//! A constant-size minimally rigid seed graph `H0` is solved first. Every
//! further `d - 1` pins are attached as a copy of one block template hanging
//! off fixed base vertices of `H0`, so each block is a constant-size solve
//! independent of the others.

use std::time::Instant;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{binomial, subsets, Dims, Hypergraph, HypergraphFile};
use crate::incidence::{chart_from_homogeneous, Chart, IncidenceError, Pin};
use crate::rigidity::{modular_generic_rank, DEFAULT_TRIALS};
use crate::seed;
use crate::solver::{
    points_json, solve_fitted, verify_solution_complex, ComplexPoints, Field, SolveError,
    SolveOptions, SolveResult,
};
use crate::sparsity::{
    check_rigidity_combinatorial, pebble_game, random_tight_hypergraph, SparsityError,
    DEFAULT_RETRY_BUDGET,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("{m} pins given, the seed graph alone needs {need}")]
    TooFewPins { m: usize, need: usize },
    #[error("seed graph is not minimally rigid")]
    SeedNotRigid,
    #[error(transparent)]
    Generation(#[from] SparsityError),
    #[error("no convergence at stage {stage}; best residual {best_residual:e}")]
    NoConvergence { stage: String, best_residual: f64 },
    #[error("assembled dictionary fails verification: max residual {max:e}")]
    Verification { max: f64 },
    #[error(transparent)]
    Solve(SolveError),
    #[error(transparent)]
    Incidence(#[from] IncidenceError),
}

/// A block vertex: one of the template's new vertices, or a base vertex of `H0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    New(usize),
    Base(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockTemplate {
    /// `d - s` new vertices per instance.
    pub new_vertices: usize,
    /// Base vertex ids in `H0`, sorted.
    pub base: Vec<usize>,
    /// `d - 1` edges, each containing at least one new slot.
    pub edges: Vec<Vec<Slot>>,
}

impl BlockTemplate {
    /// Edges of one instance whose new vertices start at `first_new`,
    /// truncated to the first `count` template edges.
    pub fn instantiate(&self, first_new: usize, count: usize) -> Vec<Vec<usize>> {
        self.edges[..count]
            .iter()
            .map(|e| {
                let mut out: Vec<usize> = e
                    .iter()
                    .map(|slot| match *slot {
                        Slot::New(i) => first_new + i,
                        Slot::Base(v) => v,
                    })
                    .collect();
                out.sort_unstable();
                out
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnPlan {
    pub k: usize,
    pub h0: Hypergraph,
    pub block: BlockTemplate,
    /// Number of full block instances.
    pub blocks: usize,
    /// Edges in the trailing partial block, `0 <= leftover < d - 1`.
    pub leftover: usize,
}

impl LearnPlan {
    pub fn dictionary_size(&self) -> usize {
        let extra = self.blocks + usize::from(self.leftover > 0);
        self.h0.n_vertices() + extra * self.block.new_vertices
    }

    /// First vertex id of block instance `i` (the partial block is `i = blocks`).
    pub fn block_start(&self, i: usize) -> usize {
        self.h0.n_vertices() + i * self.block.new_vertices
    }

    /// First edge id of block instance `i`.
    pub fn block_edge_start(&self, i: usize) -> usize {
        self.h0.n_edges() + i * self.block.edges.len()
    }
}

#[derive(Serialize)]
struct LearnPlanJson<'a> {
    k: usize,
    blocks: usize,
    leftover: usize,
    h0: HypergraphFile,
    block: &'a BlockTemplate,
}

impl Serialize for LearnPlan {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        LearnPlanJson {
            k: self.k,
            blocks: self.blocks,
            leftover: self.leftover,
            h0: HypergraphFile::from(&self.h0),
            block: &self.block,
        }
        .serialize(serializer)
    }
}

/// Smallest `k` with `C(k(d-s), s) >= k(d-1)`.
pub fn choose_k(dims: Dims) -> usize {
    (1..)
        .find(|&k| binomial(k * dims.copies(), dims.s()) >= k * dims.coords())
        .expect("binomial growth eventually wins")
}

/// A random minimally rigid seed graph on `k(d-s)` vertices. Candidates whose
/// generic rank falls short of the count (tight but flexible) are redrawn.
pub fn build_seed_graph(dims: Dims, seed: u64) -> Result<Hypergraph, LearnError> {
    let k = choose_k(dims);
    for attempt in 0..DEFAULT_RETRY_BUDGET {
        let h0 =
            random_tight_hypergraph(k * dims.copies(), dims, seed::derive(seed, "h0", attempt))?;
        if check_rigidity_combinatorial(&h0).is_minimally_rigid() && generically_rigid(&h0, seed) {
            return Ok(h0);
        }
    }
    Err(LearnError::SeedNotRigid)
}

fn generically_rigid(h: &Hypergraph, seed: u64) -> bool {
    modular_generic_rank(h, seed::derive(seed, "rank_check", 0), None, DEFAULT_TRIALS)
        .is_ok_and(|r| r.rank == h.n_vertices() * h.dims().coords())
}

/// Randomized search for `d - s` new vertices and `d - 1` new edges, each
/// meeting the new vertices, such that `h0` plus the block stays minimally
/// rigid, combinatorially and by generic rank. Candidates come from
/// continuing the pebble game of `h0`.
pub fn build_block(dims: Dims, h0: &Hypergraph, seed: u64) -> Result<BlockTemplate, LearnError> {
    let k = dims.coords();
    let (verdict, base_state) = pebble_game(&h0.expand(), k);
    if verdict.kind != crate::sparsity::VerdictKind::Tight {
        return Err(LearnError::SeedNotRigid);
    }
    let n0 = h0.n_vertices();
    let fresh = dims.copies();
    let candidates: Vec<Vec<usize>> = subsets(n0 + fresh, dims.s())
        .into_iter()
        .filter(|e| e.iter().any(|&v| v >= n0))
        .collect();
    for attempt in 0..DEFAULT_RETRY_BUDGET {
        let mut rng = seed::rng(seed::derive(seed, "block", attempt));
        let mut order = candidates.clone();
        order.shuffle(&mut rng);
        let mut state = base_state.clone();
        state.add_vertices(fresh);
        let mut chosen = Vec::with_capacity(k);
        for cand in order {
            if chosen.len() == k {
                break;
            }
            if state.try_add_copies(&cand, dims.copies()).is_ok() {
                chosen.push(cand);
            }
        }
        if chosen.len() < k {
            continue;
        }
        let mut full = h0.clone();
        full.add_vertices(fresh);
        for e in &chosen {
            full.push_edge(e.clone())
                .expect("candidate edges are in range");
        }
        if !check_rigidity_combinatorial(&full).is_minimally_rigid()
            || !generically_rigid(&full, seed)
        {
            continue;
        }
        let mut base: Vec<usize> = chosen
            .iter()
            .flatten()
            .copied()
            .filter(|&v| v < n0)
            .collect();
        base.sort_unstable();
        base.dedup();
        let edges = chosen
            .iter()
            .map(|e| {
                e.iter()
                    .map(|&v| {
                        if v >= n0 {
                            Slot::New(v - n0)
                        } else {
                            Slot::Base(v)
                        }
                    })
                    .collect()
            })
            .collect();
        return Ok(BlockTemplate {
            new_vertices: fresh,
            base,
            edges,
        });
    }
    Err(SparsityError::GenerationStuck {
        attempts: DEFAULT_RETRY_BUDGET,
    }
    .into())
}

/// The hypergraph with exactly `m` edges: `H0`, then full blocks, then a
/// partial block holding the remaining edges.
pub fn construct_hypergraph(
    m: usize,
    dims: Dims,
    seed: u64,
) -> Result<(Hypergraph, LearnPlan), LearnError> {
    let k = choose_k(dims);
    let need = k * dims.coords();
    if m < need {
        return Err(LearnError::TooFewPins { m, need });
    }
    let h0 = build_seed_graph(dims, seed::derive(seed, "seed_graph", 0))?;
    let block = build_block(dims, &h0, seed::derive(seed, "block_template", 0))?;
    let per_block = dims.coords();
    let plan = LearnPlan {
        k,
        blocks: (m - need) / per_block,
        leftover: (m - need) % per_block,
        h0,
        block,
    };
    let mut h = plan.h0.clone();
    let counts = (0..plan.blocks)
        .map(|_| per_block)
        .chain((plan.leftover > 0).then_some(plan.leftover));
    for count in counts {
        let first = h.add_vertices(plan.block.new_vertices).start;
        for e in plan.block.instantiate(first, count) {
            h.push_edge(e).expect("block edges are in range");
        }
    }
    debug_assert_eq!(h.n_edges(), m);
    Ok((h, plan))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnOptions {
    /// Per-stage solver settings; the seed is replaced by per-stage sub-seeds.
    pub solve: SolveOptions,
    /// Retry a failed real stage over the complex numbers.
    pub complex_fallback: bool,
    /// Solve full blocks concurrently.
    pub parallel: bool,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            complex_fallback: true,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// `h0`, `blocks` or `partial`.
    pub stage: String,
    /// Number of systems solved in this stage.
    pub solves: usize,
    pub unknowns_per_solve: usize,
    pub restarts_total: usize,
    pub restarts_max: usize,
    pub complex_solves: usize,
    pub max_residual: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnResult {
    pub h: Hypergraph,
    pub dict: ComplexPoints,
    /// Complex if any stage needed the complex fallback.
    pub field: Field,
    /// Max pin residual over the whole assembled system.
    pub residual: f64,
    pub stages: Vec<StageReport>,
    pub plan: LearnPlan,
    /// Set when the input was homogeneous.
    pub chart: Option<Chart>,
}

impl LearnResult {
    pub fn n(&self) -> usize {
        self.dict.len()
    }
}

#[derive(Serialize)]
struct LearnResultJson<'a> {
    field: Field,
    n: usize,
    m: usize,
    residual: f64,
    hypergraph: HypergraphFile,
    vectors: serde_json::Value,
    stages: &'a [StageReport],
    plan: &'a LearnPlan,
    #[serde(skip_serializing_if = "Option::is_none")]
    chart: Option<&'a Chart>,
}

impl Serialize for LearnResult {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        LearnResultJson {
            field: self.field,
            n: self.n(),
            m: self.h.n_edges(),
            residual: self.residual,
            hypergraph: HypergraphFile::from(&self.h),
            vectors: points_json(&self.dict, self.field),
            stages: &self.stages,
            plan: &self.plan,
            chart: self.chart.as_ref(),
        }
        .serialize(serializer)
    }
}

/// Solve one stage, falling back to complex arithmetic when allowed.
fn solve_stage(
    h: &Hypergraph,
    pins: &[Pin],
    fixed: Option<&[Option<Vec<Complex64>>]>,
    opts: &LearnOptions,
    seed: u64,
    stage: &str,
) -> Result<SolveResult, LearnError> {
    let mut so = SolveOptions { seed, ..opts.solve };
    // complex base points force a complex block
    let complex_base = fixed
        .into_iter()
        .flatten()
        .flatten()
        .flatten()
        .any(|z| z.im != 0.0);
    if complex_base {
        so.field = Field::Complex;
    }
    match solve_fitted(h, pins, &so, fixed) {
        Ok(r) => Ok(r),
        Err(SolveError::NoConvergence { best_residual, .. }) => {
            if so.field == Field::Real && opts.complex_fallback {
                so.field = Field::Complex;
                match solve_fitted(h, pins, &so, fixed) {
                    Ok(r) => return Ok(r),
                    Err(SolveError::NoConvergence {
                        best_residual: b, ..
                    }) => {
                        return Err(LearnError::NoConvergence {
                            stage: stage.to_string(),
                            best_residual: best_residual.min(b),
                        })
                    }
                    Err(e) => return Err(LearnError::Solve(e)),
                }
            }
            Err(LearnError::NoConvergence {
                stage: stage.to_string(),
                best_residual,
            })
        }
        Err(e) => Err(LearnError::Solve(e)),
    }
}

/// The local system of block instance `i` with `count` edges: base vertices
/// first (fixed), then the new vertices.
fn block_system(
    plan: &LearnPlan,
    dims: Dims,
    i: usize,
    count: usize,
    points: &[Vec<f64>],
    h0_dict: &ComplexPoints,
) -> (Hypergraph, Vec<Pin>, Vec<Option<Vec<Complex64>>>) {
    let block = &plan.block;
    let nb = block.base.len();
    let edges = block
        .edges
        .iter()
        .take(count)
        .map(|e| {
            e.iter()
                .map(|slot| match *slot {
                    Slot::New(j) => nb + j,
                    Slot::Base(v) => block.base.binary_search(&v).expect("base vertex listed"),
                })
                .collect()
        })
        .collect();
    let local = Hypergraph::new(nb + block.new_vertices, dims, edges).expect("template is valid");
    let e0 = plan.block_edge_start(i);
    let pins = (0..count)
        .map(|j| Pin {
            edge: j,
            x: points[e0 + j].clone(),
        })
        .collect();
    let fixed = block
        .base
        .iter()
        .map(|&v| Some(h0_dict[v].clone()))
        .chain(std::iter::repeat_n(None, block.new_vertices))
        .collect();
    (local, pins, fixed)
}

fn stage_report(stage: &str, results: &[SolveResult], elapsed_ms: f64) -> StageReport {
    StageReport {
        stage: stage.to_string(),
        solves: results.len(),
        unknowns_per_solve: results.first().map_or(0, |r| r.free_coordinates),
        restarts_total: results.iter().map(|r| r.restarts_used).sum(),
        restarts_max: results.iter().map(|r| r.restarts_used).max().unwrap_or(0),
        complex_solves: results.iter().filter(|r| r.field == Field::Complex).count(),
        max_residual: results.iter().map(|r| r.residual).fold(0.0, f64::max),
        elapsed_ms,
    }
}

/// Learn a dictionary for `m` chart points in `R^{d-1}`: build the
/// hypergraph for `m`, assign pins to edges in input order, solve `H0`, then
/// every block against fixed base vertices.
pub fn learn_dictionary(
    points: &[Vec<f64>],
    dims: Dims,
    opts: &LearnOptions,
    seed: u64,
) -> Result<LearnResult, LearnError> {
    if let Some((i, p)) = points
        .iter()
        .enumerate()
        .find(|(_, p)| p.len() != dims.coords())
    {
        return Err(IncidenceError::DimensionMismatch(format!(
            "point {i} has {} coordinates, expected {}",
            p.len(),
            dims.coords()
        ))
        .into());
    }
    let (h, plan) = construct_hypergraph(points.len(), dims, seed)?;
    let e0 = plan.h0.n_edges();
    let mut stages = Vec::new();

    let start = Instant::now();
    let h0_pins: Vec<Pin> = (0..e0)
        .map(|i| Pin {
            edge: i,
            x: points[i].clone(),
        })
        .collect();
    let r0 = solve_stage(
        &plan.h0,
        &h0_pins,
        None,
        opts,
        seed::derive(seed, "solve_h0", 0),
        "h0",
    )?;
    stages.push(stage_report("h0", std::slice::from_ref(&r0), ms(start)));
    let check = verify_solution_complex(&plan.h0, &h0_pins, &r0.dict, opts.solve.tol)
        .map_err(LearnError::Solve)?;
    if !check.pass {
        return Err(LearnError::Verification { max: check.max });
    }
    let h0_dict = r0.dict.clone();

    let solve_block = |i: usize, count: usize, stage: &str| {
        let (local, pins, fixed) = block_system(&plan, dims, i, count, points, &h0_dict);
        solve_stage(
            &local,
            &pins,
            Some(&fixed),
            opts,
            seed::derive(seed, "solve_block", i as u64),
            &format!("{stage} {i}"),
        )
    };
    let start = Instant::now();
    let full = dims.coords();
    let blocks: Vec<Result<SolveResult, LearnError>> = if opts.parallel {
        (0..plan.blocks)
            .into_par_iter()
            .map(|i| solve_block(i, full, "block"))
            .collect()
    } else {
        (0..plan.blocks)
            .map(|i| solve_block(i, full, "block"))
            .collect()
    };
    let blocks: Vec<SolveResult> = blocks.into_iter().collect::<Result<_, _>>()?;
    if plan.blocks > 0 {
        stages.push(stage_report("blocks", &blocks, ms(start)));
    }

    let mut partial = None;
    if plan.leftover > 0 {
        let start = Instant::now();
        let r = solve_block(plan.blocks, plan.leftover, "partial")?;
        stages.push(stage_report("partial", std::slice::from_ref(&r), ms(start)));
        partial = Some(r);
    }

    let nb = plan.block.base.len();
    let mut dict = h0_dict;
    for r in blocks.iter().chain(partial.iter()) {
        dict.extend(r.dict[nb..].iter().cloned());
    }
    let field = if r0.field == Field::Complex
        || blocks
            .iter()
            .chain(partial.iter())
            .any(|r| r.field == Field::Complex)
    {
        Field::Complex
    } else {
        Field::Real
    };
    let pins: Vec<Pin> = points
        .iter()
        .enumerate()
        .map(|(i, x)| Pin {
            edge: i,
            x: x.clone(),
        })
        .collect();
    let check =
        verify_solution_complex(&h, &pins, &dict, opts.solve.tol).map_err(LearnError::Solve)?;
    if !check.pass {
        return Err(LearnError::Verification { max: check.max });
    }
    Ok(LearnResult {
        h,
        dict,
        field,
        residual: check.max,
        stages,
        plan,
        chart: None,
    })
}

/// As [`learn_dictionary`] for homogeneous points in `R^d` (e.g. sphere
/// samples), moved to the affine chart by a seeded random rotation first.
pub fn learn_from_homogeneous(
    points: &[Vec<f64>],
    dims: Dims,
    opts: &LearnOptions,
    seed: u64,
) -> Result<LearnResult, LearnError> {
    if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.len() != dims.d()) {
        return Err(IncidenceError::DimensionMismatch(format!(
            "point {i} has {} coordinates, expected {}",
            p.len(),
            dims.d()
        ))
        .into());
    }
    let chart = chart_from_homogeneous(points, seed::derive(seed, "chart", 0))?;
    let mut result = learn_dictionary(&chart.points, dims, opts, seed)?;
    result.chart = Some(chart);
    Ok(result)
}

/// Pins for `m` edges of the constructed hypergraph, planted from a hidden
/// standard-normal dictionary.
pub fn planted_points(m: usize, dims: Dims, seed: u64) -> Result<Vec<Vec<f64>>, LearnError> {
    let (h, _) = construct_hypergraph(m, dims, seed)?;
    let fw = crate::incidence::random_framework(&h, seed::derive(seed, "plant", 0));
    Ok(fw.pins().iter().map(|p| p.x.clone()).collect())
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}
