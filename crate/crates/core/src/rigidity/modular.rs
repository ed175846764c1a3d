//! Generic rank by exact elimination over a random prime field, and the
//! comparison against the combinatorial verdict.
//!
//! A random evaluation point over a large prime field hits the variety where
//! the generic rank drops with probability at most (degree / p), so the
//! maximum over a few trials is the generic rank with overwhelming probability.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{all_selectors, jacobian_over, RankMethod, RankReport, RigidityError};
use crate::hypergraph::Hypergraph;
use crate::ring::{is_prime, PrimeField, Ring};
use crate::seed;
use crate::sparsity::{check_rigidity_combinatorial, RigidityVerdict};

pub const DEFAULT_TRIALS: usize = 3;

const MIN_PRIME: u64 = 1 << 20;
const MAX_PRIME: u64 = 1 << 63;

/// A random prime in `[2^30, 2^31)` derived from `seed`.
pub fn default_prime(seed: u64) -> u64 {
    let mut rng = seed::rng(seed::derive(seed, "prime", 0));
    loop {
        let candidate = rng.random_range((1u64 << 30)..(1u64 << 31)) | 1;
        if is_prime(candidate) {
            return candidate;
        }
    }
}

fn modular_trial(h: &Hypergraph, field: &PrimeField, seed: u64) -> usize {
    let p = field.modulus();
    let mut rng = seed::rng(seed);
    let coords = h.dims().coords();
    let dict: Vec<Vec<u64>> = (0..h.n_vertices())
        .map(|_| (0..coords).map(|_| rng.random_range(1..p)).collect())
        .collect();
    let pins: Vec<Vec<u64>> = h
        .edges()
        .iter()
        .map(|support| {
            let (weights, total) = loop {
                let t: Vec<u64> = support.iter().map(|_| rng.random_range(1..p)).collect();
                let total = t.iter().fold(0, |acc, &w| field.add(acc, w));
                if total != 0 {
                    break (t, total);
                }
            };
            let inv = field.inv(total).expect("nonzero total");
            (0..coords)
                .map(|j| {
                    support.iter().zip(&weights).fold(0, |acc, (&v, &w)| {
                        field.add(acc, field.mul(field.mul(w, inv), dict[v][j]))
                    })
                })
                .collect()
        })
        .collect();
    let rows = jacobian_over(field, h, &dict, &pins, &all_selectors(h.dims()));
    field.rank(&rows)
}

/// Generic rank of the full rigidity matrix of `h`: max over `trials` random
/// evaluations over `GF(prime)`. Trial `t` uses a sub-seed derived from
/// `(seed, t)`, so the result does not depend on scheduling.
pub fn modular_generic_rank(
    h: &Hypergraph,
    seed: u64,
    prime: Option<u64>,
    trials: usize,
) -> Result<RankReport, RigidityError> {
    let p = prime.unwrap_or_else(|| default_prime(seed));
    if !(MIN_PRIME..MAX_PRIME).contains(&p) || !is_prime(p) {
        return Err(RigidityError::BadPrime(p));
    }
    let field = PrimeField::new(p);
    let trials = trials.max(1);
    let per_trial: Vec<usize> = (0..trials as u64)
        .into_par_iter()
        .map(|t| modular_trial(h, &field, seed::derive(seed, "modular_trial", t)))
        .collect();
    Ok(RankReport {
        rank: per_trial.iter().copied().max().unwrap_or(0),
        method: RankMethod::Modular,
        prime: Some(p),
        seed: Some(seed),
        threshold: None,
        trials,
        per_trial,
        rows: h.n_edges() * h.dims().minors_per_pin(),
        cols: h.n_vertices() * h.dims().coords(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericVerdict {
    /// Generic rank equals `n (d-1)`.
    pub rigid: bool,
    /// Generic rank equals `m (d-s)`.
    pub independent: bool,
    pub rank: usize,
    pub rigid_target: usize,
    pub independent_target: usize,
    pub report: RankReport,
}

pub fn rigidity_verdict_numeric(
    h: &Hypergraph,
    trials: usize,
    seed: u64,
    prime: Option<u64>,
) -> Result<NumericVerdict, RigidityError> {
    let report = modular_generic_rank(h, seed, prime, trials)?;
    let dims = h.dims();
    let rigid_target = h.n_vertices() * dims.coords();
    let independent_target = h.n_edges() * dims.copies();
    Ok(NumericVerdict {
        rigid: report.rank == rigid_target,
        independent: report.rank == independent_target,
        rank: report.rank,
        rigid_target,
        independent_target,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub agree: bool,
    pub combinatorial: RigidityVerdict,
    pub numeric: NumericVerdict,
    /// Some support carries more than one pin.
    pub pure_condition_risk: bool,
    /// Edge ids repeating an earlier support.
    pub repeated_supports: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Compare the pebble-game verdict with the generic rank.
///
/// Agreement means: minimally rigid iff rigid and independent, and sparse iff
/// independent.
pub fn verify_main_theorem(
    h: &Hypergraph,
    trials: usize,
    seed: u64,
    prime: Option<u64>,
) -> Result<AgreementReport, RigidityError> {
    let combinatorial = check_rigidity_combinatorial(h);
    let numeric = rigidity_verdict_numeric(h, trials, seed, prime)?;
    let agree = combinatorial.is_minimally_rigid() == (numeric.rigid && numeric.independent)
        && combinatorial.is_independent() == numeric.independent;
    let repeated_supports = h.repeated_supports();
    let pure_condition_risk = !repeated_supports.is_empty();
    let note = pure_condition_risk.then(|| {
        format!(
            "pure-condition violation: {} pin(s) share a support with an earlier pin",
            repeated_supports.len()
        )
    });
    Ok(AgreementReport {
        agree,
        combinatorial,
        numeric,
        pure_condition_risk,
        repeated_supports,
        note,
    })
}
