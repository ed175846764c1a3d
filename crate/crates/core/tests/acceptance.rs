//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use std::time::{Duration, Instant};

use pinned_rigidity::hypergraph::{subsets, Dims, Hypergraph};
use pinned_rigidity::incidence::{random_framework, Pin};
use pinned_rigidity::learn::{learn_dictionary, planted_points, LearnOptions};
use pinned_rigidity::rigidity::{
    finite_difference_check, jacobian, modular_generic_rank, numeric_rank,
    pure_condition_certificate, specialized_map_matrix, verify_main_theorem, DEFAULT_REL_THRESHOLD,
};
use pinned_rigidity::ring::integer_det;
use pinned_rigidity::seed;
use pinned_rigidity::solver::{solve_fitted, Field, SolveError, SolveOptions};
use pinned_rigidity::sparsity::{
    brute_force_sparsity, check_rigidity_combinatorial, map_decomposition, pebble_game,
    random_tight_hypergraph, RigidityVerdict, VerdictKind,
};
use rand::Rng;

const PAIRS: [(usize, usize); 6] = [(3, 2), (4, 2), (4, 3), (5, 2), (5, 3), (5, 4)];

type Outcome = Result<String, String>;

fn dims(d: usize, s: usize) -> Dims {
    Dims::new(d, s).unwrap()
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

/// Vertex counts up to 12 admitting a tight hypergraph with distinct supports.
fn feasible_sizes(dm: Dims) -> Vec<usize> {
    (2..=12)
        .filter(|&n| {
            let total = dm.coords() * n;
            total.is_multiple_of(dm.copies())
                && pinned_rigidity::hypergraph::binomial(n, dm.s()) >= total / dm.copies()
        })
        .collect()
}

fn main_theorem() -> Outcome {
    let start = Instant::now();
    let (mut total, mut agree) = (0, 0);
    let mut tallies = Vec::new();
    for (pi, &(d, s)) in PAIRS.iter().enumerate() {
        let (mut pair_total, mut pair_agree) = (0, 0);
        let dm = dims(d, s);
        let sizes = feasible_sizes(dm);
        for i in 0..35u64 {
            let n = sizes[i as usize % sizes.len()];
            let gseed = seed::derive(1000 + pi as u64, "graph", i);
            let h = random_tight_hypergraph(n, dm, gseed).map_err(|e| e.to_string())?;
            let r = verify_main_theorem(&h, 3, gseed, None).map_err(|e| e.to_string())?;
            let ok = r.agree
                && r.combinatorial == RigidityVerdict::MinimallyRigid
                && r.numeric.rank == n * dm.coords()
                && r.numeric.rank == h.n_edges() * dm.copies()
                && !h.has_repeated_supports();
            pair_total += 1;
            pair_agree += usize::from(ok);
        }
        total += pair_total;
        agree += pair_agree;
        tallies.push(format!("({d},{s}) {pair_agree}/{pair_total}"));
    }
    let elapsed = start.elapsed();
    let msg = format!(
        "{agree}/{total} agree in {} [{}]",
        secs(elapsed),
        tallies.join(", ")
    );
    if total >= 200 && agree == total && elapsed < Duration::from_secs(300) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn k4_example() -> Outcome {
    let k4 = Hypergraph::complete(4, dims(4, 2));
    let verdict = check_rigidity_combinatorial(&k4);
    let fw = random_framework(&k4, 1);
    let jac = jacobian(&fw);
    let rank = modular_generic_rank(&k4, 1, None, 3)
        .map_err(|e| e.to_string())?
        .rank;
    let cert = pure_condition_certificate(&fw).map_err(|e| e.to_string())?;
    let msg = format!(
        "{} jacobian {}x{} rank {rank} |normalized det| {:.3e}",
        verdict.name(),
        jac.nrows(),
        jac.ncols(),
        cert.normalized_determinant.abs()
    );
    if verdict == RigidityVerdict::MinimallyRigid
        && (jac.nrows(), jac.ncols()) == (18, 12)
        && rank == 12
        && cert.normalized_determinant.abs() > 1e-10
    {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn g_dagger() -> Outcome {
    let e = |a: usize, b: usize| vec![a, b];
    let g = Hypergraph::new(
        4,
        dims(3, 2),
        vec![
            e(0, 1),
            e(0, 1),
            e(0, 2),
            e(0, 2),
            e(1, 2),
            e(1, 2),
            e(0, 3),
            e(0, 3),
        ],
    )
    .unwrap();
    let counts = g.tightness_counts();
    let kind = pebble_game(&g.expand(), 2).0.kind;
    let report = verify_main_theorem(&g, 3, 7, None).map_err(|e| e.to_string())?;
    let per_trial = &report.numeric.report.per_trial;
    let note = report.note.clone().unwrap_or_default();
    let msg = format!(
        "{:?} ({} = {}), per-trial ranks {per_trial:?}; {note}",
        kind, counts.lhs, counts.rhs
    );
    if kind == VerdictKind::Tight
        && per_trial.len() == 3
        && per_trial.iter().all(|&r| r <= 7)
        && report.pure_condition_risk
    {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn sparsity_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(4);
    let mut agree = 0;
    let total = 500;
    for _ in 0..total {
        let (d, s) = PAIRS[rng.random_range(0..PAIRS.len())];
        let dm = dims(d, s);
        let n = rng.random_range(s..=8);
        let supports = subsets(n, s);
        let max_m = (dm.coords() * n).div_ceil(dm.copies()) + 2;
        let m = rng.random_range(1..=max_m);
        let edges = (0..m)
            .map(|_| supports[rng.random_range(0..supports.len())].clone())
            .collect();
        let h = Hypergraph::new(n, dm, edges).unwrap();
        let (fast, _) = pebble_game(&h.expand(), dm.coords());
        let slow = brute_force_sparsity(&h).map_err(|e| e.to_string())?;
        let witness_ok = match fast.kind {
            VerdictKind::NotSparse => fast.witness_violates(&h) && slow.witness_violates(&h),
            _ => fast.witness.is_none(),
        };
        if fast.kind == slow.kind && witness_ok {
            agree += 1;
        }
    }
    let elapsed = start.elapsed();
    let msg = format!("{agree}/{total} agree in {}", secs(elapsed));
    if agree == total && elapsed < Duration::from_secs(60) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn jacobian_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut bad_rank = 0;
    for i in 0..50u64 {
        let (d, s) = PAIRS[i as usize % PAIRS.len()];
        let dm = dims(d, s);
        let sizes = feasible_sizes(dm);
        let n = sizes[(i as usize / PAIRS.len()) % sizes.len().min(3)];
        let h = random_tight_hypergraph(n, dm, 500 + i).map_err(|e| e.to_string())?;
        let fw = random_framework(&h, 500 + i);
        worst = worst.max(finite_difference_check(&fw, 1e-6));
        let jac = jacobian(&fw);
        let per_pin = dm.minors_per_pin();
        for k in 0..h.n_edges() {
            let rows = jac.entries.rows(k * per_pin, per_pin).into_owned();
            if numeric_rank(&rows, DEFAULT_REL_THRESHOLD).rank != d - s {
                bad_rank += 1;
            }
        }
    }
    let msg = format!("max relative error {worst:.2e}, {bad_rank} pin(s) with rank != d-s");
    if worst < 1e-6 && bad_rank == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn plant_and_learn() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (m, d, s, n) in [(110, 3, 2, 55), (12, 4, 2, 8)] {
        let dm = dims(d, s);
        let pts = planted_points(m, dm, 6).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let r =
            learn_dictionary(&pts, dm, &LearnOptions::default(), 6).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        ok &= r.n() == n && r.residual < 1e-8 && elapsed < Duration::from_secs(10);
        parts.push(format!(
            "m={m} d={d} s={s}: n={} residual {:.1e} in {}",
            r.n(),
            r.residual,
            secs(elapsed)
        ));
    }
    let msg = parts.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn lower_bound() -> Outcome {
    let dm = dims(3, 2);
    let k5 = Hypergraph::complete(5, dm);
    let mut parts = Vec::new();
    let mut ok = true;
    for inst in 0..3u64 {
        let fw = random_framework(&k5, 70 + inst);
        let mut rng = seed::rng(seed::derive(70, "extra_pin", inst));
        let support: Vec<usize> = rand::seq::index::sample(&mut rng, 5, 2).into_vec();
        let mut h = k5.clone();
        h.push_edge(support).unwrap();
        let mut pins = fw.pins().to_vec();
        pins.push(Pin {
            edge: 10,
            x: vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
        });
        for field in [Field::Real, Field::Complex] {
            let opts = SolveOptions {
                field,
                restarts: 200,
                seed: inst,
                ..SolveOptions::default()
            };
            match solve_fitted(&h, &pins, &opts, None) {
                Err(SolveError::NoConvergence { best_residual, .. }) => {
                    ok &= best_residual > 1e-4;
                    parts.push(format!("{field:?} best {best_residual:.1e}"));
                }
                other => {
                    ok = false;
                    parts.push(format!("{field:?} unexpected {other:?}"));
                }
            }
        }
        let base = solve_fitted(&k5, fw.pins(), &SolveOptions::default(), None);
        ok &= base.is_ok();
        parts.push(format!(
            "K5 alone {}",
            if base.is_ok() { "solves" } else { "FAILS" }
        ));
    }
    let msg = parts.join(", ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn learn_time(m: usize, pts: &[Vec<f64>]) -> Result<Duration, String> {
    (0..5)
        .map(|_| {
            let start = Instant::now();
            learn_dictionary(pts, dims(3, 2), &LearnOptions::default(), m as u64)
                .map(|_| start.elapsed())
                .map_err(|e| e.to_string())
        })
        .try_fold(Duration::MAX, |best, t| t.map(|t| best.min(t)))
}

fn scaling() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for m in [200, 400, 800] {
        let small = planted_points(m, dims(3, 2), m as u64).map_err(|e| e.to_string())?;
        let large = planted_points(2 * m, dims(3, 2), 2 * m as u64).map_err(|e| e.to_string())?;
        let t1 = learn_time(m, &small)?;
        let t2 = learn_time(2 * m, &large)?;
        let ratio = t2.as_secs_f64() / t1.as_secs_f64();
        ok &= ratio < 3.0;
        parts.push(format!("t({})/t({m}) = {ratio:.2}", 2 * m));
    }
    let msg = parts.join(", ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn map_specialization() -> Outcome {
    let mut dets = Vec::new();
    for h in [
        Hypergraph::complete(4, dims(4, 2)),
        Hypergraph::complete(5, dims(3, 2)),
    ] {
        let eh = h.expand();
        let decomposition = map_decomposition(&eh).map_err(|e| e.to_string())?;
        for c in 0..decomposition.maps {
            dets.push(integer_det(&specialized_map_matrix(&eh, &decomposition, c)));
        }
    }
    let msg = format!("determinants {dets:?}");
    if dets.len() == 5 && dets.iter().all(|d| d.abs() == 1) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("main-theorem agreement", main_theorem),
        ("K4 example", k4_example),
        ("tight but not rigid", g_dagger),
        ("sparsity oracle", sparsity_oracle),
        ("jacobian correctness", jacobian_correctness),
        ("plant and learn", plant_and_learn),
        ("lower bound", lower_bound),
        ("linear scaling", scaling),
        ("map specialization", map_specialization),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(msg) => println!("[PASS] {} {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] {} {name}: {msg}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
