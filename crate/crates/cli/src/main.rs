//! `pinrig`: JSON-reporting front end for pinned rigidity checks, fitted
//! solves and dictionary learning.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pinned_rigidity::hypergraph::{Dims, Hypergraph, HypergraphFile};
use pinned_rigidity::incidence::{
    random_framework, random_sphere_points, Dictionary, Framework, PinsFile,
};
use pinned_rigidity::learn::{
    learn_dictionary, learn_from_homogeneous, planted_points, LearnOptions,
};
use pinned_rigidity::rigidity::{
    jacobian, modular_generic_rank, numeric_rank, verify_main_theorem, DEFAULT_REL_THRESHOLD,
    DEFAULT_TRIALS,
};
use pinned_rigidity::seed;
use pinned_rigidity::solver::{solve_fitted, Field, SolveOptions};
use pinned_rigidity::sparsity::{check_rigidity_combinatorial, random_tight_hypergraph};
use pinned_rigidity::Error;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Parser, Debug)]
#[command(
    name = "pinrig",
    version,
    about = "Generic rigidity of pinned subspace-incidence systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format; only `json` is supported.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FieldArg {
    Real,
    Complex,
}

impl From<FieldArg> for Field {
    fn from(f: FieldArg) -> Self {
        match f {
            FieldArg::Real => Field::Real,
            FieldArg::Complex => Field::Complex,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Combinatorial verdict of a hypergraph file.
    Check {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Modular generic rank of a graph, or float rank of a framework.
    Rank {
        #[arg(long)]
        graph: PathBuf,
        /// Pins file; with `--dict` switches to the float rank of the framework.
        #[arg(long, requires = "dict")]
        pins: Option<PathBuf>,
        #[arg(long, requires = "pins")]
        dict: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long)]
        prime: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare combinatorial and generic-rank verdicts on random tight graphs.
    VerifyTheorem {
        #[command(flatten)]
        dims: DimsArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long)]
        prime: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fitted solve: dictionary for a hypergraph and its pins.
    Solve {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        pins: PathBuf,
        #[command(flatten)]
        solve: SolveArgs,
        /// Write the dictionary here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn a hypergraph and dictionary from unlabeled points.
    Learn {
        #[command(flatten)]
        dims: DimsArgs,
        /// Points file `{"points": [...]}` with `d - 1` (chart) or `d`
        /// (homogeneous) coordinates per point.
        #[arg(long)]
        pins: PathBuf,
        #[command(flatten)]
        solve: SolveArgs,
        /// Write the learned hypergraph and dictionary here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate instances.
    Gen {
        #[command(subcommand)]
        what: GenCommand,
    },
    /// Learn wall time on planted data at doubling sizes.
    Bench {
        #[command(flatten)]
        dims: DimsArgs,
        /// Smallest number of points.
        #[arg(long, default_value_t = 200)]
        m: usize,
        /// Number of sizes: m, 2m, 4m, ...
        #[arg(long, default_value_t = 3)]
        trials: usize,
        #[command(flatten)]
        solve: SolveArgs,
    },
}

#[derive(Subcommand, Debug)]
enum GenCommand {
    /// Random minimally rigid hypergraph with distinct supports.
    Graph {
        #[command(flatten)]
        dims: DimsArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pins on a hypergraph from a random hidden dictionary.
    Framework {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the pins file here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chart points planted on the hypergraph `learn` constructs for `m`.
    Planted {
        #[command(flatten)]
        dims: DimsArgs,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uniform points on the unit sphere in `R^d`.
    Sphere {
        #[command(flatten)]
        dims: DimsArgs,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct DimsArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    s: usize,
}

#[derive(Args, Debug, Clone, Copy)]
struct SolveArgs {
    #[arg(long, value_enum, default_value_t = FieldArg::Real)]
    field: FieldArg,
    #[arg(long, default_value_t = SolveOptions::default().restarts)]
    restarts: usize,
    #[arg(long, default_value_t = SolveOptions::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolveArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            field: self.field.into(),
            restarts: self.restarts,
            tol: self.tol,
            seed: self.seed,
            ..SolveOptions::default()
        }
    }
}

/// Failure of a command, split by exit code.
enum Failure {
    /// Exit 1.
    Domain(Error),
    /// Exit 2: unreadable or malformed input, bad flag values.
    Usage { kind: &'static str, message: String },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

fn usage(kind: &'static str, message: impl ToString) -> Failure {
    Failure::Usage {
        kind,
        message: message.to_string(),
    }
}

fn domain(e: impl Into<Error>) -> Failure {
    Failure::Domain(e.into())
}

fn error_kind(e: &Error) -> &'static str {
    use pinned_rigidity::learn::LearnError;
    use pinned_rigidity::solver::SolveError;
    match e {
        Error::Hypergraph(_) => "Hypergraph",
        Error::Sparsity(_) => "Sparsity",
        Error::Incidence(_) => "Incidence",
        Error::Rigidity(_) => "Rigidity",
        Error::Solve(SolveError::NoConvergence { .. }) => "NoConvergence",
        Error::Solve(_) => "Solve",
        Error::Learn(LearnError::NoConvergence { .. }) => "NoConvergence",
        Error::Learn(LearnError::Solve(SolveError::NoConvergence { .. })) => "NoConvergence",
        Error::Learn(_) => "Learn",
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage("Io", format!("{}: {e}", path.display())))
}

fn read_graph(path: &Path) -> Result<Hypergraph, Failure> {
    Hypergraph::from_json(&read(path)?)
        .map_err(|e| usage("Parse", format!("{}: {e}", path.display())))
}

fn read_pins(path: &Path) -> Result<PinsFile, Failure> {
    PinsFile::from_json(&read(path)?)
        .map_err(|e| usage("Parse", format!("{}: {e}", path.display())))
}

fn read_points(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Points {
        points: Vec<Vec<f64>>,
    }
    serde_json::from_str::<Points>(&read(path)?)
        .map(|p| p.points)
        .map_err(|e| usage("Parse", format!("{}: {e}", path.display())))
}

fn write(path: &Option<PathBuf>, value: &impl Serialize) -> Result<(), Failure> {
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        std::fs::write(path, text + "\n")
            .map_err(|e| usage("Io", format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn dims(args: DimsArgs) -> Result<Dims, Failure> {
    Dims::new(args.d, args.s).map_err(|e| usage("InvalidArgument", e))
}

fn object(value: impl Serialize) -> Map<String, Value> {
    match serde_json::to_value(value).expect("payload serializes") {
        Value::Object(map) => map,
        other => Map::from_iter([("result".to_string(), other)]),
    }
}

fn seed_of(command: &Command) -> Option<u64> {
    match command {
        Command::Check { .. } => None,
        Command::Rank { seed, .. } | Command::VerifyTheorem { seed, .. } => Some(*seed),
        Command::Solve { solve, .. }
        | Command::Learn { solve, .. }
        | Command::Bench { solve, .. } => Some(solve.seed),
        Command::Gen { what } => match what {
            GenCommand::Graph { seed, .. }
            | GenCommand::Framework { seed, .. }
            | GenCommand::Planted { seed, .. }
            | GenCommand::Sphere { seed, .. } => Some(*seed),
        },
    }
}

fn name_of(command: &Command) -> &'static str {
    match command {
        Command::Check { .. } => "check",
        Command::Rank { .. } => "rank",
        Command::VerifyTheorem { .. } => "verify-theorem",
        Command::Solve { .. } => "solve",
        Command::Learn { .. } => "learn",
        Command::Gen { what } => match what {
            GenCommand::Graph { .. } => "gen graph",
            GenCommand::Framework { .. } => "gen framework",
            GenCommand::Planted { .. } => "gen planted",
            GenCommand::Sphere { .. } => "gen sphere",
        },
        Command::Bench { .. } => "bench",
    }
}

fn run(command: &Command) -> Result<Map<String, Value>, Failure> {
    match command {
        Command::Check { graph } => {
            let h = read_graph(graph)?;
            let mut out = object(check_rigidity_combinatorial(&h));
            out.insert("counts".into(), json!(h.tightness_counts()));
            out.insert("repeated_supports".into(), json!(h.repeated_supports()));
            Ok(out)
        }
        Command::Rank {
            graph,
            pins,
            dict,
            trials,
            prime,
            seed,
        } => {
            let h = read_graph(graph)?;
            let dims = h.dims();
            let mut out = Map::new();
            out.insert("rigid_target".into(), json!(h.n_vertices() * dims.coords()));
            out.insert(
                "independent_target".into(),
                json!(h.n_edges() * dims.copies()),
            );
            let report = match (pins, dict) {
                (Some(pins), Some(dict)) => {
                    let pins = read_pins(pins)?.pins;
                    let dict =
                        Dictionary::from_json(&read(dict)?).map_err(|e| usage("Parse", e))?;
                    let fw = Framework::new(h, pins, dict).map_err(domain)?;
                    numeric_rank(&jacobian(&fw).entries, DEFAULT_REL_THRESHOLD)
                }
                _ => modular_generic_rank(&h, *seed, *prime, *trials).map_err(domain)?,
            };
            out.insert("rank".into(), json!(report));
            Ok(out)
        }
        Command::VerifyTheorem {
            dims: d,
            n,
            trials,
            prime,
            seed,
        } => {
            let dims = dims(*d)?;
            let results: Vec<_> = (0..*trials as u64)
                .into_par_iter()
                .map(|t| {
                    let h = random_tight_hypergraph(*n, dims, seed::derive(*seed, "graph", t))?;
                    let report = verify_main_theorem(
                        &h,
                        DEFAULT_TRIALS,
                        seed::derive(*seed, "verify", t),
                        *prime,
                    )?;
                    Ok::<_, Error>((h, report))
                })
                .collect::<Result<_, _>>()
                .map_err(Failure::Domain)?;
            let agree = results.iter().filter(|(_, r)| r.agree).count();
            let disagreements: Vec<Value> = results
                .iter()
                .enumerate()
                .filter(|(_, (_, r))| !r.agree)
                .map(|(t, (h, r))| {
                    json!({
                        "trial": t,
                        "hypergraph": HypergraphFile::from(h),
                        "combinatorial": r.combinatorial,
                        "rank": r.numeric.rank,
                        "rigid_target": r.numeric.rigid_target,
                    })
                })
                .collect();
            Ok(object(json!({
                "agreement": format!("{agree}/{trials}"),
                "agree": agree,
                "total": trials,
                "disagreements": disagreements,
            })))
        }
        Command::Solve {
            graph,
            pins,
            solve,
            out,
        } => {
            let h = read_graph(graph)?;
            let pins = read_pins(pins)?.pins;
            let result = solve_fitted(&h, &pins, &solve.options(), None).map_err(domain)?;
            let payload = object(&result);
            write(out, &json!({ "vectors": payload["vectors"] }))?;
            Ok(payload)
        }
        Command::Learn {
            dims: d,
            pins,
            solve,
            out,
        } => {
            let dims = dims(*d)?;
            let points = read_points(pins)?;
            let opts = LearnOptions {
                solve: solve.options(),
                ..LearnOptions::default()
            };
            let homogeneous = points.first().is_some_and(|p| p.len() == dims.d());
            let result = if homogeneous {
                learn_from_homogeneous(&points, dims, &opts, solve.seed)
            } else {
                learn_dictionary(&points, dims, &opts, solve.seed)
            }
            .map_err(domain)?;
            write(out, &result)?;
            Ok(object(&result))
        }
        Command::Gen { what } => gen(what),
        Command::Bench {
            dims: d,
            m,
            trials,
            solve,
        } => {
            let dims = dims(*d)?;
            let opts = LearnOptions {
                solve: solve.options(),
                ..LearnOptions::default()
            };
            let mut runs = Vec::new();
            for i in 0..*trials {
                let m = m << i;
                let points = planted_points(m, dims, solve.seed).map_err(domain)?;
                let start = Instant::now();
                let result = learn_dictionary(&points, dims, &opts, solve.seed).map_err(domain)?;
                runs.push(json!({
                    "m": m,
                    "n": result.n(),
                    "residual": result.residual,
                    "ms": start.elapsed().as_secs_f64() * 1e3,
                }));
            }
            let ratios: Vec<f64> = runs
                .windows(2)
                .map(|w| w[1]["ms"].as_f64().unwrap() / w[0]["ms"].as_f64().unwrap())
                .collect();
            Ok(object(json!({ "runs": runs, "ratios": ratios })))
        }
    }
}

fn gen(what: &GenCommand) -> Result<Map<String, Value>, Failure> {
    match what {
        GenCommand::Graph {
            dims: d,
            n,
            seed,
            out,
        } => {
            let h = random_tight_hypergraph(*n, dims(*d)?, *seed).map_err(domain)?;
            let file = HypergraphFile::from(&h);
            write(out, &file)?;
            Ok(object(json!({ "hypergraph": file })))
        }
        GenCommand::Framework { graph, seed, out } => {
            let h = read_graph(graph)?;
            let (h, pins, dict) = random_framework(&h, *seed).into_parts();
            let pins = PinsFile { pins };
            write(out, &pins)?;
            Ok(object(json!({
                "hypergraph": HypergraphFile::from(&h),
                "pins": pins.pins,
                "dictionary": dict,
            })))
        }
        GenCommand::Planted {
            dims: d,
            m,
            seed,
            out,
        } => {
            let points = planted_points(*m, dims(*d)?, *seed).map_err(domain)?;
            let file = json!({ "points": points });
            write(out, &file)?;
            Ok(object(file))
        }
        GenCommand::Sphere {
            dims: d,
            m,
            seed,
            out,
        } => {
            let points = random_sphere_points(*m, dims(*d)?.d(), *seed);
            let file = json!({ "points": points });
            write(out, &file)?;
            Ok(object(file))
        }
    }
}

fn emit(report: Map<String, Value>) {
    use std::io::Write;
    // a closed pipe on the reader's side is not an error of ours
    let _ = writeln!(std::io::stdout(), "{}", Value::Object(report));
}

fn header(command: &str, seed: Option<u64>, argv: &[String]) -> Map<String, Value> {
    Map::from_iter([
        ("command".to_string(), json!(command)),
        ("argv".to_string(), json!(argv)),
        ("seed".to_string(), json!(seed)),
        ("version".to_string(), json!(env!("CARGO_PKG_VERSION"))),
    ])
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // help and version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let mut report = header("", None, &argv[1..]);
            report.insert(
                "error".into(),
                json!({ "kind": "Usage", "message": e.kind().to_string(), "detail": e.to_string() }),
            );
            emit(report);
            return ExitCode::from(2);
        }
    };
    let name = name_of(&cli.command);
    let mut report = header(name, seed_of(&cli.command), &argv[1..]);
    let start = Instant::now();
    let outcome = match cli.threads {
        Some(threads) => match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| run(&cli.command)),
            Err(e) => Err(usage("InvalidArgument", e)),
        },
        None => run(&cli.command),
    };
    report.insert(
        "timing_ms".into(),
        json!(start.elapsed().as_secs_f64() * 1e3),
    );
    let code = match outcome {
        Ok(payload) => {
            report.extend(payload);
            0
        }
        Err(Failure::Domain(e)) => {
            report.insert(
                "error".into(),
                json!({ "kind": error_kind(&e), "message": e.to_string() }),
            );
            1
        }
        Err(Failure::Usage { kind, message }) => {
            report.insert("error".into(), json!({ "kind": kind, "message": message }));
            2
        }
    };
    emit(report);
    ExitCode::from(code)
}
