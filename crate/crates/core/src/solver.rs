//! Fitted dictionary solves: given the hypergraph and the pins, find dictionary
//! points that put every pin on the span of its support.
//!
//! Damped Gauss-Newton from random restarts, over the reals or (realified)
//! over the complex numbers. Each pin contributes the `d - s` minors from
//! [`select_equations`] to the rank certificate at the solution.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{Dims, Hypergraph};
use crate::incidence::{check_pins, rank_deficiency, Dictionary, IncidenceError, Pin};
use crate::rigidity::{
    incidence_rows, jacobian_row, numeric_rank, MinorSelector, DEFAULT_REL_THRESHOLD,
};
use crate::ring::Complexes;
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no convergence after {restarts} restart(s) over the {field:?} field; best residual {best_residual:e}")]
    NoConvergence {
        best_residual: f64,
        restarts: usize,
        field: Field,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

impl From<IncidenceError> for SolveError {
    fn from(e: IncidenceError) -> Self {
        SolveError::DimensionMismatch(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub field: Field,
    pub restarts: usize,
    pub max_iters: usize,
    /// Target for the max pin residual.
    pub tol: f64,
    /// Initial Levenberg parameter.
    pub damping: f64,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            field: Field::Real,
            restarts: 100,
            max_iters: 200,
            tol: 1e-10,
            damping: 1e-3,
            seed: 0,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<(), SolveError> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(SolveError::InvalidOptions("tol must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(SolveError::InvalidOptions("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// The `d - s` minors kept per pin: the first `s - 1` columns plus one of the
/// remaining columns each.
pub fn select_equations(dims: Dims) -> Vec<MinorSelector> {
    let shared: Vec<usize> = (0..dims.s() - 1).collect();
    (dims.s() - 1..dims.coords())
        .map(|j| {
            let mut cols = shared.clone();
            cols.push(j);
            MinorSelector::new(cols)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Levenberg-damped Gauss-Newton

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonOptions {
    pub max_iters: usize,
    /// Stop once the Euclidean residual norm is at most this.
    pub tol: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonOutcome<S = Vec<f64>> {
    pub x: S,
    /// Euclidean norm of the residual at `x`.
    pub residual: f64,
    pub iters: usize,
}

/// Minimize `|r(x)|` with damping multiplied by 10 on rejected steps and
/// divided by 10 on accepted ones. `Err` carries the best iterate when the
/// tolerance is not reached.
pub fn gauss_newton<R, J>(
    residual_fn: R,
    jacobian_fn: J,
    x0: &[f64],
    opts: &GaussNewtonOptions,
) -> Result<GaussNewtonOutcome, GaussNewtonOutcome>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> DMatrix<f64>,
{
    gauss_newton_on(
        |x: &Vec<f64>| residual_fn(x),
        |x: &Vec<f64>| jacobian_fn(x),
        |x: &Vec<f64>, step: &DVector<f64>| x.iter().zip(step.iter()).map(|(a, b)| a + b).collect(),
        x0.to_vec(),
        opts,
    )
}

/// [`gauss_newton`] on a manifold: the Jacobian is taken in local
/// coordinates at `x` and `retract(x, step)` maps a step back to a state.
pub fn gauss_newton_on<S, R, J, M>(
    residual_fn: R,
    jacobian_fn: J,
    retract: M,
    x0: S,
    opts: &GaussNewtonOptions,
) -> Result<GaussNewtonOutcome<S>, GaussNewtonOutcome<S>>
where
    R: Fn(&S) -> Vec<f64>,
    J: Fn(&S) -> DMatrix<f64>,
    M: Fn(&S, &DVector<f64>) -> S,
{
    const MAX_DAMPING: f64 = 1e16;
    let mut x = x0;
    let mut r = DVector::from_vec(residual_fn(&x));
    let mut norm = r.norm();
    let mut lambda = opts.damping;
    let mut iters = 0;
    let mut jac = None;
    while norm > opts.tol && iters < opts.max_iters {
        iters += 1;
        let j: &DMatrix<f64> = jac.get_or_insert_with(|| jacobian_fn(&x));
        let jt = j.transpose();
        let mut normal = &jt * j;
        let grad = &jt * &r;
        for i in 0..normal.nrows() {
            normal[(i, i)] += lambda;
        }
        let Some(step) = normal.cholesky().map(|c| -c.solve(&grad)) else {
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                break;
            }
            continue;
        };
        let candidate = retract(&x, &step);
        let r_new = DVector::from_vec(residual_fn(&candidate));
        let new_norm = r_new.norm();
        if new_norm.is_finite() && new_norm < norm {
            x = candidate;
            r = r_new;
            norm = new_norm;
            lambda = (lambda / 10.0).max(1e-15);
            jac = None;
        } else {
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                break;
            }
        }
    }
    let outcome = GaussNewtonOutcome {
        x,
        residual: norm,
        iters,
    };
    if norm <= opts.tol {
        Ok(outcome)
    } else {
        Err(outcome)
    }
}

// ---------------------------------------------------------------------------
// Fitted solve

/// Dictionary points over the complex numbers; real solutions have zero
/// imaginary parts.
pub type ComplexPoints = Vec<Vec<Complex64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub field: Field,
    pub dict: ComplexPoints,
    /// Max pin residual at the solution.
    pub residual: f64,
    /// Rank of the selected-equation Jacobian over the free coordinates.
    pub jacobian_rank_at_solution: usize,
    pub free_coordinates: usize,
    pub equations: usize,
    pub restarts_used: usize,
    pub converged: bool,
}

impl SolveResult {
    /// Real parts of the dictionary.
    pub fn real_dictionary(&self) -> Dictionary {
        Dictionary {
            vectors: self
                .dict
                .iter()
                .map(|v| v.iter().map(|z| z.re).collect())
                .collect(),
        }
    }

    pub fn max_imaginary(&self) -> f64 {
        self.dict
            .iter()
            .flatten()
            .fold(0.0, |m: f64, z| m.max(z.im.abs()))
    }

    /// Full column rank over the free coordinates: the solution is locally isolated.
    pub fn locally_unique(&self) -> bool {
        self.jacobian_rank_at_solution == self.free_coordinates
    }
}

#[derive(Serialize)]
struct SolveResultJson {
    converged: bool,
    field: Field,
    residual: f64,
    rank: usize,
    restarts_used: usize,
    vectors: serde_json::Value,
}

impl Serialize for SolveResult {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SolveResultJson {
            converged: self.converged,
            field: self.field,
            residual: self.residual,
            rank: self.jacobian_rank_at_solution,
            restarts_used: self.restarts_used,
            vectors: points_json(&self.dict, self.field),
        }
        .serialize(serializer)
    }
}

/// Real points as plain arrays, complex points as `[re, im]` pairs.
pub fn points_json(points: &ComplexPoints, field: Field) -> serde_json::Value {
    match field {
        Field::Real => serde_json::json!(points
            .iter()
            .map(|v| v.iter().map(|z| z.re).collect::<Vec<_>>())
            .collect::<Vec<_>>()),
        Field::Complex => serde_json::json!(points
            .iter()
            .map(|v| v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
            .collect::<Vec<_>>()),
    }
}

pub fn to_complex(points: &[Vec<f64>]) -> ComplexPoints {
    points
        .iter()
        .map(|v| v.iter().map(|&x| Complex64::new(x, 0.0)).collect())
        .collect()
}

/// Max pin residual of complex dictionary points.
pub fn complex_residuals(h: &Hypergraph, pins: &[Pin], dict: &ComplexPoints) -> Vec<f64> {
    pins.iter()
        .enumerate()
        .map(|(k, pin)| {
            let x: Vec<Complex64> = pin.x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let rows = incidence_rows(&Complexes, h.edge(k), dict, &x);
            rank_deficiency(&rows)
        })
        .collect()
}

/// The incidence system restricted to free vertices.
///
/// Iteration runs in homogeneous coordinates: dictionary point `v` is the
/// unit vector along `(v, 1)`, and each step moves it in the affine chart of
/// its largest coordinate before renormalizing. Points drifting to infinity
/// in the data chart stay at unit scale. Each pin contributes `(I - P) y`,
/// with `y` its normalized homogeneous vector and `P` the projector onto the
/// linear span of its support. The selected minors are only used for the
/// rank certificate.
struct FittedSystem<'a> {
    h: &'a Hypergraph,
    pins: Vec<Vec<Complex64>>,
    /// Normalized homogeneous pins.
    lifted: Vec<DVector<Complex64>>,
    selectors: Vec<MinorSelector>,
    field: Field,
    /// Homogeneous fixed points, or `None` for free vertices.
    fixed: Vec<Option<DVector<Complex64>>>,
    /// Position of each vertex among the free ones.
    free_index: Vec<Option<usize>>,
    n_free: usize,
}

/// Homogeneous free points.
type State = Vec<DVector<Complex64>>;

/// Projection of one pin off its support span and the pieces of its derivative.
struct PinOffset {
    /// `(I - P) y`.
    r: DVector<Complex64>,
    /// Least-squares weights of `y` on the rows of `V`.
    a: DVector<Complex64>,
    /// `I - P`.
    q: DMatrix<Complex64>,
    /// `V^T G^-1`.
    u: DMatrix<Complex64>,
}

fn lift(p: &[Complex64]) -> DVector<Complex64> {
    let d = p.len() + 1;
    let w = DVector::from_fn(d, |i, _| {
        p.get(i).copied().unwrap_or(Complex64::new(1.0, 0.0))
    });
    let norm = w.norm();
    w / Complex64::new(norm, 0.0)
}

/// Index of the largest coordinate: the chart each step is taken in.
fn pivot(w: &DVector<Complex64>) -> usize {
    w.iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map_or(0, |(i, _)| i)
}

impl<'a> FittedSystem<'a> {
    fn new(
        h: &'a Hypergraph,
        pins: &[Pin],
        field: Field,
        fixed: Vec<Option<Vec<Complex64>>>,
    ) -> Self {
        let mut free_index = vec![None; h.n_vertices()];
        let mut n_free = 0;
        for (v, slot) in free_index.iter_mut().enumerate() {
            if fixed[v].is_none() {
                *slot = Some(n_free);
                n_free += 1;
            }
        }
        let pins: Vec<Vec<Complex64>> = pins
            .iter()
            .map(|p| p.x.iter().map(|&v| Complex64::new(v, 0.0)).collect())
            .collect();
        FittedSystem {
            h,
            lifted: pins.iter().map(|p| lift(p)).collect(),
            pins,
            selectors: select_equations(h.dims()),
            field,
            fixed: fixed.into_iter().map(|p| p.map(|p| lift(&p))).collect(),
            free_index,
            n_free,
        }
    }

    fn coords(&self) -> usize {
        self.h.dims().coords()
    }

    /// Free dictionary coordinates.
    fn n_coordinates(&self) -> usize {
        self.n_free * self.coords()
    }

    fn n_unknowns(&self) -> usize {
        match self.field {
            Field::Real => self.n_coordinates(),
            Field::Complex => 2 * self.n_coordinates(),
        }
    }

    /// Selected minors: the rows of the rank certificate.
    fn n_minor_equations(&self) -> usize {
        self.pins.len() * self.selectors.len()
    }

    /// State from chart coordinates: real parts first, then imaginary parts
    /// in complex mode.
    fn state(&self, u: &[f64]) -> State {
        let c = self.coords();
        let half = self.n_coordinates();
        (0..self.n_free)
            .map(|f| {
                let p: Vec<Complex64> = (0..c)
                    .map(|j| {
                        let im = match self.field {
                            Field::Real => 0.0,
                            Field::Complex => u[half + f * c + j],
                        };
                        Complex64::new(u[f * c + j], im)
                    })
                    .collect();
                lift(&p)
            })
            .collect()
    }

    fn point<'s>(&'s self, state: &'s State, v: usize) -> &'s DVector<Complex64> {
        match (&self.fixed[v], self.free_index[v]) {
            (Some(w), _) => w,
            (None, Some(f)) => &state[f],
            (None, None) => unreachable!("vertex is either fixed or free"),
        }
    }

    /// Chart coordinates; non-finite for points at infinity.
    fn assemble(&self, state: &State) -> ComplexPoints {
        let c = self.coords();
        (0..self.h.n_vertices())
            .map(|v| {
                let w = self.point(state, v);
                (0..c).map(|i| w[i] / w[c]).collect()
            })
            .collect()
    }

    /// `None` when the support points are linearly dependent.
    fn offset(&self, state: &State, k: usize) -> Option<PinOffset> {
        let support = self.h.edge(k);
        let d = self.coords() + 1;
        let y = &self.lifted[k];
        let v = DMatrix::from_fn(support.len(), d, |i, j| self.point(state, support[i])[j]);
        let g_inv = (&v * v.transpose()).try_inverse()?;
        let u = v.transpose() * g_inv;
        let a = u.transpose() * y;
        let q = DMatrix::identity(d, d) - &u * &v;
        let r = &q * y;
        Some(PinOffset { r, a, q, u })
    }

    /// Move every free point by its chart step and renormalize.
    fn retract(&self, state: &State, step: &DVector<f64>) -> State {
        let c = self.coords();
        let half = self.n_coordinates();
        state
            .iter()
            .enumerate()
            .map(|(f, w)| {
                let p = pivot(w);
                let mut next = w.clone();
                for (j, i) in (0..=c).filter(|&i| i != p).enumerate() {
                    let im = match self.field {
                        Field::Real => 0.0,
                        Field::Complex => step[half + f * c + j],
                    };
                    next[i] += Complex64::new(step[f * c + j], im);
                }
                let norm = next.norm();
                next / Complex64::new(norm, 0.0)
            })
            .collect()
    }

    fn realify_vec(&self, values: Vec<Complex64>) -> Vec<f64> {
        match self.field {
            Field::Real => values.iter().map(|z| z.re).collect(),
            Field::Complex => values
                .iter()
                .map(|z| z.re)
                .chain(values.iter().map(|z| z.im))
                .collect(),
        }
    }

    /// `A + iB` as `A` (real) or `[[A, -B], [B, A]]` (complex).
    fn realify_mat(&self, j: &DMatrix<Complex64>) -> DMatrix<f64> {
        let (r, c) = j.shape();
        match self.field {
            Field::Real => j.map(|z| z.re),
            Field::Complex => DMatrix::from_fn(2 * r, 2 * c, |i, k| {
                let z = j[(i % r, k % c)];
                match (i < r, k < c) {
                    (true, true) | (false, false) => z.re,
                    (true, false) => -z.im,
                    (false, true) => z.im,
                }
            }),
        }
    }

    fn minor_jacobian(&self, dict: &ComplexPoints) -> DMatrix<f64> {
        let c = self.coords();
        let mut j = DMatrix::<Complex64>::zeros(self.n_minor_equations(), self.n_coordinates());
        let mut r = 0;
        for (k, x) in self.pins.iter().enumerate() {
            let support = self.h.edge(k);
            let e = incidence_rows(&Complexes, support, dict, x);
            for sel in &self.selectors {
                for (col, val) in jacobian_row(&Complexes, support, &e, sel, c) {
                    if let Some(f) = self.free_index[col / c] {
                        j[(r, f * c + col % c)] = val;
                    }
                }
                r += 1;
            }
        }
        self.realify_mat(&j)
    }

    fn residual(&self, state: &State) -> Vec<f64> {
        let d = self.coords() + 1;
        let mut out = Vec::with_capacity(self.pins.len() * d);
        for k in 0..self.pins.len() {
            match self.offset(state, k) {
                Some(o) => out.extend(o.r.iter().copied()),
                None => out.extend(std::iter::repeat_n(Complex64::new(f64::NAN, 0.0), d)),
            }
        }
        self.realify_vec(out)
    }

    /// Holomorphic derivative of the projections in the step coordinates:
    /// moving support point `i` along `e_m` changes `r` by
    /// `-a_i Q e_m - r_m U e_i`.
    fn jacobian(&self, state: &State) -> DMatrix<f64> {
        let c = self.coords();
        let d = c + 1;
        let mut jac = DMatrix::<Complex64>::zeros(self.pins.len() * d, self.n_coordinates());
        for k in 0..self.pins.len() {
            let Some(o) = self.offset(state, k) else {
                continue;
            };
            for (pos, &v) in self.h.edge(k).iter().enumerate() {
                let Some(f) = self.free_index[v] else {
                    continue;
                };
                let p = pivot(&state[f]);
                for (j, m) in (0..d).filter(|&m| m != p).enumerate() {
                    for row in 0..d {
                        jac[(k * d + row, f * c + j)] =
                            -o.a[pos] * o.q[(row, m)] - o.r[m] * o.u[(row, pos)];
                    }
                }
            }
        }
        self.realify_mat(&jac)
    }

    /// Rank over the field of the selected-minor Jacobian in the free coordinates.
    fn minor_rank(&self, dict: &ComplexPoints) -> usize {
        let realified = numeric_rank(&self.minor_jacobian(dict), DEFAULT_REL_THRESHOLD).rank;
        match self.field {
            Field::Real => realified,
            Field::Complex => realified / 2,
        }
    }
}

/// Solve for the free dictionary points of `h` given its pins.
///
/// `fixed`, when given, has one entry per vertex; `Some` coordinates are held
/// fixed. A restart counts as converged when the max pin residual is at most
/// `opts.tol` and the selected-minor Jacobian has full rank
/// `min(equations, free coordinates)` there.
pub fn solve_fitted(
    h: &Hypergraph,
    pins: &[Pin],
    opts: &SolveOptions,
    fixed: Option<&[Option<Vec<Complex64>>]>,
) -> Result<SolveResult, SolveError> {
    opts.validate()?;
    check_pins(h, pins)?;
    let dims = h.dims();
    let n = h.n_vertices();
    let fixed: Vec<Option<Vec<Complex64>>> = match fixed {
        Some(f) => {
            if f.len() != n {
                return Err(SolveError::DimensionMismatch(format!(
                    "{} fixed entries for {n} vertices",
                    f.len()
                )));
            }
            if f.iter().flatten().any(|p| p.len() != dims.coords()) {
                return Err(SolveError::DimensionMismatch(
                    "fixed points need d-1 coordinates".into(),
                ));
            }
            f.to_vec()
        }
        None => vec![None; n],
    };
    let sys = FittedSystem::new(h, pins, opts.field, fixed);
    let n_unknowns = sys.n_unknowns();
    let free_coordinates = sys.n_coordinates();
    let equations = sys.n_minor_equations();
    let full_rank = equations.min(free_coordinates);
    let gn = GaussNewtonOptions {
        max_iters: opts.max_iters,
        tol: opts.tol * 1e-3,
        damping: opts.damping,
    };
    let mut best = f64::INFINITY;
    for restart in 0..opts.restarts {
        let mut rng = seed::rng(seed::derive(opts.seed, "restart", restart as u64));
        let x0: Vec<f64> = (0..n_unknowns)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let outcome = match gauss_newton_on(
            |w| sys.residual(w),
            |w| sys.jacobian(w),
            |w, step| sys.retract(w, step),
            sys.state(&x0),
            &gn,
        ) {
            Ok(o) | Err(o) => o,
        };
        let dict = sys.assemble(&outcome.x);
        let residual = complex_residuals(h, pins, &dict)
            .into_iter()
            .fold(0.0, f64::max);
        if !residual.is_finite() {
            continue;
        }
        let rank = sys.minor_rank(&dict);
        if rank == full_rank {
            if residual <= opts.tol {
                return Ok(SolveResult {
                    field: opts.field,
                    dict,
                    residual,
                    jacobian_rank_at_solution: rank,
                    free_coordinates,
                    equations,
                    restarts_used: restart + 1,
                    converged: true,
                });
            }
            best = best.min(residual);
        }
    }
    Err(SolveError::NoConvergence {
        best_residual: best,
        restarts: opts.restarts,
        field: opts.field,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub tol: f64,
    pub max: f64,
    pub per_pin: Vec<f64>,
}

/// Recompute every pin residual for a candidate (possibly complex) dictionary.
pub fn verify_solution_complex(
    h: &Hypergraph,
    pins: &[Pin],
    dict: &ComplexPoints,
    tol: f64,
) -> Result<VerifyReport, SolveError> {
    check_pins(h, pins)?;
    if dict.len() != h.n_vertices() || dict.iter().any(|v| v.len() != h.dims().coords()) {
        return Err(SolveError::DimensionMismatch(format!(
            "dictionary has {} vectors, hypergraph has {} vertices of dimension {}",
            dict.len(),
            h.n_vertices(),
            h.dims().coords()
        )));
    }
    let per_pin = complex_residuals(h, pins, dict);
    let max = per_pin.iter().copied().fold(0.0, f64::max);
    Ok(VerifyReport {
        pass: max <= tol,
        tol,
        max,
        per_pin,
    })
}

pub fn verify_solution(
    h: &Hypergraph,
    pins: &[Pin],
    dict: &Dictionary,
    tol: f64,
) -> Result<VerifyReport, SolveError> {
    verify_solution_complex(h, pins, &to_complex(&dict.vectors), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::incidence::random_framework;

    fn dims(d: usize, s: usize) -> Dims {
        Dims::new(d, s).unwrap()
    }

    fn sel(cols: &[usize]) -> MinorSelector {
        MinorSelector::new(cols.to_vec())
    }

    #[test]
    fn equation_selection() {
        assert_eq!(
            select_equations(dims(4, 2)),
            vec![sel(&[0, 1]), sel(&[0, 2])]
        );
        assert_eq!(select_equations(dims(3, 2)), vec![sel(&[0, 1])]);
        assert_eq!(
            select_equations(dims(5, 3)),
            vec![sel(&[0, 1, 2]), sel(&[0, 1, 3])]
        );
        for (d, s) in [(5, 2), (6, 4)] {
            assert_eq!(select_equations(dims(d, s)).len(), d - s);
        }
    }

    #[test]
    fn scalar_newton() {
        let opts = GaussNewtonOptions {
            max_iters: 200,
            tol: 1e-10,
            damping: 1e-3,
        };
        let out = gauss_newton(
            |x| vec![x[0] * x[0] - 4.0],
            |x| DMatrix::from_element(1, 1, 2.0 * x[0]),
            &[1.0],
            &opts,
        )
        .unwrap();
        assert!((out.x[0] - 2.0).abs() < 1e-9);
        assert!(out.residual < 1e-10);

        let out = gauss_newton(
            |x| vec![x[0] * x[0] - 4.0],
            |x| DMatrix::from_element(1, 1, 2.0 * x[0]),
            &[2.0],
            &opts,
        )
        .unwrap();
        assert_eq!(out.iters, 0);

        let err = gauss_newton(
            |x| vec![x[0], x[0] - 1.0],
            |_| DMatrix::from_element(2, 1, 1.0),
            &[3.0],
            &opts,
        )
        .unwrap_err();
        assert!((err.residual - 0.5f64.sqrt()).abs() < 1e-9);
        assert!((err.x[0] - 0.5).abs() < 1e-9);
    }

    fn system<'a>(h: &'a Hypergraph, pins: &[Pin], field: Field) -> FittedSystem<'a> {
        FittedSystem::new(h, pins, field, vec![None; h.n_vertices()])
    }

    #[test]
    fn offset_jacobian_matches_differences() {
        for (d, s) in [(3, 2), (4, 3), (5, 3), (5, 4)] {
            let h = Hypergraph::complete(s + 2, dims(d, s));
            let fw = random_framework(&h, 5);
            for field in [Field::Real, Field::Complex] {
                let sys = system(&h, fw.pins(), field);
                let mut rng = seed::rng(9);
                let u: Vec<f64> = (0..sys.n_unknowns())
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                let state = sys.state(&u);
                let j = sys.jacobian(&state);
                let h_step = 1e-6;
                for c in 0..u.len() {
                    let mut e = DVector::zeros(u.len());
                    e[c] = h_step;
                    let rp = sys.residual(&sys.retract(&state, &e));
                    let rm = sys.residual(&sys.retract(&state, &-e));
                    for r in 0..rp.len() {
                        let fd = (rp[r] - rm[r]) / (2.0 * h_step);
                        assert!(
                            (fd - j[(r, c)]).abs() < 1e-6,
                            "d={d} s={s} {field:?} ({r},{c}): {fd} vs {}",
                            j[(r, c)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn block_line_intersection() {
        // vertex 0 free, b1 = (0,0) and b2 = (1,0) fixed
        let h = Hypergraph::new(3, dims(3, 2), vec![vec![0, 1], vec![0, 2]]).unwrap();
        let pins = vec![
            Pin {
                edge: 0,
                x: vec![0.5, 0.5],
            },
            Pin {
                edge: 1,
                x: vec![1.0, 0.5],
            },
        ];
        let fixed = vec![
            None,
            Some(vec![Complex64::new(0.0, 0.0); 2]),
            Some(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]),
        ];
        let res = solve_fitted(&h, &pins, &SolveOptions::default(), Some(&fixed)).unwrap();
        let v = &res.dict[0];
        assert!((v[0].re - 1.0).abs() < 1e-10 && (v[1].re - 1.0).abs() < 1e-10);
        assert!(res.residual < 1e-12);
        assert!(res.locally_unique());
    }

    #[test]
    fn planted_k5() {
        let k5 = Hypergraph::complete(5, dims(3, 2));
        let fw = random_framework(&k5, 17);
        let res = solve_fitted(&k5, fw.pins(), &SolveOptions::default(), None).unwrap();
        assert!(res.converged && res.residual < 1e-8);
        assert!(res.locally_unique());
        let check = verify_solution(&k5, fw.pins(), &res.real_dictionary(), 1e-8).unwrap();
        assert!(check.pass);
        let again = solve_fitted(&k5, fw.pins(), &SolveOptions::default(), None).unwrap();
        assert_eq!(res, again);
    }

    #[test]
    fn verify_reports() {
        let k4 = Hypergraph::complete(4, dims(4, 2));
        let fw = random_framework(&k4, 2);
        let ok = verify_solution(&k4, fw.pins(), fw.dictionary(), 1e-8).unwrap();
        assert!(ok.pass);
        let mut bad = fw.dictionary().clone();
        bad.vectors[0][1] += 1e-3;
        let r = verify_solution(&k4, fw.pins(), &bad, 1e-8).unwrap();
        assert!(!r.pass);
        assert!(r.max > 1e-6 && r.max < 1e-2, "{}", r.max);
        bad.vectors.pop();
        assert!(matches!(
            verify_solution(&k4, fw.pins(), &bad, 1e-8),
            Err(SolveError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn options_validated() {
        let h = Hypergraph::complete(4, dims(4, 2));
        let fw = random_framework(&h, 2);
        let opts = SolveOptions {
            restarts: 0,
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve_fitted(&h, fw.pins(), &opts, None),
            Err(SolveError::InvalidOptions(_))
        ));
    }

    #[test]
    fn result_json_shape() {
        let r = SolveResult {
            field: Field::Complex,
            dict: vec![vec![Complex64::new(1.0, 2.0)]],
            residual: 0.0,
            jacobian_rank_at_solution: 1,
            free_coordinates: 1,
            equations: 1,
            restarts_used: 1,
            converged: true,
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["field"], "complex");
        assert_eq!(v["vectors"], serde_json::json!([[[1.0, 2.0]]]));
        assert_eq!(v["rank"], 1);
    }
}
