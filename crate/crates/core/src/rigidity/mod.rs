//! The rigidity matrix: the Jacobian of the incidence minors with respect to
//! the dictionary coordinates.
//!
//! Each pin contributes one row per `s`-subset `C` of the `d - 1` chart
//! coordinates. The row is the gradient of `det(E[., C])`; by multilinearity
//! the entry for support vertex `i` and coordinate `j in C` is the signed
//! cofactor of `E[i, j]`, and every other entry is zero.

mod certificate;
mod modular;

pub use certificate::{
    map_matrix, pure_condition_certificate, specialized_map_matrix, GenericityCertificate,
    RowChoice, CERTIFICATE_THRESHOLD,
};
pub use modular::{
    default_prime, modular_generic_rank, rigidity_verdict_numeric, verify_main_theorem,
    AgreementReport, NumericVerdict, DEFAULT_TRIALS,
};

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{subsets, Dims, Hypergraph};
use crate::incidence::Framework;
use crate::ring::{laplace_det, Reals, Ring};

/// Relative singular-value cutoff for float rank.
pub const DEFAULT_REL_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RigidityError {
    #[error("normalizer vanishes for every column of the selector: framework is not generic")]
    DegenerateNormalizer,
    #[error("{0} is not a usable prime (need a prime in (2^20, 2^63))")]
    BadPrime(u64),
    #[error("hypergraph is not minimally rigid ({0})")]
    NotMinimallyRigid(String),
    #[error("row selection matching failed for edge {edge}")]
    MatchingFailed { edge: usize },
}

/// Strictly increasing set of `s` chart coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MinorSelector(Vec<usize>);

impl MinorSelector {
    pub fn new(mut columns: Vec<usize>) -> Self {
        columns.sort_unstable();
        columns.dedup();
        Self(columns)
    }

    pub fn columns(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn position(&self, j: usize) -> Option<usize> {
        self.0.binary_search(&j).ok()
    }
}

/// All `C(d-1, s)` selectors in lexicographic order.
pub fn all_selectors(dims: Dims) -> Vec<MinorSelector> {
    subsets(dims.coords(), dims.s())
        .into_iter()
        .map(MinorSelector)
        .collect()
}

/// `det(E[., cols])` for the incidence matrix `e`.
pub fn minor_value<R: Ring>(ring: &R, e: &[Vec<R::Elem>], cols: &[usize]) -> R::Elem {
    let sub: Vec<Vec<R::Elem>> = e
        .iter()
        .map(|row| cols.iter().map(|&c| row[c]).collect())
        .collect();
    laplace_det(ring, &sub)
}

/// Cofactors of `E[., cols]`: entry `[q][p]` is the derivative of the minor
/// with respect to `E[q, cols[p]]`.
pub fn minor_gradient<R: Ring>(ring: &R, e: &[Vec<R::Elem>], cols: &[usize]) -> Vec<Vec<R::Elem>> {
    let s = e.len();
    (0..s)
        .map(|q| {
            (0..cols.len())
                .map(|p| {
                    let sub: Vec<Vec<R::Elem>> = (0..s)
                        .filter(|&r| r != q)
                        .map(|r| {
                            cols.iter()
                                .enumerate()
                                .filter(|&(pp, _)| pp != p)
                                .map(|(_, &c)| e[r][c])
                                .collect()
                        })
                        .collect();
                    let det = laplace_det(ring, &sub);
                    if (q + p) % 2 == 0 {
                        det
                    } else {
                        ring.neg(det)
                    }
                })
                .collect()
        })
        .collect()
}

/// Incidence matrix rows `v_i - x` over any ring.
pub fn incidence_rows<R: Ring>(
    ring: &R,
    support: &[usize],
    dict: &[Vec<R::Elem>],
    x: &[R::Elem],
) -> Vec<Vec<R::Elem>> {
    support
        .iter()
        .map(|&v| {
            dict[v]
                .iter()
                .zip(x)
                .map(|(&a, &b)| ring.sub(a, b))
                .collect()
        })
        .collect()
}

/// One Jacobian row as sparse `(column, value)` pairs; column of vertex `v`,
/// coordinate `j` is `v * (d-1) + j`.
pub fn jacobian_row<R: Ring>(
    ring: &R,
    support: &[usize],
    e: &[Vec<R::Elem>],
    selector: &MinorSelector,
    coords: usize,
) -> Vec<(usize, R::Elem)> {
    let grad = minor_gradient(ring, e, selector.columns());
    let mut out = Vec::with_capacity(support.len() * selector.columns().len());
    for (q, &v) in support.iter().enumerate() {
        for (p, &j) in selector.columns().iter().enumerate() {
            out.push((v * coords + j, grad[q][p]));
        }
    }
    out
}

/// Dense Jacobian over a ring: rows ordered by pin, then selector.
pub fn jacobian_over<R: Ring>(
    ring: &R,
    h: &Hypergraph,
    dict: &[Vec<R::Elem>],
    pins: &[Vec<R::Elem>],
    selectors: &[MinorSelector],
) -> Vec<Vec<R::Elem>> {
    let coords = h.dims().coords();
    let ncols = h.n_vertices() * coords;
    let mut rows = Vec::with_capacity(pins.len() * selectors.len());
    for (k, x) in pins.iter().enumerate() {
        let support = h.edge(k);
        let e = incidence_rows(ring, support, dict, x);
        for sel in selectors {
            let mut row = vec![ring.zero(); ncols];
            for (c, val) in jacobian_row(ring, support, &e, sel, coords) {
                row[c] = val;
            }
            rows.push(row);
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub vertex: usize,
    pub coordinate: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub pin: usize,
    pub selector: MinorSelector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidityMatrix {
    pub entries: DMatrix<f64>,
    pub row_meta: Vec<RowMeta>,
    pub column_meta: Vec<ColumnMeta>,
}

impl RigidityMatrix {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.entries.row(i).iter().copied().collect()
    }
}

/// Full Jacobian: `m * C(d-1, s)` rows by `n (d-1)` columns.
pub fn jacobian(fw: &Framework) -> RigidityMatrix {
    let h = fw.hypergraph();
    let dims = fw.dims();
    let selectors = all_selectors(dims);
    let pins: Vec<Vec<f64>> = fw.pins().iter().map(|p| p.x.clone()).collect();
    let rows = jacobian_over(&Reals, h, &fw.dictionary().vectors, &pins, &selectors);
    let ncols = h.n_vertices() * dims.coords();
    let entries = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    let row_meta = (0..pins.len())
        .flat_map(|pin| {
            selectors.iter().map(move |sel| RowMeta {
                pin,
                selector: sel.clone(),
            })
        })
        .collect();
    let column_meta = (0..ncols)
        .map(|c| ColumnMeta {
            vertex: c / dims.coords(),
            coordinate: c % dims.coords(),
        })
        .collect();
    RigidityMatrix {
        entries,
        row_meta,
        column_meta,
    }
}

/// A Jacobian row divided by `sum_i V_{i, j*}`, with its factorization
/// `entry(i, j) = delta_j * b_j * a_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedRow {
    /// Full-width normalized row.
    pub row: Vec<f64>,
    /// One weight per support vertex, summing to one.
    pub a: Vec<f64>,
    /// One factor per selector column; `b[j*] = 1`.
    pub b: Vec<f64>,
    pub j_star: usize,
    pub normalizer: f64,
    /// `V_{i,j}` per support vertex and selector column (sign of the column removed).
    pub volumes: Vec<Vec<f64>>,
}

pub fn simplified_row(
    fw: &Framework,
    pin_id: usize,
    selector: &MinorSelector,
) -> Result<SimplifiedRow, RigidityError> {
    let dims = fw.dims();
    let coords = dims.coords();
    let support = fw.hypergraph().edge(pin_id);
    let e = incidence_rows(
        &Reals,
        support,
        &fw.dictionary().vectors,
        &fw.pins()[pin_id].x,
    );
    let grad = minor_gradient(&Reals, &e, selector.columns());
    let ncols = selector.columns().len();
    // Undo delta: V_{i,j} = (-1)^p * entry for column position p.
    let volumes: Vec<Vec<f64>> = grad
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(p, &v)| if p % 2 == 0 { v } else { -v })
                .collect()
        })
        .collect();
    let sums: Vec<f64> = (0..ncols)
        .map(|p| volumes.iter().map(|r| r[p]).sum())
        .collect();
    let scale = volumes.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let (j_star, &normalizer) = sums
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("selector is nonempty");
    if scale == 0.0 || normalizer.abs() <= 1e-12 * scale {
        return Err(RigidityError::DegenerateNormalizer);
    }
    let a: Vec<f64> = volumes.iter().map(|r| r[j_star] / normalizer).collect();
    let b: Vec<f64> = sums.iter().map(|s| s / normalizer).collect();
    let mut row = vec![0.0; fw.hypergraph().n_vertices() * coords];
    for (q, &v) in support.iter().enumerate() {
        for (p, &j) in selector.columns().iter().enumerate() {
            row[v * coords + j] = grad[q][p] / normalizer;
        }
    }
    Ok(SimplifiedRow {
        row,
        a,
        b,
        j_star: selector.columns()[j_star],
        normalizer,
        volumes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    Float,
    Modular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    pub method: RankMethod,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prime: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threshold: Option<f64>,
    pub trials: usize,
    /// Rank found in each trial (one entry for the float method).
    pub per_trial: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
}

/// Count of singular values above `rel_threshold * sigma_max`.
pub fn numeric_rank(matrix: &DMatrix<f64>, rel_threshold: f64) -> RankReport {
    let rank = if matrix.is_empty() {
        0
    } else {
        let sv = matrix.singular_values();
        let top = sv.iter().copied().fold(0.0, f64::max);
        if top == 0.0 {
            0
        } else {
            sv.iter().filter(|&&v| v > rel_threshold * top).count()
        }
    };
    RankReport {
        rank,
        method: RankMethod::Float,
        prime: None,
        seed: None,
        threshold: Some(rel_threshold),
        trials: 1,
        per_trial: vec![rank],
        rows: matrix.nrows(),
        cols: matrix.ncols(),
    }
}

pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Max relative error between central differences of every minor and the
/// analytic Jacobian, over entries with magnitude above `1e-9`.
///
/// Minors are recomputed exactly in rational arithmetic by Gaussian
/// elimination, independent of the cofactor expansion used for the Jacobian,
/// so the difference quotient carries no cancellation error.
pub fn finite_difference_check(fw: &Framework, step: f64) -> f64 {
    let jac = jacobian(fw);
    let coords = fw.dims().coords();
    let h = fw.hypergraph();
    let exact = |v: f64| BigRational::from_float(v).expect("finite coordinate");
    let dict: Vec<Vec<BigRational>> = fw
        .dictionary()
        .vectors
        .iter()
        .map(|p| p.iter().map(|&v| exact(v)).collect())
        .collect();
    let minor = |vectors: &[Vec<BigRational>], pin: usize, sel: &MinorSelector| {
        let support = h.edge(pin);
        let x = &fw.pins()[pin].x;
        let rows: Vec<Vec<BigRational>> = support
            .iter()
            .map(|&v| {
                sel.columns()
                    .iter()
                    .map(|&c| &vectors[v][c] - exact(x[c]))
                    .collect()
            })
            .collect();
        rational_det(rows)
    };
    let mut worst: f64 = 0.0;
    let mut work = dict.clone();
    for (r, meta) in jac.row_meta.iter().enumerate() {
        for &v in h.edge(meta.pin) {
            for j in 0..coords {
                let orig = fw.dictionary().vectors[v][j];
                let (hi, lo) = (orig + step, orig - step);
                work[v][j] = exact(hi);
                let plus = minor(&work, meta.pin, &meta.selector);
                work[v][j] = exact(lo);
                let minus = minor(&work, meta.pin, &meta.selector);
                work[v][j] = dict[v][j].clone();
                let fd = ((plus - minus) / exact(hi - lo))
                    .to_f64()
                    .expect("finite quotient");
                let an = jac.entries[(r, v * coords + j)];
                let mag = an.abs().max(fd.abs());
                if mag > 1e-9 {
                    worst = worst.max((fd - an).abs() / mag);
                }
            }
        }
    }
    worst
}

fn rational_det(mut m: Vec<Vec<BigRational>>) -> BigRational {
    let n = m.len();
    let mut det = BigRational::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&r| !m[r][c].is_zero()) else {
            return BigRational::zero();
        };
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det *= &m[c][c];
        let (top, rest) = m.split_at_mut(c + 1);
        let pivot = &top[c];
        for row in rest.iter_mut() {
            let f = &row[c] / &pivot[c];
            for (x, p) in row[c..].iter_mut().zip(&pivot[c..]) {
                *x -= &f * p;
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::incidence::{random_framework, Dictionary, Pin};

    fn dims(d: usize, s: usize) -> Dims {
        Dims::new(d, s).unwrap()
    }

    #[test]
    fn k4_example_rows() {
        let k4 = Hypergraph::complete(4, dims(4, 2));
        let fw = random_framework(&k4, 11);
        let jac = jacobian(&fw);
        assert_eq!((jac.nrows(), jac.ncols()), (18, 12));
        // Edge AB is pin 0 with support (0, 1).
        let a = &fw.dictionary().vectors[0];
        let b = &fw.dictionary().vectors[1];
        let x = &fw.pins()[0].x;
        let al: Vec<f64> = (0..3).map(|j| a[j] - x[j]).collect();
        let be: Vec<f64> = (0..3).map(|j| b[j] - x[j]).collect();
        let expected = [
            [be[1], -be[0], 0.0, -al[1], al[0], 0.0],
            [be[2], 0.0, -be[0], -al[2], 0.0, al[0]],
            [0.0, be[2], -be[1], 0.0, -al[2], al[1]],
        ];
        for (t, want) in expected.iter().enumerate() {
            let row = jac.row(t);
            for c in 0..6 {
                assert!((row[c] - want[c]).abs() < 1e-14, "row {t} col {c}");
            }
            assert!(row[6..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_edge_rank_one() {
        let h = Hypergraph::new(2, dims(3, 2), vec![vec![0, 1]]).unwrap();
        let dict = Dictionary {
            vectors: vec![vec![0.0, 0.0], vec![2.0, 2.0]],
        };
        let fw = Framework::new(
            h,
            vec![Pin {
                edge: 0,
                x: vec![1.0, 1.0],
            }],
            dict,
        )
        .unwrap();
        let jac = jacobian(&fw);
        assert_eq!((jac.nrows(), jac.ncols()), (1, 4));
        assert_eq!(numeric_rank(&jac.entries, DEFAULT_REL_THRESHOLD).rank, 1);
    }

    #[test]
    fn sparsity_pattern() {
        let h = Hypergraph::complete(5, dims(5, 3));
        let fw = random_framework(&h, 2);
        let jac = jacobian(&fw);
        assert_eq!(jac.nrows(), 10 * 4);
        assert_eq!(jac.ncols(), 5 * 4);
        for (r, meta) in jac.row_meta.iter().enumerate() {
            let support = h.edge(meta.pin);
            for (c, cm) in jac.column_meta.iter().enumerate() {
                let inside = support.contains(&cm.vertex) && meta.selector.contains(cm.coordinate);
                if !inside {
                    assert_eq!(jac.entries[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn ranks() {
        assert_eq!(numeric_rank(&DMatrix::identity(3, 3), 1e-8).rank, 3);
        assert_eq!(numeric_rank(&DMatrix::zeros(3, 4), 1e-8).rank, 0);
        let k4 = random_framework(&Hypergraph::complete(4, dims(4, 2)), 5);
        assert_eq!(numeric_rank(&jacobian(&k4).entries, 1e-8).rank, 12);
    }

    #[test]
    fn simplified_row_factorization() {
        let k4 = Hypergraph::complete(4, dims(4, 2));
        let fw = random_framework(&k4, 3);
        for pin in 0..6 {
            for sel in all_selectors(fw.dims()) {
                let sr = simplified_row(&fw, pin, &sel).unwrap();
                let sum: f64 = sr.a.iter().sum();
                assert!((sum - 1.0).abs() < 1e-10);
                // V_{i,j2} / V_{i,j1} agrees across support vertices
                let ratios: Vec<f64> = sr.volumes.iter().map(|v| v[1] / v[0]).collect();
                for r in &ratios {
                    assert!((r - ratios[0]).abs() < 1e-8 * ratios[0].abs().max(1.0));
                }
                // entry = delta * b * a
                let support = k4.edge(pin);
                for (q, &v) in support.iter().enumerate() {
                    for (p, &j) in sel.columns().iter().enumerate() {
                        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                        let want = sign * sr.b[p] * sr.a[q];
                        assert!((sr.row[v * 3 + j] - want).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn simplified_row_degenerate() {
        let h = Hypergraph::new(2, dims(3, 2), vec![vec![0, 1]]).unwrap();
        let dict = Dictionary {
            vectors: vec![vec![1.0, 2.0], vec![1.0, 2.0]],
        };
        let fw = Framework::new(
            h,
            vec![Pin {
                edge: 0,
                x: vec![0.3, 0.1],
            }],
            dict,
        )
        .unwrap();
        let sel = MinorSelector::new(vec![0, 1]);
        assert_eq!(
            simplified_row(&fw, 0, &sel),
            Err(RigidityError::DegenerateNormalizer)
        );
    }

    #[test]
    fn finite_differences() {
        let k4 = random_framework(&Hypergraph::complete(4, dims(4, 2)), 9);
        assert!(finite_difference_check(&k4, DEFAULT_FD_STEP) < 1e-6);
        let h = Hypergraph::new(2, dims(3, 2), vec![vec![0, 1]]).unwrap();
        let dict = Dictionary {
            vectors: vec![vec![0.0, 0.0], vec![0.7, -0.2]],
        };
        let fw = Framework::new(
            h.clone(),
            vec![Pin {
                edge: 0,
                x: vec![0.35, -0.1],
            }],
            dict,
        )
        .unwrap();
        assert!(finite_difference_check(&fw, DEFAULT_FD_STEP) < 1e-9);
        let zero = Framework::new(
            h,
            vec![Pin {
                edge: 0,
                x: vec![0.0, 0.0],
            }],
            Dictionary {
                vectors: vec![vec![0.0, 0.0]; 2],
            },
        )
        .unwrap();
        assert_eq!(finite_difference_check(&zero, DEFAULT_FD_STEP), 0.0);
    }

    #[test]
    fn per_pin_rank_is_d_minus_s() {
        for (d, s) in [(3, 2), (4, 2), (4, 3), (5, 2), (5, 3), (5, 4)] {
            let h = Hypergraph::new(s, dims(d, s), vec![(0..s).collect()]).unwrap();
            let fw = random_framework(&h, (d * 10 + s) as u64);
            assert_eq!(
                numeric_rank(&jacobian(&fw).entries, 1e-8).rank,
                d - s,
                "d={d} s={s}"
            );
        }
    }
}
