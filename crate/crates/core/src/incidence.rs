//! Pins, dictionaries and frameworks in the affine chart `R^{d-1}`.
//!
//! A pin `x` lies on the span of its support `{v_1, .., v_s}` exactly when
//! every `s x s` minor of the incidence matrix `E` (rows `v_i - x`) vanishes.

use nalgebra::{ComplexField, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{Dims, Hypergraph};
use crate::seed;

/// Chart conversion retries before [`IncidenceError::ChartFailure`].
pub const CHART_RETRIES: u64 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IncidenceError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("point {index} is the zero vector")]
    ZeroVector { index: usize },
    #[error("no chart found after {attempts} random rotations")]
    ChartFailure { attempts: u64 },
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pin {
    pub edge: usize,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dictionary {
    pub vectors: Vec<Vec<f64>>,
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dictionary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, IncidenceError> {
        serde_json::from_str(text).map_err(|e| IncidenceError::Parse(e.to_string()))
    }
}

/// `{"pins": [{"edge": int, "x": [...]}, ...]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinsFile {
    pub pins: Vec<Pin>,
}

impl PinsFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pins serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, IncidenceError> {
        serde_json::from_str(text).map_err(|e| IncidenceError::Parse(e.to_string()))
    }
}

/// `{"points": [[...d...], ...]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogeneousFile {
    pub points: Vec<Vec<f64>>,
}

impl HomogeneousFile {
    pub fn from_json(text: &str) -> Result<Self, IncidenceError> {
        serde_json::from_str(text).map_err(|e| IncidenceError::Parse(e.to_string()))
    }
}

/// Check that `pins` align 1:1 with `h.edges` and have `d - 1` finite coordinates.
pub fn check_pins(h: &Hypergraph, pins: &[Pin]) -> Result<(), IncidenceError> {
    let c = h.dims().coords();
    if pins.len() != h.n_edges() {
        return Err(IncidenceError::DimensionMismatch(format!(
            "{} pins for {} edges",
            pins.len(),
            h.n_edges()
        )));
    }
    for (i, p) in pins.iter().enumerate() {
        if p.edge != i {
            return Err(IncidenceError::DimensionMismatch(format!(
                "pin {i} references edge {}",
                p.edge
            )));
        }
        if p.x.len() != c || p.x.iter().any(|v| !v.is_finite()) {
            return Err(IncidenceError::DimensionMismatch(format!(
                "pin {i} needs {c} finite coordinates"
            )));
        }
    }
    Ok(())
}

pub fn check_dictionary(h: &Hypergraph, dict: &Dictionary) -> Result<(), IncidenceError> {
    let c = h.dims().coords();
    if dict.len() != h.n_vertices() {
        return Err(IncidenceError::DimensionMismatch(format!(
            "{} dictionary vectors for {} vertices",
            dict.len(),
            h.n_vertices()
        )));
    }
    if let Some(i) = dict.vectors.iter().position(|v| v.len() != c) {
        return Err(IncidenceError::DimensionMismatch(format!(
            "dictionary vector {i} needs {c} coordinates"
        )));
    }
    Ok(())
}

/// The triple (hypergraph, pins, dictionary).
#[derive(Debug, Clone, PartialEq)]
pub struct Framework {
    h: Hypergraph,
    pins: Vec<Pin>,
    dict: Dictionary,
}

impl Framework {
    pub fn new(h: Hypergraph, pins: Vec<Pin>, dict: Dictionary) -> Result<Self, IncidenceError> {
        check_pins(&h, &pins)?;
        check_dictionary(&h, &dict)?;
        Ok(Self { h, pins, dict })
    }

    pub fn hypergraph(&self) -> &Hypergraph {
        &self.h
    }

    pub fn dims(&self) -> Dims {
        self.h.dims()
    }

    pub fn pins(&self) -> &[Pin] {
        &self.pins
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn into_parts(self) -> (Hypergraph, Vec<Pin>, Dictionary) {
        (self.h, self.pins, self.dict)
    }

    /// Apply `p -> a p + b` to every dictionary point and pin.
    pub fn map_affine(&self, a: &DMatrix<f64>, b: &[f64]) -> Framework {
        let apply = |p: &[f64]| -> Vec<f64> {
            (0..p.len())
                .map(|i| (0..p.len()).map(|j| a[(i, j)] * p[j]).sum::<f64>() + b[i])
                .collect()
        };
        Framework {
            h: self.h.clone(),
            pins: self
                .pins
                .iter()
                .map(|p| Pin {
                    edge: p.edge,
                    x: apply(&p.x),
                })
                .collect(),
            dict: Dictionary {
                vectors: self.dict.vectors.iter().map(|v| apply(v)).collect(),
            },
        }
    }
}

/// The `s x (d-1)` matrix with rows `v_i - x` for the pin's support.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    pub rows: Vec<Vec<f64>>,
}

pub fn incidence_matrix(fw: &Framework, pin_id: usize) -> IncidenceMatrix {
    let pin = &fw.pins[pin_id];
    let rows =
        fw.h.edge(pin.edge)
            .iter()
            .map(|&v| {
                fw.dict.vectors[v]
                    .iter()
                    .zip(&pin.x)
                    .map(|(a, b)| a - b)
                    .collect()
            })
            .collect();
    IncidenceMatrix { rows }
}

/// `sigma_s / max(1, sigma_1)` of an `s x (d-1)` matrix given row-major.
pub fn rank_deficiency<T: ComplexField<RealField = f64>>(rows: &[Vec<T>]) -> f64 {
    let s = rows.len();
    if s == 0 {
        return 0.0;
    }
    let c = rows[0].len();
    let m = DMatrix::from_fn(s, c, |i, j| rows[i][j].clone());
    let sv = m.singular_values();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let smallest = if s <= c { sv[s - 1] } else { 0.0 };
    smallest / sv[0].max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub per_pin: Vec<f64>,
    pub max: f64,
}

impl ResidualReport {
    pub fn from_per_pin(per_pin: Vec<f64>) -> Self {
        let max = per_pin.iter().copied().fold(0.0, f64::max);
        Self { per_pin, max }
    }
}

/// Scale-invariant incidence residual per pin; zero iff the pin lies in the
/// affine hull of its support.
pub fn incidence_residual(fw: &Framework) -> ResidualReport {
    let per_pin = (0..fw.pins.len())
        .map(|k| rank_deficiency(&incidence_matrix(fw, k).rows))
        .collect();
    ResidualReport::from_per_pin(per_pin)
}

fn normal_vec<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Affine combination of `points` with random weights summing to one.
pub fn random_affine_combination<R: Rng>(rng: &mut R, points: &[&[f64]]) -> Vec<f64> {
    let weights = loop {
        let raw = normal_vec(rng, points.len());
        let total: f64 = raw.iter().sum();
        if total.abs() >= 1e-3 {
            break raw.into_iter().map(|w| w / total).collect::<Vec<_>>();
        }
    };
    let dim = points[0].len();
    (0..dim)
        .map(|j| points.iter().zip(&weights).map(|(p, w)| w * p[j]).sum())
        .collect()
}

/// Standard-normal dictionary; each pin a random affine combination of its
/// support, so every incidence holds by construction.
pub fn random_framework(h: &Hypergraph, seed: u64) -> Framework {
    let mut rng = seed::rng(seed::derive(seed, "framework", 0));
    let c = h.dims().coords();
    let dict = Dictionary {
        vectors: (0..h.n_vertices())
            .map(|_| normal_vec(&mut rng, c))
            .collect(),
    };
    let pins = h
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let support: Vec<&[f64]> = e.iter().map(|&v| dict.vectors[v].as_slice()).collect();
            Pin {
                edge: i,
                x: random_affine_combination(&mut rng, &support),
            }
        })
        .collect();
    Framework {
        h: h.clone(),
        pins,
        dict,
    }
}

/// Smallest dictionary that can generically represent `m` pins: `ceil((d-s)m/(d-1))`.
pub fn min_dictionary_size(m: usize, dims: Dims) -> usize {
    (dims.copies() * m).div_ceil(dims.coords())
}

/// Points moved to the affine chart, plus the rotation that was used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub points: Vec<Vec<f64>>,
    /// Row-major `d x d` orthogonal matrix applied before dehomogenizing.
    pub rotation: Vec<Vec<f64>>,
    pub attempts: u64,
}

/// Rotate then divide by the last coordinate. `None` if some point lands
/// too close to the hyperplane at infinity.
pub fn chart_with_rotation(
    points: &[Vec<f64>],
    rotation: &[Vec<f64>],
) -> Result<Option<Vec<Vec<f64>>>, IncidenceError> {
    let d = rotation.len();
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if p.len() != d {
            return Err(IncidenceError::DimensionMismatch(format!(
                "point {i} has {} coordinates, expected {d}",
                p.len()
            )));
        }
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(IncidenceError::ZeroVector { index: i });
        }
        let y: Vec<f64> = rotation
            .iter()
            .map(|row| row.iter().zip(p).map(|(a, b)| a * b).sum())
            .collect();
        let last = y[d - 1];
        if last.abs() < 1e-9 * norm {
            return Ok(None);
        }
        out.push(y[..d - 1].iter().map(|v| v / last).collect());
    }
    Ok(Some(out))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, signs fixed).
pub fn random_rotation<R: Rng>(rng: &mut R, d: usize) -> Vec<Vec<f64>> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if r[(j, j)] < 0.0 {
                        -q[(i, j)]
                    } else {
                        q[(i, j)]
                    }
                })
                .collect()
        })
        .collect()
}

/// Convert homogeneous points (e.g. sphere samples in `R^d`) to chart
/// coordinates in `R^{d-1}` under one seeded random rotation.
pub fn chart_from_homogeneous(points: &[Vec<f64>], seed: u64) -> Result<Chart, IncidenceError> {
    let Some(d) = points.first().map(Vec::len) else {
        return Ok(Chart {
            points: vec![],
            rotation: vec![],
            attempts: 0,
        });
    };
    if d < 2 {
        return Err(IncidenceError::DimensionMismatch(
            "homogeneous points need at least 2 coordinates".into(),
        ));
    }
    for attempt in 0..CHART_RETRIES {
        let mut rng = seed::rng(seed::derive(seed, "chart", attempt));
        let rotation = random_rotation(&mut rng, d);
        if let Some(charted) = chart_with_rotation(points, &rotation)? {
            return Ok(Chart {
                points: charted,
                rotation,
                attempts: attempt + 1,
            });
        }
    }
    Err(IncidenceError::ChartFailure {
        attempts: CHART_RETRIES,
    })
}

/// `m` points drawn uniformly from the unit sphere in `R^d`.
pub fn random_sphere_points(m: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed::derive(seed, "sphere", 0));
    (0..m)
        .map(|_| loop {
            let v = normal_vec(&mut rng, d);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                break v.into_iter().map(|x| x / n).collect();
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(d: usize, s: usize) -> Dims {
        Dims::new(d, s).unwrap()
    }

    fn segment_framework(x: Vec<f64>) -> Framework {
        let h = Hypergraph::new(2, dims(3, 2), vec![vec![0, 1]]).unwrap();
        let dict = Dictionary {
            vectors: vec![vec![0.0, 0.0], vec![2.0, 2.0]],
        };
        Framework::new(h, vec![Pin { edge: 0, x }], dict).unwrap()
    }

    #[test]
    fn incidence_matrix_rows() {
        let fw = segment_framework(vec![1.0, 1.0]);
        assert_eq!(
            incidence_matrix(&fw, 0).rows,
            vec![vec![-1.0, -1.0], vec![1.0, 1.0]]
        );
        let fw = segment_framework(vec![0.0, 0.0]);
        assert_eq!(incidence_matrix(&fw, 0).rows[0], vec![0.0, 0.0]);
        let k4 = random_framework(&Hypergraph::complete(4, dims(4, 2)), 1);
        let e = incidence_matrix(&k4, 0);
        assert_eq!(e.rows.len(), 2);
        assert!(e.rows.iter().all(|r| r.len() == 3));
    }

    #[test]
    fn residual_values() {
        assert!(incidence_residual(&segment_framework(vec![1.0, 1.0])).max < 1e-15);
        // sigma_1 sigma_2 = |det| = 2e-6 and sigma_1 ~ 2, so sigma_2 / sigma_1 ~ 5e-7
        let r = incidence_residual(&segment_framework(vec![1.0, 1.0 + 1e-6])).max;
        assert!((r - 5e-7).abs() < 1e-12, "{r}");
        let k4 = random_framework(&Hypergraph::complete(4, dims(4, 2)), 7);
        assert!(incidence_residual(&k4).max <= 1e-12);
    }

    #[test]
    fn random_framework_is_deterministic() {
        let h = Hypergraph::complete(4, dims(4, 2));
        assert_eq!(random_framework(&h, 7), random_framework(&h, 7));
        assert_ne!(random_framework(&h, 7), random_framework(&h, 8));
    }

    #[test]
    fn repeated_supports_get_independent_pins() {
        let h = Hypergraph::new(2, dims(3, 2), vec![vec![0, 1], vec![0, 1]]).unwrap();
        let fw = random_framework(&h, 3);
        assert_ne!(fw.pins()[0].x, fw.pins()[1].x);
        assert!(incidence_residual(&fw).max <= 1e-12);
    }

    #[test]
    fn min_size() {
        assert_eq!(min_dictionary_size(6, dims(4, 2)), 4);
        assert_eq!(min_dictionary_size(0, dims(4, 2)), 0);
        assert_eq!(min_dictionary_size(110, dims(3, 2)), 55);
        assert_eq!(min_dictionary_size(11, dims(3, 2)), 6);
    }

    #[test]
    fn chart_identity_and_antipodes() {
        let id = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let out = chart_with_rotation(&[vec![0.0, 0.0, 1.0]], &id)
            .unwrap()
            .unwrap();
        assert_eq!(out, vec![vec![0.0, 0.0]]);
        let p = vec![0.3, -0.5, 0.8];
        let q: Vec<f64> = p.iter().map(|v| -v).collect();
        let c = chart_from_homogeneous(&[p, q], 5).unwrap();
        assert!((c.points[0][0] - c.points[1][0]).abs() < 1e-15);
        assert!((c.points[0][1] - c.points[1][1]).abs() < 1e-15);
    }

    #[test]
    fn chart_errors() {
        assert_eq!(
            chart_from_homogeneous(&[vec![1.0, 0.0, 0.0], vec![0.0; 3]], 1),
            Err(IncidenceError::ZeroVector { index: 1 })
        );
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(chart_with_rotation(&[vec![1.0, 0.0]], &id), Ok(None));
    }

    #[test]
    fn chart_sphere_points() {
        let pts = random_sphere_points(100, 4, 3);
        let a = chart_from_homogeneous(&pts, 3).unwrap();
        let b = chart_from_homogeneous(&pts, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 100);
        assert!(a.points.iter().flatten().all(|v| v.is_finite()));
        // rotation is orthogonal
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..4).map(|k| a.rotation[i][k] * a.rotation[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_checks() {
        let h = Hypergraph::complete(4, dims(4, 2));
        let fw = random_framework(&h, 1);
        let (h, pins, mut dict) = fw.into_parts();
        dict.vectors.pop();
        assert!(matches!(
            Framework::new(h.clone(), pins.clone(), dict),
            Err(IncidenceError::DimensionMismatch(_))
        ));
        let mut bad = pins.clone();
        bad.swap(0, 1);
        assert!(check_pins(&h, &bad).is_err());
    }

    #[test]
    fn json_codecs() {
        let pins = PinsFile::from_json(r#"{"pins":[{"edge":0,"x":[0.5,0.25]}]}"#).unwrap();
        assert_eq!(pins.pins[0].x, vec![0.5, 0.25]);
        assert!(PinsFile::from_json(r#"{"pins":[],"other":1}"#).is_err());
        let d = Dictionary::from_json(r#"{"vectors":[[1.0,2.0]]}"#).unwrap();
        assert_eq!(Dictionary::from_json(&d.to_json()).unwrap(), d);
        let h = HomogeneousFile::from_json(r#"{"points":[[0,0,1]]}"#).unwrap();
        assert_eq!(h.points.len(), 1);
    }
}
