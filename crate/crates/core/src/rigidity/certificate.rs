//! Numeric pure-condition certificate.
//!
//! A map decomposition of the expanded multi-hypergraph assigns each edge copy
//! a coordinate (its map's color). Each copy then takes a distinct minor row of
//! its pin whose column set contains that coordinate, so no coordinate block of
//! the square matrix has an all-zero row. A nonzero determinant of the chosen
//! square matrix certifies the framework.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{all_selectors, jacobian, MinorSelector, RigidityError};
use crate::hypergraph::ExpandedMultiHypergraph;
use crate::incidence::Framework;
use crate::sparsity::{check_rigidity_combinatorial, map_decomposition, MapDecomposition};

/// Minimum `|det| / prod(row norms)` for a certificate to pass.
pub const CERTIFICATE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowChoice {
    pub expanded_edge: usize,
    pub pin: usize,
    pub color: usize,
    pub selector: MinorSelector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericityCertificate {
    pub row_selection: Vec<RowChoice>,
    pub determinant: f64,
    /// `|det|` divided by the product of the selected rows' norms (in `[0, 1]`).
    pub normalized_determinant: f64,
    pub threshold: f64,
    pub certified: bool,
    pub decomposition: MapDecomposition,
}

/// Kuhn's augmenting-path matching of copies to selectors.
fn match_copies(colors: &[usize], selectors: &[MinorSelector]) -> Option<Vec<usize>> {
    fn augment(
        copy: usize,
        colors: &[usize],
        selectors: &[MinorSelector],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for (t, sel) in selectors.iter().enumerate() {
            if seen[t] || !sel.contains(colors[copy]) {
                continue;
            }
            seen[t] = true;
            let free = match owner[t] {
                None => true,
                Some(other) => augment(other, colors, selectors, owner, seen),
            };
            if free {
                owner[t] = Some(copy);
                return true;
            }
        }
        false
    }

    let mut owner = vec![None; selectors.len()];
    for copy in 0..colors.len() {
        let mut seen = vec![false; selectors.len()];
        if !augment(copy, colors, selectors, &mut owner, &mut seen) {
            return None;
        }
    }
    let mut assignment = vec![0; colors.len()];
    for (t, o) in owner.iter().enumerate() {
        if let Some(copy) = o {
            assignment[*copy] = t;
        }
    }
    Some(assignment)
}

pub fn pure_condition_certificate(fw: &Framework) -> Result<GenericityCertificate, RigidityError> {
    let h = fw.hypergraph();
    let verdict = check_rigidity_combinatorial(h);
    if !verdict.is_minimally_rigid() {
        return Err(RigidityError::NotMinimallyRigid(verdict.name().into()));
    }
    let eh = h.expand();
    let decomposition =
        map_decomposition(&eh).map_err(|e| RigidityError::NotMinimallyRigid(e.to_string()))?;
    let selectors = all_selectors(h.dims());
    let copies = eh.copies_per_edge();
    let mut row_selection = Vec::with_capacity(eh.n_edges());
    for edge in 0..h.n_edges() {
        let ids: Vec<usize> = (0..copies).map(|c| eh.expanded_id(edge, c)).collect();
        let colors: Vec<usize> = ids.iter().map(|&id| decomposition.color[id]).collect();
        let assignment =
            match_copies(&colors, &selectors).ok_or(RigidityError::MatchingFailed { edge })?;
        for (i, &id) in ids.iter().enumerate() {
            row_selection.push(RowChoice {
                expanded_edge: id,
                pin: edge,
                color: colors[i],
                selector: selectors[assignment[i]].clone(),
            });
        }
    }
    let jac = jacobian(fw);
    let per_pin = selectors.len();
    let size = jac.ncols();
    let square = DMatrix::from_fn(row_selection.len(), size, |r, c| {
        let choice = &row_selection[r];
        let t = selectors
            .iter()
            .position(|s| *s == choice.selector)
            .expect("selector from the list");
        jac.entries[(choice.pin * per_pin + t, c)]
    });
    debug_assert_eq!(square.nrows(), square.ncols());
    let determinant = if size == 0 {
        1.0
    } else {
        square.clone().determinant()
    };
    let norm_product: f64 = square.row_iter().map(|r| r.norm()).product();
    let normalized_determinant = if size == 0 {
        1.0
    } else if norm_product == 0.0 {
        0.0
    } else {
        determinant.abs() / norm_product
    };
    Ok(GenericityCertificate {
        row_selection,
        determinant,
        normalized_determinant,
        threshold: CERTIFICATE_THRESHOLD,
        certified: normalized_determinant > CERTIFICATE_THRESHOLD,
        decomposition,
    })
}

/// Square matrix of one map: rows are the map's edges ordered by tail,
/// columns are vertices; entry `weight(edge, vertex, is_tail)` on the edge's
/// support and `zero` elsewhere.
pub fn map_matrix<T: Copy>(
    eh: &ExpandedMultiHypergraph,
    decomposition: &MapDecomposition,
    color: usize,
    zero: T,
    mut weight: impl FnMut(usize, usize, bool) -> T,
) -> Vec<Vec<T>> {
    decomposition
        .map_edges(color)
        .into_iter()
        .map(|e| {
            let mut row = vec![zero; eh.n_vertices()];
            for &v in eh.edge(e) {
                row[v] = weight(e, v, decomposition.tail[e] == v);
            }
            row
        })
        .collect()
}

/// The map matrix at the specialization `a_s = 1` on the tail and `a_j = 0`
/// elsewhere; its determinant is `+-1`.
pub fn specialized_map_matrix(
    eh: &ExpandedMultiHypergraph,
    decomposition: &MapDecomposition,
    color: usize,
) -> Vec<Vec<i64>> {
    map_matrix(eh, decomposition, color, 0i64, |_, _, tail| i64::from(tail))
}
