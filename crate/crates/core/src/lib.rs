//! Generic rigidity of pinned subspace-incidence systems and fitted dictionary learning.
//!
//! A *pin* is a data point constrained to lie in the affine span of `s` unknown
//! dictionary points; the pins and their supports form an `s`-uniform
//! multi-hypergraph. This crate decides generic rigidity and independence from
//! that hypergraph alone (pebble games on the expanded multi-hypergraph),
//! certifies the verdict numerically via the rank of the rigidity matrix, and
//! solves for dictionaries, including the linear-time construct-and-solve
//! pipeline in [`learn`].
//!
//! ```
//! use pinned_rigidity::hypergraph::{Dims, Hypergraph};
//! use pinned_rigidity::sparsity::{check_rigidity_combinatorial, RigidityVerdict};
//!
//! let dims = Dims::new(4, 2).unwrap();
//! let k4 = Hypergraph::complete(4, dims);
//! assert_eq!(check_rigidity_combinatorial(&k4), RigidityVerdict::MinimallyRigid);
//! ```

pub mod error;
pub mod hypergraph;
pub mod incidence;
pub mod learn;
pub mod rigidity;
pub mod ring;
pub mod seed;
pub mod solver;
pub mod sparsity;

pub use error::{Error, Result};
pub use hypergraph::{Dims, Hypergraph};
