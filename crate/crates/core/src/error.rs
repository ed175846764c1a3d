use thiserror::Error;

use crate::hypergraph::HypergraphError;
use crate::incidence::IncidenceError;
use crate::learn::LearnError;
use crate::rigidity::RigidityError;
use crate::solver::SolveError;
use crate::sparsity::SparsityError;

/// Any failure raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
    #[error(transparent)]
    Sparsity(#[from] SparsityError),
    #[error(transparent)]
    Incidence(#[from] IncidenceError),
    #[error(transparent)]
    Rigidity(#[from] RigidityError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
