//! Finite-element substrate: structured P1 triangulations, sparse matrices,
//! direct and iterative SPD solvers, a dense symmetric eigensolver, and
//! reproducible normal variates.

mod assemble;
mod cholesky;
mod dense;
mod mesh;
mod rng;
mod sparse;

pub use assemble::{assemble_mass, assemble_stiffness, element_gradients, Tensor2};
pub use cholesky::{factorize, CgConfig, EnvelopeCholesky, SolverHandle};
pub use dense::{dense_solve, dense_sym_eig, SymEig};
pub use mesh::{BoundaryTag, Mesh2D};
pub use rng::NormalStream;
pub use sparse::{CsrMatrix, TripletBuilder};
