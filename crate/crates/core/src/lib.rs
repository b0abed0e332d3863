//! Exact-diagonalization toolkit for Z2 lattice gauge theories with dynamical
//! matter on triangular plaquettes.
//!
//! The numerical core is generic over the real scalar ([`num::Real`], implemented
//! for `f64` and `f32`). The aliases at the crate root fix it to `f64`, which is
//! what the drivers and command-line tool use.

// `!(x > 0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod braiding;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod hilbert;
pub mod lattice;
pub mod linalg;
pub mod microscopic;
pub mod num;
pub mod reduced;
pub mod snapshots;
pub mod sparse;

pub use error::{Error, Result};
pub use hilbert::{BasisSet, LinkBasis, Op, SectorConstraint, Term};
pub use lattice::{build_chain_of_plaquettes, preset, LatticeGeometry, Orientation};
pub use num::Real;

/// Double-precision complex amplitude.
pub type Complex64 = num::C<f64>;
/// Double-precision sparse operator.
pub type Operator = sparse::SparseOperator<f64>;
/// Double-precision parametrized Hamiltonian.
pub type Hamiltonian = sparse::LinearHamiltonian<f64>;
/// Double-precision state vector.
pub type State = Vec<Complex64>;
pub type EffectiveParams = effective::EffectiveParams<f64>;
pub type RampSchedule = dynamics::RampSchedule<f64>;
pub type FineTuneSolution = microscopic::FineTuneSolution<f64>;
