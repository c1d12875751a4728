//! Hermite functions, multi-indices, ladder operators and quadrature.

pub mod hermite;
pub mod ladder;
pub mod multi_index;
pub mod quadrature;

pub use hermite::{
    basis_derivatives, basis_values, hermite_derivatives_1d, hermite_eval_1d, hermite_eval_multi, BasisJet, HermiteJet,
};
pub use ladder::{ladder_edge_mass, ladder_matrix, LadderKind};
pub use multi_index::{IndexSet, MultiIndex, MAX_DIM};
pub use quadrature::{gauss_hermite_rule, gauss_legendre_box, gauss_legendre_rule, QuadratureKind, QuadratureRule};
