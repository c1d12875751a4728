//! Distribution-valued solutions `Z_t(psi)`, the semigroup and its dual, and
//! the residual identities tying them together.

pub mod initial;
pub mod path;
pub mod residuals;
pub mod semigroup;

pub use initial::{DiscreteInitial, DiscreteKind, InitialCondition, DEFAULT_PSI_NODES};
pub use path::{duality_gap, z_coeffs, z_density_1d, DistributionPath};
pub use residuals::{
    generator_identity_residual, martingale_repr_report, martingale_repr_residual, mild_residual_expectation,
    mild_residual_pathwise, second_moment_profile, semigroup_tv_estimate, strong_residual, strong_residual_rms,
    strong_residual_series, support_containment_check, uniqueness_proxy, TvEstimate,
};
pub use semigroup::{
    dual_semigroup_coeffs, semigroup_apply, DualCoeffs, Estimate, GaussianConvolution, InnerKey, MonteCarloSemigroup,
    OuLinearSemigroup, SemigroupOracle,
};
