//! Energy models, discretized state spaces and the pointwise functionals
//! evaluated on them.

mod energy;
mod functionals;
mod space;

pub use energy::{CustomPolynomial, DoubleWell, EnergyModel, Quadratic, TwoWell2d};
pub use functionals::{
    d_stability_gap, grid_argmin, grid_argmin_exhaustive, grid_min_value_exhaustive, moreau_yosida, perturbed_energy,
    residual, slope, slope_difference_quotient, slope_via_duality, tau_ladder, GridMin, Penalty,
    PsiShape, SlopeEstimate, SlopeMethod,
};
pub(crate) use functionals::{check_time, residual_with, tie_tolerance};
pub use space::{State, StateSpace, Window};
