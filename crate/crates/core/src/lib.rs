//! Numerical toolkit for shape optimization with sign-changing costs: minimize
//! `∫ g·u_Ω` over subsets `Ω` of a box with `|Ω| ≤ V` and `−Δu_Ω = f`.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod io;
mod linalg;
pub mod numeric;
pub mod obstacle;
pub mod poisson;
pub mod radial;
pub mod rearrange;
pub mod scalar;
pub mod shapeopt;
pub mod stochastic;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{make_grid, mask_volume, sample_field, sublevel_mask, FieldDescriptor, Relation};
pub use poisson::{
    cost, gamma_distance, reconstruct_measure, solve_dirichlet, solve_relaxed, torsion,
    SolveReport,
};
pub use obstacle::{complementarity_residual, obstacle_solution, solve_obstacle, unconstrained_optimal_domain};
pub use radial::{critical_radius, optimal_ball, radial_cost, radial_state, CriticalRadius};
pub use rearrange::{schwarz_rearrange, talenti_coefficient, talenti_gap};
pub use scalar::Real;
pub use shapeopt::{boundary_sensitivity, containment_check, optimality_residual, optimize_domain, OptimizerOptions};
pub use stochastic::{averaged_cost, barycenter, reduction_gap, sample_ensemble};

pub type GridSpec = grid::GridSpec<f64>;
pub type ScalarField = grid::ScalarField<f64>;
pub type DomainMask = grid::DomainMask<f64>;
pub type CapacitaryPotential = poisson::CapacitaryPotential<f64>;
pub type RadialProfile = radial::RadialProfile<f64>;
pub type Rearrangement = rearrange::Rearrangement<f64>;
pub type OptimizationResult = shapeopt::OptimizationResult<f64>;
pub type Ensemble = stochastic::Ensemble<f64>;
