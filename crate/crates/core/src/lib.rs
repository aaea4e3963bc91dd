//! Dimensionally homogeneous Jacobians for constrained parallel manipulators.
//!
//! The pipeline for one pose is
//! `resolve_pose -> inverse_kinematics -> build_inverse_jacobian -> invert_full
//! -> build_vp -> build_selection_matrix -> nominal_map -> assemble_dhj`,
//! wrapped by [`dhj::analyze_pose`]. [`verify`] holds the finite-difference
//! oracles that every analytic matrix is checked against.

pub mod dhj;
pub mod error;
pub mod forward_map;
pub mod linalg;
pub mod model;
pub mod pointmap;
pub mod screws;
pub mod selection;
pub mod sweep;
pub mod units;
pub mod verify;

pub use error::{Error, Result};
pub use model::{ManipulatorConfig, PlatformPose};
pub use selection::{SelectionPlan, SelectionRule};
pub use units::Unit;
