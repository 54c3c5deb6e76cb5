//! Adaptive P1 finite element solver for the regularized nonlinear
//! Poisson-Boltzmann equation with point charges.
//!
//! The singular Coulomb field of the charges is split off analytically; the
//! remaining regular part is solved by a damped Newton iteration on meshes
//! driven by a residual-type a posteriori estimator with bulk marking.

pub mod adapt;
pub mod assembly;
pub mod error;
pub mod estimator;
pub mod fixtures;
pub mod geometry;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod vtk;

pub use error::{Error, Result};
pub use geometry::{
    Charge, ChargeSystem, DielectricModel, DomainBox, InterfaceGeometry, Point, Region,
};
pub use mesh::{FaceClass, FaceInfo, MarkSet, Mesh};
pub use quadrature::QuadratureRule;
pub use sparse::SparseOperator;
