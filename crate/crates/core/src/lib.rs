//! Acoustic wave scattering by many small impedance balls.
//!
//! The toolkit simulates scattering of a time-harmonic acoustic wave by a
//! large number of small balls with impedance boundary conditions embedded
//! in a medium governed by `∇·(c²(x)∇u) + ω²u = 0`, and studies the
//! effective medium obtained as the ball radius shrinks to zero:
//!
//! * [`medium`] — background medium, incident fields, sampled grid fields;
//! * [`greens`] — Green's kernels of the governing operator and their local
//!   asymptotics near smooth points and near an interface;
//! * [`cloud`] — generation and auditing of particle configurations that
//!   follow a prescribed density law;
//! * [`foldy`] — the linear algebraic system for the effective field at the
//!   particle centers, charges, and scattered-field evaluation;
//! * [`continuum`] — the limiting volume integral equation, the effective
//!   refraction coefficient, and PDE residual checks;
//! * [`limits`] — weighted Riemann-type sums over particle centers and their
//!   convergence to volume integrals, with a δ-cutoff for singular weights;
//! * [`design`] — inversion of the effective-medium law into particle
//!   recipes, with forward verification;
//! * [`oracle`] — exact single-sphere series solutions and surface-layer
//!   quadrature identities used to validate the asymptotics.
//!
//! Shared infrastructure lives in [`fields`] (function descriptors),
//! [`grid`] (uniform grids and their CSV/binary formats), [`quad`]
//! (quadrature rules), and [`probes`] (reproducible probe-point sets).

pub mod cloud;
pub mod continuum;
pub mod design;
pub mod fields;
pub mod foldy;
pub mod geometry;
pub mod greens;
pub mod grid;
pub mod limits;
pub mod medium;
pub mod oracle;
pub mod probes;
pub mod quad;
pub(crate) mod util;

pub use geometry::{Domain, Point};
pub use medium::{IncidentField, Medium};
