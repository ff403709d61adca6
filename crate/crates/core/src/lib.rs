//! Kinetic Monte Carlo laboratory for a symmetric exclusion process living on a
//! discrete cylinder whose bottom layer exchanges particles with a fast
//! "road", together with the limiting field-road diffusion system.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: cylinder geometry, site indexing and edge lists.
//! * [`dynamics`]: exact continuous-time simulation by uniformization.
//! * [`generator_exact`]: dense/sparse generator on tiny state spaces,
//!   forward equation, Bernoulli measures, entropy and Dirichlet forms.
//! * [`testfn`] and [`empirical`]: analytic test functions, empirical
//!   pairings, Dynkin martingales and their quadratic variation.
//! * [`pde`]: conservative finite-volume solver for the macroscopic system,
//!   weak-form residuals, duality defect and the energy functional.
//! * [`harness`]: configuration, seeding and experiment orchestration.
//!
//! Numerical kernels are generic over [`Scalar`]; the aliases below fix the
//! scalar to `f64`, which is what the simulator and the harness use.

pub mod dynamics;
pub mod empirical;
pub mod error;
pub mod generator_exact;
pub mod harness;
pub mod io;
pub mod lattice;
pub mod pde;
pub mod scalar;
pub mod stats;
pub mod testfn;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use dynamics::{Configuration, Event, ModelParams, SimParams, Simulator, TrajectoryRecord};
pub use lattice::{LatticeGeom, Site};

pub type TestFunctionPair64 = testfn::TestFunctionPair<f64>;
pub type TimeFactor64 = testfn::TimeFactor<f64>;
pub type FieldMode64 = testfn::FieldMode<f64>;
pub type RoadMode64 = testfn::RoadMode<f64>;
pub type GeneratorParts64 = generator_exact::GeneratorParts<f64>;
pub type GeneratorMatrix64 = generator_exact::GeneratorMatrix<f64>;
pub type MeasureVector64 = generator_exact::MeasureVector<f64>;

/// Crate version stamped into every emitted table.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub type PdeState64 = pde::PdeState<f64>;
pub type PdeParams64 = pde::PdeParams<f64>;
pub type MartingaleSeries64 = empirical::MartingaleSeries<f64>;
