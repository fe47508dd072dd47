//! Random walks on the Gegenbauer polynomial hypergroup.
//!
//! The crate is organised bottom-up:
//!
//! * [`specfun`]: Gamma, Bessel `J`/`I`, the Mittag-Leffler function and
//!   distribution, and the Bessel-process marginal density.
//! * [`quad`]: adaptive Gauss–Kronrod integration and Gauss–Gegenbauer rules.
//! * [`gegenbauer`]: polynomial evaluation, orthogonality weights and
//!   linearization coefficients.
//! * [`hypergroup`]: measures on ℕ, the generalized convolution, transition
//!   kernels, exact n-step laws and the Fourier calculus.
//! * [`walk_sim`]: reproducible parallel Monte Carlo of the walk and its
//!   local time.
//! * [`verify`]: desk-scale checks of the local limit theorems and of the
//!   local-time limit laws, emitted as [`verify::VerifyReport`]s.
//! * [`io`]: CSV/JSON serialization shared by the library and the CLI.

pub mod error;
pub mod gegenbauer;
pub mod hypergroup;
pub mod io;
pub mod quad;
pub mod specfun;
pub mod verify;
pub mod walk_sim;

pub use error::{Error, Result};
pub use gegenbauer::{HypergroupIndex, LinearizationRow};
pub use hypergroup::{GegenbauerKernel, SparseMeasure};
pub use specfun::MittagLefflerDist;
pub use verify::VerifyReport;
pub use walk_sim::{LocalTimeSamples, WalkConfig};
