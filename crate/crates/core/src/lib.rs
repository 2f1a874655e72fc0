//! Linear energy-preserving integrating-factor time steppers for the 2D
//! nonlinear Schrödinger equation with wave operator,
//!
//! ```text
//! u_tt + iα u_t − Δu + β|u|²u = S,   (x, y) ∈ Ω,  u = 0 on ∂Ω,
//! ```
//!
//! discretized in space with the sine pseudo-spectral method.
//!
//! The library is generic over the floating-point type through [`Real`];
//! the aliases at the crate root fix it to `f64`.

pub mod error;
pub mod experiments;
pub mod expop;
pub mod ifrk;
pub mod io;
pub mod sav;
pub mod savif;
pub mod scalar;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
pub use expop::{Block, ExpElement, ExpTable};
pub use ifrk::{ButcherTableau, IfrkWorkspace, PredictorOptions};
pub use sav::{discrete_energy, init_state, ProblemParams, SavState, Source};
pub use savif::SavIfWorkspace;
pub use scalar::Real;
pub use spectral::{Field, Grid2D, Repr};
pub use stepper::{integrate, Scheme, StepDiagnostics, Stepper};

pub use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type Grid = Grid2D<f64>;
pub type Field64 = Field<f64>;
pub type State = SavState<f64>;
pub type Params = ProblemParams<f64>;
pub type Tableau = ButcherTableau<f64>;
