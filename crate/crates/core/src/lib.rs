//! Human-environment system (HES) laboratory for the common-pool resource game.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: parameters, states, closed-form solutions, equilibria and
//!   linear stability of the mean-field system.
//! * [`meanfield`]: fixed-step RK4 integration under a piecewise-constant
//!   selection pressure schedule.
//! * [`socialnet`]: interaction network generators.
//! * [`abm`]: the stochastic individual-based replicator model on a network.
//! * [`optctl`]: optimal control of the selection pressure.
//! * [`inference`]: critical-time fitting against experiment series.
//! * [`record`]: the per-decision record schema shared with the game server.

pub mod abm;
pub mod inference;
pub mod meanfield;
pub mod model;
pub mod optctl;
pub mod record;
pub mod socialnet;

pub use meanfield::ControlSchedule;
pub use model::{HesState, ModelParams, PayoffBasis, Strategy, Trajectory};
