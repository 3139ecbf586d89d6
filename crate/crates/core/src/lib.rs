//! Domain-randomized door-opening benchmark.
//!
//! Procedural door worlds ([`worldgen`]), analytic door/knob/end-effector
//! dynamics ([`dynamics`]), a step/reset environment ([`env`]), a small dense
//! network stack ([`neural`]), PPO and SAC trainers ([`ppo`], [`sac`]) and the
//! evaluation harness ([`eval`]).

pub mod dynamics;
pub mod env;
pub mod error;
pub mod eval;
pub mod neural;
pub mod ppo;
pub mod sac;
pub mod seeding;
pub mod worldgen;

pub use error::{Error, Result};
