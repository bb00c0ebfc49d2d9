//! Transform solvers for Markov-modulated reflected autoregressive recursions
//! and related modulated queues, with a Monte Carlo oracle.

pub mod engine;
pub mod error;
pub mod hermite;
pub mod jet;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod poly;
pub mod presets;
pub mod related;
pub mod sim;
pub mod stationary;
pub mod transient;

pub use error::{MarqError, Result};
pub use jet::Jet;
