pub mod arena;
pub mod distill;
pub mod doc;
pub mod env;
pub mod error;
pub mod gateway;
pub mod markov;
pub mod model;
pub mod planner;
pub mod quantize;
pub mod style;

pub use error::{Error, Result};
pub use model::{Action, Episode, EpisodeMeta, ExtendedState, State};
