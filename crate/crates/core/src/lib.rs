pub mod adapt;
pub mod autodiff;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod metatrain;
pub mod objectives;
pub mod pipeline;
pub mod retrieval;
pub mod rng;
pub mod supervised;
pub mod synth;
pub mod tagger;

pub use error::{Error, Result};
