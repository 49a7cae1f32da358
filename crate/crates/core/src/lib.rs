pub mod corpus;
pub mod encode;
pub mod error;
pub mod eval;
pub mod net;
pub mod render;

pub use error::{Error, Result};
