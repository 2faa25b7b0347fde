pub mod attention;
pub mod error;
pub mod mask_engine;
pub mod model;
pub mod morph;
pub mod pipeline;
pub mod skeleton;

pub use error::{Error, Result};
