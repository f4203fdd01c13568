pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod localization;
pub mod model;
pub mod nn;
pub mod quant;
pub mod remnet;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod weights;

pub use error::{Error, Result};
pub use model::{Example, Mode, Regressor};
pub use remnet::{Mlp, Remnet, RemnetConfig};
pub use tensor::Tensor;
pub use weights::ModelWeights;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
