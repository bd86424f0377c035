pub mod arima;
pub mod crossval;
pub mod data;
pub mod distributions;
pub mod error;
pub mod forecast;
pub mod hmc;
pub mod kalman;
pub mod model;
pub mod scalar;
pub mod score;
pub mod strategy;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use data::{Compound, FuelProfile, LapRecord, RaceSeries};
pub use model::{ModelKind, PriorSpec};

/// Static parameters in double precision.
pub type ParameterVector = model::Params<f64>;
/// Latent pace path in double precision.
pub type LatentPath = model::Path<f64>;
/// Single-lap Gaussian state in double precision.
pub type GaussianState = kalman::Gaussian<f64>;
/// Filter output in double precision.
pub type FilterResult = kalman::Filtered<f64>;
