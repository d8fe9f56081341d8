//! Crate-wide error type.
//!
//! Display strings begin with the violated constraint's name so that CLI
//! output and serialized reports carry it verbatim.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("InvalidGeometry: {0}")]
    InvalidGeometry(String),

    #[error("EmptySet: {0}")]
    EmptySet(String),

    #[error("ResolutionTooCoarse: t_resolution {t_resolution} exceeds smallest grid spacing {min_spacing}")]
    ResolutionTooCoarse { t_resolution: f64, min_spacing: f64 },

    #[error("DualityViolated: r[{index}]*r_star[{index}] = {product} differs from rho = {rho}")]
    DualityViolated { index: usize, product: f64, rho: f64 },

    #[error("BasisNotOrthonormal: max Gram deviation {deviation}")]
    BasisNotOrthonormal { deviation: f64 },

    #[error("OffManifold: incidence residual {residual} exceeds tolerance {tolerance}")]
    OffManifold { residual: f64, tolerance: f64 },

    #[error("NotInShrunkSet: {0}")]
    NotInShrunkSet(String),

    #[error("DeltaOutOfRange: delta = {0} not in (0, 1]")]
    DeltaOutOfRange(f64),

    #[error("NonInvertible: {0}")]
    NonInvertible(String),

    #[error("IncompatibleFrame: {0}")]
    IncompatibleFrame(String),

    #[error("NoIncidences: bilinear functional vanishes")]
    NoIncidences,

    #[error("TowerFailed: {0}")]
    TowerFailed(String),

    #[error("RasterOverflow: image point ({0:?}) outside raster bounding box")]
    RasterOverflow(Vec<f64>),

    #[error("HypothesisViolated: {0}")]
    HypothesisViolated(String),

    #[error("DimensionUnsupported: convexification supports n in {{1, 2}}, got {0}")]
    DimensionUnsupported(usize),

    #[error("UnsupportedDimension: determinant moment supports n <= 3, got {0}")]
    UnsupportedDimension(usize),

    #[error("FlatnessViolated: level {level} has 2^l |F_l|^(d/(d+1)) = {value} > eta * norm = {bound}")]
    FlatnessViolated { level: i32, value: f64, bound: f64 },

    #[error("ExtractionFailed: {0}")]
    ExtractionFailed(String),

    #[error("SeparationFailed: could not place {n} centers with separation {separation} after {retries} retries")]
    SeparationFailed { n: usize, separation: f64, retries: usize },

    #[error("UnknownSuite: {0}")]
    UnknownSuite(String),

    #[error("ConfigInvalid: {0}")]
    ConfigInvalid(String),

    #[error("Io: {0}")]
    Io(#[from] std::io::Error),

    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code contract: 0 pass, 1 assertion failure, 2 usage/config error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownSuite(_) | Error::ConfigInvalid(_) => 2,
            _ => 1,
        }
    }
}
