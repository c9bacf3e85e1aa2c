//! Galvanic probe signal model and the calibration chain from cell voltage
//! to volumetric water content.

mod calibration;
mod log;
mod sensor;
mod series;
mod soil;

use thiserror::Error;

pub use calibration::{
    align, fit_cubic, fit_cubic_pairs, fold_assignment, kfold_cv, teros_raw_to_vwc, vwc_percent,
    vwc_to_teros_raw, CalibrationModel, CubicFit, CvReport, MAX_CELL_VOLTAGE, TEROS_INTERCEPT,
    TEROS_SLOPE,
};
pub use log::{read_pairs, read_readings, write_readings, PairRow, ReadingRow, READING_LOG_HEADER};
pub use sensor::{ElectrodePair, GalvanicSensorModel};
pub use series::{rolling_mean, TimeSeries};
pub use soil::{simulate_soil_vwc, Drainage, SoilName, SoilTrace, SoilType, WateringEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("timestamps must strictly increase (sample {index})")]
    NonMonotoneTime { index: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("rolling window must be at least 1 sample")]
    InvalidWindow,
    #[error("voltage {0} V outside the cell's physical range")]
    VoltageOutOfRange(f64),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("cubic design matrix is rank-deficient")]
    SingularFit,
    #[error("cannot split {n} samples into {k} folds")]
    InvalidFolds { k: usize, n: usize },
    #[error("series misaligned: {0}")]
    Misaligned(String),
    #[error("invalid soil parameters: {0}")]
    InvalidSoil(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}
