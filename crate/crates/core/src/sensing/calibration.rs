//! Voltage → reference-probe RAW → volumetric water content.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SensingError, TimeSeries};

pub const TEROS_SLOPE: f64 = 3.879e-4;
pub const TEROS_INTERCEPT: f64 = -0.6956;

/// Highest cell voltage accepted by [`CalibrationModel::voltage_to_raw`].
pub const MAX_CELL_VOLTAGE: f64 = 1.5;

/// Reference probe RAW → VWC fraction. Negative below the dry point.
pub fn teros_raw_to_vwc(raw: f64) -> f64 {
    TEROS_SLOPE * raw + TEROS_INTERCEPT
}

pub fn vwc_to_teros_raw(vwc: f64) -> f64 {
    (vwc - TEROS_INTERCEPT) / TEROS_SLOPE
}

pub fn vwc_percent(vwc_fraction: f64) -> f64 {
    vwc_fraction * 100.0
}

/// Cubic voltage→RAW map plus the linear RAW→VWC conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationModel {
    pub a3: f64,
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
    pub teros_slope: f64,
    pub teros_intercept: f64,
}

impl Default for CalibrationModel {
    fn default() -> Self {
        Self {
            a3: -2.34e4,
            a2: 4.45e4,
            a1: -2.46e4,
            a0: 6.09e3,
            teros_slope: TEROS_SLOPE,
            teros_intercept: TEROS_INTERCEPT,
        }
    }
}

impl CalibrationModel {
    pub fn coefficients(&self) -> [f64; 4] {
        [self.a3, self.a2, self.a1, self.a0]
    }

    fn cubic(&self, v: f64) -> f64 {
        ((self.a3 * v + self.a2) * v + self.a1) * v + self.a0
    }

    pub fn voltage_to_raw(&self, v: f64) -> Result<f64, SensingError> {
        if !v.is_finite() || !(0.0..=MAX_CELL_VOLTAGE).contains(&v) {
            return Err(SensingError::VoltageOutOfRange(v));
        }
        Ok(self.cubic(v))
    }

    pub fn raw_to_vwc(&self, raw: f64) -> f64 {
        self.teros_slope * raw + self.teros_intercept
    }

    /// Full chain, as a fraction. Not clamped.
    pub fn voltage_to_vwc(&self, v: f64) -> Result<f64, SensingError> {
        Ok(self.raw_to_vwc(self.voltage_to_raw(v)?))
    }

    pub fn voltage_to_vwc_percent(&self, v: f64) -> Result<f64, SensingError> {
        self.voltage_to_vwc(v).map(vwc_percent)
    }

    /// Flat `key = value` text. Values use the shortest decimal form that
    /// parses back to the same `f64`.
    pub fn to_kv_string(&self) -> String {
        format!(
            "# voltage->RAW cubic and RAW->VWC linear map\n\
             a3 = {}\na2 = {}\na1 = {}\na0 = {}\nteros_slope = {}\nteros_intercept = {}\n",
            self.a3, self.a2, self.a1, self.a0, self.teros_slope, self.teros_intercept
        )
    }

    pub fn from_kv_str(text: &str) -> Result<Self, SensingError> {
        let mut slots: [Option<f64>; 6] = [None; 6];
        const KEYS: [&str; 6] = ["a3", "a2", "a1", "a0", "teros_slope", "teros_intercept"];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SensingError::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let k = k.trim();
            let idx = KEYS
                .iter()
                .position(|x| *x == k)
                .ok_or_else(|| SensingError::Parse(format!("line {}: unknown key {k:?}", lineno + 1)))?;
            let value: f64 = v
                .trim()
                .parse()
                .map_err(|_| SensingError::Parse(format!("line {}: bad number", lineno + 1)))?;
            if slots[idx].replace(value).is_some() {
                return Err(SensingError::Parse(format!("line {}: duplicate key {k}", lineno + 1)));
            }
        }
        let get = |i: usize| slots[i].ok_or_else(|| SensingError::Parse(format!("missing key {}", KEYS[i])));
        Ok(Self {
            a3: get(0)?,
            a2: get(1)?,
            a1: get(2)?,
            a0: get(3)?,
            teros_slope: slots[4].unwrap_or(TEROS_SLOPE),
            teros_intercept: slots[5].unwrap_or(TEROS_INTERCEPT),
        })
    }
}

/// Result of a least-squares cubic fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicFit {
    pub model: CalibrationModel,
    pub r_squared: f64,
}

/// Relative singular-value cutoff below which the design is rank-deficient.
const RANK_TOLERANCE: f64 = 1e-10;

fn fit_pairs(pairs: &[(f64, f64)]) -> Result<CubicFit, SensingError> {
    if pairs.len() < 4 {
        return Err(SensingError::TooFewSamples { needed: 4, got: pairs.len() });
    }
    if pairs.iter().any(|(v, r)| !v.is_finite() || !r.is_finite()) {
        return Err(SensingError::NonFinite("sample"));
    }
    let n = pairs.len();
    let design = DMatrix::from_fn(n, 4, |i, j| pairs[i].0.powi(3 - j as i32));
    let target = DVector::from_iterator(n, pairs.iter().map(|p| p.1));
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < RANK_TOLERANCE {
        return Err(SensingError::SingularFit);
    }
    let coef = svd
        .solve(&target, smax * RANK_TOLERANCE)
        .map_err(|_| SensingError::SingularFit)?;
    let model = CalibrationModel {
        a3: coef[0],
        a2: coef[1],
        a1: coef[2],
        a0: coef[3],
        ..CalibrationModel::default()
    };
    let mean = target.mean();
    let ss_tot: f64 = target.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = pairs.iter().map(|(v, y)| (y - model.cubic(*v)).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= f64::EPSILON * mean.abs().max(1.0) {
        1.0
    } else {
        0.0
    };
    Ok(CubicFit { model, r_squared })
}

/// Pairs two series sample-by-sample; timestamps must match exactly.
pub fn align(voltages: &TimeSeries, raws: &TimeSeries) -> Result<Vec<(f64, f64)>, SensingError> {
    if voltages.len() != raws.len() {
        return Err(SensingError::Misaligned(format!(
            "{} voltage samples vs {} RAW samples",
            voltages.len(),
            raws.len()
        )));
    }
    voltages
        .points()
        .iter()
        .zip(raws.points())
        .map(|(&(tv, v), &(tr, r))| {
            if tv == tr {
                Ok((v, r))
            } else {
                Err(SensingError::Misaligned(format!("timestamps {tv} and {tr} differ")))
            }
        })
        .collect()
}

/// Ordinary least-squares cubic from cell voltage to reference RAW.
pub fn fit_cubic(voltages: &TimeSeries, raws: &TimeSeries) -> Result<CubicFit, SensingError> {
    fit_pairs(&align(voltages, raws)?)
}

pub fn fit_cubic_pairs(pairs: &[(f64, f64)]) -> Result<CubicFit, SensingError> {
    fit_pairs(pairs)
}

/// Seeded shuffle followed by a contiguous split into `k` folds whose sizes
/// differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, SensingError> {
    if k < 2 {
        return Err(SensingError::InvalidFolds { k, n });
    }
    if k > n {
        return Err(SensingError::InvalidFolds { k, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub k: usize,
    /// Mean |predicted − reference| VWC per fold, percentage points.
    pub fold_deviation_percent: Vec<f64>,
    pub mean_deviation_percent: f64,
    pub std_deviation_percent: f64,
}

/// k-fold cross-validation of the cubic fit. Each fold's deviation is the
/// mean absolute difference between predicted and reference VWC (percent)
/// over that fold's held-out samples.
pub fn kfold_cv(pairs: &[(f64, f64)], k: usize, seed: u64) -> Result<CvReport, SensingError> {
    let folds = fold_assignment(pairs.len(), k, seed)?;
    let mut in_test = vec![usize::MAX; pairs.len()];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            in_test[i] = f;
        }
    }
    let mut devs = Vec::with_capacity(k);
    for (f, fold) in folds.iter().enumerate() {
        let train: Vec<(f64, f64)> = pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| in_test[*i] != f)
            .map(|(_, p)| *p)
            .collect();
        let fit = fit_pairs(&train)?;
        let sum: f64 = fold
            .iter()
            .map(|&i| {
                let (v, raw) = pairs[i];
                let predicted = vwc_percent(fit.model.raw_to_vwc(fit.model.cubic(v)));
                let reference = vwc_percent(fit.model.raw_to_vwc(raw));
                (predicted - reference).abs()
            })
            .sum();
        devs.push(sum / fold.len() as f64);
    }
    let mean = devs.iter().sum::<f64>() / devs.len() as f64;
    let var = devs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / devs.len() as f64;
    Ok(CvReport {
        k,
        fold_deviation_percent: devs,
        mean_deviation_percent: mean,
        std_deviation_percent: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn teros_examples() {
        assert!(teros_raw_to_vwc(1793.25).abs() < 1e-4);
        assert!((teros_raw_to_vwc(2500.0) - 0.27415).abs() < 1e-12);
        assert!((vwc_percent(teros_raw_to_vwc(2500.0)) - 27.415).abs() < 1e-9);
        assert!(teros_raw_to_vwc(1000.0) < 0.0);
        for raw in [0.0, 1793.25, 2500.0, 3100.7] {
            assert!((vwc_to_teros_raw(teros_raw_to_vwc(raw)) - raw).abs() < 1e-9);
        }
    }

    #[test]
    fn voltage_to_raw_examples() {
        let m = CalibrationModel::default();
        assert_eq!(m.voltage_to_raw(0.0).unwrap(), 6090.0);
        assert!((m.voltage_to_raw(0.5).unwrap() - 1990.0).abs() < 1e-9);
        assert!(m.voltage_to_raw(-0.01).is_err());
        assert!(m.voltage_to_raw(1.6).is_err());
        assert!(m.voltage_to_raw(f64::NAN).is_err());
        assert!(m.voltage_to_raw(1.2).is_ok());
    }

    #[test]
    fn kv_round_trip_is_exact() {
        let m = CalibrationModel { a3: -23_412.345_678_9, a1: 1.0 / 3.0, ..Default::default() };
        let back = CalibrationModel::from_kv_str(&m.to_kv_string()).unwrap();
        assert_eq!(back, m);
        assert!(CalibrationModel::from_kv_str("a3 = 1\na2 = 2\na1 = 3").is_err());
        assert!(CalibrationModel::from_kv_str("a3 = 1\na3 = 2").is_err());
        assert!(CalibrationModel::from_kv_str("bogus = 1").is_err());
    }

    #[test]
    fn singular_and_short_inputs() {
        let flat: Vec<(f64, f64)> = (0..20).map(|i| (0.5, 1000.0 + i as f64)).collect();
        assert_eq!(fit_cubic_pairs(&flat), Err(SensingError::SingularFit));
        let three = [(0.1, 1.0), (0.2, 2.0), (0.3, 3.0)];
        assert!(matches!(fit_cubic_pairs(&three), Err(SensingError::TooFewSamples { .. })));
        // Only three distinct voltages cannot pin a cubic.
        let three_levels: Vec<(f64, f64)> =
            (0..30).map(|i| ([0.4, 0.6, 0.8][i % 3], i as f64)).collect();
        assert_eq!(fit_cubic_pairs(&three_levels), Err(SensingError::SingularFit));
    }

    #[test]
    fn folds_partition() {
        let folds = fold_assignment(103, 10, 7).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().all(|&s| s == 10 || s == 11));
        assert_eq!(fold_assignment(103, 10, 7).unwrap(), folds);
        assert!(fold_assignment(5, 10, 7).is_err());
    }

    #[test]
    fn misaligned_series_rejected() {
        let v = TimeSeries::uniform(0.0, 1.0, &[0.4, 0.5, 0.6, 0.7]).unwrap();
        let r = TimeSeries::uniform(0.5, 1.0, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(matches!(fit_cubic(&v, &r), Err(SensingError::Misaligned(_))));
    }
}
