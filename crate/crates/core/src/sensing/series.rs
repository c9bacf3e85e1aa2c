use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::SensingError;

/// Ordered `(timestamp_s, value)` samples with strictly increasing time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct TimeSeries {
    points: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for TimeSeries {
    type Error = SensingError;
    fn try_from(points: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        TimeSeries::new(points)
    }
}

impl From<TimeSeries> for Vec<(f64, f64)> {
    fn from(s: TimeSeries) -> Self {
        s.points
    }
}

impl TimeSeries {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, SensingError> {
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(SensingError::NonMonotoneTime { index: i + 1 });
            }
        }
        if points.iter().any(|(t, _)| !t.is_finite()) {
            return Err(SensingError::NonFinite("timestamp"));
        }
        Ok(Self { points })
    }

    /// Samples at `start_s + i * period_s`.
    pub fn uniform(start_s: f64, period_s: f64, values: &[f64]) -> Result<Self, SensingError> {
        let points = values
            .iter()
            .enumerate()
            .map(|(i, v)| (start_s + i as f64 * period_s, *v))
            .collect();
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> TimeSeries {
        TimeSeries { points: self.points.iter().map(|(t, v)| (*t, f(*v))).collect() }
    }
}

/// Causal trailing mean. The first `window - 1` outputs average over the
/// samples seen so far.
pub fn rolling_mean(series: &TimeSeries, window: usize) -> Result<TimeSeries, SensingError> {
    if window == 0 {
        return Err(SensingError::InvalidWindow);
    }
    let pts = series.points();
    let mut out = Vec::with_capacity(pts.len());
    let mut sum = 0.0;
    // Monotone deques of indices, used to keep the float mean inside the
    // window's [min, max].
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    for (i, &(t, v)) in pts.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= pts[i - window].1;
        }
        while maxq.back().is_some_and(|&j| pts[j].1 <= v) {
            maxq.pop_back();
        }
        maxq.push_back(i);
        while minq.back().is_some_and(|&j| pts[j].1 >= v) {
            minq.pop_back();
        }
        minq.push_back(i);
        let start = (i + 1).saturating_sub(window);
        while maxq.front().is_some_and(|&j| j < start) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&j| j < start) {
            minq.pop_front();
        }
        let n = (i - start + 1) as f64;
        let lo = pts[*minq.front().expect("window non-empty")].1;
        let hi = pts[*maxq.front().expect("window non-empty")].1;
        out.push((t, (sum / n).clamp(lo, hi)));
        // Periodic exact resum keeps drift bounded on long series.
        if window > 1 && i % 65_536 == 65_535 {
            sum = pts[start..=i].iter().map(|p| p.1).sum();
        }
    }
    Ok(TimeSeries { points: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_increasing_time() {
        assert!(TimeSeries::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(TimeSeries::new(vec![(1.0, 1.0), (0.5, 2.0)]).is_err());
        assert!(TimeSeries::new(vec![]).is_ok());
    }

    #[test]
    fn rolling_mean_examples() {
        let s = TimeSeries::uniform(0.0, 1.0, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        let m = rolling_mean(&s, 2).unwrap();
        assert_eq!(m.values().collect::<Vec<_>>(), vec![0.0, 0.5, 1.5, 2.5]);

        let c = TimeSeries::uniform(0.0, 1.0, &[0.1; 50]).unwrap();
        assert_eq!(rolling_mean(&c, 7).unwrap(), c);

        let s = TimeSeries::uniform(0.0, 1.0, &[3.0, -1.0, 4.0, 1.5]).unwrap();
        assert_eq!(rolling_mean(&s, 1).unwrap(), s);
        assert!(rolling_mean(&s, 0).is_err());
    }

    #[test]
    fn warm_up_averages_available_samples() {
        let s = TimeSeries::uniform(0.0, 1.0, &[2.0, 4.0, 6.0, 8.0, 10.0]).unwrap();
        let m: Vec<f64> = rolling_mean(&s, 4).unwrap().values().collect();
        assert_eq!(m, vec![2.0, 3.0, 4.0, 5.0, 7.0]);
    }
}
