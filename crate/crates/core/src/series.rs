//! Series containers and the response/lagged-predictor alignment used by
//! every estimator in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest aligned sample accepted by the estimation entry points.
pub const MIN_SAMPLE: usize = 20;

/// A labelled, finite, regularly spaced series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    label: String,
    period: Option<i64>,
}

impl TimeSeries {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::with_period(label, values, None)
    }

    pub fn with_period(
        label: impl Into<String>,
        values: Vec<f64>,
        period: Option<i64>,
    ) -> Result<Self> {
        let label = label.into();
        if values.len() < 2 {
            return Err(Error::SampleTooSmall {
                required: 2,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { label, index });
        }
        Ok(Self {
            values,
            label,
            period,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn period(&self) -> Option<i64> {
        self.period
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Response `y_t` paired with the lagged predictor `x_{t-1}` and the current
/// level `x_t`, all of length `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDataset {
    y: Vec<f64>,
    x_lag: Vec<f64>,
    x_level: Vec<f64>,
    label: String,
}

impl PredictiveDataset {
    /// Builds a dataset from already aligned parts, checking the alignment
    /// identity `x_lag[t] = x_level[t-1]` and the sample floor.
    pub fn from_parts(y: Vec<f64>, x_lag: Vec<f64>, x_level: Vec<f64>) -> Result<Self> {
        Self::from_parts_with_floor(y, x_lag, x_level, MIN_SAMPLE)
    }

    pub fn from_parts_with_floor(
        y: Vec<f64>,
        x_lag: Vec<f64>,
        x_level: Vec<f64>,
        min_t: usize,
    ) -> Result<Self> {
        let t = y.len();
        if x_lag.len() != t || x_level.len() != t {
            return Err(Error::Alignment(format!(
                "lengths differ: y={}, x_lag={}, x_level={}",
                t,
                x_lag.len(),
                x_level.len()
            )));
        }
        if t < min_t.max(1) {
            return Err(Error::SampleTooSmall {
                required: min_t.max(1),
                actual: t,
            });
        }
        for (name, s) in [("y", &y), ("x_lag", &x_lag), ("x_level", &x_level)] {
            if let Some(index) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    label: name.to_string(),
                    index,
                });
            }
        }
        for i in 1..t {
            if x_lag[i] != x_level[i - 1] {
                return Err(Error::Alignment(format!(
                    "x_lag[{i}] != x_level[{}]",
                    i - 1
                )));
            }
        }
        Ok(Self {
            y,
            x_lag,
            x_level,
            label: String::new(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x_lag(&self) -> &[f64] {
        &self.x_lag
    }

    pub fn x_level(&self) -> &[f64] {
        &self.x_level
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Aligned sample size `T`.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// The full predictor path `x_1, ..., x_{T+1}` (in original indexing),
    /// i.e. the first lag followed by every level.
    pub fn predictor_levels(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() + 1);
        out.push(self.x_lag[0]);
        out.extend_from_slice(&self.x_level);
        out
    }

    /// Returns a copy with the response replaced, keeping the predictor.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::Alignment(format!(
                "response length {} does not match T={}",
                y.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        out.y = y;
        Ok(out)
    }

    /// Demeaned lagged predictor `x^mu_{t-1}`.
    pub fn x_lag_demeaned(&self) -> Vec<f64> {
        demean(&self.x_lag).expect("dataset is nonempty")
    }
}

/// Aligns `y_t` with `x_{t-1}`: drops the first response and the last
/// predictor observation. Requires at least `MIN_SAMPLE + 1` raw rows.
pub fn align_predictive(y: &TimeSeries, x: &TimeSeries) -> Result<PredictiveDataset> {
    align_predictive_with_floor(y, x, MIN_SAMPLE)
}

/// As [`align_predictive`] with a caller-chosen floor on `T`; a floor of 0
/// disables the check (used by fixtures).
pub fn align_predictive_with_floor(
    y: &TimeSeries,
    x: &TimeSeries,
    min_t: usize,
) -> Result<PredictiveDataset> {
    if y.len() != x.len() {
        return Err(Error::Alignment(format!(
            "'{}' has {} observations but '{}' has {}",
            y.label(),
            y.len(),
            x.label(),
            x.len()
        )));
    }
    if y.period() != x.period() {
        return Err(Error::Alignment(format!(
            "period index differs: {:?} vs {:?}",
            y.period(),
            x.period()
        )));
    }
    let l = y.len();
    if l < min_t + 1 {
        return Err(Error::SampleTooSmall {
            required: min_t + 1,
            actual: l,
        });
    }
    let yv = y.values()[1..].to_vec();
    let x_lag = x.values()[..l - 1].to_vec();
    let x_level = x.values()[1..].to_vec();
    Ok(PredictiveDataset::from_parts_with_floor(yv, x_lag, x_level, min_t)?
        .with_label(format!("{}~{}", y.label(), x.label())))
}

/// Subtracts the sample mean.
pub fn demean(s: &[f64]) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(Error::domain("cannot demean an empty sequence"));
    }
    let m = crate::stats::mean(s);
    Ok(s.iter().map(|v| v - m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(v: &[f64]) -> TimeSeries {
        TimeSeries::new("s", v.to_vec()).unwrap()
    }

    #[test]
    fn align_shifts_by_one() {
        let d = align_predictive_with_floor(&ts(&[1., 2., 3.]), &ts(&[10., 20., 30.]), 0).unwrap();
        assert_eq!(d.y(), &[2., 3.]);
        assert_eq!(d.x_lag(), &[10., 20.]);
        assert_eq!(d.x_level(), &[20., 30.]);
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn align_rejects_length_mismatch() {
        let err = align_predictive_with_floor(&ts(&[1., 2., 3.]), &ts(&[1., 2.]), 0).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
    }

    #[test]
    fn align_enforces_floor() {
        let v: Vec<f64> = (0..20).map(f64::from).collect();
        let err = align_predictive(&ts(&v), &ts(&v)).unwrap_err();
        assert!(matches!(err, Error::SampleTooSmall { required: 21, actual: 20 }));
        let v: Vec<f64> = (0..21).map(f64::from).collect();
        assert_eq!(align_predictive(&ts(&v), &ts(&v)).unwrap().len(), 20);
    }

    #[test]
    fn rejects_non_finite_and_short() {
        assert!(matches!(
            TimeSeries::new("a", vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(TimeSeries::new("a", vec![1.0]).is_err());
    }

    #[test]
    fn from_parts_checks_identity() {
        let err = PredictiveDataset::from_parts_with_floor(
            vec![0.; 3],
            vec![1., 2., 3.],
            vec![2., 9., 4.],
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
    }

    #[test]
    fn demean_examples() {
        assert_eq!(demean(&[1., 2., 3.]).unwrap(), vec![-1., 0., 1.]);
        assert_eq!(demean(&[5., 5., 5.]).unwrap(), vec![0., 0., 0.]);
        assert!(demean(&[]).is_err());
    }

    proptest! {
        #[test]
        fn demean_sums_to_zero_and_is_idempotent(s in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let d = demean(&s).unwrap();
            let max = s.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
            let sum: f64 = d.iter().sum();
            prop_assert!(sum.abs() <= 1e-10 * s.len() as f64 * max);
            let dd = demean(&d).unwrap();
            for (a, b) in d.iter().zip(&dd) {
                prop_assert!((a - b).abs() <= 1e-12 * max);
            }
        }

        #[test]
        fn align_round_trip(raw in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..80)) {
            let (y, x): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
            let d = align_predictive_with_floor(&ts(&y), &ts(&x), 0).unwrap();
            prop_assert_eq!(d.predictor_levels(), x.clone());
            prop_assert_eq!(d.y(), &y[1..]);
            for t in 1..d.len() {
                prop_assert_eq!(d.x_lag()[t], d.x_level()[t - 1]);
            }
        }
    }
}
