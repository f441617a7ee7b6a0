use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::TIME_RANGE;
use crate::error::{Error, Result};
use crate::power_system::DISTURBANCE_RANGE;

/// Affine maps at the network boundary: `input_n = (input - shift) / scale`
/// and `output = shift + scale * output_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_shift: Vec<f64>,
    pub output_scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_shift: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
            output_shift: vec![0.0; output_dim],
            output_scale: vec![1.0; output_dim],
        }
    }

    /// Maps `[0, 2] s x [0, 6] pu` onto `[-1, 1]^2` and standardises each
    /// output by the median and interquartile range of `labels`.
    pub fn from_labels(labels: &Array2<f64>) -> Self {
        let half = |(lo, hi): (f64, f64)| ((lo + hi) / 2.0, (hi - lo) / 2.0);
        let (ts, tk) = half(TIME_RANGE);
        let (ps, pk) = half(DISTURBANCE_RANGE);
        let mut output_shift = Vec::new();
        let mut output_scale = Vec::new();
        for col in labels.axis_iter(Axis(1)) {
            let mut v: Vec<f64> = col.to_vec();
            v.sort_by(f64::total_cmp);
            let med = quantile_sorted(&v, 0.5);
            let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
            output_shift.push(med);
            // A constant label column has no spread to standardise by.
            output_scale.push(if iqr > 1e-9 * (1.0 + med.abs()) { iqr } else { 1.0 });
        }
        Self {
            input_shift: vec![ts, ps],
            input_scale: vec![tk, pk],
            output_shift,
            output_scale,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_shift.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_shift.len()
    }

    pub fn validate(&self, input_dim: usize, output_dim: usize) -> Result<()> {
        if self.input_shift.len() != input_dim
            || self.input_scale.len() != input_dim
            || self.output_shift.len() != output_dim
            || self.output_scale.len() != output_dim
        {
            return Err(Error::Shape(format!(
                "normalization for {} -> {}, network is {input_dim} -> {output_dim}",
                self.input_dim(),
                self.output_dim()
            )));
        }
        let scales = self.input_scale.iter().chain(&self.output_scale);
        if scales.chain(&self.input_shift).chain(&self.output_shift).any(|s| !s.is_finite())
            || self.input_scale.iter().chain(&self.output_scale).any(|&s| s <= 0.0)
        {
            return Err(Error::Config("normalization scales must be finite and positive".into()));
        }
        Ok(())
    }

    /// `x` in normalised output coordinates.
    pub fn normalize_outputs(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.clone();
        for mut row in y.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.output_shift[j]) / self.output_scale[j];
            }
        }
        y
    }
}

/// Linear-interpolation quantile of ascending data (`q` in `[0, 1]`).
pub(crate) fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    match v.len() {
        0 => f64::NAN,
        1 => v[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        }
    }
}
