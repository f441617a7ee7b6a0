use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::mlp::LossTerms;

/// Which loss terms drive training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Data fit only.
    Nn,
    /// Data fit plus the time derivative at the data points.
    DtNn,
    /// Data fit, time derivative, and the physics residual at collocation points.
    Pinn,
}

impl LossMode {
    pub const ALL: [LossMode; 3] = [LossMode::Nn, LossMode::DtNn, LossMode::Pinn];

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Nn => "nn",
            LossMode::DtNn => "dtnn",
            LossMode::Pinn => "pinn",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "nn" => Ok(LossMode::Nn),
            "dtnn" => Ok(LossMode::DtNn),
            "pinn" => Ok(LossMode::Pinn),
            other => Err(Error::Config(format!("unknown loss mode '{other}'"))),
        }
    }
}

/// Per-state weights of the three loss terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeightTable {
    pub k: f64,
    pub x: Vec<f64>,
    pub dt: Vec<f64>,
    pub f: Vec<f64>,
}

impl LossWeightTable {
    /// The two-area weighting with `k = 2.2e4 * n_f / n_x`, for a state
    /// vector of `n_gen` generator angles, `n_load` load angles and `n_gen`
    /// frequencies.
    pub fn two_area(n_x: usize, n_f: usize, n_gen: usize, n_load: usize) -> Self {
        let k = 2.2e4 * n_f as f64 / n_x as f64;
        let groups = |gen_angle: f64, load_angle: f64, freq: f64| {
            let mut v = vec![gen_angle; n_gen];
            v.extend(std::iter::repeat_n(load_angle, n_load));
            v.extend(std::iter::repeat_n(freq, n_gen));
            v
        };
        Self {
            k,
            x: groups(1.0 * k, 1.0 * k, 2.0 * k),
            dt: groups(0.5 * k, 0.04 * k, 0.12 * k),
            f: groups(1000.0, 3.0, 5.0),
        }
    }

    /// Same weight `v` on every term and state.
    pub fn uniform(dim: usize, v: f64) -> Self {
        Self {
            k: v,
            x: vec![v; dim],
            dt: vec![v; dim],
            f: vec![v; dim],
        }
    }

    /// Copy with the weights of terms unused by `mode` set to zero.
    pub fn for_mode(&self, mode: LossMode) -> Self {
        let mut w = self.clone();
        if mode == LossMode::Nn {
            w.dt.iter_mut().for_each(|v| *v = 0.0);
        }
        if mode != LossMode::Pinn {
            w.f.iter_mut().for_each(|v| *v = 0.0);
        }
        w
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let s = |v: &[f64]| v.iter().map(|x| x * factor).collect();
        Self {
            k: self.k * factor,
            x: s(&self.x),
            dt: s(&self.dt),
            f: s(&self.f),
        }
    }
}

/// Weighted sum of the loss terms that `mode` uses.
pub fn total_loss(terms: &LossTerms, table: &LossWeightTable, mode: LossMode) -> f64 {
    let (x, dt, f) = terms.weighted(&table.for_mode(mode));
    match mode {
        LossMode::Nn => x,
        LossMode::DtNn => x + dt,
        LossMode::Pinn => x + dt + f,
    }
}
