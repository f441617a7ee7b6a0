//! Dormand-Prince 5(4) with Hairer's quartic continuous extension.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IntegrationFailure, Result};

// Butcher tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self::with_tolerance(1e-9)
    }
}

impl SolverSettings {
    /// `rtol = atol = tol`.
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            h_init: 1e-4,
            h_max: 0.1,
            max_steps: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rtol > 0.0
            && self.atol > 0.0
            && self.h_init > 0.0
            && self.h_init <= self.h_max
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver settings {self:?}")))
        }
    }
}

/// Accepted steps of one integration with their interpolation coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrajectory {
    dim: usize,
    times: Vec<f64>,
    /// row k is the state at `times[k]`
    states: Vec<f64>,
    /// five coefficient vectors per step
    cont: Vec<f64>,
    rhs_evals: usize,
    rejected: usize,
}

impl DenseTrajectory {
    fn new(dim: usize, t0: f64, x0: &[f64]) -> Self {
        Self {
            dim,
            times: vec![t0],
            states: x0.to_vec(),
            cont: Vec::new(),
            rhs_evals: 0,
            rejected: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn accepted_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    /// Right-hand side evaluations spent on this trajectory.
    pub fn rhs_evals(&self) -> usize {
        self.rhs_evals
    }

    /// State at `t` written into `out`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(Error::OutOfSpan { t, start, end });
        }
        // first knot >= t
        let k = self.times.partition_point(|&tk| tk < t);
        if self.times[k] == t {
            out.copy_from_slice(self.state(k));
            return Ok(());
        }
        let step = k - 1;
        let (t0, t1) = (self.times[step], self.times[step + 1]);
        let theta = (t - t0) / (t1 - t0);
        let theta1 = 1.0 - theta;
        let n = self.dim;
        let c = &self.cont[step * 5 * n..(step + 1) * 5 * n];
        for i in 0..n {
            out[i] = c[i]
                + theta
                    * (c[n + i]
                        + theta1 * (c[2 * n + i] + theta * (c[3 * n + i] + theta1 * c[4 * n + i])));
        }
        Ok(())
    }

    /// States at increasing `times`, one row per time.
    pub fn sample(&self, times: &[f64]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((times.len(), self.dim));
        for (row, &t) in out.rows_mut().into_iter().zip(times) {
            let slice = row.into_slice().expect("standard layout");
            self.eval_into(t, slice)?;
        }
        Ok(out)
    }
}

/// Integrates `dx/dt = rhs(t, x)` over `t_span` with error control
/// `|err_i| <= atol + rtol * max(|x_i|, |x_i_new|)`.
pub fn integrate_adaptive<F>(
    mut rhs: F,
    x0: &[f64],
    t_span: (f64, f64),
    settings: &SolverSettings,
) -> Result<DenseTrajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    settings.validate()?;
    let (ta, tb) = t_span;
    if !(ta < tb) {
        return Err(Error::Config(format!("empty time span [{ta}, {tb}]")));
    }
    if let Some((index, &value)) = x0.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { what: "x0", index, value });
    }
    let n = x0.len();
    let mut traj = DenseTrajectory::new(n, ta, x0);

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut y = x0.to_vec();
    let mut y1 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];

    let mut t = ta;
    rhs(t, &y, &mut k1);
    traj.rhs_evals += 1;
    let mut h = settings.h_init.min(settings.h_max).min(tb - ta);
    let mut steps = 0usize;
    let mut last_rejected = false;
    let min_step = |t: f64| 16.0 * f64::EPSILON * t.abs().max(1.0);

    let fail = |traj: DenseTrajectory, t: f64, reason| Error::Integration {
        t,
        reason,
        partial: Box::new(traj),
    };

    while t < tb {
        if steps >= settings.max_steps {
            return Err(fail(traj, t, IntegrationFailure::MaxSteps));
        }
        if h < min_step(t) {
            return Err(fail(traj, t, IntegrationFailure::StepUnderflow));
        }
        let last = t + h >= tb;
        if last {
            h = tb - t;
        }
        steps += 1;

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { tb } else { t + h };
        rhs(t_new, &ytmp, &mut k6);
        for i in 0..n {
            y1[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t_new, &y1, &mut k7);
        traj.rhs_evals += 6;

        let mut err = 0.0f64;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = settings.atol + settings.rtol * y[i].abs().max(y1[i].abs());
            err = err.max((e / sk).abs());
        }
        if !err.is_finite() {
            if y1.iter().any(|v| !v.is_finite()) && h <= min_step(t) * 2.0 {
                return Err(fail(traj, t, IntegrationFailure::NonFiniteState));
            }
            h *= FAC_MIN;
            traj.rejected += 1;
            last_rejected = true;
            continue;
        }

        let mut fac = SAFETY * err.powf(-0.2);
        if err <= 1.0 {
            // accept
            let base = traj.cont.len();
            traj.cont.resize(base + 5 * n, 0.0);
            let c = &mut traj.cont[base..];
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                c[i] = y[i];
                c[n + i] = ydiff;
                c[2 * n + i] = bspl;
                c[3 * n + i] = ydiff - h * k7[i] - bspl;
                c[4 * n + i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            traj.times.push(t);
            traj.states.extend_from_slice(&y);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h *= fac.clamp(FAC_MIN, FAC_MAX);
            h = h.min(settings.h_max);
        } else {
            traj.rejected += 1;
            last_rejected = true;
            h *= fac.clamp(FAC_MIN, 1.0);
        }
    }
    Ok(traj)
}
