//! Synchronous equilibria by Newton iteration on the angle subsystem.

use nalgebra::{DMatrix, DVector};

use super::system::{Disturbance, ReducedSystem, SystemState};
use crate::error::{Error, Result};

pub const MAX_NEWTON_ITERATIONS: usize = 60;
/// Required infinity norm of the full right-hand side at the returned state.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-10;
const MISMATCH_TOLERANCE: f64 = 1e-13;

/// Finds `x*` with `swing_rhs(x*) = 0` and all generator frequencies at
/// nominal. The first angle is pinned to `guess.delta[0]`.
pub fn equilibrium_solve(
    sys: &ReducedSystem,
    u: Disturbance,
    guess: &SystemState,
) -> Result<SystemState> {
    let n = sys.bus_count();
    if guess.delta.len() != n {
        return Err(Error::Shape(format!("guess has {} angles, system has {n}", guess.delta.len())));
    }
    let mut delta = guess.delta.clone();
    let mut mismatch = vec![0.0; n];
    let mut trial = vec![0.0; n];

    let norm = |m: &[f64]| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    sys.power_mismatch(&delta, u, &mut mismatch);
    let mut current = norm(&mismatch);

    for _ in 0..MAX_NEWTON_ITERATIONS {
        if mismatch.iter().all(|m| m.abs() < MISMATCH_TOLERANCE) {
            break;
        }
        // dF_i/d delta_j for the unpinned buses 1..n
        let jac = mismatch_jacobian(sys, &delta);
        let m = n - 1;
        let a = DMatrix::from_fn(m, m, |r, c| jac[(r + 1) * n + (c + 1)]);
        let b = DVector::from_fn(m, |r, _| -mismatch[r + 1]);
        let step = match a.lu().solve(&b) {
            Some(s) => s,
            None => break,
        };
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            trial.copy_from_slice(&delta);
            for r in 0..m {
                trial[r + 1] += alpha * step[r];
            }
            sys.power_mismatch(&trial, u, &mut mismatch);
            let t = norm(&mismatch);
            if t < current || t < MISMATCH_TOLERANCE {
                improved = true;
                current = t;
                delta.copy_from_slice(&trial);
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            sys.power_mismatch(&delta, u, &mut mismatch);
            break;
        }
    }

    let state = SystemState {
        delta,
        omega: vec![sys.omega0(); sys.n_gen()],
    };
    let mut dx = vec![0.0; sys.state_dim()];
    sys.rhs_into(&state.to_vec(), u, &mut dx);
    let residual = dx.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(residual < EQUILIBRIUM_TOLERANCE) {
        return Err(Error::NoEquilibrium {
            iterations: MAX_NEWTON_ITERATIONS,
            residual,
        });
    }
    Ok(state)
}

fn mismatch_jacobian(sys: &ReducedSystem, delta: &[f64]) -> Vec<f64> {
    // dF_i/d delta_j = K_ij cos(d_i - d_j), diagonal is minus the row sum
    let n = sys.bus_count();
    let v = sys.voltage();
    let mut jac = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if let Some(x) = sys.reactance(i, j) {
                let c = v[i] * v[j] / x * (delta[i] - delta[j]).cos();
                jac[i * n + j] = c;
                jac[i * n + i] -= c;
            }
        }
    }
    jac
}
