//! Bus admittance matrices and Kron reduction.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::config::{BusKind, SystemConfig};
use crate::error::{Error, Result};

/// Relative pivot size below which the eliminated block is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-12;

/// Full bus admittance matrix together with the buses that survive reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct FullNetwork {
    bus_ids: Vec<u32>,
    admittance: DMatrix<Complex64>,
    retained: Vec<usize>,
}

impl FullNetwork {
    /// `retained` holds matrix indices, in the order the reduced matrix uses.
    pub fn new(
        bus_ids: Vec<u32>,
        admittance: DMatrix<Complex64>,
        retained: Vec<usize>,
    ) -> Result<Self> {
        let n = admittance.nrows();
        if admittance.ncols() != n || bus_ids.len() != n {
            return Err(Error::Config(format!(
                "admittance is {}x{} for {} buses",
                admittance.nrows(),
                admittance.ncols(),
                bus_ids.len()
            )));
        }
        let scale = admittance.iter().map(|y| y.norm()).fold(0.0, f64::max).max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (admittance[(i, j)] - admittance[(j, i)]).norm() > 1e-12 * scale {
                    return Err(Error::Config(format!(
                        "admittance not symmetric at ({}, {})",
                        bus_ids[i], bus_ids[j]
                    )));
                }
            }
        }
        if retained.is_empty() {
            return Err(Error::Config("no retained buses".into()));
        }
        let mut seen = vec![false; n];
        for &r in &retained {
            if r >= n || seen[r] {
                return Err(Error::Config(format!("bad retained bus index {r}")));
            }
            seen[r] = true;
        }
        Ok(Self {
            bus_ids,
            admittance,
            retained,
        })
    }

    /// Builds the network of a configuration. Generator and load buses are
    /// retained (generators first, in configuration order); passive buses are
    /// eliminated. `reactance_scale` multiplies the reactance of one line,
    /// which is how a circuit trip is expressed.
    pub fn from_config(cfg: &SystemConfig, reactance_scale: Option<([u32; 2], f64)>) -> Result<Self> {
        let n = cfg.buses.len();
        let index_of = |id: u32| -> Result<usize> {
            cfg.buses
                .iter()
                .position(|b| b.id == id)
                .ok_or_else(|| Error::Config(format!("line references unknown bus {id}")))
        };
        let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        let mut scaled = false;
        for line in &cfg.lines {
            if !(line.reactance.is_finite() && line.reactance > 0.0) {
                return Err(Error::Config(format!(
                    "line {}-{} has reactance {}",
                    line.from, line.to, line.reactance
                )));
            }
            let (a, b) = (index_of(line.from)?, index_of(line.to)?);
            if a == b {
                return Err(Error::Config(format!("self-loop at bus {}", line.from)));
            }
            let mut x = line.reactance;
            if let Some((pair, factor)) = reactance_scale {
                if (pair[0] == line.from && pair[1] == line.to)
                    || (pair[0] == line.to && pair[1] == line.from)
                {
                    x *= factor;
                    scaled = true;
                }
            }
            // series element jX
            let yl = Complex64::new(0.0, -1.0 / x);
            y[(a, a)] += yl;
            y[(b, b)] += yl;
            y[(a, b)] -= yl;
            y[(b, a)] -= yl;
        }
        if let Some((pair, _)) = reactance_scale {
            if !scaled {
                return Err(Error::Config(format!("no line between {} and {}", pair[0], pair[1])));
            }
        }
        let gens = cfg.buses.iter().enumerate().filter(|(_, b)| b.kind == BusKind::Generator);
        let loads = cfg.buses.iter().enumerate().filter(|(_, b)| b.kind == BusKind::Load);
        let retained = gens.chain(loads).map(|(i, _)| i).collect();
        Self::new(cfg.buses.iter().map(|b| b.id).collect(), y, retained)
    }

    pub fn bus_count(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn bus_ids(&self) -> &[u32] {
        &self.bus_ids
    }

    pub fn admittance(&self) -> &DMatrix<Complex64> {
        &self.admittance
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn retained_ids(&self) -> Vec<u32> {
        self.retained.iter().map(|&i| self.bus_ids[i]).collect()
    }

    pub fn eliminated(&self) -> Vec<usize> {
        (0..self.bus_count()).filter(|i| !self.retained.contains(i)).collect()
    }
}

/// Schur complement `Y_rr - Y_re Y_ee^-1 Y_er` over the retained buses.
pub fn kron_reduce(net: &FullNetwork) -> Result<DMatrix<Complex64>> {
    let r = net.retained();
    let e = net.eliminated();
    let y = net.admittance();
    let y_rr = y.select_rows(r).select_columns(r);
    if e.is_empty() {
        return Ok(y_rr);
    }
    let y_re = y.select_rows(r).select_columns(&e);
    let y_er = y.select_rows(&e).select_columns(r);
    let y_ee = y.select_rows(&e).select_columns(&e);

    let lu = y_ee.full_piv_lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..e.len()).map(|i| u[(i, i)].norm()).collect();
    let largest = pivots.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 || pivots.iter().any(|&p| p <= SINGULAR_PIVOT * largest) {
        let ids: Vec<String> = e.iter().map(|&i| net.bus_ids()[i].to_string()).collect();
        return Err(Error::SingularNetwork(format!(
            "eliminated buses [{}]",
            ids.join(", ")
        )));
    }
    let solved = lu
        .solve(&y_er)
        .ok_or_else(|| Error::SingularNetwork("LU solve failed".into()))?;
    let reduced = y_rr - y_re * solved;
    Ok((&reduced + reduced.transpose()) * Complex64::new(0.5, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(x1: f64, x2: f64) -> FullNetwork {
        let mut y = DMatrix::from_element(3, 3, Complex64::new(0.0, 0.0));
        for (a, b, x) in [(0, 1, x1), (1, 2, x2)] {
            let yl = Complex64::new(0.0, -1.0 / x);
            y[(a, a)] += yl;
            y[(b, b)] += yl;
            y[(a, b)] -= yl;
            y[(b, a)] -= yl;
        }
        FullNetwork::new(vec![1, 2, 3], y, vec![0, 2]).unwrap()
    }

    #[test]
    fn series_reactances_add() {
        let red = kron_reduce(&chain(0.3, 0.45)).unwrap();
        // off-diagonal of a series element is +j/X
        let x_eff = 1.0 / red[(0, 1)].im;
        assert!((x_eff - 0.75).abs() < 1e-14);
        assert!(red[(0, 1)].re.abs() < 1e-15);
    }

    #[test]
    fn no_elimination_is_identity() {
        let net = chain(0.2, 0.1);
        let all = FullNetwork::new(net.bus_ids().to_vec(), net.admittance().clone(), vec![0, 1, 2])
            .unwrap();
        assert_eq!(kron_reduce(&all).unwrap(), *net.admittance());
    }

    #[test]
    fn isolated_passive_bus_is_singular() {
        let mut y = DMatrix::from_element(3, 3, Complex64::new(0.0, 0.0));
        let yl = Complex64::new(0.0, -10.0);
        y[(0, 0)] += yl;
        y[(1, 1)] += yl;
        y[(0, 1)] -= yl;
        y[(1, 0)] -= yl;
        let net = FullNetwork::new(vec![1, 2, 3], y, vec![0, 1]).unwrap();
        assert!(matches!(kron_reduce(&net), Err(Error::SingularNetwork(_))));
    }

    #[test]
    fn rejects_asymmetric_admittance() {
        let mut y = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        y[(0, 1)] = Complex64::new(0.0, 1.0);
        assert!(FullNetwork::new(vec![1, 2], y, vec![0]).is_err());
    }

    #[test]
    fn kundur_reduction_keeps_areas_linked_only_through_7_9() {
        let cfg = SystemConfig::kundur_two_area();
        let net = FullNetwork::from_config(&cfg, None).unwrap();
        assert_eq!(net.retained_ids(), vec![1, 2, 3, 4, 7, 9]);
        let red = kron_reduce(&net).unwrap();
        // area 1 = {1, 2, 7}, area 2 = {3, 4, 9}
        for (a, b) in [(0, 2), (0, 3), (1, 2), (1, 3), (0, 5), (2, 4)] {
            assert!(red[(a, b)].norm() < 1e-9, "({a},{b}) = {}", red[(a, b)]);
        }
        let x79 = 1.0 / red[(4, 5)].im;
        assert!((x79 - 0.11).abs() < 1e-12);
        let tripped = kron_reduce(&FullNetwork::from_config(&cfg, Some(([8, 9], 2.0))).unwrap()).unwrap();
        assert!((1.0 / tripped[(4, 5)].im - 0.165).abs() < 1e-12);
    }
}
