use std::sync::Arc;

use super::config::{Balancing, BusKind, EventConfig, SystemConfig};
use super::network::{kron_reduce, FullNetwork};
use super::Dynamics;
use crate::error::{Error, Result};

/// Coupling magnitudes below this are treated as "no connection".
const COUPLING_EPS: f64 = 1e-9;

/// Admissible range of the bus-7 disturbance in pu.
pub const DISTURBANCE_RANGE: (f64, f64) = (0.0, 6.0);

/// Load change at the disturbance bus.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Disturbance(f64);

impl Disturbance {
    pub fn new(dp7: f64) -> Result<Self> {
        if !dp7.is_finite() || dp7 < DISTURBANCE_RANGE.0 || dp7 > DISTURBANCE_RANGE.1 {
            return Err(Error::Config(format!(
                "dP7 = {dp7} outside [{}, {}] pu",
                DISTURBANCE_RANGE.0, DISTURBANCE_RANGE.1
            )));
        }
        Ok(Self(dp7))
    }

    /// Bypasses the range check; used to probe transfer limits.
    pub fn unchecked(dp7: f64) -> Self {
        Self(dp7)
    }

    pub fn zero() -> Self {
        Self(0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Rotor/bus angles (generators first, then loads) and generator frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
}

impl SystemState {
    pub fn flat(sys: &ReducedSystem) -> Self {
        Self {
            delta: vec![0.0; sys.bus_count()],
            omega: vec![sys.omega0(); sys.n_gen()],
        }
    }

    pub fn from_slice(x: &[f64], n_bus: usize) -> Self {
        Self {
            delta: x[..n_bus].to_vec(),
            omega: x[n_bus..].to_vec(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.delta.clone();
        v.extend_from_slice(&self.omega);
        v
    }

    pub fn dim(&self) -> usize {
        self.delta.len() + self.omega.len()
    }
}

/// Kron-reduced network plus machine and load data: everything the swing
/// equations need.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    origin: Arc<SystemConfig>,
    line_scale: Option<([u32; 2], f64)>,
    bus_ids: Vec<u32>,
    n_gen: usize,
    susceptance: Vec<f64>,
    coupling: Vec<f64>,
    voltage: Vec<f64>,
    inertia: Vec<f64>,
    damping: Vec<f64>,
    p_set: Vec<f64>,
    omega0: f64,
    injection: Vec<f64>,
}

impl ReducedSystem {
    pub fn from_config(cfg: SystemConfig) -> Result<Self> {
        Self::build(Arc::new(cfg), None)
    }

    pub fn kundur_two_area() -> Self {
        Self::from_config(SystemConfig::kundur_two_area()).expect("bundled configuration is valid")
    }

    fn build(origin: Arc<SystemConfig>, line_scale: Option<([u32; 2], f64)>) -> Result<Self> {
        let cfg = &*origin;
        if !(cfg.omega0_hz.is_finite() && cfg.omega0_hz > 0.0) {
            return Err(Error::Config(format!("omega0_hz = {}", cfg.omega0_hz)));
        }
        let net = FullNetwork::from_config(cfg, line_scale)?;
        let reduced = kron_reduce(&net)?;
        let bus_ids = net.retained_ids();
        let n = bus_ids.len();

        let mut voltage = Vec::with_capacity(n);
        let mut p_set = Vec::with_capacity(n);
        let mut inertia = Vec::new();
        let mut damping = Vec::new();
        for &id in &bus_ids {
            let bus = cfg.bus(id).expect("retained bus exists");
            let field = |v: Option<f64>, name: &str| {
                v.ok_or_else(|| Error::Config(format!("bus {id} is missing {name}")))
            };
            voltage.push(field(bus.voltage, "V")?);
            p_set.push(field(bus.p_set, "P_set")?);
            match bus.kind {
                BusKind::Generator => {
                    let h = field(bus.inertia, "H")?;
                    if !(h > 0.0) {
                        return Err(Error::Config(format!("bus {id}: H = {h} must be positive")));
                    }
                    inertia.push(h);
                }
                BusKind::Load => {
                    let d = field(bus.damping, "D")?;
                    if !(d > 0.0) {
                        return Err(Error::Config(format!("bus {id}: D = {d} must be positive")));
                    }
                    damping.push(d);
                }
                BusKind::Passive => unreachable!("passive buses are eliminated"),
            }
        }
        for bus in cfg.buses.iter().filter(|b| b.kind == BusKind::Passive) {
            if bus.p_set.is_some_and(|p| p != 0.0) {
                return Err(Error::Config(format!("passive bus {} has an injection", bus.id)));
            }
        }
        let n_gen = inertia.len();
        if n_gen == 0 {
            return Err(Error::Config("no generator buses".into()));
        }

        let mut susceptance = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let b = reduced[(i, j)].im;
                    if b.abs() > COUPLING_EPS {
                        if b < 0.0 {
                            return Err(Error::Config(format!(
                                "reduced coupling {}-{} is capacitive",
                                bus_ids[i], bus_ids[j]
                            )));
                        }
                        susceptance[i * n + j] = b;
                    }
                }
            }
        }

        let dist = bus_ids
            .iter()
            .position(|&id| id == cfg.events.disturbance_bus)
            .ok_or_else(|| Error::Config("disturbance bus is not retained".into()))?;
        let mut injection = vec![0.0; n];
        injection[dist] = 1.0;
        if cfg.balancing == Balancing::Damping {
            let total: f64 = damping.iter().sum();
            for (k, d) in damping.iter().enumerate() {
                injection[n_gen + k] -= d / total;
            }
        }

        let mut sys = Self {
            origin: origin.clone(),
            line_scale,
            bus_ids,
            n_gen,
            susceptance,
            coupling: vec![0.0; n * n],
            voltage,
            inertia,
            damping,
            p_set,
            omega0: 2.0 * std::f64::consts::PI * cfg.omega0_hz,
            injection,
        };
        sys.refresh_coupling();
        Ok(sys)
    }

    fn refresh_coupling(&mut self) {
        let n = self.bus_count();
        for i in 0..n {
            for j in 0..n {
                self.coupling[i * n + j] =
                    self.voltage[i] * self.voltage[j] * self.susceptance[i * n + j];
            }
        }
    }

    /// Copy with one line's reactance multiplied by `factor` in the full
    /// network, re-reduced. Bus voltages are reset to the configuration.
    pub fn with_line_scaled(&self, line: [u32; 2], factor: f64) -> Result<Self> {
        let combined = match self.line_scale {
            Some((l, f)) if l == line => f * factor,
            Some(_) => {
                return Err(Error::Config("only one line modification is supported".into()))
            }
            None => factor,
        };
        Self::build(self.origin.clone(), Some((line, combined)))
    }

    /// Copy with one bus voltage overridden. `V = 0` removes the bus from
    /// all flow terms without division.
    pub fn with_voltage(&self, bus: u32, v: f64) -> Result<Self> {
        let idx = self.bus_index(bus)?;
        let mut out = self.clone();
        out.voltage[idx] = v;
        out.refresh_coupling();
        Ok(out)
    }

    pub fn bus_index(&self, bus: u32) -> Result<usize> {
        self.bus_ids
            .iter()
            .position(|&id| id == bus)
            .ok_or_else(|| Error::Config(format!("bus {bus} is not retained")))
    }

    /// Little-endian bytes of every numeric parameter; two systems with equal
    /// fingerprints have identical dynamics.
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(self.bus_ids.iter().flat_map(|b| b.to_le_bytes()));
        for v in [
            &self.coupling,
            &self.voltage,
            &self.inertia,
            &self.damping,
            &self.p_set,
            &self.injection,
        ] {
            out.extend(v.iter().flat_map(|x| x.to_le_bytes()));
        }
        out.extend(self.omega0.to_le_bytes());
        out
    }

    pub fn config(&self) -> &SystemConfig {
        &self.origin
    }

    pub fn events(&self) -> &EventConfig {
        &self.origin.events
    }

    pub fn bus_ids(&self) -> &[u32] {
        &self.bus_ids
    }

    pub fn bus_count(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn n_gen(&self) -> usize {
        self.n_gen
    }

    pub fn n_load(&self) -> usize {
        self.bus_count() - self.n_gen
    }

    pub fn state_dim(&self) -> usize {
        self.bus_count() + self.n_gen
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn voltage(&self) -> &[f64] {
        &self.voltage
    }

    pub fn inertia(&self) -> &[f64] {
        &self.inertia
    }

    pub fn damping(&self) -> &[f64] {
        &self.damping
    }

    pub fn p_set(&self) -> &[f64] {
        &self.p_set
    }

    /// Per-bus injection change per pu of disturbance (disturbance bus minus
    /// balancing shares).
    pub fn injection_pattern(&self) -> &[f64] {
        &self.injection
    }

    /// Effective reactance between two retained buses, `None` if unconnected.
    pub fn reactance(&self, a: usize, b: usize) -> Option<f64> {
        let s = self.susceptance[a * self.bus_count() + b];
        (s != 0.0).then(|| 1.0 / s)
    }

    /// Reactance of a line of the full network after modifications.
    pub fn line_reactance(&self, line: [u32; 2]) -> Option<f64> {
        let base = self.origin.lines.iter().find(|l| {
            (l.from == line[0] && l.to == line[1]) || (l.from == line[1] && l.to == line[0])
        })?;
        let factor = match self.line_scale {
            Some((l, f)) if l == line || l == [line[1], line[0]] => f,
            _ => 1.0,
        };
        Some(base.reactance * factor)
    }

    /// Net injection minus electrical flow at every retained bus.
    pub fn power_mismatch(&self, delta: &[f64], u: Disturbance, out: &mut [f64]) {
        let n = self.bus_count();
        for i in 0..n {
            out[i] = self.p_set[i] + u.0 * self.injection[i];
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let k = self.coupling[i * n + j];
                if k != 0.0 {
                    let flow = k * (delta[i] - delta[j]).sin();
                    out[i] -= flow;
                    out[j] += flow;
                }
            }
        }
    }

    /// Unchecked right-hand side on a flat state.
    pub fn rhs_into(&self, x: &[f64], u: Disturbance, dx: &mut [f64]) {
        let n = self.bus_count();
        let g = self.n_gen;
        let (delta, omega) = x.split_at(n);
        let (ddelta, domega) = dx.split_at_mut(n);
        self.power_mismatch(delta, u, ddelta);
        for i in 0..g {
            domega[i] = self.omega0 / (2.0 * self.inertia[i]) * ddelta[i];
            ddelta[i] = omega[i] - self.omega0;
        }
        for (k, d) in self.damping.iter().enumerate() {
            ddelta[g + k] /= d;
        }
    }

    /// Cotangent-Jacobian product `out = cotangent^T df/dx`.
    pub fn rhs_vjp(&self, x: &[f64], _u: Disturbance, cotangent: &[f64], out: &mut [f64]) {
        let n = self.bus_count();
        let g = self.n_gen;
        let delta = &x[..n];
        // weight of each bus's outgoing flow in the cotangent
        let mut w = [0.0; 16];
        let mut w_heap;
        let w: &mut [f64] = if n <= 16 {
            &mut w[..n]
        } else {
            w_heap = vec![0.0; n];
            &mut w_heap
        };
        for i in 0..g {
            w[i] = -cotangent[n + i] * self.omega0 / (2.0 * self.inertia[i]);
        }
        for k in 0..(n - g) {
            w[g + k] = -cotangent[g + k] / self.damping[k];
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let k = self.coupling[i * n + j];
                if k != 0.0 {
                    let c = k * (delta[i] - delta[j]).cos();
                    let d = (w[i] - w[j]) * c;
                    out[i] += d;
                    out[j] -= d;
                }
            }
        }
        for i in 0..g {
            out[n + i] = cotangent[i];
        }
    }

    /// Dense Jacobian of the right-hand side, row-major.
    pub fn jacobian(&self, x: &[f64], u: Disturbance) -> Vec<f64> {
        let m = self.state_dim();
        let mut jac = vec![0.0; m * m];
        let mut e = vec![0.0; m];
        let mut row = vec![0.0; m];
        for r in 0..m {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[r] = 1.0;
            self.rhs_vjp(x, u, &e, &mut row);
            jac[r * m..(r + 1) * m].copy_from_slice(&row);
        }
        jac
    }
}

impl Dynamics for ReducedSystem {
    fn state_dim(&self) -> usize {
        ReducedSystem::state_dim(self)
    }

    fn rhs(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        self.rhs_into(x, Disturbance(u), dx)
    }

    fn rhs_vjp(&self, x: &[f64], u: f64, cotangent: &[f64], out: &mut [f64]) {
        ReducedSystem::rhs_vjp(self, x, Disturbance(u), cotangent, out)
    }
}

/// Swing-equation right-hand side, ordered `[delta..., omega...]`.
pub fn swing_rhs(state: &SystemState, u: Disturbance, sys: &ReducedSystem) -> Result<Vec<f64>> {
    if state.delta.len() != sys.bus_count() || state.omega.len() != sys.n_gen() {
        return Err(Error::Shape(format!(
            "state has {}+{} entries, system needs {}+{}",
            state.delta.len(),
            state.omega.len(),
            sys.bus_count(),
            sys.n_gen()
        )));
    }
    for (index, &value) in state.delta.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { what: "delta", index, value });
        }
    }
    for (index, &value) in state.omega.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { what: "omega", index, value });
        }
    }
    if !u.0.is_finite() {
        return Err(Error::NonFinite { what: "dP7", index: 0, value: u.0 });
    }
    let x = state.to_vec();
    let mut dx = vec![0.0; x.len()];
    sys.rhs_into(&x, u, &mut dx);
    Ok(dx)
}
