//! JSON system configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Configuration bundled with the crate: Kundur's two-area system.
pub const KUNDUR_TWO_AREA_JSON: &str = include_str!("../../config/kundur_two_area.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Generator,
    Load,
    Passive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusConfig {
    pub id: u32,
    pub kind: BusKind,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(rename = "P_set", default, skip_serializing_if = "Option::is_none")]
    pub p_set: Option<f64>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub voltage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineConfig {
    pub from: u32,
    pub to: u32,
    #[serde(rename = "X")]
    pub reactance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    pub disturbance_bus: u32,
    pub fault_bus: u32,
    pub trip_line: [u32; 2],
    pub settle_s: f64,
    pub fault_s: f64,
}

/// How the disturbance injection is balanced so that a synchronous
/// equilibrium at nominal frequency exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balancing {
    /// Load buses absorb the mismatch in proportion to their damping.
    #[default]
    Damping,
    /// No balancing: the injection enters only at the disturbance bus.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub version: u32,
    #[serde(default)]
    pub provenance: serde_json::Value,
    pub omega0_hz: f64,
    pub buses: Vec<BusConfig>,
    pub lines: Vec<LineConfig>,
    #[serde(default)]
    pub balancing: Balancing,
    pub events: EventConfig,
}

impl SystemConfig {
    pub fn kundur_two_area() -> Self {
        serde_json::from_str(KUNDUR_TWO_AREA_JSON).expect("bundled configuration is valid JSON")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Canonical JSON used for content hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    pub(crate) fn bus(&self, id: u32) -> Option<&BusConfig> {
        self.buses.iter().find(|b| b.id == id)
    }
}
