//! Acoustic tissue properties and the label -> tissue table.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

use super::segmentation::Label;

/// Per-tissue acoustic and scatterer parameters.
///
/// `z` is acoustic impedance in kg m^-2 s^-1, `alpha_db_cm_mhz` attenuation
/// in dB cm^-1 MHz^-1, `c_m_s` sound speed in m/s. `mu0`/`sigma0` control
/// scatterer amplitude, `mu1` the generation probability; `tau` shifts
/// boundary echoes between diffuse and specular and `gamma` amplifies
/// grazing reflections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueProperties {
    pub name: String,
    pub z: f64,
    pub alpha_db_cm_mhz: f64,
    pub c_m_s: f64,
    pub mu0: f64,
    pub sigma0: f64,
    pub mu1: f64,
    pub tau: f64,
    pub gamma: f64,
}

impl TissueProperties {
    pub fn validate(&self) -> Result<()> {
        if self.z <= 0.0 {
            return Err(SimError::validation(format!("{}: impedance must be > 0", self.name)));
        }
        if self.alpha_db_cm_mhz < 0.0 {
            return Err(SimError::validation(format!("{}: attenuation must be >= 0", self.name)));
        }
        if self.c_m_s <= 0.0 {
            return Err(SimError::validation(format!("{}: sound speed must be > 0", self.name)));
        }
        for (v, n) in [(self.mu0, "mu0"), (self.sigma0, "sigma0"), (self.mu1, "mu1")] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::validation(format!("{}: {n} must be in [0,1]", self.name)));
            }
        }
        if !(0.0..=3.0).contains(&self.tau) {
            return Err(SimError::validation(format!("{}: tau must be in [0,3]", self.name)));
        }
        if !(-2.0..=2.0).contains(&self.gamma) {
            return Err(SimError::validation(format!("{}: gamma must be in [-2,2]", self.name)));
        }
        Ok(())
    }

    /// Degassed-water-like background: weak scattering, negligible loss.
    pub fn water() -> Self {
        TissueProperties {
            name: "water".into(),
            z: 1.48e6,
            alpha_db_cm_mhz: 0.002,
            c_m_s: 1480.0,
            mu0: 0.0,
            sigma0: 0.0,
            mu1: 0.0,
            tau: 1.0,
            gamma: 0.0,
        }
    }

    /// Generic soft tissue (liver-like).
    pub fn soft_tissue() -> Self {
        TissueProperties {
            name: "soft_tissue".into(),
            z: 1.65e6,
            alpha_db_cm_mhz: 0.5,
            c_m_s: 1540.0,
            mu0: 0.4,
            sigma0: 0.1,
            mu1: 0.8,
            tau: 1.0,
            gamma: 0.1,
        }
    }
}

/// Ordered label -> properties map (ordering keeps hashes reproducible).
pub type TissueTable = BTreeMap<Label, TissueProperties>;

/// Parse the tissue table JSON: `{"0": {...}, "1": {...}}`.
pub fn load_tissue_table(path: &Path) -> Result<TissueTable> {
    let text = fs::read_to_string(path)
        .map_err(|e| SimError::format(format!("cannot read {}: {e}", path.display())))?;
    parse_tissue_table(&text)
}

pub fn parse_tissue_table(json: &str) -> Result<TissueTable> {
    let raw: BTreeMap<String, TissueProperties> = serde_json::from_str(json)?;
    let mut table = TissueTable::new();
    for (key, props) in raw {
        let label: Label = key
            .parse()
            .map_err(|_| SimError::format(format!("tissue table key {key:?} is not a label")))?;
        props.validate()?;
        table.insert(label, props);
    }
    Ok(table)
}

pub fn save_tissue_table(table: &TissueTable, path: &Path) -> Result<()> {
    let raw: BTreeMap<String, &TissueProperties> =
        table.iter().map(|(k, v)| (k.to_string(), v)).collect();
    fs::write(path, serde_json::to_vec_pretty(&raw)?)?;
    Ok(())
}
