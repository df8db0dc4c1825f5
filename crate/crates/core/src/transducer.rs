//! Virtual probe: element layout, pose, and the scanline fan.
//!
//! Probe frame convention: +z is the probe axis (into the body), +x the
//! lateral axis, +y the elevation axis. B-mode images live in the x-z
//! plane; elevation enters only through the beam profile.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::math::{Quat, Vec3};

/// Default sector angle for phased arrays (typical cardiac probe).
pub const DEFAULT_FAN_ANGLE_RAD: f64 = 75.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanGeometry {
    /// Sector scan; all scanlines share a virtual apex at the probe face.
    Phased { fan_angle_rad: f64 },
    /// Parallel scanlines spaced one element pitch apart.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransducerConfig {
    pub center_frequency_hz: f64,
    pub sampling_frequency_hz: f64,
    pub element_width_mm: f64,
    pub element_height_mm: f64,
    pub kerf_mm: f64,
    pub num_elements: usize,
    pub geometry: ScanGeometry,
}

impl TransducerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_elements < 1 {
            return Err(SimError::validation("num_elements must be >= 1"));
        }
        if self.sampling_frequency_hz < 4.0 * self.center_frequency_hz {
            return Err(SimError::validation(
                "sampling frequency must be at least 4x the center frequency",
            ));
        }
        if let ScanGeometry::Phased { fan_angle_rad } = self.geometry {
            if !(fan_angle_rad > 0.0 && fan_angle_rad < std::f64::consts::PI) {
                return Err(SimError::validation("fan angle must lie in (0, pi)"));
            }
        }
        Ok(())
    }

    /// Element pitch (width + kerf) in mm.
    pub fn pitch_mm(&self) -> f64 {
        self.element_width_mm + self.kerf_mm
    }

    /// Wavelength in mm at the center frequency for a given sound speed.
    pub fn wavelength_mm(&self, c_m_s: f64) -> f64 {
        c_m_s * 1000.0 / self.center_frequency_hz
    }

    /// A P4-2-like cardiac phased array.
    pub fn phased_cardiac() -> Self {
        TransducerConfig {
            center_frequency_hz: 3.6e6,
            sampling_frequency_hz: 50e6,
            element_width_mm: 0.30,
            element_height_mm: 13.0,
            kerf_mm: 0.05,
            num_elements: 128,
            geometry: ScanGeometry::Phased { fan_angle_rad: DEFAULT_FAN_ANGLE_RAD },
        }
    }
}

/// JSON form mirrors the config table field names.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TransducerConfigFile {
    center_frequency: f64,
    sampling_frequency: f64,
    element_width: f64,
    element_height: f64,
    kerf: f64,
    num_elements: usize,
    scan_geometry: String,
    #[serde(default)]
    fan_angle_deg: Option<f64>,
}

pub fn parse_transducer_config(json: &str) -> Result<TransducerConfig> {
    let raw: TransducerConfigFile = serde_json::from_str(json)?;
    let geometry = match raw.scan_geometry.to_ascii_lowercase().as_str() {
        "phased" => ScanGeometry::Phased {
            fan_angle_rad: raw
                .fan_angle_deg
                .map(|d| d.to_radians())
                .unwrap_or(DEFAULT_FAN_ANGLE_RAD),
        },
        "linear" => ScanGeometry::Linear,
        other => return Err(SimError::format(format!("unknown scan geometry {other:?}"))),
    };
    let cfg = TransducerConfig {
        center_frequency_hz: raw.center_frequency,
        sampling_frequency_hz: raw.sampling_frequency,
        element_width_mm: raw.element_width,
        element_height_mm: raw.element_height,
        kerf_mm: raw.kerf,
        num_elements: raw.num_elements,
        geometry,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn transducer_config_to_json(cfg: &TransducerConfig) -> String {
    let (geom, fan) = match cfg.geometry {
        ScanGeometry::Phased { fan_angle_rad } => ("phased", Some(fan_angle_rad.to_degrees())),
        ScanGeometry::Linear => ("linear", None),
    };
    let raw = TransducerConfigFile {
        center_frequency: cfg.center_frequency_hz,
        sampling_frequency: cfg.sampling_frequency_hz,
        element_width: cfg.element_width_mm,
        element_height: cfg.element_height_mm,
        kerf: cfg.kerf_mm,
        num_elements: cfg.num_elements,
        scan_geometry: geom.into(),
        fan_angle_deg: fan,
    };
    serde_json::to_string_pretty(&raw).expect("config serializes")
}

/// Rigid probe pose: position of the probe face center plus orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePose {
    pub position_mm: [f64; 3],
    /// Unit quaternion (w, x, y, z) mapping probe frame to world.
    pub orientation: [f64; 4],
}

impl ProbePose {
    pub fn identity_at(p: Vec3) -> Self {
        ProbePose { position_mm: p.to_array(), orientation: [1.0, 0.0, 0.0, 0.0] }
    }

    pub fn quat(&self) -> Result<Quat> {
        let q = Quat::new(
            self.orientation[0],
            self.orientation[1],
            self.orientation[2],
            self.orientation[3],
        );
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(SimError::validation("pose quaternion is not normalized"));
        }
        Ok(q)
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from_array(self.position_mm)
    }
}

/// One beam direction with its radial sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Scanline {
    pub index: usize,
    pub origin: Vec3,
    pub direction: Vec3,
    /// In-plane axis orthogonal to `direction` (completing the beam frame).
    pub lateral: Vec3,
    /// Out-of-plane axis (elevation), shared across the fan.
    pub elevation: Vec3,
    pub num_samples: usize,
    pub sample_spacing_mm: f64,
}

impl Scanline {
    pub fn depth_mm(&self) -> f64 {
        self.num_samples as f64 * self.sample_spacing_mm
    }

    /// Radial bin of a distance along the beam (nearest sample).
    pub fn bin_of(&self, r_mm: f64) -> Option<usize> {
        if r_mm < 0.0 {
            return None;
        }
        let bin = (r_mm / self.sample_spacing_mm).round() as usize;
        (bin < self.num_samples).then_some(bin)
    }
}

/// Radial sample spacing c/(2 fs) in mm.
pub fn sample_spacing_mm(c_ref_m_s: f64, sampling_frequency_hz: f64) -> f64 {
    c_ref_m_s * 1000.0 / (2.0 * sampling_frequency_hz)
}

/// Lay out the scanline fan for a pose.
///
/// Phased: `num_elements` scanlines share the apex at the probe face and
/// span the fan angle uniformly. Linear: parallel lines one pitch apart.
pub fn make_scanlines(
    cfg: &TransducerConfig,
    pose: &ProbePose,
    depth_mm: f64,
    c_ref_m_s: f64,
) -> Result<Vec<Scanline>> {
    if depth_mm <= 0.0 {
        return Err(SimError::validation("imaging depth must be positive"));
    }
    cfg.validate()?;
    let q = pose.quat()?;
    let apex = pose.position();
    let axis = q.rotate(Vec3::Z);
    let lateral0 = q.rotate(Vec3::X);
    let elevation = q.rotate(Vec3::Y);

    let spacing = sample_spacing_mm(c_ref_m_s, cfg.sampling_frequency_hz);
    let num_samples = (depth_mm / spacing).ceil() as usize;
    let n = cfg.num_elements;

    let mut lines = Vec::with_capacity(n);
    match cfg.geometry {
        ScanGeometry::Phased { fan_angle_rad } => {
            for i in 0..n {
                let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
                let theta = -fan_angle_rad / 2.0 + t * fan_angle_rad;
                let (s, c) = theta.sin_cos();
                let dir = (lateral0 * s + axis * c).normalized();
                let lat = (lateral0 * c - axis * s).normalized();
                lines.push(Scanline {
                    index: i,
                    origin: apex,
                    direction: dir,
                    lateral: lat,
                    elevation,
                    num_samples,
                    sample_spacing_mm: spacing,
                });
            }
        }
        ScanGeometry::Linear => {
            let pitch = cfg.pitch_mm();
            for i in 0..n {
                let off = (i as f64 - (n as f64 - 1.0) / 2.0) * pitch;
                lines.push(Scanline {
                    index: i,
                    origin: apex + lateral0 * off,
                    direction: axis,
                    lateral: lateral0,
                    elevation,
                    num_samples,
                    sample_spacing_mm: spacing,
                });
            }
        }
    }
    Ok(lines)
}
