//! Display pipeline: time-gain compensation, log compression with dynamic
//! range and reject, and scan conversion to a Cartesian pixel grid.
//!
//! Reject convention: after normalizing to the frame peak, a sample at
//! level L dB is zeroed when `L < -(dynamic_range - reject)`; survivors map
//! linearly as `(L + DR) / DR` into [0, 1].

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rfsynth::EnvelopeFrame;
use crate::transducer::Scanline;

#[derive(Debug, Clone, PartialEq)]
pub struct PostprocParams {
    pub tgc_db_per_cm: f64,
    pub dynamic_range_db: f64,
    pub reject_db: f64,
    /// Output (width, height) in pixels.
    pub output_pixels: (usize, usize),
    pub pixel_spacing_mm: f64,
}

impl Default for PostprocParams {
    fn default() -> Self {
        PostprocParams {
            tgc_db_per_cm: 1.5,
            dynamic_range_db: 75.0,
            reject_db: 40.0,
            output_pixels: (768, 576),
            pixel_spacing_mm: 0.23,
        }
    }
}

impl PostprocParams {
    pub fn validate(&self) -> Result<()> {
        if self.dynamic_range_db <= 0.0 {
            return Err(SimError::validation("dynamic range must be positive"));
        }
        if self.reject_db < 0.0 {
            return Err(SimError::validation("reject threshold must be >= 0"));
        }
        if self.pixel_spacing_mm <= 0.0 {
            return Err(SimError::validation("pixel spacing must be positive"));
        }
        Ok(())
    }
}

/// JSON form using the experiment-table names.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PostprocParamsFile {
    dynamic_range: f64,
    time_gain_compensation: f64,
    reject_threshold: f64,
    #[serde(default = "default_pixels")]
    output_pixels: (usize, usize),
    #[serde(default = "default_pixel_spacing")]
    pixel_spacing: f64,
}

fn default_pixels() -> (usize, usize) {
    PostprocParams::default().output_pixels
}

fn default_pixel_spacing() -> f64 {
    PostprocParams::default().pixel_spacing_mm
}

pub fn parse_postproc_params(json: &str) -> Result<PostprocParams> {
    let raw: PostprocParamsFile = serde_json::from_str(json)?;
    let p = PostprocParams {
        tgc_db_per_cm: raw.time_gain_compensation,
        dynamic_range_db: raw.dynamic_range,
        reject_db: raw.reject_threshold,
        output_pixels: raw.output_pixels,
        pixel_spacing_mm: raw.pixel_spacing,
    };
    p.validate()?;
    Ok(p)
}

pub fn postproc_params_to_json(p: &PostprocParams) -> String {
    serde_json::to_string_pretty(&PostprocParamsFile {
        dynamic_range: p.dynamic_range_db,
        time_gain_compensation: p.tgc_db_per_cm,
        reject_threshold: p.reject_db,
        output_pixels: p.output_pixels,
        pixel_spacing: p.pixel_spacing_mm,
    })
    .expect("params serialize")
}

/// Amplitude-domain depth gain: sample at depth d gains `10^(tgc d_cm / 20)`.
pub fn apply_tgc(env: &EnvelopeFrame, tgc_db_per_cm: f64, _scanlines: &[Scanline]) -> EnvelopeFrame {
    let mut out = env.clone();
    let n = env.num_samples;
    let gains: Vec<f64> = (0..n)
        .map(|k| {
            let d_cm = k as f64 * env.sample_spacing_mm / 10.0;
            10f64.powf(tgc_db_per_cm * d_cm / 20.0)
        })
        .collect();
    for line in 0..env.num_scanlines {
        for k in 0..n {
            out.data[line * n + k] *= gains[k];
        }
    }
    out
}

/// Log compression into [0, 1] with the reject floor applied.
///
/// An all-zero frame maps to all zeros. The peak maps to 1 and a sample at
/// -DR dB to 0.
pub fn log_compress(env: &EnvelopeFrame, params: &PostprocParams) -> EnvelopeFrame {
    let peak = env.data.iter().cloned().fold(0.0f64, f64::max);
    let mut out = env.clone();
    if peak <= 0.0 {
        out.data.fill(0.0);
        return out;
    }
    let dr = params.dynamic_range_db;
    let floor_db = -(dr - params.reject_db);
    for v in out.data.iter_mut() {
        if *v <= 0.0 {
            *v = 0.0;
            continue;
        }
        let level = 20.0 * (*v / peak).log10();
        *v = if level < floor_db {
            0.0
        } else {
            ((level + dr) / dr).clamp(0.0, 1.0)
        };
    }
    out
}

/// Scan geometry of a converted image, mapping pixels to the imaging plane.
///
/// World coordinates are (x = lateral mm, z = depth mm) with the probe face
/// at z = 0 and the beam axis at x = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub pixel_spacing_mm: f64,
    pub width: usize,
    pub height: usize,
    /// World x of the left edge of pixel column 0.
    pub x0_mm: f64,
    pub kind: GeometryKind,
    pub depth_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeometryKind {
    /// Sector: scanlines fan from the apex at world (0, 0).
    Phased { theta_min_rad: f64, theta_max_rad: f64 },
    /// Parallel scanlines covering the lateral aperture.
    Linear { lateral_min_mm: f64, lateral_max_mm: f64 },
}

impl ImageGeometry {
    pub fn world_to_px(&self, x_mm: f64, z_mm: f64) -> (f64, f64) {
        (
            (x_mm - self.x0_mm) / self.pixel_spacing_mm - 0.5,
            z_mm / self.pixel_spacing_mm - 0.5,
        )
    }

    pub fn px_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.x0_mm + (col + 0.5) * self.pixel_spacing_mm,
            (row + 0.5) * self.pixel_spacing_mm,
        )
    }
}

/// Scan-converted scalar image with its inside-fan mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanImage {
    pub geometry: ImageGeometry,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ScanImage {
    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.geometry.width + col]
    }

    pub fn masked(&self, col: usize, row: usize) -> bool {
        self.mask[row * self.geometry.width + col]
    }
}

/// Resample scanline data onto a Cartesian grid, bilinear in (scanline,
/// radial sample). Pixels outside the fan are masked and zero.
pub fn scan_convert(
    frame: &EnvelopeFrame,
    scanlines: &[Scanline],
    params: &PostprocParams,
) -> Result<ScanImage> {
    params.validate()?;
    if scanlines.len() != frame.num_scanlines || scanlines.is_empty() {
        return Err(SimError::validation("frame/scanline geometry mismatch"));
    }
    let (width, height) = params.output_pixels;
    let ps = params.pixel_spacing_mm;
    let depth = scanlines[0].depth_mm();
    let n_lines = scanlines.len();
    let n_samples = frame.num_samples;
    let spacing = frame.sample_spacing_mm;

    // lateral extent the grid must cover
    let is_phased = n_lines > 1
        && (scanlines[0].origin - scanlines[n_lines - 1].origin).length() < 1e-9;
    let kind;
    let needed_w;
    if is_phased {
        // fan-center frame: angles measured from the bisector of the sector
        let center_dir =
            (scanlines[0].direction + scanlines[n_lines - 1].direction).normalized();
        let lat_c = scanlines[0].elevation.cross(center_dir).normalized();
        let angle_of =
            |l: &Scanline| l.direction.dot(lat_c).atan2(l.direction.dot(center_dir));
        let theta_min = angle_of(&scanlines[0]);
        let theta_max = angle_of(&scanlines[n_lines - 1]);
        needed_w = 2.0 * depth * theta_min.abs().max(theta_max.abs()).sin();
        kind = GeometryKind::Phased { theta_min_rad: theta_min, theta_max_rad: theta_max };
    } else {
        let half_aperture = (scanlines[n_lines - 1].origin - scanlines[0].origin).length() / 2.0;
        needed_w = 2.0 * half_aperture;
        kind = GeometryKind::Linear {
            lateral_min_mm: -half_aperture,
            lateral_max_mm: half_aperture,
        };
    }
    if (width as f64) * ps < needed_w || (height as f64) * ps < depth {
        return Err(SimError::validation(format!(
            "pixel grid {}x{} at {ps} mm cannot contain the {:.1} x {:.1} mm fan",
            width, height, needed_w, depth
        )));
    }

    let geometry = ImageGeometry {
        pixel_spacing_mm: ps,
        width,
        height,
        x0_mm: -(width as f64) * ps / 2.0,
        kind: kind.clone(),
        depth_mm: depth,
    };

    let mut values = vec![0.0f64; width * height];
    let mut mask = vec![false; width * height];
    for row in 0..height {
        for col in 0..width {
            let (x, z) = geometry.px_to_world(col as f64, row as f64);
            let (line_f, sample_f) = match kind {
                GeometryKind::Phased { theta_min_rad, theta_max_rad } => {
                    let r = (x * x + z * z).sqrt();
                    let theta = x.atan2(z);
                    if theta < theta_min_rad || theta > theta_max_rad || r > depth || z < 0.0 {
                        continue;
                    }
                    let step = (theta_max_rad - theta_min_rad) / (n_lines - 1) as f64;
                    ((theta - theta_min_rad) / step, r / spacing)
                }
                GeometryKind::Linear { lateral_min_mm, lateral_max_mm } => {
                    if x < lateral_min_mm || x > lateral_max_mm || z < 0.0 || z > depth {
                        continue;
                    }
                    let pitch = if n_lines == 1 {
                        1.0
                    } else {
                        (lateral_max_mm - lateral_min_mm) / (n_lines - 1) as f64
                    };
                    ((x - lateral_min_mm) / pitch, z / spacing)
                }
            };
            let l0 = (line_f.floor() as usize).min(n_lines - 1);
            let l1 = (l0 + 1).min(n_lines - 1);
            let fl = (line_f - l0 as f64).clamp(0.0, 1.0);
            let s0 = (sample_f.floor() as usize).min(n_samples - 1);
            let s1 = (s0 + 1).min(n_samples - 1);
            let fsb = (sample_f - s0 as f64).clamp(0.0, 1.0);
            let v00 = frame.value(l0, s0);
            let v01 = frame.value(l0, s1);
            let v10 = frame.value(l1, s0);
            let v11 = frame.value(l1, s1);
            let v0 = v00 + (v01 - v00) * fsb;
            let v1 = v10 + (v11 - v10) * fsb;
            values[row * width + col] = v0 + (v1 - v0) * fl;
            mask[row * width + col] = true;
        }
    }
    Ok(ScanImage { geometry, values, mask })
}

/// 8-bit display image.
#[derive(Debug, Clone, PartialEq)]
pub struct BModeImage {
    pub geometry: ImageGeometry,
    pub pixels: Vec<u8>,
    pub mask: Vec<bool>,
}

impl BModeImage {
    pub fn pixel(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.geometry.width + col]
    }
}

/// Quantize a compressed (already in [0,1]) scan image to 8 bits.
pub fn to_bmode(img: &ScanImage) -> BModeImage {
    let pixels = img
        .values
        .iter()
        .zip(&img.mask)
        .map(|(v, m)| if *m { (v.clamp(0.0, 1.0) * 255.0).round() as u8 } else { 0 })
        .collect();
    BModeImage { geometry: img.geometry.clone(), pixels, mask: img.mask.clone() }
}

/// Write a binary 8-bit portable graymap.
pub fn save_pgm(img: &BModeImage, path: &Path) -> Result<()> {
    let mut bytes =
        format!("P5\n{} {}\n255\n", img.geometry.width, img.geometry.height).into_bytes();
    bytes.extend_from_slice(&img.pixels);
    fs::write(path, bytes)?;
    Ok(())
}

pub fn save_png(img: &BModeImage, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        img.geometry.width as u32,
        img.geometry.height as u32,
    );
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| SimError::format(format!("png: {e}")))?;
    writer
        .write_image_data(&img.pixels)
        .map_err(|e| SimError::format(format!("png: {e}")))?;
    Ok(())
}
