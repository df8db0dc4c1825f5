//! RF synthesis: convolve the intensity-gated scatterer train with a
//! cosine-modulated PSF and detect the envelope.
//!
//! Per scanline the projected scatterers form an impulse train
//! `s[k] = sum w_q a_q`; the traced intensity gates it per bin and one 1-D
//! axial convolution per scanline produces the RF line. The kernel carries
//! a quadrature (sine) channel so the envelope is the magnitude of the
//! analytic signal without a global transform.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::pathtracer::IntensityMap;
use crate::scatterfield::{beam_weight, project_to_scanline, BeamProfile, Scatterer, ScattererIndex};
use crate::transducer::{Scanline, TransducerConfig};

/// Cosine-modulated Gaussian pulse sampled on the radial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfKernel {
    /// In-phase (cosine) taps; odd count, peak at the center tap.
    pub taps_i: Vec<f64>,
    /// Quadrature (sine) taps.
    pub taps_q: Vec<f64>,
    pub sigma_r_mm: f64,
    pub center_frequency_hz: f64,
    pub sampling_frequency_hz: f64,
    pub sample_spacing_mm: f64,
}

impl PsfKernel {
    pub fn half_width(&self) -> usize {
        self.taps_i.len() / 2
    }
}

/// Axial pulse width giving ~2 wavelengths FWHM at the center frequency.
pub fn default_sigma_r_mm(cfg: &TransducerConfig, c_ref_m_s: f64) -> f64 {
    2.0 * cfg.wavelength_mm(c_ref_m_s) / 2.355
}

/// Sample the PSF at the radial grid: `exp(-r^2 / 2 sigma_r^2) cos(2 pi f t)`
/// with t the two-way time of radial offset r. Support spans 6 sigma_r.
pub fn make_kernel(cfg: &TransducerConfig, sigma_r_mm: f64, c_ref_m_s: f64) -> PsfKernel {
    assert!(sigma_r_mm > 0.0, "sigma_r must be positive");
    let spacing = crate::transducer::sample_spacing_mm(c_ref_m_s, cfg.sampling_frequency_hz);
    let half = ((3.0 * sigma_r_mm / spacing).floor() as usize).max(1);
    let n = 2 * half + 1;
    let mut taps_i = Vec::with_capacity(n);
    let mut taps_q = Vec::with_capacity(n);
    let omega = 2.0 * std::f64::consts::PI * cfg.center_frequency_hz / cfg.sampling_frequency_hz;
    for k in -(half as i64)..=half as i64 {
        let r = k as f64 * spacing;
        let gauss = (-r * r / (2.0 * sigma_r_mm * sigma_r_mm)).exp();
        let phase = omega * k as f64;
        taps_i.push(gauss * phase.cos());
        taps_q.push(gauss * phase.sin());
    }
    PsfKernel {
        taps_i,
        taps_q,
        sigma_r_mm,
        center_frequency_hz: cfg.center_frequency_hz,
        sampling_frequency_hz: cfg.sampling_frequency_hz,
        sample_spacing_mm: spacing,
    }
}

/// Synthesized RF scanlines (in-phase) with the quadrature channel kept for
/// envelope detection.
#[derive(Debug, Clone, PartialEq)]
pub struct RfFrame {
    pub num_scanlines: usize,
    pub num_samples: usize,
    pub in_phase: Vec<f64>,
    pub quadrature: Vec<f64>,
    pub sample_spacing_mm: f64,
    pub sampling_frequency_hz: f64,
}

impl RfFrame {
    pub fn rf_row(&self, line: usize) -> &[f64] {
        &self.in_phase[line * self.num_samples..(line + 1) * self.num_samples]
    }
}

/// Detected envelope per scanline.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeFrame {
    pub num_scanlines: usize,
    pub num_samples: usize,
    pub data: Vec<f64>,
    pub sample_spacing_mm: f64,
}

impl EnvelopeFrame {
    pub fn row(&self, line: usize) -> &[f64] {
        &self.data[line * self.num_samples..(line + 1) * self.num_samples]
    }

    pub fn value(&self, line: usize, sample: usize) -> f64 {
        self.data[line * self.num_samples + sample]
    }
}

/// Build each scanline's gated impulse train and convolve it with the
/// axial kernel (the separable fast path: one 1-D convolution per line).
pub fn synthesize(
    map: &IntensityMap,
    scatterers: &[Scatterer],
    profile: &BeamProfile,
    kernel: &PsfKernel,
    scanlines: &[Scanline],
) -> Result<RfFrame> {
    if map.num_scanlines != scanlines.len() {
        return Err(SimError::validation(format!(
            "intensity map has {} scanlines, geometry has {}",
            map.num_scanlines,
            scanlines.len()
        )));
    }
    if scanlines.is_empty() {
        return Ok(RfFrame {
            num_scanlines: 0,
            num_samples: 0,
            in_phase: Vec::new(),
            quadrature: Vec::new(),
            sample_spacing_mm: kernel.sample_spacing_mm,
            sampling_frequency_hz: kernel.sampling_frequency_hz,
        });
    }
    let num_samples = scanlines[0].num_samples;
    if map.num_samples != num_samples {
        return Err(SimError::validation("intensity map sample count mismatch"));
    }
    let index = ScattererIndex::build(scatterers, scanlines);
    let cutoff = profile.lateral_cutoff_mm();

    let rows: Vec<(Vec<f64>, Vec<f64>)> = scanlines
        .par_iter()
        .map(|line| {
            let mut train = vec![0.0f64; num_samples];
            index.candidates(line, cutoff, |i| {
                let s = &scatterers[i as usize];
                if let Some(p) = project_to_scanline(s, line, cutoff) {
                    let w = beam_weight(profile, p.delta_l_mm, p.delta_e_mm, p.radial_mm);
                    train[p.radial_bin] += w * s.amplitude;
                }
            });
            let gated: Vec<f64> = train
                .iter()
                .zip(map.row(line.index))
                .map(|(t, i)| t * i)
                .collect();
            (
                convolve_same(&gated, &kernel.taps_i),
                convolve_same(&gated, &kernel.taps_q),
            )
        })
        .collect();

    let mut in_phase = Vec::with_capacity(scanlines.len() * num_samples);
    let mut quadrature = Vec::with_capacity(scanlines.len() * num_samples);
    for (i_row, q_row) in rows {
        in_phase.extend_from_slice(&i_row);
        quadrature.extend_from_slice(&q_row);
    }
    Ok(RfFrame {
        num_scanlines: scanlines.len(),
        num_samples,
        in_phase,
        quadrature,
        sample_spacing_mm: kernel.sample_spacing_mm,
        sampling_frequency_hz: kernel.sampling_frequency_hz,
    })
}

/// Same-size 1-D convolution with an odd, center-anchored kernel.
fn convolve_same(signal: &[f64], taps: &[f64]) -> Vec<f64> {
    let half = taps.len() / 2;
    let n = signal.len();
    let mut out = vec![0.0f64; n];
    for (j, &s) in signal.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let lo = j.saturating_sub(half);
        let hi = (j + half).min(n - 1);
        for m in lo..=hi {
            out[m] += s * taps[m + half - j];
        }
    }
    out
}

/// Envelope as the magnitude of the analytic signal.
pub fn envelope(rf: &RfFrame) -> EnvelopeFrame {
    let data = rf
        .in_phase
        .iter()
        .zip(&rf.quadrature)
        .map(|(i, q)| i.hypot(*q))
        .collect();
    EnvelopeFrame {
        num_scanlines: rf.num_scanlines,
        num_samples: rf.num_samples,
        data,
        sample_spacing_mm: rf.sample_spacing_mm,
    }
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    num_scanlines: usize,
    num_samples: usize,
    fs: f64,
    sample_spacing_mm: f64,
    channel: String,
}

fn write_dump(path: &Path, header: &DumpHeader, data: &[f64]) -> Result<()> {
    let mut bytes = serde_json::to_vec(header)?;
    bytes.push(b'\n');
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_dump(path: &Path) -> Result<(DumpHeader, Vec<f64>)> {
    let bytes = fs::read(path)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| SimError::format("dump missing header line"))?;
    let header: DumpHeader = serde_json::from_slice(&bytes[..nl])?;
    let payload = &bytes[nl + 1..];
    let expect = header.num_scanlines * header.num_samples * 4;
    if payload.len() != expect {
        return Err(SimError::format(format!(
            "dump payload is {} bytes, expected {expect}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((header, data))
}

/// Raw RF dump: one-line JSON header, then little-endian f32 samples.
pub fn save_rf_dump(rf: &RfFrame, path: &Path) -> Result<()> {
    let header = DumpHeader {
        num_scanlines: rf.num_scanlines,
        num_samples: rf.num_samples,
        fs: rf.sampling_frequency_hz,
        sample_spacing_mm: rf.sample_spacing_mm,
        channel: "rf".into(),
    };
    write_dump(path, &header, &rf.in_phase)
}

pub fn save_envelope_dump(env: &EnvelopeFrame, fs_hz: f64, path: &Path) -> Result<()> {
    let header = DumpHeader {
        num_scanlines: env.num_scanlines,
        num_samples: env.num_samples,
        fs: fs_hz,
        sample_spacing_mm: env.sample_spacing_mm,
        channel: "envelope".into(),
    };
    write_dump(path, &header, &env.data)
}

pub fn load_envelope_dump(path: &Path) -> Result<EnvelopeFrame> {
    let (header, data) = read_dump(path)?;
    if header.channel != "envelope" {
        return Err(SimError::format(format!(
            "expected an envelope dump, found channel {:?}",
            header.channel
        )));
    }
    Ok(EnvelopeFrame {
        num_scanlines: header.num_scanlines,
        num_samples: header.num_samples,
        data,
        sample_spacing_mm: header.sample_spacing_mm,
    })
}
