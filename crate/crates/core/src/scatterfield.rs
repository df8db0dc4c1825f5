//! Tissue-dependent scatterer generation and beam-profile weighting.
//!
//! Scatterers sit on a jittered lattice at a controlled density. Each
//! candidate cell draws its jitter, keep-test, and amplitude from a
//! counter-based stream keyed by (seed, cell index), so the field is
//! reproducible across runs and thread counts. A candidate survives iff
//! u < mu1 of the tissue at its position; its amplitude is
//! max(0, mu0 + sigma0 * N(0,1)).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anatomy::AnatomyVolume;
use crate::error::{Result, SimError};
use crate::math::Vec3;
use crate::rng::{norm_icdf, Stream};
use crate::transducer::Scanline;

const SCATTER_SALT: u64 = 0x5CA7_7E2E_5EED_0001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub position: Vec3,
    pub amplitude: f64,
}

/// Where and how densely to lay candidate scatterers.
///
/// `Planar` populates the imaging plane itself (areal density, elevation
/// offset zero); `Slab` fills a thin volume about the plane (volumetric
/// density) so elevation weighting sees off-plane scatterers.
#[derive(Debug, Clone)]
pub enum ScatterRegion {
    Planar {
        /// Corner of the rectangle (u = v = 0).
        origin: Vec3,
        u_axis: Vec3,
        v_axis: Vec3,
        width_mm: f64,
        height_mm: f64,
        density_per_mm2: f64,
    },
    Slab {
        origin: Vec3,
        u_axis: Vec3,
        v_axis: Vec3,
        /// Elevation axis; the slab spans +-thickness/2 about the plane.
        e_axis: Vec3,
        width_mm: f64,
        height_mm: f64,
        thickness_mm: f64,
        density_per_mm3: f64,
    },
}

/// Generate the scatterer field for a region over the anatomy.
///
/// The candidate count is exactly `round(density * measure)`; rows of the
/// lattice are distributed as evenly as possible so coverage stays uniform.
pub fn generate_scatterers(
    anatomy: &AnatomyVolume,
    region: &ScatterRegion,
    seed: u64,
) -> Vec<Scatterer> {
    match *region {
        ScatterRegion::Planar {
            origin,
            u_axis,
            v_axis,
            width_mm,
            height_mm,
            density_per_mm2,
        } => {
            assert!(density_per_mm2 > 0.0, "density must be positive");
            let total = (density_per_mm2 * width_mm * height_mm).round() as u64;
            let mut out = Vec::with_capacity(total as usize);
            lattice_2d(total, width_mm, height_mm, |cell, u, v| {
                let mut stream = Stream::from_parts(&[seed, SCATTER_SALT, cell]);
                let uu = u.0 + stream.u01() * u.1;
                let vv = v.0 + stream.u01() * v.1;
                let pos = origin + u_axis * uu + v_axis * vv;
                if let Some(s) = keep_candidate(anatomy, pos, &mut stream) {
                    out.push(s);
                }
            });
            out
        }
        ScatterRegion::Slab {
            origin,
            u_axis,
            v_axis,
            e_axis,
            width_mm,
            height_mm,
            thickness_mm,
            density_per_mm3,
        } => {
            assert!(density_per_mm3 > 0.0, "density must be positive");
            let volume = width_mm * height_mm * thickness_mm;
            let total = (density_per_mm3 * volume).round() as u64;
            let mut out = Vec::with_capacity(total as usize);
            if total == 0 {
                return out;
            }
            // split into elevation sheets, each a 2-D lattice
            let sheets = ((thickness_mm * (total as f64 / volume).cbrt()).round() as u64).max(1);
            let base = total / sheets;
            let rem = total % sheets;
            let mut cell_offset = 0u64;
            for s in 0..sheets {
                let n_sheet = base + u64::from(s < rem);
                let e_mid = -thickness_mm / 2.0 + (s as f64 + 0.5) / sheets as f64 * thickness_mm;
                let e_half = thickness_mm / sheets as f64 / 2.0;
                let offset = cell_offset;
                lattice_2d(n_sheet, width_mm, height_mm, |cell, u, v| {
                    let mut stream = Stream::from_parts(&[seed, SCATTER_SALT, offset + cell]);
                    let uu = u.0 + stream.u01() * u.1;
                    let vv = v.0 + stream.u01() * v.1;
                    let ee = e_mid + (stream.u01() * 2.0 - 1.0) * e_half;
                    let pos = origin + u_axis * uu + v_axis * vv + e_axis * ee;
                    if let Some(sc) = keep_candidate(anatomy, pos, &mut stream) {
                        out.push(sc);
                    }
                });
                cell_offset += n_sheet;
            }
            out
        }
    }
}

/// Visit exactly `total` lattice cells covering a width x height rectangle.
/// The callback receives the cell id and the (start, extent) of the cell
/// along u and v.
fn lattice_2d<F>(total: u64, width: f64, height: f64, mut visit: F)
where
    F: FnMut(u64, (f64, f64), (f64, f64)),
{
    if total == 0 {
        return;
    }
    let rows = ((height * (total as f64 / (width * height)).sqrt()).round() as u64).max(1);
    let base = total / rows;
    let rem = total % rows;
    let mut cell = 0u64;
    for r in 0..rows {
        let cols = base + u64::from(r < rem);
        if cols == 0 {
            continue;
        }
        let v0 = r as f64 / rows as f64 * height;
        let dv = height / rows as f64;
        let du = width / cols as f64;
        for c in 0..cols {
            visit(cell, (c as f64 * du, du), (v0, dv));
            cell += 1;
        }
    }
}

fn keep_candidate(anatomy: &AnatomyVolume, pos: Vec3, stream: &mut Stream) -> Option<Scatterer> {
    let label = anatomy.label_grid.label_at(pos);
    let t = anatomy.tissue(label);
    if t.mu1 <= 0.0 {
        return None;
    }
    let keep = stream.u01();
    if keep >= t.mu1 {
        return None;
    }
    let amp = (t.mu0 + t.sigma0 * norm_icdf(stream.u01_open())).max(0.0);
    Some(Scatterer { position: pos, amplitude: amp })
}

/// Lateral/elevational beam weighting.
#[derive(Debug, Clone)]
pub enum BeamProfile {
    /// Separable Gaussian; depth-independent by construction.
    Analytic { sigma_l_mm: f64, sigma_e_mm: f64 },
    /// Pulse-echo field tabulated over (depth, lateral, elevation).
    Tabulated(BeamTable),
}

impl BeamProfile {
    /// Scatterers farther than this laterally are skipped for a scanline.
    pub fn lateral_cutoff_mm(&self) -> f64 {
        match self {
            BeamProfile::Analytic { sigma_l_mm, .. } => 3.0 * sigma_l_mm,
            BeamProfile::Tabulated(t) => t
                .lateral_offsets_mm
                .iter()
                .fold(0.0f64, |m, &v| m.max(v.abs())),
        }
    }
}

/// Weight of a scatterer at lateral/elevational offset from the scanline.
///
/// Analytic: `exp(-((dl/sl)^2 + (de/se)^2)/2)`, depth ignored. Tabulated:
/// trilinear interpolation, clamped to edge values outside the grid.
pub fn beam_weight(profile: &BeamProfile, delta_l_mm: f64, delta_e_mm: f64, depth_mm: f64) -> f64 {
    match profile {
        BeamProfile::Analytic { sigma_l_mm, sigma_e_mm } => {
            let l = delta_l_mm / sigma_l_mm;
            let e = delta_e_mm / sigma_e_mm;
            (-0.5 * (l * l + e * e)).exp()
        }
        BeamProfile::Tabulated(t) => t.sample(depth_mm, delta_l_mm, delta_e_mm),
    }
}

/// Tabulated pulse-echo gain grid, normalized to peak 1.
#[derive(Debug, Clone)]
pub struct BeamTable {
    pub radial_depths_mm: Vec<f64>,
    pub lateral_offsets_mm: Vec<f64>,
    pub elevational_offsets_mm: Vec<f64>,
    /// Gains indexed [depth][lateral][elevation].
    gains: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct BeamTableHeader {
    radial_depths_mm: Vec<f64>,
    lateral_offsets_mm: Vec<f64>,
    elevational_offsets_mm: Vec<f64>,
    data: String,
}

impl BeamTable {
    pub fn new(
        radial_depths_mm: Vec<f64>,
        lateral_offsets_mm: Vec<f64>,
        elevational_offsets_mm: Vec<f64>,
        gains: Vec<f32>,
    ) -> Result<Self> {
        let n = radial_depths_mm.len() * lateral_offsets_mm.len() * elevational_offsets_mm.len();
        if gains.len() != n {
            return Err(SimError::format(format!(
                "gain payload has {} entries, axes imply {n}",
                gains.len()
            )));
        }
        for axis in [&radial_depths_mm, &lateral_offsets_mm, &elevational_offsets_mm] {
            if axis.is_empty() {
                return Err(SimError::format("beam table axis is empty"));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SimError::format("beam table axes must strictly increase"));
            }
        }
        if gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(SimError::format("beam gains must be finite and non-negative"));
        }
        let peak = gains.iter().cloned().fold(0.0f32, f32::max);
        if peak <= 0.0 {
            return Err(SimError::format("beam table is identically zero"));
        }
        let gains = gains.into_iter().map(|g| g / peak).collect();
        Ok(BeamTable { radial_depths_mm, lateral_offsets_mm, elevational_offsets_mm, gains })
    }

    #[inline]
    fn gain(&self, d: usize, l: usize, e: usize) -> f64 {
        let nl = self.lateral_offsets_mm.len();
        let ne = self.elevational_offsets_mm.len();
        self.gains[(d * nl + l) * ne + e] as f64
    }

    /// Trilinear interpolation clamped to the grid edges.
    pub fn sample(&self, depth_mm: f64, delta_l_mm: f64, delta_e_mm: f64) -> f64 {
        let (d0, d1, fd) = bracket(&self.radial_depths_mm, depth_mm);
        let (l0, l1, fl) = bracket(&self.lateral_offsets_mm, delta_l_mm);
        let (e0, e1, fe) = bracket(&self.elevational_offsets_mm, delta_e_mm);
        let c000 = self.gain(d0, l0, e0);
        let c100 = self.gain(d1, l0, e0);
        let c010 = self.gain(d0, l1, e0);
        let c110 = self.gain(d1, l1, e0);
        let c001 = self.gain(d0, l0, e1);
        let c101 = self.gain(d1, l0, e1);
        let c011 = self.gain(d0, l1, e1);
        let c111 = self.gain(d1, l1, e1);
        let x00 = c000 + (c100 - c000) * fd;
        let x10 = c010 + (c110 - c010) * fd;
        let x01 = c001 + (c101 - c001) * fd;
        let x11 = c011 + (c111 - c011) * fd;
        let y0 = x00 + (x10 - x00) * fl;
        let y1 = x01 + (x11 - x01) * fl;
        y0 + (y1 - y0) * fe
    }

    /// Tabulate a separable Gaussian profile with a Gaussian focal gain
    /// along depth. Stands in for an externally simulated pulse-echo field.
    pub fn from_focused_gaussian(
        depths_mm: Vec<f64>,
        laterals_mm: Vec<f64>,
        elevations_mm: Vec<f64>,
        sigma_l_mm: f64,
        sigma_e_mm: f64,
        focus_mm: f64,
        focal_width_mm: f64,
    ) -> Result<Self> {
        let mut gains =
            Vec::with_capacity(depths_mm.len() * laterals_mm.len() * elevations_mm.len());
        for &d in &depths_mm {
            let fg = (-0.5 * ((d - focus_mm) / focal_width_mm).powi(2)).exp();
            let depth_gain = 0.35 + 0.65 * fg;
            for &l in &laterals_mm {
                for &e in &elevations_mm {
                    let w = (-0.5 * ((l / sigma_l_mm).powi(2) + (e / sigma_e_mm).powi(2))).exp();
                    gains.push((w * depth_gain) as f32);
                }
            }
        }
        BeamTable::new(depths_mm, laterals_mm, elevations_mm, gains)
    }

    pub fn save(&self, header_path: &Path) -> Result<()> {
        let stem = header_path
            .file_stem()
            .ok_or_else(|| SimError::validation("beam table path has no stem"))?
            .to_string_lossy()
            .to_string();
        let raw_name = format!("{stem}.raw");
        let header = BeamTableHeader {
            radial_depths_mm: self.radial_depths_mm.clone(),
            lateral_offsets_mm: self.lateral_offsets_mm.clone(),
            elevational_offsets_mm: self.elevational_offsets_mm.clone(),
            data: raw_name.clone(),
        };
        fs::write(header_path, serde_json::to_vec_pretty(&header)?)?;
        let mut payload = Vec::with_capacity(self.gains.len() * 4);
        for g in &self.gains {
            payload.extend_from_slice(&g.to_le_bytes());
        }
        fs::write(header_path.with_file_name(raw_name), payload)?;
        Ok(())
    }

    pub fn load(header_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(header_path)
            .map_err(|e| SimError::format(format!("cannot read {}: {e}", header_path.display())))?;
        let header: BeamTableHeader = serde_json::from_str(&text)?;
        let payload = fs::read(header_path.with_file_name(&header.data))?;
        if payload.len() % 4 != 0 {
            return Err(SimError::format("beam gain payload not a multiple of 4 bytes"));
        }
        let gains: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        BeamTable::new(
            header.radial_depths_mm,
            header.lateral_offsets_mm,
            header.elevational_offsets_mm,
            gains,
        )
    }
}

/// Indices bracketing `x` in a sorted axis plus the interpolation fraction,
/// clamped to the edges.
fn bracket(axis: &[f64], x: f64) -> (usize, usize, f64) {
    if x <= axis[0] || axis.len() == 1 {
        return (0, 0, 0.0);
    }
    let last = axis.len() - 1;
    if x >= axis[last] {
        return (last, last, 0.0);
    }
    let hi = axis.partition_point(|&v| v <= x);
    let lo = hi - 1;
    let f = (x - axis[lo]) / (axis[hi] - axis[lo]);
    (lo, hi, f)
}

/// A scatterer's place in a scanline's sampling frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanlineProjection {
    pub radial_bin: usize,
    pub radial_mm: f64,
    pub delta_l_mm: f64,
    pub delta_e_mm: f64,
}

/// Decompose a scatterer offset in the scanline frame and snap it to the
/// nearest radial sample. None when the radial coordinate leaves [0, depth]
/// or the lateral offset exceeds the cutoff.
pub fn project_to_scanline(
    s: &Scatterer,
    line: &Scanline,
    lateral_cutoff_mm: f64,
) -> Option<ScanlineProjection> {
    let v = s.position - line.origin;
    let r = v.dot(line.direction);
    let bin = line.bin_of(r)?;
    let dl = v.dot(line.lateral);
    if dl.abs() > lateral_cutoff_mm {
        return None;
    }
    let de = v.dot(line.elevation);
    Some(ScanlineProjection { radial_bin: bin, radial_mm: r, delta_l_mm: dl, delta_e_mm: de })
}

/// Lateral pre-sort of scatterers so synthesis only touches candidates near
/// each scanline.
///
/// Linear fans sort by the shared lateral coordinate. Sector fans sort by
/// angle about the apex; scatterers closer than `near_radius` to the apex
/// subtend wide angles and are kept in a small always-checked list.
pub struct ScattererIndex {
    mode: IndexMode,
    /// (sort key, scatterer index), ascending by key.
    sorted: Vec<(f64, u32)>,
    near: Vec<u32>,
}

enum IndexMode {
    Linear { origin: Vec3, lateral: Vec3 },
    Sector { apex: Vec3, axis: Vec3, lateral: Vec3, near_radius: f64 },
}

impl ScattererIndex {
    pub fn build(scatterers: &[Scatterer], scanlines: &[Scanline]) -> Self {
        assert!(!scanlines.is_empty());
        let first = &scanlines[0];
        let last = &scanlines[scanlines.len() - 1];
        let shared_apex = (first.origin - last.origin).length() < 1e-9;
        let mut sorted = Vec::with_capacity(scatterers.len());
        let mut near = Vec::new();
        let mode = if shared_apex && scanlines.len() > 1 {
            let mid = &scanlines[scanlines.len() / 2];
            let near_radius = 10.0;
            for (i, s) in scatterers.iter().enumerate() {
                let v = s.position - mid.origin;
                let r = v.length();
                if r < near_radius {
                    near.push(i as u32);
                } else {
                    let ang = v.dot(mid.lateral).atan2(v.dot(mid.direction));
                    sorted.push((ang, i as u32));
                }
            }
            IndexMode::Sector {
                apex: mid.origin,
                axis: mid.direction,
                lateral: mid.lateral,
                near_radius,
            }
        } else {
            for (i, s) in scatterers.iter().enumerate() {
                let key = (s.position - first.origin).dot(first.lateral);
                sorted.push((key, i as u32));
            }
            IndexMode::Linear { origin: first.origin, lateral: first.lateral }
        };
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        ScattererIndex { mode, sorted, near }
    }

    /// Visit the indices of all scatterers that may project onto `line`
    /// within the lateral cutoff (an over-approximation).
    pub fn candidates<F: FnMut(u32)>(&self, line: &Scanline, cutoff_mm: f64, mut f: F) {
        match &self.mode {
            IndexMode::Linear { origin, lateral } => {
                let center = (line.origin - *origin).dot(*lateral);
                let lo = center - cutoff_mm - 1e-9;
                let hi = center + cutoff_mm + 1e-9;
                let start = self.sorted.partition_point(|&(k, _)| k < lo);
                for &(k, i) in &self.sorted[start..] {
                    if k > hi {
                        break;
                    }
                    f(i);
                }
            }
            IndexMode::Sector { apex: _, axis, lateral, near_radius } => {
                for &i in &self.near {
                    f(i);
                }
                let line_ang = line.direction.dot(*lateral).atan2(line.direction.dot(*axis));
                let dker = (cutoff_mm / near_radius).min(1.0).asin() + 0.02;
                let lo = line_ang - dker;
                let hi = line_ang + dker;
                let start = self.sorted.partition_point(|&(k, _)| k < lo);
                for &(k, i) in &self.sorted[start..] {
                    if k > hi {
                        break;
                    }
                    f(i);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anatomy::{segmentation::SegmentationVolume, AnatomyVolume, TissueProperties, TissueTable};
    use crate::math::Vec3;
    use crate::transducer::{make_scanlines, ProbePose, ScanGeometry, TransducerConfig};
    use approx::assert_relative_eq;

    fn uniform_anatomy(mu0: f64, sigma0: f64, mu1: f64) -> AnatomyVolume {
        let seg = SegmentationVolume::filled([8, 8, 8], [10.0; 3], [-40.0, -40.0, -10.0], 0);
        let mut t = TissueTable::new();
        t.insert(
            0,
            TissueProperties {
                name: "medium".into(),
                z: 1.54e6,
                alpha_db_cm_mhz: 0.0,
                c_m_s: 1540.0,
                mu0,
                sigma0,
                mu1,
                tau: 1.0,
                gamma: 0.0,
            },
        );
        AnatomyVolume::build(&seg, t).unwrap()
    }

    fn square_region(density: f64) -> ScatterRegion {
        ScatterRegion::Planar {
            origin: Vec3::new(-20.0, 0.0, 0.0),
            u_axis: Vec3::X,
            v_axis: Vec3::Z,
            width_mm: 40.0,
            height_mm: 40.0,
            density_per_mm2: density,
        }
    }

    #[test]
    fn mu1_zero_generates_nothing() {
        let anatomy = uniform_anatomy(1.0, 0.0, 0.0);
        let s = generate_scatterers(&anatomy, &square_region(10.0), 1);
        assert!(s.is_empty());
    }

    #[test]
    fn full_density_speckle_setup_is_exact() {
        // 40 x 40 mm^2 at 600 / mm^2, mu1 = 1, mu0 = 1, sigma0 = 0
        let anatomy = uniform_anatomy(1.0, 0.0, 1.0);
        let s = generate_scatterers(&anatomy, &square_region(600.0), 42);
        assert_eq!(s.len(), 960_000);
        assert!(s.iter().all(|x| x.amplitude == 1.0));
        // all inside the region
        assert!(s
            .iter()
            .all(|x| (-20.0..=20.0).contains(&x.position.x) && (0.0..=40.0).contains(&x.position.z)));
    }

    #[test]
    fn keep_rate_matches_binomial() {
        let anatomy = uniform_anatomy(0.5, 0.0, 0.5);
        let s = generate_scatterers(&anatomy, &square_region(625.0), 9);
        let n = 1_000_000f64;
        let sigma = (n * 0.25).sqrt();
        assert!(
            ((s.len() as f64) - n * 0.5).abs() < 3.0 * sigma,
            "kept {}",
            s.len()
        );
    }

    #[test]
    fn amplitude_mean_matches_truncated_normal() {
        let (mu0, sigma0) = (0.4, 0.3);
        let anatomy = uniform_anatomy(mu0, sigma0, 1.0);
        let s = generate_scatterers(&anatomy, &square_region(625.0), 5);
        let mean: f64 = s.iter().map(|x| x.amplitude).sum::<f64>() / s.len() as f64;
        // E[max(0, N(mu, sigma))] = mu Phi(mu/sigma) + sigma phi(mu/sigma)
        let r = mu0 / sigma0;
        let expect = mu0 * crate::rng::norm_cdf(r) + sigma0 * crate::rng::norm_pdf(r);
        assert!((mean - expect).abs() / expect < 0.01, "{mean} vs {expect}");
    }

    #[test]
    fn generation_is_reproducible() {
        let anatomy = uniform_anatomy(0.6, 0.2, 0.7);
        let a = generate_scatterers(&anatomy, &square_region(100.0), 77);
        let b = generate_scatterers(&anatomy, &square_region(100.0), 77);
        assert_eq!(a, b);
        let c = generate_scatterers(&anatomy, &square_region(100.0), 78);
        assert_ne!(a, c);
    }

    #[test]
    fn slab_mode_fills_the_thickness() {
        let anatomy = uniform_anatomy(0.5, 0.0, 1.0);
        let region = ScatterRegion::Slab {
            origin: Vec3::new(-10.0, 0.0, 0.0),
            u_axis: Vec3::X,
            v_axis: Vec3::Z,
            e_axis: Vec3::Y,
            width_mm: 20.0,
            height_mm: 20.0,
            thickness_mm: 6.0,
            density_per_mm3: 20.0,
        };
        let s = generate_scatterers(&anatomy, &region, 3);
        assert_eq!(s.len(), (20.0f64 * 20.0 * 6.0 * 20.0).round() as usize);
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for x in &s {
            lo = lo.min(x.position.y);
            hi = hi.max(x.position.y);
        }
        assert!(lo >= -3.0 && hi <= 3.0);
        assert!(hi - lo > 4.0, "spread {lo}..{hi}");
    }

    #[test]
    fn analytic_beam_weight_hand_values_and_symmetry() {
        let p = BeamProfile::Analytic { sigma_l_mm: 1.0, sigma_e_mm: 1.0 };
        assert_relative_eq!(beam_weight(&p, 0.0, 0.0, 33.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(beam_weight(&p, 1.0, 0.0, 0.0), (-0.5f64).exp(), epsilon = 1e-12);
        for (dl, de) in [(0.7, -0.3), (1.3, 0.9)] {
            let w = beam_weight(&p, dl, de, 10.0);
            assert_eq!(w, beam_weight(&p, -dl, de, 10.0));
            assert_eq!(w, beam_weight(&p, dl, -de, 10.0));
        }
    }

    #[test]
    fn tabulated_single_slice_matches_analytic() {
        let laterals: Vec<f64> = (-60..=60).map(|i| i as f64 * 0.1).collect();
        let elevs: Vec<f64> = (-60..=60).map(|i| i as f64 * 0.1).collect();
        let mut gains = Vec::new();
        for &l in &laterals {
            for &e in &elevs {
                gains.push((-0.5 * (l * l + e * e)).exp() as f32);
            }
        }
        let table = BeamTable::new(vec![50.0], laterals, elevs, gains).unwrap();
        let tab = BeamProfile::Tabulated(table);
        let ana = BeamProfile::Analytic { sigma_l_mm: 1.0, sigma_e_mm: 1.0 };
        for (dl, de) in [(0.0, 0.0), (0.33, 0.0), (1.01, -0.77), (2.5, 1.5)] {
            let a = beam_weight(&ana, dl, de, 50.0);
            let t = beam_weight(&tab, dl, de, 50.0);
            assert!((a - t).abs() < 1e-3, "{a} vs {t} at ({dl},{de})");
        }
        // clamped outside the grid
        let edge = beam_weight(&tab, 100.0, 0.0, 50.0);
        assert_relative_eq!(edge, beam_weight(&tab, 6.0, 0.0, 50.0), epsilon = 1e-9);
    }

    #[test]
    fn beam_table_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let t = BeamTable::from_focused_gaussian(
            (1..=20).map(|i| i as f64 * 5.0).collect(),
            (-30..=30).map(|i| i as f64 * 0.2).collect(),
            (-10..=10).map(|i| i as f64 * 0.5).collect(),
            1.2,
            2.0,
            50.0,
            25.0,
        )
        .unwrap();
        let p = dir.path().join("beam.json");
        t.save(&p).unwrap();
        let back = BeamTable::load(&p).unwrap();
        for (probe_d, probe_l, probe_e) in [(10.0, 0.5, 1.0), (50.0, 0.0, 0.0), (95.0, -3.0, 2.0)] {
            assert_relative_eq!(
                t.sample(probe_d, probe_l, probe_e),
                back.sample(probe_d, probe_l, probe_e),
                epsilon = 1e-9
            );
        }
    }

    fn linear_lines(n: usize) -> Vec<crate::transducer::Scanline> {
        let cfg = TransducerConfig {
            center_frequency_hz: 3.6e6,
            sampling_frequency_hz: 50e6,
            element_width_mm: 0.25,
            element_height_mm: 10.0,
            kerf_mm: 0.05,
            num_elements: n,
            geometry: ScanGeometry::Linear,
        };
        make_scanlines(&cfg, &ProbePose::identity_at(Vec3::ZERO), 40.0, 1540.0).unwrap()
    }

    #[test]
    fn projection_on_axis_and_out_of_range() {
        let lines = linear_lines(3);
        let line = &lines[1];
        let spacing = line.sample_spacing_mm;
        let s = Scatterer { position: line.origin + line.direction * (100.0 * spacing), amplitude: 1.0 };
        let p = project_to_scanline(&s, line, 5.0).unwrap();
        assert_eq!(p.radial_bin, 100);
        assert_eq!(p.delta_l_mm, 0.0);
        assert_eq!(p.delta_e_mm, 0.0);

        let behind = Scatterer { position: line.origin - line.direction * 1.0, amplitude: 1.0 };
        assert!(project_to_scanline(&behind, line, 5.0).is_none());
        let far = Scatterer { position: line.origin + line.lateral * 6.0 + line.direction * 10.0, amplitude: 1.0 };
        assert!(project_to_scanline(&far, line, 5.0).is_none());
    }

    #[test]
    fn projection_radial_consistency_on_random_cloud() {
        let lines = linear_lines(5);
        let line = &lines[2];
        let mut stream = Stream::from_parts(&[123]);
        for _ in 0..2000 {
            let p = Vec3::new(
                stream.u01() * 20.0 - 10.0,
                stream.u01() * 10.0 - 5.0,
                stream.u01() * 50.0 - 5.0,
            );
            let s = Scatterer { position: p, amplitude: 1.0 };
            if let Some(proj) = project_to_scanline(&s, line, 1e9) {
                let r = (p - line.origin).dot(line.direction);
                assert!(
                    (proj.radial_bin as f64 * line.sample_spacing_mm - r).abs()
                        <= line.sample_spacing_mm / 2.0 + 1e-12
                );
            }
        }
    }

    #[test]
    fn index_covers_all_in_window_linear_and_sector() {
        let anatomy = uniform_anatomy(1.0, 0.0, 1.0);
        let region = ScatterRegion::Planar {
            origin: Vec3::new(-30.0, 0.0, 0.0),
            u_axis: Vec3::X,
            v_axis: Vec3::Z,
            width_mm: 60.0,
            height_mm: 40.0,
            density_per_mm2: 40.0,
        };
        let scatterers = generate_scatterers(&anatomy, &region, 11);
        let cutoff = 3.0;

        for lines in [linear_lines(9), {
            let cfg = TransducerConfig {
                center_frequency_hz: 3.6e6,
                sampling_frequency_hz: 50e6,
                element_width_mm: 0.3,
                element_height_mm: 13.0,
                kerf_mm: 0.05,
                num_elements: 9,
                geometry: ScanGeometry::Phased { fan_angle_rad: 1.2 },
            };
            make_scanlines(&cfg, &ProbePose::identity_at(Vec3::ZERO), 40.0, 1540.0).unwrap()
        }] {
            let index = ScattererIndex::build(&scatterers, &lines);
            for line in &lines {
                let mut seen = vec![false; scatterers.len()];
                index.candidates(line, cutoff, |i| seen[i as usize] = true);
                for (i, s) in scatterers.iter().enumerate() {
                    if project_to_scanline(s, line, cutoff).is_some() && !seen[i] {
                        panic!("index missed scatterer {i} on line {}", line.index);
                    }
                }
            }
        }
    }
}
