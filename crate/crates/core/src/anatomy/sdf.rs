//! Narrow-band signed distance functions around organ boundaries.
//!
//! Distances are Euclidean in physical millimetres (anisotropic spacing
//! respected), negative inside the organ. The band is seeded with exact
//! point-to-face distances at boundary voxels and propagated by fast
//! sweeping (Godunov upwind updates in 8 alternating sweep orders), then
//! trimmed to `band_halfwidth * max(spacing)`.

use std::collections::HashMap;

use crate::error::{Result, SimError};
use crate::math::{trilinear, Vec3};

use super::segmentation::{Label, SegmentationVolume};

/// Default band half-width in voxels; wide enough for trilinear gradient
/// stencils on either side of the boundary.
pub const DEFAULT_BAND_HALFWIDTH: usize = 3;

#[derive(Debug, Clone)]
pub struct NarrowBandSdf {
    pub label: Label,
    pub band_halfwidth: usize,
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    pub(crate) values: HashMap<[i32; 3], f32>,
}

impl NarrowBandSdf {
    pub fn from_parts(
        label: Label,
        band_halfwidth: usize,
        spacing_mm: [f64; 3],
        origin_mm: [f64; 3],
        values: HashMap<[i32; 3], f32>,
    ) -> Self {
        NarrowBandSdf { label, band_halfwidth, spacing_mm, origin_mm, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_at_voxel(&self, v: [i32; 3]) -> Option<f64> {
        self.values.get(&v).map(|&x| x as f64)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[i32; 3], &f32)> {
        self.values.iter()
    }

    /// Trilinear sample at a world point; None when the 8-corner stencil
    /// leaves the stored band.
    pub fn sample(&self, p: Vec3) -> Option<f64> {
        let gx = (p.x - self.origin_mm[0]) / self.spacing_mm[0] - 0.5;
        let gy = (p.y - self.origin_mm[1]) / self.spacing_mm[1] - 0.5;
        let gz = (p.z - self.origin_mm[2]) / self.spacing_mm[2] - 0.5;
        let (ix, iy, iz) = (gx.floor(), gy.floor(), gz.floor());
        let (fx, fy, fz) = (gx - ix, gy - iy, gz - iz);
        let (ix, iy, iz) = (ix as i32, iy as i32, iz as i32);
        let mut c = [0.0f64; 8];
        for (n, item) in c.iter_mut().enumerate() {
            let v = [
                ix + (n & 1) as i32,
                iy + ((n >> 1) & 1) as i32,
                iz + ((n >> 2) & 1) as i32,
            ];
            *item = *self.values.get(&v)? as f64;
        }
        Some(trilinear(&c, fx, fy, fz))
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing_mm[0].min(self.spacing_mm[1]).min(self.spacing_mm[2])
    }
}

/// Smooth surface normal from the SDF gradient, oriented inside -> outside.
///
/// Fails when the point (or its central-difference stencil) leaves the band
/// or the gradient degenerates; callers fall back to a face normal.
pub fn surface_normal(sdf: &NarrowBandSdf, p: Vec3) -> Result<Vec3> {
    let h = 0.4 * sdf.min_spacing();
    let mut grad = [0.0f64; 3];
    for axis in 0..3 {
        let mut dp = p;
        let mut dm = p;
        match axis {
            0 => {
                dp.x += h;
                dm.x -= h;
            }
            1 => {
                dp.y += h;
                dm.y -= h;
            }
            _ => {
                dp.z += h;
                dm.z -= h;
            }
        }
        let vp = sdf
            .sample(dp)
            .ok_or_else(|| SimError::geometry("sdf stencil leaves the stored band"))?;
        let vm = sdf
            .sample(dm)
            .ok_or_else(|| SimError::geometry("sdf stencil leaves the stored band"))?;
        grad[axis] = (vp - vm) / (2.0 * h);
    }
    let g = Vec3::new(grad[0], grad[1], grad[2]);
    let len = g.length();
    if len < 1e-9 {
        return Err(SimError::geometry("degenerate sdf gradient"));
    }
    Ok(g / len)
}

/// Build the narrow-band SDF of one label.
pub fn build_sdf(
    seg: &SegmentationVolume,
    label: Label,
    band_halfwidth: usize,
) -> Result<NarrowBandSdf> {
    if label == 0 || !seg.labels.iter().any(|&l| l == label) {
        return Err(SimError::validation(format!("label {label} absent from volume")));
    }
    let dims = [seg.dims[0] as i32, seg.dims[1] as i32, seg.dims[2] as i32];
    let sp = seg.spacing_mm;
    let max_sp = sp[0].max(sp[1]).max(sp[2]);
    let band_mm = band_halfwidth as f64 * max_sp;

    let inside = |v: [i32; 3]| -> bool {
        if v[0] < 0 || v[1] < 0 || v[2] < 0 || v[0] >= dims[0] || v[1] >= dims[1] || v[2] >= dims[2]
        {
            return false;
        }
        seg.label(v[0] as usize, v[1] as usize, v[2] as usize) == label
    };

    // Boundary voxels and their exact face-distance seeds. A membership flip
    // between 6-neighbors puts the interface midway between their centers.
    let mut dist: HashMap<[i32; 3], f64> = HashMap::new();
    let mut boundary: Vec<[i32; 3]> = Vec::new();
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let v = [i, j, k];
                let v_in = inside(v);
                let mut seed = f64::INFINITY;
                for axis in 0..3 {
                    for dir in [-1i32, 1] {
                        let mut n = v;
                        n[axis] += dir;
                        if inside(n) != v_in {
                            seed = seed.min(sp[axis] / 2.0);
                        }
                    }
                }
                if seed.is_finite() {
                    dist.insert(v, seed);
                    boundary.push(v);
                }
            }
        }
    }
    if boundary.is_empty() {
        // Label fills the whole volume: no interior boundary, empty band.
        return Ok(NarrowBandSdf {
            label,
            band_halfwidth,
            spacing_mm: sp,
            origin_mm: seg.origin_mm,
            values: HashMap::new(),
        });
    }

    // Collect the band: voxels within the physical band radius of a boundary
    // voxel (per-axis voxel radii so anisotropic spacing still covers it),
    // plus one voxel of slack so sweeping has support at the rim.
    let radius = [
        (band_mm / sp[0]).ceil() as i32 + 1,
        (band_mm / sp[1]).ceil() as i32 + 1,
        (band_mm / sp[2]).ceil() as i32 + 1,
    ];
    for &b in &boundary {
        for dz in -radius[2]..=radius[2] {
            for dy in -radius[1]..=radius[1] {
                for dx in -radius[0]..=radius[0] {
                    let v = [b[0] + dx, b[1] + dy, b[2] + dz];
                    dist.entry(v).or_insert(f64::INFINITY);
                }
            }
        }
    }

    fast_sweep(&mut dist, sp);

    // Sign by membership, trim to the band proper.
    let mut values = HashMap::new();
    for (v, d) in dist {
        if d.is_finite() && d <= band_mm {
            let signed = if inside(v) { -d } else { d };
            values.insert(v, signed as f32);
        }
    }
    Ok(NarrowBandSdf {
        label,
        band_halfwidth,
        spacing_mm: sp,
        origin_mm: seg.origin_mm,
        values,
    })
}

/// Gauss-Seidel sweeps solving |grad d| = 1 over the band, 8 directional
/// orderings per pass, repeated until the update stabilizes.
fn fast_sweep(dist: &mut HashMap<[i32; 3], f64>, sp: [f64; 3]) {
    let mut order: Vec<[i32; 3]> = dist.keys().copied().collect();
    let tol = 1e-9;
    for _pass in 0..4 {
        let mut max_change = 0.0f64;
        for sweep in 0..8 {
            let (sx, sy, sz) = (sweep & 1 == 0, sweep & 2 == 0, sweep & 4 == 0);
            order.sort_unstable_by_key(|v| {
                (
                    if sz { v[2] } else { -v[2] },
                    if sy { v[1] } else { -v[1] },
                    if sx { v[0] } else { -v[0] },
                )
            });
            for &v in &order {
                let cur = dist[&v];
                let mut m = [f64::INFINITY; 3];
                for axis in 0..3 {
                    for dir in [-1i32, 1] {
                        let mut n = v;
                        n[axis] += dir;
                        if let Some(&dn) = dist.get(&n) {
                            m[axis] = m[axis].min(dn);
                        }
                    }
                }
                let u = eikonal_update(m, sp);
                if u < cur {
                    max_change = max_change.max(cur - u);
                    dist.insert(v, u);
                }
            }
        }
        if max_change < tol {
            break;
        }
    }
}

/// Godunov upwind solution of sum_a ((u - m_a)+ / h_a)^2 = 1.
fn eikonal_update(m: [f64; 3], h: [f64; 3]) -> f64 {
    let mut axes: Vec<(f64, f64)> = m
        .iter()
        .zip(h.iter())
        .filter(|(m, _)| m.is_finite())
        .map(|(&m, &h)| (m, h))
        .collect();
    if axes.is_empty() {
        return f64::INFINITY;
    }
    axes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut u = axes[0].0 + axes[0].1;
    for k in 2..=axes.len() {
        if u <= axes[k - 1].0 {
            break;
        }
        // solve sum_{i<k} ((u - m_i)/h_i)^2 = 1
        let (mut a, mut b, mut c) = (0.0, 0.0, -1.0);
        for &(mi, hi) in &axes[..k] {
            let w = 1.0 / (hi * hi);
            a += w;
            b += mi * w;
            c += mi * mi * w;
        }
        let disc = b * b - a * c;
        if disc >= 0.0 {
            u = (b + disc.sqrt()) / a;
        }
    }
    u
}
