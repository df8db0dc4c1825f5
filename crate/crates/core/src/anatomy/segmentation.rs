//! Dense segmentation volumes and their on-disk format.
//!
//! A volume is a JSON header next to a raw little-endian payload:
//!
//! ```json
//! {"dims":[64,64,64],"spacing_mm":[1,1,1],"origin_mm":[0,0,0],
//!  "dtype":"u8","data":"volume.raw"}
//! ```
//!
//! Labels are stored x-fastest. Voxel (i,j,k) covers the half-open box
//! `origin + [i,i+1) * spacing` along each axis, so its center sits at
//! `origin + (i + 0.5) * spacing`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::math::{Aabb, Vec3};

pub type Label = u16;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SegmentationHeader {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    #[serde(default)]
    origin_mm: [f64; 3],
    dtype: String,
    data: String,
}

/// Dense labeled volume in physical (mm) space.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationVolume {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    /// x-fastest label array, len = dims[0] * dims[1] * dims[2]
    pub labels: Vec<Label>,
}

impl SegmentationVolume {
    pub fn new(
        dims: [usize; 3],
        spacing_mm: [f64; 3],
        origin_mm: [f64; 3],
        labels: Vec<Label>,
    ) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(SimError::validation("volume dims must be positive"));
        }
        if spacing_mm.iter().any(|&s| s <= 0.0) {
            return Err(SimError::validation("voxel spacing must be positive"));
        }
        let n = dims[0] * dims[1] * dims[2];
        if labels.len() != n {
            return Err(SimError::format(format!(
                "label payload has {} voxels, header says {}",
                labels.len(),
                n
            )));
        }
        Ok(SegmentationVolume { dims, spacing_mm, origin_mm, labels })
    }

    /// Uniform volume filled with one label.
    pub fn filled(dims: [usize; 3], spacing_mm: [f64; 3], origin_mm: [f64; 3], label: Label) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        SegmentationVolume { dims, spacing_mm, origin_mm, labels: vec![label; n] }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn label(&self, i: usize, j: usize, k: usize) -> Label {
        self.labels[self.index(i, j, k)]
    }

    pub fn set_label(&mut self, i: usize, j: usize, k: usize, l: Label) {
        let idx = self.index(i, j, k);
        self.labels[idx] = l;
    }

    /// Center of voxel (i,j,k) in world mm.
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin_mm[0] + (i as f64 + 0.5) * self.spacing_mm[0],
            self.origin_mm[1] + (j as f64 + 0.5) * self.spacing_mm[1],
            self.origin_mm[2] + (k as f64 + 0.5) * self.spacing_mm[2],
        )
    }

    pub fn bounding_box(&self) -> Aabb {
        let o = Vec3::from_array(self.origin_mm);
        let ext = Vec3::new(
            self.dims[0] as f64 * self.spacing_mm[0],
            self.dims[1] as f64 * self.spacing_mm[1],
            self.dims[2] as f64 * self.spacing_mm[2],
        );
        Aabb::new(o, o + ext)
    }

    pub fn distinct_labels(&self) -> Vec<Label> {
        let mut seen = vec![false; Label::MAX as usize + 1];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..=Label::MAX).filter(|&l| seen[l as usize]).collect()
    }

    /// Write the header + raw payload pair next to `header_path`.
    pub fn save(&self, header_path: &Path) -> Result<()> {
        let stem = header_path
            .file_stem()
            .ok_or_else(|| SimError::validation("header path has no file stem"))?
            .to_string_lossy()
            .to_string();
        let raw_name = format!("{stem}.raw");
        let header = SegmentationHeader {
            dims: self.dims,
            spacing_mm: self.spacing_mm,
            origin_mm: self.origin_mm,
            dtype: "u16".into(),
            data: raw_name.clone(),
        };
        fs::write(header_path, serde_json::to_vec_pretty(&header)?)?;
        let mut payload = Vec::with_capacity(self.labels.len() * 2);
        for &l in &self.labels {
            payload.extend_from_slice(&l.to_le_bytes());
        }
        fs::write(header_path.with_file_name(raw_name), payload)?;
        Ok(())
    }
}

/// Load a segmentation from its JSON header.
pub fn load_segmentation(header_path: &Path) -> Result<SegmentationVolume> {
    let text = fs::read_to_string(header_path)
        .map_err(|e| SimError::format(format!("cannot read {}: {e}", header_path.display())))?;
    let header: SegmentationHeader = serde_json::from_str(&text)?;
    let raw_path = header_path.with_file_name(&header.data);
    let payload = fs::read(&raw_path)
        .map_err(|e| SimError::format(format!("cannot read payload {}: {e}", raw_path.display())))?;
    let n = header.dims[0] * header.dims[1] * header.dims[2];
    let labels: Vec<Label> = match header.dtype.as_str() {
        "u8" => {
            if payload.len() != n {
                return Err(SimError::format(format!(
                    "payload is {} bytes, expected {} (u8 x dims)",
                    payload.len(),
                    n
                )));
            }
            payload.iter().map(|&b| b as Label).collect()
        }
        "u16" => {
            if payload.len() != n * 2 {
                return Err(SimError::format(format!(
                    "payload is {} bytes, expected {} (u16 x dims)",
                    payload.len(),
                    n * 2
                )));
            }
            payload
                .chunks_exact(2)
                .map(|c| Label::from_le_bytes([c[0], c[1]]))
                .collect()
        }
        other => return Err(SimError::format(format!("unknown dtype {other:?}"))),
    };
    SegmentationVolume::new(header.dims, header.spacing_mm, header.origin_mm, labels)
}

#[cfg(test)]
pub(crate) fn sphere_volume(n: usize, radius_vox: f64, label: Label) -> SegmentationVolume {
    let mut v = SegmentationVolume::filled([n, n, n], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0], 0);
    let c = n as f64 / 2.0;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let d = (((i as f64 + 0.5) - c).powi(2)
                    + ((j as f64 + 0.5) - c).powi(2)
                    + ((k as f64 + 0.5) - c).powi(2))
                .sqrt();
                if d <= radius_vox {
                    v.set_label(i, j, k, label);
                }
            }
        }
    }
    v
}
