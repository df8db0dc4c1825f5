//! Scene construction: sparse label grid + per-label SDF bands + tissues.

pub mod scene_io;
pub mod sdf;
pub mod segmentation;
pub mod sparse_grid;
pub mod tissue;

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Result, SimError};

pub use scene_io::{load_scene, save_scene};
pub use sdf::{build_sdf, surface_normal, NarrowBandSdf, DEFAULT_BAND_HALFWIDTH};
pub use segmentation::{load_segmentation, Label, SegmentationVolume};
pub use sparse_grid::{build_sparse_grid, LabelCursor, SparseLabelGrid, TILE_SIZE};
pub use tissue::{load_tissue_table, parse_tissue_table, save_tissue_table, TissueProperties, TissueTable};

/// The ray-traceable scene: label grid, SDF bands, tissue bindings.
///
/// Immutable after construction and shared read-only across all simulation
/// threads.
#[derive(Debug, Clone)]
pub struct AnatomyVolume {
    pub label_grid: SparseLabelGrid,
    pub sdfs: HashMap<Label, NarrowBandSdf>,
    pub tissues: TissueTable,
}

impl AnatomyVolume {
    /// Build the full scene from a dense segmentation. SDF construction is
    /// parallel per label.
    pub fn build(seg: &SegmentationVolume, tissues: TissueTable) -> Result<Self> {
        Self::build_with_band(seg, tissues, DEFAULT_BAND_HALFWIDTH)
    }

    pub fn build_with_band(
        seg: &SegmentationVolume,
        tissues: TissueTable,
        band_halfwidth: usize,
    ) -> Result<Self> {
        let labels = seg.distinct_labels();
        if !tissues.contains_key(&0) {
            return Err(SimError::validation(
                "tissue table must define label 0 (background medium)",
            ));
        }
        for &l in &labels {
            if !tissues.contains_key(&l) {
                return Err(SimError::validation(format!(
                    "label {l} present in volume but missing from the tissue table"
                )));
            }
        }
        let organ_labels: Vec<Label> = labels.into_iter().filter(|&l| l != 0).collect();
        let sdfs: Result<Vec<(Label, NarrowBandSdf)>> = organ_labels
            .par_iter()
            .map(|&l| build_sdf(seg, l, band_halfwidth).map(|s| (l, s)))
            .collect();
        let sdfs: HashMap<Label, NarrowBandSdf> = sdfs?.into_iter().collect();
        let label_grid = build_sparse_grid(seg, TILE_SIZE);
        Ok(AnatomyVolume { label_grid, sdfs, tissues })
    }

    pub fn tissue(&self, label: Label) -> &TissueProperties {
        self.tissues.get(&label).unwrap_or_else(|| &self.tissues[&0])
    }

    /// Background (label 0) sound speed in m/s; the reference for sample
    /// spacing.
    pub fn background_sound_speed(&self) -> f64 {
        self.tissues[&0].c_m_s
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tissues.contains_key(&0) {
            return Err(SimError::validation("missing background tissue (label 0)"));
        }
        for t in self.tissues.values() {
            t.validate()?;
        }
        Ok(())
    }
}
