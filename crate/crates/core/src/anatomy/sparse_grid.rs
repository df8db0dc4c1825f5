//! Sparse tiled label grid for random access during traversal.
//!
//! The dense segmentation is cut into 8^3 tiles and all-background tiles
//! are dropped. Lookups outside every stored tile return background.

use std::collections::HashMap;

use crate::math::{Aabb, Vec3};

use super::segmentation::{Label, SegmentationVolume};

/// Voxels per tile edge (leaf size of the tree this layout mimics).
pub const TILE_SIZE: usize = 8;
const TILE_VOXELS: usize = TILE_SIZE * TILE_SIZE * TILE_SIZE;

pub type TileCoord = [i32; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    labels: Box<[Label; TILE_VOXELS]>,
}

impl Tile {
    #[inline]
    pub fn get(&self, lx: usize, ly: usize, lz: usize) -> Label {
        self.labels[(lz * TILE_SIZE + ly) * TILE_SIZE + lx]
    }

    pub fn raw(&self) -> &[Label] {
        &self.labels[..]
    }
}

#[derive(Debug, Clone)]
pub struct SparseLabelGrid {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    tiles: HashMap<TileCoord, Tile>,
    /// Inclusive voxel-index bounds of occupied space, None when empty.
    pub index_bounds: Option<([i32; 3], [i32; 3])>,
}

/// Cut a segmentation into sparse tiles, dropping all-background blocks.
pub fn build_sparse_grid(seg: &SegmentationVolume, tile_size: usize) -> SparseLabelGrid {
    assert!(tile_size >= 2, "tile size below 2 defeats the layout");
    assert_eq!(tile_size, TILE_SIZE, "grid is compiled for 8^3 tiles");
    let mut tiles = HashMap::new();
    let mut bounds: Option<([i32; 3], [i32; 3])> = None;
    let tiles_per_axis = [
        seg.dims[0].div_ceil(TILE_SIZE),
        seg.dims[1].div_ceil(TILE_SIZE),
        seg.dims[2].div_ceil(TILE_SIZE),
    ];
    for tz in 0..tiles_per_axis[2] {
        for ty in 0..tiles_per_axis[1] {
            for tx in 0..tiles_per_axis[0] {
                let mut labels = Box::new([0 as Label; TILE_VOXELS]);
                let mut occupied = false;
                for lz in 0..TILE_SIZE {
                    let k = tz * TILE_SIZE + lz;
                    if k >= seg.dims[2] {
                        break;
                    }
                    for ly in 0..TILE_SIZE {
                        let j = ty * TILE_SIZE + ly;
                        if j >= seg.dims[1] {
                            break;
                        }
                        for lx in 0..TILE_SIZE {
                            let i = tx * TILE_SIZE + lx;
                            if i >= seg.dims[0] {
                                break;
                            }
                            let l = seg.label(i, j, k);
                            if l != 0 {
                                occupied = true;
                                labels[(lz * TILE_SIZE + ly) * TILE_SIZE + lx] = l;
                                let v = [i as i32, j as i32, k as i32];
                                bounds = Some(match bounds {
                                    None => (v, v),
                                    Some((lo, hi)) => (
                                        [lo[0].min(v[0]), lo[1].min(v[1]), lo[2].min(v[2])],
                                        [hi[0].max(v[0]), hi[1].max(v[1]), hi[2].max(v[2])],
                                    ),
                                });
                            }
                        }
                    }
                }
                if occupied {
                    tiles.insert([tx as i32, ty as i32, tz as i32], Tile { labels });
                }
            }
        }
    }
    SparseLabelGrid {
        dims: seg.dims,
        spacing_mm: seg.spacing_mm,
        origin_mm: seg.origin_mm,
        tiles,
        index_bounds: bounds,
    }
}

impl SparseLabelGrid {
    pub fn from_parts(
        dims: [usize; 3],
        spacing_mm: [f64; 3],
        origin_mm: [f64; 3],
        tiles: HashMap<TileCoord, Tile>,
        index_bounds: Option<([i32; 3], [i32; 3])>,
    ) -> Self {
        SparseLabelGrid { dims, spacing_mm, origin_mm, tiles, index_bounds }
    }

    pub fn tile_count(&self) -> usize {
        self.tiles.len()
    }

    pub fn tiles(&self) -> impl Iterator<Item = (&TileCoord, &Tile)> {
        self.tiles.iter()
    }

    pub fn make_tile(labels: Box<[Label; TILE_VOXELS]>) -> Tile {
        Tile { labels }
    }

    /// Label at integer voxel coordinates; background outside all tiles.
    #[inline]
    pub fn label_at_voxel(&self, v: [i32; 3]) -> Label {
        if v[0] < 0 || v[1] < 0 || v[2] < 0 {
            return 0;
        }
        let tc = [
            v[0] / TILE_SIZE as i32,
            v[1] / TILE_SIZE as i32,
            v[2] / TILE_SIZE as i32,
        ];
        match self.tiles.get(&tc) {
            None => 0,
            Some(t) => t.get(
                (v[0] % TILE_SIZE as i32) as usize,
                (v[1] % TILE_SIZE as i32) as usize,
                (v[2] % TILE_SIZE as i32) as usize,
            ),
        }
    }

    /// Voxel index containing a world point (floor convention).
    #[inline]
    pub fn voxel_of(&self, p: Vec3) -> [i32; 3] {
        [
            ((p.x - self.origin_mm[0]) / self.spacing_mm[0]).floor() as i32,
            ((p.y - self.origin_mm[1]) / self.spacing_mm[1]).floor() as i32,
            ((p.z - self.origin_mm[2]) / self.spacing_mm[2]).floor() as i32,
        ]
    }

    /// Label at a world point (nearest voxel, floor tie-break).
    #[inline]
    pub fn label_at(&self, p: Vec3) -> Label {
        self.label_at_voxel(self.voxel_of(p))
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

    pub fn min_spacing(&self) -> f64 {
        self.spacing_mm[0].min(self.spacing_mm[1]).min(self.spacing_mm[2])
    }
}

/// One-tile lookup cache for tight traversal loops.
///
/// Rays overwhelmingly revisit the tile they are already in, so this skips
/// the hash lookup on ~7/8 of queries.
pub struct LabelCursor<'a> {
    grid: &'a SparseLabelGrid,
    tile_coord: TileCoord,
    tile: Option<&'a Tile>,
}

impl<'a> LabelCursor<'a> {
    pub fn new(grid: &'a SparseLabelGrid) -> Self {
        LabelCursor { grid, tile_coord: [i32::MIN; 3], tile: None }
    }

    #[inline]
    pub fn label_at(&mut self, p: Vec3) -> Label {
        let v = self.grid.voxel_of(p);
        if v[0] < 0 || v[1] < 0 || v[2] < 0 {
            return 0;
        }
        let tc = [
            v[0] / TILE_SIZE as i32,
            v[1] / TILE_SIZE as i32,
            v[2] / TILE_SIZE as i32,
        ];
        if tc != self.tile_coord {
            self.tile_coord = tc;
            self.tile = self.grid.tiles.get(&tc);
        }
        match self.tile {
            None => 0,
            Some(t) => t.get(
                (v[0] % TILE_SIZE as i32) as usize,
                (v[1] % TILE_SIZE as i32) as usize,
                (v[2] % TILE_SIZE as i32) as usize,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anatomy::segmentation::sphere_volume;

    #[test]
    fn empty_volume_stores_no_tiles() {
        let seg = SegmentationVolume::filled([64, 64, 64], [1.0; 3], [0.0; 3], 0);
        let g = build_sparse_grid(&seg, TILE_SIZE);
        assert_eq!(g.tile_count(), 0);
        assert_eq!(g.label_at(Vec3::new(32.0, 32.0, 32.0)), 0);
    }

    #[test]
    fn single_voxel_occupies_one_tile() {
        let mut seg = SegmentationVolume::filled([64, 64, 64], [1.0; 3], [0.0; 3], 0);
        seg.set_label(0, 0, 0, 5);
        let g = build_sparse_grid(&seg, TILE_SIZE);
        assert_eq!(g.tile_count(), 1);
        assert_eq!(g.label_at_voxel([0, 0, 0]), 5);
        assert_eq!(g.label_at_voxel([1, 0, 0]), 0);
    }

    #[test]
    fn sphere_lookup_matches_dense_everywhere() {
        let seg = sphere_volume(64, 20.0, 1);
        let g = build_sparse_grid(&seg, TILE_SIZE);
        for k in 0..64 {
            for j in 0..64 {
                for i in 0..64 {
                    assert_eq!(
                        g.label_at_voxel([i as i32, j as i32, k as i32]),
                        seg.label(i, j, k),
                        "mismatch at ({i},{j},{k})"
                    );
                }
            }
        }
    }

    #[test]
    fn sphere_is_sparser_than_dense_tiling() {
        let seg = sphere_volume(64, 20.0, 1);
        let g = build_sparse_grid(&seg, TILE_SIZE);
        let dense_tiles = (64 / TILE_SIZE).pow(3);
        assert!(g.tile_count() < dense_tiles, "{} tiles", g.tile_count());
    }

    #[test]
    fn out_of_bounds_and_corner_conventions() {
        let seg = sphere_volume(64, 20.0, 1);
        let g = build_sparse_grid(&seg, TILE_SIZE);
        assert_eq!(g.label_at(Vec3::new(-1.0, 0.0, 0.0)), 0);
        assert_eq!(g.label_at(Vec3::new(1e4, 0.0, 0.0)), 0);
        assert_eq!(g.label_at(Vec3::new(32.0, 32.0, 32.0)), 1);
        // a voxel-corner point floors into the voxel it opens
        let p = Vec3::new(32.0, 32.0, 32.0);
        assert_eq!(g.voxel_of(p), [32, 32, 32]);
    }

    #[test]
    fn cursor_agrees_with_direct_lookup() {
        let seg = sphere_volume(32, 10.0, 2);
        let g = build_sparse_grid(&seg, TILE_SIZE);
        let mut cur = LabelCursor::new(&g);
        let mut s = crate::rng::Stream::from_parts(&[7]);
        for _ in 0..2000 {
            let p = Vec3::new(s.u01() * 40.0 - 4.0, s.u01() * 40.0 - 4.0, s.u01() * 40.0 - 4.0);
            assert_eq!(cur.label_at(p), g.label_at(p));
        }
    }
}
