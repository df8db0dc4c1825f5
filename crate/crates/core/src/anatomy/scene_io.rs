//! Preprocessed scene container.
//!
//! Single binary file: magic "SVDB", version u32, a JSON metadata block
//! (geometry + tissue table), then raw little-endian tile and SDF payloads.
//! Loading never re-runs the distance sweeps.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

use super::sdf::NarrowBandSdf;
use super::sparse_grid::{SparseLabelGrid, TileCoord, TILE_SIZE};
use super::tissue::TissueTable;
use super::{AnatomyVolume, Label};

const MAGIC: &[u8; 4] = b"SVDB";
const VERSION: u32 = 1;
const TILE_VOXELS: usize = TILE_SIZE * TILE_SIZE * TILE_SIZE;

#[derive(Serialize, Deserialize)]
struct SceneMeta {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    origin_mm: [f64; 3],
    tile_size: usize,
    index_bounds: Option<([i32; 3], [i32; 3])>,
    tissues: std::collections::BTreeMap<String, super::TissueProperties>,
}

pub fn save_scene(scene: &AnatomyVolume, path: &Path) -> Result<()> {
    let g = &scene.label_grid;
    let meta = SceneMeta {
        dims: g.dims,
        spacing_mm: g.spacing_mm,
        origin_mm: g.origin_mm,
        tile_size: TILE_SIZE,
        index_bounds: g.index_bounds,
        tissues: scene.tissues.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
    };
    let meta_json = serde_json::to_vec(&meta)?;

    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta_json.len() as u64).to_le_bytes())?;
    w.write_all(&meta_json)?;

    // tiles, sorted for byte-stable output
    let mut tiles: Vec<(&TileCoord, &super::sparse_grid::Tile)> = g.tiles().collect();
    tiles.sort_by_key(|(c, _)| **c);
    w.write_all(&(tiles.len() as u64).to_le_bytes())?;
    for (coord, tile) in tiles {
        for c in coord {
            w.write_all(&c.to_le_bytes())?;
        }
        for &l in tile.raw() {
            w.write_all(&l.to_le_bytes())?;
        }
    }

    let mut sdf_labels: Vec<&Label> = scene.sdfs.keys().collect();
    sdf_labels.sort();
    w.write_all(&(sdf_labels.len() as u32).to_le_bytes())?;
    for &label in sdf_labels {
        let sdf = &scene.sdfs[&label];
        w.write_all(&label.to_le_bytes())?;
        w.write_all(&(sdf.band_halfwidth as u32).to_le_bytes())?;
        let mut entries: Vec<([i32; 3], f32)> = sdf.entries().map(|(v, &d)| (*v, d)).collect();
        entries.sort_by_key(|(v, _)| *v);
        w.write_all(&(entries.len() as u64).to_le_bytes())?;
        for (v, d) in entries {
            for c in v {
                w.write_all(&c.to_le_bytes())?;
            }
            w.write_all(&d.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| SimError::format("scene file truncated"))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.bytes()?))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }
}

pub fn load_scene(path: &Path) -> Result<AnatomyVolume> {
    let file = fs::File::open(path)
        .map_err(|e| SimError::format(format!("cannot open {}: {e}", path.display())))?;
    let mut r = Reader { inner: std::io::BufReader::new(file) };

    let magic: [u8; 4] = r.bytes()?;
    if &magic != MAGIC {
        return Err(SimError::format("not a scene file (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(SimError::format(format!("unsupported scene version {version}")));
    }
    let meta_len = r.u64()? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.inner
        .read_exact(&mut meta_bytes)
        .map_err(|_| SimError::format("scene file truncated in metadata"))?;
    let meta: SceneMeta = serde_json::from_slice(&meta_bytes)?;
    if meta.tile_size != TILE_SIZE {
        return Err(SimError::format(format!(
            "scene was written with tile size {}, this build uses {}",
            meta.tile_size, TILE_SIZE
        )));
    }

    let tile_count = r.u64()? as usize;
    let mut tiles = HashMap::with_capacity(tile_count);
    for _ in 0..tile_count {
        let coord: TileCoord = [r.i32()?, r.i32()?, r.i32()?];
        let mut labels = Box::new([0 as Label; TILE_VOXELS]);
        for l in labels.iter_mut() {
            *l = r.u16()?;
        }
        tiles.insert(coord, SparseLabelGrid::make_tile(labels));
    }
    let label_grid = SparseLabelGrid::from_parts(
        meta.dims,
        meta.spacing_mm,
        meta.origin_mm,
        tiles,
        meta.index_bounds,
    );

    let sdf_count = r.u32()? as usize;
    let mut sdfs = HashMap::with_capacity(sdf_count);
    for _ in 0..sdf_count {
        let label = r.u16()?;
        let band = r.u32()? as usize;
        let n = r.u64()? as usize;
        let mut values = HashMap::with_capacity(n);
        for _ in 0..n {
            let v = [r.i32()?, r.i32()?, r.i32()?];
            values.insert(v, r.f32()?);
        }
        sdfs.insert(
            label,
            NarrowBandSdf::from_parts(label, band, meta.spacing_mm, meta.origin_mm, values),
        );
    }

    let mut tissues = TissueTable::new();
    for (k, v) in meta.tissues {
        let label: Label = k
            .parse()
            .map_err(|_| SimError::format(format!("bad tissue label key {k:?}")))?;
        tissues.insert(label, v);
    }

    let scene = AnatomyVolume { label_grid, sdfs, tissues };
    scene.validate()?;
    Ok(scene)
}
