//! Monte Carlo acoustic path tracing over the anatomy volume.
//!
//! Each scanline launches `rays_per_scanline` paths. A path marches in
//! fixed steps, attenuating through tissue and depositing the intensity
//! arriving at each radial bin it passes; at impedance boundaries it adds
//! an echo and stochastically continues as one reflected or refracted ray,
//! cone-sampled about the deterministic direction and importance-weighted
//! by the solid-angle pdf.
//!
//! The segment before the first collision is identical for every ray of a
//! scanline (no randomness is consumed until a boundary), so it is traced
//! once at full weight and the per-ray stochastic continuations fork from
//! the first boundary carrying 1/N each. This reproduces the plain
//! estimator exactly, up to floating-point summation order.

pub mod acoustics;
pub mod sampling;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anatomy::{AnatomyVolume, Label, LabelCursor};
use crate::error::{Result, SimError};
use crate::math::{Aabb, Vec3};
use crate::rng::{Stream, TruncatedNormal};
use crate::transducer::Scanline;

pub use acoustics::{attenuate, attenuation_factor, boundary_echo, reflection_transmission, BoundarySplit};
pub use sampling::{cone_pdf, direction_from_angles, sample_cone_direction, ConeSample};

/// Paths whose carried contribution falls below this are dropped.
const MIN_PATH_CONTRIBUTION: f64 = 1e-14;
/// Bisection iterations refining a boundary crossing inside one step.
const BISECTION_ITERS: usize = 25;
/// Margin around the traced region before a wandering ray is abandoned.
const WORLD_MARGIN_MM: f64 = 5.0;

/// Monte Carlo simulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub rays_per_scanline: usize,
    pub max_collisions: usize,
    /// Beam-coherence constant C0 damping off-beam deposits.
    pub beam_coherence_c0: f64,
    /// Truncated-normal polar distribution of the continuation cone.
    pub cone_mean: f64,
    pub cone_sigma: f64,
    pub cone_bounds: (f64, f64),
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            rays_per_scanline: 1000,
            max_collisions: 7,
            beam_coherence_c0: 0.1,
            cone_mean: 0.0,
            cone_sigma: std::f64::consts::FRAC_PI_4,
            cone_bounds: (0.0, std::f64::consts::FRAC_PI_2),
            seed: 0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.rays_per_scanline < 1 {
            return Err(SimError::validation("rays_per_scanline must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.beam_coherence_c0) {
            return Err(SimError::validation("beam coherence C0 must be in [0,1]"));
        }
        let (a, b) = self.cone_bounds;
        if !(a >= 0.0 && a < b) {
            return Err(SimError::validation("cone bounds must satisfy 0 <= a < b"));
        }
        if self.cone_sigma <= 0.0 {
            return Err(SimError::validation("cone sigma must be positive"));
        }
        Ok(())
    }

    pub fn cone_distribution(&self) -> TruncatedNormal {
        TruncatedNormal::new(self.cone_mean, self.cone_sigma, self.cone_bounds.0, self.cone_bounds.1)
    }
}

/// JSON form of [`SimParams`] using the experiment-table field names.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SimParamsFile {
    num_rays_per_element: usize,
    max_num_collisions: usize,
    beam_coherence: f64,
    #[serde(default)]
    cone: Option<ConeFile>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConeFile {
    mu: f64,
    sigma: f64,
    a: f64,
    b: f64,
}

pub fn parse_sim_params(json: &str) -> Result<SimParams> {
    let raw: SimParamsFile = serde_json::from_str(json)?;
    let d = SimParams::default();
    let cone = raw.cone.unwrap_or(ConeFile {
        mu: d.cone_mean,
        sigma: d.cone_sigma,
        a: d.cone_bounds.0,
        b: d.cone_bounds.1,
    });
    let p = SimParams {
        rays_per_scanline: raw.num_rays_per_element,
        max_collisions: raw.max_num_collisions,
        beam_coherence_c0: raw.beam_coherence,
        cone_mean: cone.mu,
        cone_sigma: cone.sigma,
        cone_bounds: (cone.a, cone.b),
        seed: raw.seed,
    };
    p.validate()?;
    Ok(p)
}

pub fn sim_params_to_json(p: &SimParams) -> String {
    let raw = SimParamsFile {
        num_rays_per_element: p.rays_per_scanline,
        max_num_collisions: p.max_collisions,
        beam_coherence: p.beam_coherence_c0,
        cone: Some(ConeFile {
            mu: p.cone_mean,
            sigma: p.cone_sigma,
            a: p.cone_bounds.0,
            b: p.cone_bounds.1,
        }),
        seed: p.seed,
    };
    serde_json::to_string_pretty(&raw).expect("params serialize")
}

/// State of one acoustic path.
#[derive(Debug, Clone)]
pub struct RayState {
    pub position: Vec3,
    pub direction: Vec3,
    /// Launch intensity times accumulated attenuation.
    pub intensity: f64,
    /// Accumulated f * cos(theta) / pdf estimator factors (and the 1/N
    /// share once the path has forked).
    pub path_weight: f64,
    pub current_label: Label,
    pub collisions: usize,
}

impl RayState {
    /// Intensity arriving at the current point, Eq. of the estimator.
    #[inline]
    pub fn arriving_intensity(&self) -> f64 {
        self.intensity * self.path_weight
    }
}

/// A resolved impedance interface along a path.
#[derive(Debug, Clone)]
pub struct BoundaryHit {
    pub z1: f64,
    pub z2: f64,
    /// Unit normal oriented against the incident direction.
    pub normal: Vec3,
    pub far_label: Label,
}

/// Accumulated echo intensity per scanline and radial bin.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap {
    pub num_scanlines: usize,
    pub num_samples: usize,
    /// Row-major [scanline][sample].
    pub data: Vec<f64>,
    /// Deposit counters for diagnostics.
    pub hits: Vec<u32>,
}

impl IntensityMap {
    pub fn zeros(num_scanlines: usize, num_samples: usize) -> Self {
        IntensityMap {
            num_scanlines,
            num_samples,
            data: vec![0.0; num_scanlines * num_samples],
            hits: vec![0; num_scanlines * num_samples],
        }
    }

    #[inline]
    pub fn row(&self, scanline: usize) -> &[f64] {
        &self.data[scanline * self.num_samples..(scanline + 1) * self.num_samples]
    }

    #[inline]
    pub fn value(&self, scanline: usize, sample: usize) -> f64 {
        self.data[scanline * self.num_samples + sample]
    }

    /// Project a point onto a scanline and add `value * w_R` to the nearest
    /// radial bin; projections outside the sampled depth are discarded.
    pub fn deposit(&mut self, scanline: &Scanline, point: Vec3, value: f64, params: &SimParams) {
        let offset = scanline.index * self.num_samples;
        let (data, hits) = (&mut self.data, &mut self.hits);
        let row = &mut data[offset..offset + self.num_samples];
        let hrow = &mut hits[offset..offset + self.num_samples];
        deposit_point(row, hrow, scanline, point, value, params.beam_coherence_c0);
    }
}

/// Off-beam damping w_R = C0 / (C0 + d); exactly 1 on the beam axis.
#[inline]
pub fn beam_coherence_weight(c0: f64, d_mm: f64) -> f64 {
    if d_mm <= 0.0 {
        1.0
    } else {
        c0 / (c0 + d_mm)
    }
}

fn deposit_point(
    row: &mut [f64],
    hits: &mut [u32],
    scanline: &Scanline,
    point: Vec3,
    value: f64,
    c0: f64,
) {
    let v = point - scanline.origin;
    let r = v.dot(scanline.direction);
    let Some(bin) = scanline.bin_of(r) else { return };
    let d = (v - scanline.direction * r).length();
    row[bin] += value * beam_coherence_weight(c0, d);
    hits[bin] += 1;
}

/// Stochastic reflect-or-refract continuation at a boundary.
///
/// Draws u ~ U(0,1); the path reflects when u < R, otherwise refracts. The
/// continuation direction is cone-sampled about the deterministic axis and
/// the path weight picks up f * cos(theta1) / pdf with f = R^beta T^(1-beta).
pub fn scatter_event(
    ray: &RayState,
    boundary: &BoundaryHit,
    params: &SimParams,
    cone: &TruncatedNormal,
    stream: &mut Stream,
) -> RayState {
    let d = ray.direction;
    let n = boundary.normal;
    let cos1 = (-d).dot(n).clamp(0.0, 1.0);
    let split = reflection_transmission(boundary.z1, boundary.z2, cos1);
    let u = stream.u01();
    let reflected = split.total_internal || u < split.r;

    let axis = if reflected {
        d.reflect(n).normalized()
    } else {
        refraction_direction(d, n, cos1, split.cos_theta2.unwrap_or(1.0))
    };
    let sample = sample_cone_direction(axis, cone, stream);
    let f = if reflected { split.r } else { split.t };
    let weight = f * cos1 / sample.pdf;

    RayState {
        position: ray.position,
        direction: sample.direction,
        intensity: ray.intensity,
        path_weight: ray.path_weight * weight,
        current_label: if reflected { ray.current_label } else { boundary.far_label },
        collisions: ray.collisions + 1,
    }
}

/// Deterministic refraction axis from the incident direction and the
/// refraction-angle cosine (impedance-ratio Snell form).
fn refraction_direction(d: Vec3, n: Vec3, cos1: f64, cos2: f64) -> Vec3 {
    let tangent = d + n * cos1;
    let sin1 = tangent.length();
    if sin1 < 1e-12 {
        return -n; // normal incidence: straight through
    }
    let sin2 = (1.0 - cos2 * cos2).max(0.0).sqrt();
    (tangent / sin1 * sin2 - n * cos2).normalized()
}

struct TissueView {
    z: f64,
    alpha: f64,
    tau: f64,
    gamma: f64,
    /// Intensity factor for one full march step.
    step_factor: f64,
}

struct TraceContext<'a> {
    anatomy: &'a AnatomyVolume,
    tissues: Vec<TissueView>,
    cone: TruncatedNormal,
    params: &'a SimParams,
    frequency_hz: f64,
    step_mm: f64,
    world: Aabb,
    volume: Aabb,
    max_path_mm: f64,
}

enum SegmentEnd {
    Exited,
    Boundary(BoundaryHit),
}

/// Trace the full frame: one intensity row per scanline, scanlines in
/// parallel over the shared read-only anatomy.
pub fn trace_frame(
    anatomy: &AnatomyVolume,
    scanlines: &[Scanline],
    frequency_hz: f64,
    params: &SimParams,
) -> IntensityMap {
    params.validate().expect("invalid simulation parameters");
    if scanlines.is_empty() {
        return IntensityMap::zeros(0, 0);
    }
    let num_samples = scanlines[0].num_samples;
    let depth = scanlines[0].depth_mm();

    let max_label = anatomy.tissues.keys().max().copied().unwrap_or(0) as usize;
    let step_mm = 0.5 * anatomy.label_grid.min_spacing();
    let mut tissues = Vec::with_capacity(max_label + 1);
    for l in 0..=max_label as u16 {
        let t = anatomy.tissue(l);
        tissues.push(TissueView {
            z: t.z,
            alpha: t.alpha_db_cm_mhz,
            tau: t.tau,
            gamma: t.gamma,
            step_factor: attenuation_factor(step_mm, t.alpha_db_cm_mhz, frequency_hz),
        });
    }

    let volume = anatomy.label_grid.bounding_box();
    let mut world = volume;
    for line in scanlines {
        let tip = line.origin + line.direction * depth;
        world = world.union(&Aabb::new(line.origin, line.origin).union(&Aabb::new(tip, tip)));
    }
    let world = world.expanded(WORLD_MARGIN_MM);

    let ctx = TraceContext {
        anatomy,
        tissues,
        cone: params.cone_distribution(),
        params,
        frequency_hz,
        step_mm,
        world,
        volume,
        max_path_mm: 4.0 * depth,
    };

    let rows: Vec<(Vec<f64>, Vec<u32>)> = scanlines
        .par_iter()
        .map(|line| trace_scanline(&ctx, line))
        .collect();

    let mut map = IntensityMap::zeros(scanlines.len(), num_samples);
    for (i, (row, hrow)) in rows.into_iter().enumerate() {
        map.data[i * num_samples..(i + 1) * num_samples].copy_from_slice(&row);
        map.hits[i * num_samples..(i + 1) * num_samples].copy_from_slice(&hrow);
    }
    map
}

fn trace_scanline(ctx: &TraceContext, line: &Scanline) -> (Vec<f64>, Vec<u32>) {
    let mut row = vec![0.0f64; line.num_samples];
    let mut hits = vec![0u32; line.num_samples];
    let mut cursor = LabelCursor::new(&ctx.anatomy.label_grid);

    // Deterministic shared prefix at full weight.
    let mut ray = RayState {
        position: line.origin,
        direction: line.direction,
        intensity: 1.0,
        path_weight: 1.0,
        current_label: ctx.anatomy.label_grid.label_at(line.origin),
        collisions: 0,
    };
    let mut path_len = 0.0f64;
    let mut last_bin: i64 = -1;
    let end = march_segment(ctx, line, &mut ray, &mut cursor, &mut row, &mut hits, &mut path_len, &mut last_bin);

    let SegmentEnd::Boundary(first_hit) = end else {
        return (row, hits); // no boundary: every ray is the prefix
    };
    deposit_echo(ctx, line, &ray, &first_hit, &mut row, &mut hits);
    if ctx.params.max_collisions == 0 {
        return (row, hits);
    }

    // Stochastic continuations, 1/N each, forked at the first boundary.
    let n = ctx.params.rays_per_scanline;
    let share = 1.0 / n as f64;
    let fork_bin = projected_bin(line, ray.position);
    for ray_index in 0..n {
        let mut stream = Stream::from_parts(&[
            ctx.params.seed,
            line.index as u64,
            ray_index as u64,
            ray.collisions as u64,
        ]);
        let mut r = scatter_event(&ray, &first_hit, ctx.params, &ctx.cone, &mut stream);
        r.path_weight *= share;
        let mut len = path_len;
        let mut last = fork_bin;
        loop {
            match march_segment(ctx, line, &mut r, &mut cursor, &mut row, &mut hits, &mut len, &mut last) {
                SegmentEnd::Exited => break,
                SegmentEnd::Boundary(hit) => {
                    deposit_echo(ctx, line, &r, &hit, &mut row, &mut hits);
                    if r.collisions >= ctx.params.max_collisions {
                        break;
                    }
                    let mut stream = Stream::from_parts(&[
                        ctx.params.seed,
                        line.index as u64,
                        ray_index as u64,
                        r.collisions as u64,
                    ]);
                    r = scatter_event(&r, &hit, ctx.params, &ctx.cone, &mut stream);
                }
            }
        }
    }
    (row, hits)
}

#[inline]
fn projected_bin(line: &Scanline, p: Vec3) -> i64 {
    let r = (p - line.origin).dot(line.direction);
    (r / line.sample_spacing_mm).round() as i64
}

/// March until the path leaves the world, dies out, or crosses a label
/// boundary. Interior intensity deposits happen at each radial bin the
/// projection passes while the path is inside the volume.
#[allow(clippy::too_many_arguments)]
fn march_segment(
    ctx: &TraceContext,
    line: &Scanline,
    ray: &mut RayState,
    cursor: &mut LabelCursor,
    row: &mut [f64],
    hits: &mut [u32],
    path_len: &mut f64,
    last_bin: &mut i64,
) -> SegmentEnd {
    let step = ctx.step_mm;
    loop {
        if ray.arriving_intensity() < MIN_PATH_CONTRIBUTION || *path_len > ctx.max_path_mm {
            return SegmentEnd::Exited;
        }
        let next = ray.position + ray.direction * step;
        let label = cursor.label_at(next);
        if label == ray.current_label {
            ray.intensity *= ctx.tissues[ray.current_label as usize].step_factor;
            ray.position = next;
            *path_len += step;
            deposit_interior(ctx, line, ray, row, hits, last_bin);
            if !ctx.world.contains(next) {
                return SegmentEnd::Exited;
            }
        } else {
            // Refine the crossing: lo stays in the current label, hi beyond it.
            let mut lo = ray.position;
            let mut hi = next;
            for _ in 0..BISECTION_ITERS {
                let mid = (lo + hi) * 0.5;
                if cursor.label_at(mid) == ray.current_label {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let hit_label = cursor.label_at(hi);
            let partial = (hi - ray.position).length();
            ray.intensity *= attenuation_factor(
                partial,
                ctx.tissues[ray.current_label as usize].alpha,
                ctx.frequency_hz,
            );
            let prev = ray.position;
            ray.position = hi;
            *path_len += partial;
            deposit_interior(ctx, line, ray, row, hits, last_bin);

            let normal = boundary_normal(ctx, ray, hit_label, prev, hi);
            return SegmentEnd::Boundary(BoundaryHit {
                z1: ctx.tissues[ray.current_label as usize].z,
                z2: ctx.tissues[hit_label as usize].z,
                normal,
                far_label: hit_label,
            });
        }
    }
}

/// Fill every radial bin the projection passed since the last deposit.
#[inline]
fn deposit_interior(
    ctx: &TraceContext,
    line: &Scanline,
    ray: &RayState,
    row: &mut [f64],
    hits: &mut [u32],
    last_bin: &mut i64,
) {
    if !ctx.volume.contains(ray.position) {
        return;
    }
    let v = ray.position - line.origin;
    let r = v.dot(line.direction);
    let bin = (r / line.sample_spacing_mm).round() as i64;
    if bin == *last_bin {
        return;
    }
    let d = (v - line.direction * r).length();
    let w = beam_coherence_weight(ctx.params.beam_coherence_c0, d);
    let value = ray.arriving_intensity() * w;
    let step_dir = if bin > *last_bin { 1 } else { -1 };
    let mut b = *last_bin;
    while b != bin {
        b += step_dir;
        if b >= 0 && (b as usize) < row.len() {
            row[b as usize] += value;
            hits[b as usize] += 1;
        }
    }
    *last_bin = bin;
}

/// Echo returned to the transducer from a boundary hit. The deposit is the
/// echo intensity scaled by the path's accumulated attenuation once more,
/// accounting for the return trip to the probe.
fn deposit_echo(
    ctx: &TraceContext,
    line: &Scanline,
    ray: &RayState,
    hit: &BoundaryHit,
    row: &mut [f64],
    hits: &mut [u32],
) {
    let cos1 = (-ray.direction).dot(hit.normal).clamp(0.0, 1.0);
    let far = &ctx.tissues[hit.far_label as usize];
    let echo = boundary_echo(ray.arriving_intensity(), hit.z1, hit.z2, cos1, far.tau, far.gamma);
    deposit_point(
        row,
        hits,
        line,
        ray.position,
        echo * ray.intensity,
        ctx.params.beam_coherence_c0,
    );
}

/// Smooth SDF normal when the band covers the hit, else the crossed voxel
/// face; always oriented against the incident direction.
fn boundary_normal(ctx: &TraceContext, ray: &RayState, hit_label: Label, prev: Vec3, hit: Vec3) -> Vec3 {
    let mut normal = None;
    for label in [hit_label, ray.current_label] {
        if label == 0 {
            continue;
        }
        if let Some(sdf) = ctx.anatomy.sdfs.get(&label) {
            if let Ok(n) = crate::anatomy::surface_normal(sdf, hit) {
                normal = Some(n);
                break;
            }
        }
    }
    let n = normal.unwrap_or_else(|| face_normal(ctx, prev, hit));
    // flip so the normal opposes the incident ray
    if n.dot(ray.direction) > 0.0 {
        -n
    } else {
        n
    }
}

/// Axis-aligned face normal of the voxel boundary crossed between two
/// points (the bisection leaves them a sub-voxel apart).
fn face_normal(ctx: &TraceContext, prev: Vec3, hit: Vec3) -> Vec3 {
    let g = &ctx.anatomy.label_grid;
    let a = g.voxel_of(prev);
    let b = g.voxel_of(hit);
    let mut best_axis = 0;
    let mut best = -1.0;
    let delta = hit - prev;
    let d = [delta.x, delta.y, delta.z];
    for axis in 0..3 {
        if a[axis] != b[axis] && d[axis].abs() > best {
            best = d[axis].abs();
            best_axis = axis;
        }
    }
    let mut n = [0.0; 3];
    n[best_axis] = if d[best_axis] > 0.0 { -1.0 } else { 1.0 };
    Vec3::new(n[0], n[1], n[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anatomy::{segmentation::SegmentationVolume, AnatomyVolume, TissueProperties, TissueTable};
    use crate::transducer::{make_scanlines, ProbePose, ScanGeometry, TransducerConfig};
    use approx::assert_relative_eq;

    fn table(entries: &[(Label, TissueProperties)]) -> TissueTable {
        entries.iter().cloned().collect()
    }

    fn bg(alpha: f64) -> TissueProperties {
        TissueProperties {
            name: "bg".into(),
            z: 1.54e6,
            alpha_db_cm_mhz: alpha,
            c_m_s: 1540.0,
            mu0: 0.5,
            sigma0: 0.0,
            mu1: 1.0,
            tau: 1.0,
            gamma: 0.0,
        }
    }

    fn probe(n: usize) -> TransducerConfig {
        TransducerConfig {
            center_frequency_hz: 3.6e6,
            sampling_frequency_hz: 50e6,
            element_width_mm: 0.3,
            element_height_mm: 13.0,
            kerf_mm: 0.05,
            num_elements: n,
            geometry: ScanGeometry::Linear,
        }
    }

    /// Homogeneous block: 40 mm wide/tall, extending to z = 60 mm.
    fn homogeneous(alpha: f64) -> AnatomyVolume {
        let seg = SegmentationVolume::filled(
            [80, 80, 120],
            [0.5, 0.5, 0.5],
            [-20.0, -20.0, 0.0],
            0,
        );
        AnatomyVolume::build(&seg, table(&[(0, bg(alpha))])).unwrap()
    }

    /// Slab of label 1 between z = slab_z0 and z = slab_z1.
    fn slab_scene(alpha_bg: f64, z_slab: f64, slab_z0: f64, slab_z1: f64) -> AnatomyVolume {
        let mut seg = SegmentationVolume::filled(
            [80, 80, 120],
            [0.5, 0.5, 0.5],
            [-20.0, -20.0, 0.0],
            0,
        );
        for k in 0..120 {
            let z = (k as f64 + 0.5) * 0.5;
            if z >= slab_z0 && z < slab_z1 {
                for j in 0..80 {
                    for i in 0..80 {
                        seg.set_label(i, j, k, 1);
                    }
                }
            }
        }
        let mut slab = bg(0.3);
        slab.name = "slab".into();
        slab.z = z_slab;
        AnatomyVolume::build(&seg, table(&[(0, bg(alpha_bg)), (1, slab)])).unwrap()
    }

    #[test]
    fn homogeneous_map_matches_attenuation_curve() {
        let anatomy = homogeneous(0.5);
        let pose = ProbePose::identity_at(Vec3::ZERO);
        let lines = make_scanlines(&probe(3), &pose, 50.0, 1540.0).unwrap();
        let params = SimParams { rays_per_scanline: 1, ..Default::default() };
        let map = trace_frame(&anatomy, &lines, 3.6e6, &params);
        let spacing = lines[0].sample_spacing_mm;
        for line in 0..3 {
            for k in (0..lines[0].num_samples).step_by(500) {
                let r = k as f64 * spacing;
                let expect = attenuation_factor(r, 0.5, 3.6e6);
                let got = map.value(line, k);
                // one march step of slack on the attenuation curve
                let lo = attenuation_factor(r + 0.3, 0.5, 3.6e6);
                let hi = attenuation_factor((r - 0.3).max(0.0), 0.5, 3.6e6);
                assert!(
                    got >= lo * 0.999 && got <= hi * 1.001,
                    "line {line} bin {k}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn empty_intersection_gives_zero_map() {
        let anatomy = homogeneous(0.5);
        // probe far away pointing off the volume
        let pose = ProbePose::identity_at(Vec3::new(500.0, 500.0, 500.0));
        let lines = make_scanlines(&probe(2), &pose, 30.0, 1540.0).unwrap();
        let map = trace_frame(&anatomy, &lines, 3.6e6, &SimParams::default());
        assert!(map.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn max_collisions_zero_is_seed_independent() {
        let anatomy = slab_scene(1.62e6, 1.8e6, 20.0, 30.0);
        let pose = ProbePose::identity_at(Vec3::ZERO);
        let lines = make_scanlines(&probe(4), &pose, 45.0, 1540.0).unwrap();
        let p1 = SimParams { max_collisions: 0, seed: 1, ..Default::default() };
        let p2 = SimParams { max_collisions: 0, seed: 999, ..Default::default() };
        let m1 = trace_frame(&anatomy, &lines, 3.6e6, &p1);
        let m2 = trace_frame(&anatomy, &lines, 3.6e6, &p2);
        assert_eq!(m1.data, m2.data);
    }

    #[test]
    fn trace_is_deterministic_across_thread_counts() {
        let anatomy = slab_scene(1.62e6, 2.0e6, 15.0, 25.0);
        let pose = ProbePose::identity_at(Vec3::ZERO);
        let lines = make_scanlines(&probe(6), &pose, 40.0, 1540.0).unwrap();
        let params = SimParams { rays_per_scanline: 64, seed: 7, ..Default::default() };
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let m1 = pool1.install(|| trace_frame(&anatomy, &lines, 3.6e6, &params));
        let m4 = pool4.install(|| trace_frame(&anatomy, &lines, 3.6e6, &params));
        assert_eq!(m1.data, m4.data);
        assert_eq!(m1.hits, m4.hits);
    }

    #[test]
    fn slab_echo_matches_semi_analytic_oracle() {
        // Slab front face at 20 mm; tau=1, gamma=0, normal incidence.
        let z1 = 1.54e6;
        let z2 = 1.9e6;
        let alpha = 0.5;
        let anatomy = slab_scene(z2, alpha, 20.0, 30.0);
        let pose = ProbePose::identity_at(Vec3::ZERO);
        let lines = make_scanlines(&probe(1), &pose, 45.0, 1540.0).unwrap();
        let line = &lines[0];
        let bin = line.bin_of(20.0).unwrap();

        let att = attenuation_factor(20.0, alpha, 3.6e6);
        let r_coef = ((z2 - z1) / (z2 + z1)).powi(2);
        let expect = r_coef * att * att;

        let params = SimParams { rays_per_scanline: 16, max_collisions: 3, ..Default::default() };
        let map = trace_frame(&anatomy, &lines, 3.6e6, &params);
        // the echo lands in the hit bin on top of the interior deposit there
        let interior = att; // I(P) deposited while passing the bin
        let got = map.value(0, bin);
        let echo_part = got - interior;
        assert_relative_eq!(echo_part, expect, max_relative = 0.02);
    }

    #[test]
    fn reflect_fraction_matches_closed_form_r() {
        let z1 = 1.4e6;
        let z2 = 2.2e6;
        let cos1 = 0.9;
        let split = reflection_transmission(z1, z2, cos1);
        let boundary = BoundaryHit { z1, z2, normal: Vec3::new(0.0, 0.0, -1.0), far_label: 1 };
        let ray = RayState {
            position: Vec3::ZERO,
            direction: Vec3::new((1.0f64 - cos1 * cos1).sqrt(), 0.0, cos1).normalized(),
            intensity: 1.0,
            path_weight: 1.0,
            current_label: 0,
            collisions: 0,
        };
        let params = SimParams::default();
        let cone = params.cone_distribution();
        let n = 100_000;
        let mut reflected = 0usize;
        for i in 0..n {
            let mut stream = Stream::from_parts(&[11, 0, i as u64, 0]);
            let out = scatter_event(&ray, &boundary, &params, &cone, &mut stream);
            if out.current_label == 0 {
                reflected += 1;
            }
        }
        let frac = reflected as f64 / n as f64;
        assert!((frac - split.r).abs() < 0.005, "frac {frac} vs R {}", split.r);
    }

    #[test]
    fn transparent_and_total_internal_boundaries_are_forced() {
        let params = SimParams::default();
        let cone = params.cone_distribution();
        let ray = RayState {
            position: Vec3::ZERO,
            direction: Vec3::Z,
            intensity: 1.0,
            path_weight: 1.0,
            current_label: 0,
            collisions: 0,
        };
        // matched impedance: always refracts into the far label
        let b = BoundaryHit { z1: 1.5e6, z2: 1.5e6, normal: -Vec3::Z, far_label: 3 };
        for i in 0..50 {
            let mut s = Stream::from_parts(&[i]);
            let out = scatter_event(&ray, &b, &params, &cone, &mut s);
            assert_eq!(out.current_label, 3);
            assert_eq!(out.collisions, 1);
        }
        // grazing high-to-low impedance: total internal, always reflects
        let graze = RayState {
            direction: Vec3::new(0.995, 0.0, 0.0998).normalized(),
            ..ray.clone()
        };
        let b2 = BoundaryHit { z1: 3.0e6, z2: 1.0e6, normal: -Vec3::Z, far_label: 3 };
        for i in 0..50 {
            let mut s = Stream::from_parts(&[100 + i]);
            let out = scatter_event(&graze, &b2, &params, &cone, &mut s);
            assert_eq!(out.current_label, 0, "total internal must reflect");
        }
    }

    #[test]
    fn deposit_weights_and_range_clipping() {
        let pose = ProbePose::identity_at(Vec3::ZERO);
        let lines = make_scanlines(&probe(1), &pose, 10.0, 1540.0).unwrap();
        let line = &lines[0];
        let mut map = IntensityMap::zeros(1, line.num_samples);
        let params = SimParams { beam_coherence_c0: 0.1, ..Default::default() };

        // on-beam: w_R = 1
        map.deposit(line, Vec3::new(0.0, 0.0, 5.0), 1.0, &params);
        let bin = line.bin_of(5.0).unwrap();
        assert_relative_eq!(map.value(0, bin), 1.0, epsilon = 1e-12);

        // 0.1 mm off-beam with C0 = 0.1: w_R = 0.5
        let mut map2 = IntensityMap::zeros(1, line.num_samples);
        map2.deposit(line, Vec3::new(0.1, 0.0, 5.0), 1.0, &params);
        assert_relative_eq!(map2.value(0, bin), 0.5, epsilon = 1e-12);

        // beyond the last radial sample: discarded
        let mut map3 = IntensityMap::zeros(1, line.num_samples);
        map3.deposit(line, Vec3::new(0.0, 0.0, 11.0), 1.0, &params);
        assert!(map3.data.iter().all(|&v| v == 0.0));
        // behind the probe: discarded
        map3.deposit(line, Vec3::new(0.0, 0.0, -1.0), 1.0, &params);
        assert!(map3.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_bound_holds_in_the_deterministic_regime() {
        // With tau >= 1, gamma >= 0 and no importance weights in play
        // (max_collisions = 0), every deposit is at most the launch intensity.
        let anatomy = slab_scene(2.4e6, 0.9, 12.0, 22.0);
        let pose = ProbePose::identity_at(Vec3::ZERO);
        let lines = make_scanlines(&probe(4), &pose, 40.0, 1540.0).unwrap();
        let params = SimParams { max_collisions: 0, ..Default::default() };
        let map = trace_frame(&anatomy, &lines, 3.6e6, &params);
        assert!(map.data.iter().all(|&v| v <= 1.0 + 1e-9 && v >= 0.0));
        assert!(map.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn variance_scales_inversely_with_ray_count() {
        // One boundary, one stochastic fork; the post-boundary deposit sum is
        // a mean of N iid path contributions, so Var ~ 1/N.
        let anatomy = slab_scene(2.0e6, 0.5, 10.0, 60.0);
        let pose = ProbePose::identity_at(Vec3::ZERO);
        let lines = make_scanlines(&probe(1), &pose, 40.0, 1540.0).unwrap();
        let boundary_bin = lines[0].bin_of(10.0).unwrap();
        let repeats = 48;
        let mut variances = Vec::new();
        for &n in &[100usize, 400, 1600] {
            let mut totals = Vec::new();
            for rep in 0..repeats {
                let params = SimParams {
                    rays_per_scanline: n,
                    max_collisions: 1,
                    seed: 1000 + rep,
                    ..Default::default()
                };
                let map = trace_frame(&anatomy, &lines, 3.6e6, &params);
                let total: f64 = map.row(0)[boundary_bin + 10..].iter().sum();
                totals.push(total);
            }
            let mean = totals.iter().sum::<f64>() / repeats as f64;
            let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64;
            variances.push(var);
        }
        let r1 = variances[0] / variances[1];
        let r2 = variances[1] / variances[2];
        for (i, r) in [r1, r2].iter().enumerate() {
            assert!(
                (4.0 / 1.5..=4.0 * 1.5).contains(r),
                "variance ratio {i}: {r} (vars {variances:?})"
            );
        }
    }
}
