//! Cone sampling of continuation directions at boundaries.
//!
//! The polar angle about the reflection/refraction axis follows a truncated
//! normal; the azimuth is uniform. The returned pdf is per solid angle, so
//! the polar-angle Jacobian sin(phi) divides the angular density.

use crate::math::Vec3;
use crate::rng::{Stream, TruncatedNormal};

/// Guard against the sin(phi) -> 0 singularity of the solid-angle Jacobian;
/// samples that close to the axis get a huge pdf and thus ~zero weight.
const MIN_SIN_PHI: f64 = 1e-12;

/// A direction drawn around `axis` and its solid-angle density.
#[derive(Debug, Clone, Copy)]
pub struct ConeSample {
    pub direction: Vec3,
    pub pdf: f64,
}

/// Assemble a direction from cone angles: `phi` off `axis`, azimuth `theta`.
pub fn direction_from_angles(axis: Vec3, theta: f64, phi: f64) -> Vec3 {
    let (t1, t2) = axis.orthonormal_basis();
    let (sp, cp) = (phi.sin(), phi.cos());
    let (st, ct) = (theta.sin(), theta.cos());
    (axis * cp + (t1 * ct + t2 * st) * sp).normalized()
}

/// Solid-angle pdf of a polar draw from `dist` at angle `phi`.
pub fn cone_pdf(dist: &TruncatedNormal, phi: f64) -> f64 {
    dist.pdf(phi) / (2.0 * std::f64::consts::PI * phi.sin().max(MIN_SIN_PHI))
}

/// Draw a continuation direction in a cone about `axis`.
///
/// Uses inverse-transform sampling for the polar angle, so the draw at CDF
/// value 0 is exactly the cone axis and at 1 exactly the outer bound.
pub fn sample_cone_direction(axis: Vec3, dist: &TruncatedNormal, stream: &mut Stream) -> ConeSample {
    debug_assert!((axis.length() - 1.0).abs() < 1e-9, "axis must be unit length");
    let theta = 2.0 * std::f64::consts::PI * stream.u01();
    let phi = dist.icdf(stream.u01());
    ConeSample {
        direction: direction_from_angles(axis, theta, phi),
        pdf: cone_pdf(dist, phi),
    }
}
