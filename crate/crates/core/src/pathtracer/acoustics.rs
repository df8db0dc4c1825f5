//! Acoustic ray physics at boundaries and in bulk tissue.

/// Multiplicative intensity loss over `distance_mm` of tissue, dB-domain:
/// `10^(-alpha * d_cm * f_MHz / 10)`.
pub fn attenuation_factor(distance_mm: f64, alpha_db_cm_mhz: f64, frequency_hz: f64) -> f64 {
    let db = alpha_db_cm_mhz * (distance_mm / 10.0) * (frequency_hz / 1e6);
    10f64.powf(-db / 10.0)
}

/// Attenuate an intensity over a propagation distance.
pub fn attenuate(intensity: f64, distance_mm: f64, alpha_db_cm_mhz: f64, frequency_hz: f64) -> f64 {
    debug_assert!(distance_mm >= 0.0);
    intensity * attenuation_factor(distance_mm, alpha_db_cm_mhz, frequency_hz)
}

/// Outcome of an impedance boundary for an incident angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySplit {
    /// Energy reflection coefficient.
    pub r: f64,
    /// Energy transmission coefficient, 1 - r.
    pub t: f64,
    /// Cosine of the refraction angle; None under total internal reflection.
    pub cos_theta2: Option<f64>,
    pub total_internal: bool,
}

/// Reflection/transmission split with the impedance-ratio refraction law.
///
/// `cos_theta1 = n . v` with the normal oriented against the incident ray,
/// so it is non-negative. A negative radicand in the refraction-angle root
/// means total internal reflection: R = 1, T = 0.
pub fn reflection_transmission(z1: f64, z2: f64, cos_theta1: f64) -> BoundarySplit {
    debug_assert!(z1 > 0.0 && z2 > 0.0);
    let cos1 = cos_theta1.clamp(0.0, 1.0);
    let sin1_sq = 1.0 - cos1 * cos1;
    let ratio = z1 / z2;
    let radicand = 1.0 - ratio * ratio * sin1_sq;
    if radicand < 0.0 {
        return BoundarySplit { r: 1.0, t: 0.0, cos_theta2: None, total_internal: true };
    }
    let cos2 = radicand.sqrt();
    let denom = z2 * cos2 + z1 * cos1;
    let r = if denom == 0.0 {
        1.0
    } else {
        ((z2 * cos2 - z1 * cos1) / denom).powi(2)
    };
    let r = r.min(1.0);
    BoundarySplit { r, t: 1.0 - r, cos_theta2: Some(cos2), total_internal: false }
}

/// Guard for grazing incidence before raising to a negative power.
const MIN_COS_FOR_NEGATIVE_GAMMA: f64 = 1e-4;

/// Echo intensity returned to the transducer from a boundary hit:
/// `((z2 - z1)/(z2 + z1))^2 * I^tau * cos(theta)^gamma`.
pub fn boundary_echo(
    intensity_at_p: f64,
    z1: f64,
    z2: f64,
    cos_theta: f64,
    tau: f64,
    gamma: f64,
) -> f64 {
    debug_assert!(intensity_at_p >= 0.0);
    let rt = ((z2 - z1) / (z2 + z1)).powi(2);
    if rt == 0.0 {
        return 0.0;
    }
    let cos = if gamma < 0.0 {
        cos_theta.max(MIN_COS_FOR_NEGATIVE_GAMMA)
    } else {
        cos_theta
    };
    rt * intensity_at_p.powf(tau) * cos.powf(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_distance_and_zero_alpha_are_identities() {
        assert_eq!(attenuate(0.7, 0.0, 0.5, 3.6e6), 0.7);
        assert_eq!(attenuate(0.7, 25.0, 0.0, 3.6e6), 0.7);
    }

    #[test]
    fn attenuation_matches_hand_evaluated_db_law() {
        // 0.5 dB/cm/MHz, 3.6 MHz, 2 cm -> 3.6 dB -> 10^-0.36
        let got = attenuate(1.0, 20.0, 0.5, 3.6e6);
        assert_relative_eq!(got, 10f64.powf(-0.36), epsilon = 1e-12);
        assert_relative_eq!(got, 0.43651583, epsilon = 1e-7);
    }

    #[test]
    fn attenuation_composes_multiplicatively() {
        let a = attenuate(attenuate(1.0, 7.0, 0.5, 3.6e6), 13.0, 0.5, 3.6e6);
        let b = attenuate(1.0, 20.0, 0.5, 3.6e6);
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn matched_impedance_reflects_nothing() {
        let s = reflection_transmission(1.5e6, 1.5e6, 0.83);
        assert_relative_eq!(s.r, 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.t, 1.0, epsilon = 1e-12);
        assert!(!s.total_internal);
    }

    #[test]
    fn normal_incidence_matches_hand_value() {
        let s = reflection_transmission(1.38e6, 1.62e6, 1.0);
        assert_relative_eq!(s.r, 0.0064, epsilon = 1e-12);
        assert_relative_eq!(s.cos_theta2.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_radicand_is_total_internal_reflection() {
        // z1 > z2 at steep incidence makes the radicand negative
        let s = reflection_transmission(3.0e6, 1.0e6, 0.1);
        assert!(s.total_internal);
        assert_eq!(s.r, 1.0);
        assert_eq!(s.t, 0.0);
        assert!(s.cos_theta2.is_none());
    }

    #[test]
    fn echo_is_zero_at_matched_impedance() {
        assert_eq!(boundary_echo(1.0, 1.5e6, 1.5e6, 0.7, 1.0, 0.5), 0.0);
    }

    #[test]
    fn echo_reduces_to_impedance_factor_for_tau1_gamma0() {
        let got = boundary_echo(1.0, 1.38e6, 1.62e6, 0.5, 1.0, 0.0);
        assert_relative_eq!(got, 0.0064, epsilon = 1e-12);
    }

    #[test]
    fn negative_gamma_amplifies_grazing_angles_monotonically() {
        let gamma = -1.8;
        let mut last = 0.0;
        for cos in [1.0, 0.7, 0.4, 0.1, 0.01] {
            let e = boundary_echo(1.0, 1.38e6, 1.62e6, cos, 1.0, gamma);
            assert!(e > last, "echo should grow as cos shrinks");
            last = e;
        }
        // and the grazing guard keeps it finite
        let e0 = boundary_echo(1.0, 1.38e6, 1.62e6, 0.0, 1.0, gamma);
        assert!(e0.is_finite());
    }
}
