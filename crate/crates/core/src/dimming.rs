//! Hybrid dimming arithmetic.
//!
//! The network dims by doing two things at once: switching a subset of LEDs
//! off (spatial dimming) and shifting the DC bias of the LEDs that stay on
//! (amplitude dimming). For a target dimming fraction `eta`, the active
//! count is `floor(eta * total)` and the bias of the survivors rises so that
//! the total emitted DC equals `eta * total` LEDs at the mid-range bias.
//! The signal headroom is whatever symmetric swing the bias leaves before
//! hitting either end of the drive range.

use crate::{Error, Result};

/// Activation count, DC bias, and signal headroom for one dimming target.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DimmingConfig {
    /// The dimming fraction this plan realizes.
    pub target: f64,
    /// Number of LEDs that stay on.
    pub active_count: usize,
    /// DC bias of each active LED, in amperes.
    pub dc_bias_a: f64,
    /// Largest symmetric signal amplitude the bias leaves available.
    pub headroom_a: f64,
    /// Mid-range drive current (the full-brightness reference bias).
    pub midpoint_a: f64,
}

impl DimmingConfig {
    /// True when the bias sits at an end of the drive range and no signal
    /// swing is possible.
    pub fn is_degenerate(&self) -> bool {
        self.headroom_a <= 0.0
    }
}

/// Plan the activation count and DC bias that realize dimming fraction
/// `target` over `total_leds` LEDs driven in `[low_a, high_a]`.
pub fn plan_dimming(target: f64, total_leds: usize, low_a: f64, high_a: f64) -> Result<DimmingConfig> {
    let midpoint = (low_a + high_a) / 2.0;
    let active = (target * total_leds as f64).floor() as usize;
    if active == 0 {
        return Err(Error::InfeasibleDimming { eta: target });
    }
    // Concentrate the dimmed total DC of all LEDs onto the active ones.
    let bias = target * total_leds as f64 * (midpoint - low_a) / active as f64 + low_a;
    if bias > high_a {
        return Err(Error::BiasAboveRange {
            eta: target,
            bias,
            high: high_a,
        });
    }
    Ok(DimmingConfig {
        target,
        active_count: active,
        dc_bias_a: bias,
        headroom_a: (bias - low_a).min(high_a - bias),
        midpoint_a: midpoint,
    })
}

/// The dimming fraction a given activation count and bias actually realize —
/// the inverse of [`plan_dimming`].
pub fn dimming_level(
    active_count: usize,
    dc_bias_a: f64,
    total_leds: usize,
    low_a: f64,
    high_a: f64,
) -> f64 {
    let midpoint = (low_a + high_a) / 2.0;
    active_count as f64 * (dc_bias_a - low_a) / (total_leds as f64 * (midpoint - low_a))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn frozen_reference_plans() {
        let p = plan_dimming(0.7, 36, 0.0, 2.0).unwrap();
        assert_eq!(p.active_count, 25);
        assert_relative_eq!(p.dc_bias_a, 1.008, max_relative = 1e-12);
        assert_relative_eq!(p.headroom_a, 0.992, max_relative = 1e-12);

        let p = plan_dimming(0.3, 36, 0.0, 2.0).unwrap();
        assert_eq!(p.active_count, 10);
        assert_relative_eq!(p.dc_bias_a, 1.08, max_relative = 1e-12);
        assert_relative_eq!(p.headroom_a, 0.92, max_relative = 1e-12);

        let p = plan_dimming(0.7, 64, 0.0, 2.0).unwrap();
        assert_eq!(p.active_count, 44);
        assert_relative_eq!(p.dc_bias_a, 1.018_181_818_182, max_relative = 1e-9);
        assert_relative_eq!(p.headroom_a, 0.981_818_181_818, max_relative = 1e-9);
    }

    #[test]
    fn full_brightness_keeps_every_led_at_midpoint() {
        let p = plan_dimming(1.0, 64, 0.0, 2.0).unwrap();
        assert_eq!(p.active_count, 64);
        assert_relative_eq!(p.dc_bias_a, 1.0, max_relative = 1e-12);
        assert_relative_eq!(p.headroom_a, 1.0, max_relative = 1e-12);
        assert!(!p.is_degenerate());
    }

    #[test]
    fn plan_and_level_are_inverse() {
        for &total in &[36usize, 64] {
            let mut eta = 0.30;
            while eta <= 1.0 + 1e-9 {
                let p = plan_dimming(eta, total, 0.0, 2.0).unwrap();
                let back = dimming_level(p.active_count, p.dc_bias_a, total, 0.0, 2.0);
                assert_relative_eq!(back, eta, epsilon = 1e-12);
                eta += 0.05;
            }
        }
    }

    #[test]
    fn inverse_holds_for_offset_drive_ranges() {
        let (lo, hi) = (0.2, 1.6);
        for &total in &[9usize, 25] {
            for k in 1..=10 {
                let eta = k as f64 / 10.0;
                if (eta * total as f64).floor() < 1.0 {
                    // Too dim for even one LED; must be rejected, not planned.
                    assert!(matches!(
                        plan_dimming(eta, total, lo, hi),
                        Err(Error::InfeasibleDimming { .. })
                    ));
                    continue;
                }
                let p = plan_dimming(eta, total, lo, hi).unwrap();
                assert!(p.dc_bias_a <= hi && p.dc_bias_a >= lo);
                let back = dimming_level(p.active_count, p.dc_bias_a, total, lo, hi);
                assert_relative_eq!(back, eta, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn a_target_that_rounds_to_zero_leds_is_rejected() {
        assert!(matches!(
            plan_dimming(0.01, 36, 0.0, 2.0),
            Err(Error::InfeasibleDimming { .. })
        ));
    }

    #[test]
    fn headroom_shrinks_as_fewer_leds_carry_the_light() {
        // One LED carrying almost two LEDs' worth of DC sits near the top of
        // the range with almost no swing left.
        let p = plan_dimming(0.0999, 20, 0.0, 2.0).unwrap();
        assert_eq!(p.active_count, 1);
        assert!(p.dc_bias_a > 1.99);
        assert!(p.headroom_a < 0.01);
        assert!(!p.is_degenerate());
    }
}
