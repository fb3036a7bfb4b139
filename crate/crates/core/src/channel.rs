//! Line-of-sight optical channel: Lambertian emission, receiver optics, and
//! the photocurrent noise budget.
//!
//! LEDs radiate straight down with a generalized-Lambertian pattern whose
//! order follows from the half-intensity semi-angle; receivers look straight
//! up through an optical filter and an ideal non-imaging concentrator.
//! Because both planes are horizontal, the emission angle at the LED equals
//! the incidence angle at the photodiode. Incidence beyond the receiver
//! field of view contributes no photocurrent, but still contributes light —
//! which is why [`illuminance`] has no field-of-view cutoff.

use nalgebra::DMatrix;

use crate::cells::CellPartition;
use crate::scenario::{lambertian_order, Point3, Scenario};
use crate::{Error, Result};

/// Elementary charge in coulombs.
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;

/// Gain of the ideal non-imaging concentrator inside the field of view.
pub fn concentrator_gain(sc: &Scenario) -> f64 {
    let kappa = sc.optics.concentrator_refractive_index;
    let psi = sc.optics.fov_deg.to_radians();
    kappa * kappa / (psi.sin() * psi.sin())
}

/// DC channel gain (optical W at the detector per optical W emitted) of the
/// line-of-sight path from `led` to `user`. Zero when the path falls outside
/// the emission hemisphere or the receiver field of view.
pub fn channel_gain(led: &Point3, user: &Point3, sc: &Scenario) -> Result<f64> {
    let d = led.distance(user);
    if d == 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    // Downward-facing emitter, upward-facing detector on parallel planes:
    // one cosine covers both the emission and the incidence angle.
    let cos = (led.z - user.z) / d;
    if cos <= 0.0 {
        return Ok(0.0);
    }
    let psi = sc.optics.fov_deg.to_radians();
    if cos < psi.cos() {
        return Ok(0.0); // incidence beyond the field of view
    }
    let l = lambertian_order(sc.optics.semi_angle_deg)?;
    let area = sc.optics.detector_area_m2;
    let lobe = area * (l + 1.0) / (2.0 * std::f64::consts::PI * d * d) * cos.powf(l);
    Ok(lobe * sc.optics.optical_filter_gain * concentrator_gain(sc) * cos)
}

/// Horizontal illuminance in lux that `led`, driven at the current giving
/// `max_luminous_intensity_cd` on-axis, produces at `sample`. Light is light:
/// no field-of-view cutoff applies here.
pub fn illuminance(led: &Point3, sample: &Point3, sc: &Scenario) -> Result<f64> {
    let d = led.distance(sample);
    if d == 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    let cos = (led.z - sample.z) / d;
    if cos <= 0.0 {
        return Ok(0.0);
    }
    let l = lambertian_order(sc.optics.semi_angle_deg)?;
    Ok(sc.leds.max_luminous_intensity_cd * cos.powf(l) * cos / (d * d))
}

/// Full gain matrix, one row per user and one column per LED.
pub fn gain_matrix(leds: &[Point3], users: &[Point3], sc: &Scenario) -> Result<DMatrix<f64>> {
    let mut h = DMatrix::zeros(users.len(), leds.len());
    for (i, u) in users.iter().enumerate() {
        for (j, p) in leds.iter().enumerate() {
            h[(i, j)] = channel_gain(p, u, sc)?;
        }
    }
    Ok(h)
}

/// Photocurrent noise variance (A^2) at one receiver.
///
/// Three terms: shot noise of the received DC light, shot noise of the
/// ambient light gathered over the field of view, and pre-amplifier thermal
/// noise. `h_dc` holds the channel gains of the LEDs whose DC bias `bias_a`
/// reaches this receiver (normally the user's own cell's active LEDs).
pub fn noise_variance(h_dc: &[f64], sc: &Scenario, bias_a: f64) -> f64 {
    debug_assert!(
        bias_a >= sc.drive.current_low_a && bias_a <= sc.drive.current_high_a,
        "bias outside the drive range"
    );
    let e = &sc.electrical;
    let b = e.bandwidth_hz;
    let gamma = e.responsivity_a_per_w;
    let received_dc_w: f64 = e.conversion_w_per_a * bias_a * h_dc.iter().sum::<f64>();
    let shot = 2.0 * gamma * ELECTRON_CHARGE * received_dc_w * b;
    let psi = sc.optics.fov_deg.to_radians();
    let ambient = 4.0
        * std::f64::consts::PI
        * ELECTRON_CHARGE
        * sc.optics.detector_area_m2
        * gamma
        * e.ambient_photocurrent_density
        * (1.0 - psi.cos())
        * b;
    let thermal = e.preamp_noise_a_per_sqrt_hz * e.preamp_noise_a_per_sqrt_hz * b;
    shot + ambient + thermal
}

/// Noise variance of every user under the given partition and activation.
///
/// Each user's shot-noise term counts the DC light of the active LEDs of its
/// own cell; with `include_intercell_dc_shot_noise` set, active LEDs of all
/// cells (and active LEDs assigned to no cell) count as well.
pub fn noise_variances(
    h: &DMatrix<f64>,
    partition: &CellPartition,
    active: &[bool],
    sc: &Scenario,
    bias_a: f64,
) -> Vec<f64> {
    let n_users = h.nrows();
    let mut out = vec![0.0; n_users];
    for c in 0..partition.num_cells() {
        for &u in &partition.user_clusters[c] {
            let gains: Vec<f64> = if sc.electrical.include_intercell_dc_shot_noise {
                (0..h.ncols()).filter(|&j| active[j]).map(|j| h[(u, j)]).collect()
            } else {
                partition.led_sets[c]
                    .iter()
                    .copied()
                    .filter(|&j| active[j])
                    .map(|j| h[(u, j)])
                    .collect()
            };
            out[u] = noise_variance(&gains, sc, bias_a);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn led() -> Point3 {
        Point3::new(0.0, 0.0, 2.5)
    }

    #[test]
    fn vertical_gain_matches_frozen_reference() {
        let sc = Scenario::default();
        let h = channel_gain(&led(), &Point3::new(0.0, 0.0, 0.75), &sc).unwrap();
        // Frozen from an independent evaluation of the Lambertian formula.
        assert_relative_eq!(h, 9.672_603_731_613e-6, max_relative = 1e-9);
    }

    #[test]
    fn off_axis_gain_matches_frozen_reference() {
        let sc = Scenario::default();
        let h = channel_gain(&led(), &Point3::new(1.0, 1.5, 0.75), &sc).unwrap();
        assert_relative_eq!(h, 2.832_508_122_817e-6, max_relative = 1e-9);
    }

    #[test]
    fn concentrator_gain_at_sixty_degree_fov() {
        let sc = Scenario::default();
        assert_relative_eq!(concentrator_gain(&sc), 4.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn gain_is_zero_beyond_the_field_of_view_but_light_is_not() {
        let sc = Scenario::default();
        // 60 deg FOV at 1.75 m vertical drop puts the cutoff at r = 3.0311 m.
        let inside = Point3::new(3.0, 0.0, 0.75);
        let outside = Point3::new(3.2, 0.0, 0.75);
        assert!(channel_gain(&led(), &inside, &sc).unwrap() > 0.0);
        assert_eq!(channel_gain(&led(), &outside, &sc).unwrap(), 0.0);
        assert!(illuminance(&led(), &outside, &sc).unwrap() > 0.0);
    }

    #[test]
    fn gain_decreases_with_lateral_offset() {
        let sc = Scenario::default();
        let mut prev = f64::INFINITY;
        for k in 0..6 {
            let u = Point3::new(0.5 * k as f64, 0.0, 0.75);
            let h = channel_gain(&led(), &u, &sc).unwrap();
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn coincident_points_are_rejected() {
        let sc = Scenario::default();
        let p = Point3::new(0.0, 0.0, 2.5);
        assert!(channel_gain(&p, &p, &sc).is_err());
        assert!(illuminance(&p, &p, &sc).is_err());
    }

    #[test]
    fn illuminance_matches_frozen_references() {
        let mut sc = Scenario::default();
        // Straight below at 600 cd: inverse-square with unit cosines.
        let e = illuminance(&led(), &Point3::new(0.0, 0.0, 0.75), &sc).unwrap();
        assert_relative_eq!(e, 195.918_367_346_9, max_relative = 1e-9);
        // Off-axis at 900 cd.
        sc.leds.max_luminous_intensity_cd = 900.0;
        let e = illuminance(&led(), &Point3::new(2.0, 1.0, 0.75), &sc).unwrap();
        assert_relative_eq!(e, 56.800_842_724_8, max_relative = 1e-9);
    }

    #[test]
    fn noise_floor_without_light_is_ambient_plus_thermal() {
        let sc = Scenario::default();
        let v = noise_variance(&[], &sc, 1.0);
        assert_relative_eq!(
            v,
            2.5e-15 + 5.941_610_574_882e-14,
            max_relative = 1e-9
        );
        // With the ambient contribution switched off only thermal remains.
        let mut dark = Scenario::default();
        dark.electrical.ambient_photocurrent_density = 0.0;
        assert_relative_eq!(noise_variance(&[], &dark, 1.0), 2.5e-15, max_relative = 1e-12);
    }

    #[test]
    fn shot_noise_of_one_vertical_led_matches_frozen_reference() {
        let sc = Scenario::default();
        let h = channel_gain(&led(), &Point3::new(0.0, 0.0, 0.75), &sc).unwrap();
        let v = noise_variance(&[h], &sc, 1.008);
        assert_relative_eq!(v, 6.199_033_767_908e-14, max_relative = 1e-9);
    }

    #[test]
    fn gain_matrix_lays_out_users_by_row() {
        let sc = Scenario::default();
        let leds = vec![led(), Point3::new(2.0, 0.0, 2.5)];
        let users = vec![Point3::new(0.0, 0.0, 0.75), Point3::new(2.0, 0.0, 0.75)];
        let h = gain_matrix(&leds, &users, &sc).unwrap();
        assert_eq!(h.nrows(), 2);
        assert_eq!(h.ncols(), 2);
        // Symmetric geometry: diagonal entries equal, off-diagonal equal.
        assert_relative_eq!(h[(0, 0)], h[(1, 1)], max_relative = 1e-12);
        assert_relative_eq!(h[(0, 1)], h[(1, 0)], max_relative = 1e-12);
        assert!(h[(0, 0)] > h[(0, 1)]);
    }
}
