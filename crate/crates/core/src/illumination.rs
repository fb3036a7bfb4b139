//! Receiver-plane illuminance sampling and the uniformity metric.
//!
//! The floor is covered by a cell-centered sample lattice (the requested
//! spacing is rounded to an exact subdivision, so samples never sit on the
//! walls). For each sample point the field stores the lux contribution of
//! every LED at its maximum luminous intensity; any activation — fractional
//! weights during the relaxed selection, 0/1 after rounding — then yields a
//! map by a single matrix-vector product, and uniformity is judged by the
//! coefficient of variation: root-mean-square deviation about the mean,
//! divided by the mean.

use nalgebra::DMatrix;

use crate::channel::illuminance;
use crate::scenario::{Point3, Scenario};
use crate::{Error, Result};

/// Per-LED illuminance contributions on the sample lattice.
#[derive(Debug, Clone)]
pub struct IlluminanceField {
    /// Horizontal coordinates of the sample points.
    pub points: Vec<(f64, f64)>,
    /// samples x LEDs matrix of lux at maximum luminous intensity.
    pub per_led: DMatrix<f64>,
}

/// Mean, absolute spread, and relative spread of an illuminance map.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UniformityStats {
    pub mean_lux: f64,
    /// Root-mean-square deviation about the mean (population form).
    pub rmse_lux: f64,
    /// Coefficient of variation: `rmse_lux / mean_lux`.
    pub cv: f64,
    pub min_lux: f64,
    pub max_lux: f64,
}

impl IlluminanceField {
    /// Number of sample points.
    pub fn num_samples(&self) -> usize {
        self.points.len()
    }

    /// Lux at every sample point for the given LED activation weights.
    pub fn weighted_values(&self, weights: &[f64]) -> Vec<f64> {
        assert_eq!(weights.len(), self.per_led.ncols());
        (0..self.per_led.nrows())
            .map(|k| {
                weights
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| w * self.per_led[(k, j)])
                    .sum()
            })
            .collect()
    }
}

/// Sample every LED's illuminance on the cell-centered floor lattice.
pub fn build_field(sc: &Scenario) -> Result<IlluminanceField> {
    let leds = sc.led_positions()?;
    let lx = sc.room.length_x_m;
    let ly = sc.room.width_y_m;
    let nx = (lx / sc.sample_spacing_m).ceil() as usize;
    let ny = (ly / sc.sample_spacing_m).ceil() as usize;
    let sx = lx / nx as f64;
    let sy = ly / ny as f64;
    let z = sc.room.receiver_plane_height_m;

    let mut points = Vec::with_capacity(nx * ny);
    for jy in 0..ny {
        for jx in 0..nx {
            points.push((
                -lx / 2.0 + (jx as f64 + 0.5) * sx,
                -ly / 2.0 + (jy as f64 + 0.5) * sy,
            ));
        }
    }
    let mut per_led = DMatrix::zeros(points.len(), leds.len());
    for (k, &(x, y)) in points.iter().enumerate() {
        let sample = Point3::new(x, y, z);
        for (j, led) in leds.iter().enumerate() {
            per_led[(k, j)] = illuminance(led, &sample, sc)?;
        }
    }
    Ok(IlluminanceField { points, per_led })
}

/// Population statistics of a set of illuminance samples.
pub fn stats_of(values: &[f64]) -> Result<UniformityStats> {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if mean == 0.0 {
        return Err(Error::UndefinedCv);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
    let rmse = var.sqrt();
    Ok(UniformityStats {
        mean_lux: mean,
        rmse_lux: rmse,
        cv: rmse / mean,
        min_lux: values.iter().copied().fold(f64::INFINITY, f64::min),
        max_lux: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Uniformity statistics of the map produced by the given activation
/// weights (fractional or binary).
pub fn cv_rmse(field: &IlluminanceField, weights: &[f64]) -> Result<UniformityStats> {
    stats_of(&field.weighted_values(weights))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_point_stats_match_hand_arithmetic() {
        let s = stats_of(&[1.0, 3.0]).unwrap();
        assert_relative_eq!(s.mean_lux, 2.0, epsilon = 1e-15);
        assert_relative_eq!(s.rmse_lux, 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.cv, 0.5, epsilon = 1e-15);
        assert_eq!(s.min_lux, 1.0);
        assert_eq!(s.max_lux, 3.0);
    }

    #[test]
    fn zero_map_has_undefined_uniformity() {
        assert!(stats_of(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn default_lattice_subdivides_the_floor_cell_centered() {
        let sc = Scenario::default();
        let f = build_field(&sc).unwrap();
        assert_eq!(f.num_samples(), 27 * 27);
        // Cell-centered: extreme samples sit half a step inside the walls.
        let step = 8.0 / 27.0;
        let xmin = f.points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let xmax = f.points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(xmin, -4.0 + step / 2.0, epsilon = 1e-12);
        assert_relative_eq!(xmax, 4.0 - step / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn all_on_uniformity_matches_frozen_references() {
        // Frozen from an independent evaluation of the Lambertian lux sum
        // over the default grids.
        let f64_field = build_field(&Scenario::reference_64()).unwrap();
        let s64 = cv_rmse(&f64_field, &vec![1.0; 64]).unwrap();
        assert_relative_eq!(s64.cv, 0.316_351_072_729, max_relative = 1e-9);

        let f36 = build_field(&Scenario::reference_36()).unwrap();
        let s36 = cv_rmse(&f36, &vec![1.0; 36]).unwrap();
        assert_relative_eq!(s36.cv, 0.278_393_139_293, max_relative = 1e-9);
    }

    #[test]
    fn all_on_lux_levels_match_frozen_references() {
        let f = build_field(&Scenario::reference_64()).unwrap();
        let s = cv_rmse(&f, &vec![1.0; 64]).unwrap();
        assert_relative_eq!(s.min_lux, 525.9914, max_relative = 1e-6);
        assert_relative_eq!(s.max_lux, 2546.0610, max_relative = 1e-6);
        assert_relative_eq!(s.mean_lux, 1708.3322, max_relative = 1e-6);
    }

    #[test]
    fn symmetric_all_on_map_peaks_at_the_room_center() {
        let f = build_field(&Scenario::reference_64()).unwrap();
        let v = f.weighted_values(&vec![1.0; 64]);
        let argmax = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        let (x, y) = f.points[argmax];
        assert!(x.abs() < 1e-12 && y.abs() < 1e-12, "peak at ({x}, {y})");
    }

    #[test]
    fn uniformity_is_invariant_to_uniform_scaling() {
        let sc = Scenario::reference_36();
        let f = build_field(&sc).unwrap();
        let a: Vec<f64> = (0..36).map(|j| 0.2 + 0.01 * j as f64).collect();
        let half: Vec<f64> = a.iter().map(|v| v * 0.5).collect();
        let s1 = cv_rmse(&f, &a).unwrap();
        let s2 = cv_rmse(&f, &half).unwrap();
        assert_relative_eq!(s1.cv, s2.cv, max_relative = 1e-12);
        assert_relative_eq!(s1.mean_lux, 2.0 * s2.mean_lux, max_relative = 1e-12);
    }

    #[test]
    fn fractional_weights_interpolate_between_maps() {
        let sc = Scenario::reference_36();
        let f = build_field(&sc).unwrap();
        let mut w = vec![0.0; 36];
        w[0] = 0.5;
        let full = f.weighted_values(&{
            let mut v = vec![0.0; 36];
            v[0] = 1.0;
            v
        });
        let half = f.weighted_values(&w);
        for (a, b) in full.iter().zip(&half) {
            assert_relative_eq!(*b, 0.5 * a, max_relative = 1e-12);
        }
    }
}
