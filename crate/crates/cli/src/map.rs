//! Illuminance-map emission: lux over the uniformity sample lattice, either
//! at a scheme run's operating point or for an explicit LED selection
//! biased by the spatial-dimming rule.

use serde::{Deserialize, Serialize};

use vlc_core::illumination::{build_field, cv_rmse};
use vlc_core::orchestrator::{run_scheme, FrMode, Scheme};
use vlc_core::scenario::Scenario;

use crate::invalid;

// ---------------------------------------------------------------------------
// Artifact
// ---------------------------------------------------------------------------

/// One sample point of the map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub x_m: f64,
    pub y_m: f64,
    pub lux: f64,
}

/// A rendered map plus the summary the binary prints about it.
#[derive(Debug)]
pub struct MapArtifact {
    /// CSV bytes: header row, then one [`MapRow`] per lattice point.
    pub csv: Vec<u8>,
    pub points: usize,
    pub active: usize,
    /// DC bias the lux values correspond to (time-averaged for duty-cycle
    /// dimming), in amperes.
    pub bias_a: f64,
    pub min_lux: f64,
    pub max_lux: f64,
    pub mean_lux: f64,
    /// Coefficient of variation of the map; NaN when nothing is lit.
    pub cv: f64,
    pub cv_feasible: bool,
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Run `scheme` at the scenario's dimming target and map the illuminance of
/// the LEDs it left on, at its perceived operating bias.
pub fn scheme_map(sc: &Scenario, scheme: Scheme) -> anyhow::Result<MapArtifact> {
    let run = run_scheme(sc, scheme, FrMode::Fr1)?;
    emit(sc, &run.active_leds, run.perceived_bias_a)
}

/// Map an explicit selection. The bias spreads the scenario's dimming
/// target over the selected count, the same trade the spatial dimming rule
/// makes: fewer LEDs burn brighter.
pub fn selection_map(sc: &Scenario, active: &[usize]) -> anyhow::Result<MapArtifact> {
    let n = sc.leds.count;
    let mut idx: Vec<usize> = active.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if let Some(&bad) = idx.iter().find(|&&j| j >= n) {
        return Err(invalid(format!("LED index {bad} out of range (0..{n})")));
    }
    if idx.is_empty() {
        return emit(sc, &idx, sc.drive.current_low_a);
    }
    let low = sc.drive.current_low_a;
    let high = sc.drive.current_high_a;
    let full = (low + high) / 2.0;
    let bias = sc.dimming_target * n as f64 * (full - low) / idx.len() as f64 + low;
    if bias > high {
        return Err(invalid(format!(
            "{} LEDs cannot carry dimming target {} (bias {bias:.3} A exceeds {high} A)",
            idx.len(),
            sc.dimming_target
        )));
    }
    emit(sc, &idx, bias)
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

fn emit(sc: &Scenario, active: &[usize], bias_a: f64) -> anyhow::Result<MapArtifact> {
    let field = build_field(sc)?;
    let mut weights = vec![0.0; sc.leds.count];
    for &j in active {
        weights[j] = 1.0;
    }
    let low = sc.drive.current_low_a;
    let high = sc.drive.current_high_a;
    let (scale, cv) = if active.is_empty() {
        (0.0, f64::NAN)
    } else {
        ((bias_a - low) / (high - low), cv_rmse(&field, &weights)?.cv)
    };
    let values = field.weighted_values(&weights);

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for (&(x, y), &v) in field.points.iter().zip(&values) {
        let lux = v * scale;
        min = min.min(lux);
        max = max.max(lux);
        sum += lux;
        writer.serialize(MapRow { x_m: x, y_m: y, lux })?;
    }
    let points = field.num_samples();
    Ok(MapArtifact {
        csv: writer.into_inner()?,
        points,
        active: active.len(),
        bias_a,
        min_lux: min,
        max_lux: max,
        mean_lux: sum / points as f64,
        cv,
        cv_feasible: cv.is_finite() && cv <= sc.uniformity_limit,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::is_invalid_input;

    #[test]
    fn lattice_matches_the_uniformity_sample_count() {
        let sc = Scenario::reference_64();
        let all: Vec<usize> = (0..sc.leds.count).collect();
        let mut sc_full = sc.clone();
        sc_full.dimming_target = 1.0;
        let art = selection_map(&sc_full, &all).unwrap();
        assert_eq!(art.points, 729);
        assert_eq!(art.active, 64);
        // Full brightness spreads the target over every LED: the reference
        // mid-range bias.
        assert!((art.bias_a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_selection_renders_a_dark_room() {
        let sc = Scenario::reference_64();
        let art = selection_map(&sc, &[]).unwrap();
        assert_eq!(art.min_lux, 0.0);
        assert_eq!(art.max_lux, 0.0);
        assert!(art.cv.is_nan());
        assert!(!art.cv_feasible);
    }

    #[test]
    fn out_of_range_index_and_overdriven_bias_are_invalid() {
        let sc = Scenario::reference_64();
        assert!(is_invalid_input(&selection_map(&sc, &[64]).unwrap_err()));
        // One LED asked to carry a 70% target over 64 LEDs' worth of light.
        assert!(is_invalid_input(&selection_map(&sc, &[0]).unwrap_err()));
    }

    #[test]
    fn map_rows_round_trip_through_csv() {
        let mut sc = Scenario::reference_36();
        sc.dimming_target = 0.5;
        let some: Vec<usize> = (0..sc.leds.count).step_by(2).collect();
        let art = selection_map(&sc, &some).unwrap();
        let mut reader = csv::Reader::from_reader(art.csv.as_slice());
        let rows: Vec<MapRow> = reader.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), art.points);
        let max = rows.iter().map(|r| r.lux).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(max, art.max_lux);
    }
}
