//! Scenario definition: room geometry, LED layout, receiver population,
//! device parameters, and solver settings.
//!
//! A [`Scenario`] is the single source of truth for one experiment. It can be
//! built in code ([`Scenario::default`] is a fully populated 64-LED/16-user
//! reference setup), or parsed from TOML with [`load_scenario`]. Validation
//! rejects out-of-range values instead of clamping them, so a scenario that
//! loads is a scenario that runs.
//!
//! Coordinates are centered: the room floor spans
//! `[-length_x_m/2, length_x_m/2] x [-width_y_m/2, width_y_m/2]` at `z = 0`,
//! LEDs hang face-down at `z = led_plane_height_m`, and receivers sit face-up
//! on the plane `z = receiver_plane_height_m`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Geometry primitives
// ---------------------------------------------------------------------------

/// A point in room coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Euclidean distance to another point.
    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Distance in the horizontal (x, y) plane only.
    pub fn horizontal_distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Scenario sections
// ---------------------------------------------------------------------------

/// Room box and the two horizontal device planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Room {
    pub length_x_m: f64,
    pub width_y_m: f64,
    pub height_m: f64,
    /// Height of the LED plane (LEDs face straight down).
    pub led_plane_height_m: f64,
    /// Height of the receiver plane (photodiodes face straight up).
    pub receiver_plane_height_m: f64,
}

impl Default for Room {
    fn default() -> Self {
        Self {
            length_x_m: 8.0,
            width_y_m: 8.0,
            height_m: 3.0,
            led_plane_height_m: 2.5,
            receiver_plane_height_m: 0.75,
        }
    }
}

/// LED population. When `positions` is omitted the LEDs form a centered
/// uniform `sqrt(count) x sqrt(count)` grid whose outermost rows sit
/// `array_span_m` apart, independent of `count`; that keeps the light
/// footprint (and thus the uniformity metric) comparable across densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Leds {
    pub count: usize,
    /// Edge-to-edge extent of the default grid along x and y.
    pub array_span_m: f64,
    /// Explicit positions; overrides the default grid when present.
    pub positions: Option<Vec<Point3>>,
    /// Luminous intensity along the LED axis at the maximum drive current.
    pub max_luminous_intensity_cd: f64,
}

impl Default for Leds {
    fn default() -> Self {
        Self {
            count: 64,
            array_span_m: 6.08,
            positions: None,
            max_luminous_intensity_cd: 600.0,
        }
    }
}

/// Receiver population. When `positions` is omitted, users are dropped
/// uniformly at random on the interior of the receiver plane using `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Users {
    pub count: usize,
    pub positions: Option<Vec<Point3>>,
    pub seed: u64,
}

impl Default for Users {
    fn default() -> Self {
        Self {
            count: 16,
            positions: None,
            seed: 1,
        }
    }
}

/// Optical front-end parameters shared by all receivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Optics {
    /// LED half-intensity semi-angle in degrees; sets the Lambertian order.
    pub semi_angle_deg: f64,
    /// Receiver field-of-view half-angle in degrees; incidence beyond it
    /// contributes no signal.
    pub fov_deg: f64,
    pub detector_area_m2: f64,
    pub optical_filter_gain: f64,
    /// Refractive index of the ideal non-imaging concentrator.
    pub concentrator_refractive_index: f64,
}

impl Default for Optics {
    fn default() -> Self {
        Self {
            semi_angle_deg: 80.0,
            fov_deg: 60.0,
            detector_area_m2: 1e-4,
            optical_filter_gain: 1.0,
            concentrator_refractive_index: 1.0,
        }
    }
}

/// Electro-optical conversion constants and receiver noise parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Electrical {
    /// Photodetector responsivity in A/W.
    pub responsivity_a_per_w: f64,
    /// LED current-to-optical-power conversion in W/A.
    pub conversion_w_per_a: f64,
    pub bandwidth_hz: f64,
    /// Ambient-light photocurrent density (per unit area and solid angle).
    pub ambient_photocurrent_density: f64,
    /// Pre-amplifier input noise current density in A/sqrt(Hz).
    pub preamp_noise_a_per_sqrt_hz: f64,
    /// Whether shot noise also counts the DC light of other cells' LEDs.
    pub include_intercell_dc_shot_noise: bool,
}

impl Default for Electrical {
    fn default() -> Self {
        Self {
            responsivity_a_per_w: 0.54,
            conversion_w_per_a: 0.44,
            bandwidth_hz: 1e8,
            ambient_photocurrent_density: 10.93,
            preamp_noise_a_per_sqrt_hz: 5e-12,
            include_intercell_dc_shot_noise: false,
        }
    }
}

/// LED drive-current dynamic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Drive {
    pub current_low_a: f64,
    pub current_high_a: f64,
}

impl Default for Drive {
    fn default() -> Self {
        Self {
            current_low_a: 0.0,
            current_high_a: 2.0,
        }
    }
}

/// Tunables of the selection and allocation solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Weight of the integrality penalty `sum a_j (1 - a_j)` in the relaxed
    /// selection objective.
    pub penalty_coeff: f64,
    /// Scale the integrality penalty with the initial rate instead of using
    /// `penalty_coeff` verbatim.
    pub adaptive_penalty: bool,
    /// Coefficient of the log barrier that keeps the relaxed selection
    /// strictly inside the uniformity limit.
    pub barrier_coeff: f64,
    /// Stop threshold on the squared rate change of the allocation loop.
    pub rate_tolerance: f64,
    /// Stop threshold on the squared rate change of the outer
    /// selection/allocation loop.
    pub outer_tolerance: f64,
    /// Base step size of the diminishing dual-subgradient schedule.
    pub subgradient_step: f64,
    pub max_dual_iters: usize,
    /// Dual iterations to run before the stop test may fire.
    pub min_dual_iters: usize,
    pub max_outer_iters: usize,
    pub selector_max_iters: usize,
    /// Additional randomized restarts of the selection ascent (beyond the
    /// deterministic uniform start).
    pub selector_restarts: usize,
    /// Projected-descent iterations allowed to pull an infeasible start
    /// inside the uniformity limit.
    pub selector_phase1_iters: usize,
    /// Run the per-coordinate feasibility-capped improvement pass after the
    /// dual loop.
    pub coordinate_polish: bool,
    /// Cap on interference-refresh sweeps of the allocation loop.
    pub max_allocation_sweeps: usize,
    /// Start the allocation loop from scaled-identity precoders instead of
    /// the zero-forcing warm start.
    pub identity_precoder_init: bool,
    /// Relative singular-value cutoff of the pseudo-inverse.
    pub svd_cutoff: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            penalty_coeff: 1e5,
            adaptive_penalty: false,
            barrier_coeff: 1e-6,
            rate_tolerance: 1e-3,
            outer_tolerance: 1e-3,
            subgradient_step: 0.01,
            max_dual_iters: 2000,
            min_dual_iters: 3,
            max_outer_iters: 30,
            selector_max_iters: 300,
            selector_restarts: 4,
            selector_phase1_iters: 200,
            coordinate_polish: true,
            max_allocation_sweeps: 25,
            identity_precoder_init: false,
            svd_cutoff: 1e-10,
        }
    }
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub room: Room,
    pub leds: Leds,
    pub users: Users,
    pub optics: Optics,
    pub electrical: Electrical,
    pub drive: Drive,
    /// Target dimming fraction in (0, 1]; 1.0 is full brightness.
    pub dimming_target: f64,
    /// Upper bound on the illuminance coefficient of variation.
    pub uniformity_limit: f64,
    /// Users within this distance of a cluster's running centroid join it.
    pub cluster_radius_m: f64,
    /// Requested spacing of the illuminance sample lattice; the lattice uses
    /// the nearest cell-centered subdivision of the floor.
    pub sample_spacing_m: f64,
    pub solver: SolverSettings,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            room: Room::default(),
            leds: Leds::default(),
            users: Users::default(),
            optics: Optics::default(),
            electrical: Electrical::default(),
            drive: Drive::default(),
            dimming_target: 0.7,
            uniformity_limit: 0.25,
            cluster_radius_m: 3.0,
            sample_spacing_m: 0.3,
            solver: SolverSettings::default(),
        }
    }
}

impl Scenario {
    /// The reference setup with a 36-LED grid and 12 users.
    pub fn reference_36() -> Self {
        let mut sc = Self::default();
        sc.leds.count = 36;
        sc.users.count = 12;
        sc.leds.max_luminous_intensity_cd = 900.0;
        sc
    }

    /// The reference setup with a 64-LED grid and 16 users (the default).
    pub fn reference_64() -> Self {
        Self::default()
    }

    /// Product of responsivity and current-to-power conversion; the
    /// electro-optical round-trip gain that multiplies every channel entry.
    pub fn gamma_zeta(&self) -> f64 {
        self.electrical.responsivity_a_per_w * self.electrical.conversion_w_per_a
    }

    /// LED positions: the explicit list if given, otherwise the centered
    /// uniform grid spanning `array_span_m`.
    pub fn led_positions(&self) -> Result<Vec<Point3>> {
        if let Some(p) = &self.leds.positions {
            return Ok(p.clone());
        }
        let n = self.leds.count;
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n {
            return Err(Error::InvalidField {
                field: "leds.count",
                reason: format!("{n} is not a perfect square; give explicit leds.positions"),
            });
        }
        let span = self.leds.array_span_m;
        let z = self.room.led_plane_height_m;
        let coord = |k: usize| -> f64 {
            if side == 1 {
                0.0
            } else {
                -span / 2.0 + k as f64 * span / (side - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(n);
        for iy in 0..side {
            for ix in 0..side {
                out.push(Point3::new(coord(ix), coord(iy), z));
            }
        }
        Ok(out)
    }

    /// User positions: the explicit list if given, otherwise a seeded
    /// uniform placement on the receiver plane.
    pub fn user_positions(&self) -> Vec<Point3> {
        match &self.users.positions {
            Some(p) => p.clone(),
            None => place_users_random(self, self.users.count, self.users.seed),
        }
    }

    /// Check every field range; returns the first violation found.
    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, reason: String) -> Result<()> {
            Err(Error::InvalidField { field, reason })
        }

        let r = &self.room;
        if !(r.length_x_m > 0.0 && r.width_y_m > 0.0 && r.height_m > 0.0) {
            return bad("room", "dimensions must be positive".into());
        }
        if !(r.led_plane_height_m > 0.0 && r.led_plane_height_m <= r.height_m) {
            return bad("room.led_plane_height_m", "must lie in (0, height]".into());
        }
        if !(r.receiver_plane_height_m >= 0.0 && r.receiver_plane_height_m < r.led_plane_height_m)
        {
            return bad(
                "room.receiver_plane_height_m",
                "must lie in [0, led_plane_height)".into(),
            );
        }

        if self.leds.count == 0 {
            return bad("leds.count", "at least one LED is required".into());
        }
        if !(self.leds.max_luminous_intensity_cd > 0.0) {
            return bad("leds.max_luminous_intensity_cd", "must be positive".into());
        }
        if self.leds.positions.is_none() {
            let side = (self.leds.count as f64).sqrt().round() as usize;
            if side * side != self.leds.count {
                return bad(
                    "leds.count",
                    "must be a perfect square when leds.positions is omitted".into(),
                );
            }
            if !(self.leds.array_span_m > 0.0
                && self.leds.array_span_m <= r.length_x_m.min(r.width_y_m))
            {
                return bad(
                    "leds.array_span_m",
                    "must be positive and fit inside the room".into(),
                );
            }
        }
        if let Some(p) = &self.leds.positions {
            if p.len() != self.leds.count {
                return bad("leds.positions", "length must equal leds.count".into());
            }
            for (j, q) in p.iter().enumerate() {
                if q.x.abs() > r.length_x_m / 2.0
                    || q.y.abs() > r.width_y_m / 2.0
                    || q.z <= r.receiver_plane_height_m
                    || q.z > r.height_m
                {
                    return bad("leds.positions", format!("LED {j} is outside the room"));
                }
            }
        }

        if self.users.count == 0 {
            return bad("users.count", "at least one user is required".into());
        }
        if self.users.count > self.leds.count {
            return bad(
                "users.count",
                "cannot exceed leds.count (zero-forcing needs at least one LED per user)".into(),
            );
        }
        if let Some(p) = &self.users.positions {
            if p.len() != self.users.count {
                return bad("users.positions", "length must equal users.count".into());
            }
            for (i, q) in p.iter().enumerate() {
                if q.x.abs() > r.length_x_m / 2.0
                    || q.y.abs() > r.width_y_m / 2.0
                    || q.z < 0.0
                    || q.z >= r.led_plane_height_m
                {
                    return bad("users.positions", format!("user {i} is outside the room"));
                }
            }
        }

        let o = &self.optics;
        if !(o.semi_angle_deg > 0.0 && o.semi_angle_deg < 90.0) {
            return bad("optics.semi_angle_deg", "must lie in (0, 90)".into());
        }
        if !(o.fov_deg > 0.0 && o.fov_deg <= 90.0) {
            return bad("optics.fov_deg", "must lie in (0, 90]".into());
        }
        if !(o.detector_area_m2 > 0.0) {
            return bad("optics.detector_area_m2", "must be positive".into());
        }
        if !(o.optical_filter_gain > 0.0) {
            return bad("optics.optical_filter_gain", "must be positive".into());
        }
        if !(o.concentrator_refractive_index >= 1.0) {
            return bad("optics.concentrator_refractive_index", "must be >= 1".into());
        }

        let e = &self.electrical;
        if !(e.responsivity_a_per_w > 0.0) {
            return bad("electrical.responsivity_a_per_w", "must be positive".into());
        }
        if !(e.conversion_w_per_a > 0.0) {
            return bad("electrical.conversion_w_per_a", "must be positive".into());
        }
        if !(e.bandwidth_hz > 0.0) {
            return bad("electrical.bandwidth_hz", "must be positive".into());
        }
        if !(e.ambient_photocurrent_density >= 0.0) {
            return bad(
                "electrical.ambient_photocurrent_density",
                "must be nonnegative".into(),
            );
        }
        if !(e.preamp_noise_a_per_sqrt_hz >= 0.0) {
            return bad(
                "electrical.preamp_noise_a_per_sqrt_hz",
                "must be nonnegative".into(),
            );
        }

        if !(self.drive.current_low_a >= 0.0) {
            return bad("drive.current_low_a", "must be nonnegative".into());
        }
        if !(self.drive.current_low_a < self.drive.current_high_a) {
            return bad("drive.current_high_a", "must exceed current_low_a".into());
        }

        if !(self.dimming_target > 0.0 && self.dimming_target <= 1.0) {
            return bad("dimming_target", "must lie in (0, 1]".into());
        }
        if !(self.uniformity_limit > 0.0) {
            return bad("uniformity_limit", "must be positive".into());
        }
        if !(self.cluster_radius_m > 0.0) {
            return bad("cluster_radius_m", "must be positive".into());
        }
        if !(self.sample_spacing_m > 0.0
            && self.sample_spacing_m <= r.length_x_m.min(r.width_y_m))
        {
            return bad(
                "sample_spacing_m",
                "must be positive and no larger than the floor".into(),
            );
        }

        let s = &self.solver;
        if !(s.penalty_coeff >= 0.0) {
            return bad("solver.penalty_coeff", "must be nonnegative".into());
        }
        if !(s.barrier_coeff >= 0.0) {
            return bad("solver.barrier_coeff", "must be nonnegative".into());
        }
        let positives: [(&'static str, f64); 3] = [
            ("solver.rate_tolerance", s.rate_tolerance),
            ("solver.outer_tolerance", s.outer_tolerance),
            ("solver.subgradient_step", s.subgradient_step),
        ];
        for (name, v) in positives {
            if !(v > 0.0) {
                return bad(name, "must be positive".into());
            }
        }
        let caps: [(&'static str, usize); 4] = [
            ("solver.max_dual_iters", s.max_dual_iters),
            ("solver.max_outer_iters", s.max_outer_iters),
            ("solver.selector_max_iters", s.selector_max_iters),
            ("solver.max_allocation_sweeps", s.max_allocation_sweeps),
        ];
        for (name, v) in caps {
            if v == 0 {
                return bad(name, "must be >= 1".into());
            }
        }
        if !(s.svd_cutoff > 0.0 && s.svd_cutoff < 1.0) {
            return bad("solver.svd_cutoff", "must lie in (0, 1)".into());
        }

        Ok(())
    }

    /// Serialize to TOML (round-trips through [`load_scenario`]).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Parse and validate a scenario from TOML text. Omitted fields take the
/// reference defaults.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let sc: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    sc.validate()?;
    Ok(sc)
}

/// Drop `count` users uniformly at random on the interior of the receiver
/// plane. Deterministic in `seed`.
pub fn place_users_random(sc: &Scenario, count: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lx = sc.room.length_x_m;
    let ly = sc.room.width_y_m;
    let z = sc.room.receiver_plane_height_m;
    let mut interior = |len: f64| -> f64 {
        loop {
            let t: f64 = rng.gen();
            if t != 0.0 {
                return t * len - len / 2.0;
            }
        }
    };
    (0..count)
        .map(|_| {
            let x = interior(lx);
            let y = interior(ly);
            Point3::new(x, y, z)
        })
        .collect()
}

/// Lambertian order of an LED with the given half-intensity semi-angle:
/// the exponent `l` with `cos(semi_angle)^l = 1/2`.
pub fn lambertian_order(semi_angle_deg: f64) -> Result<f64> {
    if !(semi_angle_deg > 0.0 && semi_angle_deg < 90.0) {
        return Err(Error::Domain(format!(
            "semi-angle {semi_angle_deg} deg outside (0, 90)"
        )));
    }
    let c = semi_angle_deg.to_radians().cos();
    Ok(-std::f64::consts::LN_2 / c.ln())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_scenario_is_valid() {
        Scenario::default().validate().unwrap();
        Scenario::reference_36().validate().unwrap();
    }

    #[test]
    fn toml_round_trip_is_lossless() {
        let sc = Scenario::reference_36();
        let text = sc.to_toml();
        let back = load_scenario(&text).unwrap();
        assert_eq!(sc, back);
    }

    #[test]
    fn load_applies_defaults_to_omitted_fields() {
        let sc = load_scenario("dimming_target = 0.5\n[leds]\ncount = 36\n").unwrap();
        assert_eq!(sc.leds.count, 36);
        assert_eq!(sc.dimming_target, 0.5);
        assert_eq!(sc.users.count, 16);
        assert_eq!(sc.room.height_m, 3.0);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(load_scenario("no_such_field = 1\n").is_err());
    }

    #[test]
    fn out_of_range_values_are_rejected_not_clamped() {
        let mut sc = Scenario::default();
        sc.dimming_target = 0.0;
        assert!(sc.validate().is_err());
        sc.dimming_target = 1.5;
        assert!(sc.validate().is_err());

        let mut sc = Scenario::default();
        sc.optics.semi_angle_deg = 90.0;
        assert!(sc.validate().is_err());

        let mut sc = Scenario::default();
        sc.drive.current_high_a = sc.drive.current_low_a;
        assert!(sc.validate().is_err());

        let mut sc = Scenario::default();
        sc.users.count = sc.leds.count + 1;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn default_led_grid_is_centered_and_spans_the_configured_extent() {
        let sc = Scenario::default();
        let p = sc.led_positions().unwrap();
        assert_eq!(p.len(), 64);
        let xmin = p.iter().map(|q| q.x).fold(f64::INFINITY, f64::min);
        let xmax = p.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(xmax - xmin, sc.leds.array_span_m, max_relative = 1e-12);
        assert_relative_eq!(xmax + xmin, 0.0, epsilon = 1e-12);
        // Same span for the sparser grid: the footprint is density-independent.
        let sc36 = Scenario::reference_36();
        let p36 = sc36.led_positions().unwrap();
        assert_eq!(p36.len(), 36);
        let xmax36 = p36.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(xmax36, xmax, max_relative = 1e-12);
        for q in p.iter().chain(p36.iter()) {
            assert_eq!(q.z, 2.5);
        }
    }

    #[test]
    fn non_square_count_without_positions_is_rejected() {
        let mut sc = Scenario::default();
        sc.leds.count = 35;
        sc.users.count = 12;
        assert!(sc.validate().is_err());
        assert!(sc.led_positions().is_err());
    }

    #[test]
    fn explicit_led_positions_override_the_grid() {
        let mut sc = Scenario::default();
        sc.leds.count = 2;
        sc.users.count = 2;
        sc.leds.positions = Some(vec![
            Point3::new(-1.0, 0.0, 2.5),
            Point3::new(1.0, 0.0, 2.5),
        ]);
        sc.validate().unwrap();
        let p = sc.led_positions().unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].x, -1.0);
    }

    #[test]
    fn random_placement_is_deterministic_and_inside_the_room() {
        let sc = Scenario::default();
        let a = place_users_random(&sc, 16, 7);
        let b = place_users_random(&sc, 16, 7);
        let c = place_users_random(&sc, 16, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for u in &a {
            assert!(u.x.abs() < 4.0 && u.y.abs() < 4.0);
            assert_eq!(u.z, 0.75);
        }
    }

    #[test]
    fn lambertian_order_matches_the_half_intensity_definition() {
        // cos(60 deg) = 1/2 gives order exactly 1.
        assert_relative_eq!(lambertian_order(60.0).unwrap(), 1.0, max_relative = 1e-12);
        // Wide-beam reference value, frozen from an independent evaluation.
        assert_relative_eq!(
            lambertian_order(80.0).unwrap(),
            0.395_920_306_617_185_5,
            max_relative = 1e-12
        );
        // The defining identity cos(phi_half)^l = 1/2.
        let l = lambertian_order(80.0).unwrap();
        assert_relative_eq!(
            80f64.to_radians().cos().powf(l),
            0.5,
            max_relative = 1e-12
        );
        assert!(lambertian_order(0.0).is_err());
        assert!(lambertian_order(90.0).is_err());
    }
}
