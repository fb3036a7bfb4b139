//! End-to-end runs: one engine, four operating schemes.
//!
//! Every scheme shares a single alternating loop — select LEDs, re-associate
//! cells, allocate power, repeat — differing only in how the DC bias is set
//! and whether the selection stage is free or pinned:
//!
//! * `tasp-hd` — hybrid dimming: `floor(eta * N_T)` LEDs stay on at a raised
//!   bias, selection and allocation alternate under the uniformity limit.
//! * `tasp-hd-up` — the same with the uniformity limit disabled; an upper
//!   reference for what the constraint costs.
//! * `ad` — amplitude dimming: every LED stays on at bias
//!   `eta * (I_0 - I_l) + I_l`; only the allocator runs.
//! * `dd` — duty-cycle dimming: every LED on at the mid-range bias, the
//!   allocator runs at full brightness, and the achievable rate scales by
//!   the duty fraction `eta`.
//!
//! The loop keeps the best configuration seen so far, so the reported rate
//! trace is nondecreasing; it stops when the selection reaches a fixpoint,
//! when the squared rate change drops below the outer tolerance, or at the
//! iteration cap. With the selection pinned (and for `tasp-hd` at full
//! brightness, where all LEDs must stay on) the fixpoint fires right after
//! the first allocation, which makes the three schemes produce identical
//! results at `eta = 1` by construction.

use serde::{Deserialize, Serialize};

use crate::allocator::{allocate_network, initial_precoders, NetworkAllocation};
use crate::cells::{associate_leds, cluster_centroids, cluster_users, update_cells, AssociationMatrix, CellPartition};
use crate::channel::{gain_matrix, noise_variances};
use crate::dimming::{plan_dimming, DimmingConfig};
use crate::illumination::{build_field, cv_rmse, UniformityStats};
use crate::precoding::{fr_mbe, Precoder};
use crate::scenario::Scenario;
use crate::selector::{solve_selection, SelectionContext, SelectionOutcome};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Schemes and reuse modes
// ---------------------------------------------------------------------------

/// The four operating schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    TaspHd,
    TaspHdUp,
    Ad,
    Dd,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::TaspHd, Scheme::TaspHdUp, Scheme::Ad, Scheme::Dd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::TaspHd => "tasp-hd",
            Scheme::TaspHdUp => "tasp-hd-up",
            Scheme::Ad => "ad",
            Scheme::Dd => "dd",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tasp-hd" => Ok(Scheme::TaspHd),
            "tasp-hd-up" => Ok(Scheme::TaspHdUp),
            "ad" => Ok(Scheme::Ad),
            "dd" => Ok(Scheme::Dd),
            other => Err(Error::Parse(format!(
                "unknown scheme '{other}' (expected tasp-hd, tasp-hd-up, ad, or dd)"
            ))),
        }
    }
}

/// Frequency-reuse mode of a run. Bands either cover the whole network
/// (factor 1, cells interfere) or split it one band per cell (factor `N_c`,
/// no inter-cell interference); nothing in between is meaningful here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrMode {
    /// Single band shared by every cell.
    Fr1,
    /// One band per cell, whatever the cell count turns out to be.
    CellCount,
    /// A specific factor; valid only if it is 1 or matches the cell count.
    Exact(u32),
}

impl FrMode {
    /// Resolve to `(reuse factor, zero inter-cell interference)` once the
    /// cell count is known.
    pub fn resolve(&self, num_cells: usize) -> Result<(u32, bool)> {
        match *self {
            FrMode::Fr1 | FrMode::Exact(1) => Ok((1, false)),
            FrMode::CellCount => Ok((num_cells as u32, num_cells > 1)),
            FrMode::Exact(n) if n as usize == num_cells => Ok((n, true)),
            FrMode::Exact(n) => Err(Error::ReuseMismatch {
                requested: n,
                cells: num_cells,
            }),
        }
    }
}

impl std::fmt::Display for FrMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FrMode::Fr1 => f.write_str("1"),
            FrMode::CellCount => f.write_str("nc"),
            FrMode::Exact(n) => write!(f, "{n}"),
        }
    }
}

impl std::str::FromStr for FrMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(FrMode::Fr1),
            "nc" => Ok(FrMode::CellCount),
            other => other
                .parse::<u32>()
                .map(FrMode::Exact)
                .map_err(|_| Error::Parse(format!("bad reuse mode '{other}' (expected 1, nc, or an integer)"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Run record
// ---------------------------------------------------------------------------

/// Everything a finished run reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub scheme: Scheme,
    pub dimming_target: f64,
    pub reuse_factor: u32,
    pub seed: u64,
    pub num_leds: usize,
    pub num_users: usize,
    pub num_cells: usize,
    /// Indices of the LEDs left on.
    pub active_leds: Vec<usize>,
    /// The drive plan the allocator ran at.
    pub dimming: DimmingConfig,
    /// Time-averaged DC bias the room perceives (differs from the drive
    /// bias only under duty-cycle dimming).
    pub perceived_bias_a: f64,
    /// Best network rate after each outer iteration; nondecreasing.
    pub rate_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Interference-refresh sweeps of the winning allocation.
    pub allocation_sweeps: usize,
    pub sinr: Vec<f64>,
    /// Per-user achievable rate in bit/s/Hz (duty-scaled for `dd`).
    pub per_user_rate: Vec<f64>,
    /// Network rate at the allocator's operating point.
    pub engine_rate: f64,
    /// Achievable network rate of the scheme (equals `engine_rate` except
    /// for `dd`, where the duty fraction scales it).
    pub sum_rate: f64,
    /// Per-band spectral efficiency: `sum_rate` over the reuse factor.
    pub mbe: f64,
    /// Illuminance coefficient of variation of the active set (bias-level
    /// independent).
    pub cv: f64,
    /// Whether `cv` meets the scenario's uniformity limit — reported for
    /// every scheme, including those that never enforced it.
    pub cv_feasible: bool,
    /// Illuminance statistics at the perceived operating bias.
    pub illuminance: UniformityStats,
}

/// Per-band spectral efficiency of a finished run under reuse factor `n`.
/// The factor must be the one the run was optimized for; re-labelling a
/// single-band run as reuse-`n` (or vice versa) is refused.
pub fn evaluate_fr(result: &RunResult, n: u32) -> Result<f64> {
    if n == result.reuse_factor {
        Ok(fr_mbe(result.sum_rate, n))
    } else {
        Err(Error::ReuseMismatch {
            requested: n,
            cells: result.num_cells,
        })
    }
}

// ---------------------------------------------------------------------------
// The engine
// ---------------------------------------------------------------------------

struct Incumbent {
    a: Vec<f64>,
    partition: CellPartition,
    sigma2: Vec<f64>,
    precoders: Vec<Precoder>,
    alloc: Option<NetworkAllocation>,
    selection: Option<SelectionOutcome>,
    rate: f64,
}

/// Run one scheme on one scenario.
pub fn run_scheme(sc: &Scenario, scheme: Scheme, fr: FrMode) -> Result<RunResult> {
    sc.validate()?;
    let eta = sc.dimming_target;
    let low = sc.drive.current_low_a;
    let high = sc.drive.current_high_a;
    let midpoint = (low + high) / 2.0;
    let n_leds = sc.leds.count;

    // Scheme-specific drive plan and selection freedom.
    let (plan, perceived_bias, n_t, uniformity_limit) = match scheme {
        Scheme::TaspHd | Scheme::TaspHdUp => {
            let plan = plan_dimming(eta, n_leds, low, high)?;
            let limit = if scheme == Scheme::TaspHd {
                sc.uniformity_limit
            } else {
                f64::INFINITY
            };
            (plan, plan.dc_bias_a, plan.active_count, limit)
        }
        Scheme::Ad => {
            let bias = eta * (midpoint - low) + low;
            let plan = DimmingConfig {
                target: eta,
                active_count: n_leds,
                dc_bias_a: bias,
                headroom_a: (bias - low).min(high - bias),
                midpoint_a: midpoint,
            };
            (plan, bias, n_leds, sc.uniformity_limit)
        }
        Scheme::Dd => {
            // Full-brightness drive; dimming happens in time, not amplitude.
            let plan = DimmingConfig {
                target: eta,
                active_count: n_leds,
                dc_bias_a: midpoint,
                headroom_a: (midpoint - low).min(high - midpoint),
                midpoint_a: midpoint,
            };
            let perceived = eta * (midpoint - low) + low;
            (plan, perceived, n_leds, sc.uniformity_limit)
        }
    };
    if plan.is_degenerate() {
        return Err(Error::InfeasibleDimming { eta });
    }

    let leds = sc.led_positions()?;
    let users = sc.user_positions();
    let h = gain_matrix(&leds, &users, sc)?;
    let clusters = cluster_users(&users, sc.cluster_radius_m);
    let centroids = cluster_centroids(&users, &clusters);
    let all_leds: Vec<usize> = (0..n_leds).collect();
    let full_partition =
        associate_leds(AssociationMatrix::from_gains(&h, &all_leds), &clusters, &centroids)?;
    let (reuse_factor, zero_inter_ci) = fr.resolve(full_partition.num_cells())?;
    let field = build_field(sc)?;
    let gz = sc.gamma_zeta();
    let seed = sc.users.seed;

    // Scaffolding start: every LED on, uniform-power zero-forcing.
    let ones = vec![1.0; n_leds];
    let all_active = vec![true; n_leds];
    let sigma2_full = noise_variances(&h, &full_partition, &all_active, sc, plan.dc_bias_a);
    let init_precoders =
        initial_precoders(&h, &full_partition, &ones, plan.headroom_a, &sc.solver)?;
    let mut best = Incumbent {
        a: ones,
        partition: full_partition,
        sigma2: sigma2_full,
        precoders: init_precoders,
        alloc: None,
        selection: None,
        rate: f64::NEG_INFINITY,
    };

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=sc.solver.max_outer_iters {
        iterations = t;

        let outcome = {
            let ctx = SelectionContext {
                h: &h,
                partition: &best.partition,
                precoders: &best.precoders,
                sigma2: &best.sigma2,
                field: &field,
                gamma_zeta: gz,
                zero_inter_ci,
                uniformity_limit,
                settings: &sc.solver,
            };
            solve_selection(&ctx, n_t, seed)?
        };

        // A repeated selection cannot change the configuration any further.
        if t >= 2 && outcome.state.a == best.a {
            converged = true;
            break;
        }

        let active_idx = outcome.state.active_indices();
        let partition = update_cells(&active_idx, &h, &clusters, &centroids)?;
        let active: Vec<bool> = outcome.state.a.iter().map(|&v| v > 0.5).collect();
        let sigma2 = noise_variances(&h, &partition, &active, sc, plan.dc_bias_a);
        let warm = if partition == best.partition {
            best.precoders.clone()
        } else {
            initial_precoders(&h, &partition, &outcome.state.a, plan.headroom_a, &sc.solver)?
        };
        let alloc = allocate_network(
            &h,
            &partition,
            &outcome.state.a,
            &sigma2,
            gz,
            plan.headroom_a,
            zero_inter_ci,
            &warm,
            &sc.solver,
        )?;

        if alloc.rate > best.rate {
            best = Incumbent {
                a: outcome.state.a.clone(),
                partition,
                sigma2,
                precoders: alloc.precoders.clone(),
                rate: alloc.rate,
                alloc: Some(alloc),
                selection: Some(outcome),
            };
        }
        trace.push(best.rate);

        if trace.len() >= 2 {
            let d = trace[trace.len() - 1] - trace[trace.len() - 2];
            if d * d <= sc.solver.outer_tolerance {
                converged = true;
                break;
            }
        }
    }

    let alloc = best.alloc.expect("the outer loop ran at least once");
    let selection = best.selection.expect("the outer loop ran at least once");
    let duty = if scheme == Scheme::Dd { eta } else { 1.0 };
    let engine_rate = best.rate;
    let scheme_rate = duty * engine_rate;
    let per_user_rate: Vec<f64> = alloc
        .sinr
        .iter()
        .map(|&xi| duty * 0.5 * (1.0 + xi).log2())
        .collect();

    let unscaled = cv_rmse(&field, &best.a)?;
    let light_scale = (perceived_bias - low) / (high - low);
    let illuminance = UniformityStats {
        mean_lux: unscaled.mean_lux * light_scale,
        rmse_lux: unscaled.rmse_lux * light_scale,
        cv: unscaled.cv,
        min_lux: unscaled.min_lux * light_scale,
        max_lux: unscaled.max_lux * light_scale,
    };

    Ok(RunResult {
        scheme,
        dimming_target: eta,
        reuse_factor,
        seed,
        num_leds: n_leds,
        num_users: users.len(),
        num_cells: best.partition.num_cells(),
        active_leds: selection.state.active_indices(),
        dimming: plan,
        perceived_bias_a: perceived_bias,
        rate_trace: trace,
        outer_iterations: iterations,
        converged,
        allocation_sweeps: alloc.sweeps,
        sinr: alloc.sinr.clone(),
        per_user_rate,
        engine_rate,
        sum_rate: scheme_rate,
        mbe: fr_mbe(scheme_rate, reuse_factor),
        cv: unscaled.cv,
        cv_feasible: unscaled.cv <= sc.uniformity_limit + 1e-9,
        illuminance,
    })
}

/// Hybrid dimming with the uniformity limit enforced.
pub fn run_tasp_hd(sc: &Scenario, fr: FrMode) -> Result<RunResult> {
    run_scheme(sc, Scheme::TaspHd, fr)
}

/// Hybrid dimming with the uniformity limit disabled.
pub fn run_tasp_hd_up(sc: &Scenario, fr: FrMode) -> Result<RunResult> {
    run_scheme(sc, Scheme::TaspHdUp, fr)
}

/// Amplitude-dimming baseline.
pub fn run_ad(sc: &Scenario, fr: FrMode) -> Result<RunResult> {
    run_scheme(sc, Scheme::Ad, fr)
}

/// Duty-cycle-dimming baseline.
pub fn run_dd(sc: &Scenario, fr: FrMode) -> Result<RunResult> {
    run_scheme(sc, Scheme::Dd, fr)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
