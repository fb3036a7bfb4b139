//! LED selection: which `n_t` of the `N_T` luminaires should carry data.
//!
//! The binary selection problem is relaxed to activation weights
//! `a_j ∈ [0,1]` with a quadratic penalty `λ Σ a_j(1 - a_j)` that drives the
//! optimum toward the vertices; a sufficiently large `λ` makes the relaxed
//! and binary optima coincide. The relaxed problem is solved by projected
//! gradient ascent (exact projection onto the capped simplex
//! `{Σ a = n_t, 0 ≤ a ≤ 1}`, backtracking line search, monotone by
//! construction) with a log barrier keeping the illuminance
//! coefficient-of-variation constraint strictly satisfied, from a uniform
//! warm start plus seeded random restarts. The result is rounded to the
//! `n_t` largest weights, repaired if rounding left a user without
//! line-of-sight, and polished by rate-improving swaps.
//!
//! Throughout a solve, the precoders, partition, and noise variances stay
//! frozen — selection evaluates the rate through the continuous-extension
//! SINR at fixed precoders.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cells::CellPartition;
use crate::illumination::{cv_rmse, IlluminanceField};
use crate::precoding::{sinr, sum_rate, Precoder};
use crate::scenario::SolverSettings;
use crate::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Activation weights plus the bookkeeping of the solve that produced them.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SelectionState {
    /// Activation weights; in `[0,1]` while relaxed, exactly `{0,1}` after
    /// rounding.
    pub a: Vec<f64>,
    /// Required number of active LEDs.
    pub n_t: usize,
    /// Integrality penalty weight used by the solve.
    pub penalty_coeff: f64,
    /// Ascended objective value per accepted iteration (nondecreasing).
    pub objective_trace: Vec<f64>,
}

impl SelectionState {
    /// Indices of the active LEDs of a binary state.
    pub fn active_indices(&self) -> Vec<usize> {
        self.a
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.5)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Outcome of a selection solve: the rounded state plus honesty about the
/// uniformity constraint.
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    /// Rounded binary selection.
    pub state: SelectionState,
    /// The relaxed weights the winning restart converged to.
    pub relaxed: Vec<f64>,
    /// Uniformity of the rounded selection.
    pub cv: f64,
    /// Whether the rounded selection satisfies the uniformity limit. A
    /// `false` here is a report, not a silent failure: the caller decides
    /// whether to proceed with the best-found selection.
    pub cv_feasible: bool,
    /// Which restart won (0 is the deterministic uniform start).
    pub restart_index: usize,
}

/// Everything a selection solve reads but never mutates.
pub struct SelectionContext<'a> {
    pub h: &'a DMatrix<f64>,
    pub partition: &'a CellPartition,
    pub precoders: &'a [Precoder],
    pub sigma2: &'a [f64],
    pub field: &'a IlluminanceField,
    pub gamma_zeta: f64,
    pub zero_inter_ci: bool,
    /// Upper bound on the illuminance CV; `f64::INFINITY` disables it.
    pub uniformity_limit: f64,
    pub settings: &'a SolverSettings,
}

impl SelectionContext<'_> {
    fn num_leds(&self) -> usize {
        self.h.ncols()
    }

    fn penalty_weight(&self) -> f64 {
        if self.settings.adaptive_penalty {
            let uniform = vec![1.0; self.num_leds()];
            1e3 * rate_at(self, &uniform).abs()
        } else {
            self.settings.penalty_coeff
        }
    }
}

// ---------------------------------------------------------------------------
// Objective and gradients
// ---------------------------------------------------------------------------

fn rate_at(ctx: &SelectionContext, a: &[f64]) -> f64 {
    sum_rate(&sinr(
        ctx.h,
        ctx.partition,
        a,
        ctx.precoders,
        ctx.sigma2,
        ctx.gamma_zeta,
        ctx.zero_inter_ci,
    ))
}

/// The relaxed selection objective: rate minus the integrality penalty.
/// Barrier terms are a solver device and are not part of this value.
pub fn penalized_objective(ctx: &SelectionContext, a: &[f64], penalty_coeff: f64) -> f64 {
    let penalty: f64 = a.iter().map(|&v| v - v * v).sum();
    rate_at(ctx, a) - penalty_coeff * penalty
}

/// Analytic gradient of [`penalized_objective`]. Validated against central
/// finite differences in the tests.
pub fn penalized_gradient(ctx: &SelectionContext, a: &[f64], penalty_coeff: f64) -> Vec<f64> {
    let mut grad = rate_gradient(ctx, a);
    for (g, &v) in grad.iter_mut().zip(a) {
        *g -= penalty_coeff * (1.0 - 2.0 * v);
    }
    grad
}

/// Analytic gradient of the continuous-extension rate at fixed precoders.
fn rate_gradient(ctx: &SelectionContext, a: &[f64]) -> Vec<f64> {
    let part = ctx.partition;
    let gz2 = ctx.gamma_zeta * ctx.gamma_zeta;
    let pi_e = std::f64::consts::PI * std::f64::consts::E;
    let mut grad = vec![0.0; ctx.num_leds()];

    for c in 0..part.num_cells() {
        for (i_local, &u) in part.user_clusters[c].iter().enumerate() {
            // Desired amplitude through the user's own cell.
            let own = &part.led_sets[c];
            let w_own = &ctx.precoders[c].w;
            let desired: f64 = own
                .iter()
                .enumerate()
                .map(|(t, &j)| ctx.h[(u, j)] * a[j] * w_own[(t, i_local)])
                .sum();
            // Interfering stream amplitudes from every other cell.
            let mut interference = 0.0;
            let mut cross: Vec<(usize, Vec<f64>)> = Vec::new();
            if !ctx.zero_inter_ci {
                for other in 0..part.num_cells() {
                    if other == c {
                        continue;
                    }
                    let w = &ctx.precoders[other].w;
                    let mut amps = vec![0.0; w.ncols()];
                    for (s, amp) in amps.iter_mut().enumerate() {
                        *amp = part.led_sets[other]
                            .iter()
                            .enumerate()
                            .map(|(t, &j)| ctx.h[(u, j)] * a[j] * w[(t, s)])
                            .sum();
                        interference += *amp * *amp;
                    }
                    cross.push((other, amps));
                }
            }
            let numer = 2.0 * gz2 * desired * desired;
            let denom = pi_e * (gz2 / 3.0 * interference + ctx.sigma2[u]);
            let xi = numer / denom;
            let scale = 1.0 / (2.0 * LN2 * (1.0 + xi));

            // d(xi)/d(a_j) for the user's own cell LEDs: through the
            // desired amplitude only.
            for (t, &j) in own.iter().enumerate() {
                let d_des = ctx.h[(u, j)] * w_own[(t, i_local)];
                grad[j] += scale * 4.0 * gz2 * desired * d_des / denom;
            }
            // For other cells' LEDs: through the interference only.
            for (other, amps) in &cross {
                let w = &ctx.precoders[*other].w;
                for (t, &j) in part.led_sets[*other].iter().enumerate() {
                    let d_interf: f64 = amps
                        .iter()
                        .enumerate()
                        .map(|(s, &amp)| 2.0 * amp * ctx.h[(u, j)] * w[(t, s)])
                        .sum();
                    grad[j] -= scale * numer * pi_e * gz2 / 3.0 * d_interf / (denom * denom);
                }
            }
        }
    }
    grad
}

/// CV of the fractional-weight illuminance map, with its gradient.
fn cv_and_gradient(field: &IlluminanceField, a: &[f64]) -> (f64, Vec<f64>) {
    let e = &field.per_led;
    let k = e.nrows();
    let n = e.ncols();
    let totals: Vec<f64> = (0..k)
        .map(|mu| (0..n).map(|j| e[(mu, j)] * a[j]).sum())
        .collect();
    let mean = totals.iter().sum::<f64>() / k as f64;
    let var = totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / k as f64;
    let rmse = var.sqrt();
    let cv = rmse / mean;

    let mut grad = vec![0.0; n];
    if rmse > 0.0 && mean > 0.0 {
        for j in 0..n {
            let col_mean = (0..k).map(|mu| e[(mu, j)]).sum::<f64>() / k as f64;
            let cov = (0..k)
                .map(|mu| (totals[mu] - mean) * (e[(mu, j)] - col_mean))
                .sum::<f64>()
                / k as f64;
            let d_rmse = cov / rmse;
            grad[j] = (d_rmse * mean - rmse * col_mean) / (mean * mean);
        }
    }
    (cv, grad)
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

/// Euclidean projection onto `{Σ a = n_t, 0 ≤ a ≤ 1}` by bisection on the
/// shift of the clipped vector.
pub fn project_onto_count(a: &[f64], n_t: usize) -> Vec<f64> {
    let target = n_t as f64;
    let clip_sum = |tau: f64| -> f64 {
        a.iter().map(|&v| (v - tau).clamp(0.0, 1.0)).sum::<f64>()
    };
    let mut lo = a.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // clip_sum is nonincreasing in tau: full at lo, zero at hi.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clip_sum(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    a.iter().map(|&v| (v - tau).clamp(0.0, 1.0)).collect()
}

// ---------------------------------------------------------------------------
// Rounding and repair
// ---------------------------------------------------------------------------

/// First user the cell association would leave without a dedicated LED
/// under this activation mask, or None when the association goes through.
fn first_starved(h: &DMatrix<f64>, active: &[bool]) -> Option<usize> {
    let idx: Vec<usize> = (0..active.len()).filter(|&j| active[j]).collect();
    crate::cells::first_unservable_user(h, &idx)
}

/// Round relaxed weights to the `n_t` largest (ties to the lowest index),
/// then repair until the cell association accepts the set: while some user
/// cannot claim a dedicated line-of-sight LED, swap in the smallest-index
/// excluded LED, dropping the cheapest-weight active LED, such that the
/// association moves forward. Scanning all excluded LEDs matters: an LED
/// the starved user cannot even see may still help by redirecting an
/// earlier user's claim away from the contended one.
pub fn round_and_repair(
    a: &[f64],
    n_t: usize,
    h: &DMatrix<f64>,
) -> Result<Vec<bool>> {
    let n = a.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y].partial_cmp(&a[x]).unwrap().then(x.cmp(&y)));
    let mut active = vec![false; n];
    for &j in order.iter().take(n_t) {
        active[j] = true;
    }

    // Association phase 1 serves users in ascending order, so a swap counts
    // as progress when the first starved user moves strictly later (or
    // vanishes). That index can only grow `nrows` times, bounding the loop.
    for _ in 0..=h.nrows() {
        let Some(user) = first_starved(h, &active) else {
            return Ok(active);
        };
        let mut cheapest_out: Vec<usize> = (0..n).filter(|&j| active[j]).collect();
        cheapest_out.sort_by(|&x, &y| a[x].partial_cmp(&a[y]).unwrap().then(x.cmp(&y)));
        let mut repaired = false;
        'swap: for incoming in 0..n {
            if active[incoming] {
                continue;
            }
            for &out in &cheapest_out {
                if out == incoming {
                    continue;
                }
                let mut trial = active.clone();
                trial[out] = false;
                trial[incoming] = true;
                if first_starved(h, &trial).map_or(true, |u| u > user) {
                    active = trial;
                    repaired = true;
                    break 'swap;
                }
            }
        }
        if !repaired {
            return Err(Error::NoFeasibleActivation { count: n_t });
        }
    }
    Err(Error::NoFeasibleActivation { count: n_t })
}

// ---------------------------------------------------------------------------
// The solve
// ---------------------------------------------------------------------------

struct Candidate {
    binary: Vec<bool>,
    relaxed: Vec<f64>,
    rate: f64,
    cv: f64,
    feasible: bool,
    trace: Vec<f64>,
    restart: usize,
}

/// Solve the relaxed selection and return a rounded binary activation.
///
/// `seed` makes the random restarts reproducible. When `n_t` equals the LED
/// count the only feasible point is all-ones and no solve runs.
pub fn solve_selection(
    ctx: &SelectionContext,
    n_t: usize,
    seed: u64,
) -> Result<SelectionOutcome> {
    let n = ctx.num_leds();
    assert!(n_t >= 1 && n_t <= n, "activation count out of range");
    let penalty = ctx.penalty_weight();

    if n_t == n {
        let ones = vec![1.0; n];
        let stats = cv_rmse(ctx.field, &ones)?;
        let value = penalized_objective(ctx, &ones, penalty);
        return Ok(SelectionOutcome {
            state: SelectionState {
                a: ones.clone(),
                n_t,
                penalty_coeff: penalty,
                objective_trace: vec![value],
            },
            relaxed: ones,
            cv: stats.cv,
            cv_feasible: stats.cv <= ctx.uniformity_limit,
            restart_index: 0,
        });
    }

    let uniform = vec![n_t as f64 / n as f64; n];
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for restart in 0..=ctx.settings.selector_restarts {
        let start = if restart == 0 {
            uniform.clone()
        } else {
            let jitter: Vec<f64> = uniform
                .iter()
                .map(|&v| v + rng.gen_range(-0.3..0.3))
                .collect();
            project_onto_count(&jitter, n_t)
        };
        let (relaxed, trace) = ascend(ctx, start, n_t, penalty);
        let Ok(binary) = round_and_repair(&relaxed, n_t, ctx.h) else {
            continue;
        };
        let bin_f: Vec<f64> = binary.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let rate = rate_at(ctx, &bin_f);
        let cv = cv_rmse(ctx.field, &bin_f)?.cv;
        candidates.push(Candidate {
            binary,
            relaxed,
            rate,
            cv,
            feasible: cv <= ctx.uniformity_limit + 1e-9,
            trace,
            restart,
        });
    }

    // A deterministic greedy prune explores a different basin than the
    // penalized ascent: drop the least costly LED until n_t remain.
    if let Ok(binary) = greedy_prune(ctx, n_t) {
        let bin_f: Vec<f64> = binary.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let rate = rate_at(ctx, &bin_f);
        let cv = cv_rmse(ctx.field, &bin_f)?.cv;
        candidates.push(Candidate {
            binary,
            relaxed: bin_f,
            rate,
            cv,
            feasible: cv <= ctx.uniformity_limit + 1e-9,
            trace: vec![rate],
            restart: ctx.settings.selector_restarts + 1,
        });
    }

    for cand in candidates.iter_mut() {
        improve_by_swaps(ctx, cand, n_t);
    }

    let Some(best_idx) = pick_best(&candidates) else {
        return Err(Error::NoFeasibleActivation { count: n_t });
    };
    let winner = candidates.swap_remove(best_idx);

    let a: Vec<f64> = winner
        .binary
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    Ok(SelectionOutcome {
        cv: winner.cv,
        cv_feasible: winner.feasible,
        restart_index: winner.restart,
        state: SelectionState {
            a,
            n_t,
            penalty_coeff: penalty,
            objective_trace: winner.trace,
        },
        relaxed: winner.relaxed,
    })
}

/// Order: uniformity-feasible candidates first, then higher rounded rate,
/// then the earlier restart.
fn pick_best(candidates: &[Candidate]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .max_by(|(_, x), (_, y)| {
            (x.feasible, x.rate, std::cmp::Reverse(x.restart))
                .partial_cmp(&(y.feasible, y.rate, std::cmp::Reverse(y.restart)))
                .unwrap()
        })
        .map(|(i, _)| i)
}

/// Projected gradient ascent with backtracking; the returned trace is
/// nondecreasing because only improving steps are accepted.
fn ascend(
    ctx: &SelectionContext,
    mut a: Vec<f64>,
    n_t: usize,
    penalty: f64,
) -> (Vec<f64>, Vec<f64>) {
    let barrier_limit = ctx.uniformity_limit;
    let use_barrier = barrier_limit.is_finite() && ctx.settings.barrier_coeff > 0.0;

    // Pull an infeasible start strictly inside the uniformity limit first;
    // if that fails, run without the barrier and let rounding report.
    let cv_of = |a: &[f64]| cv_rmse(ctx.field, a).map(|s| s.cv).unwrap_or(f64::INFINITY);
    let mut barrier_active = use_barrier;
    if use_barrier && cv_of(&a) >= barrier_limit * (1.0 - 1e-3) {
        a = descend_cv(ctx, a, n_t, barrier_limit);
        if cv_of(&a) >= barrier_limit {
            barrier_active = false;
        }
    }

    let eval = |a: &[f64]| -> f64 {
        let base = penalized_objective(ctx, a, penalty);
        if !barrier_active {
            return base;
        }
        let cv = cv_of(a);
        if cv >= barrier_limit {
            f64::NEG_INFINITY
        } else {
            base + ctx.settings.barrier_coeff * (barrier_limit - cv).ln()
        }
    };
    let grad = |a: &[f64]| -> Vec<f64> {
        let mut g = penalized_gradient(ctx, a, penalty);
        if barrier_active {
            let (cv, gcv) = cv_and_gradient(ctx.field, a);
            let s = ctx.settings.barrier_coeff / (barrier_limit - cv);
            for (gi, &ci) in g.iter_mut().zip(&gcv) {
                *gi -= s * ci;
            }
        }
        g
    };

    let mut f = eval(&a);
    let mut trace = vec![f];
    let mut step = 0.5;
    for _ in 0..ctx.settings.selector_max_iters {
        let g = grad(&a);
        let mut s = step;
        let mut accepted = false;
        for _ in 0..45 {
            let trial: Vec<f64> = a.iter().zip(&g).map(|(&v, &gi)| v + s * gi).collect();
            let trial = project_onto_count(&trial, n_t);
            let ft = eval(&trial);
            if ft > f + 1e-12 {
                a = trial;
                f = ft;
                step = (s * 1.5).min(1e3);
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(f);
    }
    (a, trace)
}

/// Projected descent that minimizes the map CV, used to recover a strictly
/// barrier-feasible start.
fn descend_cv(ctx: &SelectionContext, mut a: Vec<f64>, n_t: usize, limit: f64) -> Vec<f64> {
    let cv_of = |a: &[f64]| cv_rmse(ctx.field, a).map(|s| s.cv).unwrap_or(f64::INFINITY);
    let mut cv = cv_of(&a);
    let mut step = 0.5;
    for _ in 0..ctx.settings.selector_phase1_iters {
        if cv < limit * (1.0 - 1e-3) {
            break;
        }
        let (_, g) = cv_and_gradient(ctx.field, &a);
        let mut s = step;
        let mut accepted = false;
        for _ in 0..45 {
            let trial: Vec<f64> = a.iter().zip(&g).map(|(&v, &gi)| v - s * gi).collect();
            let trial = project_onto_count(&trial, n_t);
            let cvt = cv_of(&trial);
            if cvt < cv - 1e-15 {
                a = trial;
                cv = cvt;
                step = (s * 1.5).min(1e3);
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    a
}

/// Drop LEDs one at a time, always the one whose removal costs the least
/// rate while keeping the cell association whole, until `n_t` remain.
fn greedy_prune(ctx: &SelectionContext, n_t: usize) -> Result<Vec<bool>> {
    let n = ctx.num_leds();
    let mut active = vec![true; n];
    let mut count = n;
    while count > n_t {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if !active[j] {
                continue;
            }
            active[j] = false;
            if first_starved(ctx.h, &active).is_none() {
                let af: Vec<f64> =
                    active.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                let r = rate_at(ctx, &af);
                if best.map_or(true, |(_, br)| r > br) {
                    best = Some((j, r));
                }
            }
            active[j] = true;
        }
        let (j, _) = best.ok_or(Error::NoFeasibleActivation { count: n_t })?;
        active[j] = false;
        count -= 1;
    }
    Ok(active)
}

/// Greedy in/out swaps on the rounded selection, keeping the cell
/// association whole and (when the incumbent satisfies it) the uniformity
/// limit. Strictly rate-improving and bounded, so it terminates.
fn improve_by_swaps(ctx: &SelectionContext, cand: &mut Candidate, n_t: usize) {
    if !cand.feasible && ctx.uniformity_limit.is_finite() {
        return; // do not trade uniformity honesty for rate
    }
    let n = ctx.num_leds();
    let e = &ctx.field.per_led;
    let k = e.nrows();
    let kf = k as f64;
    let af: Vec<f64> = cand.binary.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut totals = ctx.field.weighted_values(&af);
    // CV after swapping LED `out` for `into`, from the running totals.
    let cv_after = |totals: &[f64], out: usize, into: usize| -> f64 {
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for (mu, t) in totals.iter().enumerate() {
            let v = t - e[(mu, out)] + e[(mu, into)];
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / kf;
        if mean <= 0.0 {
            return f64::INFINITY;
        }
        (sumsq / kf - mean * mean).max(0.0).sqrt() / mean
    };

    for _pass in 0..4 {
        let mut best_gain = 1e-9;
        let mut best_swap: Option<(usize, usize, f64, f64)> = None;
        for out in 0..n {
            if !cand.binary[out] {
                continue;
            }
            for into in 0..n {
                if cand.binary[into] {
                    continue;
                }
                let mut trial = cand.binary.clone();
                trial[out] = false;
                trial[into] = true;
                if first_starved(ctx.h, &trial).is_some() {
                    continue;
                }
                let cv = cv_after(&totals, out, into);
                if cand.feasible && cv > ctx.uniformity_limit + 1e-9 {
                    continue;
                }
                let trial_f: Vec<f64> =
                    trial.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                let r = rate_at(ctx, &trial_f);
                if r - cand.rate > best_gain {
                    best_gain = r - cand.rate;
                    best_swap = Some((out, into, r, cv));
                }
            }
        }
        match best_swap {
            Some((out, into, r, cv)) => {
                cand.binary[out] = false;
                cand.binary[into] = true;
                for (mu, t) in totals.iter_mut().enumerate() {
                    *t += e[(mu, into)] - e[(mu, out)];
                }
                cand.rate = r;
                cand.cv = cv;
                cand.feasible = cv <= ctx.uniformity_limit + 1e-9;
            }
            None => break,
        }
    }
    debug_assert_eq!(cand.binary.iter().filter(|&&b| b).count(), n_t);
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::initial_precoders;
    use crate::cells::{associate_leds, cluster_centroids, cluster_users, AssociationMatrix};
    use crate::channel::{gain_matrix, noise_variances};
    use crate::dimming::plan_dimming;
    use crate::illumination::build_field;
    use crate::scenario::{place_users_random, Point3, Scenario};
    use approx::assert_relative_eq;

    /// A small physical instance with explicit LED positions, wired through
    /// the full pipeline up to frozen warm-start precoders.
    struct Instance {
        sc: Scenario,
        h: DMatrix<f64>,
        partition: CellPartition,
        sigma2: Vec<f64>,
        precoders: Vec<Precoder>,
        field: crate::illumination::IlluminanceField,
        headroom: f64,
    }

    fn tiny_instance(n_leds: usize, n_users: usize, seed: u64) -> Instance {
        let mut sc = Scenario::default();
        sc.room.length_x_m = 5.0;
        sc.room.width_y_m = 5.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let positions: Vec<Point3> = (0..n_leds)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-2.2..2.2),
                    rng.gen_range(-2.2..2.2),
                    sc.room.led_plane_height_m,
                )
            })
            .collect();
        sc.leds.count = n_leds;
        sc.leds.positions = Some(positions.clone());
        sc.users.count = n_users;
        sc.validate().unwrap();
        let users = place_users_random(&sc, n_users, seed);
        let h = gain_matrix(&positions, &users, &sc).unwrap();
        let clusters = cluster_users(&users, sc.cluster_radius_m);
        let centroids = cluster_centroids(&users, &clusters);
        let all: Vec<usize> = (0..n_leds).collect();
        let partition =
            associate_leds(AssociationMatrix::from_gains(&h, &all), &clusters, &centroids)
                .unwrap();
        let plan = plan_dimming(0.6, n_leds, 0.0, 2.0).unwrap();
        let active = vec![true; n_leds];
        let sigma2 = noise_variances(&h, &partition, &active, &sc, plan.dc_bias_a);
        let a = vec![1.0; n_leds];
        let precoders =
            initial_precoders(&h, &partition, &a, plan.headroom_a, &sc.solver).unwrap();
        let field = build_field(&sc).unwrap();
        Instance {
            sc,
            h,
            partition,
            sigma2,
            precoders,
            field,
            headroom: plan.headroom_a,
        }
    }

    fn ctx<'a>(inst: &'a Instance, uniformity_limit: f64) -> SelectionContext<'a> {
        let _ = inst.headroom;
        SelectionContext {
            h: &inst.h,
            partition: &inst.partition,
            precoders: &inst.precoders,
            sigma2: &inst.sigma2,
            field: &inst.field,
            gamma_zeta: inst.sc.gamma_zeta(),
            zero_inter_ci: false,
            uniformity_limit,
            settings: &inst.sc.solver,
        }
    }

    #[test]
    fn penalty_vanishes_on_binary_points_and_counts_half_weights() {
        let inst = tiny_instance(6, 2, 1);
        let c = ctx(&inst, f64::INFINITY);
        let mut a = vec![0.0; 6];
        a[0] = 1.0;
        a[3] = 1.0;
        let v = penalized_objective(&c, &a, 1e5);
        assert_relative_eq!(v, rate_at(&c, &a), epsilon = 1e-12);
        // One half-open weight costs exactly lambda * 0.25.
        let mut half = a.clone();
        half[1] = 0.5;
        let vh = penalized_objective(&c, &half, 1e5);
        let rate_h = rate_at(&c, &half);
        assert_relative_eq!(rate_h - vh, 2.5e4, max_relative = 1e-9);
        // Huge lambda buries any interior point below any binary one.
        let vast = penalized_objective(&c, &half, 1e10);
        assert!(vast < v - 1e9);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let inst = tiny_instance(7, 2, 3);
        let c = ctx(&inst, f64::INFINITY);
        let lambda = 1e5;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let a: Vec<f64> = (0..7).map(|_| rng.gen_range(0.15..0.85)).collect();
            let g = penalized_gradient(&c, &a, lambda);
            for j in 0..7 {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[j] += 1e-6;
                am[j] -= 1e-6;
                let fd = (penalized_objective(&c, &ap, lambda)
                    - penalized_objective(&c, &am, lambda))
                    / 2e-6;
                assert_relative_eq!(g[j], fd, max_relative = 1e-5, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn projection_hits_the_count_and_stays_in_the_box() {
        let a = vec![1.4, 0.3, -0.2, 0.8, 0.6];
        let p = project_onto_count(&a, 3);
        assert_relative_eq!(p.iter().sum::<f64>(), 3.0, epsilon = 1e-9);
        for &v in &p {
            assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
        // Idempotent on feasible points.
        let q = project_onto_count(&p, 3);
        for (x, y) in p.iter().zip(&q) {
            assert_relative_eq!(x, y, epsilon = 1e-9);
        }
        // Order is preserved: larger inputs get at least as much.
        let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(p.iter().copied()).collect();
        pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        for w in pairs.windows(2) {
            assert!(w[0].1 <= w[1].1 + 1e-12);
        }
    }

    #[test]
    fn rounding_takes_the_largest_weights_with_index_ties() {
        let h = DMatrix::from_element(1, 4, 1.0);
        let r = round_and_repair(&[0.99, 0.98, 0.01, 0.02], 2, &h).unwrap();
        assert_eq!(r, vec![true, true, false, false]);
        let r = round_and_repair(&[1.0, 0.0, 1.0, 0.0], 2, &h).unwrap();
        assert_eq!(r, vec![true, false, true, false]);
        // Tie at the boundary: index 1 beats index 3.
        let r = round_and_repair(&[0.9, 0.5, 0.2, 0.5], 2, &h).unwrap();
        assert_eq!(r, vec![true, true, false, false]);
    }

    #[test]
    fn repair_swaps_in_coverage_for_a_blinded_user() {
        // User 1 only sees LED 2, which the raw rounding would exclude.
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 0.8, 0.0, 0.0, 0.0, 0.5]);
        let r = round_and_repair(&[0.9, 0.8, 0.1], 2, &h).unwrap();
        assert!(r[2], "repair must activate the only LED user 1 sees");
        assert_eq!(r.iter().filter(|&&b| b).count(), 2);
        // And the cheapest-weight LED was sacrificed.
        assert_eq!(r, vec![true, false, true]);
    }

    #[test]
    fn impossible_coverage_is_an_error() {
        // Two users see disjoint single LEDs; with n_t = 1 someone starves.
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(round_and_repair(&[0.9, 0.1], 1, &h).is_err());
    }

    #[test]
    fn repair_resolves_dedicated_led_contention() {
        // User 0 prefers LED 0, which is the only LED user 1 sees: keeping
        // {0, 1} starves user 1 even though it is covered. Swapping in
        // LED 2 lets user 0 claim elsewhere.
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.9, 0.0, 0.0]);
        let r = round_and_repair(&[0.9, 0.2, 0.1], 2, &h).unwrap();
        assert_eq!(r, vec![true, false, true]);
        // And the rounded set is accepted by the association dry run.
        assert!(first_starved(&h, &r).is_none());
    }

    #[test]
    fn contention_with_no_alternative_is_an_error() {
        // Both users' only line of sight is LED 0; no activation can give
        // each a dedicated LED.
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.0]);
        assert!(round_and_repair(&[0.9, 0.5], 1, &h).is_err());
        assert!(round_and_repair(&[0.9, 0.5], 2, &h).is_err());
    }

    #[test]
    fn full_count_short_circuits_to_all_ones() {
        let inst = tiny_instance(6, 2, 9);
        let c = ctx(&inst, 0.25);
        let out = solve_selection(&c, 6, 1).unwrap();
        assert!(out.state.a.iter().all(|&v| v == 1.0));
        assert_eq!(out.state.objective_trace.len(), 1);
    }

    #[test]
    fn ascent_trace_is_nondecreasing() {
        let inst = tiny_instance(8, 2, 11);
        let c = ctx(&inst, f64::INFINITY);
        let out = solve_selection(&c, 4, 5).unwrap();
        for w in out.state.objective_trace.windows(2) {
            assert!(w[1] + 1e-9 >= w[0]);
        }
        assert_eq!(out.state.a.iter().filter(|&&v| v > 0.5).count(), 4);
    }

    #[test]
    fn tiny_solve_reaches_the_exhaustive_optimum() {
        let inst = tiny_instance(8, 2, 17);
        let c = ctx(&inst, f64::INFINITY);
        let n_t = 4;
        // Exhaustive oracle over all covering 4-subsets, same frozen
        // precoders and noise.
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << 8) {
            if mask.count_ones() != n_t as u32 {
                continue;
            }
            let a: Vec<f64> = (0..8)
                .map(|j| if mask & (1 << j) != 0 { 1.0 } else { 0.0 })
                .collect();
            let covered = (0..inst.h.nrows())
                .all(|u| (0..8).any(|j| a[j] > 0.5 && inst.h[(u, j)] > 0.0));
            if !covered {
                continue;
            }
            best = best.max(rate_at(&c, &a));
        }
        let out = solve_selection(&c, n_t as usize, 2).unwrap();
        let got = rate_at(&c, &out.state.a);
        assert!(
            got >= 0.99 * best,
            "solver {got} below 99% of exhaustive {best}"
        );
    }

    #[test]
    fn unattainable_uniformity_is_reported_not_hidden() {
        let inst = tiny_instance(8, 2, 23);
        let c = ctx(&inst, 1e-4);
        match solve_selection(&c, 4, 3) {
            Ok(out) => {
                // Either the limit is genuinely met or the outcome says no.
                if out.cv_feasible {
                    assert!(out.cv <= 1e-4 + 1e-9);
                } else {
                    assert!(out.cv > 1e-4);
                }
            }
            Err(Error::NoFeasibleActivation { .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
