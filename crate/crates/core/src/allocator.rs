//! Per-user power allocation under the per-LED amplitude budget.
//!
//! Within a cell, the zero-forcing structure reduces rate maximization to
//! choosing the per-user equivalent powers `q`. The per-LED peak-amplitude
//! constraint is strengthened (via the mean inequality) into a row
//! constraint on `P diag(q) P^T`, where `P` is the channel pseudo-inverse —
//! convex in `q`, so the cell problem is solved by Lagrangian duality: a
//! closed-form primal update from the KKT stationarity condition and a
//! projected subgradient ascent on the duals with a diminishing step. The
//! dual value is a certified upper bound (weak duality), which the tests
//! check at every iterate.
//!
//! Across cells, inter-cell interference couples the problems; the driver
//! freezes it during each cell solve and refreshes it between sweeps,
//! keeping the best configuration seen.

use nalgebra::{DMatrix, DVector};

use crate::cells::CellPartition;
use crate::precoding::{pseudo_inverse, sinr, sinr_coefficients, sum_rate, Precoder};
use crate::scenario::SolverSettings;
use crate::Result;

const LN2: f64 = std::f64::consts::LN_2;

// ---------------------------------------------------------------------------
// Problem and state
// ---------------------------------------------------------------------------

/// One cell's allocation problem with the coupling to other cells frozen.
#[derive(Debug, Clone)]
pub struct CellProblem {
    /// Pseudo-inverse of the cell's effective channel (LEDs x users).
    pub pinv: DMatrix<f64>,
    /// Per-user linear SINR coefficients (SINR = m * q under zero forcing).
    pub m: Vec<f64>,
    /// Signal amplitude headroom of the dimming plan, in amperes.
    pub headroom_a: f64,
}

impl CellProblem {
    /// Right-hand side of the strengthened row constraint.
    pub fn bound(&self) -> f64 {
        self.headroom_a * self.headroom_a / self.m.len() as f64
    }

    /// Per-coordinate power cap: the largest `q_i` (others zero) that still
    /// satisfies every row constraint. Used when the KKT denominator says
    /// "unbounded".
    fn coordinate_caps(&self) -> Vec<f64> {
        let p = &self.pinv;
        let b = self.bound();
        (0..p.ncols())
            .map(|i| {
                let col_abs_sum: f64 = p.column(i).iter().map(|v| v.abs()).sum();
                let worst = p
                    .column(i)
                    .iter()
                    .map(|v| v.abs() * col_abs_sum)
                    .fold(0.0f64, f64::max);
                debug_assert!(worst > 0.0, "pseudo-inverse column is zero");
                b / worst
            })
            .collect()
    }
}

/// Result of one cell's dual-subgradient solve.
#[derive(Debug, Clone)]
pub struct AllocationState {
    /// Best feasible per-user powers found.
    pub q: Vec<f64>,
    /// Row-constraint dual variables at termination.
    pub mu: Vec<f64>,
    /// Nonnegativity dual variables at termination.
    pub lambda: Vec<f64>,
    /// Feasible-iterate cell rate per iteration.
    pub rate_trace: Vec<f64>,
    /// Dual upper bound per iteration.
    pub dual_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `max_j |mu_j * (row_j - bound)|` at the returned point.
    pub comp_slack_mu: f64,
    /// `max_i |lambda_i * q_i|` at the returned point.
    pub comp_slack_lambda: f64,
}

impl AllocationState {
    /// Cell rate of the returned powers.
    pub fn rate(&self, m: &[f64]) -> f64 {
        cell_rate(m, &self.q)
    }
}

fn cell_rate(m: &[f64], q: &[f64]) -> f64 {
    m.iter()
        .zip(q)
        .map(|(&mi, &qi)| 0.5 * (1.0 + mi * qi).log2())
        .sum()
}

// ---------------------------------------------------------------------------
// Constraint and KKT pieces
// ---------------------------------------------------------------------------

/// Diminishing subgradient step at iteration `t` (1-based).
pub fn step_size(base: f64, t: usize) -> f64 {
    base / (t as f64).sqrt()
}

/// L1 norm of each row of `P diag(q) P^T`: the strengthened per-LED
/// constraint values. Satisfying `<= headroom^2 / n_users` on every row
/// guarantees the original per-LED peak-amplitude constraint.
pub fn strengthen_constraint(pinv: &DMatrix<f64>, q: &[f64]) -> Vec<f64> {
    let mut scaled = pinv.clone();
    for (i, &qi) in q.iter().enumerate() {
        for j in 0..scaled.nrows() {
            scaled[(j, i)] *= qi;
        }
    }
    let gram = scaled * pinv.transpose();
    (0..gram.nrows())
        .map(|j| gram.row(j).iter().map(|v| v.abs()).sum())
        .collect()
}

/// Closed-form stationary powers for the current duals. A coordinate whose
/// dual-weighted denominator is nonpositive is unbounded at this dual point
/// and comes back as `+inf`; the caller substitutes its feasibility cap.
pub fn kkt_q(mu: &[f64], lambda: &[f64], m: &[f64], pinv: &DMatrix<f64>) -> Vec<f64> {
    let p = pinv;
    let col_sums: Vec<f64> = (0..p.ncols()).map(|i| p.column(i).sum()).collect();
    (0..p.ncols())
        .map(|i| {
            let weighted: f64 = (0..p.nrows()).map(|j| mu[j] * p[(j, i)] * col_sums[i]).sum();
            let denom = weighted - lambda[i];
            if denom <= 0.0 {
                f64::INFINITY
            } else {
                (1.0 / (2.0 * LN2 * denom) - 1.0 / m[i]).max(0.0)
            }
        })
        .collect()
}

/// Lagrangian dual value at `(mu, lambda)`: a certified upper bound on the
/// achievable cell rate for any feasible `q` (weak duality). Infinite when
/// some coordinate's denominator is nonpositive.
pub fn dual_objective(mu: &[f64], lambda: &[f64], m: &[f64], pinv: &DMatrix<f64>, bound: f64) -> f64 {
    let p = pinv;
    let col_sums: Vec<f64> = (0..p.ncols()).map(|i| p.column(i).sum()).collect();
    let mut value: f64 = mu.iter().map(|&mj| mj * bound).sum();
    for i in 0..p.ncols() {
        let weighted: f64 = (0..p.nrows()).map(|j| mu[j] * p[(j, i)] * col_sums[i]).sum();
        let d = weighted - lambda[i];
        if d <= 0.0 {
            return f64::INFINITY;
        }
        // sup over q of the per-coordinate Lagrangian term, in closed form.
        value += 0.5 * (m[i] / (2.0 * LN2 * d)).log2() - 1.0 / (2.0 * LN2) + d / m[i];
    }
    value
}

// ---------------------------------------------------------------------------
// Per-cell solve
// ---------------------------------------------------------------------------

/// Scale `q` uniformly onto row-constraint feasibility.
fn feasize(pinv: &DMatrix<f64>, q: &[f64], bound: f64) -> Vec<f64> {
    let peak = strengthen_constraint(pinv, q)
        .into_iter()
        .fold(0.0f64, f64::max);
    if peak > bound {
        let s = bound / peak;
        q.iter().map(|&v| v * s).collect()
    } else {
        q.to_vec()
    }
}

/// One sweep of pairwise power transfers on a feasible `q`: for each
/// ordered user pair (take from k, give to i), move the closed-form
/// water-filling amount s* = ((q_k + 1/m_k) − (q_i + 1/m_i))/2 — the
/// unconstrained optimum of the two-coordinate subproblem — truncated to
/// row-constraint feasibility by bisection. The rate along the transfer
/// direction increases up to s*, so the largest feasible s ≤ s* is the
/// best. Row values are updated incrementally from the gram matrix, so a
/// trial point costs O(N_T²). Returns whether any transfer moved.
fn pair_transfer_sweep(pinv: &DMatrix<f64>, m: &[f64], q: &mut [f64], bound: f64) -> bool {
    let n_users = q.len();
    let n_leds = pinv.nrows();
    let p = pinv;
    let mut gram = {
        let mut scaled = p.clone();
        for (i, &qi) in q.iter().enumerate() {
            for j in 0..n_leds {
                scaled[(j, i)] *= qi;
            }
        }
        scaled * p.transpose()
    };
    let mut moved = false;
    for k in 0..n_users {
        for i in 0..n_users {
            if i == k || q[k] <= 0.0 {
                continue;
            }
            let s_star = 0.5 * ((q[k] + 1.0 / m[k]) - (q[i] + 1.0 / m[i]));
            let s_hi = s_star.min(q[k]);
            if s_hi <= 1e-18 {
                continue;
            }
            let peak_at = |s: f64| -> f64 {
                let mut peak = 0.0f64;
                for j in 0..n_leds {
                    let mut row = 0.0;
                    for t in 0..n_leds {
                        let d = p[(j, i)] * p[(t, i)] - p[(j, k)] * p[(t, k)];
                        row += (gram[(j, t)] + s * d).abs();
                    }
                    peak = peak.max(row);
                }
                peak
            };
            let s = if peak_at(s_hi) <= bound {
                s_hi
            } else {
                let (mut lo, mut hi) = (0.0f64, s_hi);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if peak_at(mid) <= bound {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
            if s <= 1e-18 {
                continue;
            }
            let before = cell_rate(m, q);
            q[i] += s;
            q[k] -= s;
            if cell_rate(m, q) > before {
                for j in 0..n_leds {
                    for t in 0..n_leds {
                        gram[(j, t)] += s * (p[(j, i)] * p[(t, i)] - p[(j, k)] * p[(t, k)]);
                    }
                }
                moved = true;
            } else {
                q[i] -= s;
                q[k] += s;
            }
        }
    }
    moved
}

/// Deep polish move for small cells: give up part of user k's power, then
/// regrow every other coordinate to its new row-constraint boundary.
/// Unlike the 1:1 transfers this walks along the active constraint surface
/// (shrinking one coordinate frees a different amount of row budget than
/// the others gain), and regrowing the whole complement matters because an
/// improving rebalance can need several beneficiaries at once. The take
/// amount is sampled coarsely and refined around the best sample.
/// Returns whether `q` moved.
fn shrink_regrow_polish(
    pinv: &DMatrix<f64>,
    m: &[f64],
    q: &mut Vec<f64>,
    bound: f64,
) -> bool {
    let n_users = q.len();
    let mut moved = false;
    for k in 0..n_users {
        if q[k] <= 0.0 {
            continue;
        }
        let base = cell_rate(m, q);
        let regrown = |s: f64| -> Vec<f64> {
            let mut trial = q.clone();
            trial[k] -= s;
            for _ in 0..2 {
                for i in 0..n_users {
                    if i != k {
                        push_coordinate_to_boundary(pinv, &mut trial, i, bound);
                    }
                }
            }
            trial
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut lo = 0.0;
        let mut hi = q[k];
        for _round in 0..3 {
            let mut best_s = None;
            for t in 0..=16 {
                let s = lo + (hi - lo) * t as f64 / 16.0;
                let trial = regrown(s);
                let r = cell_rate(m, &trial);
                if r > base + 1e-12 && best.as_ref().map_or(true, |(br, _)| r > *br) {
                    best = Some((r, trial));
                    best_s = Some(s);
                }
            }
            let Some(s0) = best_s else { break };
            let width = (hi - lo) / 16.0;
            lo = (s0 - width).max(0.0);
            hi = (s0 + width).min(q[k]);
        }
        if let Some((_, trial)) = best {
            *q = trial;
            moved = true;
        }
    }
    moved
}

/// Final polish tier for tiny cells: coarse-to-fine product grid over the
/// per-coordinate feasibility box, zooming on the best feasible point. At
/// these dimensions the sweep is effectively exhaustive and immune to the
/// constraint-surface geometry that stalls coordinate-wise moves; the cost
/// explodes combinatorially with the user count, hence the small-n gate at
/// the call site. Keeps the incumbent when nothing beats it.
fn grid_refine_polish(pinv: &DMatrix<f64>, m: &[f64], q: &mut Vec<f64>, bound: f64) {
    let n = q.len();
    let caps: Vec<f64> = (0..n)
        .map(|i| {
            let mut unit = vec![0.0; n];
            unit[i] = 1.0;
            let peak = strengthen_constraint(pinv, &unit)
                .into_iter()
                .fold(0.0f64, f64::max);
            if peak > 0.0 {
                bound / peak
            } else {
                q[i].max(1e-9) * 4.0
            }
        })
        .collect();
    let points = 9usize;
    let mut center: Vec<f64> = caps.iter().map(|&c| 0.5 * c).collect();
    let mut span: Vec<f64> = center.clone();
    let mut best = cell_rate(m, q);
    let mut best_q = q.clone();
    for _round in 0..8 {
        let total = points.pow(n as u32);
        for flat in 0..total {
            let mut idx = flat;
            let mut trial = vec![0.0; n];
            for i in 0..n {
                let t = idx % points;
                idx /= points;
                trial[i] = (center[i] - span[i]
                    + 2.0 * span[i] * t as f64 / (points - 1) as f64)
                    .max(0.0);
            }
            let feasible = strengthen_constraint(pinv, &trial)
                .into_iter()
                .all(|r| r <= bound);
            if feasible {
                let r = cell_rate(m, &trial);
                if r > best {
                    best = r;
                    best_q = trial;
                }
            }
        }
        center = best_q.clone();
        for s in span.iter_mut() {
            *s *= 2.5 / (points - 1) as f64;
        }
    }
    *q = best_q;
}

/// Grow one coordinate of a feasible `q` to its row-constraint boundary,
/// holding the others fixed. Never decreases the rate.
fn push_coordinate_to_boundary(pinv: &DMatrix<f64>, q: &mut Vec<f64>, i: usize, bound: f64) {
    let feasible_at = |qi: f64, q: &mut Vec<f64>| -> bool {
        let old = q[i];
        q[i] = qi;
        let peak = strengthen_constraint(pinv, q)
            .into_iter()
            .fold(0.0f64, f64::max);
        q[i] = old;
        peak <= bound
    };
    // Bracket: double upward from the current value until infeasible.
    let mut lo = q[i];
    let mut hi = (q[i].max(1e-12)) * 2.0;
    let mut bracketed = false;
    for _ in 0..60 {
        if feasible_at(hi, q) {
            lo = hi;
            hi *= 2.0;
        } else {
            bracketed = true;
            break;
        }
    }
    if !bracketed {
        q[i] = lo;
        return;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible_at(mid, q) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    q[i] = lo;
}

/// Solve one cell's power allocation by projected dual subgradient ascent.
///
/// Each iteration takes the closed-form primal candidate for the current
/// duals (capping unbounded coordinates), scales it onto feasibility to get
/// a usable iterate, and steps the duals along the true constraint
/// violations with the diminishing schedule. The best feasible iterate by
/// cell rate is kept; an optional per-coordinate boundary push squeezes out
/// slack the uniform scaling left behind.
pub fn solve_cell(problem: &CellProblem, settings: &SolverSettings) -> AllocationState {
    let n_leds = problem.pinv.nrows();
    let n_users = problem.m.len();
    let b = problem.bound();
    let caps = problem.coordinate_caps();

    let mut mu = vec![0.1; n_leds];
    let mut lambda = vec![0.1; n_users];
    let mut rate_trace = Vec::new();
    let mut dual_trace = Vec::new();
    let mut best_q = vec![0.0; n_users];
    let mut best_rate = f64::NEG_INFINITY;
    let mut prev_rate: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=settings.max_dual_iters {
        iterations = t;
        let mut q = kkt_q(&mu, &lambda, &problem.m, &problem.pinv);
        for (qi, &cap) in q.iter_mut().zip(&caps) {
            if !qi.is_finite() {
                *qi = cap;
            }
        }
        let q_feasible = feasize(&problem.pinv, &q, b);
        let r = cell_rate(&problem.m, &q_feasible);
        if r > best_rate {
            best_rate = r;
            best_q = q_feasible;
        }
        rate_trace.push(r);
        dual_trace.push(dual_objective(&mu, &lambda, &problem.m, &problem.pinv, b));

        if t >= settings.min_dual_iters {
            if let Some(p) = prev_rate {
                if (r - p) * (r - p) <= settings.rate_tolerance {
                    converged = true;
                    break;
                }
            }
        }
        prev_rate = Some(r);

        let theta = step_size(settings.subgradient_step, t);
        let rows = strengthen_constraint(&problem.pinv, &q);
        for (mu_j, &row) in mu.iter_mut().zip(&rows) {
            *mu_j = (*mu_j + theta * (row - b)).max(0.0);
        }
        for (l_i, &qi) in lambda.iter_mut().zip(&q) {
            *l_i = (*l_i - theta * qi).max(0.0);
        }
    }

    if settings.coordinate_polish {
        for _ in 0..3 {
            for i in 0..n_users {
                push_coordinate_to_boundary(&problem.pinv, &mut best_q, i, b);
            }
            if !pair_transfer_sweep(&problem.pinv, &problem.m, &mut best_q, b) {
                break;
            }
        }
        // The surface-following moves cost O(N_R² N_T³) per sweep, so they
        // are reserved for cells small enough to afford them; larger cells
        // keep the light polish above.
        if n_users <= 6 && n_leds <= 16 {
            for _ in 0..4 {
                if !shrink_regrow_polish(&problem.pinv, &problem.m, &mut best_q, b) {
                    break;
                }
                for i in 0..n_users {
                    push_coordinate_to_boundary(&problem.pinv, &mut best_q, i, b);
                }
            }
        }
        // At four users or fewer the grid sweep is effectively exhaustive.
        if n_users <= 4 {
            grid_refine_polish(&problem.pinv, &problem.m, &mut best_q, b);
            for i in 0..n_users {
                push_coordinate_to_boundary(&problem.pinv, &mut best_q, i, b);
            }
        }
    }

    let rows = strengthen_constraint(&problem.pinv, &best_q);
    let comp_slack_mu = mu
        .iter()
        .zip(&rows)
        .map(|(&mj, &row)| (mj * (row - b)).abs())
        .fold(0.0f64, f64::max);
    let comp_slack_lambda = lambda
        .iter()
        .zip(&best_q)
        .map(|(&li, &qi)| (li * qi).abs())
        .fold(0.0f64, f64::max);

    AllocationState {
        q: best_q,
        mu,
        lambda,
        rate_trace,
        dual_trace,
        iterations,
        converged,
        comp_slack_mu,
        comp_slack_lambda,
    }
}

// ---------------------------------------------------------------------------
// Network driver
// ---------------------------------------------------------------------------

/// A full network allocation: per-cell solves plus the precoders they imply.
#[derive(Debug, Clone)]
pub struct NetworkAllocation {
    pub precoders: Vec<Precoder>,
    pub per_cell: Vec<AllocationState>,
    /// True network sum-rate (interference evaluated, not frozen).
    pub rate: f64,
    pub sinr: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Zero-forcing warm-start precoders with every user at the same power,
/// scaled so each LED uses at most half its headroom.
pub fn initial_precoders(
    h: &DMatrix<f64>,
    partition: &CellPartition,
    a: &[f64],
    headroom_a: f64,
    settings: &SolverSettings,
) -> Result<Vec<Precoder>> {
    let mut out = Vec::with_capacity(partition.num_cells());
    for c in 0..partition.num_cells() {
        let leds = &partition.led_sets[c];
        let users = &partition.user_clusters[c];
        let mut eff = DMatrix::zeros(users.len(), leds.len());
        for (r, &u) in users.iter().enumerate() {
            for (t, &j) in leds.iter().enumerate() {
                eff[(r, t)] = h[(u, j)] * a[j];
            }
        }
        if settings.identity_precoder_init {
            // Matched-filter start: rows scaled into half the headroom.
            let mut w = eff.transpose();
            let peak = (0..w.nrows())
                .map(|t| w.row(t).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0f64, f64::max);
            if peak > 0.0 {
                w *= headroom_a / (2.0 * peak);
            }
            out.push(Precoder {
                w,
                sqrt_q: DVector::zeros(users.len()),
            });
            continue;
        }
        let pinv = pseudo_inverse(&eff, settings.svd_cutoff)?;
        let peak = (0..pinv.nrows())
            .map(|t| pinv.row(t).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let sqrt_q_u = headroom_a / (2.0 * peak);
        let mut w = pinv;
        w *= sqrt_q_u;
        out.push(Precoder {
            w,
            sqrt_q: DVector::from_element(users.len(), sqrt_q_u),
        });
    }
    Ok(out)
}

/// Alternate per-cell solves with interference refreshes until the network
/// rate settles. Cells within a sweep all see the interference of the
/// precoders the sweep started with; the best configuration over all sweeps
/// is returned.
#[allow(clippy::too_many_arguments)]
pub fn allocate_network(
    h: &DMatrix<f64>,
    partition: &CellPartition,
    a: &[f64],
    sigma2: &[f64],
    gamma_zeta: f64,
    headroom_a: f64,
    zero_inter_ci: bool,
    warm_start: &[Precoder],
    settings: &SolverSettings,
) -> Result<NetworkAllocation> {
    let mut precoders = warm_start.to_vec();
    let mut best: Option<NetworkAllocation> = None;
    let mut prev_rate: Option<f64> = None;
    let mut converged = false;
    let mut sweeps = 0;

    for sweep in 1..=settings.max_allocation_sweeps {
        sweeps = sweep;
        let m_all = sinr_coefficients(h, partition, a, &precoders, sigma2, gamma_zeta, zero_inter_ci);

        let mut new_precoders = Vec::with_capacity(partition.num_cells());
        let mut states = Vec::with_capacity(partition.num_cells());
        for c in 0..partition.num_cells() {
            let leds = &partition.led_sets[c];
            let users = &partition.user_clusters[c];
            let mut eff = DMatrix::zeros(users.len(), leds.len());
            for (r, &u) in users.iter().enumerate() {
                for (t, &j) in leds.iter().enumerate() {
                    eff[(r, t)] = h[(u, j)] * a[j];
                }
            }
            let pinv = pseudo_inverse(&eff, settings.svd_cutoff)?;
            let problem = CellProblem {
                m: users.iter().map(|&u| m_all[u]).collect(),
                pinv,
                headroom_a,
            };
            let state = solve_cell(&problem, settings);
            let sqrt_q =
                DVector::from_iterator(state.q.len(), state.q.iter().map(|&q| q.sqrt()));
            let mut w = problem.pinv.clone();
            for i in 0..w.ncols() {
                for t in 0..w.nrows() {
                    w[(t, i)] *= sqrt_q[i];
                }
            }
            new_precoders.push(Precoder { w, sqrt_q });
            states.push(state);
        }

        precoders = new_precoders;
        let xi = sinr(h, partition, a, &precoders, sigma2, gamma_zeta, zero_inter_ci);
        let rate = sum_rate(&xi);
        let better = best.as_ref().map_or(true, |b| rate > b.rate);
        if better {
            best = Some(NetworkAllocation {
                precoders: precoders.clone(),
                per_cell: states,
                rate,
                sinr: xi,
                sweeps: sweep,
                converged: false,
            });
        }
        if let Some(p) = prev_rate {
            if (rate - p) * (rate - p) <= settings.rate_tolerance {
                converged = true;
                break;
            }
        }
        prev_rate = Some(rate);
    }

    let mut out = best.expect("at least one sweep ran");
    out.sweeps = sweeps;
    out.converged = converged;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
