//! Zero-forcing precoding, SINR, and rate bookkeeping.
//!
//! Each cell serves its users with a pseudo-inverse precoder over its own
//! LEDs: the effective channel (gains times activation weights) times the
//! precoder is exactly diagonal, so users in a cell do not interfere with
//! each other. What remains is inter-cell interference — every other cell's
//! precoded signals leaking into the user's photodiode — plus receiver
//! noise. Rates use the PAM capacity lower bound, which costs the familiar
//! `2/(pi e)` shaping factor in the SINR.
//!
//! Column `i` of a cell's precoder always corresponds to the `i`-th entry of
//! that cell's (ascending) user list, and row `t` to the `t`-th entry of its
//! LED list.

use nalgebra::{DMatrix, DVector};

use crate::cells::CellPartition;
use crate::{Error, Result};

/// Shaping constant of the PAM capacity lower bound.
const PI_E: f64 = std::f64::consts::PI * std::f64::consts::E;

// ---------------------------------------------------------------------------
// Pseudo-inverse and precoder construction
// ---------------------------------------------------------------------------

/// Moore-Penrose pseudo-inverse via SVD with a relative singular-value
/// cutoff. Fails when the matrix does not have full row rank at that cutoff,
/// because a zero-forcing precoder then cannot exist.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_cutoff: f64) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let smax = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let cutoff = rel_cutoff * smax;
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > cutoff && s > 0.0)
        .count();
    if rank < m.nrows() {
        return Err(Error::SingularChannel {
            rank,
            users: m.nrows(),
        });
    }
    let mut inv_sigma = DMatrix::zeros(v_t.nrows(), u.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            inv_sigma[(k, k)] = 1.0 / s;
        }
    }
    Ok(v_t.transpose() * inv_sigma * u.transpose())
}

/// A cell's precoder: LED weights per user stream plus the equivalent
/// per-stream amplitude gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    /// cell-LEDs x cell-users mixing matrix (amperes per unit symbol).
    pub w: DMatrix<f64>,
    /// Square roots of the per-user equivalent powers the precoder realizes.
    pub sqrt_q: DVector<f64>,
}

impl Precoder {
    /// L1 norm of each row of `diag(a_cell) * W`: the peak signal current
    /// each LED can be asked to emit.
    pub fn row_amplitudes(&self, a_cell: &[f64]) -> Vec<f64> {
        assert_eq!(a_cell.len(), self.w.nrows());
        (0..self.w.nrows())
            .map(|t| a_cell[t] * self.w.row(t).iter().map(|v| v.abs()).sum::<f64>())
            .collect()
    }

    /// True when every LED's peak signal current fits in the headroom.
    pub fn fits_headroom(&self, a_cell: &[f64], headroom_a: f64, tol: f64) -> bool {
        self.row_amplitudes(a_cell)
            .into_iter()
            .all(|r| r <= headroom_a + tol)
    }
}

/// Build the zero-forcing precoder of one cell: the pseudo-inverse of the
/// effective channel `H_c * diag(a_c)`, scaled per user stream by
/// `sqrt(q_c)`. Activation weights may be fractional (the relaxed selection
/// evaluates exactly this continuous extension).
pub fn zf_precoder(
    h_c: &DMatrix<f64>,
    a_c: &[f64],
    q_c: &[f64],
    rel_cutoff: f64,
) -> Result<Precoder> {
    assert_eq!(h_c.ncols(), a_c.len());
    assert_eq!(h_c.nrows(), q_c.len());
    let mut eff = h_c.clone();
    for (j, &a) in a_c.iter().enumerate() {
        for i in 0..eff.nrows() {
            eff[(i, j)] *= a;
        }
    }
    let pinv = pseudo_inverse(&eff, rel_cutoff)?;
    let sqrt_q = DVector::from_iterator(q_c.len(), q_c.iter().map(|&q| q.sqrt()));
    let mut w = pinv;
    for i in 0..w.ncols() {
        for t in 0..w.nrows() {
            w[(t, i)] *= sqrt_q[i];
        }
    }
    Ok(Precoder {
        w,
        sqrt_q,
    })
}

// ---------------------------------------------------------------------------
// SINR and rates
// ---------------------------------------------------------------------------

/// Per-user SINR of the whole network under the PAM lower bound.
///
/// `a` holds the global activation weights, `precoders` one precoder per
/// cell, `sigma2` the per-user noise variances. With `zero_inter_ci` the
/// inter-cell interference terms are dropped (cells on disjoint frequency
/// bands).
pub fn sinr(
    h: &DMatrix<f64>,
    partition: &CellPartition,
    a: &[f64],
    precoders: &[Precoder],
    sigma2: &[f64],
    gamma_zeta: f64,
    zero_inter_ci: bool,
) -> Vec<f64> {
    let n_users = h.nrows();
    let gz2 = gamma_zeta * gamma_zeta;

    // Emitted mixing matrix of each cell: diag(a_cell) * W.
    let emitted: Vec<DMatrix<f64>> = (0..partition.num_cells())
        .map(|c| {
            let mut b = precoders[c].w.clone();
            for (t, &j) in partition.led_sets[c].iter().enumerate() {
                for i in 0..b.ncols() {
                    b[(t, i)] *= a[j];
                }
            }
            b
        })
        .collect();

    let mut xi = vec![0.0; n_users];
    for c in 0..partition.num_cells() {
        for (i_local, &u) in partition.user_clusters[c].iter().enumerate() {
            let b = &emitted[c];
            let desired: f64 = partition.led_sets[c]
                .iter()
                .enumerate()
                .map(|(t, &j)| h[(u, j)] * b[(t, i_local)])
                .sum();
            let mut interference = 0.0;
            if !zero_inter_ci {
                for other in 0..partition.num_cells() {
                    if other == c {
                        continue;
                    }
                    let bo = &emitted[other];
                    for stream in 0..bo.ncols() {
                        let v: f64 = partition.led_sets[other]
                            .iter()
                            .enumerate()
                            .map(|(t, &j)| h[(u, j)] * bo[(t, stream)])
                            .sum();
                        interference += v * v;
                    }
                }
            }
            let denom = PI_E * (gz2 / 3.0 * interference + sigma2[u]);
            xi[u] = 2.0 * gz2 * desired * desired / denom;
        }
    }
    xi
}

/// Per-user linear SINR coefficients `m_i` such that `xi_i = m_i * q_i`
/// under exact zero forcing, with the interference frozen at the current
/// precoders. These drive both solvers' closed-form updates.
pub fn sinr_coefficients(
    h: &DMatrix<f64>,
    partition: &CellPartition,
    a: &[f64],
    precoders: &[Precoder],
    sigma2: &[f64],
    gamma_zeta: f64,
    zero_inter_ci: bool,
) -> Vec<f64> {
    let gz2 = gamma_zeta * gamma_zeta;
    let n_users = h.nrows();
    let mut m = vec![0.0; n_users];
    for c in 0..partition.num_cells() {
        for &u in &partition.user_clusters[c] {
            let mut interference = 0.0;
            if !zero_inter_ci {
                for other in 0..partition.num_cells() {
                    if other == c {
                        continue;
                    }
                    let w = &precoders[other].w;
                    for stream in 0..w.ncols() {
                        let v: f64 = partition.led_sets[other]
                            .iter()
                            .enumerate()
                            .map(|(t, &j)| h[(u, j)] * a[j] * w[(t, stream)])
                            .sum();
                        interference += v * v;
                    }
                }
            }
            m[u] = 2.0 * gz2 / (PI_E * (gz2 / 3.0 * interference + sigma2[u]));
        }
    }
    m
}

/// Sum-rate in bit/s/Hz: half the log of one plus each SINR, summed.
pub fn sum_rate(xi: &[f64]) -> f64 {
    xi.iter().map(|&x| 0.5 * (1.0 + x).log2()).sum()
}

/// Bandwidth efficiency of the sum-rate under frequency reuse `n`: the
/// spectrum is split `n` ways, so each cell group gets `1/n` of it.
pub fn fr_mbe(r: f64, n: u32) -> f64 {
    r / n as f64
}

/// Everything the experiment reports about one rate evaluation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateReport {
    pub sinr: Vec<f64>,
    pub per_user_rate: Vec<f64>,
    pub sum_rate: f64,
    /// Bandwidth efficiency after the frequency-reuse split.
    pub mbe: f64,
}

impl RateReport {
    pub fn from_sinr(xi: Vec<f64>, reuse: u32) -> Self {
        let per_user_rate: Vec<f64> = xi.iter().map(|&x| 0.5 * (1.0 + x).log2()).collect();
        let r = per_user_rate.iter().sum();
        Self {
            sinr: xi,
            per_user_rate,
            sum_rate: r,
            mbe: fr_mbe(r, reuse),
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
