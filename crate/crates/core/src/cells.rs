//! User-centric amorphous cells.
//!
//! Cells are not fixed zones around luminaires; they form around the users.
//! First the users are grouped by proximity (greedy absorption around a
//! running centroid), then every line-of-sight LED is pulled into the cell
//! of a user that receives it well: one dedicated best LED per user first,
//! then every remaining LED joins the cell of its strongest receiver. A cell
//! therefore always has at least as many LEDs as users, which is what the
//! downstream zero-forcing precoder needs.

use nalgebra::DMatrix;

use crate::scenario::Point3;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Working matrix of the two-phase LED association: the gain columns of the
/// LEDs under consideration, consumed (zeroed) column by column as LEDs are
/// claimed.
#[derive(Debug, Clone)]
pub struct AssociationMatrix {
    /// users x considered-LEDs gain matrix; mutated during association.
    m: DMatrix<f64>,
    /// Global LED index of each column.
    led_indices: Vec<usize>,
}

impl AssociationMatrix {
    /// Build from the full gain matrix, keeping only the `candidates`
    /// columns that reach at least one user (the line-of-sight LEDs).
    pub fn from_gains(h: &DMatrix<f64>, candidates: &[usize]) -> Self {
        let keep: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&j| (0..h.nrows()).any(|i| h[(i, j)] > 0.0))
            .collect();
        let mut m = DMatrix::zeros(h.nrows(), keep.len());
        for (c, &j) in keep.iter().enumerate() {
            for i in 0..h.nrows() {
                m[(i, c)] = h[(i, j)];
            }
        }
        Self {
            m,
            led_indices: keep,
        }
    }

    /// Number of line-of-sight LEDs under consideration.
    pub fn num_los(&self) -> usize {
        self.led_indices.len()
    }
}

/// Assignment of users and LEDs to cells. Indices are global (into the
/// scenario's user and LED lists); index sets are sorted ascending.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CellPartition {
    pub user_clusters: Vec<Vec<usize>>,
    pub led_sets: Vec<Vec<usize>>,
    /// Horizontal centroid of each cluster's users.
    pub centroids: Vec<(f64, f64)>,
}

impl CellPartition {
    pub fn num_cells(&self) -> usize {
        self.user_clusters.len()
    }

    /// Cell index of every user, as a flat lookup table.
    pub fn cell_of_user(&self) -> Vec<usize> {
        let n = self.user_clusters.iter().map(|c| c.len()).sum();
        let mut out = vec![usize::MAX; n];
        for (c, members) in self.user_clusters.iter().enumerate() {
            for &u in members {
                out[u] = c;
            }
        }
        out
    }

    /// Panic (in tests) unless clusters partition the users, LED sets are
    /// disjoint, and every cell has at least as many LEDs as users.
    pub fn assert_consistent(&self, n_users: usize) {
        let mut seen = vec![false; n_users];
        for members in &self.user_clusters {
            for &u in members {
                assert!(!seen[u], "user {u} appears in two clusters");
                seen[u] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "some user is in no cluster");
        let mut led_seen = std::collections::HashSet::new();
        for set in &self.led_sets {
            for &j in set {
                assert!(led_seen.insert(j), "LED {j} appears in two cells");
            }
        }
        for (users, leds) in self.user_clusters.iter().zip(&self.led_sets) {
            assert!(
                leds.len() >= users.len(),
                "cell has fewer LEDs than users"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

/// Group users by proximity: seed a cluster with the first unassigned user,
/// absorb any unassigned user within `radius` of the running centroid
/// (recomputing the centroid after each absorption), and repeat the scan
/// until no user joins. Every user ends up in exactly one cluster.
pub fn cluster_users(positions: &[Point3], radius: f64) -> Vec<Vec<usize>> {
    let n = positions.len();
    let mut assigned = vec![false; n];
    let mut clusters = Vec::new();
    for seed in 0..n {
        if assigned[seed] {
            continue;
        }
        assigned[seed] = true;
        let mut members = vec![seed];
        let (mut cx, mut cy) = (positions[seed].x, positions[seed].y);
        loop {
            let mut grew = false;
            for u in 0..n {
                if assigned[u] {
                    continue;
                }
                let dx = positions[u].x - cx;
                let dy = positions[u].y - cy;
                if (dx * dx + dy * dy).sqrt() <= radius {
                    assigned[u] = true;
                    members.push(u);
                    grew = true;
                    cx = members.iter().map(|&m| positions[m].x).sum::<f64>()
                        / members.len() as f64;
                    cy = members.iter().map(|&m| positions[m].y).sum::<f64>()
                        / members.len() as f64;
                }
            }
            if !grew {
                break;
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters
}

/// Horizontal centroid of each cluster.
pub fn cluster_centroids(positions: &[Point3], clusters: &[Vec<usize>]) -> Vec<(f64, f64)> {
    clusters
        .iter()
        .map(|members| {
            let k = members.len() as f64;
            let cx = members.iter().map(|&m| positions[m].x).sum::<f64>() / k;
            let cy = members.iter().map(|&m| positions[m].y).sum::<f64>() / k;
            (cx, cy)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// LED association
// ---------------------------------------------------------------------------

/// Phase 1 of the association on a working gain matrix: each user row, in
/// ascending order, claims its strongest unclaimed column, which is then
/// zeroed. Returns the claimed (user, column) pairs, or the first user left
/// without an unclaimed line-of-sight column.
fn claim_dedicated_columns(
    m: &mut DMatrix<f64>,
) -> std::result::Result<Vec<(usize, usize)>, usize> {
    let mut claims = Vec::with_capacity(m.nrows());
    for i in 0..m.nrows() {
        let mut best: Option<usize> = None;
        let mut best_gain = 0.0;
        for c in 0..m.ncols() {
            if m[(i, c)] > best_gain {
                best_gain = m[(i, c)];
                best = Some(c);
            }
        }
        let Some(c) = best else {
            return Err(i);
        };
        claims.push((i, c));
        for r in 0..m.nrows() {
            m[(r, c)] = 0.0;
        }
    }
    Ok(claims)
}

/// Dry run of association phase 1 over the `active` LEDs: the first user
/// that cannot claim a dedicated line-of-sight LED, or None when the full
/// association is guaranteed to succeed (phase 2 cannot fail).
pub fn first_unservable_user(h: &DMatrix<f64>, active: &[usize]) -> Option<usize> {
    let AssociationMatrix { mut m, .. } = AssociationMatrix::from_gains(h, active);
    claim_dedicated_columns(&mut m).err()
}

/// Two-phase gain-based LED association.
///
/// Phase 1 walks the users in ascending index order; each claims its
/// strongest still-available LED for its cell (so every cell gets at least
/// one LED per member). Phase 2 walks the remaining LEDs in ascending index
/// order; each joins the cell of the user that receives it best. Ties break
/// toward the lowest index, so the result is deterministic.
pub fn associate_leds(
    assoc: AssociationMatrix,
    user_clusters: &[Vec<usize>],
    centroids: &[(f64, f64)],
) -> Result<CellPartition> {
    let AssociationMatrix { mut m, led_indices } = assoc;
    let n_users = m.nrows();
    let n_los = led_indices.len();

    let mut cell_of_user = vec![usize::MAX; n_users];
    for (c, members) in user_clusters.iter().enumerate() {
        for &u in members {
            cell_of_user[u] = c;
        }
    }

    let mut led_cell: Vec<Option<usize>> = vec![None; n_los];

    // Phase 1: one dedicated best LED per user.
    let claims =
        claim_dedicated_columns(&mut m).map_err(|user| Error::NoLineOfSight { user })?;
    for (i, c) in claims {
        led_cell[c] = Some(cell_of_user[i]);
    }

    // Phase 2: every remaining LED joins its strongest receiver's cell.
    for c in 0..n_los {
        if led_cell[c].is_some() {
            continue;
        }
        let mut best_user = None;
        let mut best_gain = 0.0;
        for r in 0..n_users {
            if m[(r, c)] > best_gain {
                best_gain = m[(r, c)];
                best_user = Some(r);
            }
        }
        // Construction kept only columns with a nonzero entry, and phase 1
        // zeroes exactly the columns it claims, so a receiver exists.
        let u = best_user.expect("unclaimed LED column has a nonzero gain");
        led_cell[c] = Some(cell_of_user[u]);
        for r in 0..n_users {
            m[(r, c)] = 0.0;
        }
    }
    debug_assert!(m.iter().all(|&v| v == 0.0));

    let mut led_sets = vec![Vec::new(); user_clusters.len()];
    for (c, cell) in led_cell.into_iter().enumerate() {
        led_sets[cell.expect("every LOS LED is assigned")].push(led_indices[c]);
    }
    for set in &mut led_sets {
        set.sort_unstable();
    }

    Ok(CellPartition {
        user_clusters: user_clusters.to_vec(),
        led_sets,
        centroids: centroids.to_vec(),
    })
}

/// Re-run the association over only the `active` LEDs, keeping the user
/// clusters fixed. Fails if some user no longer sees any active LED.
pub fn update_cells(
    active: &[usize],
    h: &DMatrix<f64>,
    user_clusters: &[Vec<usize>],
    centroids: &[(f64, f64)],
) -> Result<CellPartition> {
    associate_leds(
        AssociationMatrix::from_gains(h, active),
        user_clusters,
        centroids,
    )
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::gain_matrix;
    use crate::scenario::{place_users_random, Scenario};
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64) -> Point3 {
        Point3::new(x, y, 0.75)
    }

    #[test]
    fn far_users_form_singleton_clusters() {
        let c = cluster_users(&[p(-4.0, 0.0), p(6.0, 0.0)], 3.0);
        assert_eq!(c, vec![vec![0], vec![1]]);
    }

    #[test]
    fn near_users_merge_and_centroid_is_the_midpoint() {
        let pos = [p(0.0, 0.0), p(1.0, 0.0)];
        let c = cluster_users(&pos, 3.0);
        assert_eq!(c, vec![vec![0, 1]]);
        let cent = cluster_centroids(&pos, &c);
        assert_relative_eq!(cent[0].0, 0.5, epsilon = 1e-12);
        assert_relative_eq!(cent[0].1, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn moving_centroid_absorbs_chains_across_rescans() {
        // User 2 is 4 m from the seed but only 3 m from the centroid that
        // forms after user 1 joins, so a second scan picks it up.
        let pos = [p(0.0, 0.0), p(2.0, 0.0), p(4.0, 0.0)];
        assert_eq!(cluster_users(&pos, 3.0), vec![vec![0, 1, 2]]);
        // With a tighter radius the chain breaks.
        assert_eq!(cluster_users(&pos, 1.5), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn tighter_radius_never_yields_fewer_clusters() {
        let sc = Scenario::default();
        let pos = place_users_random(&sc, 16, 42);
        let wide = cluster_users(&pos, 3.0).len();
        let narrow = cluster_users(&pos, 2.5).len();
        assert!(narrow >= wide, "narrow {narrow} < wide {wide}");
    }

    #[test]
    fn single_user_takes_every_los_led() {
        let h = DMatrix::from_row_slice(1, 3, &[0.3, 0.9, 0.5]);
        let assoc = AssociationMatrix::from_gains(&h, &[0, 1, 2]);
        let part = associate_leds(assoc, &[vec![0]], &[(0.0, 0.0)]).unwrap();
        assert_eq!(part.led_sets, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn diagonal_dominant_gains_give_each_user_its_own_led() {
        let h = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let assoc = AssociationMatrix::from_gains(&h, &[0, 1]);
        let part = associate_leds(assoc, &[vec![0], vec![1]], &[(0.0, 0.0); 2]).unwrap();
        assert_eq!(part.led_sets, vec![vec![0], vec![1]]);
    }

    #[test]
    fn leftover_led_ties_break_toward_the_lowest_user_index() {
        // LED 2 is seen equally by both users; user 0 must win it.
        let h = DMatrix::from_row_slice(2, 3, &[0.9, 0.1, 0.4, 0.1, 0.8, 0.4]);
        let assoc = AssociationMatrix::from_gains(&h, &[0, 1, 2]);
        let part = associate_leds(assoc, &[vec![0], vec![1]], &[(0.0, 0.0); 2]).unwrap();
        assert_eq!(part.led_sets, vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn user_without_line_of_sight_is_an_error() {
        let h = DMatrix::from_row_slice(2, 2, &[0.9, 0.4, 0.0, 0.0]);
        let assoc = AssociationMatrix::from_gains(&h, &[0, 1]);
        let err = associate_leds(assoc, &[vec![0], vec![1]], &[(0.0, 0.0); 2]);
        assert!(matches!(err, Err(Error::NoLineOfSight { user: 1 })));
    }

    #[test]
    fn full_scenario_partition_is_consistent_and_deterministic() {
        let sc = Scenario::default();
        let leds = sc.led_positions().unwrap();
        let users = place_users_random(&sc, 16, 3);
        let h = gain_matrix(&leds, &users, &sc).unwrap();
        let clusters = cluster_users(&users, sc.cluster_radius_m);
        let centroids = cluster_centroids(&users, &clusters);
        let all: Vec<usize> = (0..leds.len()).collect();
        let a = associate_leds(
            AssociationMatrix::from_gains(&h, &all),
            &clusters,
            &centroids,
        )
        .unwrap();
        a.assert_consistent(16);
        let b = associate_leds(
            AssociationMatrix::from_gains(&h, &all),
            &clusters,
            &centroids,
        )
        .unwrap();
        assert_eq!(a, b);
        // Re-associating over "all LEDs active" reproduces the partition.
        let c = update_cells(&all, &h, &clusters, &centroids).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn partial_activation_keeps_users_covered_or_fails_loudly() {
        let sc = Scenario::default();
        let leds = sc.led_positions().unwrap();
        let users = place_users_random(&sc, 16, 5);
        let h = gain_matrix(&leds, &users, &sc).unwrap();
        let clusters = cluster_users(&users, sc.cluster_radius_m);
        let centroids = cluster_centroids(&users, &clusters);
        // Deterministic "random" 70% subset: every index not divisible by 3.
        let active: Vec<usize> = (0..leds.len()).filter(|j| j % 3 != 0).collect();
        match update_cells(&active, &h, &clusters, &centroids) {
            Ok(part) => {
                part.assert_consistent(16);
                let assigned: usize = part.led_sets.iter().map(|s| s.len()).sum();
                let los = AssociationMatrix::from_gains(&h, &active).num_los();
                assert_eq!(assigned, los);
                for set in &part.led_sets {
                    for &j in set {
                        assert!(active.contains(&j));
                    }
                }
            }
            Err(Error::NoLineOfSight { .. }) => {} // legitimate for a blind cut
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
