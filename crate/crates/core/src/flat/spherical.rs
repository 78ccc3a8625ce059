use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::ldp::least_distance;
use super::{finalize, pair_order, FlatError, FlatResult, Geometry, SolverDiagnostics, SolverMode};
use crate::types::{MomentTable, Moments, SubPopId};

/// FLAT with spherical covariances `sigma_ij^2 I`.
///
/// With spherical noise every pair ratio is `w.Delta_jk / ((sigma_0j +
/// sigma_1k) |w|)`, so maximising `F` is the min-norm point of the polyhedron
/// `{w : w.Delta_jk >= sigma_0j + sigma_1k for all pairs}` and
/// `F(w*) = 1 / |w*|`. The covariances stored in `table` are ignored.
pub fn solve_flat_spherical(table: &MomentTable, sigma: &BTreeMap<SubPopId, f64>) -> Result<FlatResult, FlatError> {
    table.ensure_valid()?;
    let p = table.p();
    let d = table.d();
    let mut sigmas = [vec![0.0; p], vec![0.0; p]];
    for id in SubPopId::all(p) {
        let s = *sigma.get(&id).ok_or(FlatError::MissingSigma(id))?;
        if !(s.is_finite() && s >= 0.0) {
            return Err(FlatError::InvalidSigma(id));
        }
        sigmas[id.label as usize][id.group - 1] = s;
    }
    let spherical = MomentTable::with_entries(
        p,
        d,
        table.entries().map(|(id, m)| {
            let s = sigmas[id.label as usize][id.group - 1];
            (id, Moments::spherical(m.count, m.mean.clone(), s * s))
        }),
    );
    let geo = Geometry::new(&spherical)?;

    let pairs: Vec<(usize, usize)> = pair_order(p).collect();
    let degenerate = pairs.iter().all(|&(j, k)| sigmas[0][j] + sigmas[1][k] == 0.0);
    let mut g = DMatrix::zeros(pairs.len(), d);
    let mut h = DVector::zeros(pairs.len());
    for (row, &(j, k)) in pairs.iter().enumerate() {
        let delta = geo.delta(j, k);
        let spread = sigmas[0][j] + sigmas[1][k];
        if delta.iter().all(|&v| v == 0.0) && (spread > 0.0 || degenerate) {
            return Err(FlatError::NonSeparable {
                neg_group: j + 1,
                pos_group: k + 1,
            });
        }
        g.row_mut(row).copy_from(&delta.transpose());
        // with no noise anywhere, ask for unit margin: the max-margin direction
        h[row] = if degenerate { 1.0 } else { spread };
    }

    let sol = least_distance(&g, &h).map_err(|cert| {
        let row = cert.iamax();
        let (j, k) = pairs[row];
        FlatError::NonSeparable {
            neg_group: j + 1,
            pos_group: k + 1,
        }
    })?;
    let mut w = sol.x;
    // remove rounding-level violations by scaling outward (the feasible set
    // is a cone shifted away from the origin, so this stays feasible)
    let mut scale = 1.0_f64;
    for row in 0..pairs.len() {
        let lhs = g.row(row).transpose().dot(&w);
        if h[row] > 0.0 && lhs > 0.0 {
            scale = scale.max(h[row] / lhs);
        }
    }
    w *= scale;
    let lam_max = sol.lambda.amax();
    let active_constraints = sol.lambda.iter().filter(|&&l| l > 1e-12 * lam_max).count();
    let diagnostics = SolverDiagnostics {
        iterations: sol.iterations,
        inner_steps: 0,
        final_gap: sol.gap.abs(),
        mode: if degenerate {
            SolverMode::Degenerate
        } else {
            SolverMode::Spherical
        },
        active_constraints,
    };
    Ok(finalize(&geo, &w, diagnostics))
}

/// Spherical FLAT on a full-covariance table, using
/// `sigma_ij = sqrt(trace(Sigma_ij) / d)` for each sub-population.
pub fn solve_flat1(table: &MomentTable) -> Result<FlatResult, FlatError> {
    table.ensure_valid()?;
    let sigma = table.entries().map(|(id, m)| (id, m.mean_variance().sqrt())).collect();
    solve_flat_spherical(table, &sigma)
}

#[cfg(test)]
mod tests {
    use super::super::tests::symmetric_table;
    use super::super::{grid_oracle_2d, pair_kappa};
    use super::*;
    use crate::normal::normal_sf;
    use approx::assert_abs_diff_eq;

    fn sigma_map(p: usize, v: &[f64]) -> BTreeMap<SubPopId, f64> {
        SubPopId::all(p).zip(v.iter().copied()).collect()
    }

    #[test]
    fn symmetric_case() {
        let r = solve_flat1(&symmetric_table()).unwrap();
        assert_abs_diff_eq!(r.w_star[1], 0.0, epsilon = 1e-12);
        assert!(r.w_star[0] > 0.0);
        assert_abs_diff_eq!(r.kappa_star, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.r_star, normal_sf(1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(r.b_star / r.w_star[0], 1.0, epsilon = 1e-12);
        assert_eq!(r.diagnostics.mode, SolverMode::Spherical);
        assert_eq!(r.diagnostics.active_constraints, 1);
    }

    fn two_group_table(means: [[f64; 2]; 4]) -> MomentTable {
        let mut t = MomentTable::new(2, 2);
        for (id, m) in SubPopId::all(2).zip(means) {
            t.insert(id, Moments::spherical(1, DVector::from_vec(m.to_vec()), 1.0));
        }
        t
    }

    #[test]
    fn single_active_constraint_is_projection() {
        // group 2 is far better separated than group 1, and cross pairs are
        // slack too
        let t = two_group_table([[0.0, 0.0], [-10.0, 0.0], [2.0, 0.0], [12.0, 0.0]]);
        let r = solve_flat_spherical(&t, &sigma_map(2, &[1.0; 4])).unwrap();
        // Delta (2, 0), sigma sum 2: w = Delta * 2 / |Delta|^2 = (1, 0)
        assert_abs_diff_eq!(r.w_star[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.w_star[1], 0.0, epsilon = 1e-12);
        assert_eq!(r.diagnostics.active_constraints, 1);
        assert_eq!((r.j_star, r.k_star), (1, 1));
    }

    #[test]
    fn matches_angle_sweep() {
        let t = two_group_table([[0.0, -2.5], [5.0, 3.0], [0.0, 3.0], [2.0, 5.0]]);
        let r = solve_flat1(&t).unwrap();
        let sweep = grid_oracle_2d(&t, 200_000).unwrap();
        assert_abs_diff_eq!(r.kappa_star, sweep.kappa, epsilon = 1e-3);
        assert!(r.kappa_star >= sweep.kappa - 1e-12);
        assert_abs_diff_eq!(
            r.kappa_star,
            1.0 / DVector::from_vec(r.w_star.clone()).norm(),
            epsilon = 1e-9
        );
        assert!(r.diagnostics.final_gap <= 1e-9);
        assert_abs_diff_eq!(pair_kappa(&r.w_star, &t).unwrap().kappa, r.kappa_star, epsilon = 0.0);
    }

    #[test]
    fn non_separable_and_degenerate() {
        let t = two_group_table([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]);
        assert!(matches!(
            solve_flat1(&t),
            Err(FlatError::NonSeparable {
                neg_group: 1,
                pos_group: 1
            })
        ));
        // group 2 positives sit on the negative side of group 1 negatives
        let t = two_group_table([[0.0, 0.0], [5.0, 0.0], [6.0, 0.0], [-1.0, 0.0]]);
        assert!(matches!(solve_flat1(&t), Err(FlatError::NonSeparable { .. })));

        let t = two_group_table([[0.0, 0.0], [0.0, 1.0], [2.0, 0.0], [2.0, 1.0]]);
        let r = solve_flat_spherical(&t, &sigma_map(2, &[0.0; 4])).unwrap();
        assert_eq!(r.diagnostics.mode, SolverMode::Degenerate);
        assert_eq!(r.r_star, 0.0);
        assert!(matches!(
            solve_flat_spherical(&t, &BTreeMap::new()),
            Err(FlatError::MissingSigma(_))
        ));
    }
}
