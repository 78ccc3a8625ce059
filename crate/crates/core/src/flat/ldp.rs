//! Non-negative least squares and least-distance programming (Lawson-Hanson
//! active-set methods).

use nalgebra::{DMatrix, DVector};

/// Solution of `min |A x - b|` subject to `x >= 0`.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
}

/// Lawson-Hanson active-set NNLS.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> NnlsSolution {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.amax().max(1.0) * b.amax().max(1.0) * (a.nrows().max(n) as f64);
    let max_outer = 3 * n + 10;
    let mut iterations = 0;
    let gradient = |x: &DVector<f64>| a.transpose() * (b - a * x);
    let mut w = gradient(&x);
    while iterations < max_outer {
        let candidate = (0..n)
            .filter(|&i| !passive[i])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
        let Some(t) = candidate.filter(|&t| w[t] > tol) else {
            break;
        };
        iterations += 1;
        passive[t] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let z_p = least_squares(&a.select_columns(&idx), b);
            if z_p.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = z_p[k];
                }
                break;
            }
            // step back towards the feasible region until a variable hits zero
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if z_p[k] <= 0.0 {
                    let denom = x[i] - z_p[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    }
                }
            }
            let alpha = if alpha.is_finite() { alpha } else { 0.0 };
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z_p[k] - x[i]);
            }
            for &i in &idx {
                if x[i] <= tol {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        w = gradient(&x);
    }
    NnlsSolution { x, iterations }
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-14)
        .expect("SVD computed with both factors")
}

/// Solution of `min 0.5 |x|^2` subject to `G x >= h`.
#[derive(Debug, Clone)]
pub struct LdpSolution {
    pub x: DVector<f64>,
    /// Lagrange multipliers, one per constraint row.
    pub lambda: DVector<f64>,
    /// Primal minus dual objective.
    pub gap: f64,
    pub iterations: usize,
}

/// Least-distance programming via the NNLS dual. When the constraints are
/// infeasible, returns `u >= 0` with `G^T u = 0` and `h.u = 1` (up to rounding),
/// a certificate whose largest entries name the conflicting rows.
pub fn least_distance(g: &DMatrix<f64>, h: &DVector<f64>) -> Result<LdpSolution, DVector<f64>> {
    let (m, n) = g.shape();
    let mut e = DMatrix::zeros(n + 1, m);
    e.view_mut((0, 0), (n, m)).copy_from(&g.transpose());
    e.row_mut(n).copy_from(&h.transpose());
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let sol = nnls(&e, &f);
    let r = &e * &sol.x - &f;
    if r.norm() <= 1e-10 || -r[n] <= 1e-12 {
        return Err(sol.x);
    }
    let scale = -r[n];
    let x = DVector::from_iterator(n, (0..n).map(|i| r[i] / scale));
    let lambda = &sol.x / scale;
    let gtl = g.transpose() * &lambda;
    let dual = h.dot(&lambda) - 0.5 * gtl.norm_squared();
    let gap = 0.5 * x.norm_squared() - dual;
    Ok(LdpSolution {
        x,
        lambda,
        gap,
        iterations: sol.iterations,
    })
}
