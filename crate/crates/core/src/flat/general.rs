//! FLAT with full covariances: bisection on the level `kappa` of the
//! quasi-concave objective `F`, testing each level with a convex program.
//!
//! Level `kappa` is attainable iff some `w` has
//! `g_i(w) = w.Delta_i - kappa (|S_0j w| + |S_1k w|) > 0` for every pair `i`.
//! Each `g_i` is concave, so `delta(kappa) = max_{|w| <= 1} min_i g_i(w)` is a
//! convex problem. It is solved in epigraph form (maximise `t` subject to
//! `g_i(w) >= t`) with a log-barrier Newton method on an affine slice of the
//! cone of directions; see [`Slice`].

use nalgebra::{DMatrix, DVector};

use super::spherical::solve_flat_spherical;
use super::{finalize, pair_order, FlatError, FlatResult, Geometry, SolverDiagnostics, SolverMode};
use crate::types::{MomentTable, SubPopId};

/// Feasibility threshold on `delta`.
const FEASIBLE_MARGIN: f64 = 1e-10;
/// Upper end of the bracket search.
const KAPPA_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralOptions {
    /// Stop when the bisection bracket is at most this wide.
    pub tol_kappa: f64,
    /// Maximum number of bisection steps.
    pub max_bisection: usize,
    /// Newton-step budget for each feasibility problem.
    pub feasibility_iters: usize,
}

impl Default for GeneralOptions {
    fn default() -> Self {
        Self {
            tol_kappa: 1e-6,
            max_bisection: 100,
            feasibility_iters: 2000,
        }
    }
}

struct Pair {
    delta: DVector<f64>,
    cov: [DMatrix<f64>; 2],
}

/// `|S w|` with gradient and Hessian, for `Sigma = S^2`.
fn norm_terms(cov: &DMatrix<f64>, w: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let sw = cov * w;
    let n = w.dot(&sw).max(0.0).sqrt();
    let d = w.len();
    if n == 0.0 {
        return (0.0, DVector::zeros(d), DMatrix::zeros(d, d));
    }
    let grad = &sw / n;
    let hess = (cov - &sw * sw.transpose() / (n * n)) / n;
    (n, grad, hess)
}

/// Margins are positively homogeneous, so the search runs on the slice
/// `c.w = 1` with `c = sum_i Delta_i / |Delta_i|`. Every direction with all
/// `w.Delta_i > 0` meets the slice, and `w = 0`, where the norms are not
/// differentiable, is excluded. A loose ball `|w| <= radius` keeps the slice
/// bounded when covariances are singular.
struct Slice {
    /// Point of the slice closest to the origin.
    base: DVector<f64>,
    /// Orthonormal basis of `c^perp`, `d x (d - 1)`.
    basis: DMatrix<f64>,
    c_norm: f64,
    radius_sq: f64,
}

impl Slice {
    fn new(c: &DVector<f64>) -> Self {
        let d = c.len();
        let c_norm = c.norm();
        let unit = c / c_norm;
        // complete `unit` to an orthonormal basis
        let mut basis = DMatrix::zeros(d, d.saturating_sub(1));
        let mut found = 0;
        for e in 0..d {
            if found + 1 == d {
                break;
            }
            let mut v = DVector::zeros(d);
            v[e] = 1.0;
            v -= &unit * unit[e];
            for k in 0..found {
                let b = basis.column(k).clone_owned();
                v -= &b * b.dot(&v);
            }
            let n = v.norm();
            if n > 1e-8 {
                basis.set_column(found, &(v / n));
                found += 1;
            }
        }
        let base = &unit / c_norm;
        Self {
            radius_sq: 1e8 * base.norm_squared(),
            base,
            basis,
            c_norm,
        }
    }

    fn point(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.base + &self.basis * y
    }

    /// Coordinates of the slice point on the ray through `w` (`c.w > 0`).
    fn coords(&self, w: &DVector<f64>) -> DVector<f64> {
        let on_slice = w / (w.dot(&self.base) * self.c_norm * self.c_norm);
        self.basis.transpose() * on_slice
    }
}

struct Problem<'a> {
    pairs: &'a [Pair],
    kappa: f64,
    slice: &'a Slice,
}

impl Problem<'_> {
    fn margins(&self, w: &DVector<f64>) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|pr| {
                let n0 = w.dot(&(&pr.cov[0] * w)).max(0.0).sqrt();
                let n1 = w.dot(&(&pr.cov[1] * w)).max(0.0).sqrt();
                w.dot(&pr.delta) - self.kappa * (n0 + n1)
            })
            .collect()
    }

    fn min_margin(&self, w: &DVector<f64>) -> f64 {
        self.margins(w).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Barrier objective at slice coordinates `y`, or `None` outside its
    /// domain.
    fn barrier(&self, y: &DVector<f64>, t: f64, s: f64) -> Option<f64> {
        let w = self.slice.point(y);
        let room = self.slice.radius_sq - w.norm_squared();
        if room <= 0.0 {
            return None;
        }
        let mut v = -s * t - room.ln();
        for g in self.margins(&w) {
            let a = g - t;
            if a <= 0.0 {
                return None;
            }
            v -= a.ln();
        }
        Some(v)
    }

    /// Gradient and Hessian of the barrier objective in `(y, t)`.
    fn derivatives(&self, y: &DVector<f64>, t: f64, s: f64) -> (DVector<f64>, DMatrix<f64>) {
        let w = self.slice.point(y);
        let d = w.len();
        // derivatives in (w, t) first, then restricted to the slice
        let mut grad = DVector::zeros(d + 1);
        let mut hess = DMatrix::zeros(d + 1, d + 1);
        for pr in self.pairs {
            let (n0, g0, h0) = norm_terms(&pr.cov[0], &w);
            let (n1, g1, h1) = norm_terms(&pr.cov[1], &w);
            let a = w.dot(&pr.delta) - self.kappa * (n0 + n1) - t;
            let dg = &pr.delta - (g0 + g1) * self.kappa;
            // v = (dg, -1); -log(a) contributes -v/a and v v^T / a^2 - hess(g) / a
            let mut v = DVector::zeros(d + 1);
            v.rows_mut(0, d).copy_from(&dg);
            v[d] = -1.0;
            grad -= &v / a;
            hess += &v * v.transpose() / (a * a);
            let mut block = hess.view_mut((0, 0), (d, d));
            block += (h0 + h1) * (self.kappa / a);
        }
        let r = self.slice.radius_sq - w.norm_squared();
        {
            let mut gw = grad.rows_mut(0, d);
            gw += &w * (2.0 / r);
        }
        {
            let mut block = hess.view_mut((0, 0), (d, d));
            block += DMatrix::identity(d, d) * (2.0 / r) + &w * w.transpose() * (4.0 / (r * r));
        }
        grad[d] -= s;

        // chain rule through w = base + basis y
        let m = d - 1;
        let mut jac = DMatrix::zeros(d + 1, m + 1);
        jac.view_mut((0, 0), (d, m)).copy_from(&self.slice.basis);
        jac[(d, m)] = 1.0;
        (jac.transpose() * grad, jac.transpose() * hess * jac)
    }
}

fn newton_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> DVector<f64> {
    let mut damping = 0.0;
    let scale = hess.diagonal().amax().max(1e-300);
    loop {
        let h = if damping > 0.0 {
            hess + DMatrix::identity(hess.nrows(), hess.ncols()) * damping
        } else {
            hess.clone()
        };
        if let Some(ch) = h.cholesky() {
            return -ch.solve(grad);
        }
        damping = if damping == 0.0 { 1e-14 * scale } else { damping * 10.0 };
    }
}

struct Feasibility {
    feasible: bool,
    w: DVector<f64>,
    steps: usize,
}

/// Decides whether `delta(kappa) > FEASIBLE_MARGIN`, starting from `start`
/// (which must satisfy `c.start > 0`).
///
/// Feasible means a unit `w` with every margin above the threshold was found.
/// Infeasible means the barrier's duality gap proves
/// `max_{c.w = 1} min_i g_i(w) <= FEASIBLE_MARGIN / |c|`, which bounds the
/// unit-ball value by `FEASIBLE_MARGIN` since `c.w <= |c|` there.
fn feasibility(pairs: &[Pair], slice: &Slice, kappa: f64, start: &DVector<f64>, budget: usize) -> Feasibility {
    let prob = Problem { pairs, kappa, slice };
    let unit_margin = |w: &DVector<f64>| prob.min_margin(w) / w.norm();
    let m = pairs.len() as f64 + 1.0;
    let mut y = slice.coords(start);
    let mut w = slice.point(&y);
    let g0 = prob.min_margin(&w);
    if unit_margin(&w) > FEASIBLE_MARGIN {
        return Feasibility {
            feasible: true,
            w,
            steps: 0,
        };
    }
    let scale = pairs.iter().map(|pr| pr.delta.norm()).fold(1.0, f64::max) * (1.0 + kappa) * w.norm();
    let threshold = FEASIBLE_MARGIN / slice.c_norm;
    let mut t = g0 - scale;
    let mut s = m / scale;
    let mut steps = 0;
    let n = y.len();
    loop {
        // centre for the current s
        for _ in 0..100 {
            if steps >= budget {
                return Feasibility {
                    feasible: false,
                    w,
                    steps,
                };
            }
            let (grad, hess) = prob.derivatives(&y, t, s);
            let dir = newton_direction(&grad, &hess);
            let decrement = -grad.dot(&dir);
            if decrement.is_nan() || decrement <= 1e-14 {
                break;
            }
            steps += 1;
            let f0 = prob.barrier(&y, t, s).expect("iterate inside the domain");
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..80 {
                let yn = &y + dir.rows(0, n) * alpha;
                let tn = t + dir[n] * alpha;
                if let Some(f) = prob.barrier(&yn, tn, s) {
                    if f <= f0 - 0.25 * alpha * decrement {
                        y = yn;
                        t = tn;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            w = slice.point(&y);
            if unit_margin(&w) > FEASIBLE_MARGIN {
                return Feasibility {
                    feasible: true,
                    w,
                    steps,
                };
            }
            if !moved || decrement < 1e-10 {
                break;
            }
        }
        let gap = m / s;
        if t + gap <= threshold || gap < 1e-15 * scale {
            return Feasibility {
                feasible: false,
                w,
                steps,
            };
        }
        s *= 10.0;
    }
}

/// FLAT with full covariances via bisection on `kappa`.
pub fn solve_flat_general(table: &MomentTable, opts: GeneralOptions) -> Result<FlatResult, FlatError> {
    if !(opts.tol_kappa > 0.0 && opts.tol_kappa.is_finite()) {
        return Err(FlatError::InvalidOption("tol_kappa must be positive"));
    }
    let geo = Geometry::new(table)?;
    let p = geo.p;
    let order: Vec<(usize, usize)> = pair_order(p).collect();
    for &(j, k) in &order {
        if geo.delta(j, k).iter().all(|&v| v == 0.0) {
            return Err(FlatError::NonSeparable {
                neg_group: j + 1,
                pos_group: k + 1,
            });
        }
    }
    if geo.sqrt.iter().flatten().all(|s| s.iter().all(|&v| v == 0.0)) {
        let zero = SubPopId::all(p).map(|id| (id, 0.0)).collect();
        return solve_flat_spherical(table, &zero);
    }
    let cov: [Vec<DMatrix<f64>>; 2] = [0, 1].map(|l| geo.sqrt[l].iter().map(|s| s * s).collect());
    let pairs: Vec<Pair> = order
        .iter()
        .map(|&(j, k)| Pair {
            delta: geo.delta(j, k),
            cov: [cov[0][j].clone(), cov[1][k].clone()],
        })
        .collect();

    let mut start = DVector::zeros(geo.d);
    for pr in &pairs {
        start += &pr.delta / pr.delta.norm();
    }
    // a vanishing (or cancelling) sum means no direction has every
    // `w.Delta_i > 0`
    if start.norm() <= 1e-12 * pairs.len() as f64 {
        let (_, j, k) = geo.min_pair(&pairs[0].delta);
        return Err(FlatError::NonSeparable {
            neg_group: j + 1,
            pos_group: k + 1,
        });
    }
    let slice = Slice::new(&start);
    let objective = |w: &DVector<f64>| geo.min_pair(w).0;

    let mut inner_steps = 0;
    let mut witness: Option<DVector<f64>> = None;
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    let mut kappa = 1.0;
    let mut iterations = 0;
    loop {
        let warm = witness.as_ref().unwrap_or(&start);
        let f = feasibility(&pairs, &slice, kappa, warm, opts.feasibility_iters);
        inner_steps += f.steps;
        iterations += 1;
        if f.feasible {
            lo = lo.max(kappa).max(objective(&f.w));
            witness = Some(f.w);
            if lo >= KAPPA_CAP {
                break;
            }
            kappa = (2.0 * kappa).max(lo * 1.5).min(KAPPA_CAP);
        } else {
            hi = kappa;
            break;
        }
    }
    let mut bisections = 0;
    while hi.is_finite() && hi - lo > opts.tol_kappa {
        if bisections >= opts.max_bisection {
            return Err(FlatError::SolverBudgetExceeded { bisections, lo, hi });
        }
        bisections += 1;
        let mid = 0.5 * (lo + hi);
        let warm = witness.as_ref().unwrap_or(&start);
        let f = feasibility(&pairs, &slice, mid, warm, opts.feasibility_iters);
        inner_steps += f.steps;
        if f.feasible {
            lo = mid.max(objective(&f.w));
            witness = Some(f.w);
        } else {
            hi = mid;
        }
    }
    iterations += bisections;
    let w = match witness {
        Some(w) if lo > opts.tol_kappa => w,
        other => {
            let probe = other.unwrap_or(start);
            let (_, j, k) = geo.min_pair(&probe);
            return Err(FlatError::NonSeparable {
                neg_group: j + 1,
                pos_group: k + 1,
            });
        }
    };
    let w = &w / w.norm();
    let diagnostics = SolverDiagnostics {
        iterations,
        inner_steps,
        final_gap: if hi.is_finite() { (hi - lo).max(0.0) } else { 0.0 },
        mode: SolverMode::General,
        active_constraints: 0,
    };
    Ok(finalize(&geo, &w, diagnostics))
}
