//! The smooth barycentric weights: maximize `sum_k ln p_k` over positive
//! convex representations `x = sum_k p_k a_k`, by damped Newton iteration on
//! the dual stationarity system
//!
//! ```text
//! F(lambda, x) = sum_k (x - a_k) / (n - (x - a_k, lambda)) = 0,
//! p_k = 1 / (n - (x - a_k, lambda)).
//! ```
//!
//! `F` is the gradient in `lambda` of the convex function
//! `-sum_k ln(n - (x - a_k, lambda))`, whose Hessian
//! `J = sum_k p_k^2 (x - a_k)(x - a_k)^T` is positive definite because the
//! vertex differences span the chart. `lambda = 0` (all weights `1/n`) is
//! always dual-feasible, so Newton with a fraction-to-boundary cap and a
//! residual line search converges from there.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Polytope;

/// Knobs for the dual Newton iteration.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Residual tolerance; `None` means `1e-12 * n`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Fraction-to-boundary factor for the dual slacks `n - (x - a_k, lambda)`.
    pub fraction_to_boundary: f64,
    /// Relative boundary distance below which a point is treated as boundary.
    pub boundary_eps: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: None,
            max_iter: 100,
            fraction_to_boundary: 0.99,
            boundary_eps: 1e-9,
        }
    }
}

impl SolverOptions {
    pub fn effective_tol(&self, n: usize) -> f64 {
        self.tol.unwrap_or(1e-12 * n as f64)
    }
}

/// Converged weights at a point, together with the dual vector
/// `lambda = grad U` and solver diagnostics.
#[derive(Debug, Clone)]
pub struct WeightSolution {
    /// Chart coordinates of the evaluation point.
    pub x: DVector<f64>,
    /// Dual vector in chart space; `grad U(x)` at interior points.
    pub lambda: DVector<f64>,
    /// The weights `p_1..p_n`, aligned with the polytope's vertex order.
    pub weights: Vec<f64>,
    /// `U(x) = sum_k ln p_k` (restricted to the active face on the boundary).
    pub barrier: f64,
    /// Final dual residual `||F(lambda, x)||`.
    pub residual: f64,
    pub iterations: usize,
    /// Indices of vertices carrying nonzero weight (all of them at interior points).
    pub support: Vec<usize>,
}

impl WeightSolution {
    pub fn min_weight(&self) -> f64 {
        self.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn dual_residual(
    diffs: &[DVector<f64>],
    n: f64,
    lambda: &DVector<f64>,
) -> Option<(DVector<f64>, Vec<f64>)> {
    let d = lambda.len();
    let mut f = DVector::zeros(d);
    let mut p = Vec::with_capacity(diffs.len());
    for diff in diffs {
        let slack = n - diff.dot(lambda);
        if slack <= 0.0 {
            return None;
        }
        let pk = 1.0 / slack;
        f += diff * pk;
        p.push(pk);
    }
    Some((f, p))
}

/// Solve for the weights at a strictly interior chart point `x`.
pub fn solve_weights(p: &Polytope, x: &DVector<f64>, opts: &SolverOptions) -> Result<WeightSolution> {
    solve_weights_from(p, x, None, opts)
}

/// Same as [`solve_weights`] but starting the Newton iteration from a given
/// dual vector instead of zero. The maximizer is unique, so any feasible
/// start converges to the same weights; tests use this to exercise that.
pub fn solve_weights_from(
    p: &Polytope,
    x: &DVector<f64>,
    lambda0: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<WeightSolution> {
    p.check_chart_dim(x)?;
    if let Some(_) = p.facets() {
        let dmin = p.min_facet_distance(x)?;
        if dmin <= opts.boundary_eps * p.scale() {
            if dmin < -crate::geometry::FACET_SLACK_TOL * p.scale() {
                return Err(Error::PointOutside(dmin));
            }
            return Err(Error::EffectivelyBoundary(dmin));
        }
    }

    let verts = p.chart_vertices();
    let n = verts.len();
    let nf = n as f64;
    let d = p.dim();
    let tol = opts.effective_tol(n);
    let diffs: Vec<DVector<f64>> = verts.iter().map(|a| x - a).collect();

    let mut lambda = match lambda0 {
        Some(l0) => {
            p.check_chart_dim(l0)?;
            l0.clone()
        }
        None => DVector::zeros(d),
    };
    let (mut f, mut pvec) = match dual_residual(&diffs, nf, &lambda) {
        Some(fp) => fp,
        None => {
            // Infeasible warm start: fall back to the always-feasible origin.
            lambda = DVector::zeros(d);
            dual_residual(&diffs, nf, &lambda).expect("lambda = 0 is feasible")
        }
    };
    let mut res = f.norm();
    let mut iterations = 0;

    while res > tol && iterations < opts.max_iter {
        // J = sum_k p_k^2 (x - a_k)(x - a_k)^T
        let mut j = DMatrix::zeros(d, d);
        for (pk, diff) in pvec.iter().zip(&diffs) {
            j.syger(pk * pk, diff, diff, 1.0);
        }
        j.fill_upper_triangle_with_lower_triangle();
        let chol = j
            .clone()
            .cholesky()
            .ok_or(Error::SingularJacobian)?;
        let delta = chol.solve(&(-&f));

        // Fraction-to-boundary: keep every dual slack above (1 - tau) of the
        // current minimum slack.
        let tau = opts.fraction_to_boundary;
        let smin = pvec.iter().cloned().fold(f64::INFINITY, |m, pk| m.min(1.0 / pk));
        let floor = (1.0 - tau) * smin;
        let mut alpha: f64 = 1.0;
        for diff in &diffs {
            let rate = diff.dot(&delta);
            if rate > 0.0 {
                let s = nf - diff.dot(&lambda);
                alpha = alpha.min((s - floor) / rate);
            }
        }
        alpha = alpha.max(0.0);

        // Backtrack on the residual norm.
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &lambda + &delta * alpha;
            if let Some((ft, pt)) = dual_residual(&diffs, nf, &trial) {
                if ft.norm() < res || alpha < 1e-12 {
                    accepted = Some((trial, ft, pt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let (trial, ft, pt) = accepted.ok_or(Error::NotConverged {
            iterations,
            residual: res,
        })?;
        lambda = trial;
        f = ft;
        pvec = pt;
        res = f.norm();
        iterations += 1;

        let pmin = pvec.iter().cloned().fold(f64::INFINITY, f64::min);
        if pmin < 1e-12 {
            return Err(Error::EffectivelyBoundary(pmin));
        }
    }

    if res > tol {
        return Err(Error::NotConverged {
            iterations,
            residual: res,
        });
    }

    let barrier = pvec.iter().map(|pk| pk.ln()).sum();
    Ok(WeightSolution {
        x: x.clone(),
        lambda,
        weights: pvec,
        barrier,
        residual: res,
        iterations,
        support: (0..n).collect(),
    })
}

/// `U(x)` at an interior point.
pub fn barrier_value(p: &Polytope, x: &DVector<f64>, opts: &SolverOptions) -> Result<f64> {
    Ok(solve_weights(p, x, opts)?.barrier)
}

/// Weights on the closed polytope: interior points delegate to
/// [`solve_weights`]; boundary points are restricted to the face cut out by
/// every active facet and solved there, off-face vertices getting weight zero.
///
/// Approaching a facet along its inward normal, the interior weights converge
/// to this face solution; that continuity is exercised in the tests.
pub fn weights_on_closure(
    p: &Polytope,
    x: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<WeightSolution> {
    p.check_chart_dim(x)?;
    let facets = match p.facets() {
        Some(f) => f,
        // Without facets we cannot classify the point; try the interior solve.
        None => return solve_weights(p, x, opts),
    };
    let scale = p.scale();
    let distances = p.facet_distances(x)?;
    let dmin = distances.iter().cloned().fold(f64::INFINITY, f64::min);
    if dmin < -crate::geometry::FACET_SLACK_TOL * scale {
        return Err(Error::PointOutside(dmin));
    }
    let edge = opts.boundary_eps * scale;
    if dmin > edge {
        return solve_weights(p, x, opts);
    }

    let active: Vec<usize> = distances
        .iter()
        .enumerate()
        .filter(|(_, &d)| d <= edge)
        .map(|(i, _)| i)
        .collect();
    let verts = p.chart_vertices();
    let tight_tol = 1e-8 * scale;
    let face: Vec<usize> = (0..verts.len())
        .filter(|&k| {
            active.iter().all(|&fi| {
                let f = &facets[fi];
                (f.offset - f.normal.dot(&verts[k])).abs() <= tight_tol
            })
        })
        .collect();
    if face.is_empty() {
        return Err(Error::Invalid(
            "no vertex lies on all active facets; facet data is inconsistent".into(),
        ));
    }

    let n = verts.len();
    if face.len() == 1 {
        // x is (numerically) a vertex: indicator weights.
        let k = face[0];
        let mut weights = vec![0.0; n];
        weights[k] = 1.0;
        return Ok(WeightSolution {
            x: x.clone(),
            lambda: DVector::zeros(p.dim()),
            weights,
            barrier: 0.0,
            residual: (x - &verts[k]).norm(),
            iterations: 0,
            support: vec![k],
        });
    }

    // Solve on the face as a polytope in its own right.
    let face_ambient: Vec<DVector<f64>> = face.iter().map(|&k| p.vertices()[k].clone()).collect();
    let sub = crate::geometry::build_polytope(&face_ambient, None, "face")?;
    let ambient_x = p.to_ambient(x);
    let y = sub.to_chart(&ambient_x);
    let sub_sol = solve_weights(&sub, &y, opts)?;

    let mut weights = vec![0.0; n];
    for (slot, &k) in face.iter().enumerate() {
        weights[k] = sub_sol.weights[slot];
    }
    // Lift the face dual vector back into the full chart.
    let lambda = p.chart().basis.transpose() * (&sub.chart().basis * &sub_sol.lambda);
    Ok(WeightSolution {
        x: x.clone(),
        lambda,
        weights,
        barrier: sub_sol.barrier,
        residual: sub_sol.residual,
        iterations: sub_sol.iterations,
        support: face,
    })
}

/// Independent per-point solves; errors are collected, not fail-fast.
pub fn batch_solve(
    p: &Polytope,
    points: &[DVector<f64>],
    opts: &SolverOptions,
) -> Vec<Result<WeightSolution>> {
    points.iter().map(|x| solve_weights(p, x, opts)).collect()
}
