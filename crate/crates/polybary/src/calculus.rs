//! First and second derivatives of the barrier `U` and the weights `p_k`
//! via implicit differentiation of the dual system, plus checks for the
//! derivative identities and boundary bounds the weights satisfy.
//!
//! With `J = sum_k p_k^2 (x - a_k)(x - a_k)^T` and
//! `w = sum_k p_k^2 (x - a_k)`, differentiating `F(lambda(x), x) = 0` gives
//!
//! ```text
//! D lambda = hess U = -J^{-1} (I + w lambda^T),
//! grad p_k = p_k^2 (lambda + hess U (x - a_k)).
//! ```
//!
//! Everything here is analytic; finite differences appear only as test
//! oracles, since their conditioning degrades near the boundary first.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Polytope;
use crate::solver::{weights_on_closure, SolverOptions, WeightSolution};

/// Analytic weight gradients and barrier Hessian at an interior point.
#[derive(Debug, Clone)]
pub struct WeightDerivatives {
    /// Row `k` is `grad p_k` in chart coordinates (n x d).
    pub grad_p: DMatrix<f64>,
    /// `D^2 U(x) = D lambda(x)`, symmetrized; negative definite.
    pub hess_u: DMatrix<f64>,
    /// Asymmetry `||H - H^T||` of the raw Hessian before symmetrization.
    pub asymmetry: f64,
    /// The solution being differentiated.
    pub base: WeightSolution,
}

impl WeightDerivatives {
    /// Directional derivative `p_{k(xi)}`.
    pub fn weight_derivative(&self, k: usize, xi: &DVector<f64>) -> f64 {
        self.grad_p.row(k).transpose().dot(xi)
    }

    /// `U_{(xi)(eta)} = xi^T (hess U) eta`.
    pub fn barrier_second(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> f64 {
        (xi.transpose() * &self.hess_u * eta)[0]
    }
}

/// Implicitly differentiate the converged dual system at `sol`.
pub fn differentiate(p: &Polytope, sol: &WeightSolution) -> Result<WeightDerivatives> {
    let verts = p.chart_vertices();
    let n = verts.len();
    let d = p.dim();
    if sol.support.len() != n {
        return Err(Error::Invalid(
            "cannot differentiate a boundary (face-restricted) solution".into(),
        ));
    }
    let x = &sol.x;
    let diffs: Vec<DVector<f64>> = verts.iter().map(|a| x - a).collect();

    let mut j = DMatrix::zeros(d, d);
    let mut w = DVector::zeros(d);
    for (pk, diff) in sol.weights.iter().zip(&diffs) {
        let p2 = pk * pk;
        j.syger(p2, diff, diff, 1.0);
        w += diff * p2;
    }
    j.fill_upper_triangle_with_lower_triangle();
    let chol = j.cholesky().ok_or(Error::SingularJacobian)?;

    // dF/dx = I + w lambda^T (using sum_k p_k = 1).
    let mut dfdx = DMatrix::identity(d, d);
    dfdx += &w * sol.lambda.transpose();
    let mut hess = -chol.solve(&dfdx);
    let asymmetry = (&hess - hess.transpose()).norm();
    hess = (&hess + hess.transpose()) * 0.5;

    let mut grad_p = DMatrix::zeros(n, d);
    for (k, diff) in diffs.iter().enumerate() {
        let pk2 = sol.weights[k] * sol.weights[k];
        let row = (&sol.lambda + &hess * diff) * pk2;
        grad_p.set_row(k, &row.transpose());
    }

    Ok(WeightDerivatives {
        grad_p,
        hess_u: hess,
        asymmetry,
        base: sol.clone(),
    })
}

/// An arbitrary affine representation `x = sum_k q_k a_k`, `sum_k q_k = 1`;
/// the coefficients need not be nonnegative.
#[derive(Debug, Clone)]
pub struct RepresentationCoefficients {
    pub q: Vec<f64>,
}

impl RepresentationCoefficients {
    pub fn validate(&self, p: &Polytope, x: &DVector<f64>) -> Result<()> {
        if self.q.len() != p.num_vertices() {
            return Err(Error::BadRepresentation(format!(
                "expected {} coefficients, got {}",
                p.num_vertices(),
                self.q.len()
            )));
        }
        let sum: f64 = self.q.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::BadRepresentation(format!(
                "coefficients sum to {sum}, not 1"
            )));
        }
        let mut recon = DVector::zeros(p.dim());
        for (qk, v) in self.q.iter().zip(p.chart_vertices()) {
            recon += v * *qk;
        }
        let err = (recon - x).norm();
        if err > 1e-10 * (1.0 + x.norm()) {
            return Err(Error::BadRepresentation(format!(
                "reconstruction error {err:.3e}"
            )));
        }
        Ok(())
    }
}

/// Outcome of a single identity or bound check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    /// Worst relative error (identities) or worst negative slack (bounds).
    pub worst: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckReport {
    pub(crate) fn identity(name: &str, worst: f64, tol: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            worst,
            tol,
            pass: worst <= tol,
        }
    }

    pub(crate) fn bound(name: &str, min_slack: f64, margin: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            worst: min_slack,
            tol: -margin,
            pass: min_slack >= -margin,
        }
    }
}

/// Chart basis vectors plus `extra` seeded random unit vectors.
pub fn probe_directions(d: usize, seed: u64, extra: usize) -> Vec<DVector<f64>> {
    let mut probes: Vec<DVector<f64>> = (0..d)
        .map(|i| {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            e
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while probes.len() < d + extra {
        let v = DVector::from_fn(d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let norm = v.norm();
        if norm > 1e-3 {
            probes.push(v / norm);
        }
    }
    probes
}

fn rel_err(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0)
}

/// `U_{(xi)(xi)} = -sum_k p_{k(xi)}^2 / p_k^2` over a set of probe directions.
pub fn check_hessian_identity(der: &WeightDerivatives, seed: u64) -> CheckReport {
    let d = der.hess_u.nrows();
    let mut worst: f64 = 0.0;
    for xi in probe_directions(d, seed, 8) {
        let quad = der.barrier_second(&xi, &xi);
        let sum: f64 = der
            .base
            .weights
            .iter()
            .enumerate()
            .map(|(k, pk)| {
                let g = der.weight_derivative(k, &xi);
                g * g / (pk * pk)
            })
            .sum();
        worst = worst.max(rel_err(quad, -sum));
    }
    CheckReport::identity("hessian_weight_identity", worst, 1e-7)
}

/// `sum_k q_k / p_k = n` for any affine representation `q` of `x`.
pub fn check_representation_identity(
    p: &Polytope,
    sol: &WeightSolution,
    q: &RepresentationCoefficients,
) -> Result<CheckReport> {
    q.validate(p, &sol.x)?;
    let n = p.num_vertices() as f64;
    let sum: f64 = q
        .q
        .iter()
        .zip(&sol.weights)
        .map(|(qk, pk)| qk / pk)
        .sum();
    Ok(CheckReport::identity(
        "representation_identity",
        (sum - n).abs(),
        1e-7 * n,
    ))
}

/// A unit vector `q` with `sum q_k = 0` and `sum q_k a_k = 0`: a null
/// direction of the affine representation constraints. `None` when the
/// vertices are affinely independent (e.g. simplices), where the
/// representation of a point is unique.
pub fn affine_null_vector(p: &Polytope) -> Option<Vec<f64>> {
    let n = p.num_vertices();
    let d = p.dim();
    if n <= d + 1 {
        return None;
    }
    let mut m = DMatrix::zeros(d + 1, n);
    for (k, a) in p.chart_vertices().iter().enumerate() {
        for i in 0..d {
            m[(i, k)] = a[i];
        }
        m[(d, k)] = 1.0;
    }
    let gram = m.transpose() * &m;
    let gram_norm = gram.norm();
    let eig = gram.symmetric_eigen();
    let (imin, &lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    if lam > 1e-16 * (1.0 + gram_norm) * n as f64 {
        return None;
    }
    Some(eig.eigenvectors.column(imin).iter().cloned().collect())
}

/// All the gradient and Hessian bounds, evaluated over probe directions.
#[derive(Debug, Clone, Serialize)]
pub struct GradientBoundsReport {
    /// Empirical best constant in the facet-distance gradient bound:
    /// max over probes and k of (|p_{k(xi)}| / p_k^{1/2}) / max_F |(n_F, xi)| / d_F^{1/2}.
    /// Only finiteness is guaranteed; no fixed numeric bound is available.
    pub facet_ratio_constant: f64,
    /// Slack of |p_{k(xi)}|/p_k <= sqrt(n + 4n^2) |xi| / (d(x,xi) ^ d(x,-xi)).
    pub log_gradient: CheckReport,
    /// Slack of U_{(xi)(xi)} >= -(n + 4n^2) |xi|^2 / (d(x,xi) ^ d(x,-xi))^2.
    pub hessian_lower: CheckReport,
    /// Slack of |p_{k(a_k - x)}| <= sqrt(n + 1).
    pub vertex_direction: CheckReport,
    /// Slack of sum_k p_{k(xi)}^2/p_k^2 <= (n+1) sum_k q_k^2/p_k^2.
    pub quadratic_comparison: CheckReport,
    /// Slack of |p_{k(x - a_j)}| <= sqrt(n+1) p_k / p_j.
    pub cross_bound: CheckReport,
    pub pass: bool,
}

pub fn check_gradient_bounds(
    p: &Polytope,
    der: &WeightDerivatives,
    seed: u64,
) -> Result<GradientBoundsReport> {
    p.require_facets()?;
    let sol = &der.base;
    let x = &sol.x;
    let n = p.num_vertices();
    let nf = n as f64;
    let d = p.dim();
    let big_n = (nf + 4.0 * nf * nf).sqrt();
    let facets = p.facets().unwrap();
    let distances = p.facet_distances(x)?;
    let verts = p.chart_vertices();

    let mut ratio_const: f64 = 0.0;
    let mut log_grad_slack = f64::INFINITY;
    let mut hess_slack = f64::INFINITY;
    let mut quad_slack = f64::INFINITY;

    for xi in probe_directions(d, seed, 8) {
        let rhs_facet = facets
            .iter()
            .zip(&distances)
            .map(|(f, df)| f.normal.dot(&xi).abs() / df.max(1e-300).sqrt())
            .fold(0.0, f64::max);
        let exit_fwd = p.ray_exit_distance(x, &xi)?.distance;
        let exit_bwd = p.ray_exit_distance(x, &(-&xi))?.distance;
        let dmin = exit_fwd.min(exit_bwd).max(1e-300);

        for (k, pk) in sol.weights.iter().enumerate() {
            let g = der.weight_derivative(k, &xi).abs();
            ratio_const = ratio_const.max(g / pk.sqrt() / rhs_facet.max(1e-300));
            log_grad_slack = log_grad_slack.min(big_n * xi.norm() / dmin - g / pk);
        }
        let quad = der.barrier_second(&xi, &xi);
        let bound = (nf + 4.0 * nf * nf) * xi.norm_squared() / (dmin * dmin);
        hess_slack = hess_slack.min((quad + bound) / bound.max(1.0));

        // Quadratic comparison with the minimum-norm q solving sum q_k (a_k - x) = xi.
        let mut m = DMatrix::zeros(d, n);
        for (k, a) in verts.iter().enumerate() {
            m.set_column(k, &(a - x));
        }
        let svd = m.svd(true, true);
        let q = svd
            .solve(&xi, 1e-12)
            .map_err(|e| Error::Invalid(e.to_string()))?;
        let lhs: f64 = sol
            .weights
            .iter()
            .enumerate()
            .map(|(k, pk)| {
                let g = der.weight_derivative(k, &xi);
                g * g / (pk * pk)
            })
            .sum();
        let rhs: f64 = (nf + 1.0)
            * sol
                .weights
                .iter()
                .enumerate()
                .map(|(k, pk)| q[k] * q[k] / (pk * pk))
                .sum::<f64>();
        quad_slack = quad_slack.min((rhs - lhs) / rhs.abs().max(1.0));
    }

    let mut vertex_slack = f64::INFINITY;
    let mut cross_slack = f64::INFINITY;
    let sqrt_np1 = (nf + 1.0).sqrt();
    for (k, pk) in sol.weights.iter().enumerate() {
        let toward = &verts[k] - x;
        vertex_slack = vertex_slack.min(sqrt_np1 - der.weight_derivative(k, &toward).abs());
        for (jv, pj) in sol.weights.iter().enumerate() {
            let from_j = x - &verts[jv];
            let bound = sqrt_np1 * pk / pj;
            let slack = bound - der.weight_derivative(k, &from_j).abs();
            cross_slack = cross_slack.min(slack / bound.max(1.0));
        }
    }

    let log_gradient = CheckReport::bound("log_gradient_bound", log_grad_slack, 1e-8);
    let hessian_lower = CheckReport::bound("hessian_lower_bound", hess_slack, 1e-8);
    let vertex_direction = CheckReport::bound("vertex_direction_bound", vertex_slack, 1e-8);
    let quadratic_comparison = CheckReport::bound("quadratic_comparison", quad_slack, 1e-8);
    let cross_bound = CheckReport::bound("cross_term_bound", cross_slack, 1e-8);
    let pass = ratio_const.is_finite()
        && log_gradient.pass
        && hessian_lower.pass
        && vertex_direction.pass
        && quadratic_comparison.pass
        && cross_bound.pass;
    Ok(GradientBoundsReport {
        facet_ratio_constant: ratio_const,
        log_gradient,
        hessian_lower,
        vertex_direction,
        quadratic_comparison,
        cross_bound,
        pass,
    })
}

/// The three exact identities from the closing remarks: the Pythagorean
/// split of a zero-sum representation, the refined vertex-direction
/// estimate, and the symmetry of the mixed second derivatives.
#[derive(Debug, Clone, Serialize)]
pub struct RemarkIdentitiesReport {
    pub pythagorean: CheckReport,
    pub refined_estimate: CheckReport,
    pub symmetry: CheckReport,
    /// Cross-validation of hess U through U_{(x-a_k)(x-a_j)}.
    pub hessian_cross: CheckReport,
    pub pass: bool,
}

pub fn check_representation_remainders(
    p: &Polytope,
    der: &WeightDerivatives,
    q_zero_sum: &[f64],
) -> Result<RemarkIdentitiesReport> {
    let sol = &der.base;
    let x = &sol.x;
    let verts = p.chart_vertices();
    let n = p.num_vertices();
    let nf = n as f64;
    if q_zero_sum.len() != n {
        return Err(Error::BadRepresentation(format!(
            "expected {n} coefficients, got {}",
            q_zero_sum.len()
        )));
    }
    let qsum: f64 = q_zero_sum.iter().sum();
    if qsum.abs() > 1e-10 {
        return Err(Error::BadRepresentation(format!(
            "coefficients sum to {qsum}, expected 0"
        )));
    }

    // (5.20.7): xi = sum q_k (a_k - x) with zero-sum q.
    let mut xi = DVector::zeros(p.dim());
    for (qk, a) in q_zero_sum.iter().zip(verts) {
        xi += (a - x) * *qk;
    }
    let mut lhs = 0.0;
    let mut grad_term = 0.0;
    let mut residual_term = 0.0;
    for (k, pk) in sol.weights.iter().enumerate() {
        let p2 = pk * pk;
        let g = der.weight_derivative(k, &xi);
        lhs += q_zero_sum[k] * q_zero_sum[k] / p2;
        grad_term += g * g / p2;
        residual_term += (g - q_zero_sum[k]) * (g - q_zero_sum[k]) / p2;
    }
    let pythagorean = CheckReport::identity(
        "pythagorean_remainder",
        rel_err(lhs, grad_term + residual_term),
        1e-7,
    );

    // (5.20.5): p_{k(x-a_k)} + 1 - p_k = alpha_k p_k^2.
    let mut refined_worst: f64 = 0.0;
    for (k, pk) in sol.weights.iter().enumerate() {
        let dir = x - &verts[k];
        let v = der.weight_derivative(k, &dir);
        let lhs = v + 1.0 - pk;
        let mut alpha = lhs * lhs / (pk * pk);
        for (i, pi) in sol.weights.iter().enumerate() {
            if i != k {
                let gi = der.weight_derivative(i, &dir);
                alpha += (gi - pi) * (gi - pi) / (pi * pi);
            }
        }
        refined_worst = refined_worst.max(rel_err(lhs, alpha * pk * pk));
        // The bracketing consequences: 1 >= lhs and p_k >= p_{k(x-a_k)} >= p_k - 1.
        refined_worst = refined_worst.max((lhs - 1.0).max(0.0));
        refined_worst = refined_worst.max((v - pk).max(0.0));
        refined_worst = refined_worst.max((pk - 1.0 - v).max(0.0));
    }
    let refined_estimate = CheckReport::identity("refined_weight_estimate", refined_worst, 1e-7);

    // Symmetric mixed expression, both sides equal
    // U_{(x-a_k)(x-a_j)} + n.
    let mut sym_worst: f64 = 0.0;
    let mut cross_worst: f64 = 0.0;
    for k in 0..n {
        for jv in 0..n {
            let pk = sol.weights[k];
            let pj = sol.weights[jv];
            let dj = x - &verts[jv];
            let dk = x - &verts[k];
            let a = der.weight_derivative(k, &dj) / (pk * pk) + 1.0 / pj;
            let b = der.weight_derivative(jv, &dk) / (pj * pj) + 1.0 / pk;
            sym_worst = sym_worst.max(rel_err(a, b));
            let mixed = der.barrier_second(&dk, &dj) + nf;
            cross_worst = cross_worst.max(rel_err(a, mixed));
        }
    }
    let symmetry = CheckReport::identity("mixed_symmetry", sym_worst, 1e-7);
    let hessian_cross = CheckReport::identity("hessian_cross_check", cross_worst, 1e-7);

    let pass =
        pythagorean.pass && refined_estimate.pass && symmetry.pass && hessian_cross.pass;
    Ok(RemarkIdentitiesReport {
        pythagorean,
        refined_estimate,
        symmetry,
        hessian_cross,
        pass,
    })
}

/// Convergence of `U_{(x - a_k)} = n - 1/p_k` toward `n - 1` along inward
/// paths from each vertex.
#[derive(Debug, Clone, Serialize)]
pub struct VertexLimitReport {
    /// Per vertex: |n - 1/p_k - (n-1)| at t = 1e-2, 1e-3, 1e-4 along the
    /// segment toward the centroid.
    pub errors: Vec<[f64; 3]>,
    pub pass: bool,
}

pub fn vertex_limit_check(p: &Polytope, opts: &SolverOptions) -> Result<VertexLimitReport> {
    p.require_facets()?;
    let centroid = p.centroid_chart();
    let n = p.num_vertices() as f64;
    let mut errors = Vec::with_capacity(p.num_vertices());
    let mut pass = true;
    for a in p.chart_vertices() {
        let mut row = [0.0; 3];
        for (slot, &t) in [1e-2, 1e-3, 1e-4].iter().enumerate() {
            let x = a + (&centroid - a) * t;
            let sol = crate::solver::solve_weights(p, &x, opts)?;
            let k = p
                .chart_vertices()
                .iter()
                .position(|v| (v - a).norm() < 1e-14)
                .unwrap();
            let value = n - 1.0 / sol.weights[k];
            row[slot] = (value - (n - 1.0)).abs();
        }
        if !(row[0] >= row[1] && row[1] >= row[2]) {
            pass = false;
        }
        errors.push(row);
    }
    Ok(VertexLimitReport { errors, pass })
}

/// One sample of a polytope-valued field along a parameter path.
#[derive(Debug, Clone)]
pub struct FieldSample {
    /// Parameter point (any dimension; consecutive samples are adjacent).
    pub y: DVector<f64>,
    /// Field value in ambient coordinates.
    pub value: DVector<f64>,
}

/// Finite-difference Lipschitz estimates of `y -> sqrt(p_k(u(y)))` along a
/// sampled path, with the field's second-difference supremum for comparison
/// against the theoretical ceiling `N(P) * sup |u''|^{1/2}`.
#[derive(Debug, Clone, Serialize)]
pub struct SqrtLipschitzEstimate {
    /// Max slope of sqrt(p_k) per vertex over adjacent sample pairs.
    pub per_vertex: Vec<f64>,
    /// Sup over interior samples of the second difference quotient of the field.
    pub field_second_difference_sup: f64,
    /// `sqrt(field_second_difference_sup)` — the shape of the predicted ceiling.
    pub predicted_ceiling_scale: f64,
}

pub fn estimate_sqrt_lipschitz(
    p: &Polytope,
    samples: &[FieldSample],
    opts: &SolverOptions,
) -> Result<SqrtLipschitzEstimate> {
    let n = p.num_vertices();
    let mut sqrt_weights: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let x = p.to_chart(&s.value);
        // The chart must actually contain the value.
        let back = p.to_ambient(&x);
        if (back - &s.value).norm() > 1e-9 * (1.0 + s.value.norm()) {
            return Err(Error::SampleOutside {
                index: i,
                detail: ": value is off the affine hull".into(),
            });
        }
        let sol = weights_on_closure(p, &x, opts).map_err(|e| Error::SampleOutside {
            index: i,
            detail: format!(" ({e})"),
        })?;
        sqrt_weights.push(sol.weights.iter().map(|w| w.sqrt()).collect());
    }

    let mut per_vertex = vec![0.0f64; n];
    for (s, w) in samples.windows(2).zip(sqrt_weights.windows(2)) {
        let dy = (&s[1].y - &s[0].y).norm();
        if dy <= 0.0 {
            return Err(Error::Invalid("coincident parameter samples".into()));
        }
        for k in 0..n {
            per_vertex[k] = per_vertex[k].max((w[1][k] - w[0][k]).abs() / dy);
        }
    }

    let mut second_sup: f64 = 0.0;
    for tri in samples.windows(3) {
        let h1 = (&tri[1].y - &tri[0].y).norm();
        let h2 = (&tri[2].y - &tri[1].y).norm();
        let h = 0.5 * (h1 + h2);
        let dd = (&tri[2].value - &tri[1].value * 2.0 + &tri[0].value).norm() / (h * h);
        second_sup = second_sup.max(dd);
    }

    Ok(SqrtLipschitzEstimate {
        per_vertex,
        field_second_difference_sup: second_sup,
        predicted_ceiling_scale: second_sup.sqrt(),
    })
}
