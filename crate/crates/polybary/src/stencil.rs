//! Monotone finite-difference stencils. A factorization
//! `u = sum sigma^2 gamma gamma^T` turns the operator
//! `Lf = sum u^{ij} f_{x^i x^j}` into a sum of second differences along the
//! fixed directions, `L_h f(x) = sum_k sigma_k^2 (f(x + h g_k) - 2 f(x)
//! + f(x - h g_k)) / (h |g_k|)^2`, which has nonnegative off-center
//! coefficients and therefore obeys a discrete maximum principle.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{factorize_point, Factorization, MatrixPolytopeModel};
use crate::solver::SolverOptions;

/// How far we search for an integer multiple when rescaling a unit
/// direction onto the lattice.
const MAX_LATTICE_MULTIPLE: usize = 16;
const LATTICE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StencilEntry {
    /// Lattice offset `y`; the sample point is `x + h y`. Entries are exact
    /// integers when `lattice` is true.
    pub offset: Vec<f64>,
    /// Coefficient `p_h(y) >= 0`, with the `1/h^2` already folded in.
    pub coeff: f64,
    /// False when the direction could not be rescaled onto `Z^m`; the
    /// offset is then the real-valued unit direction itself.
    pub lattice: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StencilSpec {
    pub h: f64,
    pub entries: Vec<StencilEntry>,
    /// Center coefficient `p_h(0) = -2 sum c <= 0`.
    pub center: f64,
}

impl StencilSpec {
    pub fn dim(&self) -> usize {
        self.entries.first().map_or(0, |e| e.offset.len())
    }

    pub fn non_lattice_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.lattice).count() / 2
    }
}

/// Rescale a unit direction to a primitive integer vector, or return it
/// unchanged with `lattice = false`.
fn lattice_rescale(gamma: &DVector<f64>) -> (DVector<f64>, bool) {
    let min_abs = gamma
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v > LATTICE_TOL)
        .fold(f64::INFINITY, f64::min);
    if !min_abs.is_finite() {
        return (gamma.clone(), false);
    }
    let base = 1.0 / min_abs;
    for t in 1..=MAX_LATTICE_MULTIPLE {
        let cand = gamma * (t as f64 * base);
        let rounded = cand.map(f64::round);
        if (&cand - &rounded).amax() <= LATTICE_TOL * (1.0 + cand.amax()) {
            // Reduce to the primitive vector.
            let g = rounded.iter().map(|v| *v as i64).fold(0i64, |acc, v| gcd(acc, v.abs()));
            let g = g.max(1) as f64;
            return (rounded / g, true);
        }
    }
    (gamma.clone(), false)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Build the stencil from a single-point factorization. The support is the
/// model's full direction set; directions whose coefficient vanishes at
/// this point keep zero-weight entries, so the support never varies with
/// the evaluation point.
pub fn build_stencil(fact: &Factorization, h: f64) -> Result<StencilSpec> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::BadStep(h));
    }
    let sample = match fact.samples.as_slice() {
        [s] => s,
        other => {
            return Err(Error::Invalid(format!(
                "stencil needs a factorization at exactly one point, got {}",
                other.len()
            )))
        }
    };
    let h2 = h * h;
    let mut entries = Vec::with_capacity(2 * fact.directions.len());
    let mut total = 0.0;
    for (gamma, &sigma2) in fact.directions.iter().zip(&sample.coefficients) {
        let (g, lattice) = lattice_rescale(gamma);
        // sigma^2 gamma gamma^T = c g g^T with gamma a unit vector.
        let c = sigma2 / g.norm_squared();
        let coeff = c / h2;
        total += coeff;
        let fwd: Vec<f64> = g.iter().copied().collect();
        let bwd: Vec<f64> = g.iter().map(|v| -v).collect();
        entries.push(StencilEntry { offset: fwd, coeff, lattice });
        entries.push(StencilEntry { offset: bwd, coeff, lattice });
    }
    Ok(StencilSpec {
        h,
        entries,
        center: -2.0 * total,
    })
}

/// Build the stencil for a single matrix value from a model.
pub fn stencil_at(
    model: &MatrixPolytopeModel,
    u: &DMatrix<f64>,
    h: f64,
    opts: &SolverOptions,
) -> Result<StencilSpec> {
    let sample = factorize_point(model, u, opts)?;
    let fact = Factorization {
        directions: model.directions.clone(),
        samples: vec![sample],
    };
    build_stencil(&fact, h)
}

/// `L_h f(x) = sum p_h(y) f(x + h y)`.
pub fn apply_stencil<F>(spec: &StencilSpec, mut f: F, x: &DVector<f64>) -> f64
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let mut acc = spec.center * f(x);
    for e in &spec.entries {
        if e.coeff == 0.0 {
            continue;
        }
        let z = DVector::from_fn(x.len(), |i, _| x[i] + spec.h * e.offset[i]);
        acc += e.coeff * f(&z);
    }
    acc
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Worst relative error over random quadratics (exact up to rounding).
    pub quadratic_worst: f64,
    /// Smallest Richardson order observed on the smooth trig tests.
    pub observed_order: f64,
    /// Most negative `L_h f` over random functions with a global minimum
    /// at the evaluation point.
    pub monotonicity_worst: f64,
    pub non_lattice_directions: usize,
    pub pass: bool,
}

/// Exercise stencils built at the given matrix values: exactness on
/// quadratics, second-order convergence on smooth tests over the step
/// sequence, and the discrete maximum principle.
pub fn consistency_report(
    model: &MatrixPolytopeModel,
    values: &[DMatrix<f64>],
    steps: &[f64],
    seed: u64,
) -> Result<ConsistencyReport> {
    if steps.is_empty() {
        return Err(Error::BadStep(0.0));
    }
    let m = model.matrix_dim();
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quadratic_worst = 0.0f64;
    let mut observed_order = f64::INFINITY;
    let mut monotonicity_worst = 0.0f64;
    let mut non_lattice = 0;

    for u in values {
        let specs: Vec<StencilSpec> = steps
            .iter()
            .map(|&h| stencil_at(model, u, h, &opts))
            .collect::<Result<_>>()?;
        non_lattice = non_lattice.max(specs[0].non_lattice_count());
        let x = DVector::from_fn(m, |_, _| rng.random::<f64>() - 0.5);

        // Quadratics: L(z^T A z + b.z + c) = 2 (u, A)_F, matched exactly.
        for _ in 0..5 {
            let raw = DMatrix::from_fn(m, m, |_, _| rng.random::<f64>() - 0.5);
            let a = (&raw + raw.transpose()) * 0.5;
            let b = DVector::from_fn(m, |_, _| rng.random::<f64>() - 0.5);
            let c = rng.random::<f64>();
            let exact = 2.0 * (u * &a).trace();
            for spec in &specs {
                let got = apply_stencil(spec, |z| (z.transpose() * &a * z)[0] + b.dot(z) + c, &x);
                let rel = (got - exact).abs() / (1.0 + exact.abs());
                quadratic_worst = quadratic_worst.max(rel);
            }
        }

        // Smooth non-quadratic: f = sin(a.z + phi), Lf = -(a^T u a) sin.
        for _ in 0..3 {
            let a = DVector::from_fn(m, |_, _| 0.5 + rng.random::<f64>());
            // Keep |sin| away from zero so relative order is well defined.
            let phi = std::f64::consts::FRAC_PI_2 - a.dot(&x)
                + 0.6 * (rng.random::<f64>() - 0.5);
            let exact = -(a.transpose() * u * &a)[0] * (a.dot(&x) + phi).sin();
            let errs: Vec<f64> = specs
                .iter()
                .map(|spec| (apply_stencil(spec, |z| (a.dot(z) + phi).sin(), &x) - exact).abs())
                .collect();
            for w in errs.windows(2) {
                if w[0] > 1e-13 && w[1] > 1e-15 {
                    let ratio = steps[0] / steps[1]; // uniform ratio assumed
                    let order = (w[0] / w[1]).ln() / ratio.ln();
                    observed_order = observed_order.min(order);
                }
            }
        }

        // Minimum principle: f >= f(x) with equality at x forces L_h f >= 0.
        for _ in 0..5 {
            let raw = DMatrix::from_fn(m, m, |_, _| rng.random::<f64>() - 0.5);
            let w = &raw * raw.transpose();
            let d = DVector::from_fn(m, |_, _| rng.random::<f64>());
            let f = |z: &DVector<f64>| {
                let s = z - &x;
                (s.transpose() * &w * &s)[0]
                    + d.iter().zip(s.iter()).map(|(di, si)| di * (1.0 - si.cos())).sum::<f64>()
            };
            for spec in &specs {
                monotonicity_worst = monotonicity_worst.min(apply_stencil(spec, f, &x));
            }
        }
    }

    if observed_order == f64::INFINITY {
        observed_order = f64::NAN;
    }
    let pass = quadratic_worst <= 1e-12
        && observed_order >= 1.9
        && monotonicity_worst >= -1e-12;
    Ok(ConsistencyReport {
        quadratic_worst,
        observed_order,
        monotonicity_worst,
        non_lattice_directions: non_lattice,
        pass,
    })
}
