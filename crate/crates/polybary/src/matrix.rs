//! Polytopes of symmetric matrices and the factorization of polytope-valued
//! matrix fields into fixed-direction rank-one sums,
//! `u(y) = sum_k p_k(u(y)) u_k = sum sigma^2(y) gamma gamma^T`.
//!
//! Symmetric matrices are embedded as vectors with the off-diagonal entries
//! scaled by sqrt(2), so Euclidean geometry in the chart agrees with the
//! Frobenius inner product and facet distances keep their metric meaning.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{build_polytope, Polytope};
use crate::lp::in_convex_hull;
use crate::solver::{weights_on_closure, SolverOptions};

/// Isometric coordinate map between symmetric `m x m` matrices and vectors
/// of length `m(m+1)/2`.
#[derive(Debug, Clone, Copy)]
pub struct SymmetricEmbedding {
    pub m: usize,
}

impl SymmetricEmbedding {
    pub fn new(m: usize) -> Self {
        SymmetricEmbedding { m }
    }

    pub fn dim(&self) -> usize {
        self.m * (self.m + 1) / 2
    }

    /// svec: diagonal entries as-is, off-diagonal scaled by sqrt(2).
    pub fn embed(&self, u: &DMatrix<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        let mut idx = 0;
        for i in 0..self.m {
            for j in i..self.m {
                v[idx] = if i == j {
                    u[(i, j)]
                } else {
                    std::f64::consts::SQRT_2 * u[(i, j)]
                };
                idx += 1;
            }
        }
        v
    }

    pub fn unembed(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let mut u = DMatrix::zeros(self.m, self.m);
        let mut idx = 0;
        for i in 0..self.m {
            for j in i..self.m {
                if i == j {
                    u[(i, j)] = v[idx];
                } else {
                    let e = v[idx] / std::f64::consts::SQRT_2;
                    u[(i, j)] = e;
                    u[(j, i)] = e;
                }
                idx += 1;
            }
        }
        u
    }
}

/// Retained eigenpairs of one vertex matrix (eigenvalues below
/// `1e-12 * ||u_k||` are dropped).
#[derive(Debug, Clone)]
pub struct VertexEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<DVector<f64>>,
    /// Index into the model's deduplicated direction list, per eigenpair.
    pub direction_index: Vec<usize>,
}

/// A polytope whose vertices are symmetric PSD matrices, with the fixed
/// direction set collected from all vertex eigenvectors.
#[derive(Debug, Clone)]
pub struct MatrixPolytopeModel {
    pub embedding: SymmetricEmbedding,
    pub polytope: Polytope,
    pub vertex_matrices: Vec<DMatrix<f64>>,
    pub eigen: Vec<VertexEigen>,
    /// Unit directions, deduplicated up to sign.
    pub directions: Vec<DVector<f64>>,
}

impl MatrixPolytopeModel {
    pub fn matrix_dim(&self) -> usize {
        self.embedding.m
    }
}

/// Build a model from symmetric PSD vertex matrices. Facets, when given,
/// are halfspaces `(N, u)_F <= c` in matrix space.
pub fn build_matrix_polytope(
    vertex_matrices: &[DMatrix<f64>],
    facets: Option<&[(DMatrix<f64>, f64)]>,
    name: &str,
) -> Result<MatrixPolytopeModel> {
    if vertex_matrices.is_empty() {
        return Err(Error::TooFewVertices(0));
    }
    let m = vertex_matrices[0].nrows();
    let embedding = SymmetricEmbedding::new(m);

    let mut eigen = Vec::with_capacity(vertex_matrices.len());
    for u in vertex_matrices {
        if u.nrows() != m || u.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: u.nrows().max(u.ncols()),
            });
        }
        let asym = (u - u.transpose()).norm();
        if asym > 1e-10 * (1.0 + u.norm()) {
            return Err(Error::NotSymmetric(asym));
        }
        let sym = (u + u.transpose()) * 0.5;
        let decomp = sym.clone().symmetric_eigen();
        let scale = u.norm().max(1e-300);
        let mut eigenvalues = Vec::new();
        let mut eigenvectors = Vec::new();
        for (i, &mu) in decomp.eigenvalues.iter().enumerate() {
            if mu < -1e-10 * scale {
                return Err(Error::NotPsd(mu));
            }
            if mu > 1e-12 * scale {
                eigenvalues.push(mu);
                eigenvectors.push(decomp.eigenvectors.column(i).into_owned());
            }
        }
        eigen.push(VertexEigen {
            eigenvalues,
            eigenvectors,
            direction_index: Vec::new(),
        });
    }

    // Dedup directions up to sign.
    let mut directions: Vec<DVector<f64>> = Vec::new();
    for ve in &mut eigen {
        for v in &ve.eigenvectors {
            let found = directions
                .iter()
                .position(|d| (d - v).norm() <= 1e-9 || (d + v).norm() <= 1e-9);
            let idx = match found {
                Some(i) => i,
                None => {
                    directions.push(v.clone());
                    directions.len() - 1
                }
            };
            ve.direction_index.push(idx);
        }
    }

    let embedded: Vec<DVector<f64>> = vertex_matrices.iter().map(|u| embedding.embed(u)).collect();
    let embedded_facets: Option<Vec<(DVector<f64>, f64)>> = facets.map(|fs| {
        fs.iter()
            .map(|(nm, c)| (embedding.embed(&((nm + nm.transpose()) * 0.5)), *c))
            .collect()
    });
    let polytope = build_polytope(&embedded, embedded_facets.as_deref(), name)?;

    // Eigendecompositions must reconstruct the vertices.
    for (u, ve) in vertex_matrices.iter().zip(&eigen) {
        let mut recon = DMatrix::zeros(m, m);
        for (mu, v) in ve.eigenvalues.iter().zip(&ve.eigenvectors) {
            recon.syger(*mu, v, v, 1.0);
        }
        recon.fill_upper_triangle_with_lower_triangle();
        if (u - &recon).norm() > 1e-12 * (1.0 + u.norm()) {
            return Err(Error::Invalid("eigendecomposition failed to reconstruct a vertex".into()));
        }
    }

    Ok(MatrixPolytopeModel {
        embedding,
        polytope,
        vertex_matrices: vertex_matrices.to_vec(),
        eigen,
        directions,
    })
}

/// `2 u_ii >= sum_j |u_ij|` for every row.
pub fn is_diagonally_dominant(u: &DMatrix<f64>, tol: f64) -> bool {
    let m = u.nrows();
    (0..m).all(|i| {
        let row_abs: f64 = (0..m).map(|j| u[(i, j)].abs()).sum();
        2.0 * u[(i, i)] >= row_abs - tol
    })
}

/// The polytope of diagonally dominant nonnegative symmetric `m x m`
/// matrices with unit trace. Vertices are `e_i e_i^T` and
/// `(1/2)(e_i +- e_j)(e_i +- e_j)^T`; each is certified extreme by the LP
/// oracle at build time. Analytic facets are attached for `m = 2` only.
pub fn dd_trace1_polytope(m: usize) -> Result<MatrixPolytopeModel> {
    if !(m == 2 || m == 3) {
        return Err(Error::UnsupportedMatrixDim(m));
    }
    let mut vertices = Vec::new();
    for i in 0..m {
        let mut e = DMatrix::zeros(m, m);
        e[(i, i)] = 1.0;
        vertices.push(e);
    }
    for i in 0..m {
        for j in i + 1..m {
            for sign in [1.0f64, -1.0] {
                let mut v = DVector::zeros(m);
                v[i] = 1.0;
                v[j] = sign;
                let mut u = DMatrix::zeros(m, m);
                u.syger(0.5, &v, &v, 0.0);
                u.fill_upper_triangle_with_lower_triangle();
                vertices.push(u);
            }
        }
    }

    let facets: Option<Vec<(DMatrix<f64>, f64)>> = if m == 2 {
        // |u12| <= u11 and |u12| <= u22 as four Frobenius halfspaces.
        let mut fs = Vec::new();
        for i in 0..2 {
            for sign in [1.0f64, -1.0] {
                let mut nm = DMatrix::zeros(2, 2);
                nm[(i, i)] = -1.0;
                nm[(0, 1)] = 0.5 * sign;
                nm[(1, 0)] = 0.5 * sign;
                fs.push((nm, 0.0));
            }
        }
        Some(fs)
    } else {
        None
    };

    let model = build_matrix_polytope(&vertices, facets.as_deref(), &format!("dd{m}-trace1"))?;

    // Certification: each claimed vertex is in D and extreme (not in the
    // hull of the others).
    let chart_verts = model.polytope.chart_vertices();
    for (k, u) in model.vertex_matrices.iter().enumerate() {
        if !is_diagonally_dominant(u, 1e-12) || (u.trace() - 1.0).abs() > 1e-12 {
            return Err(Error::NotExtreme(k));
        }
        let others: Vec<DVector<f64>> = chart_verts
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, v)| v.clone())
            .collect();
        if in_convex_hull(&others, &chart_verts[k]) {
            return Err(Error::NotExtreme(k));
        }
    }
    Ok(model)
}

/// Random member of the diagonally dominant trace-1 set: Dirichlet diagonal,
/// off-diagonal entries drawn up to their row budgets. Covers the full set
/// for `m = 2` and a fat interior portion for larger `m`.
pub fn sample_dd_trace1<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let mut diag: Vec<f64> = (0..m).map(|_| -(1.0 - rng.random::<f64>()).ln().max(1e-12)).collect();
    let total: f64 = diag.iter().sum();
    for d in &mut diag {
        *d /= total;
    }
    let mut u = DMatrix::zeros(m, m);
    for i in 0..m {
        u[(i, i)] = diag[i];
    }
    let share = 1.0 / (m - 1) as f64;
    for i in 0..m {
        for j in i + 1..m {
            let budget = (diag[i].min(diag[j])) * if m == 2 { 1.0 } else { share };
            let v = (2.0 * rng.random::<f64>() - 1.0) * budget;
            u[(i, j)] = v;
            u[(j, i)] = v;
        }
    }
    u
}

/// The fixed-direction factorization of a field at a set of samples.
#[derive(Debug, Clone)]
pub struct Factorization {
    /// Unit directions shared by every sample (the model's direction list).
    pub directions: Vec<DVector<f64>>,
    pub samples: Vec<FactorizationSample>,
}

#[derive(Debug, Clone)]
pub struct FactorizationSample {
    pub y: DVector<f64>,
    /// Weights `p_k(u(y))` over the vertex matrices.
    pub weights: Vec<f64>,
    /// `sigma^2` per direction: `sum over (k,i) mapping to the direction of
    /// p_k(u(y)) mu_{ki}`. Always nonnegative.
    pub coefficients: Vec<f64>,
    /// `|| sum sigma^2 gamma gamma^T - u(y) ||_F`.
    pub reconstruction_error: f64,
}

/// Factorize a single matrix value drawn from the model's polytope.
pub fn factorize_point(
    model: &MatrixPolytopeModel,
    u: &DMatrix<f64>,
    opts: &SolverOptions,
) -> Result<FactorizationSample> {
    let embedded = model.embedding.embed(&((u + u.transpose()) * 0.5));
    let p = &model.polytope;
    let x = p.to_chart(&embedded);
    let back = p.to_ambient(&x);
    if (&back - &embedded).norm() > 1e-9 * (1.0 + embedded.norm()) {
        return Err(Error::SampleOutside {
            index: 0,
            detail: ": value is off the affine hull of the vertex matrices".into(),
        });
    }
    let sol = weights_on_closure(p, &x, opts).map_err(|e| match e {
        Error::PointOutside(s) => Error::SampleOutside {
            index: 0,
            detail: describe_violation(p, &x, s),
        },
        other => other,
    })?;

    let mut coefficients = vec![0.0f64; model.directions.len()];
    for (k, ve) in model.eigen.iter().enumerate() {
        for ((mu, _), &di) in ve
            .eigenvalues
            .iter()
            .zip(&ve.eigenvectors)
            .zip(&ve.direction_index)
        {
            coefficients[di] += sol.weights[k] * mu;
        }
    }

    let m = model.matrix_dim();
    let mut recon = DMatrix::zeros(m, m);
    for (c, dir) in coefficients.iter().zip(&model.directions) {
        recon.syger(*c, dir, dir, 1.0);
    }
    recon.fill_upper_triangle_with_lower_triangle();
    let reconstruction_error = (&recon - u).norm();

    Ok(FactorizationSample {
        y: DVector::zeros(0),
        weights: sol.weights,
        coefficients,
        reconstruction_error,
    })
}

fn describe_violation(p: &Polytope, x: &DVector<f64>, slack: f64) -> String {
    match p.facet_distances(x) {
        Ok(ds) => {
            let (worst, d) = ds
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            format!(": facet {worst} violated by {:.3e}", -d)
        }
        Err(_) => format!(" (slack {slack:.3e})"),
    }
}

/// Factorize a sampled field `y -> u(y)`.
pub fn factorize_field(
    model: &MatrixPolytopeModel,
    samples: &[(DVector<f64>, DMatrix<f64>)],
    opts: &SolverOptions,
) -> Result<Factorization> {
    let mut out = Vec::with_capacity(samples.len());
    for (i, (y, u)) in samples.iter().enumerate() {
        let mut s = factorize_point(model, u, opts).map_err(|e| match e {
            Error::SampleOutside { detail, .. } => Error::SampleOutside { index: i, detail },
            other => other,
        })?;
        s.y = y.clone();
        out.push(s);
    }
    Ok(Factorization {
        directions: model.directions.clone(),
        samples: out,
    })
}
