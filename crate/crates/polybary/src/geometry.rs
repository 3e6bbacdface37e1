//! Convex polytope geometry: vertex storage, the affine-hull chart, facet
//! data, and the two distance functions the derivative bounds are phrased in.
//!
//! The chart realizes the standing normalization "first vertex at the origin,
//! vertex differences spanning the whole space": ambient vertices are mapped
//! through an orthonormal basis of their affine hull, so every downstream
//! computation happens in a space where the hull is full-dimensional.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for merging duplicate input vertices.
pub const DEDUP_REL_TOL: f64 = 1e-9;
/// Relative singular-value cutoff when extracting the hull basis.
pub const RANK_REL_TOL: f64 = 1e-10;
/// Absolute slack allowed when testing facet inequalities at vertices.
pub const FACET_SLACK_TOL: f64 = 1e-10;

/// Orthonormal parametrization of the affine hull of the vertex set.
#[derive(Debug, Clone)]
pub struct Chart {
    /// A point on the hull (the first vertex).
    pub origin: DVector<f64>,
    /// Columns form an orthonormal basis of the hull's direction space (D x d).
    pub basis: DMatrix<f64>,
}

impl Chart {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn to_chart(&self, ambient: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * (ambient - &self.origin)
    }

    pub fn to_ambient(&self, chart: &DVector<f64>) -> DVector<f64> {
        &self.origin + &self.basis * chart
    }
}

/// A supporting halfspace `(normal, w) <= offset` in chart coordinates,
/// with a unit normal so that `offset - (normal, w)` is the Euclidean
/// distance from `w` to the facet hyperplane.
#[derive(Debug, Clone)]
pub struct Facet {
    pub normal: DVector<f64>,
    pub offset: f64,
}

/// A bounded convex polytope given by its vertices, with an optional
/// facet description. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Polytope {
    vertices: Vec<DVector<f64>>,
    chart: Chart,
    chart_vertices: Vec<DVector<f64>>,
    facets: Option<Vec<Facet>>,
    name: String,
    diameter: f64,
}

impl Polytope {
    /// Number of vertices.
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Intrinsic (chart) dimension of the hull.
    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.chart.ambient_dim()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    /// Vertices mapped into chart coordinates; the first one is the chart origin.
    pub fn chart_vertices(&self) -> &[DVector<f64>] {
        &self.chart_vertices
    }

    pub fn facets(&self) -> Option<&[Facet]> {
        self.facets.as_deref()
    }

    pub fn require_facets(&self) -> Result<&[Facet]> {
        self.facets.as_deref().ok_or(Error::FacetsMissing)
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn to_chart(&self, ambient: &DVector<f64>) -> DVector<f64> {
        self.chart.to_chart(ambient)
    }

    pub fn to_ambient(&self, chart: &DVector<f64>) -> DVector<f64> {
        self.chart.to_ambient(chart)
    }

    /// Mean of the vertex set, in chart coordinates.
    pub fn centroid_chart(&self) -> DVector<f64> {
        let n = self.chart_vertices.len() as f64;
        let mut c = DVector::zeros(self.dim());
        for v in &self.chart_vertices {
            c += v;
        }
        c / n
    }

    /// Distance from `x` (chart coordinates) to each facet hyperplane.
    pub fn facet_distances(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        let facets = self.require_facets()?;
        self.check_chart_dim(x)?;
        Ok(facets.iter().map(|f| f.offset - f.normal.dot(x)).collect())
    }

    /// Smallest facet distance, negative when `x` violates some halfspace.
    pub fn min_facet_distance(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self
            .facet_distances(x)?
            .into_iter()
            .fold(f64::INFINITY, f64::min))
    }

    /// Distance from `x` to the boundary along the ray `x + t xi/|xi|`, and
    /// the index of the facet the ray exits through.
    pub fn ray_exit_distance(&self, x: &DVector<f64>, xi: &DVector<f64>) -> Result<RayExit> {
        let facets = self.require_facets()?;
        self.check_chart_dim(x)?;
        self.check_chart_dim(xi)?;
        let xi_norm = xi.norm();
        if xi_norm == 0.0 {
            return Err(Error::ZeroDirection);
        }
        let mut worst = f64::INFINITY;
        let mut best: Option<(f64, usize)> = None;
        for (i, f) in facets.iter().enumerate() {
            let slack = f.offset - f.normal.dot(x);
            worst = worst.min(slack);
            let speed = f.normal.dot(xi);
            if speed > 0.0 {
                let t = slack * xi_norm / speed;
                if best.map_or(true, |(tb, _)| t < tb) {
                    best = Some((t, i));
                }
            }
        }
        if worst < -FACET_SLACK_TOL * self.scale() {
            return Err(Error::PointOutside(worst));
        }
        let (distance, facet) = best.ok_or(Error::RayUnbounded)?;
        Ok(RayExit {
            distance: distance.max(0.0),
            facet,
        })
    }

    /// Draw a random interior chart point as a convex combination of the
    /// vertices with exponentially distributed weights.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let mut w: Vec<f64> = (0..self.num_vertices())
            .map(|_| -(1.0 - rng.random::<f64>()).ln().max(1e-12))
            .collect();
        let total: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= total;
        }
        let mut x = DVector::zeros(self.dim());
        for (wi, v) in w.iter().zip(&self.chart_vertices) {
            x += v * *wi;
        }
        x
    }

    pub(crate) fn scale(&self) -> f64 {
        self.diameter.max(1.0)
    }

    pub(crate) fn check_chart_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Result of [`Polytope::ray_exit_distance`].
#[derive(Debug, Clone, Copy)]
pub struct RayExit {
    pub distance: f64,
    /// Index of the facet realizing the minimum.
    pub facet: usize,
}

/// Build a polytope from ambient vertices and optional ambient halfspaces
/// `(normal, offset)` with `(normal, v) <= offset` on the hull.
pub fn build_polytope(
    vertices: &[DVector<f64>],
    facets: Option<&[(DVector<f64>, f64)]>,
    name: &str,
) -> Result<Polytope> {
    if vertices.is_empty() {
        return Err(Error::TooFewVertices(0));
    }
    let ambient_dim = vertices[0].len();
    for v in vertices {
        if v.len() != ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: ambient_dim,
                got: v.len(),
            });
        }
    }

    // Dedup relative to the diameter of the input set.
    let mut diameter: f64 = 0.0;
    for i in 0..vertices.len() {
        for j in i + 1..vertices.len() {
            diameter = diameter.max((&vertices[i] - &vertices[j]).norm());
        }
    }
    let dedup_tol = DEDUP_REL_TOL * diameter.max(1e-300);
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for v in vertices {
        if !kept.iter().any(|u| (u - v).norm() <= dedup_tol) {
            kept.push(v.clone());
        }
    }
    if kept.len() < 2 {
        return Err(Error::TooFewVertices(kept.len()));
    }

    // Orthonormal hull basis via rank-revealing SVD of the vertex differences.
    let origin = kept[0].clone();
    let mut diffs = DMatrix::zeros(ambient_dim, kept.len() - 1);
    for (j, v) in kept.iter().skip(1).enumerate() {
        diffs.set_column(j, &(v - &origin));
    }
    let svd = diffs.clone().svd(true, false);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_REL_TOL * sigma_max)
        .count();
    let u = svd.u.as_ref().expect("svd with u");
    let basis = u.columns(0, rank).into_owned();
    let chart = Chart {
        origin,
        basis,
    };

    let chart_vertices: Vec<DVector<f64>> = kept.iter().map(|v| chart.to_chart(v)).collect();

    // The chart must reproduce every vertex.
    for (i, v) in kept.iter().enumerate() {
        let back = chart.to_ambient(&chart_vertices[i]);
        let err = (v - &back).norm();
        if err > 1e-12 * (1.0 + v.norm()) {
            return Err(Error::Invalid(format!(
                "chart round-trip failed at vertex {i}: error {err:.3e}"
            )));
        }
    }

    let d = chart.dim();
    let scale = diameter.max(1.0);
    let converted_facets = match facets {
        None => None,
        Some(raw) => {
            let mut out = Vec::with_capacity(raw.len());
            for (fi, (n_amb, c_amb)) in raw.iter().enumerate() {
                if n_amb.len() != ambient_dim {
                    return Err(Error::DimensionMismatch {
                        expected: ambient_dim,
                        got: n_amb.len(),
                    });
                }
                let n_chart = chart.basis.transpose() * n_amb;
                let offset = c_amb - n_amb.dot(&chart.origin);
                let norm = n_chart.norm();
                if norm < 1e-12 {
                    return Err(Error::Invalid(format!(
                        "facet {fi} normal is orthogonal to the hull"
                    )));
                }
                out.push(Facet {
                    normal: n_chart / norm,
                    offset: offset / norm,
                });
            }
            validate_facets(&out, &chart_vertices, d, scale)?;
            Some(out)
        }
    };

    Ok(Polytope {
        vertices: kept,
        chart,
        chart_vertices,
        facets: converted_facets,
        name: name.to_string(),
        diameter,
    })
}

fn validate_facets(
    facets: &[Facet],
    chart_vertices: &[DVector<f64>],
    d: usize,
    scale: f64,
) -> Result<()> {
    let tight_tol = 1e-8 * scale;
    let mut active_count = vec![0usize; chart_vertices.len()];
    for (fi, f) in facets.iter().enumerate() {
        let mut min_slack = f64::INFINITY;
        let mut worst_vertex = 0;
        let mut tight: Vec<usize> = Vec::new();
        for (vi, v) in chart_vertices.iter().enumerate() {
            let slack = f.offset - f.normal.dot(v);
            if slack < min_slack {
                min_slack = slack;
                worst_vertex = vi;
            }
            if slack.abs() <= tight_tol {
                tight.push(vi);
                active_count[vi] += 1;
            }
        }
        if min_slack < -FACET_SLACK_TOL * scale {
            return Err(Error::FacetViolated {
                facet: fi,
                vertex: worst_vertex,
                slack: min_slack,
            });
        }
        if min_slack > tight_tol {
            return Err(Error::FacetNotTight {
                facet: fi,
                slack: min_slack,
            });
        }
        // The tight set must affinely span the facet hyperplane.
        if tight.len() < d {
            return Err(Error::FacetNotTight {
                facet: fi,
                slack: min_slack,
            });
        }
        if d >= 2 {
            let base = &chart_vertices[tight[0]];
            let mut m = DMatrix::zeros(d, tight.len() - 1);
            for (j, &vi) in tight.iter().skip(1).enumerate() {
                m.set_column(j, &(&chart_vertices[vi] - base));
            }
            if m.rank(1e-9 * scale) < d - 1 {
                return Err(Error::FacetNotTight {
                    facet: fi,
                    slack: min_slack,
                });
            }
        }
    }
    for (vi, &count) in active_count.iter().enumerate() {
        if count < d {
            return Err(Error::InteriorVertex {
                vertex: vi,
                active: count,
                needed: d,
            });
        }
    }
    Ok(())
}

/// The standard simplex with vertices `0, e_1, ..., e_d`, facets included.
pub fn make_simplex(d: usize) -> Result<Polytope> {
    if d == 0 {
        return Err(Error::Invalid("simplex dimension must be positive".into()));
    }
    let mut vertices = vec![DVector::zeros(d)];
    for i in 0..d {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        vertices.push(v);
    }
    let mut facets: Vec<(DVector<f64>, f64)> = Vec::with_capacity(d + 1);
    for i in 0..d {
        let mut n = DVector::zeros(d);
        n[i] = -1.0;
        facets.push((n, 0.0));
    }
    let diag = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    facets.push((diag, 1.0 / (d as f64).sqrt()));
    build_polytope(&vertices, Some(&facets), &format!("simplex{d}"))
}

/// Axis-aligned box `[lows_i, highs_i]` with its 2d facets.
pub fn make_box(lows: &[f64], highs: &[f64]) -> Result<Polytope> {
    let d = lows.len();
    if d == 0 || highs.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d.max(1),
            got: highs.len(),
        });
    }
    for i in 0..d {
        if !(highs[i] > lows[i]) {
            return Err(Error::Invalid(format!(
                "box side {i} is degenerate: [{}, {}]",
                lows[i], highs[i]
            )));
        }
    }
    let mut vertices = Vec::with_capacity(1 << d);
    for mask in 0..(1usize << d) {
        let v = DVector::from_fn(d, |i, _| {
            if mask & (1 << i) != 0 {
                highs[i]
            } else {
                lows[i]
            }
        });
        vertices.push(v);
    }
    let mut facets = Vec::with_capacity(2 * d);
    for i in 0..d {
        let mut n = DVector::zeros(d);
        n[i] = 1.0;
        facets.push((n.clone(), highs[i]));
        n[i] = -1.0;
        facets.push((n, -lows[i]));
    }
    build_polytope(&vertices, Some(&facets), &format!("box{d}"))
}

/// Convex polygon in the plane. Input order is irrelevant; vertices are
/// sorted by angle around their centroid before edges are built.
pub fn make_polygon(vertices_2d: &[[f64; 2]]) -> Result<Polytope> {
    if vertices_2d.len() < 3 {
        return Err(Error::TooFewVertices(vertices_2d.len()));
    }
    let cx = vertices_2d.iter().map(|v| v[0]).sum::<f64>() / vertices_2d.len() as f64;
    let cy = vertices_2d.iter().map(|v| v[1]).sum::<f64>() / vertices_2d.len() as f64;
    let mut sorted: Vec<[f64; 2]> = vertices_2d.to_vec();
    sorted.sort_by(|a, b| {
        let ta = (a[1] - cy).atan2(a[0] - cx);
        let tb = (b[1] - cy).atan2(b[0] - cx);
        ta.partial_cmp(&tb).unwrap()
    });

    let m = sorted.len();
    let mut scale2: f64 = 0.0;
    for v in &sorted {
        scale2 = scale2.max((v[0] - cx).hypot(v[1] - cy));
    }
    // Consecutive edge cross products must keep one sign (CCW after the sort).
    for i in 0..m {
        let a = sorted[i];
        let b = sorted[(i + 1) % m];
        let c = sorted[(i + 2) % m];
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross <= 1e-12 * scale2 * scale2 {
            return Err(Error::NonConvexPolygon);
        }
    }

    let mut facets = Vec::with_capacity(m);
    for i in 0..m {
        let a = sorted[i];
        let b = sorted[(i + 1) % m];
        let e = [b[0] - a[0], b[1] - a[1]];
        // Outward normal for a CCW polygon.
        let len = e[0].hypot(e[1]);
        let n = DVector::from_vec(vec![e[1] / len, -e[0] / len]);
        let offset = n[0] * a[0] + n[1] * a[1];
        facets.push((n, offset));
    }
    let vertices: Vec<DVector<f64>> = sorted
        .iter()
        .map(|v| DVector::from_vec(vec![v[0], v[1]]))
        .collect();
    build_polytope(&vertices, Some(&facets), "polygon")
}

/// Serializable polytope document, matching the CLI's JSON schema. Vertices
/// and facets are in ambient coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolytopeDoc {
    #[serde(default)]
    pub name: String,
    pub vertices: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facets: Option<Vec<FacetDoc>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FacetDoc {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl PolytopeDoc {
    pub fn build(&self) -> Result<Polytope> {
        let vertices: Vec<DVector<f64>> = self
            .vertices
            .iter()
            .map(|v| DVector::from_vec(v.clone()))
            .collect();
        let facets: Option<Vec<(DVector<f64>, f64)>> = self.facets.as_ref().map(|fs| {
            fs.iter()
                .map(|f| (DVector::from_vec(f.normal.clone()), f.offset))
                .collect()
        });
        build_polytope(&vertices, facets.as_deref(), &self.name)
    }

    pub fn from_polytope(p: &Polytope) -> Self {
        let facets = p.facets().map(|fs| {
            fs.iter()
                .map(|f| {
                    let n_amb = &p.chart().basis * &f.normal;
                    let offset = f.offset + n_amb.dot(&p.chart().origin);
                    FacetDoc {
                        normal: n_amb.iter().cloned().collect(),
                        offset,
                    }
                })
                .collect()
        });
        PolytopeDoc {
            name: p.name().to_string(),
            vertices: p
                .vertices()
                .iter()
                .map(|v| v.iter().cloned().collect())
                .collect(),
            facets,
        }
    }
}
