//! Seeded verification suite over one polytope: solver invariants,
//! derivative identities, and boundary bounds, aggregated over random
//! interior samples into a single serializable report. Output is a pure
//! function of the polytope, the seed, and the sample count.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calculus::{
    affine_null_vector, check_gradient_bounds, check_hessian_identity,
    check_representation_identity, check_representation_remainders, differentiate,
    vertex_limit_check, CheckReport, GradientBoundsReport, RemarkIdentitiesReport,
    RepresentationCoefficients, VertexLimitReport,
};
use crate::error::Result;
use crate::geometry::Polytope;
use crate::solver::{solve_weights, SolverOptions};

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub polytope: String,
    pub dimension: usize,
    pub num_vertices: usize,
    pub seed: u64,
    pub samples: usize,
    /// `sum_k grad p_k = 0`, worst entry over samples.
    pub partition_gradient: CheckReport,
    /// `sum_k a_k (grad p_k)^T = I` on the chart, worst entry.
    pub reproduction_gradient: CheckReport,
    pub hessian_identity: CheckReport,
    pub representation_identity: CheckReport,
    /// Absent when the vertices are affinely independent (the
    /// representation is unique, so there is nothing nontrivial to vary).
    pub remainder_identities: Option<RemarkIdentitiesReport>,
    /// Absent without facet data.
    pub gradient_bounds: Option<GradientBoundsReport>,
    /// Absent without facet data.
    pub vertex_limits: Option<VertexLimitReport>,
    pub pass: bool,
}

fn merge_identity(acc: Option<CheckReport>, next: CheckReport) -> Option<CheckReport> {
    Some(match acc {
        None => next,
        Some(a) => {
            let worst = a.worst.max(next.worst);
            CheckReport::identity(&a.name, worst, a.tol)
        }
    })
}

fn merge_bound(acc: Option<CheckReport>, next: CheckReport) -> Option<CheckReport> {
    Some(match acc {
        None => next,
        Some(a) => {
            let worst = a.worst.min(next.worst);
            CheckReport::bound(&a.name, worst, -a.tol)
        }
    })
}

fn merge_bounds_report(
    acc: Option<GradientBoundsReport>,
    next: GradientBoundsReport,
) -> Option<GradientBoundsReport> {
    Some(match acc {
        None => next,
        Some(a) => {
            let pass = a.pass && next.pass;
            GradientBoundsReport {
                facet_ratio_constant: a.facet_ratio_constant.max(next.facet_ratio_constant),
                log_gradient: merge_bound(Some(a.log_gradient), next.log_gradient).unwrap(),
                hessian_lower: merge_bound(Some(a.hessian_lower), next.hessian_lower).unwrap(),
                vertex_direction: merge_bound(Some(a.vertex_direction), next.vertex_direction)
                    .unwrap(),
                quadratic_comparison: merge_bound(
                    Some(a.quadratic_comparison),
                    next.quadratic_comparison,
                )
                .unwrap(),
                cross_bound: merge_bound(Some(a.cross_bound), next.cross_bound).unwrap(),
                pass,
            }
        }
    })
}

fn merge_remainders(
    acc: Option<RemarkIdentitiesReport>,
    next: RemarkIdentitiesReport,
) -> Option<RemarkIdentitiesReport> {
    Some(match acc {
        None => next,
        Some(a) => {
            let pass = a.pass && next.pass;
            RemarkIdentitiesReport {
                pythagorean: merge_identity(Some(a.pythagorean), next.pythagorean).unwrap(),
                refined_estimate: merge_identity(Some(a.refined_estimate), next.refined_estimate)
                    .unwrap(),
                symmetry: merge_identity(Some(a.symmetry), next.symmetry).unwrap(),
                hessian_cross: merge_identity(Some(a.hessian_cross), next.hessian_cross).unwrap(),
                pass,
            }
        }
    })
}

/// Run every applicable check at `samples` random interior points.
pub fn verify_polytope(p: &Polytope, seed: u64, samples: usize) -> Result<VerificationReport> {
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = p.dim();
    let n = p.num_vertices();
    let null = affine_null_vector(p);
    let has_facets = p.facets().is_some();

    let mut worst_partition = 0.0f64;
    let mut worst_reproduction = 0.0f64;
    let mut hessian_identity: Option<CheckReport> = None;
    let mut representation_identity: Option<CheckReport> = None;
    let mut remainder_identities: Option<RemarkIdentitiesReport> = None;
    let mut gradient_bounds: Option<GradientBoundsReport> = None;

    for i in 0..samples.max(1) {
        let x = p.sample_interior(&mut rng);
        let sol = solve_weights(p, &x, &opts)?;
        let der = differentiate(p, &sol)?;
        let probe_seed = seed.wrapping_add(i as u64).wrapping_mul(0x9e3779b9);

        let mut gsum = DVector::zeros(d);
        let mut repro = DMatrix::zeros(d, d);
        for (k, a) in p.chart_vertices().iter().enumerate() {
            let row = der.grad_p.row(k).transpose();
            gsum += &row;
            repro += a * row.transpose();
        }
        worst_partition = worst_partition.max(gsum.amax());
        worst_reproduction = worst_reproduction.max((repro - DMatrix::identity(d, d)).amax());

        hessian_identity = merge_identity(
            hessian_identity,
            check_hessian_identity(&der, probe_seed),
        );

        // Affine representation shifted off p along the null space when one
        // exists; q = p itself otherwise.
        let mut q = sol.weights.clone();
        if let Some(nv) = &null {
            use rand::Rng;
            let t = rng.random::<f64>() - 0.5;
            for (qk, nk) in q.iter_mut().zip(nv) {
                *qk += t * nk;
            }
        }
        representation_identity = merge_identity(
            representation_identity,
            check_representation_identity(p, &sol, &RepresentationCoefficients { q })?,
        );

        if let Some(nv) = &null {
            remainder_identities = merge_remainders(
                remainder_identities,
                check_representation_remainders(p, &der, nv)?,
            );
        }
        if has_facets {
            gradient_bounds = merge_bounds_report(
                gradient_bounds,
                check_gradient_bounds(p, &der, probe_seed)?,
            );
        }
    }

    let vertex_limits = if has_facets {
        Some(vertex_limit_check(p, &opts)?)
    } else {
        None
    };

    let partition_gradient = CheckReport::identity("partition_gradient", worst_partition, 1e-9);
    let reproduction_gradient =
        CheckReport::identity("reproduction_gradient", worst_reproduction, 1e-9);
    let hessian_identity = hessian_identity.unwrap();
    let representation_identity = representation_identity.unwrap();

    let pass = partition_gradient.pass
        && reproduction_gradient.pass
        && hessian_identity.pass
        && representation_identity.pass
        && remainder_identities.as_ref().map_or(true, |r| r.pass)
        && gradient_bounds.as_ref().map_or(true, |r| r.pass)
        && vertex_limits.as_ref().map_or(true, |r| r.pass);

    Ok(VerificationReport {
        polytope: p.name().to_string(),
        dimension: d,
        num_vertices: n,
        seed,
        samples: samples.max(1),
        partition_gradient,
        reproduction_gradient,
        hessian_identity,
        representation_identity,
        remainder_identities,
        gradient_bounds,
        vertex_limits,
        pass,
    })
}
