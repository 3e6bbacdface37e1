//! Acceptance gate: one test per criterion, each printing a single summary
//! line. Run with `cargo test --test acceptance -- --nocapture` for the
//! measured numbers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polybary::calculus::{
    affine_null_vector, check_gradient_bounds, check_hessian_identity,
    check_representation_identity, check_representation_remainders, differentiate,
    estimate_sqrt_lipschitz, FieldSample, RepresentationCoefficients,
};
use polybary::geometry::{build_polytope, make_box, make_polygon, make_simplex, Polytope};
use polybary::lp::in_convex_hull;
use polybary::matrix::{
    dd_trace1_polytope, factorize_field, is_diagonally_dominant,
    sample_dd_trace1,
};
use polybary::solver::{solve_weights, SolverOptions};
use polybary::stencil::{apply_stencil, consistency_report, stencil_at};
use polybary::verify::verify_polytope;

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn random_hexagon(rng: &mut ChaCha8Rng) -> Polytope {
    // Six points on a circle are always in convex position.
    let mut angles: Vec<f64> = (0..6)
        .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Keep the angles separated so no two vertices coincide.
    for i in 1..6 {
        if angles[i] - angles[i - 1] < 0.05 {
            angles[i] = angles[i - 1] + 0.05;
        }
    }
    let cx = rng.random::<f64>() - 0.5;
    let cy = rng.random::<f64>() - 0.5;
    let r = 0.5 + rng.random::<f64>();
    let verts: Vec<[f64; 2]> = angles
        .iter()
        .map(|t| [cx + r * t.cos(), cy + r * t.sin()])
        .collect();
    make_polygon(&verts).unwrap()
}

fn random_triangle(rng: &mut ChaCha8Rng) -> Polytope {
    loop {
        let pts: Vec<[f64; 2]> = (0..3)
            .map(|_| [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0])
            .collect();
        // Reject thin triangles; the checks assume a non-degenerate chart.
        let area = ((pts[1][0] - pts[0][0]) * (pts[2][1] - pts[0][1])
            - (pts[2][0] - pts[0][0]) * (pts[1][1] - pts[0][1]))
            .abs();
        if area > 0.3 {
            if let Ok(p) = make_polygon(&pts) {
                return p;
            }
        }
    }
}

/// Pool of (polytope, interior points) pairs spanning the required families.
fn sample_pool(seed: u64, per_polytope: usize) -> Vec<(Polytope, Vec<DVector<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Vec::new();
    for i in 0..16 {
        let p = match i % 4 {
            0 => {
                let a = rng.random::<f64>() - 0.5;
                let b = a + 0.5 + rng.random::<f64>();
                make_box(&[a], &[b]).unwrap()
            }
            1 => random_triangle(&mut rng),
            2 => {
                let a = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
                let b = [a[0] + 0.5 + rng.random::<f64>(), a[1] + 0.5 + rng.random::<f64>()];
                make_box(&a, &b).unwrap()
            }
            _ => random_hexagon(&mut rng),
        };
        let points: Vec<DVector<f64>> =
            (0..per_polytope).map(|_| p.sample_interior(&mut rng)).collect();
        pool.push((p, points));
    }
    pool
}

#[test]
fn criterion_1_golden_cases() {
    let o = opts();
    // Interval: weights (1 - x, x).
    let interval = make_box(&[0.0], &[1.0]).unwrap();
    for &t in &[0.05, 0.3, 0.5, 0.77, 0.99] {
        let x = interval.to_chart(&DVector::from_vec(vec![t]));
        let sol = solve_weights(&interval, &x, &o).unwrap();
        assert!((sol.weights[0] - (1.0 - t)).abs() <= 1e-12);
        assert!((sol.weights[1] - t).abs() <= 1e-12);
    }
    // Vertex centroids: uniform weights with lambda = 0 at zero residual.
    for p in [
        make_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
        make_simplex(3).unwrap(),
        random_hexagon(&mut ChaCha8Rng::seed_from_u64(1)),
    ] {
        let n = p.num_vertices() as f64;
        let sol = solve_weights(&p, &p.centroid_chart(), &o).unwrap();
        assert!(sol.lambda.norm() <= 1e-12);
        assert!(sol.residual <= 1e-12);
        for w in &sol.weights {
            assert!((w - 1.0 / n).abs() <= 1e-12);
        }
    }
    // Simplices: weights are the affine barycentric coordinates.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in [1usize, 2, 3, 4] {
        let p = make_simplex(d).unwrap();
        for _ in 0..10 {
            let x = p.sample_interior(&mut rng);
            let sol = solve_weights(&p, &x, &o).unwrap();
            let mut m = DMatrix::zeros(d + 1, d + 1);
            let mut rhs = DVector::zeros(d + 1);
            for (k, a) in p.chart_vertices().iter().enumerate() {
                for i in 0..d {
                    m[(i, k)] = a[i];
                }
                m[(d, k)] = 1.0;
            }
            for i in 0..d {
                rhs[i] = x[i];
            }
            rhs[d] = 1.0;
            let bary = m.lu().solve(&rhs).unwrap();
            for (w, b) in sol.weights.iter().zip(bary.iter()) {
                assert!((w - b).abs() <= 1e-10, "{w} vs {b}");
            }
        }
    }
    println!("criterion 1: golden cases pass");
}

/// Brute-force maximizer of `sum ln q_k` over the one-parameter family of
/// affine representations, for polytopes with exactly one redundancy.
fn brute_force_weights(p: &Polytope, x: &DVector<f64>) -> Vec<f64> {
    let n = p.num_vertices();
    let d = p.dim();
    assert_eq!(n, d + 2, "oracle needs a one-parameter representation family");
    let nv = DVector::from_vec(affine_null_vector(p).unwrap());

    let mut m = DMatrix::zeros(d + 1, n);
    let mut rhs = DVector::zeros(d + 1);
    for (k, a) in p.chart_vertices().iter().enumerate() {
        for i in 0..d {
            m[(i, k)] = a[i];
        }
        m[(d, k)] = 1.0;
    }
    for i in 0..d {
        rhs[i] = x[i];
    }
    rhs[d] = 1.0;
    let q0 = m.svd(true, true).solve(&rhs, 1e-13).unwrap();

    // Positivity interval for q0 + t nv.
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for k in 0..n {
        if nv[k] > 1e-14 {
            lo = lo.max(-q0[k] / nv[k]);
        } else if nv[k] < -1e-14 {
            hi = hi.min(-q0[k] / nv[k]);
        } else {
            assert!(q0[k] > 0.0);
        }
    }
    assert!(lo < hi);

    // The objective is strictly concave in t; bisect on its derivative.
    let dphi = |t: f64| -> f64 {
        (0..n).map(|k| nv[k] / (q0[k] + t * nv[k])).sum()
    };
    let (mut a, mut b) = (lo + 1e-13 * (hi - lo), hi - 1e-13 * (hi - lo));
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if dphi(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let t = 0.5 * (a + b);
    (0..n).map(|k| q0[k] + t * nv[k]).collect()
}

#[test]
fn criterion_2_brute_force_oracle() {
    let o = opts();
    let square = make_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let dd = dd_trace1_polytope(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for p in [&square, &dd.polytope] {
        for _ in 0..50 {
            let x = p.sample_interior(&mut rng);
            let sol = solve_weights(p, &x, &o).unwrap();
            let oracle = brute_force_weights(p, &x);
            for (w, q) in sol.weights.iter().zip(&oracle) {
                worst = worst.max((w - q).abs());
            }
        }
    }
    assert!(worst <= 1e-8, "worst gap {worst:.3e}");
    println!("criterion 2: oracle equivalence pass (worst gap {worst:.3e})");
}

#[test]
fn criterion_3_identity_suite() {
    let o = opts();
    let pool = sample_pool(23, 15); // 16 polytopes x 15 points = 240 pairs
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut pairs = 0usize;
    for (p, points) in &pool {
        let n = p.num_vertices();
        let null = affine_null_vector(p);
        // Frame for the vertex-deletion recursion: first vertex at origin.
        // Removing a vertex of an interval leaves a point, so skip those.
        let a1 = p.chart_vertices()[0].clone();
        let shifted: Vec<DVector<f64>> = p.chart_vertices().iter().map(|v| v - &a1).collect();
        let sub = if n >= 3 {
            Some(build_polytope(&shifted[1..], None, "reduced").unwrap())
        } else {
            None
        };

        for x in points {
            pairs += 1;
            let sol = solve_weights(p, x, &o).unwrap();
            let der = differentiate(p, &sol).unwrap();

            // Partition and reproduction of the point.
            let psum: f64 = sol.weights.iter().sum();
            assert!((psum - 1.0).abs() <= 1e-10);
            let mut recon = DVector::zeros(p.dim());
            for (w, a) in sol.weights.iter().zip(p.chart_vertices()) {
                recon += a * *w;
            }
            assert!((recon - x).norm() <= 1e-10);

            // Representation identity, shifted off p when possible.
            let mut q = sol.weights.clone();
            if let Some(nv) = &null {
                let t = rng.random::<f64>() - 0.5;
                for (qk, nk) in q.iter_mut().zip(nv) {
                    *qk += t * nk;
                }
            }
            let rep =
                check_representation_identity(p, &sol, &RepresentationCoefficients { q }).unwrap();
            assert!(rep.pass, "{rep:?}");

            // Hessian identity.
            let h = check_hessian_identity(&der, 31 + pairs as u64);
            assert!(h.pass, "{h:?}");

            // Remainder identities (zero-sum q trivial when none exists).
            let q0 = null.clone().unwrap_or_else(|| vec![0.0; n]);
            let rem = check_representation_remainders(p, &der, &q0).unwrap();
            assert!(rem.pass, "{rem:?}");

            // Vertex-deletion recursion.
            if let Some(sub) = &sub {
                let p1 = sol.weights[0];
                let y = sub.to_chart(&((x - &a1) / (1.0 - p1)));
                if let Ok(bar) = solve_weights(sub, &y, &o) {
                    for k in 1..n {
                        let expected = (1.0 - p1) * bar.weights[k - 1];
                        assert!(
                            (sol.weights[k] - expected).abs() <= 1e-8,
                            "recursion: {} vs {}",
                            sol.weights[k],
                            expected
                        );
                    }
                }
            }
        }
    }
    assert!(pairs >= 200);
    println!("criterion 3: identity suite pass ({pairs} pairs)");
}

#[test]
fn criterion_4_bound_suite() {
    let o = opts();
    let pool = sample_pool(23, 15);
    let mut checked = 0usize;
    for (p, points) in &pool {
        let n = p.num_vertices() as f64;
        for x in points {
            checked += 1;
            let sol = solve_weights(p, x, &o).unwrap();
            let der = differentiate(p, &sol).unwrap();

            // Weight lower bound from the ray exit distance.
            for (k, a) in p.chart_vertices().iter().enumerate() {
                let xi = x - a;
                if xi.norm() < 1e-9 {
                    continue;
                }
                let dxa = p.ray_exit_distance(x, &xi).unwrap().distance;
                let bound = dxa / (n * dxa + n * xi.norm());
                assert!(sol.weights[k] >= bound - 1e-12);
            }

            let rep = check_gradient_bounds(p, &der, 47 + checked as u64).unwrap();
            assert!(rep.vertex_direction.pass, "{:?}", rep.vertex_direction);
            assert!(rep.quadratic_comparison.pass, "{:?}", rep.quadratic_comparison);
            assert!(rep.hessian_lower.pass, "{:?}", rep.hessian_lower);
            assert!(rep.log_gradient.pass, "{:?}", rep.log_gradient);
            assert!(rep.facet_ratio_constant.is_finite());
        }
    }

    // Stability of the facet-ratio constant between boundary levels.
    let square = make_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let mut ratios = Vec::new();
    for delta in [1e-4, 1e-6] {
        let x = DVector::from_vec(vec![delta, 0.5]);
        let sol = solve_weights(&square, &square.to_chart(&x), &o).unwrap();
        let der = differentiate(&square, &sol).unwrap();
        let rep = check_gradient_bounds(&square, &der, 7).unwrap();
        assert!(rep.facet_ratio_constant.is_finite());
        ratios.push(rep.facet_ratio_constant);
    }
    let variation = (ratios[0] - ratios[1]).abs() / ratios[0].max(ratios[1]);
    assert!(variation <= 0.05, "ratio variation {variation:.4}: {ratios:?}");
    println!(
        "criterion 4: bound suite pass ({checked} points, ratio variation {variation:.4})"
    );
}

#[test]
fn criterion_5_finite_difference_cross_check() {
    let o = opts();
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let square = make_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let hexagon = random_hexagon(&mut rng);
    let h = 1e-5;
    let mut worst_grad = 0.0f64;
    let mut worst_hess = 0.0f64;
    let mut count = 0usize;
    'outer: for p in [&square, &hexagon] {
        loop {
            let x = p.sample_interior(&mut rng);
            if p.min_facet_distance(&x).unwrap() < 5e-3 {
                continue;
            }
            let sol = solve_weights(p, &x, &o).unwrap();
            let der = differentiate(p, &sol).unwrap();
            let d = p.dim();
            for i in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let sp = solve_weights(p, &xp, &o).unwrap();
                let sm = solve_weights(p, &xm, &o).unwrap();
                for k in 0..p.num_vertices() {
                    let fd = (sp.weights[k] - sm.weights[k]) / (2.0 * h);
                    let an = der.grad_p[(k, i)];
                    worst_grad = worst_grad.max((an - fd).abs() / fd.abs().max(1.0));
                }
                let fd_lambda = (&sp.lambda - &sm.lambda) / (2.0 * h);
                let an_col = der.hess_u.column(i).into_owned();
                worst_hess = worst_hess
                    .max((&an_col - &fd_lambda).norm() / fd_lambda.norm().max(1.0));
            }
            count += 1;
            if count >= 50 {
                break 'outer;
            }
        }
    }
    assert!(worst_grad <= 1e-4, "grad mismatch {worst_grad:.3e}");
    assert!(worst_hess <= 1e-4, "hess mismatch {worst_hess:.3e}");
    println!(
        "criterion 5: derivative cross-check pass (grad {worst_grad:.3e}, hess {worst_hess:.3e})"
    );
}

#[test]
fn criterion_6_lipschitz_estimates() {
    let o = opts();
    // P = [0,1], u = sin^2 y on 10^4 grid points.
    let interval = make_box(&[0.0], &[1.0]).unwrap();
    let grid = 10_000;
    let samples: Vec<FieldSample> = (0..=grid)
        .map(|i| {
            let y = std::f64::consts::TAU * i as f64 / grid as f64;
            FieldSample {
                y: DVector::from_vec(vec![y]),
                value: DVector::from_vec(vec![y.sin().powi(2)]),
            }
        })
        .collect();
    let est = estimate_sqrt_lipschitz(&interval, &samples, &o).unwrap();
    let slope = est.per_vertex[1];
    assert!((0.99..=1.01).contains(&slope), "sqrt(p_2) slope {slope}");

    // Smooth path in the DD quadrilateral: estimates stable under halving.
    let model = dd_trace1_polytope(2).unwrap();
    let path = |t: f64| -> DVector<f64> {
        // Centroid toward the (e_1 + e_2) vertex, flattening out near it.
        let s = 0.9 * (std::f64::consts::FRAC_PI_2 * t).sin().powi(2);
        let u = DMatrix::from_row_slice(2, 2, &[0.5, 0.45 * s, 0.45 * s, 0.5]);
        model.embedding.embed(&u)
    };
    let run = |n: usize| -> Vec<f64> {
        let samples: Vec<FieldSample> = (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                FieldSample {
                    y: DVector::from_vec(vec![t]),
                    value: path(t),
                }
            })
            .collect();
        estimate_sqrt_lipschitz(&model.polytope, &samples, &o)
            .unwrap()
            .per_vertex
    };
    let coarse = run(1000);
    let fine = run(2000);
    for (k, (a, b)) in coarse.iter().zip(&fine).enumerate() {
        if a.max(*b) < 1e-9 {
            continue;
        }
        let change = (a - b).abs() / a.max(*b);
        assert!(change <= 0.05, "vertex {k}: {a} -> {b} ({change:.4})");
    }
    println!("criterion 6: Lipschitz estimates pass (interval slope {slope:.6})");
}

#[test]
fn criterion_7_factorization_and_dd_certification() {
    let o = opts();
    let model = dd_trace1_polytope(2).unwrap();

    // Reconstruction along a smooth field.
    let samples: Vec<(DVector<f64>, DMatrix<f64>)> = (0..=200)
        .map(|i| {
            let t = i as f64 / 200.0;
            let c = 0.44 * (std::f64::consts::TAU * t).sin();
            let d = 0.5 + 0.3 * (std::f64::consts::TAU * t).cos() * 0.5;
            (
                DVector::from_vec(vec![t]),
                DMatrix::from_row_slice(2, 2, &[d, c * d.min(1.0 - d), c * d.min(1.0 - d), 1.0 - d]),
            )
        })
        .collect();
    let fact = factorize_field(&model, &samples, &o).unwrap();
    let worst = fact
        .samples
        .iter()
        .map(|s| s.reconstruction_error)
        .fold(0.0f64, f64::max);
    assert!(worst <= 1e-9, "reconstruction {worst:.3e}");

    // Extremality of every claimed vertex.
    let chart = model.polytope.chart_vertices();
    for k in 0..chart.len() {
        let others: Vec<DVector<f64>> = chart
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, v)| v.clone())
            .collect();
        assert!(!in_convex_hull(&others, &chart[k]));
    }

    // Membership both ways on 1000 random samples.
    let mut rng = ChaCha8Rng::seed_from_u64(67);
    let hull: Vec<DVector<f64>> = chart.to_vec();
    for _ in 0..1000 {
        let u = sample_dd_trace1(2, &mut rng);
        let x = model.polytope.to_chart(&model.embedding.embed(&u));
        assert!(in_convex_hull(&hull, &x), "D sample outside the hull: {u}");
        let y = model.polytope.sample_interior(&mut rng);
        let v = model.embedding.unembed(&model.polytope.to_ambient(&y));
        assert!(is_diagonally_dominant(&v, 1e-10), "hull sample outside D: {v}");
        assert!((v.trace() - 1.0).abs() <= 1e-10);
    }
    println!("criterion 7: factorization pass (worst reconstruction {worst:.3e})");
}

#[test]
fn criterion_8_stencil() {
    let o = opts();
    let model = dd_trace1_polytope(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let values = [
        DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]),
        DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.6]),
        DMatrix::from_row_slice(2, 2, &[0.65, -0.2, -0.2, 0.35]),
        DMatrix::from_row_slice(2, 2, &[0.8, 0.05, 0.05, 0.2]),
    ];

    // Exactness on 100 random quadratics; nonnegative coefficients.
    let mut worst_quad = 0.0f64;
    for i in 0..100 {
        let u = &values[i % values.len()];
        let h = 0.02 + 0.1 * rng.random::<f64>();
        let spec = stencil_at(&model, u, h, &o).unwrap();
        assert!(spec.entries.iter().all(|e| e.coeff >= 0.0));
        assert!(spec.center <= 0.0);
        let raw = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() - 0.5);
        let a = (&raw + raw.transpose()) * 0.5;
        let b = DVector::from_fn(2, |_, _| rng.random::<f64>() - 0.5);
        let x = DVector::from_fn(2, |_, _| rng.random::<f64>() - 0.5);
        let exact = 2.0 * (u * &a).trace();
        let got = apply_stencil(&spec, |z| (z.transpose() * &a * z)[0] + b.dot(z), &x);
        worst_quad = worst_quad.max((got - exact).abs() / (1.0 + exact.abs()));
    }
    assert!(worst_quad <= 1e-12, "quadratic error {worst_quad:.3e}");

    // Order >= 1.9 on sin * cos products over h, h/2, h/4.
    let steps = [0.1, 0.05, 0.025];
    let mut min_order = f64::INFINITY;
    for u in &values {
        let specs: Vec<_> = steps.iter().map(|&h| stencil_at(&model, u, h, &o).unwrap()).collect();
        for _ in 0..5 {
            let (al, be) = (0.7 + rng.random::<f64>(), 0.7 + rng.random::<f64>());
            let (p1, p2) = (rng.random::<f64>(), rng.random::<f64>());
            let x = DVector::from_fn(2, |_, _| rng.random::<f64>());
            let f = |z: &DVector<f64>| (al * z[0] + p1).sin() * (be * z[1] + p2).cos();
            let s1 = (al * x[0] + p1).sin();
            let c1 = (al * x[0] + p1).cos();
            let s2 = (be * x[1] + p2).sin();
            let c2 = (be * x[1] + p2).cos();
            let exact = -u[(0, 0)] * al * al * s1 * c2
                - 2.0 * u[(0, 1)] * al * be * c1 * s2
                - u[(1, 1)] * be * be * s1 * c2;
            let errs: Vec<f64> = specs
                .iter()
                .map(|spec| (apply_stencil(spec, f, &x) - exact).abs())
                .collect();
            for w in errs.windows(2) {
                if w[0] > 1e-9 {
                    min_order = min_order.min((w[0] / w[1]).log2());
                }
            }
        }
    }
    assert!(min_order >= 1.9, "observed order {min_order:.3}");

    // Centroid coefficients (1/4, 1/4, 1/8, 1/8) / h^2.
    let h = 0.1;
    let spec = stencil_at(&model, &values[0], h, &o).unwrap();
    for e in &spec.entries {
        let axis = e.offset.iter().filter(|v| v.abs() > 0.5).count();
        let expected = if axis == 1 { 0.25 } else { 0.125 } / (h * h);
        assert!((e.coeff - expected).abs() <= 1e-10 / (h * h));
    }
    println!(
        "criterion 8: stencil pass (quad {worst_quad:.3e}, order {min_order:.3})"
    );
}

#[test]
fn criterion_9_determinism() {
    let p = make_polygon(&[[0.0, 0.0], [2.0, 0.0], [2.4, 1.4], [1.0, 2.1], [-0.4, 1.2]]).unwrap();
    let a = serde_json::to_string(&verify_polytope(&p, 4242, 25).unwrap()).unwrap();
    let b = serde_json::to_string(&verify_polytope(&p, 4242, 25).unwrap()).unwrap();
    assert_eq!(a, b);

    let model = dd_trace1_polytope(2).unwrap();
    let values = vec![DMatrix::from_row_slice(2, 2, &[0.45, 0.1, 0.1, 0.55])];
    let r1 = serde_json::to_string(
        &consistency_report(&model, &values, &[0.08, 0.04], 9).unwrap(),
    )
    .unwrap();
    let r2 = serde_json::to_string(
        &consistency_report(&model, &values, &[0.08, 0.04], 9).unwrap(),
    )
    .unwrap();
    assert_eq!(r1, r2);
    println!("criterion 9: determinism pass");
}
