//! Geometry oracles: closed-form ball quantities, finite-difference
//! consistency of the distance derivatives, the dense-sampling projection
//! oracle for the ellipsoid, inner approximations and the barrier clauses.

use std::sync::Arc;

use approx::assert_relative_eq;
use nalgebra::DVector;
use viab_core::domains::{
    check_regularity, inner_domain, Barrier, BallDomain, EllipsoidDomain, SmoothDomain,
};
use viab_core::rng::CounterRng;

fn unit_disk() -> BallDomain {
    BallDomain::new(vec![0.0, 0.0], 1.0, None).unwrap()
}

fn ellipse_2_1() -> EllipsoidDomain {
    EllipsoidDomain::new(vec![0.0, 0.0], vec![2.0, 1.0], None).unwrap()
}

#[test]
fn oriented_distance_sign_convention() {
    let d = unit_disk();
    assert_eq!(d.oriented_distance(&[0.0, 0.0]), 1.0);
    assert_eq!(d.oriented_distance(&[1.0, 0.0]), 0.0);
    assert_eq!(d.oriented_distance(&[1.5, 0.0]), -0.5);
}

#[test]
fn ball_gradient_and_hessian_closed_forms() {
    let d = unit_disk();
    let g = d.grad_b(&[0.5, 0.0]).unwrap();
    assert_relative_eq!(g[0], -1.0, max_relative = 1e-12);
    assert_relative_eq!(g[1], 0.0);
    let h = d.hess_b(&[0.5, 0.0]).unwrap();
    assert_relative_eq!(h[(0, 0)], 0.0);
    assert_relative_eq!(h[(1, 1)], -2.0, max_relative = 1e-12);
    assert_relative_eq!(h[(0, 1)], 0.0);

    // grad b on the boundary is minus the outward normal.
    let gb = d.grad_b(&[1.0, 0.0]).unwrap();
    assert_relative_eq!(gb[0], -1.0, max_relative = 1e-12);

    // Eigenvalues at radius r: one 0 (radial), n-1 equal to -1/r.
    let r = 0.8;
    let h = d.hess_b(&[r, 0.0]).unwrap();
    let eig = h.symmetric_eigenvalues();
    let mut ev: Vec<f64> = eig.iter().cloned().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!((ev[0] + 1.0 / r).abs() <= 1e-8, "{ev:?}");
    assert!(ev[1].abs() <= 1e-8, "{ev:?}");

    // Outside the tube the derivatives refuse.
    assert!(d.grad_b(&[0.1, 0.0]).is_err());
    assert!(d.hess_b(&[2.0, 0.0]).is_err());
}

#[test]
fn ball_projection() {
    let d = unit_disk();
    let p = d.project_boundary(&[0.5, 0.0]).unwrap();
    assert_relative_eq!(p[0], 1.0, max_relative = 1e-12);
    assert_relative_eq!(p[1], 0.0);
    // Boundary points are fixed points.
    let q = d.project_boundary(&[0.6, 0.8]).unwrap();
    assert!((q[0] - 0.6).abs() <= 1e-12 && (q[1] - 0.8).abs() <= 1e-12);
}

/// Dense-sampling oracle: minimize |x - y| over boundary samples.
fn brute_force_project(e: &EllipsoidDomain, x: &[f64], samples: usize) -> DVector<f64> {
    let (a, b) = (2.0, 1.0);
    let mut best = DVector::zeros(2);
    let mut best_d = f64::INFINITY;
    for k in 0..samples {
        let th = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
        let y = DVector::from_vec(vec![a * th.cos(), b * th.sin()]);
        let dd = (y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2);
        if dd < best_d {
            best_d = dd;
            best = y;
        }
    }
    let _ = e;
    best
}

#[test]
fn ellipsoid_projection_against_dense_sampling() {
    let e = ellipse_2_1();
    for x in [
        [0.5, 0.3],
        [1.8, 0.2],
        [0.0, 0.85],
        [-1.2, -0.35],
        [1.95, 0.05],
    ] {
        let b = e.oriented_distance(&x);
        if b.abs() >= e.tube_width() {
            continue;
        }
        let p = e.project_boundary(&x).unwrap();
        let oracle = brute_force_project(&e, &x, 200_000);
        let diff = ((p[0] - oracle[0]).powi(2) + (p[1] - oracle[1]).powi(2)).sqrt();
        assert!(diff <= 1e-4, "x = {x:?}: {diff}");

        // The projection satisfies the ellipsoid equation...
        let lvl = (p[0] / 2.0).powi(2) + p[1].powi(2) - 1.0;
        assert!(lvl.abs() <= 1e-10, "constraint residual {lvl}");
        // ... and x - p is parallel to the normal there.
        let n = DVector::from_vec(vec![p[0] / 4.0, p[1]]).normalize();
        let d = DVector::from_vec(vec![x[0] - p[0], x[1] - p[1]]);
        if d.norm() > 1e-12 {
            let cross = (d[0] * n[1] - d[1] * n[0]).abs() / d.norm();
            assert!(cross <= 1e-8, "not parallel to the normal: {cross}");
        }
    }
}

#[test]
fn distance_derivatives_match_finite_differences() {
    // Central differences of b reproduce grad_b; differences of grad_b
    // reproduce hess_b. Random tube points for both shipped domains.
    let domains: Vec<Arc<dyn SmoothDomain>> =
        vec![Arc::new(unit_disk()), Arc::new(ellipse_2_1())];
    let rng = CounterRng::new(99, 0);
    for dom in &domains {
        let eps0 = dom.tube_width();
        for k in 0..200u64 {
            let y = dom.random_boundary_point(&rng, k << 8);
            let g0 = dom.grad_b(y.as_slice()).unwrap();
            let depth = eps0 * (1.6 * rng.uniform((k << 8) + 99) - 0.8);
            let x = &y + &g0 * depth;
            if dom.oriented_distance(x.as_slice()).abs() >= 0.95 * eps0 {
                continue;
            }
            let g = dom.grad_b(x.as_slice()).unwrap();
            assert!((g.norm() - 1.0).abs() <= 1e-8, "eikonal at depth {depth}");
            let h = dom.hess_b(x.as_slice()).unwrap();

            let fd = 1e-6;
            for i in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += fd;
                xm[i] -= fd;
                let num_g =
                    (dom.oriented_distance(xp.as_slice()) - dom.oriented_distance(xm.as_slice()))
                        / (2.0 * fd);
                assert!(
                    (num_g - g[i]).abs() <= 1e-6,
                    "{}: grad[{i}] fd {num_g} vs {}",
                    dom.describe(),
                    g[i]
                );
                let gp = dom.grad_b(xp.as_slice()).unwrap();
                let gm = dom.grad_b(xm.as_slice()).unwrap();
                for j in 0..2 {
                    let num_h = (gp[j] - gm[j]) / (2.0 * fd);
                    assert!(
                        (num_h - h[(i, j)]).abs() <= 1e-4,
                        "{}: hess[{i}{j}] fd {num_h} vs {}",
                        dom.describe(),
                        h[(i, j)]
                    );
                }
            }

            // Projection consistency: b = |x - proj| for interior tube points.
            let b = dom.oriented_distance(x.as_slice());
            if b > 0.0 {
                let p = dom.project_boundary(x.as_slice()).unwrap();
                let tol = 1e-6;
                assert!(((&x - &p).norm() - b).abs() <= tol);
            }
        }
    }
}

#[test]
fn regularity_reports() {
    let disk = unit_disk();
    let rep = check_regularity(&disk, 1000, 500, 7);
    assert!(rep.passed, "{rep:?}");
    assert!((rep.boundary_grad_norm_min - 1.0).abs() <= 1e-10);
    assert!((rep.boundary_grad_norm_max - 1.0).abs() <= 1e-10);
    assert!(rep.hess_lipschitz_estimate.is_finite());

    let ell = ellipse_2_1();
    let rep = check_regularity(&ell, 1000, 500, 7);
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn inner_domains_shift_the_distance() {
    let disk: Arc<dyn SmoothDomain> = Arc::new(unit_disk());
    let q4 = inner_domain(disk.clone(), 4).unwrap();
    // Q_4 of the unit disk is the disk of radius 0.75.
    assert_relative_eq!(q4.oriented_distance(&[0.0, 0.0]), 0.75);
    assert_relative_eq!(q4.oriented_distance(&[0.75, 0.0]), 0.0);
    // Membership: b_K = 0.3 exceeds the threshold 0.25.
    assert!(q4.oriented_distance(&[0.7, 0.0]) > 0.0);
    // Derivatives are the parent's.
    let g = q4.grad_b(&[0.7, 0.0]).unwrap();
    assert_relative_eq!(g[0], -1.0, max_relative = 1e-12);
    // Projection lands on the level set.
    let p = q4.project_boundary(&[0.7, 0.0]).unwrap();
    assert_relative_eq!(p[0], 0.75, max_relative = 1e-12);

    // Nesting: boundary samples of Q_i lie strictly inside Q_{i+1}.
    let q5 = inner_domain(disk.clone(), 5).unwrap();
    let rng = CounterRng::new(3, 0);
    for k in 0..64u64 {
        let y = q4.random_boundary_point(&rng, k << 8);
        assert!(q5.oriented_distance(y.as_slice()) > 0.0);
    }

    // 1/i must stay below the tube width.
    assert!(inner_domain(disk.clone(), 2).is_err());
    assert!(inner_domain(disk, 1).is_err());
}

#[test]
fn barrier_clauses_on_the_ellipsoid() {
    let ell: Arc<dyn SmoothDomain> = Arc::new(ellipse_2_1());
    let bar = Barrier::new(ell.clone());
    // g = b on the identity zone; plateau in the deep interior.
    let rng = CounterRng::new(11, 0);
    for k in 0..2000u64 {
        let y = ell.random_boundary_point(&rng, k << 8);
        let g0 = ell.grad_b(y.as_slice()).unwrap();
        let depth = rng.uniform((k << 8) + 77) * bar.identity_level();
        let x = &y + &g0 * depth;
        let b = ell.oriented_distance(x.as_slice());
        if b > 0.0 && b <= bar.identity_level() {
            assert_eq!(bar.g(x.as_slice()), b);
        }
    }
    let deep = ell.interior_point();
    assert_eq!(bar.g(deep.as_slice()), bar.clamp_level());
    assert!(bar.clamp_level() <= 1.0);
}
