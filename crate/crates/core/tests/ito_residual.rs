//! The functional change-of-variable residual: exact telescoping on
//! coordinate projections, stochastic convergence for the endpoint
//! quadratic under Brownian motion, and the deterministic quadrature rate
//! when the noise is switched off.

use nalgebra::DVector;
use viab_core::calculus::catalog::{EndpointAffine, EndpointQuadratic, TimeEndpoint};
use viab_core::calculus::{ito_residual, FdScheme};
use viab_core::paths::{CadlagPath, PathPair};
use viab_core::sde::catalog::{CatalogCoefficients, DriftKind, SigmaKind};
use viab_core::sde::{simulate_with_stream, SimConfig};
use viab_core::stats::rms;

fn cfg(dt: f64, horizon: f64, seed: u64) -> SimConfig {
    SimConfig {
        dt,
        horizon,
        seed,
        n_paths: 1,
        store_increments: true,
    }
}

fn scheme_for(traj: &viab_core::sde::Trajectory) -> FdScheme {
    let pair = PathPair::with_zero_v(traj.path.clone());
    FdScheme::default_for(&pair)
}

#[test]
fn identity_functional_residual_is_exactly_zero() {
    // 1-D: F = x(t) along an Ornstein-Uhlenbeck path.
    let coeffs =
        CatalogCoefficients::new(DriftKind::Linear { lambda: 1.0 }, SigmaKind::Iso { c: 1.0 }, 1)
            .unwrap();
    let history = CadlagPath::point(&[1.0]).unwrap();
    for seed in 0..8 {
        let traj = simulate_with_stream(&history, &coeffs, &cfg(0.01, 1.0, 100 + seed), 0).unwrap();
        let f = EndpointAffine::coordinate(1, 0);
        let r = ito_residual(&f, &traj, &scheme_for(&traj)).unwrap();
        assert_eq!(r, 0.0, "seed {seed}: residual {r:e}");
    }

    // 2-D with rotational diffusion and a multi-sample initial history.
    let coeffs2 = CatalogCoefficients::new(
        DriftKind::Linear { lambda: 1.0 },
        SigmaKind::RotTangent { c: 1.0 },
        2,
    )
    .unwrap();
    let history2 = CadlagPath::new(
        vec![0.0, 0.1, 0.2],
        vec![vec![0.5, 0.0], vec![0.4, 0.1], vec![0.45, -0.05]],
    )
    .unwrap();
    let traj2 = simulate_with_stream(&history2, &coeffs2, &cfg(0.005, 1.0, 7), 3).unwrap();
    for i in 0..2 {
        let f = EndpointAffine::coordinate(2, i);
        let r = ito_residual(&f, &traj2, &scheme_for(&traj2)).unwrap();
        assert_eq!(r, 0.0, "coordinate {i}: residual {r:e}");
    }
}

#[test]
fn missing_increments_is_a_contract_error() {
    let coeffs =
        CatalogCoefficients::new(DriftKind::Linear { lambda: 1.0 }, SigmaKind::Iso { c: 1.0 }, 1)
            .unwrap();
    let history = CadlagPath::point(&[1.0]).unwrap();
    let mut config = cfg(0.01, 0.5, 3);
    config.store_increments = false;
    let traj = simulate_with_stream(&history, &coeffs, &config, 0).unwrap();
    let f = EndpointAffine::coordinate(1, 0);
    let err = ito_residual(&f, &traj, &scheme_for(&traj)).unwrap_err();
    assert!(matches!(err, viab_core::CoreError::MissingIncrements));
}

#[test]
fn quadratic_under_brownian_motion_converges_with_dt() {
    // RMS residual over a seed batch shrinks when dt halves (a square-root
    // rate, so a factor of about 1.4 per halving).
    let coeffs = CatalogCoefficients::new(
        DriftKind::Constant {
            m: DVector::zeros(2),
        },
        SigmaKind::Iso { c: 1.0 },
        2,
    )
    .unwrap();
    let history = CadlagPath::point(&[0.3, -0.2]).unwrap();
    let n_seeds = 24;
    let mut levels = Vec::new();
    for dt in [4e-3, 2e-3] {
        let residuals: Vec<f64> = (0..n_seeds)
            .map(|s| {
                let traj =
                    simulate_with_stream(&history, &coeffs, &cfg(dt, 0.5, 500 + s), 0).unwrap();
                ito_residual(&EndpointQuadratic, &traj, &scheme_for(&traj)).unwrap()
            })
            .collect();
        levels.push(rms(&residuals));
    }
    assert!(
        levels[0] / levels[1] >= 1.15,
        "residual RMS did not decrease: {levels:?}"
    );
}

#[test]
fn deterministic_quadrature_rate_without_noise() {
    // sigma = 0, smooth drift and functional: the residual is pure
    // quadrature error and decays like O(dt).
    let coeffs =
        CatalogCoefficients::new(DriftKind::Linear { lambda: 1.0 }, SigmaKind::Iso { c: 0.0 }, 1)
            .unwrap();
    let history = CadlagPath::point(&[1.0]).unwrap();
    let f = TimeEndpoint::new("t_times_y", |t: f64, y: &[f64]| t * y[0]);
    let mut residuals = Vec::new();
    for dt in [2e-2, 1e-2, 5e-3] {
        let traj = simulate_with_stream(&history, &coeffs, &cfg(dt, 1.0, 0), 0).unwrap();
        residuals.push(ito_residual(&f, &traj, &scheme_for(&traj)).unwrap().abs());
    }
    assert!(
        residuals[0] / residuals[1] >= 1.6 && residuals[1] / residuals[2] >= 1.6,
        "not O(dt): {residuals:?}"
    );
}
