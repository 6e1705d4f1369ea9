use num_complex::Complex64;

use gph::ladder::{conserved_integral, ladder_report, TolerancePolicy};
use gph::nls::{evolve, EvolveParams};
use gph::operator::build_w;
use gph::separable::{apply_expr, product_state, tr_w_ensemble, trace, Ensemble};
use gph::spectral::make_grid;

mod common;
use common::{gaussian, unit_soliton};

fn short() -> EvolveParams {
    EvolveParams {
        kappa: -1,
        dt: 1e-3,
        t_final: 0.2,
        record_every: 50,
    }
}

#[test]
fn operator_trace_tracks_ladder_along_flow() {
    let g = make_grid(256, 20.0).unwrap();
    let traj = evolve(&gaussian(g), &short()).unwrap();
    assert_eq!(traj.len(), 5);
    for n in 1..=5 {
        let w = build_w(n, 1).unwrap();
        for (_, phi) in &traj {
            let t = trace(&apply_expr(&w, &product_state(phi, n).unwrap(), -1).unwrap());
            let i = conserved_integral(phi, n, -1).unwrap();
            assert!((t - i).norm() < 1e-10, "n = {n}: {t} vs {i}");
        }
    }
    let report = ladder_report(&traj, 6, -1).unwrap();
    assert!(
        report.failures(&TolerancePolicy::default()).is_empty(),
        "{:?}",
        report.drift
    );
}

#[test]
fn ensemble_trace_is_convex_combination() {
    let g = make_grid(256, 20.0).unwrap();
    let (a, b) = (gaussian(g), unit_soliton(g));
    let ens = Ensemble::new(vec![(0.3, a.clone()), (0.7, b.clone())]).unwrap();
    for n in 1..=4 {
        let direct = tr_w_ensemble(n, 1, n, &ens, -1).unwrap();
        let averaged: Complex64 = 0.3 * conserved_integral(&a, n, -1).unwrap()
            + 0.7 * conserved_integral(&b, n, -1).unwrap();
        assert!((direct - averaged).norm() < 1e-10);
        assert!((ens.average_integral(n, -1).unwrap() - averaged).norm() < 1e-14);
    }
    let later = ens
        .evolve(&short())
        .unwrap()
        .into_iter()
        .map(|traj| traj.last().unwrap().1.clone());
    let evolved = Ensemble::new(vec![0.3, 0.7].into_iter().zip(later).collect()).unwrap();
    for n in 1..=4 {
        let before = tr_w_ensemble(n, 2, n + 2, &ens, -1).unwrap();
        let after = tr_w_ensemble(n, 2, n + 2, &evolved, -1).unwrap();
        assert!((before - after).norm() < 1e-8, "n = {n}");
    }
}

#[test]
fn defocusing_sign_also_conserves() {
    let g = make_grid(256, 20.0).unwrap();
    let params = EvolveParams {
        kappa: 1,
        ..short()
    };
    let traj = evolve(&gaussian(g), &params).unwrap();
    let report = ladder_report(&traj, 5, 1).unwrap();
    assert!(
        report.failures(&TolerancePolicy::default()).is_empty(),
        "{:?}",
        report.drift
    );
}
