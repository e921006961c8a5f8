mod common;

use common::point;
use nalgebra::DMatrix;
use qclab::catalog::{conformal, heisenberg, Catalog};
use qclab::chart::QCChart;
use qclab::connection::torsion_tensors;
use qclab::curvature::{
    alpha_identity_check, alpha_identity_with, analyse, curvature, curvature_endo, d_tau_along_xi, ricci_checks,
    step_halving,
};
use qclab::exprlang::parse_with_names;
use qclab::{NumericSettings, QcError};

fn built(name: &str) -> QCChart {
    Catalog::builtin().get(name).unwrap().build().unwrap()
}

#[test]
fn flat_model_has_no_curvature() {
    let st = NumericSettings::default();
    for n in [1, 2] {
        let chart = heisenberg(n).unwrap();
        let c = curvature(&chart, &point(chart.m(), 0.7), &st).unwrap();
        for a in 0..c.m() {
            for b in 0..c.m() {
                assert!(c.r(a, b).amax() < 1e-7);
            }
        }
        assert!(c.ric.amax() < 1e-6);
        assert!(c.scal.abs() < 1e-6 && c.tau.abs() < 1e-6);
    }
}

#[test]
fn curvature_is_antisymmetric_and_metric() {
    let st = NumericSettings::default();
    for name in ["heisenberg-1-conformal", "heisenberg-1-cayley"] {
        let c = curvature(&built(name), &point(7, 1.1), &st).unwrap();
        assert!(c.antisymmetry < 1e-6, "{name}: {}", c.antisymmetry);
        assert!(c.metricity < 1e-6, "{name}: {}", c.metricity);
        assert!(c.ric_symmetry < 1e-5, "{name}: {}", c.ric_symmetry);
        let n = 1.0;
        assert!((c.tau * 16.0 * n * (n + 2.0) - c.scal).abs() < 1e-12 * c.scal.abs().max(1.0));
    }
}

#[test]
fn ricci_splits_into_torsion_and_scalar_parts() {
    let st = NumericSettings::default();
    for (name, m) in [("heisenberg-1-conformal", 7), ("heisenberg-2-conformal", 11)] {
        let pa = analyse(&built(name), &point(m, 0.45), &st).unwrap();
        let rc = ricci_checks(&pa.curv, &pa.tensors);
        assert!(rc.decomposition < 1e-4, "{name}: {}", rc.decomposition);
        assert!(rc.i_defect < 1e-4, "{name}: {}", rc.i_defect);
        assert!(rc.i_invariance > 1e-3, "{name}: {}", rc.i_invariance);
    }
}

#[test]
fn cayley_chart_is_einstein_with_constant_scalar_curvature() {
    let st = NumericSettings::default();
    let chart = built("heisenberg-1-cayley");
    let mut scal = Vec::new();
    for k in 1..4 {
        let u = point(7, 0.37 * k as f64);
        let pa = analyse(&chart, &u, &st).unwrap();
        assert!(pa.tensors.t0_norm() < 1e-6 && pa.tensors.u_norm() < 1e-6);
        let c = &pa.curv;
        let einstein = &c.ric - DMatrix::<f64>::identity(4, 4) * (c.scal / 4.0);
        assert!(einstein.amax() < 1e-4);
        assert!(ricci_checks(c, &pa.tensors).i_invariance < 1e-4);
        assert!(d_tau_along_xi(&chart, c, &[0.0, 0.6, 0.8], &st).unwrap().abs() < 1e-4);
        scal.push(c.scal);
    }
    assert!(scal[0] > 1.0);
    for s in &scal {
        assert!((s - scal[0]).abs() < 1e-5 * scal[0], "{scal:?}");
    }
}

#[test]
fn constant_factor_divides_scalar_curvature() {
    let st = NumericSettings::default();
    let cay = built("heisenberg-1-cayley");
    let names: Vec<&str> = cay.coords().iter().map(String::as_str).collect();
    let two = parse_with_names("2", 7, &names).unwrap();
    let scaled = conformal(&cay, &two).unwrap();
    let u = point(7, 0.9);
    let a = curvature(&cay, &u, &st).unwrap();
    let b = curvature(&scaled, &u, &st).unwrap();
    assert!((b.scal - a.scal / 2.0).abs() < 1e-5 * a.scal.abs());
}

#[test]
fn alpha_identity_holds_and_detects_faults() {
    let st = NumericSettings::default();
    for name in ["heisenberg-1", "heisenberg-1-conformal", "heisenberg-1-cayley"] {
        let c = curvature(&built(name), &point(7, 0.8), &st).unwrap();
        assert!(alpha_identity_check(&c) < 1e-5, "{name}: {}", alpha_identity_check(&c));
    }
    let c = curvature(&built("heisenberg-1-conformal"), &point(7, 0.8), &st).unwrap();
    let n4 = c.n4();
    let faulty = alpha_identity_with(&c, |i, s| {
        c.conn.alpha(i, n4 + s) + if i == 0 && s == 0 { 1e-2 } else { 0.0 }
    });
    assert!((faulty - 1e-2).abs() < 1e-4, "{faulty}");
}

#[test]
fn halving_the_step_shows_second_order_convergence() {
    let chart = built("heisenberg-1-conformal");
    let u = point(7, 0.3);
    let sh = step_halving(&chart, &u, 0.1, &NumericSettings::central2()).unwrap();
    assert!((sh.ratio - 4.0).abs() < 0.5, "{sh:?}");
    sh.check(1e-9).unwrap();
}

#[test]
fn tiny_steps_are_reported_as_noise() {
    let chart = built("heisenberg-1-conformal");
    let sh = step_halving(&chart, &point(7, 0.3), 1e-6, &NumericSettings::central2()).unwrap();
    assert!(matches!(sh.check(1e-9), Err(QcError::StepTooSmall { .. })), "{sh:?}");
}

#[test]
fn curvature_endo_checks_indices() {
    let st = NumericSettings::default();
    let chart = heisenberg(1).unwrap();
    let r = curvature_endo(&chart, &point(7, 0.2), 0, 5, &st).unwrap();
    assert!(r.max_abs() < 1e-7);
    assert!(matches!(
        curvature_endo(&chart, &point(7, 0.2), 0, 7, &st),
        Err(QcError::SizeMismatch { .. })
    ));
}

#[test]
fn tensors_in_the_analysis_match_the_connection() {
    let st = NumericSettings::default();
    let chart = built("heisenberg-1-conformal");
    let pa = analyse(&chart, &point(7, 0.6), &st).unwrap();
    let again = torsion_tensors(pa.conn());
    assert!((&again.t0 - &pa.tensors.t0).amax() == 0.0);
}
