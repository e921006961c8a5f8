mod common;

use common::{point, random_orthogonal, rng};
use nalgebra::DMatrix;
use qclab::algebra::project_torsion_space;
use qclab::catalog::{conformal, heisenberg, Catalog};
use qclab::chart::{frame_field, FrameGauge, QCChart};
use qclab::connection::{connection, connection_with, newtor_check, torsion_tensors, TorsionTensors};
use qclab::exprlang::parse_with_names;
use qclab::NumericSettings;

fn factor_chart(n: usize, mu: &str) -> QCChart {
    let base = heisenberg(n).unwrap();
    let names: Vec<&str> = base.coords().iter().map(String::as_str).collect();
    conformal(&base, &parse_with_names(mu, base.m(), &names).unwrap()).unwrap()
}

fn deformed() -> QCChart {
    Catalog::builtin()
        .get("heisenberg-1-conformal")
        .unwrap()
        .build()
        .unwrap()
}

#[test]
fn heisenberg_connection_vanishes() {
    let st = NumericSettings::default();
    for n in [1, 2] {
        let chart = heisenberg(n).unwrap();
        for k in 1..3 {
            let c = connection(&chart, &point(chart.m(), k as f64), &st).unwrap();
            for w in &c.omega {
                assert!(w.amax() < 1e-9, "n={n}: {}", w.amax());
            }
            for s in 0..3 {
                assert!(c.t(s).max_abs() < 1e-9);
                assert!(c.vertical.bracket[s].max_abs() < 1e-9);
                assert!(c.alpha(s, 0).abs() < 1e-9);
            }
            let tt = torsion_tensors(&c);
            assert!(tt.t0_norm() < 1e-9 && tt.u_norm() < 1e-9);
            assert!(newtor_check(&c, &tt) < 1e-10);
        }
    }
}

#[test]
fn linear_factor_gives_metric_torsion_free_horizontal_part() {
    let st = NumericSettings::default();
    let chart = factor_chart(1, "1 + 0.1*x1");
    let c = connection(&chart, &point(7, 0.9), &st).unwrap();
    let n4 = 4;
    let mut biggest: f64 = 0.0;
    for a in 0..n4 {
        let g = c.gamma[a].matrix();
        biggest = biggest.max(g.amax());
        assert!((g + g.transpose()).amax() < 1e-8);
        for b in 0..n4 {
            // ∇_a e_b − ∇_b e_a − [e_a, e_b]_H
            let br = c.jet.bracket(a, b);
            for k in 0..n4 {
                let r = c.gamma[a][(k, b)] - c.gamma[b][(k, a)] - br[k];
                assert!(r.abs() < 1e-7, "a={a} b={b} k={k}: {r}");
            }
        }
    }
    assert!(biggest > 1e-3);
    assert!(c.jet.cartan_residual < 1e-6);
}

#[test]
fn vertical_connection_is_skew_and_preserves_q() {
    let st = NumericSettings::default();
    for chart in [deformed(), factor_chart(2, "exp(0.2*x1)")] {
        let c = connection(&chart, &point(chart.m(), 0.4), &st).unwrap();
        assert!(c.xi.skew_residual < 1e-8);
        assert!(c.xi.h_q_residual < 1e-7);
        assert!(c.vertical.q_residual < 1e-7);
        for w in &c.omega {
            assert!((w + w.transpose()).amax() < 1e-8);
        }
    }
}

#[test]
fn deformed_torsion_is_trace_free_and_in_the_torsion_space() {
    let st = NumericSettings::default();
    let chart = deformed();
    let c = connection(&chart, &point(7, 0.7), &st).unwrap();
    let tr = &c.frame().i;
    let mut norm: f64 = 0.0;
    for s in 0..3 {
        let t = c.t(s);
        norm = norm.max(t.max_abs());
        let proj = project_torsion_space(t, tr).unwrap();
        assert!(proj.sub(t).max_abs() < 1e-8);
        assert!(t.trace().abs() < 1e-7);
        for k in 0..3 {
            assert!(t.mul(tr.get(k)).trace().abs() < 1e-7);
        }
        // T⁰_{ξ_s} I_s = −I_s T⁰_{ξ_s}
        assert!(c.t0(s).anticommutator(tr.get(s)).max_abs() < 1e-7);
    }
    assert!(norm > 1e-3);
    assert!(c.u_tensor().max_abs() < 1e-8);
    assert!(c.split.residual < 1e-7);
}

fn assert_structural(tt: &TorsionTensors) {
    assert!(tt.propt < 1e-7, "propt {}", tt.propt);
    assert!(tt.traces < 1e-7, "traces {}", tt.traces);
    assert!(tt.newequiv < 1e-7, "newequiv {}", tt.newequiv);
    assert!(tt.symmetry < 1e-8, "symmetry {}", tt.symmetry);
    assert!(tt.u_invariance < 1e-7, "u invariance {}", tt.u_invariance);
}

#[test]
fn torsion_tensor_identities_hold_on_deformations() {
    let st = NumericSettings::default();
    for (chart, u_zero) in [(deformed(), true), (factor_chart(2, "exp(0.2*x1)"), false)] {
        let c = connection(&chart, &point(chart.m(), 1.3), &st).unwrap();
        let tt = torsion_tensors(&c);
        assert_structural(&tt);
        assert!(tt.t0_norm() > 1e-4);
        assert!(newtor_check(&c, &tt) < 1e-7);
        if u_zero {
            assert!(tt.u_norm() < 1e-8);
        } else {
            assert!(tt.u_norm() > 1e-4, "n=2 u {}", tt.u_norm());
            assert!(c.split.u_spread < 1e-7);
        }
    }
}

#[test]
fn corrupted_u_is_detected_by_newtor() {
    let st = NumericSettings::default();
    let chart = deformed();
    let c = connection(&chart, &point(7, 0.2), &st).unwrap();
    let mut tt = torsion_tensors(&c);
    assert!(newtor_check(&c, &tt) < 1e-7);
    tt.u[(0, 0)] += 1e-3;
    tt.u[(1, 1)] += 1e-3;
    let r = newtor_check(&c, &tt);
    assert!(r > 5e-4 && r < 2e-3, "{r}");
}

fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

#[test]
fn invariants_do_not_depend_on_the_horizontal_frame() {
    let st = NumericSettings::default();
    let chart = factor_chart(2, "exp(0.2*x1)");
    let u = point(11, 0.8);
    let base = frame_field(&chart, &u, &st).unwrap();
    let c0 = connection(&chart, &u, &st).unwrap();
    let t0 = torsion_tensors(&c0);
    let (e0, f0) = (sorted_eigenvalues(&t0.u), sorted_eigenvalues(&t0.t0));
    let mut r = rng(10);
    for _ in 0..10 {
        let gauge = FrameGauge {
            pivots: base.gauge.pivots.clone(),
            rotation: Some(random_orthogonal(8, &mut r)),
        };
        let c = connection_with(&chart, &u, &gauge, &st).unwrap();
        let tt = torsion_tensors(&c);
        assert!((tt.t0_norm() - t0.t0_norm()).abs() < 1e-7);
        assert!((tt.u_norm() - t0.u_norm()).abs() < 1e-7);
        for (a, b) in sorted_eigenvalues(&tt.u).iter().zip(&e0) {
            assert!((a - b).abs() < 1e-7);
        }
        for (a, b) in sorted_eigenvalues(&tt.t0).iter().zip(&f0) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}

#[test]
fn rotating_the_coframe_triple_leaves_the_tensors_unchanged() {
    let st = NumericSettings::default();
    let chart = deformed();
    let (c, s) = (0.6f64, 0.8f64);
    // rotation about the second axis followed by one about the first
    let a = [[c, 0.0, s], [s * s, c, -s * c], [-c * s, s, c * c]];
    let rot = chart.rotated(&a);
    let u = point(7, 0.5);
    let t1 = torsion_tensors(&connection(&chart, &u, &st).unwrap());
    let t2 = torsion_tensors(&connection(&rot, &u, &st).unwrap());
    assert!((&t1.t0 - &t2.t0).amax() < 1e-7);
    assert!((&t1.u - &t2.u).amax() < 1e-7);
}

#[test]
fn homothety_keeps_torsion_zero() {
    let st = NumericSettings::default();
    let chart = Catalog::builtin()
        .get("heisenberg-1-homothetic")
        .unwrap()
        .build()
        .unwrap();
    let tt = torsion_tensors(&connection(&chart, &point(7, 0.3), &st).unwrap());
    assert!(tt.t0_norm() < 1e-9 && tt.u_norm() < 1e-9);
}

// x1 has zero horizontal Hessian on the flat model, so only the term quadratic
// in the gradient of the factor survives and T⁰ scales like the slope squared.
#[test]
fn torsion_grows_quadratically_with_the_factor_slope() {
    let st = NumericSettings::default();
    let u = point(7, 0.6);
    let norms: Vec<f64> = [1e-2, 2e-2, 4e-2]
        .iter()
        .map(|e| {
            let c = factor_chart(1, &format!("1 + {e}*x1"));
            torsion_tensors(&connection(&c, &u, &st).unwrap()).t0_norm()
        })
        .collect();
    assert!(norms[0] > 0.0);
    assert!((norms[1] / norms[0] - 4.0).abs() < 0.2, "{norms:?}");
    assert!((norms[2] / norms[1] - 4.0).abs() < 0.2, "{norms:?}");
}
