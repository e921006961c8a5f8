use nalgebra::{DMatrix, DVector};
use qclab::algebra::QuaternionTriple;
use qclab::catalog::{conformal, heisenberg};
use qclab::chart::{frame_field, frame_field_with, lie_bracket, recover_structure, reeb_solve, QCChart};
use qclab::exprlang::parse;
use qclab::{NumericSettings, QcError, Tolerances};

fn point(m: usize, seed: f64) -> Vec<f64> {
    (0..m).map(|r| 0.3 * ((r as f64 + 1.0) * seed).sin()).collect()
}

#[test]
fn heisenberg_origin_is_standard() {
    let st = NumericSettings::default();
    for n in [1, 2] {
        let chart = heisenberg(n).unwrap();
        let m = chart.m();
        let f = frame_field(&chart, &vec![0.0; m], &st).unwrap();
        let eye = DMatrix::<f64>::identity(m, 4 * n);
        assert!((&f.e_h - eye).amax() < 1e-12);
        let std = QuaternionTriple::standard(n);
        for s in 0..3 {
            assert!((f.i.get(s).matrix() - std.get(s).matrix()).amax() < 1e-12, "s={s}");
        }
    }
}

#[test]
fn heisenberg_reeb_fields_are_twice_t_derivatives() {
    let st = NumericSettings::default();
    for n in [1, 2] {
        let chart = heisenberg(n).unwrap();
        let m = chart.m();
        let n4 = 4 * n;
        for k in 1..4 {
            let f = frame_field(&chart, &point(m, k as f64), &st).unwrap();
            let mut expect = DMatrix::zeros(m, 3);
            for s in 0..3 {
                expect[(n4 + s, s)] = 2.0;
            }
            assert!((&f.xi - expect).amax() < 1e-10);
            assert!(f.bi1_residual < 1e-12);
        }
    }
}

#[test]
fn dcoframe_matches_leibniz() {
    // η_1 = exp(u1) du2 plus Heisenberg terms: dη_1 gains exp(u1) du1∧du2.
    let h = heisenberg(1).unwrap();
    let mut rows = h.coeffs().clone();
    rows[0][1] = parse(&format!("{} + exp(u1)", rows[0][1]), 7).unwrap();
    let c = QCChart::new("leibniz", 1, rows).unwrap();
    let u = [0.4, -0.2, 0.1, 0.3, 0.0, 0.5, -0.1];
    let d = c.eval_dcoframe(&u).unwrap();
    let base = h.eval_dcoframe(&u).unwrap();
    let mut extra = DMatrix::zeros(7, 7);
    extra[(0, 1)] = 0.4f64.exp();
    extra[(1, 0)] = -0.4f64.exp();
    assert!((&d[0] - &base[0] - extra).amax() < 1e-14);
    for s in 1..3 {
        assert!((&d[s] - &base[s]).amax() == 0.0);
    }
}

#[test]
fn heisenberg_dcoframe_is_constant() {
    let c = heisenberg(2).unwrap();
    let a = c.eval_dcoframe(&point(11, 1.0)).unwrap();
    let b = c.eval_dcoframe(&point(11, 2.7)).unwrap();
    for s in 0..3 {
        assert_eq!(a[s], b[s]);
        assert!((&a[s] + a[s].transpose()).amax() == 0.0);
    }
}

#[test]
fn repeated_form_is_degenerate() {
    let h = heisenberg(1).unwrap();
    let mut rows = h.coeffs().clone();
    rows[1] = rows[0].clone();
    let c = QCChart::new("degenerate", 1, rows).unwrap();
    let err = recover_structure(&c, &[0.1; 7], &Tolerances::default()).unwrap_err();
    assert!(matches!(err, QcError::DegenerateCoframe { .. }), "{err:?}");
}

#[test]
fn conformal_scaling_scales_metric() {
    let st = NumericSettings::default();
    let base = heisenberg(1).unwrap();
    let mu = parse("exp(0.2*u1)", 7).unwrap();
    let scaled = conformal(&base, &mu).unwrap();
    let u = point(7, 1.3);
    let r0 = recover_structure(&base, &u, &st.tol).unwrap();
    let r1 = recover_structure(&scaled, &u, &st.tol).unwrap();
    let k = mu.eval(&u).unwrap();
    // Compare g on H vectors, which differ between charts only by scaling.
    let f0 = frame_field(&base, &u, &st).unwrap();
    for a in 0..4 {
        for b in 0..4 {
            let x: DVector<f64> = f0.e_h.column(a).into_owned();
            let y: DVector<f64> = f0.e_h.column(b).into_owned();
            let expect = if a == b { k } else { 0.0 };
            assert!((r1.g(&x, &y) - expect).abs() < 1e-10);
            assert!((r0.g(&x, &y) - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
}

#[test]
fn homothety_keeps_structure() {
    let st = NumericSettings::default();
    let base = heisenberg(2).unwrap();
    let scaled = base.scaled_by(&parse("2", 11).unwrap());
    let u = point(11, 0.7);
    let f = frame_field(&scaled, &u, &st).unwrap();
    // ξ scales by 1/2.
    let f0 = frame_field(&base, &u, &st).unwrap();
    assert!((&f.xi * 2.0 - &f0.xi).amax() < 1e-10);
    assert!(f.residuals.quaternion < 1e-10);
}

#[test]
fn perturbed_chart_fails_reeb_condition() {
    let st = NumericSettings::default();
    let h = heisenberg(1).unwrap();
    let mut rows = h.coeffs().clone();
    rows[0][0] = parse(&format!("{} + 0.1*u5^2", rows[0][0]), 7).unwrap();
    let c = QCChart::new("bad", 1, rows).unwrap();
    let u = [0.1, 0.2, -0.1, 0.3, 0.4, 0.1, -0.2];
    match frame_field(&c, &u, &st) {
        Err(QcError::BiquardConditionFail { residual, .. }) => assert!(residual > 1e-6),
        Err(e) => panic!("unexpected error {e:?}"),
        Ok(f) => panic!("accepted with residual {}", f.bi1_residual),
    }
}

#[test]
fn reeb_system_is_well_conditioned_for_n2() {
    let c = heisenberg(2).unwrap();
    let rs = recover_structure(&c, &point(11, 0.4), &Tolerances::default()).unwrap();
    let r = reeb_solve(&rs.jet, &Tolerances::default()).unwrap();
    assert!(r.min_singular > 1e-3, "{}", r.min_singular);
    assert!(r.residual < 1e-12);
}

#[test]
fn frame_varies_smoothly_with_fixed_gauge() {
    let st = NumericSettings::default();
    let base = heisenberg(1).unwrap();
    let c = conformal(&base, &parse("exp(0.2*u1 + 0.1*u6)", 7).unwrap()).unwrap();
    let u = point(7, 0.9);
    let f0 = frame_field(&c, &u, &st).unwrap();
    let mut v = u.clone();
    v[2] += 1e-3;
    v[5] -= 1e-3;
    let f1 = frame_field_with(&c, &v, &f0.gauge, &st).unwrap();
    assert!((&f1.frame - &f0.frame).amax() < 1e-2);
}

#[test]
fn lie_bracket_examples() {
    let st = NumericSettings::default();
    // [∂x, x∂y] = ∂y
    let br = lie_bracket(&st, &[0.3, -0.2], |_| Ok(vec![1.0, 0.0]), |p| Ok(vec![0.0, p[0]])).unwrap();
    assert!((br[0]).abs() < 1e-12 && (br[1] - 1.0).abs() < 1e-12);
    // [x∂y, y∂x] = x∂x − y∂y
    let p = [0.7, -0.4];
    let br = lie_bracket(&st, &p, |q| Ok(vec![0.0, q[0]]), |q| Ok(vec![q[1], 0.0])).unwrap();
    assert!((br[0] - p[0]).abs() < 1e-12 && (br[1] + p[1]).abs() < 1e-12);
}

#[test]
fn heisenberg_brackets_are_reeb_fields() {
    // [e_a, e_b] = -Σ_s dη_s(e_a, e_b) ξ_s, computed on the frame field.
    let st = NumericSettings::default();
    let c = heisenberg(1).unwrap();
    let u = point(7, 1.1);
    let f0 = frame_field(&c, &u, &st).unwrap();
    let field = |a: usize| {
        let c = c.clone();
        let g = f0.gauge.clone();
        let st = st.clone();
        move |p: &[f64]| -> qclab::Result<Vec<f64>> {
            let f = frame_field_with(&c, p, &g, &st)?;
            Ok(f.frame.column(a).iter().copied().collect())
        }
    };
    for (a, b) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
        let br = DVector::from_vec(lie_bracket(&st, &u, field(a), field(b)).unwrap());
        let ea = f0.e_h.column(a).into_owned();
        let eb = f0.e_h.column(b).into_owned();
        let mut expect = DVector::zeros(7);
        for s in 0..3 {
            expect -= f0.xi.column(s) * f0.d_eta(s, &ea, &eb);
        }
        assert!((&br - &expect).amax() < 1e-8, "({a},{b}) {br} vs {expect}");
    }
}
