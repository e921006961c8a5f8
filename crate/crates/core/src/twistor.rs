//! Structures on the twistor space at a point `(p, I)`, `I = Σ x_s I_s`: the
//! contact form, Φ, G, the Lie derivative `ℒ_χ G` and finite-difference checks
//! on the local coordinates `(u, x)`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{v_cross, VTriple};
use crate::chart::{bi1_residual, FrameGauge, PointFrame, QCChart};
use crate::connection::{connection_with, ConnectionAtPoint, TorsionTensors};
use crate::curvature::{curvature_with, PointAnalysis};
use crate::error::{QcError, Result};
use crate::fd;
use crate::settings::{NumericSettings, Tolerances};

const UNIT_TOL: f64 = 1e-12;

fn unit_check(point: &[f64], x: &VTriple, label: &str) -> Result<()> {
    let r = (x.norm() - 1.0).abs();
    if r > UNIT_TOL {
        return Err(QcError::Validation {
            point: point.to_vec(),
            invariant: label.to_string(),
            residual: r,
        });
    }
    Ok(())
}

/// A point of the twistor space over the chart.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistorPoint {
    pub u: Vec<f64>,
    pub x: VTriple,
}

impl TwistorPoint {
    pub fn new(u: Vec<f64>, x: VTriple) -> Result<Self> {
        unit_check(&u, &x, "unit fibre vector")?;
        Ok(Self { u, x })
    }
}

/// Tangent vector `X_H^h + (Σ v_s ξ_s)^h + Σ a_s I_s`, with `h` in the `e_h`
/// frame, `v` in the ξ frame and `a` orthogonal to the fibre point.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistorTangent {
    pub h: DVector<f64>,
    pub v: VTriple,
    pub a: VTriple,
}

impl TwistorTangent {
    pub fn new(h: DVector<f64>, v: VTriple, a: VTriple, x: &VTriple) -> Result<Self> {
        let r = x.dot(&a).abs();
        if r > UNIT_TOL {
            return Err(QcError::Validation {
                point: x.0.to_vec(),
                invariant: "vertical part orthogonal to the fibre point".into(),
                residual: r,
            });
        }
        Ok(Self { h, v, a })
    }

    pub(crate) fn raw(h: DVector<f64>, v: VTriple, a: VTriple) -> Self {
        Self { h, v, a }
    }

    pub fn zero(n4: usize) -> Self {
        Self::raw(DVector::zeros(n4), VTriple::default(), VTriple::default())
    }

    pub fn horizontal(h: DVector<f64>) -> Self {
        Self::raw(h, VTriple::default(), VTriple::default())
    }

    pub fn reeb(n4: usize, v: VTriple) -> Self {
        Self::raw(DVector::zeros(n4), v, VTriple::default())
    }

    pub fn vertical(n4: usize, a: VTriple, x: &VTriple) -> Result<Self> {
        Self::new(DVector::zeros(n4), VTriple::default(), a, x)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::raw(&self.h + &o.h, add3(&self.v, &o.v, 1.0), add3(&self.a, &o.a, 1.0))
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::raw(&self.h * k, scale3(&self.v, k), scale3(&self.a, k))
    }

    pub fn max_abs(&self) -> f64 {
        let m3 = |t: &VTriple| t.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        self.h.amax().max(m3(&self.v)).max(m3(&self.a))
    }
}

fn add3(a: &VTriple, b: &VTriple, k: f64) -> VTriple {
    VTriple([a.0[0] + k * b.0[0], a.0[1] + k * b.0[1], a.0[2] + k * b.0[2]])
}

fn scale3(a: &VTriple, k: f64) -> VTriple {
    VTriple([a.0[0] * k, a.0[1] * k, a.0[2] * k])
}

/// Removes the component along `x`.
fn perp(c: &VTriple, x: &VTriple) -> VTriple {
    let xx = x.dot(x);
    add3(c, x, -c.dot(x) / xx)
}

/// Rotation taking `(1,0,0)` to `x`, about the axis `(1,0,0) × x`.
pub fn fibre_rotation(x: &VTriple) -> Matrix3<f64> {
    let x = x.vector();
    let e1 = Vector3::x();
    let k = e1.cross(&x);
    let c = x[0];
    if 1.0 + c < 1e-12 {
        return Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
    }
    let kx = k.cross_matrix();
    Matrix3::identity() + kx + kx * kx / (1.0 + c)
}

/// The frame with `I'_s = Σ_t R_{ts} I_t`, `ξ'_s = Σ_t R_{ts} ξ_t` and the dual
/// forms, where `R` is [`fibre_rotation`]. Then `I'_1 = Σ x_s I_s`.
pub fn gauge_rotate(fr: &PointFrame, x: &VTriple) -> PointFrame {
    let r = fibre_rotation(x);
    let a: [[f64; 3]; 3] = std::array::from_fn(|s| std::array::from_fn(|t| r[(t, s)]));
    let rd = DMatrix::from_fn(3, 3, |i, j| r[(i, j)]);
    let n4 = fr.n4();
    let m = fr.m();
    let mut out = fr.clone();
    out.i = fr.i.rotated(&a);
    out.xi = &fr.xi * &rd;
    out.coframe = rd.tr_mul(&fr.coframe);
    out.dcoframe = std::array::from_fn(|s| {
        let mut d = DMatrix::zeros(m, m);
        for t in 0..3 {
            d += &fr.dcoframe[t] * r[(t, s)];
        }
        d
    });
    out.frame.columns_mut(n4, 3).copy_from(&out.xi);
    let rows = rd.tr_mul(&fr.dual.rows(n4, 3).into_owned());
    out.dual.rows_mut(n4, 3).copy_from(&rows);
    out.bi1_residual = bi1_residual(&out.xi, &out.dcoframe, &out.e_h);
    out
}

/// Pointwise data fixing η^Z, Φ, G and dη^Z on one tangent space.
#[derive(Debug, Clone)]
pub struct TwistorStructure {
    pub x: VTriple,
    /// `I = Σ x_s I_s` in the `e_h` frame.
    pub i_x: DMatrix<f64>,
    pub tau: f64,
}

/// Counts of positive, negative and (numerically) zero eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl TwistorStructure {
    pub fn new(frame: &PointFrame, tau: f64, x: &VTriple) -> Self {
        Self {
            x: *x,
            i_x: frame.i.combination(&x.0).into_matrix(),
            tau,
        }
    }

    pub fn n4(&self) -> usize {
        self.i_x.nrows()
    }

    /// The Reeb field `χ = (Σ x_s ξ_s)^h`.
    pub fn chi(&self) -> TwistorTangent {
        TwistorTangent::reeb(self.n4(), self.x)
    }

    pub fn eta_z(&self, t: &TwistorTangent) -> f64 {
        self.x.dot(&t.v)
    }

    pub fn phi(&self, t: &TwistorTangent) -> TwistorTangent {
        TwistorTangent::raw(&self.i_x * &t.h, v_cross(&self.x, &t.v), v_cross(&self.x, &t.a))
    }

    pub fn d_eta_z(&self, t1: &TwistorTangent, t2: &TwistorTangent) -> f64 {
        2.0 * (&self.i_x * &t1.h).dot(&t2.h) - 2.0 * self.tau * v_cross(&self.x, &t1.v).dot(&t2.v) - t1.v.dot(&t2.a)
            + t2.v.dot(&t1.a)
    }

    /// Closed form of G on lifts and vertical vectors.
    pub fn metric_g(&self, t1: &TwistorTangent, t2: &TwistorTangent) -> f64 {
        let x = &self.x;
        t1.h.dot(&t2.h) - self.tau * t1.v.dot(&t2.v)
            + (self.tau + 1.0) * x.dot(&t1.v) * x.dot(&t2.v)
            + 0.5 * v_cross(x, &t1.v).dot(&t2.a)
            + 0.5 * v_cross(x, &t2.v).dot(&t1.a)
    }

    /// `½ dη^Z(A, ΦB) + η^Z(A) η^Z(B)`.
    pub fn metric_from_d_eta(&self, t1: &TwistorTangent, t2: &TwistorTangent) -> f64 {
        0.5 * self.d_eta_z(t1, &self.phi(t2)) + self.eta_z(t1) * self.eta_z(t2)
    }

    /// Basis of the full tangent space: H lifts, ξ lifts, two vertical vectors.
    pub fn basis(&self) -> Vec<TwistorTangent> {
        let n4 = self.n4();
        let mut out = Vec::with_capacity(n4 + 5);
        for a in 0..n4 {
            let mut h = DVector::zeros(n4);
            h[a] = 1.0;
            out.push(TwistorTangent::horizontal(h));
        }
        for s in 0..3 {
            let mut v = [0.0; 3];
            v[s] = 1.0;
            out.push(TwistorTangent::reeb(n4, VTriple(v)));
        }
        let r = fibre_rotation(&self.x);
        for s in 1..3 {
            let c = r.column(s);
            out.push(TwistorTangent::raw(
                DVector::zeros(n4),
                VTriple::default(),
                VTriple([c[0], c[1], c[2]]),
            ));
        }
        out
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let b = self.basis();
        DMatrix::from_fn(b.len(), b.len(), |i, j| self.metric_g(&b[i], &b[j]))
    }

    pub fn signature(&self) -> Signature {
        let ev = self.gram().symmetric_eigenvalues();
        let scale = ev.amax().max(1.0);
        let mut s = Signature {
            positive: 0,
            negative: 0,
            zero: 0,
        };
        for &e in ev.iter() {
            if e > 1e-10 * scale {
                s.positive += 1;
            } else if e < -1e-10 * scale {
                s.negative += 1;
            } else {
                s.zero += 1;
            }
        }
        s
    }
}

/// Random tangent vector; with `in_d` its ξ-part is orthogonal to `x`.
pub fn random_tangent(rng: &mut impl Rng, n4: usize, x: &VTriple, in_d: bool) -> TwistorTangent {
    let mut r3 = || VTriple(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
    let v0 = r3();
    let a = perp(&r3(), x);
    let v = if in_d { perp(&v0, x) } else { v0 };
    let h = DVector::from_fn(n4, |_, _| rng.random_range(-1.0..1.0));
    TwistorTangent::raw(h, v, a)
}

/// `count` points of S² on a Fibonacci spiral, turned by a seeded angle.
pub fn fibre_points(count: usize, seed: u64) -> Vec<VTriple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset: f64 = rng.random_range(0.0..1.0);
    let golden = (5.0_f64.sqrt() - 1.0) / 2.0;
    (0..count)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (k as f64 * golden + offset).fract();
            VTriple([z, r * phi.cos(), r * phi.sin()])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Normal,
    NotNormal,
    Inconclusive,
}

impl Verdict {
    /// Normal when both quantities are within tolerance, not normal when
    /// either exceeds ten times its tolerance, inconclusive otherwise.
    pub fn classify(residual: f64, t0_norm: f64, tol: &Tolerances) -> Self {
        if residual <= tol.normal && t0_norm <= tol.t0 {
            Verdict::Normal
        } else if residual > 10.0 * tol.normal || t0_norm > 10.0 * tol.t0 {
            Verdict::NotNormal
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Normal => "normal",
            Verdict::NotNormal => "not_normal",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Residuals of the system equivalent to normality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MteResiduals {
    /// `max |T⁰_{ξ'_1}|`.
    pub mte1: f64,
    /// `max_s |ρ'_s(X, ξ'_1) + g([ξ'_s, ξ'_1], X)|`, s = 2, 3.
    pub mte2: f64,
    /// `max_s |2ρ'_s(ξ'_s, ξ'_1) − dτ(ξ'_1)|`, s = 2, 3.
    pub mte3: f64,
    /// `|ρ'_2(ξ'_3, ξ'_1) + ρ'_3(ξ'_2, ξ'_1)|`.
    pub mte4: f64,
}

/// `ℒ_χ G` on `ker η^Z` at `(p, I)` in the rotated frame.
#[derive(Debug, Clone)]
pub struct TwistorReport {
    pub x: VTriple,
    pub rotation: Matrix3<f64>,
    pub tau: f64,
    pub d_tau_xi1: f64,
    /// `(ℒ_χG)(e_a^h, e_b^h) = 2g(T⁰_{ξ'_1} e_a, e_b)`.
    pub hh: DMatrix<f64>,
    /// `(ℒ_χG)(e_a^h, ξ'^h_s)` for s = 2, 3.
    pub hv: [DVector<f64>; 2],
    /// `(ℒ_χG)(ξ'^h_s, ξ'^h_t)` for s, t = 2, 3.
    pub vv: Matrix2<f64>,
    pub normality_residual: f64,
    pub t0_norm: f64,
    pub verdict: Verdict,
    pub mte: MteResiduals,
}

impl TwistorReport {
    /// `(ℒ_χG)(A, B)` assembled from the slots; the χ and vertical slots are 0.
    pub fn evaluate(&self, a: &TwistorTangent, b: &TwistorTangent) -> f64 {
        let r = &self.rotation;
        let va = r.transpose() * a.v.vector();
        let vb = r.transpose() * b.v.vector();
        let mut s = a.h.dot(&(&self.hh * &b.h));
        for k in 0..2 {
            s += va[k + 1] * self.hv[k].dot(&b.h) + vb[k + 1] * self.hv[k].dot(&a.h);
            for l in 0..2 {
                s += va[k + 1] * vb[l + 1] * self.vv[(k, l)];
            }
        }
        s
    }
}

/// `2g(T⁰_ξ X, Y)` rebuilt from the symmetric tensor `T⁰` through
/// `4g(T⁰(ξ_s, X), Y) = −T⁰(I_s X, Y) − T⁰(X, I_s Y)`.
pub fn hh_from_tensor(tensors: &TorsionTensors, i_x: &DMatrix<f64>) -> DMatrix<f64> {
    -(i_x.transpose() * &tensors.t0 + &tensors.t0 * i_x) * 0.5
}

pub fn lie_chi_g(
    chart: &QCChart,
    pa: &PointAnalysis,
    x: &VTriple,
    settings: &NumericSettings,
) -> Result<TwistorReport> {
    let f = pa.frame();
    unit_check(&f.point, x, "unit fibre vector")?;
    let conn = pa.conn();
    let curv = &pa.curv;
    let n4 = f.n4();
    let m = f.m();
    let r = fibre_rotation(x);

    let mut t0x = DMatrix::zeros(n4, n4);
    for s in 0..3 {
        t0x += conn.t0(s).matrix() * x.0[s];
    }
    let hh = t0x.transpose() * 2.0;

    // frame components of ξ'_s
    let xi_p = |s: usize| {
        let mut v = DVector::zeros(m);
        for t in 0..3 {
            v[n4 + t] = r[(t, s)];
        }
        v
    };
    let rho_p = |s: usize, a: &DVector<f64>, b: &DVector<f64>| -> f64 {
        (0..3).map(|t| r[(t, s)] * a.dot(&(&curv.rho[t] * b))).sum()
    };
    let e = |a: usize| {
        let mut v = DVector::zeros(m);
        v[a] = 1.0;
        v
    };
    let xi1 = xi_p(0);
    let d_tau = pa.d_tau_along(chart, &x.0, settings)?;

    let hv: [DVector<f64>; 2] = std::array::from_fn(|k| {
        let s = k + 1;
        DVector::from_fn(n4, |a, _| {
            let mut br = 0.0;
            for b in 0..3 {
                for c in 0..3 {
                    br += r[(b, s)] * r[(c, 0)] * conn.jet.c(n4 + b, n4 + c, a);
                }
            }
            rho_p(s, &e(a), &xi1) + br
        })
    });
    let vv = Matrix2::from_fn(|k, l| {
        let (s, t) = (k + 1, l + 1);
        let d = if s == t { -d_tau } else { 0.0 };
        d + rho_p(s, &xi_p(t), &xi1) + rho_p(t, &xi_p(s), &xi1)
    });

    let normality_residual = hh.amax().max(hv[0].amax()).max(hv[1].amax()).max(vv.amax());
    let t0_norm = pa.tensors.t0_norm();
    let mte = MteResiduals {
        mte1: t0x.amax(),
        mte2: hv[0].amax().max(hv[1].amax()),
        mte3: vv[(0, 0)].abs().max(vv[(1, 1)].abs()),
        mte4: vv[(0, 1)].abs(),
    };
    Ok(TwistorReport {
        x: *x,
        rotation: r,
        tau: curv.tau,
        d_tau_xi1: d_tau,
        hh,
        hv,
        vv,
        normality_residual,
        t0_norm,
        verdict: Verdict::classify(normality_residual, t0_norm, &settings.tol),
        mte,
    })
}

/// Connection data at one base point, used to realise the twistor space in the
/// coordinates `w = (u, x)`.
struct Local {
    conn: ConnectionAtPoint,
    tau: f64,
}

impl Local {
    fn at(chart: &QCChart, u: &[f64], gauge: &FrameGauge, settings: &NumericSettings) -> Result<Self> {
        Ok(Self {
            conn: connection_with(chart, u, gauge, settings)?,
            tau: f64::NAN,
        })
    }

    fn with_tau(chart: &QCChart, u: &[f64], gauge: &FrameGauge, settings: &NumericSettings) -> Result<Self> {
        let c = curvature_with(chart, u, gauge, settings)?;
        Ok(Self {
            tau: c.tau,
            conn: c.conn,
        })
    }

    fn frame(&self) -> &PointFrame {
        self.conn.frame()
    }

    /// `N(X)_{ts} = ⟨∇_X I_s, I_t⟩` for a coordinate vector X.
    fn n_matrix(&self, xu: &DVector<f64>) -> Matrix3<f64> {
        let f = self.frame();
        let n4 = f.n4();
        let comps = f.components(xu);
        let mut out = Matrix3::zeros();
        for (a, w) in self.conn.omega.iter().enumerate() {
            for t in 0..3 {
                for s in 0..3 {
                    out[(t, s)] += comps[a] * w[(n4 + t, n4 + s)];
                }
            }
        }
        out
    }

    fn decompose(&self, x: &VTriple, amb: &[f64]) -> TwistorTangent {
        let f = self.frame();
        let m = f.m();
        let n4 = f.n4();
        let xu = DVector::from_column_slice(&amb[..m]);
        let comps = f.components(&xu);
        let nx = self.n_matrix(&xu) * x.vector();
        TwistorTangent::raw(
            comps.rows(0, n4).into_owned(),
            VTriple([comps[n4], comps[n4 + 1], comps[n4 + 2]]),
            VTriple([amb[m] + nx[0], amb[m + 1] + nx[1], amb[m + 2] + nx[2]]),
        )
    }

    fn recompose(&self, x: &VTriple, t: &TwistorTangent) -> Vec<f64> {
        let f = self.frame();
        let xu = &f.e_h * &t.h + &f.xi * t.v.vector();
        let nx = self.n_matrix(&xu) * x.vector();
        let mut out: Vec<f64> = xu.iter().copied().collect();
        out.extend((0..3).map(|s| t.a.0[s] - nx[s]));
        out
    }

    fn structure(&self, x: &VTriple) -> TwistorStructure {
        TwistorStructure::new(self.frame(), self.tau, x)
    }
}

fn split_w(w: &[f64], m: usize) -> (&[f64], VTriple) {
    (&w[..m], VTriple([w[m], w[m + 1], w[m + 2]]))
}

fn base_w(pa: &PointAnalysis, x: &VTriple) -> Vec<f64> {
    let mut w = pa.frame().point.clone();
    w.extend_from_slice(&x.0);
    w
}

/// Agreement between `ℒ_χG` by direct differencing on `(u, x)` and the slots
/// of a [`TwistorReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub pairs: usize,
    pub max_deviation: f64,
    pub max_direct: f64,
    pub max_closed: f64,
    /// Largest direct value on pairs of vertical vectors.
    pub vertical_max: f64,
}

/// Differences `G` along χ in the coordinates `(u, x)`, with horizontal lifts
/// built from the connection's `⟨∇_X I_s, I_t⟩`, and compares against the
/// closed-form slots on `pairs` random pairs from `ker η^Z`.
pub fn normality_direct_oracle(
    chart: &QCChart,
    pa: &PointAnalysis,
    report: &TwistorReport,
    pairs: usize,
    seed: u64,
    settings: &NumericSettings,
) -> Result<OracleComparison> {
    let x = report.x;
    let f = pa.frame();
    let m = f.m();
    let n4 = f.n4();
    let gauge = &f.gauge;
    let st = settings.stencil.as_ref();
    let h = settings.h_curv;
    let w0 = base_w(pa, &x);
    let local0 = Local {
        conn: pa.conn().clone(),
        tau: pa.curv.tau,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tangents: Vec<(TwistorTangent, TwistorTangent)> = (0..pairs)
        .map(|_| {
            (
                random_tangent(&mut rng, n4, &x, true),
                random_tangent(&mut rng, n4, &x, true),
            )
        })
        .collect();
    let vertical = 3;
    for _ in 0..vertical {
        let a = random_tangent(&mut rng, n4, &x, true);
        let b = random_tangent(&mut rng, n4, &x, true);
        tangents.push((
            TwistorTangent::raw(DVector::zeros(n4), VTriple::default(), a.a),
            TwistorTangent::raw(DVector::zeros(n4), VTriple::default(), b.a),
        ));
    }
    let amb: Vec<(Vec<f64>, Vec<f64>)> = tangents
        .iter()
        .map(|(a, b)| (local0.recompose(&x, a), local0.recompose(&x, b)))
        .collect();

    let chi_at = |w: &[f64]| -> Result<Vec<f64>> {
        let (u, xw) = split_w(w, m);
        let l = Local::at(chart, u, gauge, settings)?;
        Ok(l.recompose(&xw, &TwistorTangent::reeb(n4, xw)))
    };
    let g_tilde = |l: &Local, xw: &VTriple, a: &[f64], b: &[f64]| {
        l.structure(xw).metric_g(&l.decompose(xw, a), &l.decompose(xw, b))
    };

    let chi0 = local0.recompose(&x, &TwistorTangent::reeb(n4, x));
    let along: Vec<f64> = fd::directional(st, h, &w0, &chi0, |w| {
        let (u, xw) = split_w(w, m);
        let l = Local::with_tau(chart, u, gauge, settings)?;
        Ok(amb.iter().map(|(a, b)| g_tilde(&l, &xw, a, b)).collect())
    })?;

    let mut out = OracleComparison {
        pairs,
        max_deviation: 0.0,
        max_direct: 0.0,
        max_closed: 0.0,
        vertical_max: 0.0,
    };
    for (k, ((ta, tb), (a, b))) in tangents.iter().zip(&amb).enumerate() {
        let da: Vec<f64> = fd::directional(st, h, &w0, a, chi_at)?;
        let db: Vec<f64> = fd::directional(st, h, &w0, b, chi_at)?;
        let direct = along[k] + g_tilde(&local0, &x, &da, b) + g_tilde(&local0, &x, a, &db);
        if !direct.is_finite() {
            return Err(QcError::StepTooSmall {
                disagreement: f64::INFINITY,
            });
        }
        if k >= pairs {
            out.vertical_max = out.vertical_max.max(direct.abs());
            continue;
        }
        let closed = report.evaluate(ta, tb);
        out.max_direct = out.max_direct.max(direct.abs());
        out.max_closed = out.max_closed.max(closed.abs());
        out.max_deviation = out.max_deviation.max((direct - closed).abs());
    }
    Ok(out)
}

/// `dη^Z` by differencing the 1-form `Σ x_s η_s(u)` on the coordinates `(u, x)`.
fn d_eta_z_ambient(chart: &QCChart, w: &[f64], settings: &NumericSettings) -> Result<DMatrix<f64>> {
    let m = chart.m();
    let j = fd::jacobian(settings.stencil.as_ref(), settings.h_fd, w, |p| {
        let (u, xw) = split_w(p, m);
        let c = chart.eval_coframe(u)?;
        let mut out: Vec<f64> = (0..m).map(|r| (0..3).map(|s| xw.0[s] * c[(s, r)]).sum()).collect();
        out.extend([0.0; 3]);
        Ok(out)
    })?;
    Ok(j.transpose() - j)
}

/// Closed-form `dη^Z` against exterior differencing on `(u, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DEtaComparison {
    pub pairs: usize,
    pub max_deviation: f64,
    pub tau: f64,
    /// Differenced `dη^Z(ξ'^h_2, ξ'^h_3)`; the closed form is `−2τ`.
    pub xi23: f64,
}

pub fn d_eta_z_oracle(
    chart: &QCChart,
    pa: &PointAnalysis,
    x: &VTriple,
    pairs: usize,
    seed: u64,
    settings: &NumericSettings,
) -> Result<DEtaComparison> {
    let f = pa.frame();
    let n4 = f.n4();
    let local = Local {
        conn: pa.conn().clone(),
        tau: pa.curv.tau,
    };
    let ts = local.structure(x);
    let w0 = base_w(pa, x);
    let d = d_eta_z_ambient(chart, &w0, settings)?;
    let fd_val = |a: &TwistorTangent, b: &TwistorTangent| {
        let va = DVector::from_vec(local.recompose(x, a));
        let vb = DVector::from_vec(local.recompose(x, b));
        va.dot(&(&d * vb))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dev: f64 = 0.0;
    for _ in 0..pairs {
        let a = random_tangent(&mut rng, n4, x, false);
        let b = random_tangent(&mut rng, n4, x, false);
        dev = dev.max((fd_val(&a, &b) - ts.d_eta_z(&a, &b)).abs());
    }
    let r = fibre_rotation(x);
    let col = |s: usize| VTriple([r[(0, s)], r[(1, s)], r[(2, s)]]);
    let x2 = TwistorTangent::reeb(n4, col(1));
    let x3 = TwistorTangent::reeb(n4, col(2));
    let xi23 = fd_val(&x2, &x3);
    dev = dev.max((xi23 - ts.d_eta_z(&x2, &x3)).abs());
    Ok(DEtaComparison {
        pairs,
        max_deviation: dev,
        tau: pa.curv.tau,
        xi23,
    })
}

/// Orientation of the fibre complex structure used by the CR check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FibreOrientation {
    Standard,
    /// `a ↦ −x × a` on vertical vectors.
    Flipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrCheck {
    pub pairs: usize,
    /// Largest component of the Nijenhuis tensor projected to `ker η^Z`.
    pub nijenhuis: f64,
    /// Largest `|dη^Z(JA, JB) − dη^Z(A, B)|` on `ker η^Z`.
    pub levi_invariance: f64,
}

#[derive(Debug, Clone, Copy)]
enum Section {
    Horizontal(usize),
    Reeb([f64; 3]),
    Vertical([f64; 3]),
}

fn unit(x: &VTriple) -> VTriple {
    scale3(x, 1.0 / x.norm())
}

fn j_apply(ts: &TwistorStructure, t: &TwistorTangent, o: FibreOrientation) -> TwistorTangent {
    let mut j = ts.phi(t);
    if o == FibreOrientation::Flipped {
        j.a = scale3(&j.a, -1.0);
    }
    j
}

pub fn cr_nijenhuis_residual(
    chart: &QCChart,
    pa: &PointAnalysis,
    x: &VTriple,
    pairs: usize,
    seed: u64,
    settings: &NumericSettings,
) -> Result<CrCheck> {
    cr_check(chart, pa, x, pairs, seed, FibreOrientation::Standard, settings)
}

/// Nijenhuis tensor of `J = Φ|ker η^Z` on sections built from frame lifts, and
/// J-invariance of the Levi form.
pub fn cr_check(
    chart: &QCChart,
    pa: &PointAnalysis,
    x: &VTriple,
    pairs: usize,
    seed: u64,
    orientation: FibreOrientation,
    settings: &NumericSettings,
) -> Result<CrCheck> {
    let f = pa.frame();
    let m = f.m();
    let n4 = f.n4();
    let gauge = &f.gauge;
    let st = settings.stencil.as_ref();
    let h = settings.h_curv;
    let w0 = base_w(pa, x);
    let local0 = Local {
        conn: pa.conn().clone(),
        tau: pa.curv.tau,
    };

    let section_at = |s: Section, xw: &VTriple| -> TwistorTangent {
        let xh = unit(xw);
        match s {
            Section::Horizontal(a) => {
                let mut hv = DVector::zeros(n4);
                hv[a] = 1.0;
                TwistorTangent::horizontal(hv)
            }
            Section::Reeb(c) => TwistorTangent::reeb(n4, perp(&VTriple(c), &xh)),
            Section::Vertical(c) => TwistorTangent::raw(DVector::zeros(n4), VTriple::default(), perp(&VTriple(c), &xh)),
        }
    };
    let field = |s: Section, apply_j: bool| {
        move |w: &[f64]| -> Result<Vec<f64>> {
            let (u, xw) = split_w(w, m);
            let l = Local::at(chart, u, gauge, settings)?;
            let mut t = section_at(s, &xw);
            if apply_j {
                t = j_apply(&l.structure(&unit(&xw)), &t, orientation);
            }
            Ok(l.recompose(&xw, &t))
        }
    };
    let bracket =
        |a: &dyn Fn(&[f64]) -> Result<Vec<f64>>, b: &dyn Fn(&[f64]) -> Result<Vec<f64>>| -> Result<DVector<f64>> {
            let av = a(&w0)?;
            let bv = b(&w0)?;
            let db: Vec<f64> = fd::directional(st, h, &w0, &av, b)?;
            let da: Vec<f64> = fd::directional(st, h, &w0, &bv, a)?;
            Ok(DVector::from_vec(db) - DVector::from_vec(da))
        };

    let ts0 = local0.structure(x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Pair types cycle through (H,H), (H,W), (H,V), (W,W), (W,V), (V,V).
    const KINDS: [(u8, u8); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    let pick = |kind: u8, rng: &mut ChaCha8Rng| -> Section {
        let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        match kind {
            0 => Section::Horizontal(rng.random_range(0..n4)),
            1 => Section::Reeb(c),
            _ => Section::Vertical(c),
        }
    };
    let mut nij: f64 = 0.0;
    for k in 0..pairs {
        let (ka, kb) = KINDS[k % KINDS.len()];
        let sa = pick(ka, &mut rng);
        let sb = pick(kb, &mut rng);
        let xa = field(sa, false);
        let xb = field(sb, false);
        let ja = field(sa, true);
        let jb = field(sb, true);
        let b_ab = bracket(&xa, &xb)?;
        let b_jj = bracket(&ja, &jb)?;
        let b_ja = bracket(&ja, &xb)?;
        let b_aj = bracket(&xa, &jb)?;
        let mixed = local0.decompose(x, (b_ja + b_aj).as_slice());
        let jm = j_apply(&ts0, &mixed, orientation);
        let mut total = local0.decompose(x, (b_jj - b_ab).as_slice()).add(&jm.scaled(-1.0));
        total.v = perp(&total.v, x);
        nij = nij.max(total.max_abs());
    }

    let d = d_eta_z_ambient(chart, &w0, settings)?;
    let dz = |a: &TwistorTangent, b: &TwistorTangent| {
        let va = DVector::from_vec(local0.recompose(x, a));
        let vb = DVector::from_vec(local0.recompose(x, b));
        va.dot(&(&d * vb))
    };
    let mut levi: f64 = 0.0;
    for _ in 0..pairs {
        let a = random_tangent(&mut rng, n4, x, true);
        let b = random_tangent(&mut rng, n4, x, true);
        let ja = j_apply(&ts0, &a, orientation);
        let jb = j_apply(&ts0, &b, orientation);
        levi = levi.max((dz(&ja, &jb) - dz(&a, &b)).abs());
    }
    Ok(CrCheck {
        pairs,
        nijenhuis: nij,
        levi_invariance: levi,
    })
}
