//! The canonical connection at a point, assembled in the adapted frame.
//!
//! Frame indices: `0..4n` are `e_a`, `4n + s` is `ξ_{s+1}`. Connection matrices
//! act on columns: `∇_{E_A} E_B = Σ_C Ω_A[(C, B)] E_C`.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::algebra::{
    four_part_decompose, p_raw, sp1_raw, torsion_raw, torsion_skew_basis, EndoMatrix, QuaternionTriple,
};
use crate::chart::{frame_field, frame_field_with, least_squares, FrameGauge, PointFrame, QCChart};
use crate::error::{QcError, Result};
use crate::fd;
use crate::settings::{NumericSettings, Tolerances};

/// A frame together with its first derivatives and structure functions.
#[derive(Debug, Clone)]
pub struct FrameJet {
    pub frame: PointFrame,
    /// `∂_r E` for each coordinate r.
    pub d_frame: Vec<DMatrix<f64>>,
    /// `∂_r M_s` for each coordinate r.
    pub d_i: Vec<[DMatrix<f64>; 3]>,
    structure: Vec<f64>,
    /// Largest disagreement between differenced and exact V-components of brackets.
    pub cartan_residual: f64,
}

impl FrameJet {
    pub fn m(&self) -> usize {
        self.frame.m()
    }

    pub fn n4(&self) -> usize {
        self.frame.n4()
    }

    /// `c^C_{AB}`: component on `E_C` of `[E_A, E_B]`.
    pub fn c(&self, a: usize, b: usize, c: usize) -> f64 {
        let m = self.m();
        self.structure[(a * m + b) * m + c]
    }

    /// Frame components of `[E_A, E_B]`.
    pub fn bracket(&self, a: usize, b: usize) -> DVector<f64> {
        let m = self.m();
        DVector::from_fn(m, |c, _| self.c(a, b, c))
    }

    /// `X(E)` for a coordinate vector X.
    pub fn frame_along(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.m();
        let mut acc = DMatrix::zeros(m, m);
        for (r, d) in self.d_frame.iter().enumerate() {
            acc += d * x[r];
        }
        acc
    }

    /// `X(M_s)` for a coordinate vector X.
    pub fn i_along(&self, x: &DVector<f64>, s: usize) -> DMatrix<f64> {
        let n4 = self.n4();
        let mut acc = DMatrix::zeros(n4, n4);
        for (r, d) in self.d_i.iter().enumerate() {
            acc += &d[s] * x[r];
        }
        acc
    }
}

pub fn frame_jet(chart: &QCChart, u: &[f64], settings: &NumericSettings) -> Result<FrameJet> {
    let frame = frame_field(chart, u, settings)?;
    jet_from_frame(chart, frame, settings)
}

pub fn frame_jet_with(chart: &QCChart, u: &[f64], gauge: &FrameGauge, settings: &NumericSettings) -> Result<FrameJet> {
    let frame = frame_field_with(chart, u, gauge, settings)?;
    jet_from_frame(chart, frame, settings)
}

fn jet_from_frame(chart: &QCChart, frame: PointFrame, settings: &NumericSettings) -> Result<FrameJet> {
    let m = frame.m();
    let n4 = frame.n4();
    let st = settings.stencil.as_ref();
    let mut d_frame = Vec::with_capacity(m);
    let mut d_i = Vec::with_capacity(m);
    let mut dir = vec![0.0; m];
    for r in 0..m {
        dir[r] = 1.0;
        let mut d: Vec<DMatrix<f64>> = fd::directional(st, settings.h_fd, &frame.point, &dir, |p| {
            let f = frame_field_with(chart, p, &frame.gauge, settings)?;
            let [i1, i2, i3] = f.i.as_array().clone().map(EndoMatrix::into_matrix);
            Ok(vec![f.frame, i1, i2, i3])
        })?;
        dir[r] = 0.0;
        let i3 = d.pop().expect("four entries");
        let i2 = d.pop().expect("four entries");
        let i1 = d.pop().expect("four entries");
        d_frame.push(d.pop().expect("four entries"));
        d_i.push([i1, i2, i3]);
    }

    let e = &frame.frame;
    let along: Vec<DMatrix<f64>> = (0..m)
        .map(|a| {
            let mut acc = DMatrix::zeros(m, m);
            for (r, d) in d_frame.iter().enumerate() {
                acc += d * e[(r, a)];
            }
            acc
        })
        .collect();
    let mut structure = vec![0.0; m * m * m];
    let mut cartan: f64 = 0.0;
    for a in 0..m {
        for b in 0..m {
            let br = along[a].column(b) - along[b].column(a);
            let comp = &frame.dual * br;
            let base = (a * m + b) * m;
            for c in 0..n4 {
                structure[base + c] = comp[c];
            }
            // η_t([E_A, E_B]) = −dη_t(E_A, E_B) since η_t(E_B) is constant.
            for t in 0..3 {
                let exact = -e.column(a).dot(&(&frame.dcoframe[t] * e.column(b)));
                cartan = cartan.max((comp[n4 + t] - exact).abs());
                structure[base + n4 + t] = exact;
            }
        }
    }
    Ok(FrameJet {
        frame,
        d_frame,
        d_i,
        structure,
        cartan_residual: cartan,
    })
}

/// `(Γ_a)_{cb} = g(∇_{e_a} e_b, e_c)` by the Koszul formula with H-brackets.
pub fn horizontal_partial(jet: &FrameJet, tol: &Tolerances) -> Result<Vec<EndoMatrix>> {
    let n4 = jet.n4();
    let c = |a, b, k| jet.c(a, b, k);
    let gamma: Vec<DMatrix<f64>> = (0..n4)
        .map(|a| DMatrix::from_fn(n4, n4, |k, b| 0.5 * (c(a, b, k) - c(b, k, a) + c(k, a, b))))
        .collect();
    let mut metricity: f64 = 0.0;
    let mut torsion: f64 = 0.0;
    for a in 0..n4 {
        metricity = metricity.max((&gamma[a] + gamma[a].transpose()).amax());
        for b in 0..n4 {
            for k in 0..n4 {
                let r = gamma[a][(k, b)] - gamma[b][(k, a)] - c(a, b, k);
                torsion = torsion.max(r.abs());
            }
        }
    }
    for (check, residual) in [("horizontal metricity", metricity), ("horizontal torsion", torsion)] {
        if !(residual <= tol.torsion) {
            return Err(QcError::TorsionStructureFail { check, residual });
        }
    }
    Ok(gamma.into_iter().map(EndoMatrix::wrap).collect())
}

/// `X − Σ_u ⟨X, M_u⟩ M_u`.
fn off_q(x: &DMatrix<f64>, t: &QuaternionTriple) -> DMatrix<f64> {
    let a = sp1_raw(x, t);
    let mut r = x.clone();
    for u in 0..3 {
        r -= t.get(u).matrix() * a.0[u];
    }
    r
}

fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

#[derive(Debug, Clone)]
pub struct VerticalPart {
    /// `(B_s)_{ab}`: component on `e_a` of `[ξ_s, e_b]`.
    pub bracket: [EndoMatrix; 3],
    /// Matrices of `∇_{ξ_s}` on H.
    pub c: [EndoMatrix; 3],
    /// Torsion endomorphisms `T_s = C_s − B_s`.
    pub t: [EndoMatrix; 3],
    /// Largest off-Q part of `∇_{ξ_s} I_t` after the solve.
    pub q_residual: f64,
}

/// `∇_{ξ_s}` on H: skew, agreeing with the bracket on sp(n) ⊕ sp(1), with the
/// remaining component fixed by requiring `∇_{ξ_s} I_t ∈ Q`.
pub fn vertical_on_h(jet: &FrameJet, tol: &Tolerances) -> Result<VerticalPart> {
    let n4 = jet.n4();
    let f = &jet.frame;
    let triple = &f.i;
    let basis = torsion_skew_basis(triple);
    let mut bracket = Vec::with_capacity(3);
    let mut conn = Vec::with_capacity(3);
    let mut q_residual: f64 = 0.0;
    for s in 0..3 {
        let b = DMatrix::from_fn(n4, n4, |a, k| jet.c(n4 + s, k, a));
        let mut c = p_raw(&b, triple);
        let proj = sp1_raw(&b, triple);
        for u in 0..3 {
            c += triple.get(u).matrix() * proj.0[u];
        }
        let xi_s: DVector<f64> = f.xi.column(s).into_owned();
        let d_i: [DMatrix<f64>; 3] = std::array::from_fn(|t| jet.i_along(&xi_s, t));
        let residual_of = |c: &DMatrix<f64>| -> Vec<DMatrix<f64>> {
            (0..3)
                .map(|t| off_q(&(&d_i[t] + commutator(c, triple.get(t).matrix())), triple))
                .collect()
        };
        if !basis.is_empty() {
            let r0 = residual_of(&c);
            let rows = 3 * n4 * n4;
            let mut a = DMatrix::zeros(rows, basis.len());
            for (i, k) in basis.iter().enumerate() {
                for t in 0..3 {
                    let col = off_q(&commutator(k, triple.get(t).matrix()), triple);
                    a.view_mut((t * n4 * n4, i), (n4 * n4, 1))
                        .copy_from_slice(col.as_slice());
                }
            }
            let mut rhs = DVector::zeros(rows);
            for t in 0..3 {
                rhs.rows_mut(t * n4 * n4, n4 * n4).copy_from_slice(r0[t].as_slice());
            }
            let rhs = -rhs;
            let kappa = match least_squares(&a, &rhs) {
                Some(k) => k,
                None => a
                    .svd(true, true)
                    .solve(&rhs, 1e-12)
                    .map_err(|_| QcError::IllConditioned { min_singular: 0.0 })?,
            };
            for (i, k) in basis.iter().enumerate() {
                c += k * kappa[i];
            }
        }
        let r = residual_of(&c).iter().map(|x| x.amax()).fold(0.0, f64::max);
        if !(r <= tol.q_preserve) {
            return Err(QcError::QPreservationFail {
                index: s + 1,
                residual: r,
            });
        }
        q_residual = q_residual.max(r);
        bracket.push(b);
        conn.push(c);
    }
    let t: Vec<DMatrix<f64>> = (0..3).map(|s| &conn[s] - &bracket[s]).collect();
    let wrap3 = |v: Vec<DMatrix<f64>>| -> [EndoMatrix; 3] {
        let mut it = v.into_iter().map(EndoMatrix::wrap);
        std::array::from_fn(|_| it.next().expect("three entries"))
    };
    Ok(VerticalPart {
        bracket: wrap3(bracket),
        c: wrap3(conn),
        t: wrap3(t),
        q_residual,
    })
}

#[derive(Debug, Clone)]
pub struct XiDerivatives {
    /// `along_h[a][(u, s)]`: component on `ξ_u` of `∇_{e_a} ξ_s`.
    pub along_h: Vec<Matrix3<f64>>,
    /// `along_v[t][(u, s)]`: component on `ξ_u` of `∇_{ξ_t} ξ_s`.
    pub along_v: [Matrix3<f64>; 3],
    /// `alpha[k][A] = α_k(E_A)`.
    pub alpha: [DVector<f64>; 3],
    /// Largest `|g(∇_A ξ_s, ξ_u) + g(∇_A ξ_u, ξ_s)|`.
    pub skew_residual: f64,
    /// Largest failure of `∇_{e_a} I_s ∈ Q` with sp(1)-part matching `∇_{e_a} ξ_s`.
    pub h_q_residual: f64,
}

/// `∇ξ` along H from brackets, along V by transferring `∇_{ξ_t} I_s` through φ.
pub fn xi_derivatives(
    jet: &FrameJet,
    gamma: &[EndoMatrix],
    vertical: &VerticalPart,
    tol: &Tolerances,
) -> Result<XiDerivatives> {
    let n4 = jet.n4();
    let m = jet.m();
    let f = &jet.frame;
    let triple = &f.i;
    let along_h: Vec<Matrix3<f64>> = (0..n4)
        .map(|a| Matrix3::from_fn(|u, s| jet.c(a, n4 + s, n4 + u)))
        .collect();
    let along_v: [Matrix3<f64>; 3] = std::array::from_fn(|t| {
        let xi_t: DVector<f64> = f.xi.column(t).into_owned();
        let mut v = Matrix3::zeros();
        for s in 0..3 {
            let d = jet.i_along(&xi_t, s) + commutator(vertical.c[t].matrix(), triple.get(s).matrix());
            let p = sp1_raw(&d, triple);
            for u in 0..3 {
                v[(u, s)] = p.0[u];
            }
        }
        v
    });

    let mut h_q: f64 = 0.0;
    for a in 0..n4 {
        let e_a: DVector<f64> = f.e_h.column(a).into_owned();
        for s in 0..3 {
            let d = jet.i_along(&e_a, s) + commutator(gamma[a].matrix(), triple.get(s).matrix());
            h_q = h_q.max(off_q(&d, triple).amax());
            let p = sp1_raw(&d, triple);
            for u in 0..3 {
                h_q = h_q.max((p.0[u] - along_h[a][(u, s)]).abs());
            }
        }
    }
    if !(h_q <= tol.q_preserve) {
        return Err(QcError::QPreservationFail {
            index: 0,
            residual: h_q,
        });
    }

    let block = |idx: usize| if idx < n4 { along_h[idx] } else { along_v[idx - n4] };
    let mut skew: f64 = 0.0;
    let alpha: [DVector<f64>; 3] = std::array::from_fn(|k| {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        DVector::from_fn(m, |idx, _| block(idx)[(j, i)])
    });
    for idx in 0..m {
        let v = block(idx);
        skew = skew.max((v + v.transpose()).amax());
    }
    Ok(XiDerivatives {
        along_h,
        along_v,
        alpha,
        skew_residual: skew,
        h_q_residual: h_q,
    })
}

#[derive(Debug, Clone)]
pub struct TorsionSplit {
    pub t0: [EndoMatrix; 3],
    pub b: [EndoMatrix; 3],
    pub u: EndoMatrix,
    /// Largest disagreement between `−I_s b_s` and their average.
    pub u_spread: f64,
    /// Largest structural residual checked.
    pub residual: f64,
}

/// `T_s = T⁰_s + b_s`, `b_s = I_s u`, with the structural identities checked.
pub fn torsion_split(t: &[EndoMatrix; 3], triple: &QuaternionTriple, tol: &Tolerances) -> Result<TorsionSplit> {
    let n4 = triple.get(0).dim();
    let t0: [EndoMatrix; 3] = std::array::from_fn(|s| t[s].sym());
    let b: [EndoMatrix; 3] = std::array::from_fn(|s| t[s].skew());
    let us: Vec<DMatrix<f64>> = (0..3).map(|s| -(triple.get(s).matrix() * b[s].matrix())).collect();
    let u = (&us[0] + &us[1] + &us[2]) / 3.0;
    let u_spread = us.iter().map(|x| (x - &u).amax()).fold(0.0, f64::max);

    let m = |s: usize| triple.get(s).matrix();
    let mut checks: Vec<(&'static str, f64)> = Vec::new();
    let mut traces: f64 = 0.0;
    let mut space: f64 = 0.0;
    for s in 0..3 {
        let ts = t[s].matrix();
        traces = traces.max(ts.trace().abs());
        for k in 0..3 {
            traces = traces.max((ts * m(k)).trace().abs());
        }
        space = space.max((ts - torsion_raw(ts, triple)).amax());
    }
    checks.push(("torsion in (sp(n)+sp(1))^perp", space));
    checks.push(("trace-free torsion", traces / n4 as f64));
    let anti = (0..3)
        .map(|s| (t0[s].matrix() * m(s) + m(s) * t0[s].matrix()).amax())
        .fold(0.0, f64::max);
    checks.push(("T0_s I_s = -I_s T0_s", anti));
    let parts = t0
        .iter()
        .map(|x| four_part_decompose(x, triple))
        .collect::<Result<Vec<_>>>()?;
    let cross = [
        (m(1) * parts[1].p_pmm.matrix() - m(0) * parts[0].p_mpm.matrix()).amax(),
        (m(2) * parts[2].p_mpm.matrix() - m(1) * parts[1].p_mmp.matrix()).amax(),
        (m(0) * parts[0].p_mmp.matrix() - m(2) * parts[2].p_pmm.matrix()).amax(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    checks.push(("four-part cross relations", cross));
    checks.push(("b_s = I_s u", u_spread));
    checks.push(("u symmetric", (&u - u.transpose()).amax()));
    checks.push(("u traceless", u.trace().abs() / n4 as f64));
    let comm = (0..3).map(|k| commutator(&u, m(k)).amax()).fold(0.0, f64::max);
    checks.push(("u commutes with I_s", comm));
    if n4 == 4 {
        checks.push(("u = 0 in dimension 7", u.amax()));
    }
    let mut worst: f64 = 0.0;
    for (check, residual) in checks {
        if !(residual <= tol.torsion) {
            return Err(QcError::TorsionStructureFail { check, residual });
        }
        worst = worst.max(residual);
    }
    Ok(TorsionSplit {
        t0,
        b,
        u: EndoMatrix::wrap(u),
        u_spread,
        residual: worst,
    })
}

/// Everything about the connection at one point.
#[derive(Debug, Clone)]
pub struct ConnectionAtPoint {
    pub jet: FrameJet,
    /// `(Γ_a)_{cb} = g(∇_{e_a} e_b, e_c)`.
    pub gamma: Vec<EndoMatrix>,
    pub vertical: VerticalPart,
    pub xi: XiDerivatives,
    pub split: TorsionSplit,
    /// `Ω_A` for every frame direction.
    pub omega: Vec<DMatrix<f64>>,
}

impl ConnectionAtPoint {
    pub fn frame(&self) -> &PointFrame {
        &self.jet.frame
    }

    pub fn t(&self, s: usize) -> &EndoMatrix {
        &self.vertical.t[s]
    }

    pub fn t0(&self, s: usize) -> &EndoMatrix {
        &self.split.t0[s]
    }

    pub fn u_tensor(&self) -> &EndoMatrix {
        &self.split.u
    }

    /// `α_k(E_A)`.
    pub fn alpha(&self, k: usize, a: usize) -> f64 {
        self.xi.alpha[k][a]
    }
}

pub fn connection(chart: &QCChart, u: &[f64], settings: &NumericSettings) -> Result<ConnectionAtPoint> {
    connection_from_jet(frame_jet(chart, u, settings)?, &settings.tol)
}

pub fn connection_with(
    chart: &QCChart,
    u: &[f64],
    gauge: &FrameGauge,
    settings: &NumericSettings,
) -> Result<ConnectionAtPoint> {
    connection_from_jet(frame_jet_with(chart, u, gauge, settings)?, &settings.tol)
}

pub fn connection_from_jet(jet: FrameJet, tol: &Tolerances) -> Result<ConnectionAtPoint> {
    let gamma = horizontal_partial(&jet, tol)?;
    let vertical = vertical_on_h(&jet, tol)?;
    let xi = xi_derivatives(&jet, &gamma, &vertical, tol)?;
    let split = torsion_split(&vertical.t, &jet.frame.i, tol)?;
    let n4 = jet.n4();
    let m = jet.m();
    let omega = (0..m)
        .map(|idx| {
            let mut w = DMatrix::zeros(m, m);
            let h = if idx < n4 { &gamma[idx] } else { &vertical.c[idx - n4] };
            w.view_mut((0, 0), (n4, n4)).copy_from(h.matrix());
            let v = if idx < n4 {
                xi.along_h[idx]
            } else {
                xi.along_v[idx - n4]
            };
            w.view_mut((n4, n4), (3, 3)).copy_from(&v);
            w
        })
        .collect();
    Ok(ConnectionAtPoint {
        jet,
        gamma,
        vertical,
        xi,
        split,
        omega,
    })
}

/// `T⁰` and `U` as bilinear forms on the `e_h` frame: `T0[(a, b)] = T⁰(e_a, e_b)`.
#[derive(Debug, Clone)]
pub struct TorsionTensors {
    pub t0: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// `T⁰(X,Y) + Σ_s T⁰(I_sX, I_sY)`.
    pub propt: f64,
    /// `U(X,Y) − U(I_sX, I_sY)`.
    pub u_invariance: f64,
    /// Traces of `T⁰`, `T⁰I_s`, `U`, `UI_s`.
    pub traces: f64,
    /// `4g(T⁰(ξ_s,X),Y) + T⁰(I_sX,Y) + T⁰(X,I_sY)`.
    pub newequiv: f64,
    pub symmetry: f64,
}

impl TorsionTensors {
    pub fn t0_norm(&self) -> f64 {
        self.t0.norm()
    }

    pub fn u_norm(&self) -> f64 {
        self.u.norm()
    }
}

pub fn torsion_tensors(conn: &ConnectionAtPoint) -> TorsionTensors {
    let triple = &conn.frame().i;
    let m = |s: usize| triple.get(s).matrix();
    let mut op = DMatrix::zeros(conn.jet.n4(), conn.jet.n4());
    for s in 0..3 {
        op += conn.t0(s).matrix() * m(s);
    }
    let t0 = op.transpose();
    let u = conn.u_tensor().matrix().transpose();
    let mut propt = t0.clone();
    let mut u_inv: f64 = 0.0;
    let mut traces = t0.trace().abs().max(u.trace().abs());
    let mut newequiv: f64 = 0.0;
    for s in 0..3 {
        propt += m(s).transpose() * &t0 * m(s);
        u_inv = u_inv.max((&u - m(s).transpose() * &u * m(s)).amax());
        traces = traces.max((&t0 * m(s)).trace().abs()).max((&u * m(s)).trace().abs());
        let lhs = conn.t0(s).matrix().transpose() * 4.0;
        let rhs = -(m(s).transpose() * &t0 + &t0 * m(s));
        newequiv = newequiv.max((lhs - rhs).amax());
    }
    let symmetry = (&t0 - t0.transpose()).amax().max((&u - u.transpose()).amax());
    TorsionTensors {
        propt: propt.amax(),
        u_invariance: u_inv,
        traces,
        newequiv,
        symmetry,
        t0,
        u,
    }
}

/// Largest `|g(T(ξ_s,e_a),e_b) − [−(T⁰(I_se_a,e_b) + T⁰(e_a,I_se_b))/4 + U(I_se_a,e_b)]|`.
pub fn newtor_check(conn: &ConnectionAtPoint, tensors: &TorsionTensors) -> f64 {
    let triple = &conn.frame().i;
    let mut r: f64 = 0.0;
    for s in 0..3 {
        let ms = triple.get(s).matrix();
        let lhs = conn.t(s).matrix().transpose();
        let rhs = -(ms.transpose() * &tensors.t0 + &tensors.t0 * ms) / 4.0 + ms.transpose() * &tensors.u;
        r = r.max((lhs - rhs).amax());
    }
    r
}
