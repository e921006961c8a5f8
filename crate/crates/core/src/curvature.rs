//! Curvature of the canonical connection by differencing its coefficient field.

use nalgebra::{DMatrix, DVector};

use crate::algebra::{inner_raw, EndoMatrix};
use crate::chart::{FrameGauge, PointFrame, QCChart};
use crate::connection::{connection, connection_with, ConnectionAtPoint, TorsionTensors};
use crate::error::{QcError, Result};
use crate::fd;
use crate::settings::NumericSettings;

#[derive(Debug, Clone)]
pub struct CurvatureAtPoint {
    pub conn: ConnectionAtPoint,
    /// `R(E_A, E_B)` as m×m matrices acting on frame components.
    r: Vec<DMatrix<f64>>,
    /// `Ric[(a, c)] = Σ_b g(R(e_b, e_a) e_c, e_b)`.
    pub ric: DMatrix<f64>,
    /// `rho[s][(A, B)] = ρ_s(E_A, E_B)`.
    pub rho: [DMatrix<f64>; 3],
    pub scal: f64,
    pub tau: f64,
    /// Largest `|R(A,B) + R(B,A)|`.
    pub antisymmetry: f64,
    /// Largest `|R(A,B) + R(A,B)ᵀ|`.
    pub metricity: f64,
    pub ric_symmetry: f64,
}

impl CurvatureAtPoint {
    pub fn frame(&self) -> &PointFrame {
        self.conn.frame()
    }

    pub fn m(&self) -> usize {
        self.conn.jet.m()
    }

    pub fn n4(&self) -> usize {
        self.conn.jet.n4()
    }

    /// `R(E_A, E_B)` on all frame components.
    pub fn r(&self, a: usize, b: usize) -> &DMatrix<f64> {
        &self.r[a * self.m() + b]
    }

    /// `R(E_A, E_B)` restricted to H.
    pub fn r_h(&self, a: usize, b: usize) -> EndoMatrix {
        let n4 = self.n4();
        EndoMatrix::wrap(self.r(a, b).view((0, 0), (n4, n4)).into_owned())
    }
}

/// `∂_r Ω_A` for every coordinate r (outer) and frame direction A (inner).
fn d_omega(
    chart: &QCChart,
    u: &[f64],
    gauge: &FrameGauge,
    settings: &NumericSettings,
    h: f64,
) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let m = u.len();
    let mut dir = vec![0.0; m];
    let mut out = Vec::with_capacity(m);
    for r in 0..m {
        dir[r] = 1.0;
        out.push(fd::directional(settings.stencil.as_ref(), h, u, &dir, |p| {
            Ok(connection_with(chart, p, gauge, settings)?.omega)
        })?);
        dir[r] = 0.0;
    }
    Ok(out)
}

pub fn curvature(chart: &QCChart, u: &[f64], settings: &NumericSettings) -> Result<CurvatureAtPoint> {
    let conn = connection(chart, u, settings)?;
    curvature_from(chart, conn, settings, settings.h_curv)
}

pub fn curvature_with(
    chart: &QCChart,
    u: &[f64],
    gauge: &FrameGauge,
    settings: &NumericSettings,
) -> Result<CurvatureAtPoint> {
    let conn = connection_with(chart, u, gauge, settings)?;
    curvature_from(chart, conn, settings, settings.h_curv)
}

/// Curvature at the connection's point, differencing with step `h`.
pub fn curvature_from(
    chart: &QCChart,
    conn: ConnectionAtPoint,
    settings: &NumericSettings,
    h: f64,
) -> Result<CurvatureAtPoint> {
    let f = conn.frame();
    let m = f.m();
    let n4 = f.n4();
    let d = d_omega(chart, &f.point, &f.gauge, settings, h)?;
    // E_A(Ω_B)
    let along: Vec<Vec<DMatrix<f64>>> = (0..m)
        .map(|a| {
            (0..m)
                .map(|b| {
                    let mut acc = DMatrix::zeros(m, m);
                    for (r, dr) in d.iter().enumerate() {
                        acc += &dr[b] * f.frame[(r, a)];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let om = &conn.omega;
    let jet = &conn.jet;
    let mut r = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            let mut x = &along[a][b] - &along[b][a] + &om[a] * &om[b] - &om[b] * &om[a];
            for c in 0..m {
                x -= &om[c] * jet.c(a, b, c);
            }
            r.push(x);
        }
    }
    let mut antisymmetry: f64 = 0.0;
    let mut metricity: f64 = 0.0;
    for a in 0..m {
        for b in 0..m {
            let x = &r[a * m + b];
            antisymmetry = antisymmetry.max((x + &r[b * m + a]).amax());
            metricity = metricity.max((x + x.transpose()).amax());
        }
    }
    let ric = DMatrix::from_fn(n4, n4, |a, c| (0..n4).map(|b| r[b * m + a][(b, c)]).sum());
    let ric_symmetry = (&ric - ric.transpose()).amax();
    let rho: [DMatrix<f64>; 3] = std::array::from_fn(|s| {
        let ms = f.i.get(s).matrix();
        DMatrix::from_fn(m, m, |a, b| {
            let rh = r[a * m + b].view((0, 0), (n4, n4)).into_owned();
            inner_raw(&rh, ms)
        })
    });
    let scal = ric.trace();
    let n = (n4 / 4) as f64;
    let tau = scal / (16.0 * n * (n + 2.0));
    Ok(CurvatureAtPoint {
        conn,
        r,
        ric,
        rho,
        scal,
        tau,
        antisymmetry,
        metricity,
        ric_symmetry,
    })
}

/// `R(E_A, E_B)|H` at `u`.
pub fn curvature_endo(
    chart: &QCChart,
    u: &[f64],
    a: usize,
    b: usize,
    settings: &NumericSettings,
) -> Result<EndoMatrix> {
    let c = curvature(chart, u, settings)?;
    if a >= c.m() || b >= c.m() {
        return Err(QcError::SizeMismatch {
            expected: c.m(),
            got: a.max(b) + 1,
        });
    }
    Ok(c.r_h(a, b))
}

/// τ at `p` using a fixed gauge.
pub fn tau_at(chart: &QCChart, p: &[f64], gauge: &FrameGauge, settings: &NumericSettings) -> Result<f64> {
    Ok(curvature_with(chart, p, gauge, settings)?.tau)
}

/// `dτ(v)` for a coordinate vector `v`, differencing τ with step `h_curv`.
pub fn d_tau(chart: &QCChart, u: &[f64], gauge: &FrameGauge, v: &[f64], settings: &NumericSettings) -> Result<f64> {
    fd::directional(settings.stencil.as_ref(), settings.h_curv, u, v, |p| {
        tau_at(chart, p, gauge, settings)
    })
}

/// `dτ(Σ_s x_s ξ_s)` at the curvature's point.
pub fn d_tau_along_xi(
    chart: &QCChart,
    curv: &CurvatureAtPoint,
    x: &[f64; 3],
    settings: &NumericSettings,
) -> Result<f64> {
    let f = curv.frame();
    let v: DVector<f64> = &f.xi * DVector::from_column_slice(x);
    d_tau(chart, &f.point, &f.gauge, v.as_slice(), settings)
}

/// Largest deviation in `α_i(ξ_s) = dη_s(ξ_j,ξ_k) − δ_is(τ + ½Σ_cyc dη_1(ξ_2,ξ_3))`.
pub fn alpha_identity_check(curv: &CurvatureAtPoint) -> f64 {
    alpha_identity_with(curv, |i, s| curv.conn.alpha(i, curv.n4() + s))
}

/// As [`alpha_identity_check`] with the α values supplied by the caller.
pub fn alpha_identity_with(curv: &CurvatureAtPoint, alpha: impl Fn(usize, usize) -> f64) -> f64 {
    let f = curv.frame();
    let xi = |s: usize| f.xi.column(s).into_owned();
    let deta = |s: usize, a: usize, b: usize| f.d_eta(s, &xi(a), &xi(b));
    let cyc = 0.5 * (deta(0, 1, 2) + deta(1, 2, 0) + deta(2, 0, 1));
    let mut r: f64 = 0.0;
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        for s in 0..3 {
            let delta = if i == s { curv.tau + cyc } else { 0.0 };
            let expect = deta(s, j, k) - delta;
            r = r.max((alpha(i, s) - expect).abs());
        }
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicciChecks {
    /// `Ric − (2n+2)T⁰ − (4n+10)U − Scal/4n · g`, slotwise.
    pub decomposition: f64,
    /// `max_s |Ric(I_s·, I_s·) − Ric|`.
    pub i_invariance: f64,
    /// `max_s |Ric(I_s·, I_s·) − Ric − (2n+2)(T⁰(I_s·, I_s·) − T⁰)|`.
    pub i_defect: f64,
}

pub fn ricci_checks(curv: &CurvatureAtPoint, tensors: &TorsionTensors) -> RicciChecks {
    let n4 = curv.n4();
    let n = (n4 / 4) as f64;
    let ric = &curv.ric;
    let model = &tensors.t0 * (2.0 * n + 2.0)
        + &tensors.u * (4.0 * n + 10.0)
        + DMatrix::<f64>::identity(n4, n4) * (curv.scal / n4 as f64);
    let mut inv: f64 = 0.0;
    let mut defect: f64 = 0.0;
    for s in 0..3 {
        let ms = curv.frame().i.get(s).matrix();
        let rot = ms.transpose() * ric * ms - ric;
        let t0_rot = ms.transpose() * &tensors.t0 * ms - &tensors.t0;
        inv = inv.max(rot.amax());
        defect = defect.max((rot - t0_rot * (2.0 * n + 2.0)).amax());
    }
    RicciChecks {
        decomposition: (ric - model).amax(),
        i_invariance: inv,
        i_defect: defect,
    }
}

/// Ricci at steps `h`, `h/2`, `h/4` and the successive differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepHalving {
    pub h: f64,
    /// `|Ric_h − Ric_{h/2}|` and `|Ric_{h/2} − Ric_{h/4}|`.
    pub diffs: [f64; 2],
    /// `diffs[0] / diffs[1]`; about `2^order` when truncation dominates.
    pub ratio: f64,
}

impl StepHalving {
    /// Fails when halving the step stops reducing the disagreement, unless both
    /// differences are below `floor`.
    pub fn check(&self, floor: f64) -> Result<()> {
        if self.diffs[0] <= floor && self.diffs[1] <= floor {
            return Ok(());
        }
        if !(self.ratio >= 1.5) {
            return Err(QcError::StepTooSmall {
                disagreement: self.diffs[1],
            });
        }
        Ok(())
    }
}

pub fn step_halving(chart: &QCChart, u: &[f64], h: f64, settings: &NumericSettings) -> Result<StepHalving> {
    let conn = connection(chart, u, settings)?;
    let rics = [h, h / 2.0, h / 4.0]
        .into_iter()
        .map(|k| Ok(curvature_from(chart, conn.clone(), settings, k)?.ric))
        .collect::<Result<Vec<_>>>()?;
    let d0 = (&rics[0] - &rics[1]).amax();
    let d1 = (&rics[1] - &rics[2]).amax();
    Ok(StepHalving {
        h,
        diffs: [d0, d1],
        ratio: d0 / d1,
    })
}

/// Connection, torsion tensors and curvature at one base point.
#[derive(Debug, Clone)]
pub struct PointAnalysis {
    pub curv: CurvatureAtPoint,
    pub tensors: TorsionTensors,
    /// `dτ(ξ_s)`, once computed by [`PointAnalysis::with_d_tau`].
    pub d_tau_xi: Option<[f64; 3]>,
}

impl PointAnalysis {
    pub fn conn(&self) -> &ConnectionAtPoint {
        &self.curv.conn
    }

    pub fn frame(&self) -> &PointFrame {
        self.curv.frame()
    }

    /// Caches `dτ(ξ_s)` for s = 1, 2, 3.
    pub fn with_d_tau(mut self, chart: &QCChart, settings: &NumericSettings) -> Result<Self> {
        let mut d = [0.0; 3];
        for (s, v) in d.iter_mut().enumerate() {
            let mut e = [0.0; 3];
            e[s] = 1.0;
            *v = d_tau_along_xi(chart, &self.curv, &e, settings)?;
        }
        self.d_tau_xi = Some(d);
        Ok(self)
    }

    /// `dτ(Σ x_s ξ_s)`, from the cache when present.
    pub fn d_tau_along(&self, chart: &QCChart, x: &[f64; 3], settings: &NumericSettings) -> Result<f64> {
        match self.d_tau_xi {
            Some(d) => Ok((0..3).map(|s| d[s] * x[s]).sum()),
            None => d_tau_along_xi(chart, &self.curv, x, settings),
        }
    }
}

pub fn analyse(chart: &QCChart, u: &[f64], settings: &NumericSettings) -> Result<PointAnalysis> {
    let curv = curvature(chart, u, settings)?;
    let tensors = crate::connection::torsion_tensors(&curv.conn);
    Ok(PointAnalysis {
        curv,
        tensors,
        d_tau_xi: None,
    })
}
