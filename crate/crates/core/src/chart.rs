//! Coordinate charts carrying a coframe triple η, and the pointwise data
//! recovered from it: H, g, the quaternionic triple, Reeb fields and adapted frames.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::algebra::{EndoMatrix, QuaternionTriple};
use crate::error::{QcError, Result};
use crate::exprlang::{parse_with_names, ScalarFieldExpr};
use crate::fd;
use crate::settings::{NumericSettings, Tolerances};

/// Largest supported quaternionic dimension.
pub const MAX_N: usize = 4;

/// Singular-value ratio below which the coframe is treated as rank deficient.
const RANK_RATIO: f64 = 1e-10;

/// A QC structure on an open box of R^m, m = 4n + 3, given by
/// `η_s = Σ_r coeffs[s][r] du^r`.
#[derive(Debug, Clone)]
pub struct QCChart {
    name: String,
    n: usize,
    coords: Vec<String>,
    coeffs: [Vec<ScalarFieldExpr>; 3],
    domain: Option<Vec<(f64, f64)>>,
    factor: Option<ScalarFieldExpr>,
}

pub fn default_coords(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("u{i}")).collect()
}

impl QCChart {
    pub fn new(name: impl Into<String>, n: usize, coeffs: [Vec<ScalarFieldExpr>; 3]) -> Result<Self> {
        if n == 0 || n > MAX_N {
            return Err(QcError::UnsupportedDimension(n));
        }
        let m = 4 * n + 3;
        for row in &coeffs {
            if row.len() != m {
                return Err(QcError::SizeMismatch {
                    expected: m,
                    got: row.len(),
                });
            }
            if let Some(e) = row.iter().find(|e| e.dim() != m) {
                return Err(QcError::SizeMismatch {
                    expected: m,
                    got: e.dim(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            n,
            coords: default_coords(m),
            coeffs,
            domain: None,
            factor: None,
        })
    }

    /// Parses coefficient strings; `coords` (if given) are accepted as aliases of `u1..um`.
    pub fn from_strings<S: AsRef<str>>(
        name: impl Into<String>,
        n: usize,
        coords: Option<Vec<String>>,
        eta: [&[S]; 3],
    ) -> Result<Self> {
        let m = 4 * n + 3;
        let coords = coords.unwrap_or_else(|| default_coords(m));
        if coords.len() != m {
            return Err(QcError::SizeMismatch {
                expected: m,
                got: coords.len(),
            });
        }
        let names: Vec<&str> = coords.iter().map(String::as_str).collect();
        let mut rows: [Vec<ScalarFieldExpr>; 3] = Default::default();
        for (s, src) in eta.iter().enumerate() {
            if src.len() != m {
                return Err(QcError::SizeMismatch {
                    expected: m,
                    got: src.len(),
                });
            }
            for text in src.iter() {
                rows[s].push(parse_with_names(text.as_ref(), m, &names)?);
            }
        }
        let mut c = Self::new(name, n, rows)?;
        c.coords = coords;
        Ok(c)
    }

    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Result<Self> {
        if domain.len() != self.m() {
            return Err(QcError::SizeMismatch {
                expected: self.m(),
                got: domain.len(),
            });
        }
        if domain
            .iter()
            .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(QcError::Config("domain bounds must satisfy lower < upper".into()));
        }
        self.domain = Some(domain);
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub(crate) fn with_coords(mut self, coords: Vec<String>) -> Self {
        self.coords = coords;
        self
    }

    /// Multiplies every coefficient by `mu`. Positivity is the caller's concern.
    pub fn scaled_by(&self, mu: &ScalarFieldExpr) -> QCChart {
        let mut out = self.clone();
        for row in out.coeffs.iter_mut() {
            for e in row.iter_mut() {
                *e = mu.times(e);
            }
        }
        out.factor = Some(match &self.factor {
            Some(f) => mu.times(f),
            None => mu.clone(),
        });
        out
    }

    /// The chart with coframe `η'_t = Σ_s a[t][s] η_s`.
    pub fn rotated(&self, a: &[[f64; 3]; 3]) -> QCChart {
        use crate::exprlang::Node;
        let m = self.m();
        let mut out = self.clone();
        for t in 0..3 {
            for r in 0..m {
                let mut acc: Option<Node> = None;
                for s in 0..3 {
                    if a[t][s] == 0.0 {
                        continue;
                    }
                    let term = Node::Mul(
                        Box::new(Node::Const(a[t][s])),
                        Box::new(self.coeffs[s][r].root().clone()),
                    );
                    acc = Some(match acc {
                        None => term,
                        Some(prev) => Node::Add(Box::new(prev), Box::new(term)),
                    });
                }
                out.coeffs[t][r] = ScalarFieldExpr::from_node(acc.unwrap_or(Node::Const(0.0)), m);
            }
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        4 * self.n + 3
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn coeffs(&self) -> &[Vec<ScalarFieldExpr>; 3] {
        &self.coeffs
    }

    pub fn domain(&self) -> Option<&[(f64, f64)]> {
        self.domain.as_deref()
    }

    pub fn factor(&self) -> Option<&ScalarFieldExpr> {
        self.factor.as_ref()
    }

    pub fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.m() {
            return Err(QcError::SizeMismatch {
                expected: self.m(),
                got: u.len(),
            });
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(QcError::OutsideDomain { point: u.to_vec() });
        }
        Ok(())
    }

    pub fn check_domain(&self, u: &[f64]) -> Result<()> {
        self.check_point(u)?;
        if let Some(d) = &self.domain {
            if u.iter().zip(d).any(|(x, (lo, hi))| x < lo || x > hi) {
                return Err(QcError::OutsideDomain { point: u.to_vec() });
            }
        }
        Ok(())
    }

    /// The 3×m matrix of coframe components at `u`.
    pub fn eval_coframe(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(u)?;
        let m = self.m();
        let mut c = DMatrix::zeros(3, m);
        for s in 0..3 {
            for r in 0..m {
                c[(s, r)] = self.coeffs[s][r].eval(u)?;
            }
        }
        Ok(c)
    }

    /// `(dη_s)_{rq} = ∂_r c_{s,q} − ∂_q c_{s,r}`, so `dη_s(X,Y) = Xᵀ D_s Y`.
    pub fn eval_dcoframe(&self, u: &[f64]) -> Result<[DMatrix<f64>; 3]> {
        Ok(self.coframe_jet(u)?.1)
    }

    /// Coframe and its exterior derivative in one pass.
    pub fn coframe_jet(&self, u: &[f64]) -> Result<(DMatrix<f64>, [DMatrix<f64>; 3])> {
        self.check_point(u)?;
        let m = self.m();
        let mut c = DMatrix::zeros(3, m);
        let mut d: [DMatrix<f64>; 3] = std::array::from_fn(|_| DMatrix::zeros(m, m));
        for s in 0..3 {
            // grads[r][q] = ∂_q c_{s,r}
            let mut grads = DMatrix::zeros(m, m);
            for r in 0..m {
                let dual = self.coeffs[s][r].eval_dual(u)?;
                c[(s, r)] = dual.value;
                for q in 0..m {
                    grads[(r, q)] = dual.partials[q];
                }
            }
            for r in 0..m {
                for q in 0..m {
                    d[s][(r, q)] = grads[(q, r)] - grads[(r, q)];
                }
            }
        }
        Ok((c, d))
    }
}

/// Residuals of the recovery step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryResiduals {
    pub quaternion: f64,
    pub symmetry: f64,
    /// max_s |ω_s − g(I_s·,·)| on the H basis.
    pub levi: f64,
    /// Disagreement of g computed through s = 1, 2, 3.
    pub metric_consistency: f64,
}

/// Coframe, its exterior derivative and a basis of H = ker η at a point.
#[derive(Debug, Clone)]
pub struct HorizontalJet {
    pub point: Vec<f64>,
    pub coframe: DMatrix<f64>,
    pub dcoframe: [DMatrix<f64>; 3],
    /// m×4n, columns span ker η with Euclidean-orthonormal columns.
    pub h_basis: DMatrix<f64>,
    /// Singular values of the 3×m coframe matrix, descending.
    pub singular_values: Vec<f64>,
}

/// H, g and I at a point, in an orthonormal (Euclidean) basis of H.
#[derive(Debug, Clone)]
pub struct RecoveredStructure {
    pub jet: HorizontalJet,
    /// g in `h_basis` coordinates.
    pub metric: DMatrix<f64>,
    /// I_s in `h_basis` coordinates.
    pub i: [DMatrix<f64>; 3],
    pub residuals: RecoveryResiduals,
}

impl RecoveredStructure {
    pub fn n(&self) -> usize {
        self.jet.h_basis.ncols() / 4
    }

    /// g(X, Y) for coordinate vectors lying in H.
    pub fn g(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let a = self.jet.h_basis.tr_mul(x);
        let b = self.jet.h_basis.tr_mul(y);
        a.dot(&(&self.metric * b))
    }
}

fn invert_checked(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let sv = a.singular_values();
    let (mx, mn) = (sv.max(), sv.min());
    if !(mx > 0.0) || mn / mx < RANK_RATIO {
        return None;
    }
    a.clone().try_inverse()
}

/// Evaluates η, dη and a basis of H at `u`.
pub fn horizontal_jet(chart: &QCChart, u: &[f64]) -> Result<HorizontalJet> {
    let (c, d) = chart.coframe_jet(u)?;
    let n4 = 4 * chart.n();
    let m = chart.m();

    let cct = &c * c.transpose();
    let mut sv: Vec<f64> = SymmetricEigen::new(cct.clone())
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[2] / sv[0] < RANK_RATIO {
        return Err(QcError::DegenerateCoframe { singular_values: sv });
    }

    let eig = SymmetricEigen::new(c.transpose() * &c);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let cols: Vec<DVector<f64>> = order[..n4]
        .iter()
        .map(|&k| eig.eigenvectors.column(k).into_owned())
        .collect();
    let b = DMatrix::from_columns(&cols);
    Ok(HorizontalJet {
        point: u.to_vec(),
        coframe: c,
        dcoframe: d,
        h_basis: b,
        singular_values: sv,
    })
}

/// Recovers g and I_1, I_2, I_3 from `ω_s = ½dη_s|H`.
pub fn recover_structure(chart: &QCChart, u: &[f64], tol: &Tolerances) -> Result<RecoveredStructure> {
    recover_from_jet(horizontal_jet(chart, u)?, tol)
}

pub fn recover_from_jet(jet: HorizontalJet, tol: &Tolerances) -> Result<RecoveredStructure> {
    let b = &jet.h_basis;
    let d = &jet.dcoframe;
    let n4 = b.ncols();
    let w: [DMatrix<f64>; 3] = std::array::from_fn(|s| b.tr_mul(&(&d[s] * b)) * 0.5);
    // ω̃_s maps X to ω_s(X, ·); as a matrix this is W_sᵀ = G I_s.
    let a: [DMatrix<f64>; 3] = std::array::from_fn(|s| w[s].transpose());
    let mut inv: Vec<DMatrix<f64>> = Vec::with_capacity(3);
    for (s, a_s) in a.iter().enumerate() {
        inv.push(invert_checked(a_s).ok_or(QcError::DegenerateLevi { index: s + 1 })?);
    }
    let i3 = &inv[1] * &a[0];
    let i1 = &inv[2] * &a[1];
    let i2 = &inv[0] * &a[2];
    let i = [i1, i2, i3];

    let id = DMatrix::<f64>::identity(n4, n4);
    let mut q: f64 = 0.0;
    for s in 0..3 {
        let (t, r) = ((s + 1) % 3, (s + 2) % 3);
        q = q.max((&i[s] * &i[s] + &id).amax());
        q = q.max((&i[s] * &i[t] - &i[r]).amax());
        q = q.max((&i[t] * &i[s] + &i[r]).amax());
    }
    if !(q <= tol.quaternion) {
        return Err(QcError::NotQuaternionic { residual: q });
    }

    let gs: [DMatrix<f64>; 3] = std::array::from_fn(|s| -(i[s].transpose() * &w[s]));
    let g_raw = gs[0].clone();
    let scale = g_raw.amax().max(1e-300);
    let symmetry = (&g_raw - g_raw.transpose()).amax() / scale;
    let metric = (&g_raw + g_raw.transpose()) * 0.5;
    if !(symmetry <= tol.quaternion) {
        return Err(QcError::NotPositive(format!(
            "metric is not symmetric (relative asymmetry {symmetry:.3e})"
        )));
    }
    if metric.clone().cholesky().is_none() {
        let ev = SymmetricEigen::new(metric.clone()).eigenvalues;
        return Err(QcError::NotPositive(format!("smallest eigenvalue {:.3e}", ev.min())));
    }
    let metric_consistency = (&gs[1] - &gs[0]).amax().max((&gs[2] - &gs[0]).amax()) / scale;
    let mut levi: f64 = 0.0;
    for s in 0..3 {
        levi = levi.max((&w[s] - i[s].transpose() * &metric).amax());
    }
    if !(levi <= tol.quaternion * scale.max(1.0)) {
        return Err(QcError::NotQuaternionic { residual: levi });
    }

    Ok(RecoveredStructure {
        jet,
        metric,
        i,
        residuals: RecoveryResiduals {
            quaternion: q,
            symmetry,
            levi,
            metric_consistency,
        },
    })
}

#[derive(Debug, Clone)]
pub struct ReebSolution {
    /// m×3, columns ξ_1, ξ_2, ξ_3.
    pub xi: DMatrix<f64>,
    /// max |dη_t(ξ_s, X) + dη_s(ξ_t, X)| over s ≤ t and the H basis.
    pub residual: f64,
    /// Smallest singular value of the constraint matrix.
    pub min_singular: f64,
}

/// Reeb fields compatible with the Biquard condition, by least squares. Only
/// H and dη enter, so this runs before the quaternionic structure is recovered.
pub fn reeb_solve(rs: &HorizontalJet, tol: &Tolerances) -> Result<ReebSolution> {
    let c = &rs.coframe;
    let d = &rs.dcoframe;
    let b = &rs.h_basis;
    let n4 = b.ncols();
    let cct_inv = (c * c.transpose())
        .try_inverse()
        .ok_or_else(|| QcError::DegenerateCoframe {
            singular_values: rs.singular_values.clone(),
        })?;
    let xi0 = c.transpose() * cct_inv;
    // bdb[t] = Bᵀ D_t B, x0d[t] = ξ⁰ᵀ D_t B (rows indexed by s)
    let bdb: [DMatrix<f64>; 3] = std::array::from_fn(|t| b.tr_mul(&(&d[t] * b)));
    let x0d: [DMatrix<f64>; 3] = std::array::from_fn(|t| xi0.tr_mul(&(&d[t] * b)));

    let pairs: Vec<(usize, usize)> = (0..3).flat_map(|s| (s..3).map(move |t| (s, t))).collect();
    let rows = pairs.len() * n4;
    let mut a = DMatrix::zeros(rows, 3 * n4);
    let mut rhs = DVector::zeros(rows);
    for (p, &(s, t)) in pairs.iter().enumerate() {
        for j in 0..n4 {
            let row = p * n4 + j;
            for i in 0..n4 {
                a[(row, s * n4 + i)] += bdb[t][(i, j)];
                a[(row, t * n4 + i)] += bdb[s][(i, j)];
            }
            rhs[row] = -(x0d[t][(s, j)] + x0d[s][(t, j)]);
        }
    }
    let sv = a.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin / smax < 1e-12 {
        return Err(QcError::IllConditioned { min_singular: smin });
    }
    let k = least_squares(&a, &rhs).ok_or(QcError::IllConditioned { min_singular: smin })?;
    let mut xi = xi0;
    for s in 0..3 {
        let ks = k.rows(s * n4, n4);
        let add = b * ks;
        let mut col = xi.column_mut(s);
        col += add;
    }
    let residual = bi1_residual(&xi, d, b);
    if !(residual <= tol.bi1) {
        return Err(QcError::BiquardConditionFail {
            point: rs.point.clone(),
            residual,
            tolerance: tol.bi1,
        });
    }
    Ok(ReebSolution {
        xi,
        residual,
        min_singular: smin,
    })
}

/// Full-column-rank least squares by Householder QR, with one step of
/// iterative refinement.
pub(crate) fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let qr = a.clone().qr();
    let solve = |rhs: &DVector<f64>| {
        let y = qr.q().tr_mul(rhs);
        qr.r().solve_upper_triangular(&y)
    };
    let x = solve(b)?;
    let dx = solve(&(b - a * &x))?;
    Some(x + dx)
}

/// max over s ≤ t and columns X of `basis` of |dη_t(ξ_s, X) + dη_s(ξ_t, X)|.
pub fn bi1_residual(xi: &DMatrix<f64>, d: &[DMatrix<f64>; 3], basis: &DMatrix<f64>) -> f64 {
    let mut r: f64 = 0.0;
    for s in 0..3 {
        for t in s..3 {
            let v = (xi.column(s).transpose() * &d[t] + xi.column(t).transpose() * &d[s]) * basis;
            r = r.max(v.amax());
        }
    }
    r
}

/// The choices that make a frame field smooth around a base point: which
/// coordinate axes seed the H basis, and an optional constant rotation of it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGauge {
    pub pivots: Vec<usize>,
    /// Orthogonal 4n×4n matrix; the frame becomes `e' = e · rotation`.
    pub rotation: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameResiduals {
    pub eta_on_h: f64,
    pub eta_on_xi: f64,
    pub orthonormality: f64,
    pub levi: f64,
    pub quaternion: f64,
    pub bi1: f64,
}

impl FrameResiduals {
    /// Checks every invariant; names the first that fails.
    pub fn check(&self, point: &[f64], tol: &Tolerances) -> Result<()> {
        let checks = [
            ("eta(e_a) = 0", self.eta_on_h, tol.frame),
            ("eta_t(xi_s) = delta", self.eta_on_xi, tol.frame),
            ("g(e_a, e_b) = delta", self.orthonormality, tol.frame),
            ("d eta_s = 2 g(I_s., .)", self.levi, tol.levi),
            ("quaternion relations", self.quaternion, tol.quaternion),
            ("Biquard condition", self.bi1, tol.bi1),
        ];
        for (name, r, t) in checks {
            if !(r <= t) {
                return Err(QcError::Validation {
                    point: point.to_vec(),
                    invariant: name.to_string(),
                    residual: r,
                });
            }
        }
        Ok(())
    }
}

/// Adapted frame at a point.
#[derive(Debug, Clone)]
pub struct PointFrame {
    pub point: Vec<f64>,
    pub n: usize,
    /// m×4n, g-orthonormal basis of H.
    pub e_h: DMatrix<f64>,
    /// m×3, Reeb fields.
    pub xi: DMatrix<f64>,
    /// I_s in the `e_h` frame: `I_s e_b = Σ_a (M_s)_{ab} e_a`.
    pub i: QuaternionTriple,
    pub bi1_residual: f64,
    pub reeb_min_singular: f64,
    /// m×m, columns `e_1..e_4n, ξ_1, ξ_2, ξ_3`.
    pub frame: DMatrix<f64>,
    /// Inverse of `frame`; rows are the dual coframe.
    pub dual: DMatrix<f64>,
    pub coframe: DMatrix<f64>,
    pub dcoframe: [DMatrix<f64>; 3],
    pub gauge: FrameGauge,
    pub residuals: FrameResiduals,
}

impl PointFrame {
    pub fn m(&self) -> usize {
        self.frame.nrows()
    }

    pub fn n4(&self) -> usize {
        4 * self.n
    }

    /// `dη_s(X, Y)` for coordinate vectors.
    pub fn d_eta(&self, s: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.dcoframe[s] * y))
    }

    /// Frame components of a coordinate vector.
    pub fn components(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.dual * x
    }
}

/// Projections of the coordinate axes to H along V.
fn seeds(c: &DMatrix<f64>, xi: &DMatrix<f64>) -> DMatrix<f64> {
    let m = c.ncols();
    DMatrix::<f64>::identity(m, m) - xi * c
}

/// Picks 4n seed axes: largest projection norm first (ties to the lower
/// index), skipping candidates nearly dependent on those already chosen.
fn select_pivots(rs: &RecoveredStructure, seeds: &DMatrix<f64>) -> Result<Vec<usize>> {
    let m = seeds.ncols();
    let n4 = rs.jet.h_basis.ncols();
    let norms: Vec<f64> = (0..m).map(|r| seeds.column(r).norm()).collect();
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut chosen: Vec<usize> = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    while chosen.len() < n4 && !remaining.is_empty() {
        let top = remaining.iter().map(|&r| norms[r]).fold(0.0, f64::max);
        let pos = remaining
            .iter()
            .position(|&r| norms[r] >= top * (1.0 - 1e-9))
            .expect("non-empty");
        let r = remaining.remove(pos);
        let mut v = seeds.column(r).into_owned();
        let own = rs.g(&v, &v).max(0.0).sqrt();
        for e in &basis {
            let p = rs.g(&v, e);
            v -= e * p;
        }
        let left = rs.g(&v, &v).max(0.0).sqrt();
        if own > 1e-8 && left > 1e-6 * own {
            basis.push(v / left);
            chosen.push(r);
        }
    }
    if chosen.len() < n4 {
        return Err(QcError::DegenerateCoframe {
            singular_values: rs.jet.singular_values.clone(),
        });
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Frame at `u` with pivots chosen at `u`.
pub fn frame_field(chart: &QCChart, u: &[f64], settings: &NumericSettings) -> Result<PointFrame> {
    let jet = horizontal_jet(chart, u)?;
    let reeb = reeb_solve(&jet, &settings.tol)?;
    let rs = recover_from_jet(jet, &settings.tol)?;
    let s = seeds(&rs.jet.coframe, &reeb.xi);
    let gauge = FrameGauge {
        pivots: select_pivots(&rs, &s)?,
        rotation: None,
    };
    assemble_frame(chart, rs, reeb, gauge, &settings.tol)
}

/// Frame at `u` using a fixed gauge (as chosen at a nearby base point).
pub fn frame_field_with(
    chart: &QCChart,
    u: &[f64],
    gauge: &FrameGauge,
    settings: &NumericSettings,
) -> Result<PointFrame> {
    let jet = horizontal_jet(chart, u)?;
    let reeb = reeb_solve(&jet, &settings.tol)?;
    let rs = recover_from_jet(jet, &settings.tol)?;
    assemble_frame(chart, rs, reeb, gauge.clone(), &settings.tol)
}

fn assemble_frame(
    chart: &QCChart,
    rs: RecoveredStructure,
    reeb: ReebSolution,
    gauge: FrameGauge,
    tol: &Tolerances,
) -> Result<PointFrame> {
    let n = chart.n();
    let n4 = 4 * n;
    let m = chart.m();
    if gauge.pivots.len() != n4 {
        return Err(QcError::SizeMismatch {
            expected: n4,
            got: gauge.pivots.len(),
        });
    }
    let s = seeds(&rs.jet.coframe, &reeb.xi);
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n4);
    for &r in &gauge.pivots {
        let mut v = s.column(r).into_owned();
        for _ in 0..2 {
            for e in &cols {
                let p = rs.g(&v, e);
                v -= e * p;
            }
        }
        let len = rs.g(&v, &v).max(0.0).sqrt();
        if !(len > 1e-10) {
            return Err(QcError::DegenerateCoframe {
                singular_values: rs.jet.singular_values.clone(),
            });
        }
        cols.push(v / len);
    }
    let mut e_h = DMatrix::from_columns(&cols);
    if let Some(q) = &gauge.rotation {
        if q.nrows() != n4 || q.ncols() != n4 {
            return Err(QcError::SizeMismatch {
                expected: n4,
                got: q.nrows(),
            });
        }
        e_h = &e_h * q;
    }

    let d = &rs.jet.dcoframe;
    let m_s: [EndoMatrix; 3] = std::array::from_fn(|t| EndoMatrix::wrap(-(e_h.tr_mul(&(&d[t] * &e_h))) * 0.5));
    let triple = QuaternionTriple::new_unchecked(m_s);

    let mut frame = DMatrix::zeros(m, m);
    frame.columns_mut(0, n4).copy_from(&e_h);
    frame.columns_mut(n4, 3).copy_from(&reeb.xi);
    let dual = frame.clone().try_inverse().ok_or_else(|| QcError::DegenerateCoframe {
        singular_values: rs.jet.singular_values.clone(),
    })?;

    let eh_b = rs.jet.h_basis.tr_mul(&e_h);
    let gram = eh_b.tr_mul(&(&rs.metric * &eh_b));
    let mut levi: f64 = 0.0;
    for t in 0..3 {
        let g_i = (&rs.i[t] * &eh_b).tr_mul(&(&rs.metric * &eh_b));
        let half_d = e_h.tr_mul(&(&d[t] * &e_h)) * 0.5;
        levi = levi.max((g_i - half_d).amax());
    }
    let residuals = FrameResiduals {
        eta_on_h: (&rs.jet.coframe * &e_h).amax(),
        eta_on_xi: (&rs.jet.coframe * &reeb.xi - DMatrix::<f64>::identity(3, 3)).amax(),
        orthonormality: (gram - DMatrix::<f64>::identity(n4, n4)).amax(),
        levi,
        quaternion: triple.relation_residual(),
        bi1: reeb.residual,
    };
    residuals.check(&rs.jet.point, tol)?;

    Ok(PointFrame {
        point: rs.jet.point,
        n,
        e_h,
        xi: reeb.xi,
        i: triple,
        bi1_residual: reeb.residual,
        reeb_min_singular: reeb.min_singular,
        frame,
        dual,
        coframe: rs.jet.coframe,
        dcoframe: rs.jet.dcoframe,
        gauge,
        residuals,
    })
}

/// `[X, Y] = (DY)X − (DX)Y` with Jacobians by finite differences.
pub fn lie_bracket(
    settings: &NumericSettings,
    u: &[f64],
    x: impl Fn(&[f64]) -> Result<Vec<f64>>,
    y: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let st = settings.stencil.as_ref();
    let xv = x(u)?;
    let yv = y(u)?;
    let dy_x: Vec<f64> = fd::directional(st, settings.h_fd, u, &xv, &y)?;
    let dx_y: Vec<f64> = fd::directional(st, settings.h_fd, u, &yv, &x)?;
    Ok(dy_x.iter().zip(&dx_y).map(|(a, b)| a - b).collect())
}
