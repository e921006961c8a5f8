//! Endomorphisms of a 4n-dimensional Euclidean space with a quaternionic
//! structure.
//!
//! Every matrix here is expressed in a g-orthonormal frame, so the transpose is
//! the metric adjoint and `sym`/`skew` are the usual `(M ± Mᵀ)/2`.

use std::ops::Deref;

use nalgebra::{DMatrix, Vector3};

use crate::error::{QcError, Result};

/// Absolute tolerance for identities that involve only matrix arithmetic.
pub const EXACT_TOL: f64 = 1e-12;

/// Square `4n × 4n` real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EndoMatrix(DMatrix<f64>);

impl EndoMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(QcError::InvalidEndo(format!("not square: {}x{}", m.nrows(), m.ncols())));
        }
        if m.nrows() == 0 || !m.nrows().is_multiple_of(4) {
            return Err(QcError::InvalidEndo(format!(
                "size {} is not a positive multiple of 4",
                m.nrows()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(QcError::InvalidEndo("non-finite entry".into()));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix the caller already knows to be square of size 4n.
    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m.nrows() == m.ncols() && m.nrows().is_multiple_of(4));
        Self(m)
    }

    pub fn from_row_slice(n: usize, entries: &[f64]) -> Result<Self> {
        let d = 4 * n;
        if entries.len() != d * d {
            return Err(QcError::SizeMismatch {
                expected: d * d,
                got: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(d, d, entries))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(4 * n, 4 * n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(4 * n, 4 * n))
    }

    /// Quaternionic dimension.
    pub fn n(&self) -> usize {
        self.0.nrows() / 4
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn sym(&self) -> Self {
        Self((&self.0 + self.0.transpose()) * 0.5)
    }

    pub fn skew(&self) -> Self {
        Self((&self.0 - self.0.transpose()) * 0.5)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, k: f64) -> Self {
        Self(&self.0 * k)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0)
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 + &other.0 * &self.0)
    }
}

impl Deref for EndoMatrix {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn check_same(a: &EndoMatrix, b: &EndoMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(QcError::SizeMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// `<A, B> = trace(Aᵀ B) / 4n`.
pub fn endo_inner(a: &EndoMatrix, b: &EndoMatrix) -> Result<f64> {
    check_same(a, b)?;
    Ok(inner_raw(a, b))
}

pub(crate) fn inner_raw(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b) / a.nrows() as f64
}

/// Coefficients of an element of R³ in the frame ξ₁, ξ₂, ξ₃ (or I₁, I₂, I₃).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VTriple(pub [f64; 3]);

impl VTriple {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self([a, b, c])
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self([v[0], v[1], v[2]])
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Oriented cross product in the ξ frame.
pub fn v_cross(a: &VTriple, b: &VTriple) -> VTriple {
    let [a1, a2, a3] = a.0;
    let [b1, b2, b3] = b.0;
    VTriple([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
}

/// Three endomorphisms satisfying the imaginary-quaternion relations.
#[derive(Debug, Clone, PartialEq)]
pub struct QuaternionTriple {
    i: [EndoMatrix; 3],
}

impl QuaternionTriple {
    /// Builds a triple after checking the relations to `tol`.
    pub fn new(i1: EndoMatrix, i2: EndoMatrix, i3: EndoMatrix, tol: f64) -> Result<Self> {
        check_same(&i1, &i2)?;
        check_same(&i1, &i3)?;
        let t = Self { i: [i1, i2, i3] };
        let r = t.relation_residual();
        if r > tol {
            return Err(QcError::NotQuaternionic { residual: r });
        }
        Ok(t)
    }

    pub(crate) fn new_unchecked(i: [EndoMatrix; 3]) -> Self {
        Self { i }
    }

    /// Left multiplication by i, j, k on Hⁿ ≅ R⁴ⁿ (blocks ordered 1, i, j, k).
    pub fn standard(n: usize) -> Self {
        #[rustfmt::skip]
        let li = [
            0.0, -1.0, 0.0,  0.0,
            1.0,  0.0, 0.0,  0.0,
            0.0,  0.0, 0.0, -1.0,
            0.0,  0.0, 1.0,  0.0,
        ];
        #[rustfmt::skip]
        let lj = [
            0.0, 0.0, -1.0, 0.0,
            0.0, 0.0,  0.0, 1.0,
            1.0, 0.0,  0.0, 0.0,
            0.0, -1.0, 0.0, 0.0,
        ];
        #[rustfmt::skip]
        let lk = [
            0.0,  0.0, 0.0, -1.0,
            0.0,  0.0, -1.0, 0.0,
            0.0,  1.0, 0.0,  0.0,
            1.0,  0.0, 0.0,  0.0,
        ];
        let block = |b: &[f64; 16]| {
            let mut m = DMatrix::zeros(4 * n, 4 * n);
            for k in 0..n {
                for r in 0..4 {
                    for c in 0..4 {
                        m[(4 * k + r, 4 * k + c)] = b[4 * r + c];
                    }
                }
            }
            EndoMatrix(m)
        };
        Self {
            i: [block(&li), block(&lj), block(&lk)],
        }
    }

    pub fn n(&self) -> usize {
        self.i[0].n()
    }

    pub fn get(&self, s: usize) -> &EndoMatrix {
        &self.i[s]
    }

    pub fn as_array(&self) -> &[EndoMatrix; 3] {
        &self.i
    }

    /// `Σ x_s I_s`.
    pub fn combination(&self, x: &[f64; 3]) -> EndoMatrix {
        let mut m = self.i[0].0.clone() * x[0];
        m += &self.i[1].0 * x[1];
        m += &self.i[2].0 * x[2];
        EndoMatrix(m)
    }

    /// The triple `I'_s = Σ_t a[s][t] I_t`.
    pub fn rotated(&self, a: &[[f64; 3]; 3]) -> Self {
        Self {
            i: [
                self.combination(&a[0]),
                self.combination(&a[1]),
                self.combination(&a[2]),
            ],
        }
    }

    /// Largest violation of: I_s² = −Id, I₁I₂ = I₃ = −I₂I₁ (and cyclic),
    /// skewness, orthogonality, orthonormality under `endo_inner`.
    pub fn relation_residual(&self) -> f64 {
        let d = self.i[0].dim();
        let id = DMatrix::<f64>::identity(d, d);
        let mut r: f64 = 0.0;
        for s in 0..3 {
            let a = &self.i[s].0;
            r = r.max((a * a + &id).amax());
            r = r.max((a + a.transpose()).amax());
            r = r.max((a.transpose() * a - &id).amax());
            r = r.max((inner_raw(a, a) - 1.0).abs());
            let (j, k) = ((s + 1) % 3, (s + 2) % 3);
            let b = &self.i[j].0;
            let c = &self.i[k].0;
            r = r.max((a * b - c).amax());
            r = r.max((b * a + c).amax());
            r = r.max(inner_raw(a, b).abs());
        }
        r
    }
}

/// The Ψ⁺⁺⁺, Ψ⁺⁻⁻, Ψ⁻⁺⁻, Ψ⁻⁻⁺ components.
#[derive(Debug, Clone, PartialEq)]
pub struct FourPartSplit {
    pub p_ppp: EndoMatrix,
    pub p_pmm: EndoMatrix,
    pub p_mpm: EndoMatrix,
    pub p_mmp: EndoMatrix,
}

impl FourPartSplit {
    pub fn parts(&self) -> [&EndoMatrix; 4] {
        [&self.p_ppp, &self.p_pmm, &self.p_mpm, &self.p_mmp]
    }

    pub fn sum(&self) -> EndoMatrix {
        self.p_ppp.add(&self.p_pmm).add(&self.p_mpm).add(&self.p_mmp)
    }

    /// Largest residual of the commutation sign pattern: part k commutes with
    /// I_s where its sign is `+` and anticommutes where it is `−`.
    pub fn sign_residual(&self, t: &QuaternionTriple) -> f64 {
        const SIGNS: [[bool; 3]; 4] = [
            [true, true, true],
            [true, false, false],
            [false, true, false],
            [false, false, true],
        ];
        let mut r: f64 = 0.0;
        for (part, signs) in self.parts().iter().zip(SIGNS.iter()) {
            for s in 0..3 {
                let res = if signs[s] {
                    part.commutator(t.get(s))
                } else {
                    part.anticommutator(t.get(s))
                };
                r = r.max(res.max_abs());
            }
        }
        r
    }
}

fn conj_terms(psi: &DMatrix<f64>, t: &QuaternionTriple) -> [DMatrix<f64>; 3] {
    [
        &t.i[0].0 * psi * &t.i[0].0,
        &t.i[1].0 * psi * &t.i[1].0,
        &t.i[2].0 * psi * &t.i[2].0,
    ]
}

pub fn four_part_decompose(psi: &EndoMatrix, t: &QuaternionTriple) -> Result<FourPartSplit> {
    check_same(psi, &t.i[0])?;
    let [c1, c2, c3] = conj_terms(psi, t);
    let p = &psi.0;
    Ok(FourPartSplit {
        p_ppp: EndoMatrix((p - &c1 - &c2 - &c3) * 0.25),
        p_pmm: EndoMatrix((p - &c1 + &c2 + &c3) * 0.25),
        p_mpm: EndoMatrix((p + &c1 - &c2 + &c3) * 0.25),
        p_mmp: EndoMatrix((p + &c1 + &c2 - &c3) * 0.25),
    })
}

/// `(⟨Ψ, I₁⟩, ⟨Ψ, I₂⟩, ⟨Ψ, I₃⟩)`.
pub fn project_sp1(psi: &EndoMatrix, t: &QuaternionTriple) -> Result<VTriple> {
    check_same(psi, &t.i[0])?;
    Ok(sp1_raw(psi, t))
}

pub(crate) fn sp1_raw(psi: &DMatrix<f64>, t: &QuaternionTriple) -> VTriple {
    VTriple([
        inner_raw(psi, &t.i[0].0),
        inner_raw(psi, &t.i[1].0),
        inner_raw(psi, &t.i[2].0),
    ])
}

/// Orthogonal projection onto P ≅ sp(n): `skew(Ψ⁺⁺⁺)`.
pub fn project_p(psi: &EndoMatrix, t: &QuaternionTriple) -> Result<EndoMatrix> {
    check_same(psi, &t.i[0])?;
    Ok(EndoMatrix(p_raw(psi, t)))
}

pub(crate) fn p_raw(psi: &DMatrix<f64>, t: &QuaternionTriple) -> DMatrix<f64> {
    let [c1, c2, c3] = conj_terms(psi, t);
    let ppp = (psi - c1 - c2 - c3) * 0.25;
    (&ppp - ppp.transpose()) * 0.5
}

/// Orthogonal projection onto (sp(n) ⊕ sp(1))^⊥.
pub fn project_torsion_space(psi: &EndoMatrix, t: &QuaternionTriple) -> Result<EndoMatrix> {
    check_same(psi, &t.i[0])?;
    Ok(EndoMatrix(torsion_raw(psi, t)))
}

pub(crate) fn torsion_raw(psi: &DMatrix<f64>, t: &QuaternionTriple) -> DMatrix<f64> {
    let a = sp1_raw(psi, t);
    let mut r = psi - p_raw(psi, t);
    for s in 0..3 {
        r -= &t.i[s].0 * a.0[s];
    }
    r
}

/// Orthonormal basis (under `endo_inner`) of skew endomorphisms orthogonal to
/// P ⊕ Q. Its dimension is 6n² − 3n − 3, so it is empty for n = 1.
pub(crate) fn torsion_skew_basis(t: &QuaternionTriple) -> Vec<DMatrix<f64>> {
    let d = t.i[0].dim();
    let mut basis: Vec<DMatrix<f64>> = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let mut e = DMatrix::zeros(d, d);
            e[(i, j)] = 1.0;
            e[(j, i)] = -1.0;
            let mut v = torsion_raw(&e, t);
            for b in &basis {
                let c = inner_raw(b, &v);
                v -= b * c;
            }
            let nn = inner_raw(&v, &v).sqrt();
            if nn > 1e-8 {
                basis.push(v / nn);
            }
        }
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_endo(n: usize, rng: &mut ChaCha8Rng) -> EndoMatrix {
        let d = 4 * n;
        EndoMatrix::new(DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn inner_of_identity_is_one() {
        for n in 1..=3 {
            let id = EndoMatrix::identity(n);
            assert!((endo_inner(&id, &id).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn inner_matches_double_loop_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = random_endo(2, &mut rng);
        let b = random_endo(2, &mut rng);
        let mut acc = 0.0;
        for i in 0..8 {
            for k in 0..8 {
                // (AᵀB)_{ii} = Σ_k A_{ki} B_{ki}
                acc += a[(k, i)] * b[(k, i)];
            }
        }
        acc /= 8.0;
        assert!((endo_inner(&a, &b).unwrap() - acc).abs() < 1e-14);
    }

    #[test]
    fn size_mismatch_is_reported() {
        let a = EndoMatrix::identity(1);
        let b = EndoMatrix::identity(2);
        assert!(matches!(endo_inner(&a, &b), Err(QcError::SizeMismatch { .. })));
        assert!(EndoMatrix::new(DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn standard_triple_is_quaternionic() {
        for n in 1..=4 {
            let t = QuaternionTriple::standard(n);
            assert!(t.relation_residual() < 1e-15);
            assert!(endo_inner(t.get(0), t.get(1)).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn decomposition_of_identity_and_i1() {
        let t = QuaternionTriple::standard(1);
        let id = EndoMatrix::identity(1);
        let s = four_part_decompose(&id, &t).unwrap();
        assert!(s.p_ppp.sub(&id).max_abs() < 1e-15);
        assert!(s.p_pmm.max_abs() < 1e-15 && s.p_mpm.max_abs() < 1e-15);
        assert!(s.p_mmp.max_abs() < 1e-15);

        let s = four_part_decompose(t.get(0), &t).unwrap();
        assert!(s.p_ppp.max_abs() < 1e-15);
        assert!(s.p_pmm.sub(t.get(0)).max_abs() < 1e-15);
        assert!(s.p_mpm.max_abs() < 1e-15 && s.p_mmp.max_abs() < 1e-15);
    }

    #[test]
    fn decomposition_sign_pattern_seed_7() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = QuaternionTriple::standard(2);
        let psi = random_endo(2, &mut rng);
        let s = four_part_decompose(&psi, &t).unwrap();
        assert!(s.sign_residual(&t) <= 1e-12);
        assert!(s.sum().sub(&psi).max_abs() <= 1e-12);
    }

    #[test]
    fn sp1_projection_examples() {
        let t = QuaternionTriple::standard(1);
        let a = project_sp1(&t.get(1).scale(2.0), &t).unwrap();
        assert!((a.0[0]).abs() < 1e-15 && (a.0[1] - 2.0).abs() < 1e-15 && a.0[2].abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_endo(1, &mut rng).sym();
        let a = project_sp1(&psi, &t).unwrap();
        assert!(a.norm() < 1e-15);
    }

    #[test]
    fn torsion_projection_examples() {
        let t = QuaternionTriple::standard(1);
        assert!(project_torsion_space(t.get(2), &t).unwrap().max_abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sym = random_endo(2, &mut rng).sym();
        let traceless = sym.sub(&EndoMatrix::identity(2).scale(sym.trace() / 8.0));
        let t2 = QuaternionTriple::standard(2);
        let r = project_torsion_space(&traceless, &t2).unwrap();
        assert!(r.sub(&traceless).max_abs() < 1e-14);
    }

    #[test]
    fn p_projection_fixes_commuting_skew() {
        let t = QuaternionTriple::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_endo(2, &mut rng).skew();
        // average over the conjugation action produces an element of P
        let avg = four_part_decompose(&a, &t).unwrap().p_ppp;
        let p = project_p(&avg, &t).unwrap();
        assert!(p.sub(&avg).max_abs() < 1e-14);
        assert!(project_p(&EndoMatrix::identity(2), &t).unwrap().max_abs() < 1e-15);
    }

    fn image_rank(vs: &[DMatrix<f64>]) -> usize {
        let d2 = vs[0].len();
        let m = DMatrix::from_fn(d2, vs.len(), |r, c| vs[c][r]);
        let sv = m.singular_values();
        let max = sv.max();
        sv.iter().filter(|&&s| s > 1e-9 * max).count()
    }

    #[test]
    fn p_has_rank_2n2_plus_n() {
        for n in 1..=2 {
            let t = QuaternionTriple::standard(n);
            let mut rng = ChaCha8Rng::seed_from_u64(50 + n as u64);
            let imgs: Vec<_> = (0..50)
                .map(|_| project_p(&random_endo(n, &mut rng), &t).unwrap().into_matrix())
                .collect();
            assert_eq!(image_rank(&imgs), 2 * n * n + n);
        }
    }

    #[test]
    fn symmetric_commutant_is_one_dimensional_for_n1() {
        let t = QuaternionTriple::standard(1);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let imgs: Vec<_> = (0..30)
            .map(|_| {
                let psi = random_endo(1, &mut rng).sym();
                four_part_decompose(&psi, &t).unwrap().p_ppp.into_matrix()
            })
            .collect();
        assert_eq!(image_rank(&imgs), 1);
        let psi = random_endo(1, &mut rng).sym();
        let ppp = four_part_decompose(&psi, &t).unwrap().p_ppp;
        let expect = EndoMatrix::identity(1).scale(psi.trace() / 4.0);
        assert!(ppp.sub(&expect).max_abs() < 1e-14);
    }

    #[test]
    fn torsion_skew_basis_dimension() {
        assert!(torsion_skew_basis(&QuaternionTriple::standard(1)).is_empty());
        assert_eq!(torsion_skew_basis(&QuaternionTriple::standard(2)).len(), 15);
    }

    #[test]
    fn cross_product_examples() {
        let e1 = VTriple::new(1.0, 0.0, 0.0);
        let e2 = VTriple::new(0.0, 1.0, 0.0);
        assert_eq!(v_cross(&e1, &e2), VTriple::new(0.0, 0.0, 1.0));
        assert_eq!(v_cross(&e1, &e1), VTriple::default());
        assert_eq!(
            v_cross(&VTriple::new(1.0, 2.0, 3.0), &VTriple::new(4.0, 5.0, 6.0)),
            VTriple::new(-3.0, 6.0, -3.0)
        );
    }

    #[test]
    fn rotated_triple_stays_quaternionic() {
        let t = QuaternionTriple::standard(1);
        let c = (0.3f64).cos();
        let s = (0.3f64).sin();
        let a = [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]];
        assert!(t.rotated(&a).relation_residual() < 1e-14);
    }
}
