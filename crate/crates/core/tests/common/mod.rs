#![allow(dead_code)]

use nalgebra::DMatrix;
use qclab::algebra::{EndoMatrix, QuaternionTriple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_endo(n: usize, rng: &mut impl Rng) -> EndoMatrix {
    EndoMatrix::new(random_matrix(4 * n, rng)).unwrap()
}

pub fn random_orthogonal(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    random_matrix(d, rng).qr().q()
}

/// The standard triple conjugated by a random orthogonal matrix and mixed by a
/// random rotation.
pub fn random_triple(n: usize, rng: &mut impl Rng) -> QuaternionTriple {
    let o = random_orthogonal(4 * n, rng);
    let std = QuaternionTriple::standard(n);
    let conj: Vec<EndoMatrix> = (0..3)
        .map(|s| EndoMatrix::new(o.transpose() * std.get(s).matrix() * &o).unwrap())
        .collect();
    let mut r = random_orthogonal(3, rng);
    if r.determinant() < 0.0 {
        r.column_mut(0).neg_mut();
    }
    let t = QuaternionTriple::new(conj[0].clone(), conj[1].clone(), conj[2].clone(), 1e-12).unwrap();
    let a: [[f64; 3]; 3] = std::array::from_fn(|s| std::array::from_fn(|k| r[(s, k)]));
    t.rotated(&a)
}

/// Deterministic interior point of [-0.5, 0.5]^m.
pub fn point(m: usize, seed: f64) -> Vec<f64> {
    (0..m).map(|r| 0.5 * ((r as f64 + 1.0) * seed).sin()).collect()
}
