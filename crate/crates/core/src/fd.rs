//! Finite-difference stencils, selected by name at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{QcError, Result};

/// A first-derivative stencil: `f'(x) ≈ Σ w_k f(x + o_k h) / h`.
pub trait Stencil: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    /// `(offset, weight)` pairs in units of the step.
    fn taps(&self) -> &'static [(f64, f64)];
    /// Truncation order in the step size.
    fn order(&self) -> u32;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Central2;

impl Stencil for Central2 {
    fn name(&self) -> &'static str {
        "central2"
    }
    fn taps(&self) -> &'static [(f64, f64)] {
        &[(-1.0, -0.5), (1.0, 0.5)]
    }
    fn order(&self) -> u32 {
        2
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Central4;

impl Stencil for Central4 {
    fn name(&self) -> &'static str {
        "central4"
    }
    fn taps(&self) -> &'static [(f64, f64)] {
        &[
            (-2.0, 1.0 / 12.0),
            (-1.0, -8.0 / 12.0),
            (1.0, 8.0 / 12.0),
            (2.0, -1.0 / 12.0),
        ]
    }
    fn order(&self) -> u32 {
        4
    }
}

#[derive(Debug, Clone)]
pub struct StencilRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Stencil>>,
}

impl StencilRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Central2));
        r.register(Arc::new(Central4));
        r
    }

    pub fn register(&mut self, stencil: Arc<dyn Stencil>) {
        self.entries.insert(stencil.name(), stencil);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Stencil>> {
        self.entries.get(name).cloned().ok_or_else(|| QcError::UnknownName {
            kind: "stencil",
            name: name.to_string(),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }
}

/// Looks up a built-in stencil.
pub fn stencil(name: &str) -> Result<Arc<dyn Stencil>> {
    StencilRegistry::with_builtins().get(name)
}

/// Values that can be combined linearly by a stencil.
pub trait Linear: Sized {
    fn scaled(&self, a: f64) -> Self;
    fn add_scaled(&mut self, other: &Self, a: f64);
}

impl Linear for f64 {
    fn scaled(&self, a: f64) -> Self {
        self * a
    }
    fn add_scaled(&mut self, other: &Self, a: f64) {
        *self += a * other;
    }
}

impl<T: Linear> Linear for Vec<T> {
    fn scaled(&self, a: f64) -> Self {
        self.iter().map(|v| v.scaled(a)).collect()
    }
    fn add_scaled(&mut self, other: &Self, a: f64) {
        for (x, y) in self.iter_mut().zip(other) {
            x.add_scaled(y, a);
        }
    }
}

impl Linear for DMatrix<f64> {
    fn scaled(&self, a: f64) -> Self {
        self * a
    }
    fn add_scaled(&mut self, other: &Self, a: f64) {
        *self += other * a;
    }
}

impl Linear for DVector<f64> {
    fn scaled(&self, a: f64) -> Self {
        self * a
    }
    fn add_scaled(&mut self, other: &Self, a: f64) {
        *self += other * a;
    }
}

/// Differentiates `t ↦ f(t)` at `t = 0`; `f` receives the absolute offset.
pub fn derivative<T: Linear>(stencil: &dyn Stencil, h: f64, mut f: impl FnMut(f64) -> Result<T>) -> Result<T> {
    let mut acc: Option<T> = None;
    for &(o, w) in stencil.taps() {
        let v = f(o * h)?;
        match acc.as_mut() {
            None => acc = Some(v.scaled(w / h)),
            Some(a) => a.add_scaled(&v, w / h),
        }
    }
    Ok(acc.expect("stencil has at least one tap"))
}

/// Derivative of `f` at `x` along `dir`.
pub fn directional<T: Linear>(
    stencil: &dyn Stencil,
    h: f64,
    x: &[f64],
    dir: &[f64],
    mut f: impl FnMut(&[f64]) -> Result<T>,
) -> Result<T> {
    let mut p = x.to_vec();
    derivative(stencil, h, |t| {
        for ((pi, xi), di) in p.iter_mut().zip(x).zip(dir) {
            *pi = xi + t * di;
        }
        f(&p)
    })
}

/// Jacobian `J[i][r] = ∂f_i/∂x_r` by differencing along each coordinate.
pub fn jacobian(
    stencil: &dyn Stencil,
    h: f64,
    x: &[f64],
    mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<DMatrix<f64>> {
    let m = x.len();
    let mut cols = Vec::with_capacity(m);
    let mut dir = vec![0.0; m];
    for r in 0..m {
        dir[r] = 1.0;
        cols.push(DVector::from_vec(directional(stencil, h, x, &dir, &mut f)?));
        dir[r] = 0.0;
    }
    Ok(DMatrix::from_columns(&cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lookup() {
        let r = StencilRegistry::with_builtins();
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["central2", "central4"]);
        assert_eq!(r.get("central4").unwrap().order(), 4);
        assert!(matches!(
            r.get("upwind"),
            Err(QcError::UnknownName { kind: "stencil", .. })
        ));
    }

    #[test]
    fn weights_are_consistent() {
        for name in ["central2", "central4"] {
            let s = stencil(name).unwrap();
            let sum: f64 = s.taps().iter().map(|t| t.1).sum();
            let first: f64 = s.taps().iter().map(|t| t.0 * t.1).sum();
            assert!(sum.abs() < 1e-15);
            assert!((first - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_of_sine() {
        let exact = 0.3f64.cos();
        let e2 = derivative(&Central2, 1e-3, |t| Ok((0.3 + t).sin())).unwrap();
        let e4 = derivative(&Central4, 1e-3, |t| Ok((0.3 + t).sin())).unwrap();
        assert!((e2 - exact).abs() < 2e-7);
        assert!((e4 - exact).abs() < 1e-12);
    }

    #[test]
    fn central4_is_fourth_order() {
        let exact = 1.0f64.exp();
        let err = |h: f64| (derivative(&Central4, h, |t| Ok((1.0 + t).exp())).unwrap() - exact).abs();
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn jacobian_of_linear_map() {
        let j = jacobian(&Central2, 1e-4, &[1.0, 2.0], |x| Ok(vec![x[0] + 3.0 * x[1], -x[0]])).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, -1.0, 0.0]);
        assert!((j - expect).amax() < 1e-10);
    }
}
