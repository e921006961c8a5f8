//! Numerical steps and tolerances shared by the pipeline.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{QcError, Result};
use crate::fd::{self, Stencil};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Pure matrix identities.
    pub exact: f64,
    /// Frame invariants (η(e) = 0, η(ξ) = δ, orthonormality).
    pub frame: f64,
    /// dη_s(X,Y) = 2g(I_sX,Y) on H.
    pub levi: f64,
    /// Reeb compatibility residual.
    pub bi1: f64,
    /// Quaternion relations of the recovered endomorphisms.
    pub quaternion: f64,
    /// Q-preservation of the vertical connection.
    pub q_preserve: f64,
    /// Torsion structure identities.
    pub torsion: f64,
    pub normal: f64,
    pub t0: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            exact: 1e-12,
            frame: 1e-10,
            levi: 1e-9,
            bi1: 1e-9,
            quaternion: 1e-8,
            q_preserve: 1e-7,
            torsion: 1e-7,
            normal: 1e-4,
            t0: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NumericSettings {
    pub stencil: Arc<dyn Stencil>,
    /// Step for brackets of the frame field.
    pub h_fd: f64,
    /// Step for differencing connection coefficients, τ and fields on the twistor space.
    pub h_curv: f64,
    pub tol: Tolerances,
}

impl Default for NumericSettings {
    fn default() -> Self {
        Self {
            stencil: Arc::new(fd::Central4),
            h_fd: 1e-3,
            h_curv: 2e-3,
            tol: Tolerances::default(),
        }
    }
}

impl NumericSettings {
    /// Second-order central differences with steps 1e-5 / 1e-4.
    pub fn central2() -> Self {
        Self {
            stencil: Arc::new(fd::Central2),
            h_fd: 1e-5,
            h_curv: 1e-4,
            tol: Tolerances::default(),
        }
    }

    pub fn with_scheme(mut self, name: &str) -> Result<Self> {
        self.stencil = fd::stencil(name)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (label, v) in [("fd step", self.h_fd), ("curvature step", self.h_curv)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(QcError::Config(format!("{label} must be positive, got {v}")));
            }
        }
        let t = &self.tol;
        for v in [
            t.exact,
            t.frame,
            t.levi,
            t.bi1,
            t.quaternion,
            t.q_preserve,
            t.torsion,
            t.normal,
            t.t0,
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(QcError::Config(format!("tolerances must be positive, got {v}")));
            }
        }
        Ok(())
    }
}
