use std::ops::{Add, Div, Mul, Neg, Sub};

/// First-order forward-mode dual number with one partial per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub partials: Vec<f64>,
}

impl Dual {
    pub fn constant(value: f64, m: usize) -> Self {
        Self {
            value,
            partials: vec![0.0; m],
        }
    }

    pub fn variable(value: f64, index: usize, m: usize) -> Self {
        let mut partials = vec![0.0; m];
        partials[index] = 1.0;
        Self { value, partials }
    }

    /// Applies `f` with derivative `df` evaluated at the current value.
    fn chain(mut self, value: f64, df: f64) -> Self {
        self.value = value;
        for p in &mut self.partials {
            *p *= df;
        }
        self
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }

    pub fn ln(self) -> Self {
        let v = self.value;
        self.chain(v.ln(), 1.0 / v)
    }

    pub fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        self.chain(r, 0.5 / r)
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.chain(t, 1.0 - t * t)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        let v = -self.value;
        self.chain(v, -1.0)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(mut self, rhs: Dual) -> Dual {
        self.value += rhs.value;
        for (a, b) in self.partials.iter_mut().zip(rhs.partials) {
            *a += b;
        }
        self
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(mut self, rhs: Dual) -> Dual {
        self.value -= rhs.value;
        for (a, b) in self.partials.iter_mut().zip(rhs.partials) {
            *a -= b;
        }
        self
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(mut self, rhs: Dual) -> Dual {
        let (a, b) = (self.value, rhs.value);
        for (p, q) in self.partials.iter_mut().zip(rhs.partials) {
            *p = *p * b + a * q;
        }
        self.value = a * b;
        self
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(mut self, rhs: Dual) -> Dual {
        let (a, b) = (self.value, rhs.value);
        let inv = 1.0 / b;
        for (p, q) in self.partials.iter_mut().zip(rhs.partials) {
            *p = (*p - a * inv * q) * inv;
        }
        self.value = a * inv;
        self
    }
}
