//! Forward-mode dual numbers carrying a dense gradient vector.
//!
//! Each [`Dual`] holds a value and the gradient of that value with respect to
//! a fixed parameter vector. Constants carry an empty gradient (treated as
//! all-zero), so lifting configuration values is allocation-free. The
//! parameter count stays small (a couple hundred at most for a full body),
//! which keeps vectorized forward mode cheaper and simpler than a tape.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::{Add, Div, Mul, Neg, Sub};

use super::Real;

/// Value plus gradient w.r.t. the active parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    /// Empty means "zero gradient" (a constant).
    pub grad: Vec<f64>,
}

impl Dual {
    pub fn constant(v: f64) -> Dual {
        Dual { re: v, grad: Vec::new() }
    }

    /// Seed the `i`-th of `n` parameters.
    pub fn parameter(v: f64, i: usize, n: usize) -> Dual {
        let mut grad = vec![0.0; n];
        grad[i] = 1.0;
        Dual { re: v, grad }
    }

    /// Gradient entry, treating constants as zero.
    pub fn d(&self, i: usize) -> f64 {
        self.grad.get(i).copied().unwrap_or(0.0)
    }

    /// Gradient as a dense vector of length `n`.
    pub fn grad_vec(&self, n: usize) -> Vec<f64> {
        let mut g = vec![0.0; n];
        for (i, v) in self.grad.iter().enumerate() {
            g[i] = *v;
        }
        g
    }

    fn unary(&self, re: f64, df: f64) -> Dual {
        Dual {
            re,
            grad: self.grad.iter().map(|g| g * df).collect(),
        }
    }
}

/// `fa * a + fb * b` over gradients, treating empty as zero.
fn combine(a: &[f64], fa: f64, b: &[f64], fb: f64) -> Vec<f64> {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => Vec::new(),
        (false, true) => a.iter().map(|x| x * fa).collect(),
        (true, false) => b.iter().map(|x| x * fb).collect(),
        (false, false) => {
            debug_assert_eq!(a.len(), b.len(), "mismatched dual gradient lengths");
            a.iter().zip(b.iter()).map(|(x, y)| x * fa + y * fb).collect()
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual {
            re: self.re + rhs.re,
            grad: combine(&self.grad, 1.0, &rhs.grad, 1.0),
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual {
            re: self.re - rhs.re,
            grad: combine(&self.grad, 1.0, &rhs.grad, -1.0),
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual {
            re: self.re * rhs.re,
            grad: combine(&self.grad, rhs.re, &rhs.grad, self.re),
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        // True division for the value part so it is bit-identical to the
        // plain f64 evaluation path; the reciprocal only feeds the gradient.
        let inv = 1.0 / rhs.re;
        Dual {
            re: self.re / rhs.re,
            grad: combine(&self.grad, inv, &rhs.grad, -self.re * inv * inv),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            re: -self.re,
            grad: self.grad.iter().map(|g| -g).collect(),
        }
    }
}

impl PartialOrd for Dual {
    fn partial_cmp(&self, other: &Dual) -> Option<Ordering> {
        self.re.partial_cmp(&other.re)
    }
}

impl Real for Dual {
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }

    fn value(&self) -> f64 {
        self.re
    }

    fn sqrt(&self) -> Self {
        let s = libm::sqrt(self.re);
        self.unary(s, 0.5 / s)
    }

    fn sin(&self) -> Self {
        self.unary(libm::sin(self.re), libm::cos(self.re))
    }

    fn cos(&self) -> Self {
        self.unary(libm::cos(self.re), -libm::sin(self.re))
    }

    fn abs(&self) -> Self {
        // Subgradient 0 at the origin.
        let s = if self.re > 0.0 {
            1.0
        } else if self.re < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(self.re.abs(), s)
    }

    fn exp(&self) -> Self {
        let e = libm::exp(self.re);
        self.unary(e, e)
    }

    fn ln(&self) -> Self {
        self.unary(libm::log(self.re), 1.0 / self.re)
    }

    fn floor(&self) -> Self {
        Dual::constant(libm::floor(self.re))
    }
}
