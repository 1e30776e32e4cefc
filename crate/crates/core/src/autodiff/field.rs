use std::ops::{Add, Mul, Neg, Sub};

use super::{Jet, Var};

/// Arithmetic shared by every representation a residual can be evaluated on:
/// plain numbers, scalar jets, taped batches and tape-free batches.
pub trait Field:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
}

impl Field for f64 {}
impl Field for Jet {}
impl Field for Var<'_> {}
impl Field for Samples {}

/// Values of one quantity at a batch of points, without gradient tracking.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples(pub Vec<f64>);

impl Samples {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn mean_square(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>() / self.0.len() as f64
    }

    fn zip(self, rhs: Samples, f: impl Fn(f64, f64) -> f64) -> Samples {
        assert_eq!(self.0.len(), rhs.0.len(), "sample batches differ in length");
        let mut a = self.0;
        for (x, y) in a.iter_mut().zip(rhs.0) {
            *x = f(*x, y);
        }
        Samples(a)
    }

    fn map(mut self, f: impl Fn(f64) -> f64) -> Samples {
        for x in self.0.iter_mut() {
            *x = f(*x);
        }
        self
    }
}

impl Add for Samples {
    type Output = Samples;
    fn add(self, rhs: Samples) -> Samples {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for Samples {
    type Output = Samples;
    fn sub(self, rhs: Samples) -> Samples {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul for Samples {
    type Output = Samples;
    fn mul(self, rhs: Samples) -> Samples {
        self.zip(rhs, |a, b| a * b)
    }
}

impl Neg for Samples {
    type Output = Samples;
    fn neg(self) -> Samples {
        self.map(|a| -a)
    }
}

impl Add<f64> for Samples {
    type Output = Samples;
    fn add(self, c: f64) -> Samples {
        self.map(|a| a + c)
    }
}

impl Sub<f64> for Samples {
    type Output = Samples;
    fn sub(self, c: f64) -> Samples {
        self.map(|a| a - c)
    }
}

impl Mul<f64> for Samples {
    type Output = Samples;
    fn mul(self, c: f64) -> Samples {
        self.map(|a| a * c)
    }
}
