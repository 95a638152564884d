//! Smooth bounded test functions of the first few coordinates.

use crate::error::{Error, Result};

pub trait CylinderFunction: Send + Sync {
    fn name(&self) -> &str;

    /// Number of leading coordinates the function reads.
    fn arity(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    /// Writes the gradient into `out[..arity]`.
    fn grad(&self, x: &[f64], out: &mut [f64]);

    /// Bound on `|f|`.
    fn sup_bound(&self) -> f64;

    /// Bound on `|grad f|`.
    fn grad_bound(&self) -> f64;

    fn grad_norm_sq(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.arity()];
        self.grad(x, &mut g);
        g.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl CylinderFunction for Constant {
    fn name(&self) -> &str {
        "constant"
    }

    fn arity(&self) -> usize {
        0
    }

    fn eval(&self, _: &[f64]) -> f64 {
        self.0
    }

    fn grad(&self, _: &[f64], _: &mut [f64]) {}

    fn sup_bound(&self) -> f64 {
        self.0.abs()
    }

    fn grad_bound(&self) -> f64 {
        0.0
    }
}

/// `sin(x_1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SinX1;

impl CylinderFunction for SinX1 {
    fn name(&self) -> &str {
        "sin_x1"
    }

    fn arity(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64]) -> f64 {
        x[0].sin()
    }

    fn grad(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0].cos();
    }

    fn sup_bound(&self) -> f64 {
        1.0
    }

    fn grad_bound(&self) -> f64 {
        1.0
    }
}

/// `tanh(x_1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TanhX1;

impl CylinderFunction for TanhX1 {
    fn name(&self) -> &str {
        "tanh_x1"
    }

    fn arity(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64]) -> f64 {
        x[0].tanh()
    }

    fn grad(&self, x: &[f64], out: &mut [f64]) {
        let c = x[0].cosh();
        out[0] = 1.0 / (c * c);
    }

    fn sup_bound(&self) -> f64 {
        1.0
    }

    fn grad_bound(&self) -> f64 {
        1.0
    }
}

/// `exp(-(x_1^2 + x_2^2) / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussBumpX1X2;

impl CylinderFunction for GaussBumpX1X2 {
    fn name(&self) -> &str {
        "gauss_bump_x1x2"
    }

    fn arity(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp()
    }

    fn grad(&self, x: &[f64], out: &mut [f64]) {
        let e = self.eval(x);
        out[0] = -x[0] * e;
        out[1] = -x[1] * e;
    }

    fn sup_bound(&self) -> f64 {
        1.0
    }

    // |grad| = r exp(-r^2/2), largest at r = 1
    fn grad_bound(&self) -> f64 {
        (-0.5f64).exp()
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["sin_x1", "tanh_x1", "gauss_bump_x1x2"];

pub fn builtin(name: &str) -> Result<Box<dyn CylinderFunction>> {
    match name {
        "sin_x1" => Ok(Box::new(SinX1)),
        "tanh_x1" => Ok(Box::new(TanhX1)),
        "gauss_bump_x1x2" => Ok(Box::new(GaussBumpX1X2)),
        other => Err(Error::InvalidArgument(format!(
            "unknown cylinder function {other:?}; expected one of {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}
