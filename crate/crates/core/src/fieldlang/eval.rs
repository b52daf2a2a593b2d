use nalgebra::DMatrix;

use super::ast::{BinaryOp, Expr, UnaryOp};
use super::dual::{real_pow, Dual};
use super::FieldError;

/// Evaluates `expr` at state `x` and control `u`.
///
/// Domain violations (square root of a negative number, division by exactly
/// zero, a negative base with a fractional exponent) are errors; so is a
/// non-finite result.
pub fn eval(expr: &Expr, x: &[f64], u: &[f64]) -> Result<f64, FieldError> {
    let v = eval_raw(expr, x, u)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(FieldError::NonFinite { value: v })
    }
}

fn eval_raw(expr: &Expr, x: &[f64], u: &[f64]) -> Result<f64, FieldError> {
    Ok(match expr {
        Expr::Const(c) => *c,
        Expr::State(i) => lookup(x, *i, 'x')?,
        Expr::Control(j) => lookup(u, *j, 'u')?,
        Expr::Unary(op, a) => {
            let a = eval_raw(a, x, u)?;
            match op {
                UnaryOp::Neg => -a,
                UnaryOp::Sin => a.sin(),
                UnaryOp::Cos => a.cos(),
                UnaryOp::Exp => a.exp(),
                UnaryOp::Sqrt => {
                    if a < 0.0 {
                        return Err(FieldError::Domain { op: "sqrt", arg: a });
                    }
                    a.sqrt()
                }
            }
        }
        Expr::Binary(op, a, b) => {
            let a = eval_raw(a, x, u)?;
            let b = eval_raw(b, x, u)?;
            match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => {
                    if b == 0.0 {
                        return Err(FieldError::Domain { op: "/", arg: b });
                    }
                    a / b
                }
                BinaryOp::Pow => pow_checked(a, b)?,
            }
        }
    })
}

fn pow_checked(base: f64, exponent: f64) -> Result<f64, FieldError> {
    if base < 0.0 && exponent.fract() != 0.0 {
        return Err(FieldError::Domain { op: "^", arg: base });
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(FieldError::Domain { op: "^", arg: base });
    }
    Ok(real_pow(base, exponent))
}

fn lookup(values: &[f64], index: usize, prefix: char) -> Result<f64, FieldError> {
    if index == 0 || index > values.len() {
        return Err(FieldError::Index { var: format!("{prefix}{index}"), bound: values.len() });
    }
    Ok(values[index - 1])
}

/// Forward-mode evaluation; the gradient is taken with respect to
/// `(x1..xn, u1..um)` in that order.
pub fn eval_dual(expr: &Expr, x: &[f64], u: &[f64]) -> Result<Dual, FieldError> {
    let d = eval_dual_raw(expr, x, u, x.len() + u.len())?;
    if d.value.is_finite() && d.deriv.iter().all(|v| v.is_finite()) {
        Ok(d)
    } else {
        Err(FieldError::NonFinite { value: d.value })
    }
}

fn eval_dual_raw(expr: &Expr, x: &[f64], u: &[f64], dirs: usize) -> Result<Dual, FieldError> {
    Ok(match expr {
        Expr::Const(c) => Dual::constant(*c, dirs),
        Expr::State(i) => Dual::variable(lookup(x, *i, 'x')?, i - 1, dirs),
        Expr::Control(j) => Dual::variable(lookup(u, *j, 'u')?, x.len() + j - 1, dirs),
        Expr::Unary(op, a) => {
            let a = eval_dual_raw(a, x, u, dirs)?;
            match op {
                UnaryOp::Neg => -a,
                UnaryOp::Sin => a.sin(),
                UnaryOp::Cos => a.cos(),
                UnaryOp::Exp => a.exp(),
                UnaryOp::Sqrt => {
                    if a.value < 0.0 {
                        return Err(FieldError::Domain { op: "sqrt", arg: a.value });
                    }
                    a.sqrt()
                }
            }
        }
        Expr::Binary(op, a, b) => {
            let a = eval_dual_raw(a, x, u, dirs)?;
            let b = eval_dual_raw(b, x, u, dirs)?;
            match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => {
                    if b.value == 0.0 {
                        return Err(FieldError::Domain { op: "/", arg: b.value });
                    }
                    a / b
                }
                BinaryOp::Pow => {
                    pow_checked(a.value, b.value)?;
                    a.pow(b)
                }
            }
        }
    })
}

/// State Jacobian `∂F_i/∂x_k` of a field family at `(x, u)`.
pub fn jacobian(field: &[Expr], x: &[f64], u: &[f64]) -> Result<DMatrix<f64>, FieldError> {
    let n = x.len();
    if field.len() != n {
        return Err(FieldError::DimensionMismatch { expected: n, found: field.len() });
    }
    let mut jac = DMatrix::zeros(n, n);
    for (i, e) in field.iter().enumerate() {
        let d = eval_dual(e, x, u)?;
        for k in 0..n {
            jac[(i, k)] = d.deriv[k];
        }
    }
    Ok(jac)
}
