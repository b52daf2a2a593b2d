use std::ops::{Add, Div, Mul, Neg, Sub};

/// First-order dual number: a value and its gradient with respect to a fixed
/// set of seed directions (all state variables followed by all controls).
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub deriv: Vec<f64>,
}

impl Dual {
    pub fn constant(value: f64, dirs: usize) -> Dual {
        Dual { value, deriv: vec![0.0; dirs] }
    }

    /// Independent variable number `index` among `dirs` seed directions.
    pub fn variable(value: f64, index: usize, dirs: usize) -> Dual {
        let mut deriv = vec![0.0; dirs];
        deriv[index] = 1.0;
        Dual { value, deriv }
    }

    pub fn is_constant(&self) -> bool {
        self.deriv.iter().all(|d| *d == 0.0)
    }

    /// Applies a scalar function with known derivative `slope` at `self.value`.
    fn chain(mut self, value: f64, slope: f64) -> Dual {
        self.value = value;
        for d in &mut self.deriv {
            *d *= slope;
        }
        self
    }

    pub fn sin(self) -> Dual {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c)
    }

    pub fn cos(self) -> Dual {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s)
    }

    pub fn exp(self) -> Dual {
        let e = self.value.exp();
        self.chain(e, e)
    }

    pub fn sqrt(self) -> Dual {
        let r = self.value.sqrt();
        self.chain(r, 0.5 / r)
    }

    /// `self ^ exponent`. When the exponent carries no derivative only the
    /// power-rule term is formed, so negative bases with integer exponents
    /// stay finite.
    pub fn pow(self, exponent: Dual) -> Dual {
        let value = real_pow(self.value, exponent.value);
        let slope = if exponent.value == 0.0 {
            0.0
        } else {
            exponent.value * real_pow(self.value, exponent.value - 1.0)
        };
        if exponent.is_constant() {
            return self.chain(value, slope);
        }
        let log_term = value * self.value.ln();
        let deriv = self
            .deriv
            .iter()
            .zip(&exponent.deriv)
            .map(|(da, db)| slope * da + log_term * db)
            .collect();
        Dual { value, deriv }
    }
}

pub(crate) fn real_pow(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() < i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(mut self, rhs: Dual) -> Dual {
        self.value += rhs.value;
        for (a, b) in self.deriv.iter_mut().zip(&rhs.deriv) {
            *a += b;
        }
        self
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(mut self, rhs: Dual) -> Dual {
        self.value -= rhs.value;
        for (a, b) in self.deriv.iter_mut().zip(&rhs.deriv) {
            *a -= b;
        }
        self
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(mut self, rhs: Dual) -> Dual {
        for (a, b) in self.deriv.iter_mut().zip(&rhs.deriv) {
            *a = *a * rhs.value + self.value * b;
        }
        self.value *= rhs.value;
        self
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(mut self, rhs: Dual) -> Dual {
        let q = self.value / rhs.value;
        for (a, b) in self.deriv.iter_mut().zip(&rhs.deriv) {
            *a = (*a - q * b) / rhs.value;
        }
        self.value = q;
        self
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(mut self) -> Dual {
        self.value = -self.value;
        for d in &mut self.deriv {
            *d = -*d;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_rules() {
        let a = Dual::variable(3.0, 0, 2);
        let b = Dual::variable(2.0, 1, 2);
        let p = a.clone() * b.clone();
        assert_eq!(p.value, 6.0);
        assert_eq!(p.deriv, vec![2.0, 3.0]);
        let q = a / b;
        assert_eq!(q.value, 1.5);
        assert_eq!(q.deriv, vec![0.5, -0.75]);
    }

    #[test]
    fn pow_with_constant_negative_base() {
        let a = Dual::variable(-2.0, 0, 1);
        let c = a.pow(Dual::constant(3.0, 1));
        assert_eq!(c.value, -8.0);
        assert_eq!(c.deriv, vec![12.0]);
    }

    #[test]
    fn pow_with_variable_exponent() {
        // d/dy 2^y = 2^y ln 2
        let base = Dual::constant(2.0, 1);
        let y = Dual::variable(3.0, 0, 1);
        let r = base.pow(y);
        assert_eq!(r.value, 8.0);
        assert!((r.deriv[0] - 8.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn zero_exponent_has_zero_slope_at_zero_base() {
        let a = Dual::variable(0.0, 0, 1);
        let r = a.pow(Dual::constant(0.0, 1));
        assert_eq!(r.value, 1.0);
        assert_eq!(r.deriv, vec![0.0]);
    }
}
