use nalgebra::{DMatrix, DVector};

use super::ast::Expr;
use super::eval::{eval, jacobian};
use super::{parse_expr, FieldError};

/// Step used when a bracket of brackets needs the Jacobian of an inner
/// bracket: central differences with `step * max(1, |x_k|)`.
pub const NESTED_BRACKET_STEP: f64 = 1e-5;

/// A control-free vector field on ℝⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Expr>,
}

impl VectorField {
    pub fn new(components: Vec<Expr>) -> Result<Self, FieldError> {
        let n = components.len();
        for e in &components {
            if e.uses_controls() {
                return Err(FieldError::ControlInField { expr: e.to_string() });
            }
            let max = e.max_state_index();
            if max > n {
                return Err(FieldError::Index { var: format!("x{max}"), bound: n });
            }
            if e.min_var_index() == Some(0) {
                return Err(FieldError::Index { var: "x0".into(), bound: n });
            }
        }
        Ok(VectorField { components })
    }

    pub fn parse(sources: &[&str]) -> Result<Self, FieldError> {
        let components = sources
            .iter()
            .map(|s| parse_expr(s).map_err(FieldError::Syntax))
            .collect::<Result<Vec<_>, _>>()?;
        VectorField::new(components)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>, FieldError> {
        self.check_point(x)?;
        let values = self.components.iter().map(|e| eval(e, x, &[])).collect::<Result<Vec<_>, _>>()?;
        Ok(DVector::from_vec(values))
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, FieldError> {
        self.check_point(x)?;
        jacobian(&self.components, x, &[])
    }

    fn check_point(&self, x: &[f64]) -> Result<(), FieldError> {
        if x.len() != self.dim() {
            return Err(FieldError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(())
    }
}

/// `[f, g](x) = Dg(x) f(x) − Df(x) g(x)`.
pub fn lie_bracket(f: &VectorField, g: &VectorField, x: &[f64]) -> Result<DVector<f64>, FieldError> {
    if f.dim() != g.dim() {
        return Err(FieldError::DimensionMismatch { expected: f.dim(), found: g.dim() });
    }
    Ok(g.jacobian(x)? * f.eval(x)? - f.jacobian(x)? * g.eval(x)?)
}

/// An iterated Lie bracket over a fixed list of fields, e.g. `[f0, [f1, f2]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LieTerm {
    Field(usize),
    Bracket(Box<LieTerm>, Box<LieTerm>),
}

impl LieTerm {
    pub fn bracket(a: LieTerm, b: LieTerm) -> LieTerm {
        LieTerm::Bracket(Box::new(a), Box::new(b))
    }

    pub fn depth(&self) -> usize {
        match self {
            LieTerm::Field(_) => 0,
            LieTerm::Bracket(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn eval(&self, fields: &[VectorField], x: &[f64]) -> Result<DVector<f64>, FieldError> {
        match self {
            LieTerm::Field(i) => field_at(fields, *i)?.eval(x),
            LieTerm::Bracket(a, b) => {
                let ja = a.jacobian(fields, x)?;
                let jb = b.jacobian(fields, x)?;
                Ok(jb * a.eval(fields, x)? - ja * b.eval(fields, x)?)
            }
        }
    }

    /// Exact (forward-mode) for plain fields; central differences of the
    /// bracket values for nested terms.
    pub fn jacobian(&self, fields: &[VectorField], x: &[f64]) -> Result<DMatrix<f64>, FieldError> {
        match self {
            LieTerm::Field(i) => field_at(fields, *i)?.jacobian(x),
            LieTerm::Bracket(..) => {
                let n = x.len();
                let mut jac = DMatrix::zeros(n, n);
                let mut probe = x.to_vec();
                for k in 0..n {
                    let step = NESTED_BRACKET_STEP * x[k].abs().max(1.0);
                    probe[k] = x[k] + step;
                    let plus = self.eval(fields, &probe)?;
                    probe[k] = x[k] - step;
                    let minus = self.eval(fields, &probe)?;
                    probe[k] = x[k];
                    jac.set_column(k, &((plus - minus) / (2.0 * step)));
                }
                Ok(jac)
            }
        }
    }
}

fn field_at(fields: &[VectorField], i: usize) -> Result<&VectorField, FieldError> {
    fields.get(i).ok_or(FieldError::Index { var: format!("field #{i}"), bound: fields.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot() -> VectorField {
        VectorField::parse(&["-x2", "x1"]).unwrap()
    }
    fn dil() -> VectorField {
        VectorField::parse(&["x1", "x2"]).unwrap()
    }
    fn drift() -> VectorField {
        VectorField::parse(&["1", "0"]).unwrap()
    }

    #[test]
    fn rotation_and_dilation_commute() {
        let b = lie_bracket(&rot(), &dil(), &[1.0, 2.0]).unwrap();
        assert_eq!(b.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn drift_with_rotation() {
        for x in [[0.0, 0.0], [1.5, -2.0], [-3.0, 7.0]] {
            let b = lie_bracket(&drift(), &rot(), &x).unwrap();
            assert_eq!(b.as_slice(), &[0.0, 1.0]);
        }
    }

    #[test]
    fn self_bracket_vanishes() {
        let f = VectorField::parse(&["x1*x2", "sin(x1)"]).unwrap();
        let b = lie_bracket(&f, &f, &[0.7, -0.2]).unwrap();
        assert_eq!(b.norm(), 0.0);
    }

    #[test]
    fn rejects_controls_and_mismatched_dimensions() {
        assert!(matches!(VectorField::parse(&["u1", "x1"]), Err(FieldError::ControlInField { .. })));
        assert!(matches!(VectorField::parse(&["x3", "x1"]), Err(FieldError::Index { .. })));
        let f3 = VectorField::parse(&["x1", "x2", "x3"]).unwrap();
        assert!(matches!(lie_bracket(&rot(), &f3, &[0.0, 0.0]), Err(FieldError::DimensionMismatch { .. })));
    }

    #[test]
    fn nested_terms_on_affine_fields() {
        // [X0, [X0, X1]] = [X0, (0,1)] = 0 since (0,1) is constant and X0 is constant.
        let fields = [drift(), rot()];
        let t = LieTerm::bracket(LieTerm::Field(0), LieTerm::bracket(LieTerm::Field(0), LieTerm::Field(1)));
        assert_eq!(t.depth(), 2);
        let v = t.eval(&fields, &[0.4, 0.9]).unwrap();
        assert!(v.norm() < 1e-9);
        // [X1, [X0, X1]] = [X1, (0,1)] = -D X1 (0,1) = (1, 0)
        let t = LieTerm::bracket(LieTerm::Field(1), LieTerm::bracket(LieTerm::Field(0), LieTerm::Field(1)));
        let v = t.eval(&fields, &[0.4, 0.9]).unwrap();
        assert!((v - DVector::from_vec(vec![1.0, 0.0])).norm() < 1e-9);
    }
}
