//! Recursive-descent parser for field expressions.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := atom ('^' factor)?
//! atom   := number | 'x' INT | 'u' INT | func '(' expr ')' | '(' expr ')' | '-' atom
//! func   := sin | cos | exp | sqrt
//! ```
//!
//! There is no implicit multiplication: `2x1` is rejected.

use std::fmt;

use super::ast::{BinaryOp, Expr, UnaryOp};

/// Parse failure at a byte offset into the source.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct SyntaxError {
    pub offset: usize,
    pub expected: Vec<&'static str>,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "syntax error at byte {}: expected one of {}",
            self.offset,
            self.expected.join(", ")
        )
    }
}

const ATOM_START: &[&str] = &["number", "x<index>", "u<index>", "sin", "cos", "exp", "sqrt", "(", "-"];

pub fn parse_expr(source: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser { src: source.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error(&["+", "-", "*", "/", "^", "end of input"]));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, expected: &[&'static str]) -> SyntaxError {
        SyntaxError { offset: self.pos, expected: expected.to_vec() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinaryOp::Add,
                Some(b'-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.factor()?;
            return Ok(Expr::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::neg(self.atom()?))
            }
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_close()?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            _ => Err(self.error(ATOM_START)),
        }
    }

    fn expect_close(&mut self) -> Result<(), SyntaxError> {
        if self.peek() == Some(b')') {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&[")", "+", "-", "*", "/", "^"]))
        }
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.pos - start
    }

    fn number(&mut self) -> Result<Expr, SyntaxError> {
        let start = self.pos;
        self.digits();
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            self.digits();
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.digits() == 0 {
                // Not an exponent after all; leave `e` for the caller to reject.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| SyntaxError { offset: start, expected: vec!["number"] })
    }

    fn identifier(&mut self) -> Result<Expr, SyntaxError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let ident = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
        let func = match ident {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "exp" => Some(UnaryOp::Exp),
            "sqrt" => Some(UnaryOp::Sqrt),
            _ => None,
        };
        if let Some(op) = func {
            if self.peek() != Some(b'(') {
                return Err(self.error(&["("]));
            }
            self.pos += 1;
            let arg = self.expr()?;
            self.expect_close()?;
            return Ok(Expr::unary(op, arg));
        }
        let (head, rest) = ident.split_at(1);
        let index = (!rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
            .then(|| rest.parse::<usize>().ok())
            .flatten();
        match (head, index) {
            ("x", Some(i)) => Ok(Expr::State(i)),
            ("u", Some(j)) => Ok(Expr::Control(j)),
            _ => Err(SyntaxError { offset: start, expected: ATOM_START.to_vec() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::State(i)
    }
    fn u(j: usize) -> Expr {
        Expr::Control(j)
    }

    #[test]
    fn negated_state() {
        assert_eq!(parse_expr("-x2").unwrap(), Expr::neg(x(2)));
    }

    #[test]
    fn product_binds_tighter_than_sum() {
        assert_eq!(
            parse_expr("u1*x1 + u2").unwrap(),
            Expr::binary(BinaryOp::Add, Expr::binary(BinaryOp::Mul, u(1), x(1)), u(2))
        );
    }

    #[test]
    fn unclosed_call_reports_offset() {
        let err = parse_expr("sin(").unwrap_err();
        assert_eq!(err.offset, 4);
        assert!(err.expected.contains(&"x<index>"));
    }

    #[test]
    fn left_associative_minus_and_right_associative_pow() {
        assert_eq!(
            parse_expr("x1 - x2 - x3").unwrap(),
            Expr::binary(BinaryOp::Sub, Expr::binary(BinaryOp::Sub, x(1), x(2)), x(3))
        );
        assert_eq!(
            parse_expr("x1^2^3").unwrap(),
            Expr::binary(
                BinaryOp::Pow,
                x(1),
                Expr::binary(BinaryOp::Pow, Expr::Const(2.0), Expr::Const(3.0))
            )
        );
    }

    #[test]
    fn implicit_multiplication_is_rejected() {
        let err = parse_expr("2x1").unwrap_err();
        assert_eq!(err.offset, 1);
    }

    #[test]
    fn exponent_literals() {
        assert_eq!(parse_expr("1.5e-3").unwrap(), Expr::Const(1.5e-3));
        assert_eq!(parse_expr("2E2").unwrap(), Expr::Const(200.0));
        assert!(parse_expr("2e").is_err());
    }

    #[test]
    fn bad_identifiers() {
        assert_eq!(parse_expr("y1").unwrap_err().offset, 0);
        assert_eq!(parse_expr("x").unwrap_err().offset, 0);
        assert_eq!(parse_expr("x1 + tan(x1)").unwrap_err().offset, 5);
        assert_eq!(parse_expr("sin x1").unwrap_err().offset, 4);
        assert!(parse_expr("").is_err());
        assert!(parse_expr("(x1").is_err());
        assert!(parse_expr("x1)").is_err());
    }

    #[test]
    fn zero_index_parses_and_is_left_to_binding() {
        assert_eq!(parse_expr("x0").unwrap(), x(0));
    }
}
