use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

/// Expression tree over state variables `x1..xn` and control variables
/// `u1..um`. Variable indices are 1-based, as written in the source text.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    State(usize),
    Control(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn unary(op: UnaryOp, arg: Expr) -> Expr {
        Expr::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn neg(arg: Expr) -> Expr {
        Expr::unary(UnaryOp::Neg, arg)
    }

    /// Largest state index referenced, 0 if none.
    pub fn max_state_index(&self) -> usize {
        self.fold_max(&|e| match e {
            Expr::State(i) => *i,
            _ => 0,
        })
    }

    /// Largest control index referenced, 0 if none.
    pub fn max_control_index(&self) -> usize {
        self.fold_max(&|e| match e {
            Expr::Control(j) => *j,
            _ => 0,
        })
    }

    /// Smallest variable index referenced (state or control), if any.
    pub(crate) fn min_var_index(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::State(i) | Expr::Control(i) => Some(*i),
            Expr::Unary(_, a) => a.min_var_index(),
            Expr::Binary(_, a, b) => match (a.min_var_index(), b.min_var_index()) {
                (Some(p), Some(q)) => Some(p.min(q)),
                (p, q) => p.or(q),
            },
        }
    }

    pub fn uses_controls(&self) -> bool {
        match self {
            Expr::Control(_) => true,
            Expr::Unary(_, a) => a.uses_controls(),
            Expr::Binary(_, a, b) => a.uses_controls() || b.uses_controls(),
            _ => false,
        }
    }

    fn fold_max(&self, leaf: &dyn Fn(&Expr) -> usize) -> usize {
        match self {
            Expr::Unary(_, a) => a.fold_max(leaf),
            Expr::Binary(_, a, b) => a.fold_max(leaf).max(b.fold_max(leaf)),
            e => leaf(e),
        }
    }

    /// Replaces every control variable by the corresponding constant.
    pub fn freeze_controls(&self, u: &[f64]) -> Expr {
        match self {
            Expr::Control(j) if *j >= 1 && *j <= u.len() => Expr::Const(u[*j - 1]),
            Expr::Unary(op, a) => Expr::unary(*op, a.freeze_controls(u)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.freeze_controls(u), b.freeze_controls(u)),
            e => e.clone(),
        }
    }
}

/// Fully parenthesized form; reparses to a structurally identical tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{:?})", -c)
            }
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::State(i) => write!(f, "x{i}"),
            Expr::Control(j) => write!(f, "u{j}"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({a}{}{b})", op.symbol()),
        }
    }
}
