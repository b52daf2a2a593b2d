//! Bundled example systems.

use nalgebra::DMatrix;

use crate::certify::LinearSystem;
use crate::system::{boxed_system, ControlSystem};

pub const EXAMPLE22_NAME: &str = "example22-rotdil";
pub const EXAMPLE21_NAME: &str = "example21-doubleintegrator";

/// Translation, rotation and dilation in the plane:
/// `ẋ = u1·(1, 0) + u2·(−x2, x1) + u3·(x1, x2)`, `u1 ∈ [0, 1]`,
/// `u2, u3 ∈ [−1, 1]`. Channels `u1, u2, u3` are the drift, rotation and
/// dilation weights (0-based `u0, u1, u2` in the usual write-up).
pub fn example22() -> ControlSystem {
    boxed_system(
        EXAMPLE22_NAME,
        &["u1*1 - u2*x2 + u3*x1", "u2*x1 + u3*x2"],
        &[(0.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)],
    )
    .expect("bundled system binds")
}

/// The three control-free fields of [`example22`]: drift, rotation, dilation.
pub fn example22_fields() -> [crate::fieldlang::VectorField; 3] {
    use crate::fieldlang::VectorField;
    [
        VectorField::parse(&["1", "0"]).expect("drift"),
        VectorField::parse(&["-x2", "x1"]).expect("rotation"),
        VectorField::parse(&["x1", "x2"]).expect("dilation"),
    ]
}

/// Double integrator `ẋ1 = x2, ẋ2 = u1` with `u1 ∈ [−bound, bound]`.
pub fn double_integrator(bound: f64) -> ControlSystem {
    boxed_system(EXAMPLE21_NAME, &["x2", "u1"], &[(-bound, bound)]).expect("bundled system binds")
}

pub fn example21() -> ControlSystem {
    double_integrator(1.0)
}

/// `(A, B)` of the double integrator.
pub fn example21_linear() -> LinearSystem {
    LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
    )
    .expect("consistent dimensions")
}

/// `ẋ = u`, `u ∈ [−1, 1]`.
pub fn single_integrator() -> ControlSystem {
    boxed_system("single-integrator", &["u1"], &[(-1.0, 1.0)]).expect("bundled system binds")
}

/// `ẋ = 1` with no control channels.
pub fn pure_drift() -> ControlSystem {
    boxed_system("pure-drift", &["1"], &[]).expect("bundled system binds")
}

/// Bundled system by reserved name.
pub fn by_name(name: &str) -> Option<ControlSystem> {
    match name {
        EXAMPLE22_NAME => Some(example22()),
        EXAMPLE21_NAME => Some(example21()),
        _ => None,
    }
}
