#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use reachkit::flow::{endpoint, IntegratorConfig};
use reachkit::system::{boxed_system, ControlSystem, ControlWord, Segment};

/// `e^M` by scaling and squaring a 24-term Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.norm();
    let mut squarings = 0;
    while norm / 2f64.powi(squarings) > 0.25 {
        squarings += 1;
    }
    let scaled = m / 2f64.powi(squarings);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..24 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Uncontrolled linear system `ẋ = Ax` written out in the field language.
pub fn linear_system(a: &DMatrix<f64>) -> ControlSystem {
    let n = a.nrows();
    let rows: Vec<String> = (0..n)
        .map(|i| (0..n).map(|j| format!("({:?})*x{}", a[(i, j)], j + 1)).collect::<Vec<_>>().join(" + "))
        .collect();
    boxed_system("linear", &rows.iter().map(String::as_str).collect::<Vec<_>>(), &[]).unwrap()
}

/// Final-state error of RK4 on the harmonic oscillator `ẋ1 = x2, ẋ2 = −x1`
/// from `(1, 0)` over `t_end`, against `(cos t, −sin t)`.
pub fn oscillator_error(h: f64, t_end: f64) -> f64 {
    let sys = boxed_system("oscillator", &["x2", "-x1"], &[]).unwrap();
    let cfg = IntegratorConfig::new(h, 1e6).unwrap();
    let word = ControlWord::constant(vec![], t_end).unwrap();
    let x = endpoint(&sys, &[1.0, 0.0], &word, &cfg).unwrap();
    (x[0] - t_end.cos()).hypot(x[1] + t_end.sin())
}

/// Observed orders `log2(err(h)/err(h/2))` over the steps 0.1, 0.05, 0.025.
pub fn rk4_orders() -> [f64; 2] {
    let errs: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&h| oscillator_error(h, 2.0)).collect();
    [(errs[0] / errs[1]).log2(), (errs[1] / errs[2]).log2()]
}

/// Central finite differences of the endpoint map in `x0`.
pub fn fd_differential(sys: &ControlSystem, x0: &[f64], word: &ControlWord, cfg: &IntegratorConfig, step: f64) -> DMatrix<f64> {
    let n = x0.len();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let (mut p, mut m) = (x0.to_vec(), x0.to_vec());
        p[k] += step;
        m[k] -= step;
        let (fp, fm) = (endpoint(sys, &p, word, cfg).unwrap(), endpoint(sys, &m, word, cfg).unwrap());
        for i in 0..n {
            out[(i, k)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    out
}

/// Largest entrywise relative error, with entries below 1 compared absolutely.
pub fn entrywise_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

/// Random matrix with entries in `[−1, 1]`, shifted by `2·I` when square so
/// it stays well conditioned.
pub fn random_invertible(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(n, n, |i, j| rng.random_range(-1.0..1.0) + if i == j { 2.0 } else { 0.0 });
        let sv = m.clone().svd(false, false).singular_values;
        if sv.min() > 0.1 * sv.max() {
            return m;
        }
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random word of `1..=max_segments` admissible box controls, each segment a
/// whole number of `h` steps, total at most `max_time`.
pub fn random_word(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64], max_segments: usize, max_time: f64, h: f64) -> ControlWord {
    let count = rng.random_range(1..=max_segments);
    let budget = (max_time / h).floor() as usize;
    let per = (budget / count).max(1);
    let segments = (0..count)
        .map(|_| Segment {
            control: lo.iter().zip(hi).map(|(&a, &b)| if a < b { rng.random_range(a..=b) } else { a }).collect(),
            duration: rng.random_range(1..=per) as f64 * h,
        })
        .collect();
    ControlWord::new(segments).unwrap()
}
