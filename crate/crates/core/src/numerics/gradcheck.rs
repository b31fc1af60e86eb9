//! Finite-difference verification of tape gradients.

use super::tape::{Matrix, Tape, Var};

/// Compares the tape gradient of `f` at `x` with a central finite-difference
/// estimate (five-point stencil, step `h`) and returns the largest entrywise
/// relative error, using `max(|g|, 1e-8)` as the denominator.
pub fn grad_check<F>(f: F, x: &Matrix, h: f64) -> f64
where
    F: Fn(&mut Tape, Var) -> Var,
{
    let mut tape = Tape::new();
    let input = tape.var(x.clone());
    let out = f(&mut tape, input);
    let analytic = tape.backward(out).wrt(input);

    let eval = |point: &Matrix| {
        let mut t = Tape::new();
        let v = t.var(point.clone());
        let o = f(&mut t, v);
        t.scalar(o)
    };

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let orig = x[(i, j)];
            let mut at = |delta: f64| {
                probe[(i, j)] = orig + delta;
                let y = eval(&probe);
                probe[(i, j)] = orig;
                y
            };
            let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
            let g = analytic[(i, j)];
            let err = (numeric - g).abs() / g.abs().max(1e-8);
            worst = worst.max(err);
        }
    }
    worst
}
