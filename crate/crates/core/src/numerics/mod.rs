//! Dense linear algebra, matrix functions and reverse-mode differentiation.

pub mod gradcheck;
pub mod linalg;
pub mod tape;

pub use gradcheck::grad_check;
pub use linalg::{
    matrix_exp, sym_eig, sym_matrix_exp, truncated_svd, SpectralDecomposition, TruncatedSvd,
    TAYLOR_ORDER,
};
pub use tape::{Gradients, Matrix, Tape, Var};

/// `exp(a)` recorded on the tape as scaling, a Horner Taylor polynomial of
/// the given order, and repeated squaring. The number of squarings is fixed
/// from the forward value.
pub fn matrix_exp_on_tape(tape: &mut Tape, a: Var, order: usize) -> Var {
    let (n, cols) = tape.shape(a);
    assert_eq!(n, cols, "matrix_exp needs a square matrix");
    let s = linalg::squaring_steps(tape.value(a));
    let x = tape.scale(a, 0.5f64.powi(s as i32));
    let eye = tape.constant(Matrix::identity(n, n));
    let first = tape.scale(x, 1.0 / order as f64);
    let mut p = tape.add(eye, first);
    for k in (1..order).rev() {
        let xp = tape.matmul(x, p);
        let term = tape.scale(xp, 1.0 / k as f64);
        p = tape.add(eye, term);
    }
    for _ in 0..s {
        p = tape.matmul(p, p);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_on_tape_matches_plain() {
        let a = Matrix::from_row_slice(3, 3, &[0.2, -1.5, 0.3, 0.7, 0.1, 2.0, -0.4, 0.9, -0.8]);
        let mut tape = Tape::new();
        let v = tape.constant(a.clone());
        let e = matrix_exp_on_tape(&mut tape, v, TAYLOR_ORDER);
        assert!((tape.value(e) - matrix_exp(&a)).amax() < 1e-14);
    }
}
