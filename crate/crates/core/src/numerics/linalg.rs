//! Dense decompositions and matrix functions.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

type Matrix = DMatrix<f64>;

const EIG_MAX_ITER: usize = 10_000;
/// Divided differences below this gap switch to the derivative limit.
const DEGENERATE_GAP: f64 = 1e-9;

/// Eigendecomposition `S = Q diag(λ) Qᵀ` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub q: Matrix,
    pub lambda: DVector<f64>,
}

impl SpectralDecomposition {
    /// `Q diag(f(λ)) Qᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let mut scaled = self.q.clone();
        for (j, &l) in self.lambda.iter().enumerate() {
            let fl = f(l);
            scaled.column_mut(j).scale_mut(fl);
        }
        scaled * self.q.transpose()
    }

    pub fn reconstruct(&self) -> Matrix {
        self.map_spectrum(|l| l)
    }

    /// Adjoint of `S ↦ exp(S)` at this decomposition for an upstream
    /// adjoint `g`: `Q (Γ ∘ (Qᵀ g Q)) Qᵀ`.
    pub fn exp_adjoint(&self, g: &Matrix) -> Matrix {
        let n = self.lambda.len();
        let exps: Vec<f64> = self.lambda.iter().map(|l| l.exp()).collect();
        let inner = self.q.tr_mul(g) * &self.q;
        let weighted = Matrix::from_fn(n, n, |i, j| {
            let (li, lj) = (self.lambda[i], self.lambda[j]);
            let gamma = if (li - lj).abs() < DEGENERATE_GAP {
                (exps[i] + exps[j]) * 0.5
            } else {
                (exps[i] - exps[j]) / (li - lj)
            };
            gamma * inner[(i, j)]
        });
        &self.q * weighted * self.q.transpose()
    }
}

/// Flips each column so that its largest-magnitude entry is positive. The
/// first entry within a relative 1e-9 of the maximum decides ties.
pub fn fix_column_signs(m: &mut Matrix) {
    for mut col in m.column_iter_mut() {
        let max = col.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if max == 0.0 {
            continue;
        }
        let lead = col
            .iter()
            .copied()
            .find(|x| x.abs() >= max * (1.0 - 1e-9))
            .unwrap_or(0.0);
        if lead < 0.0 {
            col.neg_mut();
        }
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues and
/// deterministic eigenvector signs. The input is symmetrized first.
pub fn sym_eig(s: &Matrix) -> Result<SpectralDecomposition> {
    if s.nrows() != s.ncols() {
        return Err(Error::invalid(format!("sym_eig needs a square matrix, got {:?}", s.shape())));
    }
    let n = s.nrows();
    if n == 0 {
        return Ok(SpectralDecomposition { q: Matrix::zeros(0, 0), lambda: DVector::zeros(0) });
    }
    let sym = (s + s.transpose()) * 0.5;
    let scale = sym.amax();
    if !scale.is_finite() {
        return Err(Error::numeric("sym_eig", "non-finite input"));
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| sym[(i, j)]);
    let eig = fm
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::numeric("sym_eig", format!("{e:?}")))?;
    let (vals, vecs) = (eig.S(), eig.U());

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let lambda = DVector::from_iterator(n, order.iter().map(|&i| vals[i]));
    let mut q = Matrix::from_fn(n, n, |r, c| vecs[(r, order[c])]);
    fix_column_signs(&mut q);

    let decomposition = SpectralDecomposition { q, lambda };
    let residual = (decomposition.reconstruct() - &sym).amax();
    if !residual.is_finite() || residual > 1e-7 * scale.max(1e-300) {
        return Err(Error::numeric("sym_eig", format!("reconstruction residual {residual:e}")));
    }
    Ok(decomposition)
}

/// Exponential of a symmetric matrix through its spectrum.
pub fn sym_matrix_exp(s: &Matrix) -> Result<Matrix> {
    Ok(sym_eig(s)?.map_spectrum(f64::exp))
}

/// Default Taylor order for [`matrix_exp`].
pub const TAYLOR_ORDER: usize = 12;

/// Number of squarings so that `‖A‖₁ / 2ˢ ≤ 0.5`.
pub fn squaring_steps(a: &Matrix) -> u32 {
    let norm = one_norm(a);
    if norm <= 0.5 || !norm.is_finite() {
        return 0;
    }
    (norm / 0.5).log2().ceil().max(0.0) as u32
}

/// Maximum absolute column sum.
pub fn one_norm(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(A)` by scaling and squaring around a Horner-form Taylor polynomial.
pub fn matrix_exp(a: &Matrix) -> Matrix {
    matrix_exp_with_order(a, TAYLOR_ORDER)
}

pub fn matrix_exp_with_order(a: &Matrix, order: usize) -> Matrix {
    assert_eq!(a.nrows(), a.ncols(), "matrix_exp needs a square matrix");
    let n = a.nrows();
    let s = squaring_steps(a);
    let x = a / 2f64.powi(s as i32);
    let eye = Matrix::identity(n, n);
    let mut p = eye.clone();
    for k in (1..=order).rev() {
        p = &eye + (&x * &p) / k as f64;
    }
    for _ in 0..s {
        p = &p * &p;
    }
    p
}

/// Top singular triplets of a matrix.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Matrix,
    pub sigma: DVector<f64>,
    pub v: Matrix,
}

/// Top-`d` singular triplets, σ descending, left vectors sign-fixed and the
/// right vectors aligned with them.
pub fn truncated_svd(a: &Matrix, d: usize) -> Result<TruncatedSvd> {
    let (rows, cols) = a.shape();
    if d > rows.min(cols) {
        return Err(Error::invalid(format!("rank {d} exceeds min dimension of {rows}x{cols}")));
    }
    let svd = SVD::try_new(a.clone(), true, true, f64::EPSILON, EIG_MAX_ITER)
        .ok_or_else(|| Error::numeric("truncated_svd", "bidiagonal iteration did not converge"))?;
    let u_full = svd.u.expect("requested U");
    let vt_full = svd.v_t.expect("requested Vᵀ");
    let k = svd.singular_values.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let order = &order[..d];

    let sigma = DVector::from_iterator(d, order.iter().map(|&i| svd.singular_values[i]));
    let mut u = Matrix::from_fn(rows, d, |r, c| u_full[(r, order[c])]);
    let mut v = Matrix::from_fn(cols, d, |r, c| vt_full[(order[c], r)]);
    for c in 0..d {
        let col = u.column(c);
        let max = col.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let lead = col.iter().copied().find(|x| x.abs() >= max * (1.0 - 1e-9)).unwrap_or(0.0);
        if lead < 0.0 {
            u.column_mut(c).neg_mut();
            v.column_mut(c).neg_mut();
        }
    }
    Ok(TruncatedSvd { u, sigma, v })
}
