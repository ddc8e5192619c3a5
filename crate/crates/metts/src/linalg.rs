//! Dense kernels shared by the tensor layer and the ED references.
//!
//! ndarray is the storage type everywhere; nalgebra supplies the
//! eigendecomposition and SVD. Complex matrix products are split into four
//! real products so the optimized f64 kernel is used instead of the generic
//! fallback.

use crate::{Error, Real, Result};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use num_complex::Complex;

pub(crate) fn nd_to_na<S: nalgebra::Scalar + Copy>(a: &Array2<S>) -> DMatrix<S> {
    DMatrix::from_row_iterator(a.nrows(), a.ncols(), a.iter().copied())
}

/// Eigendecomposition of a real symmetric matrix.
///
/// Returns eigenvalues in ascending order with the matching eigenvectors as
/// columns. Symmetry is the caller's contract and is not re-checked here.
pub(crate) fn eigh<T: Real>(a: &Array2<T>) -> Result<(Array1<T>, Array2<T>)> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Structure(format!(
            "eigh needs a square nonempty matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let se = nalgebra::SymmetricEigen::new(nd_to_na(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        se.eigenvalues[i]
            .partial_cmp(&se.eigenvalues[j])
            .expect("symmetric eigenvalues are finite")
    });
    let w = Array1::from_iter(order.iter().map(|&k| se.eigenvalues[k]));
    let v = Array2::from_shape_fn((n, n), |(i, j)| se.eigenvectors[(i, order[j])]);
    Ok((w, v))
}

/// SVD of a complex matrix: (u, singular values descending, v_dagger).
///
/// nalgebra's bidiagonal SVD loses accuracy on badly column-graded inputs
/// (reconstruction error near sqrt(eps) instead of eps), which silently
/// corrupts orthogonality-center moves. Every decomposition is therefore
/// checked by reconstruction and redone with one-sided Jacobi rotations,
/// which keep high relative accuracy on graded matrices, whenever the fast
/// path misses.
pub(crate) fn svd_c<T: Real>(
    a: &Array2<Complex<T>>,
) -> Result<(Array2<Complex<T>>, Vec<T>, Array2<Complex<T>>)> {
    let (rows, cols) = (a.nrows(), a.ncols());
    if rows == 0 || cols == 0 {
        return Err(Error::Structure("svd of an empty matrix".into()));
    }
    if let Ok((u, s, vh)) = svd_na(a) {
        let s_max = s.first().copied().unwrap_or_else(T::zero);
        let dim = T::of(rows.max(cols) as f64);
        let tol = T::default_epsilon() * T::of(64.0) * dim * s_max;
        if svd_residual(a, &u, &s, &vh) <= tol {
            return Ok((u, s, vh));
        }
    }
    svd_jacobi(a)
}

fn svd_na<T: Real>(
    a: &Array2<Complex<T>>,
) -> Result<(Array2<Complex<T>>, Vec<T>, Array2<Complex<T>>)> {
    let (rows, cols) = (a.nrows(), a.ncols());
    let svd = nd_to_na(a)
        .try_svd(true, true, T::default_epsilon(), 0)
        .ok_or_else(|| Error::NoConvergence(format!("svd of a {rows}x{cols} matrix")))?;
    let u_na = svd.u.expect("u requested");
    let vt_na = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .expect("singular values are finite")
    });
    let s: Vec<T> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = Array2::from_shape_fn((rows, k), |(i, j)| u_na[(i, order[j])]);
    let vh = Array2::from_shape_fn((k, cols), |(i, j)| vt_na[(order[i], j)]);
    Ok((u, s, vh))
}

/// Frobenius norm of u diag(s) vh - a.
fn svd_residual<T: Real>(
    a: &Array2<Complex<T>>,
    u: &Array2<Complex<T>>,
    s: &[T],
    vh: &Array2<Complex<T>>,
) -> T {
    let mut us = u.clone();
    for (j, &sv) in s.iter().enumerate() {
        for i in 0..us.nrows() {
            us[(i, j)] = us[(i, j)] * sv;
        }
    }
    let recon = matmul_auto(&us, vh);
    let mut acc = T::zero();
    for (x, y) in recon.iter().zip(a.iter()) {
        acc += (x - y).norm_sqr();
    }
    acc.sqrt()
}

/// One-sided Jacobi SVD: cyclically orthogonalize column pairs with exact
/// unitary rotations. Slow but accurate on graded matrices; used only when
/// the fast path fails its reconstruction check.
fn svd_jacobi<T: Real>(
    a: &Array2<Complex<T>>,
) -> Result<(Array2<Complex<T>>, Vec<T>, Array2<Complex<T>>)> {
    let (m, n) = (a.nrows(), a.ncols());
    if m < n {
        // svd of the adjoint, then swap factors
        let at = Array2::from_shape_fn((n, m), |(i, j)| a[(j, i)].conj());
        let (u2, s, v2h) = svd_jacobi(&at)?;
        let u = Array2::from_shape_fn((m, s.len()), |(i, j)| v2h[(j, i)].conj());
        let vh = Array2::from_shape_fn((s.len(), n), |(i, j)| u2[(j, i)].conj());
        return Ok((u, s, vh));
    }

    let mut w = a.to_owned();
    let mut v: Array2<Complex<T>> = Array2::eye(n);
    let tol = T::default_epsilon() * T::of(4.0);
    let tol_sq = tol * tol;
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = Complex::new(T::zero(), T::zero());
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    alpha += wp.norm_sqr();
                    beta += wq.norm_sqr();
                    gamma += wp.conj() * wq;
                }
                let g2 = gamma.norm_sqr();
                if g2 <= tol_sq * alpha * beta || g2 == T::zero() {
                    continue;
                }
                rotated = true;
                let g_abs = g2.sqrt();
                let phase = gamma / Complex::new(g_abs, T::zero());
                let tau = (beta - alpha) / (T::of(2.0) * g_abs);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let cs = Complex::new(c, T::zero());
                let sp = phase * s; // s e^{i phi}
                let spc = sp.conj(); // s e^{-i phi}
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = wp * cs - wq * spc;
                    w[(i, q)] = wp * sp + wq * cs;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = vp * cs - vq * spc;
                    v[(i, q)] = vp * sp + vq * cs;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // column norms are the singular values; sort descending
    let mut sig: Vec<T> = (0..n)
        .map(|j| (0..m).map(|i| w[(i, j)].norm_sqr()).fold(T::zero(), |a, x| a + x).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        sig[j]
            .partial_cmp(&sig[i])
            .expect("finite singular values")
            .then(i.cmp(&j))
    });
    sig = order.iter().map(|&j| sig[j]).collect();

    let mut u = Array2::<Complex<T>>::zeros((m, n));
    for (jj, &j) in order.iter().enumerate() {
        if sig[jj] > T::zero() {
            let inv = Complex::new(T::one() / sig[jj], T::zero());
            for i in 0..m {
                u[(i, jj)] = w[(i, j)] * inv;
            }
        }
    }
    // deterministic orthonormal completion for exactly-zero columns: take the
    // standard basis vector with the largest component outside the span of the
    // already-set columns, then Gram-Schmidt it (twice, for orthogonality)
    for jj in 0..n {
        if sig[jj] > T::zero() {
            continue;
        }
        let filled: Vec<usize> = (0..n)
            .filter(|&k| k != jj && (sig[k] > T::zero() || k < jj))
            .collect();
        // residual norm^2 of e_cand against an orthonormal set is
        // 1 - (row norm of u over the filled columns)^2
        let mut best_cand = 0;
        let mut best_res = T::of(-1.0);
        for cand in 0..m {
            let row: T = filled
                .iter()
                .map(|&k| u[(cand, k)].norm_sqr())
                .fold(T::zero(), |a, x| a + x);
            let res = T::one() - row;
            if res > best_res {
                best_res = res;
                best_cand = cand;
            }
        }
        let mut col: Vec<Complex<T>> = (0..m)
            .map(|i| {
                if i == best_cand {
                    Complex::new(T::one(), T::zero())
                } else {
                    Complex::new(T::zero(), T::zero())
                }
            })
            .collect();
        for _ in 0..2 {
            for &k in &filled {
                let mut dot = Complex::new(T::zero(), T::zero());
                for i in 0..m {
                    dot += u[(i, k)].conj() * col[i];
                }
                for i in 0..m {
                    col[i] -= u[(i, k)] * dot;
                }
            }
        }
        let norm = col
            .iter()
            .map(|z| z.norm_sqr())
            .fold(T::zero(), |a, x| a + x)
            .sqrt();
        if norm <= T::of(1e-6) {
            return Err(Error::NoConvergence(
                "could not complete an orthonormal basis for a rank-deficient block".into(),
            ));
        }
        let inv = Complex::new(T::one() / norm, T::zero());
        for i in 0..m {
            u[(i, jj)] = col[i] * inv;
        }
    }

    let vh = Array2::from_shape_fn((n, n), |(i, j)| v[(j, order[i])].conj());
    Ok((u, sig, vh))
}

fn split_c<T: Real>(a: &Array2<Complex<T>>) -> (Array2<T>, Array2<T>) {
    (a.mapv(|z| z.re), a.mapv(|z| z.im))
}

fn join_c<T: Real>(re: Array2<T>, im: &Array2<T>) -> Array2<Complex<T>> {
    let mut out = re.mapv(|x| Complex::new(x, T::zero()));
    out.zip_mut_with(im, |z, &x| z.im = x);
    out
}

/// Complex times complex, through four real products.
pub(crate) fn matmul_cc<T: Real>(
    a: &Array2<Complex<T>>,
    b: &Array2<Complex<T>>,
) -> Array2<Complex<T>> {
    let (ar, ai) = split_c(a);
    let (br, bi) = split_c(b);
    let re = ar.dot(&br) - ai.dot(&bi);
    let im = ar.dot(&bi) + ai.dot(&br);
    join_c(re, &im)
}

/// Complex times real.
pub(crate) fn matmul_cr<T: Real>(a: &Array2<Complex<T>>, b: &Array2<T>) -> Array2<Complex<T>> {
    let (ar, ai) = split_c(a);
    join_c(ar.dot(b), &ai.dot(b))
}

pub(crate) fn matmul_rr<T: Real>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    a.dot(b)
}

/// Complex product that switches to the split form once the work is large
/// enough to amortize the four extra allocations.
pub(crate) fn matmul_auto<T: Real>(
    a: &Array2<Complex<T>>,
    b: &Array2<Complex<T>>,
) -> Array2<Complex<T>> {
    if a.nrows() * a.ncols() * b.ncols() >= 2048 {
        matmul_cc(a, b)
    } else {
        a.dot(b)
    }
}

/// Matrix exponential exp(scale * h) of a real symmetric h.
pub(crate) fn expm_sym_scaled<T: Real>(
    h: &Array2<T>,
    scale: Complex<T>,
) -> Result<Array2<Complex<T>>> {
    let (w, v) = eigh(h)?;
    let n = h.nrows();
    let phases: Vec<Complex<T>> = w
        .iter()
        .map(|&x| nalgebra::ComplexField::exp(scale * x))
        .collect();
    let scaled = Array2::from_shape_fn((n, n), |(i, j)| phases[j] * v[(i, j)]);
    Ok(matmul_cr(&scaled, &v.t().to_owned()))
}

/// Kronecker product, row-major convention: the left factor indexes the
/// slower (more significant) digit.
#[cfg(test)]
pub(crate) fn kron<T: Real>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    let (ra, ca) = (a.nrows(), a.ncols());
    let (rb, cb) = (b.nrows(), b.ncols());
    Array2::from_shape_fn((ra * rb, ca * cb), |(i, j)| {
        a[(i / rb, j / cb)] * b[(i % rb, j % cb)]
    })
}
