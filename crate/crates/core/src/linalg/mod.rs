//! Linear algebra used throughout: small dense helpers on flat row-major
//! buffers, banded LU, and a Sturm-count eigensolver for Hermitian
//! block-tridiagonal matrices.

mod band;
mod blocktri;

pub use band::BandLu;
pub use blocktri::{BlockTridiag, EigenPairs};

use crate::C64;
use nalgebra::DMatrix;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// Columns of the returned matrix are the matching unit eigenvectors.
pub fn herm_eig(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Eigenvalues of a general complex matrix via the complex Schur form.
pub fn eigenvalues(m: &DMatrix<C64>) -> Vec<C64> {
    let schur = m.clone().schur();
    let (_, t) = schur.unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Right eigenvector of `m` for an eigenvalue approximately equal to `lambda`,
/// by inverse iteration.
pub fn eigenvector_near(m: &DMatrix<C64>, lambda: C64) -> nalgebra::DVector<C64> {
    let n = m.nrows();
    let scale = m.norm().max(1.0);
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] -= lambda + C64::new(1e-14 * scale, 1e-14 * scale);
    }
    let lu = shifted.lu();
    let mut v = nalgebra::DVector::from_fn(n, |i, _| C64::new(1.0, 0.3 * (i as f64 + 1.0)));
    v /= C64::from(v.norm());
    for _ in 0..3 {
        if let Some(x) = lu.solve(&v) {
            let nrm = x.norm();
            if nrm.is_finite() && nrm > 0.0 {
                v = x / C64::from(nrm);
            }
        }
    }
    v
}

/// `c = a·b` for n×n row-major buffers.
#[inline]
pub fn matmul(n: usize, a: &[C64], b: &[C64], c: &mut [C64]) {
    for i in 0..n {
        for j in 0..n {
            let mut s = ZERO;
            for k in 0..n {
                s += a[i * n + k] * b[k * n + j];
            }
            c[i * n + j] = s;
        }
    }
}

fn norm1(n: usize, a: &[C64]) -> f64 {
    (0..n).map(|j| (0..n).map(|i| a[i * n + j].norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Matrix exponential of an n×n row-major matrix: scaling and squaring
/// around a Taylor polynomial evaluated by Horner's rule. The degree is the
/// smallest one whose truncation term drops below roundoff.
pub fn expm(n: usize, a: &[C64], out: &mut [C64]) {
    let nrm = norm1(n, a);
    let s = if nrm > 0.5 { (nrm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let x = nrm * scale;
    let mut degree = 1;
    let mut term = x;
    while term > 1e-17 && degree < 18 {
        degree += 1;
        term *= x / degree as f64;
    }
    let mut b = vec![ZERO; n * n];
    for (bi, ai) in b.iter_mut().zip(a) {
        *bi = ai * scale;
    }
    let mut p = vec![ZERO; n * n];
    let mut tmp = vec![ZERO; n * n];
    for i in 0..n {
        p[i * n + i] = ONE;
    }
    for k in (1..=degree).rev() {
        matmul(n, &b, &p, &mut tmp);
        let inv = 1.0 / k as f64;
        for (pi, t) in p.iter_mut().zip(&tmp) {
            *pi = t * inv;
        }
        for i in 0..n {
            p[i * n + i] += ONE;
        }
    }
    for _ in 0..s {
        matmul(n, &p, &p, &mut tmp);
        p.copy_from_slice(&tmp);
    }
    out.copy_from_slice(&p);
}

pub fn to_flat(m: &DMatrix<C64>) -> Vec<C64> {
    let n = m.nrows();
    let k = m.ncols();
    let mut out = Vec::with_capacity(n * k);
    for i in 0..n {
        for j in 0..k {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_flat(n: usize, a: &[C64]) -> DMatrix<C64> {
    DMatrix::from_fn(n, n, |i, j| a[i * n + j])
}

/// Inverse of a small dense matrix (LU with partial pivoting); `None` when singular.
pub fn inverse(m: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    m.clone().try_inverse()
}

/// 2-norm condition number from the singular values.
pub fn cond2(m: &DMatrix<C64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vnorm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Deterministic start vectors for inverse iteration.
pub(crate) fn start_vector(dim: usize, seed: u64) -> Vec<C64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    };
    let mut v: Vec<C64> = (0..dim).map(|_| C64::new(next(), next())).collect();
    let nrm = vnorm(&v);
    v.iter_mut().for_each(|x| *x /= nrm);
    v
}
