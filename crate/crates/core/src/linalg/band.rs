use super::ZERO;
use crate::C64;

/// LU factorization with partial pivoting of a complex band matrix with
/// `kl` sub- and `ku` super-diagonals. Row `i` stores columns
/// `i-kl ..= i+ku+kl` so that fill-in from row interchanges fits.
#[derive(Clone, Debug)]
pub struct BandLu {
    dim: usize,
    kl: usize,
    ku: usize,
    width: usize,
    ab: Vec<C64>,
    piv: Vec<usize>,
    min_pivot: f64,
}

impl BandLu {
    /// Factors the matrix whose `(i, j)` entry is `entry(i, j)` for `|i-j|` within the band.
    pub fn factor(dim: usize, kl: usize, ku: usize, entry: impl Fn(usize, usize) -> C64) -> Self {
        let width = 2 * kl + ku + 1;
        let mut lu = BandLu { dim, kl, ku, width, ab: vec![ZERO; dim * width], piv: vec![0; dim], min_pivot: f64::INFINITY };
        let mut scale = 0.0f64;
        for i in 0..dim {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(dim - 1);
            for j in lo..=hi {
                let v = entry(i, j);
                scale = scale.max(v.norm());
                *lu.at_mut(i, j) = v;
            }
        }
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
        for c in 0..dim {
            let last = (c + kl).min(dim - 1);
            let mut p = c;
            let mut best = lu.at(c, c).norm();
            for r in c + 1..=last {
                let v = lu.at(r, c).norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            lu.piv[c] = p;
            let right = (c + kl + ku).min(dim - 1);
            if p != c {
                for j in c..=right {
                    let a = lu.at(c, j);
                    let b = lu.at(p, j);
                    *lu.at_mut(c, j) = b;
                    *lu.at_mut(p, j) = a;
                }
            }
            if lu.at(c, c).norm() < tiny {
                *lu.at_mut(c, c) = C64::new(tiny, 0.0);
            }
            let d = lu.at(c, c);
            lu.min_pivot = lu.min_pivot.min(d.norm());
            for r in c + 1..=last {
                let l = lu.at(r, c) / d;
                *lu.at_mut(r, c) = l;
                if l != ZERO {
                    for j in c + 1..=right {
                        let u = lu.at(c, j);
                        *lu.at_mut(r, j) -= l * u;
                    }
                }
            }
        }
        lu
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> C64 {
        self.ab[i * self.width + j + self.kl - i]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        &mut self.ab[i * self.width + j + self.kl - i]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Smallest pivot magnitude encountered; a cheap singularity indicator.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// Overwrites `b` with the solution of `A x = b`.
    pub fn solve(&self, b: &mut [C64]) {
        let n = self.dim;
        for c in 0..n {
            let p = self.piv[c];
            if p != c {
                b.swap(c, p);
            }
            let bc = b[c];
            if bc != ZERO {
                for r in c + 1..=(c + self.kl).min(n - 1) {
                    b[r] -= self.at(r, c) * bc;
                }
            }
        }
        for c in (0..n).rev() {
            let mut s = b[c];
            for j in c + 1..=(c + self.kl + self.ku).min(n - 1) {
                s -= self.at(c, j) * b[j];
            }
            b[c] = s / self.at(c, c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn solves_random_band_system_like_dense_lu() {
        let dim = 40;
        let (kl, ku) = (3, 2);
        let entry = |i: usize, j: usize| {
            if (j + kl < i) || (j > i + ku) {
                ZERO
            } else {
                C64::new(((i * 7 + j * 3) as f64).sin(), ((i + 2 * j) as f64).cos() * 0.5)
            }
        };
        let lu = BandLu::factor(dim, kl, ku, entry);
        let dense = DMatrix::from_fn(dim, dim, entry);
        let rhs = DVector::from_fn(dim, |i, _| C64::new(i as f64, 1.0));
        let mut x = rhs.as_slice().to_vec();
        lu.solve(&mut x);
        let r = &dense * DVector::from_vec(x) - rhs;
        assert!(r.norm() < 1e-10, "{}", r.norm());
    }
}
