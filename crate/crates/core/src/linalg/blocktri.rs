use super::{start_vector, vdot, vnorm, BandLu, ZERO};
use crate::C64;
use nalgebra::DMatrix;

/// Hermitian block-tridiagonal matrix: `diag[i]` is block `(i, i)` and
/// `upper[i]` is block `(i, i+1)`; block `(i+1, i)` is `upper[i]†`.
/// Blocks are n×n row-major.
#[derive(Clone, Debug)]
pub struct BlockTridiag {
    n: usize,
    diag: Vec<Vec<C64>>,
    upper: Vec<Vec<C64>>,
}

/// Eigenvalues (ascending) and, optionally, unit eigenvectors.
#[derive(Clone, Debug, Default)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Option<Vec<Vec<C64>>>,
}

impl BlockTridiag {
    pub fn new(n: usize, diag: Vec<Vec<C64>>, upper: Vec<Vec<C64>>) -> Self {
        assert!(!diag.is_empty());
        assert_eq!(upper.len() + 1, diag.len());
        assert!(diag.iter().chain(upper.iter()).all(|b| b.len() == n * n));
        BlockTridiag { n, diag, upper }
    }

    pub fn block_size(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.n * self.diag.len()
    }

    pub fn diag_block(&self, i: usize) -> &[C64] {
        &self.diag[i]
    }

    pub fn upper_block(&self, i: usize) -> &[C64] {
        &self.upper[i]
    }

    /// Entry `(i, j)` of the full matrix.
    pub fn entry(&self, i: usize, j: usize) -> C64 {
        let n = self.n;
        let (si, sj) = (i / n, j / n);
        let (ri, rj) = (i % n, j % n);
        if si == sj {
            self.diag[si][ri * n + rj]
        } else if sj == si + 1 {
            self.upper[si][ri * n + rj]
        } else if si == sj + 1 {
            self.upper[sj][rj * n + ri].conj()
        } else {
            ZERO
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.entry(i, j))
    }

    /// Largest entrywise deviation from Hermiticity of the diagonal blocks
    /// (off-diagonal blocks are Hermitian by construction).
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for b in &self.diag {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((b[i * n + j] - b[j * n + i].conj()).norm());
                }
            }
        }
        worst
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        let n = self.n;
        let s = self.sites();
        for v in y.iter_mut() {
            *v = ZERO;
        }
        for b in 0..s {
            let d = &self.diag[b];
            for i in 0..n {
                let mut acc = ZERO;
                for j in 0..n {
                    acc += d[i * n + j] * x[b * n + j];
                }
                y[b * n + i] += acc;
            }
            if b + 1 < s {
                let u = &self.upper[b];
                for i in 0..n {
                    let mut acc = ZERO;
                    for j in 0..n {
                        acc += u[i * n + j] * x[(b + 1) * n + j];
                    }
                    y[b * n + i] += acc;
                }
                for j in 0..n {
                    let mut acc = ZERO;
                    for i in 0..n {
                        acc += u[i * n + j].conj() * x[b * n + i];
                    }
                    y[(b + 1) * n + j] += acc;
                }
            }
        }
    }

    /// Interval containing the whole spectrum (Gershgorin discs).
    pub fn gershgorin(&self) -> (f64, f64) {
        let d = self.dim();
        let n = self.n;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..d {
            let first = (i / n).saturating_sub(1) * n;
            let last = ((i / n + 2) * n).min(d);
            let mut radius = 0.0;
            for j in first..last {
                if j != i {
                    radius += self.entry(i, j).norm();
                }
            }
            let c = self.entry(i, i).re;
            lo = lo.min(c - radius);
            hi = hi.max(c + radius);
        }
        (lo, hi)
    }

    fn scale(&self) -> f64 {
        self.diag.iter().chain(self.upper.iter()).flat_map(|b| b.iter()).fold(0.0f64, |m, x| m.max(x.norm())).max(1.0)
    }

    /// Number of eigenvalues strictly below `sigma` (Sylvester inertia of a
    /// block LDL* factorization of `H - sigma`).
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.n;
        let s = self.sites();
        let tiny = f64::EPSILON * self.scale() * 1e-3;
        let mut d = vec![ZERO; n * n];
        let mut x = vec![ZERO; n * n];
        let mut neg = 0;
        for site in 0..s {
            d.copy_from_slice(&self.diag[site]);
            if site > 0 {
                let u = &self.upper[site - 1];
                // D -= U† X with X = D_prev^{-1} U
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = ZERO;
                        for k in 0..n {
                            acc += u[k * n + i].conj() * x[k * n + j];
                        }
                        d[i * n + j] -= acc;
                    }
                }
            }
            for i in 0..n {
                d[i * n + i] -= sigma;
            }
            if site + 1 < s {
                x.copy_from_slice(&self.upper[site]);
                neg += bk_solve(&mut d, n, &mut x, n, tiny);
            } else {
                neg += bk_solve(&mut d, n, &mut [], 0, tiny);
            }
        }
        neg
    }

    fn bisection_tol(&self, x: f64) -> f64 {
        (4.0 * f64::EPSILON * self.scale()).max(2e-14 * x.abs()).max(1e-14)
    }

    /// All eigenvalues in `[lo, hi)`, ascending, by bisection on Sturm counts.
    pub fn eigenvalues_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let c_lo = self.count_below(lo);
        let c_hi = self.count_below(hi);
        let mut out = Vec::with_capacity(c_hi.saturating_sub(c_lo));
        let mut stack = vec![(lo, hi, c_lo, c_hi)];
        while let Some((a, b, ca, cb)) = stack.pop() {
            if cb <= ca {
                continue;
            }
            let mid = 0.5 * (a + b);
            if b - a <= self.bisection_tol(mid) || mid <= a || mid >= b {
                out.extend(std::iter::repeat(mid).take(cb - ca));
                continue;
            }
            let cm = self.count_below(mid);
            stack.push((mid, b, cm, cb));
            stack.push((a, mid, ca, cm));
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// Banded LU of `H - z`.
    pub fn shifted_lu(&self, z: C64) -> BandLu {
        let bw = 2 * self.n - 1;
        BandLu::factor(self.dim(), bw, bw, |i, j| {
            let e = self.entry(i, j);
            if i == j {
                e - z
            } else {
                e
            }
        })
    }

    /// Eigenpairs with eigenvalues in `[lo, hi)`. Eigenvectors come from
    /// inverse iteration on the banded LU of `H - λ`, re-orthogonalized
    /// inside clusters; eigenvalues are then refined by Rayleigh quotients.
    pub fn eigenpairs_in(&self, lo: f64, hi: f64, vectors: bool) -> EigenPairs {
        let values = self.eigenvalues_in(lo, hi);
        if !vectors {
            return EigenPairs { values, vectors: None };
        }
        let dim = self.dim();
        let cluster_tol = 1e-7 * self.scale();
        let mut vecs: Vec<Vec<C64>> = Vec::with_capacity(values.len());
        let mut refined = Vec::with_capacity(values.len());
        let mut hv = vec![ZERO; dim];
        for (idx, &lam) in values.iter().enumerate() {
            let cluster_start =
                vecs.iter().enumerate().rev().take_while(|(k, _)| lam - values[*k] < cluster_tol).last().map(|(k, _)| k).unwrap_or(idx);
            let lu = self.shifted_lu(C64::new(lam, 0.0));
            let mut v = start_vector(dim, idx as u64 + 17);
            for _ in 0..3 {
                lu.solve(&mut v);
                for prev in &vecs[cluster_start..] {
                    let c = vdot(prev, &v);
                    v.iter_mut().zip(prev).for_each(|(x, p)| *x -= c * p);
                }
                let nrm = vnorm(&v);
                v.iter_mut().for_each(|x| *x /= nrm);
            }
            self.matvec(&v, &mut hv);
            refined.push(vdot(&v, &hv).re);
            vecs.push(v);
        }
        EigenPairs { values: refined, vectors: Some(vecs) }
    }

    /// Full spectrum, ascending.
    pub fn eigenpairs_all(&self, vectors: bool) -> EigenPairs {
        let (lo, hi) = self.gershgorin();
        let pad = 1e-9 * (hi - lo).abs().max(1.0);
        self.eigenpairs_in(lo - pad, hi + pad, vectors)
    }

    /// `‖H v − λ v‖₂`.
    pub fn residual(&self, lambda: f64, v: &[C64]) -> f64 {
        let mut hv = vec![ZERO; v.len()];
        self.matvec(v, &mut hv);
        hv.iter().zip(v).map(|(a, b)| (a - b * lambda).norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Hermitian indefinite solve with Bunch–Kaufman pivoting: on return `b`
/// (n×m row-major) holds `A⁻¹ b` and the result is the number of negative
/// eigenvalues of `A`. `a` is destroyed. Pivots smaller than `tiny` are
/// replaced by `+tiny`.
fn bk_solve(a: &mut [C64], n: usize, b: &mut [C64], m: usize, tiny: f64) -> usize {
    const ALPHA: f64 = 0.640_388_203_202_207_6;
    let mut perm: [usize; 16] = [0; 16];
    let mut perm_vec;
    let perm: &mut [usize] = if n <= 16 {
        &mut perm[..n]
    } else {
        perm_vec = vec![0; n];
        &mut perm_vec[..]
    };
    for (i, p) in perm.iter_mut().enumerate() {
        *p = i;
    }
    let mut blocks: Vec<(usize, usize)> = Vec::with_capacity(n);
    let mut neg = 0;
    let mut k = 0;

    let swap = |a: &mut [C64], b: &mut [C64], perm: &mut [usize], p: usize, q: usize| {
        if p == q {
            return;
        }
        for j in 0..n {
            a.swap(p * n + j, q * n + j);
        }
        for i in 0..n {
            a.swap(i * n + p, i * n + q);
        }
        for c in 0..m {
            b.swap(p * m + c, q * m + c);
        }
        perm.swap(p, q);
    };

    while k < n {
        let akk = a[k * n + k].re.abs();
        let mut r = k;
        let mut colmax = 0.0;
        for i in k + 1..n {
            let v = a[i * n + k].norm();
            if v > colmax {
                colmax = v;
                r = i;
            }
        }
        let mut size = 1;
        if akk.max(colmax) <= tiny {
            a[k * n + k] = C64::new(tiny, 0.0);
        } else if akk < ALPHA * colmax {
            let mut rowmax = 0.0f64;
            for j in k..n {
                if j != r {
                    rowmax = rowmax.max(a[r * n + j].norm());
                }
            }
            if akk * rowmax >= ALPHA * colmax * colmax {
                // keep 1×1 pivot at k
            } else if a[r * n + r].re.abs() >= ALPHA * rowmax {
                swap(a, b, perm, k, r);
            } else {
                swap(a, b, perm, k + 1, r);
                size = 2;
            }
        }
        if size == 1 {
            let mut d = a[k * n + k].re;
            if d.abs() < tiny {
                d = tiny;
                a[k * n + k] = C64::new(d, 0.0);
            }
            if d < 0.0 {
                neg += 1;
            }
            for i in k + 1..n {
                let l = a[i * n + k] / d;
                if l == ZERO {
                    continue;
                }
                for j in k + 1..n {
                    let akj = a[k * n + j];
                    a[i * n + j] -= l * akj;
                }
                for c in 0..m {
                    let bk = b[k * m + c];
                    b[i * m + c] -= l * bk;
                }
            }
        } else {
            let e11 = a[k * n + k].re;
            let e22 = a[(k + 1) * n + k + 1].re;
            let e12 = a[k * n + k + 1];
            let det = e11 * e22 - e12.norm_sqr();
            // a Bunch–Kaufman 2×2 pivot is indefinite: one negative eigenvalue
            neg += if det < 0.0 {
                1
            } else if e11 + e22 < 0.0 {
                2
            } else {
                0
            };
            let inv = [C64::from(e22 / det), -e12 / det, -e12.conj() / det, C64::from(e11 / det)];
            for i in k + 2..n {
                let (ai1, ai2) = (a[i * n + k], a[i * n + k + 1]);
                let l1 = ai1 * inv[0] + ai2 * inv[2];
                let l2 = ai1 * inv[1] + ai2 * inv[3];
                for j in k + 2..n {
                    let (a1j, a2j) = (a[k * n + j], a[(k + 1) * n + j]);
                    a[i * n + j] -= l1 * a1j + l2 * a2j;
                }
                for c in 0..m {
                    let (b1, b2) = (b[k * m + c], b[(k + 1) * m + c]);
                    b[i * m + c] -= l1 * b1 + l2 * b2;
                }
            }
        }
        blocks.push((k, size));
        k += size;
    }

    if m > 0 {
        for &(k, size) in blocks.iter().rev() {
            let end = k + size;
            for c in 0..m {
                let mut r1 = b[k * m + c];
                let mut r2 = if size == 2 { b[(k + 1) * m + c] } else { ZERO };
                for j in end..n {
                    let xj = b[j * m + c];
                    r1 -= a[k * n + j] * xj;
                    if size == 2 {
                        r2 -= a[(k + 1) * n + j] * xj;
                    }
                }
                if size == 1 {
                    b[k * m + c] = r1 / a[k * n + k].re;
                } else {
                    let e11 = a[k * n + k].re;
                    let e22 = a[(k + 1) * n + k + 1].re;
                    let e12 = a[k * n + k + 1];
                    let det = e11 * e22 - e12.norm_sqr();
                    b[k * m + c] = (r1 * e22 - e12 * r2) / det;
                    b[(k + 1) * m + c] = (r2 * e11 - e12.conj() * r1) / det;
                }
            }
        }
        // undo the symmetric permutation on the rows of the solution
        let y: Vec<C64> = b.to_vec();
        for (pos, &orig) in perm.iter().enumerate() {
            for c in 0..m {
                b[orig * m + c] = y[pos * m + c];
            }
        }
    }
    neg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::herm_eig;
    use proptest::prelude::*;

    fn random_blocktri(n: usize, sites: usize, seed: u64) -> BlockTridiag {
        let v = start_vector(2 * n * n * sites, seed);
        let mut diag = Vec::new();
        let mut upper = Vec::new();
        for s in 0..sites {
            let mut d = vec![ZERO; n * n];
            for i in 0..n {
                for j in i..n {
                    let x = v[(2 * s * n * n) + i * n + j] * 4.0;
                    d[i * n + j] = if i == j { C64::new(x.re * 3.0 + s as f64, 0.0) } else { x };
                    d[j * n + i] = d[i * n + j].conj();
                }
            }
            diag.push(d);
            if s + 1 < sites {
                upper.push((0..n * n).map(|k| v[(2 * s + 1) * n * n + k] * 2.0).collect());
            }
        }
        BlockTridiag::new(n, diag, upper)
    }

    #[test]
    fn bk_solve_handles_zero_diagonal() {
        let mut a = vec![ZERO, C64::new(1.0, 0.0), C64::new(1.0, 0.0), ZERO];
        let mut b = vec![C64::new(2.0, 0.0), C64::new(3.0, 0.0)];
        let neg = bk_solve(&mut a, 2, &mut b, 1, 1e-300);
        assert_eq!(neg, 1);
        assert!((b[0] - C64::new(3.0, 0.0)).norm() < 1e-14);
        assert!((b[1] - C64::new(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn sturm_spectrum_matches_dense_eigensolver() {
        let m = random_blocktri(3, 30, 5);
        let (dense, _) = herm_eig(&m.to_dense());
        let all = m.eigenpairs_all(true);
        assert_eq!(all.values.len(), dense.len());
        for (a, b) in all.values.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        for (lam, v) in all.values.iter().zip(all.vectors.as_ref().unwrap()) {
            assert!(m.residual(*lam, v) < 1e-9);
        }
    }

    #[test]
    fn degenerate_decoupled_blocks_get_orthogonal_vectors() {
        let n = 1;
        let diag = vec![vec![C64::new(1.0, 0.0)], vec![C64::new(1.0, 0.0)], vec![C64::new(2.0, 0.0)]];
        let upper = vec![vec![ZERO], vec![ZERO]];
        let m = BlockTridiag::new(n, diag, upper);
        let p = m.eigenpairs_all(true);
        assert_eq!(p.values.len(), 3);
        let v = p.vectors.unwrap();
        assert!(vdot(&v[0], &v[1]).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn sturm_count_matches_dense(seed in 0u64..1000, sites in 2usize..12, n in 1usize..5, sigma in -8.0f64..20.0) {
            let m = random_blocktri(n, sites, seed);
            let (dense, _) = herm_eig(&m.to_dense());
            let expect = dense.iter().filter(|&&x| x < sigma).count();
            let near = dense.iter().any(|&x| (x - sigma).abs() < 1e-9);
            prop_assume!(!near);
            prop_assert_eq!(m.count_below(sigma), expect);
        }
    }
}
