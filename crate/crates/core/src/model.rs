//! Range-1 Bloch Hamiltonians `H(kx,ky) = V(ky) + A(ky)e^{ikx} + A(ky)†e^{-ikx}`.
//!
//! `V` and `A` are finite trigonometric polynomials in `ky`. The Fermi
//! energy is absorbed into `V` at construction, so everything downstream
//! works at chemical potential zero.

use crate::linalg::herm_eig;
use crate::{Error, Result, C64, TAU};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// `Σ_h C_h e^{i h ky}` with n×n complex coefficients.
#[derive(Clone, Debug)]
pub struct TrigMatrix {
    n: usize,
    terms: Vec<(i32, DMatrix<C64>)>,
}

impl TrigMatrix {
    pub fn new(n: usize, mut terms: Vec<(i32, DMatrix<C64>)>) -> Self {
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(i32, DMatrix<C64>)> = Vec::new();
        for (h, c) in terms {
            assert_eq!(c.shape(), (n, n));
            match merged.last_mut() {
                Some((hl, cl)) if *hl == h => *cl += c,
                _ => merged.push((h, c)),
            }
        }
        TrigMatrix { n, terms: merged }
    }

    pub fn zero(n: usize) -> Self {
        TrigMatrix { n, terms: Vec::new() }
    }

    pub fn terms(&self) -> &[(i32, DMatrix<C64>)] {
        &self.terms
    }

    pub fn eval(&self, ky: f64) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (h, c) in &self.terms {
            out += c * C64::from_polar(1.0, *h as f64 * ky);
        }
        out
    }

    /// d/dky, term by term.
    pub fn deriv(&self, ky: f64) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (h, c) in &self.terms {
            out += c * (C64::new(0.0, *h as f64) * C64::from_polar(1.0, *h as f64 * ky));
        }
        out
    }

    fn coefficient(&self, h: i32) -> DMatrix<C64> {
        self.terms.iter().find(|t| t.0 == h).map(|t| t.1.clone()).unwrap_or_else(|| DMatrix::zeros(self.n, self.n))
    }

    /// Largest entrywise violation of `C_{-h} = C_h†`, i.e. of Hermiticity for all ky.
    pub fn hermitian_defect(&self) -> f64 {
        self.terms.iter().map(|(h, c)| (c - self.coefficient(-h).adjoint()).camax()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct BlochModel {
    n: usize,
    v: TrigMatrix,
    a: TrigMatrix,
    fermi_shift: f64,
    label: String,
}

impl BlochModel {
    /// `v` must be Hermitian for every ky; `fermi` is subtracted from it.
    pub fn new(v: TrigMatrix, a: TrigMatrix, fermi: f64, label: impl Into<String>) -> Result<Self> {
        let n = v.n;
        if n == 0 || a.n != n {
            return Err(Error::InvalidModel(format!("block sizes {} and {} differ or vanish", v.n, a.n)));
        }
        let defect = v.hermitian_defect();
        if defect > 1e-12 {
            return Err(Error::InvalidModel(format!("V is not Hermitian (defect {defect:.3e})")));
        }
        if !fermi.is_finite() {
            return Err(Error::InvalidModel("non-finite Fermi energy".into()));
        }
        let mut terms = v.terms;
        terms.push((0, DMatrix::from_diagonal_element(n, n, C64::new(-fermi, 0.0))));
        Ok(BlochModel { n, v: TrigMatrix::new(n, terms), a, fermi_shift: fermi, label: label.into() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fermi_shift(&self) -> f64 {
        self.fermi_shift
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn v_poly(&self) -> &TrigMatrix {
        &self.v
    }

    pub fn a_poly(&self) -> &TrigMatrix {
        &self.a
    }

    pub fn v(&self, ky: f64) -> DMatrix<C64> {
        self.v.eval(ky)
    }

    pub fn a(&self, ky: f64) -> DMatrix<C64> {
        self.a.eval(ky)
    }

    pub fn dv(&self, ky: f64) -> DMatrix<C64> {
        self.v.deriv(ky)
    }

    pub fn da(&self, ky: f64) -> DMatrix<C64> {
        self.a.deriv(ky)
    }

    pub fn h(&self, kx: f64, ky: f64) -> DMatrix<C64> {
        let a = self.a(ky) * C64::from_polar(1.0, kx);
        self.v(ky) + &a + a.adjoint()
    }

    pub fn dh_dkx(&self, kx: f64, ky: f64) -> DMatrix<C64> {
        let a = self.a(ky) * C64::from_polar(1.0, kx) * C64::new(0.0, 1.0);
        &a + a.adjoint()
    }

    /// `M(kx) = A† e^{-ikx}`, the zeroth-order term of the Fourier-side operator.
    pub fn m(&self, kx: f64, ky: f64) -> DMatrix<C64> {
        self.a(ky).adjoint() * C64::from_polar(1.0, -kx)
    }

    /// True when nothing depends on momentum: `A = 0` and `V` constant.
    pub fn is_flat(&self) -> bool {
        self.a.terms.iter().all(|(_, c)| c.camax() == 0.0) && self.v.terms.iter().all(|(h, c)| *h == 0 || c.camax() == 0.0)
    }

    pub fn to_config(&self) -> ModelConfig {
        let conv = |t: &TrigMatrix| {
            t.terms
                .iter()
                .filter(|(_, c)| c.camax() > 0.0)
                .map(|(h, c)| {
                    let re = (0..self.n).flat_map(|i| (0..self.n).map(move |j| (i, j))).map(|(i, j)| c[(i, j)].re).collect();
                    let im = (0..self.n).flat_map(|i| (0..self.n).map(move |j| (i, j))).map(|(i, j)| c[(i, j)].im).collect();
                    Coeff(*h, MatrixData::Flat(re), MatrixData::Flat(im))
                })
                .collect()
        };
        // undo the Fermi shift so the config reproduces this model
        let mut v = self.v.clone();
        v.terms.push((0, DMatrix::from_diagonal_element(self.n, self.n, C64::new(self.fermi_shift, 0.0))));
        let v = TrigMatrix::new(self.n, v.terms);
        ModelConfig { n: self.n, v_coeffs: conv(&v), a_coeffs: conv(&self.a), fermi: self.fermi_shift }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Harper–Hofstadter model at flux `p/q`. Row `r = 1..q` of the magnetic
/// cell carries the on-site phase `2π p (r+1)/q`, which reproduces the
/// familiar q = 3 cell (4π/3, 0, 2π/3); the hopping that wraps around the
/// cell sits in `A` at position (q, 1).
pub fn build_harper(p: i64, q: i64, fermi_energy: f64) -> Result<BlochModel> {
    if q < 2 {
        return Err(Error::InvalidModel(format!("Harper model needs q >= 2, got {q}")));
    }
    if gcd(p, q) != 1 {
        return Err(Error::InvalidModel(format!("Harper model needs gcd(p, q) = 1, got p={p}, q={q}")));
    }
    let n = q as usize;
    let mut hop = DMatrix::zeros(n, n);
    for r in 0..n - 1 {
        hop[(r, r + 1)] = C64::new(1.0, 0.0);
        hop[(r + 1, r)] = C64::new(1.0, 0.0);
    }
    // 2cos(φ - ky) = e^{iφ}e^{-iky} + e^{-iφ}e^{iky}
    let mut minus = DMatrix::zeros(n, n);
    let mut plus = DMatrix::zeros(n, n);
    for r in 0..n {
        let phi = TAU * (p * (r as i64 + 2)).rem_euclid(q) as f64 / q as f64;
        minus[(r, r)] = C64::from_polar(1.0, phi);
        plus[(r, r)] = C64::from_polar(1.0, -phi);
    }
    let v = TrigMatrix::new(n, vec![(0, hop), (-1, minus), (1, plus)]);
    let mut a = DMatrix::zeros(n, n);
    a[(n - 1, 0)] = C64::new(1.0, 0.0);
    let a = TrigMatrix::new(n, vec![(0, a)]);
    BlochModel::new(v, a, fermi_energy, format!("harper({p},{q})"))
}

/// Flat model `V = diag(energies)`, `A = 0`.
pub fn build_constant(diag_energies: &[f64]) -> Result<BlochModel> {
    if diag_energies.is_empty() {
        return Err(Error::InvalidModel("no energies given".into()));
    }
    for (i, &e) in diag_energies.iter().enumerate() {
        if !e.is_finite() || e == 0.0 {
            return Err(Error::InvalidModel(format!("energy {e} must be finite and nonzero")));
        }
        if diag_energies[..i].contains(&e) {
            return Err(Error::InvalidModel(format!("repeated energy {e}")));
        }
    }
    let n = diag_energies.len();
    let v = DMatrix::from_fn(n, n, |i, j| if i == j { C64::new(diag_energies[i], 0.0) } else { C64::new(0.0, 0.0) });
    BlochModel::new(TrigMatrix::new(n, vec![(0, v)]), TrigMatrix::zero(n), 0.0, format!("constant{diag_energies:?}"))
}

/// A coefficient matrix given either flat row-major or as nested rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixData {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl MatrixData {
    fn flat(&self) -> Vec<f64> {
        match self {
            MatrixData::Flat(v) => v.clone(),
            MatrixData::Rows(r) => r.iter().flatten().copied().collect(),
        }
    }
}

/// `[harmonic, real part, imaginary part]`, the coefficient of `e^{i·harmonic·ky}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Coeff(pub i32, pub MatrixData, pub MatrixData);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n: usize,
    #[serde(rename = "V_coeffs")]
    pub v_coeffs: Vec<Coeff>,
    #[serde(rename = "A_coeffs", default)]
    pub a_coeffs: Vec<Coeff>,
    #[serde(default)]
    pub fermi: f64,
}

impl ModelConfig {
    pub fn build(&self, label: &str) -> Result<BlochModel> {
        let n = self.n;
        let conv = |coeffs: &[Coeff]| -> Result<TrigMatrix> {
            let mut terms = Vec::new();
            for Coeff(h, re, im) in coeffs {
                let (re, im) = (re.flat(), im.flat());
                if re.len() != n * n || im.len() != n * n {
                    return Err(Error::InvalidModel(format!("harmonic {h}: expected {} entries", n * n)));
                }
                terms.push((*h, DMatrix::from_fn(n, n, |i, j| C64::new(re[i * n + j], im[i * n + j]))));
            }
            Ok(TrigMatrix::new(n, terms))
        };
        BlochModel::new(conv(&self.v_coeffs)?, conv(&self.a_coeffs)?, self.fermi, label)
    }
}

pub fn load_config(path: &Path) -> Result<BlochModel> {
    let text = std::fs::read_to_string(path)?;
    let cfg: ModelConfig = serde_json::from_str(&text)?;
    cfg.build(&path.display().to_string())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapReport {
    /// `(j, min over the grid of E_{j+1} − E_j)`, `j` counted from 1.
    pub band_gaps: Vec<(usize, f64)>,
    /// Smallest `|E_j|` on the grid; zero when some band changes sign.
    pub min_abs_energy: f64,
    /// `k` (from 1) with `E_{k−1} < 0 < E_k` on the whole grid.
    pub gap_index_k: Option<usize>,
    pub grid_resolution: (usize, usize),
    /// Overall `(min, max)` of each band.
    pub band_ranges: Vec<(f64, f64)>,
    pub assumption_satisfied: bool,
}

/// Samples the bands on an `nx × ny` grid and checks that they stay
/// non-degenerate and that zero energy lies in a gap.
pub fn validate_gaps(model: &BlochModel, nx: usize, ny: usize) -> Result<GapReport> {
    if nx < 8 || ny < 8 {
        return Err(Error::InvalidArgument(format!("grid {nx}x{ny} too coarse (need >= 8)")));
    }
    let n = model.n();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); n];
    let mut gaps = vec![f64::INFINITY; n.saturating_sub(1)];
    let mut min_abs = f64::INFINITY;
    for l in 0..ny {
        let ky = TAU * l as f64 / ny as f64;
        for i in 0..nx {
            let kx = TAU * i as f64 / nx as f64;
            let (e, _) = herm_eig(&model.h(kx, ky));
            for j in 0..n {
                ranges[j].0 = ranges[j].0.min(e[j]);
                ranges[j].1 = ranges[j].1.max(e[j]);
                min_abs = min_abs.min(e[j].abs());
                if j + 1 < n {
                    gaps[j] = gaps[j].min(e[j + 1] - e[j]);
                }
            }
        }
    }
    let negatives = ranges.iter().filter(|r| r.1 < 0.0).count();
    let gap_index_k = if ranges[negatives..].iter().all(|r| r.0 > 0.0) { Some(negatives + 1) } else { None };
    if gap_index_k.is_none() {
        min_abs = 0.0;
    }
    let band_gaps: Vec<(usize, f64)> = gaps.into_iter().enumerate().map(|(j, g)| (j + 1, g)).collect();
    let assumption_satisfied = band_gaps.iter().all(|g| g.1 > 0.0) && min_abs > 0.0;
    Ok(GapReport { band_gaps, min_abs_energy: min_abs, gap_index_k, grid_resolution: (nx, ny), band_ranges: ranges, assumption_satisfied })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn harper_q3_matches_displayed_matrices() {
        let m = build_harper(1, 3, 1.5).unwrap();
        let ky = 0.7;
        let v = m.v(ky);
        let expect = [2.0 * (4.0 * TAU / 6.0 - ky).cos(), 2.0 * ky.cos(), 2.0 * (TAU / 3.0 - ky).cos()];
        for r in 0..3 {
            assert!((v[(r, r)] - C64::new(expect[r] - 1.5, 0.0)).norm() < 1e-14);
        }
        assert_eq!(v[(0, 1)], C64::new(1.0, 0.0));
        assert_eq!(v[(1, 2)], C64::new(1.0, 0.0));
        assert_eq!(v[(0, 2)], C64::new(0.0, 0.0));
        let a = m.a(ky);
        for i in 0..3 {
            for j in 0..3 {
                let e = if (i, j) == (2, 0) { 1.0 } else { 0.0 };
                assert_eq!(a[(i, j)], C64::new(e, 0.0));
            }
        }
    }

    #[test]
    fn harper_zero_shift_has_no_diagonal_offset() {
        let m = build_harper(1, 3, 0.0).unwrap();
        assert!((m.v(0.0)[(1, 1)] - C64::new(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn harper_eigenvalues_match_explicit_matrix() {
        let m = build_harper(1, 3, 0.0).unwrap();
        let c = |x: f64| C64::new(x, 0.0);
        let h = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(2.0 * (4.0 * std::f64::consts::PI / 3.0).cos()),
                c(1.0),
                c(1.0),
                c(1.0),
                c(2.0),
                c(1.0),
                c(1.0),
                c(1.0),
                c(2.0 * (2.0 * std::f64::consts::PI / 3.0).cos()),
            ],
        );
        let (e1, _) = herm_eig(&m.h(0.0, 0.0));
        let (e2, _) = herm_eig(&h);
        for j in 0..3 {
            assert!((e1[j] - e2[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn builder_errors() {
        assert!(build_harper(2, 4, 0.0).is_err());
        assert!(build_harper(1, 1, 0.0).is_err());
        assert!(build_constant(&[1.0, 1.0]).is_err());
        assert!(build_constant(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn constant_models() {
        let m = build_constant(&[2.0]).unwrap();
        assert_eq!(m.h(1.0, 2.0)[(0, 0)], C64::new(2.0, 0.0));
        assert!(m.is_flat());
        let r = validate_gaps(&build_constant(&[-1.0, 3.0]).unwrap(), 8, 8).unwrap();
        assert_eq!(r.band_gaps, vec![(1, 4.0)]);
        assert_eq!(r.min_abs_energy, 1.0);
        assert_eq!(r.gap_index_k, Some(2));
        assert!(r.assumption_satisfied);
    }

    #[test]
    fn harper_gap_reports() {
        let r = validate_gaps(&build_harper(1, 3, 1.5).unwrap(), 64, 64).unwrap();
        assert!(r.assumption_satisfied);
        assert_eq!(r.gap_index_k, Some(3));
        let r0 = validate_gaps(&build_harper(1, 3, 0.0).unwrap(), 64, 64).unwrap();
        assert!(!r0.assumption_satisfied);
        assert_eq!(r0.gap_index_k, None);
    }

    #[test]
    fn config_round_trip() {
        let m = build_harper(1, 3, 1.5).unwrap();
        let json = serde_json::to_string(&m.to_config()).unwrap();
        let cfg: ModelConfig = serde_json::from_str(&json).unwrap();
        let back = cfg.build("rt").unwrap();
        for &(kx, ky) in &[(0.1, 0.2), (2.0, 5.0)] {
            assert!((m.h(kx, ky) - back.h(kx, ky)).camax() < 1e-14);
        }
        assert_eq!(back.fermi_shift(), 1.5);
    }

    #[test]
    fn config_rejects_non_hermitian_v() {
        let json = r#"{"n":1,"V_coeffs":[[1,[1.0],[0.0]]],"A_coeffs":[],"fermi":0.0}"#;
        let cfg: ModelConfig = serde_json::from_str(json).unwrap();
        assert!(cfg.build("bad").is_err());
        let json = r#"{"n":2,"V_coeffs":[[0,[[1.0,0.5],[0.5,-1.0]],[[0,0],[0,0]]]],"A_coeffs":[[0,[0,0,1,0],[0,0,0,0]]]}"#;
        let cfg: ModelConfig = serde_json::from_str(json).unwrap();
        assert!(cfg.build("ok").is_ok());
    }

    proptest! {
        #[test]
        fn bloch_matrix_is_hermitian(kx in -10.0f64..10.0, ky in -10.0f64..10.0, p in 1i64..5, ef in -2.0f64..2.0) {
            let q = 5;
            let m = build_harper(p, q, ef).unwrap();
            let h = m.h(kx, ky);
            prop_assert!((&h - h.adjoint()).camax() < 1e-12);
        }

        #[test]
        fn flux_periodicity(kx in 0.0f64..6.3, ky in 0.0f64..6.3) {
            let m = build_harper(1, 3, 1.5).unwrap();
            prop_assert!((m.h(kx, ky) - m.h(kx, ky + TAU)).camax() < 1e-12);
        }

        #[test]
        fn trace_independent_of_kx(kx in 0.0f64..6.3, ky in 0.0f64..6.3) {
            let m = build_harper(2, 7, -0.3).unwrap();
            let t0 = m.h(0.0, ky).trace();
            prop_assert!((m.h(kx, ky).trace() - t0).norm() < 1e-12);
        }
    }
}
