//! Band decomposition along `kx` with a parallel-transported frame, Berry
//! phases `θ_j(ky)` and Chern numbers.
//!
//! Conventions: the transported frame satisfies `φ_j(2π) = e^{iθ_j} φ_j(0)`.
//! The Chern number is the standard `C = (1/2π)∫F` with `F = ∂_x A_y − ∂_y A_x`,
//! `A = i⟨u|∇u⟩`. With these conventions `C_j = −(θ_j(2π) − θ_j(0))/2π`.

use crate::linalg::herm_eig;
use crate::model::BlochModel;
use crate::{Error, Result, C64, TAU};
use nalgebra::DVector;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub struct BandData {
    pub ky: f64,
    /// `nx + 1` points, the last one is `2π`.
    pub kx: Vec<f64>,
    /// `energies[j][i]`, ascending in `j`.
    pub energies: Vec<Vec<f64>>,
    /// `vectors[j][i]`, parallel transported from `kx = 0`.
    pub vectors: Vec<Vec<DVector<C64>>>,
    /// `⟨φ_j|M|φ_j⟩` on the grid.
    pub m_diag: Vec<Vec<C64>>,
    /// `θ_j ∈ (−π, π]`.
    pub berry_phase: Vec<f64>,
}

impl BandData {
    pub fn n(&self) -> usize {
        self.energies.len()
    }

    pub fn nx(&self) -> usize {
        self.kx.len() - 1
    }

    fn periodic_mean<T: Copy + std::iter::Sum<T> + std::ops::Div<f64, Output = T>>(v: &[T]) -> T {
        let n = v.len() - 1;
        v[..n].iter().copied().sum::<T>() / n as f64
    }

    /// `∫₀^{2π} E_j⁻¹ dkx`.
    pub fn inverse_energy_integral(&self, j: usize) -> f64 {
        let inv: Vec<f64> = self.energies[j].iter().map(|e| 1.0 / e).collect();
        TAU * Self::periodic_mean(&inv)
    }

    /// `∫₀^{2π} E_j⁻¹⟨φ_j|M|φ_j⟩ dkx`; its imaginary part vanishes for exact bands.
    pub fn m_integral(&self, j: usize) -> C64 {
        let f: Vec<C64> = self.m_diag[j].iter().zip(&self.energies[j]).map(|(m, e)| m / *e).collect();
        Self::periodic_mean(&f) * TAU
    }

    /// Running integrals `(∫₀^{kx} E_j⁻¹, ∫₀^{kx} E_j⁻¹⟨φ_j|M|φ_j⟩)` on the grid,
    /// integrated spectrally.
    pub fn cumulative(&self, j: usize) -> (Vec<f64>, Vec<C64>) {
        let inv: Vec<C64> = self.energies[j].iter().map(|e| C64::new(1.0 / e, 0.0)).collect();
        let m: Vec<C64> = self.m_diag[j].iter().zip(&self.energies[j]).map(|(m, e)| m / *e).collect();
        let d = periodic_antiderivative(&inv[..self.nx()]).into_iter().map(|z| z.re).collect();
        let g = periodic_antiderivative(&m[..self.nx()]);
        (d, g)
    }

    /// Range `(min, max)` of each band over `kx`.
    pub fn band_ranges(&self) -> Vec<(f64, f64)> {
        self.energies.iter().map(|e| e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))).collect()
    }
}

/// `F(kx_i) = ∫₀^{kx_i} f` for periodic samples `f` on `N` uniform points,
/// returned on `N + 1` points including `2π`. Exact for trigonometric
/// polynomials of degree below `N/2`.
pub fn periodic_antiderivative(f: &[C64]) -> Vec<C64> {
    let n = f.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut hat = f.to_vec();
    fft.process(&mut hat);
    let mean = hat[0] / n as f64;
    let mut coef = vec![C64::new(0.0, 0.0); n];
    for (m, c) in coef.iter_mut().enumerate().skip(1) {
        let freq = if m <= n / 2 { m as i64 } else { m as i64 - n as i64 };
        if n % 2 == 0 && m == n / 2 {
            continue;
        }
        // e^{i·freq·k}/(i·freq)
        *c = hat[m] / n as f64 / C64::new(0.0, freq as f64);
    }
    let offset: C64 = coef.iter().sum();
    let ifft = planner.plan_fft_inverse(n);
    let mut vals = coef.clone();
    ifft.process(&mut vals);
    let mut out: Vec<C64> = (0..n).map(|i| vals[i] - offset + mean * (TAU * i as f64 / n as f64)).collect();
    out.push(mean * TAU);
    out
}

/// Eigen-decomposition on `nx + 1` points with the discrete parallel-transport
/// gauge: each vector is rotated so its overlap with the previous one is
/// real and positive.
pub fn decompose(model: &BlochModel, ky: f64, nx: usize) -> Result<BandData> {
    decompose_with_phases(model, ky, nx, &vec![0.0; model.n()])
}

pub(crate) fn decompose_with_phases(model: &BlochModel, ky: f64, nx: usize, seed_phases: &[f64]) -> Result<BandData> {
    if nx < 8 {
        return Err(Error::InvalidArgument(format!("nx = {nx} too small")));
    }
    let n = model.n();
    let mut kx = Vec::with_capacity(nx + 1);
    let mut energies = vec![Vec::with_capacity(nx + 1); n];
    let mut vectors: Vec<Vec<DVector<C64>>> = vec![Vec::with_capacity(nx + 1); n];
    let mut m_diag = vec![Vec::with_capacity(nx + 1); n];
    for i in 0..=nx {
        let k = TAU * i as f64 / nx as f64;
        kx.push(k);
        let (e, v) = herm_eig(&model.h(k, ky));
        for j in 0..n.saturating_sub(1) {
            if e[j + 1] - e[j] < 1e-8 {
                return Err(Error::GapCollapse { kx: k, ky, sep: e[j + 1] - e[j] });
            }
        }
        let m = model.m(k, ky);
        for j in 0..n {
            let mut phi = v.column(j).into_owned();
            if i == 0 {
                phi *= C64::from_polar(1.0, seed_phases[j]);
            } else {
                let ov = vectors[j][i - 1].dotc(&phi);
                phi *= ov.conj() / ov.norm();
            }
            m_diag[j].push(phi.dotc(&(&m * &phi)));
            energies[j].push(e[j]);
            vectors[j].push(phi);
        }
    }
    let berry_phase = (0..n).map(|j| vectors[j][0].dotc(&vectors[j][nx]).arg()).collect();
    Ok(BandData { ky, kx, energies, vectors, m_diag, berry_phase })
}

/// Berry phases only, without storing the frame.
pub fn berry_phases(model: &BlochModel, ky: f64, nx: usize) -> Result<Vec<f64>> {
    let n = model.n();
    let mut prev: Option<Vec<DVector<C64>>> = None;
    let mut first: Vec<DVector<C64>> = Vec::new();
    for i in 0..=nx {
        let k = TAU * i as f64 / nx as f64;
        let (e, v) = herm_eig(&model.h(k, ky));
        for j in 0..n.saturating_sub(1) {
            if e[j + 1] - e[j] < 1e-8 {
                return Err(Error::GapCollapse { kx: k, ky, sep: e[j + 1] - e[j] });
            }
        }
        let cur: Vec<DVector<C64>> = (0..n)
            .map(|j| {
                let mut phi = v.column(j).into_owned();
                if let Some(p) = &prev {
                    let ov = p[j].dotc(&phi);
                    phi *= ov.conj() / ov.norm();
                }
                phi
            })
            .collect();
        if i == 0 {
            first = cur.clone();
        }
        prev = Some(cur);
    }
    let last = prev.unwrap();
    Ok((0..n).map(|j| first[j].dotc(&last[j]).arg()).collect())
}

/// Continuous lift in `ky` of `θ_j` on `ny + 1` samples (the last is `ky = 2π`),
/// with the largest jump between neighbouring samples.
pub fn berry_phase_lift(model: &BlochModel, nx: usize, ny: usize) -> Result<(Vec<Vec<f64>>, f64)> {
    let raw: Vec<Vec<f64>> =
        (0..=ny).into_par_iter().map(|l| berry_phases(model, TAU * l as f64 / ny as f64, nx)).collect::<Result<_>>()?;
    let n = model.n();
    let mut lift = vec![Vec::with_capacity(ny + 1); n];
    let mut max_jump = 0.0f64;
    for j in 0..n {
        lift[j].push(raw[0][j]);
        for l in 1..=ny {
            let mut d = raw[l][j] - raw[l - 1][j];
            d -= TAU * (d / TAU).round();
            max_jump = max_jump.max(d.abs());
            let prev = lift[j][l - 1];
            lift[j].push(prev + d);
        }
    }
    Ok((lift, max_jump))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChernRecord {
    pub chern: Vec<i64>,
    /// Chern numbers before rounding, from the Berry-phase winding.
    pub windings_raw: Vec<f64>,
    pub max_rounding_error: f64,
    /// Independent plaquette (lattice field strength) result.
    pub plaquette: Vec<i64>,
    pub plaquette_raw: Vec<f64>,
    pub max_lift_jump: f64,
    pub unreliable: bool,
    pub grid: (usize, usize),
}

impl ChernRecord {
    pub fn agrees(&self) -> bool {
        self.chern == self.plaquette
    }
}

/// Chern numbers from the winding of the Berry phases, cross-checked
/// against the plaquette method.
pub fn chern_numbers(model: &BlochModel, nx: usize, ny: usize) -> Result<ChernRecord> {
    let (lift, max_jump) = berry_phase_lift(model, nx, ny)?;
    let windings_raw: Vec<f64> = lift.iter().map(|t| -(t[ny] - t[0]) / TAU).collect();
    let chern: Vec<i64> = windings_raw.iter().map(|w| w.round() as i64).collect();
    let max_rounding_error = windings_raw.iter().zip(&chern).map(|(w, c)| (w - *c as f64).abs()).fold(0.0, f64::max);
    let plaquette_raw = plaquette_chern(model, nx, ny)?;
    let plaquette: Vec<i64> = plaquette_raw.iter().map(|w| w.round() as i64).collect();
    let unreliable = max_rounding_error > 0.1 || max_jump > 0.5 * std::f64::consts::PI || chern != plaquette;
    Ok(ChernRecord {
        chern,
        windings_raw,
        max_rounding_error,
        plaquette,
        plaquette_raw,
        max_lift_jump: max_jump,
        unreliable,
        grid: (nx, ny),
    })
}

/// Lattice field strength: the phase of the link-variable product around
/// each plaquette is `−F·ΔkxΔky`; summing gives `−2π·C`. Gauge invariant,
/// so the arbitrary eigenvector phases from the eigensolver are harmless.
pub fn plaquette_chern(model: &BlochModel, nx: usize, ny: usize) -> Result<Vec<f64>> {
    let n = model.n();
    let grid: Vec<Vec<nalgebra::DMatrix<C64>>> = (0..ny)
        .into_par_iter()
        .map(|b| {
            let ky = TAU * b as f64 / ny as f64;
            (0..nx).map(|a| herm_eig(&model.h(TAU * a as f64 / nx as f64, ky)).1).collect()
        })
        .collect();
    let mut out = vec![0.0; n];
    for (j, total) in out.iter_mut().enumerate() {
        let u = |a: usize, b: usize| grid[b % ny][a % nx].column(j).into_owned();
        let link = |x: &DVector<C64>, y: &DVector<C64>| {
            let o = x.dotc(y);
            o / o.norm()
        };
        let mut sum = 0.0;
        for b in 0..ny {
            for a in 0..nx {
                let (u00, u10, u11, u01) = (u(a, b), u(a + 1, b), u(a + 1, b + 1), u(a, b + 1));
                let p = link(&u00, &u10) * link(&u10, &u11) * link(&u11, &u01) * link(&u01, &u00);
                sum += p.arg();
            }
        }
        *total = -sum / TAU;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_constant, build_harper};

    #[test]
    fn constant_model_has_trivial_phases() {
        let m = build_constant(&[-1.0, 3.0]).unwrap();
        let b = decompose(&m, 0.3, 32).unwrap();
        assert!(b.berry_phase.iter().all(|t| t.abs() < 1e-14));
        assert!(b.energies[0].iter().all(|&e| e == -1.0));
        let r = chern_numbers(&m, 16, 16).unwrap();
        assert_eq!(r.chern, vec![0, 0]);
        assert!(!r.unreliable);
    }

    #[test]
    fn frame_is_orthonormal_eigenbasis_and_smooth() {
        let m = build_harper(1, 3, 1.5).unwrap();
        let b = decompose(&m, 0.0, 128).unwrap();
        for i in 0..=128 {
            let (e, _) = herm_eig(&m.h(b.kx[i], 0.0));
            let h = m.h(b.kx[i], 0.0);
            for j in 0..3 {
                assert!((b.energies[j][i] - e[j]).abs() < 1e-10);
                let phi = &b.vectors[j][i];
                assert!((&h * phi - phi * C64::from(b.energies[j][i])).norm() < 1e-10);
                for k in 0..3 {
                    let o = phi.dotc(&b.vectors[k][i]).norm();
                    assert!((o - if j == k { 1.0 } else { 0.0 }).abs() < 1e-10);
                }
                if i > 0 {
                    let step = (phi - &b.vectors[j][i - 1]).norm();
                    assert!(step < 5.0 * TAU / 128.0, "jump {step}");
                }
            }
        }
        for j in 0..3 {
            let end = &b.vectors[j][128];
            let start = &b.vectors[j][0] * C64::from_polar(1.0, b.berry_phase[j]);
            assert!((end - start).norm() < 1e-10);
        }
    }

    #[test]
    fn berry_phase_is_gauge_invariant() {
        let m = build_harper(1, 3, 1.5).unwrap();
        let a = decompose(&m, 0.9, 64).unwrap();
        let b = decompose_with_phases(&m, 0.9, 64, &[0.3, -2.0, 1.1]).unwrap();
        for j in 0..3 {
            assert!((a.berry_phase[j] - b.berry_phase[j]).abs() < 1e-10);
        }
        let c = berry_phases(&m, 0.9, 64).unwrap();
        for j in 0..3 {
            assert!((a.berry_phase[j] - c[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn harper_chern_numbers_both_routes() {
        for ef in [1.5, -1.5] {
            let r = chern_numbers(&build_harper(1, 3, ef).unwrap(), 48, 48).unwrap();
            assert_eq!(r.chern, vec![-1, 2, -1]);
            assert_eq!(r.plaquette, vec![-1, 2, -1]);
            assert!(!r.unreliable);
            assert_eq!(r.chern.iter().sum::<i64>(), 0);
        }
    }

    #[test]
    fn raw_windings_converge_under_refinement() {
        let m = build_harper(1, 3, 1.5).unwrap();
        let a = plaquette_chern(&m, 32, 32).unwrap();
        let b = plaquette_chern(&m, 64, 64).unwrap();
        for j in 0..3 {
            assert!((a[j] - b[j]).abs() < 1e-3);
        }
    }

    #[test]
    fn antiderivative_of_trig_polynomial() {
        let n = 64;
        let f: Vec<C64> = (0..n)
            .map(|i| {
                let k = TAU * i as f64 / n as f64;
                C64::new(1.0 + (3.0 * k).cos(), (2.0 * k).sin())
            })
            .collect();
        let big_f = periodic_antiderivative(&f);
        for (i, v) in big_f.iter().enumerate() {
            let k = TAU * i as f64 / n as f64;
            let exact = C64::new(k + (3.0 * k).sin() / 3.0, (1.0 - (2.0 * k).cos()) / 2.0);
            assert!((v - exact).norm() < 1e-12);
        }
    }

    #[test]
    fn imaginary_part_of_m_integral_vanishes() {
        let m = build_harper(1, 3, 1.5).unwrap();
        let b = decompose(&m, 1.0, 256).unwrap();
        for j in 0..3 {
            assert!(b.m_integral(j).im.abs() < 1e-10);
        }
    }
}
