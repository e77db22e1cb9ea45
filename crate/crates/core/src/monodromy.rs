//! The Fourier-side operator `T(ky) = iH(kx) d/dkx + M(kx)`, `M = A†e^{-ikx}`.
//!
//! `(T − E)ψ = 0` is the first-order system `ψ' = −i(E H⁻¹ − H⁻¹M)ψ` on the
//! circle, so `E ∈ σ(T)` iff the monodromy `U_E(2π)` has eigenvalue 1.
//! Large-`|E|` eigenvalues follow the families
//! `E(m,j) = (2πm + θ_j + Re∫E_j⁻¹⟨φ_j|M|φ_j⟩) / ∫E_j⁻¹`.

use crate::bands::{decompose, BandData};
use crate::linalg::{eigenvalues, eigenvector_near, expm, from_flat, herm_eig, matmul, to_flat, ONE, ZERO};
use crate::model::BlochModel;
use crate::{Error, Result, C64, TAU};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const SQRT3: f64 = 1.732_050_807_568_877_2;
// two-point Gauss nodes and the commutator-free weights of the
// fourth-order two-exponential Magnus scheme
const NODE1: f64 = 0.5 - SQRT3 / 6.0;
const NODE2: f64 = 0.5 + SQRT3 / 6.0;
const W_SMALL: f64 = 0.25 - SQRT3 / 6.0;
const W_LARGE: f64 = 0.25 + SQRT3 / 6.0;

/// `max_kx ‖H(kx)⁻¹‖₂` sampled on `nx` points.
pub fn inverse_norm_bound(model: &BlochModel, ky: f64, nx: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..nx {
        let kx = TAU * i as f64 / nx as f64;
        let (e, _) = herm_eig(&model.h(kx, ky));
        let emin = e.iter().fold(f64::INFINITY, |a, x| a.min(x.abs()));
        let emax = e.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if emin == 0.0 || emax / emin > 1e10 {
            return Err(Error::SingularBloch { kx, ky, cond: emax / emin });
        }
        worst = worst.max(1.0 / emin);
    }
    Ok(worst)
}

/// Step count for energy `e`: `nx·max(1, ⌈|e|·ρ⌉)` with `ρ = max‖H⁻¹‖`, which
/// keeps the phase advance per step below `2π/nx` uniformly in `e`.
pub fn step_count(rho: f64, e: f64, nx: usize) -> usize {
    nx * ((e.abs() * rho).ceil() as usize).max(1)
}

/// Generator tables for one `ky` and one step count. `U_E` for any energy
/// reuses them, so energy scans only pay for the exponentials.
#[derive(Clone, Debug)]
pub struct MonodromySolver {
    n: usize,
    ky: f64,
    steps: usize,
    /// `H⁻¹` and `H⁻¹M` at both Gauss nodes of every step, row-major.
    p: Vec<C64>,
    q: Vec<C64>,
}

impl MonodromySolver {
    pub fn new(model: &BlochModel, ky: f64, steps: usize) -> Result<Self> {
        let n = model.n();
        let nn = n * n;
        let h = TAU / steps as f64;
        let mut p = Vec::with_capacity(2 * steps * nn);
        let mut q = Vec::with_capacity(2 * steps * nn);
        for s in 0..steps {
            for c in [NODE1, NODE2] {
                let kx = (s as f64 + c) * h;
                let hm = model.h(kx, ky);
                let inv = hm.clone().try_inverse().ok_or(Error::SingularBloch { kx, ky, cond: f64::INFINITY })?;
                let cond = hm.norm() * inv.norm();
                if cond > 1e10 {
                    return Err(Error::SingularBloch { kx, ky, cond });
                }
                let qm = &inv * model.m(kx, ky);
                p.extend(to_flat(&inv));
                q.extend(to_flat(&qm));
            }
        }
        Ok(MonodromySolver { n, ky, steps, p, q })
    }

    /// Solver whose resolution suits energies up to `|e_max|`.
    pub fn for_energy(model: &BlochModel, ky: f64, e_max: f64, nx: usize) -> Result<Self> {
        let rho = inverse_norm_bound(model, ky, nx.max(64))?;
        Self::new(model, ky, step_count(rho, e_max, nx))
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn ky(&self) -> f64 {
        self.ky
    }

    /// Runs the scheme, calling `visit(step_index, U)` after every step.
    fn run(&self, e: f64, mut visit: impl FnMut(usize, &[C64])) -> Vec<C64> {
        let n = self.n;
        let nn = n * n;
        let mih = C64::new(0.0, -TAU / self.steps as f64);
        let mut u = vec![ZERO; nn];
        for i in 0..n {
            u[i * n + i] = ONE;
        }
        let (mut x1, mut x2) = (vec![ZERO; nn], vec![ZERO; nn]);
        let (mut e1, mut e2, mut tmp) = (vec![ZERO; nn], vec![ZERO; nn], vec![ZERO; nn]);
        for s in 0..self.steps {
            let b = 2 * s * nn;
            for k in 0..nn {
                let g1 = self.p[b + k] * e - self.q[b + k];
                let g2 = self.p[b + nn + k] * e - self.q[b + nn + k];
                x1[k] = mih * (g1 * W_LARGE + g2 * W_SMALL);
                x2[k] = mih * (g1 * W_SMALL + g2 * W_LARGE);
            }
            expm(n, &x1, &mut e1);
            expm(n, &x2, &mut e2);
            matmul(n, &e1, &u, &mut tmp);
            matmul(n, &e2, &tmp, &mut u);
            visit(s + 1, &u);
        }
        u
    }

    /// `U_E(2π)`.
    pub fn monodromy(&self, e: f64) -> DMatrix<C64> {
        from_flat(self.n, &self.run(e, |_, _| {}))
    }

    /// `U_E` at every `every`-th step, starting with the identity.
    pub fn sampled(&self, e: f64, every: usize) -> Vec<DMatrix<C64>> {
        let mut out = vec![DMatrix::identity(self.n, self.n)];
        self.run(e, |s, u| {
            if s % every == 0 {
                out.push(from_flat(self.n, u));
            }
        });
        out
    }
}

/// Sampled `U_E(kx)` on `nx + 1` points of `[0, 2π]`.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub e: f64,
    pub ky: f64,
    pub kx: Vec<f64>,
    pub samples: Vec<DMatrix<C64>>,
    pub step_count: usize,
}

impl Propagator {
    pub fn monodromy(&self) -> &DMatrix<C64> {
        self.samples.last().unwrap()
    }

    pub fn max_norm(&self) -> f64 {
        self.samples.iter().map(|u| u.norm()).fold(0.0, f64::max)
    }
}

pub fn propagate(model: &BlochModel, ky: f64, e: f64, nx: usize) -> Result<Propagator> {
    if nx < 8 {
        return Err(Error::InvalidArgument(format!("nx = {nx} too small")));
    }
    let solver = MonodromySolver::for_energy(model, ky, e, nx)?;
    let every = solver.steps / nx;
    let samples = solver.sampled(e, every);
    let kx = (0..=nx).map(|i| TAU * i as f64 / nx as f64).collect();
    Ok(Propagator { e, ky, kx, samples, step_count: solver.steps })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub m: i64,
    /// Band index counted from 1.
    pub j: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub e: f64,
    pub ky: f64,
    /// `min_j |λ_j(U_E(2π)) − 1|`.
    pub defect: f64,
    pub label: Option<Label>,
}

#[derive(Clone, Debug)]
pub struct ExactOptions {
    /// Grid resolution for the step-count rule.
    pub nx: usize,
    /// Energy scan step; by default a quarter of the smallest asymptotic spacing.
    pub scan_step: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions { nx: 64, scan_step: None, tol: 1e-8, max_iter: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct ExactSpectrum {
    pub ky: f64,
    pub window: (f64, f64),
    pub scan_step: f64,
    pub points: Vec<SpectralPoint>,
    /// Brackets whose refinement did not reach the tolerance.
    pub unconverged: Vec<(f64, f64)>,
}

/// Default scan step `π / (2 max_j |∫E_j⁻¹|)`: consecutive monodromy
/// eigenphases move by at most π/2 between scan points.
pub fn default_scan_step(model: &BlochModel, ky: f64) -> Result<f64> {
    let bands = decompose(model, ky, 256)?;
    let dmax = (0..model.n()).map(|j| bands.inverse_energy_integral(j).abs()).fold(0.0, f64::max);
    Ok(std::f64::consts::PI / (2.0 * dmax))
}

pub fn exact_spectrum(model: &BlochModel, ky: f64, window: (f64, f64), scan_step: Option<f64>) -> Result<ExactSpectrum> {
    exact_spectrum_with(model, ky, window, &ExactOptions { scan_step, ..Default::default() })
}

/// Roots of `det(U_E(2π) − 1)` in `window`. The monodromy eigenvalues are
/// followed continuously along an energy scan; each passage of an
/// eigenphase through zero is refined by Brent's method on that phase.
pub fn exact_spectrum_with(model: &BlochModel, ky: f64, window: (f64, f64), opts: &ExactOptions) -> Result<ExactSpectrum> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty window ({lo}, {hi})")));
    }
    let solver = MonodromySolver::for_energy(model, ky, lo.abs().max(hi.abs()), opts.nx)?;
    let step = match opts.scan_step {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::InvalidArgument(format!("scan step {s} must be positive"))),
        None => default_scan_step(model, ky)?,
    };
    let count = ((hi - lo) / step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=count).map(|s| lo + (hi - lo) * s as f64 / count as f64).collect();
    let spectra: Vec<Vec<(C64, DVector<C64>)>> = grid.iter().map(|&e| eigenpairs(&solver.monodromy(e))).collect();

    let mut points = Vec::new();
    let mut unconverged = Vec::new();
    let mut tracks = spectra[0].clone();
    for s in 1..grid.len() {
        let next = match_eigenpairs(&tracks, &spectra[s]);
        for ((a, _), (b, _)) in tracks.iter().zip(&next) {
            let (pa, pb) = (a.arg(), b.arg());
            let crosses = ((pa < 0.0 && pb >= 0.0) || (pa > 0.0 && pb <= 0.0)) && (pa - pb).abs() < std::f64::consts::PI;
            if !crosses {
                continue;
            }
            match refine_root(&solver, grid[s - 1], grid[s], *a, *b, opts) {
                Some((e, defect)) if defect < opts.tol => points.push(SpectralPoint { e, ky, defect, label: None }),
                _ => unconverged.push((grid[s - 1], grid[s])),
            }
        }
        tracks = next;
    }
    points.sort_by(|a, b| a.e.total_cmp(&b.e));
    Ok(ExactSpectrum { ky, window, scan_step: step, points, unconverged })
}

fn eigenpairs(u: &DMatrix<C64>) -> Vec<(C64, DVector<C64>)> {
    eigenvalues(u).into_iter().map(|l| (l, eigenvector_near(u, l))).collect()
}

/// Reorders `next` so that entry `i` continues `prev[i]`. Eigenphases can
/// move by up to π/2 between scan points, so two eigenvalues passing each
/// other are told apart by their eigenvectors, which vary slowly with E.
fn match_eigenpairs(prev: &[(C64, DVector<C64>)], next: &[(C64, DVector<C64>)]) -> Vec<(C64, DVector<C64>)> {
    let n = prev.len();
    let cost = |i: usize, k: usize| 1.0 - prev[i].1.dotc(&next[k].1).norm() + 1e-3 * (prev[i].0 - next[k].0).norm();
    let order: Vec<usize> = if n <= 6 {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = perm.clone();
        let mut best_cost = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let c: f64 = p.iter().enumerate().map(|(i, &k)| cost(i, k)).sum();
            if c < best_cost {
                best_cost = c;
                best = p.to_vec();
            }
        });
        best
    } else {
        let mut used = vec![false; n];
        (0..n)
            .map(|i| {
                let k = (0..n).filter(|&k| !used[k]).min_by(|&x, &y| cost(i, x).total_cmp(&cost(i, y))).unwrap();
                used[k] = true;
                k
            })
            .collect()
    };
    order.iter().map(|&k| next[k].clone()).collect()
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

/// Brent's method on the phase of the eigenvalue that moves from `la` at
/// `a` to `lb` at `b`. Returns the root and its defect.
fn refine_root(solver: &MonodromySolver, a: f64, b: f64, la: C64, lb: C64, opts: &ExactOptions) -> Option<(f64, f64)> {
    let pa = la.arg();
    let span = {
        let mut d = lb.arg() - pa;
        d -= TAU * (d / TAU).round();
        d
    };
    let (ma, mb) = (la.norm(), lb.norm());
    let eval = |e: f64| -> (f64, f64) {
        let lam = eigenvalues(&solver.monodromy(e));
        let t = (e - a) / (b - a);
        let predicted = C64::from_polar(ma + (mb - ma) * t, pa + span * t);
        let tracked = lam.iter().min_by(|x, y| (*x - predicted).norm().total_cmp(&(*y - predicted).norm())).unwrap();
        let defect = lam.iter().map(|x| (x - ONE).norm()).fold(f64::INFINITY, f64::min);
        (tracked.arg(), defect)
    };
    let (mut xa, mut xb) = (a, b);
    let (mut fa, mut fb) = (pa, lb.arg());
    let mut defect = f64::INFINITY;
    if fb == 0.0 {
        return Some((b, (lb - ONE).norm()));
    }
    let (mut xc, mut fc) = (xa, fa);
    let mut d = xb - xa;
    let mut e = d;
    for _ in 0..opts.max_iter {
        if (fb > 0.0) == (fc > 0.0) {
            xc = xa;
            fc = fa;
            d = xb - xa;
            e = d;
        }
        if fc.abs() < fb.abs() {
            xa = xb;
            xb = xc;
            xc = xa;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * xb.abs() + 0.5e-15 * xb.abs().max(1.0);
        let xm = 0.5 * (xc - xb);
        if (xm.abs() <= tol1 || fb == 0.0) && defect.is_finite() {
            return Some((xb, defect));
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if xa == xc {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (xb - xa) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        xa = xb;
        fa = fb;
        xb += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        let (f, def) = eval(xb);
        fb = f;
        defect = def;
        if defect < 1e-3 * opts.tol {
            return Some((xb, defect));
        }
    }
    None
}

/// Asymptotic data of one band family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyData {
    /// Band index counted from 1.
    pub j: usize,
    /// `∫E_j⁻¹ dkx`.
    pub d: f64,
    /// Berry phase in `(−π, π]`.
    pub theta: f64,
    /// `Re ∫E_j⁻¹⟨φ_j|M|φ_j⟩ dkx`.
    pub g: f64,
    /// Imaginary part of the same integral (zero up to quadrature error).
    pub g_imag: f64,
}

impl FamilyData {
    pub fn energy(&self, m: i64) -> f64 {
        (TAU * m as f64 + self.theta + self.g) / self.d
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.d.abs()
    }

    /// Residual of `E·d − 2πm − θ − g = 0`.
    pub fn residual(&self, e: f64, m: i64) -> f64 {
        e * self.d - TAU * m as f64 - self.theta - self.g
    }
}

pub fn family_data(bands: &BandData) -> Vec<FamilyData> {
    (0..bands.n())
        .map(|j| {
            let g = bands.m_integral(j);
            FamilyData { j: j + 1, d: bands.inverse_energy_integral(j), theta: bands.berry_phase[j], g: g.re, g_imag: g.im }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AsymptoticPoint {
    pub e: f64,
    pub m: i64,
    pub j: usize,
}

#[derive(Clone, Debug)]
pub struct AsymptoticSpectrum {
    pub ky: f64,
    pub window: (f64, f64),
    pub points: Vec<AsymptoticPoint>,
    pub families: Vec<FamilyData>,
}

/// Default `kx` resolution for band data feeding the asymptotic formula;
/// the Berry phase from discrete transport converges like `Δk²`.
pub const ASYMPTOTIC_NX: usize = 2048;

pub fn asymptotic_spectrum(model: &BlochModel, ky: f64, window: (f64, f64)) -> Result<AsymptoticSpectrum> {
    Ok(asymptotic_from_bands(&decompose(model, ky, ASYMPTOTIC_NX)?, window))
}

pub fn asymptotic_from_families(ky: f64, families: Vec<FamilyData>, window: (f64, f64)) -> AsymptoticSpectrum {
    let (lo, hi) = window;
    let mut points = Vec::new();
    for f in &families {
        let a = (lo * f.d - f.theta - f.g) / TAU;
        let b = (hi * f.d - f.theta - f.g) / TAU;
        let (mlo, mhi) = (a.min(b).ceil() as i64, a.max(b).floor() as i64);
        for m in mlo..=mhi {
            let e = f.energy(m);
            if e >= lo && e <= hi {
                points.push(AsymptoticPoint { e, m, j: f.j });
            }
        }
    }
    points.sort_by(|a, b| a.e.total_cmp(&b.e));
    AsymptoticSpectrum { ky, window, points, families }
}

pub fn asymptotic_from_bands(bands: &BandData, window: (f64, f64)) -> AsymptoticSpectrum {
    asymptotic_from_families(bands.ky, family_data(bands), window)
}

/// Labels each root by the nearest asymptotic point, accepting only if it
/// is closer than half the distance from that point to its nearest
/// neighbour; each asymptotic point labels at most one root.
pub fn label_roots(points: &mut [SpectralPoint], asym: &AsymptoticSpectrum) {
    let ap = &asym.points;
    let mut claims: Vec<Option<(usize, f64)>> = vec![None; ap.len()];
    for (r, p) in points.iter_mut().enumerate() {
        p.label = None;
        let Some((k, dist)) = ap.iter().enumerate().map(|(k, a)| (k, (a.e - p.e).abs())).min_by(|x, y| x.1.total_cmp(&y.1)) else {
            continue;
        };
        let mut neighbour = f64::INFINITY;
        if k > 0 {
            neighbour = neighbour.min(ap[k].e - ap[k - 1].e);
        }
        if k + 1 < ap.len() {
            neighbour = neighbour.min(ap[k + 1].e - ap[k].e);
        }
        if !neighbour.is_finite() {
            neighbour = asym.families.iter().find(|f| f.j == ap[k].j).map(|f| f.spacing()).unwrap_or(f64::INFINITY);
        }
        if dist < 0.5 * neighbour && claims[k].is_none_or(|(_, d)| dist < d) {
            claims[k] = Some((r, dist));
        }
    }
    for (k, c) in claims.iter().enumerate() {
        if let Some((r, _)) = c {
            points[*r].label = Some(Label { m: ap[k].m, j: ap[k].j });
        }
    }
}

/// `Ũ_E(kx) = Σ_j e^{−iE∫₀^{kx}E_j⁻¹ + i∫₀^{kx}E_j⁻¹⟨φ_j|M|φ_j⟩} |χ_j(kx)⟩⟨χ_j(0)|`
/// with `χ_j` the parallel-transported frame, so the Berry phase enters
/// through `χ_j(2π) = e^{iθ_j}χ_j(0)`. The same expression holds for both
/// signs of `E`.
pub fn adiabatic_from_bands(bands: &BandData, e: f64) -> Propagator {
    let n = bands.n();
    let nx = bands.nx();
    let cumulative: Vec<(Vec<f64>, Vec<C64>)> = (0..n).map(|j| bands.cumulative(j)).collect();
    let samples = (0..=nx)
        .map(|i| {
            let mut u = DMatrix::zeros(n, n);
            for j in 0..n {
                let (d, g) = (&cumulative[j].0[i], &cumulative[j].1[i]);
                let phase = (C64::new(0.0, -e * d) + C64::new(0.0, 1.0) * g).exp();
                u += &bands.vectors[j][i] * bands.vectors[j][0].adjoint() * phase;
            }
            u
        })
        .collect();
    Propagator { e, ky: bands.ky, kx: bands.kx.clone(), samples, step_count: nx }
}

pub fn adiabatic_propagator(model: &BlochModel, ky: f64, e: f64, nx: usize) -> Result<Propagator> {
    Ok(adiabatic_from_bands(&decompose(model, ky, nx)?, e))
}

/// `Ũ_E(2π)` alone, from the closed-loop integrals.
pub fn adiabatic_monodromy(bands: &BandData, e: f64) -> DMatrix<C64> {
    let n = bands.n();
    let mut u = DMatrix::zeros(n, n);
    for (j, f) in family_data(bands).iter().enumerate() {
        let phase = C64::new(-f.g_imag, f.theta - e * f.d + f.g).exp();
        let v = &bands.vectors[j][0];
        u += v * v.adjoint() * phase;
    }
    u
}

/// An eigenfunction sampled on `nx` uniform points of `[0, 2π)`.
#[derive(Clone, Debug)]
pub struct EigenFunction {
    pub e: f64,
    pub ky: f64,
    pub kx: Vec<f64>,
    pub values: Vec<DVector<C64>>,
}

impl EigenFunction {
    pub fn l2_norm(&self) -> f64 {
        let h = TAU / self.values.len() as f64;
        (self.values.iter().map(|v| v.norm_squared()).sum::<f64>() * h).sqrt()
    }

    fn normalized(mut self) -> Self {
        let nrm = self.l2_norm();
        self.values.iter_mut().for_each(|v| *v /= C64::from(nrm));
        self
    }

    /// `max_kx |ψ(kx) − c·φ(kx)|` with the global phase `c` fitted.
    pub fn sup_distance(&self, other: &EigenFunction) -> f64 {
        let ov: C64 = self.values.iter().zip(&other.values).map(|(a, b)| b.dotc(a)).sum();
        let c = if ov.norm() > 0.0 { ov / ov.norm() } else { ONE };
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b * c).norm()).fold(0.0, f64::max)
    }
}

/// `ψ(kx) = U_E(kx)ψ₀` with `ψ₀` the eigenvector of `U_E(2π)` for the
/// eigenvalue nearest 1, normalized in `L²(0, 2π)`.
pub fn eigenfunction(model: &BlochModel, point: &SpectralPoint, nx: usize) -> Result<EigenFunction> {
    // the step rule at the default resolution, rounded up to land on the
    // sampling grid
    let rho = inverse_norm_bound(model, point.ky, 64)?;
    let steps = step_count(rho, point.e, 64).div_ceil(nx) * nx;
    let solver = MonodromySolver::new(model, point.ky, steps)?;
    eigenfunction_with(&solver, point, nx)
}

pub fn eigenfunction_with(solver: &MonodromySolver, point: &SpectralPoint, nx: usize) -> Result<EigenFunction> {
    if solver.steps % nx != 0 {
        return Err(Error::InvalidArgument("step count is not a multiple of nx".into()));
    }
    let u = solver.monodromy(point.e);
    let lam = eigenvalues(&u);
    let mut dist: Vec<(f64, C64)> = lam.iter().map(|l| ((l - ONE).norm(), *l)).collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    if dist.len() > 1 && (dist[1].1 - dist[0].1).norm() < 1e-6 {
        return Err(Error::DegenerateMonodromy((dist[1].1 - dist[0].1).norm()));
    }
    let psi0 = eigenvector_near(&u, dist[0].1);
    let every = solver.steps / nx;
    let mut values = Vec::with_capacity(nx);
    let samples = solver.sampled(point.e, every);
    for m in samples.iter().take(nx) {
        values.push(m * &psi0);
    }
    let kx = (0..nx).map(|i| TAU * i as f64 / nx as f64).collect();
    Ok(EigenFunction { e: point.e, ky: point.ky, kx, values }.normalized())
}

/// `ψ̃ = Ũ_{E(m,j)}(kx) φ_j(0)`, periodic by construction of `E(m,j)`.
pub fn adiabatic_eigenfunction(bands: &BandData, point: &AsymptoticPoint) -> EigenFunction {
    let j = point.j - 1;
    let nx = bands.nx();
    let (d, g) = bands.cumulative(j);
    let values = (0..nx)
        .map(|i| {
            let phase = (C64::new(0.0, -point.e * d[i]) + C64::new(0.0, 1.0) * g[i]).exp();
            &bands.vectors[j][i] * phase
        })
        .collect();
    EigenFunction { e: point.e, ky: bands.ky, kx: bands.kx[..nx].to_vec(), values }.normalized()
}
