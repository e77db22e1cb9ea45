//! Low-temperature energy current carried by edge modes,
//! `J = ∫ E E' (f(E) − χ(−E)) dk/2π`, and the chiral central charge from
//! `J = (π/12) T² c`.

use crate::discrete::{build_truncation, derivative_operator, edge_dispersion, EdgeBranch, EdgeDispersion, Kind};
use crate::linalg::{vdot, ZERO};
use crate::model::BlochModel;
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// One Gauss–Kronrod (7, 15) panel: `(integral, error estimate)`.
fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature on `[a, b]` (either orientation).
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let mut panels = vec![(a, b, gk15(&mut f, a, b))];
    for _ in 0..2000 {
        let total: f64 = panels.iter().map(|p| p.2 .0).sum();
        let err: f64 = panels.iter().map(|p| p.2 .1).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let worst = panels.iter().enumerate().max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1)).map(|(i, _)| i).unwrap();
        let (pa, pb, _) = panels.swap_remove(worst);
        let m = 0.5 * (pa + pb);
        panels.push((pa, m, gk15(&mut f, pa, m)));
        panels.push((m, pb, gk15(&mut f, m, pb)));
    }
    (panels.iter().map(|p| p.2 .0).sum(), panels.iter().map(|p| p.2 .1).sum())
}

/// `f(E) − χ(−E) = sign(E) / (e^{|E|/T} + 1)`.
pub fn occupation_difference(e: f64, t: f64) -> f64 {
    if e == 0.0 {
        return 0.0;
    }
    let x = (-e.abs() / t).exp();
    e.signum() * x / (1.0 + x)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModeCurrent {
    pub j: f64,
    pub error_estimate: f64,
    /// Largest `|integrand|` at the two endpoints.
    pub endpoint_integrand: f64,
    pub endpoint_warning: bool,
}

/// `∫ E E' (f(E) − χ(−E)) dk/2π` over the `k` interval between `k_minus`
/// and `k_plus`, taken in increasing `k` (so a mode running from the upper
/// to the lower band contributes with negative sign), for a dispersion
/// `dispersion(k) = (E, E')`. The interval is split where `E` changes
/// sign, where the integrand has a kink.
pub fn mode_current(mut dispersion: impl FnMut(f64) -> (f64, f64), k_minus: f64, k_plus: f64, t: f64) -> Result<ModeCurrent> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {t} must be positive")));
    }
    let (k_minus, k_plus) = (k_minus.min(k_plus), k_minus.max(k_plus));
    let mut cuts = vec![k_minus];
    let samples = 64;
    let mut prev = (k_minus, dispersion(k_minus).0);
    for s in 1..=samples {
        let k = k_minus + (k_plus - k_minus) * s as f64 / samples as f64;
        let e = dispersion(k).0;
        if (e < 0.0) != (prev.1 < 0.0) {
            let (mut lo, mut hi, mut elo) = (prev.0, k, prev.1);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let em = dispersion(mid).0;
                if (em < 0.0) == (elo < 0.0) {
                    lo = mid;
                    elo = em;
                } else {
                    hi = mid;
                }
                if (hi - lo).abs() < 1e-14 * k.abs().max(1.0) {
                    break;
                }
            }
            cuts.push(0.5 * (lo + hi));
        }
        prev = (k, e);
    }
    cuts.push(k_plus);
    let mut integrand = |k: f64| {
        let (e, de) = dispersion(k);
        e * de * occupation_difference(e, t) / (2.0 * PI)
    };
    let endpoint_integrand = integrand(k_minus).abs().max(integrand(k_plus).abs());
    let scale = t * t / 12.0;
    let mut j = 0.0;
    let mut err = 0.0;
    for w in cuts.windows(2) {
        let (v, e) = integrate(&mut integrand, w[0], w[1], 1e-12 * scale, 1e-12);
        j += v;
        err += e;
    }
    Ok(ModeCurrent { j, error_estimate: err, endpoint_integrand, endpoint_warning: endpoint_integrand > 1e-8 })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CurrentSample {
    pub t: f64,
    pub j: f64,
    pub c_estimate: f64,
}

impl CurrentSample {
    pub fn new(t: f64, j: f64) -> Self {
        CurrentSample { t, j, c_estimate: 12.0 * j / (PI * t * t) }
    }
}

/// Polynomial extrapolation of `y(x)` to `x = 0` (Neville).
pub fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (xs[i + m] * p[i] - xs[i] * p[i + 1]) / (xs[i + m] - xs[i]);
        }
    }
    p[0]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CentralCharge {
    /// Gap between bands `gap` and `gap + 1` (from 1).
    pub gap: usize,
    pub samples: Vec<CurrentSample>,
    /// Richardson extrapolation of `c_estimate` in `T²` to `T = 0`.
    pub c: f64,
    pub chirality_sum: i32,
    pub branches: usize,
    pub endpoint_warning: bool,
}

/// `(E, E')` along an edge branch of the half-plane strip: a fresh window
/// solve near the interpolated branch, picking the mode localized on the
/// `y = 0` edge, with `E'` from Hellmann–Feynman.
pub struct BranchDispersion<'a> {
    model: &'a BlochModel,
    l: usize,
    branch: &'a EdgeBranch,
}

impl<'a> BranchDispersion<'a> {
    pub fn new(model: &'a BlochModel, l: usize, branch: &'a EdgeBranch) -> Self {
        BranchDispersion { model, l, branch }
    }

    fn predict(&self, k: f64) -> f64 {
        let (ks, es) = (&self.branch.ky, &self.branch.e);
        if k <= ks[0] {
            return es[0];
        }
        let i = ks.partition_point(|x| *x <= k).min(ks.len() - 1);
        if k >= ks[ks.len() - 1] {
            return es[es.len() - 1];
        }
        let t = (k - ks[i - 1]) / (ks[i] - ks[i - 1]);
        es[i - 1] + t * (es[i] - es[i - 1])
    }

    pub fn eval(&self, k: f64) -> Result<(f64, f64)> {
        let guess = self.predict(k);
        let op = build_truncation(self.model, Kind::PlainEdge, self.l, k)?;
        let n = op.n();
        let quarter = (op.matrix.sites() / 4).max(1) * n;
        let mut half = 0.1;
        for _ in 0..6 {
            let pairs = op.window(guess - half, guess + half, true);
            let vecs = pairs.vectors.unwrap();
            let best = pairs
                .values
                .iter()
                .zip(&vecs)
                .filter(|(_, v)| v[..quarter].iter().map(|x| x.norm_sqr()).sum::<f64>() > 0.5)
                .min_by(|a, b| (a.0 - guess).abs().total_cmp(&(b.0 - guess).abs()));
            if let Some((e, v)) = best {
                let dh = derivative_operator(self.model, Kind::PlainEdge, self.l, k);
                let mut w = vec![ZERO; v.len()];
                dh.matvec(v, &mut w);
                let de: C64 = vdot(v, &w);
                return Ok((*e, de.re));
            }
            half *= 2.0;
        }
        Err(Error::BranchGrouping(format!("edge mode lost at ky = {k}")))
    }
}

/// Sums the mode currents of the edge branches in `gap` at each
/// temperature and extrapolates `c`.
pub fn central_charge(model: &BlochModel, gap: usize, temps: &[f64], l: usize, ny: usize) -> Result<CentralCharge> {
    let disp = edge_dispersion(model, l, ny)?;
    central_charge_from(model, &disp, gap, temps)
}

pub fn central_charge_from(model: &BlochModel, disp: &EdgeDispersion, gap: usize, temps: &[f64]) -> Result<CentralCharge> {
    if temps.is_empty() || temps.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("temperatures must be positive".into()));
    }
    let inside = disp.bulk.iter().all(|r| r.len() > gap && r[gap - 1].1 < 0.0 && r[gap].0 > 0.0);
    if !inside {
        return Err(Error::NoGap);
    }
    let branches: Vec<&EdgeBranch> = disp.branches.iter().filter(|b| b.gap == gap && b.chirality != 0).collect();
    let mut samples = Vec::new();
    let mut warn = false;
    for &t in temps {
        let mut j = 0.0;
        for b in &branches {
            let d = BranchDispersion::new(model, disp.l, b);
            let mut failure = None;
            let f = |k: f64| match d.eval(k) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    (0.0, 0.0)
                }
            };
            let mc = mode_current(f, b.ky[0], *b.ky.last().unwrap(), t)?;
            if let Some(e) = failure {
                return Err(e);
            }
            warn |= mc.endpoint_warning;
            j += mc.j;
        }
        samples.push(CurrentSample::new(t, j));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.t * s.t).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.c_estimate).collect();
    Ok(CentralCharge {
        gap,
        c: extrapolate_to_zero(&xs, &ys),
        samples,
        chirality_sum: branches.iter().map(|b| b.chirality).sum(),
        branches: branches.len(),
        endpoint_warning: warn,
    })
}
