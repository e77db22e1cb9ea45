//! Continuation of truncated-operator eigenpairs across `ky` by parallel
//! transport:
//! `ψ' = −(H − E)⁺ H' ψ`, `E' = ψ*H'ψ`, integrated with classical RK4 and
//! re-anchored on the eigenvector after every step.

use crate::discrete::{build_truncation, derivative_operator, Kind, SPURIOUS_FRACTION};
use crate::linalg::{vdot, vnorm, BlockTridiag, ZERO};
use crate::model::BlochModel;
use crate::{Error, Result, C64, TAU};
use serde::Serialize;

/// Branch of a truncated-operator family sampled on a uniform `ky` grid.
#[derive(Clone, Debug, Serialize)]
pub struct TrackedBranch {
    pub id: usize,
    pub k: Vec<f64>,
    pub e: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Unit-norm defect `|‖ψ‖ − 1|` at each sample.
    pub norm_defect: Vec<f64>,
    /// Accepted RK4 steps, including sub-steps.
    pub steps: usize,
    /// `E(2π)` matches some seed energy at `ky = 0`.
    pub closed: bool,
    #[serde(skip)]
    pub final_vector: Vec<C64>,
}

#[derive(Clone, Debug)]
pub struct TrackOptions {
    /// Samples per 2π.
    pub ny: usize,
    pub residual_accept: f64,
    pub residual_abort: f64,
    pub cond_limit: f64,
    pub max_halvings: u32,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions { ny: 200, residual_accept: 1e-7, residual_abort: 1e-5, cond_limit: 1e8, max_halvings: 20 }
    }
}

/// Window eigenpairs at `op.ky` with spurious ones removed.
pub fn seed_pairs(op: &crate::discrete::TruncatedOperator, window: (f64, f64)) -> Result<Vec<(f64, Vec<C64>)>> {
    let pairs = op.window(window.0, window.1, true);
    let out: Vec<(f64, Vec<C64>)> = pairs
        .values
        .into_iter()
        .zip(pairs.vectors.unwrap())
        .filter(|(_, v)| !crate::discrete::spurious_filter(op, v, SPURIOUS_FRACTION))
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyWindow(window.0, window.1));
    }
    Ok(out)
}

struct Family<'a> {
    model: &'a BlochModel,
    kind: Kind,
    l: usize,
}

struct Frame {
    h: BlockTridiag,
    dh: BlockTridiag,
}

impl Family<'_> {
    fn at(&self, ky: f64) -> Result<Frame> {
        Ok(Frame {
            h: build_truncation(self.model, self.kind, self.l, ky)?.matrix,
            dh: derivative_operator(self.model, self.kind, self.l, ky),
        })
    }
}

fn project_out(v: &mut [C64], psi: &[C64]) {
    let c = vdot(psi, v);
    v.iter_mut().zip(psi).for_each(|(x, p)| *x -= c * p);
}

/// Right-hand side at one point; returns `(ψ', E', conditioning)`.
fn rhs(f: &Frame, psi: &[C64], e: f64) -> (Vec<C64>, f64, f64) {
    let dim = psi.len();
    let mut b = vec![ZERO; dim];
    f.dh.matvec(psi, &mut b);
    let de = vdot(psi, &b).re / vdot(psi, psi).re;
    project_out(&mut b, psi);
    let bn = vnorm(&b);
    let eta = 1e-12 * e.abs().max(1.0);
    let lu = f.h.shifted_lu(C64::new(e, eta));
    let mut x = b;
    lu.solve(&mut x);
    project_out(&mut x, psi);
    let cond = if bn > 0.0 { vnorm(&x) / bn * e.abs().max(1.0) } else { 0.0 };
    x.iter_mut().for_each(|v| *v = -*v);
    (x, de, cond)
}

/// One Rayleigh-quotient iteration step at shift `e`, with the phase of
/// the result aligned to the input so the transport gauge is kept.
fn refine(h: &BlockTridiag, psi: &mut [C64], e: f64) {
    let lu = h.shifted_lu(C64::new(e, 1e-14 * e.abs().max(1.0)));
    let mut x = psi.to_vec();
    lu.solve(&mut x);
    let ov = vdot(psi, &x);
    let nrm = vnorm(&x);
    if !(nrm.is_finite() && nrm > 0.0 && ov.norm() > 0.0) {
        return;
    }
    let phase = ov.conj() / ov.norm();
    psi.iter_mut().zip(&x).for_each(|(p, v)| *p = v * phase / nrm);
}

fn axpy(y: &[C64], a: f64, x: &[C64]) -> Vec<C64> {
    y.iter().zip(x).map(|(u, v)| u + v * a).collect()
}

enum StepOutcome {
    Accepted { psi: Vec<C64>, e: f64, residual: f64 },
    Retry,
}

fn rk4_step(fam: &Family, k: f64, h: f64, psi: &[C64], e: f64, opts: &TrackOptions, last_chance: bool) -> Result<StepOutcome> {
    let f0 = fam.at(k)?;
    let fm = fam.at(k + 0.5 * h)?;
    let f1 = fam.at(k + h)?;
    let (k1, d1, c1) = rhs(&f0, psi, e);
    let p2 = axpy(psi, 0.5 * h, &k1);
    let (k2, d2, c2) = rhs(&fm, &p2, e + 0.5 * h * d1);
    let p3 = axpy(psi, 0.5 * h, &k2);
    let (k3, d3, c3) = rhs(&fm, &p3, e + 0.5 * h * d2);
    let p4 = axpy(psi, h, &k3);
    let (k4, _d4, c4) = rhs(&f1, &p4, e + h * d3);
    if c1.max(c2).max(c3).max(c4) > opts.cond_limit && !last_chance {
        return Ok(StepOutcome::Retry);
    }
    let mut next: Vec<C64> = (0..psi.len()).map(|i| psi[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0)).collect();
    let nrm = vnorm(&next);
    next.iter_mut().for_each(|x| *x /= nrm);
    let mut hv = vec![ZERO; next.len()];
    f1.h.matvec(&next, &mut hv);
    let e_rk = vdot(&next, &hv).re;
    refine(&f1.h, &mut next, e_rk);
    f1.h.matvec(&next, &mut hv);
    let e_new = vdot(&next, &hv).re;
    let residual = hv.iter().zip(&next).map(|(a, b)| (a - b * e_new).norm_sqr()).sum::<f64>().sqrt();
    if residual > opts.residual_accept && !last_chance {
        return Ok(StepOutcome::Retry);
    }
    if residual > opts.residual_abort {
        return Err(Error::ResidualBlowup { ky: k + h, residual });
    }
    Ok(StepOutcome::Accepted { psi: next, e: e_new, residual })
}

/// Transports `seed` (an eigenpair at `ky0`) once around the `ky` circle.
pub fn transport(model: &BlochModel, kind: Kind, l: usize, ky0: f64, seed: &(f64, Vec<C64>), opts: &TrackOptions) -> Result<TrackedBranch> {
    let fam = Family { model, kind, l };
    let h0 = fam.at(ky0)?.h;
    let r0 = h0.residual(seed.0, &seed.1);
    if r0 > 1e-8 * seed.0.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!("seed residual {r0:e} too large")));
    }
    let ny = opts.ny;
    let dk = TAU / ny as f64;
    let min_step = TAU / 1e6;
    let mut psi = seed.1.clone();
    let mut e = seed.0;
    let mut k = vec![ky0];
    let mut es = vec![e];
    let mut res = vec![r0];
    let mut ndef = vec![(vnorm(&psi) - 1.0).abs()];
    let mut steps = 0;
    for i in 0..ny {
        let target = ky0 + dk * (i + 1) as f64;
        let mut cur = ky0 + dk * i as f64;
        let mut h = dk;
        let mut last_res = 0.0;
        while cur < target - 1e-15 {
            h = h.min(target - cur);
            let last_chance = h / 2.0 < min_step;
            match rk4_step(&fam, cur, h, &psi, e, opts, last_chance)? {
                StepOutcome::Accepted { psi: p, e: en, residual } => {
                    psi = p;
                    e = en;
                    cur += h;
                    last_res = residual;
                    steps += 1;
                    h *= 2.0;
                }
                StepOutcome::Retry => {
                    h *= 0.5;
                    if h < min_step {
                        return Err(Error::StepUnderflow(cur));
                    }
                }
            }
        }
        k.push(target);
        es.push(e);
        res.push(last_res);
        ndef.push((vnorm(&psi) - 1.0).abs());
    }
    Ok(TrackedBranch { id: 0, k, e: es, residuals: res, norm_defect: ndef, steps, closed: false, final_vector: psi })
}

/// All branches seeded in `window` at `ky = 0`.
#[derive(Clone, Debug)]
pub struct TrackSet {
    pub seeds: Vec<f64>,
    pub branches: Vec<TrackedBranch>,
    /// `(seed energy, error)` for aborted branches.
    pub aborted: Vec<(f64, String)>,
}

impl TrackSet {
    /// Endpoint permutation: `perm[i]` is the seed index nearest to the
    /// endpoint of branch `i`.
    pub fn permutation(&self) -> Vec<Option<usize>> {
        self.branches
            .iter()
            .map(|b| {
                let end = *b.e.last().unwrap();
                self.seeds
                    .iter()
                    .enumerate()
                    .map(|(s, x)| (s, (x - end).abs()))
                    .filter(|(_, d)| *d < 1e-6)
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(s, _)| s)
            })
            .collect()
    }
}

pub fn track_window(model: &BlochModel, kind: Kind, l: usize, window: (f64, f64), opts: &TrackOptions) -> Result<TrackSet> {
    use rayon::prelude::*;
    let op = build_truncation(model, kind, l, 0.0)?;
    let seeds = seed_pairs(&op, window)?;
    let results: Vec<Result<TrackedBranch>> = seeds.par_iter().map(|s| transport(model, kind, l, 0.0, s, opts)).collect();
    let energies: Vec<f64> = seeds.iter().map(|s| s.0).collect();
    let mut branches = Vec::new();
    let mut aborted = Vec::new();
    for (s, r) in seeds.iter().zip(results) {
        match r {
            Ok(mut b) => {
                b.id = branches.len();
                let end = *b.e.last().unwrap();
                b.closed = energies.iter().any(|x| (x - end).abs() < 1e-6);
                branches.push(b);
            }
            Err(err) => aborted.push((s.0, err.to_string())),
        }
    }
    Ok(TrackSet { seeds: energies, branches, aborted })
}

/// Distance from the tracked energy to the nearest eigenvalue of a fresh
/// solve, at `count` evenly spaced samples.
pub fn checkpoint_deviation(model: &BlochModel, kind: Kind, l: usize, branch: &TrackedBranch, count: usize) -> Result<Vec<(f64, f64)>> {
    let total = branch.k.len() - 1;
    (0..count)
        .map(|c| {
            let idx = (c * total) / count + total / (2 * count);
            let (ky, e) = (branch.k[idx], branch.e[idx]);
            let op = build_truncation(model, kind, l, ky)?;
            let near = op.window(e - 0.5, e + 0.5, false).values;
            let d = near.iter().map(|x| (x - e).abs()).fold(f64::INFINITY, f64::min);
            Ok((ky, d))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_constant, build_harper};

    #[test]
    fn constant_seeds_are_coordinate_vectors() {
        let m = build_constant(&[2.0]).unwrap();
        let op = build_truncation(&m, Kind::ModulatedEdge, 50, 0.0).unwrap();
        let seeds = seed_pairs(&op, (5.0, 15.0)).unwrap();
        let es: Vec<f64> = seeds.iter().map(|s| s.0).collect();
        assert_eq!(es.len(), 5);
        for (e, want) in es.iter().zip([6.0, 8.0, 10.0, 12.0, 14.0]) {
            assert!((e - want).abs() < 1e-12);
        }
        for (e, v) in &seeds {
            let site = (*e / 2.0).round() as usize;
            assert!((v[site].norm() - 1.0).abs() < 1e-12);
        }
        let again = seed_pairs(&build_truncation(&m, Kind::ModulatedEdge, 50, TAU).unwrap(), (5.0, 15.0)).unwrap();
        for (a, b) in again.iter().zip(&es) {
            assert!((a.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_window_is_reported() {
        let m = build_constant(&[2.0]).unwrap();
        let op = build_truncation(&m, Kind::ModulatedEdge, 50, 0.0).unwrap();
        assert!(matches!(seed_pairs(&op, (6.5, 7.5)), Err(Error::EmptyWindow(..))));
    }

    #[test]
    fn constant_branch_is_flat() {
        let m = build_constant(&[2.0]).unwrap();
        let set = track_window(&m, Kind::ModulatedEdge, 20, (9.0, 11.0), &TrackOptions { ny: 32, ..Default::default() }).unwrap();
        let b = &set.branches[0];
        assert!(b.e.iter().all(|e| (e - 10.0).abs() < 1e-12));
        assert!(b.closed);
    }

    #[test]
    fn harper_branch_matches_checkpoints() {
        let m = build_harper(1, 3, 1.5).unwrap();
        let set = track_window(&m, Kind::ModulatedEdge, 120, (20.0, 21.0), &TrackOptions { ny: 200, ..Default::default() }).unwrap();
        assert!(set.aborted.is_empty(), "{:?}", set.aborted);
        for b in &set.branches {
            assert!(b.residuals.iter().all(|r| *r < 1e-6));
            assert!(b.norm_defect.iter().all(|d| *d < 1e-10));
            for (ky, d) in checkpoint_deviation(&m, Kind::ModulatedEdge, 120, b, 16).unwrap() {
                assert!(d < 1e-6, "ky {ky}: {d}");
            }
        }
    }

    #[test]
    fn step_halving_changes_little() {
        let m = build_harper(1, 3, 1.5).unwrap();
        let op = build_truncation(&m, Kind::ModulatedEdge, 80, 0.0).unwrap();
        let seed = seed_pairs(&op, (20.0, 21.0)).unwrap().remove(0);
        let a = transport(&m, Kind::ModulatedEdge, 80, 0.0, &seed, &TrackOptions { ny: 200, ..Default::default() }).unwrap();
        let b = transport(&m, Kind::ModulatedEdge, 80, 0.0, &seed, &TrackOptions { ny: 400, ..Default::default() }).unwrap();
        for i in 0..=200 {
            assert!((a.e[i] - b.e[2 * i]).abs() < 1e-8, "{}", (a.e[i] - b.e[2 * i]).abs());
        }
    }
}
