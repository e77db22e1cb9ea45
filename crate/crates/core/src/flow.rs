//! Spectral flow of edge spectra through a fiducial energy, compared with
//! the Hall conductance.
//!
//! Sign conventions: `wind θ_j = −c_j` for the transported Berry phase, and
//! the asymptotic family `E(m, j, ·)` continues into `E(m + wind θ_j, j, ·)`
//! after one turn in `ky`. At positive energy the `y ≥ 0` side carries the
//! bands with `E_j > 0`, the `y ≤ −1` side those with `E_j < 0`.

use crate::bands::{berry_phase_lift, chern_numbers, decompose};
use crate::discrete::{build_truncation, Kind, SPURIOUS_FRACTION};
use crate::edgeclass::Side;
use crate::linalg::vdot;
use crate::model::{validate_gaps, BlochModel};
use crate::monodromy::family_data;
use crate::tracking::TrackedBranch;
use crate::{Error, Result, C64, TAU};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Crossing {
    pub ky: f64,
    pub direction: i32,
    pub branch_id: usize,
    pub slope: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowReport {
    pub side: Side,
    pub fiducial_e: f64,
    pub window: (f64, f64),
    pub crossings: Vec<Crossing>,
    /// Signed count, upward crossings positive.
    pub flow: i64,
    /// `wind θ_j` per band (from 1).
    pub family_windings: BTreeMap<usize, i64>,
    /// Bands whose asymptotic families make up this side's spectrum.
    pub families: Vec<usize>,
    /// Sum of `wind θ_j` over `families`.
    pub label_winding: i64,
    pub kappa: i64,
    pub agrees: bool,
    pub tangential: bool,
}

/// Hall conductance `κ = Σ_{j<k} c_j`.
pub fn hall_conductance(model: &BlochModel) -> Result<i64> {
    hall_conductance_with(model, 64, 64)
}

pub fn hall_conductance_with(model: &BlochModel, nx: usize, ny: usize) -> Result<i64> {
    let gaps = validate_gaps(model, nx.max(8), ny.max(8))?;
    let k = gaps.gap_index_k.ok_or(Error::NoGap)?;
    let rec = chern_numbers(model, nx, ny)?;
    Ok(rec.chern[..k - 1].iter().sum())
}

/// `wind θ_j` from the continuous Berry-phase lift (`j` from 1).
pub fn family_winding(model: &BlochModel, j: usize, ny: usize) -> Result<i64> {
    if j == 0 || j > model.n() {
        return Err(Error::InvalidArgument(format!("band {j} out of range")));
    }
    let (lift, jump) = berry_phase_lift(model, 256, ny)?;
    if jump > 0.5 * std::f64::consts::PI {
        return Err(Error::InsufficientResolution(jump));
    }
    let raw = (lift[j - 1][ny] - lift[j - 1][0]) / TAU;
    Ok(raw.round() as i64)
}

/// Winding of the asymptotic curve `E(m, j, ky)` followed continuously in
/// `ky`: the curve started at label `m` ends on label `m + w`.
pub fn asymptotic_curve_winding(model: &BlochModel, j: usize, m: i64, ny: usize) -> Result<i64> {
    let fams: Vec<_> =
        (0..=ny).map(|l| Ok(family_data(&decompose(model, TAU * l as f64 / ny as f64, 256)?)[j - 1].clone())).collect::<Result<_>>()?;
    let mut label = m;
    let mut e = fams[0].energy(m);
    for f in &fams[1..] {
        label = (label - 2..=label + 2).min_by(|a, b| (f.energy(*a) - e).abs().total_cmp(&(f.energy(*b) - e).abs())).unwrap();
        e = f.energy(label);
    }
    // compare against the ky = 0 data: principal Berry phases at 0 and 2π
    // may sit on opposite sides of the branch cut
    let start = &fams[0];
    let end = (label - 2..=label + 2).min_by(|a, b| (start.energy(*a) - e).abs().total_cmp(&(start.energy(*b) - e).abs())).unwrap();
    Ok(end - m)
}

/// Bands whose asymptotic families lie on `side` for energies of sign
/// `energy_sign`.
pub fn side_families(model: &BlochModel, side: Side, energy_sign: f64) -> Result<Vec<usize>> {
    let ranges = validate_gaps(model, 64, 64)?;
    if !ranges.assumption_satisfied {
        return Err(Error::NoGap);
    }
    let want_positive_band = (side == Side::EdgePlus) == (energy_sign > 0.0);
    Ok(ranges.band_ranges.iter().enumerate().filter(|(_, r)| (r.0 > 0.0) == want_positive_band).map(|(j, _)| j + 1).collect())
}

/// One `ky` column of a sampled spectrum.
#[derive(Clone, Debug)]
pub struct Column {
    pub ky: f64,
    pub e: Vec<f64>,
    pub vectors: Option<Vec<Vec<C64>>>,
}

/// `links[i][a] = Some(b)` when point `a` of column `i` continues as point
/// `b` of column `i + 1` (the last column links to the first).
pub fn link_branches(cols: &[Column]) -> Vec<Vec<Option<usize>>> {
    let ny = cols.len();
    (0..ny)
        .map(|i| {
            let (a, b) = (&cols[i], &cols[(i + 1) % ny]);
            let mut taken = vec![false; b.e.len()];
            let mut out = vec![None; a.e.len()];
            let score = |p: usize, q: usize| -> f64 {
                match (&a.vectors, &b.vectors) {
                    (Some(va), Some(vb)) => vdot(&va[p], &vb[q]).norm(),
                    _ => -(a.e[p] - b.e[q]).abs(),
                }
            };
            let mut cands: Vec<(f64, usize, usize)> =
                (0..a.e.len()).flat_map(|p| (0..b.e.len()).map(move |q| (p, q))).map(|(p, q)| (score(p, q), p, q)).collect();
            cands.sort_by(|x, y| y.0.total_cmp(&x.0));
            let spacing = |c: &Column| c.e.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            let etol = 0.5 * spacing(a).min(spacing(b)).min(1.0);
            for (s, p, q) in cands {
                if out[p].is_some() || taken[q] {
                    continue;
                }
                let ok = if a.vectors.is_some() { s > 0.5 } else { -s < etol };
                if ok {
                    out[p] = Some(q);
                    taken[q] = true;
                }
            }
            out
        })
        .collect()
}

fn crossing(e0: f64, e1: f64, k0: f64, dk: f64, fiducial: f64, id: usize) -> Option<Crossing> {
    if (e0 < fiducial) == (e1 < fiducial) {
        return None;
    }
    let t = (fiducial - e0) / (e1 - e0);
    let slope = (e1 - e0) / dk;
    Some(Crossing { ky: k0 + t * dk, direction: if e1 > e0 { 1 } else { -1 }, branch_id: id, slope })
}

/// Crossings of linked point clouds through `fiducial`.
pub fn cloud_crossings(cols: &[Column], fiducial: f64) -> Vec<Crossing> {
    let links = link_branches(cols);
    let ny = cols.len();
    let mut out = Vec::new();
    for i in 0..ny {
        let dk = TAU / ny as f64;
        for (a, l) in links[i].iter().enumerate() {
            if let Some(b) = l {
                if let Some(c) = crossing(cols[i].e[a], cols[(i + 1) % ny].e[*b], cols[i].ky, dk, fiducial, a) {
                    out.push(c);
                }
            }
        }
    }
    out
}

/// Crossings of tracked branches through `fiducial`.
pub fn tracked_crossings(branches: &[TrackedBranch], fiducial: f64) -> Vec<Crossing> {
    let mut out = Vec::new();
    for b in branches {
        for s in 0..b.k.len() - 1 {
            if let Some(c) = crossing(b.e[s], b.e[s + 1], b.k[s], b.k[s + 1] - b.k[s], fiducial, b.id) {
                out.push(c);
            }
        }
    }
    out
}

pub const TANGENTIAL_SLOPE: f64 = 1e-6;

/// Assembles a report from crossings.
pub fn spectral_flow(model: &BlochModel, side: Side, window: (f64, f64), crossings: Vec<Crossing>, fiducial: f64) -> Result<FlowReport> {
    let kappa = hall_conductance(model)?;
    let n = model.n();
    let mut family_windings = BTreeMap::new();
    for j in 1..=n {
        family_windings.insert(j, family_winding(model, j, 128)?);
    }
    let sign = if fiducial >= 0.0 { 1.0 } else { -1.0 };
    let families = side_families(model, side, sign)?;
    let label_winding = families.iter().map(|j| family_windings[j]).sum();
    let flow = crossings.iter().map(|c| c.direction as i64).sum();
    let tangential = crossings.iter().any(|c| c.slope.abs() < TANGENTIAL_SLOPE);
    Ok(FlowReport {
        side,
        fiducial_e: fiducial,
        window,
        crossings,
        flow,
        family_windings,
        families,
        label_winding,
        kappa,
        agrees: flow == kappa,
        tangential,
    })
}

/// Windowed, de-spurioused spectra of one side's truncation on a `ky` grid.
pub fn side_columns(model: &BlochModel, side: Side, l: usize, ny: usize, window: (f64, f64), vectors: bool) -> Result<Vec<Column>> {
    use rayon::prelude::*;
    let kind = match side {
        Side::EdgePlus => Kind::ModulatedEdge,
        Side::EdgeMinus => Kind::ModulatedEdgeMinus,
        Side::Ambiguous => return Err(Error::InvalidArgument("no truncation for the ambiguous side".into())),
    };
    (0..ny)
        .into_par_iter()
        .map(|i| {
            let ky = TAU * i as f64 / ny as f64;
            let op = build_truncation(model, kind, l, ky)?;
            let pairs = op.window(window.0, window.1, true);
            let mut e = Vec::new();
            let mut vs = Vec::new();
            for (x, v) in pairs.values.into_iter().zip(pairs.vectors.unwrap()) {
                if !crate::discrete::spurious_filter(&op, &v, SPURIOUS_FRACTION) {
                    e.push(x);
                    vs.push(v);
                }
            }
            Ok(Column { ky, e, vectors: vectors.then_some(vs) })
        })
        .collect()
}

/// Flow of one side's truncated spectrum through `fiducial`.
pub fn edge_flow(model: &BlochModel, side: Side, l: usize, ny: usize, window: (f64, f64), fiducial: f64) -> Result<FlowReport> {
    if !(fiducial > window.0 && fiducial < window.1) {
        return Err(Error::InvalidArgument(format!("fiducial {fiducial} outside window {window:?}")));
    }
    let cols = side_columns(model, side, l, ny, window, true)?;
    spectral_flow(model, side, window, cloud_crossings(&cols, fiducial), fiducial)
}

/// Default high-energy window: from ten times the largest bulk energy,
/// one asymptotic period of the slowest family wide.
pub fn default_window(model: &BlochModel) -> Result<(f64, f64)> {
    let g = validate_gaps(model, 64, 64)?;
    let emax = g.band_ranges.iter().map(|r| r.0.abs().max(r.1.abs())).fold(0.0, f64::max);
    let b = decompose(model, 0.0, 256)?;
    let period = (0..model.n()).map(|j| TAU / b.inverse_energy_integral(j).abs()).fold(0.0, f64::max);
    Ok((10.0 * emax, 10.0 * emax + period.max(1.0)))
}
