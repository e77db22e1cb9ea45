//! Real-space truncations at fixed `ky`.
//!
//! In the mode basis `ψ(kx) = Σ_y ψ_y e^{−iy·kx}` the Fourier-side operator
//! `iH d/dkx + A†e^{−ikx}` is block-tridiagonal with blocks
//! `(y, y) = y·V`, `(y, y+1) = (y+1)·A`, `(y+1, y) = (y+1)·A†`.
//! The coupling between `y = −1` and `y = 0` vanishes, so the operator
//! splits exactly into the parts on `y ≥ 0` and `y ≤ −1`.

use crate::bands::decompose;
use crate::linalg::{herm_eig, to_flat, BlockTridiag, EigenPairs};
use crate::model::BlochModel;
use crate::{Error, Result, C64, TAU};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Sites `−L..=L`.
    ModulatedFull,
    /// Sites `0..=L`.
    ModulatedEdge,
    /// Sites `−L..=−1`.
    ModulatedEdgeMinus,
    /// Unweighted half-plane strip, sites `0..L`.
    PlainEdge,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::ModulatedFull => "modulated_full",
            Kind::ModulatedEdge => "modulated_edge",
            Kind::ModulatedEdgeMinus => "modulated_edge_minus",
            Kind::PlainEdge => "plain_edge",
        }
    }

    fn sites(self, l: usize) -> (i64, i64) {
        let l = l as i64;
        match self {
            Kind::ModulatedFull => (-l, l),
            Kind::ModulatedEdge => (0, l),
            Kind::ModulatedEdgeMinus => (-l, -1),
            Kind::PlainEdge => (0, l - 1),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TruncatedOperator {
    pub kind: Kind,
    pub l: usize,
    pub ky: f64,
    /// Site label of block 0.
    pub first_site: i64,
    pub matrix: BlockTridiag,
}

fn assemble(kind: Kind, l: usize, v: &DMatrix<C64>, a: &DMatrix<C64>) -> (i64, BlockTridiag) {
    let (lo, hi) = kind.sites(l);
    let (vf, af) = (to_flat(v), to_flat(a));
    let scaled = |m: &[C64], w: f64| m.iter().map(|x| x * w).collect::<Vec<C64>>();
    let (diag, upper) = if kind == Kind::PlainEdge {
        ((lo..=hi).map(|_| vf.clone()).collect(), (lo..hi).map(|_| af.clone()).collect())
    } else {
        ((lo..=hi).map(|y| scaled(&vf, y as f64)).collect(), (lo..hi).map(|y| scaled(&af, (y + 1) as f64)).collect())
    };
    (lo, BlockTridiag::new(v.nrows(), diag, upper))
}

pub fn build_truncation(model: &BlochModel, kind: Kind, l: usize, ky: f64) -> Result<TruncatedOperator> {
    if l < 2 {
        return Err(Error::InvalidArgument(format!("truncation radius {l} too small")));
    }
    let (first_site, matrix) = assemble(kind, l, &model.v(ky), &model.a(ky));
    Ok(TruncatedOperator { kind, l, ky, first_site, matrix })
}

/// `d/dky` of the truncation, same block pattern.
pub fn derivative_operator(model: &BlochModel, kind: Kind, l: usize, ky: f64) -> BlockTridiag {
    assemble(kind, l, &model.dv(ky), &model.da(ky)).1
}

impl TruncatedOperator {
    pub fn n(&self) -> usize {
        self.matrix.block_size()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn site(&self, block: usize) -> i64 {
        self.first_site + block as i64
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        self.matrix.to_dense()
    }

    /// Restriction to the block range `[from, to)`.
    pub fn restrict(&self, from: usize, to: usize) -> BlockTridiag {
        let diag = (from..to).map(|i| self.matrix.diag_block(i).to_vec()).collect();
        let upper = (from..to - 1).map(|i| self.matrix.upper_block(i).to_vec()).collect();
        BlockTridiag::new(self.n(), diag, upper)
    }

    /// Eigenpairs in `[lo, hi)`.
    pub fn window(&self, lo: f64, hi: f64, vectors: bool) -> EigenPairs {
        self.matrix.eigenpairs_in(lo, hi, vectors)
    }

    /// Mass of `v` in the outer `fraction` of sites at the large-`|y|` end(s).
    pub fn boundary_mass(&self, v: &[C64], fraction: f64) -> f64 {
        let n = self.n();
        let sites = self.matrix.sites();
        let w = ((fraction * sites as f64).ceil() as usize).clamp(1, sites);
        let mass = |r: std::ops::Range<usize>| v[r.start * n..r.end * n].iter().map(|x| x.norm_sqr()).sum::<f64>();
        match self.kind {
            Kind::ModulatedEdge | Kind::PlainEdge => mass(sites - w..sites),
            Kind::ModulatedEdgeMinus => mass(0..w),
            Kind::ModulatedFull => mass(0..w) + mass(sites - w..sites),
        }
    }
}

/// Full Hermitian eigendecomposition (dense), ascending.
pub fn dense_spectrum(op: &TruncatedOperator, vectors: bool) -> Result<EigenPairs> {
    if op.dim() > 6000 {
        return Err(Error::InvalidArgument(format!("dimension {} beyond dense range", op.dim())));
    }
    let (values, vecs) = herm_eig(&op.to_dense());
    let vectors = vectors.then(|| (0..values.len()).map(|j| vecs.column(j).iter().copied().collect()).collect());
    Ok(EigenPairs { values, vectors })
}

pub const SPURIOUS_FRACTION: f64 = 0.05;
pub const SPURIOUS_MASS: f64 = 1e-3;

/// True when the eigenvector leans on the truncation boundary.
pub fn spurious_filter(op: &TruncatedOperator, v: &[C64], boundary_fraction: f64) -> bool {
    op.boundary_mass(v, boundary_fraction) > SPURIOUS_MASS
}

/// One eigenvalue of a truncation with its provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscreteEigen {
    pub ky: f64,
    pub e: f64,
    pub spurious: bool,
    pub boundary_mass: f64,
}

/// Windowed spectrum with spurious flags.
pub fn window_spectrum(op: &TruncatedOperator, lo: f64, hi: f64) -> Vec<DiscreteEigen> {
    let pairs = op.window(lo, hi, true);
    pairs
        .values
        .iter()
        .zip(pairs.vectors.as_ref().unwrap())
        .map(|(&e, v)| {
            let bm = op.boundary_mass(v, SPURIOUS_FRACTION);
            DiscreteEigen { ky: op.ky, e, spurious: bm > SPURIOUS_MASS, boundary_mass: bm }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeModeRecord {
    pub branch_id: usize,
    pub k_minus: f64,
    pub k_plus: f64,
    pub chirality: i32,
    /// Gap between bands `gap` and `gap + 1` (from 1).
    pub gap: usize,
}

/// In-gap branch of the half-plane strip, localized on the `y = 0` edge.
#[derive(Clone, Debug)]
pub struct EdgeBranch {
    pub id: usize,
    pub gap: usize,
    /// Increasing; may run past 2π when the branch wraps.
    pub ky: Vec<f64>,
    pub e: Vec<f64>,
    pub chirality: i32,
    pub k_minus: f64,
    pub k_plus: f64,
}

impl EdgeBranch {
    pub fn record(&self) -> EdgeModeRecord {
        EdgeModeRecord { branch_id: self.id, k_minus: self.k_minus, k_plus: self.k_plus, chirality: self.chirality, gap: self.gap }
    }
}

#[derive(Clone, Debug)]
pub struct EdgeDispersion {
    pub l: usize,
    pub ky: Vec<f64>,
    /// Per `ky`, `(min, max)` of each bulk band over `kx`.
    pub bulk: Vec<Vec<(f64, f64)>>,
    /// Per `ky`, the full strip spectrum.
    pub spectrum: Vec<Vec<f64>>,
    pub branches: Vec<EdgeBranch>,
}

impl EdgeDispersion {
    pub fn records(&self) -> Vec<EdgeModeRecord> {
        self.branches.iter().map(EdgeBranch::record).collect()
    }

    pub fn chirality_sum(&self, gap: usize) -> i32 {
        self.branches.iter().filter(|b| b.gap == gap).map(|b| b.chirality).sum()
    }

    /// `(branch id, in-gap)` for every spectrum entry at sample `i`.
    pub fn tags(&self, i: usize) -> Vec<(Option<usize>, bool)> {
        let ky = self.ky[i];
        self.spectrum[i]
            .iter()
            .map(|&e| {
                let in_gap = (0..self.bulk[i].len().saturating_sub(1)).any(|g| e > self.bulk[i][g].1 && e < self.bulk[i][g + 1].0);
                let id = self
                    .branches
                    .iter()
                    .find(|b| b.ky.iter().zip(&b.e).any(|(k, x)| ((k - ky) / TAU).fract().abs() < 1e-12 && (x - e).abs() < 1e-9))
                    .map(|b| b.id);
                (id, in_gap)
            })
            .collect()
    }
}

/// Fraction of an edge-localized mode's weight that must sit in the first
/// quarter of the strip.
const EDGE_MASS: f64 = 0.5;

/// Half-plane strip dispersion: in-gap eigenvalues on the `y = 0` edge are
/// linked into branches across `ky`, and each branch gets a chirality
/// (+1 when it runs from the lower to the upper band with increasing `ky`).
pub fn edge_dispersion(model: &BlochModel, l: usize, ny: usize) -> Result<EdgeDispersion> {
    if ny < 8 {
        return Err(Error::InvalidArgument(format!("ny = {ny} too small")));
    }
    let n = model.n();
    let ky: Vec<f64> = (0..ny).map(|i| TAU * i as f64 / ny as f64).collect();
    let mut bulk = Vec::with_capacity(ny);
    let mut spectrum = Vec::with_capacity(ny);
    // per gap, per ky, in-gap edge energies
    let mut points: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(ny); n.saturating_sub(1)];
    for &k in &ky {
        let ranges = decompose(model, k, 128)?.band_ranges();
        let op = build_truncation(model, Kind::PlainEdge, l, k)?;
        spectrum.push(dense_spectrum(&op, false)?.values);
        let quarter = (op.matrix.sites() / 4).max(1) * n;
        for g in 0..n - 1 {
            let (lo, hi) = (ranges[g].1, ranges[g + 1].0);
            let mut here = Vec::new();
            if lo < hi {
                let pairs = op.window(lo, hi, true);
                for (e, v) in pairs.values.iter().zip(pairs.vectors.unwrap()) {
                    let m: f64 = v[..quarter].iter().map(|x| x.norm_sqr()).sum();
                    if m > EDGE_MASS && *e > lo && *e < hi {
                        here.push(*e);
                    }
                }
            }
            points[g].push(here);
        }
        bulk.push(ranges);
    }
    let mut branches = Vec::new();
    for (g, cols) in points.iter().enumerate() {
        for chain in link_columns(cols, &bulk, g)? {
            let (i0, es) = chain;
            let len = es.len();
            let ks: Vec<f64> = (0..len).map(|s| TAU * (i0 + s) as f64 / ny as f64).collect();
            let end_side = |idx: usize, e: f64| {
                let r = &bulk[idx % ny];
                if e - r[g].1 < r[g + 1].0 - e {
                    -1
                } else {
                    1
                }
            };
            let closed = len >= ny;
            let (s0, s1) = (end_side(i0, es[0]), end_side(i0 + len - 1, es[len - 1]));
            let chirality = if closed || s0 == s1 { 0 } else { s1 };
            let (k_minus, k_plus) = match (s0, s1) {
                (-1, 1) => (ks[0], ks[len - 1]),
                (1, -1) => (ks[len - 1], ks[0]),
                _ => (f64::NAN, f64::NAN),
            };
            branches.push(EdgeBranch { id: branches.len(), gap: g + 1, ky: ks, e: es, chirality, k_minus, k_plus });
        }
    }
    Ok(EdgeDispersion { l, ky, bulk, spectrum, branches })
}

/// Links per-column point sets into chains `(first column, energies)`,
/// joining across the periodic seam.
fn link_columns(cols: &[Vec<f64>], bulk: &[Vec<(f64, f64)>], g: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let ny = cols.len();
    let width = bulk.iter().map(|r| r[g + 1].0 - r[g].1).fold(f64::INFINITY, f64::min).max(0.0);
    let tol = (0.2 * width).max(1e-3);
    // next[i][a] = index in column i+1 (mod ny) continuing point a of column i
    let mut next: Vec<Vec<Option<usize>>> = Vec::with_capacity(ny);
    let mut has_prev: Vec<Vec<bool>> = cols.iter().map(|c| vec![false; c.len()]).collect();
    for i in 0..ny {
        let j = (i + 1) % ny;
        let mut row = vec![None; cols[i].len()];
        for (a, &e) in cols[i].iter().enumerate() {
            let cands: Vec<usize> = (0..cols[j].len()).filter(|&b| (cols[j][b] - e).abs() < tol).collect();
            if cands.len() > 1 {
                return Err(Error::BranchGrouping(format!("ambiguous continuation at column {i}, E = {e}")));
            }
            if let Some(&b) = cands.first() {
                if has_prev[j][b] {
                    return Err(Error::BranchGrouping(format!("two branches merge at column {j}")));
                }
                has_prev[j][b] = true;
                row[a] = Some(b);
            }
        }
        next.push(row);
    }
    let mut visited: Vec<Vec<bool>> = cols.iter().map(|c| vec![false; c.len()]).collect();
    let mut chains = Vec::new();
    let walk = |i0: usize, a0: usize, visited: &mut Vec<Vec<bool>>| {
        let (mut i, mut a) = (i0, a0);
        let mut es = Vec::new();
        loop {
            visited[i][a] = true;
            es.push(cols[i][a]);
            match next[i][a] {
                Some(b) if !visited[(i + 1) % ny][b] => {
                    i = (i + 1) % ny;
                    a = b;
                }
                _ => break,
            }
        }
        es
    };
    for i in 0..ny {
        for a in 0..cols[i].len() {
            if !has_prev[i][a] && !visited[i][a] {
                chains.push((i, walk(i, a, &mut visited)));
            }
        }
    }
    // closed loops
    for i in 0..ny {
        for a in 0..cols[i].len() {
            if !visited[i][a] {
                chains.push((i, walk(i, a, &mut visited)));
            }
        }
    }
    Ok(chains)
}
