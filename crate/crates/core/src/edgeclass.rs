//! Side classification of Fourier-side eigenfunctions.
//!
//! A root of the monodromy condition belongs to the edge part (`y ≥ 0`) or
//! to its complement (`y ≤ −1`) according to where the Fourier mass of its
//! eigenfunction sits.

use crate::discrete::{build_truncation, Kind};
use crate::model::BlochModel;
use crate::monodromy::{eigenfunction, exact_spectrum, EigenFunction, SpectralPoint};
use crate::{Error, Result, C64};
use nalgebra::DVector;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    EdgePlus,
    EdgeMinus,
    Ambiguous,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::EdgePlus => "edge_plus",
            Side::EdgeMinus => "edge_minus",
            Side::Ambiguous => "ambiguous",
        }
    }
}

/// Which Fourier factor represents site `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConvention {
    /// `e^{−iy·kx}`, the convention of [`crate::discrete`].
    MinusExponent,
    PlusExponent,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SideVerdict {
    pub side: Side,
    pub mass_nonneg: f64,
    pub mass_neg: f64,
    pub modes_computed: usize,
}

pub const PLUS_THRESHOLD: f64 = 0.99;
pub const MINUS_THRESHOLD: f64 = 0.01;

/// Normalized `|ψ̂_y|²` for `y ∈ [−n_modes, n_modes]`, index `y + n_modes`.
pub fn mode_masses(values: &[DVector<C64>], n_modes: usize, conv: ModeConvention) -> Result<Vec<f64>> {
    let nx = values.len();
    if nx < 4 * n_modes || n_modes == 0 {
        return Err(Error::InvalidArgument(format!("{nx} samples cannot resolve {n_modes} modes")));
    }
    let comps = values[0].len();
    let fft = FftPlanner::new().plan_fft_forward(nx);
    let mut mass = vec![0.0; 2 * n_modes + 1];
    let mut buf = vec![C64::new(0.0, 0.0); nx];
    for c in 0..comps {
        buf.iter_mut().zip(values).for_each(|(b, v)| *b = v[c]);
        fft.process(&mut buf);
        // buf[m] = Σ_i ψ(k_i) e^{−i m k_i}
        for (idx, slot) in mass.iter_mut().enumerate() {
            let y = idx as i64 - n_modes as i64;
            let m = match conv {
                ModeConvention::MinusExponent => -y,
                ModeConvention::PlusExponent => y,
            };
            *slot += buf[m.rem_euclid(nx as i64) as usize].norm_sqr();
        }
    }
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("zero eigenfunction".into()));
    }
    mass.iter_mut().for_each(|m| *m /= total);
    Ok(mass)
}

pub fn classify(values: &[DVector<C64>], n_modes: usize, conv: ModeConvention) -> Result<SideVerdict> {
    let mass = mode_masses(values, n_modes, conv)?;
    let outer = n_modes.div_ceil(10);
    let tail: f64 = mass[..outer].iter().chain(&mass[mass.len() - outer..]).sum();
    if tail > 1e-4 {
        return Err(Error::InsufficientResolution(tail));
    }
    let mass_neg: f64 = mass[..n_modes].iter().sum();
    let mass_nonneg: f64 = mass[n_modes..].iter().sum();
    let side = if mass_nonneg > PLUS_THRESHOLD {
        Side::EdgePlus
    } else if mass_nonneg < MINUS_THRESHOLD {
        Side::EdgeMinus
    } else {
        Side::Ambiguous
    };
    Ok(SideVerdict { side, mass_nonneg, mass_neg, modes_computed: 2 * n_modes + 1 })
}

/// Largest wrong-side coefficient `|ψ̂_y|` of each family member, with the
/// wrong side taken as the minority class.
pub fn decay_profile(family: &[EigenFunction], n_modes: usize, conv: ModeConvention) -> Result<Vec<(f64, f64)>> {
    family
        .iter()
        .map(|f| {
            let mass = mode_masses(&f.values, n_modes, conv)?;
            let (neg, nonneg) = mass.split_at(n_modes);
            let wrong = if nonneg.iter().sum::<f64>() >= 0.5 { neg } else { nonneg };
            Ok((f.e, wrong.iter().fold(0.0f64, |a, &m| a.max(m)).sqrt()))
        })
        .collect()
}

/// Verdicts for a list of roots at one `ky`; `None` where the
/// eigenfunction is unavailable (degenerate monodromy) or unresolved.
pub fn classify_points(model: &BlochModel, points: &[SpectralPoint], nx: usize, n_modes: usize) -> Result<Vec<Option<SideVerdict>>> {
    use rayon::prelude::*;
    points
        .par_iter()
        .map(|p| match eigenfunction(model, p, nx) {
            Ok(f) => match classify(&f.values, n_modes, ModeConvention::MinusExponent) {
                Ok(v) => Ok(Some(v)),
                Err(Error::InsufficientResolution(_)) => Ok(None),
                Err(e) => Err(e),
            },
            Err(Error::DegenerateMonodromy(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Side from membership in the truncated spectra: the nearer of the two
/// candidate lists, if within `tol`.
pub fn membership_side(e: f64, plus: &[f64], minus: &[f64], tol: f64) -> Side {
    let near = |s: &[f64]| s.iter().map(|x| (x - e).abs()).fold(f64::INFINITY, f64::min);
    let (dp, dm) = (near(plus), near(minus));
    if dp < tol && dp < dm {
        Side::EdgePlus
    } else if dm < tol && dm < dp {
        Side::EdgeMinus
    } else {
        Side::Ambiguous
    }
}

/// Picks the convention under which classified roots agree with
/// membership in the `y ≥ 0` truncation.
pub fn calibrate_convention(model: &BlochModel, ky: f64, window: (f64, f64), l: usize) -> Result<ModeConvention> {
    let exact = exact_spectrum(model, ky, window, None)?;
    let plus: Vec<f64> = build_truncation(model, Kind::ModulatedEdge, l, ky)?.window(window.0 - 1.0, window.1 + 1.0, false).values;
    let minus: Vec<f64> = build_truncation(model, Kind::ModulatedEdgeMinus, l, ky)?.window(window.0 - 1.0, window.1 + 1.0, false).values;
    let mut score = [0usize; 2];
    for p in &exact.points {
        let truth = membership_side(p.e, &plus, &minus, 1e-6);
        if truth == Side::Ambiguous {
            continue;
        }
        let f = match eigenfunction(model, p, 2048) {
            Ok(f) => f,
            Err(Error::DegenerateMonodromy(_)) => continue,
            Err(e) => return Err(e),
        };
        for (slot, conv) in [ModeConvention::MinusExponent, ModeConvention::PlusExponent].into_iter().enumerate() {
            if classify(&f.values, 512, conv)?.side == truth {
                score[slot] += 1;
            }
        }
    }
    match score[0].cmp(&score[1]) {
        std::cmp::Ordering::Greater => Ok(ModeConvention::MinusExponent),
        std::cmp::Ordering::Less => Ok(ModeConvention::PlusExponent),
        std::cmp::Ordering::Equal => Err(Error::InvalidArgument(format!("calibration undecided: {score:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_harper;
    use crate::TAU;

    fn sampled(nx: usize, f: impl Fn(f64) -> C64) -> Vec<DVector<C64>> {
        (0..nx).map(|i| DVector::from_element(1, f(TAU * i as f64 / nx as f64))).collect()
    }

    #[test]
    fn single_mode_is_edge_plus() {
        let v = sampled(64, |k| C64::from_polar(1.0 / TAU.sqrt(), -2.0 * k));
        let s = classify(&v, 16, ModeConvention::MinusExponent).unwrap();
        assert_eq!(s.side, Side::EdgePlus);
        assert!((s.mass_nonneg - 1.0).abs() < 1e-12);
        assert!((s.mass_nonneg + s.mass_neg - 1.0).abs() < 1e-12);
        let flipped = classify(&v, 16, ModeConvention::PlusExponent).unwrap();
        assert_eq!(flipped.side, Side::EdgeMinus);
    }

    #[test]
    fn split_mass_is_ambiguous() {
        let v = sampled(64, |k| C64::new(2.0 * k.cos() / (2.0 * TAU).sqrt(), 0.0));
        let s = classify(&v, 16, ModeConvention::MinusExponent).unwrap();
        assert_eq!(s.side, Side::Ambiguous);
        assert!((s.mass_nonneg - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unresolved_tail_is_rejected() {
        let v = sampled(64, |k| C64::from_polar(1.0, -15.0 * k));
        assert!(matches!(classify(&v, 16, ModeConvention::MinusExponent), Err(Error::InsufficientResolution(_))));
    }

    #[test]
    fn constant_family_has_no_wrong_side_mass() {
        let fam: Vec<EigenFunction> = (1..=4)
            .map(|m| {
                let kx: Vec<f64> = (0..256).map(|i| TAU * i as f64 / 256.0).collect();
                let values = kx.iter().map(|k| DVector::from_element(1, C64::from_polar(1.0, -(m as f64) * k))).collect();
                EigenFunction { e: 2.0 * m as f64, ky: 0.0, kx, values }
            })
            .collect();
        for (_, w) in decay_profile(&fam, 64, ModeConvention::MinusExponent).unwrap() {
            assert!(w < 1e-14);
        }
    }

    #[test]
    fn calibration_picks_discrete_convention() {
        let m = build_harper(1, 3, 1.5).unwrap();
        assert_eq!(calibrate_convention(&m, 1.0, (20.0, 24.0), 300).unwrap(), ModeConvention::MinusExponent);
    }

    #[test]
    fn doubling_modes_keeps_verdict() {
        let m = build_harper(1, 3, 1.5).unwrap();
        let exact = exact_spectrum(&m, 1.0, (20.0, 23.0), None).unwrap();
        for p in &exact.points {
            let f = eigenfunction(&m, p, 2048).unwrap();
            let a = classify(&f.values, 256, ModeConvention::MinusExponent).unwrap();
            let b = classify(&f.values, 512, ModeConvention::MinusExponent).unwrap();
            assert_eq!(a.side, b.side);
            assert_ne!(a.side, Side::Ambiguous);
        }
    }
}
