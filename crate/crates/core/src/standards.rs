//! Service-life formulas and the scaled end-of-life criterion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DriveMeta, EolPolicy, PitTrack, Validate};

/// Fraction of the ball diameter a pit may reach at `alpha = 1`.
pub const BALL_DIAMETER_FRACTION: f64 = 0.3;

/// Catalogue correction factor for the test spindles. Not applied unless
/// requested.
pub const C_A_CORRECTION_FACTOR: f64 = 0.9;

/// Nominal life in revolutions, `(C_a / F_m)^3 * 10^6`.
pub fn nominal_life_l10(c_a_kn: f64, f_m_kn: f64) -> Result<f64> {
    if !(c_a_kn > 0.0 && c_a_kn.is_finite()) {
        return Err(Error::invalid("C_a", format!("must be positive, got {c_a_kn}")));
    }
    if !(f_m_kn > 0.0 && f_m_kn.is_finite()) {
        return Err(Error::invalid("F_m", format!("must be positive, got {f_m_kn}")));
    }
    Ok((c_a_kn / f_m_kn).powi(3) * 1e6)
}

/// Nominal life with `C_a` scaled by `factor` before cubing.
pub fn nominal_life_l10_corrected(c_a_kn: f64, f_m_kn: f64, factor: f64) -> Result<f64> {
    if !(factor > 0.0) {
        return Err(Error::invalid("correction factor", format!("must be positive, got {factor}")));
    }
    nominal_life_l10(c_a_kn * factor, f_m_kn)
}

/// Largest admissible tangential pit length, `D_w * 0.3 * alpha`.
pub fn eol_threshold(policy: &EolPolicy) -> Result<f64> {
    let v = policy.validate();
    if !v.is_valid() {
        return Err(Error::invalid("EolPolicy", v.summary()));
    }
    Ok(policy.ball_diameter_mm * BALL_DIAMETER_FRACTION * policy.alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EolVerdict {
    pub exceeded: bool,
    pub decisive_track: Option<u32>,
    /// `d_s`.
    pub max_major_axis_mm: f64,
    pub threshold_mm: f64,
    pub margin: f64,
}

/// Largest tangential length seen up to `at_drive` and the track holding it
/// (smallest id on ties).
pub fn max_major_axis(tracks: &[PitTrack], at_drive: u32) -> (f64, Option<u32>) {
    let mut best = (0.0, None);
    for t in tracks {
        for o in t.observations.iter().take_while(|o| o.drive_index <= at_drive) {
            let b = o.tangential_length_mm;
            let better = match best.1 {
                None => true,
                Some(id) => b > best.0 || (b == best.0 && t.track_id < id),
            };
            if better {
                best = (b, Some(t.track_id));
            }
        }
    }
    best
}

/// Sum of the latest tangential lengths of all surviving pits; reported
/// alongside `d_s` but never used for the verdict.
pub fn sum_of_major_axes(tracks: &[PitTrack], at_drive: u32) -> f64 {
    tracks
        .iter()
        .filter(|t| t.merged_at.is_none_or(|m| at_drive < m))
        .filter_map(|t| t.latest_at(at_drive))
        .map(|o| o.tangential_length_mm)
        .sum()
}

pub fn evaluate_eol(tracks: &[PitTrack], at_drive: u32, policy: &EolPolicy) -> Result<EolVerdict> {
    let threshold = eol_threshold(policy)?;
    let (d_s, decisive) = max_major_axis(tracks, at_drive);
    Ok(EolVerdict {
        exceeded: d_s >= threshold,
        decisive_track: decisive,
        max_major_axis_mm: d_s,
        threshold_mm: threshold,
        margin: d_s / threshold,
    })
}

/// First drive at which the criterion holds.
pub fn first_exceedance_drive(
    tracks: &[PitTrack],
    drives: &[DriveMeta],
    policy: &EolPolicy,
) -> Result<Option<u32>> {
    let threshold = eol_threshold(policy)?;
    // d_s only grows with time, so the earliest crossing over all
    // observations is the answer.
    let first = tracks
        .iter()
        .flat_map(|t| &t.observations)
        .filter(|o| o.tangential_length_mm >= threshold)
        .map(|o| o.drive_index)
        .min();
    Ok(first.and_then(|d| {
        drives
            .iter()
            .map(|m| m.drive_index)
            .filter(|&i| i >= d)
            .min()
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EolReport {
    pub threshold_mm: f64,
    pub alpha: f64,
    pub d_s_mm: f64,
    pub exceeded: bool,
    pub decisive_track: Option<u32>,
    pub first_exceedance_drive: Option<u32>,
    pub l10_revolutions: f64,
    /// Revolutions at failure (or at the last drive) over nominal life.
    pub observed_over_l10: f64,
    pub sum_of_major_axes_mm: f64,
}
