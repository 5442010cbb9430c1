//! Pit growth mathematics: elliptic area models, lifetime normalization,
//! analysis series, and the three-phase piecewise-linear fit.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnalysisSeries, DriveMeta, PitTrack};

fn non_negative(name: &'static str, x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be non-negative, got {x}")))
    }
}

/// Area of the ellipse with full axes `a` (axial) and `b` (tangential).
pub fn ellipse_area(a: f64, b: f64) -> Result<f64> {
    non_negative("axial length", a)?;
    non_negative("tangential length", b)?;
    Ok(FRAC_PI_4 * a * b)
}

/// Area of a young, still circular pit of diameter `b`.
pub fn initial_circle_area(b: f64) -> Result<f64> {
    non_negative("tangential length", b)?;
    Ok(FRAC_PI_4 * b * b)
}

/// Area once the axial extent is pinned by the ball geometry; `c` plays the
/// role of the axial semi-axis.
pub fn late_stage_area(b: f64, c: f64) -> Result<f64> {
    non_negative("tangential length", b)?;
    if !(c > 0.0) {
        return Err(Error::invalid("ball constant", format!("must be positive, got {c}")));
    }
    Ok(FRAC_PI_2 * b * c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallConstant {
    pub c_mm: f64,
    /// False when the axial series was still clearly growing at the end.
    pub saturated: bool,
}

/// Estimates the ball-dependent constant as half the largest observed axial
/// length.
pub fn fit_ball_constant(track: &PitTrack) -> Result<BallConstant> {
    let a: Vec<f64> = track.observations.iter().map(|o| o.axial_length_mm).collect();
    if a.len() < 3 {
        return Err(Error::TooFewPoints { need: 3, got: a.len() });
    }
    let max = a.iter().copied().fold(0.0, f64::max);
    let n = a.len();
    let tol = 0.05 * max;
    let growing = a[n - 1] - a[n - 2] > tol && a[n - 2] - a[n - 3] > tol;
    Ok(BallConstant {
        c_mm: max / 2.0,
        saturated: !growing,
    })
}

/// Fraction of revolutions-to-failure reached at each drive. Drives after
/// the failure drive map above 1.
pub fn normalize_lifetime(drives: &[DriveMeta], failure_drive: u32) -> Result<BTreeMap<u32, f64>> {
    let end = drives
        .iter()
        .find(|d| d.drive_index == failure_drive)
        .ok_or(Error::MissingDrive(failure_drive))?
        .cumulative_revolutions;
    if end == 0 {
        return Err(Error::invalid("failure drive", "zero cumulative revolutions"));
    }
    Ok(drives
        .iter()
        .map(|d| (d.drive_index, d.cumulative_revolutions as f64 / end as f64))
        .collect())
}

/// Drives inside [0, 1] with strictly increasing normalized time; of drives
/// sharing a time only the last is kept.
fn grid(life: &BTreeMap<u32, f64>) -> Vec<(u32, f64)> {
    let mut out: Vec<(u32, f64)> = Vec::new();
    for (&d, &t) in life {
        if t > 1.0 {
            break;
        }
        match out.last_mut() {
            Some(last) if last.1 == t => *last = (d, t),
            _ => out.push((d, t)),
        }
    }
    out
}

/// Number of pits born at or before each drive, counted by physical origin
/// (merged tracks included).
pub fn count_series(
    tracks: &[PitTrack],
    drives: &[DriveMeta],
    failure_drive: u32,
) -> Result<AnalysisSeries> {
    let life = normalize_lifetime(drives, failure_drive)?;
    let mut births: Vec<u32> = tracks.iter().map(|t| t.birth_drive).collect();
    births.sort_unstable();
    let mut s = AnalysisSeries::new("pit_count", "count");
    for (d, t) in grid(&life) {
        let n = births.partition_point(|&b| b <= d);
        s.push(t, n as f64);
    }
    Ok(s)
}

/// Summed latest-known area of the surviving tracks at each drive. A merged
/// track stops contributing from its merge drive on.
pub fn total_area_series(
    tracks: &[PitTrack],
    drives: &[DriveMeta],
    failure_drive: u32,
) -> Result<AnalysisSeries> {
    let life = normalize_lifetime(drives, failure_drive)?;
    let mut s = AnalysisSeries::new("total_area", "mm^2");
    for (d, t) in grid(&life) {
        let total: f64 = tracks
            .iter()
            .filter(|tr| tr.merged_at.is_none_or(|m| d < m))
            .filter_map(|tr| tr.latest_at(d))
            .map(|o| o.area_mm2)
            .sum();
        s.push(t, total);
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Area,
    Axial,
    Tangential,
}

impl Quantity {
    pub fn unit(self) -> &'static str {
        match self {
            Quantity::Area => "mm^2",
            Quantity::Axial | Quantity::Tangential => "mm",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Area => "area",
            Quantity::Axial => "axial",
            Quantity::Tangential => "tangential",
        }
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "area" => Ok(Quantity::Area),
            "axial" => Ok(Quantity::Axial),
            "tangential" => Ok(Quantity::Tangential),
            other => Err(Error::UnknownQuantity(other.to_string())),
        }
    }
}

/// One size quantity of a single pit over normalized lifetime.
pub fn per_pit_series(
    track: &PitTrack,
    quantity: Quantity,
    drives: &[DriveMeta],
    failure_drive: u32,
) -> Result<AnalysisSeries> {
    if track.observations.is_empty() {
        return Err(Error::Empty("track"));
    }
    let life = normalize_lifetime(drives, failure_drive)?;
    let mut s = AnalysisSeries::new(
        format!("pit_{}_{}", track.track_id, quantity.name()),
        quantity.unit(),
    );
    for o in &track.observations {
        let Some(&t) = life.get(&o.drive_index) else {
            return Err(Error::MissingDrive(o.drive_index));
        };
        if t > 1.0 {
            break;
        }
        let v = match quantity {
            Quantity::Area => o.area_mm2,
            Quantity::Axial => o.axial_length_mm,
            Quantity::Tangential => o.tangential_length_mm,
        };
        s.push(t, v);
    }
    Ok(s)
}

/// Guard against division by zero for empty-area observations, in mm².
pub const APPROX_ERROR_EPS_MM2: f64 = 1e-9;

/// Relative error of the elliptic area model against the measured area, per
/// observation.
pub fn approximation_error_series(
    track: &PitTrack,
    life: &BTreeMap<u32, f64>,
) -> Result<AnalysisSeries> {
    let mut s = AnalysisSeries::new(format!("pit_{}_ellipse_error", track.track_id), "ratio");
    for o in &track.observations {
        let Some(&t) = life.get(&o.drive_index) else {
            return Err(Error::MissingDrive(o.drive_index));
        };
        if t > 1.0 {
            break;
        }
        let model = ellipse_area(o.axial_length_mm, o.tangential_length_mm)?;
        s.push(t, (o.area_mm2 - model).abs() / o.area_mm2.max(APPROX_ERROR_EPS_MM2));
    }
    Ok(s)
}

/// Continuous three-segment piecewise-linear fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    pub breakpoints: (f64, f64),
    pub intercept: f64,
    pub segment_slopes: [f64; 3],
    pub sse: f64,
    /// SSE of the best single straight line, for comparison.
    pub line_sse: f64,
    /// False when the three slopes differ by less than 10 % of the largest.
    pub distinct_phases: bool,
}

impl PhaseFit {
    pub fn evaluate(&self, t: f64) -> f64 {
        let (t1, t2) = self.breakpoints;
        let [s1, s2, s3] = self.segment_slopes;
        self.intercept + s1 * t + (s2 - s1) * (t - t1).max(0.0) + (s3 - s2) * (t - t2).max(0.0)
    }
}

pub const MIN_PHASE_POINTS: usize = 8;
pub const MIN_PHASE_GAP: f64 = 0.05;

/// Least squares via thin QR; returns coefficients and SSE.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, f64) {
    let qr = x.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let qty = q.transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .unwrap_or_else(|| DVector::zeros(x.ncols()));
    let resid = y - x * &beta;
    (beta, resid.norm_squared())
}

/// Exhaustive search over breakpoint pairs on the sample grid.
///
/// Each segment needs at least two samples (`t <= t1`, `t1 < t <= t2`,
/// `t > t2`) and the breakpoints must be at least 0.05 apart.
pub fn fit_three_phase(series: &AnalysisSeries) -> Result<PhaseFit> {
    let n = series.len();
    if n < MIN_PHASE_POINTS {
        return Err(Error::TooFewPoints { need: MIN_PHASE_POINTS, got: n });
    }
    let t = series.times();
    if t.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::invalid("series", "times outside [0, 1]"));
    }
    let y = DVector::from_vec(series.values());

    let line = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { t[r] });
    let (_, line_sse) = least_squares(&line, &y);

    let mut best: Option<(f64, usize, usize, DVector<f64>)> = None;
    for i in 1..n {
        for j in i + 2..n.saturating_sub(2) {
            if t[j] - t[i] < MIN_PHASE_GAP - 1e-12 {
                continue;
            }
            let (t1, t2) = (t[i], t[j]);
            let x = DMatrix::from_fn(n, 4, |r, c| match c {
                0 => 1.0,
                1 => t[r],
                2 => (t[r] - t1).max(0.0),
                _ => (t[r] - t2).max(0.0),
            });
            let (beta, sse) = least_squares(&x, &y);
            if best.as_ref().is_none_or(|b| sse < b.0) {
                best = Some((sse, i, j, beta));
            }
        }
    }
    let Some((sse, i, j, beta)) = best else {
        return Err(Error::invalid("series", "no admissible breakpoint pair"));
    };
    let slopes = [beta[1], beta[1] + beta[2], beta[1] + beta[2] + beta[3]];
    let largest = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let spread = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - slopes.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PhaseFit {
        breakpoints: (t[i], t[j]),
        intercept: beta[0],
        segment_slopes: slopes,
        // The 4-parameter model nests the line, so this only trims roundoff.
        sse: sse.min(line_sse),
        line_sse,
        distinct_phases: largest > 0.0 && spread >= 0.1 * largest,
    })
}

/// Linear-interpolation quantile of sorted data (`p` in [0, 1]).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeSummary {
    /// Observed failure revolutions over nominal life, per spindle id.
    pub ratios: Vec<(String, f64)>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Distribution of observed lifetimes relative to the nominal life. Quartiles
/// interpolate linearly between order statistics.
pub fn lifetime_stats(
    observed_failures: &[(String, f64)],
    l10_revolutions: &[(String, f64)],
) -> Result<LifetimeSummary> {
    if observed_failures.is_empty() || l10_revolutions.is_empty() {
        return Err(Error::Empty("lifetimes"));
    }
    let nominal: BTreeMap<&str, f64> = l10_revolutions
        .iter()
        .map(|(id, l)| (id.as_str(), *l))
        .collect();
    if nominal.len() != observed_failures.len() {
        return Err(Error::IdMismatch(format!(
            "{} observed, {} nominal",
            observed_failures.len(),
            nominal.len()
        )));
    }
    let ratios = observed_failures
        .iter()
        .map(|(id, f)| {
            nominal
                .get(id.as_str())
                .map(|l| (id.clone(), f / l))
                .ok_or_else(|| Error::IdMismatch(format!("no nominal life for `{id}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sorted: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    sorted.sort_by(f64::total_cmp);
    Ok(LifetimeSummary {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FrameRef, PitObservation, SurfaceCoord};
    use chrono::{DateTime, Utc};
    use std::f64::consts::PI;

    fn obs(drive: u32, a: f64, b: f64, area: f64) -> PitObservation {
        PitObservation {
            drive_index: drive,
            frame: FrameRef::new(drive, 0, 22.5, 10, 10),
            centroid: SurfaceCoord::new(0.0, 0.0),
            axial_length_mm: a,
            tangential_length_mm: b,
            area_mm2: area,
            pixel_count: 1,
        }
    }

    fn track(id: u32, rows: &[(u32, f64, f64, f64)]) -> PitTrack {
        let mut t = PitTrack::new(id, obs(rows[0].0, rows[0].1, rows[0].2, rows[0].3));
        for &(d, a, b, area) in &rows[1..] {
            t.observations.push(obs(d, a, b, area));
        }
        t
    }

    fn drives(n: u32) -> Vec<DriveMeta> {
        let t0 = DateTime::<Utc>::from_timestamp(0, 0).unwrap();
        (0..=n)
            .map(|i| DriveMeta {
                drive_index: i,
                wall_time: t0,
                cumulative_revolutions: i as u64 * 96_000,
                flange_temperature_c: None,
                frame_count: 16,
            })
            .collect()
    }

    #[test]
    fn area_formulas() {
        assert!((ellipse_area(1.0, 2.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert_eq!(ellipse_area(0.0, 3.0).unwrap(), 0.0);
        assert!((initial_circle_area(2.0).unwrap() - PI).abs() < 1e-15);
        assert_eq!(initial_circle_area(0.0).unwrap(), 0.0);
        assert!((initial_circle_area(1.0).unwrap() - PI / 4.0).abs() < 1e-15);
        assert!((late_stage_area(4.0, 0.5).unwrap() - PI).abs() < 1e-15);
        assert_eq!(late_stage_area(0.0, 0.5).unwrap(), 0.0);
        let e = ellipse_area(0.4, 3.0).unwrap();
        assert!((late_stage_area(3.0, 0.2).unwrap() - e).abs() < 1e-15);
        assert!((e - 0.3 * PI).abs() < 1e-15);
    }

    #[test]
    fn area_formulas_reject_bad_input() {
        assert!(ellipse_area(-1.0, 1.0).is_err());
        assert!(initial_circle_area(-0.1).is_err());
        assert!(late_stage_area(1.0, 0.0).is_err());
        assert!(late_stage_area(-1.0, 1.0).is_err());
    }

    #[test]
    fn ball_constant() {
        let t = track(0, &[(1, 0.1, 0.1, 0.0), (2, 0.35, 0.2, 0.0), (3, 0.4, 0.4, 0.0), (4, 0.4, 0.6, 0.0)]);
        let c = fit_ball_constant(&t).unwrap();
        assert!((c.c_mm - 0.2).abs() < 1e-15);
        assert!(c.saturated);

        let t = track(0, &[(1, 0.1, 0.1, 0.0), (2, 0.1, 0.2, 0.0), (3, 0.1, 0.3, 0.0)]);
        assert!((fit_ball_constant(&t).unwrap().c_mm - 0.05).abs() < 1e-15);

        let t = track(0, &[(1, 0.2, 0.1, 0.0), (2, 0.4, 0.2, 0.0), (3, 0.6, 0.3, 0.0)]);
        let c = fit_ball_constant(&t).unwrap();
        assert!((c.c_mm - 0.3).abs() < 1e-15);
        assert!(!c.saturated);

        let t = track(0, &[(1, 0.2, 0.1, 0.0), (2, 0.4, 0.2, 0.0)]);
        assert!(matches!(fit_ball_constant(&t), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn lifetime_normalization() {
        let life = normalize_lifetime(&drives(120), 120).unwrap();
        assert_eq!(life[&60], 0.5);
        assert_eq!(life[&0], 0.0);
        assert_eq!(life[&120], 1.0);
        assert!(matches!(normalize_lifetime(&drives(10), 11), Err(Error::MissingDrive(11))));
    }

    #[test]
    fn counts_by_birth() {
        let d = drives(100);
        let tracks = vec![
            track(0, &[(30, 0.1, 0.1, 0.01)]),
            track(1, &[(70, 0.1, 0.1, 0.01)]),
            track(2, &[(85, 0.1, 0.1, 0.01)]),
        ];
        let s = count_series(&tracks, &d, 100).unwrap();
        assert_eq!(s.value_at(0.75), Some(2.0));
        assert_eq!(s.len(), 101);
        let empty = count_series(&[], &d, 100).unwrap();
        assert!(empty.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn total_area_holds_last_value_and_drops_merged() {
        let d = drives(10);
        let a = track(0, &[(2, 0.1, 0.1, 1.0), (4, 0.1, 0.1, 1.0)]);
        let mut b = track(1, &[(3, 0.1, 0.1, 2.5)]);
        let s = total_area_series(&[a.clone(), b.clone()], &d, 10).unwrap();
        assert_eq!(s.value_at(0.1), Some(0.0));
        assert_eq!(s.value_at(0.3), Some(3.5));
        // b has no observation after drive 3: its area is carried forward.
        assert_eq!(s.value_at(0.9), Some(3.5));
        b.merged_into = Some(0);
        b.merged_at = Some(6);
        let s = total_area_series(&[a, b], &d, 10).unwrap();
        assert_eq!(s.value_at(0.5), Some(3.5));
        assert_eq!(s.value_at(0.6), Some(1.0));
    }

    #[test]
    fn per_pit_projection() {
        let d = drives(10);
        let t = track(4, &[(2, 0.1, 0.2, 0.01), (5, 0.15, 0.5, 0.05), (9, 0.2, 0.9, 0.1)]);
        let s = per_pit_series(&t, Quantity::Area, &d, 10).unwrap();
        assert_eq!(s.len(), 3);
        let s = per_pit_series(&t, "tangential".parse().unwrap(), &d, 10).unwrap();
        assert_eq!(s.values(), vec![0.2, 0.5, 0.9]);
        assert_eq!(s.times(), vec![0.2, 0.5, 0.9]);
        assert!(matches!("volume".parse::<Quantity>(), Err(Error::UnknownQuantity(_))));
    }

    #[test]
    fn approximation_error_cases() {
        let d = drives(4);
        let life = normalize_lifetime(&d, 4).unwrap();
        // Rectangle: measured area equals a*b.
        let t = track(0, &[(1, 0.2, 1.0, 0.2), (2, 0.0, 0.0, 0.0)]);
        let s = approximation_error_series(&t, &life).unwrap();
        assert!((s.points[0].value - (1.0 - PI / 4.0)).abs() < 1e-12);
        assert!(s.points[1].value.is_finite());
        assert_eq!(s.points[1].value, 0.0);
        // Single pixel: a = b = s, area = s^2.
        let px = 0.01;
        let t = track(0, &[(1, px, px, px * px)]);
        let s = approximation_error_series(&t, &life).unwrap();
        assert!((s.points[0].value - (1.0 - PI / 4.0)).abs() < 1e-9);
    }

    fn series(points: &[(f64, f64)]) -> AnalysisSeries {
        let mut s = AnalysisSeries::new("s", "u");
        for &(t, v) in points {
            s.push(t, v);
        }
        s
    }

    /// Analytic continuous piecewise-linear function.
    fn piecewise(t: f64, t1: f64, t2: f64, s: [f64; 3]) -> f64 {
        if t <= t1 {
            s[0] * t
        } else if t <= t2 {
            s[0] * t1 + s[1] * (t - t1)
        } else {
            s[0] * t1 + s[1] * (t2 - t1) + s[2] * (t - t2)
        }
    }

    #[test]
    fn noiseless_three_phase_recovered() {
        let pts: Vec<_> = (0..=100)
            .map(|i| {
                let t = i as f64 / 100.0;
                (t, piecewise(t, 0.6, 0.8, [0.1, 1.0, 5.0]))
            })
            .collect();
        let fit = fit_three_phase(&series(&pts)).unwrap();
        assert_eq!(fit.breakpoints, (0.6, 0.8));
        for (got, want) in fit.segment_slopes.iter().zip([0.1, 1.0, 5.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!(fit.sse < 1e-20);
        assert!(fit.distinct_phases);
        assert!((fit.evaluate(0.9) - piecewise(0.9, 0.6, 0.8, [0.1, 1.0, 5.0])).abs() < 1e-9);
    }

    #[test]
    fn straight_line_has_no_distinct_phases() {
        let pts: Vec<_> = (0..=20).map(|i| (i as f64 / 20.0, 3.0 * i as f64 / 20.0 + 1.0)).collect();
        let fit = fit_three_phase(&series(&pts)).unwrap();
        assert!(fit.sse < 1e-20);
        assert!(!fit.distinct_phases);
        for s in fit.segment_slopes {
            assert!((s - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_points() {
        let pts: Vec<_> = (0..7).map(|i| (i as f64 / 10.0, 0.0)).collect();
        assert!(matches!(fit_three_phase(&series(&pts)), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn quartiles() {
        let obs = vec![("a".to_string(), 0.5), ("b".to_string(), 1.2), ("c".to_string(), 3.0)];
        let l10 = vec![("c".to_string(), 1.0), ("a".to_string(), 1.0), ("b".to_string(), 1.0)];
        let s = lifetime_stats(&obs, &l10).unwrap();
        assert_eq!(s.median, 1.2);
        assert_eq!((s.min, s.max), (0.5, 3.0));
        assert!((s.q1 - 0.85).abs() < 1e-12);
        assert!((s.q3 - 2.1).abs() < 1e-12);

        let obs = vec![("a".to_string(), 12.0 * 15.625e6)];
        let l10 = vec![("a".to_string(), 15.625e6)];
        assert!((lifetime_stats(&obs, &l10).unwrap().median - 12.0).abs() < 1e-12);

        let l10 = vec![("z".to_string(), 1.0)];
        assert!(matches!(lifetime_stats(&obs, &l10), Err(Error::IdMismatch(_))));
    }
}
