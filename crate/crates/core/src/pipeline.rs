//! End-to-end stages: measurement over a dataset, tracking, analysis and
//! the end-of-life report.

use std::collections::BTreeMap;

use image::GrayImage;
use log::info;
use serde::{Deserialize, Serialize};

use crate::curves::{
    approximation_error_series, count_series, fit_ball_constant, fit_three_phase,
    normalize_lifetime, per_pit_series, total_area_series, BallConstant, PhaseFit, Quantity,
};
use crate::error::{Error, Result};
use crate::model::{AnalysisSeries, DriveMeta, EolPolicy, FrameRef, PitObservation, PitTrack, SpindleSpec};
use crate::calib::Calibration;
use crate::segment::{build_reference, segment_drive, ReferenceMap, SegmentationParams};
use crate::standards::{
    evaluate_eol, first_exceedance_drive, nominal_life_l10, sum_of_major_axes, EolReport,
};
use crate::store::Dataset;
use crate::synth::{GroundTruth, Renderer};
use crate::track::{track_all, TrackingParams};

/// Segments drives one at a time against the drive-0 reference.
pub struct Measurer {
    reference: ReferenceMap,
    params: SegmentationParams,
    cal: Calibration,
    spec: SpindleSpec,
}

impl Measurer {
    pub fn new(
        drive0: &[(FrameRef, GrayImage)],
        params: SegmentationParams,
        cal: Calibration,
        spec: SpindleSpec,
    ) -> Result<Self> {
        let frames = drive0
            .iter()
            .map(|(f, img)| (f.frame_index, img.clone()))
            .collect();
        Ok(Measurer {
            reference: build_reference(frames, &params)?,
            params,
            cal,
            spec,
        })
    }

    pub fn measure(&self, frames: &[(FrameRef, GrayImage)]) -> Result<Vec<PitObservation>> {
        segment_drive(frames, &self.reference, &self.params, &self.cal, &self.spec)
    }
}

/// Observations of every drive after drive 0, in drive order.
pub fn measure_dataset(ds: &Dataset, params: &SegmentationParams) -> Result<Vec<PitObservation>> {
    if !ds.drives.iter().any(|m| m.drive_index == 0) {
        return Err(Error::MissingDrive(0));
    }
    let m = Measurer::new(
        &ds.load_drive(0)?,
        *params,
        ds.header.calibration,
        ds.header.spindle.clone(),
    )?;
    let mut out = Vec::new();
    for meta in ds.drives.iter().filter(|m| m.drive_index > 0) {
        let obs = m.measure(&ds.load_drive(meta.drive_index)?)?;
        info!("drive {}: {} pits", meta.drive_index, obs.len());
        out.extend(obs);
    }
    Ok(out)
}

/// Groups drive-ordered observations and runs association over them.
pub fn track_observations(
    observations: &[PitObservation],
    params: &TrackingParams,
    circumference_mm: f64,
) -> Result<Vec<PitTrack>> {
    let mut by_drive: BTreeMap<u32, Vec<PitObservation>> = BTreeMap::new();
    for o in observations {
        by_drive.entry(o.drive_index).or_default().push(o.clone());
    }
    track_all(by_drive.into_values(), params, circumference_mm)
}

/// Everything `analyze` emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub failure_drive: u32,
    pub series: BTreeMap<String, AnalysisSeries>,
    pub phase_fits: BTreeMap<String, PhaseFit>,
    /// Series that could not be fitted, with the reason.
    pub phase_fit_skipped: BTreeMap<String, String>,
    pub ball_constants: BTreeMap<u32, BallConstant>,
}

/// Series names that get a three-phase fit.
pub const FITTED_SERIES: [&str; 2] = ["pit_count", "total_area"];

pub fn analyze(drives: &[DriveMeta], tracks: &[PitTrack], failure_drive: u32) -> Result<Analysis> {
    let life = normalize_lifetime(drives, failure_drive)?;
    let mut series = BTreeMap::new();
    let mut put = |s: AnalysisSeries| {
        series.insert(s.name.clone(), s);
    };
    put(count_series(tracks, drives, failure_drive)?);
    put(total_area_series(tracks, drives, failure_drive)?);
    let mut ball_constants = BTreeMap::new();
    for t in tracks {
        for q in [Quantity::Area, Quantity::Axial, Quantity::Tangential] {
            put(per_pit_series(t, q, drives, failure_drive)?);
        }
        put(approximation_error_series(t, &life)?);
        if let Ok(c) = fit_ball_constant(t) {
            ball_constants.insert(t.track_id, c);
        }
    }
    let mut phase_fits = BTreeMap::new();
    let mut phase_fit_skipped = BTreeMap::new();
    for name in FITTED_SERIES {
        match fit_three_phase(&series[name]) {
            Ok(f) => {
                phase_fits.insert(name.to_string(), f);
            }
            Err(e) => {
                phase_fit_skipped.insert(name.to_string(), e.to_string());
            }
        }
    }
    Ok(Analysis {
        failure_drive,
        series,
        phase_fits,
        phase_fit_skipped,
        ball_constants,
    })
}

/// Verdict at the last drive plus life statistics.
pub fn eol_report(
    drives: &[DriveMeta],
    tracks: &[PitTrack],
    policy: &EolPolicy,
    spec: &SpindleSpec,
    load: &crate::model::LoadSpec,
    failure_drive: u32,
) -> Result<EolReport> {
    let last = drives.last().ok_or(Error::Empty("drives"))?.drive_index;
    let verdict = evaluate_eol(tracks, last, policy)?;
    let l10 = nominal_life_l10(spec.dynamic_load_rating_kn, load.mean_axial_load_kn)?;
    let end = drives
        .iter()
        .find(|m| m.drive_index == failure_drive)
        .ok_or(Error::MissingDrive(failure_drive))?;
    Ok(EolReport {
        threshold_mm: verdict.threshold_mm,
        alpha: policy.alpha,
        d_s_mm: verdict.max_major_axis_mm,
        exceeded: verdict.exceeded,
        decisive_track: verdict.decisive_track,
        first_exceedance_drive: first_exceedance_drive(tracks, drives, policy)?,
        l10_revolutions: l10,
        observed_over_l10: end.cumulative_revolutions as f64 / l10,
        sum_of_major_axes_mm: sum_of_major_axes(tracks, last),
    })
}

/// Result of rendering and measuring a synthetic scenario without touching
/// the disk.
#[derive(Debug, Clone)]
pub struct RoundTrip {
    pub drives: Vec<DriveMeta>,
    pub observations: Vec<PitObservation>,
    pub tracks: Vec<PitTrack>,
}

pub fn round_trip(
    truth: &GroundTruth,
    seg: &SegmentationParams,
    trk: &TrackingParams,
) -> Result<RoundTrip> {
    let renderer = Renderer::new(truth)?;
    let spec = &truth.config.spindle;
    let (drive0, meta0) = renderer.render_drive(0)?;
    let m = Measurer::new(&drive0, *seg, *renderer.calibration(), spec.clone())?;
    let mut drives = vec![meta0];
    let mut observations = Vec::new();
    for d in 1..truth.config.n_drives {
        let (frames, meta) = renderer.render_drive(d)?;
        observations.extend(m.measure(&frames)?);
        drives.push(meta);
    }
    let tracks = track_observations(&observations, trk, spec.circumference_mm())?;
    Ok(RoundTrip {
        drives,
        observations,
        tracks,
    })
}
