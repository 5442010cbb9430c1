//! Shared domain types.
//!
//! Everything here is a plain value: construction never does more than check
//! invariants, and every invariant can be checked with [`Validate::validate`].
//! Field names serialize exactly as they appear in `spindle.json`,
//! `meta.json` and `tracks.json`.

use std::f64::consts::PI;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Outcome of an invariant check. Violations are data, not errors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Validation {
    pub violations: Vec<String>,
}

impl Validation {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn require(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(msg());
        }
    }

    pub fn merge(&mut self, other: Validation) {
        self.violations.extend(other.violations);
    }

    /// Joins all violations into one line, for error messages.
    pub fn summary(&self) -> String {
        self.violations.join("; ")
    }
}

pub trait Validate {
    fn validate(&self) -> Validation;
}

/// Physical identity of a ball screw spindle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpindleSpec {
    pub id: String,
    pub diameter_mm: f64,
    pub lead_mm: f64,
    /// Ball diameter `D_w`.
    pub ball_diameter_mm: f64,
    /// Dynamic axial load rating `C_a`.
    #[serde(rename = "dynamic_load_rating_kN")]
    pub dynamic_load_rating_kn: f64,
    pub pretension_class: String,
}

impl Default for SpindleSpec {
    /// The 32 x 20 mm spindle with 3.969 mm balls used on the wear test bench.
    fn default() -> Self {
        SpindleSpec {
            id: "32x20Rx3.969".to_string(),
            diameter_mm: 32.0,
            lead_mm: 20.0,
            ball_diameter_mm: 3.969,
            dynamic_load_rating_kn: 23.6,
            pretension_class: "C3".to_string(),
        }
    }
}

impl SpindleSpec {
    pub fn circumference_mm(&self) -> f64 {
        PI * self.diameter_mm
    }
}

impl Validate for SpindleSpec {
    fn validate(&self) -> Validation {
        let mut v = Validation::default();
        let positive = [
            ("diameter_mm", self.diameter_mm),
            ("lead_mm", self.lead_mm),
            ("ball_diameter_mm", self.ball_diameter_mm),
            ("dynamic_load_rating_kN", self.dynamic_load_rating_kn),
        ];
        for (name, value) in positive {
            v.require(value > 0.0 && value.is_finite(), || {
                format!("{name} must be positive, got {value}")
            });
        }
        // Ordering is only meaningful once both lengths are valid.
        let sized = self.diameter_mm > 0.0 && self.ball_diameter_mm > 0.0;
        v.require(!sized || self.ball_diameter_mm < self.diameter_mm, || {
            format!(
                "ball_diameter_mm ({}) must be smaller than diameter_mm ({})",
                self.ball_diameter_mm, self.diameter_mm
            )
        });
        v
    }
}

/// Checks every [`SpindleSpec`] invariant and lists the ones that fail.
pub fn validate_spec(spec: &SpindleSpec) -> Validation {
    spec.validate()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    /// Mean effective axial load `F_m`.
    #[serde(rename = "mean_axial_load_kN")]
    pub mean_axial_load_kn: f64,
    pub speed_rpm: f64,
}

impl Default for LoadSpec {
    /// 0.4 x C_a of the default spindle at 400 rpm.
    fn default() -> Self {
        LoadSpec {
            mean_axial_load_kn: 9.44,
            speed_rpm: 400.0,
        }
    }
}

impl Validate for LoadSpec {
    fn validate(&self) -> Validation {
        let mut v = Validation::default();
        v.require(self.mean_axial_load_kn > 0.0, || {
            format!("mean_axial_load_kN must be positive, got {}", self.mean_axial_load_kn)
        });
        v.require(self.speed_rpm > 0.0, || {
            format!("speed_rpm must be positive, got {}", self.speed_rpm)
        });
        v
    }
}

/// Metadata of one camera drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveMeta {
    pub drive_index: u32,
    pub wall_time: DateTime<Utc>,
    pub cumulative_revolutions: u64,
    #[serde(rename = "flange_temperature_C", default)]
    pub flange_temperature_c: Option<f64>,
    pub frame_count: u32,
}

impl Validate for [DriveMeta] {
    fn validate(&self) -> Validation {
        let mut v = Validation::default();
        for pair in self.windows(2) {
            v.require(pair[1].drive_index > pair[0].drive_index, || {
                format!(
                    "drive_index {} follows {}",
                    pair[1].drive_index, pair[0].drive_index
                )
            });
            v.require(
                pair[1].cumulative_revolutions >= pair[0].cumulative_revolutions,
                || {
                    format!(
                        "cumulative_revolutions decrease at drive {}",
                        pair[1].drive_index
                    )
                },
            );
        }
        v
    }
}

/// One frame of one camera drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub drive_index: u32,
    pub frame_index: u32,
    pub rotation_step_deg: f64,
    pub width_px: u32,
    pub height_px: u32,
}

impl FrameRef {
    pub fn new(
        drive_index: u32,
        frame_index: u32,
        angular_step_deg: f64,
        width_px: u32,
        height_px: u32,
    ) -> Self {
        FrameRef {
            drive_index,
            frame_index,
            rotation_step_deg: (frame_index as f64 * angular_step_deg).rem_euclid(360.0),
            width_px,
            height_px,
        }
    }
}

impl Validate for FrameRef {
    fn validate(&self) -> Validation {
        let mut v = Validation::default();
        v.require(self.width_px > 0 && self.height_px > 0, || {
            format!("frame size {}x{} is empty", self.width_px, self.height_px)
        });
        v.require((0.0..360.0).contains(&self.rotation_step_deg), || {
            format!("rotation_step_deg {} outside [0, 360)", self.rotation_step_deg)
        });
        v
    }
}

/// Position on the unwrapped spindle surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCoord {
    pub axial_mm: f64,
    pub tangential_mm: f64,
}

impl SurfaceCoord {
    pub fn new(axial_mm: f64, tangential_mm: f64) -> Self {
        SurfaceCoord {
            axial_mm,
            tangential_mm,
        }
    }

    /// Euclidean distance with the tangential component wrapped around the
    /// circumference.
    pub fn distance(&self, other: &SurfaceCoord, circumference_mm: f64) -> f64 {
        let da = self.axial_mm - other.axial_mm;
        let mut dt = (self.tangential_mm - other.tangential_mm).rem_euclid(circumference_mm);
        if dt > circumference_mm / 2.0 {
            dt = circumference_mm - dt;
        }
        da.hypot(dt)
    }
}

/// One pit measured in one frame of one drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitObservation {
    pub drive_index: u32,
    pub frame: FrameRef,
    pub centroid: SurfaceCoord,
    /// Extent along the spindle axis, `a`.
    pub axial_length_mm: f64,
    /// Extent along the raceway, `b`.
    pub tangential_length_mm: f64,
    pub area_mm2: f64,
    pub pixel_count: u64,
}

impl Validate for PitObservation {
    fn validate(&self) -> Validation {
        let mut v = Validation::default();
        v.require(
            self.axial_length_mm >= 0.0
                && self.tangential_length_mm >= 0.0
                && self.area_mm2 >= 0.0,
            || "lengths and area must be non-negative".to_string(),
        );
        if self.pixel_count > 0 {
            let bound = self.axial_length_mm * self.tangential_length_mm;
            v.require(self.area_mm2 <= bound * (1.0 + 1e-12), || {
                format!("area {} exceeds bounding box {}", self.area_mm2, bound)
            });
        }
        v
    }
}

/// A pit's identity and its observation history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitTrack {
    pub track_id: u32,
    pub birth_drive: u32,
    /// Set when this pit coalesced into an older one.
    pub merged_into: Option<u32>,
    /// Drive at which the coalescence was detected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_at: Option<u32>,
    pub observations: Vec<PitObservation>,
}

impl PitTrack {
    pub fn new(track_id: u32, first: PitObservation) -> Self {
        PitTrack {
            track_id,
            birth_drive: first.drive_index,
            merged_into: None,
            merged_at: None,
            observations: vec![first],
        }
    }

    pub fn last(&self) -> &PitObservation {
        self.observations
            .last()
            .expect("tracks are created with one observation")
    }

    pub fn is_alive(&self) -> bool {
        self.merged_into.is_none()
    }

    /// Latest observation at or before `drive`.
    pub fn latest_at(&self, drive: u32) -> Option<&PitObservation> {
        let n = self.observations.partition_point(|o| o.drive_index <= drive);
        n.checked_sub(1).map(|i| &self.observations[i])
    }
}

impl Validate for PitTrack {
    fn validate(&self) -> Validation {
        let mut v = Validation::default();
        v.require(!self.observations.is_empty(), || {
            format!("track {} has no observations", self.track_id)
        });
        for pair in self.observations.windows(2) {
            v.require(pair[1].drive_index > pair[0].drive_index, || {
                format!("track {}: drives not strictly increasing", self.track_id)
            });
        }
        if let Some(first) = self.observations.first() {
            v.require(first.drive_index == self.birth_drive, || {
                format!(
                    "track {}: birth_drive {} != first observation drive {}",
                    self.track_id, self.birth_drive, first.drive_index
                )
            });
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub normalized_life: f64,
    pub value: f64,
}

/// A named quantity over normalized lifetime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSeries {
    pub name: String,
    pub unit: String,
    pub points: Vec<SeriesPoint>,
}

impl AnalysisSeries {
    pub fn new(name: impl Into<String>, unit: impl Into<String>) -> Self {
        AnalysisSeries {
            name: name.into(),
            unit: unit.into(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, normalized_life: f64, value: f64) {
        self.points.push(SeriesPoint {
            normalized_life,
            value,
        });
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.normalized_life).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Step lookup: value of the last point at or before `t`, `None` before
    /// the first point.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let n = self.points.partition_point(|p| p.normalized_life <= t);
        n.checked_sub(1).map(|i| self.points[i].value)
    }
}

impl Validate for AnalysisSeries {
    fn validate(&self) -> Validation {
        let mut v = Validation::default();
        for p in &self.points {
            v.require((0.0..=1.0).contains(&p.normalized_life), || {
                format!("{}: time {} outside [0, 1]", self.name, p.normalized_life)
            });
            v.require(p.value.is_finite(), || {
                format!("{}: non-finite value at {}", self.name, p.normalized_life)
            });
        }
        for pair in self.points.windows(2) {
            v.require(pair[1].normalized_life > pair[0].normalized_life, || {
                format!("{}: times not strictly increasing", self.name)
            });
        }
        v
    }
}

/// The scaled end-of-life rule `d_s >= D_w * 0.3 * alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EolPolicy {
    pub alpha: f64,
    pub ball_diameter_mm: f64,
}

impl EolPolicy {
    pub fn new(alpha: f64, ball_diameter_mm: f64) -> Self {
        EolPolicy {
            alpha,
            ball_diameter_mm,
        }
    }
}

impl Validate for EolPolicy {
    fn validate(&self) -> Validation {
        let mut v = Validation::default();
        v.require(self.alpha > 0.0 && self.alpha.is_finite(), || {
            format!("alpha must be positive, got {}", self.alpha)
        });
        v.require(self.ball_diameter_mm > 0.0, || {
            format!("ball_diameter_mm must be positive, got {}", self.ball_diameter_mm)
        });
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spindle_is_valid() {
        let spec = SpindleSpec::default();
        assert!(validate_spec(&spec).is_valid());
        assert_eq!(spec.ball_diameter_mm, 3.969);
        assert_eq!(spec.dynamic_load_rating_kn, 23.6);
    }

    #[test]
    fn zero_diameter_is_one_violation() {
        let spec = SpindleSpec {
            diameter_mm: 0.0,
            ..SpindleSpec::default()
        };
        let v = validate_spec(&spec);
        assert_eq!(v.violations.len(), 1);
        assert!(v.violations[0].contains("diameter_mm must be positive"));

        let spec = SpindleSpec {
            diameter_mm: 0.0,
            ball_diameter_mm: -1.0,
            ..SpindleSpec::default()
        };
        assert_eq!(validate_spec(&spec).violations.len(), 2);
    }

    #[test]
    fn oversized_ball_is_invalid() {
        let spec = SpindleSpec {
            ball_diameter_mm: 40.0,
            ..SpindleSpec::default()
        };
        let v = validate_spec(&spec);
        assert_eq!(v.violations.len(), 1);
        assert!(v.violations[0].contains("smaller than diameter_mm"));
    }

    #[test]
    fn spindle_json_field_names() {
        let json = serde_json::to_value(SpindleSpec::default()).unwrap();
        assert!(json.get("dynamic_load_rating_kN").is_some());
        assert!(json.get("ball_diameter_mm").is_some());
        let json = serde_json::to_value(LoadSpec::default()).unwrap();
        assert!(json.get("mean_axial_load_kN").is_some());
    }

    #[test]
    fn frame_rotation_wraps() {
        let f = FrameRef::new(0, 17, 22.5, 10, 10);
        assert_eq!(f.rotation_step_deg, 22.5);
        assert_eq!(FrameRef::new(0, 15, 22.5, 10, 10).rotation_step_deg, 337.5);
    }

    #[test]
    fn surface_distance_wraps_tangentially() {
        let c = 100.0;
        let p = SurfaceCoord::new(0.0, 1.0);
        let q = SurfaceCoord::new(0.0, 99.0);
        assert!((p.distance(&q, c) - 2.0).abs() < 1e-12);
        let q = SurfaceCoord::new(3.0, 5.0);
        assert!((p.distance(&q, c) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn series_step_lookup() {
        let mut s = AnalysisSeries::new("n", "count");
        s.push(0.3, 1.0);
        s.push(0.7, 2.0);
        s.push(0.85, 3.0);
        assert_eq!(s.value_at(0.75), Some(2.0));
        assert_eq!(s.value_at(0.1), None);
        assert!(s.validate().is_valid());
        s.push(0.85, 4.0);
        assert!(!s.validate().is_valid());
    }

    #[test]
    fn drive_order_checked() {
        let t = DateTime::<Utc>::from_timestamp(0, 0).unwrap();
        let d = |i, r| DriveMeta {
            drive_index: i,
            wall_time: t,
            cumulative_revolutions: r,
            flange_temperature_c: None,
            frame_count: 16,
        };
        assert!([d(0, 0), d(1, 10)].validate().is_valid());
        assert_eq!([d(1, 10), d(1, 5)].validate().violations.len(), 2);
    }

    #[test]
    fn eol_policy_rejects_non_positive_alpha() {
        assert!(EolPolicy::new(1.0, 3.969).validate().is_valid());
        assert!(!EolPolicy::new(0.0, 3.969).validate().is_valid());
        assert!(!EolPolicy::new(-2.0, 3.969).validate().is_valid());
    }
}
