//! Pixel to millimetre conversion and the frame-to-surface mapping.
//!
//! Each frame of a drive images the spindle after one more angular step. The
//! mapping unwraps the spindle: the tangential coordinate advances by one
//! arc length per step and the axial coordinate follows the helix lead, so a
//! pit keeps the same [`SurfaceCoord`] from drive to drive. The imaged strip
//! is treated as locally flat.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameRef, SpindleSpec, SurfaceCoord, Validate, Validation};

/// Which image axis runs along the spindle axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageAxis {
    Rows,
    Columns,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Isotropic scale.
    pub mm_per_px: f64,
    pub axial_axis: ImageAxis,
    pub angular_step_deg: f64,
}

pub const DEFAULT_ANGULAR_STEP_DEG: f64 = 22.5;

impl Calibration {
    pub fn new(mm_per_px: f64) -> Self {
        Calibration {
            mm_per_px,
            axial_axis: ImageAxis::Columns,
            angular_step_deg: DEFAULT_ANGULAR_STEP_DEG,
        }
    }

    /// Scale at which consecutive frames tile the circumference exactly,
    /// given the frame's pixel count along the tangential axis.
    pub fn tiled(spec: &SpindleSpec, tangential_px: u32) -> Self {
        let cal = Calibration::new(1.0);
        Calibration {
            mm_per_px: cal.tangential_advance_mm(spec) / tangential_px as f64,
            ..cal
        }
    }

    pub fn frames_per_revolution(&self) -> u32 {
        (360.0 / self.angular_step_deg).round() as u32
    }

    /// Axial shift between consecutive frames (the lead per angular step).
    pub fn axial_advance_mm(&self, spec: &SpindleSpec) -> f64 {
        spec.lead_mm * self.angular_step_deg / 360.0
    }

    /// Arc length between consecutive frames.
    pub fn tangential_advance_mm(&self, spec: &SpindleSpec) -> f64 {
        spec.circumference_mm() * self.angular_step_deg / 360.0
    }

    /// Splits a `(row, col)` pixel position into `(axial, tangential)` pixels.
    pub fn split(&self, row: f64, col: f64) -> (f64, f64) {
        match self.axial_axis {
            ImageAxis::Columns => (col, row),
            ImageAxis::Rows => (row, col),
        }
    }

    /// Inverse of [`Calibration::split`].
    pub fn join(&self, axial_px: f64, tangential_px: f64) -> (f64, f64) {
        match self.axial_axis {
            ImageAxis::Columns => (tangential_px, axial_px),
            ImageAxis::Rows => (axial_px, tangential_px),
        }
    }

    /// Frame pixel counts as `(axial, tangential)`.
    pub fn frame_px(&self, width_px: u32, height_px: u32) -> (u32, u32) {
        match self.axial_axis {
            ImageAxis::Columns => (width_px, height_px),
            ImageAxis::Rows => (height_px, width_px),
        }
    }
}

impl Validate for Calibration {
    fn validate(&self) -> Validation {
        let mut v = Validation::default();
        if !(self.mm_per_px > 0.0 && self.mm_per_px.is_finite()) {
            v.violations
                .push(format!("mm_per_px must be positive, got {}", self.mm_per_px));
        }
        let per_rev = 360.0 / self.angular_step_deg;
        if !(self.angular_step_deg > 0.0 && (per_rev - per_rev.round()).abs() < 1e-9) {
            v.violations.push(format!(
                "angular_step_deg {} does not divide 360",
                self.angular_step_deg
            ));
        }
        v
    }
}

/// Area of one pixel in mm².
pub fn area_scale(cal: &Calibration) -> f64 {
    cal.mm_per_px * cal.mm_per_px
}

/// Maps a (possibly fractional) pixel position of `frame` to the unwrapped
/// spindle surface.
pub fn frame_to_surface(
    cal: &Calibration,
    spec: &SpindleSpec,
    frame: &FrameRef,
    pixel: (f64, f64),
) -> Result<SurfaceCoord> {
    let (row, col) = pixel;
    let max_row = frame.height_px as f64 - 1.0;
    let max_col = frame.width_px as f64 - 1.0;
    if !(0.0..=max_row).contains(&row) || !(0.0..=max_col).contains(&col) {
        return Err(Error::OutOfBounds {
            row,
            col,
            width: frame.width_px,
            height: frame.height_px,
        });
    }
    let (axial_px, tangential_px) = cal.split(row, col);
    let k = frame.frame_index as f64;
    let axial_mm = axial_px * cal.mm_per_px + k * cal.axial_advance_mm(spec);
    let tangential_mm = (tangential_px * cal.mm_per_px + k * cal.tangential_advance_mm(spec))
        .rem_euclid(spec.circumference_mm());
    Ok(SurfaceCoord {
        axial_mm,
        tangential_mm,
    })
}

/// Inverse of [`frame_to_surface`] for frame position `frame_index`. The
/// result is not bounds-checked; the tangential offset is wrapped into
/// `(-C/2, C/2]` around the frame origin.
pub fn surface_to_frame(
    cal: &Calibration,
    spec: &SpindleSpec,
    frame_index: u32,
    coord: &SurfaceCoord,
) -> (f64, f64) {
    let c = spec.circumference_mm();
    let k = frame_index as f64;
    let axial_mm = coord.axial_mm - k * cal.axial_advance_mm(spec);
    let mut tangential_mm = (coord.tangential_mm - k * cal.tangential_advance_mm(spec)).rem_euclid(c);
    if tangential_mm > c / 2.0 {
        tangential_mm -= c;
    }
    cal.join(axial_mm / cal.mm_per_px, tangential_mm / cal.mm_per_px)
}
