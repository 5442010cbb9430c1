//! Measurement, tracking and modelling of pitting wear on ball screw drive
//! spindles from time series of surface images.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod curves;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod segment;
pub mod standards;
pub mod store;
pub mod synth;
pub mod track;

pub use calib::{Calibration, ImageAxis};
pub use curves::{PhaseFit, Quantity};
pub use error::{Error, Result};
pub use model::{
    AnalysisSeries, DriveMeta, EolPolicy, FrameRef, LoadSpec, PitObservation, PitTrack,
    SeriesPoint, SpindleSpec, SurfaceCoord, Validate, Validation,
};
pub use segment::{Connectivity, ReferenceMap, SegmentationParams, Threshold};
pub use standards::{EolReport, EolVerdict};
pub use store::{Dataset, DatasetHeader};
pub use synth::{GroundTruth, ScenarioConfig};
pub use track::TrackingParams;
