//! On-disk dataset layout and output files.
//!
//! ```text
//! root/spindle.json
//! root/drives/drive_000000/meta.json
//! root/drives/drive_000000/frame_000.png
//! root/out/...
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{GrayImage, ImageEncoder};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calib::Calibration;
use crate::error::{Error, Result};
use crate::model::{
    AnalysisSeries, DriveMeta, FrameRef, LoadSpec, PitObservation, PitTrack, SpindleSpec,
    SurfaceCoord, Validate,
};
use crate::pipeline::Analysis;
use crate::segment::to_gray;
use crate::standards::EolReport;

pub const SPINDLE_FILE: &str = "spindle.json";
pub const DRIVES_DIR: &str = "drives";
pub const OUT_DIR: &str = "out";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const TRACKS_FILE: &str = "tracks.json";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const EOL_FILE: &str = "eol_report.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const SERIES_DIR: &str = "series";

/// Contents of `spindle.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub spindle: SpindleSpec,
    pub load: LoadSpec,
    pub calibration: Calibration,
    pub frame_width_px: u32,
    pub frame_height_px: u32,
    pub failed: bool,
    #[serde(default)]
    pub failure_drive: Option<u32>,
}

/// A loaded dataset. Frames stay on disk until requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub header: DatasetHeader,
    pub drives: Vec<DriveMeta>,
}

pub fn drive_dir(root: &Path, drive: u32) -> PathBuf {
    root.join(DRIVES_DIR).join(format!("drive_{drive:06}"))
}

pub fn frame_path(root: &Path, drive: u32, frame: u32) -> PathBuf {
    drive_dir(root, drive).join(format!("frame_{frame:03}.png"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn schema(path: &Path, field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        field: field.into(),
        reason: reason.into(),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn parse_index(name: &str, prefix: &str, suffix: &str, digits: usize) -> Option<u32> {
    let core = name.strip_prefix(prefix)?.strip_suffix(suffix)?;
    (core.len() == digits && core.bytes().all(|b| b.is_ascii_digit()))
        .then(|| core.parse().ok())
        .flatten()
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let header_path = root.join(SPINDLE_FILE);
    let header: DatasetHeader = read_json(&header_path)?;
    for (field, v) in [
        ("spindle", header.spindle.validate()),
        ("load", header.load.validate()),
        ("calibration", header.calibration.validate()),
    ] {
        if !v.is_valid() {
            return Err(schema(&header_path, field, v.summary()));
        }
    }
    if header.frame_width_px == 0 || header.frame_height_px == 0 {
        return Err(schema(&header_path, "frame_width_px", "frame dimensions must be positive"));
    }

    let drives_root = root.join(DRIVES_DIR);
    let mut indices = Vec::new();
    for entry in fs::read_dir(&drives_root).map_err(io_err(&drives_root))? {
        let entry = entry.map_err(io_err(&drives_root))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        match parse_index(&name, "drive_", "", 6) {
            Some(d) if entry.path().is_dir() => indices.push(d),
            _ => return Err(schema(&entry.path(), "drives", "unexpected entry")),
        }
    }
    indices.sort_unstable();

    let frames = header.calibration.frames_per_revolution();
    let mut drives = Vec::with_capacity(indices.len());
    for d in indices {
        let meta_path = drive_dir(root, d).join("meta.json");
        let meta: DriveMeta = read_json(&meta_path)?;
        if meta.drive_index != d {
            return Err(schema(
                &meta_path,
                "drive_index",
                format!("{} does not match directory drive_{d:06}", meta.drive_index),
            ));
        }
        if meta.frame_count != frames {
            return Err(schema(
                &meta_path,
                "frame_count",
                format!("{} frames, calibration implies {frames}", meta.frame_count),
            ));
        }
        for k in 0..meta.frame_count {
            let p = frame_path(root, d, k);
            let (w, h) = image::image_dimensions(&p).map_err(|source| Error::Image {
                path: p.clone(),
                source,
            })?;
            if (w, h) != (header.frame_width_px, header.frame_height_px) {
                return Err(schema(
                    &p,
                    "dimensions",
                    format!(
                        "{w}x{h}, expected {}x{}",
                        header.frame_width_px, header.frame_height_px
                    ),
                ));
            }
        }
        drives.push(meta);
    }
    let v = drives.validate();
    if !v.is_valid() {
        return Err(schema(&drives_root, "drives", v.summary()));
    }
    if header.failed {
        match header.failure_drive {
            Some(f) if drives.iter().any(|m| m.drive_index == f) => {}
            Some(f) => return Err(schema(&header_path, "failure_drive", format!("drive {f} not present"))),
            None => return Err(schema(&header_path, "failure_drive", "required when failed")),
        }
    }
    Ok(Dataset {
        root: root.to_path_buf(),
        header,
        drives,
    })
}

impl Dataset {
    pub fn out_dir(&self) -> PathBuf {
        self.root.join(OUT_DIR)
    }

    pub fn frame_ref(&self, drive: u32, frame: u32) -> FrameRef {
        FrameRef::new(
            drive,
            frame,
            self.header.calibration.angular_step_deg,
            self.header.frame_width_px,
            self.header.frame_height_px,
        )
    }

    pub fn load_frame(&self, drive: u32, frame: u32) -> Result<GrayImage> {
        let p = frame_path(&self.root, drive, frame);
        let img = image::open(&p).map_err(|source| Error::Image { path: p, source })?;
        Ok(to_gray(img))
    }

    pub fn load_drive(&self, drive: u32) -> Result<Vec<(FrameRef, GrayImage)>> {
        let meta = self
            .drives
            .iter()
            .find(|m| m.drive_index == drive)
            .ok_or(Error::MissingDrive(drive))?;
        (0..meta.frame_count)
            .map(|k| Ok((self.frame_ref(drive, k), self.load_frame(drive, k)?)))
            .collect()
    }

    /// Drive used as the end of life for normalization: the recorded
    /// failure, or the last drive of a run that has not failed yet.
    pub fn failure_drive(&self) -> Result<u32> {
        match self.header.failure_drive {
            Some(f) if self.header.failed => Ok(f),
            _ => self
                .drives
                .last()
                .map(|m| m.drive_index)
                .ok_or(Error::Empty("drives")),
        }
    }
}

/// Writes `spindle.json`.
pub fn write_header(root: &Path, header: &DatasetHeader) -> Result<()> {
    write_json(&root.join(SPINDLE_FILE), header)
}

/// Writes one drive's `meta.json` and frames.
pub fn write_drive(root: &Path, meta: &DriveMeta, frames: &[(FrameRef, GrayImage)]) -> Result<()> {
    let dir = drive_dir(root, meta.drive_index);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (f, img) in frames {
        let p = frame_path(root, meta.drive_index, f.frame_index);
        write_png(&p, img)?;
    }
    write_json(&dir.join("meta.json"), meta)
}

pub fn write_png(path: &Path, img: &GrayImage) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let enc = PngEncoder::new_with_quality(
        std::io::BufWriter::new(file),
        CompressionType::Fast,
        FilterType::Sub,
    );
    enc.write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::L8)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ObservationRow {
    drive_index: u32,
    frame_index: u32,
    centroid_axial_mm: f64,
    centroid_tangential_mm: f64,
    axial_mm: f64,
    tangential_mm: f64,
    area_mm2: f64,
    pixel_count: u64,
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_observations(path: &Path, observations: &[PitObservation]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    if observations.is_empty() {
        w.write_record([
            "drive_index",
            "frame_index",
            "centroid_axial_mm",
            "centroid_tangential_mm",
            "axial_mm",
            "tangential_mm",
            "area_mm2",
            "pixel_count",
        ])
        .map_err(csv_err(path))?;
    }
    for o in observations {
        w.serialize(ObservationRow {
            drive_index: o.drive_index,
            frame_index: o.frame.frame_index,
            centroid_axial_mm: o.centroid.axial_mm,
            centroid_tangential_mm: o.centroid.tangential_mm,
            axial_mm: o.axial_length_mm,
            tangential_mm: o.tangential_length_mm,
            area_mm2: o.area_mm2,
            pixel_count: o.pixel_count,
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads observations back; frame geometry comes from the dataset header.
pub fn read_observations(path: &Path, dataset: &Dataset) -> Result<Vec<PitObservation>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize::<ObservationRow>()
        .map(|row| {
            let row = row.map_err(csv_err(path))?;
            Ok(PitObservation {
                drive_index: row.drive_index,
                frame: dataset.frame_ref(row.drive_index, row.frame_index),
                centroid: SurfaceCoord::new(row.centroid_axial_mm, row.centroid_tangential_mm),
                axial_length_mm: row.axial_mm,
                tangential_length_mm: row.tangential_mm,
                area_mm2: row.area_mm2,
                pixel_count: row.pixel_count,
            })
        })
        .collect()
}

pub fn write_tracks(path: &Path, tracks: &[PitTrack]) -> Result<()> {
    write_json(path, tracks)
}

pub fn read_tracks(path: &Path) -> Result<Vec<PitTrack>> {
    let tracks: Vec<PitTrack> = read_json(path)?;
    for t in &tracks {
        let v = t.validate();
        if !v.is_valid() {
            return Err(schema(path, format!("track {}", t.track_id), v.summary()));
        }
    }
    Ok(tracks)
}

/// One `normalized_life,value` CSV per series, named after the series.
pub fn write_series_csv(dir: &Path, series: &AnalysisSeries) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format!("{}.csv", series.name));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["normalized_life", "value"]).map_err(csv_err(&path))?;
    for p in &series.points {
        w.serialize((p.normalized_life, p.value)).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

/// Writes `analysis.json` and one CSV per series under `out_dir`.
pub fn write_analysis(out_dir: &Path, analysis: &Analysis) -> Result<Vec<PathBuf>> {
    let path = out_dir.join(ANALYSIS_FILE);
    write_json(&path, analysis)?;
    let series_dir = out_dir.join(SERIES_DIR);
    if series_dir.exists() {
        // Stale series of tracks that no longer exist would linger otherwise.
        fs::remove_dir_all(&series_dir).map_err(io_err(&series_dir))?;
    }
    let mut paths = vec![path];
    for s in analysis.series.values() {
        paths.push(write_series_csv(&series_dir, s)?);
    }
    Ok(paths)
}

/// Writes the four pipeline outputs under `<root>/out/`.
pub fn write_outputs(
    dataset: &Dataset,
    observations: &[PitObservation],
    tracks: &[PitTrack],
    analysis: &Analysis,
    report: &EolReport,
) -> Result<Vec<PathBuf>> {
    let out = dataset.out_dir();
    let mut paths = vec![out.join(OBSERVATIONS_FILE), out.join(TRACKS_FILE)];
    write_observations(&paths[0], observations)?;
    write_tracks(&paths[1], tracks)?;
    paths.extend(write_analysis(&out, analysis)?);
    let eol = out.join(EOL_FILE);
    write_json(&eol, report)?;
    paths.push(eol);
    Ok(paths)
}

/// Human-readable digest of a run.
pub fn summary_text(
    dataset: &Dataset,
    tracks: &[PitTrack],
    analysis: &Analysis,
    report: &EolReport,
) -> String {
    use std::fmt::Write;
    let h = &dataset.header;
    let mut s = String::new();
    let merged = tracks.iter().filter(|t| !t.is_alive()).count();
    let _ = writeln!(s, "dataset        {}", dataset.root.display());
    let _ = writeln!(
        s,
        "spindle        {} (d {} mm, lead {} mm, D_w {} mm, C_a {} kN)",
        h.spindle.id, h.spindle.diameter_mm, h.spindle.lead_mm, h.spindle.ball_diameter_mm,
        h.spindle.dynamic_load_rating_kn
    );
    let _ = writeln!(
        s,
        "drives         {} (end of life at drive {}{})",
        dataset.drives.len(),
        analysis.failure_drive,
        if h.failed { ", failed" } else { ", running" }
    );
    let _ = writeln!(s, "pits           {} tracked, {} coalesced", tracks.len(), merged);
    let _ = writeln!(
        s,
        "nominal life   {:.0} revolutions, observed/L10 = {:.3}",
        report.l10_revolutions, report.observed_over_l10
    );
    let verdict = if report.exceeded { "EXCEEDED" } else { "ok" };
    let _ = writeln!(
        s,
        "end of life    alpha {}: d_s {:.4} mm vs threshold {:.4} mm -> {}",
        report.alpha, report.d_s_mm, report.threshold_mm, verdict
    );
    if let Some(t) = report.decisive_track {
        let _ = writeln!(s, "decisive pit   track {t}");
    }
    if let Some(d) = report.first_exceedance_drive {
        let _ = writeln!(s, "first alert    drive {d}");
    }
    let _ = writeln!(s, "sum of b       {:.4} mm", report.sum_of_major_axes_mm);
    for (name, f) in &analysis.phase_fits {
        let _ = writeln!(
            s,
            "phases {:<11} breaks {:.3}, {:.3}; slopes {:.4} / {:.4} / {:.4}{}",
            name,
            f.breakpoints.0,
            f.breakpoints.1,
            f.segment_slopes[0],
            f.segment_slopes[1],
            f.segment_slopes[2],
            if f.distinct_phases { "" } else { " (no distinct phases)" }
        );
    }
    for (name, why) in &analysis.phase_fit_skipped {
        let _ = writeln!(s, "phases {name:<8}not fitted: {why}");
    }
    s
}
