//! Pit detection by differencing against the pristine first drive.
//!
//! The pipeline per frame is fixed: box blur, absolute difference against
//! the blurred reference, threshold (fixed or Otsu), square closing,
//! connected components, size filter, then one [`PitObservation`] per
//! surviving region.

pub mod raster;

use std::collections::BTreeMap;
use std::fmt;

use image::{DynamicImage, GrayImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{area_scale, frame_to_surface, Calibration};
use crate::error::{Error, Result};
use crate::model::{FrameRef, PitObservation, SpindleSpec, Validate, Validation};
use raster::{abs_diff, box_blur, label_regions, otsu_level, Crop, RegionStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, String> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(format!("connectivity must be 4 or 8, got {n}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// Difference threshold: a fixed level, or `"auto"` for Otsu's method on
/// the difference histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Fixed(u8),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoTag {
    #[serde(rename = "auto")]
    Auto,
}

impl Threshold {
    pub const AUTO: Threshold = Threshold::Auto(AutoTag::Auto);
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Fixed(t) => write!(f, "{t}"),
            Threshold::Auto(_) => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationParams {
    pub blur_radius_px: u32,
    pub diff_threshold: Threshold,
    pub min_region_px: u64,
    pub closing_radius_px: u32,
    pub connectivity: Connectivity,
    /// Lower bound on the automatic threshold. Otsu always splits the
    /// histogram in two, so on a frame with nothing but sensor noise it
    /// would otherwise label the noise.
    pub min_contrast: u8,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            blur_radius_px: 2,
            diff_threshold: Threshold::AUTO,
            min_region_px: 25,
            closing_radius_px: 2,
            connectivity: Connectivity::Eight,
            min_contrast: 20,
        }
    }
}

impl Validate for SegmentationParams {
    fn validate(&self) -> Validation {
        let mut v = Validation::default();
        if self.min_region_px < 1 {
            v.violations.push("min_region_px must be at least 1".into());
        }
        if self.blur_radius_px as usize > raster::MAX_BLUR_RADIUS {
            v.violations.push(format!(
                "blur_radius_px {} above {}",
                self.blur_radius_px,
                raster::MAX_BLUR_RADIUS
            ));
        }
        if self.diff_threshold == Threshold::Fixed(0) {
            v.violations
                .push("diff_threshold 0 marks every pixel as foreground".into());
        }
        v
    }
}

/// Blurred drive-0 images, one per frame position.
#[derive(Debug, Clone)]
pub struct ReferenceMap {
    blur_radius_px: u32,
    width: u32,
    height: u32,
    frames: BTreeMap<u32, Vec<u8>>,
}

impl ReferenceMap {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn frame_indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.frames.keys().copied()
    }
}

/// Converts any decoded image to 8-bit luma.
pub fn to_gray(image: DynamicImage) -> GrayImage {
    match image {
        DynamicImage::ImageLuma8(g) => g,
        other => other.to_luma8(),
    }
}

pub fn build_reference(
    drive0_frames: Vec<(u32, GrayImage)>,
    params: &SegmentationParams,
) -> Result<ReferenceMap> {
    let Some((_, first)) = drive0_frames.first() else {
        return Err(Error::Empty("reference frames"));
    };
    let (width, height) = first.dimensions();
    let mut frames = BTreeMap::new();
    for (index, image) in drive0_frames {
        let (w, h) = image.dimensions();
        if (w, h) != (width, height) {
            return Err(Error::DimensionMismatch {
                frame_index: index,
                expected_w: width,
                expected_h: height,
                got_w: w,
                got_h: h,
            });
        }
        if frames.contains_key(&index) {
            return Err(Error::DuplicateFrame(index));
        }
        let blurred = box_blur(
            image.as_raw(),
            w as usize,
            h as usize,
            params.blur_radius_px as usize,
        );
        frames.insert(index, blurred);
    }
    Ok(ReferenceMap {
        blur_radius_px: params.blur_radius_px,
        width,
        height,
        frames,
    })
}

/// Foreground of one frame after thresholding and closing, split into
/// independent crops.
fn foreground(
    image: &GrayImage,
    frame: &FrameRef,
    reference: &ReferenceMap,
    params: &SegmentationParams,
) -> Result<Vec<Crop>> {
    let Some(base) = reference.frames.get(&frame.frame_index) else {
        return Err(Error::MissingReference(frame.frame_index));
    };
    let (w, h) = image.dimensions();
    if (w, h) != (reference.width, reference.height) || (w, h) != (frame.width_px, frame.height_px)
    {
        return Err(Error::DimensionMismatch {
            frame_index: frame.frame_index,
            expected_w: reference.width,
            expected_h: reference.height,
            got_w: w,
            got_h: h,
        });
    }
    if params.blur_radius_px != reference.blur_radius_px {
        return Err(Error::invalid(
            "segmentation params",
            format!(
                "blur radius {} differs from the reference's {}",
                params.blur_radius_px, reference.blur_radius_px
            ),
        ));
    }
    let (w, h) = (w as usize, h as usize);
    let blurred = box_blur(image.as_raw(), w, h, params.blur_radius_px as usize);
    let (diff, hist) = abs_diff(&blurred, base);
    let level = match params.diff_threshold {
        Threshold::Fixed(t) => t as u16,
        Threshold::Auto(_) => otsu_level(&hist).max(params.min_contrast as u16),
    };
    let r = params.closing_radius_px as usize;
    let mut crops = Crop::clusters(&diff, w, h, level, 2 * r + 1);
    for c in &mut crops {
        c.close(r);
    }
    Ok(crops)
}

/// Detects and measures the pits of one frame. Observations are ordered by
/// centroid (axial, then tangential).
pub fn segment_frame(
    image: &GrayImage,
    frame: &FrameRef,
    reference: &ReferenceMap,
    params: &SegmentationParams,
    cal: &Calibration,
    spec: &SpindleSpec,
) -> Result<Vec<PitObservation>> {
    let crops = foreground(image, frame, reference, params)?;
    let eight = params.connectivity == Connectivity::Eight;
    let mut out = crops
        .iter()
        .flat_map(|c| label_regions(c, eight))
        .filter(|r| r.count >= params.min_region_px)
        .map(|r| observation(&r, frame, cal, spec))
        .collect::<Result<Vec<_>>>()?;
    sort_observations(&mut out);
    Ok(out)
}

/// Total foreground pixel count after size filtering; used to check that a
/// higher threshold never segments more.
pub fn segmented_pixels(
    image: &GrayImage,
    frame: &FrameRef,
    reference: &ReferenceMap,
    params: &SegmentationParams,
) -> Result<u64> {
    let crops = foreground(image, frame, reference, params)?;
    let eight = params.connectivity == Connectivity::Eight;
    Ok(crops
        .iter()
        .flat_map(|c| label_regions(c, eight))
        .filter(|r| r.count >= params.min_region_px)
        .map(|r| r.count)
        .sum())
}

/// Segments all frames of one drive, in parallel on the current rayon pool.
pub fn segment_drive(
    frames: &[(FrameRef, GrayImage)],
    reference: &ReferenceMap,
    params: &SegmentationParams,
    cal: &Calibration,
    spec: &SpindleSpec,
) -> Result<Vec<PitObservation>> {
    let per_frame = frames
        .par_iter()
        .map(|(frame, image)| segment_frame(image, frame, reference, params, cal, spec))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<_> = per_frame.into_iter().flatten().collect();
    sort_observations(&mut out);
    Ok(out)
}

pub fn sort_observations(obs: &mut [PitObservation]) {
    obs.sort_by(|a, b| {
        a.centroid
            .axial_mm
            .total_cmp(&b.centroid.axial_mm)
            .then(a.centroid.tangential_mm.total_cmp(&b.centroid.tangential_mm))
            .then(a.frame.frame_index.cmp(&b.frame.frame_index))
    });
}

/// Measures one region given as a set of distinct `(row, col)` pixels.
pub fn measure_region(
    region_pixels: &[(u32, u32)],
    frame: &FrameRef,
    cal: &Calibration,
    spec: &SpindleSpec,
) -> Result<PitObservation> {
    let mut pixels = region_pixels.iter();
    let Some(&(r0, c0)) = pixels.next() else {
        return Err(Error::Empty("region"));
    };
    let mut stats = RegionStats::new(r0, c0);
    for &(r, c) in pixels {
        stats.add(r, c);
    }
    observation(&stats, frame, cal, spec)
}

fn observation(
    stats: &RegionStats,
    frame: &FrameRef,
    cal: &Calibration,
    spec: &SpindleSpec,
) -> Result<PitObservation> {
    let rows = (stats.row_max - stats.row_min + 1) as f64;
    let cols = (stats.col_max - stats.col_min + 1) as f64;
    let (axial_px, tangential_px) = cal.split(rows, cols);
    Ok(PitObservation {
        drive_index: frame.drive_index,
        frame: *frame,
        centroid: frame_to_surface(cal, spec, frame, stats.centroid())?,
        axial_length_mm: axial_px * cal.mm_per_px,
        tangential_length_mm: tangential_px * cal.mm_per_px,
        area_mm2: stats.count as f64 * area_scale(cal),
        pixel_count: stats.count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::ImageAxis;

    const W: u32 = 320;
    const H: u32 = 240;

    fn background() -> GrayImage {
        GrayImage::from_fn(W, H, |x, y| image::Luma([140 + ((x * 7 + y * 13) % 17) as u8]))
    }

    /// Paints an axis-aligned ellipse with the given full extents (pixels)
    /// and returns the painted pixel count.
    fn paint_ellipse(img: &mut GrayImage, cx: f64, cy: f64, w: f64, h: f64) -> u64 {
        let mut n = 0;
        for y in 0..img.height() {
            for x in 0..img.width() {
                let u = (x as f64 - cx) / (w / 2.0);
                let v = (y as f64 - cy) / (h / 2.0);
                if u * u + v * v <= 1.0 {
                    img.put_pixel(x, y, image::Luma([30]));
                    n += 1;
                }
            }
        }
        n
    }

    fn setup() -> (ReferenceMap, SegmentationParams, Calibration, SpindleSpec) {
        let params = SegmentationParams::default();
        let reference = build_reference(vec![(0, background())], &params).unwrap();
        let mut cal = Calibration::new(0.01);
        // Rows along the spindle axis: the 100 px tangential extent is
        // horizontal, matching a 100 x 20 px (w x h) ellipse.
        cal.axial_axis = ImageAxis::Rows;
        (reference, params, cal, SpindleSpec::default())
    }

    fn frame() -> FrameRef {
        FrameRef::new(3, 0, 22.5, W, H)
    }

    #[test]
    fn identical_frame_yields_nothing() {
        let (reference, params, cal, spec) = setup();
        let obs = segment_frame(&background(), &frame(), &reference, &params, &cal, &spec).unwrap();
        assert!(obs.is_empty());
    }

    #[test]
    fn single_ellipse_is_measured() {
        let (reference, params, cal, spec) = setup();
        let mut img = background();
        let painted = paint_ellipse(&mut img, 160.0, 120.0, 100.0, 20.0);
        let obs = segment_frame(&img, &frame(), &reference, &params, &cal, &spec).unwrap();
        assert_eq!(obs.len(), 1);
        let o = &obs[0];
        assert!((o.tangential_length_mm - 1.0).abs() <= 0.02, "{}", o.tangential_length_mm);
        assert!((o.axial_length_mm - 0.2).abs() <= 0.02, "{}", o.axial_length_mm);
        let oracle = painted as f64 * 1e-4;
        assert!((o.area_mm2 - oracle).abs() / oracle < 0.05, "{} vs {oracle}", o.area_mm2);
        assert!((oracle - std::f64::consts::FRAC_PI_4 * 0.2).abs() < 0.01);
        assert!(o.validate().is_valid());
        assert_eq!(o.drive_index, 3);
    }

    #[test]
    fn two_separated_ellipses() {
        let (reference, params, cal, spec) = setup();
        let mut img = background();
        paint_ellipse(&mut img, 80.0, 60.0, 60.0, 16.0);
        paint_ellipse(&mut img, 200.0, 160.0, 60.0, 16.0);
        let obs = segment_frame(&img, &frame(), &reference, &params, &cal, &spec).unwrap();
        assert_eq!(obs.len(), 2);
        assert!(obs[0].centroid.axial_mm < obs[1].centroid.axial_mm);
    }

    #[test]
    fn small_regions_are_discarded() {
        let (reference, params, cal, spec) = setup();
        let mut img = background();
        let painted = paint_ellipse(&mut img, 100.0, 100.0, 12.0, 12.0);
        let obs = segment_frame(&img, &frame(), &reference, &params, &cal, &spec).unwrap();
        assert_eq!(obs.len(), 1);
        let strict = SegmentationParams {
            min_region_px: 2 * painted,
            ..params
        };
        let obs = segment_frame(&img, &frame(), &reference, &strict, &cal, &spec).unwrap();
        assert!(obs.is_empty());
    }

    #[test]
    fn missing_reference_and_size_mismatch() {
        let (reference, params, cal, spec) = setup();
        let f = FrameRef::new(1, 5, 22.5, W, H);
        assert!(matches!(
            segment_frame(&background(), &f, &reference, &params, &cal, &spec),
            Err(Error::MissingReference(5))
        ));
        let small = GrayImage::new(10, 10);
        let f = FrameRef::new(1, 0, 22.5, 10, 10);
        assert!(matches!(
            segment_frame(&small, &f, &reference, &params, &cal, &spec),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn reference_errors() {
        let params = SegmentationParams::default();
        assert!(matches!(build_reference(vec![], &params), Err(Error::Empty(_))));
        let dup = vec![(2, background()), (2, background())];
        assert!(matches!(build_reference(dup, &params), Err(Error::DuplicateFrame(2))));
        let mixed = vec![(0, background()), (7, GrayImage::new(5, 5))];
        match build_reference(mixed, &params) {
            Err(Error::DimensionMismatch { frame_index, .. }) => assert_eq!(frame_index, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reference_with_sixteen_full_size_frames() {
        let params = SegmentationParams::default();
        let frames = (0..16).map(|i| (i, GrayImage::new(2592, 1944))).collect();
        let reference = build_reference(frames, &params).unwrap();
        assert_eq!(reference.len(), 16);
        assert_eq!(reference.dimensions(), (2592, 1944));
    }

    #[test]
    fn measure_single_pixel_and_rectangle() {
        let (_, _, cal, spec) = setup();
        let f = frame();
        let o = measure_region(&[(5, 5)], &f, &cal, &spec).unwrap();
        assert!((o.axial_length_mm - 0.01).abs() < 1e-15);
        assert!((o.tangential_length_mm - 0.01).abs() < 1e-15);
        assert!((o.area_mm2 - 1e-4).abs() < 1e-18);

        // 100 px along the raceway (columns), 20 px along the axis (rows).
        let rect: Vec<_> = (0..20).flat_map(|r| (0..100).map(move |c| (r, c))).collect();
        let o = measure_region(&rect, &f, &cal, &spec).unwrap();
        assert!((o.tangential_length_mm - 1.0).abs() < 1e-12);
        assert!((o.axial_length_mm - 0.2).abs() < 1e-12);
        assert!((o.area_mm2 - 0.2).abs() < 1e-12);

        assert!(matches!(measure_region(&[], &f, &cal, &spec), Err(Error::Empty(_))));
    }

    #[test]
    fn rasterized_ellipse_fill_ratio() {
        let (_, _, cal, spec) = setup();
        let mut pixels = Vec::new();
        for r in 0..20u32 {
            for c in 0..100u32 {
                let u = (c as f64 + 0.5 - 50.0) / 50.0;
                let v = (r as f64 + 0.5 - 10.0) / 10.0;
                if u * u + v * v <= 1.0 {
                    pixels.push((r, c));
                }
            }
        }
        let o = measure_region(&pixels, &frame(), &cal, &spec).unwrap();
        let ratio = o.area_mm2 / (o.axial_length_mm * o.tangential_length_mm);
        assert!((ratio - std::f64::consts::FRAC_PI_4).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn params_json() {
        let p: SegmentationParams =
            serde_json::from_str(r#"{"diff_threshold": 40, "connectivity": 4}"#).unwrap();
        assert_eq!(p.diff_threshold, Threshold::Fixed(40));
        assert_eq!(p.connectivity, Connectivity::Four);
        assert_eq!(p.blur_radius_px, 2);
        let p: SegmentationParams = serde_json::from_str(r#"{"diff_threshold": "auto"}"#).unwrap();
        assert_eq!(p.diff_threshold, Threshold::AUTO);
        assert!(serde_json::from_str::<SegmentationParams>(r#"{"connectivity": 6}"#).is_err());
    }
}
