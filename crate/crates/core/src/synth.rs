//! Synthetic wear scenarios with known ground truth.
//!
//! Pits are born by a piecewise-constant Poisson process over normalized
//! lifetime, placed on the imaged strip with a minimum separation, and grow
//! along smooth trajectories: the axial length saturates early while the
//! tangential length keeps accelerating. Frames are rendered as a static
//! texture with dark elliptic pits and additive noise.
//!
//! All growth constants are synthetic.

use std::f64::consts::TAU;

use chrono::{DateTime, Duration, Utc};
use image::GrayImage;
use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::calib::{surface_to_frame, Calibration};
use crate::error::{Error, Result};
use crate::model::{DriveMeta, FrameRef, LoadSpec, SpindleSpec, SurfaceCoord, Validate, Validation};

/// Normalized-lifetime intervals of the three birth phases.
pub const BIRTH_PHASES: [(f64, f64); 3] = [(0.2, 0.6), (0.6, 0.8), (0.8, 1.0)];

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
const PLACEMENT_MARGIN_MM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_drives: u32,
    pub failure_drive: u32,
    /// Births per drive in each phase.
    pub birth_rates: [f64; 3],
    /// `a_sat`.
    pub axial_saturation_mm: f64,
    /// `k`, per unit normalized lifetime.
    pub axial_rate: f64,
    /// `ε_lin`, mm per unit normalized lifetime.
    pub axial_linear_mm: f64,
    /// `b₀`, the diameter at birth.
    pub tangential_base_mm: f64,
    /// `g`, mm per unit normalized lifetime.
    pub tangential_rate_mm: f64,
    /// `h`, mm per squared unit normalized lifetime.
    pub tangential_accel: f64,
    pub noise_sigma: f64,
    pub texture_seed: u64,
    pub min_separation_mm: f64,
    /// Relative radial perturbation of pit outlines; 0 gives ideal ellipses.
    pub boundary_roughness: f64,
    pub frame_width_px: u32,
    pub frame_height_px: u32,
    pub drive_interval_h: f64,
    pub spindle: SpindleSpec,
    pub load: LoadSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            n_drives: 120,
            failure_drive: 119,
            birth_rates: [0.12, 0.3, 0.6],
            axial_saturation_mm: 0.24,
            axial_rate: 40.0,
            axial_linear_mm: 0.02,
            tangential_base_mm: 0.15,
            tangential_rate_mm: 2.4,
            tangential_accel: 0.77,
            noise_sigma: 2.0,
            texture_seed: 1,
            min_separation_mm: 3.0,
            boundary_roughness: 0.0,
            frame_width_px: 1296,
            frame_height_px: 972,
            drive_interval_h: 4.0,
            spindle: SpindleSpec::default(),
            load: LoadSpec::default(),
        }
    }
}

impl ScenarioConfig {
    /// Defaults with the given seed and drive count, failing at the last
    /// drive.
    pub fn new(seed: u64, n_drives: u32) -> Self {
        ScenarioConfig {
            seed,
            n_drives,
            failure_drive: n_drives.saturating_sub(1),
            ..ScenarioConfig::default()
        }
    }

    /// Calibration at which the frames of one revolution tile the
    /// circumference; the image width runs along the spindle axis.
    pub fn calibration(&self) -> Calibration {
        Calibration::tiled(&self.spindle, self.frame_height_px)
    }

    pub fn revolutions_per_drive(&self) -> u64 {
        (self.drive_interval_h * 60.0 * self.load.speed_rpm).round() as u64
    }

    fn growth(&self, birth_time: f64) -> Trajectory {
        Trajectory {
            birth_time,
            b0: self.tangential_base_mm,
            a_sat: self.axial_saturation_mm,
            k: self.axial_rate,
            eps_lin: self.axial_linear_mm,
            g: self.tangential_rate_mm,
            h: self.tangential_accel,
        }
    }
}

impl Validate for ScenarioConfig {
    fn validate(&self) -> Validation {
        let mut v = Validation::default();
        v.require(self.n_drives >= 2, || "n_drives must be at least 2".into());
        v.require(self.failure_drive >= 1 && self.failure_drive < self.n_drives, || {
            format!("failure_drive {} outside 1..{}", self.failure_drive, self.n_drives)
        });
        v.require(self.birth_rates.iter().all(|r| *r >= 0.0 && r.is_finite()), || {
            "birth rates must be non-negative".into()
        });
        v.require(self.tangential_base_mm > 0.0, || "tangential_base_mm must be positive".into());
        v.require(self.axial_saturation_mm >= self.tangential_base_mm, || {
            "axial_saturation_mm must be at least tangential_base_mm".into()
        });
        v.require(self.axial_rate > 0.0, || "axial_rate must be positive".into());
        v.require(
            self.axial_linear_mm >= 0.0 && self.tangential_rate_mm >= 0.0 && self.tangential_accel >= 0.0,
            || "growth rates must be non-negative".into(),
        );
        v.require((0.0..=64.0).contains(&self.noise_sigma), || {
            format!("noise_sigma {} outside [0, 64]", self.noise_sigma)
        });
        v.require(self.min_separation_mm >= 0.0, || "min_separation_mm must be non-negative".into());
        v.require((0.0..0.5).contains(&self.boundary_roughness), || {
            "boundary_roughness must lie in [0, 0.5)".into()
        });
        v.require(self.frame_width_px >= 16 && self.frame_height_px >= 16, || {
            "frames must be at least 16 px wide and high".into()
        });
        v.require(self.drive_interval_h > 0.0, || "drive_interval_h must be positive".into());
        v.merge(self.spindle.validate());
        v.merge(self.load.validate());
        v.merge(self.calibration().validate());
        v
    }
}

/// Growth law of one pit over normalized lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub birth_time: f64,
    pub b0: f64,
    pub a_sat: f64,
    pub k: f64,
    pub eps_lin: f64,
    pub g: f64,
    pub h: f64,
}

/// `(a, b)` at normalized time `t`:
///
/// `a = b₀ + (a_sat − b₀)(1 − e^{−kτ}) + ε_lin τ`, `b = b₀ + gτ + hτ²`
/// with `τ = t − t₀`.
pub fn pit_trajectory(traj: &Trajectory, t: f64) -> Result<(f64, f64)> {
    let tau = t - traj.birth_time;
    if !(tau >= 0.0) {
        return Err(Error::invalid(
            "trajectory time",
            format!("{t} precedes birth at {}", traj.birth_time),
        ));
    }
    let a = traj.b0 + (traj.a_sat - traj.b0) * -(-traj.k * tau).exp_m1() + traj.eps_lin * tau;
    let b = traj.b0 + traj.g * tau + traj.h * tau * tau;
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPit {
    pub pit_id: u32,
    pub birth_drive: u32,
    pub centroid: SurfaceCoord,
    /// Frame position the pit is imaged in.
    pub frame_index: u32,
    pub trajectory: Trajectory,
    /// Phases of the outline perturbation.
    pub roughness_phases: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub drive_index: u32,
    pub pit_id: u32,
    pub axial_mm: f64,
    pub tangential_mm: f64,
    pub area_mm2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: ScenarioConfig,
    pub pits: Vec<TruthPit>,
    /// Exact sizes of every live pit at every drive, ordered by drive, then
    /// pit id.
    pub samples: Vec<TruthSample>,
}

impl GroundTruth {
    pub fn normalized_time(&self, drive: u32) -> f64 {
        drive as f64 / self.config.failure_drive as f64
    }

    /// Exact `(a, b)` of `pit` at `drive`, `None` before birth.
    pub fn size_at(&self, pit: &TruthPit, drive: u32) -> Option<(f64, f64)> {
        if drive < pit.birth_drive {
            return None;
        }
        let t = self.normalized_time(drive).max(pit.trajectory.birth_time);
        pit_trajectory(&pit.trajectory, t).ok()
    }

    pub fn samples_at(&self, drive: u32) -> impl Iterator<Item = &TruthSample> {
        let lo = self.samples.partition_point(|s| s.drive_index < drive);
        self.samples[lo..].iter().take_while(move |s| s.drive_index == drive)
    }
}

/// Draws births and placements. Deterministic in `config.seed`.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<GroundTruth> {
    let v = config.validate();
    if !v.is_valid() {
        return Err(Error::invalid("scenario config", v.summary()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let span = config.failure_drive as f64;

    let mut births = Vec::new();
    for (&(lo, hi), &rate) in BIRTH_PHASES.iter().zip(&config.birth_rates) {
        let mean = rate * (hi - lo) * span;
        if mean <= 0.0 {
            continue;
        }
        let n = Poisson::new(mean)
            .map_err(|e| Error::invalid("birth rate", e.to_string()))?
            .sample(&mut rng) as usize;
        births.extend((0..n).map(|_| rng.random_range(lo..hi)));
    }
    births.sort_by(f64::total_cmp);

    let cal = config.calibration();
    let spec = &config.spindle;
    let (axial_px, tangential_px) = cal.frame_px(config.frame_width_px, config.frame_height_px);
    let frame_axial = axial_px as f64 * cal.mm_per_px;
    let frame_tangential = tangential_px as f64 * cal.mm_per_px;
    let frames = cal.frames_per_revolution();
    let circumference = spec.circumference_mm();
    let last_t = (config.n_drives - 1) as f64 / span;

    let mut pits: Vec<TruthPit> = Vec::with_capacity(births.len());
    for (id, &t0) in births.iter().enumerate() {
        let trajectory = config.growth(t0);
        let (a_end, b_end) = pit_trajectory(&trajectory, last_t.max(t0))?;
        let scale = 1.0 + config.boundary_roughness;
        let half_a = a_end * scale / 2.0 + PLACEMENT_MARGIN_MM;
        let half_b = b_end * scale / 2.0 + PLACEMENT_MARGIN_MM;
        let axial_range = (
            (0.1 * frame_axial).max(half_a),
            (0.9 * frame_axial).min(frame_axial - half_a),
        );
        let tangential_range = (half_b, frame_tangential - half_b);
        if axial_range.0 >= axial_range.1 || tangential_range.0 >= tangential_range.1 {
            return Err(Error::invalid(
                "scenario config",
                format!("a pit of {a_end:.3} x {b_end:.3} mm does not fit in one frame"),
            ));
        }
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let k = rng.random_range(0..frames);
            let ax = rng.random_range(axial_range.0..axial_range.1);
            let tg = rng.random_range(tangential_range.0..tangential_range.1);
            let centroid = SurfaceCoord::new(
                ax + k as f64 * cal.axial_advance_mm(spec),
                (tg + k as f64 * cal.tangential_advance_mm(spec)).rem_euclid(circumference),
            );
            if pits
                .iter()
                .all(|p| p.centroid.distance(&centroid, circumference) >= config.min_separation_mm)
            {
                placed = Some((k, centroid));
                break;
            }
        }
        let Some((frame_index, centroid)) = placed else {
            return Err(Error::InfeasiblePlacement {
                placed: pits.len(),
                wanted: births.len(),
                separation_mm: config.min_separation_mm,
            });
        };
        let roughness_phases = [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)];
        pits.push(TruthPit {
            pit_id: id as u32,
            birth_drive: (t0 * span).ceil() as u32,
            centroid,
            frame_index,
            trajectory,
            roughness_phases,
        });
    }

    let mut truth = GroundTruth {
        config: config.clone(),
        pits,
        samples: Vec::new(),
    };
    let mut samples = Vec::new();
    for d in 0..config.n_drives {
        for p in &truth.pits {
            if let Some((a, b)) = truth.size_at(p, d) {
                samples.push(TruthSample {
                    drive_index: d,
                    pit_id: p.pit_id,
                    axial_mm: a,
                    tangential_mm: b,
                    area_mm2: std::f64::consts::FRAC_PI_4 * a * b,
                });
            }
        }
    }
    truth.samples = samples;
    Ok(truth)
}

/// Rasterizes an axis-aligned ellipse as horizontal spans `(row, col_lo,
/// col_hi)` (inclusive), clipped to a `width` x `height` frame. Pixel
/// centres sit at integer coordinates.
pub fn ellipse_spans(
    center: (f64, f64),
    semi_axes: (f64, f64),
    width: u32,
    height: u32,
) -> Vec<(u32, u32, u32)> {
    let (cy, cx) = center;
    let (ry, rx) = semi_axes;
    let mut out = Vec::new();
    if !(ry > 0.0 && rx > 0.0) {
        return out;
    }
    let y_lo = (cy - ry).ceil().max(0.0);
    let y_hi = (cy + ry).floor().min(height as f64 - 1.0);
    let mut y = y_lo;
    while y <= y_hi {
        let dy = (y - cy) / ry;
        let half = rx * (1.0 - dy * dy).max(0.0).sqrt();
        let lo = (cx - half).ceil().max(0.0);
        let hi = (cx + half).floor().min(width as f64 - 1.0);
        if lo <= hi {
            out.push((y as u32, lo as u32, hi as u32));
        }
        y += 1.0;
    }
    out
}

/// Like [`ellipse_spans`] with the radius modulated by
/// `1 + ρ·(sin 3θ + sin 5θ + sin 7θ)/3` for the given phases.
fn rough_ellipse_spans(
    center: (f64, f64),
    semi_axes: (f64, f64),
    rho: f64,
    phases: &[f64; 3],
    width: u32,
    height: u32,
) -> Vec<(u32, u32, u32)> {
    let (cy, cx) = center;
    let (ry, rx) = semi_axes;
    let grow = 1.0 + rho;
    let y_lo = (cy - ry * grow).ceil().max(0.0) as i64;
    let y_hi = (cy + ry * grow).floor().min(height as f64 - 1.0) as i64;
    let x_lo = (cx - rx * grow).ceil().max(0.0) as i64;
    let x_hi = (cx + rx * grow).floor().min(width as f64 - 1.0) as i64;
    let mut out = Vec::new();
    for y in y_lo..=y_hi {
        let mut run: Option<(i64, i64)> = None;
        for x in x_lo..=x_hi {
            let u = (x as f64 - cx) / rx;
            let v = (y as f64 - cy) / ry;
            let theta = v.atan2(u);
            let m = 1.0
                + rho
                    * ((3.0 * theta + phases[0]).sin()
                        + (5.0 * theta + phases[1]).sin()
                        + (7.0 * theta + phases[2]).sin())
                    / 3.0;
            let inside = (u * u + v * v).sqrt() <= m;
            match (&mut run, inside) {
                (Some(r), true) => r.1 = x,
                (None, true) => run = Some((x, x)),
                (Some(r), false) => {
                    out.push((y as u32, r.0 as u32, r.1 as u32));
                    run = None;
                }
                (None, false) => {}
            }
        }
        if let Some(r) = run {
            out.push((y as u32, r.0 as u32, r.1 as u32));
        }
    }
    out
}

/// Intensity of pit pixels before noise.
/// Row and inclusive column range of one painted run.
pub type Span = (u32, u32, u32);

pub const PIT_LEVEL: u8 = 40;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Frame renderer with the per-scenario textures and noise pool cached.
pub struct Renderer<'a> {
    truth: &'a GroundTruth,
    cal: Calibration,
    textures: Vec<Vec<u8>>,
    /// Gaussian samples; each frame adds a window at a random offset.
    noise: Vec<i8>,
}

impl<'a> Renderer<'a> {
    pub fn new(truth: &'a GroundTruth) -> Result<Self> {
        let cfg = &truth.config;
        let cal = cfg.calibration();
        let (w, h) = (cfg.frame_width_px as usize, cfg.frame_height_px as usize);
        let textures = (0..cal.frames_per_revolution())
            .map(|k| texture(w, h, splitmix64(cfg.texture_seed ^ (k as u64).wrapping_mul(0x2545_f491))))
            .collect();
        let pool = 2 * w * h;
        let noise = if cfg.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, cfg.noise_sigma)
                .map_err(|e| Error::invalid("noise_sigma", e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ 0x6e_6f69_7365));
            (0..pool)
                .map(|_| normal.sample(&mut rng).round().clamp(-127.0, 127.0) as i8)
                .collect()
        } else {
            Vec::new()
        };
        Ok(Renderer {
            truth,
            cal,
            textures,
            noise,
        })
    }

    pub fn calibration(&self) -> &Calibration {
        &self.cal
    }

    /// The noise-free background of frame position `frame_index`.
    pub fn texture(&self, frame_index: u32) -> &[u8] {
        &self.textures[frame_index as usize]
    }

    /// Pixel spans of every pit visible in the given frame.
    pub fn pit_spans(&self, drive: u32, frame_index: u32) -> Vec<(u32, Vec<Span>)> {
        let cfg = &self.truth.config;
        let (w, h) = (cfg.frame_width_px, cfg.frame_height_px);
        let s = self.cal.mm_per_px;
        let mut out = Vec::new();
        for pit in &self.truth.pits {
            let Some((a, b)) = self.truth.size_at(pit, drive) else {
                continue;
            };
            let (row, col) = surface_to_frame(&self.cal, &cfg.spindle, frame_index, &pit.centroid);
            let (ry, rx) = self.cal.join(a / (2.0 * s), b / (2.0 * s));
            let grow = 1.0 + cfg.boundary_roughness;
            if row + ry * grow < 0.0
                || col + rx * grow < 0.0
                || row - ry * grow > h as f64 - 1.0
                || col - rx * grow > w as f64 - 1.0
            {
                continue;
            }
            let spans = if cfg.boundary_roughness > 0.0 {
                rough_ellipse_spans((row, col), (ry, rx), cfg.boundary_roughness, &pit.roughness_phases, w, h)
            } else {
                ellipse_spans((row, col), (ry, rx), w, h)
            };
            out.push((pit.pit_id, spans));
        }
        out
    }

    pub fn render_frame(&self, drive: u32, frame_index: u32) -> GrayImage {
        let cfg = &self.truth.config;
        let (w, h) = (cfg.frame_width_px, cfg.frame_height_px);
        let mut px = self.textures[frame_index as usize].clone();
        for (pit_id, spans) in self.pit_spans(drive, frame_index) {
            let pit = &self.truth.pits[pit_id as usize];
            if pit.frame_index != frame_index {
                warn!("pit {pit_id} reaches into frame {frame_index} outside its own frame");
            }
            for (y, lo, hi) in spans {
                let row = y as usize * w as usize;
                px[row + lo as usize..=row + hi as usize].fill(PIT_LEVEL);
            }
        }
        if !self.noise.is_empty() {
            let key = splitmix64(cfg.seed ^ splitmix64(((drive as u64) << 16) | frame_index as u64));
            let off = (key % (self.noise.len() - px.len() + 1) as u64) as usize;
            for (p, &n) in px.iter_mut().zip(&self.noise[off..]) {
                *p = p.saturating_add_signed(n);
            }
        }
        GrayImage::from_raw(w, h, px).expect("buffer matches dimensions")
    }

    pub fn drive_meta(&self, drive: u32) -> DriveMeta {
        drive_meta(self.truth, drive)
    }

    /// All frames of one drive with its metadata.
    pub fn render_drive(&self, drive: u32) -> Result<(Vec<(FrameRef, GrayImage)>, DriveMeta)> {
        let cfg = &self.truth.config;
        if drive >= cfg.n_drives {
            return Err(Error::invalid(
                "drive_index",
                format!("{drive} outside 0..{}", cfg.n_drives),
            ));
        }
        let frames = (0..self.cal.frames_per_revolution())
            .map(|k| {
                let f = FrameRef::new(drive, k, self.cal.angular_step_deg, cfg.frame_width_px, cfg.frame_height_px);
                (f, self.render_frame(drive, k))
            })
            .collect();
        Ok((frames, self.drive_meta(drive)))
    }
}

/// Renders one drive without reusing a [`Renderer`].
pub fn render_drive(truth: &GroundTruth, drive_index: u32) -> Result<(Vec<(FrameRef, GrayImage)>, DriveMeta)> {
    Renderer::new(truth)?.render_drive(drive_index)
}

/// Start of the synthetic test campaign.
pub fn campaign_start() -> DateTime<Utc> {
    DateTime::from_timestamp(1_704_067_200, 0).expect("valid timestamp")
}

pub fn drive_meta(truth: &GroundTruth, drive: u32) -> DriveMeta {
    let cfg = &truth.config;
    let hours = cfg.drive_interval_h * drive as f64;
    let t = truth.normalized_time(drive);
    // Warm-up towards a plateau plus a steep rise at the end of life, so the
    // flange crosses 70 °C exactly when the spindle fails.
    let temperature = 50.0 - 30.0 * (-(drive as f64) / 3.0).exp() + 22.0 * t.powi(8);
    DriveMeta {
        drive_index: drive,
        wall_time: campaign_start() + Duration::seconds((hours * 3600.0).round() as i64),
        cumulative_revolutions: drive as u64 * cfg.revolutions_per_drive(),
        flange_temperature_c: Some((temperature * 100.0).round() / 100.0),
        frame_count: truth_frames(cfg),
    }
}

fn truth_frames(cfg: &ScenarioConfig) -> u32 {
    cfg.calibration().frames_per_revolution()
}

/// Smooth background around grey level 150 with a faint static grain.
fn texture(w: usize, h: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wave = |amp: f64, period: f64, n: usize| -> Vec<f64> {
        let phase = rng.random_range(0.0..TAU);
        (0..n).map(|i| amp * (TAU * i as f64 / period + phase).sin()).collect()
    };
    let cols = wave(5.0, 173.0, w);
    let rows = wave(4.0, 131.0, h);
    let diag = wave(3.0, 97.0, w + h);
    let mut out = Vec::with_capacity(w * h);
    let mut state = seed;
    for y in 0..h {
        for x in 0..w {
            state = splitmix64(state);
            let grain = (state % 5) as f64 - 2.0;
            let v = 150.0 + cols[x] + rows[y] + diag[x + y] + grain;
            out.push(v.round() as u8);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            frame_width_px: 648,
            frame_height_px: 486,
            ..ScenarioConfig::new(3, 120)
        }
    }

    #[test]
    fn birth_equality() {
        let cfg = ScenarioConfig::default();
        let tr = cfg.growth(0.3);
        let (a, b) = pit_trajectory(&tr, 0.3).unwrap();
        assert_eq!(a, cfg.tangential_base_mm);
        assert_eq!(b, cfg.tangential_base_mm);
        assert!(pit_trajectory(&tr, 0.29).is_err());
    }

    #[test]
    fn default_ratio_near_ten() {
        let cfg = ScenarioConfig::default();
        let (a, b) = pit_trajectory(&cfg.growth(BIRTH_PHASES[0].0), 1.0).unwrap();
        let r = b / a;
        assert!((8.0..=12.0).contains(&r), "{r}");
    }

    #[test]
    fn saturation_limit() {
        let cfg = ScenarioConfig {
            axial_rate: 1e12,
            axial_linear_mm: 0.0,
            ..ScenarioConfig::default()
        };
        let (a, _) = pit_trajectory(&cfg.growth(0.2), 0.2 + 1e-9).unwrap();
        assert!((a - cfg.axial_saturation_mm).abs() < 1e-12);
    }

    #[test]
    fn null_process_has_no_pits() {
        let cfg = ScenarioConfig {
            birth_rates: [0.0; 3],
            ..ScenarioConfig::default()
        };
        let truth = generate_scenario(&cfg).unwrap();
        assert!(truth.pits.is_empty());
        assert!(truth.samples.is_empty());
    }

    #[test]
    fn same_seed_same_truth() {
        let cfg = ScenarioConfig::new(11, 120);
        assert_eq!(generate_scenario(&cfg).unwrap(), generate_scenario(&cfg).unwrap());
        let other = generate_scenario(&ScenarioConfig::new(12, 120)).unwrap();
        assert_ne!(generate_scenario(&cfg).unwrap().pits, other.pits);
    }

    #[test]
    fn births_respect_phases_and_separation() {
        let cfg = ScenarioConfig::default();
        let truth = generate_scenario(&cfg).unwrap();
        let c = cfg.spindle.circumference_mm();
        for p in &truth.pits {
            assert!(p.trajectory.birth_time >= 0.2);
            assert!(p.birth_drive as f64 >= p.trajectory.birth_time * 119.0);
        }
        for (i, p) in truth.pits.iter().enumerate() {
            for q in &truth.pits[i + 1..] {
                assert!(p.centroid.distance(&q.centroid, c) >= 3.0);
            }
        }
    }

    #[test]
    fn crowding_is_infeasible() {
        let cfg = ScenarioConfig {
            birth_rates: [5.0, 5.0, 5.0],
            ..ScenarioConfig::default()
        };
        assert!(matches!(generate_scenario(&cfg), Err(Error::InfeasiblePlacement { .. })));
    }

    #[test]
    fn truth_is_monotone() {
        let truth = generate_scenario(&ScenarioConfig::new(5, 120)).unwrap();
        for p in &truth.pits {
            let s: Vec<_> = truth.samples.iter().filter(|s| s.pit_id == p.pit_id).collect();
            assert_eq!(s[0].drive_index, p.birth_drive);
            for w in s.windows(2) {
                assert!(w[1].axial_mm >= w[0].axial_mm);
                assert!(w[1].tangential_mm >= w[0].tangential_mm);
                assert!(w[1].area_mm2 >= w[0].area_mm2);
            }
        }
    }

    #[test]
    fn cadence() {
        let truth = generate_scenario(&ScenarioConfig::new(1, 10)).unwrap();
        assert_eq!(truth.config.revolutions_per_drive(), 96_000);
        let m = drive_meta(&truth, 3);
        assert_eq!(m.cumulative_revolutions, 288_000);
        assert_eq!(m.frame_count, 16);
        assert_eq!((m.wall_time - campaign_start()).num_hours(), 12);
        assert!(drive_meta(&truth, 9).flange_temperature_c.unwrap() > 70.0);
        assert!(drive_meta(&truth, 8).flange_temperature_c.unwrap() < 70.0);
    }

    #[test]
    fn empty_scene_is_texture_plus_noise() {
        let cfg = small();
        let truth = generate_scenario(&cfg).unwrap();
        let r = Renderer::new(&truth).unwrap();
        let img = r.render_frame(0, 4);
        let tex = r.texture(4);
        let n = tex.len() as f64;
        let diffs: Vec<f64> = img.as_raw().iter().zip(tex).map(|(&a, &b)| a as f64 - b as f64).collect();
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "{mean}");
        // Rounded N(0, 2²) has variance 4 + 1/12.
        assert!((var - 4.083).abs() < 0.15, "{var}");
        assert_eq!(r.render_frame(0, 4), img);
        assert_ne!(r.render_frame(1, 4), img);

        let quiet = GroundTruth {
            config: ScenarioConfig { noise_sigma: 0.0, ..cfg },
            ..truth
        };
        let r = Renderer::new(&quiet).unwrap();
        assert_eq!(r.render_frame(0, 2).as_raw().as_slice(), r.texture(2));
    }

    #[test]
    fn rendered_pixel_count_matches_area() {
        let cfg = ScenarioConfig::default();
        let s = cfg.calibration().mm_per_px;
        for (a, b) in [(0.15, 0.15), (0.2, 0.9), (0.25, 2.5)] {
            for shift in [0.0, 0.3, 0.71] {
                let spans = ellipse_spans((400.0 + shift, 500.0 - shift), (b / (2.0 * s), a / (2.0 * s)), 1296, 972);
                let n: u64 = spans.iter().map(|&(_, lo, hi)| (hi - lo + 1) as u64).sum();
                let want = std::f64::consts::FRAC_PI_4 * a * b / (s * s);
                assert!(want >= 100.0);
                assert!((n as f64 - want).abs() / want < 0.05, "{n} vs {want}");
            }
        }
    }

    #[test]
    fn pits_are_drawn_in_their_frame() {
        let truth = generate_scenario(&ScenarioConfig::new(9, 120)).unwrap();
        let r = Renderer::new(&truth).unwrap();
        let last = truth.config.n_drives - 1;
        for k in 0..16 {
            for (id, spans) in r.pit_spans(last, k) {
                assert_eq!(truth.pits[id as usize].frame_index, k);
                assert!(!spans.is_empty());
            }
        }
    }

    #[test]
    fn roughness_perturbs_outline() {
        let phases = [0.1, 1.0, 2.0];
        let smooth = ellipse_spans((50.0, 50.0), (20.0, 30.0), 100, 100);
        let rough = rough_ellipse_spans((50.0, 50.0), (20.0, 30.0), 0.2, &phases, 100, 100);
        assert_ne!(smooth, rough);
        let flat = rough_ellipse_spans((50.0, 50.0), (20.0, 30.0), 0.0, &phases, 100, 100);
        assert_eq!(smooth, flat);
    }
}
