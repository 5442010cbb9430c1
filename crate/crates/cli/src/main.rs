//! `pitwear`: measure, track and assess pitting wear on ball screw spindles.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use pitwear::pipeline::{analyze, eol_report, measure_dataset, track_observations, Analysis};
use pitwear::store::{self, load_dataset, read_json, Dataset};
use pitwear::synth::{generate_scenario, Renderer, ScenarioConfig};
use pitwear::{
    DatasetHeader, EolPolicy, EolReport, PitObservation, PitTrack, SegmentationParams,
    TrackingParams, Validate,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_EXCEEDED: u8 = 3;

#[derive(Parser)]
#[command(name = "pitwear", version, about = "Pitting wear quantification for ball screw drive spindles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with ground truth.
    Simulate(SimulateArgs),
    /// Segment every drive against drive 0 -> out/observations.csv.
    Measure(MeasureArgs),
    /// Associate observations into pit tracks -> out/tracks.json.
    Track(StageArgs),
    /// Series, phase fits and approximation errors -> out/analysis.json.
    Analyze(StageArgs),
    /// Evaluate the end-of-life criterion -> out/eol_report.json.
    Eol(EolArgs),
    /// Run every missing stage and write a summary.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    drives: u32,
    #[arg(long)]
    out: PathBuf,
    /// Scenario JSON; flags given explicitly override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defaults to the last drive.
    #[arg(long)]
    failure_drive: Option<u32>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    texture_seed: Option<u64>,
    /// Births per drive in the three phases, e.g. `0.12,0.3,0.6`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    birth_rates: Option<Vec<f64>>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    roughness: Option<f64>,
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Run configuration JSON.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Worker threads for frame segmentation.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct EolArgs {
    #[command(flatten)]
    stage: StageArgs,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    stage: StageArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
}

/// Contents of `--params`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    dataset: Option<PathBuf>,
    segmentation: SegmentationParams,
    tracking: TrackingParams,
    eol: EolConfig,
    outputs: OutputSelection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EolConfig {
    alpha: f64,
}

impl Default for EolConfig {
    fn default() -> Self {
        EolConfig { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OutputSelection {
    /// Also write one CSV per analysis series.
    series_csv: bool,
}

impl Default for OutputSelection {
    fn default() -> Self {
        OutputSelection { series_csv: true }
    }
}

enum Failure {
    Usage(String),
    Data(pitwear::Error),
}

impl From<pitwear::Error> for Failure {
    fn from(e: pitwear::Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = Result<u8, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

impl RunConfig {
    fn load(stage: &StageArgs) -> Result<(RunConfig, Dataset), Failure> {
        let cfg = match &stage.params {
            Some(p) => read_json::<RunConfig>(p)?,
            None => RunConfig::default(),
        };
        for (what, v) in [
            ("segmentation", cfg.segmentation.validate()),
            ("tracking", cfg.tracking.validate()),
        ] {
            if !v.is_valid() {
                return Err(usage(format!("invalid {what} params: {}", v.summary())));
            }
        }
        let ds = load_dataset(&stage.dataset)?;
        Ok((cfg, ds))
    }

    fn policy(&self, ds: &Dataset, alpha: Option<f64>) -> Result<EolPolicy, Failure> {
        let p = EolPolicy::new(alpha.unwrap_or(self.eol.alpha), ds.header.spindle.ball_diameter_mm);
        let v = p.validate();
        if !v.is_valid() {
            return Err(usage(v.summary()));
        }
        Ok(p)
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(usage("--jobs must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| usage(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn simulate(a: &SimulateArgs) -> Outcome {
    let mut cfg = match &a.config {
        Some(p) => read_json::<ScenarioConfig>(p)?,
        None => ScenarioConfig::default(),
    };
    cfg.seed = a.seed;
    cfg.n_drives = a.drives;
    cfg.failure_drive = a.failure_drive.unwrap_or(a.drives.saturating_sub(1));
    if let Some(v) = a.noise_sigma {
        cfg.noise_sigma = v;
    }
    if let Some(v) = a.texture_seed {
        cfg.texture_seed = v;
    }
    if let Some(v) = &a.birth_rates {
        cfg.birth_rates = [v[0], v[1], v[2]];
    }
    if let Some(v) = a.width {
        cfg.frame_width_px = v;
    }
    if let Some(v) = a.height {
        cfg.frame_height_px = v;
    }
    if let Some(v) = a.roughness {
        cfg.boundary_roughness = v;
    }
    let v = cfg.validate();
    if !v.is_valid() {
        return Err(usage(format!("invalid scenario: {}", v.summary())));
    }
    let truth = generate_scenario(&cfg)?;
    let renderer = Renderer::new(&truth)?;
    let header = DatasetHeader {
        spindle: cfg.spindle.clone(),
        load: cfg.load.clone(),
        calibration: *renderer.calibration(),
        frame_width_px: cfg.frame_width_px,
        frame_height_px: cfg.frame_height_px,
        failed: true,
        failure_drive: Some(cfg.failure_drive),
    };
    store::write_header(&a.out, &header)?;
    for d in 0..cfg.n_drives {
        let (frames, meta) = renderer.render_drive(d)?;
        store::write_drive(&a.out, &meta, &frames)?;
    }
    store::write_json(&a.out.join("ground_truth.json"), &truth)?;
    println!(
        "simulated {} drives with {} pits into {}",
        cfg.n_drives,
        truth.pits.len(),
        a.out.display()
    );
    Ok(0)
}

fn observations_path(ds: &Dataset) -> PathBuf {
    ds.out_dir().join(store::OBSERVATIONS_FILE)
}

fn tracks_path(ds: &Dataset) -> PathBuf {
    ds.out_dir().join(store::TRACKS_FILE)
}

fn run_measure(cfg: &RunConfig, ds: &Dataset, jobs: Option<usize>) -> Result<Vec<PitObservation>, Failure> {
    let obs = with_jobs(jobs, || measure_dataset(ds, &cfg.segmentation))??;
    store::write_observations(&observations_path(ds), &obs)?;
    Ok(obs)
}

fn run_track(cfg: &RunConfig, ds: &Dataset, obs: &[PitObservation]) -> Result<Vec<PitTrack>, Failure> {
    let tracks = track_observations(obs, &cfg.tracking, ds.header.spindle.circumference_mm())?;
    store::write_tracks(&tracks_path(ds), &tracks)?;
    Ok(tracks)
}

fn run_analyze(cfg: &RunConfig, ds: &Dataset, tracks: &[PitTrack]) -> Result<Analysis, Failure> {
    let analysis = analyze(&ds.drives, tracks, ds.failure_drive()?)?;
    let out = ds.out_dir();
    if cfg.outputs.series_csv {
        store::write_analysis(&out, &analysis)?;
    } else {
        store::write_json(&out.join(store::ANALYSIS_FILE), &analysis)?;
    }
    Ok(analysis)
}

fn run_eol(cfg: &RunConfig, ds: &Dataset, tracks: &[PitTrack], alpha: Option<f64>) -> Result<EolReport, Failure> {
    let policy = cfg.policy(ds, alpha)?;
    let report = eol_report(
        &ds.drives,
        tracks,
        &policy,
        &ds.header.spindle,
        &ds.header.load,
        ds.failure_drive()?,
    )?;
    store::write_json(&ds.out_dir().join(store::EOL_FILE), &report)?;
    Ok(report)
}

fn verdict_line(r: &EolReport) -> String {
    format!(
        "{}: d_s = {:.4} mm, threshold = {:.4} mm (alpha {}){}",
        if r.exceeded { "EXCEEDED" } else { "ok" },
        r.d_s_mm,
        r.threshold_mm,
        r.alpha,
        match (r.decisive_track, r.first_exceedance_drive) {
            (Some(t), Some(d)) => format!(", track {t}, first at drive {d}"),
            (Some(t), None) => format!(", track {t}"),
            _ => String::new(),
        }
    )
}

fn read_stage_tracks(ds: &Dataset) -> Result<Vec<PitTrack>, Failure> {
    Ok(store::read_tracks(&tracks_path(ds))?)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Measure(a) => {
            let (cfg, ds) = RunConfig::load(&a.stage)?;
            let obs = run_measure(&cfg, &ds, a.jobs)?;
            println!("{} observations", obs.len());
            Ok(0)
        }
        Command::Track(a) => {
            let (cfg, ds) = RunConfig::load(&a)?;
            let obs = store::read_observations(&observations_path(&ds), &ds)?;
            let tracks = run_track(&cfg, &ds, &obs)?;
            println!("{} tracks", tracks.len());
            Ok(0)
        }
        Command::Analyze(a) => {
            let (cfg, ds) = RunConfig::load(&a)?;
            let tracks = read_stage_tracks(&ds)?;
            let analysis = run_analyze(&cfg, &ds, &tracks)?;
            println!("{} series", analysis.series.len());
            Ok(0)
        }
        Command::Eol(a) => {
            let (cfg, ds) = RunConfig::load(&a.stage)?;
            let tracks = read_stage_tracks(&ds)?;
            let report = run_eol(&cfg, &ds, &tracks, a.alpha)?;
            println!("{}", verdict_line(&report));
            Ok(if report.exceeded { EXIT_EXCEEDED } else { 0 })
        }
        Command::Report(a) => {
            let (cfg, ds) = RunConfig::load(&a.stage)?;
            let obs = if observations_path(&ds).exists() {
                store::read_observations(&observations_path(&ds), &ds)?
            } else {
                run_measure(&cfg, &ds, a.jobs)?
            };
            let tracks = if tracks_path(&ds).exists() {
                read_stage_tracks(&ds)?
            } else {
                run_track(&cfg, &ds, &obs)?
            };
            let analysis = run_analyze(&cfg, &ds, &tracks)?;
            let report = run_eol(&cfg, &ds, &tracks, a.alpha)?;
            let text = store::summary_text(&ds, &tracks, &analysis, &report);
            let path = ds.out_dir().join(store::SUMMARY_FILE);
            std::fs::write(&path, &text).map_err(|source| pitwear::Error::Io {
                path: path.clone(),
                source,
            })?;
            print!("{text}");
            info!("wrote {}", path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
