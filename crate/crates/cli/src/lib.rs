//! Subcommand implementations for the `tiltmix` binary.
//!
//! Exit codes: 0 success, 1 a stem failed the band check, 2 bad input
//! (flags, config, trajectory), 3 I/O failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use tiltmix_core::analysis::{self, MIN_BAND_FRACTION};
use tiltmix_core::config::SettingsError;
use tiltmix_core::engine::{render_trajectory, EngineError};
use tiltmix_core::stems::{self, StemBank, StemError, StemParams};
use tiltmix_core::trajectory::TiltTrajectory;
use tiltmix_core::wav::{self, WavError};
use tiltmix_core::{compute_gains, InstrumentId, Settings};

#[derive(Debug, Parser)]
#[command(
    name = "tiltmix",
    version,
    about = "Tilt-controlled five-stem loop mixer"
)]
pub struct Cli {
    #[command(flatten)]
    pub shared: SharedFlags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct SharedFlags {
    /// Settings file (flat key = value document).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for stem generation.
    #[arg(long, global = true, default_value_t = stems::DEFAULT_SEED)]
    pub seed: u64,
    /// 44100 or 48000.
    #[arg(long, global = true, default_value_t = stems::DEFAULT_SAMPLE_RATE_HZ)]
    pub sample_rate: u32,
    #[arg(long, global = true, default_value_t = stems::DEFAULT_BPM)]
    pub bpm: f64,
}

impl Default for SharedFlags {
    fn default() -> Self {
        Self {
            config: None,
            seed: stems::DEFAULT_SEED,
            sample_rate: stems::DEFAULT_SAMPLE_RATE_HZ,
            bpm: stems::DEFAULT_BPM,
        }
    }
}

impl SharedFlags {
    pub fn stem_params(&self) -> StemParams {
        StemParams {
            seed: self.seed,
            sample_rate_hz: self.sample_rate,
            bpm: self.bpm,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        self.stem_params()
            .validate()
            .map_err(|e| CliError::Input(e.to_string()))
    }

    fn settings(&self) -> Result<Settings, CliError> {
        Settings::load(self.config.as_deref()).map_err(|e| match e {
            SettingsError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Input(other.to_string()),
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a tilt trajectory CSV to a mono float WAV.
    Render(RenderArgs),
    /// Generate the five stems and write them with a manifest.
    Stems(StemsArgs),
    /// Run the live control service.
    Serve(ServeArgs),
    /// Report band fraction, RMS and peak for a WAV file or a stem directory.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    pub trajectory: PathBuf,
    pub out: PathBuf,
    /// Seconds to render; defaults to the last trajectory time, or one loop
    /// for a single-point trajectory.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Use stems from this directory instead of generating them.
    #[arg(long)]
    pub stems: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StemsArgs {
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Serve an existing stem export instead of generating one.
    #[arg(long)]
    pub stems: Option<PathBuf>,
    /// Directory of static UI assets.
    #[arg(long)]
    pub ui: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    pub path: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Constraint(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Constraint(_) => 1,
            CliError::Input(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<StemError> for CliError {
    fn from(e: StemError) -> Self {
        match e {
            StemError::Config(_) => CliError::Input(e.to_string()),
            StemError::Crest => CliError::Constraint(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<WavError> for CliError {
    fn from(e: WavError) -> Self {
        match e {
            WavError::Domain(d) => CliError::Input(d.to_string()),
            WavError::Io(io) => CliError::Io(io.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSummary {
    pub duration_s: f64,
    pub samples: usize,
    pub peak: f64,
    /// Per-track output RMS in dBFS at the gains in force at the end.
    pub final_track_rms_dbfs: Vec<(InstrumentId, f64)>,
}

impl RenderSummary {
    pub fn report(&self) -> String {
        let mut out = format!(
            "rendered {:.3} s ({} samples), peak {:.4}\n",
            self.duration_s, self.samples, self.peak
        );
        for (id, db) in &self.final_track_rms_dbfs {
            let _ = writeln!(out, "  {:<8} {db:>8.2} dBFS", id.name());
        }
        out
    }
}

pub fn cmd_render(args: &RenderArgs, flags: &SharedFlags) -> Result<RenderSummary, CliError> {
    flags.validate()?;
    let settings = flags.settings()?;
    let text = std::fs::read_to_string(&args.trajectory)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.trajectory.display())))?;
    let traj = TiltTrajectory::parse_csv(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.trajectory.display())))?;
    let bank = Arc::new(stems::load_or_generate(
        args.stems.as_deref(),
        &flags.stem_params(),
    )?);
    let sr = bank.sample_rate_hz();
    let duration_s = match args.duration {
        Some(d) => d,
        None if traj.end_time() > 0.0 => traj.end_time(),
        None => bank.loop_len() as f64 / f64::from(sr),
    };
    let out = render_trajectory(
        bank.clone(),
        &traj,
        &settings.gains,
        &settings.engine,
        duration_s,
    )?;
    wav::write_wav(&out, sr, &args.out)?;

    // Replay the gate along the control grid to know the final gains.
    let period = settings.engine.control_period(sr);
    let mut gate_on = false;
    let mut final_gains = None;
    for tick in 0..out.len().div_ceil(period) {
        let t = (tick * period) as f64 / f64::from(sr);
        let up = compute_gains(traj.at(t), &settings.gains, gate_on).map_err(EngineError::from)?;
        gate_on = up.gate_on;
        final_gains = Some(up.gains);
    }
    let final_gains = final_gains.expect("at least one control tick");
    let final_track_rms_dbfs = InstrumentId::ALL
        .iter()
        .map(|&id| {
            let level =
                analysis::rms(bank.stem(id)) * final_gains.get(id) * settings.engine.master_gain;
            (id, analysis::to_dbfs(level))
        })
        .collect();
    Ok(RenderSummary {
        duration_s: out.len() as f64 / f64::from(sr),
        samples: out.len(),
        peak: analysis::peak(&out),
        final_track_rms_dbfs,
    })
}

pub fn cmd_stems(args: &StemsArgs, flags: &SharedFlags) -> Result<stems::Manifest, CliError> {
    flags.validate()?;
    let bank = stems::generate_stems(&flags.stem_params())?;
    Ok(bank.export(&args.out_dir)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileReport {
    pub path: PathBuf,
    pub band_fraction: f64,
    pub rms_dbfs: f64,
    pub peak: f64,
}

impl FileReport {
    pub fn passes(&self) -> bool {
        self.band_fraction >= MIN_BAND_FRACTION
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeReport {
    pub files: Vec<FileReport>,
}

impl AnalyzeReport {
    pub fn all_pass(&self) -> bool {
        self.files.iter().all(FileReport::passes)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for f in &self.files {
            let _ = writeln!(
                out,
                "{}  band[180-3200 Hz] {:.4}  rms {:.2} dBFS  peak {:.4}  {}",
                f.path.display(),
                f.band_fraction,
                f.rms_dbfs,
                f.peak,
                if f.passes() { "ok" } else { "OUT OF BAND" }
            );
        }
        out
    }
}

fn analyze_file(path: &Path) -> Result<FileReport, CliError> {
    let data = wav::read_wav(path).map_err(|e| CliError::Io(e.to_string()))?;
    let band_fraction = analysis::verify_band(&data.samples, data.sample_rate_hz)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(FileReport {
        path: path.to_path_buf(),
        band_fraction,
        rms_dbfs: analysis::to_dbfs(analysis::rms(&data.samples)),
        peak: analysis::peak(&data.samples),
    })
}

/// Analyzes one WAV file or every `.wav` in a directory. Band failures are
/// reported in the returned value, not as an error.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<AnalyzeReport, CliError> {
    let path = &args.path;
    let files = if path.is_dir() {
        let mut wavs: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        wavs.sort();
        if wavs.is_empty() {
            return Err(CliError::Io(format!("{}: no .wav files", path.display())));
        }
        wavs
    } else {
        vec![path.clone()]
    };
    let files = files
        .iter()
        .map(|p| analyze_file(p))
        .collect::<Result<_, _>>()?;
    Ok(AnalyzeReport { files })
}

pub fn cmd_serve(args: &ServeArgs, flags: &SharedFlags) -> Result<(), CliError> {
    flags.validate()?;
    let settings = flags.settings()?;
    // Keeps a generated export alive for the life of the server.
    let mut _generated = None;
    let stems_dir = match &args.stems {
        Some(dir) => {
            StemBank::load_dir(dir)?;
            dir.clone()
        }
        None => {
            let dir = tempfile::tempdir().map_err(|e| CliError::Io(e.to_string()))?;
            stems::generate_stems(&flags.stem_params())?.export(dir.path())?;
            let path = dir.path().to_path_buf();
            _generated = Some(dir);
            path
        }
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", args.port))
            .await
            .map_err(|e| CliError::Io(format!("bind port {}: {e}", args.port)))?;
        eprintln!(
            "listening on {} (stems from {})",
            listener
                .local_addr()
                .map_err(|e| CliError::Io(e.to_string()))?,
            stems_dir.display()
        );
        let state =
            tiltmix_service::AppState::new(tiltmix_service::Sessions::new(settings), stems_dir);
        tiltmix_service::serve(listener, state, args.ui.clone())
            .await
            .map_err(|e| CliError::Io(e.to_string()))
    })
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Render(args) => cmd_render(args, &cli.shared).map(|s| {
            print!("{}", s.report());
            0
        }),
        Command::Stems(args) => cmd_stems(args, &cli.shared).map(|m| {
            println!(
                "wrote 5 stems to {} (seed {}, {} bpm, {} Hz, {} samples)",
                args.out_dir.display(),
                m.seed.map_or_else(|| "-".into(), |s| s.to_string()),
                m.bpm,
                m.sample_rate_hz,
                m.loop_len_samples
            );
            0
        }),
        Command::Serve(args) => cmd_serve(args, &cli.shared).map(|()| 0),
        Command::Analyze(args) => cmd_analyze(args).map(|r| {
            print!("{}", r.render());
            if r.all_pass() {
                0
            } else {
                1
            }
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
