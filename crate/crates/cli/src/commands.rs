//! Command-line arguments and the five subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::Serialize;
use serde_json::Value;
use twinbeam::fit::{reconstruct, ReconstructionResult};
use twinbeam::model::{
    DetectedIntensityMoments, DetectorModel, FieldMoments, Histogram2D, ModeComponent, PhotocountMoments,
    TwinBeamParams,
};
use twinbeam::moments::{dark_corrected_moments, inversion_family, photocount_moments};
use twinbeam::photostat::{default_cutoffs, joint_photon_distribution, noise_reduction_factor, sum_distribution};
use twinbeam::qdii::{
    default_axis_max, joint_qdii_grid, nonclassicality, ordering_threshold, uniform_axis, Nonclassicality,
    ThresholdDiagnostics,
};
use twinbeam::simgen::{simulate_histogram, SimConfig};

use crate::error::{CliError, Result};
use crate::io::{self, Format};

#[derive(Debug, Parser)]
#[command(name = "twinbeam", version, about = "Twin-beam state reconstruction from photocount histograms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dark-corrected moments, feasibility margin and the allowed paired variance.
    Moments(MomentsArgs),
    /// Fit the paired variance and write the reconstructed state.
    Reconstruct(ReconstructArgs),
    /// Generate signal-idler and dark histograms.
    Simulate(SimulateArgs),
    /// Sample the s-ordered quasi-distribution of integrated intensities.
    Qdii(QdiiArgs),
    /// Threshold, non-classicality, noise reduction and photon-sum statistics.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Signal-idler histogram file.
    #[arg(long)]
    pub histogram: PathBuf,
    /// Dark histogram file; without one, no dark correction is applied.
    #[arg(long)]
    pub dark: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Efficiencies {
    #[arg(long)]
    pub eta_s: f64,
    #[arg(long)]
    pub eta_i: f64,
}

#[derive(Debug, Args)]
pub struct Detectors {
    #[command(flatten)]
    pub eta: Efficiencies,
    #[arg(long)]
    pub pixels_s: u32,
    #[arg(long)]
    pub pixels_i: u32,
    /// Per-pixel dark-count probability of the signal detector.
    #[arg(long, default_value_t = 0.0)]
    pub dark_s: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dark_i: f64,
}

#[derive(Debug, Args)]
pub struct Output {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub eta: Efficiencies,
    #[command(flatten)]
    pub output: Output,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub detectors: Detectors,
    #[arg(long, default_value_t = 200)]
    pub scan_points: usize,
    #[command(flatten)]
    pub output: Output,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured frame count.
    #[arg(long)]
    pub frames: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QdiiArgs {
    /// Mode parameters (JSON), or a reconstruction result.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub ordering: f64,
    /// Upper end of both intensity axes; defaults to mean + 8 sd of the wider arm.
    #[arg(long)]
    pub grid_max: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub grid_cells: usize,
    /// Also write the grid of the paired field alone.
    #[arg(long)]
    pub paired_grid: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Mode parameters (JSON), or a reconstruction result.
    #[arg(long)]
    pub params: PathBuf,
    #[command(flatten)]
    pub output: Output,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct MomentsReport {
    pub photocount: PhotocountMoments,
    pub dark: PhotocountMoments,
    pub detected: DetectedIntensityMoments,
    pub margin: f64,
    pub var_p_range: (f64, f64),
    pub feasible_range: (f64, f64),
}

#[derive(Debug, Serialize)]
pub struct Diagnostics {
    pub params: TwinBeamParams,
    pub field_moments: FieldMoments,
    pub threshold: ThresholdDiagnostics,
    pub nonclassicality: Nonclassicality,
    pub noise_reduction_factor: f64,
    /// Distribution of `n_s + n_i`.
    pub p_sum: Vec<f64>,
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Moments(a) => cmd_moments(a, stdout),
        Command::Reconstruct(a) => cmd_reconstruct(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Qdii(a) => cmd_qdii(a, stdout),
        Command::Diagnose(a) => cmd_diagnose(a, stdout),
    }
}

fn say(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout.write_all(text.as_bytes()).map_err(|source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn vacuum() -> Histogram2D {
    Histogram2D::from_counts(Array2::from_elem((1, 1), 1.0)).expect("one-cell histogram")
}

fn load_inputs(inputs: &Inputs) -> Result<(Histogram2D, Histogram2D)> {
    let h = io::read_histogram(&inputs.histogram)?;
    let dark = match &inputs.dark {
        Some(p) => io::read_histogram(p)?,
        None => vacuum(),
    };
    Ok((h, dark))
}

/// Accepts either a bare parameter document or any document with a
/// `params` field, such as a reconstruction result.
fn load_params(path: &Path) -> Result<TwinBeamParams> {
    let mut doc: Value = io::read_json(path)?;
    if let Some(inner) = doc.get_mut("params") {
        doc = inner.take();
    }
    serde_json::from_value(doc).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn emit_report<T: Serialize>(report: &T, format: Format, out: Option<&Path>, stem: &str, stdout: &mut dyn Write) -> Result<()> {
    let body = io::format_report(report, format);
    match out {
        Some(dir) => {
            io::create_dir(dir)?;
            io::write_text(&io::report_path(dir, stem, format), &body)
        }
        None => say(stdout, &body),
    }
}

pub fn moments_report(h: &Histogram2D, dark: &Histogram2D, eta_s: f64, eta_i: f64) -> Result<MomentsReport> {
    let photocount = photocount_moments(h)?;
    let dark = photocount_moments(dark)?;
    let detected = dark_corrected_moments(&photocount, &dark)?;
    let family = inversion_family(&detected, eta_s, eta_i)?;
    Ok(MomentsReport {
        photocount,
        dark,
        detected,
        margin: family.margin(),
        var_p_range: family.var_p_range(),
        feasible_range: family.feasible_range(),
    })
}

fn cmd_moments(a: &MomentsArgs, stdout: &mut dyn Write) -> Result<()> {
    let (h, dark) = load_inputs(&a.inputs)?;
    let report = moments_report(&h, &dark, a.eta.eta_s, a.eta.eta_i)?;
    emit_report(&report, a.output.format, a.out.as_deref(), "moments", stdout)
}

pub fn diagnostics(params: &TwinBeamParams) -> Result<Diagnostics> {
    let fm = params.field_moments();
    let p = joint_photon_distribution(params, default_cutoffs(params))?;
    Ok(Diagnostics {
        params: *params,
        field_moments: fm,
        threshold: ordering_threshold(params)?,
        nonclassicality: nonclassicality(&fm)?,
        noise_reduction_factor: noise_reduction_factor(&fm)?,
        p_sum: sum_distribution(&p),
    })
}

fn detector(eta: f64, pixels: u32, dark: f64) -> Result<DetectorModel> {
    Ok(DetectorModel::new(eta, pixels, dark)?)
}

fn cmd_reconstruct(a: &ReconstructArgs, stdout: &mut dyn Write) -> Result<()> {
    let (h, dark) = load_inputs(&a.inputs)?;
    let d = &a.detectors;
    let d_s = detector(d.eta.eta_s, d.pixels_s, d.dark_s)?;
    let d_i = detector(d.eta.eta_i, d.pixels_i, d.dark_i)?;
    let result: ReconstructionResult = reconstruct(&h, &dark, &d_s, &d_i, a.scan_points)?;
    let diag = diagnostics(&result.params)?;

    io::create_dir(&a.out)?;
    let format = a.output.format;
    io::write_text(&io::report_path(&a.out, "result", format), &io::format_report(&result, format))?;
    io::write_text(&a.out.join("scan.csv"), &io::format_scan(&result.scan))?;
    io::write_text(&io::report_path(&a.out, "diagnostics", format), &io::format_report(&diag, format))?;
    let p = result.params.paired();
    say(
        stdout,
        &format!(
            "var_p = {} (declination {}{}), M_p = {}, B_p = {}, s_th = {}\n",
            result.var_p_opt,
            result.declination,
            if result.at_boundary { ", at the border of the allowed range" } else { "" },
            p.modes(),
            p.mean_photons(),
            diag.threshold.s_th.map_or("undefined".to_string(), |s| s.to_string()),
        ),
    )
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg: SimConfig = io::read_json(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(frames) = a.frames {
        cfg.frames = frames;
    }
    let (h, dark) = simulate_histogram(&cfg)?;
    let echo = serde_json::to_string(&cfg).expect("config serializes");
    let comments = [format!("seed: {}", cfg.seed), format!("config: {echo}")];
    io::create_dir(&a.out)?;
    io::write_text(&a.out.join("histogram.csv"), &io::format_histogram(&h, &comments))?;
    io::write_text(&a.out.join("dark.csv"), &io::format_histogram(&dark, &comments))?;
    io::write_text(
        &a.out.join("simulation.json"),
        &(serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n"),
    )?;
    say(stdout, &format!("{} frames, seed {}\n", cfg.frames, cfg.seed))
}

fn cmd_qdii(a: &QdiiArgs, stdout: &mut dyn Write) -> Result<()> {
    let params = load_params(&a.params)?;
    if a.grid_cells < 2 {
        return Err(CliError::Usage(format!("--grid-cells must be at least 2, got {}", a.grid_cells)));
    }
    let max = a.grid_max.unwrap_or_else(|| default_axis_max(&params, a.ordering));
    if !(max > 0.0 && max.is_finite()) {
        return Err(CliError::Usage(format!("--grid-max must be positive, got {max}")));
    }
    let axis = uniform_axis(max, a.grid_cells);
    let grid = joint_qdii_grid(&params, a.ordering, &axis, &axis)?;
    io::create_dir(&a.out)?;
    io::write_text(&a.out.join("qdii.csv"), &io::format_grid(&grid))?;
    if a.paired_grid {
        let pairs = TwinBeamParams::new(params.paired(), ModeComponent::ABSENT, ModeComponent::ABSENT)?;
        let paired = joint_qdii_grid(&pairs, a.ordering, &axis, &axis)?;
        io::write_text(&a.out.join("paired.csv"), &io::format_grid(&paired))?;
    }
    say(
        stdout,
        &format!("s = {}: minimum {}, integral {}\n", a.ordering, grid.min_value(), grid.trapezoid_integral()),
    )
}

fn cmd_diagnose(a: &DiagnoseArgs, stdout: &mut dyn Write) -> Result<()> {
    let params = load_params(&a.params)?;
    emit_report(&diagnostics(&params)?, a.output.format, a.out.as_deref(), "diagnostics", stdout)
}
