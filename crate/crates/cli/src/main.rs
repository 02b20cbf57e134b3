use std::path::PathBuf;
use std::process::ExitCode;

use airtaper::cross_section::SectionConfig;
use airtaper::exec::Execution;
use airtaper::phantom::PRESET_NAMES;
use airtaper::pipeline::{run_analyze, run_compare, run_phantom, AnalysisParams, PhantomSource, RunConfig};
#[cfg(feature = "parallel")]
use anyhow::Context;
use clap::{Args, Parser, Subcommand};

const EXIT_CONFIG: u8 = 2;
const EXIT_ALL_FAILED: u8 = 3;

/// Airway taper measurement from CT.
#[derive(Debug, Parser)]
#[command(name = "airtaper", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Measure taper rates of the airways ending at the given distal points.
    Analyze(AnalyzeArgs),
    /// Render a synthetic tube phantom with ground truth.
    Phantom(PhantomArgs),
    /// Compare taper rates of two result directories.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct OutDir {
    /// Output directory.
    #[arg(short, long, env = "AIRTAPER_OUT", default_value = "airtaper_out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// CT volume (.nrrd, .nhdr, .mha or .mhd).
    #[arg(long)]
    ct: PathBuf,
    /// Lumen segmentation on the CT grid.
    #[arg(long)]
    seg: PathBuf,
    /// CSV `airway_id,x,y,z` of distal voxel indices.
    #[arg(long)]
    distal_points: PathBuf,
    /// CSV `start_id,x,y,z`; the trachea start is detected when omitted.
    #[arg(long)]
    start_points: Option<PathBuf>,
    /// CSV `airway_id,start_idx,end_idx` of bifurcation section ranges;
    /// flags are derived from the branch points when omitted.
    #[arg(long)]
    bifurcation_flags: Option<PathBuf>,
    /// Cross-section pixel size (mm).
    #[arg(long, default_value_t = 0.3)]
    pixel_size: f64,
    /// Cross-section plane width (mm).
    #[arg(long, default_value_t = 40.0)]
    plane_extent: f64,
    /// Centreline sampling interval (mm).
    #[arg(long, default_value_t = 0.25)]
    sample_step: f64,
    /// Rays cast per cross-section.
    #[arg(long, default_value_t = 50)]
    n_rays: usize,
    /// Ray samples per plane pixel.
    #[arg(long, default_value_t = 5)]
    samples_per_pixel: usize,
    /// Added to every measured diameter (mm).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    diameter_offset_mm: f64,
    /// Automatic flags reach this many diameters from a branch point.
    #[arg(long, default_value_t = 1.0)]
    flag_factor: f64,
    /// Leave flagged sections out of the fit.
    #[arg(long)]
    exclude_bifurcations: bool,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Args)]
struct PhantomArgs {
    /// Bundled layout.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec",
          value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    preset: Option<String>,
    /// Phantom spec file (TOML or JSON).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Write gzip-compressed NRRD.
    #[arg(long)]
    gzip: bool,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// First results directory.
    group_a: PathBuf,
    /// Second results directory.
    group_b: PathBuf,
    /// Match airways by id and add agreement statistics.
    #[arg(long)]
    paired: bool,
    #[command(flatten)]
    out: OutDir,
}

impl AnalyzeArgs {
    fn config(self, execution: Execution) -> RunConfig {
        RunConfig {
            ct: self.ct,
            seg: self.seg,
            distal_points: self.distal_points,
            start_points: self.start_points,
            bifurcation_flags: self.bifurcation_flags,
            output_dir: self.out.out,
            params: AnalysisParams {
                section: SectionConfig {
                    pixel_size_mm: self.pixel_size,
                    extent_mm: self.plane_extent,
                    n_rays: self.n_rays,
                    samples_per_pixel: self.samples_per_pixel,
                    calibration_offset_mm: self.diameter_offset_mm,
                    ..SectionConfig::default()
                },
                sample_step_mm: self.sample_step,
                flag_factor: self.flag_factor,
                exclude_bifurcations: self.exclude_bifurcations,
            },
            execution,
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .context("setting up worker threads")?;
    }
    #[cfg(not(feature = "parallel"))]
    if cli.jobs.is_some() {
        log::warn!("built without the `parallel` feature; --jobs is ignored");
    }
    match cli.command {
        Command::Analyze(args) => {
            let summary = run_analyze(&args.config(exec))?;
            for a in summary.airways.iter().filter(|a| !a.ok) {
                eprintln!("{}: {}", a.airway_id, a.error.as_deref().unwrap_or("failed"));
            }
            println!("{} of {} airways measured", summary.n_ok, summary.n_ok + summary.n_failed);
            Ok(if summary.n_ok == 0 { EXIT_ALL_FAILED } else { 0 })
        }
        Command::Phantom(args) => {
            let source = match (args.preset, args.spec) {
                (Some(p), _) => PhantomSource::Preset(p),
                (None, Some(s)) => PhantomSource::File(s),
                (None, None) => unreachable!("clap requires one of --preset or --spec"),
            };
            let p = run_phantom(&source, &args.out.out, args.gzip, exec)?;
            println!(
                "{} airways on a {:?} grid written to {}",
                p.truth.airways.len(),
                p.ct.dims(),
                args.out.out.display()
            );
            Ok(0)
        }
        Command::Compare(args) => {
            let rep = run_compare(&args.group_a, &args.group_b, args.paired, &args.out.out)?;
            println!(
                "taper rate: {} (n = {}) median {:.5}, {} (n = {}) median {:.5}, rank-sum p = {:.4e}",
                rep.group_a.label,
                rep.group_a.n,
                rep.group_a.five_numbers[2],
                rep.group_b.label,
                rep.group_b.n,
                rep.group_b.five_numbers[2],
                rep.slope_rank_sum.p_two_sided
            );
            if let Some(p) = &rep.paired {
                println!(
                    "paired (n = {}): mean difference {:.5}, r = {}, see rank-sum p = {:.4e}",
                    p.airway_ids.len(),
                    p.slope_agreement.mean_diff,
                    p.slope_pearson_r.map_or("n/a".to_string(), |r| format!("{r:.4}")),
                    p.see_rank_sum.p_two_sided
                );
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
