//! Command-line front end for the flood-sensitivity pipeline.
//!
//! Stages: `gen-fixture` (synthetic terrain) -> `gen-dems` (factorial DEM
//! database) -> `run` (Monte-Carlo simulation campaign) -> `convergence`
//! (sampling diagnostics) -> `analyze` (uncertainty and sensitivity maps).
//! `validate` checks a config without doing any work.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime failure.
//! Machine-readable logs go to stderr as JSON lines; progress goes to
//! stdout.

mod jsonlog;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use floodsens_core::campaign::{self, convergence_trace, stabilization_n, CampaignStore};
use floodsens_core::config::{self, ConfigError, PipelineConfig};
use floodsens_core::ensemble::{self, DemManifest};
use floodsens_core::fixture::{self, FixtureSize};
use floodsens_core::gsa::{
    align_outputs, bootstrap_ci, sobol_maps, ua_stats, AlignedOutputs, Factor, FactorSi,
    SobolMapOptions, SobolOptions,
};
use floodsens_core::probe::ProbeSet;
use floodsens_core::raster;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "floodsens",
    version,
    about = "Terrain-ensemble flood sensitivity pipeline"
)]
struct Cli {
    /// Emit debug-level log events.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic demo terrain, hydrograph, probes and a
    /// ready-to-run config.
    GenFixture(GenFixtureArgs),
    /// Validate a pipeline config, reporting every violation.
    Validate(ValidateArgs),
    /// Build (or resume) the factorial DEM database.
    GenDems(GenDemsArgs),
    /// Execute (or resume) the simulation campaign.
    Run(RunArgs),
    /// Running-statistics convergence traces at the probes.
    Convergence(ConvergenceArgs),
    /// Uncertainty statistics and sensitivity maps from the result store.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct GenFixtureArgs {
    #[arg(long)]
    out: PathBuf,
    /// `small` (200x200 at 1 m) or `medium` (400x400).
    #[arg(long, default_value = "small")]
    size: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct GenDemsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Resume an interrupted build (the manifest makes this the default;
    /// the flag is accepted for symmetry).
    #[arg(long)]
    resume: bool,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

#[derive(Args)]
struct RunArgs {
    /// DEM database manifest (manifest.jsonl).
    #[arg(long)]
    manifest: PathBuf,
    /// Pipeline config supplying the sampling plan and scenario.
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    #[arg(long)]
    store: PathBuf,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    probes: PathBuf,
    /// Seed of the record permutation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (defaults to `<store>/convergence`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stabilization window (samples); default 10% of the trace.
    #[arg(long)]
    window: Option<usize>,
    /// Stabilization tolerance relative to the final mean.
    #[arg(long, default_value_t = 0.01)]
    tol: f64,
    /// Also write SVG line plots.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    probes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Analysis grid cell size (m).
    #[arg(long, default_value_t = 5.0)]
    cellsize: f64,
    /// Alignment kernel: `average` or `nearest`.
    #[arg(long, default_value = "average")]
    method: String,
    /// Bootstrap replicates per probe.
    #[arg(long, default_value_t = 10_000)]
    boot: usize,
    /// Bootstrap subsample size.
    #[arg(long = "boot-n", default_value_t = 1_000)]
    boot_n: usize,
    #[arg(long = "boot-seed", default_value_t = 0)]
    boot_seed: u64,
    /// Minimum aligned samples required for maps.
    #[arg(long = "min-samples", default_value_t = 100)]
    min_samples: usize,
    /// Building-footprint raster; cells with majority coverage are masked.
    #[arg(long = "mask-buildings")]
    mask_buildings: Option<PathBuf>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    jsonlog::init(cli.verbose);
    let result = match cli.command {
        Command::GenFixture(args) => gen_fixture(args),
        Command::Validate(args) => validate(args),
        Command::GenDems(args) => gen_dems(args),
        Command::Run(args) => run(args),
        Command::Convergence(args) => convergence(args),
        Command::Analyze(args) => analyze(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Config validation failures exit 1, runtime failures 2.
            let code = if e.downcast_ref::<ConfigError>().is_some() {
                1
            } else {
                2
            };
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

/// Copy the resolved config and tool version next to a stage's outputs.
fn write_provenance(dir: &Path, config: Option<&PipelineConfig>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("tool_version.txt"), format!("floodsens {VERSION}\n"))?;
    if let Some(config) = config {
        fs::write(dir.join("config.resolved.toml"), config.to_toml())?;
    }
    Ok(())
}

fn gen_fixture(args: GenFixtureArgs) -> Result<()> {
    let size = FixtureSize::parse(&args.size)
        .ok_or_else(|| anyhow!("unknown size {:?}, expected small or medium", args.size))?;
    let fixture = fixture::generate(size, args.seed);
    let paths = fixture.write_to(&args.out)?;
    fs::write(args.out.join("config.toml"), config::demo_config_toml())?;
    write_provenance(&args.out, None)?;
    println!("fixture written to {}", args.out.display());
    println!("  terrain    {}", paths.dtm.display());
    println!("  hydrograph {}", paths.hydrograph.display());
    println!("  probes     {}", paths.probes.display());
    println!("  config     {}", args.out.join("config.toml").display());
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<()> {
    let config = config::validate_config(&args.config)?;
    println!("config ok: {}", args.config.display());
    println!(
        "  design: {} detail levels x {} draws x {} resolutions = {} DEMs",
        config.design.s_levels.len(),
        config.noise.n_draws,
        config.design.r_factors.len(),
        config.design.s_levels.len()
            * config.noise.n_draws as usize
            * config.design.r_factors.len()
    );
    println!("  campaign budget: {}", config.sampling.budget);
    Ok(())
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("worker pool")
        .install(f)
}

fn gen_dems(args: GenDemsArgs) -> Result<()> {
    let config = config::validate_config(&args.config)?;
    let stack = config.load_stack().context("loading feature stack")?;
    println!(
        "building DEM database: {} levels x {} draws x {} factors -> {}",
        config.design.s_levels.len(),
        config.noise.n_draws,
        config.design.r_factors.len(),
        args.out.display()
    );
    let manifest = with_pool(args.workers, || {
        ensemble::build_database(
            &stack,
            &config.noise,
            &config.design.s_levels,
            &config.design.r_factors,
            &args.out,
        )
    })?;
    write_provenance(&args.out, Some(&config))?;
    println!("manifest: {} members", manifest.entries.len());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let config = config::validate_config(&args.plan)?;
    let manifest = DemManifest::read(&args.manifest).context("reading DEM manifest")?;
    let plan = campaign::draw_plan(&manifest, &config.sampling_plan())?;
    let scenario = config.scenario()?;
    println!(
        "campaign: {} runs on {} workers -> {}",
        plan.len(),
        args.workers,
        args.store.display()
    );
    let summary = campaign::execute(&plan, &manifest, &scenario, args.workers, &args.store)?;
    write_provenance(&args.store, Some(&config))?;
    println!(
        "done: {} simulated, {} failed, {} resumed/skipped, {:.1} s wall",
        summary.done, summary.failed, summary.skipped, summary.wall_seconds
    );
    if summary.failed > 0 {
        println!("warning: {} runs failed; see records.jsonl", summary.failed);
    }
    Ok(())
}

fn convergence(args: ConvergenceArgs) -> Result<()> {
    let store = CampaignStore::open(&args.store)?;
    let probes = ProbeSet::read_csv(&args.probes)?;
    let out = args.out.unwrap_or_else(|| args.store.join("convergence"));
    fs::create_dir_all(&out)?;
    let traces = convergence_trace(&store, &probes, args.seed)?;
    let mut summary = String::from("id,n_samples,window,tol,stabilized_at\n");
    for trace in &traces {
        let window = args.window.unwrap_or((trace.points.len() / 10).max(2));
        let n_star = stabilization_n(trace, window, args.tol);
        let mut csv = String::from("n,mean,variance\n");
        for p in &trace.points {
            csv.push_str(&format!("{},{},{}\n", p.n, p.mean, p.variance));
        }
        fs::write(out.join(format!("trace_{}.csv", trace.probe_id)), csv)?;
        if args.svg {
            let points: Vec<(f64, f64)> =
                trace.points.iter().map(|p| (p.n as f64, p.mean)).collect();
            let plot = svg::line_plot(
                &format!("running mean at {}", trace.probe_id),
                "samples",
                "mean depth (m)",
                &points,
            );
            fs::write(
                out.join(format!("probe_{}_convergence.svg", trace.probe_id)),
                plot,
            )?;
        }
        let n_star_text = n_star.map_or(String::new(), |n| n.to_string());
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            trace.probe_id,
            trace.points.len(),
            window,
            args.tol,
            n_star_text
        ));
        match n_star {
            Some(n) => println!(
                "{}: stabilized at N = {n} (window {window}, tol {})",
                trace.probe_id, args.tol
            ),
            None => println!("{}: not stabilized within the trace", trace.probe_id),
        }
    }
    fs::write(out.join("convergence_summary.csv"), summary)?;
    println!("traces written to {}", out.display());
    Ok(())
}

fn si_field(si: FactorSi) -> String {
    match si {
        FactorSi::Value(v) => format!("{v}"),
        FactorSi::Insufficient => String::new(),
    }
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let method = match args.method.as_str() {
        "average" => raster::ResampleMethod::Average,
        "nearest" => raster::ResampleMethod::Nearest,
        other => return Err(anyhow!("unknown method {other:?}")),
    };
    let store = CampaignStore::open(&args.store)?;
    let probes = ProbeSet::read_csv(&args.probes)?;
    fs::create_dir_all(&args.out)?;

    let done = store.done_records()?;
    println!(
        "aligning {} results onto a {} m grid",
        done.len(),
        args.cellsize
    );
    let aligned = align_outputs(&store, args.cellsize, method)?;

    let ua = ua_stats(&aligned, &probes, floodsens_core::gsa::DEFAULT_HIST_BIN)?;
    raster::write_raster(&ua.mean, &args.out.join("mean.asc"))?;
    raster::write_raster(&ua.variance, &args.out.join("var.asc"))?;
    for probe in &ua.probes {
        let mut csv = String::from("bin_lo,bin_hi,count\n");
        for bin in &probe.histogram {
            csv.push_str(&format!("{},{},{}\n", bin.lo, bin.hi, bin.count));
        }
        fs::write(args.out.join(format!("probe_{}_hist.csv", probe.id)), csv)?;
    }

    let mask = match &args.mask_buildings {
        Some(path) => Some(raster::read_raster(path)?),
        None => None,
    };
    let opts = SobolMapOptions {
        min_samples: args.min_samples,
        exclude_buildings: mask,
        estimator: SobolOptions::default(),
    };
    println!("computing sensitivity maps over {} cells", aligned.n_cells());
    let maps = sobol_maps(&aligned, &opts)?;
    for factor in Factor::ALL {
        let f = factor.index();
        raster::write_raster(
            &maps.si[f],
            &args.out.join(format!("si_{}.asc", factor.code())),
        )?;
        let mut csv = String::from("bin_lo,bin_hi,count\n");
        for bin in &maps.histograms[f] {
            csv.push_str(&format!("{},{},{}\n", bin.lo, bin.hi, bin.count));
        }
        fs::write(args.out.join(format!("si_hist_{}.csv", factor.code())), csv)?;
    }
    raster::write_raster(&maps.argmax, &args.out.join("si_argmax.asc"))?;

    write_probes_csv(&args, &aligned, &ua, &probes)?;

    let meta = serde_json::json!({
        "tool_version": VERSION,
        "n_results": aligned.n_samples(),
        "analysis_cellsize": args.cellsize,
        "method": args.method,
        "boot": args.boot,
        "boot_n": args.boot_n,
        "boot_seed": args.boot_seed,
        "min_samples": args.min_samples,
        "area_fraction": {
            "S": maps.area_fraction[0],
            "R": maps.area_fraction[1],
            "E": maps.area_fraction[2],
        },
        "never_wet_cells": maps.never_wet,
        "masked_cells": maps.masked,
        "insufficient_cells": {
            "S": maps.insufficient[0],
            "R": maps.insufficient[1],
            "E": maps.insufficient[2],
        },
    });
    fs::write(args.out.join("analysis_meta.json"), format!("{meta:#}\n"))?;
    write_provenance(&args.out, None)?;
    println!(
        "area won: S {:.0}%, R {:.0}%, E {:.0}%  (never wet: {}, masked: {})",
        maps.area_fraction[0] * 100.0,
        maps.area_fraction[1] * 100.0,
        maps.area_fraction[2] * 100.0,
        maps.never_wet,
        maps.masked
    );
    println!("analysis written to {}", args.out.display());
    Ok(())
}

/// Per-probe indices with bootstrap intervals, from the aligned cell each
/// probe falls in.
fn write_probes_csv(
    args: &AnalyzeArgs,
    aligned: &AlignedOutputs,
    ua: &floodsens_core::gsa::UaSummary,
    probes: &ProbeSet,
) -> Result<()> {
    let mut csv = String::from(
        "id,x,y,n,var_y,si_S,si_S_lo,si_S_hi,si_R,si_R_lo,si_R_hi,si_E,si_E_lo,si_E_hi,dip,bimodal\n",
    );
    for probe in &probes.probes {
        let Ok((row, col)) = ua.mean.cell_at(probe.x, probe.y) else {
            log::warn!("probe {} outside the analysis grid", probe.id);
            continue;
        };
        let cell = row * aligned.header.ncols + col;
        let samples = aligned.cell_samples(cell);
        let est = floodsens_core::gsa::sobol_first_order(&samples, &SobolOptions::default());
        let n_sub = args.boot_n.min(samples.len());
        let ci = if est.is_some() && n_sub >= 2 {
            bootstrap_ci(
                &samples,
                args.boot,
                n_sub,
                0.95,
                args.boot_seed,
                &SobolOptions::default(),
            )
        } else {
            [None, None, None]
        };
        let dist = ua.probes.iter().find(|p| p.id == probe.id);
        let (var_y, si) = match &est {
            Some(e) => (format!("{}", e.var_y), e.si),
            None => (String::new(), [FactorSi::Insufficient; 3]),
        };
        csv.push_str(&format!(
            "{},{},{},{}",
            probe.id,
            probe.x,
            probe.y,
            samples.len()
        ));
        csv.push_str(&format!(",{var_y}"));
        for f in 0..3 {
            let (lo, hi) = ci[f]
                .map(|c| (format!("{}", c.lo), format!("{}", c.hi)))
                .unwrap_or_default();
            csv.push_str(&format!(",{},{},{}", si_field(si[f]), lo, hi));
        }
        match dist {
            Some(d) => csv.push_str(&format!(",{},{}\n", d.dip, d.bimodal)),
            None => csv.push_str(",,\n"),
        }
    }
    fs::write(args.out.join("probes_si.csv"), csv)?;
    Ok(())
}
