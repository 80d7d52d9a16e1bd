//! `tilediff` command-line front end.
//!
//! Configuration precedence is file, then `TILEDIFF_*` environment
//! variables, then flags. Failures print one JSON object on stderr and
//! exit with 1 for usage or configuration errors, 2 for numerical
//! failures and 3 for I/O or integrity errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tilediff::denoiser::{Denoiser, GaussianMixtureOracle, Mean, MixtureComponent};
use tilediff::eval::{
    convergence_order, mask_shift_upscale, respects_raster_dependencies, seam_study, solver_accuracy_sweep,
    relaxation_sweep, AccuracyConfig, RelaxationConfig, SeamStudyConfig, Table,
};
use tilediff::guidance::Convention;
use tilediff::io::png::{read_png, write_png};
use tilediff::io::{verify, write_pyramid, RunConfig, RunStatus, WriteOptions};
use tilediff::pyramid::{upscale_stage, GridMode, Precision, PyramidSampler, TissueMask};
use tilediff::solver::Method;
use tilediff::{Error, NoiseSchedule, Result};

#[derive(Parser, Debug)]
#[command(name = "tilediff", version, about = "Coarse-to-fine guided diffusion for gigapixel images")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in configuration used when no file is given.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Paper)]
    preset: Preset,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// 512² patches, factor 2, seven stages.
    Paper,
    /// 32² patches, factor 2, three stages.
    Desk,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a full pyramid and write it as tiles plus a manifest.
    Generate(Overrides),
    /// Run one upscaling stage on a PNG guide.
    Upscale {
        #[command(flatten)]
        overrides: Overrides,
        /// Guide image, `z_{s−1}`.
        #[arg(long)]
        input: PathBuf,
        /// Output PNG, `k` times larger.
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        stage: usize,
        /// Spatial resolution of the guide in µm/px.
        #[arg(long)]
        resolution: f64,
    },
    /// Seam energy of grid-shifted versus fixed-grid pyramids.
    EvalSeams {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Write the table here as well as to stdout.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Endpoint error of Heun and Euler against an exact trajectory.
    EvalSolver {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_delimiter = ',', default_values_t = vec![10usize, 20, 40, 80])]
        steps: Vec<usize>,
        #[arg(long, default_value_t = 256)]
        seeds: usize,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Guide consistency as a function of the relaxation bound.
    EvalRelaxation {
        #[command(flatten)]
        overrides: Overrides,
        /// Relaxation values to sweep.
        #[arg(long = "r-values", value_delimiter = ',', default_values_t = vec![0usize, 10, 20, 28, 40])]
        r_values: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        seeds: usize,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Patch count and wall clock of one tiled stage versus the
    /// sequential overlapping baseline.
    BenchStitch {
        #[command(flatten)]
        overrides: Overrides,
        /// Overlap fraction of the baseline's patches.
        #[arg(long, default_value_t = 0.5)]
        overlap: f64,
        /// Stage to benchmark; earlier stages are generated first.
        #[arg(long)]
        stage: Option<usize>,
    },
    /// Re-check a written pyramid's checksums and invariants.
    Verify {
        dir: PathBuf,
    },
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// single or double.
    #[arg(long)]
    precision: Option<String>,
    /// alg1 or inverted.
    #[arg(long)]
    convention: Option<String>,
    /// Relaxation bound `r`.
    #[arg(long)]
    r: Option<usize>,
    /// Number of upscaling stages `L`.
    #[arg(long)]
    levels: Option<usize>,
    /// heun or euler.
    #[arg(long)]
    method: Option<String>,
    /// shift or fixed.
    #[arg(long)]
    grid: Option<String>,
    /// Also write exact `f64` dumps.
    #[arg(long)]
    raw: bool,
}

struct Loaded {
    cfg: RunConfig,
    base_dir: PathBuf,
}

fn load(cli: &Cli, o: &Overrides) -> Result<Loaded> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => match cli.preset {
            Preset::Paper => RunConfig::default(),
            Preset::Desk => RunConfig::desk(),
        },
    };
    let mut cfg = base.apply_process_env()?;
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.workers {
        cfg.workers = v;
    }
    if let Some(v) = &o.out {
        cfg.output = v.clone();
    }
    if let Some(v) = &o.precision {
        cfg.precision = v.parse::<Precision>()?;
    }
    if let Some(v) = &o.convention {
        cfg.guidance.convention = v.parse::<Convention>()?;
    }
    if let Some(v) = o.r {
        cfg.guidance.relaxation = v;
    }
    if let Some(v) = o.levels {
        cfg.plan.levels = v;
    }
    if let Some(v) = &o.method {
        cfg.method = v.parse::<Method>()?;
    }
    if let Some(v) = &o.grid {
        cfg.plan.grid = v.parse::<GridMode>()?;
    }
    if o.raw {
        cfg.raw_dumps = true;
    }
    cfg.validate()?;
    Ok(Loaded {
        cfg,
        base_dir: RunConfig::base_dir(cli.config.as_deref()),
    })
}

fn sampler<'a>(cfg: &RunConfig, denoiser: &'a dyn Denoiser) -> Result<PyramidSampler<'a>> {
    let mut s = PyramidSampler::new(cfg.plan.clone(), NoiseSchedule::from_params(cfg.schedule)?, denoiser)?;
    s.guidance = cfg.guidance;
    s.method = cfg.method;
    s.workers = cfg.workers;
    s.precision = cfg.precision;
    s.storage = cfg.storage.clone();
    Ok(s)
}

fn emit_table(t: &Table, path: Option<&Path>) -> Result<()> {
    print!("{}", t.to_tsv());
    if let Some(p) = path {
        t.write(p)?;
    }
    Ok(())
}

fn generate(cli: &Cli, o: &Overrides) -> Result<()> {
    let Loaded { cfg, base_dir } = load(cli, o)?;
    let denoiser = cfg.denoiser.build(&base_dir)?;
    let s = sampler(&cfg, denoiser.as_ref())?;
    let (run, err) = s.generate_partial(cfg.seed);
    let Some(run) = run else {
        return Err(err.unwrap_or_else(|| Error::InvalidParameter("run produced no output".into())));
    };
    let manifest = write_pyramid(&run, &cfg.output, &WriteOptions::from_config(&cfg), err.as_ref())?;
    if let Some(e) = err {
        return Err(e);
    }
    let levels: Vec<_> = manifest
        .levels
        .iter()
        .map(|l| {
            json!({
                "level": l.level,
                "extent": l.extent,
                "resolution": l.resolution,
                "tiles": l.tiles.len(),
                "processed_patches": l.processed_patches,
                "wall_clock_s": l.wall_clock_s,
            })
        })
        .collect();
    println!(
        "{}",
        json!({
            "status": manifest.status.as_str(),
            "output": cfg.output,
            "seed": cfg.seed.to_string(),
            "s0": manifest.s0,
            "levels": levels,
        })
    );
    Ok(())
}

fn upscale(cli: &Cli, o: &Overrides, input: &Path, output: &Path, stage: usize, resolution: f64) -> Result<()> {
    let Loaded { cfg, base_dir } = load(cli, o)?;
    let denoiser = cfg.denoiser.build(&base_dir)?;
    let s = sampler(&cfg, denoiser.as_ref())?;
    let guide = read_png(input, cfg.plan.channels, resolution)?;
    let started = Instant::now();
    let z = upscale_stage(&s, &guide, stage, cfg.seed)?;
    write_png(output, &z)?;
    println!(
        "{}",
        json!({
            "output": output,
            "extent": [z.width(), z.height()],
            "resolution": z.resolution(),
            "wall_clock_s": started.elapsed().as_secs_f64(),
        })
    );
    Ok(())
}

fn eval_seams(cli: &Cli, o: &Overrides, seeds: usize, table: Option<&Path>) -> Result<()> {
    let Loaded { cfg, .. } = load(cli, o)?;
    let study = seam_study(&SeamStudyConfig {
        seeds,
        seed_base: cfg.seed,
        levels: cfg.plan.levels,
        schedule: cfg.schedule,
        guidance: cfg.guidance,
        workers: cfg.workers,
        ..SeamStudyConfig::default()
    })?;
    let mut t = Table::new(["seed", "shift_ratio", "fixed_ratio"]);
    for r in &study.rows {
        t.push([r.seed.to_string(), format!("{:.6}", r.shift_ratio), format!("{:.6}", r.fixed_ratio)])?;
    }
    emit_table(&t, table)?;
    eprintln!(
        "{}",
        json!({
            "shift_mean": study.shift_mean(),
            "shift_max": study.shift_max(),
            "fixed_mean": study.fixed_mean(),
            "shift_wins": study.shift_wins(),
            "seeds": study.rows.len(),
        })
    );
    Ok(())
}

fn eval_solver(cli: &Cli, o: &Overrides, steps: &[usize], seeds: usize, table: Option<&Path>) -> Result<()> {
    let Loaded { cfg, .. } = load(cli, o)?;
    let oracle = GaussianMixtureOracle::new(vec![MixtureComponent {
        weight: 1.0,
        mean: Mean::PerChannel(vec![0.1]),
        std: 0.5,
    }])?;
    let acc = AccuracyConfig {
        schedule: cfg.schedule,
        seeds,
        seed_base: cfg.seed,
        ..AccuracyConfig::default()
    };
    let mut t = Table::new(["method", "steps", "mean_error", "std_error"]);
    let mut orders = serde_json::Map::new();
    for method in [Method::Heun, Method::Euler] {
        let rows = solver_accuracy_sweep(&oracle, steps, method, &acc)?;
        for r in &rows {
            t.push([method.to_string(), r.steps.to_string(), format!("{:.6e}", r.mean_error), format!("{:.6e}", r.std_error)])?;
        }
        orders.insert(method.to_string(), json!(convergence_order(&rows)));
    }
    emit_table(&t, table)?;
    eprintln!("{}", json!({ "order": orders }));
    Ok(())
}

fn eval_relaxation(cli: &Cli, o: &Overrides, r_values: &[usize], seeds: usize, table: Option<&Path>) -> Result<()> {
    let Loaded { cfg, base_dir } = load(cli, o)?;
    let denoiser = cfg.denoiser.build(&base_dir)?;
    let sweep = relaxation_sweep(
        denoiser.as_ref(),
        &RelaxationConfig {
            schedule: cfg.schedule,
            patch_size: cfg.plan.patch_size,
            factor: cfg.plan.factor,
            channels: cfg.plan.channels,
            r_values: r_values.to_vec(),
            seeds,
            seed_base: cfg.seed,
            method: cfg.method,
            resolution: 1.0,
        },
    )?;
    let mut t = Table::new(["r", "mean_error", "std_error"]);
    for r in &sweep.rows {
        t.push([r.r.to_string(), format!("{:.6e}", r.mean_error), format!("{:.6e}", r.std_error)])?;
    }
    emit_table(&t, table)?;
    eprintln!("{}", json!({ "spearman_rho": sweep.spearman_rho, "p_value": sweep.p_value }));
    Ok(())
}

fn bench_stitch(cli: &Cli, o: &Overrides, overlap: f64, stage: Option<usize>) -> Result<()> {
    let Loaded { mut cfg, base_dir } = load(cli, o)?;
    let stage = stage.unwrap_or(cfg.plan.levels);
    if stage == 0 {
        return Err(Error::InvalidParameter("stage must be at least 1".into()));
    }
    let denoiser = cfg.denoiser.build(&base_dir)?;
    cfg.plan.levels = stage - 1;
    let prefix = sampler(&cfg, denoiser.as_ref())?.generate_wsi(cfg.seed)?;
    let guide = prefix.levels.last().expect("level present").to_image()?;
    cfg.plan.levels = stage;
    let s = sampler(&cfg, denoiser.as_ref())?;

    let started = Instant::now();
    let resolution = guide.resolution() / cfg.plan.factor as f64;
    let extent = guide.width() * cfg.plan.factor;
    let mask = TissueMask::full(extent, extent, cfg.plan.patch_size);
    let background = cfg.plan.background.clone().unwrap_or_else(|| tilediff::pyramid::corner_median(&guide));
    let (_, report) = s.upscale_stage_with(&guide, stage, resolution, &mask, &background, cfg.seed)?;
    let tiled_s = started.elapsed().as_secs_f64();
    let tiled_patches = report.processed.first().copied().unwrap_or(0);

    let baseline = mask_shift_upscale(&s, &guide, overlap, stage, cfg.seed)?;
    println!(
        "{}",
        json!({
            "stage": stage,
            "extent": extent,
            "tiled": { "patches": tiled_patches, "wall_clock_s": tiled_s },
            "mask_shift": {
                "patches": baseline.patches(),
                "stride": baseline.stride,
                "wall_clock_s": baseline.wall_clock_s,
                "raster_order_respected": respects_raster_dependencies(&baseline.trace),
            },
            "patch_ratio": baseline.patches() as f64 / tiled_patches.max(1) as f64,
            "speedup": baseline.wall_clock_s / tiled_s.max(f64::MIN_POSITIVE),
        })
    );
    Ok(())
}

fn verify_cmd(dir: &Path) -> Result<()> {
    let r = verify(dir)?;
    println!(
        "{}",
        json!({
            "status": r.status.as_str(),
            "levels": r.levels,
            "files_checked": r.files_checked,
            "error": r.error,
        })
    );
    if r.status == RunStatus::Incomplete {
        eprintln!("{}", json!({ "warning": "pyramid is incomplete" }));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(o) => generate(cli, o),
        Command::Upscale {
            overrides,
            input,
            output,
            stage,
            resolution,
        } => upscale(cli, overrides, input, output, *stage, *resolution),
        Command::EvalSeams { overrides, seeds, table } => eval_seams(cli, overrides, *seeds, table.as_deref()),
        Command::EvalSolver {
            overrides,
            steps,
            seeds,
            table,
        } => eval_solver(cli, overrides, steps, *seeds, table.as_deref()),
        Command::EvalRelaxation {
            overrides,
            r_values,
            seeds,
            table,
        } => eval_relaxation(cli, overrides, r_values, *seeds, table.as_deref()),
        Command::BenchStitch { overrides, overlap, stage } => bench_stitch(cli, overrides, *overlap, *stage),
        Command::Verify { dir } => verify_cmd(dir),
    }
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut v = json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    });
    if let Error::Stage { stage, iteration, patch, .. } = e {
        v["stage"] = json!(stage);
        v["iteration"] = json!(iteration);
        v["patch"] = json!(patch);
    }
    if let Error::Checksum(path) = e {
        v["path"] = json!(path);
    }
    v
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": "usage", "message": e.to_string().trim_end(), "exit_code": 1 })
            );
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
