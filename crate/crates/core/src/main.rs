use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use atomlens::config::{CliError, PartialConfig, RunConfig};
use atomlens::figures::{self, FigureOptions};
use atomlens::optimize::{self, Refine, Tier};
use atomlens::output::{self, density_csv, scan_csv, trace_csv, Manifest};
use atomlens::trace::LocalizationTrace;
use atomlens::units::TimeUnit;
use atomlens::{classical, mcwf, quantum, MaskParams};

#[derive(Parser)]
#[command(name = "atomlens", version, about = "Atom focusing by a pulsed standing-wave light mask")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Impulsive-kick classical ensemble (scaled units).
    ClassicalThin(RunArgs),
    /// Full classical trajectories through the pulse (scaled units).
    ClassicalThick(RunArgs),
    /// Coherent two-level momentum-ladder solver (recoil units).
    Quantum(RunArgs),
    /// Quantum-jump ensemble with spontaneous emission (recoil units).
    Mcwf(RunArgs),
    /// Minimal localization over a log-spaced detuning grid.
    Scan {
        #[arg(long, value_parser = parse_tier, default_value = "classical-thin")]
        tier: Tier,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Runs a preset parameter bundle and compares with its reference targets.
    ReproduceFigure {
        figure: u32,
        #[command(flatten)]
        args: RunArgs,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// JSON file with any of the run settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Peak Rabi frequency (recoil units).
    #[arg(long)]
    omega0: Option<f64>,
    /// Pulse width; for classical tiers this is the thickness s.
    #[arg(long = "sigma-t")]
    sigma_t: Option<f64>,
    /// Detuning ratio Delta / Omega_0.
    #[arg(long, allow_hyphen_values = true)]
    r: Option<f64>,
    /// Spontaneous decay rate (recoil units).
    #[arg(long)]
    gamma: Option<f64>,
    /// Classical ensemble size.
    #[arg(long)]
    grid: Option<usize>,
    /// Histogram bins for classical densities.
    #[arg(long)]
    bins: Option<usize>,
    /// Classical trajectory tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Quantum integrator tolerance.
    #[arg(long = "quantum-tol")]
    quantum_tol: Option<f64>,
    /// Initial momentum-ladder truncation.
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    /// Position samples per period for quantum densities.
    #[arg(long = "density-samples")]
    density_samples: Option<usize>,
    /// Time of the density snapshot (default: the focal time).
    #[arg(long = "density-time", allow_hyphen_values = true)]
    density_time: Option<f64>,
    /// Quantum-jump ensemble size.
    #[arg(long)]
    trajectories: Option<usize>,
    /// Bootstrap resamples for the standard error.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Base random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Scan points per detuning sign.
    #[arg(long = "scan-points")]
    scan_points: Option<usize>,
    /// Smallest |r| in a scan.
    #[arg(long = "r-min")]
    r_min: Option<f64>,
    /// Largest |r| in a scan.
    #[arg(long = "r-max")]
    r_max: Option<f64>,
    /// Output directory (default: $ATOMLENS_OUTPUT_DIR or ./atomlens-out).
    #[arg(long = "output-dir", short = 'o')]
    output_dir: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn partial(&self) -> PartialConfig {
        PartialConfig {
            omega0: self.omega0,
            sigma_t: self.sigma_t,
            r: self.r,
            gamma: self.gamma,
            grid: self.grid,
            bins: self.bins,
            tol: self.tol,
            quantum_tol: self.quantum_tol,
            n_max: self.n_max,
            density_samples: self.density_samples,
            density_time: self.density_time,
            trajectories: self.trajectories,
            bootstrap: self.bootstrap,
            base_seed: self.seed,
            scan_points: self.scan_points,
            r_min: self.r_min,
            r_max: self.r_max,
            output_dir: self.output_dir.clone(),
            workers: self.workers,
        }
    }

    fn resolve(&self, tier: Tier) -> Result<RunConfig, CliError> {
        RunConfig::resolve(tier, self.config.as_deref(), self.partial())
    }
}

fn parse_tier(s: &str) -> Result<Tier, String> {
    match s {
        "classical-thin" => Ok(Tier::ClassicalThin),
        "classical-thick" => Ok(Tier::ClassicalThick),
        "quantum" => Ok(Tier::Quantum),
        "mcwf" => Ok(Tier::Mcwf),
        _ => Err(format!("unknown tier `{s}` (classical-thin, classical-thick, quantum, mcwf)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn init_workers(config: &RunConfig) -> Result<(), CliError> {
    if let Some(n) = config.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config { field: "workers".into(), reason: e.to_string() })?;
    }
    Ok(())
}

fn run(command: Command) -> Result<(), CliError> {
    let (name, tier, args, figure) = match command {
        Command::ClassicalThin(a) => ("classical-thin", Tier::ClassicalThin, a, None),
        Command::ClassicalThick(a) => ("classical-thick", Tier::ClassicalThick, a, None),
        Command::Quantum(a) => ("quantum", Tier::Quantum, a, None),
        Command::Mcwf(a) => ("mcwf", Tier::Mcwf, a, None),
        Command::Scan { tier, args } => ("scan", tier, args, None),
        Command::ReproduceFigure { figure, args } => ("reproduce-figure", Tier::Quantum, args, Some(figure)),
    };
    let config = args.resolve(tier)?;
    init_workers(&config)?;
    let start = Instant::now();
    let dir = match figure {
        Some(f) => config.output_dir.join(format!("fig{f}")),
        None => config.output_dir.clone(),
    };
    let (files, summary, failures) = match (name, figure) {
        (_, Some(f)) => reproduce_figure(f, &config)?,
        ("scan", _) => scan(&config)?,
        _ => single(&config)?,
    };
    let mut written = Vec::new();
    for (path, contents) in &files {
        output::write(&dir.join(path), contents)?;
        written.push(path.clone());
    }
    let manifest = Manifest::new(name, &config, start.elapsed(), written, summary);
    let path = manifest.write(&dir)?;
    println!("wrote {} files and {}", files.len(), path.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Comparison(failures))
    }
}

type Outcome = (Vec<(PathBuf, String)>, serde_json::Value, Vec<String>);

fn report_minimum(unit: TimeUnit, t_m: f64, l_min: f64) {
    println!("t_m = {t_m:.6e} ({}), L_min = {l_min:.6}", unit.label());
}

fn single(config: &RunConfig) -> Result<Outcome, CliError> {
    let p = config.params();
    let mut files = Vec::new();
    let summary = match config.tier {
        Tier::ClassicalThin => {
            let (ens, opt) = optimize::optimize_classical_thin(config.r, config.grid)?;
            let t = config.density_time.unwrap_or(opt.minimum.t_m);
            let density = classical::classical_density(&classical::evolve_thin(&ens, t), config.bins)?;
            files.push(trace_files(&opt.trace));
            files.push((PathBuf::from("density.csv"), density_csv(&density)));
            report_minimum(opt.trace.time_unit, opt.minimum.t_m, opt.minimum.l_min);
            json!({"minimum": opt.minimum, "window": opt.window, "density_time": t})
        }
        Tier::ClassicalThick => {
            let cp = MaskParams::new(1.0, config.sigma_t, config.r, 0.0)?;
            let opt = optimize::optimize_classical_thick(&cp, config.grid, config.tol)?;
            let t = config.density_time.unwrap_or(opt.minimum.t_m);
            let ens = classical::thick_lens_ensemble(&cp, config.grid, t, config.tol)?;
            files.push(trace_files(&opt.trace));
            files.push((PathBuf::from("density.csv"), density_csv(&classical::classical_density(&ens, config.bins)?)));
            report_minimum(opt.trace.time_unit, opt.minimum.t_m, opt.minimum.l_min);
            json!({"minimum": opt.minimum, "window": opt.window, "density_time": t})
        }
        Tier::Quantum => {
            if config.gamma != 0.0 {
                return Err(CliError::Config {
                    field: "gamma".into(),
                    reason: "the coherent solver has no decay; use the mcwf subcommand".into(),
                });
            }
            let opts = config.quantum_options();
            let (run, opt) = optimize::optimize_quantum(&p, &opts)?;
            let t = config.density_time.unwrap_or(opt.minimum.t_m);
            let density = quantum::density_from_modes(&run.state_at(t)?, config.density_samples);
            files.push(trace_files(&opt.trace));
            files.push((PathBuf::from("density.csv"), density_csv(&density)));
            report_minimum(TimeUnit::Recoil, opt.minimum.t_m, opt.minimum.l_min);
            json!({"minimum": opt.minimum, "window": opt.window, "density_time": t, "n_max": run.pulse_end.n_max})
        }
        Tier::Mcwf => {
            let opts = config.quantum_options();
            let (_, coherent) = optimize::optimize_quantum(&p.with_gamma(0.0), &opts)?;
            let t = config.density_time.unwrap_or(coherent.minimum.t_m);
            let times = optimize::quantum_window_times(&p, &coherent.window);
            let ens = mcwf::ensemble_trace(&p, &times, &[t], &config.ensemble(), &opts)?;
            let trace = LocalizationTrace::new(ens.times.clone(), ens.localization.clone(), TimeUnit::Recoil);
            let minimum = optimize::find_minimum(&trace, Refine::Parabolic)?;
            let stderr_rows: Vec<[f64; 2]> = ens.times.iter().zip(&ens.stderr).map(|(&t, &e)| [t, e]).collect();
            let mut stderr_csv = String::from("t,stderr\n");
            for [t, e] in stderr_rows {
                stderr_csv.push_str(&format!("{},{}\n", output::fmt_f64(t), output::fmt_f64(e)));
            }
            files.push(trace_files(&trace));
            files.push((PathBuf::from("trace_stderr.csv"), stderr_csv));
            files.push((PathBuf::from("density.csv"), density_csv(&ens.densities[0])));
            report_minimum(TimeUnit::Recoil, minimum.t_m, minimum.l_min);
            let i = trace.argmin().unwrap_or(0);
            json!({
                "minimum": minimum,
                "stderr_at_minimum": ens.stderr[i],
                "coherent_minimum": coherent.minimum,
                "density_time": t,
                "mean_jumps": ens.mean_jumps,
                "n_max": ens.n_max,
            })
        }
    };
    Ok((files, summary, Vec::new()))
}

fn trace_files(trace: &LocalizationTrace) -> (PathBuf, String) {
    (PathBuf::from("trace.csv"), trace_csv(&trace.times, &trace.values))
}

fn scan(config: &RunConfig) -> Result<Outcome, CliError> {
    let rs = optimize::log_detuning_grid(config.scan_points, config.r_min, config.r_max);
    let result = optimize::scan_detuning(&rs, &config.scan_settings());
    let failed: Vec<_> = result.rows.iter().filter(|r| r.error.is_some()).collect();
    for row in &failed {
        eprintln!("row r = {} failed: {}", row.r, row.error.as_deref().unwrap_or(""));
    }
    println!("{} rows, {} failed", result.rows.len(), failed.len());
    let files = vec![(PathBuf::from("scan.csv"), scan_csv(&result))];
    Ok((files, json!({"tier": result.tier, "time_unit": result.time_unit, "rows": result.rows}), Vec::new()))
}

fn reproduce_figure(figure: u32, config: &RunConfig) -> Result<Outcome, CliError> {
    if !figures::FIGURES.contains(&figure) {
        return Err(CliError::Config {
            field: "figure".into(),
            reason: format!("no preset for figure {figure}; choose one of {:?}", figures::FIGURES),
        });
    }
    let opts = FigureOptions {
        grid: config.grid,
        bins: config.bins,
        tol: config.tol,
        quantum: config.quantum_options(),
        ensemble: config.ensemble(),
        scan_points: config.scan_points,
    };
    let report = figures::reproduce(figure, &opts)?;
    for check in &report.checks {
        println!("{}", check.line());
    }
    let summary = json!({"figure": figure, "checks": report.checks, "results": report.summary});
    Ok((report.files.clone(), summary, report.failures()))
}
