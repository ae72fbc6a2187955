//! Command-line front end: `run`, `design` and `plot`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{run_experiment, write_csv, CSV_HEADER};
use crate::channel::ArrayGeometry;
use crate::config::ExperimentConfig;
use crate::kernels::{bessel_kernel, exponential_kernel, Kernel, KernelHyper};
use crate::linalg::{hermitian_condition, submatrix};
use crate::sbar::{CacheOutcome, PlanCache};
use crate::{Result, SbarError, C64};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sbar", version = VERSION, about = "Port scheduling and channel reconstruction for flexible antenna arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write its CSV.
    Run {
        config: PathBuf,
        /// Use 256 ports instead of the configured count.
        #[arg(long)]
        paper_scale: bool,
        /// Override `run.output`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Design (or fetch from cache) a port schedule and its weights.
    Design {
        #[arg(long, value_enum)]
        kernel: DesignKernel,
        #[arg(long)]
        ports: usize,
        #[arg(long)]
        pilots: usize,
        #[arg(long)]
        antennas: usize,
        /// SNR relative to the kernel's mean prior variance per port.
        #[arg(long, allow_negative_numbers = true)]
        snr_db: f64,
        #[arg(long)]
        cache_dir: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        wavelength: f64,
        #[arg(long, default_value_t = 10.0)]
        aperture: f64,
        #[arg(long)]
        alpha_sq: Option<f64>,
        #[arg(long)]
        eta_sq: Option<f64>,
        #[arg(long)]
        bessel_order: Option<u32>,
    },
    /// Split a result CSV into one data file per estimator.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, value_enum)]
        x: PlotAxis,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignKernel {
    Identity,
    Exponential,
    Bessel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotAxis {
    Snr,
    Pilots,
}

/// Contents of the `<output>.meta.toml` file written next to each CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub mean_channel_power: f64,
    pub config: ExperimentConfig,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().map(OsString::from).unwrap_or_default();
    name.push(".meta.toml");
    csv.with_file_name(name)
}

fn is_usage_error(e: &SbarError) -> bool {
    matches!(
        e,
        SbarError::Config(_) | SbarError::InvalidParameter(_) | SbarError::InvalidGeometry(_) | SbarError::Capacity { .. }
    )
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match cli.command {
        Command::Run {
            config,
            paper_scale,
            output,
        } => cmd_run(&config, paper_scale, output, out, err),
        Command::Design {
            kernel,
            ports,
            pilots,
            antennas,
            snr_db,
            cache_dir,
            wavelength,
            aperture,
            alpha_sq,
            eta_sq,
            bessel_order,
        } => {
            let result = (|| -> Result<()> {
                let geometry = ArrayGeometry::new(ports, wavelength, aperture)?;
                let base = KernelHyper::default_for(&geometry);
                let hyper = KernelHyper {
                    alpha_sq: alpha_sq.unwrap_or(base.alpha_sq),
                    eta_sq: eta_sq.unwrap_or(base.eta_sq),
                    bessel_order: bessel_order.unwrap_or(base.bessel_order),
                };
                let k = match kernel {
                    DesignKernel::Identity => Kernel::identity(ports),
                    DesignKernel::Exponential => exponential_kernel(&geometry, hyper)?,
                    DesignKernel::Bessel => bessel_kernel(&geometry, hyper)?,
                };
                design(&k, pilots, antennas, snr_db, &cache_dir, out).map(|_| ())
            })();
            report(result, err)
        }
        Command::Plot { csv, x, out_dir } => report(emit_plot_data(&csv, x, &out_dir).map(|_| ()), err),
    }
}

fn report(result: Result<()>, err: &mut dyn Write) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if is_usage_error(&e) {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn cmd_run(path: &Path, paper_scale: bool, output: Option<PathBuf>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read config {}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    let mut config = match ExperimentConfig::from_toml_str(&text) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: invalid config {}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    if paper_scale {
        config = config.paper_scale();
    }
    if let Some(o) = output {
        config.run.output = o;
    }
    if let Err(e) = config.validate() {
        let _ = writeln!(err, "error: invalid config {}: {e}", path.display());
        return EXIT_USAGE;
    }
    let result = (|| -> Result<()> {
        let run = run_experiment(&config)?;
        for p in &run.rebuilt_plans {
            let _ = writeln!(err, "warning: plan cache entry {} was unreadable and has been rebuilt", p.display());
        }
        let mut csv = Vec::new();
        write_csv(&mut csv, &run.results)?;
        if let Some(dir) = config.run.output.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(&config.run.output, csv)?;
        let meta = RunMetadata {
            version: VERSION.to_string(),
            mean_channel_power: run.mean_channel_power,
            config: config.clone(),
        };
        let meta_text = toml::to_string(&meta).map_err(|e| SbarError::Format(e.to_string()))?;
        fs::write(sidecar_path(&config.run.output), meta_text)?;
        let _ = writeln!(
            out,
            "wrote {} rows to {}",
            run.results.len(),
            config.run.output.display()
        );
        Ok(())
    })();
    report(result, err)
}

/// Designs or loads a cached plan and prints the schedule.
pub fn design(
    kernel: &Kernel,
    pilots: usize,
    antennas: usize,
    snr_db: f64,
    cache_dir: &Path,
    out: &mut dyn Write,
) -> Result<CacheOutcome> {
    if !snr_db.is_finite() {
        return Err(SbarError::InvalidParameter(format!("SNR must be finite, got {snr_db}")));
    }
    let n = kernel.num_ports();
    let noise_variance = kernel.trace() / n as f64 / 10f64.powf(snr_db / 10.0);
    let cache = PlanCache::new(cache_dir);
    let (plan, outcome) = cache.load_or_design(kernel, pilots, antennas, noise_variance)?;
    let omega = plan.schedule.indices();
    let mut gram = submatrix(kernel.matrix(), omega, omega);
    for i in 0..omega.len() {
        gram[(i, i)] += C64::new(noise_variance, 0.0);
    }
    let ports: Vec<String> = plan.schedule.one_based().iter().map(|p| p.to_string()).collect();
    writeln!(out, "ports: {}", ports.join(","))?;
    writeln!(out, "condition: {:.6e}", hermitian_condition(&gram))?;
    writeln!(
        out,
        "cache: {} ({})",
        match outcome {
            CacheOutcome::Hit => "hit",
            CacheOutcome::Miss => "miss",
            CacheOutcome::Rebuilt => "rebuilt",
        },
        cache.path_for(kernel, pilots, antennas, noise_variance).display()
    )?;
    Ok(outcome)
}

/// Writes one whitespace-separated `x nmse_db` file per estimator, sorted by
/// `x`, plus `manifest.txt` listing `label file` pairs. Returns the written
/// series paths.
pub fn emit_plot_data(csv: &Path, axis: PlotAxis, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(csv)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SbarError::Format(format!("{}: empty file", csv.display())))?;
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    let found: Vec<&str> = header.split(',').collect();
    for (i, name) in expected.iter().enumerate() {
        match found.get(i) {
            Some(f) if f == name => {}
            Some(f) => {
                return Err(SbarError::Format(format!(
                    "column {} should be `{name}`, found `{f}`",
                    i + 1
                )))
            }
            None => return Err(SbarError::Format(format!("missing column `{name}`"))),
        }
    }
    if found.len() > expected.len() {
        return Err(SbarError::Format(format!("unexpected column `{}`", found[expected.len()])));
    }
    let x_col = match axis {
        PlotAxis::Snr => 6,
        PlotAxis::Pilots => 5,
    };
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut rows = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            return Err(SbarError::Format(format!(
                "line {}: expected {} columns, found {}",
                lineno + 2,
                expected.len(),
                fields.len()
            )));
        }
        let parse = |col: usize| -> Result<f64> {
            fields[col].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                SbarError::Format(format!(
                    "line {}: column `{}` is not a number: `{}`",
                    lineno + 2,
                    expected[col],
                    fields[col]
                ))
            })
        };
        let x = parse(x_col)?;
        let y = parse(8)?;
        series.entry(fields[0].to_string()).or_default().push((x, y));
        rows += 1;
    }
    if rows == 0 {
        return Err(SbarError::Format(format!("{}: no data rows", csv.display())));
    }
    fs::create_dir_all(out_dir)?;
    let mut manifest = String::new();
    let mut written = Vec::new();
    for (label, mut points) in series {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let file = format!("{label}.dat");
        let mut body = String::new();
        for (x, y) in points {
            body.push_str(&format!("{x} {y}\n"));
        }
        let path = out_dir.join(&file);
        fs::write(&path, body)?;
        manifest.push_str(&format!("{label} {file}\n"));
        written.push(path);
    }
    fs::write(out_dir.join("manifest.txt"), manifest)?;
    Ok(written)
}
