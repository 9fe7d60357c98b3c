use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::compander::{write_design, DesignConfig};
use crate::error::{invalid, QuantError, Result};
use crate::source::{BivariateGaussianSpec, SourceModel, DEFAULT_POINTS};

use super::{
    correlation_experiment, design_point, fmt_real, snr_sweep, whiteness_report, write_rows, Family,
    OperatingPoint, Quantizer, SweepMode, SweepSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_UNCONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "randquant", version, about = "Randomized and deterministic scalar quantizer experiments")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// CSV destination; standard output when absent.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Design one quantizer and write its bundle.
    Design(PointArgs),
    /// SNR versus rate for every family.
    Sweep {
        #[arg(long)]
        mode: Option<SweepMode>,
        /// Comma-separated target rates in bits.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
    },
    /// Error correlation between the two components of a correlated pair.
    Correlate {
        #[arg(long)]
        mode: Option<SweepMode>,
        #[arg(long)]
        rate: Option<f64>,
        /// Source correlations as `start:step:end`.
        #[arg(long)]
        rho: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Error statistics and histogram of one family.
    Whiteness(PointArgs),
}

#[derive(Debug, Args)]
struct PointArgs {
    #[arg(long)]
    mode: Option<SweepMode>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    source: SourceSection,
    design: DesignOverrides,
    sweep: SweepSection,
    correlate: CorrelateSection,
    whiteness: PointSection,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SourceSection {
    variance: f64,
    half_width: f64,
    n_points: usize,
    /// Two-column `abscissa,density` file used instead of the Gaussian.
    density_csv: Option<PathBuf>,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self { variance: 1.0, half_width: 3.0, n_points: DEFAULT_POINTS, density_csv: None }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DesignOverrides {
    step_size: Option<f64>,
    max_iters: Option<usize>,
    cost_tol: Option<f64>,
    quad_nodes_n: Option<usize>,
    relaxation_schedule: Option<Vec<f64>>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSection {
    mode: Option<SweepMode>,
    rates: Option<Vec<f64>>,
    families: Option<Vec<Family>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CorrelateSection {
    mode: Option<SweepMode>,
    rate: Option<f64>,
    rho: Option<Vec<f64>>,
    samples: Option<usize>,
    families: Option<Vec<Family>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PointSection {
    mode: Option<SweepMode>,
    rate: Option<f64>,
    family: Option<Family>,
    samples: Option<usize>,
}

/// Errors that map to the configuration exit status.
struct ConfigError(String);

impl From<QuantError> for ConfigError {
    fn from(e: QuantError) -> Self {
        ConfigError(e.to_string())
    }
}

impl FileConfig {
    fn load(path: Option<&PathBuf>) -> std::result::Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    fn source(&self) -> Result<SourceModel> {
        let s = &self.source;
        match &s.density_csv {
            Some(p) => SourceModel::from_csv_path(p),
            None => SourceModel::truncated_gaussian(s.variance, s.half_width, s.n_points),
        }
    }

    fn design_config(&self, mode: SweepMode, seed: u64) -> Result<DesignConfig> {
        let mut c = match mode {
            SweepMode::Fixed => DesignConfig::fixed_rate_default(),
            SweepMode::Variable => DesignConfig::default(),
        };
        let o = &self.design;
        if let Some(v) = o.step_size {
            c.step_size = v;
        }
        if let Some(v) = o.max_iters {
            c.max_iters = v;
        }
        if let Some(v) = o.cost_tol {
            c.cost_tol = v;
        }
        if let Some(v) = o.quad_nodes_n {
            c.quad_nodes_n = v;
        }
        if let Some(v) = &o.relaxation_schedule {
            c.relaxation_schedule = v.clone();
        }
        c.seed = seed;
        c.validate()?;
        Ok(c)
    }
}

/// Parses `start:step:end` into an inclusive list.
fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| invalid(format!("bad number {p:?} in range {s:?}"))))
        .collect::<Result<_>>()?;
    let [a, step, b] = parts[..] else {
        return Err(invalid(format!("range {s:?} must look like start:step:end")));
    };
    if !(step > 0.0) || b < a {
        return Err(invalid(format!("range {s:?} needs a positive step and start <= end")));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect())
}

/// Runs the command line and returns the process exit status.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let file = match FileConfig::load(cli.config.as_ref()) {
        Ok(f) => f,
        Err(ConfigError(msg)) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    match execute(&cli, &file) {
        Ok((bytes, all_converged)) => {
            let written = match &cli.output {
                Some(p) => fs::write(p, &bytes).map_err(QuantError::from),
                None => std::io::stdout().write_all(&bytes).map_err(QuantError::from),
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return EXIT_FAILURE;
            }
            if all_converged {
                EXIT_OK
            } else {
                eprintln!("warning: at least one design did not converge");
                EXIT_UNCONVERGED
            }
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

enum Failure {
    Config(String),
    Run(QuantError),
}

impl From<QuantError> for Failure {
    fn from(e: QuantError) -> Self {
        Failure::Run(e)
    }
}

fn config_err(e: QuantError) -> Failure {
    Failure::Config(e.to_string())
}

fn execute(cli: &Cli, file: &FileConfig) -> std::result::Result<(Vec<u8>, bool), Failure> {
    let seed = cli.seed.or(file.seed).or(file.design.seed).unwrap_or(1);
    let source = file.source().map_err(config_err)?;
    let mut out = Vec::new();
    let converged = match &cli.command {
        Command::Sweep { mode, rates } => {
            let mode = mode.or(file.sweep.mode).unwrap_or(SweepMode::Variable);
            let spec = SweepSpec {
                mode,
                rates: rates.clone().or_else(|| file.sweep.rates.clone()).unwrap_or_else(|| mode.default_rates()),
                families: file.sweep.families.clone().unwrap_or_else(|| Family::ALL.to_vec()),
                config: file.design_config(mode, seed).map_err(config_err)?,
                seed,
            };
            spec.validate().map_err(config_err)?;
            let rows = snr_sweep(&source, &spec)?;
            write_rows(&rows, &mut out)?;
            rows.iter().all(|r| r.converged)
        }
        Command::Correlate { mode, rate, rho, samples } => {
            let c = &file.correlate;
            let mode = mode.or(c.mode).unwrap_or(SweepMode::Variable);
            let rate = rate.or(c.rate).unwrap_or(1.4);
            let rhos = match rho {
                Some(r) => parse_range(r).map_err(config_err)?,
                None => c.rho.clone().unwrap_or_else(|| vec![0.3, 0.6, 0.9]),
            };
            let samples = samples.or(c.samples).unwrap_or(1_000_000);
            let families = c.families.clone().unwrap_or_else(|| Family::ALL.to_vec());
            if file.source.density_csv.is_some() {
                return Err(Failure::Config("correlate needs the Gaussian source parameters".into()));
            }
            let config = file.design_config(mode, seed).map_err(config_err)?;
            let points = design_point(&source, mode, rate, &families, &config, seed)?;
            writeln!(out, "family,rho,rate_bits,error_correlation").map_err(QuantError::from)?;
            let mut points = points;
            points.sort_by_key(|p| p.family);
            for p in &points {
                let row = p.row(&source)?;
                for &r in &rhos {
                    let spec = BivariateGaussianSpec::new(r, file.source.variance, file.source.half_width)
                        .map_err(config_err)?;
                    let corr = correlation_experiment(&spec, &p.quantizer, samples, seed)?;
                    writeln!(out, "{},{},{},{}", p.family, fmt_real(r), fmt_real(row.rate_bits), fmt_real(corr))
                        .map_err(QuantError::from)?;
                }
            }
            points.iter().all(|p| p.converged)
        }
        Command::Whiteness(args) => {
            let w = &file.whiteness;
            let (mode, rate, family) = point_params(args, w);
            let samples = args.samples.or(w.samples).unwrap_or(1_000_000);
            let p = single_point(&source, file, mode, rate, family, seed)?;
            let row = p.row(&source)?;
            let rep = whiteness_report(&p.quantizer, &source, samples, seed)?;
            writeln!(out, "family,rate_bits,err_src_corr,err_mean,err_var,bin,lower,upper,fraction")
                .map_err(QuantError::from)?;
            let width = (rep.hist_hi - rep.hist_lo) / rep.histogram.len() as f64;
            for (b, frac) in rep.histogram.iter().enumerate() {
                let lo = rep.hist_lo + b as f64 * width;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    p.family,
                    fmt_real(row.rate_bits),
                    fmt_real(rep.err_src_corr),
                    fmt_real(rep.err_mean),
                    fmt_real(rep.err_var),
                    b,
                    fmt_real(lo),
                    fmt_real(lo + width),
                    fmt_real(*frac)
                )
                .map_err(QuantError::from)?;
            }
            p.converged
        }
        Command::Design(args) => {
            let (mode, rate, family) = point_params(args, &PointSection::default());
            let p = single_point(&source, file, mode, rate, family, seed)?;
            match &p.quantizer {
                Quantizer::Randomized(d) => write_design(d, &mut out)?,
                Quantizer::Deterministic(q) => q.write_csv(&mut out)?,
                Quantizer::Conventional(s) => {
                    writeln!(out, "delta,levels").map_err(QuantError::from)?;
                    let levels = s.t_max.map(|t| t.to_string()).unwrap_or_default();
                    writeln!(out, "{},{levels}", s.delta).map_err(QuantError::from)?;
                }
            }
            p.converged
        }
    };
    Ok((out, converged))
}

fn point_params(args: &PointArgs, section: &PointSection) -> (SweepMode, f64, Family) {
    (
        args.mode.or(section.mode).unwrap_or(SweepMode::Variable),
        args.rate.or(section.rate).unwrap_or(1.4),
        args.family.or(section.family).unwrap_or(Family::Randomized),
    )
}

fn single_point(
    source: &SourceModel,
    file: &FileConfig,
    mode: SweepMode,
    rate: f64,
    family: Family,
    seed: u64,
) -> std::result::Result<OperatingPoint, Failure> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Failure::Config(format!("rate must be positive, got {rate}")));
    }
    let config = file.design_config(mode, seed).map_err(config_err)?;
    let points = design_point(source, mode, rate, &[family], &config, seed)?;
    points.into_iter().next().ok_or_else(|| Failure::Run(invalid("no design produced")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_inclusive() {
        let r = parse_range("0:0.1:0.9").unwrap();
        assert_eq!(r.len(), 10);
        assert_eq!(r[3], 0.3);
        assert_eq!(r[9], 0.9);
        assert!(parse_range("0:0:1").is_err());
        assert!(parse_range("0:1").is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected_with_a_line() {
        let err = toml::from_str::<FileConfig>("seed = 3\n[sweep]\nmodes = \"fixed\"\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
