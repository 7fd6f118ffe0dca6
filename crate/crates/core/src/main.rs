use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use vbspin::config::{ReportFormat, RunConfig, DEFAULT_TOML};
use vbspin::fit::{fit_mixture, fit_saturation, SaturationFit};
use vbspin::io::{comment_header, fmt_sig9, parse_table, write_text};
use vbspin::lindblad::{build_liouvillian, nuclear_polarization, steady_state, sweep_field, sweep_to_csv};
use vbspin::ratemodel::{curve_to_csv, polarization_vs_power, saturation_polarization};
use vbspin::spectra::{fwhm_from_sigma, synthesize_polarized, Spectrum};
use vbspin::{Error, Result};

#[derive(Parser)]
#[command(name = "vbspin", version, about = "Hyperfine spectra, nuclear polarization and fits for the boron-vacancy spin defect")]
struct Cli {
    /// TOML run configuration; shipped defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; overrides the configured path. Standard output when neither is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for field sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the hyperfine spectrum of the configured isotopes.
    Spectrum,
    /// Fit a spectrum CSV with a Gaussian mixture.
    Fit {
        /// Spectrum CSV; overrides `fit.input`.
        input: Option<PathBuf>,
        /// Number of lines; overrides `fit.n_lines`.
        #[arg(long)]
        lines: Option<usize>,
    },
    /// Four-level polarization versus laser power and its saturation limit.
    Ratemodel,
    /// Steady state at the configured field; writes the labeled populations.
    DnpSteady,
    /// Nuclear polarization over the configured field grid.
    DnpSweep,
    /// Fit a power/polarization CSV with the saturation curve.
    FitSaturation {
        /// CSV with columns power_mw, polarization; overrides `saturation.input`.
        input: Option<PathBuf>,
    },
    /// Print the shipped default configuration.
    DefaultConfig,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Fit { .. } => "fit",
            Command::Ratemodel => "ratemodel",
            Command::DnpSteady => "dnp-steady",
            Command::DnpSweep => "dnp-sweep",
            Command::FitSaturation { .. } => "fit-saturation",
            Command::DefaultConfig => "default-config",
        }
    }
}

/// Curvature peaks below this fraction of the strongest are not counted as lines.
const RESOLVED_LINE_THRESHOLD: f64 = 0.05;

/// Computation failed after the inputs were accepted.
const EXIT_FAILURE: u8 = 1;
/// Invalid configuration, arguments or input files.
const EXIT_USAGE: u8 = 2;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Io(_)
        | Error::InvalidParameter(_)
        | Error::GridCoverage { .. }
        | Error::TensorCount { .. } => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NotConverged { best, .. } = &e {
                let best: Vec<String> = best.iter().map(|v| fmt_sig9(*v)).collect();
                eprintln!("best parameters: {}", best.join(", "));
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output.path = Some(out.clone());
    }
    match &cli.command {
        Command::Fit { input, lines } => {
            if let Some(i) = input {
                config.fit.input = Some(i.clone());
            }
            if let Some(n) = lines {
                config.fit.n_lines = *n;
            }
        }
        Command::FitSaturation { input: Some(i) } => config.saturation.input = Some(i.clone()),
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

/// Audit header: command, tool version and every resolved configuration entry.
fn header(command: &str, config: &RunConfig) -> Vec<(String, String)> {
    let mut meta = vec![
        ("command".to_string(), command.to_string()),
        ("vbspin".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ];
    meta.extend(config.resolved_entries().into_iter().map(|(k, v)| (format!("config.{k}"), v)));
    meta
}

fn emit(config: &RunConfig, text: &str) -> Result<()> {
    match &config.output.path {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_input(path: &Option<PathBuf>, key: &str) -> Result<String> {
    let path: &Path = path
        .as_deref()
        .ok_or_else(|| Error::Config(format!("no input file: pass one or set {key}")))?;
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<u8> {
    if let Command::DefaultConfig = cli.command {
        print!("{DEFAULT_TOML}");
        return Ok(0);
    }
    let config = load_config(&cli)?;
    let meta = header(cli.command.name(), &config);
    match &cli.command {
        Command::Spectrum => cmd_spectrum(&config, meta),
        Command::Fit { .. } => cmd_fit(&config, meta),
        Command::Ratemodel => cmd_ratemodel(&config, meta),
        Command::DnpSteady => cmd_dnp_steady(&config, meta),
        Command::DnpSweep => cmd_dnp_sweep(&config, meta, cli.workers),
        Command::FitSaturation { .. } => cmd_fit_saturation(&config, meta),
        Command::DefaultConfig => unreachable!(),
    }
}

fn cmd_spectrum(config: &RunConfig, mut meta: Vec<(String, String)>) -> Result<u8> {
    let s = &config.spectrum;
    let boron = config.isotopes.boron.spec();
    let nitrogen = config.isotopes.nitrogen.spec();
    let calibration = config.boron_calibration()?;
    let sigma = calibration.line_sigma(&boron);
    let a_zz = config.nitrogen_tensor().azz;
    let grid = s.grid_mhz.values()?;
    let mut spectrum = synthesize_polarized(&nitrogen, a_zz, s.polarization, sigma, s.center_mhz, s.amplitude, &grid)?;
    if s.noise_fraction > 0.0 {
        let noise = Normal::new(0.0, s.noise_fraction * s.amplitude)
            .map_err(|e| Error::Config(format!("spectrum.noise_fraction: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for v in &mut spectrum.signal {
            *v += noise.sample(&mut rng);
        }
    }
    meta.extend([
        ("a_zz_b11_mhz".to_string(), fmt_sig9(calibration.a_zz_b11)),
        ("intrinsic_fwhm_mhz".to_string(), fmt_sig9(calibration.intrinsic_fwhm)),
        ("line_sigma_mhz".to_string(), fmt_sig9(sigma)),
        ("line_fwhm_mhz".to_string(), fmt_sig9(fwhm_from_sigma(sigma))),
        ("resolved_lines".to_string(), spectrum.resolved_lines(RESOLVED_LINE_THRESHOLD).len().to_string()),
    ]);
    meta.append(&mut spectrum.meta);
    spectrum.meta = meta;
    eprintln!(
        "{} {} lines, spacing {} MHz, FWHM {} MHz, {} dips, {} lines resolved by curvature",
        nitrogen.name,
        config.fit_lines(),
        fmt_sig9(a_zz.abs()),
        fmt_sig9(fwhm_from_sigma(sigma)),
        spectrum.dips().len(),
        spectrum.resolved_lines(RESOLVED_LINE_THRESHOLD).len()
    );
    emit(config, &spectrum.to_csv())?;
    Ok(0)
}

fn cmd_fit(config: &RunConfig, meta: Vec<(String, String)>) -> Result<u8> {
    let text = read_input(&config.fit.input, "fit.input")?;
    let spectrum = Spectrum::from_csv(&text)?;
    let fit = fit_mixture(&spectrum, config.fit_lines(), &config.fit_options())?;
    let mut out = comment_header(&meta);
    match config.fit.format {
        ReportFormat::Report => out.push_str(&fit.to_report()),
        ReportFormat::Csv => {
            out.push_str(&fit.csv_header());
            out.push('\n');
            out.push_str(&fit.csv_row());
            out.push('\n');
        }
    }
    eprintln!(
        "splitting {} MHz, FWHM {} MHz, polarization {}",
        fmt_sig9(fit.splitting_mhz),
        fmt_sig9(fit.fwhm_mhz()),
        fmt_sig9(fit.polarization()?)
    );
    emit(config, &out)?;
    Ok(0)
}

fn cmd_ratemodel(config: &RunConfig, mut meta: Vec<(String, String)>) -> Result<u8> {
    let r = &config.ratemodel;
    let template = config.four_level_template()?;
    let limit = saturation_polarization(template.gamma_plus, template.gamma_minus)?;
    let curve = polarization_vs_power(&template, &r.power_mw.values()?, r.k_mhz_per_mw)?;
    meta.extend([
        ("gamma_plus_mhz".to_string(), fmt_sig9(template.gamma_plus)),
        ("gamma_minus_mhz".to_string(), fmt_sig9(template.gamma_minus)),
        ("saturation_polarization".to_string(), fmt_sig9(limit)),
    ]);
    eprintln!("saturation_polarization = {}", fmt_sig9(limit));
    emit(config, &curve_to_csv(&meta, &curve))?;
    Ok(0)
}

fn cmd_dnp_steady(config: &RunConfig, mut meta: Vec<(String, String)>) -> Result<u8> {
    let l = build_liouvillian(&config.defect_model(), &config.field, &config.rates)?;
    let ss = steady_state(&l)?;
    let p = nuclear_polarization(&ss);
    meta.extend([
        ("polarization".to_string(), fmt_sig9(p)),
        ("residual_norm".to_string(), fmt_sig9(ss.residual_norm)),
        ("min_eigenvalue".to_string(), fmt_sig9(ss.min_eigenvalue())),
    ]);
    for (m, s) in ss.ground_zero_areas() {
        meta.push((format!("ground_zero_population_m{}", fmt_sig9(m)), fmt_sig9(s)));
    }
    eprintln!("B = {} mT: polarization {}", fmt_sig9(config.field.b_mag_mt), fmt_sig9(p));
    let mut out = comment_header(&meta);
    out.push_str(&ss.diagonal_csv());
    emit(config, &out)?;
    Ok(0)
}

fn cmd_dnp_sweep(config: &RunConfig, meta: Vec<(String, String)>, workers: usize) -> Result<u8> {
    let grid = config.sweep.b_mt.values()?;
    let points = sweep_field(&config.defect_model(), &config.rates, &grid, config.sweep.tilt_deg, workers)?;
    let failed = points.iter().filter(|p| p.outcome.is_err()).count();
    for p in &points {
        if let Err(e) = &p.outcome {
            eprintln!("B = {} mT failed: {e}", fmt_sig9(p.b_mt));
        }
    }
    if let Some(best) = points
        .iter()
        .filter_map(|p| p.polarization().map(|v| (p.b_mt, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
    {
        eprintln!("peak polarization {} at {} mT", fmt_sig9(best.1), fmt_sig9(best.0));
    }
    emit(config, &sweep_to_csv(&meta, &points))?;
    if failed > 0 {
        eprintln!("{failed} of {} points failed", points.len());
        return Ok(EXIT_FAILURE);
    }
    Ok(0)
}

fn cmd_fit_saturation(config: &RunConfig, meta: Vec<(String, String)>) -> Result<u8> {
    let s = &config.saturation;
    let text = read_input(&s.input, "saturation.input")?;
    let table = parse_table(&text, 2)?;
    let points: Vec<(f64, f64)> = table.rows.iter().map(|r| (r[0], r[1])).collect();
    let init = match (s.p_max_init, s.p_sat_init_mw) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(Error::Config("set both saturation.p_max_init and saturation.p_sat_init_mw, or neither".into())),
    };
    let fit = fit_saturation(&points, init, s.lm.into())?;
    let mut out = comment_header(&meta);
    match s.format {
        ReportFormat::Report => out.push_str(&fit.to_report()),
        ReportFormat::Csv => {
            out.push_str(SaturationFit::csv_header());
            out.push('\n');
            out.push_str(&fit.csv_row());
            out.push('\n');
        }
    }
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "p_max {} +- {}, p_sat {} +- {} mW",
        fmt_sig9(fit.p_max),
        fmt_sig9(fit.p_max_std()),
        fmt_sig9(fit.p_sat_mw),
        fmt_sig9(fit.p_sat_std())
    );
    emit(config, &out)?;
    Ok(0)
}
