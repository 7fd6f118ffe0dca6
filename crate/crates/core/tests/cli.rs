use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use vbspin::config::RunConfig;
use vbspin::io::parse_table;
use vbspin::model::Isotope;

fn vbspin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vbspin"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, config: &RunConfig) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, config.to_toml()).unwrap();
    path
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn meta_value(text: &str, key: &str) -> String {
    let prefix = format!("# {key} = ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in header"))
        .to_string()
}

fn report_value(text: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in report"))
        .parse()
        .unwrap()
}

fn isotopes(boron: Isotope, nitrogen: Isotope) -> RunConfig {
    let mut c = RunConfig::default();
    c.isotopes.boron = boron;
    c.isotopes.nitrogen = nitrogen;
    c
}

#[test]
fn spectrum_and_fit_for_each_isotope_pair() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (Isotope::B10, Isotope::N14, 7, 44.3, 44.3),
        (Isotope::B10, Isotope::N15, 4, 64.1, 44.3),
        (Isotope::B11, Isotope::N15, 4, 64.1, 52.9),
    ];
    for (k, (boron, nitrogen, lines, spacing, fwhm)) in cases.into_iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("c{k}.toml"), &isotopes(boron, nitrogen));
        let spec = dir.path().join(format!("s{k}.csv"));
        let out = vbspin(dir.path(), &["--config", cfg.to_str().unwrap(), "--out", spec.to_str().unwrap(), "spectrum"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = read(&spec);
        assert_eq!(meta_value(&text, "command"), "spectrum");
        assert_eq!(meta_value(&text, "resolved_lines"), lines.to_string());
        let line_fwhm: f64 = meta_value(&text, "line_fwhm_mhz").parse().unwrap();
        assert!((line_fwhm - fwhm).abs() < 1e-6, "{line_fwhm}");

        let report = dir.path().join(format!("f{k}.txt"));
        let out = vbspin(
            dir.path(),
            &["--config", cfg.to_str().unwrap(), "--out", report.to_str().unwrap(), "fit", spec.to_str().unwrap()],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let report = read(&report);
        assert_eq!(report_value(&report, "n_lines"), lines as f64);
        assert!((report_value(&report, "splitting_mhz") - spacing).abs() < 1e-6);
        assert!((report_value(&report, "fwhm_mhz") - fwhm).abs() < 1e-6);
        assert!(report_value(&report, "polarization").abs() < 1e-9);
    }
}

#[test]
fn outputs_are_deterministic_and_seeded() {
    let dir = TempDir::new().unwrap();
    let mut c = RunConfig::default();
    c.spectrum.noise_fraction = 0.05;
    let cfg = write_config(dir.path(), "noisy.toml", &c);
    let cfg = cfg.to_str().unwrap();
    let run = |seed: &str| {
        let out = vbspin(dir.path(), &["--config", cfg, "--seed", seed, "spectrum"]);
        assert!(out.status.success());
        out.stdout
    };
    let a = run("7");
    assert_eq!(a, run("7"));
    assert_ne!(a, run("8"));
    assert!(String::from_utf8(a).unwrap().contains("# config.seed = 7\n"));
}

#[test]
fn csv_numbers_have_nine_significant_digits() {
    let dir = TempDir::new().unwrap();
    let out = vbspin(dir.path(), &["ratemodel"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        for field in line.split(',') {
            let mantissa = field.split('e').next().unwrap();
            let digits = mantissa.chars().filter(char::is_ascii_digit).collect::<String>();
            assert!(digits.trim_start_matches('0').len() <= 9, "{field}");
        }
    }
}

#[test]
fn ratemodel_curve_feeds_the_saturation_fit() {
    let dir = TempDir::new().unwrap();
    let curve = dir.path().join("curve.csv");
    let out = vbspin(dir.path(), &["--out", curve.to_str().unwrap(), "ratemodel"]);
    assert!(out.status.success());
    let text = read(&curve);
    assert_eq!(meta_value(&text, "saturation_polarization"), "0.522222222");
    let table = parse_table(&text, 2).unwrap();
    assert_eq!(table.header, ["power_mw", "polarization"]);
    assert_eq!(table.rows[0], [0.0, 0.0]);
    assert!(table.rows.windows(2).all(|w| w[1][1] >= w[0][1]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("saturation_polarization = 0.522222222"));

    let out = vbspin(dir.path(), &["fit-saturation", curve.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!((report_value(&report, "p_max") - 0.522222222).abs() < 1e-6);
}

#[test]
fn saturation_fit_csv_format() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("sat.csv");
    let mut text = String::from("power_mw,polarization\n");
    for p in [0.2, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let x: f64 = p / 1.1;
        text.push_str(&format!("{p},{}\n", 0.226 * x / (1.0 + x)));
    }
    std::fs::write(&data, text).unwrap();
    let mut c = RunConfig::default();
    c.saturation.format = vbspin::config::ReportFormat::Csv;
    c.saturation.input = Some(data);
    let cfg = write_config(dir.path(), "sat.toml", &c);
    let out = vbspin(dir.path(), &["--config", cfg.to_str().unwrap(), "fit-saturation"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = parse_table(&String::from_utf8(out.stdout).unwrap(), 6).unwrap();
    assert_eq!(table.header[0], "p_max");
    assert!((table.rows[0][0] - 0.226).abs() < 1e-8);
    assert!((table.rows[0][2] - 1.1).abs() < 1e-7);
}

#[test]
fn dnp_steady_and_sweep_on_one_nucleus() {
    let dir = TempDir::new().unwrap();
    let mut c = RunConfig::default();
    c.model.lindblad_sites = 1;
    c.sweep.b_mt.lo = 100.0;
    c.sweep.b_mt.hi = 130.0;
    c.sweep.b_mt.points = 4;
    let cfg = write_config(dir.path(), "one.toml", &c);
    let cfg = cfg.to_str().unwrap();

    let out = vbspin(dir.path(), &["--config", cfg, "dnp-steady"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let table: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(table[0], "index,level,populations");
    assert_eq!(table.len(), 1 + 14);
    let p: f64 = meta_value(&text, "polarization").parse().unwrap();
    assert!(p > 0.0 && p < 1.0);

    let serial = vbspin(dir.path(), &["--config", cfg, "dnp-sweep"]);
    let parallel = vbspin(dir.path(), &["--config", cfg, "--workers", "2", "dnp-sweep"]);
    assert!(serial.status.success() && parallel.status.success());
    assert_eq!(serial.stdout, parallel.stdout);
    let table = parse_table(&String::from_utf8(serial.stdout).unwrap(), 3).unwrap();
    assert_eq!(table.header, ["b_mt", "polarization", "residual_norm"]);
    assert_eq!(table.rows.len(), 4);
    assert!(table.rows.iter().all(|r| r[2] < 1e-8));
}

#[test]
fn single_point_sweep_grid() {
    let dir = TempDir::new().unwrap();
    let mut c = RunConfig::default();
    c.model.lindblad_sites = 1;
    c.sweep.b_mt.lo = 92.0;
    c.sweep.b_mt.hi = 92.0;
    c.sweep.b_mt.points = 1;
    let cfg = write_config(dir.path(), "one.toml", &c);
    let out = vbspin(dir.path(), &["--config", cfg.to_str().unwrap(), "dnp-sweep"]);
    assert!(out.status.success());
    let table = parse_table(&String::from_utf8(out.stdout).unwrap(), 3).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0][0], 92.0);
}

#[test]
fn per_point_failures_set_the_exit_status() {
    let dir = TempDir::new().unwrap();
    let mut c = RunConfig::default();
    c.model.lindblad_sites = 1;
    c.model.n14_axx_mhz = 0.0;
    c.model.n14_ayy_mhz = 0.0;
    c.rates.gamma_relax_n = 0.0;
    c.sweep.b_mt.lo = 50.0;
    c.sweep.b_mt.hi = 60.0;
    c.sweep.b_mt.points = 2;
    let cfg = write_config(dir.path(), "axial.toml", &c);
    let out = vbspin(dir.path(), &["--config", cfg.to_str().unwrap(), "dnp-sweep"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# failed at 50 mT: degenerate steady state"));
    assert!(text.contains("\n60,NaN,NaN\n"));
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let typo = dir.path().join("typo.toml");
    std::fs::write(&typo, vbspin::config::DEFAULT_TOML.replace("k_s0", "k_so")).unwrap();
    let out = vbspin(dir.path(), &["--config", typo.to_str().unwrap(), "spectrum"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k_so"));

    let malformed = dir.path().join("bad.csv");
    std::fs::write(&malformed, "frequency_mhz,signal\n1,0\n2,x\n").unwrap();
    let out = vbspin(dir.path(), &["fit", malformed.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = vbspin(dir.path(), &["fit"]);
    assert_eq!(out.status.code(), Some(2));
    let out = vbspin(dir.path(), &["nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_non_convergence_exits_nonzero() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("s.csv");
    assert!(vbspin(dir.path(), &["--out", spec.to_str().unwrap(), "spectrum"]).status.success());
    let mut c = RunConfig::default();
    c.fit.lm.max_iterations = 1;
    let cfg = write_config(dir.path(), "short.toml", &c);
    let out = vbspin(dir.path(), &["--config", cfg.to_str().unwrap(), "fit", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("did not converge") && err.contains("best parameters"), "{err}");
}

#[test]
fn default_config_command_prints_the_shipped_file() {
    let dir = TempDir::new().unwrap();
    let out = vbspin(dir.path(), &["default-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), RunConfig::default());
}
