//! Versioned run configuration for the command-line tool.
//!
//! Every physical constant has a shipped default and a provenance note in [`PROVENANCE`].
//! Unknown keys are rejected so a misspelled constant cannot silently fall back to its
//! default.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::lm::LmOptions;
use crate::fit::{FitMode, FitOptions, MixtureInit};
use crate::lindblad::RateSet;
use crate::model::{scale_tensor_by_isotope, DefectModel, FieldConfig, HyperfineTensor, Isotope};
use crate::ratemodel::FourLevelRates;
use crate::spectra::{linear_grid, BoronCalibration};

pub const SCHEMA_VERSION: u32 = 1;

/// The shipped default configuration, identical to `RunConfig::default()`.
pub const DEFAULT_TOML: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub isotopes: IsotopeConfig,
    pub model: ModelConfig,
    pub spectrum: SpectrumConfig,
    pub fit: FitConfig,
    pub ratemodel: RateModelConfig,
    pub field: FieldConfig,
    pub rates: RateSet,
    pub sweep: SweepConfig,
    pub saturation: SaturationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsotopeConfig {
    pub boron: Isotope,
    pub nitrogen: Isotope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_gs_ghz: f64,
    pub d_es_ghz: f64,
    pub gamma_e_ghz_per_t: f64,
    pub n14_axx_mhz: f64,
    pub n14_ayy_mhz: f64,
    pub n14_azz_mhz: f64,
    pub n15_azz_mhz: f64,
    /// Nitrogen sites in the open-system model (1 to 3).
    pub lindblad_sites: usize,
    /// Use the ground-state tensors in the excited state too; otherwise no excited-state hyperfine.
    pub excited_hyperfine: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridConfig {
    /// Evenly spaced values; a single point needs `lo == hi`.
    pub fn values(&self) -> Result<Vec<f64>> {
        let finite = self.lo.is_finite() && self.hi.is_finite();
        if finite && self.points == 1 && self.lo == self.hi {
            return Ok(vec![self.lo]);
        }
        if !(finite && self.hi > self.lo) || self.points < 2 {
            return Err(Error::Config(format!(
                "grid needs lo < hi and at least 2 points (or lo = hi and 1 point), got [{}, {}] with {}",
                self.lo, self.hi, self.points
            )));
        }
        Ok(linear_grid(self.lo, self.hi, self.points))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub fwhm_b10_mhz: f64,
    pub fwhm_b11_mhz: f64,
    pub boron_gamma_ratio: f64,
    pub center_mhz: f64,
    pub amplitude: f64,
    pub polarization: f64,
    /// Gaussian noise standard deviation as a fraction of `amplitude`; uses the run seed.
    pub noise_fraction: f64,
    pub grid_mhz: GridConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Report,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModeConfig {
    Shared,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub patience: usize,
}

impl From<LmConfig> for LmOptions {
    fn from(c: LmConfig) -> Self {
        Self {
            max_iterations: c.max_iterations,
            tolerance: c.tolerance,
            patience: c.patience,
        }
    }
}

impl From<LmOptions> for LmConfig {
    fn from(o: LmOptions) -> Self {
        Self {
            max_iterations: o.max_iterations,
            tolerance: o.tolerance,
            patience: o.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Number of lines; 0 picks the count for the configured nitrogen isotope.
    pub n_lines: usize,
    pub mode: FitModeConfig,
    pub format: ReportFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<MixtureInitConfig>,
    pub lm: LmConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureInitConfig {
    pub center_mhz: f64,
    pub splitting_mhz: f64,
    pub sigma_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateModelConfig {
    pub axx_mhz: f64,
    pub ayy_mhz: f64,
    /// Exchange rate per MHz of coupling, `gamma_± = flip_rate_per_mhz · |A±|`.
    pub flip_rate_per_mhz: f64,
    pub k_mhz_per_mw: f64,
    pub power_mw: GridConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub b_mt: GridConfig,
    pub tilt_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_sat_init_mw: Option<f64>,
    pub format: ReportFormat,
    pub lm: LmConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output file; standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lm = LmConfig::from(LmOptions::default());
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            isotopes: IsotopeConfig {
                boron: Isotope::B10,
                nitrogen: Isotope::N15,
            },
            model: ModelConfig {
                d_gs_ghz: 3.47,
                d_es_ghz: 2.1,
                gamma_e_ghz_per_t: 28.0,
                n14_axx_mhz: 47.0,
                n14_ayy_mhz: 90.0,
                n14_azz_mhz: 44.3,
                n15_azz_mhz: -64.1,
                lindblad_sites: 3,
                excited_hyperfine: true,
            },
            spectrum: SpectrumConfig {
                fwhm_b10_mhz: 44.3,
                fwhm_b11_mhz: 52.9,
                boron_gamma_ratio: 3.0,
                center_mhz: 3470.0,
                amplitude: 0.01,
                polarization: 0.0,
                noise_fraction: 0.0,
                grid_mhz: GridConfig {
                    lo: 3170.0,
                    hi: 3770.0,
                    points: 3001,
                },
            },
            fit: FitConfig {
                n_lines: 0,
                mode: FitModeConfig::Shared,
                format: ReportFormat::Report,
                input: None,
                init: None,
                lm,
            },
            ratemodel: RateModelConfig {
                axx_mhz: 47.0,
                ayy_mhz: 90.0,
                flip_rate_per_mhz: 0.01,
                k_mhz_per_mw: 1.0,
                power_mw: GridConfig {
                    lo: 0.0,
                    hi: 10.0,
                    points: 101,
                },
            },
            field: FieldConfig::along_z(92.0),
            rates: RateSet::default(),
            sweep: SweepConfig {
                b_mt: GridConfig {
                    lo: 10.0,
                    hi: 157.0,
                    points: 50,
                },
                tilt_deg: 0.0,
            },
            saturation: SaturationConfig {
                input: None,
                p_max_init: None,
                p_sat_init_mw: None,
                format: ReportFormat::Report,
                lm,
            },
            output: OutputConfig::default(),
        }
    }
}

/// Where a shipped constant comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Experimental value.
    Measured,
    /// Computed from other constants.
    Derived,
    /// Modeling choice without a measured value.
    Assumed,
    /// Run control (grids, solver settings, paths).
    Setting,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::Measured => "measured",
            Provenance::Derived => "derived",
            Provenance::Assumed => "assumed",
            Provenance::Setting => "setting",
        }
    }
}

use Provenance::{Assumed, Derived, Measured, Setting};

/// Provenance of every configuration key, by dotted path.
pub const PROVENANCE: &[(&str, Provenance, &str)] = &[
    ("schema_version", Setting, "configuration schema version"),
    ("seed", Setting, "seed for synthetic noise"),
    ("isotopes.boron", Setting, "boron isotope of the host lattice"),
    ("isotopes.nitrogen", Setting, "nitrogen isotope of the host lattice"),
    ("model.d_gs_ghz", Measured, "ground-state zero-field splitting"),
    ("model.d_es_ghz", Measured, "excited-state zero-field splitting; sets the excited-state anticrossing near 75 mT"),
    ("model.gamma_e_ghz_per_t", Measured, "free-electron gyromagnetic ratio, rounded"),
    ("model.n14_axx_mhz", Derived, "ab-initio transverse 14N coupling"),
    ("model.n14_ayy_mhz", Derived, "ab-initio transverse 14N coupling"),
    ("model.n14_azz_mhz", Measured, "14N line splitting"),
    ("model.n15_azz_mhz", Measured, "15N line splitting; sign from the negative 15N gyromagnetic ratio. 15N transverse couplings are the 14N values scaled by the gyromagnetic ratio"),
    ("model.lindblad_sites", Setting, "nitrogen sites kept in the open-system model"),
    ("model.excited_hyperfine", Assumed, "excited-state tensors equal the ground-state tensors"),
    ("spectrum.fwhm_b10_mhz", Measured, "line width in a 10B lattice; calibrates the boron broadening"),
    ("spectrum.fwhm_b11_mhz", Measured, "line width in an 11B lattice; calibrates the boron broadening"),
    ("spectrum.boron_gamma_ratio", Measured, "11B/10B gyromagnetic ratio, rounded to 3"),
    ("spectrum.center_mhz", Derived, "zero-field resonance, equal to the ground-state splitting"),
    ("spectrum.amplitude", Assumed, "contrast scale; arbitrary"),
    ("spectrum.polarization", Setting, "nitrogen polarization of the synthesized lines"),
    ("spectrum.noise_fraction", Setting, "noise standard deviation relative to the amplitude"),
    ("spectrum.grid_mhz.lo", Setting, "frequency grid"),
    ("spectrum.grid_mhz.hi", Setting, "frequency grid"),
    ("spectrum.grid_mhz.points", Setting, "frequency grid"),
    ("fit.n_lines", Setting, "0 selects the line count of the configured nitrogen isotope"),
    ("fit.mode", Setting, "shared spacing and width, or free lines"),
    ("fit.format", Setting, "key-value report or CSV row"),
    ("fit.input", Setting, "spectrum CSV to fit"),
    ("fit.init.center_mhz", Setting, "manual start"),
    ("fit.init.splitting_mhz", Setting, "manual start"),
    ("fit.init.sigma_mhz", Setting, "manual start"),
    ("fit.lm.max_iterations", Setting, "least-squares iteration cap"),
    ("fit.lm.tolerance", Setting, "relative RSS change and step treated as stalled"),
    ("fit.lm.patience", Setting, "stalled iterations before stopping"),
    ("ratemodel.axx_mhz", Derived, "ab-initio transverse coupling entering the saturation limit"),
    ("ratemodel.ayy_mhz", Derived, "ab-initio transverse coupling entering the saturation limit"),
    ("ratemodel.flip_rate_per_mhz", Assumed, "exchange rate per MHz of coupling; only the ratio to the pumping rate matters"),
    ("ratemodel.k_mhz_per_mw", Assumed, "laser power to pumping rate; no measured value"),
    ("ratemodel.power_mw.lo", Setting, "power grid"),
    ("ratemodel.power_mw.hi", Setting, "power grid"),
    ("ratemodel.power_mw.points", Setting, "power grid"),
    ("field.b_mag_mt", Setting, "field of a single steady-state run"),
    ("field.tilt_deg", Setting, "angle between field and defect axis"),
    ("field.azimuth_deg", Setting, "azimuth of the transverse field component"),
    ("rates.gamma_pump", Assumed, "optical pumping rate of the reference field-dependence simulation"),
    ("rates.gamma_rad", Measured, "inverse of the ~1 ns excited-state lifetime"),
    ("rates.k_isc_0", Assumed, "intersystem crossing from m_s = 0"),
    ("rates.k_isc_1", Assumed, "intersystem crossing from m_s = +-1; larger than from m_s = 0"),
    ("rates.k_s0", Assumed, "singlet decay to m_s = 0"),
    ("rates.k_s1", Assumed, "singlet decay to each of m_s = +-1"),
    ("rates.gamma_deph_e", Assumed, "ground-triplet electron dephasing"),
    ("rates.gamma_deph_es", Assumed, "excited-triplet orbital dephasing at room temperature; suppresses excited-state flip-flops"),
    ("rates.gamma_deph_n", Assumed, "nuclear dephasing"),
    ("rates.gamma_relax_n", Assumed, "nuclear spin-lattice relaxation"),
    ("sweep.b_mt.lo", Setting, "field sweep grid"),
    ("sweep.b_mt.hi", Setting, "field sweep grid"),
    ("sweep.b_mt.points", Setting, "field sweep grid"),
    ("sweep.tilt_deg", Setting, "field tilt during the sweep"),
    ("saturation.input", Setting, "power/polarization CSV to fit"),
    ("saturation.p_max_init", Setting, "manual start"),
    ("saturation.p_sat_init_mw", Setting, "manual start"),
    ("saturation.format", Setting, "key-value report or CSV row"),
    ("saturation.lm.max_iterations", Setting, "least-squares iteration cap"),
    ("saturation.lm.tolerance", Setting, "relative RSS change and step treated as stalled"),
    ("saturation.lm.patience", Setting, "stalled iterations before stopping"),
    ("output.path", Setting, "output file; standard output when absent"),
];

pub fn provenance(key: &str) -> Option<(Provenance, &'static str)> {
    PROVENANCE.iter().find(|(k, _, _)| *k == key).map(|&(_, p, n)| (p, n))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !self.isotopes.boron.is_boron() {
            return Err(Error::Config(format!("isotopes.boron must be 10B or 11B, got {:?}", self.isotopes.boron)));
        }
        if self.isotopes.nitrogen.is_boron() {
            return Err(Error::Config(format!("isotopes.nitrogen must be 14N or 15N, got {:?}", self.isotopes.nitrogen)));
        }
        if !(1..=3).contains(&self.model.lindblad_sites) {
            return Err(Error::Config(format!("model.lindblad_sites must be 1 to 3, got {}", self.model.lindblad_sites)));
        }
        self.defect_model().validate()?;
        self.rates.validate()?;
        Ok(())
    }

    /// Flattened `key = value` pairs of the resolved configuration, sorted by key.
    pub fn resolved_entries(&self) -> Vec<(String, String)> {
        let value = toml::Value::try_from(self).expect("config serializes");
        let mut out = Vec::new();
        flatten("", &value, &mut out);
        out.sort();
        out
    }

    pub fn nitrogen_tensor(&self) -> HyperfineTensor {
        let m = &self.model;
        let n14 = HyperfineTensor::new(m.n14_axx_mhz, m.n14_ayy_mhz, m.n14_azz_mhz);
        match self.isotopes.nitrogen {
            Isotope::N15 => {
                let mut t = scale_tensor_by_isotope(&n14, &Isotope::N14.spec(), &Isotope::N15.spec());
                t.azz = m.n15_azz_mhz;
                t
            }
            _ => n14,
        }
    }

    /// Defect model for the open-system commands, with `lindblad_sites` nitrogen sites.
    pub fn defect_model(&self) -> DefectModel {
        let t = self.nitrogen_tensor();
        let n = self.model.lindblad_sites;
        let es = if self.model.excited_hyperfine {
            t
        } else {
            HyperfineTensor::new(0.0, 0.0, 0.0)
        };
        DefectModel {
            d_gs_ghz: self.model.d_gs_ghz,
            d_es_ghz: self.model.d_es_ghz,
            gamma_e_ghz_per_t: self.model.gamma_e_ghz_per_t,
            nitrogen: self.isotopes.nitrogen,
            tensors_gs: vec![t; n],
            tensors_es: vec![es; n],
        }
    }

    pub fn boron_calibration(&self) -> Result<BoronCalibration> {
        let s = &self.spectrum;
        BoronCalibration::solve(
            s.fwhm_b10_mhz,
            s.fwhm_b11_mhz,
            s.boron_gamma_ratio,
            &Isotope::B10.spec(),
            &Isotope::B11.spec(),
        )
    }

    pub fn fit_lines(&self) -> usize {
        if self.fit.n_lines > 0 {
            return self.fit.n_lines;
        }
        let two_i = self.isotopes.nitrogen.spec().spin.two_s() as usize;
        3 * two_i + 1
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            mode: match self.fit.mode {
                FitModeConfig::Shared => FitMode::Shared,
                FitModeConfig::Free => FitMode::Free,
            },
            init: self.fit.init.map(|i| MixtureInit {
                center_mhz: i.center_mhz,
                splitting_mhz: i.splitting_mhz,
                sigma_mhz: i.sigma_mhz,
            }),
            lm: self.fit.lm.into(),
        }
    }

    /// Four-level rate template (pumping rate unset) from the transverse couplings.
    pub fn four_level_template(&self) -> Result<FourLevelRates> {
        let r = &self.ratemodel;
        let t = HyperfineTensor::new(r.axx_mhz, r.ayy_mhz, 0.0);
        FourLevelRates::new(
            r.flip_rate_per_mhz * t.a_plus().abs(),
            r.flip_rate_per_mhz * t.a_minus().abs(),
            0.0,
        )
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        v => out.push((prefix.to_string(), v.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_nitrogen_tensor;

    fn with_optionals() -> RunConfig {
        let mut c = RunConfig::default();
        c.fit.input = Some("in.csv".into());
        c.fit.init = Some(MixtureInitConfig {
            center_mhz: 1.0,
            splitting_mhz: 1.0,
            sigma_mhz: 1.0,
        });
        c.saturation.input = Some("sat.csv".into());
        c.saturation.p_max_init = Some(0.2);
        c.saturation.p_sat_init_mw = Some(1.0);
        c.output.path = Some("out.csv".into());
        c
    }

    #[test]
    fn shipped_file_equals_defaults() {
        assert_eq!(RunConfig::from_toml(DEFAULT_TOML).unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_match_library_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.defect_model(), DefectModel::default());
        assert_eq!(c.nitrogen_tensor(), default_nitrogen_tensor(Isotope::N15));
        assert_eq!(c.rates, RateSet::default());
        let mut c14 = c.clone();
        c14.isotopes.nitrogen = Isotope::N14;
        assert_eq!(c14.nitrogen_tensor(), default_nitrogen_tensor(Isotope::N14));
        assert_eq!(c.fit_lines(), 4);
        assert_eq!(c14.fit_lines(), 7);
    }

    #[test]
    fn every_key_has_provenance() {
        let entries = with_optionals().resolved_entries();
        assert!(entries.len() > 50);
        for (k, _) in &entries {
            assert!(provenance(k).is_some(), "no provenance for {k}");
        }
        for (k, _, note) in PROVENANCE {
            assert!(!note.is_empty());
            assert!(entries.iter().any(|(e, _)| e == k), "stale provenance key {k}");
        }
    }

    #[test]
    fn toml_round_trip_is_exact() {
        let c = with_optionals();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = DEFAULT_TOML.replace("gamma_pump", "gamma_pmup");
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))));
        let text = format!("typo = 1\n{DEFAULT_TOML}");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let bad = [
            ("schema_version = 1", "schema_version = 2"),
            ("boron = \"10B\"", "boron = \"15N\""),
            ("nitrogen = \"15N\"", "nitrogen = \"11B\""),
            ("nitrogen = \"15N\"", "nitrogen = \"13C\""),
            ("k_isc_1 = 1000.0", "k_isc_1 = 1.0"),
            ("lindblad_sites = 3", "lindblad_sites = 4"),
        ];
        for (from, to) in bad {
            assert!(DEFAULT_TOML.contains(from), "{from}");
            assert!(RunConfig::from_toml(&DEFAULT_TOML.replace(from, to)).is_err(), "{to}");
        }
    }

    #[test]
    fn resolved_entries_are_sorted_and_deterministic() {
        let a = RunConfig::default().resolved_entries();
        let b = RunConfig::from_toml(DEFAULT_TOML).unwrap().resolved_entries();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn grids() {
        let g = |lo, hi, points| GridConfig { lo, hi, points }.values();
        assert_eq!(g(92.0, 92.0, 1).unwrap(), vec![92.0]);
        assert_eq!(g(0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(g(1.0, 0.0, 3).is_err());
        assert!(g(0.0, 1.0, 1).is_err());
        assert!(g(0.0, f64::NAN, 3).is_err());
    }

    #[test]
    fn rate_template_follows_transverse_couplings() {
        let t = RunConfig::default().four_level_template().unwrap();
        assert!((t.gamma_plus - 0.3425).abs() < 1e-15);
        assert!((t.gamma_minus - 0.1075).abs() < 1e-15);
    }
}
