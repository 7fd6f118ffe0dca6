//! Isotope registry, hyperfine tensors and the defect spin Hamiltonian.
//!
//! Energies are ordinary frequencies in MHz, fields in mT. With `gamma_e` in GHz/T and
//! the field in mT, `gamma_e * b` is already in MHz.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{ComplexMatrix, CompositeSpace, SpinSpec};

/// Stable isotopes of the hBN lattice sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Isotope {
    #[serde(rename = "10B")]
    B10,
    #[serde(rename = "11B")]
    B11,
    #[serde(rename = "14N")]
    N14,
    #[serde(rename = "15N")]
    N15,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotopeSpec {
    pub isotope: Isotope,
    pub name: &'static str,
    pub spin: SpinSpec,
    /// Signed nuclear gyromagnetic ratio, MHz/T.
    pub gamma_n: f64,
    pub natural_abundance: f64,
}

impl Isotope {
    pub const ALL: [Isotope; 4] = [Isotope::B10, Isotope::B11, Isotope::N14, Isotope::N15];

    pub fn spec(self) -> IsotopeSpec {
        // Boron gyromagnetic ratios are tabulated values (ratio ~2.99).
        match self {
            Isotope::B10 => IsotopeSpec {
                isotope: self,
                name: "10B",
                spin: SpinSpec::new(6).expect("static"),
                gamma_n: 4.575,
                natural_abundance: 0.20,
            },
            Isotope::B11 => IsotopeSpec {
                isotope: self,
                name: "11B",
                spin: SpinSpec::new(3).expect("static"),
                gamma_n: 13.66,
                natural_abundance: 0.80,
            },
            Isotope::N14 => IsotopeSpec {
                isotope: self,
                name: "14N",
                spin: SpinSpec::ONE,
                gamma_n: 3.07,
                natural_abundance: 0.996,
            },
            Isotope::N15 => IsotopeSpec {
                isotope: self,
                name: "15N",
                spin: SpinSpec::HALF,
                gamma_n: -4.3,
                natural_abundance: 0.004,
            },
        }
    }

    pub fn is_boron(self) -> bool {
        matches!(self, Isotope::B10 | Isotope::B11)
    }
}

impl fmt::Display for Isotope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.spec().name)
    }
}

impl FromStr for Isotope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Isotope::ALL
            .into_iter()
            .find(|i| i.spec().name.eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown isotope '{s}' (expected one of 10B, 11B, 14N, 15N)"
                ))
            })
    }
}

/// Diagonal hyperfine tensor of one nuclear site, MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperfineTensor {
    pub axx: f64,
    pub ayy: f64,
    pub azz: f64,
}

impl HyperfineTensor {
    pub fn new(axx: f64, ayy: f64, azz: f64) -> Self {
        Self { axx, ayy, azz }
    }

    /// Flip-flop coefficient `(Axx + Ayy)/4`.
    pub fn a_plus(&self) -> f64 {
        (self.axx + self.ayy) / 4.0
    }

    /// Flip-flip coefficient `(Axx - Ayy)/4`.
    pub fn a_minus(&self) -> f64 {
        (self.axx - self.ayy) / 4.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.axx * factor, self.ayy * factor, self.azz * factor)
    }

    /// Transverse components set to zero; keeps only the secular part.
    pub fn longitudinal_only(&self) -> Self {
        Self::new(0.0, 0.0, self.azz)
    }
}

/// Rescales a tensor measured for one isotope of a site to another isotope of the same
/// site, using the linear dependence of the coupling on the nuclear gyromagnetic ratio.
pub fn scale_tensor_by_isotope(
    t: &HyperfineTensor,
    from: &IsotopeSpec,
    to: &IsotopeSpec,
) -> HyperfineTensor {
    t.scaled(to.gamma_n / from.gamma_n)
}

/// Ab-initio 14N tensor components (MHz).
pub const N14_AXX: f64 = 47.0;
pub const N14_AYY: f64 = 90.0;
/// Measured 14N splitting (MHz).
pub const N14_AZZ: f64 = 44.3;
/// Measured 15N splitting magnitude (MHz); stored with negative sign.
pub const N15_AZZ: f64 = -64.1;

/// Default ground-state tensor of a nitrogen first neighbor.
pub fn default_nitrogen_tensor(nitrogen: Isotope) -> HyperfineTensor {
    let n14 = HyperfineTensor::new(N14_AXX, N14_AYY, N14_AZZ);
    match nitrogen {
        Isotope::N15 => {
            let mut t = scale_tensor_by_isotope(&n14, &Isotope::N14.spec(), &Isotope::N15.spec());
            t.azz = N15_AZZ;
            t
        }
        _ => n14,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    Ground,
    Excited,
}

/// Zero-field splittings, electron gyromagnetic ratio and per-site hyperfine tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectModel {
    pub d_gs_ghz: f64,
    pub d_es_ghz: f64,
    pub gamma_e_ghz_per_t: f64,
    pub nitrogen: Isotope,
    pub tensors_gs: Vec<HyperfineTensor>,
    pub tensors_es: Vec<HyperfineTensor>,
}

impl Default for DefectModel {
    fn default() -> Self {
        Self::with_nitrogen(Isotope::N15)
    }
}

impl DefectModel {
    pub fn with_nitrogen(nitrogen: Isotope) -> Self {
        let t = default_nitrogen_tensor(nitrogen);
        Self {
            d_gs_ghz: 3.47,
            d_es_ghz: 2.1,
            gamma_e_ghz_per_t: 28.0,
            nitrogen,
            tensors_gs: vec![t; 3],
            tensors_es: vec![t; 3],
        }
    }

    /// Same constants, first `n` nitrogen sites only.
    pub fn truncated(&self, n: usize) -> Self {
        let mut m = self.clone();
        m.tensors_gs.truncate(n);
        m.tensors_es.truncate(n);
        m
    }

    pub fn n_sites(&self) -> usize {
        self.tensors_gs.len()
    }

    /// Nitrogen isotope specs, one per modeled site.
    pub fn nuclei(&self) -> Vec<IsotopeSpec> {
        vec![self.nitrogen.spec(); self.n_sites()]
    }

    pub fn zero_field_splitting_mhz(&self, manifold: Manifold) -> f64 {
        1000.0
            * match manifold {
                Manifold::Ground => self.d_gs_ghz,
                Manifold::Excited => self.d_es_ghz,
            }
    }

    pub fn tensors(&self, manifold: Manifold) -> &[HyperfineTensor] {
        match manifold {
            Manifold::Ground => &self.tensors_gs,
            Manifold::Excited => &self.tensors_es,
        }
    }

    /// Field (mT) at which `m_s = 0` and `m_s = -1` cross in the absence of nuclei.
    pub fn bare_lac_mt(&self, manifold: Manifold) -> f64 {
        self.zero_field_splitting_mhz(manifold) / self.gamma_e_ghz_per_t
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_gs_ghz", self.d_gs_ghz),
            ("d_es_ghz", self.d_es_ghz),
            ("gamma_e_ghz_per_t", self.gamma_e_ghz_per_t),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tensors_gs.len() != self.tensors_es.len() {
            return Err(Error::TensorCount {
                tensors: self.tensors_es.len(),
                nuclei: self.tensors_gs.len(),
            });
        }
        if self.tensors_gs.len() > 3 {
            return Err(Error::InvalidParameter(
                "at most three nitrogen sites are modeled coherently".into(),
            ));
        }
        Ok(())
    }
}

/// Magnitude and orientation of the static field relative to the defect axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub b_mag_mt: f64,
    #[serde(default)]
    pub tilt_deg: f64,
    #[serde(default)]
    pub azimuth_deg: f64,
}

impl FieldConfig {
    pub fn along_z(b_mt: f64) -> Self {
        Self {
            b_mag_mt: b_mt,
            tilt_deg: 0.0,
            azimuth_deg: 0.0,
        }
    }

    pub fn tilted(b_mt: f64, tilt_deg: f64) -> Self {
        Self {
            b_mag_mt: b_mt,
            tilt_deg,
            azimuth_deg: 0.0,
        }
    }

    pub fn b_z(&self) -> f64 {
        self.b_mag_mt * self.tilt_deg.to_radians().cos()
    }

    pub fn b_perp(&self) -> f64 {
        self.b_mag_mt * self.tilt_deg.to_radians().sin()
    }
}

/// Spin Hamiltonian of one electronic manifold (S = 1) coupled to `nuclei`, in MHz.
///
/// `D Sz² + γe (B·S) − Σ γn (B·I) + Σ S·A·I`, with the basis of
/// `CompositeSpace [S=1, nuclei...]`.
pub fn build_hamiltonian(
    model: &DefectModel,
    manifold: Manifold,
    field: &FieldConfig,
    nuclei: &[IsotopeSpec],
) -> Result<ComplexMatrix> {
    let tensors = model.tensors(manifold);
    if tensors.len() != nuclei.len() {
        return Err(Error::TensorCount {
            tensors: tensors.len(),
            nuclei: nuclei.len(),
        });
    }
    let mut factors = vec![SpinSpec::ONE];
    factors.extend(nuclei.iter().map(|n| n.spin));
    let space = CompositeSpace::new(factors);
    let s = space.site_operators(0)?;

    let d = model.zero_field_splitting_mhz(manifold);
    let ge = model.gamma_e_ghz_per_t;
    let (bz, bperp) = (field.b_z(), field.b_perp());
    let phi = field.azimuth_deg.to_radians();
    let (bx, by) = (bperp * phi.cos(), bperp * phi.sin());

    let mut h = (&s.sz * &s.sz).scale(d);
    h += &s.sz.scale(ge * bz);
    if bperp != 0.0 {
        h += &s.sx.scale(ge * bx);
        h += &s.sy.scale(ge * by);
    }

    for (site, (nucleus, a)) in nuclei.iter().zip(tensors).enumerate() {
        let i = space.site_operators(site + 1)?;
        // gamma_n in MHz/T, field in mT
        let gn = nucleus.gamma_n * 1e-3;
        h += &i.sz.scale(-gn * bz);
        if bperp != 0.0 {
            h += &i.sx.scale(-gn * bx);
            h += &i.sy.scale(-gn * by);
        }
        h += &(&s.sx * &i.sx).scale(a.axx);
        h += &(&s.sy * &i.sy).scale(a.ayy);
        h += &(&s.sz * &i.sz).scale(a.azz);
    }
    Ok(h.hermitian_part())
}

/// Gap between the `N`-th and `(N+1)`-th levels (ascending, `N` = nuclear dimension):
/// the splitting between the adiabatic branches that start as `m_s = 0` and `m_s = -1`.
fn branch_gap(model: &DefectModel, manifold: Manifold, nuclei: &[IsotopeSpec], b_mt: f64) -> Result<f64> {
    let h = build_hamiltonian(model, manifold, &FieldConfig::along_z(b_mt), nuclei)?;
    let ev = h.eigenvalues_hermitian();
    let n_nuc: usize = nuclei.iter().map(|n| n.spin.dim()).product();
    Ok(ev[n_nuc] - ev[n_nuc - 1])
}

/// Result of an anticrossing search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LacLocation {
    pub field_mt: f64,
    pub gap_mhz: f64,
}

pub const LAC_WINDOW_MT: (f64, f64) = (0.0, 300.0);

/// Locates the `m_s = 0` / `m_s = -1` anticrossing of a manifold at zero tilt.
///
/// A 0.5 mT scan brackets the global minimum of the branch gap, then golden-section
/// search refines it to 1e-6 mT.
pub fn locate_lac(model: &DefectModel, manifold: Manifold, nuclei: &[IsotopeSpec]) -> Result<LacLocation> {
    let (lo, hi) = LAC_WINDOW_MT;
    let step = 0.5;
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (0usize, f64::INFINITY);
    for k in 0..=n {
        let g = branch_gap(model, manifold, nuclei, lo + k as f64 * step)?;
        if g < best.1 {
            best = (k, g);
        }
    }
    if best.0 == 0 || best.0 == n {
        return Err(Error::LacNotFound { lo_mt: lo, hi_mt: hi });
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = lo + (best.0 - 1) as f64 * step;
    let mut b = lo + (best.0 + 1) as f64 * step;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = branch_gap(model, manifold, nuclei, c)?;
    let mut fd = branch_gap(model, manifold, nuclei, d)?;
    while b - a > 1e-6 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = branch_gap(model, manifold, nuclei, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = branch_gap(model, manifold, nuclei, d)?;
        }
    }
    let field_mt = 0.5 * (a + b);
    let gap_mhz = branch_gap(model, manifold, nuclei, field_mt)?.min(best.1);
    Ok(LacLocation { field_mt, gap_mhz })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare(model: &DefectModel) -> DefectModel {
        model.truncated(0)
    }

    #[test]
    fn zero_field_ground_levels() {
        let m = bare(&DefectModel::default());
        let h = build_hamiltonian(&m, Manifold::Ground, &FieldConfig::along_z(0.0), &[]).unwrap();
        let ev = h.eigenvalues_hermitian();
        assert!(ev[0].abs() < 1e-9);
        assert!((ev[1] - 3470.0).abs() < 1e-9);
        assert!((ev[2] - 3470.0).abs() < 1e-9);
    }

    #[test]
    fn bare_crossings() {
        let m = bare(&DefectModel::default());
        let b = m.bare_lac_mt(Manifold::Ground);
        assert!((b - 123.928_571_428_571_4).abs() < 1e-9);
        let h = build_hamiltonian(&m, Manifold::Ground, &FieldConfig::along_z(b), &[]).unwrap();
        let ev = h.eigenvalues_hermitian();
        assert!((ev[1] - ev[0]).abs() < 1e-9);
        assert!((m.bare_lac_mt(Manifold::Excited) - 75.0).abs() < 1e-12);
        // documented windows on the model constants
        assert!((0.12..=0.13).contains(&(m.d_gs_ghz / m.gamma_e_ghz_per_t)));
        assert!((0.07..=0.08).contains(&(m.d_es_ghz / m.gamma_e_ghz_per_t)));
    }

    #[test]
    fn tensor_count_checked() {
        let m = DefectModel::default();
        let err = build_hamiltonian(&m, Manifold::Ground, &FieldConfig::along_z(10.0), &[Isotope::N15.spec()]);
        assert!(matches!(err, Err(Error::TensorCount { tensors: 3, nuclei: 1 })));
    }

    #[test]
    fn isotope_scaling() {
        let n14 = Isotope::N14.spec();
        let n15 = Isotope::N15.spec();
        let t = HyperfineTensor::new(47.0, 90.0, 44.3);
        let s = scale_tensor_by_isotope(&t, &n14, &n15);
        assert!((s.azz - 44.3 * -4.3 / 3.07).abs() < 1e-12);
        assert!((s.azz + 62.0).abs() < 0.1);
        assert!((s.axx + 65.83).abs() < 0.01);
        assert!((s.ayy + 126.06).abs() < 0.01);
        assert_eq!(scale_tensor_by_isotope(&t, &n14, &n14), t);
        let back = scale_tensor_by_isotope(&s, &n15, &n14);
        assert!((back.axx - t.axx).abs() < 1e-12 && (back.ayy - t.ayy).abs() < 1e-12 && (back.azz - t.azz).abs() < 1e-12);
    }

    #[test]
    fn default_n15_tensor_prefers_measured_azz() {
        let t = default_nitrogen_tensor(Isotope::N15);
        assert_eq!(t.azz, -64.1);
        assert!((t.a_plus() - (47.0 + 90.0) / 4.0 * -4.3 / 3.07).abs() < 1e-12);
    }

    #[test]
    fn isotope_labels_parse() {
        assert_eq!("15N".parse::<Isotope>().unwrap(), Isotope::N15);
        assert_eq!("10b".parse::<Isotope>().unwrap(), Isotope::B10);
        assert!("13C".parse::<Isotope>().is_err());
        assert_eq!(Isotope::B10.spec().spin.dim(), 7);
        assert_eq!(Isotope::B11.spec().spin.dim(), 4);
    }

    #[test]
    fn tilt_decomposition() {
        let f = FieldConfig::tilted(100.0, 30.0);
        assert!((f.b_z() - 100.0 * 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((f.b_perp() - 50.0).abs() < 1e-12);
    }
}
