//! Hyperfine ESR line patterns and synthetic spectra.
//!
//! Lines come from the total projection of three equivalent first-shell nitrogen nuclei.
//! The six second-shell borons are unresolved and enter as a Gaussian whose variance
//! matches their longitudinal (`A_zz`-only) offset distribution.

use std::f64::consts::LN_2;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{comment_header, fmt_sig9, parse_table};
use crate::model::IsotopeSpec;

/// `FWHM = 2 sqrt(2 ln 2) sigma`.
pub fn fwhm_from_sigma(sigma: f64) -> f64 {
    2.0 * (2.0 * LN_2).sqrt() * sigma
}

pub fn sigma_from_fwhm(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * LN_2).sqrt())
}

pub const NITROGEN_SITES: usize = 3;
pub const BORON_SITES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct HyperfineLine {
    /// Twice the total nuclear projection.
    pub two_m_total: i32,
    pub offset_mhz: f64,
    pub multiplicity: u64,
    /// Fraction of the total line area carried by this line.
    pub area_scale: f64,
}

impl HyperfineLine {
    pub fn m_total(&self) -> f64 {
        self.two_m_total as f64 / 2.0
    }
}

/// Multiplicities of each total `2m` for `n` spins of the given `2I`, ascending in `m`.
fn projection_counts(two_i: u32, n: usize) -> Vec<u64> {
    let single = vec![1u64; two_i as usize + 1];
    let mut acc = vec![1u64];
    for _ in 0..n {
        let mut next = vec![0u64; acc.len() + single.len() - 1];
        for (i, a) in acc.iter().enumerate() {
            for (j, s) in single.iter().enumerate() {
                next[i + j] += a * s;
            }
        }
        acc = next;
    }
    acc
}

/// Line pattern of `n_sites` equivalent nuclei, ascending total projection.
pub fn nitrogen_lines_for_sites(nucleus: &IsotopeSpec, a_zz: f64, n_sites: usize) -> Result<Vec<HyperfineLine>> {
    if !(a_zz.is_finite() && a_zz != 0.0) {
        return Err(Error::InvalidParameter(format!("|a_zz| must be positive, got {a_zz}")));
    }
    let two_i = nucleus.spin.two_s();
    let counts = projection_counts(two_i, n_sites);
    let total: u64 = counts.iter().sum();
    let two_m_min = -((two_i as usize * n_sites) as i32);
    Ok(counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            // total 2m steps by 2 between adjacent lines
            let two_m = two_m_min + 2 * k as i32;
            HyperfineLine {
                two_m_total: two_m,
                offset_mhz: a_zz.abs() * two_m as f64 / 2.0,
                multiplicity: c,
                area_scale: c as f64 / total as f64,
            }
        })
        .collect())
}

/// Line pattern of the three first-shell nitrogen neighbors.
pub fn nitrogen_lines(nitrogen: &IsotopeSpec, a_zz: f64) -> Result<Vec<HyperfineLine>> {
    nitrogen_lines_for_sites(nitrogen, a_zz, NITROGEN_SITES)
}

/// Single-spin projection probabilities (ascending `m`) for polarization `p = ⟨Iz⟩/I`.
///
/// Spin 1/2 uses `(1 ± p)/2`; larger spins use the spin-temperature distribution
/// `∝ exp(β m)` with `β` solved so the mean projection is `p·I`.
pub fn polarized_distribution(two_i: u32, p: f64) -> Result<Vec<f64>> {
    if !(-1.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("polarization must lie in [-1, 1], got {p}")));
    }
    let n = two_i as usize + 1;
    let i = two_i as f64 / 2.0;
    let ms: Vec<f64> = (0..n).map(|k| -i + k as f64).collect();
    if p.abs() == 1.0 {
        let mut d = vec![0.0; n];
        d[if p > 0.0 { n - 1 } else { 0 }] = 1.0;
        return Ok(d);
    }
    if two_i == 1 {
        return Ok(vec![(1.0 - p) / 2.0, (1.0 + p) / 2.0]);
    }
    let dist = |beta: f64| -> Vec<f64> {
        let w: Vec<f64> = ms.iter().map(|m| (beta * (m - i)).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    };
    let mean = |beta: f64| -> f64 { dist(beta).iter().zip(&ms).map(|(w, m)| w * m).sum::<f64>() / i };
    // mean projection is increasing in beta; bracket then bisect
    let (mut lo, mut hi) = (-1.0, 1.0);
    while mean(lo) > p {
        lo *= 2.0;
    }
    while mean(hi) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(dist(0.5 * (lo + hi)))
}

/// Lines with area fractions from three independently polarized nuclei.
pub fn polarized_lines(nitrogen: &IsotopeSpec, a_zz: f64, polarization: f64) -> Result<Vec<HyperfineLine>> {
    let mut lines = nitrogen_lines(nitrogen, a_zz)?;
    let single = polarized_distribution(nitrogen.spin.two_s(), polarization)?;
    let mut acc = vec![1.0];
    for _ in 0..NITROGEN_SITES {
        let mut next = vec![0.0; acc.len() + single.len() - 1];
        for (i, a) in acc.iter().enumerate() {
            for (j, s) in single.iter().enumerate() {
                next[i + j] += a * s;
            }
        }
        acc = next;
    }
    for (line, w) in lines.iter_mut().zip(acc) {
        line.area_scale = w;
    }
    Ok(lines)
}

/// Gaussian sigma (MHz) of the summed longitudinal offsets of six boron neighbors.
///
/// Each projection is uniform over `2I+1` values with variance `I(I+1)/3`.
pub fn boron_broadening(boron: &IsotopeSpec, a_zz_boron: f64) -> f64 {
    let i = boron.spin.s();
    (BORON_SITES as f64 * i * (i + 1.0) / 3.0).sqrt() * a_zz_boron.abs()
}

/// Unresolved-boron calibration: second-shell `A_zz` of 11B and the intrinsic FWHM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoronCalibration {
    pub a_zz_b11: f64,
    pub intrinsic_fwhm: f64,
    /// `gamma_n(11B) / gamma_n(10B)`.
    pub gamma_ratio: f64,
}

impl BoronCalibration {
    /// Solves the quadrature-sum widths `W² = Wi² + (2√(2ln2)·σ_B)²` for both boron
    /// isotopes, with `a_zz(10B) = a_zz(11B) / gamma_ratio`.
    pub fn solve(fwhm_b10: f64, fwhm_b11: f64, gamma_ratio: f64, b10: &IsotopeSpec, b11: &IsotopeSpec) -> Result<Self> {
        let k2 = fwhm_from_sigma(1.0).powi(2);
        let c11 = boron_broadening(b11, 1.0).powi(2);
        let c10 = boron_broadening(b10, 1.0 / gamma_ratio).powi(2);
        let denom = k2 * (c11 - c10);
        let a2 = (fwhm_b11.powi(2) - fwhm_b10.powi(2)) / denom;
        if !(a2.is_finite() && a2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "boron widths {fwhm_b10}/{fwhm_b11} MHz admit no real calibration"
            )));
        }
        let wi2 = fwhm_b10.powi(2) - k2 * c10 * a2;
        if wi2 <= 0.0 {
            return Err(Error::InvalidParameter("calibration needs a positive intrinsic width".into()));
        }
        Ok(Self {
            a_zz_b11: a2.sqrt(),
            intrinsic_fwhm: wi2.sqrt(),
            gamma_ratio,
        })
    }

    pub fn a_zz_for(&self, boron: &IsotopeSpec) -> f64 {
        match boron.isotope {
            crate::model::Isotope::B10 => self.a_zz_b11 / self.gamma_ratio,
            _ => self.a_zz_b11,
        }
    }

    /// Total line sigma for a boron isotope: intrinsic and boron widths in quadrature.
    pub fn line_sigma(&self, boron: &IsotopeSpec) -> f64 {
        let si = sigma_from_fwhm(self.intrinsic_fwhm);
        let sb = boron_broadening(boron, self.a_zz_for(boron));
        (si * si + sb * sb).sqrt()
    }
}

/// Sampled ESR trace with synthesis or measurement metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freq_mhz: Vec<f64>,
    pub signal: Vec<f64>,
    pub meta: Vec<(String, String)>,
}

impl Spectrum {
    pub fn new(freq_mhz: Vec<f64>, signal: Vec<f64>) -> Result<Self> {
        if freq_mhz.len() != signal.len() {
            return Err(Error::InvalidParameter(format!(
                "{} frequencies but {} signal values",
                freq_mhz.len(),
                signal.len()
            )));
        }
        if freq_mhz.len() < 2 {
            return Err(Error::InvalidParameter("spectrum needs at least two points".into()));
        }
        if freq_mhz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("frequency grid must be strictly increasing".into()));
        }
        if freq_mhz.iter().chain(&signal).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("spectrum contains non-finite values".into()));
        }
        Ok(Self {
            freq_mhz,
            signal,
            meta: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.freq_mhz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq_mhz.is_empty()
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = comment_header(&self.meta);
        out.push_str("frequency_mhz,signal\n");
        for (f, s) in self.freq_mhz.iter().zip(&self.signal) {
            out.push_str(&fmt_sig9(*f));
            out.push(',');
            out.push_str(&fmt_sig9(*s));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let table = parse_table(text, 2)?;
        let (f, s) = table.rows.iter().map(|r| (r[0], r[1])).unzip();
        let mut spec = Spectrum::new(f, s)?;
        spec.meta = table.meta;
        Ok(spec)
    }

    /// Local minima, ascending frequency.
    pub fn dips(&self) -> Vec<usize> {
        (1..self.len() - 1)
            .filter(|&i| self.signal[i] < self.signal[i - 1] && self.signal[i] <= self.signal[i + 1])
            .collect()
    }

    /// Line positions resolved by curvature: local maxima of the second difference above
    /// `rel_threshold` of its largest value. Picks up lines that overlap into shoulders.
    pub fn resolved_lines(&self, rel_threshold: f64) -> Vec<usize> {
        let n = self.len();
        if n < 3 {
            return Vec::new();
        }
        let mut c = vec![0.0; n];
        for i in 1..n - 1 {
            c[i] = self.signal[i + 1] - 2.0 * self.signal[i] + self.signal[i - 1];
        }
        let top = c.iter().cloned().fold(0.0, f64::max);
        if top <= 0.0 {
            return Vec::new();
        }
        (2..n - 2)
            .filter(|&i| c[i] > c[i - 1] && c[i] >= c[i + 1] && c[i] > rel_threshold * top)
            .collect()
    }
}

/// Uniform grid from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2, "grid needs two points");
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|k| lo + k as f64 * step).collect()
}

/// Sum of Gaussian dips: `-amplitude · Σ area_scale · exp(-(f - center - offset)²/(2σ²))`.
fn line_sum(lines: &[HyperfineLine], sigma: f64, center: f64, amplitude: f64, f: f64) -> f64 {
    let inv = 1.0 / (2.0 * sigma * sigma);
    -amplitude
        * lines
            .iter()
            .map(|l| {
                let d = f - center - l.offset_mhz;
                l.area_scale * (-d * d * inv).exp()
            })
            .sum::<f64>()
}

fn check_synthesis(lines: &[HyperfineLine], sigma: f64, center: f64, grid: &[f64]) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if lines.is_empty() || grid.len() < 2 {
        return Err(Error::InvalidParameter("need at least one line and two grid points".into()));
    }
    let lo = lines.iter().map(|l| l.offset_mhz).fold(f64::INFINITY, f64::min);
    let hi = lines.iter().map(|l| l.offset_mhz).fold(f64::NEG_INFINITY, f64::max);
    let (need_lo, need_hi) = (center + lo - 3.0 * sigma, center + hi + 3.0 * sigma);
    let (grid_lo, grid_hi) = (grid[0], grid[grid.len() - 1]);
    if grid_lo > need_lo || grid_hi < need_hi {
        return Err(Error::GridCoverage {
            grid_lo,
            grid_hi,
            need_lo,
            need_hi,
        });
    }
    Ok(())
}

/// Synthesizes a dip spectrum on `grid`, evaluating points in parallel chunks of
/// `chunk` points. Every point is computed independently so the result does not
/// depend on the chunking.
pub fn synthesize_chunked(
    lines: &[HyperfineLine],
    sigma_mhz: f64,
    center_mhz: f64,
    amplitude: f64,
    grid: &[f64],
    chunk: usize,
) -> Result<Spectrum> {
    check_synthesis(lines, sigma_mhz, center_mhz, grid)?;
    let mut signal = vec![0.0; grid.len()];
    signal
        .par_chunks_mut(chunk.max(1))
        .zip(grid.par_chunks(chunk.max(1)))
        .for_each(|(out, freqs)| {
            for (o, &f) in out.iter_mut().zip(freqs) {
                *o = line_sum(lines, sigma_mhz, center_mhz, amplitude, f);
            }
        });
    Ok(Spectrum::new(grid.to_vec(), signal)?
        .with_meta("lines", lines.len())
        .with_meta("sigma_mhz", fmt_sig9(sigma_mhz))
        .with_meta("fwhm_mhz", fmt_sig9(fwhm_from_sigma(sigma_mhz)))
        .with_meta("center_mhz", fmt_sig9(center_mhz))
        .with_meta("amplitude", fmt_sig9(amplitude)))
}

pub fn synthesize(lines: &[HyperfineLine], sigma_mhz: f64, center_mhz: f64, amplitude: f64, grid: &[f64]) -> Result<Spectrum> {
    synthesize_chunked(lines, sigma_mhz, center_mhz, amplitude, grid, 256)
}

/// Spectrum of three nitrogen neighbors each polarized to `polarization`.
pub fn synthesize_polarized(
    nitrogen: &IsotopeSpec,
    a_zz: f64,
    polarization: f64,
    sigma_mhz: f64,
    center_mhz: f64,
    amplitude: f64,
    grid: &[f64],
) -> Result<Spectrum> {
    let lines = polarized_lines(nitrogen, a_zz, polarization)?;
    Ok(synthesize(&lines, sigma_mhz, center_mhz, amplitude, grid)?.with_meta("polarization", fmt_sig9(polarization)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Isotope;
    use proptest::prelude::*;

    /// Brute-force multiplicities: enumerate every projection tuple.
    fn enumerate_counts(two_i: u32, n: usize) -> std::collections::BTreeMap<i32, u64> {
        let d = two_i as usize + 1;
        let mut out = std::collections::BTreeMap::new();
        for code in 0..d.pow(n as u32) {
            let mut c = code;
            let mut two_m = 0i32;
            for _ in 0..n {
                two_m += two_i as i32 - 2 * (c % d) as i32;
                c /= d;
            }
            *out.entry(two_m).or_insert(0) += 1;
        }
        out
    }

    #[test]
    fn n14_seven_lines() {
        let lines = nitrogen_lines(&Isotope::N14.spec(), 44.3).unwrap();
        let brute = enumerate_counts(2, 3);
        assert_eq!(lines.len(), 7);
        let weights: Vec<u64> = lines.iter().map(|l| l.multiplicity).collect();
        assert_eq!(weights, vec![1, 3, 6, 7, 6, 3, 1]);
        for l in &lines {
            assert_eq!(brute[&l.two_m_total], l.multiplicity);
        }
        assert_eq!(weights.iter().sum::<u64>(), 27);
        assert!((lines[4].offset_mhz - 44.3).abs() < 1e-12);
    }

    #[test]
    fn n15_four_lines() {
        let lines = nitrogen_lines(&Isotope::N15.spec(), -64.1).unwrap();
        let m: Vec<f64> = lines.iter().map(HyperfineLine::m_total).collect();
        assert_eq!(m, vec![-1.5, -0.5, 0.5, 1.5]);
        let weights: Vec<u64> = lines.iter().map(|l| l.multiplicity).collect();
        assert_eq!(weights, vec![1, 3, 3, 1]);
        assert_eq!(enumerate_counts(1, 3).values().copied().collect::<Vec<_>>(), weights);
        assert!((lines[3].offset_mhz - 1.5 * 64.1).abs() < 1e-12);
    }

    #[test]
    fn single_spin_half_gives_two_equal_lines() {
        let lines = nitrogen_lines_for_sites(&Isotope::N15.spec(), 64.1, 1).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].area_scale, lines[1].area_scale);
    }

    #[test]
    fn zero_azz_rejected() {
        assert!(nitrogen_lines(&Isotope::N15.spec(), 0.0).is_err());
    }

    #[test]
    fn boron_sigma_closed_forms() {
        let b11 = Isotope::B11.spec();
        let b10 = Isotope::B10.spec();
        assert!((boron_broadening(&b11, 2.0) - 2.0 * 7.5f64.sqrt()).abs() < 1e-12);
        assert!((boron_broadening(&b11, 1.0) - 2.7386).abs() < 1e-4);
        assert!((boron_broadening(&b10, -1.5) - 1.5 * 24f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn boron_sigma_matches_enumeration() {
        // all 4^6 = 4096 configurations of six I=3/2 borons
        let a = 3.7;
        let counts = enumerate_counts(3, 6);
        let total: u64 = counts.values().sum();
        assert_eq!(total, 4096);
        let var: f64 = counts
            .iter()
            .map(|(two_m, c)| *c as f64 * (a * *two_m as f64 / 2.0).powi(2))
            .sum::<f64>()
            / total as f64;
        assert!((var.sqrt() - boron_broadening(&Isotope::B11.spec(), a)).abs() < 1e-12);
    }

    #[test]
    fn single_line_depth() {
        let lines = nitrogen_lines_for_sites(&Isotope::N15.spec(), 10.0, 0).unwrap();
        assert_eq!(lines.len(), 1);
        let grid = linear_grid(-50.0, 50.0, 101);
        let s = synthesize(&lines, 5.0, 0.0, 0.3, &grid).unwrap();
        let min = s.signal.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(min, -0.3);
        assert_eq!(s.signal[50], -0.3);
    }

    #[test]
    fn grid_coverage_enforced() {
        let lines = nitrogen_lines(&Isotope::N15.spec(), 64.1).unwrap();
        let grid = linear_grid(-100.0, 100.0, 201);
        assert!(matches!(synthesize(&lines, 10.0, 0.0, 1.0, &grid), Err(Error::GridCoverage { .. })));
    }

    #[test]
    fn dip_spacing_n15_and_n14() {
        let grid = linear_grid(-300.0, 300.0, 12001);
        let n15 = nitrogen_lines(&Isotope::N15.spec(), -64.1).unwrap();
        let s = synthesize(&n15, 8.0, 0.0, 1.0, &grid).unwrap();
        let d = s.dips();
        assert_eq!(d.len(), 4);
        for w in d.windows(2) {
            assert!((grid[w[1]] - grid[w[0]] - 64.1).abs() < 0.06);
        }
        let n14 = nitrogen_lines(&Isotope::N14.spec(), 44.3).unwrap();
        let s = synthesize(&n14, 6.0, 0.0, 1.0, &grid).unwrap();
        assert_eq!(s.dips().len(), 7);
    }

    #[test]
    fn curvature_resolves_overlapping_lines() {
        let grid = linear_grid(-300.0, 300.0, 3001);
        let sigma = sigma_from_fwhm(44.3);
        let n14 = nitrogen_lines(&Isotope::N14.spec(), 44.3).unwrap();
        let s = synthesize(&n14, sigma, 0.0, 1.0, &grid).unwrap();
        assert!(s.dips().len() < 7);
        assert_eq!(s.resolved_lines(0.05).len(), 7);
        let n15 = nitrogen_lines(&Isotope::N15.spec(), -64.1).unwrap();
        let s = synthesize(&n15, sigma, 0.0, 1.0, &grid).unwrap();
        assert_eq!(s.resolved_lines(0.05).len(), 4);
        let flat = Spectrum::new(grid.clone(), vec![0.0; grid.len()]).unwrap();
        assert!(flat.resolved_lines(0.05).is_empty());
    }

    #[test]
    fn chunking_is_bit_identical() {
        let lines = nitrogen_lines(&Isotope::N14.spec(), 44.3).unwrap();
        let grid = linear_grid(-300.0, 300.0, 1001);
        let a = synthesize_chunked(&lines, 18.0, 1.0, 0.02, &grid, 1).unwrap();
        let b = synthesize_chunked(&lines, 18.0, 1.0, 0.02, &grid, 7).unwrap();
        let c = synthesize_chunked(&lines, 18.0, 1.0, 0.02, &grid, 5000).unwrap();
        assert_eq!(a.signal, b.signal);
        assert_eq!(a.signal, c.signal);
    }

    #[test]
    fn polarized_limits() {
        let n15 = Isotope::N15.spec();
        let zero = polarized_lines(&n15, 64.1, 0.0).unwrap();
        for (p, u) in zero.iter().zip(nitrogen_lines(&n15, 64.1).unwrap()) {
            assert_eq!(p.area_scale, u.area_scale);
        }
        let full = polarized_lines(&n15, 64.1, 1.0).unwrap();
        assert_eq!(full[3].area_scale, 1.0);
        assert!(full[..3].iter().all(|l| l.area_scale == 0.0));
        let p = polarized_lines(&n15, 64.1, 0.3).unwrap();
        let ratio = p[3].area_scale / p[0].area_scale;
        assert!((ratio - (1.3f64 / 0.7).powi(3)).abs() < 1e-12);
        assert!((ratio - 6.41).abs() < 0.01);
        assert!(polarized_lines(&n15, 64.1, 1.2).is_err());
    }

    #[test]
    fn spin_one_polarization_matches_mean() {
        let d = polarized_distribution(2, 0.4).unwrap();
        let mean: f64 = d.iter().zip([-1.0, 0.0, 1.0]).map(|(w, m)| w * m).sum();
        assert!((mean - 0.4).abs() < 1e-12);
        let u = polarized_distribution(2, 0.0).unwrap();
        assert!(u.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let lines = nitrogen_lines(&Isotope::N15.spec(), 64.1).unwrap();
        let grid = linear_grid(-250.0, 250.0, 51);
        let s = synthesize(&lines, 19.0, 0.0, 0.02, &grid).unwrap();
        let text = s.to_csv();
        assert!(text.starts_with("# lines = 4\n"));
        let back = Spectrum::from_csv(&text).unwrap();
        for (a, b) in s.signal.iter().zip(&back.signal) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-30));
        }
        assert_eq!(back.meta, s.meta);
        assert!(Spectrum::from_csv("frequency_mhz,signal\n2,0\n1,0\n").is_err());
    }

    proptest! {
        #[test]
        fn line_count_and_total_area(two_i in 1u32..=6, p in -0.99f64..0.99) {
            let spec = IsotopeSpec { spin: crate::spin::SpinSpec::new(two_i).unwrap(), ..Isotope::N15.spec() };
            let lines = nitrogen_lines(&spec, 20.0).unwrap();
            prop_assert_eq!(lines.len(), 3 * two_i as usize + 1);
            let total: u64 = lines.iter().map(|l| l.multiplicity).sum();
            prop_assert_eq!(total, (two_i as u64 + 1).pow(3));
            let pol = polarized_lines(&spec, 20.0, p).unwrap();
            let area: f64 = pol.iter().map(|l| l.area_scale).sum();
            prop_assert!((area - 1.0).abs() < 1e-12);
        }
    }
}
