//! Least-squares analysis of spectra and polarization curves.

pub mod lm;

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io::fmt_sig9;
use crate::spectra::{fwhm_from_sigma, Spectrum};
use lm::{minimize, LmOptions, LmOutcome};

/// Line-shape constraint of a mixture fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMode {
    /// Equally spaced lines with one width.
    #[default]
    Shared,
    /// Independent center and width per line (diagnostic).
    Free,
}

/// Starting point for the nonlinear parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureInit {
    pub center_mhz: f64,
    pub splitting_mhz: f64,
    pub sigma_mhz: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    pub mode: FitMode,
    pub init: Option<MixtureInit>,
    pub lm: LmOptions,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedLine {
    pub center_mhz: f64,
    pub sigma_mhz: f64,
    /// Dip depth (positive for a dip).
    pub amplitude: f64,
    /// `amplitude · σ · √(2π)`.
    pub area: f64,
}

#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub mode: FitMode,
    pub center_mhz: f64,
    pub splitting_mhz: f64,
    pub sigma_mhz: f64,
    pub offset: f64,
    pub amplitudes: Vec<f64>,
    pub lines: Vec<FittedLine>,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub n_points: usize,
}

pub const MIN_LINES: usize = 2;
pub const MAX_LINES: usize = 9;
/// Automatic starting points tried per fit; the lowest final RSS wins.
pub const INIT_STARTS: usize = 3;
/// Starting points kept when the spacing had to be scanned.
pub const SCAN_STARTS: usize = 8;

impl MixtureFit {
    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn fwhm_mhz(&self) -> f64 {
        fwhm_from_sigma(self.sigma_mhz)
    }

    /// One-sigma uncertainty of a named parameter.
    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.param_names.iter().position(|n| n == name)?;
        Some(self.covariance[(i, i)].sqrt())
    }

    pub fn splitting_std(&self) -> f64 {
        match self.mode {
            FitMode::Shared => self.std_error("splitting_mhz").unwrap_or(f64::NAN),
            FitMode::Free => f64::NAN,
        }
    }

    pub fn fwhm_std(&self) -> f64 {
        match self.mode {
            FitMode::Shared => fwhm_from_sigma(self.std_error("sigma_mhz").unwrap_or(f64::NAN)),
            FitMode::Free => f64::NAN,
        }
    }

    pub fn areas(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.area).collect()
    }

    /// Total projection assigned to line `k`: lines step by one unit of `m_I` in ascending
    /// frequency, symmetric about the center.
    pub fn m_values(&self) -> Vec<f64> {
        let h = (self.n_lines() as f64 - 1.0) / 2.0;
        (0..self.n_lines()).map(|k| k as f64 - h).collect()
    }

    pub fn polarization(&self) -> Result<f64> {
        let pairs: Vec<(f64, f64)> = self.m_values().into_iter().zip(self.areas()).collect();
        polarization_from_areas(&pairs)
    }

    pub fn evaluate(&self, f: f64) -> f64 {
        self.offset
            - self
                .lines
                .iter()
                .map(|l| {
                    let d = f - l.center_mhz;
                    l.amplitude * (-d * d / (2.0 * l.sigma_mhz * l.sigma_mhz)).exp()
                })
                .sum::<f64>()
    }

    /// Flat `key = value` report.
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let mode = match self.mode {
            FitMode::Shared => "shared",
            FitMode::Free => "free",
        };
        let _ = writeln!(out, "mode = {mode}");
        let _ = writeln!(out, "n_lines = {}", self.n_lines());
        let _ = writeln!(out, "n_points = {}", self.n_points);
        for (k, v) in self.summary_fields() {
            let _ = writeln!(out, "{k} = {v}");
        }
        for (k, l) in self.lines.iter().enumerate() {
            let _ = writeln!(
                out,
                "line_{k} = center_mhz {} sigma_mhz {} amplitude {} area {}",
                fmt_sig9(l.center_mhz),
                fmt_sig9(l.sigma_mhz),
                fmt_sig9(l.amplitude),
                fmt_sig9(l.area)
            );
        }
        out
    }

    fn summary_fields(&self) -> Vec<(String, String)> {
        let pol = self.polarization().map(fmt_sig9).unwrap_or_else(|_| "NaN".into());
        vec![
            ("center_mhz".into(), fmt_sig9(self.center_mhz)),
            ("center_std_mhz".into(), fmt_sig9(self.std_error("center_mhz").unwrap_or(f64::NAN))),
            ("splitting_mhz".into(), fmt_sig9(self.splitting_mhz)),
            ("splitting_std_mhz".into(), fmt_sig9(self.splitting_std())),
            ("sigma_mhz".into(), fmt_sig9(self.sigma_mhz)),
            ("fwhm_mhz".into(), fmt_sig9(self.fwhm_mhz())),
            ("fwhm_std_mhz".into(), fmt_sig9(self.fwhm_std())),
            ("offset".into(), fmt_sig9(self.offset)),
            ("polarization".into(), pol),
            ("rss".into(), fmt_sig9(self.rss)),
            ("iterations".into(), self.iterations.to_string()),
        ]
    }

    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = self.summary_fields().into_iter().map(|(k, _)| k).collect();
        for k in 0..self.n_lines() {
            cols.push(format!("area_{k}"));
        }
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols: Vec<String> = self.summary_fields().into_iter().map(|(_, v)| v).collect();
        cols.extend(self.areas().into_iter().map(fmt_sig9));
        cols.join(",")
    }
}

/// Weighted polarization `Σ m S_m / (m_max Σ S_m)` with `m_max` the largest `|m|` present.
pub fn polarization_from_areas(areas: &[(f64, f64)]) -> Result<f64> {
    let total: f64 = areas.iter().map(|(_, s)| s).sum();
    if areas.iter().all(|(_, s)| *s == 0.0) || total == 0.0 {
        return Err(Error::InvalidParameter("polarization needs at least one nonzero area".into()));
    }
    if areas.iter().any(|(m, s)| !m.is_finite() || !s.is_finite()) {
        return Err(Error::InvalidParameter("areas must be finite".into()));
    }
    let m_max = areas.iter().map(|(m, _)| m.abs()).fold(0.0, f64::max);
    if m_max == 0.0 {
        return Err(Error::InvalidParameter("all lines at m = 0".into()));
    }
    Ok(areas.iter().map(|(m, s)| m * s).sum::<f64>() / (m_max * total))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Gaussian smoothing with kernel width `sigma` (MHz), truncated at 4σ.
fn smooth(spec: &Spectrum, sigma: f64) -> Vec<f64> {
    let f = &spec.freq_mhz;
    (0..spec.len())
        .map(|i| {
            let (mut w, mut acc) = (0.0, 0.0);
            let lo = f.partition_point(|x| *x < f[i] - 4.0 * sigma);
            let hi = f.partition_point(|x| *x <= f[i] + 4.0 * sigma);
            for k in lo..hi {
                let g = gaussian(f[k], f[i], sigma);
                w += g;
                acc += g * spec.signal[k];
            }
            acc / w
        })
        .collect()
}

/// Residual sum of squares with the amplitudes and offset solved linearly.
fn projected_rss(spec: &Spectrum, n: usize, init: &MixtureInit) -> f64 {
    let centers = shared_centers(init.center_mhz, init.splitting_mhz, n);
    match linear_amplitudes(spec, &centers, &vec![init.sigma_mhz; n]) {
        Ok((off, amps)) => spec
            .freq_mhz
            .iter()
            .zip(&spec.signal)
            .map(|(f, y)| {
                let v = off - centers.iter().zip(&amps).map(|(c, a)| a * gaussian(*f, *c, init.sigma_mhz)).sum::<f64>();
                (v - y) * (v - y)
            })
            .sum(),
        Err(_) => f64::INFINITY,
    }
}

/// Initial center, splitting and width from the dips of the trace.
///
/// Dips are local minima of the smoothed trace below `median - 3·MAD`; the splitting is
/// their median spacing. Which line the first dip belongs to, and the width scale, are
/// chosen by least squares with the amplitudes solved linearly.
pub fn auto_init(spec: &Spectrum, n_lines: usize) -> Result<MixtureInit> {
    Ok(init_candidates(spec, n_lines, 1)?[0])
}

/// Up to `keep` starting points with distinct spacing or alignment, best projected RSS first.
pub fn init_candidates(spec: &Spectrum, n_lines: usize, keep: usize) -> Result<Vec<MixtureInit>> {
    let (lo, hi) = spec
        .signal
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    if !(hi - lo > 0.0) {
        return Err(Error::DegenerateInit("signal has zero amplitude range".into()));
    }
    let span = spec.freq_mhz[spec.len() - 1] - spec.freq_mhz[0];
    let step = span / (spec.len() - 1) as f64;
    let kernel = (span / (20.0 * n_lines as f64)).max(step);
    let smoothed = smooth(spec, kernel);

    let mut sorted = smoothed.clone();
    let med = median(&mut sorted);
    let mut dev: Vec<f64> = smoothed.iter().map(|s| (s - med).abs()).collect();
    let mad = median(&mut dev);
    let threshold = med - 3.0 * mad;
    let mut minima: Vec<usize> = Vec::new();
    for i in 1..smoothed.len() - 1 {
        if !(smoothed[i] < smoothed[i - 1] && smoothed[i] <= smoothed[i + 1] && smoothed[i] < threshold) {
            continue;
        }
        match minima.last_mut() {
            Some(last) if spec.freq_mhz[i] - spec.freq_mhz[*last] < 2.0 * kernel => {
                if smoothed[i] < smoothed[*last] {
                    *last = i;
                }
            }
            _ => minima.push(i),
        }
    }
    if minima.is_empty() {
        return Err(Error::DegenerateInit("no dips below median - 3 MAD; supply an initial guess".into()));
    }

    // A single resolved dip carries no spacing information; scan it instead.
    let splittings: Vec<f64> = if minima.len() >= 2 {
        let mut gaps: Vec<f64> = minima.windows(2).map(|w| spec.freq_mhz[w[1]] - spec.freq_mhz[w[0]]).collect();
        vec![median(&mut gaps)]
    } else {
        let (s_lo, s_hi) = (2.0 * kernel, span / n_lines as f64);
        (0..40).map(|k| s_lo * (s_hi / s_lo).powf(k as f64 / 39.0)).collect()
    };

    // Half-depth width of the deepest smoothed dip, kernel removed in quadrature.
    let baseline = smoothed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let deepest = *minima
        .iter()
        .min_by(|a, b| smoothed[**a].total_cmp(&smoothed[**b]))
        .expect("nonempty");
    let half = 0.5 * (baseline + smoothed[deepest]);
    let (mut l, mut r) = (deepest, deepest);
    while l > 0 && smoothed[l] < half {
        l -= 1;
    }
    while r + 1 < smoothed.len() && smoothed[r] < half {
        r += 1;
    }
    let measured = (spec.freq_mhz[r] - spec.freq_mhz[l]) / fwhm_from_sigma(1.0);
    let measured_sigma = (measured * measured - kernel * kernel).max(step * step).sqrt();

    let h = (n_lines as f64 - 1.0) / 2.0;
    let first = spec.freq_mhz[minima[0]];
    let mut scored: Vec<(f64, MixtureInit)> = Vec::new();
    for &splitting in &splittings {
        let sigma0 = measured_sigma.min(0.5 * splitting);
        let mut centers = Vec::new();
        if minima.len() <= n_lines {
            for j in 0..=(n_lines - minima.len()) {
                centers.push(first - (j as f64 - h) * splitting);
            }
        } else {
            centers.push(minima.iter().map(|&i| spec.freq_mhz[i]).sum::<f64>() / minima.len() as f64);
        }
        for &center in &centers {
            for factor in [0.5, 0.7, 1.0, 1.4, 2.0] {
                let trial = MixtureInit {
                    center_mhz: center,
                    splitting_mhz: splitting,
                    sigma_mhz: sigma0 * factor,
                };
                scored.push((projected_rss(spec, n_lines, &trial), trial));
            }
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Spacing scans are ambiguous (a shoulder fits several spacings); keep more starts.
    let keep = if splittings.len() > 1 { keep.max(SCAN_STARTS) } else { keep };
    let mut picked: Vec<MixtureInit> = Vec::new();
    for (_, c) in scored {
        if picked.len() >= keep.max(1) {
            break;
        }
        let distinct = |p: &MixtureInit| {
            (p.splitting_mhz / c.splitting_mhz - 1.0).abs() > 0.1 || (p.center_mhz - c.center_mhz).abs() > 0.5 * c.splitting_mhz
        };
        if picked.iter().all(distinct) {
            picked.push(c);
        }
    }
    Ok(picked)
}

fn gaussian(f: f64, mu: f64, sigma: f64) -> f64 {
    let d = f - mu;
    (-d * d / (2.0 * sigma * sigma)).exp()
}

/// Offset and amplitudes minimizing the residual for fixed line positions and widths.
fn linear_amplitudes(spec: &Spectrum, centers: &[f64], sigmas: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = centers.len();
    let a = DMatrix::from_fn(spec.len(), n + 1, |i, c| {
        if c == 0 {
            1.0
        } else {
            -gaussian(spec.freq_mhz[i], centers[c - 1], sigmas[c - 1])
        }
    });
    let b = DVector::from_column_slice(&spec.signal);
    let x = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::DegenerateInit(e.to_string()))?;
    Ok((x[0], x.iter().skip(1).copied().collect()))
}

fn shared_centers(center: f64, splitting: f64, n: usize) -> Vec<f64> {
    let h = (n as f64 - 1.0) / 2.0;
    (0..n).map(|k| center + (k as f64 - h) * splitting).collect()
}

/// Gaussian-mixture fit of a dip spectrum.
///
/// Shared mode parameters: `[center, splitting, sigma, offset, a_0 .. a_{n-1}]` with line
/// `k` at `center + (k - (n-1)/2)·splitting`. Free mode parameters:
/// `[offset, (center_k, sigma_k, a_k) ...]`, started from the shared solution.
pub fn fit_mixture(spec: &Spectrum, n_lines: usize, opts: &FitOptions) -> Result<MixtureFit> {
    if !(MIN_LINES..=MAX_LINES).contains(&n_lines) {
        return Err(Error::InvalidParameter(format!(
            "n_lines must be in {MIN_LINES}..={MAX_LINES}, got {n_lines}"
        )));
    }
    if spec.len() <= n_lines + 4 {
        return Err(Error::InvalidParameter("too few points for the number of parameters".into()));
    }
    let inits = match opts.init {
        Some(i) => {
            if !(i.sigma_mhz > 0.0 && i.splitting_mhz > 0.0) {
                return Err(Error::DegenerateInit("initial sigma and splitting must be positive".into()));
            }
            vec![i]
        }
        None => init_candidates(spec, n_lines, INIT_STARTS)?,
    };
    let mut shared: Option<MixtureFit> = None;
    let mut last_err = None;
    for init in inits {
        match fit_shared(spec, n_lines, init, opts.lm) {
            Ok(fit) => {
                if shared.as_ref().is_none_or(|s| fit.rss < s.rss) {
                    shared = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let shared = match (shared, last_err) {
        (Some(s), _) => s,
        (None, Some(e)) => return Err(e),
        (None, None) => return Err(Error::DegenerateInit("no starting point".into())),
    };
    match opts.mode {
        FitMode::Shared => Ok(shared),
        FitMode::Free => fit_free(spec, &shared, opts.lm),
    }
}

fn fit_shared(spec: &Spectrum, n: usize, init: MixtureInit, lm: LmOptions) -> Result<MixtureFit> {
    let centers = shared_centers(init.center_mhz, init.splitting_mhz, n);
    let (offset, amps) = linear_amplitudes(spec, &centers, &vec![init.sigma_mhz; n])?;
    let mut x0 = vec![init.center_mhz, init.splitting_mhz, init.sigma_mhz, offset];
    x0.extend(amps);

    let f = &spec.freq_mhz;
    let y = &spec.signal;
    let h = (n as f64 - 1.0) / 2.0;
    let model = |p: &DVector<f64>| {
        let (c, s, sig, off) = (p[0], p[1], p[2], p[3]);
        let mut r = DVector::zeros(f.len());
        let mut j = DMatrix::zeros(f.len(), n + 4);
        for i in 0..f.len() {
            let mut v = off;
            let (mut dc, mut ds, mut dsig) = (0.0, 0.0, 0.0);
            for k in 0..n {
                let kk = k as f64 - h;
                let d = f[i] - c - kk * s;
                let g = (-d * d / (2.0 * sig * sig)).exp();
                let a = p[4 + k];
                v -= a * g;
                let t = a * g * d / (sig * sig);
                dc -= t;
                ds -= t * kk;
                dsig -= a * g * d * d / (sig * sig * sig);
                j[(i, 4 + k)] = -g;
            }
            r[i] = v - y[i];
            j[(i, 0)] = dc;
            j[(i, 1)] = ds;
            j[(i, 2)] = dsig;
            j[(i, 3)] = 1.0;
        }
        (r, j)
    };
    let feasible = |p: &DVector<f64>| p[1] > 0.0 && p[2] > 0.0 && p.iter().all(|v| v.is_finite());
    let out = minimize(model, feasible, DVector::from_vec(x0), lm)?;
    let p = &out.params;
    let centers = shared_centers(p[0], p[1], n);
    let lines = (0..n)
        .map(|k| FittedLine {
            center_mhz: centers[k],
            sigma_mhz: p[2],
            amplitude: p[4 + k],
            area: p[4 + k] * p[2] * (2.0 * PI).sqrt(),
        })
        .collect();
    let mut names: Vec<String> = ["center_mhz", "splitting_mhz", "sigma_mhz", "offset"].iter().map(|s| s.to_string()).collect();
    names.extend((0..n).map(|k| format!("amplitude_{k}")));
    Ok(finish(FitMode::Shared, p[0], p[1], p[2], p[3], lines, names, &out, spec.len()))
}

fn fit_free(spec: &Spectrum, shared: &MixtureFit, lm: LmOptions) -> Result<MixtureFit> {
    let n = shared.n_lines();
    let mut x0 = vec![shared.offset];
    for l in &shared.lines {
        x0.extend([l.center_mhz, l.sigma_mhz, l.amplitude]);
    }
    let f = &spec.freq_mhz;
    let y = &spec.signal;
    let model = |p: &DVector<f64>| {
        let mut r = DVector::zeros(f.len());
        let mut j = DMatrix::zeros(f.len(), 1 + 3 * n);
        for i in 0..f.len() {
            let mut v = p[0];
            j[(i, 0)] = 1.0;
            for k in 0..n {
                let (mu, sig, a) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
                let d = f[i] - mu;
                let g = (-d * d / (2.0 * sig * sig)).exp();
                v -= a * g;
                j[(i, 1 + 3 * k)] = -a * g * d / (sig * sig);
                j[(i, 2 + 3 * k)] = -a * g * d * d / (sig * sig * sig);
                j[(i, 3 + 3 * k)] = -g;
            }
            r[i] = v - y[i];
        }
        (r, j)
    };
    let feasible = |p: &DVector<f64>| (0..n).all(|k| p[2 + 3 * k] > 0.0) && p.iter().all(|v| v.is_finite());
    let out = minimize(model, feasible, DVector::from_vec(x0), lm)?;
    let p = &out.params;
    let mut lines: Vec<FittedLine> = (0..n)
        .map(|k| {
            let (mu, sig, a) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
            FittedLine {
                center_mhz: mu,
                sigma_mhz: sig,
                amplitude: a,
                area: a * sig * (2.0 * PI).sqrt(),
            }
        })
        .collect();
    lines.sort_by(|a, b| a.center_mhz.total_cmp(&b.center_mhz));
    let center = lines.iter().map(|l| l.center_mhz).sum::<f64>() / n as f64;
    let splitting = (lines[n - 1].center_mhz - lines[0].center_mhz) / (n as f64 - 1.0);
    let sigma = lines.iter().map(|l| l.sigma_mhz).sum::<f64>() / n as f64;
    let mut names = vec!["offset".to_string()];
    for k in 0..n {
        names.extend([format!("center_{k}"), format!("sigma_{k}"), format!("amplitude_{k}")]);
    }
    Ok(finish(FitMode::Free, center, splitting, sigma, p[0], lines, names, &out, spec.len()))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    mode: FitMode,
    center: f64,
    splitting: f64,
    sigma: f64,
    offset: f64,
    lines: Vec<FittedLine>,
    names: Vec<String>,
    out: &LmOutcome,
    n_points: usize,
) -> MixtureFit {
    MixtureFit {
        mode,
        center_mhz: center,
        splitting_mhz: splitting,
        sigma_mhz: sigma,
        offset,
        amplitudes: lines.iter().map(|l| l.amplitude).collect(),
        lines,
        param_names: names,
        params: out.params.iter().copied().collect(),
        covariance: out.covariance(),
        rss: out.rss,
        iterations: out.iterations,
        n_points,
    }
}

/// Rising saturation `P_max · x / (1 + x)` with `x = P_L / P_sat`.
pub fn saturation_curve(power_mw: f64, p_max: f64, p_sat_mw: f64) -> f64 {
    let x = power_mw / p_sat_mw;
    p_max * x / (1.0 + x)
}

#[derive(Debug, Clone)]
pub struct SaturationFit {
    pub p_max: f64,
    pub p_sat_mw: f64,
    /// Covariance of `(p_max, p_sat)` scaled by the residual variance.
    pub covariance: DMatrix<f64>,
    /// Covariance per unit residual variance, `(JᵀJ)⁻¹`.
    pub unscaled_covariance: DMatrix<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Relative `P_sat` uncertainty, per unit relative noise on `P`, above which the fit is flagged.
pub const P_SAT_SENSITIVITY_LIMIT: f64 = 10.0;

impl SaturationFit {
    pub fn p_max_std(&self) -> f64 {
        self.covariance[(0, 0)].sqrt()
    }

    pub fn p_sat_std(&self) -> f64 {
        self.covariance[(1, 1)].sqrt()
    }

    /// Relative standard error of `P_sat` produced by noise of standard deviation
    /// `P_max` on every point (relative noise of one), independent of the actual residuals.
    pub fn p_sat_sensitivity(&self) -> f64 {
        self.unscaled_covariance[(1, 1)].sqrt() * self.p_max.abs() / self.p_sat_mw
    }

    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "p_max = {}", fmt_sig9(self.p_max));
        let _ = writeln!(out, "p_max_std = {}", fmt_sig9(self.p_max_std()));
        let _ = writeln!(out, "p_sat_mw = {}", fmt_sig9(self.p_sat_mw));
        let _ = writeln!(out, "p_sat_std_mw = {}", fmt_sig9(self.p_sat_std()));
        let _ = writeln!(out, "p_sat_sensitivity = {}", fmt_sig9(self.p_sat_sensitivity()));
        let _ = writeln!(out, "rss = {}", fmt_sig9(self.rss));
        let _ = writeln!(out, "iterations = {}", self.iterations);
        for w in &self.warnings {
            let _ = writeln!(out, "warning = {w}");
        }
        out
    }

    pub fn csv_header() -> &'static str {
        "p_max,p_max_std,p_sat_mw,p_sat_std_mw,p_sat_sensitivity,rss"
    }

    pub fn csv_row(&self) -> String {
        [
            self.p_max,
            self.p_max_std(),
            self.p_sat_mw,
            self.p_sat_std(),
            self.p_sat_sensitivity(),
            self.rss,
        ]
        .iter()
        .map(|v| fmt_sig9(*v))
        .collect::<Vec<_>>()
        .join(",")
    }
}

/// Least-squares fit of [`saturation_curve`] to `(power_mw, polarization)` points.
pub fn fit_saturation(points: &[(f64, f64)], init: Option<(f64, f64)>, lm: LmOptions) -> Result<SaturationFit> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite() || *x < 0.0) {
        return Err(Error::InvalidParameter("powers must be finite and >= 0, polarizations finite".into()));
    }
    let mut powers: Vec<f64> = points.iter().map(|p| p.0).collect();
    powers.sort_by(f64::total_cmp);
    if powers.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("powers must be distinct".into()));
    }
    let (pm0, ps0) = match init {
        Some((a, b)) if b > 0.0 => (a, b),
        Some(_) => return Err(Error::DegenerateInit("initial P_sat must be positive".into())),
        None => saturation_init(points),
    };
    let model = |p: &DVector<f64>| {
        let r = DVector::from_fn(points.len(), |i, _| saturation_curve(points[i].0, p[0], p[1]) - points[i].1);
        let j = DMatrix::from_fn(points.len(), 2, |i, c| {
            let pl = points[i].0;
            if c == 0 {
                pl / (pl + p[1])
            } else {
                -p[0] * pl / ((pl + p[1]) * (pl + p[1]))
            }
        });
        (r, j)
    };
    let out = minimize(model, |p| p[1] > 0.0 && p[0].is_finite(), DVector::from_vec(vec![pm0, ps0]), lm)?;
    let mut fit = SaturationFit {
        p_max: out.params[0],
        p_sat_mw: out.params[1],
        covariance: out.covariance(),
        unscaled_covariance: out.unscaled_covariance(),
        rss: out.rss,
        iterations: out.iterations,
        warnings: Vec::new(),
    };
    let sens = fit.p_sat_sensitivity();
    if !(sens <= P_SAT_SENSITIVITY_LIMIT) {
        fit.warnings.push(format!(
            "P_sat poorly constrained by the sampled powers (relative sensitivity {})",
            fmt_sig9(sens)
        ));
    }
    Ok(fit)
}

/// Double-reciprocal regression `1/P = 1/P_max + (P_sat/P_max)/P_L`, with a fallback.
fn saturation_init(points: &[(f64, f64)]) -> (f64, f64) {
    let usable: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (1.0 / x, 1.0 / y)).collect();
    if usable.len() >= 2 {
        let n = usable.len() as f64;
        let (sx, sy) = usable.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / n, sy / n);
        let sxx: f64 = usable.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        let sxy: f64 = usable.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        if sxx > 0.0 {
            let slope = sxy / sxx;
            let intercept = my - slope * mx;
            if intercept > 0.0 && slope > 0.0 {
                return (1.0 / intercept, slope / intercept);
            }
        }
    }
    let pmax = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mut powers: Vec<f64> = points.iter().map(|p| p.0).filter(|p| *p > 0.0).collect();
    let psat = if powers.is_empty() { 1.0 } else { median(&mut powers) };
    (pmax, psat)
}
