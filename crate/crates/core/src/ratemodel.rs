//! Four-level rate model of optically pumped nuclear polarization for one spin-1/2 nucleus.
//!
//! States, in order: `|0↑⟩, |0↓⟩, |-1↑⟩, |-1↓⟩`. Flip-flops (rate `gamma_plus`) exchange
//! `|0↓⟩ ↔ |-1↑⟩`, flip-flips (rate `gamma_minus`) exchange `|0↑⟩ ↔ |-1↓⟩`, and optical
//! pumping (`gamma_l`) returns `|-1,σ⟩ → |0,σ⟩` without touching the nucleus.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::io::fmt_sig9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourLevelRates {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub gamma_l: f64,
}

impl FourLevelRates {
    pub fn new(gamma_plus: f64, gamma_minus: f64, gamma_l: f64) -> Result<Self> {
        let r = Self {
            gamma_plus,
            gamma_minus,
            gamma_l,
        };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_plus", self.gamma_plus),
            ("gamma_minus", self.gamma_minus),
            ("gamma_l", self.gamma_l),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Column-stochastic generator `dp/dt = G p`.
    pub fn generator(&self) -> Matrix4<f64> {
        let (gp, gm, gl) = (self.gamma_plus, self.gamma_minus, self.gamma_l);
        let mut g = Matrix4::zeros();
        let mut link = |from: usize, to: usize, rate: f64| {
            g[(to, from)] += rate;
            g[(from, from)] -= rate;
        };
        link(1, 2, gp);
        link(2, 1, gp);
        link(0, 3, gm);
        link(3, 0, gm);
        link(2, 0, gl);
        link(3, 1, gl);
        g
    }
}

/// Steady-state populations of `|0↑⟩, |0↓⟩, |-1↑⟩, |-1↓⟩`, summing to one.
pub fn steady_state_populations(r: &FourLevelRates) -> Result<[f64; 4]> {
    r.validate()?;
    let g = r.generator();
    let scale = g.abs().max();
    let sv = g.singular_values();
    let null_dim = if scale == 0.0 {
        4
    } else {
        sv.iter().filter(|s| **s <= 1e-12 * scale).count()
    };
    if null_dim != 1 {
        return Err(Error::NoUniqueSteadyState { null_dim });
    }
    // One balance equation is redundant; replace it with normalization.
    let mut a = g;
    a.row_mut(0).fill(1.0);
    let mut rhs = Vector4::zeros();
    rhs[0] = 1.0;
    let p = a
        .lu()
        .solve(&rhs)
        .ok_or(Error::NoUniqueSteadyState { null_dim: 2 })?;
    Ok([p[0], p[1], p[2], p[3]])
}

/// Nuclear polarization in the `m_s = 0` manifold: `(p0↑ - p0↓)/(p0↑ + p0↓)`.
pub fn polarization(pops: &[f64; 4]) -> f64 {
    (pops[0] - pops[1]) / (pops[0] + pops[1])
}

/// Saturation limit `(1 - |A-/A+|)/(1 + |A-/A+|)`.
pub fn saturation_polarization(a_plus: f64, a_minus: f64) -> Result<f64> {
    if a_plus == 0.0 || !a_plus.is_finite() || !a_minus.is_finite() {
        return Err(Error::InvalidParameter("saturation polarization needs a finite, nonzero A+".into()));
    }
    let ratio = (a_minus / a_plus).abs();
    Ok((1.0 - ratio) / (1.0 + ratio))
}

/// Polarization versus laser power with `gamma_l = k · power`.
///
/// Without pumping the two exchange pairs decouple and the steady state is not unique;
/// the unpolarized start is stationary under bidirectional exchange, so zero power maps
/// to zero polarization.
pub fn polarization_vs_power(template: &FourLevelRates, powers_mw: &[f64], k_mhz_per_mw: f64) -> Result<Vec<(f64, f64)>> {
    if !(k_mhz_per_mw.is_finite() && k_mhz_per_mw > 0.0) {
        return Err(Error::InvalidParameter(format!("power-to-rate constant must be positive, got {k_mhz_per_mw}")));
    }
    powers_mw
        .iter()
        .map(|&p| {
            if p == 0.0 {
                return Ok((p, 0.0));
            }
            let r = FourLevelRates {
                gamma_l: k_mhz_per_mw * p,
                ..*template
            };
            Ok((p, polarization(&steady_state_populations(&r)?)))
        })
        .collect()
}

pub fn curve_to_csv(meta: &[(String, String)], curve: &[(f64, f64)]) -> String {
    let mut out = crate::io::comment_header(meta);
    out.push_str("power_mw,polarization\n");
    for (p, pol) in curve {
        out.push_str(&format!("{},{}\n", fmt_sig9(*p), fmt_sig9(*pol)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    /// Null vector of the generator from a full SVD, independent of the row-replacement solve.
    fn svd_null_vector(r: &FourLevelRates) -> [f64; 4] {
        let g = DMatrix::from_fn(4, 4, |i, j| r.generator()[(i, j)]);
        let svd = g.svd(true, true);
        let (k, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let v_t = svd.v_t.unwrap();
        let v: Vec<f64> = (0..4).map(|j| v_t[(k, j)]).collect();
        let s: f64 = v.iter().sum();
        [v[0] / s, v[1] / s, v[2] / s, v[3] / s]
    }

    #[test]
    fn equal_flip_rates_give_zero() {
        let r = FourLevelRates::new(2.0, 2.0, 5.0).unwrap();
        let p = steady_state_populations(&r).unwrap();
        assert!((p[0] - p[1]).abs() < 1e-14);
        assert!(polarization(&p).abs() < 1e-14);
    }

    #[test]
    fn no_flip_flip_pumps_to_up() {
        for gl in [1.0, 100.0, 1e6] {
            let r = FourLevelRates::new(1.0, 0.0, gl).unwrap();
            let p = steady_state_populations(&r).unwrap();
            assert!((polarization(&p) - 1.0).abs() < 1e-12);
        }
        let p = steady_state_populations(&FourLevelRates::new(1.0, 0.0, 1e9).unwrap()).unwrap();
        assert!(p[0] > 1.0 - 1e-8);
    }

    #[test]
    fn generic_rates_match_svd_oracle() {
        for (gp, gm, gl) in [(3.0, 1.0, 2.0), (0.7, 0.2, 11.0), (5.0, 4.9, 0.01)] {
            let r = FourLevelRates::new(gp, gm, gl).unwrap();
            let p = steady_state_populations(&r).unwrap();
            let q = svd_null_vector(&r);
            for k in 0..4 {
                assert!((p[k] - q[k]).abs() < 1e-12, "{p:?} vs {q:?}");
            }
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_rates_rejected() {
        let zero = FourLevelRates::new(0.0, 0.0, 0.0).unwrap();
        assert!(matches!(steady_state_populations(&zero), Err(Error::NoUniqueSteadyState { null_dim: 4 })));
        let no_pump = FourLevelRates::new(1.0, 0.0, 0.0).unwrap();
        assert!(matches!(steady_state_populations(&no_pump), Err(Error::NoUniqueSteadyState { .. })));
        assert!(FourLevelRates::new(-1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn saturation_limits() {
        let p = saturation_polarization(1.0, 0.3).unwrap();
        assert!((p - 0.7 / 1.3).abs() < 1e-15);
        assert!((p - 0.538).abs() < 5e-4);
        let (ap, am) = ((47.0 + 90.0) / 4.0, (47.0 - 90.0) / 4.0);
        assert_eq!(ap, 34.25);
        assert_eq!(am, -10.75);
        assert!(((am / ap as f64).abs() - 0.3139).abs() < 1e-4);
        assert!((saturation_polarization(ap, am).unwrap() - 0.522).abs() < 5e-4);
        assert_eq!(saturation_polarization(40.0, 0.0).unwrap(), 1.0);
        assert!(saturation_polarization(0.0, 1.0).is_err());
    }

    #[test]
    fn power_curve_limits() {
        let t = FourLevelRates::new(34.25, 10.75, 0.0).unwrap();
        let powers: Vec<f64> = (0..60).map(|k| 0.25 * k as f64).collect();
        let curve = polarization_vs_power(&t, &powers, 3.0).unwrap();
        assert_eq!(curve[0].1, 0.0);
        let limit = saturation_polarization(34.25, 10.75).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].1 >= w[0].1);
            assert!(w[1].1 <= limit + 1e-15);
        }
        let far = polarization_vs_power(&t, &[1e9], 3.0).unwrap();
        assert!((far[0].1 - limit).abs() < 1e-6);
        assert!(polarization_vs_power(&t, &[1.0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn rate_scaling_and_exchange(gp in 0.01f64..100.0, gm in 0.01f64..100.0, gl in 0.01f64..100.0, s in 0.001f64..1000.0) {
            let r = FourLevelRates::new(gp, gm, gl).unwrap();
            let p = steady_state_populations(&r).unwrap();
            let scaled = steady_state_populations(&FourLevelRates::new(gp * s, gm * s, gl * s).unwrap()).unwrap();
            for k in 0..4 {
                prop_assert!((p[k] - scaled[k]).abs() < 1e-10);
            }
            let swapped = steady_state_populations(&FourLevelRates::new(gm, gp, gl).unwrap()).unwrap();
            prop_assert!((polarization(&p) + polarization(&swapped)).abs() < 1e-12);
            let limit = saturation_polarization(gp, gm).unwrap();
            prop_assert!(polarization(&p).abs() <= limit.abs() + 1e-12);
        }
    }
}
