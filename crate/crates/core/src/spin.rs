//! Angular-momentum operators and tensor-product spaces.
//!
//! Every single-spin basis is ordered by descending projection, `|+S⟩, |S-1⟩, …, |-S⟩`,
//! and composite bases are Kronecker products with the first factor as the slowest index.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spin quantum number stored as `2S` so half-integers stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinSpec {
    two_s: u32,
}

impl SpinSpec {
    pub const HALF: SpinSpec = SpinSpec { two_s: 1 };
    pub const ONE: SpinSpec = SpinSpec { two_s: 2 };

    pub fn new(two_s: u32) -> Result<Self> {
        if two_s == 0 {
            return Err(Error::InvalidParameter("spin must satisfy 2S >= 1".into()));
        }
        Ok(Self { two_s })
    }

    pub fn two_s(&self) -> u32 {
        self.two_s
    }

    pub fn s(&self) -> f64 {
        self.two_s as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.two_s as usize + 1
    }

    /// Projection quantum number of basis index `k` (`k = 0` is `m = +S`).
    pub fn m(&self, k: usize) -> f64 {
        (self.two_s as f64 - 2.0 * k as f64) / 2.0
    }
}

/// Dense complex square matrix used for operators, Hamiltonians and density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<Complex64>);

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    /// Wraps an existing matrix. Panics if it is not square.
    pub fn from_matrix(m: DMatrix<Complex64>) -> Self {
        assert!(m.is_square(), "ComplexMatrix must be square");
        Self(m)
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self(DMatrix::from_fn(dim, dim, f))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.0[(i, j)] = v;
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        Self(&self.0 * s)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0.0, |acc, (a, b)| acc.max((a - b).norm()))
    }

    pub fn hermiticity_error(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()).scale(0.5))
    }

    /// Ascending eigenvalues of a Hermitian matrix (only the Hermitian part is used).
    pub fn eigenvalues_hermitian(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .hermitian_part()
            .0
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Real parts of the diagonal.
    pub fn real_diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix(-&self.0)
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        self.0 += &rhs.0;
    }
}

/// Cartesian and ladder operators of a single spin, in units of ħ.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub sx: ComplexMatrix,
    pub sy: ComplexMatrix,
    pub sz: ComplexMatrix,
    pub splus: ComplexMatrix,
    pub sminus: ComplexMatrix,
}

pub fn spin_operators(spec: SpinSpec) -> SpinOperators {
    let n = spec.dim();
    let s = spec.s();
    let zero = Complex64::new(0.0, 0.0);

    let sz = ComplexMatrix::from_real_diagonal(&(0..n).map(|k| spec.m(k)).collect::<Vec<_>>());

    // S+ |m⟩ = sqrt(S(S+1) - m(m+1)) |m+1⟩; |m+1⟩ sits one index lower.
    let splus = ComplexMatrix::from_fn(n, |i, j| {
        if j == i + 1 {
            let m = spec.m(j);
            Complex64::new((s * (s + 1.0) - m * (m + 1.0)).sqrt(), 0.0)
        } else {
            zero
        }
    });
    let sminus = splus.adjoint();

    let sx = (&splus + &sminus).scale(0.5);
    // Sy = (S+ - S-)/(2i)
    let sy = (&splus - &sminus).scale_complex(Complex64::new(0.0, -0.5));

    SpinOperators {
        sx,
        sy,
        sz,
        splus,
        sminus,
    }
}

/// Ordered tensor product of spin spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeSpace {
    factors: Vec<SpinSpec>,
}

impl CompositeSpace {
    pub fn new(factors: Vec<SpinSpec>) -> Self {
        Self { factors }
    }

    pub fn factors(&self) -> &[SpinSpec] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(SpinSpec::dim).product()
    }

    /// Per-factor basis indices of a composite index.
    pub fn decompose(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.factors.len()];
        for (slot, f) in out.iter_mut().zip(&self.factors).rev() {
            *slot = index % f.dim();
            index /= f.dim();
        }
        out
    }

    /// Per-factor projections `m` of a composite basis index.
    pub fn projections(&self, index: usize) -> Vec<f64> {
        self.decompose(index)
            .into_iter()
            .zip(&self.factors)
            .map(|(k, f)| f.m(k))
            .collect()
    }

    /// `1 ⊗ … ⊗ op ⊗ … ⊗ 1` with `op` at `site`.
    pub fn embed(&self, op: &ComplexMatrix, site: usize) -> Result<ComplexMatrix> {
        let factor = self.factors.get(site).ok_or(Error::SiteOutOfRange {
            site,
            n_sites: self.factors.len(),
        })?;
        if op.dim() != factor.dim() {
            return Err(Error::DimensionMismatch {
                site,
                expected: factor.dim(),
                found: op.dim(),
            });
        }
        let left: usize = self.factors[..site].iter().map(SpinSpec::dim).product();
        let right: usize = self.factors[site + 1..].iter().map(SpinSpec::dim).product();
        Ok(ComplexMatrix::identity(left)
            .kron(op)
            .kron(&ComplexMatrix::identity(right)))
    }

    /// Spin operators of `site` lifted to the full space.
    pub fn site_operators(&self, site: usize) -> Result<SpinOperators> {
        let spec = *self.factors.get(site).ok_or(Error::SiteOutOfRange {
            site,
            n_sites: self.factors.len(),
        })?;
        let ops = spin_operators(spec);
        Ok(SpinOperators {
            sx: self.embed(&ops.sx, site)?,
            sy: self.embed(&ops.sy, site)?,
            sz: self.embed(&ops.sz, site)?,
            splus: self.embed(&ops.splus, site)?,
            sminus: self.embed(&ops.sminus, site)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn spin_half_sz() {
        let ops = spin_operators(SpinSpec::HALF);
        assert_eq!(ops.sz, ComplexMatrix::from_real_diagonal(&[0.5, -0.5]));
    }

    #[test]
    fn spin_one_ladder_coefficient() {
        let ops = spin_operators(SpinSpec::ONE);
        // |m=0⟩ is index 1; S+|0⟩ = sqrt(2)|+1⟩.
        let col: Vec<Complex64> = (0..3).map(|i| ops.splus.get(i, 1)).collect();
        assert!((col[0] - c(2f64.sqrt())).norm() < 1e-15);
        assert_eq!(col[1], c(0.0));
        assert_eq!(col[2], c(0.0));
    }

    #[test]
    fn spin_three_has_seven_levels() {
        let spec = SpinSpec::new(6).unwrap();
        let ev = spin_operators(spec).sz.eigenvalues_hermitian();
        assert_eq!(ev.len(), 7);
        for (k, e) in ev.iter().enumerate() {
            assert!((e - (k as f64 - 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_spin_rejected() {
        assert!(SpinSpec::new(0).is_err());
    }

    #[test]
    fn embed_sz_on_nucleus() {
        let space = CompositeSpace::new(vec![SpinSpec::ONE, SpinSpec::HALF]);
        let iz = space
            .embed(&spin_operators(SpinSpec::HALF).sz, 1)
            .unwrap();
        let expected = ComplexMatrix::from_real_diagonal(&[0.5, -0.5, 0.5, -0.5, 0.5, -0.5]);
        assert_eq!(iz, expected);
    }

    #[test]
    fn embed_rejects_wrong_dimension() {
        let space = CompositeSpace::new(vec![SpinSpec::ONE, SpinSpec::HALF]);
        let err = space
            .embed(&spin_operators(SpinSpec::ONE).sz, 1)
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { site: 1, .. }));
        assert!(err.to_string().contains("site 1"));
        assert!(space.embed(&ComplexMatrix::identity(2), 2).is_err());
    }

    #[test]
    fn embed_trace_scales_with_complement() {
        let space = CompositeSpace::new(vec![SpinSpec::ONE, SpinSpec::HALF, SpinSpec::HALF]);
        let op = ComplexMatrix::from_fn(3, |i, j| Complex64::new(i as f64 + 1.0, j as f64));
        let lifted = space.embed(&op, 0).unwrap();
        let expected = op.trace() * (space.dim() / op.dim()) as f64;
        assert!((lifted.trace() - expected).norm() < 1e-12);
    }

    #[test]
    fn decompose_matches_kron_order() {
        let space = CompositeSpace::new(vec![SpinSpec::ONE, SpinSpec::HALF, SpinSpec::HALF]);
        assert_eq!(space.decompose(0), vec![0, 0, 0]);
        assert_eq!(space.decompose(5), vec![1, 0, 1]);
        assert_eq!(space.projections(11), vec![-1.0, -0.5, -0.5]);
    }

    proptest! {
        #[test]
        fn commutation_and_casimir(two_s in 1u32..=6) {
            let spec = SpinSpec::new(two_s).unwrap();
            let o = spin_operators(spec);
            let i = Complex64::new(0.0, 1.0);
            prop_assert!(o.sx.commutator(&o.sy).max_abs_diff(&o.sz.scale_complex(i)) < 1e-12);
            prop_assert!(o.sy.commutator(&o.sz).max_abs_diff(&o.sx.scale_complex(i)) < 1e-12);
            prop_assert!(o.sz.commutator(&o.sx).max_abs_diff(&o.sy.scale_complex(i)) < 1e-12);
            let casimir = &(&(&o.sx * &o.sx) + &(&o.sy * &o.sy)) + &(&o.sz * &o.sz);
            let s = spec.s();
            prop_assert!(casimir.max_abs_diff(&ComplexMatrix::identity(spec.dim()).scale(s * (s + 1.0))) < 1e-12);
            prop_assert!(o.sx.is_hermitian(0.0));
            prop_assert!(o.sy.is_hermitian(0.0));
            prop_assert!(o.sz.is_hermitian(0.0));
            prop_assert_eq!(o.splus.clone(), o.sminus.adjoint());
        }

        #[test]
        fn embed_is_homomorphism(two_a in 1u32..=4, two_b in 1u32..=4, seed in 0u64..1000) {
            let space = CompositeSpace::new(vec![SpinSpec::new(two_a).unwrap(), SpinSpec::new(two_b).unwrap()]);
            let n = space.factors()[1].dim();
            let a = ComplexMatrix::from_fn(n, |i, j| Complex64::new(((i * 3 + j + seed as usize) % 7) as f64, (i + 2 * j) as f64 * 0.1));
            let b = ComplexMatrix::from_fn(n, |i, j| Complex64::new((i as f64 - j as f64) * 0.3, ((seed as usize + i * j) % 5) as f64));
            let lhs = space.embed(&(&a * &b), 1).unwrap();
            let rhs = &space.embed(&a, 1).unwrap() * &space.embed(&b, 1).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);

            let m = space.factors()[0].dim();
            let other = space.embed(&ComplexMatrix::from_fn(m, |i, j| Complex64::new((i + j) as f64, i as f64)), 0).unwrap();
            let here = space.embed(&a, 1).unwrap();
            prop_assert_eq!(other.commutator(&here).max_abs(), 0.0);
        }
    }
}
