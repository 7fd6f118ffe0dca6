//! Open-system steady state of the optical cycle: ground triplet, excited triplet and a
//! metastable singlet, each tensored with the nitrogen nuclear spins.
//!
//! Density matrices are vectorized column-major, `vec(ρ)[i + N j] = ρ[i, j]`, so that
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`. Rates are in MHz (per µs); Hamiltonians are in MHz of
//! ordinary frequency and pick up a factor 2π in the commutator.

use std::f64::consts::PI;

use faer::prelude::*;
use faer::{c64, Mat, MatRef};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{comment_header, fmt_sig9};
use crate::model::{build_hamiltonian, DefectModel, FieldConfig, IsotopeSpec, Manifold};
use crate::spin::{ComplexMatrix, CompositeSpace};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// Electronic level of the seven-level optical cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElectronicLevel {
    Ground(i8),
    Excited(i8),
    Singlet,
}

impl ElectronicLevel {
    pub const ALL: [ElectronicLevel; 7] = [
        ElectronicLevel::Ground(1),
        ElectronicLevel::Ground(0),
        ElectronicLevel::Ground(-1),
        ElectronicLevel::Excited(1),
        ElectronicLevel::Excited(0),
        ElectronicLevel::Excited(-1),
        ElectronicLevel::Singlet,
    ];

    fn position(self) -> usize {
        match self {
            ElectronicLevel::Ground(m) => (1 - m) as usize,
            ElectronicLevel::Excited(m) => 3 + (1 - m) as usize,
            ElectronicLevel::Singlet => 6,
        }
    }

    pub fn label(self) -> String {
        match self {
            ElectronicLevel::Ground(m) => format!("GS{m:+}"),
            ElectronicLevel::Excited(m) => format!("ES{m:+}"),
            ElectronicLevel::Singlet => "S".into(),
        }
    }
}

/// Index map `(electronic level, nuclear configuration) → flat index`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelScheme {
    nuclear: CompositeSpace,
    nuclei: Vec<IsotopeSpec>,
}

impl LevelScheme {
    pub fn new(nuclei: &[IsotopeSpec]) -> Self {
        Self {
            nuclear: CompositeSpace::new(nuclei.iter().map(|n| n.spin).collect()),
            nuclei: nuclei.to_vec(),
        }
    }

    pub fn nuclear_dim(&self) -> usize {
        self.nuclear.dim()
    }

    pub fn dim(&self) -> usize {
        7 * self.nuclear_dim()
    }

    pub fn nuclei(&self) -> &[IsotopeSpec] {
        &self.nuclei
    }

    pub fn index(&self, level: ElectronicLevel, nuclear: usize) -> usize {
        debug_assert!(nuclear < self.nuclear_dim());
        level.position() * self.nuclear_dim() + nuclear
    }

    pub fn level_of(&self, index: usize) -> (ElectronicLevel, usize) {
        let n = self.nuclear_dim();
        (ElectronicLevel::ALL[index / n], index % n)
    }

    /// Nuclear projections of a nuclear configuration index.
    pub fn nuclear_projections(&self, nuclear: usize) -> Vec<f64> {
        if self.nuclei.is_empty() {
            return Vec::new();
        }
        self.nuclear.projections(nuclear)
    }

    pub fn total_m(&self, nuclear: usize) -> f64 {
        self.nuclear_projections(nuclear).iter().sum()
    }

    /// Largest possible total projection, `Σ I_i`.
    pub fn max_total_m(&self) -> f64 {
        self.nuclei.iter().map(|n| n.spin.s()).sum()
    }

    pub fn label(&self, index: usize) -> String {
        let (level, nuc) = self.level_of(index);
        let m: Vec<String> = self
            .nuclear_projections(nuc)
            .iter()
            .map(|m| format_half(*m))
            .collect();
        format!("{} [{}]", level.label(), m.join(" "))
    }
}

fn format_half(m: f64) -> String {
    let two = (2.0 * m).round() as i64;
    if two % 2 == 0 {
        format!("{:+}", two / 2)
    } else {
        format!("{two:+}/2")
    }
}

/// Incoherent rates of the optical cycle, MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSet {
    /// Spin-conserving ground → excited pumping.
    pub gamma_pump: f64,
    /// Spin-conserving excited → ground radiative decay.
    pub gamma_rad: f64,
    /// Excited → singlet from `m_s = 0`.
    pub k_isc_0: f64,
    /// Excited → singlet from `m_s = ±1`.
    pub k_isc_1: f64,
    /// Singlet → ground `m_s = 0`.
    pub k_s0: f64,
    /// Singlet → ground `m_s = +1` and, separately, `m_s = -1`.
    pub k_s1: f64,
    /// Electron pure dephasing in the ground triplet.
    pub gamma_deph_e: f64,
    /// Electron pure dephasing in the excited triplet.
    pub gamma_deph_es: f64,
    /// Nuclear pure dephasing.
    pub gamma_deph_n: f64,
    /// Nuclear spin-lattice relaxation toward the unpolarized state.
    pub gamma_relax_n: f64,
}

impl Default for RateSet {
    fn default() -> Self {
        Self {
            gamma_pump: 10.0,
            gamma_rad: 1000.0,
            k_isc_0: 100.0,
            k_isc_1: 1000.0,
            k_s0: 300.0,
            k_s1: 30.0,
            gamma_deph_e: 10.0,
            gamma_deph_es: 1.0e6,
            gamma_deph_n: 0.01,
            gamma_relax_n: 1.0,
        }
    }
}

impl RateSet {
    fn entries(&self) -> [(&'static str, f64); 10] {
        [
            ("gamma_pump", self.gamma_pump),
            ("gamma_rad", self.gamma_rad),
            ("k_isc_0", self.k_isc_0),
            ("k_isc_1", self.k_isc_1),
            ("k_s0", self.k_s0),
            ("k_s1", self.k_s1),
            ("gamma_deph_e", self.gamma_deph_e),
            ("gamma_deph_es", self.gamma_deph_es),
            ("gamma_deph_n", self.gamma_deph_n),
            ("gamma_relax_n", self.gamma_relax_n),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.entries() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.k_isc_1 <= self.k_isc_0 {
            return Err(Error::InvalidParameter(format!(
                "spin-selective ISC requires k_isc_1 > k_isc_0 (got {} <= {})",
                self.k_isc_1, self.k_isc_0
            )));
        }
        Ok(())
    }

    /// Smallest nonzero rate.
    pub fn min_positive(&self) -> Option<f64> {
        self.entries()
            .iter()
            .map(|(_, v)| *v)
            .filter(|v| *v > 0.0)
            .min_by(f64::total_cmp)
    }

    pub fn all_zero() -> Self {
        Self {
            gamma_pump: 0.0,
            gamma_rad: 0.0,
            k_isc_0: 0.0,
            k_isc_1: 0.0,
            k_s0: 0.0,
            k_s1: 0.0,
            gamma_deph_e: 0.0,
            gamma_deph_es: 0.0,
            gamma_deph_n: 0.0,
            gamma_relax_n: 0.0,
        }
    }
}

/// Sparse operator as `(row, col, value)` triples.
type Triplets = Vec<(usize, usize, c64)>;

fn triplets(m: &ComplexMatrix) -> Triplets {
    let n = m.dim();
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let v = m.get(i, j);
            if v != ZERO {
                out.push((i, j, v));
            }
        }
    }
    out
}

fn identity_triplets(n: usize) -> Triplets {
    (0..n).map(|i| (i, i, ONE)).collect()
}

fn adjoint(t: &Triplets) -> Triplets {
    t.iter().map(|&(i, j, v)| (j, i, v.conj())).collect()
}

fn product(a: &Triplets, b: &Triplets, n: usize) -> Triplets {
    let mut dense = vec![ZERO; n * n];
    for &(i, k, av) in a {
        for &(kk, j, bv) in b {
            if k == kk {
                dense[i + n * j] += av * bv;
            }
        }
    }
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let v = dense[i + n * j];
            if v != ZERO {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// Vectorized Liouvillian, `d vec(ρ)/dt = L vec(ρ)`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    scheme: LevelScheme,
    matrix: DMatrix<c64>,
}

impl Liouvillian {
    fn zeros(scheme: LevelScheme) -> Self {
        let n2 = scheme.dim() * scheme.dim();
        Self {
            scheme,
            matrix: DMatrix::zeros(n2, n2),
        }
    }

    pub fn scheme(&self) -> &LevelScheme {
        &self.scheme
    }

    /// Hilbert-space dimension `N`; the superoperator is `N² × N²`.
    pub fn hilbert_dim(&self) -> usize {
        self.scheme.dim()
    }

    pub fn matrix(&self) -> &DMatrix<c64> {
        &self.matrix
    }

    /// Adds `coeff · (Bᵀ ⊗ A)`, i.e. the superoperator of `ρ ↦ coeff · A ρ B`.
    fn add_sandwich(&mut self, a: &Triplets, b: &Triplets, coeff: c64) {
        let n = self.hilbert_dim();
        for &(l, j, bv) in b {
            let bc = coeff * bv;
            for &(i, k, av) in a {
                self.matrix[(i + n * j, k + n * l)] += bc * av;
            }
        }
    }

    fn add_hamiltonian(&mut self, h: &Triplets) {
        let id = identity_triplets(self.hilbert_dim());
        let w = c64::new(0.0, 2.0 * PI);
        self.add_sandwich(h, &id, -w);
        self.add_sandwich(&id, h, w);
    }

    /// `rate · (J ρ J† − ½ {J†J, ρ})`.
    fn add_dissipator(&mut self, jump: &Triplets, rate: f64) {
        if rate == 0.0 || jump.is_empty() {
            return;
        }
        let n = self.hilbert_dim();
        let jd = adjoint(jump);
        let jdj = product(&jd, jump, n);
        let id = identity_triplets(n);
        let r = c64::new(rate, 0.0);
        let half = c64::new(-0.5 * rate, 0.0);
        self.add_sandwich(jump, &jd, r);
        self.add_sandwich(&jdj, &id, half);
        self.add_sandwich(&id, &jdj, half);
    }

    pub fn vectorize(rho: &ComplexMatrix) -> Vec<c64> {
        let n = rho.dim();
        let mut v = vec![ZERO; n * n];
        for j in 0..n {
            for i in 0..n {
                v[i + n * j] = rho.get(i, j);
            }
        }
        v
    }

    pub fn unvectorize(v: &[c64], n: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, |i, j| v[i + n * j])
    }

    /// `L(ρ)`.
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let n = self.hilbert_dim();
        let v = nalgebra::DVector::from_vec(Self::vectorize(rho));
        let out = &self.matrix * v;
        Self::unvectorize(out.as_slice(), n)
    }

    /// Heisenberg-picture action `L†(X)`, the adjoint with respect to `Tr(X† ρ)`.
    pub fn apply_adjoint(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let n = self.hilbert_dim();
        let v = nalgebra::DVector::from_vec(Self::vectorize(x));
        let out = self.matrix.adjoint() * v;
        Self::unvectorize(out.as_slice(), n)
    }

    /// Largest column 2-norm, used to scale residuals.
    pub fn scale(&self) -> f64 {
        self.matrix
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Relative residual `‖L x‖ / (scale · ‖x‖)`.
    pub fn relative_residual(&self, rho: &ComplexMatrix) -> f64 {
        let v = nalgebra::DVector::from_vec(Self::vectorize(rho));
        let r = &self.matrix * &v;
        r.norm() / (self.scale() * v.norm())
    }

    fn as_faer(&self) -> MatRef<'_, c64> {
        let n2 = self.matrix.nrows();
        MatRef::from_column_major_slice(self.matrix.as_slice(), n2, n2)
    }
}

/// Full Hamiltonian of the optical cycle: ground and excited blocks from the defect
/// model and the nuclear Zeeman term alone in the singlet.
pub fn cycle_hamiltonian(model: &DefectModel, field: &FieldConfig) -> Result<ComplexMatrix> {
    cycle_hamiltonian_with(model, &model.nuclei(), field)
}

/// As [`cycle_hamiltonian`], with explicit nuclear specs (one per hyperfine tensor).
pub fn cycle_hamiltonian_with(model: &DefectModel, nuclei: &[IsotopeSpec], field: &FieldConfig) -> Result<ComplexMatrix> {
    let scheme = LevelScheme::new(nuclei);
    let nn = scheme.nuclear_dim();
    let hg = build_hamiltonian(model, Manifold::Ground, field, nuclei)?;
    let he = build_hamiltonian(model, Manifold::Excited, field, nuclei)?;
    let hs = nuclear_zeeman(nuclei, field)?;

    let mut h = ComplexMatrix::zeros(scheme.dim());
    for (block, offset) in [(&hg, 0), (&he, 3 * nn)] {
        for i in 0..3 * nn {
            for j in 0..3 * nn {
                h.set(offset + i, offset + j, block.get(i, j));
            }
        }
    }
    for i in 0..nn {
        for j in 0..nn {
            h.set(6 * nn + i, 6 * nn + j, hs.get(i, j));
        }
    }
    Ok(h)
}

fn nuclear_zeeman(nuclei: &[IsotopeSpec], field: &FieldConfig) -> Result<ComplexMatrix> {
    let space = CompositeSpace::new(nuclei.iter().map(|n| n.spin).collect());
    let mut h = ComplexMatrix::zeros(space.dim());
    let phi = field.azimuth_deg.to_radians();
    let (bz, bperp) = (field.b_z(), field.b_perp());
    for (site, n) in nuclei.iter().enumerate() {
        let ops = space.site_operators(site)?;
        let g = -n.gamma_n * 1e-3;
        h += &ops.sz.scale(g * bz);
        h += &ops.sx.scale(g * bperp * phi.cos());
        h += &ops.sy.scale(g * bperp * phi.sin());
    }
    Ok(h)
}

/// `|to⟩⟨from| ⊗ 1_nuc`.
fn transition(scheme: &LevelScheme, from: ElectronicLevel, to: ElectronicLevel) -> Triplets {
    (0..scheme.nuclear_dim())
        .map(|k| (scheme.index(to, k), scheme.index(from, k), ONE))
        .collect()
}

/// `Sz` of one triplet block (ground or excited) tensored with the nuclear identity.
fn block_sz(scheme: &LevelScheme, excited: bool) -> Triplets {
    let mut out = Vec::new();
    for m in [1i8, -1] {
        let level = if excited {
            ElectronicLevel::Excited(m)
        } else {
            ElectronicLevel::Ground(m)
        };
        for k in 0..scheme.nuclear_dim() {
            let i = scheme.index(level, k);
            out.push((i, i, c64::new(m as f64, 0.0)));
        }
    }
    out
}

/// `Iz` of one nucleus over the full space.
fn nuclear_iz(scheme: &LevelScheme, site: usize) -> Triplets {
    let nn = scheme.nuclear_dim();
    (0..scheme.dim())
        .filter_map(|i| {
            let m = scheme.nuclear_projections(i % nn)[site];
            (m != 0.0).then_some((i, i, c64::new(m, 0.0)))
        })
        .collect()
}

/// `I+` and `I-` of one nucleus over the full space, normalized so that a spin-1/2
/// relaxes toward the unpolarized state at rate `gamma_relax_n` per direction.
fn nuclear_ladders(scheme: &LevelScheme, site: usize) -> [Triplets; 2] {
    let space = CompositeSpace::new(scheme.nuclei().iter().map(|n| n.spin).collect());
    let ops = space.site_operators(site).expect("site in range");
    let nn = scheme.nuclear_dim();
    let lift = |op: &ComplexMatrix| -> Triplets {
        let t = triplets(op);
        (0..7)
            .flat_map(|e| t.iter().map(move |&(i, j, v)| (e * nn + i, e * nn + j, v)))
            .collect()
    };
    [lift(&ops.splus), lift(&ops.sminus)]
}

/// Builds the Liouvillian of the optical cycle for the model's nitrogen sites.
///
/// Jump operators: spin-conserving pumping and radiative decay between the triplets,
/// spin-selective intersystem crossing into the singlet, singlet decay to the ground
/// triplet, electron pure dephasing (`Sz` of each triplet) and nuclear pure dephasing
/// (`Iz` of each site). Every electronic jump is the identity on the nuclear sector.
pub fn build_liouvillian(model: &DefectModel, field: &FieldConfig, rates: &RateSet) -> Result<Liouvillian> {
    build_liouvillian_with(model, &model.nuclei(), field, rates)
}

/// As [`build_liouvillian`], with explicit nuclear specs (one per hyperfine tensor).
pub fn build_liouvillian_with(
    model: &DefectModel,
    nuclei: &[IsotopeSpec],
    field: &FieldConfig,
    rates: &RateSet,
) -> Result<Liouvillian> {
    model.validate()?;
    for (name, v) in rates.entries() {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
        }
    }
    let scheme = LevelScheme::new(nuclei);
    let h = cycle_hamiltonian_with(model, nuclei, field)?;
    let mut l = Liouvillian::zeros(scheme.clone());
    l.add_hamiltonian(&triplets(&h));

    use ElectronicLevel::{Excited, Ground, Singlet};
    for m in [1i8, 0, -1] {
        l.add_dissipator(&transition(&scheme, Ground(m), Excited(m)), rates.gamma_pump);
        l.add_dissipator(&transition(&scheme, Excited(m), Ground(m)), rates.gamma_rad);
        let isc = if m == 0 { rates.k_isc_0 } else { rates.k_isc_1 };
        l.add_dissipator(&transition(&scheme, Excited(m), Singlet), isc);
        let back = if m == 0 { rates.k_s0 } else { rates.k_s1 };
        l.add_dissipator(&transition(&scheme, Singlet, Ground(m)), back);
    }
    l.add_dissipator(&block_sz(&scheme, false), rates.gamma_deph_e);
    l.add_dissipator(&block_sz(&scheme, true), rates.gamma_deph_es);
    for site in 0..scheme.nuclei().len() {
        l.add_dissipator(&nuclear_iz(&scheme, site), rates.gamma_deph_n);
        for jump in nuclear_ladders(&scheme, site) {
            l.add_dissipator(&jump, rates.gamma_relax_n);
        }
    }
    Ok(l)
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: ComplexMatrix,
    pub residual_norm: f64,
    scheme: LevelScheme,
}

/// Tolerances applied to every steady state returned by the solvers.
pub const RESIDUAL_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-9;
/// Pivot ratio below which the trace-constrained system is treated as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

impl SteadyState {
    pub fn scheme(&self) -> &LevelScheme {
        &self.scheme
    }

    pub fn populations(&self) -> Vec<f64> {
        self.rho.real_diagonal()
    }

    /// `(label, population)` for every basis state.
    pub fn labeled_populations(&self) -> Vec<(String, f64)> {
        self.populations()
            .into_iter()
            .enumerate()
            .map(|(i, p)| (self.scheme.label(i), p))
            .collect()
    }

    pub fn population_of(&self, level: ElectronicLevel) -> f64 {
        (0..self.scheme.nuclear_dim())
            .map(|k| {
                let i = self.scheme.index(level, k);
                self.rho.get(i, i).re
            })
            .sum()
    }

    /// Ground `m_s = 0` populations summed per total nuclear projection, ascending.
    pub fn ground_zero_areas(&self) -> Vec<(f64, f64)> {
        let mut bins: Vec<(f64, f64)> = Vec::new();
        for k in 0..self.scheme.nuclear_dim() {
            let m = self.scheme.total_m(k);
            let i = self.scheme.index(ElectronicLevel::Ground(0), k);
            let p = self.rho.get(i, i).re;
            match bins.iter_mut().find(|(mm, _)| (*mm - m).abs() < 1e-9) {
                Some(bin) => bin.1 += p,
                None => bins.push((m, p)),
            }
        }
        bins.sort_by(|a, b| a.0.total_cmp(&b.0));
        bins
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.rho.eigenvalues_hermitian()[0]
    }

    pub fn diagonal_csv(&self) -> String {
        let mut out = String::from("index,level,populations\n");
        for (i, (label, p)) in self.labeled_populations().into_iter().enumerate() {
            out.push_str(&format!("{i},{label},{}\n", fmt_sig9(p)));
        }
        out
    }
}

/// Nuclear polarization from the ground `m_s = 0` populations binned by total projection:
/// `Σ m S_m / (Σ I_i · Σ S_m)`.
pub fn nuclear_polarization(ss: &SteadyState) -> f64 {
    let areas = ss.ground_zero_areas();
    let total: f64 = areas.iter().map(|(_, s)| s).sum();
    let weighted: f64 = areas.iter().map(|(m, s)| m * s).sum();
    let max_m = ss.scheme.max_total_m();
    if max_m == 0.0 || total == 0.0 {
        return 0.0;
    }
    weighted / (max_m * total)
}

fn finalize(l: &Liouvillian, x: &[c64]) -> Result<SteadyState> {
    let n = l.hilbert_dim();
    let raw = Liouvillian::unvectorize(x, n);
    let residual_norm = l.relative_residual(&raw);
    if !(residual_norm <= RESIDUAL_TOL) {
        return Err(Error::Residual {
            residual: residual_norm,
            tolerance: RESIDUAL_TOL,
        });
    }
    let rho = raw.hermitian_part();
    let ss = SteadyState {
        rho,
        residual_norm,
        scheme: l.scheme.clone(),
    };
    let min_eigenvalue = ss.min_eigenvalue();
    if min_eigenvalue < -POSITIVITY_TOL {
        return Err(Error::NotPositive { min_eigenvalue });
    }
    Ok(ss)
}

/// Unique steady state: solves `L vec(ρ) = 0` with the equation for `ρ[0,0]` replaced by
/// `Tr ρ = 1`, using a dense LU factorization.
///
/// Trace preservation makes the diagonal equations linearly dependent, so the substitution
/// loses nothing when the attractor is unique. A numerically singular factorization means
/// the null space is larger than one and is reported as [`Error::DegenerateSteadyState`].
pub fn steady_state(l: &Liouvillian) -> Result<SteadyState> {
    let n = l.hilbert_dim();
    let n2 = n * n;
    let src = l.as_faer();
    let trace_cols: Vec<bool> = (0..n2).map(|c| c % (n + 1) == 0).collect();
    let a = Mat::<c64>::from_fn(n2, n2, |r, c| {
        if r == 0 {
            if trace_cols[c] {
                ONE
            } else {
                ZERO
            }
        } else {
            src[(r, c)]
        }
    });
    let lu = a.partial_piv_lu();
    let (pmin, pmax) = lu
        .U()
        .diagonal()
        .column_vector()
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), z| {
            let m = z.norm();
            (lo.min(m), hi.max(m))
        });
    let pivot_ratio = pmin / pmax;
    if !(pivot_ratio > SINGULAR_PIVOT_RATIO) {
        return Err(Error::DegenerateSteadyState { pivot_ratio });
    }
    let mut rhs = Mat::<c64>::zeros(n2, 1);
    rhs[(0, 0)] = ONE;
    let x = lu.solve(&rhs);
    let xs: Vec<c64> = (0..n2).map(|i| x[(i, 0)]).collect();
    finalize(l, &xs)
}

/// Long-time average of the evolution started from `rho0`, for generators whose
/// stationary state is not unique.
///
/// Uses the Abel mean `ε (ε − L)^{-1} ρ0`, which keeps every conserved quantity of `ρ0`
/// exactly and converges to the stationary projection as `ε → 0`.
pub fn ergodic_steady_state(l: &Liouvillian, rho0: &ComplexMatrix, epsilon: f64) -> Result<SteadyState> {
    let n = l.hilbert_dim();
    let n2 = n * n;
    if rho0.dim() != n {
        return Err(Error::InvalidParameter(format!("initial state has dimension {}, expected {n}", rho0.dim())));
    }
    let src = l.as_faer();
    let eps = c64::new(epsilon, 0.0);
    let a = Mat::<c64>::from_fn(n2, n2, |r, c| if r == c { eps - src[(r, c)] } else { -src[(r, c)] });
    let v0 = Liouvillian::vectorize(rho0);
    let rhs = Mat::<c64>::from_fn(n2, 1, |i, _| eps * v0[i]);
    let x = a.partial_piv_lu().solve(&rhs);
    let xs: Vec<c64> = (0..n2).map(|i| x[(i, 0)]).collect();
    finalize(l, &xs)
}

/// Maximally mixed state of the full cycle.
pub fn maximally_mixed(scheme: &LevelScheme) -> ComplexMatrix {
    let n = scheme.dim();
    ComplexMatrix::identity(n).scale(1.0 / n as f64)
}

/// One point of a field sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub b_mt: f64,
    pub outcome: std::result::Result<(f64, f64), String>,
}

impl SweepPoint {
    pub fn polarization(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|(p, _)| *p)
    }
}

/// Steady-state nuclear polarization on a field grid at fixed tilt.
///
/// Points are independent; with `workers > 1` they are solved on a dedicated thread pool.
/// Results are always returned in grid order and do not depend on the partitioning.
pub fn sweep_field(model: &DefectModel, rates: &RateSet, b_grid_mt: &[f64], tilt_deg: f64, workers: usize) -> Result<Vec<SweepPoint>> {
    if let Some(b) = b_grid_mt.iter().find(|b| !(0.0..=200.0).contains(*b)) {
        return Err(Error::InvalidParameter(format!("sweep field {b} mT outside [0, 200] mT")));
    }
    rates.validate()?;
    let solve = |b: f64| -> SweepPoint {
        let field = FieldConfig::tilted(b, tilt_deg);
        let outcome = build_liouvillian(model, &field, rates)
            .and_then(|l| steady_state(&l))
            .map(|ss| (nuclear_polarization(&ss), ss.residual_norm))
            .map_err(|e| e.to_string());
        SweepPoint { b_mt: b, outcome }
    };
    if workers <= 1 {
        return Ok(b_grid_mt.iter().map(|&b| solve(b)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(pool.install(|| b_grid_mt.par_iter().map(|&b| solve(b)).collect()))
}

pub fn sweep_to_csv(meta: &[(String, String)], points: &[SweepPoint]) -> String {
    let mut out = comment_header(meta);
    out.push_str("b_mt,polarization,residual_norm\n");
    for p in points {
        match &p.outcome {
            Ok((pol, res)) => out.push_str(&format!("{},{},{}\n", fmt_sig9(p.b_mt), fmt_sig9(*pol), fmt_sig9(*res))),
            Err(e) => out.push_str(&format!("# failed at {} mT: {e}\n{},NaN,NaN\n", fmt_sig9(p.b_mt), fmt_sig9(p.b_mt))),
        }
    }
    out
}
