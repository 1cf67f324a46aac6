//! Physics extraction from Slater states: correlation matrices, densities,
//! pair counting against a reference vacuum, momentum-resolved occupations,
//! and the exponential-suppression fit.
//!
//! Conventions: the correlation matrix is `C_{mn} = ⟨ĉ†_m ĉ_n⟩`, i.e.
//! `C = conj(Φ)·Φᵀ` for an orbital block Φ. The expected occupation of a
//! single-particle mode `v` is `Σ_k |⟨v|φ_k⟩|²`, the sum of squared overlaps
//! with the occupied orbitals.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::lattice::{
    bloch_modes, Boundary, LatticeSpec, ModeBasis, SingleParticleHamiltonian, SlaterState,
};
use crate::linalg;

/// Two-point function `C_{mn} = ⟨ĉ†_m ĉ_n⟩` of a Slater state. For a pure
/// Slater determinant this is a Hermitian projector transpose-conjugate:
/// eigenvalues in [0, 1], trace equal to the fermion number, `C̄² = C̄`.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    matrix: DMatrix<Complex64>,
}

impl CorrelationMatrix {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn num_sites(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.matrix.nrows()).map(|i| self.matrix[(i, i)].re).sum()
    }

    /// Site densities `⟨n̂_i⟩ = C_ii`.
    pub fn densities(&self) -> Vec<f64> {
        (0..self.matrix.nrows()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub(crate) fn from_matrix(matrix: DMatrix<Complex64>) -> Self {
        CorrelationMatrix { matrix }
    }
}

/// `C = conj(Φ)·Φᵀ` in the index convention `C_{mn} = Σ_k Φ*_{mk} Φ_{nk}`.
pub fn correlation_matrix(state: &SlaterState) -> CorrelationMatrix {
    let orb = state.orbitals();
    let conj = orb.map(|z| z.conj());
    CorrelationMatrix { matrix: &conj * orb.transpose() }
}

/// Expected occupation of the single-particle mode `v` (real amplitudes):
/// `Σ_k |Σ_n v_n φ_{nk}|²`.
fn mode_occupation_real(v: &[f64], orbitals: &DMatrix<Complex64>) -> f64 {
    let n = orbitals.nrows();
    let mut total = 0.0;
    for k in 0..orbitals.ncols() {
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..n {
            acc += orbitals[(r, k)] * v[r];
        }
        total += acc.norm_sqr();
    }
    total
}

fn mode_occupation_complex(v: &DVector<Complex64>, orbitals: &DMatrix<Complex64>) -> f64 {
    let n = orbitals.nrows();
    let mut total = 0.0;
    for k in 0..orbitals.ncols() {
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..n {
            acc += v[r].conj() * orbitals[(r, k)];
        }
        total += acc.norm_sqr();
    }
    total
}

/// Particles promoted above the gap and holes left below it, measured
/// against a reference eigenbasis: `(Σ_+ n_v, N_- − Σ_- n_v)`.
pub fn band_occupations(state: &SlaterState, reference: &ModeBasis) -> Result<(f64, f64)> {
    if reference.num_sites() != state.num_sites() {
        return Err(SimError::Dimension {
            expected: state.num_sites(),
            got: reference.num_sites(),
            context: "reference basis size".into(),
        });
    }
    if reference.num_zero() > 0 {
        return Err(SimError::AmbiguousVacuum {
            value: 0.0,
            tolerance: reference.zero_tolerance(),
        });
    }
    let orb = state.orbitals();
    let pos = reference.positive_modes();
    let neg = reference.negative_modes();
    let mut particles = 0.0;
    for c in 0..pos.ncols() {
        particles += mode_occupation_real(pos.column(c).as_slice(), orb);
    }
    let mut sea = 0.0;
    for c in 0..neg.ncols() {
        sea += mode_occupation_real(neg.column(c).as_slice(), orb);
    }
    Ok((particles, reference.num_negative() as f64 - sea))
}

/// Expected number of particle-hole pairs relative to the reference vacuum:
/// the occupation of the positive-energy band. At half filling this equals
/// the number of holes in the sea (particle-number conservation).
pub fn pair_number(state: &SlaterState, reference: &ModeBasis) -> Result<f64> {
    band_occupations(state, reference).map(|(particles, _)| particles)
}

/// Occupations resolved over the discrete momentum grid of the halved zone.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct MomentumOccupation {
    pub momentum: f64,
    /// Particle occupation of the upper-band Bloch mode at this momentum.
    pub particle: f64,
    /// Hole occupation of the lower-band mode, `1 − ⟨B̂†_p B̂_p⟩`.
    pub hole: f64,
}

/// Projects the state onto the analytic Bloch pair at every grid momentum.
/// The reference vacuum is the free chain with the given mass; requires a
/// periodic, gapped chain (momentum is not a good quantum number on an open
/// one).
pub fn momentum_occupations(state: &SlaterState, mass: f64) -> Result<Vec<MomentumOccupation>> {
    let spec = state.spec();
    if spec.boundary() != Boundary::Periodic {
        return Err(SimError::unsupported(
            "momentum occupations require periodic boundaries",
        ));
    }
    if mass <= 0.0 {
        return Err(SimError::domain("momentum occupations need a gapped reference (M > 0)"));
    }
    let orb = state.orbitals();
    let mut out = Vec::with_capacity(spec.num_sites() / 2);
    for p in spec.momentum_grid()? {
        let (neg, pos, _e) = bloch_modes(spec, mass, p)?;
        let particle = mode_occupation_complex(&pos, orb);
        let sea = mode_occupation_complex(&neg, orb);
        out.push(MomentumOccupation { momentum: p, particle, hole: 1.0 - sea });
    }
    Ok(out)
}

/// The dimensionless suppression exponent `πM²/E` of the pair-creation
/// probability `exp(−πM²/E)` in natural units.
pub fn schwinger_exponent(field: f64, mass: f64) -> Result<f64> {
    if !(field.is_finite() && field > 0.0) {
        return Err(SimError::domain(format!("field must be positive, got {field}")));
    }
    if !(mass.is_finite() && mass > 0.0) {
        return Err(SimError::domain(format!("mass must be positive, got {mass}")));
    }
    Ok(std::f64::consts::PI * mass * mass / field)
}

/// Least-squares fit of `ln P = slope·(1/E) + intercept`, the exponential
/// suppression signature. A slope compatible with `−πM²` is the Schwinger
/// scaling.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ScalingFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination of the linear fit in (1/E, ln P).
    pub r_squared: f64,
    /// Root-mean-square residual of ln P.
    pub residual_rms: f64,
}

pub fn fit_suppression(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(SimError::validation(format!(
            "suppression fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut emin = f64::INFINITY;
    let mut emax = 0.0f64;
    for &(e, p) in points {
        if !(e.is_finite() && e > 0.0) {
            return Err(SimError::validation(format!("non-positive field value {e}")));
        }
        if !(p.is_finite() && p > 0.0) {
            return Err(SimError::validation(format!(
                "non-positive probability-like value {p} at E = {e}"
            )));
        }
        emin = emin.min(e);
        emax = emax.max(e);
    }
    if emax / emin < 2.0 {
        return Err(SimError::validation(format!(
            "field values must span a factor >= 2, got {:.3}",
            emax / emin
        )));
    }

    let xs: Vec<f64> = points.iter().map(|&(e, _)| 1.0 / e).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, p)| p.ln()).collect();
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    if sxx <= 0.0 {
        return Err(SimError::validation("degenerate field values"));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(ScalingFit {
        points: points.to_vec(),
        slope,
        intercept,
        r_squared,
        residual_rms: (ss_res / n).sqrt(),
    })
}

/// One trajectory sample.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ObservableRecord {
    pub time: f64,
    pub total_number: f64,
    pub pair_number: f64,
    pub energy_expectation: f64,
    pub site_density: Vec<f64>,
}

/// Energy expectation `Σ_k ⟨φ_k|H|φ_k⟩` using the sparse structure.
pub fn energy_expectation(state: &SlaterState, h: &SingleParticleHamiltonian) -> f64 {
    let orb = state.orbitals();
    let n = orb.nrows();
    let mut hcol = vec![Complex64::new(0.0, 0.0); n];
    let mut energy = 0.0;
    let data = orb.as_slice();
    for k in 0..orb.ncols() {
        let col = &data[k * n..(k + 1) * n];
        h.apply_column(col, &mut hcol);
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..n {
            acc += col[r].conj() * hcol[r];
        }
        energy += acc.re;
    }
    energy
}

/// Total particle number `tr C = Σ_k ‖φ_k‖²`; conserved by unitary steps.
pub fn total_number(state: &SlaterState) -> f64 {
    state.orbitals().iter().map(|z| z.norm_sqr()).sum()
}

/// Assembles one record against the given pair-counting reference.
pub fn observe(
    state: &SlaterState,
    h_now: &SingleParticleHamiltonian,
    reference: &ModeBasis,
    time: f64,
) -> Result<ObservableRecord> {
    let pairs = pair_number(state, reference)?;
    let orb = state.orbitals();
    let site_density = (0..orb.nrows())
        .map(|r| (0..orb.ncols()).map(|k| orb[(r, k)].norm_sqr()).sum())
        .collect();
    Ok(ObservableRecord {
        time,
        total_number: total_number(state),
        pair_number: pairs,
        energy_expectation: energy_expectation(state, h_now),
        site_density,
    })
}

/// Swaps one occupied sea orbital for a positive-energy one; used to build
/// reference states with an exactly known pair content.
pub fn excite_one_pair(reference: &ModeBasis, sea_index: usize, particle_index: usize) -> Result<SlaterState> {
    let sea = crate::lattice::dirac_sea(reference)?;
    let n_neg = reference.num_negative();
    if sea_index >= n_neg {
        return Err(SimError::validation("sea orbital index out of range"));
    }
    let pos = reference.positive_modes();
    if particle_index >= pos.ncols() {
        return Err(SimError::validation("particle mode index out of range"));
    }
    let mut orbitals = sea.orbitals().clone();
    let col = pos.column(particle_index);
    for r in 0..orbitals.nrows() {
        orbitals[(r, sea_index)] = Complex64::new(col[r], 0.0);
    }
    SlaterState::new(orbitals, reference.spec())
}
