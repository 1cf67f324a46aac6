//! Exact Fock-space reference for small chains.
//!
//! Builds the full many-body Hamiltonian for spinless fermions and for
//! hardcore bosons over an occupation-number basis, evolves state vectors
//! with the same midpoint stepping contract as the Slater integrator, and
//! extracts two-point functions with explicit string-sign bookkeeping. This
//! is the ground truth the free-fermion machinery is validated against; it
//! is deliberately dense and capped at small sizes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dynamics::ProtocolSchedule;
use crate::error::{Result, SimError};
use crate::lattice::{Boundary, LatticeSpec, SiteField};
use crate::linalg;
use crate::observables::CorrelationMatrix;

/// Hard cap on chain length; C(14,7) = 3432 keeps dense methods viable.
pub const FOCK_SITE_CAP: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistics {
    Fermion,
    HardcoreBoson,
}

/// Occupation-number basis, optionally restricted to a fixed particle
/// number. States are bitmasks (bit `n` = site `n`), sorted ascending.
#[derive(Debug, Clone)]
pub struct FockBasis {
    num_sites: usize,
    sector: Option<usize>,
    states: Vec<u64>,
}

impl FockBasis {
    pub fn new(num_sites: usize, sector: Option<usize>) -> Result<Self> {
        if num_sites == 0 || num_sites > FOCK_SITE_CAP {
            return Err(SimError::validation(format!(
                "Fock basis supports 1..={FOCK_SITE_CAP} sites, got {num_sites}"
            )));
        }
        if let Some(nf) = sector {
            if nf > num_sites {
                return Err(SimError::validation(format!(
                    "sector {nf} exceeds {num_sites} sites"
                )));
            }
        }
        let states: Vec<u64> = (0..(1u64 << num_sites))
            .filter(|s| sector.is_none_or(|nf| s.count_ones() as usize == nf))
            .collect();
        Ok(FockBasis { num_sites, sector, states })
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn sector(&self) -> Option<usize> {
        self.sector
    }

    pub fn dimension(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn position(&self, state: u64) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }
}

/// Jordan-Wigner string sign `(−1)^(occupied sites below n)` of one state.
pub fn string_sign(state: u64, site: usize) -> f64 {
    let below = state & ((1u64 << site) - 1);
    if below.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// The full basis-by-site table of string signs.
pub fn jordan_wigner_map(basis: &FockBasis) -> Vec<Vec<f64>> {
    basis
        .states()
        .iter()
        .map(|&s| (0..basis.num_sites()).map(|n| string_sign(s, n)).collect())
        .collect()
}

/// Sparse real-symmetric many-body operator over a Fock basis: a diagonal
/// plus upper-triangle hopping entries.
#[derive(Debug, Clone)]
pub struct ManyBodyOperator {
    basis: FockBasis,
    statistics: Statistics,
    hopping: f64,
    boundary: Boundary,
    diag: Vec<f64>,
    offdiag: Vec<(u32, u32, f64)>,
}

fn bond_list(num_sites: usize, boundary: Boundary) -> Vec<(usize, usize)> {
    let mut bonds: Vec<(usize, usize)> = (0..num_sites - 1).map(|n| (n, n + 1)).collect();
    if boundary == Boundary::Periodic {
        bonds.push((num_sites - 1, 0));
    }
    bonds
}

/// Matrix element sign of `c†_to c_from` between `state` and the hopped
/// state, with fermionic strings (identically +1 for hardcore bosons).
fn hop_sign(state: u64, from: usize, to: usize, statistics: Statistics) -> f64 {
    match statistics {
        Statistics::HardcoreBoson => 1.0,
        Statistics::Fermion => {
            let s1 = state & !(1u64 << from);
            string_sign(state, from) * string_sign(s1, to)
        }
    }
}

fn build_many_body(
    spec: &LatticeSpec,
    mass: f64,
    phi: &SiteField,
    basis: &FockBasis,
    statistics: Statistics,
) -> Result<ManyBodyOperator> {
    if basis.num_sites() != spec.num_sites() {
        return Err(SimError::Dimension {
            expected: spec.num_sites(),
            got: basis.num_sites(),
            context: "Fock basis sites".into(),
        });
    }
    if !mass.is_finite() || mass < 0.0 {
        return Err(SimError::validation("mass must be finite and >= 0"));
    }
    if phi.len() != spec.num_sites() {
        return Err(SimError::Dimension {
            expected: spec.num_sites(),
            got: phi.len(),
            context: "phi length".into(),
        });
    }
    let potentials: Vec<f64> = site_potentials(spec, mass, phi);
    let mut op = ManyBodyOperator {
        basis: basis.clone(),
        statistics,
        hopping: spec.hopping(),
        boundary: spec.boundary(),
        diag: vec![0.0; basis.dimension()],
        offdiag: Vec::new(),
    };
    op.rebuild_structure();
    op.set_diagonal(&potentials);
    Ok(op)
}

fn site_potentials(spec: &LatticeSpec, mass: f64, phi: &SiteField) -> Vec<f64> {
    phi.values()
        .iter()
        .enumerate()
        .map(|(n, &v)| v + LatticeSpec::stagger_sign(n) * mass)
        .collect()
}

/// Second-quantized chain Hamiltonian for spinless fermions; hopping matrix
/// elements carry the Jordan-Wigner string signs.
pub fn build_many_body_fermion(
    spec: &LatticeSpec,
    mass: f64,
    phi: &SiteField,
    basis: &FockBasis,
) -> Result<ManyBodyOperator> {
    build_many_body(spec, mass, phi, basis, Statistics::Fermion)
}

/// Same chain for hardcore bosons: identical hopping amplitudes with no
/// string signs; single occupancy is enforced by the basis itself.
pub fn build_many_body_hardcore_boson(
    spec: &LatticeSpec,
    mass: f64,
    phi: &SiteField,
    basis: &FockBasis,
) -> Result<ManyBodyOperator> {
    build_many_body(spec, mass, phi, basis, Statistics::HardcoreBoson)
}

impl ManyBodyOperator {
    fn rebuild_structure(&mut self) {
        let bonds = bond_list(self.basis.num_sites(), self.boundary);
        self.offdiag.clear();
        for (row, &s) in self.basis.states().iter().enumerate() {
            for &(n, m) in &bonds {
                // Hop a particle from n to m if occupations allow.
                for (from, to) in [(n, m), (m, n)] {
                    let occ_from = (s >> from) & 1 == 1;
                    let occ_to = (s >> to) & 1 == 1;
                    if occ_from && !occ_to {
                        let s2 = (s & !(1u64 << from)) | (1u64 << to);
                        let col = self
                            .basis
                            .position(s2)
                            .expect("hopped state stays in the sector");
                        if col > row {
                            let w = -self.hopping * hop_sign(s, from, to, self.statistics);
                            self.offdiag.push((row as u32, col as u32, w));
                        }
                    }
                }
            }
        }
    }

    /// Diagonal from per-site potentials: `Σ_n V_n · occ_n(state)`.
    pub fn set_diagonal(&mut self, site_potentials: &[f64]) {
        for (row, &s) in self.basis.states().iter().enumerate() {
            let mut acc = 0.0;
            for (n, v) in site_potentials.iter().enumerate() {
                if (s >> n) & 1 == 1 {
                    acc += v;
                }
            }
            self.diag[row] = acc;
        }
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn dimension(&self) -> usize {
        self.basis.dimension()
    }

    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let dim = self.dimension();
        if dim > 4096 {
            return Err(SimError::validation(format!(
                "refusing to densify a {dim}-dimensional operator"
            )));
        }
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = self.diag[i];
        }
        for &(i, j, w) in &self.offdiag {
            m[(i as usize, j as usize)] = w;
            m[(j as usize, i as usize)] = w;
        }
        Ok(m)
    }

    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = v[i] * self.diag[i];
        }
        for &(i, j, w) in &self.offdiag {
            out[i as usize] += v[j as usize] * w;
            out[j as usize] += v[i as usize] * w;
        }
    }

    /// Gershgorin-style bound on the spectral norm.
    pub fn norm_bound(&self) -> f64 {
        let dim = self.dimension();
        let mut row_sum = vec![0.0f64; dim];
        for &(i, j, w) in &self.offdiag {
            row_sum[i as usize] += w.abs();
            row_sum[j as usize] += w.abs();
        }
        (0..dim).fold(0.0f64, |a, i| a.max(self.diag[i].abs() + row_sum[i]))
    }

    /// All eigenvalues, ascending (dense solve).
    pub fn eigenvalues(&self) -> Result<DVector<f64>> {
        let (vals, _) = linalg::eigh_sorted(&self.dense()?)?;
        Ok(vals)
    }

    /// Lowest eigenpair (dense solve).
    pub fn ground_state(&self) -> Result<(f64, DVector<f64>)> {
        let (vals, vecs) = linalg::eigh_sorted(&self.dense()?)?;
        Ok((vals[0], vecs.column(0).into()))
    }
}

/// Exact midpoint evolution of a Fock-space vector through a schedule,
/// mirroring the stage subdivision of [`crate::dynamics::evolve`] step for
/// step so the two integrators sample the same Hamiltonians. The observer
/// runs at the same global steps the Slater recorder would use.
pub fn evolve_exact_observed(
    psi: &DVector<Complex64>,
    schedule: &ProtocolSchedule,
    statistics: Statistics,
    basis: &FockBasis,
    dt: f64,
    record_every: u64,
    mut observer: impl FnMut(f64, &DVector<Complex64>),
) -> Result<DVector<Complex64>> {
    if basis.dimension() != psi.len() {
        return Err(SimError::Dimension {
            expected: basis.dimension(),
            got: psi.len(),
            context: "state vector length".into(),
        });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::validation("dt must be positive"));
    }
    let spec = schedule.spec();
    let mut op = build_many_body(spec, schedule.mass_at(0.0), &schedule.phi_at(0.0), basis, statistics)?;
    let mut state = psi.clone();
    let mut global_step: u64 = 0;

    if record_every > 0 {
        observer(0.0, &state);
    }
    let mut t_end = 0.0;
    for (k, stage) in schedule.stages().iter().enumerate() {
        if stage.duration == 0.0 {
            continue;
        }
        let t0 = schedule.stage_start(k);
        let nsteps = (stage.duration / dt).ceil().max(1.0) as u64;
        let dt_stage = stage.duration / nsteps as f64;
        for i in 0..nsteps {
            let t_mid = t0 + (i as f64 + 0.5) * dt_stage;
            let potentials = site_potentials(spec, schedule.mass_at(t_mid), &schedule.phi_at(t_mid));
            op.set_diagonal(&potentials);
            let bound = op.norm_bound();
            let factor = Complex64::new(0.0, -dt_stage);
            let op_ref = &op;
            linalg::expi_taylor_apply(
                &move |v: &[Complex64], out: &mut [Complex64]| op_ref.apply(v, out),
                factor,
                bound,
                state.len(),
                state.as_mut_slice(),
            );
            global_step += 1;
            let t_now = t0 + (i + 1) as f64 * dt_stage;
            t_end = t_now;
            if record_every > 0 && global_step % record_every == 0 {
                observer(t_now, &state);
            }
        }
    }
    if record_every > 0 {
        observer(t_end.max(schedule.total_duration()), &state);
    }

    let norm: f64 = state.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(SimError::numerical("non-finite state vector after evolution"));
    }
    if (norm - 1.0).abs() > 1e-10 {
        return Err(SimError::numerical(format!("norm drifted to {norm}")));
    }
    Ok(state)
}

/// Exact evolution without observation points.
pub fn evolve_exact(
    psi: &DVector<Complex64>,
    schedule: &ProtocolSchedule,
    statistics: Statistics,
    basis: &FockBasis,
    dt: f64,
) -> Result<DVector<Complex64>> {
    evolve_exact_observed(psi, schedule, statistics, basis, dt, 0, |_, _| {})
}

/// Fermionic two-point function `C_{mn} = ⟨ψ|ĉ†_m ĉ_n|ψ⟩` with string
/// signs. Applied to a hardcore-boson state vector this is exactly the
/// string-mapped observable.
pub fn correlation_from_state(psi: &DVector<Complex64>, basis: &FockBasis) -> Result<CorrelationMatrix> {
    correlation_with_statistics(psi, basis, Statistics::Fermion)
}

/// Bosonic two-point function `⟨ψ|d̂†_m d̂_n|ψ⟩` (no strings).
pub fn boson_correlation_from_state(
    psi: &DVector<Complex64>,
    basis: &FockBasis,
) -> Result<CorrelationMatrix> {
    correlation_with_statistics(psi, basis, Statistics::HardcoreBoson)
}

fn correlation_with_statistics(
    psi: &DVector<Complex64>,
    basis: &FockBasis,
    statistics: Statistics,
) -> Result<CorrelationMatrix> {
    if psi.len() != basis.dimension() {
        return Err(SimError::Dimension {
            expected: basis.dimension(),
            got: psi.len(),
            context: "state vector length".into(),
        });
    }
    let n = basis.num_sites();
    let mut c = DMatrix::<Complex64>::zeros(n, n);
    for (row, &s) in basis.states().iter().enumerate() {
        let amp = psi[row];
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        for site_n in 0..n {
            if (s >> site_n) & 1 == 0 {
                continue;
            }
            // Diagonal: number operator.
            c[(site_n, site_n)] += Complex64::new(amp.norm_sqr(), 0.0);
            let s1 = s & !(1u64 << site_n);
            for site_m in 0..n {
                if site_m == site_n || (s1 >> site_m) & 1 == 1 {
                    continue;
                }
                let s2 = s1 | (1u64 << site_m);
                if let Some(target) = basis.position(s2) {
                    let sign = match statistics {
                        Statistics::HardcoreBoson => 1.0,
                        Statistics::Fermion => string_sign(s, site_n) * string_sign(s1, site_m),
                    };
                    c[(site_m, site_n)] += psi[target].conj() * amp * sign;
                }
            }
        }
    }
    Ok(CorrelationMatrix::from_matrix(c))
}

/// A basis state as a Fock vector.
pub fn basis_vector(basis: &FockBasis, state: u64) -> Result<DVector<Complex64>> {
    let pos = basis
        .position(state)
        .ok_or_else(|| SimError::validation(format!("state {state:#b} not in basis")))?;
    let mut v = DVector::zeros(basis.dimension());
    v[pos] = Complex64::new(1.0, 0.0);
    Ok(v)
}
