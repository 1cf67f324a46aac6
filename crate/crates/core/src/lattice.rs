//! Staggered-mass tight-binding chain: Hamiltonian construction, band
//! structure, Bogoliubov mode mixing, and Dirac-sea preparation.
//!
//! The model is a one-dimensional spinless chain with nearest-neighbor
//! hopping `-J` and on-site potentials `V_n = Φ_n ± M` (plus sign on even
//! sites, minus on odd sites). The alternating ±M encodes a relativistic
//! mass gap: the free spectrum is `±sqrt(M² + 4J²cos²(a p))` over the halved
//! Brillouin zone `p ∈ (−π/2a, π/2a]`, which near the zone edge reduces to
//! `±sqrt(M² + q²)` once `J = 1/(2a)`. Natural units `ħ = c = q = 1`
//! throughout; physical units live in [`crate::design`].

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::linalg;

/// Relative zero-mode tolerance: eigenvalues with |ε| < `ZERO_MODE_REL_TOL`·J
/// are treated as ambiguous when filling the Dirac sea.
pub const ZERO_MODE_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

/// Static geometry of the chain. The hopping and the lattice constant are
/// locked together by `J = 1/(2a)`, so the two constructors are equivalent
/// ways of fixing the same pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    num_sites: usize,
    lattice_constant: f64,
    hopping: f64,
    boundary: Boundary,
}

impl LatticeSpec {
    pub fn from_lattice_constant(num_sites: usize, a: f64, boundary: Boundary) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(SimError::validation(format!("lattice constant must be positive, got {a}")));
        }
        Self::validate_sites(num_sites)?;
        Ok(LatticeSpec { num_sites, lattice_constant: a, hopping: 1.0 / (2.0 * a), boundary })
    }

    pub fn from_hopping(num_sites: usize, j: f64, boundary: Boundary) -> Result<Self> {
        if !(j.is_finite() && j > 0.0) {
            return Err(SimError::validation(format!("hopping must be positive, got {j}")));
        }
        Self::validate_sites(num_sites)?;
        Ok(LatticeSpec { num_sites, lattice_constant: 1.0 / (2.0 * j), hopping: j, boundary })
    }

    fn validate_sites(num_sites: usize) -> Result<()> {
        if num_sites < 4 || num_sites % 2 != 0 {
            return Err(SimError::validation(format!(
                "num_sites must be even and >= 4 so the two-site cell tiles the chain, got {num_sites}"
            )));
        }
        Ok(())
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn lattice_constant(&self) -> f64 {
        self.lattice_constant
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Chain length `N·a`.
    pub fn length(&self) -> f64 {
        self.num_sites as f64 * self.lattice_constant
    }

    /// Sign of the staggered mass on site `n`: `+1` on even, `−1` on odd.
    pub fn stagger_sign(n: usize) -> f64 {
        if n % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Discrete momenta of the halved Brillouin zone, `p_j = 2πj/(N a)` with
    /// integer `j ∈ (−N/4, N/4]`. There are exactly `N/2` of them; the zone
    /// edge `+π/(2a)` is included when `N` is a multiple of 4.
    pub fn momentum_grid(&self) -> Result<Vec<f64>> {
        if self.boundary != Boundary::Periodic {
            return Err(SimError::unsupported(
                "momentum grid is only defined for periodic boundaries",
            ));
        }
        let n = self.num_sites as i64;
        let mut grid = Vec::with_capacity(self.num_sites / 2);
        for j in -n..=n {
            if 4 * j > -n && 4 * j <= n {
                grid.push(2.0 * std::f64::consts::PI * j as f64 / (n as f64 * self.lattice_constant));
            }
        }
        debug_assert_eq!(grid.len(), self.num_sites / 2);
        Ok(grid)
    }
}

/// One real value per site, in energy units. Holds the electrostatic
/// potential Φ_n; the staggered ±M part is added by the Hamiltonian builder.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteField {
    values: Vec<f64>,
}

impl SiteField {
    pub fn new(values: Vec<f64>, spec: &LatticeSpec) -> Result<Self> {
        if values.len() != spec.num_sites() {
            return Err(SimError::Dimension {
                expected: spec.num_sites(),
                got: values.len(),
                context: "site field length".into(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SimError::validation("site field contains non-finite entries"));
        }
        Ok(SiteField { values })
    }

    pub fn zeros(spec: &LatticeSpec) -> Self {
        SiteField { values: vec![0.0; spec.num_sites()] }
    }

    pub fn uniform(spec: &LatticeSpec, value: f64) -> Result<Self> {
        Self::new(vec![value; spec.num_sites()], spec)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// First-quantized lattice Hamiltonian. Stored compactly as the diagonal
/// plus the (constant) hopping; `dense()` materializes the full matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleParticleHamiltonian {
    spec: LatticeSpec,
    diag: Vec<f64>,
}

/// Builds the chain Hamiltonian with diagonal `Φ_n + M` on even sites and
/// `Φ_n − M` on odd sites, and `−J` on nearest-neighbor bonds (periodic
/// boundaries add the corner bond).
pub fn build_hamiltonian(
    spec: &LatticeSpec,
    mass: f64,
    phi: &SiteField,
) -> Result<SingleParticleHamiltonian> {
    if !mass.is_finite() || mass < 0.0 {
        return Err(SimError::validation(format!("mass must be finite and >= 0, got {mass}")));
    }
    if phi.len() != spec.num_sites() {
        return Err(SimError::Dimension {
            expected: spec.num_sites(),
            got: phi.len(),
            context: "phi field length".into(),
        });
    }
    let diag = phi
        .values()
        .iter()
        .enumerate()
        .map(|(n, &v)| v + LatticeSpec::stagger_sign(n) * mass)
        .collect();
    Ok(SingleParticleHamiltonian { spec: *spec, diag })
}

/// The free Hamiltonian: Φ = 0, staggered mass only.
pub fn free_hamiltonian(spec: &LatticeSpec, mass: f64) -> Result<SingleParticleHamiltonian> {
    build_hamiltonian(spec, mass, &SiteField::zeros(spec))
}

impl SingleParticleHamiltonian {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub(crate) fn diag_mut(&mut self) -> &mut [f64] {
        &mut self.diag
    }

    pub fn num_sites(&self) -> usize {
        self.spec.num_sites()
    }

    /// Dense symmetric matrix representation.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.spec.num_sites();
        let j = self.spec.hopping();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
        }
        for i in 0..n - 1 {
            m[(i, i + 1)] = -j;
            m[(i + 1, i)] = -j;
        }
        if self.spec.boundary() == Boundary::Periodic {
            m[(0, n - 1)] = -j;
            m[(n - 1, 0)] = -j;
        }
        m
    }

    /// `out = H·v` for one complex column, using the sparse structure.
    pub fn apply_column(&self, v: &[Complex64], out: &mut [Complex64]) {
        let n = self.diag.len();
        debug_assert_eq!(v.len(), n);
        debug_assert_eq!(out.len(), n);
        let j = self.spec.hopping();
        for i in 0..n {
            let mut acc = v[i] * self.diag[i];
            if i > 0 {
                acc -= v[i - 1] * j;
            }
            if i + 1 < n {
                acc -= v[i + 1] * j;
            }
            out[i] = acc;
        }
        if self.spec.boundary() == Boundary::Periodic {
            out[0] -= v[n - 1] * j;
            out[n - 1] -= v[0] * j;
        }
    }

    /// Rigorous upper bound on the spectral norm (Gershgorin).
    pub fn norm_bound(&self) -> f64 {
        let j = self.spec.hopping();
        let vmax = self.diag.iter().fold(0.0f64, |a, &d| a.max(d.abs()));
        vmax + 2.0 * j
    }
}

/// Energy of the upper band at momentum `p` for lattice constant `a` and the
/// canonical hopping `J = 1/(2a)`: `sqrt(M² + cos²(ap)/a²)`. Equals `M`
/// exactly at the zone edge and `2J` at the zone center for `M = 0`.
pub fn dispersion(p: f64, mass: f64, lattice_constant: f64) -> Result<f64> {
    let a = lattice_constant;
    if !(a.is_finite() && a > 0.0) {
        return Err(SimError::validation("lattice constant must be positive"));
    }
    let edge = std::f64::consts::FRAC_PI_2 / a;
    if !p.is_finite() || p.abs() > edge * (1.0 + 1e-12) {
        return Err(SimError::domain(format!(
            "momentum {p} outside the halved Brillouin zone [-{edge}, {edge}]; fold it first"
        )));
    }
    let c = (a * p).cos() / a;
    Ok((mass * mass + c * c).sqrt())
}

/// Lower/upper band energies `∓sqrt(M² + 4J²cos²(ap))` for independent
/// hopping and lattice constant. With `J = 1/(2a)` the upper band coincides
/// with [`dispersion`].
pub fn band_energies(p: f64, mass: f64, hopping: f64, lattice_constant: f64) -> Result<(f64, f64)> {
    let a = lattice_constant;
    let edge = std::f64::consts::FRAC_PI_2 / a;
    if !p.is_finite() || p.abs() > edge * (1.0 + 1e-12) {
        return Err(SimError::domain(format!(
            "momentum {p} outside the halved Brillouin zone [-{edge}, {edge}]"
        )));
    }
    let c = 2.0 * hopping * (a * p).cos();
    let e = (mass * mass + c * c).sqrt();
    Ok((-e, e))
}

/// The 2×2 rotation mixing the even/odd sublattice modes at fixed momentum
/// into the positive/negative-energy eigenmodes:
///
/// ```text
///   1/sqrt(2E) · [  sqrt(E+M)  sqrt(E−M) ]
///                [ −sqrt(E−M)  sqrt(E+M) ]
/// ```
///
/// The result is orthogonal and diagonalizes `[[M, X], [X, −M]]` with
/// `X = sqrt(E² − M²)` to `diag(E, −E)`.
pub fn bogoliubov_matrix(e_p: f64, mass: f64) -> Result<Matrix2<f64>> {
    if !(e_p.is_finite() && mass.is_finite()) {
        return Err(SimError::validation("non-finite Bogoliubov arguments"));
    }
    if mass < 0.0 {
        return Err(SimError::domain("mass must be >= 0"));
    }
    if e_p < mass {
        return Err(SimError::domain(format!(
            "mode energy {e_p} below the mass gap {mass}: sqrt(E-M) undefined"
        )));
    }
    if e_p <= 0.0 {
        return Err(SimError::domain("mode energy must be positive"));
    }
    let up = (e_p + mass).sqrt();
    let dn = (e_p - mass).sqrt();
    let norm = 1.0 / (2.0 * e_p).sqrt();
    Ok(Matrix2::new(up, dn, -dn, up) * norm)
}

/// Eigenbasis of a lattice Hamiltonian, split into negative (Dirac sea) and
/// positive (particle) bands.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    spec: LatticeSpec,
    energies: DVector<f64>,
    modes: DMatrix<f64>,
    num_negative: usize,
    num_zero: usize,
    zero_tol: f64,
}

/// Full eigendecomposition with the deterministic ordering and phase
/// conventions of [`linalg::eigh_sorted`]. Eigenvalues with
/// `|ε| < 1e-9·J` are counted as zero modes and block vacuum construction.
pub fn diagonalize(h: &SingleParticleHamiltonian) -> Result<ModeBasis> {
    let (energies, modes) = linalg::eigh_sorted(&h.dense())?;
    let zero_tol = ZERO_MODE_REL_TOL * h.spec().hopping();
    let num_negative = energies.iter().filter(|&&e| e < -zero_tol).count();
    let num_zero = energies.iter().filter(|&&e| e.abs() <= zero_tol).count();
    Ok(ModeBasis { spec: *h.spec(), energies, modes, num_negative, num_zero, zero_tol })
}

impl ModeBasis {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn num_negative(&self) -> usize {
        self.num_negative
    }

    pub fn num_zero(&self) -> usize {
        self.num_zero
    }

    pub fn num_sites(&self) -> usize {
        self.spec.num_sites()
    }

    /// Columns of the positive-energy band.
    pub fn positive_modes(&self) -> DMatrix<f64> {
        let n = self.num_sites();
        let start = self.num_negative + self.num_zero;
        self.modes.columns(start, n - start).into()
    }

    /// Columns of the negative-energy band.
    pub fn negative_modes(&self) -> DMatrix<f64> {
        self.modes.columns(0, self.num_negative).into()
    }

    pub fn zero_tolerance(&self) -> f64 {
        self.zero_tol
    }

    /// Spectral gap between the lowest positive and highest negative level.
    pub fn gap(&self) -> Option<f64> {
        if self.num_negative == 0 || self.num_negative + self.num_zero >= self.num_sites() {
            return None;
        }
        if self.num_zero > 0 {
            return Some(0.0);
        }
        Some(self.energies[self.num_negative] - self.energies[self.num_negative - 1])
    }
}

/// Many-fermion pure state stored as its occupied orthonormal orbitals
/// (one column per fermion).
#[derive(Debug, Clone)]
pub struct SlaterState {
    spec: LatticeSpec,
    orbitals: DMatrix<Complex64>,
}

impl SlaterState {
    /// Validates column orthonormality to 1e-10 before accepting.
    pub fn new(orbitals: DMatrix<Complex64>, spec: &LatticeSpec) -> Result<Self> {
        if orbitals.nrows() != spec.num_sites() {
            return Err(SimError::Dimension {
                expected: spec.num_sites(),
                got: orbitals.nrows(),
                context: "orbital rows".into(),
            });
        }
        if orbitals.ncols() > spec.num_sites() {
            return Err(SimError::validation("more fermions than lattice sites"));
        }
        let drift = linalg::orthonormality_drift(&orbitals);
        if drift > 1e-10 {
            return Err(SimError::validation(format!(
                "orbitals are not orthonormal: max deviation {drift:e}"
            )));
        }
        Ok(SlaterState { spec: *spec, orbitals })
    }

    pub(crate) fn from_orbitals_unchecked(orbitals: DMatrix<Complex64>, spec: LatticeSpec) -> Self {
        SlaterState { spec, orbitals }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn orbitals(&self) -> &DMatrix<Complex64> {
        &self.orbitals
    }

    pub(crate) fn orbitals_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.orbitals
    }

    pub fn num_fermions(&self) -> usize {
        self.orbitals.ncols()
    }

    pub fn num_sites(&self) -> usize {
        self.spec.num_sites()
    }
}

/// Fills every negative-energy mode with one fermion. Errors out when any
/// eigenvalue sits inside the zero-mode band, because the vacuum is then
/// genuinely ambiguous (e.g. a gapless `M = 0` chain).
pub fn dirac_sea(basis: &ModeBasis) -> Result<SlaterState> {
    if basis.num_zero() > 0 {
        let worst = basis
            .energies()
            .iter()
            .copied()
            .filter(|e| e.abs() <= basis.zero_tolerance())
            .fold(f64::INFINITY, |a, b| if b.abs() < a.abs() { b } else { a });
        return Err(SimError::AmbiguousVacuum { value: worst, tolerance: basis.zero_tolerance() });
    }
    let orbitals = linalg::to_complex(&basis.negative_modes());
    Ok(SlaterState::from_orbitals_unchecked(orbitals, *basis.spec()))
}

/// Analytic Bloch eigenmodes of the free periodic chain at momentum `p`:
/// `(negative-energy mode, positive-energy mode, E_p)`. Plane waves on the
/// even/odd sublattices mixed by the Bogoliubov rotation; exact eigenvectors
/// of [`free_hamiltonian`] up to roundoff.
pub fn bloch_modes(
    spec: &LatticeSpec,
    mass: f64,
    p: f64,
) -> Result<(DVector<Complex64>, DVector<Complex64>, f64)> {
    if spec.boundary() != Boundary::Periodic {
        return Err(SimError::unsupported("Bloch modes require periodic boundaries"));
    }
    let n = spec.num_sites();
    let a = spec.lattice_constant();
    let j = spec.hopping();
    let x = -2.0 * j * (a * p).cos();
    let e = (mass * mass + x * x).sqrt();
    if e <= 0.0 {
        return Err(SimError::domain("gapless mode at the requested momentum"));
    }
    // Eigenvectors of [[M, X], [X, -M]]: (M+E, X) for +E, (-X, M+E) for -E.
    let norm = ((mass + e).powi(2) + x * x).sqrt();
    let (u_pos, v_pos) = ((mass + e) / norm, x / norm);
    let (u_neg, v_neg) = (-x / norm, (mass + e) / norm);
    let amp = (2.0 / n as f64).sqrt();
    let mut pos = DVector::zeros(n);
    let mut neg = DVector::zeros(n);
    for site in 0..n {
        let phase = Complex64::from_polar(amp, p * a * site as f64);
        if site % 2 == 0 {
            pos[site] = phase * u_pos;
            neg[site] = phase * u_neg;
        } else {
            pos[site] = phase * v_pos;
            neg[site] = phase * v_neg;
        }
    }
    Ok((neg, pos, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::sturm_eigenvalues;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn spec_p(n: usize, j: f64) -> LatticeSpec {
        LatticeSpec::from_hopping(n, j, Boundary::Periodic).unwrap()
    }

    fn spec_o(n: usize, j: f64) -> LatticeSpec {
        LatticeSpec::from_hopping(n, j, Boundary::Open).unwrap()
    }

    #[test]
    fn spec_locks_hopping_to_lattice_constant() {
        let s = LatticeSpec::from_lattice_constant(8, 0.25, Boundary::Periodic).unwrap();
        assert_eq!(s.hopping(), 2.0);
        let s = LatticeSpec::from_hopping(8, 1.0, Boundary::Open).unwrap();
        assert_eq!(s.lattice_constant(), 0.5);
    }

    #[test]
    fn spec_rejects_odd_or_tiny_chains() {
        assert!(LatticeSpec::from_hopping(5, 1.0, Boundary::Open).is_err());
        assert!(LatticeSpec::from_hopping(2, 1.0, Boundary::Open).is_err());
        assert!(LatticeSpec::from_hopping(8, -1.0, Boundary::Open).is_err());
    }

    #[test]
    fn free_massless_ring_matrix() {
        let spec = spec_p(4, 1.0);
        let h = free_hamiltonian(&spec, 0.0).unwrap().dense();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, -1.0, 0.0, -1.0, //
                -1.0, 0.0, -1.0, 0.0, //
                0.0, -1.0, 0.0, -1.0, //
                -1.0, 0.0, -1.0, 0.0,
            ],
        );
        assert_eq!(h, expected);
    }

    #[test]
    fn staggered_mass_diagonal() {
        let spec = spec_p(4, 1.0);
        let h = free_hamiltonian(&spec, 0.5).unwrap();
        assert_eq!(h.diagonal(), &[0.5, -0.5, 0.5, -0.5]);
    }

    #[test]
    fn site_potential_plus_mass_diagonal_and_oracle_eigenvalues() {
        let spec = spec_o(6, 1.0);
        let phi =
            SiteField::new((0..6).map(|n| 0.1 * n as f64).collect(), &spec).unwrap();
        let h = build_hamiltonian(&spec, 0.3, &phi).unwrap();
        let expected_diag = [0.3, -0.2, 0.5, 0.0, 0.7, 0.2];
        for (d, e) in h.diagonal().iter().zip(expected_diag.iter()) {
            assert_abs_diff_eq!(d, e, epsilon = 1e-15);
        }
        // Independent oracle: Sturm bisection on the tridiagonal form.
        let offdiag = vec![-1.0; 5];
        let oracle = sturm_eigenvalues(h.diagonal(), &offdiag);
        let basis = diagonalize(&h).unwrap();
        for (lam, oracle_lam) in basis.energies().iter().zip(oracle.iter()) {
            assert_abs_diff_eq!(lam, oracle_lam, epsilon = 1e-10);
        }
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let spec = spec_o(6, 1.0);
        let short = SiteField::new(vec![0.0; 4], &spec_o(4, 1.0)).unwrap();
        assert!(build_hamiltonian(&spec, 0.1, &short).is_err());
        assert!(build_hamiltonian(&spec, f64::NAN, &SiteField::zeros(&spec)).is_err());
        assert!(SiteField::new(vec![0.0, f64::INFINITY, 0.0, 0.0, 0.0, 0.0], &spec).is_err());
    }

    #[test]
    fn hermiticity_for_random_inputs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = 2 * rng.random_range(2..10usize);
            let boundary = if rng.random_bool(0.5) { Boundary::Periodic } else { Boundary::Open };
            let spec = LatticeSpec::from_hopping(n, rng.random_range(0.1..3.0), boundary).unwrap();
            let phi = SiteField::new(
                (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
                &spec,
            )
            .unwrap();
            let h = build_hamiltonian(&spec, rng.random_range(0.0..2.0), &phi).unwrap();
            assert!(linalg::symmetry_error(&h.dense()) < 1e-12);
        }
    }

    #[test]
    fn dispersion_zone_edge_equals_mass() {
        for &(m, a) in &[(0.5, 0.5), (0.05, 0.25), (2.0, 1.0)] {
            let edge = std::f64::consts::FRAC_PI_2 / a;
            let e = dispersion(edge, m, a).unwrap();
            assert_abs_diff_eq!(e, m, epsilon = 1e-12);
            let e = dispersion(-edge, m, a).unwrap();
            assert_abs_diff_eq!(e, m, epsilon = 1e-12);
        }
    }

    #[test]
    fn dispersion_band_top_is_twice_hopping() {
        // At p = 0 and M = 0 the band reaches 1/a = 2J.
        let e = dispersion(0.0, 0.0, 0.5).unwrap();
        assert_abs_diff_eq!(e, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn dispersion_matches_direct_arithmetic() {
        let (p, a, m) = (0.7, 0.5, 0.2);
        let expected = (m * m + 4.0 * (a * p).cos().powi(2)).sqrt();
        assert_abs_diff_eq!(dispersion(p, m, a).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn dispersion_rejects_momenta_outside_zone() {
        assert!(dispersion(10.0, 0.1, 0.5).is_err());
    }

    #[test]
    fn band_energies_agree_with_dispersion_at_canonical_hopping() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = 0.5;
        let j = 1.0 / (2.0 * a);
        let edge = std::f64::consts::FRAC_PI_2 / a;
        for _ in 0..100 {
            let p = rng.random_range(-edge..edge);
            let m = rng.random_range(0.0..2.0);
            let (lo, hi) = band_energies(p, m, j, a).unwrap();
            let d = dispersion(p, m, a).unwrap();
            assert_abs_diff_eq!(hi, d, epsilon = 1e-14);
            assert_abs_diff_eq!(lo, -d, epsilon = 1e-14);
        }
    }

    #[test]
    fn bands_touch_when_gapless() {
        let a = 0.5;
        let edge = std::f64::consts::FRAC_PI_2 / a;
        let (lo, hi) = band_energies(edge, 0.0, 1.3, a).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn band_gap_is_twice_mass_for_any_hopping() {
        for &(m, j, a) in &[(0.3, 0.7, 0.2), (1.1, 2.0, 1.5), (0.01, 1.0, 0.5)] {
            let edge = std::f64::consts::FRAC_PI_2 / a;
            let mut min_upper = f64::INFINITY;
            let mut max_lower = f64::NEG_INFINITY;
            for k in 0..=400 {
                let p = -edge + 2.0 * edge * k as f64 / 400.0;
                let (lo, hi) = band_energies(p, m, j, a).unwrap();
                min_upper = min_upper.min(hi);
                max_lower = max_lower.max(lo);
            }
            assert_abs_diff_eq!(min_upper - max_lower, 2.0 * m, epsilon = 1e-10);
        }
    }

    #[test]
    fn bogoliubov_is_identity_at_zone_edge() {
        let r = bogoliubov_matrix(0.7, 0.7).unwrap();
        assert!((r - Matrix2::identity()).amax() < 1e-15);
    }

    #[test]
    fn bogoliubov_massless_is_quarter_turn() {
        let r = bogoliubov_matrix(1.0, 0.0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expected = Matrix2::new(s, s, -s, s);
        assert!((r - expected).amax() < 1e-15);
    }

    #[test]
    fn bogoliubov_diagonalizes_momentum_block() {
        // E=5, M=3 gives the [[√8, √2], [−√2, √8]]/√10 rotation.
        let r = bogoliubov_matrix(5.0, 3.0).unwrap();
        let inv_sqrt10 = 1.0 / 10.0f64.sqrt();
        let expected = Matrix2::new(
            8.0f64.sqrt(),
            2.0f64.sqrt(),
            -(2.0f64.sqrt()),
            8.0f64.sqrt(),
        ) * inv_sqrt10;
        assert!((r - expected).amax() < 1e-14);

        let x = (25.0f64 - 9.0).sqrt();
        let block = Matrix2::new(3.0, x, x, -3.0);
        let d = r * block * r.transpose();
        assert_abs_diff_eq!(d[(0, 0)], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[(1, 1)], -5.0, epsilon = 1e-12);
        assert!(d[(0, 1)].abs() < 1e-12);
        assert!(d[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn bogoliubov_orthogonality_over_random_draws() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let m = rng.random_range(0.0..3.0);
            let e = m + rng.random_range(0.0..5.0) + 1e-12;
            let r = bogoliubov_matrix(e, m).unwrap();
            let resid = r * r.transpose() - Matrix2::identity();
            assert!(resid.amax() < 1e-12);
        }
    }

    #[test]
    fn bogoliubov_domain_errors() {
        assert!(bogoliubov_matrix(0.5, 1.0).is_err());
        assert!(bogoliubov_matrix(0.0, 0.0).is_err());
    }

    #[test]
    fn free_spectrum_matches_band_formula_on_the_grid() {
        let spec = spec_p(8, 1.0);
        let h = free_hamiltonian(&spec, 0.5).unwrap();
        let basis = diagonalize(&h).unwrap();
        let mut expected: Vec<f64> = Vec::new();
        for p in spec.momentum_grid().unwrap() {
            let (lo, hi) = band_energies(p, 0.5, 1.0, spec.lattice_constant()).unwrap();
            expected.push(lo);
            expected.push(hi);
        }
        expected.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (got, want) in basis.energies().iter().zip(expected.iter()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn spectrum_symmetric_for_free_chain() {
        let spec = spec_p(16, 1.0);
        let basis = diagonalize(&free_hamiltonian(&spec, 0.3).unwrap()).unwrap();
        let e = basis.energies();
        for i in 0..16 {
            assert_abs_diff_eq!(e[i], -e[15 - i], epsilon = 1e-10);
        }
        assert_eq!(basis.num_negative(), 8);
    }

    #[test]
    fn gap_law_for_multiple_of_four() {
        for &m in &[0.05, 0.2, 1.0] {
            let spec = spec_p(32, 1.0);
            let basis = diagonalize(&free_hamiltonian(&spec, m).unwrap()).unwrap();
            assert_abs_diff_eq!(basis.gap().unwrap(), 2.0 * m, epsilon = 1e-9);
        }
    }

    #[test]
    fn modes_are_orthonormal_and_diagonalize_h() {
        let spec = spec_p(12, 1.0);
        let phi = SiteField::new((0..12).map(|n| 0.05 * (n as f64).sin()).collect(), &spec).unwrap();
        let h = build_hamiltonian(&spec, 0.4, &phi).unwrap();
        let basis = diagonalize(&h).unwrap();
        let q = basis.modes();
        let resid_unitary = q.transpose() * q - DMatrix::identity(12, 12);
        assert!(linalg::max_abs_r(&resid_unitary) < 1e-12);
        let d = q.transpose() * h.dense() * q;
        for i in 0..12 {
            for j in 0..12 {
                let want = if i == j { basis.energies()[i] } else { 0.0 };
                assert_abs_diff_eq!(d[(i, j)], want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn diagonal_dominated_limit() {
        let spec = spec_o(6, 1.0);
        let phi = SiteField::new((0..6).map(|n| 1e5 * (n + 1) as f64).collect(), &spec).unwrap();
        let h = build_hamiltonian(&spec, 0.0, &phi).unwrap();
        let basis = diagonalize(&h).unwrap();
        let mut diag: Vec<f64> = h.diagonal().to_vec();
        diag.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (lam, d) in basis.energies().iter().zip(diag.iter()) {
            assert!((lam - d).abs() < 1e-4, "eigenvalue {lam} vs diagonal {d}");
        }
    }

    #[test]
    fn continuum_limit_near_zone_edge() {
        // J/M = 100: close to the gap the lattice dispersion reproduces
        // sqrt(M² + q²) with q measured from the zone edge.
        let j = 1.0;
        let m = 0.01;
        let a = 0.5;
        let edge = std::f64::consts::FRAC_PI_2 / a;
        for k in 1..=50 {
            let q = m * k as f64 / 50.0;
            let e = dispersion(edge - q, m, a).unwrap();
            let rel = (e - (m * m + q * q).sqrt()).abs() / (m * m + q * q).sqrt();
            assert!(rel < 1e-3, "relative error {rel} at q={q}");
        }
    }

    #[test]
    fn dirac_sea_fills_half_the_gapped_chain() {
        let spec = spec_p(8, 1.0);
        let basis = diagonalize(&free_hamiltonian(&spec, 0.5).unwrap()).unwrap();
        let sea = dirac_sea(&basis).unwrap();
        assert_eq!(sea.num_fermions(), 4);
        // Energy expectation = sum of the N/2 most negative eigenvalues.
        let h = free_hamiltonian(&spec, 0.5).unwrap().dense();
        let orb = sea.orbitals();
        let mut energy = 0.0;
        for k in 0..4 {
            let col = orb.column(k);
            let hcol = linalg::real_times_complex(&h, &col.clone_owned().into());
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..8 {
                acc += col[r].conj() * hcol[(r, 0)];
            }
            energy += acc.re;
        }
        let expected: f64 = basis.energies().iter().take(4).sum();
        assert_abs_diff_eq!(energy, expected, epsilon = 1e-10);
    }

    #[test]
    fn gapless_vacuum_is_rejected() {
        let spec = spec_p(8, 1.0);
        let basis = diagonalize(&free_hamiltonian(&spec, 0.0).unwrap()).unwrap();
        assert!(basis.num_zero() > 0);
        match dirac_sea(&basis) {
            Err(SimError::AmbiguousVacuum { .. }) => {}
            other => panic!("expected ambiguous-vacuum error, got {other:?}"),
        }
    }

    #[test]
    fn momentum_grid_spans_halved_zone() {
        let spec = spec_p(8, 1.0);
        let a = spec.lattice_constant();
        let grid = spec.momentum_grid().unwrap();
        assert_eq!(grid.len(), 4);
        let edge = std::f64::consts::FRAC_PI_2 / a;
        assert_abs_diff_eq!(grid[grid.len() - 1], edge, epsilon = 1e-12);
        for p in &grid {
            assert!(*p > -edge - 1e-12 && *p <= edge + 1e-12);
        }
        assert!(spec_o(8, 1.0).momentum_grid().is_err());
    }

    #[test]
    fn bloch_modes_are_exact_eigenvectors() {
        let spec = spec_p(12, 1.0);
        let m = 0.37;
        let h = free_hamiltonian(&spec, m).unwrap();
        for p in spec.momentum_grid().unwrap() {
            let (neg, pos, e) = bloch_modes(&spec, m, p).unwrap();
            let mut out = vec![Complex64::new(0.0, 0.0); 12];
            h.apply_column(pos.as_slice(), &mut out);
            for (o, v) in out.iter().zip(pos.iter()) {
                assert!((o - v * e).norm() < 1e-12);
            }
            h.apply_column(neg.as_slice(), &mut out);
            for (o, v) in out.iter().zip(neg.iter()) {
                assert!((o + v * e).norm() < 1e-12);
            }
        }
    }
}
