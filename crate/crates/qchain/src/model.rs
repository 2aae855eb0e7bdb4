//! Dense many-body operators for spin, fermion and boson chains.
//!
//! Basis convention, shared by every module: occupation-number product basis
//! with **site 1 fastest**, i.e. the global index is
//! `n = n_1 + d n_2 + d^2 n_3 + ...` with local occupation `n_i` and local
//! dimension `d` (2 for spins/fermions, `boson_cutoff + 1` for bosons). For
//! spins, local index 0 is spin down (empty) and 1 is spin up (occupied), so
//! `sigma_z = diag(-1, +1)` and `sigma^+ sigma^- = c^dag c` counts occupation.
//!
//! Fermionic operators carry the Jordan-Wigner string
//! `c_i = (-sigma_z_1)...(-sigma_z_{i-1}) sigma^-_i`.

use crate::linalg::{C64, CMat, ONE, commutator, hermiticity_defect, identity, kron, max_abs};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const GOLDEN_MEAN: f64 = 1.618033988749894848204586834365638118;

/// Default cap on the many-body Hilbert-space dimension.
pub const DEFAULT_DIMENSION_CAP: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Fermion,
    Boson,
}

/// On-site potential generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// Constant field `h` on every site.
    Uniform { h: f64 },
    /// Independent values drawn uniformly from `[-h, h]`, reproducible by seed.
    UncorrelatedDisorder { h: f64, seed: u64 },
    /// Quasiperiodic potential
    /// `2 lambda cos(2 pi beta l + phi) / (1 - alpha cos(2 pi beta l + phi))`;
    /// `|alpha| < 1` keeps the denominator away from zero.
    Aah {
        lambda: f64,
        #[serde(default)]
        alpha: f64,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default)]
        phi: f64,
    },
    /// Two-valued quasiperiodic potential `+-h/2` following the golden-mean
    /// Sturmian word `V(l) = floor((l+1) g) - floor(l g) - 1` in `{0, 1}`.
    Fibonacci { h: f64 },
    /// Explicit per-site values (length must match the chain).
    Explicit { values: Vec<f64> },
}

fn default_beta() -> f64 {
    GOLDEN_MEAN
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::Uniform { h: 0.0 }
    }
}

/// Evaluate the on-site potential for sites `l = 1..=len`.
pub fn potential_values(spec: &PotentialSpec, len: usize) -> Result<Vec<f64>> {
    match spec {
        PotentialSpec::Uniform { h } => Ok(vec![*h; len]),
        PotentialSpec::UncorrelatedDisorder { h, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            if *h == 0.0 {
                return Ok(vec![0.0; len]);
            }
            Ok((0..len).map(|_| rng.gen_range(-h.abs()..=h.abs())).collect())
        }
        PotentialSpec::Aah { lambda, alpha, beta, phi } => {
            if alpha.abs() >= 1.0 {
                return Err(Error::Domain(format!(
                    "quasiperiodic modulation parameter |alpha| = {} must be < 1",
                    alpha.abs()
                )));
            }
            Ok((1..=len)
                .map(|l| {
                    let c = (2.0 * std::f64::consts::PI * beta * l as f64 + phi).cos();
                    lambda * 2.0 * c / (1.0 - alpha * c)
                })
                .collect())
        }
        PotentialSpec::Fibonacci { h } => Ok((1..=len)
            .map(|l| {
                let g = GOLDEN_MEAN;
                let v = ((l as f64 + 1.0) * g).floor() - (l as f64 * g).floor() - 1.0;
                h / 2.0 * (2.0 * v - 1.0)
            })
            .collect()),
        PotentialSpec::Explicit { values } => {
            if values.len() != len {
                return Err(Error::Inconsistent(format!(
                    "explicit potential has {} values for a chain of {len} sites",
                    values.len()
                )));
            }
            Ok(values.clone())
        }
    }
}

/// Hopping structure of a tight-binding chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hopping {
    /// Uniform nearest-neighbor amplitude `J`; matrix element `-J`.
    Uniform { j: f64 },
    /// Per-bond amplitudes `J_k` (length `L - 1`); matrix element `-J_k`.
    Bonds { j: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `H = -J sum (sx sx + sy sy + delta sz sz) + sum h_i sz_i`
    Xxz { j: f64, delta: f64 },
    /// `H = -sum (jx sx sx + jy sy sy + jz sz sz) + sum h_i sz_i`
    Xyz { jx: f64, jy: f64, jz: f64 },
    /// `H = sum_ij h_ij a_i^dag a_j`, nearest-neighbor, either statistics.
    TightBinding { statistics: Statistics, hopping: Hopping },
}

/// Declarative description of a chain Hamiltonian.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    #[serde(flatten)]
    pub family: Family,
    /// Number of sites `L >= 1`.
    pub sites: usize,
    #[serde(default)]
    pub potential: PotentialSpec,
    /// Per-site Fock truncation for bosons; local dimension is `cutoff + 1`.
    /// Truncation error is the caller's responsibility.
    #[serde(default = "default_cutoff")]
    pub boson_cutoff: usize,
    /// Cap on the many-body dimension; builders refuse anything larger.
    #[serde(default = "default_cap")]
    pub dimension_cap: usize,
}

fn default_cutoff() -> usize {
    1
}
fn default_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}

impl HamiltonianSpec {
    pub fn xxz(sites: usize, j: f64, delta: f64) -> Self {
        Self {
            family: Family::Xxz { j, delta },
            sites,
            potential: PotentialSpec::default(),
            boson_cutoff: 1,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        }
    }

    pub fn xyz(sites: usize, jx: f64, jy: f64, jz: f64) -> Self {
        Self {
            family: Family::Xyz { jx, jy, jz },
            sites,
            potential: PotentialSpec::default(),
            boson_cutoff: 1,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        }
    }

    pub fn tight_binding(sites: usize, statistics: Statistics, j: f64) -> Self {
        Self {
            family: Family::TightBinding { statistics, hopping: Hopping::Uniform { j } },
            sites,
            potential: PotentialSpec::default(),
            boson_cutoff: 1,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        }
    }

    pub fn with_potential(mut self, p: PotentialSpec) -> Self {
        self.potential = p;
        self
    }

    pub fn with_boson_cutoff(mut self, cutoff: usize) -> Self {
        self.boson_cutoff = cutoff;
        self
    }

    /// Local Hilbert-space dimension of one site.
    pub fn local_dim(&self) -> usize {
        match &self.family {
            Family::TightBinding { statistics: Statistics::Boson, .. } => self.boson_cutoff + 1,
            _ => 2,
        }
    }

    /// Many-body dimension `local_dim^L`, checked against the cap.
    pub fn dimension(&self) -> Result<usize> {
        let d = self.local_dim();
        let mut dim: usize = 1;
        for _ in 0..self.sites {
            dim = dim
                .checked_mul(d)
                .filter(|&x| x <= self.dimension_cap)
                .ok_or(Error::DimensionOverflow { dim: usize::MAX, cap: self.dimension_cap })?;
        }
        Ok(dim)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site == 0 || site > self.sites {
            return Err(Error::SiteOutOfRange { site, len: self.sites });
        }
        Ok(())
    }

    pub fn statistics(&self) -> Statistics {
        match &self.family {
            Family::TightBinding { statistics, .. } => *statistics,
            _ => Statistics::Fermion,
        }
    }

    pub fn is_spin(&self) -> bool {
        matches!(self.family, Family::Xxz { .. } | Family::Xyz { .. })
    }

    pub fn is_boson(&self) -> bool {
        matches!(
            self.family,
            Family::TightBinding { statistics: Statistics::Boson, .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteOperatorKind {
    SigmaX,
    SigmaY,
    SigmaZ,
    SigmaPlus,
    SigmaMinus,
    Number,
    /// Jordan-Wigner fermion `c_i` on spin/fermion chains, truncated `a_i`
    /// on boson chains.
    Annihilate,
    Create,
}

fn pauli(kind: SiteOperatorKind) -> CMat {
    // local basis: index 0 = down/empty, 1 = up/occupied
    let mut m = CMat::zeros(2, 2);
    match kind {
        SiteOperatorKind::SigmaX => {
            m[(0, 1)] = ONE;
            m[(1, 0)] = ONE;
        }
        SiteOperatorKind::SigmaY => {
            m[(0, 1)] = C64::new(0.0, 1.0);
            m[(1, 0)] = C64::new(0.0, -1.0);
        }
        SiteOperatorKind::SigmaZ => {
            m[(0, 0)] = -ONE;
            m[(1, 1)] = ONE;
        }
        SiteOperatorKind::SigmaPlus => m[(1, 0)] = ONE,
        SiteOperatorKind::SigmaMinus => m[(0, 1)] = ONE,
        SiteOperatorKind::Number => m[(1, 1)] = ONE,
        _ => unreachable!(),
    }
    m
}

fn boson_annihilate(dim: usize) -> CMat {
    let mut a = CMat::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Embed a single-site operator at `site` (1-based). Site 1 is the fastest
/// index, so it sits rightmost in the Kronecker chain.
fn embed(op: &CMat, site: usize, sites: usize, local_dim: usize) -> CMat {
    let mut out = CMat::identity(1, 1);
    for s in (1..=sites).rev() {
        let factor = if s == site { op.clone() } else { identity(local_dim) };
        out = kron(&out, &factor);
    }
    out
}

/// Dense single-site (or string-dressed) operator on the many-body space.
pub fn site_operator(spec: &HamiltonianSpec, kind: SiteOperatorKind, site: usize) -> Result<CMat> {
    spec.check_site(site)?;
    spec.dimension()?;
    let l = spec.sites;
    let d = spec.local_dim();

    if spec.is_boson() {
        let a = boson_annihilate(d);
        return match kind {
            SiteOperatorKind::Annihilate => Ok(embed(&a, site, l, d)),
            SiteOperatorKind::Create => Ok(embed(&a.adjoint().to_owned(), site, l, d)),
            SiteOperatorKind::Number => {
                let n = a.adjoint() * &a;
                Ok(embed(&n, site, l, d))
            }
            _ => Err(Error::Unsupported(
                "Pauli operators are undefined for bosonic sites".into(),
            )),
        };
    }

    match kind {
        SiteOperatorKind::Annihilate | SiteOperatorKind::Create => {
            // Jordan-Wigner string (-sz_1)...(-sz_{i-1})
            let minus_sz = crate::linalg::scale(&pauli(SiteOperatorKind::SigmaZ), -ONE);
            let mut c = identity(1 << l);
            for s in 1..site {
                c = c * embed(&minus_sz, s, l, 2);
            }
            c = c * embed(&pauli(SiteOperatorKind::SigmaMinus), site, l, 2);
            if kind == SiteOperatorKind::Create {
                Ok(c.adjoint().to_owned())
            } else {
                Ok(c)
            }
        }
        k => Ok(embed(&pauli(k), site, l, 2)),
    }
}

/// Dense many-body Hamiltonian.
pub fn build_hamiltonian(spec: &HamiltonianSpec) -> Result<CMat> {
    if spec.sites == 0 {
        return Err(Error::Inconsistent("chain must have at least one site".into()));
    }
    let dim = spec.dimension()?;
    let l = spec.sites;
    let pot = potential_values(&spec.potential, l)?;
    let mut h = CMat::zeros(dim, dim);

    for k in 1..l {
        h += bond_hamiltonian(spec, k)?;
    }
    for (i, &hv) in pot.iter().enumerate() {
        if hv != 0.0 {
            h += site_field_term(spec, i + 1, hv)?;
        }
    }

    let defect = hermiticity_defect(&h);
    if defect > 1e-12 * max_abs(&h).max(1.0) {
        return Err(Error::NotHermitian { dev: defect });
    }
    Ok(h)
}

/// Interaction term of bond `k` (sites `k`, `k+1`), `1 <= k <= L-1`.
pub fn bond_hamiltonian(spec: &HamiltonianSpec, k: usize) -> Result<CMat> {
    spec.check_site(k)?;
    spec.check_site(k + 1)?;
    let l = spec.sites;
    let d = spec.local_dim();
    let two_site = |op: &CMat, w: f64| {
        let a = embed(op, k, l, d);
        let b = embed(op, k + 1, l, d);
        crate::linalg::scale(&(a * b), C64::new(w, 0.0))
    };
    match &spec.family {
        Family::Xxz { j, delta } => Ok(two_site(&pauli(SiteOperatorKind::SigmaX), -j)
            + two_site(&pauli(SiteOperatorKind::SigmaY), -j)
            + two_site(&pauli(SiteOperatorKind::SigmaZ), -j * delta)),
        Family::Xyz { jx, jy, jz } => Ok(two_site(&pauli(SiteOperatorKind::SigmaX), -jx)
            + two_site(&pauli(SiteOperatorKind::SigmaY), -jy)
            + two_site(&pauli(SiteOperatorKind::SigmaZ), -jz)),
        Family::TightBinding { hopping, .. } => {
            let amp = match hopping {
                Hopping::Uniform { j } => -*j,
                Hopping::Bonds { j } => {
                    if j.len() != l - 1 {
                        return Err(Error::Inconsistent(format!(
                            "expected {} bond amplitudes, got {}",
                            l - 1,
                            j.len()
                        )));
                    }
                    -j[k - 1]
                }
            };
            let ck_dag = site_operator(spec, SiteOperatorKind::Create, k)?;
            let ck1 = site_operator(spec, SiteOperatorKind::Annihilate, k + 1)?;
            let hop = ck_dag * ck1;
            let m = &hop + hop.adjoint().to_owned();
            Ok(crate::linalg::scale(&m, C64::new(amp, 0.0)))
        }
    }
}

/// On-site term with amplitude `hv`: `hv sz_i` for spins, `hv n_i` otherwise.
fn site_field_term(spec: &HamiltonianSpec, i: usize, hv: f64) -> Result<CMat> {
    let op = if spec.is_spin() {
        site_operator(spec, SiteOperatorKind::SigmaZ, i)?
    } else {
        site_operator(spec, SiteOperatorKind::Number, i)?
    };
    Ok(crate::linalg::scale(&op, C64::new(hv, 0.0)))
}

/// Local Hamiltonian `H^k` of site `k` (on-site part only).
pub fn site_hamiltonian(spec: &HamiltonianSpec, k: usize) -> Result<CMat> {
    let pot = potential_values(&spec.potential, spec.sites)?;
    site_field_term(spec, k, pot[k - 1])
}

/// Conserved local charge `O^k`: `sz_k` for spin chains, `n_k` otherwise.
pub fn site_charge(spec: &HamiltonianSpec, k: usize) -> Result<CMat> {
    if spec.is_spin() {
        site_operator(spec, SiteOperatorKind::SigmaZ, k)
    } else {
        site_operator(spec, SiteOperatorKind::Number, k)
    }
}

/// Total charge `sum_k O^k`.
pub fn total_charge(spec: &HamiltonianSpec) -> Result<CMat> {
    let dim = spec.dimension()?;
    let mut m = CMat::zeros(dim, dim);
    for k in 1..=spec.sites {
        m += site_charge(spec, k)?;
    }
    Ok(m)
}

/// Single-particle matrix of a quadratic chain: diagonal = on-site potential,
/// off-diagonal = `-J_k`. For a spin chain at `delta = 0` this is the
/// quadratic image with hopping `2J` and on-site `2 h_i`.
pub fn single_particle_matrix(spec: &HamiltonianSpec) -> Result<CMat> {
    let l = spec.sites;
    let pot = potential_values(&spec.potential, l)?;
    let mut h = CMat::zeros(l, l);
    match &spec.family {
        Family::TightBinding { hopping, .. } => {
            for i in 0..l {
                h[(i, i)] = C64::new(pot[i], 0.0);
            }
            for k in 0..l - 1 {
                let amp = match hopping {
                    Hopping::Uniform { j } => -*j,
                    Hopping::Bonds { j } => -j[k],
                };
                h[(k, k + 1)] = C64::new(amp, 0.0);
                h[(k + 1, k)] = C64::new(amp, 0.0);
            }
            Ok(h)
        }
        Family::Xxz { j, delta } => {
            if *delta != 0.0 {
                return Err(Error::Unsupported(
                    "single-particle reduction requires a non-interacting chain".into(),
                ));
            }
            for i in 0..l {
                h[(i, i)] = C64::new(2.0 * pot[i], 0.0);
            }
            for k in 0..l - 1 {
                h[(k, k + 1)] = C64::new(-2.0 * j, 0.0);
                h[(k + 1, k)] = C64::new(-2.0 * j, 0.0);
            }
            Ok(h)
        }
        Family::Xyz { .. } => Err(Error::Unsupported(
            "single-particle reduction undefined for anisotropic xy couplings".into(),
        )),
    }
}

/// `max |[A, B]|`, for conservation checks.
pub fn commutator_norm(a: &CMat, b: &CMat) -> f64 {
    max_abs(&commutator(a, b))
}
