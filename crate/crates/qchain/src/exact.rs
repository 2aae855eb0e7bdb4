//! Numerically exact benchmark for non-interacting dots coupled to finite
//! tight-binding leads, plus wideband stationary formulas and Landauer
//! currents.
//!
//! The time-dependent solution diagonalizes the full (system + leads)
//! single-particle Hamiltonian in the lead normal-mode representation and
//! propagates the one-body correlation matrix exactly; finite leads show the
//! quasi-periodic recurrences this implies. Conventions follow the rest of
//! the crate: `C_ij = <a_j^dag a_i>`.

use crate::baths::{BathSpec, SpectralDensity, occupation};
use crate::gaussian::CovarianceState;
use crate::linalg::{C64, CMat, ONE, ZERO, dagger, eigh, hermiticity_defect, max_abs, quad, solve_dense};
use crate::model::Statistics;
use crate::{Error, Result};

/// One finite tight-binding lead in its normal-mode representation.
#[derive(Debug, Clone)]
pub struct LeadSpec {
    /// Band center (on-site energy of the lead chain).
    pub center: f64,
    /// Lead hopping `tau`; band edges at `center +- 2 tau`.
    pub t_lead: f64,
    /// Tunnel amplitude between the contact site and the first lead site.
    pub t_coupling: f64,
    /// Number of lead sites.
    pub sites: usize,
    pub beta: f64,
    pub mu: f64,
}

impl LeadSpec {
    /// Normal-mode energies `eps_k = center - 2 tau cos(pi k/(L+1))`.
    pub fn mode_energies(&self) -> Vec<f64> {
        let l = self.sites;
        (1..=l)
            .map(|k| {
                self.center
                    - 2.0 * self.t_lead * (std::f64::consts::PI * k as f64 / (l as f64 + 1.0)).cos()
            })
            .collect()
    }

    /// Mode couplings `t_k = t_c sqrt(2/(L+1)) sin(pi k/(L+1))`.
    pub fn mode_couplings(&self) -> Vec<f64> {
        let l = self.sites;
        (1..=l)
            .map(|k| {
                self.t_coupling
                    * (2.0 / (l as f64 + 1.0)).sqrt()
                    * (std::f64::consts::PI * k as f64 / (l as f64 + 1.0)).sin()
            })
            .collect()
    }

    /// The semi-elliptic coupling density this lead converges to as
    /// `sites -> infinity`.
    pub fn spectral_density(&self) -> SpectralDensity {
        SpectralDensity::SemiElliptic {
            center: self.center,
            t_lead: self.t_lead,
            t_coupling: self.t_coupling,
        }
    }

    fn fermi(&self, omega: f64) -> f64 {
        let x = self.beta * (omega - self.mu);
        if x > 0.0 { (-x).exp() / (1.0 + (-x).exp()) } else { 1.0 / (x.exp() + 1.0) }
    }
}

/// A small non-interacting system coupled to finite leads.
#[derive(Debug, Clone)]
pub struct ExactSetup {
    /// Single-particle system matrix (`N <= 4` sites).
    pub h_sys: CMat,
    /// Leads with their 1-based contact site.
    pub leads: Vec<(LeadSpec, usize)>,
    /// Initial system correlation matrix.
    pub c0_sys: CMat,
}

/// Hard cap on the total single-particle dimension.
pub const EXACT_BUDGET: usize = 20_000;

/// Exact one-body evolution; returns the system covariance block at each
/// requested time and the (conserved) total particle number.
pub fn exact_evolution(setup: &ExactSetup, times: &[f64]) -> Result<(Vec<CovarianceState>, f64)> {
    let n_sys = setup.h_sys.nrows();
    if n_sys > 4 {
        return Err(Error::Unsupported("exact benchmark limited to <= 4 system sites".into()));
    }
    if hermiticity_defect(&setup.h_sys) > 1e-12 * max_abs(&setup.h_sys).max(1.0) {
        return Err(Error::NotHermitian { dev: hermiticity_defect(&setup.h_sys) });
    }
    let total: usize = n_sys + setup.leads.iter().map(|(l, _)| l.sites).sum::<usize>();
    if total > EXACT_BUDGET {
        return Err(Error::DimensionOverflow { dim: total, cap: EXACT_BUDGET });
    }

    // assemble the global single-particle matrix in the mode basis
    let mut h = CMat::zeros(total, total);
    for j in 0..n_sys {
        for i in 0..n_sys {
            h[(i, j)] = setup.h_sys[(i, j)];
        }
    }
    let mut c0 = CMat::zeros(total, total);
    for j in 0..n_sys {
        for i in 0..n_sys {
            c0[(i, j)] = setup.c0_sys[(i, j)];
        }
    }
    let mut offset = n_sys;
    for (lead, site) in &setup.leads {
        if *site == 0 || *site > n_sys {
            return Err(Error::SiteOutOfRange { site: *site, len: n_sys });
        }
        let contact = site - 1;
        let energies = lead.mode_energies();
        let couplings = lead.mode_couplings();
        for (k, (&e, &t)) in energies.iter().zip(couplings.iter()).enumerate() {
            let idx = offset + k;
            h[(idx, idx)] = C64::new(e, 0.0);
            h[(contact, idx)] = C64::new(t, 0.0);
            h[(idx, contact)] = C64::new(t, 0.0);
            c0[(idx, idx)] = C64::new(lead.fermi(e), 0.0);
        }
        offset += lead.sites;
    }

    let total_number: f64 = (0..total).map(|i| c0[(i, i)].re).sum();

    let (evals, u) = eigh(&h);
    // B = U^dag C0 U once; then C_sys(t) = U_s e^{-i E t} B e^{+i E t} U_s^dag
    let b = u.adjoint() * &c0 * &u;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let phase: Vec<C64> = evals.iter().map(|&e| C64::new(0.0, -e * t).exp()).collect();
        // rows of U restricted to system sites, with phases folded in
        let mut us = CMat::zeros(n_sys, total);
        for a in 0..total {
            for i in 0..n_sys {
                us[(i, a)] = u[(i, a)] * phase[a];
            }
        }
        let c_sys = &us * &b * us.adjoint();
        out.push(CovarianceState {
            c: crate::linalg::hermitize(&c_sys),
            statistics: Statistics::Fermion,
        });
    }
    Ok((out, total_number))
}

/// Retarded-style resolvent `G(z) = [z + i h + sum_a Sigma_a(z) P_a]^{-1}` in
/// the wideband limit, evaluated at `z = 0^+ - i omega` where each lead
/// contributes `Gamma_a / 2` on its contact diagonal.
fn wideband_resolvent(h: &CMat, contacts: &[(usize, f64)], omega: f64) -> CMat {
    let n = h.nrows();
    let mut ginv = crate::linalg::scale(h, C64::new(0.0, 1.0));
    for i in 0..n {
        ginv[(i, i)] += C64::new(0.0, -omega);
    }
    for &(site, gamma) in contacts {
        ginv[(site, site)] += C64::new(gamma / 2.0, 0.0);
    }
    solve_dense(&ginv, &crate::linalg::identity(n))
}

/// Stationary covariance of a wideband-coupled system:
/// `<d_i^dag d_j> = sum_a int (dw/2pi) Gamma_a f_a(w) G_ia*(w) G_ja(w)`
/// with the integral over the window where the occupations have weight.
/// `contacts` lists 0-based contact sites with `(gamma, beta, mu)`.
pub fn wideband_steady(h: &CMat, contacts: &[(usize, f64, f64, f64)]) -> Result<CovarianceState> {
    let n = h.nrows();
    let plain: Vec<(usize, f64)> = contacts.iter().map(|&(s, g, _, _)| (s, g)).collect();

    // compactify the frequency axis as w = c0 + s tan(theta); the resolvent
    // tails fall off like 1/w^2, so the substituted integrand stays bounded
    // at the endpoints and no window truncation error remains
    let (evals, _) = eigh(h);
    let gmax = contacts.iter().map(|c| c.1).fold(0.0f64, f64::max);
    let tmax = contacts.iter().map(|c| 1.0 / c.2).fold(0.0f64, f64::max);
    let mumax = contacts.iter().map(|c| c.3.abs()).fold(0.0f64, f64::max);
    let c0 = 0.5 * (evals.first().unwrap() + evals.last().unwrap());
    let spread = 0.5 * (evals.last().unwrap() - evals.first().unwrap());
    let s = (gmax + spread + tmax + mumax).max(1e-3);
    let half_pi = std::f64::consts::FRAC_PI_2;

    let mut c = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            // C_ij = <a_j^dag a_i>: integrate the (i, j) kernel
            let kernel = |theta: f64| -> C64 {
                let t = theta.tan();
                let w = c0 + s * t;
                let jac = s * (1.0 + t * t);
                let g = wideband_resolvent(h, &plain, w);
                let mut acc = ZERO;
                for &(site, gamma, beta, mu) in contacts {
                    let x = beta * (w - mu);
                    let f = if x > 0.0 { (-x).exp() / (1.0 + (-x).exp()) } else { 1.0 / (x.exp() + 1.0) };
                    // <d_j^dag d_i> integrand: Gamma f G*_{j,site} G_{i,site}
                    acc += C64::new(gamma * f * jac, 0.0) * g[(j, site)].conj() * g[(i, site)];
                }
                acc
            };
            let lo = -half_pi + 1e-12;
            let hi = half_pi - 1e-12;
            let re = quad::integrate(|th| kernel(th).re, lo, hi, 1e-9, 1e-13)?;
            let im = quad::integrate(|th| kernel(th).im, lo, hi, 1e-9, 1e-13)?;
            let v = C64::new(re, im) / (2.0 * std::f64::consts::PI);
            c[(i, j)] = v;
            c[(j, i)] = v.conj();
        }
    }
    Ok(CovarianceState { c, statistics: Statistics::Fermion })
}

/// Closed-form lead self-energy
/// `Sigma(z) = (t_c^2/(2 tau^2)) (sqrt(1 + 4 tau^2/(z + i e)^2) - 1)(z + i e)`,
/// on the branch that decays as `t_c^2/z` for large `|z|`. The branch cut sits
/// on `i [-center - 2 tau, -center + 2 tau]`.
pub fn self_energy(lead: &LeadSpec, z: C64) -> Result<C64> {
    let zeta = z + C64::new(0.0, lead.center);
    if zeta.norm() < 1e-300 {
        return Err(Error::Domain("self-energy evaluated on the branch cut".into()));
    }
    let tau = lead.t_lead;
    let tc2 = lead.t_coupling * lead.t_coupling;
    let w = ONE + 4.0 * tau * tau / (zeta * zeta);
    if w.im == 0.0 && w.re <= 0.0 {
        return Err(Error::Domain("self-energy evaluated on the branch cut".into()));
    }
    Ok(tc2 / (2.0 * tau * tau) * (w.sqrt() - ONE) * zeta)
}

/// Landauer current `(1/2pi) int T(w) [f_L(w) - f_R(w)] dw` for a transmission
/// function `0 <= T <= 1`. The integral substitutes `w = center + scale tan(theta)`
/// so Lorentzian-type tails integrate exactly.
pub fn landauer_current<F>(
    transmission: F,
    left: &BathSpec,
    right: &BathSpec,
    center: f64,
    scale: f64,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let half_pi = std::f64::consts::FRAC_PI_2;
    let integrand = |theta: f64| -> f64 {
        let t = theta.tan();
        let w = center + scale * t;
        let tv = transmission(w);
        debug_assert!((-1e-12..=1.0 + 1e-12).contains(&tv), "transmission out of [0,1]");
        let fl = occupation(left, w).unwrap_or(0.0);
        let fr = occupation(right, w).unwrap_or(0.0);
        let jac = scale * (1.0 + t * t);
        tv * (fl - fr) * jac
    };
    // probe bounds once for the precondition
    for w in [center - 3.0 * scale, center, center + 3.0 * scale] {
        let tv = transmission(w);
        if !(-1e-12..=1.0 + 1e-12).contains(&tv) {
            return Err(Error::Domain(format!("transmission {tv} at {w} outside [0, 1]")));
        }
    }
    let v = quad::integrate(integrand, -half_pi + 1e-12, half_pi - 1e-12, 1e-10, 1e-13)?;
    Ok(v / (2.0 * std::f64::consts::PI))
}

/// Wideband transmission of a chain with leads on the first and last sites:
/// `T(w) = Gamma_L Gamma_R |G_{1N}(w)|^2`.
pub fn wideband_transmission(h: &CMat, gamma_l: f64, gamma_r: f64, omega: f64) -> f64 {
    let n = h.nrows();
    let g = wideband_resolvent(h, &[(0, gamma_l), (n - 1, gamma_r)], omega);
    gamma_l * gamma_r * g[(0, n - 1)].norm_sqr()
}

/// Particle current through bond `(i, i+1)` of an exact covariance, positive
/// toward larger site index.
pub fn exact_bond_current(state: &CovarianceState, h: &CMat, bond: usize) -> Result<f64> {
    crate::gaussian::covariance_current(state, h, bond)
}

/// Normalized single-particle density matrix `M_ij = <d_i^dag d_j> / sum_k n_k`.
pub fn single_particle_density(state: &CovarianceState) -> CMat {
    let n = state.c.nrows();
    let mut m = dagger(&state.c); // M_ij = <d_i^dag d_j> = C_ji, Hermitian C
    let tr: f64 = (0..n).map(|i| m[(i, i)].re).sum();
    m = crate::linalg::scale(&m, C64::new(1.0 / tr, 0.0));
    m
}
