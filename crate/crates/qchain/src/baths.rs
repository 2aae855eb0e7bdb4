//! Reservoir physics: occupation functions, spectral densities, golden-rule
//! rates with detailed balance, and reaction-coordinate parameters.
//!
//! Bosonic spectral densities are continued to negative frequencies as odd
//! functions, `Gamma(-w) = -Gamma(w)`, so absorption/emission formulas hold
//! uniformly for both signs of the transition frequency.

use crate::linalg::quad;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Statistics of the reservoir attached to a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathKind {
    /// Thermal Fermi-Dirac reservoir.
    Fermion,
    /// Thermal Bose-Einstein reservoir.
    Boson,
    /// Non-thermal reservoir that pins the contact-site occupation to a
    /// target `f` (equivalently a magnetization `eta = 2f - 1`).
    Target,
}

/// Frequency-resolved coupling strength.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralDensity {
    /// Flat coupling `Gamma(w) = gamma`.
    Wideband { gamma: f64 },
    /// Semi-elliptic band of a semi-infinite uniform lead:
    /// `Gamma(w) = (2 t_c^2 / t_lead) sqrt(1 - ((w - center)/(2 t_lead))^2)`
    /// supported on `[center - 2 t_lead, center + 2 t_lead]`.
    SemiElliptic { center: f64, t_lead: f64, t_coupling: f64 },
    /// Piecewise-linear interpolation of `(w, Gamma)` samples; evaluation
    /// outside the grid is an error.
    Tabulated { omega: Vec<f64>, gamma: Vec<f64> },
}

impl SpectralDensity {
    /// Read a two-column CSV `(omega, gamma)`; a non-numeric first row is
    /// treated as a header.
    pub fn tabulated_from_csv(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut omega = Vec::new();
        let mut gamma = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let a = cols.next().map(str::trim).unwrap_or("");
            let b = cols.next().map(str::trim).unwrap_or("");
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    omega.push(x);
                    gamma.push(y);
                }
                _ if lineno == 0 => continue, // header
                _ => {
                    return Err(Error::Inconsistent(format!(
                        "cannot parse spectral-density row {}: {line:?}",
                        lineno + 1
                    )));
                }
            }
        }
        if omega.len() < 2 {
            return Err(Error::Inconsistent(
                "tabulated spectral density needs at least two samples".into(),
            ));
        }
        if !omega.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Inconsistent(
                "tabulated frequencies must be strictly increasing".into(),
            ));
        }
        Ok(SpectralDensity::Tabulated { omega, gamma })
    }

    /// Support of the positive-frequency part, if bounded.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            SpectralDensity::Wideband { .. } => None,
            SpectralDensity::SemiElliptic { center, t_lead, .. } => {
                Some((center - 2.0 * t_lead.abs(), center + 2.0 * t_lead.abs()))
            }
            SpectralDensity::Tabulated { omega, .. } => Some((omega[0], *omega.last().unwrap())),
        }
    }
}

/// `Gamma(w)`, zero outside the support. No odd continuation here; see
/// [`rate_odd`] for the bosonic convention.
pub fn rate(sd: &SpectralDensity, omega: f64) -> Result<f64> {
    match sd {
        SpectralDensity::Wideband { gamma } => Ok(*gamma),
        SpectralDensity::SemiElliptic { center, t_lead, t_coupling } => {
            let half = 2.0 * t_lead.abs();
            let x = (omega - center) / half;
            if x.abs() >= 1.0 {
                return Ok(0.0);
            }
            Ok(2.0 * t_coupling * t_coupling / t_lead.abs() * (1.0 - x * x).sqrt())
        }
        SpectralDensity::Tabulated { omega: xs, gamma: ys } => {
            if omega < xs[0] || omega > *xs.last().unwrap() {
                return Err(Error::Domain(format!(
                    "frequency {omega} outside tabulated grid [{}, {}]",
                    xs[0],
                    xs.last().unwrap()
                )));
            }
            let idx = xs.partition_point(|&x| x <= omega).min(xs.len() - 1);
            let (i0, i1) = if idx == 0 { (0, 1) } else { (idx - 1, idx) };
            let t = (omega - xs[i0]) / (xs[i1] - xs[i0]);
            Ok(ys[i0] + t * (ys[i1] - ys[i0]))
        }
    }
}

/// Odd continuation `Gamma(-w) = -Gamma(w)` used for bosonic rates.
pub fn rate_odd(sd: &SpectralDensity, omega: f64) -> Result<f64> {
    if omega >= 0.0 { rate(sd, omega) } else { Ok(-rate(sd, -omega)?) }
}

/// One reservoir: statistics, coupling, thermodynamic parameters, contact site.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BathSpec {
    pub kind: BathKind,
    /// 1-based contact site.
    pub site: usize,
    /// Flat rate `gamma` (local master equations) ...
    #[serde(default)]
    pub gamma: Option<f64>,
    /// ... or a frequency-resolved spectral density (global/Redfield).
    #[serde(default)]
    pub spectral: Option<SpectralDensity>,
    /// Inverse temperature (thermal kinds).
    #[serde(default)]
    pub beta: Option<f64>,
    /// Chemical potential.
    #[serde(default)]
    pub mu: f64,
    /// Target occupation `f` (target kind), in `[0, 1]`.
    #[serde(default)]
    pub f: Option<f64>,
    /// Equivalent magnetization target `eta = 2f - 1`, in `[-1, 1]`.
    #[serde(default)]
    pub eta: Option<f64>,
}

impl BathSpec {
    /// Magnetization-target bath with flat rate `gamma` imposing occupation `f`.
    pub fn target(site: usize, gamma: f64, f: f64) -> Self {
        Self {
            kind: BathKind::Target,
            site,
            gamma: Some(gamma),
            spectral: None,
            beta: None,
            mu: 0.0,
            f: Some(f),
            eta: None,
        }
    }

    /// Thermal fermionic bath with flat rate `gamma`.
    pub fn fermion(site: usize, gamma: f64, beta: f64, mu: f64) -> Self {
        Self {
            kind: BathKind::Fermion,
            site,
            gamma: Some(gamma),
            spectral: None,
            beta: Some(beta),
            mu,
            f: None,
            eta: None,
        }
    }

    /// Thermal fermionic bath with a frequency-resolved coupling.
    pub fn fermion_spectral(site: usize, sd: SpectralDensity, beta: f64, mu: f64) -> Self {
        Self {
            kind: BathKind::Fermion,
            site,
            gamma: None,
            spectral: Some(sd),
            beta: Some(beta),
            mu,
            f: None,
            eta: None,
        }
    }

    /// Thermal bosonic bath with flat rate `gamma`.
    pub fn boson(site: usize, gamma: f64, beta: f64) -> Self {
        Self {
            kind: BathKind::Boson,
            site,
            gamma: Some(gamma),
            spectral: None,
            beta: Some(beta),
            mu: 0.0,
            f: None,
            eta: None,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self.f = Some((1.0 + eta) / 2.0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.gamma {
            if g < 0.0 {
                return Err(Error::Domain("coupling rate gamma must be >= 0".into()));
            }
        }
        match self.kind {
            BathKind::Target => {
                let f = self.target_occupation()?;
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::Domain(format!("target occupation {f} outside [0, 1]")));
                }
                if let (Some(f0), Some(eta)) = (self.f, self.eta) {
                    if ((1.0 + eta) / 2.0 - f0).abs() > 1e-12 {
                        return Err(Error::Inconsistent(
                            "target f and eta disagree: f must equal (1 + eta)/2".into(),
                        ));
                    }
                }
            }
            BathKind::Fermion | BathKind::Boson => {
                if self.beta.is_none() {
                    return Err(Error::Inconsistent(
                        "thermal bath requires an inverse temperature".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn target_occupation(&self) -> Result<f64> {
        match (self.f, self.eta) {
            (Some(f), _) => Ok(f),
            (None, Some(eta)) => Ok((1.0 + eta) / 2.0),
            (None, None) => Err(Error::Inconsistent(
                "target bath needs an occupation f or magnetization eta".into(),
            )),
        }
    }

    /// Coupling strength at frequency `omega`; flat rate or spectral density.
    pub fn coupling_at(&self, omega: f64) -> Result<f64> {
        match (&self.gamma, &self.spectral) {
            (Some(g), None) => Ok(*g),
            (None, Some(sd)) => {
                if self.kind == BathKind::Boson {
                    rate_odd(sd, omega)
                } else {
                    rate(sd, omega)
                }
            }
            (Some(_), Some(_)) => Err(Error::Inconsistent(
                "bath specifies both a flat rate and a spectral density".into(),
            )),
            (None, None) => Err(Error::Inconsistent(
                "bath specifies neither a flat rate nor a spectral density".into(),
            )),
        }
    }
}

/// Mean reservoir occupation at frequency `omega`.
///
/// Fermionic: `1/(e^{beta (omega - mu)} + 1)`. Bosonic: `1/(e^{beta omega} - 1)`,
/// requiring `omega > 0`. Target baths return their pinned occupation.
pub fn occupation(spec: &BathSpec, omega: f64) -> Result<f64> {
    match spec.kind {
        BathKind::Target => spec.target_occupation(),
        BathKind::Fermion => {
            let beta = spec.beta.unwrap_or(f64::INFINITY);
            let x = beta * (omega - spec.mu);
            if x > 0.0 {
                let e = (-x).exp();
                Ok(e / (1.0 + e))
            } else {
                Ok(1.0 / (x.exp() + 1.0))
            }
        }
        BathKind::Boson => {
            let beta = spec
                .beta
                .ok_or_else(|| Error::Inconsistent("bosonic bath requires beta".into()))?;
            if omega <= 0.0 && beta > 0.0 {
                return Err(Error::Domain(format!(
                    "bosonic occupation undefined at omega = {omega} <= 0"
                )));
            }
            Ok(1.0 / ((beta * omega).exp_m1()))
        }
    }
}

/// Golden-rule `(absorb, emit)` pair at transition frequency `omega`:
/// the system gains a quantum of energy `omega` at the absorption rate and
/// releases one at the emission rate, with `emit/absorb = e^{beta (omega - mu)}`
/// for thermal baths. Bosonic rates fold in the odd continuation of the
/// spectral density, so `omega < 0` is handled uniformly.
pub fn golden_rule_rates(spec: &BathSpec, omega: f64) -> Result<(f64, f64)> {
    match spec.kind {
        BathKind::Target => {
            let g = match (&spec.gamma, &spec.spectral) {
                (Some(g), None) => *g,
                (None, Some(sd)) => rate(sd, omega)?,
                _ => return Err(Error::Inconsistent("ambiguous target-bath coupling".into())),
            };
            let f = self_target(spec)?;
            Ok((g * f, g * (1.0 - f)))
        }
        BathKind::Fermion => {
            let g = spec.coupling_at(omega)?;
            let f = occupation(spec, omega)?;
            Ok((g * f, g * (1.0 - f)))
        }
        BathKind::Boson => {
            let beta = spec
                .beta
                .ok_or_else(|| Error::Inconsistent("bosonic bath requires beta".into()))?;
            if omega == 0.0 {
                return Err(Error::Domain(
                    "bosonic golden-rule rates diverge at zero frequency".into(),
                ));
            }
            let g = spec.coupling_at(omega)?; // odd-continued
            // n(omega) = 1/(e^{beta omega} - 1) is negative for omega < 0;
            // the products below stay nonnegative.
            let n = 1.0 / ((beta * omega).exp_m1());
            Ok((g * n, g * (n + 1.0)))
        }
    }
}

fn self_target(spec: &BathSpec) -> Result<f64> {
    spec.target_occupation()
}

/// Reaction-coordinate frequency and coupling `(Omega_1, lambda_1)` of a
/// bounded spectral density supported at positive frequencies:
/// `Omega_1^2 = int w Gamma dw / int (Gamma/w) dw`,
/// `lambda_1^2 = (1/(2 pi Omega_1)) int w Gamma dw`,
/// both integrals by adaptive quadrature at relative tolerance `1e-8`.
pub fn reaction_coordinate(sd: &SpectralDensity) -> Result<(f64, f64)> {
    const RTOL: f64 = 1e-8;
    let (a, b) = sd.support().ok_or_else(|| {
        Error::Domain("reaction coordinate requires a bounded spectral density".into())
    })?;
    if a <= 0.0 {
        return Err(Error::Domain(
            "spectral support touches zero frequency: 1/w moment diverges".into(),
        ));
    }

    let (first_moment, inv_moment) = match *sd {
        SpectralDensity::SemiElliptic { center, t_lead, t_coupling } => {
            // substitute w = center + 2 t sin(theta): the edge square roots
            // become smooth cos^2 factors
            let t = t_lead.abs();
            let pref = 2.0 * t_coupling * t_coupling / t;
            let half_pi = std::f64::consts::FRAC_PI_2;
            let fm = quad::integrate(
                |th| {
                    let w = center + 2.0 * t * th.sin();
                    let c = th.cos();
                    w * pref * c * c * 2.0 * t
                },
                -half_pi,
                half_pi,
                RTOL,
                1e-14,
            )?;
            let im = quad::integrate(
                |th| {
                    let w = center + 2.0 * t * th.sin();
                    let c = th.cos();
                    pref * c * c * 2.0 * t / w
                },
                -half_pi,
                half_pi,
                RTOL,
                1e-14,
            )?;
            (fm, im)
        }
        _ => {
            let fm = quad::integrate(|w| w * rate(sd, w).unwrap_or(0.0), a, b, RTOL, 1e-14)?;
            let im = quad::integrate(|w| rate(sd, w).unwrap_or(0.0) / w, a, b, RTOL, 1e-14)?;
            (fm, im)
        }
    };

    if inv_moment <= 0.0 || first_moment <= 0.0 {
        return Err(Error::Domain("reaction coordinate needs positive spectral moments".into()));
    }
    let omega1 = (first_moment / inv_moment).sqrt();
    let lambda1 = (first_moment / (2.0 * std::f64::consts::PI * omega1)).sqrt();
    Ok((omega1, lambda1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fermi_occupation_values() {
        let b = BathSpec::fermion(1, 1.0, 1.0, 0.0);
        assert!((occupation(&b, 0.0).unwrap() - 0.5).abs() < 1e-15);
        // beta (omega - mu) = ln 3  ->  f = 1/4
        assert!((occupation(&b, 3.0f64.ln()).unwrap() - 0.25).abs() < 1e-15);
        // deep empty band
        let b = BathSpec::fermion(1, 1.0, 1e4, 0.0);
        assert!(occupation(&b, 10.0).unwrap() < 1e-300);
    }

    #[test]
    fn bose_occupation_limits() {
        let b = BathSpec::boson(1, 1.0, 1.0);
        assert!(occupation(&b, 700.0).unwrap() < 1e-300);
        assert!(occupation(&b, -1.0).is_err());
        // small omega: n ~ 1/(beta w)
        let n = occupation(&b, 1e-8).unwrap();
        assert!((n * 1e-8 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn semielliptic_peak_and_edges() {
        let sd = SpectralDensity::SemiElliptic { center: 2.0, t_lead: 0.5, t_coupling: 0.3 };
        let peak = rate(&sd, 2.0).unwrap();
        assert!((peak - 2.0 * 0.09 / 0.5).abs() < 1e-14);
        assert_eq!(rate(&sd, 3.0).unwrap(), 0.0);
        assert_eq!(rate(&sd, 0.99).unwrap(), 0.0);
        let w = rate(&sd, 2.3).unwrap();
        assert!(w > 0.0 && w < peak);
    }

    #[test]
    fn wideband_is_flat() {
        let sd = SpectralDensity::Wideband { gamma: 0.3 };
        for w in [-5.0, 0.0, 17.0] {
            assert_eq!(rate(&sd, w).unwrap(), 0.3);
        }
    }

    #[test]
    fn tabulated_interpolation_and_bounds() {
        let sd =
            SpectralDensity::Tabulated { omega: vec![1.0, 2.0, 3.0], gamma: vec![0.0, 1.0, 0.0] };
        assert!((rate(&sd, 1.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((rate(&sd, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(rate(&sd, 0.5).is_err());
        assert!(rate(&sd, 3.5).is_err());
    }

    #[test]
    fn detailed_balance_grid() {
        // emit/absorb = e^{beta (omega - mu)} over a grid of 100 tuples
        let mut checked = 0;
        for ib in 1..=5 {
            for iw in 1..=5 {
                for imu in 0..4 {
                    let beta = 0.3 * ib as f64;
                    let omega = -1.5 + 0.8 * iw as f64;
                    let mu = -0.3 + 0.25 * imu as f64;
                    let b = BathSpec::fermion(1, 0.7, beta, mu);
                    let (absorb, emit) = golden_rule_rates(&b, omega).unwrap();
                    let ratio = emit / absorb;
                    let want = (beta * (omega - mu)).exp();
                    assert!(
                        (ratio - want).abs() <= 1e-12 * want.max(1.0),
                        "beta={beta} omega={omega} mu={mu}"
                    );
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, 100);
    }

    #[test]
    fn bosonic_rates_obey_kms_and_odd_continuation() {
        let sd = SpectralDensity::SemiElliptic { center: 2.0, t_lead: 0.7, t_coupling: 0.4 };
        let mut b = BathSpec::boson(1, 1.0, 0.9);
        b.gamma = None;
        b.spectral = Some(sd);
        let (absorb, emit) = golden_rule_rates(&b, 2.2).unwrap();
        assert!(absorb > 0.0 && emit > absorb);
        assert!((emit / absorb - (0.9f64 * 2.2).exp()).abs() < 1e-12 * emit);
        // negative frequency: absorbing at -w equals emitting at +w
        let (absorb_neg, emit_neg) = golden_rule_rates(&b, -2.2).unwrap();
        assert!((absorb_neg - emit).abs() < 1e-12);
        assert!((emit_neg - absorb).abs() < 1e-12);
    }

    #[test]
    fn halving_point_for_fermions() {
        let b = BathSpec::fermion(1, 0.8, 2.0, 1.3);
        let (absorb, emit) = golden_rule_rates(&b, 1.3).unwrap();
        assert!((absorb - 0.4).abs() < 1e-14);
        assert!((emit - 0.4).abs() < 1e-14);
    }

    #[test]
    fn reaction_coordinate_flat_band_closed_form() {
        // Gamma = const on [a, b]: Omega1^2 = ((b^2 - a^2)/2)/ln(b/a)
        let (a, b) = (1.0, 3.0);
        let g0 = 0.5;
        let sd = SpectralDensity::Tabulated { omega: vec![a, b], gamma: vec![g0, g0] };
        let (omega1, lambda1) = reaction_coordinate(&sd).unwrap();
        let fm = g0 * (b * b - a * a) / 2.0;
        let want_omega = (fm / (g0 * (b / a).ln())).sqrt();
        assert!((omega1 - want_omega).abs() < 1e-7 * want_omega);
        let want_lambda = (fm / (2.0 * std::f64::consts::PI * want_omega)).sqrt();
        assert!((lambda1 - want_lambda).abs() < 1e-7 * want_lambda);
    }

    #[test]
    fn reaction_coordinate_narrow_band_limit() {
        // narrow semielliptic band far from zero: Omega1 -> center
        let sd = SpectralDensity::SemiElliptic { center: 5.0, t_lead: 1e-3, t_coupling: 0.1 };
        let (omega1, _) = reaction_coordinate(&sd).unwrap();
        assert!((omega1 - 5.0).abs() < 1e-5);
    }

    #[test]
    fn reaction_coordinate_scales_with_prefactor() {
        let sd1 = SpectralDensity::Tabulated { omega: vec![1.0, 2.0], gamma: vec![0.3, 0.5] };
        let sd2 = SpectralDensity::Tabulated { omega: vec![1.0, 2.0], gamma: vec![0.6, 1.0] };
        let (o1, l1) = reaction_coordinate(&sd1).unwrap();
        let (o2, l2) = reaction_coordinate(&sd2).unwrap();
        assert!((o1 - o2).abs() < 1e-8 * o1);
        assert!((l2 * l2 / (l1 * l1) - 2.0).abs() < 1e-7);
    }

    #[test]
    fn reaction_coordinate_rejects_support_through_zero() {
        let sd = SpectralDensity::Tabulated { omega: vec![-1.0, 1.0], gamma: vec![0.5, 0.5] };
        assert!(reaction_coordinate(&sd).is_err());
        let sd = SpectralDensity::Wideband { gamma: 0.5 };
        assert!(reaction_coordinate(&sd).is_err());
    }

    #[test]
    fn semielliptic_sum_rule() {
        // int Gamma dw / 2 pi = t_coupling^2
        let sd = SpectralDensity::SemiElliptic { center: 1.0, t_lead: 0.8, t_coupling: 0.35 };
        let v = quad::integrate(|w| rate(&sd, w).unwrap(), -0.6, 2.6, 1e-10, 1e-13).unwrap();
        assert!((v / (2.0 * std::f64::consts::PI) - 0.35 * 0.35).abs() < 1e-8);
    }

    #[test]
    fn target_bath_parametrizations_agree() {
        let b1 = BathSpec::target(1, 1.0, 0.75);
        let b2 = BathSpec::target(1, 1.0, 0.0).with_eta(0.5);
        assert!((b1.target_occupation().unwrap() - 0.75).abs() < 1e-15);
        assert!((b2.target_occupation().unwrap() - 0.75).abs() < 1e-15);
        b1.validate().unwrap();
        b2.validate().unwrap();
    }

    #[test]
    fn csv_loader_roundtrip() {
        let dir = std::env::temp_dir().join("qchain_sd_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sd.csv");
        std::fs::write(&path, "omega,gamma\n1.0,0.2\n2.0,0.6\n3.0,0.1\n").unwrap();
        let sd = SpectralDensity::tabulated_from_csv(&path).unwrap();
        assert!((rate(&sd, 1.5).unwrap() - 0.4).abs() < 1e-15);
    }
}
