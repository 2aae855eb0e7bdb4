//! Master-equation generators as Hamiltonian + jump-channel bundles.
//!
//! Every generator is stored in the split form
//!
//! ```text
//! d rho/dt = -i [H + H_LS, rho]
//!            + sum_nu ( Kl_nu rho + rho Kr_nu + sum_s w_s X_s rho Y_s )
//! ```
//!
//! GKSL bundles keep each sandwich in canonical `rate * L rho L^dag` form;
//! Redfield bundles carry operator pairs with the half-Fourier kernels folded
//! into the left/right factors. Counting-field tilts multiply sandwich
//! weights by `e^{i chi w}`, with weights counting quanta **gained by the
//! bath** (a jump that drains the system into reservoir `nu` carries
//! particle weight `+1` there).

use crate::baths::{BathKind, BathSpec, golden_rule_rates};
use crate::linalg::sparse::{SpBuilder, SpMat};
use crate::linalg::{C64, CMat, ONE, ZERO, dagger, eigh, max_abs, quad, scale};
use crate::model::{HamiltonianSpec, SiteOperatorKind, build_hamiltonian, potential_values, site_operator};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Lme,
    Gme,
    Redfield,
    Custom,
}

/// What a counting field tracks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Counter {
    /// Net particles transferred into bath `nu` (index into `bundle.baths`).
    Particle { bath: usize },
    /// Net energy transferred into bath `nu`.
    Energy { bath: usize },
    /// Total number of jumps, any channel.
    Activity,
}

/// One sandwich term `weight * X rho Y`.
#[derive(Debug, Clone)]
pub struct JumpTerm {
    pub left: CMat,
    pub right: CMat,
    pub weight: C64,
    /// Particles gained by the attached bath when this term fires.
    pub particle: Option<f64>,
    /// Energy gained by the attached bath.
    pub energy: Option<f64>,
    /// Jump-count weight; `Some(1.0)` for canonical GKSL channels.
    pub activity: Option<f64>,
    /// `Some(rate)` when the term is `rate * L rho L^dag` with `right = left^dag`.
    pub canonical_rate: Option<f64>,
}

/// The full action of one reservoir (or of the dephasing add-on).
#[derive(Debug, Clone)]
pub struct Dissipator {
    /// Index into `bundle.baths`; `None` for dephasing channels.
    pub bath: Option<usize>,
    pub terms: Vec<JumpTerm>,
    /// Contribution to the left drift (`Kl rho`), e.g. `-1/2 sum rate L^dag L`.
    pub drift_left: CMat,
    /// Contribution to the right drift (`rho Kr`).
    pub drift_right: CMat,
}

impl Dissipator {
    /// Apply this dissipator to a density matrix.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = &self.drift_left * rho + rho * &self.drift_right;
        for t in &self.terms {
            let sandwich = &t.left * rho * &t.right;
            out += scale(&sandwich, t.weight);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorBundle {
    pub kind: GeneratorKind,
    /// Bare system Hamiltonian.
    pub h: CMat,
    /// Hermitian level-shift correction; zero when absent.
    pub lamb_shift: CMat,
    pub dissipators: Vec<Dissipator>,
    pub baths: Vec<BathSpec>,
    pub model: Option<HamiltonianSpec>,
    /// Counting-field tilt applied to this bundle, if any.
    pub tilt: Option<(Counter, f64)>,
}

impl GeneratorBundle {
    /// GKSL bundle from an explicit Hamiltonian and `(rate, jump op)` list.
    pub fn custom(h: CMat, channels: Vec<(f64, CMat)>) -> Self {
        let dim = h.nrows();
        let channels = channels
            .into_iter()
            .map(|(rate, op)| (rate, op, None, None))
            .collect();
        GeneratorBundle {
            kind: GeneratorKind::Custom,
            lamb_shift: CMat::zeros(dim, dim),
            h,
            dissipators: vec![canonical_dissipator(None, dim, channels)],
            baths: Vec::new(),
            model: None,
            tilt: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// `H + H_LS`, the coherent part.
    pub fn h_total(&self) -> CMat {
        &self.h + &self.lamb_shift
    }

    /// Full generator action `L(rho)`.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let ht = self.h_total();
        let mut out = scale(&(&ht * rho - rho * &ht), C64::new(0.0, -1.0));
        for d in &self.dissipators {
            out += d.apply(rho);
        }
        out
    }

    /// Action of the dissipator(s) belonging to bath `nu` alone.
    pub fn apply_bath_dissipator(&self, nu: usize, rho: &CMat) -> CMat {
        let n = self.dim();
        let mut out = CMat::zeros(n, n);
        for d in self.dissipators.iter().filter(|d| d.bath == Some(nu)) {
            out += d.apply(rho);
        }
        out
    }

    /// Sparse vectorized superoperator in the column-stacking convention
    /// `vec(X rho Y) = (Y^T (x) X) vec(rho)`.
    pub fn superoperator(&self) -> SpMat {
        let d = self.dim();
        let mut b = SpBuilder::new(d * d, d * d);
        let ht = self.h_total();
        let minus_i = C64::new(0.0, -1.0);
        // -i (I (x) H - H^T (x) I)
        add_kron_left(&mut b, &ht, minus_i, d); // I (x) Ht acting as Ht rho
        add_kron_right(&mut b, &ht, -minus_i, d); // rho Ht with +i
        for diss in &self.dissipators {
            add_kron_left(&mut b, &diss.drift_left, ONE, d);
            add_kron_right(&mut b, &diss.drift_right, ONE, d);
            for t in &diss.terms {
                add_kron_sandwich(&mut b, &t.left, &t.right, t.weight, d);
            }
        }
        b.build()
    }

    /// Dense superoperator (small systems, diagnostics, golden tests).
    pub fn dense_superoperator(&self) -> CMat {
        self.superoperator().to_dense()
    }

    /// Canonical GKSL channel list `(rate, jump operator, term metadata)`;
    /// errors when a term is not in canonical form (e.g. Redfield pairs).
    pub fn gksl_channels(&self) -> Result<Vec<(f64, CMat, JumpTerm)>> {
        let mut out = Vec::new();
        for d in &self.dissipators {
            for t in &d.terms {
                match t.canonical_rate {
                    Some(rate) => out.push((rate, t.left.clone(), t.clone())),
                    None => {
                        return Err(Error::Unsupported(
                            "bundle contains non-canonical jump terms (not GKSL form)".into(),
                        ));
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn is_gksl(&self) -> bool {
        self.dissipators
            .iter()
            .all(|d| d.terms.iter().all(|t| t.canonical_rate.is_some()))
    }

    /// Counting-field tilt: each sandwich acquires `e^{i chi w}` with `w` the
    /// selected counting weight. At `chi = 0` the bundle is returned bit-exact.
    pub fn tilted(&self, counter: Counter, chi: f64) -> Result<GeneratorBundle> {
        if let Counter::Energy { .. } = counter {
            if self.kind == GeneratorKind::Redfield && self.dim() > 4 {
                return Err(Error::Unsupported(
                    "energy counting on a non-secular bundle is only microscopically \
                     derived for the two-site case; larger chains are rejected"
                        .into(),
                ));
            }
        }
        let mut out = self.clone();
        out.tilt = Some((counter, chi));
        if chi == 0.0 {
            return Ok(out);
        }
        for d in out.dissipators.iter_mut() {
            for t in d.terms.iter_mut() {
                let w = match counter {
                    Counter::Particle { bath } => {
                        if d.bath == Some(bath) {
                            t.particle.ok_or_else(|| {
                                Error::Unsupported(
                                    "term carries no particle counting weight".into(),
                                )
                            })?
                        } else {
                            0.0
                        }
                    }
                    Counter::Energy { bath } => {
                        if d.bath == Some(bath) {
                            t.energy.ok_or_else(|| {
                                Error::Unsupported("term carries no energy counting weight".into())
                            })?
                        } else {
                            0.0
                        }
                    }
                    Counter::Activity => t.activity.ok_or_else(|| {
                        Error::Unsupported(
                            "activity counting requires canonical jump channels".into(),
                        )
                    })?,
                };
                if w != 0.0 {
                    t.weight *= C64::new(0.0, chi * w).exp();
                }
            }
        }
        Ok(out)
    }

    /// Derivative of the tilted superoperator with respect to `chi` at the
    /// current tilt, order `n` in `(i w)`: each sandwich gains `(i w)^n`.
    pub fn tilt_derivative(&self, counter: Counter, order: u32) -> Result<GeneratorBundle> {
        let mut out = self.clone();
        out.kind = GeneratorKind::Custom;
        out.lamb_shift = CMat::zeros(self.dim(), self.dim());
        out.h = CMat::zeros(self.dim(), self.dim());
        for d in out.dissipators.iter_mut() {
            d.drift_left = CMat::zeros(self.dim(), self.dim());
            d.drift_right = CMat::zeros(self.dim(), self.dim());
            for t in d.terms.iter_mut() {
                let w = match counter {
                    Counter::Particle { bath } => {
                        if d.bath == Some(bath) { t.particle.unwrap_or(0.0) } else { 0.0 }
                    }
                    Counter::Energy { bath } => {
                        if d.bath == Some(bath) { t.energy.unwrap_or(0.0) } else { 0.0 }
                    }
                    Counter::Activity => t.activity.unwrap_or(0.0),
                };
                let iw = C64::new(0.0, w);
                let mut factor = ONE;
                for _ in 0..order {
                    factor *= iw;
                }
                t.weight *= factor;
            }
            d.terms.retain(|t| t.weight != ZERO);
        }
        Ok(out)
    }

    /// Coordinate-sparse text dump of the channel list, for golden-file tests.
    pub fn diagnostic_dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let dump_mat = |s: &mut String, m: &CMat| {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    let v = m[(i, j)];
                    if v.norm() > 1e-14 {
                        write!(s, " ({i},{j},{:+.12e},{:+.12e})", v.re, v.im).unwrap();
                    }
                }
            }
        };
        writeln!(s, "kind: {:?} dim: {}", self.kind, self.dim()).unwrap();
        s.push_str("hamiltonian:");
        dump_mat(&mut s, &self.h_total());
        s.push('\n');
        for (di, d) in self.dissipators.iter().enumerate() {
            writeln!(s, "dissipator {di} bath {:?}", d.bath).unwrap();
            s.push_str("  drift_left:");
            dump_mat(&mut s, &d.drift_left);
            s.push_str("\n  drift_right:");
            dump_mat(&mut s, &d.drift_right);
            s.push('\n');
            for (ti, t) in d.terms.iter().enumerate() {
                write!(
                    s,
                    "  term {ti} weight=({:+.12e},{:+.12e}) particle={:?} energy={:?}",
                    t.weight.re, t.weight.im, t.particle, t.energy
                )
                .unwrap();
                s.push_str("\n    left:");
                dump_mat(&mut s, &t.left);
                s.push_str("\n    right:");
                dump_mat(&mut s, &t.right);
                s.push('\n');
            }
        }
        s
    }
}

fn add_kron_left(b: &mut SpBuilder, op: &CMat, scale: C64, d: usize) {
    // I (x) op : op rho
    for jp in 0..d {
        for ip in 0..d {
            let v = op[(ip, jp)] * scale;
            if v == ZERO {
                continue;
            }
            for j in 0..d {
                b.push(j * d + ip, j * d + jp, v);
            }
        }
    }
}

fn add_kron_right(b: &mut SpBuilder, op: &CMat, scale: C64, d: usize) {
    // op^T (x) I : rho op
    for jp in 0..d {
        for ip in 0..d {
            let v = op[(ip, jp)] * scale;
            if v == ZERO {
                continue;
            }
            // row block index ip? vec(rho op)[j d + i] = sum_k rho[i,k] op[k,j]
            for i in 0..d {
                b.push(jp * d + i, ip * d + i, v);
            }
        }
    }
}

fn add_kron_sandwich(b: &mut SpBuilder, x: &CMat, y: &CMat, w: C64, d: usize) {
    // vec(X rho Y)[j d + i] = sum_{i', j'} X[i, i'] rho[i', j'] Y[j', j]
    let mut xn: Vec<(usize, usize, C64)> = Vec::new();
    for jp in 0..d {
        for ip in 0..d {
            if x[(ip, jp)] != ZERO {
                xn.push((ip, jp, x[(ip, jp)]));
            }
        }
    }
    for j in 0..d {
        for jp in 0..d {
            let yv = y[(jp, j)];
            if yv == ZERO {
                continue;
            }
            for &(i, ip, xv) in &xn {
                b.push(j * d + i, jp * d + ip, w * xv * yv);
            }
        }
    }
}

/// Lowering operator a bath couples to at its contact site: `sigma^-` on spin
/// chains, Jordan-Wigner `c_i` on fermionic chains, truncated `a_i` on bosonic
/// chains.
fn contact_lowering(spec: &HamiltonianSpec, site: usize) -> Result<CMat> {
    if spec.is_spin() {
        site_operator(spec, SiteOperatorKind::SigmaMinus, site)
    } else {
        site_operator(spec, SiteOperatorKind::Annihilate, site)
    }
}

/// Local transition frequency seen by an LME bath: `2 h_i` on spin chains
/// (cost of flipping the contact spin up), the on-site energy on particle
/// chains.
fn local_gap(spec: &HamiltonianSpec, site: usize) -> Result<f64> {
    let pot = potential_values(&spec.potential, spec.sites)?;
    Ok(if spec.is_spin() { 2.0 * pot[site - 1] } else { pot[site - 1] })
}

fn canonical_dissipator(
    bath_idx: Option<usize>,
    dim: usize,
    channels: Vec<(f64, CMat, Option<f64>, Option<f64>)>,
) -> Dissipator {
    let mut drift = CMat::zeros(dim, dim);
    let mut terms = Vec::new();
    for (rate, op, particle, energy) in channels {
        if rate == 0.0 {
            continue;
        }
        let opd = dagger(&op);
        drift += scale(&(&opd * &op), C64::new(-0.5 * rate, 0.0));
        terms.push(JumpTerm {
            right: opd,
            left: op,
            weight: C64::new(rate, 0.0),
            particle,
            energy,
            activity: Some(1.0),
            canonical_rate: Some(rate),
        });
    }
    Dissipator { bath: bath_idx, terms, drift_left: drift.clone(), drift_right: drift }
}

/// Local master equation: per bath, jump channels acting on the contact site
/// only, with raising/lowering rates `gamma f` and `gamma (1 - f)` (bosonic:
/// `gamma n` and `gamma (n + 1)`).
pub fn build_lme(spec: &HamiltonianSpec, baths: &[BathSpec]) -> Result<GeneratorBundle> {
    let h = build_hamiltonian(spec)?;
    let dim = h.nrows();
    let mut dissipators = Vec::new();
    for (nu, bath) in baths.iter().enumerate() {
        bath.validate()?;
        if bath.site == 0 || bath.site > spec.sites {
            return Err(Error::SiteOutOfRange { site: bath.site, len: spec.sites });
        }
        let gap = local_gap(spec, bath.site)?;
        let lower = contact_lowering(spec, bath.site)?;
        let raise = dagger(&lower);
        let (absorb, emit) = match bath.kind {
            BathKind::Target => {
                let g = bath.coupling_at(gap)?;
                let f = bath.target_occupation()?;
                (g * f, g * (1.0 - f))
            }
            _ => golden_rule_rates(bath, gap)?,
        };
        // lowering channel drains the system: the bath gains (+1, +gap)
        let channels = vec![
            (emit, lower, Some(1.0), Some(gap)),
            (absorb, raise, Some(-1.0), Some(-gap)),
        ];
        dissipators.push(canonical_dissipator(Some(nu), dim, channels));
    }
    Ok(GeneratorBundle {
        kind: GeneratorKind::Lme,
        lamb_shift: CMat::zeros(dim, dim),
        h,
        dissipators,
        baths: baths.to_vec(),
        model: Some(spec.clone()),
        tilt: None,
    })
}

/// Entries of the contact operator in the energy eigenbasis, clustered by
/// Bohr frequency `omega = E_b - E_a` within `tol`.
struct BohrCluster {
    omega: f64,
    /// component of the eigenbasis operator restricted to this cluster
    op_eig: CMat,
    /// net particle change of the system (rounded), when consistent
    dn: Option<f64>,
}

fn bohr_clusters(a_eig: &CMat, evals: &[f64], occ: Option<&[f64]>, tol: f64) -> Vec<BohrCluster> {
    let n = a_eig.nrows();
    let cutoff = 1e-13 * max_abs(a_eig).max(1e-300);
    let mut entries: Vec<(f64, usize, usize)> = Vec::new();
    for b in 0..n {
        for a in 0..n {
            if a_eig[(a, b)].norm() > cutoff {
                entries.push((evals[b] - evals[a], a, b));
            }
        }
    }
    entries.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut clusters: Vec<BohrCluster> = Vec::new();
    let mut idx = 0;
    while idx < entries.len() {
        let start = entries[idx].0;
        let mut members = Vec::new();
        while idx < entries.len() && entries[idx].0 - start <= tol {
            members.push(entries[idx]);
            idx += 1;
        }
        let omega = members.iter().map(|m| m.0).sum::<f64>() / members.len() as f64;
        let mut op = CMat::zeros(n, n);
        let mut dn: Option<f64> = None;
        let mut dn_ok = true;
        for &(_, a, b) in &members {
            op[(a, b)] = a_eig[(a, b)];
            if let Some(occ) = occ {
                let d = occ[a] - occ[b];
                match dn {
                    None => dn = Some(d),
                    Some(prev) if (prev - d).abs() > 1e-6 => dn_ok = false,
                    _ => {}
                }
            }
        }
        let dn = if dn_ok { dn.map(|x| x.round()) } else { None };
        clusters.push(BohrCluster { omega, op_eig: op, dn });
    }
    clusters
}

/// Cached principal-value transforms of the absorption/emission kernels.
struct PvCache<'a> {
    bath: &'a BathSpec,
    support: Option<(f64, f64)>,
    bosonic: bool,
    absorb: std::collections::BTreeMap<i64, f64>,
    emit: std::collections::BTreeMap<i64, f64>,
}

impl<'a> PvCache<'a> {
    fn new(bath: &'a BathSpec) -> Self {
        let support = bath.spectral.as_ref().and_then(|sd| sd.support());
        PvCache {
            bath,
            support,
            bosonic: bath.kind == BathKind::Boson,
            absorb: Default::default(),
            emit: Default::default(),
        }
    }

    fn available(&self) -> bool {
        self.support.is_some()
    }

    /// `(1/2pi) P int kernel(u) / (delta - u) du` over the (continued) support.
    fn lookup(&mut self, emit_kernel: bool, delta: f64) -> Result<f64> {
        let key = (delta * 1e10).round() as i64;
        if let Some(v) = if emit_kernel { self.emit.get(&key) } else { self.absorb.get(&key) } {
            return Ok(*v);
        }
        let (a, b) = self.support.expect("pv requires bounded support");
        let bath = self.bath;
        let kernel = move |u: f64| -> f64 {
            let (absorb, emit) = golden_rule_rates(bath, u).unwrap_or((0.0, 0.0));
            if emit_kernel { emit } else { absorb }
        };
        let mut v = quad::principal_value(kernel, delta, a, b, 1e-9, 1e-12)?;
        if self.bosonic {
            // odd-continued branch at negative frequencies
            v += quad::principal_value(kernel, delta, -b, -a, 1e-9, 1e-12)?;
        }
        v /= 2.0 * std::f64::consts::PI;
        if emit_kernel {
            self.emit.insert(key, v);
        } else {
            self.absorb.insert(key, v);
        }
        Ok(v)
    }
}

/// Global (secular) master equation: channels are eigenbasis transition
/// operators grouped by Bohr frequency, rates from the golden rule, and a
/// level-shift Hamiltonian on (near-)degenerate pairs when the spectral
/// density has bounded support.
pub fn build_gme(
    spec: &HamiltonianSpec,
    baths: &[BathSpec],
    secular_tol: Option<f64>,
) -> Result<GeneratorBundle> {
    let h = build_hamiltonian(spec)?;
    let dim = h.nrows();
    let (evals, v) = eigh(&h);
    let range = evals.last().unwrap() - evals.first().unwrap();
    let tol = secular_tol.unwrap_or(1e-9 * range.max(1e-30));

    // site occupations in the eigenbasis for particle counting weights
    let ntot = crate::model::total_charge(spec)?;
    let ntot = if spec.is_spin() {
        // sz sum -> excitation number (N + L)/2
        let l = spec.sites as f64;
        let mut m = scale(&ntot, C64::new(0.5, 0.0));
        for i in 0..dim {
            m[(i, i)] += C64::new(0.5 * l, 0.0);
        }
        m
    } else {
        ntot
    };
    let n_eig = v.adjoint() * &ntot * &v;
    let occ: Vec<f64> = (0..dim).map(|i| n_eig[(i, i)].re).collect();

    let mut dissipators = Vec::new();
    let mut lamb = CMat::zeros(dim, dim);
    for (nu, bath) in baths.iter().enumerate() {
        bath.validate()?;
        if bath.site == 0 || bath.site > spec.sites {
            return Err(Error::SiteOutOfRange { site: bath.site, len: spec.sites });
        }
        let a_site = contact_lowering(spec, bath.site)?;
        let a_eig = v.adjoint() * &a_site * &v;
        let clusters = bohr_clusters(&a_eig, &evals, Some(&occ), tol);

        let mut channels = Vec::new();
        for c in &clusters {
            let (absorb, emit) = golden_rule_rates(bath, c.omega)?;
            let op = &v * &c.op_eig * v.adjoint();
            // lowering component: system loses dn particles to the bath
            channels.push((emit, op.clone(), c.dn, Some(c.omega)));
            channels.push((absorb, dagger(&op), c.dn.map(|x| -x), Some(-c.omega)));
        }
        dissipators.push(canonical_dissipator(Some(nu), dim, channels));

        // Level shift on (near-)degenerate pairs, from the principal values of
        // the one-sided bath response; skipped for unbounded spectral support.
        let mut pv = PvCache::new(bath);
        if pv.available() {
            let mut lamb_eig = CMat::zeros(dim, dim);
            for a in 0..dim {
                for b in 0..dim {
                    if (evals[a] - evals[b]).abs() > tol {
                        continue;
                    }
                    let mut s = ZERO;
                    for c in 0..dim {
                        let down = a_eig[(a, c)] * a_eig[(b, c)].conj();
                        let up = a_eig[(c, a)].conj() * a_eig[(c, b)];
                        if down.norm() > 1e-14 {
                            // S+(delta) = (1/2pi) P int absorb(u)/(delta + u) du
                            let splus = pv.lookup(false, -(evals[a] - evals[c]))?;
                            s += down * (-splus);
                        }
                        if up.norm() > 1e-14 {
                            let sminus = pv.lookup(true, evals[a] - evals[c])?;
                            s += up * sminus;
                        }
                    }
                    lamb_eig[(a, b)] += s;
                }
            }
            lamb += &v * &lamb_eig * v.adjoint();
        }
    }
    let lamb = crate::linalg::hermitize(&lamb);
    Ok(GeneratorBundle {
        kind: GeneratorKind::Gme,
        h,
        lamb_shift: lamb,
        dissipators,
        baths: baths.to_vec(),
        model: Some(spec.clone()),
        tilt: None,
    })
}

/// Second-order non-secular generator with constant coefficients. The
/// one-sided bath response is split into its on-shell part (always kept) and
/// principal-value part (kept only when `include_principal_value` is set and
/// the spectral density has bounded support).
pub fn build_redfield(
    spec: &HamiltonianSpec,
    baths: &[BathSpec],
    include_principal_value: bool,
) -> Result<GeneratorBundle> {
    let h = build_hamiltonian(spec)?;
    let dim = h.nrows();
    let (evals, v) = eigh(&h);
    let range = evals.last().unwrap() - evals.first().unwrap();
    let tol = 1e-9 * range.max(1e-30);

    let mut dissipators = Vec::new();
    for (nu, bath) in baths.iter().enumerate() {
        bath.validate()?;
        if bath.site == 0 || bath.site > spec.sites {
            return Err(Error::SiteOutOfRange { site: bath.site, len: spec.sites });
        }
        if bath.kind == BathKind::Target {
            return Err(Error::Unsupported(
                "non-secular generators require thermal baths".into(),
            ));
        }
        let mut pv = PvCache::new(bath);
        if include_principal_value && !pv.available() {
            return Err(Error::Unsupported(
                "principal values are undefined for unbounded spectral support".into(),
            ));
        }
        let a_site = contact_lowering(spec, bath.site)?;
        let a_eig = v.adjoint() * &a_site * &v;
        let clusters = bohr_clusters(&a_eig, &evals, None, tol);
        let a_full = a_site.clone();
        let ad_full = dagger(&a_site);

        let mut terms = Vec::new();
        let mut drift_left = CMat::zeros(dim, dim);
        let mut drift_right = CMat::zeros(dim, dim);
        for c in &clusters {
            let omega = c.omega;
            let (absorb, emit) = golden_rule_rates(bath, omega)?;
            let a_comp = &v * &c.op_eig * v.adjoint();
            let ad_comp = dagger(&a_comp);
            let (pv_abs_neg, pv_emit_pos, pv_emit_neg, pv_abs_pos) = if include_principal_value {
                (
                    pv.lookup(false, -omega)?,
                    pv.lookup(true, omega)?,
                    pv.lookup(true, -omega)?,
                    pv.lookup(false, omega)?,
                )
            } else {
                (0.0, 0.0, 0.0, 0.0)
            };
            // one-sided kernels at this cluster frequency
            // W1(-w) acts on A(w)^dag, W2(w) on A(w), etc.
            let w1 = C64::new(0.5 * absorb, pv_abs_neg);
            let w2 = C64::new(0.5 * emit, pv_emit_pos);
            let w1bar = C64::new(0.5 * emit, pv_emit_neg);
            let w2bar = C64::new(0.5 * absorb, pv_abs_pos);

            // theta operators accumulate into the drifts
            let theta1 = scale(&ad_comp, w1);
            let theta2 = scale(&a_comp, w2);
            let theta1bar = scale(&ad_comp, w1bar);
            let theta2bar = scale(&a_comp, w2bar);
            drift_left -= &a_full * &theta1 + &ad_full * &theta2;
            drift_right -= &theta1bar * &a_full + &theta2bar * &ad_full;

            // sandwich terms, split by cluster so counting weights are sharp
            terms.push(JumpTerm {
                left: theta1,
                right: a_full.clone(),
                weight: ONE,
                particle: Some(-1.0),
                energy: Some(-omega),
                activity: None,
                canonical_rate: None,
            });
            terms.push(JumpTerm {
                left: ad_full.clone(),
                right: theta2bar,
                weight: ONE,
                particle: Some(-1.0),
                energy: Some(-omega),
                activity: None,
                canonical_rate: None,
            });
            terms.push(JumpTerm {
                left: theta2,
                right: ad_full.clone(),
                weight: ONE,
                particle: Some(1.0),
                energy: Some(omega),
                activity: None,
                canonical_rate: None,
            });
            terms.push(JumpTerm {
                left: a_full.clone(),
                right: theta1bar,
                weight: ONE,
                particle: Some(1.0),
                energy: Some(omega),
                activity: None,
                canonical_rate: None,
            });
        }
        dissipators.push(Dissipator { bath: Some(nu), terms, drift_left, drift_right });
    }
    Ok(GeneratorBundle {
        kind: GeneratorKind::Redfield,
        lamb_shift: CMat::zeros(dim, dim),
        h,
        dissipators,
        baths: baths.to_vec(),
        model: Some(spec.clone()),
        tilt: None,
    })
}

/// Append Hermitian dephasing channels `sqrt(Gamma) n_i` (particle chains) or
/// `sqrt(Gamma) sigma_z_i` (spin chains) on the given sites. Dephasing moves
/// no particles, so its counting weights vanish.
pub fn add_dephasing(bundle: &GeneratorBundle, gamma: f64, sites: &[usize]) -> Result<GeneratorBundle> {
    if gamma < 0.0 {
        return Err(Error::Domain("dephasing rate must be >= 0".into()));
    }
    let spec = bundle
        .model
        .as_ref()
        .ok_or_else(|| Error::Unsupported("dephasing needs the underlying chain model".into()))?;
    let mut out = bundle.clone();
    if gamma == 0.0 {
        return Ok(out);
    }
    let dim = bundle.dim();
    let mut channels = Vec::new();
    for &site in sites {
        let op = if spec.is_spin() {
            site_operator(spec, SiteOperatorKind::SigmaZ, site)?
        } else {
            site_operator(spec, SiteOperatorKind::Number, site)?
        };
        channels.push((gamma, op, Some(0.0), Some(0.0)));
    }
    out.dissipators.push(canonical_dissipator(None, dim, channels));
    Ok(out)
}

/// Expectation value `tr(op rho)`.
pub fn expectation(op: &CMat, rho: &CMat) -> C64 {
    let mut t = ZERO;
    for i in 0..op.nrows() {
        for k in 0..op.ncols() {
            t += op[(i, k)] * rho[(k, i)];
        }
    }
    t
}

/// Verify trace preservation of a bundle: `max |vec(1)^dag Lhat|`.
pub fn trace_defect(bundle: &GeneratorBundle) -> f64 {
    let d = bundle.dim();
    let sup = bundle.superoperator();
    // vec(1)^dag Lhat = column sums over diagonal positions
    let dense = sup.to_dense();
    let mut worst = 0.0f64;
    for col in 0..d * d {
        let mut s = ZERO;
        for i in 0..d {
            s += dense[(i * d + i, col)];
        }
        worst = worst.max(s.norm());
    }
    worst
}
