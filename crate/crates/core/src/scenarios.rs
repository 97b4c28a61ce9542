//! Pre-wired models: collective emission of two-level atoms, the
//! incoherently pumped Λ-system, and the Tavis-Cummings model.
//!
//! Times are in units of `1/γ` (emission models) or `1/g` (Tavis-Cummings).

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::basis::{
    lambda_constraints, lambda_levels, two_level_emission_constraints, BasisSector, Count, SectorBuilder,
    SectorConstraint,
};
use crate::dynamics::{evolve_observe, spectrum, two_time_correlation, uniform_grid, IntegratorConfig, Spectrum};
use crate::error::{Error, Result};
use crate::numeric::{binomial_f64, ln_fact, KahanSum};
use crate::observables::{collective_intensity, emission_intensity, mean_photon_number, population, KBodySpec};
use crate::states::{mixed_uncorrelated, DensityCoefficients};
use crate::superops::{
    assemble, assemble_with, bosonize, build_standard_dissipator, collective_decay, hamiltonian_commutator, Envelope,
    FieldFactor, FieldTruncation, HamiltonianTerm, LiouvillianOperator, RateTensor, SigmaKind, SigmaTerm,
    SuperOpMonomial,
};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("{what} = {p} is outside [0, 1]")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Collective emission

/// Collective decay of two-level atoms written out term by term:
/// `γ{b†₀₀b₁₁ − ½Σ_t(n₁ₜ + nₜ₁)}` plus the two cooperative four-operator
/// sums. Level 0 is the ground state.
pub fn compact_monomials(gamma: f64) -> Vec<SuperOpMonomial> {
    let g = re(gamma);
    let h = re(-0.5 * gamma);
    let mut out = vec![SuperOpMonomial::bilinear(g, (0, 0), (1, 1))];
    for t in 0..2 {
        out.push(SuperOpMonomial::bilinear(h, (1, t), (1, t)));
        out.push(SuperOpMonomial::bilinear(h, (t, 1), (t, 1)));
    }
    for p in 0..2 {
        for q in 0..2 {
            out.push(SuperOpMonomial::new(h, vec![(0, q), (1, p)], vec![(0, p), (1, q)]));
            out.push(SuperOpMonomial::new(-h, vec![(0, q), (p, 0)], vec![(p, 1), (1, q)]));
            out.push(SuperOpMonomial::new(h, vec![(q, 0), (p, 1)], vec![(p, 0), (q, 1)]));
            out.push(SuperOpMonomial::new(-h, vec![(q, 0), (0, p)], vec![(1, p), (q, 1)]));
        }
    }
    crate::superops::simplify(out)
}

/// The coherence-balanced sector `n₀₁ = n₁₀` of `N` two-level atoms.
pub fn compact_sector(particles: usize) -> Result<Arc<BasisSector>> {
    Ok(Arc::new(SectorBuilder::new(2, particles).constraints(two_level_emission_constraints()).build()?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompactEmissionParams {
    pub particles: usize,
    /// Initial excited-state probability of every atom.
    pub p2: f64,
    pub t_max: f64,
    pub points: usize,
}

impl CompactEmissionParams {
    pub fn new(particles: usize, p2: f64, t_max: f64) -> Self {
        CompactEmissionParams { particles, p2, t_max, points: 201 }
    }

    fn validate(&self) -> Result<()> {
        check_probability(self.p2, "p2")?;
        if self.particles == 0 {
            return Err(Error::InvalidArgument("at least one atom is required".into()));
        }
        if !(self.t_max > 0.0) || self.points < 2 {
            return Err(Error::InvalidArgument("time grid needs t_max > 0 and at least two points".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CompactRun {
    pub sector_size: usize,
    pub times: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub intensity: Vec<f64>,
    /// Largest `|Tr ρ − 1|` along the trajectory.
    pub trace_error: f64,
    pub final_state: DensityCoefficients,
}

/// Assembled collective-decay Liouvillian and initial state.
pub fn compact_problem(params: &CompactEmissionParams) -> Result<(LiouvillianOperator, DensityCoefficients)> {
    params.validate()?;
    let sector = compact_sector(params.particles)?;
    let l = assemble(&compact_monomials(1.0), sector.clone())?;
    let rho0 = mixed_uncorrelated(&[1.0 - params.p2, params.p2], sector)?;
    Ok((l, rho0))
}

pub fn run_compact(params: &CompactEmissionParams, integrator: &IntegratorConfig) -> Result<CompactRun> {
    let (l, rho0) = compact_problem(params)?;
    let config = integrator.clone().with_grid(uniform_grid(0.0, params.t_max, params.points));
    let mut last = None;
    let rows = evolve_observe(&l, &rho0, &config, |rho| {
        keep_final(&mut last, rho, params.t_max);
        (rho.time(), population(0, rho), population(1, rho), emission_intensity(rho), (rho.trace() - 1.0).abs())
    })?;
    Ok(CompactRun {
        sector_size: l.dim(),
        times: rows.iter().map(|r| r.0).collect(),
        p1: rows.iter().map(|r| r.1).collect(),
        p2: rows.iter().map(|r| r.2).collect(),
        intensity: rows.iter().map(|r| r.3).collect(),
        trace_error: rows.iter().map(|r| r.4).fold(0.0, f64::max),
        final_state: last.expect("grid ends at t_max"),
    })
}

fn keep_final(slot: &mut Option<DensityCoefficients>, rho: &DensityCoefficients, t_max: f64) {
    if rho.time() == t_max {
        *slot = Some(rho.clone());
    }
}

/// Uniform `t` and `τ` domains plus frequencies for an emission spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumParams {
    pub t_max: f64,
    pub t_points: usize,
    pub tau_max: f64,
    pub tau_points: usize,
    pub omega: Vec<f64>,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams { t_max: 10.0, t_points: 201, tau_max: 10.0, tau_points: 201, omega: uniform_grid(-5.0, 5.0, 401) }
    }
}

/// `S(ω)` of the collective emission from `⟨J₊(t+τ) J₋(t)⟩`.
pub fn compact_spectrum(params: &CompactEmissionParams, sp: &SpectrumParams, integrator: &IntegratorConfig) -> Result<Spectrum> {
    let (l, rho0) = compact_problem(params)?;
    let jm = bosonize(2, &SigmaTerm::new(SigmaKind::Left(0, 1)));
    let x = two_time_correlation(
        &l,
        &rho0,
        &KBodySpec::collective(0, 1),
        &jm,
        &uniform_grid(0.0, sp.t_max, sp.t_points),
        &uniform_grid(0.0, sp.tau_max, sp.tau_points),
        integrator,
    )?;
    spectrum(&x, &sp.omega)
}

/// Long-time excited population
/// `Σ_{k=1}^{⌊N/2⌋} C_{k−1} (p₁p₂)^k (N − 2k + 1) / N` with Catalan `C_k`.
pub fn steady_state_population(particles: usize, p2: f64) -> f64 {
    if particles == 0 {
        return 0.0;
    }
    let x = (1.0 - p2) * p2;
    let n = particles as f64;
    let mut acc = KahanSum::default();
    for k in 1..=particles / 2 {
        let c = k - 1;
        let ln_catalan = ln_fact(2 * c as u64) - ln_fact(c as u64) - ln_fact(c as u64 + 1);
        let term = if x == 0.0 { 0.0 } else { (ln_catalan + k as f64 * x.ln()).exp() };
        acc.add(term * (n - 2.0 * k as f64 + 1.0) / n);
    }
    acc.value()
}

/// Closed-form steady state reached from the mixed state with excited
/// probability `p2`. Entries accumulate an alternating sum, so precision
/// degrades for large `N`; it is reliable to about 1e-10 up to `N ≈ 20`.
pub fn steady_state_matrix(particles: usize, p2: f64) -> Result<DensityCoefficients> {
    check_probability(p2, "p2")?;
    let sector = compact_sector(particles)?;
    let x = (1.0 - p2) * p2;
    let n = particles;
    let half = n / 2;
    Ok(DensityCoefficients::from_fn(sector, |v| {
        let (g, l, e) = (v[0] as i64, v[1] as i64, v[3] as i64);
        let lead = (g - e + 1) as f64;
        if lead == 0.0 {
            return ZERO;
        }
        let ln_pref = ln_fact(n as u64) - ln_fact(e as u64) - ln_fact((g + l + 1) as u64) - ln_fact(l as u64);
        let mut acc = KahanSum::default();
        for k in (e + l)..=(half as i64) {
            let b = binomial_f64(g + l - k, k - e - l);
            if b == 0.0 {
                continue;
            }
            let xk = if k == 0 { 1.0 } else if x == 0.0 { 0.0 } else { (k as f64 * x.ln()).exp() };
            let sign = if (k + e) % 2 == 0 { 1.0 } else { -1.0 };
            acc.add(sign * xk * b * ln_pref.exp());
        }
        re(lead * acc.value())
    }))
}

// ---------------------------------------------------------------------------
// Λ-system

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaParams {
    pub particles: usize,
    /// Auger rate `2 -> ion`, units of `γ`.
    pub auger: f64,
    /// Pump area `I_p`, center `t₀` and width `τ_p`.
    pub pump_area: f64,
    pub pump_center: f64,
    pub pump_width: f64,
    pub t_max: f64,
    pub points: usize,
}

impl LambdaParams {
    /// Pump pulse of area 10 centred at `2/γ` with width `0.5/γ`.
    pub fn standard(particles: usize, auger: f64) -> Self {
        LambdaParams { particles, auger, pump_area: 10.0, pump_center: 2.0, pump_width: 0.5, t_max: 10.0, points: 201 }
    }

    fn validate(&self) -> Result<()> {
        if self.auger < 0.0 || self.pump_area < 0.0 {
            return Err(Error::InvalidArgument("rates must be non-negative".into()));
        }
        if !(self.pump_width > 0.0) {
            return Err(Error::InvalidArgument("pump width must be positive".into()));
        }
        if !(self.t_max > 0.0) || self.points < 2 {
            return Err(Error::InvalidArgument("time grid needs t_max > 0 and at least two points".into()));
        }
        Ok(())
    }

    pub fn envelope(&self) -> Envelope {
        Envelope::Gaussian { area: self.pump_area, center: self.pump_center, width: self.pump_width }
    }
}

#[derive(Clone, Debug)]
pub struct LambdaRun {
    pub sector_size: usize,
    pub times: Vec<f64>,
    /// Populations of neutral, ground, excited and ionized levels.
    pub populations: [Vec<f64>; 4],
    pub intensity: Vec<f64>,
    /// Running time integral of the intensity.
    pub photons: Vec<f64>,
    pub trace_error: f64,
    pub final_state: DensityCoefficients,
}

impl LambdaRun {
    pub fn total_photons(&self) -> f64 {
        self.photons.last().copied().unwrap_or(0.0)
    }
}

/// Pump `0 -> 2` under `κ(t)`, Auger decay `2 -> ion`, collective decay `2 -> 1`.
pub fn lambda_monomials(params: &LambdaParams) -> Result<Vec<SuperOpMonomial>> {
    use lambda_levels::*;
    let mut out: Vec<SuperOpMonomial> = build_standard_dissipator(&RateTensor::new(4).transfer(NEUTRAL, EXCITED, 1.0))?
        .into_iter()
        .map(|m| m.with_envelope(params.envelope()))
        .collect();
    if params.auger > 0.0 {
        out.extend(build_standard_dissipator(&RateTensor::new(4).transfer(EXCITED, ION, params.auger))?);
    }
    out.extend(collective_decay(4, GROUND, EXCITED, 1.0));
    Ok(out)
}

pub fn lambda_sector(particles: usize, auger: bool) -> Result<Arc<BasisSector>> {
    Ok(Arc::new(SectorBuilder::new(4, particles).constraints(lambda_constraints(auger)).build()?))
}

pub fn lambda_problem(params: &LambdaParams) -> Result<(LiouvillianOperator, DensityCoefficients)> {
    params.validate()?;
    let sector = lambda_sector(params.particles, params.auger > 0.0)?;
    let l = assemble(&lambda_monomials(params)?, sector.clone())?;
    let rho0 = mixed_uncorrelated(&[1.0, 0.0, 0.0, 0.0], sector)?;
    Ok((l, rho0))
}

pub fn run_lambda(params: &LambdaParams, integrator: &IntegratorConfig) -> Result<LambdaRun> {
    use lambda_levels::*;
    let (l, rho0) = lambda_problem(params)?;
    let config = integrator.clone().with_grid(uniform_grid(0.0, params.t_max, params.points));
    let mut last = None;
    let rows = evolve_observe(&l, &rho0, &config, |rho| {
        keep_final(&mut last, rho, params.t_max);
        let pops = [population(NEUTRAL, rho), population(GROUND, rho), population(EXCITED, rho), population(ION, rho)];
        (rho.time(), pops, collective_intensity(rho, GROUND, EXCITED), (rho.trace() - 1.0).abs())
    })?;
    let times: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let intensity: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let mut photons = vec![0.0; times.len()];
    for k in 1..times.len() {
        photons[k] = photons[k - 1] + 0.5 * (times[k] - times[k - 1]) * (intensity[k] + intensity[k - 1]);
    }
    let populations = std::array::from_fn(|i| rows.iter().map(|r| r.1[i]).collect());
    Ok(LambdaRun {
        sector_size: l.dim(),
        times,
        populations,
        intensity,
        photons,
        trace_error: rows.iter().map(|r| r.3).fold(0.0, f64::max),
        final_state: last.expect("grid ends at t_max"),
    })
}

// ---------------------------------------------------------------------------
// Tavis-Cummings

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldState {
    Vacuum,
    Fock(usize),
    /// Coherent state with the given mean photon number (real amplitude).
    Coherent(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TavisCummingsParams {
    pub particles: usize,
    pub p2: f64,
    pub field: FieldState,
    /// Photon cutoff; `None` picks the smallest safe value.
    pub n_max: Option<usize>,
    pub t_max: f64,
    pub points: usize,
}

/// Largest discarded Poisson tail mass tolerated by [`coherent_cut`].
pub const COHERENT_TAIL: f64 = 1e-10;

fn poisson_ln_pmf(mean: f64, n: usize) -> f64 {
    -mean + n as f64 * mean.ln() - ln_fact(n as u64)
}

/// Poisson mass strictly above `cut`.
pub fn coherent_tail_mass(mean: f64, cut: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let mut acc = KahanSum::default();
    let mut n = cut + 1;
    loop {
        let p = poisson_ln_pmf(mean, n).exp();
        acc.add(p);
        if n as f64 > mean && p < 1e-20 * acc.value().max(1e-300) {
            break;
        }
        if p == 0.0 && n as f64 > mean {
            break;
        }
        n += 1;
    }
    acc.value()
}

/// Photon numbers above which the coherent amplitudes are dropped:
/// `⌈mean + 8√mean⌉`, raised until the discarded mass is below [`COHERENT_TAIL`].
pub fn coherent_cut(mean: f64) -> usize {
    let mut cut = (mean + 8.0 * mean.sqrt()).ceil() as usize;
    while coherent_tail_mass(mean, cut) >= COHERENT_TAIL {
        cut += 1;
    }
    cut
}

impl TavisCummingsParams {
    pub fn new(particles: usize, p2: f64, field: FieldState, t_max: f64) -> Self {
        TavisCummingsParams { particles, p2, field, n_max: None, t_max, points: 201 }
    }

    fn field_support(&self) -> usize {
        match self.field {
            FieldState::Vacuum => 0,
            FieldState::Fock(n) => n,
            FieldState::Coherent(mean) => coherent_cut(mean),
        }
    }

    /// Cutoff honouring the conserved excitation number of every sector.
    pub fn required_cutoff(&self) -> usize {
        self.field_support() + self.particles
    }

    pub fn cutoff(&self) -> usize {
        self.n_max.unwrap_or_else(|| self.required_cutoff())
    }

    fn validate(&self) -> Result<()> {
        check_probability(self.p2, "p2")?;
        if self.particles == 0 {
            return Err(Error::InvalidArgument("at least one atom is required".into()));
        }
        if let FieldState::Coherent(m) = self.field {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::InvalidArgument("coherent mean must be non-negative".into()));
            }
        }
        if self.cutoff() < self.required_cutoff() {
            return Err(Error::InvalidArgument(format!(
                "n_max = {} is below the required {}",
                self.cutoff(),
                self.required_cutoff()
            )));
        }
        if self.cutoff() > Count::MAX as usize {
            return Err(Error::InvalidArgument("photon cutoff too large".into()));
        }
        if !(self.t_max > 0.0) || self.points < 2 {
            return Err(Error::InvalidArgument("time grid needs t_max > 0 and at least two points".into()));
        }
        Ok(())
    }
}

/// Single-mode field density matrix on `0..=cut` and its renormalization
/// factor (the trace before rescaling).
pub fn field_density(state: FieldState, cut: usize) -> (Vec<Vec<f64>>, f64) {
    let amps: Vec<f64> = match state {
        FieldState::Vacuum => (0..=cut).map(|n| if n == 0 { 1.0 } else { 0.0 }).collect(),
        FieldState::Fock(k) => (0..=cut).map(|n| if n == k { 1.0 } else { 0.0 }).collect(),
        FieldState::Coherent(mean) => (0..=cut)
            .map(|n| {
                if mean == 0.0 {
                    return if n == 0 { 1.0 } else { 0.0 };
                }
                (0.5 * poisson_ln_pmf(mean, n)).exp()
            })
            .collect(),
    };
    let norm: f64 = amps.iter().map(|a| a * a).sum();
    let rho = amps.iter().map(|a| amps.iter().map(|b| a * b / norm).collect()).collect();
    (rho, norm)
}

/// `V = g (J₊ a + a† J₋)` with level 1 excited.
pub fn tavis_cummings_monomials(g: f64) -> Vec<SuperOpMonomial> {
    hamiltonian_commutator(
        2,
        &[
            HamiltonianTerm { coefficient: re(g), sigma: (1, 0), field: Some(FieldFactor::Annihilate) },
            HamiltonianTerm { coefficient: re(g), sigma: (0, 1), field: Some(FieldFactor::Create) },
        ],
    )
}

/// `K₁ = (n₁₁ − n₀₀) + (n_R + n_L)`; stored as coefficients over the composite layout.
pub fn tcm_k1(target: i64) -> SectorConstraint {
    SectorConstraint::new(vec![-1, 0, 0, 1, 1, 1], target)
}

/// `K₂ = (n₀₁ − n₁₀) + (n_R − n_L)`.
pub fn tcm_k2(target: i64) -> SectorConstraint {
    SectorConstraint::new(vec![0, 1, -1, 0, -1, 1], target)
}

pub fn tcm_quantities(v: &[Count]) -> (i64, i64) {
    let c = |i: usize| v[i] as i64;
    (c(3) - c(0) + c(4) + c(5), c(1) - c(2) + c(5) - c(4))
}

/// One conserved-quantity sector of the composite problem.
#[derive(Clone, Debug)]
pub struct TcmSector {
    pub k1: i64,
    pub k2: i64,
    pub liouvillian: LiouvillianOperator,
    pub initial: DensityCoefficients,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcmRun {
    pub n_max: usize,
    /// Trace of the truncated initial field before renormalization.
    pub field_norm: f64,
    pub sectors: usize,
    pub basis_size: usize,
    pub times: Vec<f64>,
    pub p2: Vec<f64>,
    pub photons: Vec<f64>,
    /// `⟨a†a⟩ + N p₂`.
    pub excitations: Vec<f64>,
    /// Sector-weighted sums `Σ_s K_s · Tr_s ρ`.
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub trace: Vec<f64>,
    /// Largest drift of any single sector's trace along its trajectory.
    pub sector_drift: f64,
}

/// Splits the product initial state into conserved-quantity sectors.
pub fn tcm_sectors(params: &TavisCummingsParams) -> Result<(Vec<TcmSector>, f64)> {
    params.validate()?;
    let n = params.particles;
    let cut = params.field_support();
    let n_max = params.cutoff();
    let (field, norm) = field_density(params.field, cut);
    let p = [1.0 - params.p2, params.p2];
    let mut keys: BTreeMap<(i64, i64), ()> = BTreeMap::new();
    for e in 0..=n {
        if (e > 0 && p[1] == 0.0) || (e < n && p[0] == 0.0) {
            continue;
        }
        for (nl, row) in field.iter().enumerate() {
            for (nr, &f) in row.iter().enumerate() {
                if f != 0.0 {
                    keys.insert((2 * e as i64 - n as i64 + (nl + nr) as i64, nr as i64 - nl as i64), ());
                }
            }
        }
    }
    let monomials = tavis_cummings_monomials(1.0);
    let sectors = keys
        .into_keys()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(k1, k2)| {
            let sector = Arc::new(
                SectorBuilder::new(2, n)
                    .field_cutoff(n_max as Count)
                    .constraint(tcm_k1(k1))
                    .constraint(tcm_k2(k2))
                    .build()?,
            );
            let atoms = mixed_uncorrelated(&p, Arc::new(SectorBuilder::new(2, n).build()?))?;
            let initial = DensityCoefficients::from_fn(sector.clone(), |v| {
                let (l, r) = (v[4] as usize, v[5] as usize);
                if l > cut || r > cut {
                    return ZERO;
                }
                atoms.get(&v[..4]) * field[l][r]
            });
            let liouvillian = assemble(&monomials, sector)?;
            Ok(TcmSector { k1, k2, liouvillian, initial })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((sectors, norm))
}

/// Single sector covering every vector up to the cutoff; transitions past
/// the cutoff are dropped.
pub fn tcm_monolithic(params: &TavisCummingsParams) -> Result<(LiouvillianOperator, DensityCoefficients)> {
    params.validate()?;
    let n = params.particles;
    let cut = params.field_support();
    let (field, _) = field_density(params.field, cut);
    let sector = Arc::new(SectorBuilder::new(2, n).field_cutoff(params.cutoff() as Count).build()?);
    let atoms = mixed_uncorrelated(&[1.0 - params.p2, params.p2], Arc::new(SectorBuilder::new(2, n).build()?))?;
    let rho = DensityCoefficients::from_fn(sector.clone(), |v| {
        let (l, r) = (v[4] as usize, v[5] as usize);
        if l > cut || r > cut {
            return ZERO;
        }
        atoms.get(&v[..4]) * field[l][r]
    });
    let l = assemble_with(&tavis_cummings_monomials(1.0), sector, FieldTruncation::Drop)?;
    Ok((l, rho))
}

#[derive(Clone, Copy, Debug, Default)]
struct TcmSample {
    p2: f64,
    photons: f64,
    trace: f64,
}

pub fn run_tavis_cummings(params: &TavisCummingsParams, integrator: &IntegratorConfig) -> Result<TcmRun> {
    let (sectors, field_norm) = tcm_sectors(params)?;
    let n = params.particles as f64;
    let config = integrator.clone().with_grid(uniform_grid(0.0, params.t_max, params.points));
    let runs: Vec<Vec<TcmSample>> = sectors
        .par_iter()
        .map(|s| {
            evolve_observe(&s.liouvillian, &s.initial, &config, |rho| TcmSample {
                p2: population(1, rho),
                photons: mean_photon_number(rho).unwrap_or(0.0),
                trace: rho.trace(),
            })
        })
        .collect::<Result<_>>()?;
    let points = config.output_grid.len();
    let mut out = TcmRun {
        n_max: params.cutoff(),
        field_norm,
        sectors: sectors.len(),
        basis_size: sectors.iter().map(|s| s.liouvillian.dim()).sum(),
        times: config.output_grid.clone(),
        p2: vec![0.0; points],
        photons: vec![0.0; points],
        excitations: vec![0.0; points],
        k1: vec![0.0; points],
        k2: vec![0.0; points],
        trace: vec![0.0; points],
        sector_drift: 0.0,
    };
    for (s, run) in sectors.iter().zip(&runs) {
        let t0 = run[0].trace;
        for (k, sample) in run.iter().enumerate() {
            out.p2[k] += sample.p2;
            out.photons[k] += sample.photons;
            out.trace[k] += sample.trace;
            out.k1[k] += s.k1 as f64 * sample.trace;
            out.k2[k] += s.k2 as f64 * sample.trace;
            out.sector_drift = out.sector_drift.max((sample.trace - t0).abs());
        }
    }
    for k in 0..points {
        out.excitations[k] = out.photons[k] + n * out.p2[k];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn compact_forms_agree() {
        let sector = compact_sector(6).unwrap();
        let a = assemble(&compact_monomials(1.0), sector.clone()).unwrap().matrix_at(0.0);
        let b = assemble(&collective_decay(2, 0, 1, 1.0), sector).unwrap().matrix_at(0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn catalan_population() {
        assert_eq!(steady_state_population(1, 0.7), 0.0);
        assert_relative_eq!(steady_state_population(2, 0.5), 0.125, epsilon = 1e-15);
        // N = 4: C0 x (3/4) + C1 x² (1/4)
        let x: f64 = 0.16;
        assert_relative_eq!(steady_state_population(4, 0.2), 0.75 * x + 0.25 * x * x, epsilon = 1e-15);
    }

    #[test]
    fn steady_state_pair() {
        let rho = steady_state_matrix(2, 0.5).unwrap();
        assert_relative_eq!(rho.get(&[2, 0, 0, 0]).re, 0.75, epsilon = 1e-14);
        assert_relative_eq!(rho.get(&[1, 0, 0, 1]).re, 0.25, epsilon = 1e-14);
        assert_eq!(rho.get(&[0, 0, 0, 2]).re, 0.0);
        assert_relative_eq!(rho.get(&[0, 1, 1, 0]).re, -0.25, epsilon = 1e-14);
        assert_relative_eq!(population(1, &rho), 0.125, epsilon = 1e-14);
        let ground = steady_state_matrix(5, 0.0).unwrap();
        assert_relative_eq!(ground.get(&[5, 0, 0, 0]).re, 1.0, epsilon = 1e-14);
        assert_eq!(ground.values().iter().filter(|x| x.norm() > 1e-14).count(), 1);
    }

    #[test]
    fn steady_state_trace_and_population() {
        for n in 1..=12 {
            for p in [0.2, 0.5, 0.8] {
                let rho = steady_state_matrix(n, p).unwrap();
                assert_relative_eq!(rho.trace(), 1.0, epsilon = 1e-10);
                assert_relative_eq!(population(1, &rho), steady_state_population(n, p), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn lambda_sizes_match_formula() {
        for n in [1, 2, 5, 9] {
            for auger in [false, true] {
                let s = lambda_sector(n, auger).unwrap();
                let f = crate::basis::sector_size_formula(4, n, &lambda_constraints(auger)).unwrap();
                assert_eq!(s.len() as u128, f);
            }
        }
    }

    #[test]
    fn lambda_assembles_without_violations() {
        let p = LambdaParams::standard(4, 5.0);
        let (l, rho) = lambda_problem(&p).unwrap();
        assert!(l.is_time_dependent());
        assert_eq!(rho.trace(), 1.0);
    }

    #[test]
    fn coherent_field_renormalized() {
        let (rho, norm) = field_density(FieldState::Coherent(4.0), coherent_cut(4.0));
        let tr: f64 = (0..rho.len()).map(|n| rho[n][n]).sum();
        assert_relative_eq!(tr, 1.0, epsilon = 1e-14);
        assert!(1.0 - norm < COHERENT_TAIL);
        assert!(coherent_cut(4.0) > 20);
        assert_eq!(coherent_cut(0.0), 0);
    }

    #[test]
    fn tcm_sector_keys() {
        let p = TavisCummingsParams::new(3, 0.5, FieldState::Fock(2), 1.0);
        let (sectors, _) = tcm_sectors(&p).unwrap();
        assert_eq!(sectors.len(), 4);
        for s in &sectors {
            assert_eq!(s.k2, 0);
            for v in s.liouvillian.sector().iter() {
                assert_eq!(tcm_quantities(v), (s.k1, s.k2));
            }
        }
        let tr: f64 = sectors.iter().map(|s| s.initial.trace()).sum();
        assert_relative_eq!(tr, 1.0, epsilon = 1e-14);
    }
}
