//! Density-matrix coefficient vectors `ρ({n_ij})` and standard initial states.
//!
//! Coefficients follow the expansion `ρ = Σ ρ({n}) Π (b†)^n / N! |0⟩⟩`, so
//! the trace is the plain sum over diagonal-only vectors and orthonormal
//! superket amplitudes are `ρ({n}) · sqrt(Π n! / N!)`.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::basis::{BasisSector, Count, Layout, SectorBuilder, SectorConstraint};
use crate::error::{Error, Result};
use crate::numeric::{ln_fact, ln_multinomial, KahanSum};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Tolerance for the support checks done by the constructors.
const FIT_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct DensityCoefficients {
    sector: Arc<BasisSector>,
    values: Vec<C64>,
    time: f64,
}

/// `sqrt(Π n_pq! / N!)` over the atomic counts: orthonormal amplitude per
/// unit coefficient.
pub fn normalization_factor(layout: Layout, counts: &[Count]) -> f64 {
    let atomic = &counts[..layout.atomic_width()];
    (-0.5 * ln_multinomial(atomic.iter().map(|&c| c as u64))).exp()
}

impl DensityCoefficients {
    pub fn from_values(sector: Arc<BasisSector>, values: Vec<C64>, time: f64) -> Self {
        assert_eq!(values.len(), sector.len(), "coefficient vector does not match sector");
        DensityCoefficients { sector, values, time }
    }

    pub fn zeros(sector: Arc<BasisSector>) -> Self {
        let n = sector.len();
        DensityCoefficients { sector, values: vec![ZERO; n], time: 0.0 }
    }

    pub fn from_fn(sector: Arc<BasisSector>, f: impl Fn(&[Count]) -> C64) -> Self {
        let values = sector.iter().map(f).collect();
        DensityCoefficients { sector, values, time: 0.0 }
    }

    pub fn sector(&self) -> &Arc<BasisSector> {
        &self.sector
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// Coefficient at `counts`, zero when the vector is not in the sector.
    pub fn get(&self, counts: &[Count]) -> C64 {
        self.sector.index_of(counts).map_or(ZERO, |k| self.values[k])
    }

    /// Complex trace: sum over trace vectors.
    pub fn trace_complex(&self) -> C64 {
        let layout = self.sector.layout();
        let mut re = KahanSum::default();
        let mut im = KahanSum::default();
        for (v, x) in self.sector.iter().zip(&self.values) {
            if layout.is_trace_vector(v) {
                re.add(x.re);
                im.add(x.im);
            }
        }
        C64::new(re.value(), im.value())
    }

    pub fn trace(&self) -> f64 {
        trace(self)
    }

    /// `max |ρ(n) − conj ρ(nᵀ)|`, or `None` when the sector is not closed
    /// under transposition.
    pub fn hermiticity_error(&self) -> Option<f64> {
        let map = self.sector.transpose_map()?;
        Some(
            self.values
                .iter()
                .zip(map)
                .map(|(x, &t)| (x - self.values[t as usize].conj()).norm())
                .fold(0.0, f64::max),
        )
    }

    /// `Tr ρ²` from orthonormal amplitudes (sum over this sector only).
    pub fn purity_in_sector(&self) -> f64 {
        let layout = self.sector.layout();
        self.sector
            .iter()
            .zip(&self.values)
            .filter(|(_, x)| **x != ZERO)
            .map(|(v, x)| x.norm_sqr() * normalization_factor(layout, v).powi(2))
            .collect::<KahanSum>()
            .value()
    }

    /// Orthonormal superket amplitudes.
    pub fn to_orthonormal(&self) -> Vec<C64> {
        let layout = self.sector.layout();
        self.sector
            .iter()
            .zip(&self.values)
            .map(|(v, x)| x * normalization_factor(layout, v))
            .collect()
    }

    pub fn from_orthonormal(sector: Arc<BasisSector>, amplitudes: &[C64], time: f64) -> Result<Self> {
        if amplitudes.len() != sector.len() {
            return Err(Error::DimensionMismatch { expected: sector.len(), found: amplitudes.len() });
        }
        let layout = sector.layout();
        let values = sector
            .iter()
            .zip(amplitudes)
            .map(|(v, a)| a / normalization_factor(layout, v))
            .collect();
        Ok(DensityCoefficients { sector, values, time })
    }

    pub fn max_abs_diff(&self, other: &DensityCoefficients) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Structured text snapshot; every nonzero entry on one line.
    pub fn to_snapshot(&self) -> String {
        let s = &self.sector;
        let mut out = String::new();
        let _ = writeln!(out, "# density coefficients");
        let _ = writeln!(out, "levels {}", s.levels());
        let _ = writeln!(out, "particles {}", s.particles());
        let _ = writeln!(out, "field {}", match s.field_cutoff() {
            Some(c) => c.to_string(),
            None => "none".into(),
        });
        let _ = writeln!(out, "time {:e}", self.time);
        for c in s.constraints() {
            let coefs: Vec<String> = c.coefficients().iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "constraint {} = {}", coefs.join(" "), c.target());
        }
        let nonzero = self.values.iter().filter(|x| **x != ZERO).count();
        let _ = writeln!(out, "entries {nonzero}");
        for (v, x) in s.iter().zip(&self.values) {
            if *x == ZERO {
                continue;
            }
            for c in v {
                let _ = write!(out, "{c} ");
            }
            let _ = writeln!(out, "{:e} {:e}", x.re, x.im);
        }
        out
    }

    /// Parses a snapshot, rebuilding its sector.
    pub fn from_snapshot(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let mut levels = None;
        let mut particles = None;
        let mut field: Option<Option<Count>> = None;
        let mut time = 0.0;
        let mut constraints = Vec::new();
        let mut entries: Vec<(usize, Vec<Count>, C64)> = Vec::new();
        let mut in_entries = false;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if in_entries {
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() < 3 {
                    return Err(parse_err(lineno, "short entry".into()));
                }
                let (counts, nums) = toks.split_at(toks.len() - 2);
                let counts = counts
                    .iter()
                    .map(|t| t.parse::<Count>().map_err(|e| parse_err(lineno, e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                let re: f64 = nums[0].parse().map_err(|e: std::num::ParseFloatError| parse_err(lineno, e.to_string()))?;
                let im: f64 = nums[1].parse().map_err(|e: std::num::ParseFloatError| parse_err(lineno, e.to_string()))?;
                entries.push((lineno, counts, C64::new(re, im)));
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            let rest = rest.trim();
            match key {
                "levels" => levels = Some(rest.parse::<usize>().map_err(|e| parse_err(lineno, e.to_string()))?),
                "particles" => particles = Some(rest.parse::<usize>().map_err(|e| parse_err(lineno, e.to_string()))?),
                "field" => {
                    field = Some(match rest {
                        "none" => None,
                        v => Some(v.parse::<Count>().map_err(|e| parse_err(lineno, e.to_string()))?),
                    })
                }
                "time" => time = rest.parse().map_err(|e: std::num::ParseFloatError| parse_err(lineno, e.to_string()))?,
                "constraint" => {
                    let (lhs, rhs) = rest.split_once('=').ok_or_else(|| parse_err(lineno, "missing '='".into()))?;
                    let coefs = lhs
                        .split_whitespace()
                        .map(|t| t.parse::<i64>().map_err(|e| parse_err(lineno, e.to_string())))
                        .collect::<Result<Vec<_>>>()?;
                    let target = rhs.trim().parse::<i64>().map_err(|e| parse_err(lineno, e.to_string()))?;
                    constraints.push(SectorConstraint::new(coefs, target));
                }
                "entries" => in_entries = true,
                other => return Err(parse_err(lineno, format!("unknown record '{other}'"))),
            }
        }
        let levels = levels.ok_or_else(|| parse_err(0, "missing levels".into()))?;
        let particles = particles.ok_or_else(|| parse_err(0, "missing particles".into()))?;
        let mut b = SectorBuilder::new(levels, particles).constraints(constraints);
        if let Some(Some(c)) = field {
            b = b.field_cutoff(c);
        }
        let sector = Arc::new(b.build()?);
        let mut values = vec![ZERO; sector.len()];
        for (lineno, counts, x) in entries {
            let k = sector
                .index_of(&counts)
                .ok_or_else(|| parse_err(lineno, format!("vector {counts:?} is not in the sector")))?;
            values[k] = x;
        }
        Ok(DensityCoefficients { sector, values, time })
    }
}

/// Real trace; a warning-level imaginary residue is left for the caller to
/// inspect through [`DensityCoefficients::trace_complex`].
pub fn trace(rho: &DensityCoefficients) -> f64 {
    rho.trace_complex().re
}

fn require_atomic(sector: &BasisSector, what: &str) -> Result<()> {
    if sector.layout().has_field() {
        return Err(Error::InvalidArgument(format!("{what} needs an atomic sector")));
    }
    Ok(())
}

fn check_fit(rho: &DensityCoefficients, expected_purity: f64, what: &str) -> Result<()> {
    let got = rho.purity_in_sector();
    if (got - expected_purity).abs() > FIT_TOL * expected_purity.max(1.0) {
        return Err(Error::SectorIncompatible(format!(
            "{what}: sector holds weight {got:.12} of {expected_purity:.12}"
        )));
    }
    Ok(())
}

/// `(Π_q c_q) ⊗ h.c.` on every particle:
/// `ρ({n}) = N! Π_pq (c_p c_q*)^{n_pq} / n_pq!`.
pub fn pure_uncorrelated(c: &[C64], sector: Arc<BasisSector>) -> Result<DensityCoefficients> {
    require_atomic(&sector, "pure_uncorrelated")?;
    let m = sector.levels();
    if c.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: c.len() });
    }
    let norm: f64 = c.iter().map(|x| x.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Normalization(format!("amplitudes have norm² {norm}")));
    }
    let layout = sector.layout();
    let n_fact = ln_fact(sector.particles() as u64);
    let rho = DensityCoefficients::from_fn(sector.clone(), |v| {
        let mut ln_mag = n_fact;
        let mut phase = 0.0;
        for p in 0..m {
            for q in 0..m {
                let n = v[layout.slot(p, q)];
                if n == 0 {
                    continue;
                }
                let z = c[p] * c[q].conj();
                if z == ZERO {
                    return ZERO;
                }
                ln_mag += n as f64 * z.norm().ln() - ln_fact(n as u64);
                phase += n as f64 * z.arg();
            }
        }
        C64::from_polar(ln_mag.exp(), phase)
    });
    check_fit(&rho, 1.0, "pure uncorrelated state")?;
    Ok(rho)
}

/// `(Σ_q p_q |q⟩⟨q|)^{⊗N}`: `ρ({n_qq}) = N! Π p_q^{n_qq} / n_qq!`.
pub fn mixed_uncorrelated(p: &[f64], sector: Arc<BasisSector>) -> Result<DensityCoefficients> {
    require_atomic(&sector, "mixed_uncorrelated")?;
    let m = sector.levels();
    if p.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: p.len() });
    }
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::Normalization("probabilities must lie in [0, 1]".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Normalization(format!("probabilities sum to {total}")));
    }
    let layout = sector.layout();
    let rho = DensityCoefficients::from_fn(sector.clone(), |v| {
        if !layout.is_atomic_diagonal(v) {
            return ZERO;
        }
        let mut ln_w = 0.0;
        for q in 0..m {
            let n = v[layout.slot(q, q)];
            if n > 0 {
                if p[q] == 0.0 {
                    return ZERO;
                }
                ln_w += n as f64 * p[q].ln();
            }
        }
        let diag = (0..m).map(|q| v[layout.slot(q, q)] as u64);
        C64::new((ln_multinomial(diag) + ln_w).exp(), 0.0)
    });
    // all entries are non-negative, so the trace detects missing support
    let tr = rho.trace();
    if (tr - 1.0).abs() > FIT_TOL {
        return Err(Error::SectorIncompatible(format!("mixed state: sector holds trace {tr}")));
    }
    Ok(rho)
}

/// Symmetric Dicke projector `|L⟩⟨L|` of two-level particles with `L`
/// excitations (level 1 excited).
pub fn dicke_state(excitations: usize, sector: Arc<BasisSector>) -> Result<DensityCoefficients> {
    require_atomic(&sector, "dicke_state")?;
    if sector.levels() != 2 {
        return Err(Error::InvalidArgument("Dicke states need two levels".into()));
    }
    let n = sector.particles();
    if excitations > n {
        return Err(Error::InvalidArgument(format!("excitation count {excitations} exceeds N = {n}")));
    }
    let l = excitations;
    let ln_num = ln_fact((n - l) as u64) + ln_fact(l as u64);
    let rho = DensityCoefficients::from_fn(sector.clone(), |v| {
        let (g, ge, eg, e) = (v[0] as usize, v[1], v[2], v[3] as usize);
        if ge != eg || e + ge as usize != l || g + ge as usize != n - l {
            return ZERO;
        }
        let den: f64 = v.iter().map(|&c| ln_fact(c as u64)).sum();
        C64::new((ln_num - den).exp(), 0.0)
    });
    check_fit(&rho, 1.0, "Dicke state")?;
    Ok(rho)
}

/// Antisymmetrized product of the distinct single-particle states `occupied`.
pub fn fermionic_determinant(occupied: &[usize], sector: Arc<BasisSector>) -> Result<DensityCoefficients> {
    require_atomic(&sector, "fermionic_determinant")?;
    let n = sector.particles();
    let m = sector.levels();
    if occupied.len() != n {
        return Err(Error::InvalidArgument(format!("{} states given for {n} particles", occupied.len())));
    }
    if let Some(&s) = occupied.iter().find(|&&s| s >= m) {
        return Err(Error::InvalidArgument(format!("level {s} out of range")));
    }
    let mut sorted = occupied.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("repeated single-particle state (Pauli exclusion)".into()));
    }
    let layout = sector.layout();
    let mut values = vec![ZERO; sector.len()];
    let mut perm: Vec<usize> = (0..n).collect();
    let mut counts = vec![0 as Count; layout.width()];
    let mut missing = false;
    for_each_permutation(&mut perm, 0, 1.0, &mut |perm, sign| {
        counts.fill(0);
        for (a, &b) in perm.iter().enumerate() {
            counts[layout.slot(occupied[a], occupied[b])] += 1;
        }
        match sector.index_of(&counts) {
            Some(k) => values[k] = C64::new(sign, 0.0),
            None => missing = true,
        }
    });
    if missing {
        return Err(Error::SectorIncompatible("determinant state has support outside the sector".into()));
    }
    Ok(DensityCoefficients::from_values(sector, values, 0.0))
}

fn for_each_permutation(perm: &mut Vec<usize>, k: usize, sign: f64, f: &mut impl FnMut(&[usize], f64)) {
    if k == perm.len() {
        f(perm, sign);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        for_each_permutation(perm, k + 1, if i == k { sign } else { -sign }, f);
        perm.swap(k, i);
    }
}
