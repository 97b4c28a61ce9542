//! Permutation-invariant operators as occupation-number coefficient vectors.
//!
//! An operator `O = Σ O⁽ᴷ⁾ Σ_{μ₁≠…≠μ_K} σ_{μ₁,i₁j₁} ⋯ σ_{μ_K,i_Kj_K}` is
//! mapped to `O({n})`, the mixed derivatives of `F({λ}) = Π λ_pq^{n_pq}` at
//! `λ_pq = δ_pq`. Expectation values are then the transposed pairing
//! `⟨O⟩ = Σ_n O({n_ij}) ρ({n_ji})`.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::basis::{BasisSector, Count};
use crate::error::{Error, Result};
use crate::numeric::{factorial_u64, falling_factorial, KahanSum};
use crate::states::{normalization_factor, DensityCoefficients};
use crate::superops::Pair;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Debug)]
pub struct OperatorCoefficients {
    sector: Arc<BasisSector>,
    values: Vec<C64>,
}

impl OperatorCoefficients {
    pub fn from_values(sector: Arc<BasisSector>, values: Vec<C64>) -> Self {
        assert_eq!(values.len(), sector.len(), "coefficient vector does not match sector");
        OperatorCoefficients { sector, values }
    }

    pub fn from_fn(sector: Arc<BasisSector>, f: impl Fn(&[Count]) -> C64) -> Self {
        let values = sector.iter().map(f).collect();
        OperatorCoefficients { sector, values }
    }

    pub fn sector(&self) -> &Arc<BasisSector> {
        &self.sector
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn get(&self, counts: &[Count]) -> C64 {
        self.sector.index_of(counts).map_or(ZERO, |k| self.values[k])
    }

    /// Operator amplitudes in the orthonormal superket basis.
    pub fn to_orthonormal(&self) -> Vec<C64> {
        let layout = self.sector.layout();
        self.sector
            .iter()
            .zip(&self.values)
            .map(|(v, x)| x / normalization_factor(layout, v))
            .collect()
    }

    pub fn max_abs_diff(&self, other: &OperatorCoefficients) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// K-body operator: list of `(i₁j₁, …, i_Kj_K) -> O⁽ᴷ⁾` terms.
#[derive(Clone, Debug, PartialEq)]
pub struct KBodySpec {
    order: usize,
    terms: Vec<(Vec<Pair>, C64)>,
}

impl KBodySpec {
    pub fn new(order: usize) -> Self {
        KBodySpec { order, terms: Vec::new() }
    }

    /// The identity (`K = 0`).
    pub fn identity() -> Self {
        KBodySpec { order: 0, terms: vec![(Vec::new(), ONE)] }
    }

    pub fn term(mut self, indices: Vec<Pair>, value: C64) -> Result<Self> {
        if indices.len() != self.order {
            return Err(Error::InvalidArgument(format!(
                "term has {} index pairs, expected {}",
                indices.len(),
                self.order
            )));
        }
        self.terms.push((indices, value));
        Ok(self)
    }

    /// Collective one-body operator `J_pq = Σ_μ σ_μ,pq`.
    pub fn collective(p: usize, q: usize) -> Self {
        KBodySpec { order: 1, terms: vec![(vec![(p, q)], ONE)] }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn terms(&self) -> &[(Vec<Pair>, C64)] {
        &self.terms
    }

    /// Hermitian conjugate: index pairs transposed, values conjugated.
    pub fn dagger(&self) -> Self {
        KBodySpec {
            order: self.order,
            terms: self
                .terms
                .iter()
                .map(|(idx, v)| (idx.iter().rev().map(|&(i, j)| (j, i)).collect(), v.conj()))
                .collect(),
        }
    }
}

/// `∂^K F / ∂λ_{i₁j₁}⋯∂λ_{i_Kj_K}` at `λ = δ`, for one multi-index.
fn derivative_at_identity(sector: &BasisSector, indices: &[Pair], v: &[Count], mult: &mut [u64]) -> f64 {
    let layout = sector.layout();
    mult.fill(0);
    for &(i, j) in indices {
        mult[layout.slot(i, j)] += 1;
    }
    let m = layout.levels();
    let mut w = 1.0;
    for p in 0..m {
        for q in 0..m {
            let s = layout.slot(p, q);
            let (n, k) = (v[s] as u64, mult[s]);
            if p == q {
                if k > n {
                    return 0.0;
                }
                w *= falling_factorial(n, k);
            } else if n != k {
                return 0.0;
            } else if k > 1 {
                w *= factorial_u64(k).map_or_else(|| crate::numeric::ln_fact(k).exp(), |f| f as f64);
            }
        }
    }
    w
}

/// Coefficients `O({n})` of a K-body operator on `sector`. For composite
/// sectors the operator acts as identity on the field.
pub fn operator_to_coefficients(spec: &KBodySpec, sector: Arc<BasisSector>) -> Result<OperatorCoefficients> {
    let n = sector.particles();
    if spec.order > n {
        return Err(Error::OrderTooLarge { order: spec.order, particles: n });
    }
    let layout = sector.layout();
    let m = layout.levels();
    for (idx, _) in &spec.terms {
        if let Some(&(i, j)) = idx.iter().find(|&&(i, j)| i >= m || j >= m) {
            return Err(Error::InvalidArgument(format!("index ({i},{j}) out of range for {m} levels")));
        }
    }
    let mut mult = vec![0u64; layout.atomic_width()];
    let values = sector
        .iter()
        .map(|v| {
            if let (Some(l), Some(r)) = (layout.field_left(), layout.field_right()) {
                if v[l] != v[r] {
                    return ZERO;
                }
            }
            let mut acc = ZERO;
            for (idx, c) in &spec.terms {
                let d = derivative_at_identity(&sector, idx, v, &mut mult);
                if d != 0.0 {
                    acc += c * d;
                }
            }
            acc
        })
        .collect();
    Ok(OperatorCoefficients { sector, values })
}

/// `P(O, ρ) = Σ_n O({n}) ρ({nᵀ})`. The operator lives on the transposed
/// sector of `ρ` (the same sector when it is closed under transposition).
pub fn expectation(op: &OperatorCoefficients, rho: &DensityCoefficients) -> Result<C64> {
    let (os, rs) = (op.sector(), rho.sector());
    if os.layout() != rs.layout() || os.particles() != rs.particles() || os.field_cutoff() != rs.field_cutoff() {
        return Err(Error::SectorIncompatible("operator and state sectors differ in shape".into()));
    }
    let mut re = KahanSum::default();
    let mut im = KahanSum::default();
    let mut push = |z: C64| {
        re.add(z.re);
        im.add(z.im);
    };
    if Arc::ptr_eq(os, rs) {
        if let Some(map) = rs.transpose_map() {
            for (o, &t) in op.values().iter().zip(map) {
                if *o != ZERO {
                    push(o * rho.values()[t as usize]);
                }
            }
            return Ok(C64::new(re.value(), im.value()));
        }
    }
    let layout = rs.layout();
    let mut buf = vec![0; layout.width()];
    for (v, o) in os.iter().zip(op.values()) {
        if *o == ZERO {
            continue;
        }
        layout.transpose_into(v, &mut buf);
        if let Some(k) = rs.index_of(&buf) {
            push(o * rho.values()[k]);
        }
    }
    Ok(C64::new(re.value(), im.value()))
}

/// Precomputed index map for repeated pairings between two fixed sectors.
pub struct Pairing {
    op_sector: Arc<BasisSector>,
    rho_sector: Arc<BasisSector>,
    map: Vec<Option<u32>>,
}

impl Pairing {
    pub fn new(op_sector: Arc<BasisSector>, rho_sector: Arc<BasisSector>) -> Result<Self> {
        let (os, rs) = (&op_sector, &rho_sector);
        if os.layout() != rs.layout() || os.particles() != rs.particles() || os.field_cutoff() != rs.field_cutoff() {
            return Err(Error::SectorIncompatible("operator and state sectors differ in shape".into()));
        }
        let layout = rs.layout();
        let mut buf = vec![0; layout.width()];
        let map = os
            .iter()
            .map(|v| {
                layout.transpose_into(v, &mut buf);
                rs.index_of(&buf).map(|k| k as u32)
            })
            .collect();
        Ok(Pairing { op_sector, rho_sector, map })
    }

    /// Same value as [`expectation`].
    pub fn apply(&self, op: &OperatorCoefficients, rho: &DensityCoefficients) -> Result<C64> {
        if !Arc::ptr_eq(op.sector(), &self.op_sector) || !Arc::ptr_eq(rho.sector(), &self.rho_sector) {
            return Err(Error::SectorIncompatible("pairing built for other sectors".into()));
        }
        let mut re = KahanSum::default();
        let mut im = KahanSum::default();
        for (o, k) in op.values().iter().zip(&self.map) {
            if let (Some(k), true) = (k, *o != ZERO) {
                let z = o * rho.values()[*k as usize];
                re.add(z.re);
                im.add(z.im);
            }
        }
        Ok(C64::new(re.value(), im.value()))
    }
}

/// Sector holding the operators paired with states on `sector`.
pub fn pairing_sector(sector: &Arc<BasisSector>) -> Result<Arc<BasisSector>> {
    if sector.transpose_map().is_some() {
        Ok(sector.clone())
    } else {
        Ok(Arc::new(sector.transposed()?))
    }
}

/// `⟨O⟩` for a K-body operator, building its coefficients on demand.
pub fn expectation_of(spec: &KBodySpec, rho: &DensityCoefficients) -> Result<C64> {
    let sector = pairing_sector(rho.sector())?;
    expectation(&operator_to_coefficients(spec, sector)?, rho)
}

/// Probability of finding a particle in level `q`.
pub fn population(q: usize, rho: &DensityCoefficients) -> f64 {
    let sector = rho.sector();
    let layout = sector.layout();
    let n = sector.particles();
    if n == 0 {
        return 0.0;
    }
    let s = layout.slot(q, q);
    let sum: KahanSum = sector
        .iter()
        .zip(rho.values())
        .filter(|(v, _)| layout.is_trace_vector(v))
        .map(|(v, x)| v[s] as f64 * x.re)
        .collect();
    sum.value() / n as f64
}

/// `⟨J_ul J_lu⟩` for the collective transition `upper -> lower`, evaluated
/// directly: `N p_u` plus the pair-coherence sum over vectors with exactly
/// one particle in each of `|u⟩⟨l|` and `|l⟩⟨u|`.
pub fn collective_intensity(rho: &DensityCoefficients, lower: usize, upper: usize) -> f64 {
    let sector = rho.sector();
    let layout = sector.layout();
    let n = sector.particles() as f64;
    let ul = layout.slot(upper, lower);
    let lu = layout.slot(lower, upper);
    let m = layout.levels();
    let mut coherence = KahanSum::default();
    for (v, x) in sector.iter().zip(rho.values()) {
        if v[ul] != 1 || v[lu] != 1 {
            continue;
        }
        let others_empty = (0..m).all(|p| {
            (0..m).all(|q| {
                let s = layout.slot(p, q);
                p == q || s == ul || s == lu || v[s] == 0
            })
        });
        let field_diag = match (layout.field_left(), layout.field_right()) {
            (Some(l), Some(r)) => v[l] == v[r],
            _ => true,
        };
        if others_empty && field_diag {
            coherence.add(x.re);
        }
    }
    n * population(upper, rho) + coherence.value()
}

/// K=1 plus K=2 decomposition of `J_ul J_lu`.
pub fn collective_intensity_spec(lower: usize, upper: usize) -> (KBodySpec, KBodySpec) {
    let one = KBodySpec { order: 1, terms: vec![(vec![(upper, upper)], ONE)] };
    let two = KBodySpec { order: 2, terms: vec![(vec![(upper, lower), (lower, upper)], ONE)] };
    (one, two)
}

/// Emitted intensity of the two-level collective decay, in units of `γ`.
pub fn emission_intensity(rho: &DensityCoefficients) -> f64 {
    collective_intensity(rho, 0, 1)
}

/// Coefficients of the lowering operator `J₋ = Σ_μ |0⟩⟨1|`: one on vectors
/// with a single particle in `|0⟩⟨1|` and no other coherence.
pub fn j12_supervector(sector: Arc<BasisSector>) -> Result<OperatorCoefficients> {
    operator_to_coefficients(&KBodySpec::collective(0, 1), sector)
}

/// Mean photon number `⟨a†a⟩` weights on a composite sector.
pub fn photon_number_coefficients(sector: Arc<BasisSector>) -> Result<OperatorCoefficients> {
    let layout = sector.layout();
    let (Some(l), Some(r)) = (layout.field_left(), layout.field_right()) else {
        return Err(Error::InvalidArgument("photon number needs a composite sector".into()));
    };
    Ok(OperatorCoefficients::from_fn(sector, |v| {
        if layout.is_atomic_diagonal(v) && v[l] == v[r] {
            C64::new(v[l] as f64, 0.0)
        } else {
            ZERO
        }
    }))
}

/// `⟨a†a⟩` on a composite state.
pub fn mean_photon_number(rho: &DensityCoefficients) -> Result<f64> {
    let layout = rho.sector().layout();
    let l = layout
        .field_left()
        .ok_or_else(|| Error::InvalidArgument("photon number needs a composite sector".into()))?;
    Ok(rho
        .sector()
        .iter()
        .zip(rho.values())
        .filter(|(v, _)| layout.is_trace_vector(v))
        .map(|(v, x)| v[l] as f64 * x.re)
        .collect::<KahanSum>()
        .value())
}
