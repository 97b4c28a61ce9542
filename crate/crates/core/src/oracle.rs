//! Brute-force reference in the full tensor-product space of `N`
//! distinguishable particles.
//!
//! Everything here is built from Kronecker products of single-particle
//! matrix units and dense matrix algebra; nothing goes through the bosonic
//! representation. It exists to cross-check the occupation-number engine on
//! small instances.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::basis::{BasisSector, Count, SectorBuilder};
use crate::error::{Error, Result};
use crate::integrate::{integrate, IntegratorConfig};
use crate::numeric::ln_multinomial;
use crate::sparse::CsrMatrix;
use crate::states::DensityCoefficients;
use crate::superops::{assemble, bosonize, Envelope, FieldFactor, HamiltonianTerm, RateTensor, SigmaKind, SigmaTerm};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Largest supported Hilbert-space dimension (density matrices hold its square).
pub const DIMENSION_CAP: usize = 1 << 13;

/// Collective dissipator `rate · D[J_lower,upper]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollectiveDecay {
    pub lower: usize,
    pub upper: usize,
    pub rate: f64,
}

/// Master equation in σ form.
#[derive(Clone, Debug, Default)]
pub struct OracleModel {
    pub levels: usize,
    pub particles: usize,
    /// Photon-number cutoff of a single field mode, if any.
    pub field_cutoff: Option<usize>,
    /// `H = Σ h J_pq [a | a†]`; hermiticity is the caller's responsibility.
    pub hamiltonian: Vec<HamiltonianTerm>,
    /// Per-particle dissipators, optionally scaled by a time envelope.
    pub local: Vec<(RateTensor, Option<Envelope>)>,
    pub collective: Vec<CollectiveDecay>,
}

impl OracleModel {
    pub fn new(levels: usize, particles: usize) -> Self {
        OracleModel { levels, particles, ..Default::default() }
    }

    fn field_dim(&self) -> usize {
        self.field_cutoff.map_or(1, |c| c + 1)
    }

    fn dimension(&self) -> Result<usize> {
        let d = (self.levels as u128).pow(self.particles as u32) * self.field_dim() as u128;
        if d > DIMENSION_CAP as u128 {
            return Err(Error::OracleCap { dimension: d.min(usize::MAX as u128) as usize, cap: DIMENSION_CAP });
        }
        Ok(d as usize)
    }
}

/// Dense density matrix of distinguishable particles (optionally ⊗ one field mode).
#[derive(Clone, Debug, PartialEq)]
pub struct FullLiouvilleState {
    pub levels: usize,
    pub particles: usize,
    pub field_dim: usize,
    pub rho: DMatrix<C64>,
}

impl FullLiouvilleState {
    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    /// `max |ρ − ρ†|`
    pub fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    pub fn dimension(&self) -> usize {
        self.rho.nrows()
    }
}

fn check_dimension(levels: usize, particles: usize, field_dim: usize) -> Result<usize> {
    let d = (levels as u128).pow(particles as u32) * field_dim as u128;
    if d > DIMENSION_CAP as u128 {
        return Err(Error::OracleCap { dimension: d.min(usize::MAX as u128) as usize, cap: DIMENSION_CAP });
    }
    Ok(d as usize)
}

/// Calls `f(kets, bras)` for every distinct assignment of the occupied pair
/// states to labelled particles.
fn for_each_configuration(levels: usize, counts: &[Count], f: &mut impl FnMut(&[usize], &[usize])) {
    let n: usize = counts[..levels * levels].iter().map(|&c| c as usize).sum();
    let mut remaining: Vec<Count> = counts[..levels * levels].to_vec();
    let mut kets = vec![0; n];
    let mut bras = vec![0; n];
    fn rec(levels: usize, mu: usize, remaining: &mut [Count], kets: &mut [usize], bras: &mut [usize], f: &mut impl FnMut(&[usize], &[usize])) {
        if mu == kets.len() {
            f(kets, bras);
            return;
        }
        for s in 0..remaining.len() {
            if remaining[s] == 0 {
                continue;
            }
            remaining[s] -= 1;
            kets[mu] = s / levels;
            bras[mu] = s % levels;
            rec(levels, mu + 1, remaining, kets, bras, f);
            remaining[s] += 1;
        }
    }
    rec(levels, 0, &mut remaining, &mut kets, &mut bras, f);
}

fn atom_index(levels: usize, states: &[usize]) -> usize {
    states.iter().fold(0, |acc, &s| acc * levels + s)
}

/// Full density matrix of one or more coefficient vectors (summed). All
/// inputs must share levels, particle number and field cutoff.
pub fn embed_sum(parts: &[&DensityCoefficients]) -> Result<FullLiouvilleState> {
    let first = parts.first().ok_or_else(|| Error::InvalidArgument("nothing to embed".into()))?.sector();
    let (m, n) = (first.levels(), first.particles());
    let field_dim = first.field_cutoff().map_or(1, |c| c as usize + 1);
    let d = check_dimension(m, n, field_dim)?;
    let mut rho = DMatrix::from_element(d, d, ZERO);
    for part in parts {
        let s = part.sector();
        if s.levels() != m || s.particles() != n || s.field_cutoff() != first.field_cutoff() {
            return Err(Error::SectorIncompatible("embedded parts differ in shape".into()));
        }
        let layout = s.layout();
        for (v, x) in s.iter().zip(part.values()) {
            if *x == ZERO {
                continue;
            }
            let amp = x * (-ln_multinomial(v[..layout.atomic_width()].iter().map(|&c| c as u64))).exp();
            let (fl, fr) = match (layout.field_left(), layout.field_right()) {
                (Some(l), Some(r)) => (v[l] as usize, v[r] as usize),
                _ => (0, 0),
            };
            for_each_configuration(m, v, &mut |kets, bras| {
                let r = atom_index(m, kets) * field_dim + fl;
                let c = atom_index(m, bras) * field_dim + fr;
                rho[(r, c)] += amp;
            });
        }
    }
    Ok(FullLiouvilleState { levels: m, particles: n, field_dim, rho })
}

pub fn embed(rho: &DensityCoefficients) -> Result<FullLiouvilleState> {
    embed_sum(&[rho])
}

/// Index of the basis state with particles `a` and `a+1` exchanged.
fn swap_adjacent(levels: usize, particles: usize, field_dim: usize, index: usize, a: usize) -> usize {
    let field = index % field_dim;
    let mut atoms = index / field_dim;
    let mut digits = vec![0; particles];
    for k in (0..particles).rev() {
        digits[k] = atoms % levels;
        atoms /= levels;
    }
    digits.swap(a, a + 1);
    atom_index(levels, &digits) * field_dim + field
}

/// Largest change of the full state under any exchange of two adjacent particles.
pub fn asymmetry(full: &FullLiouvilleState) -> f64 {
    let d = full.dimension();
    let mut worst: f64 = 0.0;
    for a in 0..full.particles.saturating_sub(1) {
        let perm: Vec<usize> = (0..d).map(|i| swap_adjacent(full.levels, full.particles, full.field_dim, i, a)).collect();
        for r in 0..d {
            for c in 0..d {
                worst = worst.max((full.rho[(perm[r], perm[c])] - full.rho[(r, c)]).norm());
            }
        }
    }
    worst
}

/// Occupation-number coefficients of a symmetric full state on `sector`.
pub fn project(full: &FullLiouvilleState, sector: Arc<BasisSector>) -> Result<DensityCoefficients> {
    if sector.levels() != full.levels || sector.particles() != full.particles {
        return Err(Error::SectorIncompatible("sector and full state differ in shape".into()));
    }
    let field_dim = sector.field_cutoff().map_or(1, |c| c as usize + 1);
    if field_dim != full.field_dim {
        return Err(Error::SectorIncompatible("field dimension differs".into()));
    }
    let a = asymmetry(full);
    if a > 1e-10 {
        return Err(Error::NotSymmetric { asymmetry: a });
    }
    let m = full.levels;
    let layout = sector.layout();
    let values = sector
        .iter()
        .map(|v| {
            let (fl, fr) = match (layout.field_left(), layout.field_right()) {
                (Some(l), Some(r)) => (v[l] as usize, v[r] as usize),
                _ => (0, 0),
            };
            let mut acc = ZERO;
            for_each_configuration(m, v, &mut |kets, bras| {
                acc += full.rho[(atom_index(m, kets) * field_dim + fl, atom_index(m, bras) * field_dim + fr)];
            });
            acc
        })
        .collect();
    Ok(DensityCoefficients::from_values(sector, values, 0.0))
}

fn unit(m: usize, p: usize, q: usize) -> DMatrix<C64> {
    let mut e = DMatrix::from_element(m, m, ZERO);
    e[(p, q)] = ONE;
    e
}

/// `σ_μ,pq` on the atoms, identity on the field.
fn sigma(model_levels: usize, particles: usize, field_dim: usize, mu: usize, p: usize, q: usize) -> DMatrix<C64> {
    let mut acc = DMatrix::from_element(1, 1, ONE);
    for nu in 0..particles {
        let factor = if nu == mu { unit(model_levels, p, q) } else { DMatrix::identity(model_levels, model_levels) };
        acc = acc.kronecker(&factor);
    }
    acc.kronecker(&DMatrix::identity(field_dim, field_dim))
}

fn collective(levels: usize, particles: usize, field_dim: usize, p: usize, q: usize) -> DMatrix<C64> {
    let d = levels.pow(particles as u32) * field_dim;
    (0..particles).fold(DMatrix::from_element(d, d, ZERO), |acc, mu| acc + sigma(levels, particles, field_dim, mu, p, q))
}

fn field_annihilation(levels: usize, particles: usize, field_dim: usize) -> DMatrix<C64> {
    let mut a = DMatrix::from_element(field_dim, field_dim, ZERO);
    for n in 1..field_dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let atoms = levels.pow(particles as u32);
    DMatrix::identity(atoms, atoms).kronecker(&a)
}

/// `coefficient · envelope(t) · L ρ R`, with `None` standing for identity.
struct Term {
    coefficient: C64,
    envelope: Option<Envelope>,
    left: Option<DMatrix<C64>>,
    right: Option<DMatrix<C64>>,
}

fn build_terms(model: &OracleModel) -> Result<Vec<Term>> {
    let (m, n, f) = (model.levels, model.particles, model.field_dim());
    model.dimension()?;
    let i = C64::new(0.0, 1.0);
    let mut terms = Vec::new();
    let a = model.field_cutoff.map(|_| field_annihilation(m, n, f));
    for h in &model.hamiltonian {
        let mut op = collective(m, n, f, h.sigma.0, h.sigma.1);
        match (h.field, &a) {
            (None, _) => {}
            (Some(FieldFactor::Annihilate), Some(a)) => op = &op * a,
            (Some(FieldFactor::Create), Some(a)) => op = &op * a.adjoint(),
            (Some(_), None) => return Err(Error::InvalidArgument("field term without a field mode".into())),
        }
        terms.push(Term { coefficient: -i * h.coefficient, envelope: None, left: Some(op.clone()), right: None });
        terms.push(Term { coefficient: i * h.coefficient, envelope: None, left: None, right: Some(op) });
    }
    for (rates, envelope) in &model.local {
        rates.check_hermitian(1e-12)?;
        for ((ii, j, p, q), g) in rates.iter() {
            if g == ZERO {
                continue;
            }
            for mu in 0..n {
                terms.push(Term {
                    coefficient: g,
                    envelope: *envelope,
                    left: Some(sigma(m, n, f, mu, ii, j)),
                    right: Some(sigma(m, n, f, mu, q, p)),
                });
                if ii == p {
                    let s = sigma(m, n, f, mu, q, j);
                    terms.push(Term { coefficient: -0.5 * g, envelope: *envelope, left: Some(s.clone()), right: None });
                    terms.push(Term { coefficient: -0.5 * g, envelope: *envelope, left: None, right: Some(s) });
                }
            }
        }
    }
    for c in &model.collective {
        let jm = collective(m, n, f, c.lower, c.upper);
        let jp = jm.adjoint();
        let num = &jp * &jm;
        let g = C64::new(c.rate, 0.0);
        terms.push(Term { coefficient: g, envelope: None, left: Some(jm), right: Some(jp) });
        terms.push(Term { coefficient: -0.5 * g, envelope: None, left: Some(num.clone()), right: None });
        terms.push(Term { coefficient: -0.5 * g, envelope: None, left: None, right: Some(num) });
    }
    Ok(merge_one_sided(terms))
}

/// Folds one-sided terms with equal envelopes into a single operator each,
/// which keeps the dense right-hand side cheap.
fn merge_one_sided(terms: Vec<Term>) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::new();
    for term in terms {
        let slot = out.iter_mut().find(|o| {
            o.envelope == term.envelope && o.left.is_some() == term.left.is_some() && o.right.is_some() == term.right.is_some()
        });
        match (slot, term.left.is_some() != term.right.is_some()) {
            (Some(o), true) => {
                let (dst, src) = match (&mut o.left, term.left, &mut o.right, term.right) {
                    (Some(d), Some(s), None, None) | (None, None, Some(d), Some(s)) => (d, s),
                    _ => unreachable!(),
                };
                *dst *= o.coefficient;
                *dst += src * term.coefficient;
                o.coefficient = ONE;
            }
            _ => out.push(term),
        }
    }
    out
}

/// Nonzero entries `(row, col, value)` of a dense operator.
fn triplets(m: &DMatrix<C64>) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != ZERO {
                out.push((i, j, m[(i, j)]));
            }
        }
    }
    out
}

struct SparseTerm {
    coefficient: C64,
    envelope: Option<Envelope>,
    left: Option<Vec<(usize, usize, C64)>>,
    right: Option<Vec<(usize, usize, C64)>>,
}

fn sparse_terms(terms: &[Term]) -> Vec<SparseTerm> {
    terms
        .iter()
        .map(|t| SparseTerm {
            coefficient: t.coefficient,
            envelope: t.envelope,
            left: t.left.as_ref().map(triplets),
            right: t.right.as_ref().map(triplets),
        })
        .collect()
}

/// `out = Σ c L ρ R` on column-major `d × d` data.
fn lindblad_rhs(terms: &[SparseTerm], t: f64, d: usize, rho: &[C64], out: &mut [C64]) {
    out.fill(ZERO);
    let mut scratch = vec![ZERO; d * d];
    for term in terms {
        let s = term.envelope.map_or(1.0, |e| e.eval(t));
        if s == 0.0 {
            continue;
        }
        let c = term.coefficient * s;
        let x: &[C64] = match &term.left {
            Some(l) => {
                scratch.fill(ZERO);
                for &(i, k, v) in l {
                    for j in 0..d {
                        scratch[i + j * d] += v * rho[k + j * d];
                    }
                }
                &scratch
            }
            None => rho,
        };
        match &term.right {
            Some(r) => {
                for &(k, j, v) in r {
                    let w = c * v;
                    for i in 0..d {
                        out[i + j * d] += w * x[i + k * d];
                    }
                }
            }
            None => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o += c * v;
                }
            }
        }
    }
}

/// `dρ/dt` of the model at time `t`.
pub fn apply_full(model: &OracleModel, full: &FullLiouvilleState, t: f64) -> Result<FullLiouvilleState> {
    let terms = sparse_terms(&build_terms(model)?);
    let d = full.dimension();
    let mut rho = full.rho.clone();
    lindblad_rhs(&terms, t, d, full.rho.as_slice(), rho.as_mut_slice());
    Ok(FullLiouvilleState { rho, ..full.clone() })
}

/// Dense evolution to every time of `config.output_grid`.
pub fn evolve_full(model: &OracleModel, full: &FullLiouvilleState, config: &IntegratorConfig) -> Result<Vec<FullLiouvilleState>> {
    if full.levels != model.levels || full.particles != model.particles || full.field_dim != model.field_dim() {
        return Err(Error::SectorIncompatible("state does not match the model".into()));
    }
    let terms = sparse_terms(&build_terms(model)?);
    let d = full.dimension();
    let mut out = Vec::new();
    integrate(
        |t, y, dy| lindblad_rhs(&terms, t, d, y, dy),
        full.rho.as_slice().to_vec(),
        config,
        |_, y| {
            out.push(FullLiouvilleState { rho: DMatrix::from_column_slice(d, d, y), ..full.clone() });
            Ok(())
        },
    )?;
    Ok(out)
}

/// Largest violation of `[J_ij, J_pq] = δ_pj J_iq − δ_iq J_pj` in the three
/// representations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JordanReport {
    /// Collective operators on the full tensor-product space.
    pub full_space: f64,
    /// Schwinger bilinears `b†_i b_j` on the `N`-boson Fock space.
    pub schwinger: f64,
    /// Bosonized left actions assembled on the symmetric superbasis.
    pub bosonized: f64,
}

impl JordanReport {
    pub fn max(&self) -> f64 {
        self.full_space.max(self.schwinger).max(self.bosonized)
    }
}

fn dense_violation(ops: &[Vec<DMatrix<C64>>]) -> f64 {
    let m = ops.len();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            for p in 0..m {
                for q in 0..m {
                    let lhs = &ops[i][j] * &ops[p][q] - &ops[p][q] * &ops[i][j];
                    let mut rhs = lhs.clone() * ZERO;
                    if p == j {
                        rhs += &ops[i][q];
                    }
                    if i == q {
                        rhs -= &ops[p][j];
                    }
                    worst = worst.max((lhs - rhs).iter().map(|x| x.norm()).fold(0.0, f64::max));
                }
            }
        }
    }
    worst
}

/// Compositions of `n` into `m` parts.
fn compositions(m: usize, n: usize) -> Vec<Vec<usize>> {
    if m == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in 0..=n {
        for mut rest in compositions(m - 1, n - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn schwinger_ops(m: usize, n: usize) -> Vec<Vec<DMatrix<C64>>> {
    let basis = compositions(m, n);
    let d = basis.len();
    let index = |v: &[usize]| basis.iter().position(|b| b == v).unwrap();
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut op = DMatrix::from_element(d, d, ZERO);
                    for (col, v) in basis.iter().enumerate() {
                        if v[j] == 0 {
                            continue;
                        }
                        let mut w = v.clone();
                        let mut amp = (w[j] as f64).sqrt();
                        w[j] -= 1;
                        w[i] += 1;
                        amp *= (w[i] as f64).sqrt();
                        op[(index(&w), col)] += C64::new(amp, 0.0);
                    }
                    op
                })
                .collect()
        })
        .collect()
}

fn sparse_violation(ops: &[Vec<CsrMatrix>]) -> f64 {
    let m = ops.len();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            for p in 0..m {
                for q in 0..m {
                    let lhs = ops[i][j].matmul(&ops[p][q]).combine(ONE, &ops[p][q].matmul(&ops[i][j]), -ONE);
                    let mut diff = lhs;
                    if p == j {
                        diff = diff.combine(ONE, &ops[i][q], -ONE);
                    }
                    if i == q {
                        diff = diff.combine(ONE, &ops[p][j], ONE);
                    }
                    worst = worst.max(diff.max_abs());
                }
            }
        }
    }
    worst
}

/// Checks the collective-operator commutation relations for `M` levels and
/// `N` particles in all three representations.
pub fn check_jordan_algebra(levels: usize, particles: usize) -> Result<JordanReport> {
    if particles > 3 {
        return Err(Error::InvalidArgument("the algebra check is limited to N <= 3".into()));
    }
    check_dimension(levels, particles, 1)?;
    let full: Vec<Vec<DMatrix<C64>>> = (0..levels)
        .map(|i| (0..levels).map(|j| collective(levels, particles, 1, i, j)).collect())
        .collect();
    let sector = Arc::new(SectorBuilder::new(levels, particles).build()?);
    let bos: Vec<Vec<CsrMatrix>> = (0..levels)
        .map(|i| {
            (0..levels)
                .map(|j| {
                    let m = bosonize(levels, &SigmaTerm::new(SigmaKind::Left(i, j)));
                    assemble(&m, sector.clone()).map(|l| l.matrix_at(0.0))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(JordanReport {
        full_space: dense_violation(&full),
        schwinger: dense_violation(&schwinger_ops(levels, particles)),
        bosonized: sparse_violation(&bos),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_basis;
    use crate::states::{dicke_state, mixed_uncorrelated};

    fn full(m: usize, n: usize) -> Arc<BasisSector> {
        Arc::new(enumerate_basis(m, n, &[]).unwrap())
    }

    #[test]
    fn single_particle_is_relabeling() {
        let rho = mixed_uncorrelated(&[0.25, 0.75], full(2, 1)).unwrap();
        let f = embed(&rho).unwrap();
        assert_eq!(f.rho[(0, 0)], C64::new(0.25, 0.0));
        assert_eq!(f.rho[(1, 1)], C64::new(0.75, 0.0));
    }

    #[test]
    fn mixed_pair_is_product() {
        let rho = mixed_uncorrelated(&[0.5, 0.5], full(2, 2)).unwrap();
        let f = embed(&rho).unwrap();
        let one = DMatrix::from_diagonal_element(2, 2, C64::new(0.5, 0.0));
        assert!((f.rho.clone() - one.kronecker(&one)).iter().all(|x| x.norm() < 1e-15));
    }

    #[test]
    fn round_trip() {
        let rho = dicke_state(1, full(2, 3)).unwrap();
        let back = project(&embed(&rho).unwrap(), rho.sector().clone()).unwrap();
        assert!(back.max_abs_diff(&rho) < 1e-12);
        let d = project(&embed(&dicke_state(1, full(2, 2)).unwrap()).unwrap(), full(2, 2)).unwrap();
        assert!((d.get(&[0, 1, 1, 0]).re - 1.0).abs() < 1e-14);
        assert!((d.get(&[1, 0, 0, 1]).re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let mut rho = DMatrix::from_element(4, 4, ZERO);
        rho[(1, 1)] = ONE;
        let f = FullLiouvilleState { levels: 2, particles: 2, field_dim: 1, rho };
        assert!(matches!(project(&f, full(2, 2)), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn cap_enforced() {
        let s = full(2, 14);
        let rho = mixed_uncorrelated(&[1.0, 0.0], s).unwrap();
        assert!(matches!(embed(&rho), Err(Error::OracleCap { .. })));
    }

    #[test]
    fn single_atom_decay() {
        let mut model = OracleModel::new(2, 1);
        model.local.push((RateTensor::new(2).transfer(1, 0, 1.0), None));
        let rho = mixed_uncorrelated(&[0.0, 1.0], full(2, 1)).unwrap();
        let grid = crate::integrate::uniform_grid(0.0, 3.0, 4);
        let out = evolve_full(&model, &embed(&rho).unwrap(), &IntegratorConfig::default().with_grid(grid.clone())).unwrap();
        for (t, s) in grid.iter().zip(&out) {
            assert!((s.rho[(1, 1)].re - (-t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn jordan_algebra_holds() {
        for (m, n) in [(2, 2), (3, 2), (2, 3)] {
            let r = check_jordan_algebra(m, n).unwrap();
            assert!(r.max() < 1e-12, "{m} {n}: {r:?}");
        }
    }
}
