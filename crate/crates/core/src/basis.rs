//! Occupation-number superbasis.
//!
//! A basis vector of `N` identical `M`-level particles is the list of `M²`
//! counts `n_pq`, the number of particles occupying the generalized state
//! `|p⟩⟨q|`. Counts are stored row-major over `(p, q)`. Composite bases for
//! an atom-field system append the two field Fock labels `(n_L, n_R)` of the
//! field matrix unit `|n_L⟩⟨n_R|`.
//!
//! A [`BasisSector`] is the lexicographically ordered list of all vectors that
//! satisfy a set of linear [`SectorConstraint`]s, together with a hash index
//! for O(1) reverse lookup.

use std::fmt;
use std::hash::{BuildHasher, Hash, Hasher};
use std::sync::OnceLock;

use hashbrown::HashTable;
use rustc_hash::FxBuildHasher;

use crate::error::{Error, Result};
use crate::numeric::{binomial_u128, factorial_u64, ln_fact, EXACT_FACTORIAL_MAX};

pub type Count = u16;

/// Default cap on the number of vectors a single sector may hold.
pub const DEFAULT_CAPACITY: usize = 50_000_000;

/// Slot layout of an occupation vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    levels: usize,
    field: bool,
}

impl Layout {
    pub fn atomic(levels: usize) -> Self {
        Layout { levels, field: false }
    }

    /// Atomic counts followed by the field labels `(n_L, n_R)`.
    pub fn composite(levels: usize) -> Self {
        Layout { levels, field: true }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn has_field(&self) -> bool {
        self.field
    }

    pub fn atomic_width(&self) -> usize {
        self.levels * self.levels
    }

    pub fn width(&self) -> usize {
        self.atomic_width() + if self.field { 2 } else { 0 }
    }

    #[inline]
    pub fn slot(&self, p: usize, q: usize) -> usize {
        debug_assert!(p < self.levels && q < self.levels);
        p * self.levels + q
    }

    pub fn pair(&self, slot: usize) -> (usize, usize) {
        (slot / self.levels, slot % self.levels)
    }

    pub fn field_left(&self) -> Option<usize> {
        self.field.then(|| self.atomic_width())
    }

    pub fn field_right(&self) -> Option<usize> {
        self.field.then(|| self.atomic_width() + 1)
    }

    /// Slot holding the same count after `n_pq -> n_qp` (and `n_L <-> n_R`).
    #[inline]
    pub fn transposed_slot(&self, slot: usize) -> usize {
        let a = self.atomic_width();
        if slot < a {
            let (p, q) = self.pair(slot);
            self.slot(q, p)
        } else if slot == a {
            a + 1
        } else {
            a
        }
    }

    pub fn transpose_into(&self, counts: &[Count], out: &mut [Count]) {
        for (s, &c) in counts.iter().enumerate() {
            out[self.transposed_slot(s)] = c;
        }
    }

    pub fn transposed(&self, counts: &[Count]) -> Vec<Count> {
        let mut out = vec![0; counts.len()];
        self.transpose_into(counts, &mut out);
        out
    }

    pub fn particles(&self, counts: &[Count]) -> usize {
        counts[..self.atomic_width()].iter().map(|&c| c as usize).sum()
    }

    /// True when no off-diagonal atomic state is occupied.
    pub fn is_atomic_diagonal(&self, counts: &[Count]) -> bool {
        (0..self.levels).all(|p| {
            (0..self.levels).all(|q| p == q || counts[self.slot(p, q)] == 0)
        })
    }

    /// True when the vector contributes to the trace: atomic diagonal and,
    /// for composite layouts, `n_L == n_R`.
    pub fn is_trace_vector(&self, counts: &[Count]) -> bool {
        self.is_atomic_diagonal(counts)
            && match (self.field_left(), self.field_right()) {
                (Some(l), Some(r)) => counts[l] == counts[r],
                _ => true,
            }
    }
}

/// One generalized Fock label `|{n_ij}⟩⟩`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupationVector {
    counts: Vec<Count>,
}

impl OccupationVector {
    pub fn new(layout: Layout, particles: usize, counts: Vec<Count>) -> Result<Self> {
        if counts.len() != layout.width() {
            return Err(Error::DimensionMismatch { expected: layout.width(), found: counts.len() });
        }
        if layout.particles(&counts) != particles {
            return Err(Error::InvalidArgument(format!(
                "counts {counts:?} do not sum to {particles}"
            )));
        }
        Ok(OccupationVector { counts })
    }

    pub fn counts(&self) -> &[Count] {
        &self.counts
    }
}

impl fmt::Display for OccupationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}

/// Linear constraint `Σ c_s n_s = target` over the slots of a [`Layout`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SectorConstraint {
    coefficients: Vec<i64>,
    target: i64,
}

impl SectorConstraint {
    pub fn new(coefficients: Vec<i64>, target: i64) -> Self {
        SectorConstraint { coefficients, target }
    }

    /// `n_a - n_b = target` for two atomic pairs.
    pub fn pair_difference(layout: Layout, a: (usize, usize), b: (usize, usize), target: i64) -> Self {
        let mut c = vec![0; layout.width()];
        c[layout.slot(a.0, a.1)] += 1;
        c[layout.slot(b.0, b.1)] -= 1;
        SectorConstraint::new(c, target)
    }

    /// `n_pq = 0`.
    pub fn vacant(layout: Layout, p: usize, q: usize) -> Self {
        let mut c = vec![0; layout.width()];
        c[layout.slot(p, q)] = 1;
        SectorConstraint::new(c, 0)
    }

    pub fn coefficients(&self) -> &[i64] {
        &self.coefficients
    }

    pub fn target(&self) -> i64 {
        self.target
    }

    pub fn evaluate(&self, counts: &[Count]) -> i64 {
        self.coefficients.iter().zip(counts).map(|(&c, &n)| c * n as i64).sum()
    }

    pub fn is_satisfied(&self, counts: &[Count]) -> bool {
        self.evaluate(counts) == self.target
    }

    /// The same constraint expressed on transposed vectors.
    pub fn transposed(&self, layout: Layout) -> Self {
        let mut c = vec![0; self.coefficients.len()];
        for (s, &v) in self.coefficients.iter().enumerate() {
            c[layout.transposed_slot(s)] = v;
        }
        SectorConstraint::new(c, self.target)
    }

    /// Sign-normalized form: first nonzero coefficient positive.
    fn normalized(&self) -> Self {
        match self.coefficients.iter().find(|&&c| c != 0) {
            Some(&c) if c < 0 => SectorConstraint::new(
                self.coefficients.iter().map(|&x| -x).collect(),
                -self.target,
            ),
            _ => self.clone(),
        }
    }
}

fn normalized_set(constraints: &[SectorConstraint]) -> Vec<SectorConstraint> {
    let mut v: Vec<_> = constraints
        .iter()
        .map(SectorConstraint::normalized)
        .filter(|c| c.coefficients.iter().any(|&x| x != 0) || c.target != 0)
        .collect();
    v.sort();
    v.dedup();
    v
}

/// `n_01 = n_10` for two-level atoms (ground `0`, excited `1`).
pub fn two_level_emission_constraints() -> Vec<SectorConstraint> {
    vec![SectorConstraint::pair_difference(Layout::atomic(2), (0, 1), (1, 0), 0)]
}

/// Level order of the pumped Λ-system: neutral, ground, excited, ion.
pub mod lambda_levels {
    pub const NEUTRAL: usize = 0;
    pub const GROUND: usize = 1;
    pub const EXCITED: usize = 2;
    pub const ION: usize = 3;
}

/// Constraints of the pumped Λ-system basis `{n_00, n_11, ℓ, ℓ, n_22, n_ii}`:
/// every coherence vanishes except the balanced ground/excited pair, and the
/// ion count is pinned to zero when there is no Auger channel.
pub fn lambda_constraints(auger: bool) -> Vec<SectorConstraint> {
    use lambda_levels::*;
    let layout = Layout::atomic(4);
    let mut out = Vec::new();
    for p in 0..4 {
        for q in 0..4 {
            let kept = (p, q) == (GROUND, EXCITED) || (p, q) == (EXCITED, GROUND);
            if p != q && !kept {
                out.push(SectorConstraint::vacant(layout, p, q));
            }
        }
    }
    out.push(SectorConstraint::pair_difference(layout, (GROUND, EXCITED), (EXCITED, GROUND), 0));
    if !auger {
        out.push(SectorConstraint::vacant(layout, ION, ION));
    }
    out
}

/// Closed-form sector sizes for the constraint sets used by the scenarios.
pub fn sector_size_formula(levels: usize, particles: usize, constraints: &[SectorConstraint]) -> Result<u128> {
    let n = particles as u128;
    let set = normalized_set(constraints);
    if set.is_empty() {
        let m2 = (levels * levels) as u64;
        return binomial_u128(particles as u64 + m2 - 1, particles as u64)
            .ok_or_else(|| Error::InvalidArgument("binomial overflow".into()));
    }
    if levels == 2 && set == normalized_set(&two_level_emission_constraints()) {
        return Ok((n + 2) * (n + 2) / 4);
    }
    if levels == 4 && set == normalized_set(&lambda_constraints(false)) {
        return Ok((n + 2) * (n + 4) * (2 * n + 3) / 24);
    }
    if levels == 4 && set == normalized_set(&lambda_constraints(true)) {
        return Ok((n + 2) * (n + 4) * (n * n + 6 * n + 6) / 48);
    }
    Err(Error::UnsupportedConstraints)
}

/// `Tr |{n}⟩⟩`: zero unless only diagonal states are occupied, otherwise
/// `sqrt(N! / Π n_qq!)`.
pub fn trace_weight(layout: Layout, counts: &[Count]) -> f64 {
    if !layout.is_atomic_diagonal(counts) {
        return 0.0;
    }
    let diag = (0..layout.levels()).map(|q| counts[layout.slot(q, q)] as u64);
    let total: u64 = layout.particles(counts) as u64;
    if total <= EXACT_FACTORIAL_MAX {
        let den: u64 = diag.map(|c| factorial_u64(c).unwrap()).product();
        ((factorial_u64(total).unwrap() / den) as f64).sqrt()
    } else {
        let den: f64 = diag.map(ln_fact).sum();
        (0.5 * (ln_fact(total) - den)).exp()
    }
}

/// Builder for [`BasisSector`].
#[derive(Clone, Debug)]
pub struct SectorBuilder {
    layout: Layout,
    particles: usize,
    field_cutoff: Option<Count>,
    constraints: Vec<SectorConstraint>,
    capacity: usize,
}

impl SectorBuilder {
    pub fn new(levels: usize, particles: usize) -> Self {
        SectorBuilder {
            layout: Layout::atomic(levels),
            particles,
            field_cutoff: None,
            constraints: Vec::new(),
            capacity: DEFAULT_CAPACITY,
        }
    }

    /// Adds field labels `0 <= n_L, n_R <= n_max`.
    pub fn field_cutoff(mut self, n_max: Count) -> Self {
        self.layout = Layout::composite(self.layout.levels);
        self.field_cutoff = Some(n_max);
        self
    }

    pub fn constraint(mut self, c: SectorConstraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn constraints(mut self, cs: impl IntoIterator<Item = SectorConstraint>) -> Self {
        self.constraints.extend(cs);
        self
    }

    pub fn capacity(mut self, limit: usize) -> Self {
        self.capacity = limit;
        self
    }

    pub fn build(self) -> Result<BasisSector> {
        let SectorBuilder { layout, particles, field_cutoff, constraints, capacity } = self;
        if layout.levels == 0 {
            return Err(Error::InvalidArgument("at least one level is required".into()));
        }
        if particles > Count::MAX as usize {
            return Err(Error::InvalidArgument(format!("particle count {particles} too large")));
        }
        for c in &constraints {
            if c.coefficients.len() != layout.width() {
                return Err(Error::DimensionMismatch {
                    expected: layout.width(),
                    found: c.coefficients.len(),
                });
            }
        }
        let data = Enumerator::new(layout, particles, field_cutoff, &constraints, capacity).run()?;
        Ok(BasisSector::from_parts(layout, particles, field_cutoff, constraints, data))
    }
}

/// All compositions of `N` into `M²` parts that satisfy the constraints, in
/// lexicographic order.
pub fn enumerate_basis(levels: usize, particles: usize, constraints: &[SectorConstraint]) -> Result<BasisSector> {
    SectorBuilder::new(levels, particles).constraints(constraints.iter().cloned()).build()
}

struct Enumerator<'a> {
    layout: Layout,
    particles: usize,
    cutoff: i64,
    constraints: &'a [SectorConstraint],
    capacity: usize,
    /// per constraint and slot: (min, max) coefficient over remaining atomic slots `s..`
    atomic_bounds: Vec<Vec<(i64, i64)>>,
    /// per constraint and slot: achievable (low, high) from remaining field slots `s..`
    field_bounds: Vec<Vec<(i64, i64)>>,
    current: Vec<Count>,
    partial: Vec<i64>,
    out: Vec<Count>,
    len: usize,
}

impl<'a> Enumerator<'a> {
    fn new(
        layout: Layout,
        particles: usize,
        field_cutoff: Option<Count>,
        constraints: &'a [SectorConstraint],
        capacity: usize,
    ) -> Self {
        let width = layout.width();
        let a = layout.atomic_width();
        let cutoff = field_cutoff.map_or(0, |c| c as i64);
        let mut atomic_bounds = Vec::with_capacity(constraints.len());
        let mut field_bounds = Vec::with_capacity(constraints.len());
        for c in constraints {
            let mut ab = vec![(0, 0); width + 1];
            let mut fb = vec![(0, 0); width + 1];
            for s in (0..width).rev() {
                let (lo, hi) = fb[s + 1];
                let v = c.coefficients[s];
                if s >= a {
                    fb[s] = (lo + (v * cutoff).min(0), hi + (v * cutoff).max(0));
                } else {
                    fb[s] = (lo, hi);
                }
            }
            for s in (0..width).rev() {
                ab[s] = if s >= a {
                    (i64::MAX, i64::MIN)
                } else {
                    let (lo, hi) = ab[s + 1];
                    let v = c.coefficients[s];
                    (lo.min(v), hi.max(v))
                };
            }
            atomic_bounds.push(ab);
            field_bounds.push(fb);
        }
        Enumerator {
            layout,
            particles,
            cutoff,
            constraints,
            capacity,
            atomic_bounds,
            field_bounds,
            current: vec![0; width],
            partial: vec![0; constraints.len()],
            out: Vec::new(),
            len: 0,
        }
    }

    fn run(mut self) -> Result<Vec<Count>> {
        self.descend(0, self.particles as i64)?;
        Ok(self.out)
    }

    /// Whether the constraints can still be met once slots `..slot` are fixed
    /// and `remaining` particles are left for the atomic slots `slot..`.
    fn feasible(&self, slot: usize, remaining: i64) -> bool {
        let a = self.layout.atomic_width();
        if slot >= a && remaining != 0 {
            return false;
        }
        self.constraints.iter().enumerate().all(|(k, c)| {
            let need = c.target - self.partial[k];
            let (flo, fhi) = self.field_bounds[k][slot];
            let (alo, ahi) = if slot < a {
                let (mn, mx) = self.atomic_bounds[k][slot];
                (mn * remaining, mx * remaining)
            } else {
                (0, 0)
            };
            need >= alo + flo && need <= ahi + fhi
        })
    }

    fn descend(&mut self, slot: usize, remaining: i64) -> Result<()> {
        let width = self.layout.width();
        let a = self.layout.atomic_width();
        if slot == width {
            if remaining == 0 && self.partial.iter().zip(self.constraints).all(|(&p, c)| p == c.target) {
                self.len += 1;
                if self.len > self.capacity {
                    return Err(Error::Capacity { limit: self.capacity });
                }
                self.out.extend_from_slice(&self.current);
            }
            return Ok(());
        }
        let (lo, hi) = if slot + 1 == a {
            (remaining, remaining)
        } else if slot < a {
            (0, remaining)
        } else {
            (0, self.cutoff)
        };
        for v in lo..=hi {
            self.current[slot] = v as Count;
            for (k, c) in self.constraints.iter().enumerate() {
                self.partial[k] += c.coefficients[slot] * v;
            }
            let rest = if slot < a { remaining - v } else { remaining };
            if self.feasible(slot + 1, rest) {
                self.descend(slot + 1, rest)?;
            }
            for (k, c) in self.constraints.iter().enumerate() {
                self.partial[k] -= c.coefficients[slot] * v;
            }
        }
        self.current[slot] = 0;
        Ok(())
    }
}

/// Ordered, indexed set of occupation vectors sharing `N` particles and a set
/// of conserved-quantity values. Immutable after construction.
pub struct BasisSector {
    layout: Layout,
    particles: usize,
    field_cutoff: Option<Count>,
    constraints: Vec<SectorConstraint>,
    data: Vec<Count>,
    index: HashTable<u32>,
    hasher: FxBuildHasher,
    transpose_map: OnceLock<Option<Vec<u32>>>,
}

impl fmt::Debug for BasisSector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisSector")
            .field("levels", &self.layout.levels)
            .field("particles", &self.particles)
            .field("field_cutoff", &self.field_cutoff)
            .field("constraints", &self.constraints.len())
            .field("len", &self.len())
            .finish()
    }
}

fn hash_counts(hasher: &FxBuildHasher, counts: &[Count]) -> u64 {
    let mut h = hasher.build_hasher();
    counts.hash(&mut h);
    h.finish()
}

impl BasisSector {
    fn from_parts(
        layout: Layout,
        particles: usize,
        field_cutoff: Option<Count>,
        constraints: Vec<SectorConstraint>,
        data: Vec<Count>,
    ) -> Self {
        let width = layout.width();
        let len = if width == 0 { 0 } else { data.len() / width };
        let hasher = FxBuildHasher;
        let mut index = HashTable::with_capacity(len);
        for k in 0..len {
            let v = &data[k * width..(k + 1) * width];
            let h = hash_counts(&hasher, v);
            index.insert_unique(h, k as u32, |&i| {
                let i = i as usize;
                hash_counts(&hasher, &data[i * width..(i + 1) * width])
            });
        }
        BasisSector {
            layout,
            particles,
            field_cutoff,
            constraints,
            data,
            index,
            hasher,
            transpose_map: OnceLock::new(),
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn levels(&self) -> usize {
        self.layout.levels
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn field_cutoff(&self) -> Option<Count> {
        self.field_cutoff
    }

    pub fn constraints(&self) -> &[SectorConstraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.layout.width()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn vector(&self, k: usize) -> &[Count] {
        let w = self.layout.width();
        &self.data[k * w..(k + 1) * w]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[Count]> + '_ {
        self.data.chunks_exact(self.layout.width())
    }

    #[inline]
    pub fn index_of(&self, counts: &[Count]) -> Option<usize> {
        if counts.len() != self.layout.width() {
            return None;
        }
        let h = hash_counts(&self.hasher, counts);
        self.index
            .find(h, |&i| self.vector(i as usize) == counts)
            .map(|&i| i as usize)
    }

    pub fn contains(&self, counts: &[Count]) -> bool {
        self.index_of(counts).is_some()
    }

    /// Whether the vector satisfies this sector's particle number, cutoff and constraints.
    pub fn admits(&self, counts: &[Count]) -> bool {
        counts.len() == self.layout.width()
            && self.layout.particles(counts) == self.particles
            && self.field_cutoff.map_or(true, |c| {
                counts[self.layout.atomic_width()..].iter().all(|&n| n <= c)
            })
            && self.constraints.iter().all(|c| c.is_satisfied(counts))
    }

    /// For transposition-closed sectors, `map[k]` is the index of the
    /// transposed vector `n_ij -> n_ji`. `None` when the sector is not closed.
    pub fn transpose_map(&self) -> Option<&[u32]> {
        self.transpose_map
            .get_or_init(|| {
                let mut buf = vec![0; self.layout.width()];
                let mut map = Vec::with_capacity(self.len());
                for v in self.iter() {
                    self.layout.transpose_into(v, &mut buf);
                    map.push(self.index_of(&buf)? as u32);
                }
                Some(map)
            })
            .as_deref()
    }

    /// The sector holding the transposes of this sector's vectors.
    pub fn transposed(&self) -> Result<BasisSector> {
        let mut b = SectorBuilder::new(self.layout.levels, self.particles)
            .constraints(self.constraints.iter().map(|c| c.transposed(self.layout)))
            .capacity(usize::MAX);
        if let Some(c) = self.field_cutoff {
            b = b.field_cutoff(c);
        }
        b.build()
    }

    /// Same particle number and cutoff, constraint targets replaced.
    pub fn with_targets(&self, targets: &[i64]) -> Result<BasisSector> {
        if targets.len() != self.constraints.len() {
            return Err(Error::DimensionMismatch { expected: self.constraints.len(), found: targets.len() });
        }
        let mut b = SectorBuilder::new(self.layout.levels, self.particles)
            .constraints(
                self.constraints
                    .iter()
                    .zip(targets)
                    .map(|(c, &t)| SectorConstraint::new(c.coefficients.clone(), t)),
            )
            .capacity(usize::MAX);
        if let Some(c) = self.field_cutoff {
            b = b.field_cutoff(c);
        }
        b.build()
    }

    /// Same layout, particle number and constraint set (up to sign).
    pub fn same_shape(&self, other: &BasisSector) -> bool {
        self.layout == other.layout
            && self.particles == other.particles
            && self.field_cutoff == other.field_cutoff
            && normalized_set(&self.constraints) == normalized_set(&other.constraints)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_particle_two_levels() {
        let s = enumerate_basis(2, 1, &[]).unwrap();
        let v: Vec<Vec<u16>> = s.iter().map(|v| v.to_vec()).collect();
        assert_eq!(v, vec![vec![0, 0, 0, 1], vec![0, 0, 1, 0], vec![0, 1, 0, 0], vec![1, 0, 0, 0]]);
    }

    #[test]
    fn two_particles_two_levels_has_ten() {
        assert_eq!(enumerate_basis(2, 2, &[]).unwrap().len(), 10);
    }

    #[test]
    fn balanced_sector_at_hundred() {
        let s = enumerate_basis(2, 100, &two_level_emission_constraints()).unwrap();
        assert_eq!(s.len(), 2601);
        assert_eq!(sector_size_formula(2, 100, &two_level_emission_constraints()).unwrap(), 2601);
    }

    #[test]
    fn lambda_formula_values() {
        assert_eq!(sector_size_formula(4, 100, &lambda_constraints(false)).unwrap(), 89_726);
        assert_eq!(sector_size_formula(4, 10, &lambda_constraints(true)).unwrap(), 581);
        assert_eq!(enumerate_basis(4, 10, &lambda_constraints(true)).unwrap().len(), 581);
        assert_eq!(sector_size_formula(2, 1, &two_level_emission_constraints()).unwrap(), 2);
    }

    #[test]
    fn unsupported_constraint_set() {
        let c = SectorConstraint::vacant(Layout::atomic(2), 0, 1);
        assert!(matches!(sector_size_formula(2, 3, &[c]), Err(Error::UnsupportedConstraints)));
    }

    #[test]
    fn capacity_guard() {
        let r = SectorBuilder::new(3, 6).capacity(100).build();
        assert!(matches!(r, Err(Error::Capacity { limit: 100 })));
    }

    #[test]
    fn trace_weights() {
        let l = Layout::atomic(2);
        assert!((trace_weight(l, &[1, 0, 0, 1]) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(trace_weight(l, &[0, 1, 1, 0]), 0.0);
        assert_eq!(trace_weight(l, &[5, 0, 0, 0]), 1.0);
        // log-gamma path against the exact multinomial C(30, 12)
        let w = trace_weight(l, &[12, 0, 0, 18]);
        assert!((w * w / 86_493_225.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn composite_sector_with_field() {
        let layout = Layout::composite(2);
        let s = SectorBuilder::new(2, 1).field_cutoff(2).build().unwrap();
        assert_eq!(s.layout(), layout);
        assert_eq!(s.len(), 4 * 9);
        assert!(s.transpose_map().is_some());
    }

    #[test]
    fn transposed_sector_flips_coherence_target() {
        let l = Layout::atomic(2);
        let s = enumerate_basis(2, 3, &[SectorConstraint::pair_difference(l, (0, 1), (1, 0), 1)]).unwrap();
        assert!(s.transpose_map().is_none());
        let t = s.transposed().unwrap();
        assert_eq!(s.len(), t.len());
        for v in s.iter() {
            assert!(t.contains(&l.transposed(v)));
        }
    }
}
