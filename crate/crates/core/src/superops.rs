//! Bosonization of collective σ-superoperators and sparse assembly of
//! Liouvillians on a [`BasisSector`].
//!
//! Collective sums of single-particle projectors acting on a density matrix
//! from the left, from the right, or from both sides on the same particle are
//! rewritten as bilinears of the double-subscript bosonic superoperators
//! `b†_ij`, `b_ij`. Levels are 0-based throughout.
//!
//! Assembled matrices act on the expansion coefficients `ρ({n})`, not on
//! orthonormal superket amplitudes. In that convention a normal-ordered
//! monomial maps a source vector `n` to `n - annihilated + created` with the
//! integer weight `Π n_x!/(n_x - k_x)!` over its annihilated modes.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::basis::{BasisSector, Count, Layout};
use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, RealCsr};
use crate::states::DensityCoefficients;

/// Atomic generalized state `|p⟩⟨q|`, as `(p, q)`.
pub type Pair = (usize, usize);

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Single-mode field operator acting on the field matrix unit `|n_L⟩⟨n_R|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldOp {
    /// `a ρ`
    LeftA,
    /// `a† ρ`
    LeftAdag,
    /// `ρ a`
    RightA,
    /// `ρ a†`
    RightAdag,
}

impl fmt::Display for FieldOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldOp::LeftA => "a",
            FieldOp::LeftAdag => "a†",
            FieldOp::RightA => "aᵀ",
            FieldOp::RightAdag => "a†ᵀ",
        })
    }
}

/// Scalar time envelope multiplying part of a Liouvillian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Envelope {
    /// `area · exp(-(t - center)² / 2 width²) / sqrt(2π width²)`
    Gaussian { area: f64, center: f64, width: f64 },
    Constant(f64),
}

impl Envelope {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Envelope::Gaussian { area, center, width } => {
                let z = (t - center) / width;
                area * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI * width * width).sqrt()
            }
            Envelope::Constant(v) => v,
        }
    }

    fn key(&self) -> (u8, [u64; 3]) {
        match *self {
            Envelope::Gaussian { area, center, width } => (0, [area.to_bits(), center.to_bits(), width.to_bits()]),
            Envelope::Constant(v) => (1, [v.to_bits(), 0, 0]),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Envelope::Gaussian { area, center, width } => {
                format!("gaussian(area={area}, center={center}, width={width})")
            }
            Envelope::Constant(v) => format!("constant({v})"),
        }
    }
}

/// Collective σ-superoperators before bosonization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaKind {
    /// `Σ_μ σ_μ,pq ρ`
    Left(usize, usize),
    /// `Σ_μ ρ σ_μ,kℓ`
    Right(usize, usize),
    /// `Σ_μ σ_μ,pq ρ σ_μ,kℓ`, given as `(p, q, k, ℓ)`
    Gamma(usize, usize, usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaTerm {
    pub kind: SigmaKind,
    pub coefficient: C64,
    pub envelope: Option<Envelope>,
}

impl SigmaTerm {
    pub fn new(kind: SigmaKind) -> Self {
        SigmaTerm { kind, coefficient: ONE, envelope: None }
    }

    pub fn scaled(kind: SigmaKind, coefficient: C64) -> Self {
        SigmaTerm { kind, coefficient, envelope: None }
    }
}

/// `coefficient · b†... b... · field...`, with all creators to the left of
/// all annihilators. Field operators are applied right to left.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperOpMonomial {
    pub coefficient: C64,
    pub envelope: Option<Envelope>,
    pub creators: Vec<Pair>,
    pub annihilators: Vec<Pair>,
    pub field: Vec<FieldOp>,
}

impl SuperOpMonomial {
    pub fn new(coefficient: C64, creators: Vec<Pair>, annihilators: Vec<Pair>) -> Self {
        SuperOpMonomial { coefficient, envelope: None, creators, annihilators, field: Vec::new() }
    }

    /// `c · b†_x b_y`
    pub fn bilinear(coefficient: C64, x: Pair, y: Pair) -> Self {
        SuperOpMonomial::new(coefficient, vec![x], vec![y])
    }

    /// The identity superoperator.
    pub fn identity(coefficient: C64) -> Self {
        SuperOpMonomial::new(coefficient, Vec::new(), Vec::new())
    }

    pub fn field_only(coefficient: C64, field: Vec<FieldOp>) -> Self {
        SuperOpMonomial { coefficient, envelope: None, creators: Vec::new(), annihilators: Vec::new(), field }
    }

    pub fn with_envelope(mut self, envelope: Envelope) -> Self {
        self.envelope = Some(envelope);
        self
    }

    pub fn scaled(mut self, s: C64) -> Self {
        self.coefficient *= s;
        self
    }

    pub fn order(&self) -> usize {
        self.creators.len()
    }

    fn key(&self) -> MonomialKey {
        let mut c = self.creators.clone();
        let mut a = self.annihilators.clone();
        c.sort_unstable();
        a.sort_unstable();
        (self.envelope.map(|e| e.key()), c, a, self.field.clone())
    }
}

type MonomialKey = (Option<(u8, [u64; 3])>, Vec<Pair>, Vec<Pair>, Vec<FieldOp>);

impl fmt::Display for SuperOpMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}{:+}i)", self.coefficient.re, self.coefficient.im)?;
        if let Some(e) = &self.envelope {
            write!(f, "·{}", e.label())?;
        }
        for (p, q) in &self.creators {
            write!(f, " b†{p}{q}")?;
        }
        for (p, q) in &self.annihilators {
            write!(f, " b{p}{q}")?;
        }
        for op in &self.field {
            write!(f, " {op}")?;
        }
        Ok(())
    }
}

/// Merges monomials that differ only in the order of commuting factors and
/// drops cancelled terms. Output order is deterministic.
pub fn simplify(monomials: impl IntoIterator<Item = SuperOpMonomial>) -> Vec<SuperOpMonomial> {
    let mut acc: BTreeMap<MonomialKey, SuperOpMonomial> = BTreeMap::new();
    for m in monomials {
        let key = m.key();
        match acc.get_mut(&key) {
            Some(existing) => existing.coefficient += m.coefficient,
            None => {
                let mut m = m;
                m.creators.sort_unstable();
                m.annihilators.sort_unstable();
                acc.insert(key, m);
            }
        }
    }
    acc.into_values().filter(|m| m.coefficient != ZERO).collect()
}

/// Bosonic rewrite of one collective σ-superoperator.
pub fn bosonize(levels: usize, term: &SigmaTerm) -> Vec<SuperOpMonomial> {
    let c = term.coefficient;
    let out: Vec<SuperOpMonomial> = match term.kind {
        SigmaKind::Left(p, q) => (0..levels).map(|t| SuperOpMonomial::bilinear(c, (p, t), (q, t))).collect(),
        SigmaKind::Right(k, l) => (0..levels).map(|s| SuperOpMonomial::bilinear(c, (s, l), (s, k))).collect(),
        SigmaKind::Gamma(p, q, k, l) => vec![SuperOpMonomial::bilinear(c, (p, l), (q, k))],
    };
    match term.envelope {
        Some(e) => out.into_iter().map(|m| m.with_envelope(e)).collect(),
        None => out,
    }
}

/// Two-particle matrix element keyed by `(s₁t₁, s₂t₂, i₂j₂, i₁j₁)`.
pub type TwoBodyElement = ((Pair, Pair, Pair, Pair), C64);

/// `Σ V · b†_{s₁t₁} b†_{s₂t₂} b_{i₂j₂} b_{i₁j₁}` over the given elements.
pub fn bosonize_two_body(elements: &[TwoBodyElement]) -> Vec<SuperOpMonomial> {
    elements
        .iter()
        .filter(|(_, v)| *v != ZERO)
        .map(|&((s1, s2, i2, i1), v)| SuperOpMonomial::new(v, vec![s1, s2], vec![i2, i1]))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Letter {
    Cre(Pair),
    Ann(Pair),
}

/// Normal-orders a word of bosonic letters via `b_x b†_y = b†_y b_x + δ_xy`.
fn normal_order(word: Vec<Letter>, weight: f64, out: &mut Vec<(f64, Vec<Pair>, Vec<Pair>)>) {
    let swap = word
        .windows(2)
        .position(|w| matches!(w, [Letter::Ann(_), Letter::Cre(_)]));
    match swap {
        None => {
            let mut cre = Vec::new();
            let mut ann = Vec::new();
            for l in word {
                match l {
                    Letter::Cre(x) => cre.push(x),
                    Letter::Ann(x) => ann.push(x),
                }
            }
            out.push((weight, cre, ann));
        }
        Some(i) => {
            let (x, y) = match (word[i], word[i + 1]) {
                (Letter::Ann(x), Letter::Cre(y)) => (x, y),
                _ => unreachable!(),
            };
            let mut swapped = word.clone();
            swapped.swap(i, i + 1);
            normal_order(swapped, weight, out);
            if x == y {
                let mut contracted = word;
                contracted.drain(i..i + 2);
                normal_order(contracted, weight, out);
            }
        }
    }
}

/// Operator product `a ∘ b` (apply `b`, then `a`) in normal order.
pub fn compose(a: &SuperOpMonomial, b: &SuperOpMonomial) -> Result<Vec<SuperOpMonomial>> {
    let envelope = match (a.envelope, b.envelope) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument("product of two time envelopes is not supported".into()))
        }
        (e, None) | (None, e) => e,
    };
    let word: Vec<Letter> = a
        .creators
        .iter()
        .map(|&x| Letter::Cre(x))
        .chain(a.annihilators.iter().map(|&x| Letter::Ann(x)))
        .chain(b.creators.iter().map(|&x| Letter::Cre(x)))
        .chain(b.annihilators.iter().map(|&x| Letter::Ann(x)))
        .collect();
    let mut ordered = Vec::new();
    normal_order(word, 1.0, &mut ordered);
    let coefficient = a.coefficient * b.coefficient;
    let field: Vec<FieldOp> = a.field.iter().chain(&b.field).copied().collect();
    Ok(ordered
        .into_iter()
        .map(|(w, cre, ann)| SuperOpMonomial {
            coefficient: coefficient * w,
            envelope,
            creators: cre,
            annihilators: ann,
            field: field.clone(),
        })
        .collect())
}

/// Product of two monomial sums, `a ∘ b`.
pub fn compose_sums(a: &[SuperOpMonomial], b: &[SuperOpMonomial]) -> Result<Vec<SuperOpMonomial>> {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            out.extend(compose(x, y)?);
        }
    }
    Ok(simplify(out))
}

/// Rate tensor `Γ_ijpq` of a per-particle dissipator
/// `Σ Γ_ijpq Σ_μ { σ_ij ρ σ_qp − δ_ip/2 (σ_qj ρ + ρ σ_qj) }`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RateTensor {
    levels: usize,
    entries: BTreeMap<(usize, usize, usize, usize), C64>,
}

impl RateTensor {
    pub fn new(levels: usize) -> Self {
        RateTensor { levels, entries: BTreeMap::new() }
    }

    pub fn set(mut self, i: usize, j: usize, p: usize, q: usize, value: C64) -> Self {
        self.entries.insert((i, j, p, q), value);
        self
    }

    /// Incoherent transfer `upper -> lower` at `rate` (jump operator `σ_lower,upper`).
    pub fn transfer(self, upper: usize, lower: usize, rate: f64) -> Self {
        self.set(lower, upper, lower, upper, C64::new(rate, 0.0))
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn get(&self, i: usize, j: usize, p: usize, q: usize) -> C64 {
        self.entries.get(&(i, j, p, q)).copied().unwrap_or(ZERO)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize, usize), C64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// Hermiticity of the rate matrix over index pairs: `Γ_ijpq = conj Γ_pqij`.
    pub fn check_hermitian(&self, tol: f64) -> Result<()> {
        for (&(i, j, p, q), &v) in &self.entries {
            let partner = self.get(p, q, i, j);
            if (v - partner.conj()).norm() > tol {
                return Err(Error::InvalidArgument(format!(
                    "rate tensor is not hermitian at ({i},{j},{p},{q})"
                )));
            }
        }
        Ok(())
    }
}

/// Bosonized per-particle Lindblad dissipator
/// `Σ Γ_ijpq { b†_ip b_jq − δ_ip/2 Σ_t (b†_qt b_jt + b†_tj b_tq) }`.
pub fn build_standard_dissipator(rates: &RateTensor) -> Result<Vec<SuperOpMonomial>> {
    rates.check_hermitian(1e-12)?;
    let m = rates.levels();
    let mut out = Vec::new();
    for ((i, j, p, q), g) in rates.iter() {
        if g == ZERO {
            continue;
        }
        out.push(SuperOpMonomial::bilinear(g, (i, p), (j, q)));
        if i == p {
            for t in 0..m {
                out.push(SuperOpMonomial::bilinear(-0.5 * g, (q, t), (j, t)));
                out.push(SuperOpMonomial::bilinear(-0.5 * g, (t, j), (t, q)));
            }
        }
    }
    Ok(simplify(out))
}

/// Collective decay `upper -> lower` at `rate`:
/// `rate · (J₋ ρ J₊ − ½ {J₊ J₋, ρ})` with `J₋ = Σ_μ σ_μ,lower,upper`,
/// built by composing bosonized left and right collective operators.
pub fn collective_decay(levels: usize, lower: usize, upper: usize, rate: f64) -> Vec<SuperOpMonomial> {
    let left = |p, q| bosonize(levels, &SigmaTerm::new(SigmaKind::Left(p, q)));
    let right = |k, l| bosonize(levels, &SigmaTerm::new(SigmaKind::Right(k, l)));
    let g = C64::new(rate, 0.0);
    let jump = compose_sums(&left(lower, upper), &right(upper, lower)).unwrap();
    let left_num = compose_sums(&left(upper, lower), &left(lower, upper)).unwrap();
    let right_num = compose_sums(&right(lower, upper), &right(upper, lower)).unwrap();
    simplify(
        jump.into_iter()
            .map(|m| m.scaled(g))
            .chain(left_num.into_iter().map(|m| m.scaled(-0.5 * g)))
            .chain(right_num.into_iter().map(|m| m.scaled(-0.5 * g))),
    )
}

/// Field factor attached to a Hamiltonian term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldFactor {
    Annihilate,
    Create,
}

/// `coefficient · J_pq · [field]` with `J_pq = Σ_μ σ_μ,pq`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianTerm {
    pub coefficient: C64,
    pub sigma: Pair,
    pub field: Option<FieldFactor>,
}

/// Bosonized `i (ρ H − H ρ)` for a one-body (optionally field-coupled) Hamiltonian.
pub fn hamiltonian_commutator(levels: usize, terms: &[HamiltonianTerm]) -> Vec<SuperOpMonomial> {
    let i = C64::new(0.0, 1.0);
    let mut out = Vec::new();
    for h in terms {
        let (p, q) = h.sigma;
        let (left_f, right_f) = match h.field {
            None => (vec![], vec![]),
            Some(FieldFactor::Annihilate) => (vec![FieldOp::LeftA], vec![FieldOp::RightA]),
            Some(FieldFactor::Create) => (vec![FieldOp::LeftAdag], vec![FieldOp::RightAdag]),
        };
        for mut m in bosonize(levels, &SigmaTerm::scaled(SigmaKind::Left(p, q), -i * h.coefficient)) {
            m.field = left_f.clone();
            out.push(m);
        }
        for mut m in bosonize(levels, &SigmaTerm::scaled(SigmaKind::Right(p, q), i * h.coefficient)) {
            m.field = right_f.clone();
            out.push(m);
        }
    }
    simplify(out)
}

/// Monomial resolved to slot indices of a [`Layout`].
#[derive(Clone, Debug)]
struct CompiledMonomial {
    coefficient: C64,
    annihilate: Vec<usize>,
    create: Vec<usize>,
    field: Vec<FieldOp>,
    source: usize,
}

impl CompiledMonomial {
    fn compile(layout: Layout, m: &SuperOpMonomial, source: usize) -> Result<Self> {
        let levels = layout.levels();
        let slot = |&(p, q): &Pair| -> Result<usize> {
            if p >= levels || q >= levels {
                return Err(Error::InvalidArgument(format!("index ({p},{q}) out of range for {levels} levels")));
            }
            Ok(layout.slot(p, q))
        };
        if m.creators.len() != m.annihilators.len() {
            return Err(Error::InvalidArgument(format!("monomial {m} does not conserve particle number")));
        }
        if !m.field.is_empty() && !layout.has_field() {
            return Err(Error::InvalidArgument(format!("monomial {m} needs a composite basis")));
        }
        Ok(CompiledMonomial {
            coefficient: m.coefficient,
            annihilate: m.annihilators.iter().map(slot).collect::<Result<_>>()?,
            create: m.creators.iter().map(slot).collect::<Result<_>>()?,
            field: m.field.clone(),
            source,
        })
    }

    /// Writes the image of `src` into `buf`; returns the real weight, or
    /// `None` when the monomial annihilates the vector.
    #[inline]
    fn act(&self, layout: Layout, src: &[Count], buf: &mut [Count]) -> Option<f64> {
        buf.copy_from_slice(src);
        let mut w = 1.0;
        for &s in &self.annihilate {
            if buf[s] == 0 {
                return None;
            }
            w *= buf[s] as f64;
            buf[s] -= 1;
        }
        for &s in &self.create {
            buf[s] += 1;
        }
        if !self.field.is_empty() {
            let l = layout.field_left().unwrap();
            let r = layout.field_right().unwrap();
            for op in self.field.iter().rev() {
                match op {
                    FieldOp::LeftA => {
                        if buf[l] == 0 {
                            return None;
                        }
                        w *= (buf[l] as f64).sqrt();
                        buf[l] -= 1;
                    }
                    FieldOp::LeftAdag => {
                        buf[l] += 1;
                        w *= (buf[l] as f64).sqrt();
                    }
                    FieldOp::RightA => {
                        buf[r] += 1;
                        w *= (buf[r] as f64).sqrt();
                    }
                    FieldOp::RightAdag => {
                        if buf[r] == 0 {
                            return None;
                        }
                        w *= (buf[r] as f64).sqrt();
                        buf[r] -= 1;
                    }
                }
            }
        }
        Some(w)
    }
}

/// Sparse Liouvillian on a sector, `L(t) = C + Σ_k e_k(t) P_k`.
#[derive(Clone, Debug)]
pub struct LiouvillianOperator {
    sector: Arc<BasisSector>,
    monomials: Option<Vec<SuperOpMonomial>>,
    constant: CsrMatrix,
    envelope_parts: Vec<(Envelope, CsrMatrix)>,
    truncation: FieldTruncation,
}

/// Real-valued generator for real coefficient vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct RealLiouvillian {
    constant: RealCsr,
    parts: Vec<(Envelope, RealCsr)>,
}

impl RealLiouvillian {
    pub fn apply_into(&self, t: f64, x: &[f64], y: &mut [f64]) {
        self.constant.mul_into(x, y);
        for (e, m) in &self.parts {
            let s = e.eval(t);
            if s != 0.0 {
                m.mul_add(x, s, y);
            }
        }
    }
}

/// Norm-based bound on the spectral radius of a time-dependent operator.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBound {
    constant: [f64; 2],
    parts: Vec<(Envelope, [f64; 2])>,
}

impl SpectralBound {
    pub fn at(&self, t: f64) -> f64 {
        let norm = |k: usize| self.constant[k] + self.parts.iter().map(|(e, n)| e.eval(t).abs() * n[k]).sum::<f64>();
        norm(0).min(norm(1))
    }
}

/// What assembly does when a monomial pushes a field label past the cutoff.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FieldTruncation {
    /// Report [`Error::TruncationOverflow`].
    #[default]
    Error,
    /// Drop the transition, as a truncated field mode does.
    Drop,
}

/// Assembles monomials into a sparse operator on the coefficients `ρ({n})`.
pub fn assemble(monomials: &[SuperOpMonomial], sector: Arc<BasisSector>) -> Result<LiouvillianOperator> {
    assemble_with(monomials, sector, FieldTruncation::Error)
}

pub fn assemble_with(monomials: &[SuperOpMonomial], sector: Arc<BasisSector>, truncation: FieldTruncation) -> Result<LiouvillianOperator> {
    let layout = sector.layout();
    let monomials = simplify(monomials.iter().cloned());
    // group by envelope, constant group first
    let mut groups: Vec<(Option<Envelope>, Vec<CompiledMonomial>)> = vec![(None, Vec::new())];
    for (idx, m) in monomials.iter().enumerate() {
        let compiled = CompiledMonomial::compile(layout, m, idx)?;
        match groups.iter_mut().find(|(e, _)| e.map(|e| e.key()) == m.envelope.map(|e| e.key())) {
            Some((_, list)) => list.push(compiled),
            None => groups.push((m.envelope, vec![compiled])),
        }
    }
    let mut matrices = Vec::with_capacity(groups.len());
    for (_, group) in &groups {
        matrices.push(assemble_group(group, &monomials, &sector, truncation)?);
    }
    let mut it = groups.into_iter().zip(matrices);
    let (_, constant) = it.next().unwrap();
    let envelope_parts = it.map(|((e, _), m)| (e.unwrap(), m)).collect();
    Ok(LiouvillianOperator { sector, monomials: Some(monomials), constant, envelope_parts, truncation })
}

const ASSEMBLY_CHUNK: usize = 4096;

fn assemble_group(
    group: &[CompiledMonomial],
    monomials: &[SuperOpMonomial],
    sector: &BasisSector,
    truncation: FieldTruncation,
) -> Result<CsrMatrix> {
    let n = sector.len();
    let layout = sector.layout();
    let width = layout.width();
    let chunks: Vec<Result<(Vec<usize>, Vec<u32>, Vec<C64>)>> = (0..n.div_ceil(ASSEMBLY_CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * ASSEMBLY_CHUNK;
            let hi = (lo + ASSEMBLY_CHUNK).min(n);
            let mut buf = vec![0; width];
            let mut lens = Vec::with_capacity(hi - lo);
            let mut rows = Vec::new();
            let mut vals = Vec::new();
            let mut column: Vec<(u32, C64)> = Vec::new();
            for k in lo..hi {
                let src = sector.vector(k);
                column.clear();
                for m in group {
                    let Some(w) = m.act(layout, src, &mut buf) else { continue };
                    match sector.index_of(&buf) {
                        Some(target) => column.push((target as u32, m.coefficient * w)),
                        None => {
                            let over_cutoff = sector.field_cutoff().is_some_and(|c| buf[layout.atomic_width()..].iter().any(|&x| x > c));
                            if over_cutoff && truncation == FieldTruncation::Drop {
                                continue;
                            }
                            if over_cutoff {
                                return Err(Error::TruncationOverflow { n_max: sector.field_cutoff().unwrap() });
                            }
                            return Err(Error::SectorViolation {
                                monomial: monomials[m.source].to_string(),
                                vector: src.to_vec(),
                            });
                        }
                    }
                }
                column.sort_unstable_by_key(|&(r, _)| r);
                let start = rows.len();
                for &(r, v) in column.iter() {
                    if rows.len() > start && *rows.last().unwrap() == r {
                        *vals.last_mut().unwrap() += v;
                    } else {
                        rows.push(r);
                        vals.push(v);
                    }
                }
                // drop cancelled entries
                let mut write = start;
                for read in start..rows.len() {
                    if vals[read] != ZERO {
                        rows[write] = rows[read];
                        vals[write] = vals[read];
                        write += 1;
                    }
                }
                rows.truncate(write);
                vals.truncate(write);
                lens.push(write - start);
            }
            Ok((lens, rows, vals))
        })
        .collect();
    let mut col_ptr = Vec::with_capacity(n + 1);
    col_ptr.push(0usize);
    let mut row_idx = Vec::new();
    let mut values = Vec::new();
    for chunk in chunks {
        let (lens, rows, vals) = chunk?;
        for l in lens {
            col_ptr.push(col_ptr.last().unwrap() + l);
        }
        row_idx.extend(rows);
        values.extend(vals);
    }
    Ok(CsrMatrix::from_csc(n, &col_ptr, &row_idx, &values))
}

impl LiouvillianOperator {
    pub fn zero(sector: Arc<BasisSector>) -> Self {
        let n = sector.len();
        LiouvillianOperator {
            sector,
            monomials: Some(Vec::new()),
            constant: CsrMatrix::zeros(n, n),
            envelope_parts: Vec::new(),
            truncation: FieldTruncation::Error,
        }
    }

    pub fn sector(&self) -> &Arc<BasisSector> {
        &self.sector
    }

    pub fn dim(&self) -> usize {
        self.sector.len()
    }

    /// Source monomials; `None` for operators not built from monomials (adjoints).
    pub fn monomials(&self) -> Option<&[SuperOpMonomial]> {
        self.monomials.as_deref()
    }

    pub fn constant_part(&self) -> &CsrMatrix {
        &self.constant
    }

    pub fn envelope_parts(&self) -> &[(Envelope, CsrMatrix)] {
        &self.envelope_parts
    }

    /// Real copy of the operator when no entry has an imaginary part.
    pub fn real_form(&self) -> Option<RealLiouvillian> {
        let constant = self.constant.real_form()?;
        let parts = self.envelope_parts.iter().map(|(e, m)| Some((*e, m.real_form()?))).collect::<Option<_>>()?;
        Some(RealLiouvillian { constant, parts })
    }

    /// Upper bound on the spectral radius of `L(t)` from induced norms.
    pub fn spectral_bound(&self) -> SpectralBound {
        let norms = |m: &CsrMatrix| [m.norm_one(), m.norm_inf()];
        SpectralBound {
            constant: norms(&self.constant),
            parts: self.envelope_parts.iter().map(|(e, m)| (*e, norms(m))).collect(),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        !self.envelope_parts.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.constant.nnz() + self.envelope_parts.iter().map(|(_, m)| m.nnz()).sum::<usize>()
    }

    /// Re-assembles the same monomials on another sector.
    pub fn reassemble(&self, sector: Arc<BasisSector>) -> Result<LiouvillianOperator> {
        match &self.monomials {
            Some(m) => assemble_with(m, sector, self.truncation),
            None => Err(Error::InvalidArgument("operator has no monomial form".into())),
        }
    }

    /// `y = L(t) x`
    pub fn apply_into(&self, t: f64, x: &[C64], y: &mut [C64]) {
        self.constant.mul_into(x, y);
        for (e, m) in &self.envelope_parts {
            let s = e.eval(t);
            if s != 0.0 {
                m.mul_add(x, C64::new(s, 0.0), y);
            }
        }
    }

    pub fn apply(&self, rho: &DensityCoefficients, t: f64) -> Result<DensityCoefficients> {
        if rho.values().len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: rho.values().len() });
        }
        let mut y = vec![ZERO; self.dim()];
        self.apply_into(t, rho.values(), &mut y);
        Ok(DensityCoefficients::from_values(self.sector.clone(), y, rho.time()))
    }

    /// Full matrix `L(t)` with the envelopes evaluated.
    pub fn matrix_at(&self, t: f64) -> CsrMatrix {
        let mut trip: Vec<(u32, u32, C64)> = self.constant.iter().map(|(r, c, v)| (r as u32, c as u32, v)).collect();
        for (e, m) in &self.envelope_parts {
            let s = e.eval(t);
            trip.extend(m.iter().map(|(r, c, v)| (r as u32, c as u32, v * s)));
        }
        CsrMatrix::from_triplets(self.dim(), self.dim(), trip)
    }
}

/// Operator `Λ` on the transposed sector with `P(ΛO, ρ) = P(O, Lρ)` for the
/// transposed pairing `P(O, ρ) = Σ_n O(n) ρ(nᵀ)`; entrywise
/// `Λ[m, n] = L[nᵀ, mᵀ]`.
pub fn adjoint(l: &LiouvillianOperator) -> Result<LiouvillianOperator> {
    let sector = l.sector();
    let layout = sector.layout();
    let (target, map): (Arc<BasisSector>, Vec<u32>) = match sector.transpose_map() {
        Some(map) => (sector.clone(), map.to_vec()),
        None => {
            let t = Arc::new(sector.transposed()?);
            let mut buf = vec![0; layout.width()];
            let mut map = Vec::with_capacity(sector.len());
            for v in sector.iter() {
                layout.transpose_into(v, &mut buf);
                map.push(t.index_of(&buf).ok_or_else(|| Error::InvalidArgument("transposed sector mismatch".into()))? as u32);
            }
            (t, map)
        }
    };
    let f = |k: usize| map[k] as usize;
    Ok(LiouvillianOperator {
        sector: target,
        monomials: None,
        constant: l.constant.permuted_transpose(f, f),
        envelope_parts: l.envelope_parts.iter().map(|(e, m)| (*e, m.permuted_transpose(f, f))).collect(),
        truncation: l.truncation,
    })
}

/// Shift of every constraint value produced by the monomials; all monomials
/// must agree.
pub fn constraint_shift(monomials: &[SuperOpMonomial], sector: &BasisSector) -> Result<Vec<i64>> {
    let layout = sector.layout();
    let mut shift: Option<Vec<i64>> = None;
    for m in monomials {
        let c = CompiledMonomial::compile(layout, m, 0)?;
        let s: Vec<i64> = sector
            .constraints()
            .iter()
            .map(|con| {
                let coef = con.coefficients();
                let mut d: i64 = c.create.iter().map(|&s| coef[s]).sum::<i64>() - c.annihilate.iter().map(|&s| coef[s]).sum::<i64>();
                if let (Some(l), Some(r)) = (layout.field_left(), layout.field_right()) {
                    for op in &c.field {
                        d += match op {
                            FieldOp::LeftA => -coef[l],
                            FieldOp::LeftAdag => coef[l],
                            FieldOp::RightA => coef[r],
                            FieldOp::RightAdag => -coef[r],
                        };
                    }
                }
                d
            })
            .collect();
        match &shift {
            None => shift = Some(s),
            Some(prev) if *prev != s => {
                return Err(Error::InvalidArgument(format!("monomial {m} shifts the sector differently")))
            }
            _ => {}
        }
    }
    Ok(shift.unwrap_or_else(|| vec![0; sector.constraints().len()]))
}

/// Applies a monomial sum mapping `ρ` on its sector into the shifted sector.
pub fn apply_between(monomials: &[SuperOpMonomial], rho: &DensityCoefficients) -> Result<DensityCoefficients> {
    let sector = rho.sector();
    let shift = constraint_shift(monomials, sector)?;
    let targets: Vec<i64> = sector.constraints().iter().zip(&shift).map(|(c, d)| c.target() + d).collect();
    let out_sector = if shift.iter().all(|&d| d == 0) {
        sector.clone()
    } else {
        Arc::new(sector.with_targets(&targets)?)
    };
    let layout = sector.layout();
    let compiled: Vec<CompiledMonomial> = monomials
        .iter()
        .enumerate()
        .map(|(i, m)| CompiledMonomial::compile(layout, m, i))
        .collect::<Result<_>>()?;
    let mut out = vec![ZERO; out_sector.len()];
    let mut buf = vec![0; layout.width()];
    for (k, v) in sector.iter().enumerate() {
        let x = rho.values()[k];
        if x == ZERO {
            continue;
        }
        for m in &compiled {
            let Some(w) = m.act(layout, v, &mut buf) else { continue };
            let t = out_sector.index_of(&buf).ok_or_else(|| Error::SectorViolation {
                monomial: monomials[m.source].to_string(),
                vector: v.to_vec(),
            })?;
            out[t] += m.coefficient * w * x;
        }
    }
    Ok(DensityCoefficients::from_values(out_sector, out, rho.time()))
}
