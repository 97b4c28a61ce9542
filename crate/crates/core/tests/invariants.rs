//! Structural properties: trace and hermiticity preservation, the algebra of
//! collective superoperators, adjoint pairing, sector decomposition.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use proptest::prelude::*;

use superfock::basis::{enumerate_basis, BasisSector, SectorBuilder};
use superfock::dynamics::{evolve, evolve_adjoint, uniform_grid, IntegratorConfig};
use superfock::numeric::binomial_u128;
use superfock::observables::{expectation, OperatorCoefficients};
use superfock::scenarios::{tcm_monolithic, tcm_sectors, FieldState, TavisCummingsParams};
use superfock::sparse::CsrMatrix;
use superfock::states::pure_uncorrelated;
use superfock::superops::{
    assemble, bosonize, build_standard_dissipator, collective_decay, hamiltonian_commutator, HamiltonianTerm,
    LiouvillianOperator, RateTensor, SigmaKind, SigmaTerm,
};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn full(levels: usize, n: usize) -> Arc<BasisSector> {
    Arc::new(SectorBuilder::new(levels, n).build().unwrap())
}

/// Driven, locally and collectively damped three-level ladder.
fn three_level(n: usize) -> LiouvillianOperator {
    let h = [
        HamiltonianTerm { coefficient: c(0.7, 0.2), sigma: (0, 1), field: None },
        HamiltonianTerm { coefficient: c(0.7, -0.2), sigma: (1, 0), field: None },
        HamiltonianTerm { coefficient: c(0.4, 0.0), sigma: (2, 2), field: None },
    ];
    let mut monomials = hamiltonian_commutator(3, &h);
    let rates = RateTensor::new(3).transfer(2, 1, 0.8).transfer(1, 0, 0.3);
    monomials.extend(build_standard_dissipator(&rates).unwrap());
    monomials.extend(collective_decay(3, 0, 1, 0.5));
    assemble(&monomials, full(3, n)).unwrap()
}

fn sigma(levels: usize, kind: SigmaKind, sector: &Arc<BasisSector>) -> CsrMatrix {
    assemble(&bosonize(levels, &SigmaTerm::new(kind)), sector.clone()).unwrap().matrix_at(0.0)
}

fn commutator(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    a.matmul(b).combine(c(1.0, 0.0), &b.matmul(a), c(-1.0, 0.0))
}

fn max_diff(a: &CsrMatrix, b: &CsrMatrix) -> f64 {
    a.combine(c(1.0, 0.0), b, c(-1.0, 0.0)).max_abs()
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b { 1.0 } else { 0.0 }
}

fn zero(n: usize) -> CsrMatrix {
    CsrMatrix::zeros(n, n)
}

fn scaled(m: &CsrMatrix, s: f64) -> CsrMatrix {
    m.combine(c(s, 0.0), &zero(m.rows()), c(0.0, 0.0))
}

fn sum(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    a.combine(c(1.0, 0.0), b, c(1.0, 0.0))
}

#[test]
fn trace_and_hermiticity_preserved() {
    for n in 1..=4 {
        let l = three_level(n);
        let rho0 = pure_uncorrelated(&[c(0.6, 0.0), c(0.0, 0.64), c(0.48, 0.0)], l.sector().clone()).unwrap();
        let config = IntegratorConfig::default().with_grid(uniform_grid(0.0, 5.0, 11));
        for rho in evolve(&l, &rho0, &config).unwrap() {
            assert!((rho.trace_complex() - 1.0).norm() < 1e-8);
            assert!(rho.hermiticity_error().unwrap() < 1e-8);
        }
    }
}

/// Index tuples `(p, q, k, l)` of `Σ σ_pq ρ σ_kl`, as bosonic pairs
/// `a = (p, l)` (created) and `b = (q, k)` (destroyed).
fn gamma_algebra(levels: usize, n: usize, x: [usize; 4], y: [usize; 4]) -> f64 {
    let s = full(levels, n);
    let g = |v: [usize; 4]| sigma(levels, SigmaKind::Gamma(v[0], v[1], v[2], v[3]), &s);
    let lhs = commutator(&g(x), &g(y));
    // [b†_a b_b, b†_c b_d] = δ_bc b†_a b_d − δ_ad b†_c b_b
    let (a, b) = ((x[0], x[3]), (x[1], x[2]));
    let (cc, d) = ((y[0], y[3]), (y[1], y[2]));
    let t1 = scaled(&g([a.0, d.0, d.1, a.1]), delta(b.0, cc.0) * delta(b.1, cc.1));
    let t2 = scaled(&g([cc.0, b.0, b.1, cc.1]), -delta(a.0, d.0) * delta(a.1, d.1));
    max_diff(&lhs, &sum(&t1, &t2))
}

fn left_right_algebra(levels: usize, n: usize, x: [usize; 2], y: [usize; 2]) -> f64 {
    let s = full(levels, n);
    let l = |v: [usize; 2]| sigma(levels, SigmaKind::Left(v[0], v[1]), &s);
    let r = |v: [usize; 2]| sigma(levels, SigmaKind::Right(v[0], v[1]), &s);
    let [i, j] = x;
    let [p, q] = y;
    // left multiplication is a homomorphism, right multiplication an anti-homomorphism
    let left = max_diff(
        &commutator(&l(x), &l(y)),
        &sum(&scaled(&l([i, q]), delta(j, p)), &scaled(&l([p, j]), -delta(q, i))),
    );
    let right = max_diff(
        &commutator(&r(x), &r(y)),
        &sum(&scaled(&r([i, q]), -delta(j, p)), &scaled(&r([p, j]), delta(q, i))),
    );
    let mixed = commutator(&l(x), &r(y)).max_abs();
    left.max(right).max(mixed)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn gamma_superoperators_close(levels in 2usize..=3, n in 1usize..=4, x in prop::array::uniform4(0usize..3), y in prop::array::uniform4(0usize..3)) {
        let x = x.map(|i| i % levels);
        let y = y.map(|i| i % levels);
        prop_assert!(gamma_algebra(levels, n, x, y) < 1e-12);
    }

    #[test]
    fn left_and_right_multiplication(levels in 2usize..=3, n in 1usize..=4, x in prop::array::uniform2(0usize..3), y in prop::array::uniform2(0usize..3)) {
        let x = x.map(|i| i % levels);
        let y = y.map(|i| i % levels);
        prop_assert!(left_right_algebra(levels, n, x, y) < 1e-12);
    }

    #[test]
    fn basis_counts_and_order(levels in 1usize..=3, n in 0usize..=8) {
        let s = enumerate_basis(levels, n, &[]).unwrap();
        let slots = (levels * levels) as u64;
        prop_assert_eq!(s.len() as u128, binomial_u128(n as u64 + slots - 1, slots - 1).unwrap());
        let vs: Vec<Vec<u16>> = s.iter().map(|v| v.to_vec()).collect();
        for w in vs.windows(2) {
            prop_assert!(w[0] < w[1], "not strictly ascending");
        }
        for (k, v) in vs.iter().enumerate() {
            prop_assert_eq!(s.index_of(v), Some(k));
            prop_assert_eq!(v.iter().map(|&x| x as usize).sum::<usize>(), n);
        }
    }

    #[test]
    fn constrained_basis_is_subset(n in 0usize..=8, target in -3i64..=3) {
        let all = enumerate_basis(2, n, &[]).unwrap();
        let c = superfock::basis::SectorConstraint::pair_difference(superfock::basis::Layout::atomic(2), (0, 1), (1, 0), target);
        let part = enumerate_basis(2, n, std::slice::from_ref(&c)).unwrap();
        let expected: Vec<Vec<u16>> = all.iter().filter(|v| c.is_satisfied(v)).map(|v| v.to_vec()).collect();
        let got: Vec<Vec<u16>> = part.iter().map(|v| v.to_vec()).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn adjoint_pairing(n in 1usize..=3, seed in 0u64..1000) {
        let l = three_level(n);
        let s = l.sector().clone();
        let rho0 = pure_uncorrelated(&[c(0.8, 0.0), c(0.0, 0.6), c(0.0, 0.0)], s.clone()).unwrap();
        let o0 = OperatorCoefficients::from_fn(s.clone(), |v| {
            let h = v.iter().fold(seed, |acc, &x| acc.wrapping_mul(6364136223846793005).wrapping_add(x as u64 + 1442695040888963407));
            c(((h >> 11) % 1000) as f64 / 500.0 - 1.0, ((h >> 31) % 1000) as f64 / 500.0 - 1.0)
        });
        let config = IntegratorConfig::default().with_tolerances(1e-11, 1e-13).with_grid(uniform_grid(0.0, 2.0, 5));
        let rho_t = evolve(&l, &rho0, &config).unwrap();
        let o_t = evolve_adjoint(&l, &o0, &config).unwrap();
        for (rho, o) in rho_t.iter().zip(&o_t) {
            let forward = expectation(&o0, rho).unwrap();
            let backward = expectation(o, &rho0).unwrap();
            prop_assert!((forward - backward).norm() < 1e-9, "{forward} vs {backward}");
        }
    }
}

#[test]
fn sector_decomposition_is_linear() {
    for (n, p2, field) in [(1, 1.0, FieldState::Fock(2)), (2, 0.6, FieldState::Vacuum), (3, 0.5, FieldState::Fock(1)), (2, 0.4, FieldState::Fock(2))] {
        let mut params = TavisCummingsParams::new(n, p2, field, 2.0);
        params.n_max = Some(4);
        let config = IntegratorConfig::default().with_tolerances(1e-11, 1e-13).with_grid(uniform_grid(0.0, 2.0, 6));
        let (mono_l, mono_rho) = tcm_monolithic(&params).unwrap();
        let mono = evolve(&mono_l, &mono_rho, &config).unwrap();
        let (sectors, _) = tcm_sectors(&params).unwrap();
        let mut covered = 0;
        for s in &sectors {
            let run = evolve(&s.liouvillian, &s.initial, &config).unwrap();
            for (part, whole) in run.iter().zip(&mono) {
                for (v, x) in part.sector().iter().zip(part.values()) {
                    assert!((whole.get(v) - x).norm() < 1e-9, "N = {n}, vector {v:?}");
                }
            }
            covered += s.liouvillian.dim();
        }
        // vectors outside every sector stay empty
        let last = mono.last().unwrap();
        let outside: f64 = last
            .sector()
            .iter()
            .zip(last.values())
            .filter(|(v, _)| !sectors.iter().any(|s| s.liouvillian.sector().contains(v)))
            .map(|(_, x)| x.norm())
            .fold(0.0, f64::max);
        assert!(outside < 1e-12);
        assert!(covered <= mono_l.dim());
    }
}
