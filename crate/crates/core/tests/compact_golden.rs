//! Collective-decay generator of two-level atoms against the closed-form
//! coefficients of the master equation in occupation numbers.
//!
//! Counts are (n_gg, n_ge, n_eg, n_ee) with level 0 the ground state.

use std::collections::BTreeMap;
use std::sync::Arc;

use superfock::basis::{BasisSector, Layout, SectorBuilder, SectorConstraint};
use superfock::scenarios::compact_monomials;
use superfock::superops::{assemble, collective_decay, SuperOpMonomial};

/// `dρ(n)/dt = Σ_src c(n, src) ρ(src)` written out by hand.
fn closed_form(sector: &BasisSector) -> BTreeMap<(usize, usize), f64> {
    let mut out = BTreeMap::new();
    for (row, v) in sector.iter().enumerate() {
        let [a, b, c, d] = [v[0] as i64, v[1] as i64, v[2] as i64, v[3] as i64];
        let (af, bf, cf, df) = (a as f64, b as f64, c as f64, d as f64);
        let entries = [
            ([a, b, c, d], -(df + 0.5 * (bf + cf) * (af + df + 1.0))),
            ([a - 1, b, c, d + 1], (df + 1.0) * (bf + cf + 1.0)),
            ([a - 2, b + 1, c + 1, d], (bf + 1.0) * (cf + 1.0)),
            ([a - 1, b + 1, c + 1, d - 1], -(bf + 1.0) * (cf + 1.0)),
            ([a, b - 1, c - 1, d + 2], (df + 1.0) * (df + 2.0)),
            ([a + 1, b - 1, c - 1, d + 1], -(af + 1.0) * (df + 1.0)),
        ];
        for (src, coef) in entries {
            if coef == 0.0 || src.iter().any(|&x| x < 0) {
                continue;
            }
            let counts: Vec<u16> = src.iter().map(|&x| x as u16).collect();
            let col = sector.index_of(&counts).expect("source stays in the sector");
            *out.entry((row, col)).or_insert(0.0) += coef;
        }
    }
    out.retain(|_, v| *v != 0.0);
    out
}

fn generator(monomials: &[SuperOpMonomial], sector: &Arc<BasisSector>) -> BTreeMap<(usize, usize), f64> {
    let m = assemble(monomials, sector.clone()).unwrap().matrix_at(0.0);
    m.iter()
        .map(|(r, c, v)| {
            assert_eq!(v.im, 0.0);
            ((r, c), v.re)
        })
        .collect()
}

fn sector(n: usize, imbalance: i64) -> Arc<BasisSector> {
    Arc::new(SectorBuilder::new(2, n).constraint(SectorConstraint::pair_difference(Layout::atomic(2), (0, 1), (1, 0), imbalance)).build().unwrap())
}

#[test]
fn explicit_form_matches_closed_form() {
    let explicit = compact_monomials(1.0);
    for n in 1..=30 {
        for k in [0, 1, -2] {
            let s = sector(n, k);
            if s.is_empty() {
                continue;
            }
            assert_eq!(generator(&explicit, &s), closed_form(&s), "N = {n}, n01 - n10 = {k}");
        }
    }
}

#[test]
fn composed_form_matches_closed_form() {
    let composed = collective_decay(2, 0, 1, 1.0);
    for n in 1..=30 {
        for k in [0, 3] {
            let s = sector(n, k);
            if s.is_empty() {
                continue;
            }
            assert_eq!(generator(&composed, &s), closed_form(&s), "N = {n}, n01 - n10 = {k}");
        }
    }
}

#[test]
fn balanced_sector_is_closed() {
    // a sector-violation error would surface here
    let s = sector(100, 0);
    assert_eq!(s.len(), 51 * 51);
    let l = assemble(&compact_monomials(1.0), s).unwrap();
    assert!(l.nnz() > 0);
}
