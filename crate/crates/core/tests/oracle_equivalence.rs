//! Main engine against brute-force dynamics of distinguishable particles.

use std::sync::Arc;

use superfock::basis::SectorBuilder;
use superfock::dynamics::{evolve, uniform_grid, IntegratorConfig};
use superfock::oracle::{embed, embed_sum, evolve_full, project, CollectiveDecay, OracleModel};
use superfock::scenarios::{
    compact_problem, lambda_problem, tcm_monolithic, tcm_sectors, CompactEmissionParams, FieldState, LambdaParams,
    TavisCummingsParams,
};
use superfock::states::mixed_uncorrelated;
use superfock::superops::{FieldFactor, HamiltonianTerm, RateTensor};

use num_complex::Complex64 as C64;

fn tight() -> IntegratorConfig {
    IntegratorConfig::default().with_tolerances(1e-11, 1e-13)
}

#[test]
fn collective_emission_matches_oracle() {
    let grid = uniform_grid(0.0, 4.5, 10);
    for n in 1..=4 {
        for p2 in [0.2, 0.5, 1.0] {
            let (l, rho0) = compact_problem(&CompactEmissionParams::new(n, p2, 4.5)).unwrap();
            let config = tight().with_grid(grid.clone());
            let engine = evolve(&l, &rho0, &config).unwrap();

            let mut model = OracleModel::new(2, n);
            model.collective.push(CollectiveDecay { lower: 0, upper: 1, rate: 1.0 });
            let all = Arc::new(SectorBuilder::new(2, n).build().unwrap());
            let full0 = embed(&mixed_uncorrelated(&[1.0 - p2, p2], all).unwrap()).unwrap();
            let reference = evolve_full(&model, &full0, &config).unwrap();

            for (e, r) in engine.iter().zip(&reference) {
                let projected = project(r, l.sector().clone()).unwrap();
                let diff = e.max_abs_diff(&projected);
                assert!(diff < 1e-8, "N = {n}, p2 = {p2}, t = {}: {diff:e}", e.time());
            }
        }
    }
}

#[test]
fn lambda_system_matches_oracle() {
    let grid = uniform_grid(0.0, 4.0, 10);
    for n in 1..=3 {
        for auger in [0.0, 5.0] {
            let mut params = LambdaParams::standard(n, auger);
            params.t_max = 4.0;
            let (l, rho0) = lambda_problem(&params).unwrap();
            let config = tight().with_grid(grid.clone());
            let engine = evolve(&l, &rho0, &config).unwrap();

            let mut model = OracleModel::new(4, n);
            model.local.push((RateTensor::new(4).transfer(0, 2, 1.0), Some(params.envelope())));
            if auger > 0.0 {
                model.local.push((RateTensor::new(4).transfer(2, 3, auger), None));
            }
            model.collective.push(CollectiveDecay { lower: 1, upper: 2, rate: 1.0 });
            let reference = evolve_full(&model, &embed(&rho0).unwrap(), &config).unwrap();

            for (e, r) in engine.iter().zip(&reference) {
                let diff = e.max_abs_diff(&project(r, l.sector().clone()).unwrap());
                assert!(diff < 1e-8, "N = {n}, auger = {auger}, t = {}: {diff:e}", e.time());
            }
        }
    }
}

fn tcm_model(n: usize, n_max: usize) -> OracleModel {
    let mut model = OracleModel::new(2, n);
    model.field_cutoff = Some(n_max);
    model.hamiltonian = vec![
        HamiltonianTerm { coefficient: C64::new(1.0, 0.0), sigma: (1, 0), field: Some(FieldFactor::Annihilate) },
        HamiltonianTerm { coefficient: C64::new(1.0, 0.0), sigma: (0, 1), field: Some(FieldFactor::Create) },
    ];
    model
}

#[test]
fn tavis_cummings_matches_oracle() {
    let grid = uniform_grid(0.0, 3.0, 10);
    for (p2, field) in [(1.0, FieldState::Vacuum), (0.5, FieldState::Fock(1)), (0.3, FieldState::Vacuum)] {
        let mut params = TavisCummingsParams::new(2, p2, field, 3.0);
        params.n_max = Some(3);
        let config = tight().with_grid(grid.clone());
        let (sectors, _) = tcm_sectors(&params).unwrap();
        let runs: Vec<_> = sectors.iter().map(|s| evolve(&s.liouvillian, &s.initial, &config).unwrap()).collect();

        let parts: Vec<_> = sectors.iter().map(|s| &s.initial).collect();
        let full0 = embed_sum(&parts).unwrap();
        let reference = evolve_full(&tcm_model(2, 3), &full0, &config).unwrap();

        let (mono_l, mono_rho) = tcm_monolithic(&params).unwrap();
        let mono = evolve(&mono_l, &mono_rho, &config).unwrap();

        for (k, r) in reference.iter().enumerate() {
            let at_k: Vec<_> = runs.iter().map(|run| &run[k]).collect();
            let combined = embed_sum(&at_k).unwrap();
            let diff = (&combined.rho - &r.rho).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-8, "p2 = {p2}, t = {}: {diff:e}", grid[k]);
            let mono_diff = mono[k].max_abs_diff(&project(r, mono_l.sector().clone()).unwrap());
            assert!(mono_diff < 1e-8, "monolithic: {mono_diff:e}");
        }
    }
}
