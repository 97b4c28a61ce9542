//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;

use superfock::basis::{enumerate_basis, lambda_constraints, BasisSector, SectorBuilder};
use superfock::dynamics::{evolve, evolve_adjoint, evolve_observe, half_width_half_max, uniform_grid, IntegratorConfig, Method};
use superfock::observables::{expectation, mean_photon_number, population, OperatorCoefficients};
use superfock::oracle::{embed, embed_sum, evolve_full, project, CollectiveDecay, OracleModel};
use superfock::scenarios::{
    compact_problem, compact_sector, compact_spectrum, run_compact, run_lambda, run_tavis_cummings, steady_state_matrix,
    tcm_monolithic, tcm_quantities, tcm_sectors, CompactEmissionParams, FieldState, LambdaParams, SpectrumParams,
    TavisCummingsParams,
};
use superfock::sparse::CsrMatrix;
use superfock::states::{mixed_uncorrelated, pure_uncorrelated};
use superfock::superops::{
    assemble, bosonize, build_standard_dissipator, collective_decay, hamiltonian_commutator, FieldFactor, HamiltonianTerm,
    LiouvillianOperator, RateTensor, SigmaKind, SigmaTerm,
};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn tight() -> IntegratorConfig {
    IntegratorConfig::default().with_tolerances(1e-11, 1e-13)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// 1 ------------------------------------------------------------------------

fn oracle_equivalence() -> Check {
    let grid = uniform_grid(0.0, 4.5, 10);
    let mut worst: f64 = 0.0;
    for n in 1..=4 {
        for p2 in [0.2, 0.5, 1.0] {
            let (l, rho0) = compact_problem(&CompactEmissionParams::new(n, p2, 4.5)).map_err(err)?;
            let config = tight().with_grid(grid.clone());
            let engine = evolve(&l, &rho0, &config).map_err(err)?;
            let mut model = OracleModel::new(2, n);
            model.collective.push(CollectiveDecay { lower: 0, upper: 1, rate: 1.0 });
            let all = Arc::new(SectorBuilder::new(2, n).build().map_err(err)?);
            let full0 = embed(&mixed_uncorrelated(&[1.0 - p2, p2], all).map_err(err)?).map_err(err)?;
            let reference = evolve_full(&model, &full0, &config).map_err(err)?;
            ensure(engine.len() == 10 && reference.len() == 10, || "expected 10 output times".into())?;
            for (e, r) in engine.iter().zip(&reference) {
                let diff = e.max_abs_diff(&project(r, l.sector().clone()).map_err(err)?);
                ensure(diff < 1e-8, || format!("N = {n}, p2 = {p2}, t = {}: diff {diff:e}", e.time()))?;
                worst = worst.max(diff);
            }
        }
    }
    Ok(format!("max diff {worst:.1e}"))
}

// 2 ------------------------------------------------------------------------

fn single_atom() -> Check {
    let run = run_compact(&CompactEmissionParams::new(1, 1.0, 10.0), &tight()).map_err(err)?;
    let mut worst: f64 = 0.0;
    for (t, p) in run.times.iter().zip(&run.p2) {
        worst = worst.max((p - (-t).exp()).abs());
    }
    ensure(worst < 1e-8, || format!("p2(t) deviates from exp(-t) by {worst:e}"))?;
    let s = compact_spectrum(&CompactEmissionParams::new(1, 1.0, 10.0), &SpectrumParams::default(), &tight()).map_err(err)?;
    let hwhm = half_width_half_max(&s.omega, &s.s).ok_or("no half maximum in range")?;
    let rel = (hwhm - 0.5).abs() / 0.5;
    ensure(rel < 0.03, || format!("HWHM {hwhm} is {:.1}% off 0.5", 100.0 * rel))?;
    let (k, _) = s.s.iter().enumerate().fold((0, f64::MIN), |a, (k, &v)| if v > a.1 { (k, v) } else { a });
    ensure(s.omega[k].abs() < 1e-9, || format!("line centred at {}", s.omega[k]))?;
    Ok(format!("|p2 - exp(-t)| <= {worst:.1e}, HWHM {hwhm:.4} ({:.2}% off)", 100.0 * rel))
}

// 3 ------------------------------------------------------------------------

fn catalan(k: usize) -> f64 {
    // C_{k+1} = Σ C_i C_{k-i}
    let mut cs = vec![1.0f64];
    for m in 1..=k {
        cs.push((0..m).map(|i| cs[i] * cs[m - 1 - i]).sum());
    }
    cs[k]
}

fn trapped_population(n: usize, p2: f64) -> f64 {
    let x = p2 * (1.0 - p2);
    (1..=n / 2).map(|k| catalan(k - 1) * x.powi(k as i32) * (n - 2 * k + 1) as f64 / n as f64).sum()
}

fn steady_states() -> Check {
    let config = IntegratorConfig::default().with_tolerances(1e-11, 1e-13);
    let (mut entry, mut pop, mut resid): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for n in 1..=20 {
        for p2 in [0.2, 0.5, 0.8] {
            let mut params = CompactEmissionParams::new(n, p2, 50.0);
            params.points = 11;
            let run = run_compact(&params, &config).map_err(err)?;
            let ss = steady_state_matrix(n, p2).map_err(err)?;
            let d = run.final_state.max_abs_diff(&ss);
            ensure(d < 1e-6, || format!("N = {n}, p2 = {p2}: entrywise diff {d:e}"))?;
            let p_inf = *run.p2.last().unwrap();
            let dp = (p_inf - trapped_population(n, p2)).abs();
            ensure(dp < 1e-6, || format!("N = {n}, p2 = {p2}: p2(inf) off the Catalan sum by {dp:e}"))?;
            let (l, _) = compact_problem(&params).map_err(err)?;
            let r = l.apply(&ss, 0.0).map_err(err)?.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
            ensure(r < 1e-10, || format!("N = {n}, p2 = {p2}: residual {r:e}"))?;
            entry = entry.max(d);
            pop = pop.max(dp);
            resid = resid.max(r);
        }
    }
    Ok(format!("entrywise {entry:.1e}, Catalan {pop:.1e}, residual {resid:.1e}"))
}

// 4 ------------------------------------------------------------------------

fn superradiance() -> Check {
    let config = IntegratorConfig::default().with_tolerances(1e-8, 1e-10);
    let run = run_compact(&CompactEmissionParams::new(100, 1.0, 1.0), &config).map_err(err)?;
    let (k, peak) = run.intensity.iter().enumerate().fold((0, f64::MIN), |a, (k, &v)| if v > a.1 { (k, v) } else { a });
    ensure(k > 0 && run.times[k] > 0.0, || "intensity peaks at t = 0".into())?;
    ensure(k + 1 < run.times.len(), || "intensity still rising at the end of the window".into())?;
    ensure(peak > 100.0, || format!("peak intensity {peak} does not exceed N"))?;
    // the burst lasts about 1/N, so the spectrum needs a short, finely sampled window
    let sp = SpectrumParams { t_max: 1.0, t_points: 401, tau_max: 1.0, tau_points: 401, omega: uniform_grid(-300.0, 300.0, 1201) };
    let mut widths = Vec::new();
    for p2 in [1.0, 0.5] {
        let s = compact_spectrum(&CompactEmissionParams::new(100, p2, 1.0), &sp, &config).map_err(err)?;
        widths.push(half_width_half_max(&s.omega, &s.s_normalized).ok_or("no half maximum in range")?);
    }
    ensure(widths[1] < widths[0], || format!("p2 = 0.5 width {} is not below p2 = 1 width {}", widths[1], widths[0]))?;
    Ok(format!(
        "peak {peak:.0} at t = {:.3}, HWHM {:.1} (p2 = 1) vs {:.1} (p2 = 0.5)",
        run.times[k], widths[0], widths[1]
    ))
}

// 5 ------------------------------------------------------------------------

fn pascal(n: usize, k: usize) -> u128 {
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row[k]
}

fn basis_sizes() -> Check {
    for m in 1..=3 {
        for n in 0..=8 {
            let got = enumerate_basis(m, n, &[]).map_err(err)?.len() as u128;
            let want = pascal(n + m * m - 1, n);
            ensure(got == want, || format!("M = {m}, N = {n}: {got} vectors, expected {want}"))?;
        }
    }
    for n in 1..=100 {
        let got = compact_sector(n).map_err(err)?.len();
        ensure(got == (n + 2) * (n + 2) / 4, || format!("two-level sector, N = {n}: {got}"))?;
    }
    for n in 1..=40 {
        let without = enumerate_basis(4, n, &lambda_constraints(false)).map_err(err)?.len();
        ensure(without == (n + 2) * (n + 4) * (2 * n + 3) / 24, || format!("lambda, N = {n}: {without}"))?;
        let with = enumerate_basis(4, n, &lambda_constraints(true)).map_err(err)?.len();
        ensure(with == (n + 2) * (n + 4) * (n * n + 6 * n + 6) / 48, || format!("lambda with Auger, N = {n}: {with}"))?;
    }
    Ok("binomials M <= 3, N <= 8; two-level N <= 100; lambda N <= 40".into())
}

// 6 ------------------------------------------------------------------------

fn auger_suppression() -> Check {
    let config = IntegratorConfig { method: Method::Rkc, ..IntegratorConfig::default() }.with_tolerances(1e-5, 1e-8);
    let mut photons = Vec::new();
    for auger in [0.0, 5.0] {
        let run = run_lambda(&LambdaParams::standard(100, auger), &config).map_err(err)?;
        ensure(run.trace_error < 1e-4, || format!("trace drift {}", run.trace_error))?;
        photons.push(run.total_photons());
    }
    ensure(photons[0] > 0.0 && photons[1] > 0.0, || format!("non-positive photon counts {photons:?}"))?;
    ensure(photons[1] < photons[0], || format!("Auger decay does not suppress emission: {photons:?}"))?;
    Ok(format!("photons {:.3} (no Auger) > {:.3} (Auger 5)", photons[0], photons[1]))
}

// 7 ------------------------------------------------------------------------

fn tcm_model(n: usize, n_max: usize) -> OracleModel {
    let mut model = OracleModel::new(2, n);
    model.field_cutoff = Some(n_max);
    model.hamiltonian = vec![
        HamiltonianTerm { coefficient: c(1.0, 0.0), sigma: (1, 0), field: Some(FieldFactor::Annihilate) },
        HamiltonianTerm { coefficient: c(1.0, 0.0), sigma: (0, 1), field: Some(FieldFactor::Create) },
    ];
    model
}

fn tavis_cummings() -> Check {
    let mut params = TavisCummingsParams::new(1, 1.0, FieldState::Vacuum, 10.0);
    params.points = 101;
    let run = run_tavis_cummings(&params, &tight()).map_err(err)?;
    let rabi = run.times.iter().zip(&run.p2).map(|(t, p)| (p - t.cos().powi(2)).abs()).fold(0.0, f64::max);
    ensure(rabi < 1e-7, || format!("vacuum Rabi deviates by {rabi:e}"))?;

    let mut params = TavisCummingsParams::new(20, 0.5, FieldState::Fock(10), 2.0);
    params.points = 11;
    let config = tight().with_grid(uniform_grid(0.0, 2.0, 11));
    let (sectors, _) = tcm_sectors(&params).map_err(err)?;
    let mut drift: f64 = 0.0;
    for s in &sectors {
        let samples = evolve_observe(&s.liouvillian, &s.initial, &config, |rho| {
            let stray = rho.sector().iter().zip(rho.values()).any(|(v, x)| x.norm() > 0.0 && tcm_quantities(v) != (s.k1, s.k2));
            (rho.trace(), mean_photon_number(rho).unwrap() + 20.0 * population(1, rho), stray)
        })
        .map_err(err)?;
        ensure(samples.iter().all(|x| !x.2), || format!("sector ({}, {}) leaks", s.k1, s.k2))?;
        for x in &samples {
            drift = drift.max((x.0 - samples[0].0).abs()).max((x.1 - samples[0].1).abs());
        }
    }
    ensure(drift < 1e-9, || format!("sector trace or excitation number drifts by {drift:e}"))?;

    let grid = uniform_grid(0.0, 3.0, 10);
    let mut worst: f64 = 0.0;
    for (p2, field) in [(1.0, FieldState::Vacuum), (0.5, FieldState::Fock(1))] {
        let mut params = TavisCummingsParams::new(2, p2, field, 3.0);
        params.n_max = Some(3);
        let config = tight().with_grid(grid.clone());
        let (sectors, _) = tcm_sectors(&params).map_err(err)?;
        let runs: Vec<_> = sectors.iter().map(|s| evolve(&s.liouvillian, &s.initial, &config)).collect::<Result<_, _>>().map_err(err)?;
        let parts: Vec<_> = sectors.iter().map(|s| &s.initial).collect();
        let reference = evolve_full(&tcm_model(2, 3), &embed_sum(&parts).map_err(err)?, &config).map_err(err)?;
        for (k, r) in reference.iter().enumerate() {
            let at_k: Vec<_> = runs.iter().map(|run| &run[k]).collect();
            let combined = embed_sum(&at_k).map_err(err)?;
            let diff = (&combined.rho - &r.rho).iter().map(|z| z.norm()).fold(0.0, f64::max);
            ensure(diff < 1e-8, || format!("N = 2, p2 = {p2}: oracle diff {diff:e}"))?;
            worst = worst.max(diff);
        }
    }
    Ok(format!(
        "Rabi {rabi:.1e}, {} sectors drift {drift:.1e}, oracle {worst:.1e}",
        sectors.len()
    ))
}

// 8 ------------------------------------------------------------------------

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

fn full(levels: usize, n: usize) -> Arc<BasisSector> {
    Arc::new(SectorBuilder::new(levels, n).build().unwrap())
}

fn lin(terms: &[(f64, &CsrMatrix)], dim: usize) -> CsrMatrix {
    terms.iter().fold(CsrMatrix::zeros(dim, dim), |acc, (s, m)| acc.combine(c(1.0, 0.0), m, c(*s, 0.0)))
}

/// Worst violation of `[Γ_x, Γ_y] = δ Γ − δ Γ` over all index tuples, with
/// `Γ(p, q, k, ℓ)` the bilinear creating pair `(p, ℓ)` and destroying `(q, k)`.
fn gamma_violation(levels: usize, n: usize) -> f64 {
    let s = full(levels, n);
    let dim = s.len();
    let m = levels;
    let idx = |v: [usize; 4]| ((v[0] * m + v[1]) * m + v[2]) * m + v[3];
    let mut ops = Vec::with_capacity(m.pow(4));
    for p in 0..m {
        for q in 0..m {
            for k in 0..m {
                for l in 0..m {
                    let term = SigmaTerm::new(SigmaKind::Gamma(p, q, k, l));
                    ops.push(assemble(&bosonize(m, &term), s.clone()).unwrap().matrix_at(0.0));
                }
            }
        }
    }
    let tuples: Vec<[usize; 4]> = (0..m.pow(4)).map(|i| [i / (m * m * m), (i / (m * m)) % m, (i / m) % m, i % m]).collect();
    let mut worst: f64 = 0.0;
    for x in &tuples {
        for y in &tuples {
            let (gx, gy) = (&ops[idx(*x)], &ops[idx(*y)]);
            let lhs = lin(&[(1.0, &gx.matmul(gy)), (-1.0, &gy.matmul(gx))], dim);
            let (a, b) = ((x[0], x[3]), (x[1], x[2]));
            let (cc, d) = ((y[0], y[3]), (y[1], y[2]));
            let mut rhs = CsrMatrix::zeros(dim, dim);
            if b == cc {
                rhs = lin(&[(1.0, &rhs), (1.0, &ops[idx([a.0, d.0, d.1, a.1])])], dim);
            }
            if a == d {
                rhs = lin(&[(1.0, &rhs), (-1.0, &ops[idx([cc.0, b.0, b.1, cc.1])])], dim);
            }
            worst = worst.max(lin(&[(1.0, &lhs), (-1.0, &rhs)], dim).max_abs());
        }
    }
    worst
}

fn invariants() -> Check {
    let mut tr: f64 = 0.0;
    let mut herm: f64 = 0.0;
    for n in 1..=4 {
        let l = three_level(n);
        let rho0 = pure_uncorrelated(&[c(0.6, 0.0), c(0.0, 0.64), c(0.48, 0.0)], l.sector().clone()).map_err(err)?;
        for rho in evolve(&l, &rho0, &IntegratorConfig::default().with_grid(uniform_grid(0.0, 5.0, 21))).map_err(err)? {
            tr = tr.max((rho.trace_complex() - 1.0).norm());
            herm = herm.max(rho.hermiticity_error().ok_or("no transpose map")?);
        }
    }
    ensure(tr < 1e-8 && herm < 1e-8, || format!("trace drift {tr:e}, hermiticity {herm:e}"))?;

    let mut gamma: f64 = 0.0;
    for m in 1..=3 {
        for n in 1..=4 {
            gamma = gamma.max(gamma_violation(m, n));
        }
    }
    ensure(gamma < 1e-12, || format!("Gamma algebra violated by {gamma:e}"))?;

    let mut pairing: f64 = 0.0;
    for seed in [3u64, 17, 101] {
        let l = three_level(3);
        let s = l.sector().clone();
        let rho0 = pure_uncorrelated(&[c(0.8, 0.0), c(0.0, 0.6), c(0.0, 0.0)], s.clone()).map_err(err)?;
        let o0 = OperatorCoefficients::from_fn(s, |v| {
            let h = v.iter().fold(seed, |acc, &x| acc.wrapping_mul(6364136223846793005).wrapping_add(x as u64 + 1442695040888963407));
            c(((h >> 11) % 1000) as f64 / 500.0 - 1.0, ((h >> 31) % 1000) as f64 / 500.0 - 1.0)
        });
        let config = tight().with_grid(uniform_grid(0.0, 2.0, 5));
        let rho_t = evolve(&l, &rho0, &config).map_err(err)?;
        let o_t = evolve_adjoint(&l, &o0, &config).map_err(err)?;
        for (rho, o) in rho_t.iter().zip(&o_t) {
            let d = (expectation(&o0, rho).map_err(err)? - expectation(o, &rho0).map_err(err)?).norm();
            pairing = pairing.max(d);
        }
    }
    ensure(pairing < 1e-9, || format!("adjoint pairing off by {pairing:e}"))?;

    let mut linear: f64 = 0.0;
    for (n, p2, field) in [(2, 0.6, FieldState::Vacuum), (3, 0.5, FieldState::Fock(1)), (2, 0.4, FieldState::Fock(2))] {
        let mut params = TavisCummingsParams::new(n, p2, field, 2.0);
        params.n_max = Some(4);
        let config = tight().with_grid(uniform_grid(0.0, 2.0, 6));
        let (mono_l, mono_rho) = tcm_monolithic(&params).map_err(err)?;
        let mono = evolve(&mono_l, &mono_rho, &config).map_err(err)?;
        for s in &tcm_sectors(&params).map_err(err)?.0 {
            for (part, whole) in evolve(&s.liouvillian, &s.initial, &config).map_err(err)?.iter().zip(&mono) {
                for (v, x) in part.sector().iter().zip(part.values()) {
                    linear = linear.max((whole.get(v) - x).norm());
                }
            }
        }
    }
    ensure(linear < 1e-9, || format!("sector decomposition off by {linear:e}"))?;
    Ok(format!("trace {tr:.1e}, hermiticity {herm:.1e}, Gamma {gamma:.1e}, pairing {pairing:.1e}, sectors {linear:.1e}"))
}

// --------------------------------------------------------------------------

struct Criterion {
    name: &'static str,
    run: fn() -> Check,
    limit: Option<Duration>,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "oracle equivalence", run: oracle_equivalence, limit: Some(Duration::from_secs(60)) },
        Criterion { name: "single-atom law", run: single_atom, limit: None },
        Criterion { name: "steady-state closed forms", run: steady_states, limit: Some(Duration::from_secs(120)) },
        Criterion { name: "superradiance", run: superradiance, limit: None },
        Criterion { name: "basis-size formulas", run: basis_sizes, limit: None },
        Criterion { name: "lambda-system Auger suppression", run: auger_suppression, limit: Some(Duration::from_secs(600)) },
        Criterion { name: "Tavis-Cummings", run: tavis_cummings, limit: None },
        Criterion { name: "structural invariants", run: invariants, limit: Some(Duration::from_secs(60)) },
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (i, crit) in criteria.iter().enumerate() {
        let k = i + 1;
        if !selected.is_empty() && !selected.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(crit.run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, crit.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs())),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {k} ({}): PASS [{detail}; {:.1}s]", crit.name, elapsed.as_secs_f64()),
            Err(reason) => {
                failures += 1;
                println!("criterion {k} ({}): FAIL [{reason}; {:.1}s]", crit.name, elapsed.as_secs_f64());
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
