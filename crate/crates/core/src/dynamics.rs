//! Time evolution of density and operator coefficients, two-time
//! correlations and emission spectra.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
pub use crate::integrate::{uniform_grid, IntegrationStats, IntegratorConfig, Method};
use crate::integrate::{integrate_bounded, PowerRadius, Scalar};
use crate::observables::{operator_to_coefficients, KBodySpec, OperatorCoefficients, Pairing};
use crate::states::DensityCoefficients;
use crate::superops::{adjoint, apply_between, LiouvillianOperator, SuperOpMonomial};

/// Largest tolerated drift of the trace along a trajectory before the run is
/// reported as a tolerance failure.
const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Evolves `ρ₀` under `L`, returning one snapshot per output time.
pub fn evolve(l: &LiouvillianOperator, rho0: &DensityCoefficients, config: &IntegratorConfig) -> Result<Vec<DensityCoefficients>> {
    evolve_with(l, rho0, config, |_| Ok(()))
}

/// As [`evolve`], with a hook run on every snapshot as it is produced.
pub fn evolve_with(
    l: &LiouvillianOperator,
    rho0: &DensityCoefficients,
    config: &IntegratorConfig,
    mut hook: impl FnMut(&DensityCoefficients) -> Result<()>,
) -> Result<Vec<DensityCoefficients>> {
    check_aligned(l, rho0.sector())?;
    let sector = l.sector().clone();
    let trace0 = rho0.trace_complex();
    let mut out = Vec::with_capacity(config.output_grid.len());
    trajectory(
        l,
        rho0.values(),
        config,
        |t, y| {
            let snap = DensityCoefficients::from_values(sector.clone(), y.to_vec(), t);
            let drift = (snap.trace_complex() - trace0).norm();
            if !(drift <= TRACE_DRIFT_LIMIT) {
                return Err(Error::Tolerance { time: t, reason: format!("trace drifted by {drift:e}") });
            }
            hook(&snap)?;
            out.push(snap);
            Ok(())
        },
    )?;
    Ok(out)
}

/// Evolves only the observables, discarding states.
pub fn evolve_observe<T>(
    l: &LiouvillianOperator,
    rho0: &DensityCoefficients,
    config: &IntegratorConfig,
    mut measure: impl FnMut(&DensityCoefficients) -> T,
) -> Result<Vec<T>> {
    check_aligned(l, rho0.sector())?;
    let sector = l.sector().clone();
    let trace0 = rho0.trace_complex();
    let mut out = Vec::with_capacity(config.output_grid.len());
    trajectory(
        l,
        rho0.values(),
        config,
        |t, y| {
            let snap = DensityCoefficients::from_values(sector.clone(), y.to_vec(), t);
            let drift = (snap.trace_complex() - trace0).norm();
            if !(drift <= TRACE_DRIFT_LIMIT) {
                return Err(Error::Tolerance { time: t, reason: format!("trace drifted by {drift:e}") });
            }
            out.push(measure(&snap));
            Ok(())
        },
    )?;
    Ok(out)
}

/// Deterministic, dense starting vector for power iteration.
fn seed<T: Scalar>(n: usize, unit: T) -> Vec<T> {
    (0..n).map(|i| unit * (1.0 + ((i * 7919) % 1013) as f64 / 1013.0)).collect()
}

/// Integrates `y' = L(t) y`, on real vectors when both `L` and `y₀` are real.
fn trajectory(
    l: &LiouvillianOperator,
    y0: &[C64],
    config: &IntegratorConfig,
    mut observe: impl FnMut(f64, &[C64]) -> Result<()>,
) -> Result<IntegrationStats> {
    let bound = l.spectral_bound();
    let n = y0.len();
    let real = if y0.iter().all(|v| v.im == 0.0) { l.real_form() } else { None };
    match real {
        Some(real) => {
            let mut radius = PowerRadius::new(|t, x: &[f64], y: &mut [f64]| real.apply_into(t, x, y), |t| bound.at(t), seed(n, 1.0));
            let mut buf = vec![C64::new(0.0, 0.0); n];
            integrate_bounded(
                |t, y: &[f64], dy: &mut [f64]| real.apply_into(t, y, dy),
                |t| radius.at(t),
                y0.iter().map(|v| v.re).collect(),
                config,
                |t, y| {
                    for (b, &v) in buf.iter_mut().zip(y) {
                        *b = C64::new(v, 0.0);
                    }
                    observe(t, &buf)
                },
            )
        }
        None => {
            let mut radius = PowerRadius::new(|t, x: &[C64], y: &mut [C64]| l.apply_into(t, x, y), |t| bound.at(t), seed(n, C64::new(1.0, 0.5)));
            integrate_bounded(|t, y, dy| l.apply_into(t, y, dy), |t| radius.at(t), y0.to_vec(), config, observe)
        }
    }
}

fn check_aligned(l: &LiouvillianOperator, sector: &Arc<crate::basis::BasisSector>) -> Result<()> {
    if sector.len() != l.dim() {
        return Err(Error::DimensionMismatch { expected: l.dim(), found: sector.len() });
    }
    Ok(())
}

/// Heisenberg-picture evolution of operator coefficients under the adjoint
/// of `L`, so that `P(O(τ), ρ) = P(O, ρ(τ))`.
pub fn evolve_adjoint(l: &LiouvillianOperator, o0: &OperatorCoefficients, config: &IntegratorConfig) -> Result<Vec<OperatorCoefficients>> {
    let lambda = adjoint(l)?;
    evolve_adjoint_with(&lambda, o0, config)
}

/// As [`evolve_adjoint`] with a precomputed adjoint operator.
pub fn evolve_adjoint_with(
    lambda: &LiouvillianOperator,
    o0: &OperatorCoefficients,
    config: &IntegratorConfig,
) -> Result<Vec<OperatorCoefficients>> {
    if lambda.is_time_dependent() {
        return Err(Error::InvalidArgument("adjoint evolution needs a time-independent Liouvillian".into()));
    }
    if o0.sector().len() != lambda.dim() {
        return Err(Error::DimensionMismatch { expected: lambda.dim(), found: o0.sector().len() });
    }
    let sector = lambda.sector().clone();
    let mut out = Vec::with_capacity(config.output_grid.len());
    trajectory(
        lambda,
        o0.values(),
        config,
        |_, y| {
            out.push(OperatorCoefficients::from_values(sector.clone(), y.to_vec()));
            Ok(())
        },
    )?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoTimeResult {
    pub t_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    /// `x[i][j] = X(t_i, τ_j)`
    pub x: Vec<Vec<C64>>,
}

/// `X(t, τ) = ⟨A†(t + τ) B(t)⟩ = Tr[A† e^{Lτ}(B ρ(t))]` by the quantum
/// regression theorem. `B` is given as superoperator monomials acting on
/// `ρ`; `A` as a K-body operator.
pub fn two_time_correlation(
    l: &LiouvillianOperator,
    rho0: &DensityCoefficients,
    a: &KBodySpec,
    b: &[SuperOpMonomial],
    t_grid: &[f64],
    tau_grid: &[f64],
    config: &IntegratorConfig,
) -> Result<TwoTimeResult> {
    if t_grid.is_empty() || tau_grid.is_empty() {
        return Err(Error::InvalidArgument("correlation grids must be non-empty".into()));
    }
    if l.is_time_dependent() {
        return Err(Error::InvalidArgument("two-time correlations need a time-independent Liouvillian".into()));
    }
    let mut forward = config.clone();
    forward.output_grid = with_origin(t_grid);
    let skip = forward.output_grid.len() - t_grid.len();
    let states: Vec<DensityCoefficients> = evolve(l, rho0, &forward)?.into_iter().skip(skip).collect();
    let shifted: Vec<DensityCoefficients> = states.iter().map(|r| apply_between(b, r)).collect::<Result<_>>()?;
    // each call builds its own copy of the shifted sector; share the first
    let sector_b = shifted[0].sector().clone();
    let shifted: Vec<DensityCoefficients> = shifted
        .into_iter()
        .map(|r| {
            let t = r.time();
            DensityCoefficients::from_values(sector_b.clone(), r.into_values(), t)
        })
        .collect();
    let l_b = if Arc::ptr_eq(&sector_b, l.sector()) { l.clone() } else { l.reassemble(sector_b.clone())? };
    let lambda = adjoint(&l_b)?;
    let o0 = operator_to_coefficients(&a.dagger(), lambda.sector().clone())?;
    let mut backward = config.clone();
    let tau_full = with_origin(tau_grid);
    let tau_skip = tau_full.len() - tau_grid.len();
    backward.output_grid = tau_full;
    let ops: Vec<OperatorCoefficients> = evolve_adjoint_with(&lambda, &o0, &backward)?.into_iter().skip(tau_skip).collect();
    let pairing = Pairing::new(ops[0].sector().clone(), sector_b)?;
    let x = shifted
        .par_iter()
        .map(|br| ops.iter().map(|o| pairing.apply(o, br)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(TwoTimeResult { t_grid: t_grid.to_vec(), tau_grid: tau_grid.to_vec(), x })
}

/// Prepends 0 to a non-negative grid that does not start there.
fn with_origin(grid: &[f64]) -> Vec<f64> {
    if grid[0] == 0.0 {
        grid.to_vec()
    } else {
        std::iter::once(0.0).chain(grid.iter().copied()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub s: Vec<f64>,
    pub s_normalized: Vec<f64>,
}

fn uniform_step(grid: &[f64], what: &'static str) -> Result<f64> {
    if grid.len() < 2 {
        return Ok(0.0);
    }
    let h = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let tol = 1e-9 * h.abs().max(grid[grid.len() - 1].abs());
    for (k, &g) in grid.iter().enumerate() {
        if (g - (grid[0] + k as f64 * h)).abs() > tol {
            return Err(Error::NonUniformGrid(what));
        }
    }
    Ok(h)
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n).map(|k| if k == 0 || k == n - 1 { 0.5 * h } else { h }).collect(),
    }
}

/// `S(ω) = Re Σ_t Σ_τ w_t w_τ X(t, τ) e^{−iωτ}` with trapezoidal weights.
pub fn spectrum(x: &TwoTimeResult, omega: &[f64]) -> Result<Spectrum> {
    let ht = uniform_step(&x.t_grid, "t grid")?;
    let hu = uniform_step(&x.tau_grid, "tau grid")?;
    let wt = trapezoid_weights(x.t_grid.len(), ht);
    let wu = trapezoid_weights(x.tau_grid.len(), hu);
    // integrate over t first; the phase only depends on τ
    let mut g = vec![C64::new(0.0, 0.0); x.tau_grid.len()];
    for (row, w) in x.x.iter().zip(&wt) {
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += xj * *w;
        }
    }
    let s: Vec<f64> = omega
        .iter()
        .map(|&om| {
            x.tau_grid
                .iter()
                .zip(&g)
                .zip(&wu)
                .map(|((&tau, gj), w)| (gj * C64::from_polar(1.0, -om * tau)).re * w)
                .sum()
        })
        .collect();
    let max = s.iter().cloned().fold(0.0, f64::max);
    let s_normalized = if max > 0.0 { s.iter().map(|v| v / max).collect() } else { vec![0.0; s.len()] };
    Ok(Spectrum { omega: omega.to_vec(), s, s_normalized })
}

/// Half width at half maximum of a single-peaked curve, from linearly
/// interpolated half-maximum crossings. `None` if a crossing lies outside
/// the grid.
pub fn half_width_half_max(omega: &[f64], s: &[f64]) -> Option<f64> {
    let (imax, &smax) = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if smax <= 0.0 {
        return None;
    }
    let half = 0.5 * smax;
    let cross = |i: usize, j: usize| omega[i] + (half - s[i]) * (omega[j] - omega[i]) / (s[j] - s[i]);
    let right = (imax..s.len() - 1).find(|&i| s[i] >= half && s[i + 1] < half).map(|i| cross(i, i + 1))?;
    let left = (1..=imax).rev().find(|&i| s[i] >= half && s[i - 1] < half).map(|i| cross(i - 1, i))?;
    Some(0.5 * (right - left))
}
