//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export has a plain Rust counterpart so the numerics can be tested
//! natively; the wrappers only convert errors.

use wasm_bindgen::prelude::*;

use superfock::dynamics::IntegratorConfig;
use superfock::scenarios::{
    run_compact, run_tavis_cummings, steady_state_population, CompactEmissionParams, FieldState, TavisCummingsParams,
};

/// Largest ensemble the page offers; keeps a single run well under a second.
pub const MAX_PARTICLES: usize = 60;

/// Time series handed to JavaScript column by column.
#[wasm_bindgen]
#[derive(Clone, Debug, Default)]
pub struct Series {
    times: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

#[wasm_bindgen]
impl Series {
    #[wasm_bindgen(getter)]
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    /// Excited population.
    #[wasm_bindgen(getter)]
    pub fn first(&self) -> Vec<f64> {
        self.first.clone()
    }

    /// Emission intensity (compact) or mean photon number (cavity).
    #[wasm_bindgen(getter)]
    pub fn second(&self) -> Vec<f64> {
        self.second.clone()
    }
}

fn integrator() -> IntegratorConfig {
    IntegratorConfig::default().with_tolerances(1e-7, 1e-10)
}

fn check_particles(n: usize) -> Result<(), String> {
    if n == 0 || n > MAX_PARTICLES {
        return Err(format!("number of emitters must be between 1 and {MAX_PARTICLES}"));
    }
    Ok(())
}

pub fn emission(n: usize, p2: f64, t_max: f64, points: usize) -> Result<Series, String> {
    check_particles(n)?;
    let mut params = CompactEmissionParams::new(n, p2, t_max);
    params.points = points;
    let run = run_compact(&params, &integrator()).map_err(|e| e.to_string())?;
    Ok(Series { times: run.times, first: run.p2, second: run.intensity })
}

/// Long-time excited population against the initial one on `points`
/// evenly spaced values of `p2` in `[0, 1]`.
pub fn trapping_curve(n: usize, points: usize) -> Result<Vec<f64>, String> {
    check_particles(n)?;
    if points < 2 {
        return Err("need at least two points".into());
    }
    Ok((0..points).map(|k| steady_state_population(n, k as f64 / (points - 1) as f64)).collect())
}

pub fn cavity(n: usize, p2: f64, photons: usize, t_max: f64, points: usize) -> Result<Series, String> {
    check_particles(n)?;
    if n > 20 {
        return Err("the cavity demo takes at most 20 emitters".into());
    }
    if photons > 40 {
        return Err("at most 40 initial photons".into());
    }
    let mut params = TavisCummingsParams::new(n, p2, FieldState::Fock(photons), t_max);
    params.points = points;
    let run = run_tavis_cummings(&params, &integrator()).map_err(|e| e.to_string())?;
    Ok(Series { times: run.times, first: run.p2, second: run.photons })
}

/// Collective decay of `n` two-level emitters started with excited probability `p2`.
#[wasm_bindgen(js_name = runEmission)]
pub fn run_emission(n: usize, p2: f64, t_max: f64, points: usize) -> Result<Series, JsError> {
    emission(n, p2, t_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = trappingCurve)]
pub fn trapping_curve_js(n: usize, points: usize) -> Result<Vec<f64>, JsError> {
    trapping_curve(n, points).map_err(|e| JsError::new(&e))
}

/// Emitters (at most 20) in a lossless cavity holding `photons` photons.
#[wasm_bindgen(js_name = runCavity)]
pub fn run_cavity(n: usize, p2: f64, photons: usize, t_max: f64, points: usize) -> Result<Series, JsError> {
    cavity(n, p2, photons, t_max, points).map_err(|e| JsError::new(&e))
}
