//! Batch front end: flat `key = value` configuration files, scenario runs
//! and parameter sweeps, CSV and snapshot output.
//!
//! ```text
//! scenario = compact
//! compact.N = 10
//! compact.p2 = 1.0, 0.8, 0.5   # a list turns the run into a sweep
//! spectrum.enabled = true
//! ```

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::dynamics::{uniform_grid, IntegratorConfig, Method};
use crate::error::{Error, Result};
use crate::scenarios::{
    compact_spectrum, run_compact, run_lambda, run_tavis_cummings, CompactEmissionParams, FieldState, LambdaParams,
    SpectrumParams, TavisCummingsParams,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "SUPERFOCK_THREADS";

/// A configuration problem; `line` is 0 for file-level problems such as a
/// missing required key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Compact,
    Lambda,
    Tcm,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Compact => "compact",
            ScenarioKind::Lambda => "lambda",
            ScenarioKind::Tcm => "tcm",
        }
    }

    fn units(self) -> &'static str {
        match self {
            ScenarioKind::Tcm => "time in 1/g (g = 1)",
            _ => "time in 1/gamma, rates in gamma (gamma = 1)",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Job {
    Compact(CompactEmissionParams),
    Lambda(LambdaParams),
    Tcm(TavisCummingsParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    /// One entry per sweep value, with the label used in file names
    /// (empty without a sweep).
    pub jobs: Vec<(String, Job)>,
    /// Integrator settings; the output grid is filled in per job.
    pub integrator: IntegratorConfig,
    pub spectrum: Option<SpectrumParams>,
    pub prefix: String,
    pub snapshot: bool,
    /// Every key with its resolved value, in key order.
    pub resolved: Vec<(String, String)>,
}

const KEYS: &[&str] = &[
    "scenario",
    "time.t_max",
    "time.points",
    "integrator.method",
    "integrator.rtol",
    "integrator.atol",
    "integrator.max_step",
    "integrator.step",
    "output.prefix",
    "output.snapshot",
    "compact.N",
    "compact.p2",
    "lambda.N",
    "lambda.gamma",
    "lambda.ip",
    "lambda.t0",
    "lambda.tau",
    "tcm.N",
    "tcm.p2",
    "tcm.field",
    "tcm.n_max",
    "spectrum.enabled",
    "spectrum.t_max",
    "spectrum.t_points",
    "spectrum.tau_max",
    "spectrum.tau_points",
    "spectrum.omega_min",
    "spectrum.omega_max",
    "spectrum.omega_points",
];

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Reader {
    entries: BTreeMap<String, Entry>,
    errors: Vec<ConfigError>,
    resolved: BTreeMap<String, String>,
}

impl Reader {
    fn parse(text: &str) -> Self {
        let mut r = Reader { entries: BTreeMap::new(), errors: Vec::new(), resolved: BTreeMap::new() };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                r.error(line, format!("expected `key = value`, found `{content}`"));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                r.error(line, "empty key or value".into());
                continue;
            }
            if !KEYS.contains(&key) {
                r.error(line, format!("unknown key `{key}`"));
                continue;
            }
            if let Some(prev) = r.entries.get(key) {
                let first = prev.line;
                r.error(line, format!("duplicate key `{key}` (first set on line {first})"));
                continue;
            }
            r.entries.insert(key.to_string(), Entry { value: value.to_string(), line, used: false });
        }
        r
    }

    fn error(&mut self, line: usize, message: String) {
        self.errors.push(ConfigError { line, message });
    }

    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        let e = self.entries.get_mut(key)?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    fn resolve(&mut self, key: &str, value: impl fmt::Display) {
        self.resolved.insert(key.to_string(), value.to_string());
    }

    fn missing(&mut self, key: &str) {
        self.error(0, format!("missing required key `{key}`"));
    }

    fn float(&mut self, key: &str, default: Option<f64>, lo: f64, hi: f64) -> Option<f64> {
        let v = match self.raw(key) {
            None => default,
            Some((text, line)) => self.parse_float(key, &text, line, lo, hi),
        };
        match v {
            Some(v) => self.resolve(key, v),
            None if default.is_none() && !self.entries.contains_key(key) => self.missing(key),
            None => {}
        }
        v
    }

    fn parse_float(&mut self, key: &str, text: &str, line: usize, lo: f64, hi: f64) -> Option<f64> {
        match text.parse::<f64>() {
            Ok(v) if v.is_nan() => {
                self.error(line, format!("`{key}` must be a number, found `{text}`"));
                None
            }
            Ok(v) if v < lo || v > hi => {
                self.error(line, format!("`{key}` = {v} is outside [{lo}, {hi}]"));
                None
            }
            Ok(v) => Some(v),
            Err(_) => {
                self.error(line, format!("`{key}` must be a number, found `{text}`"));
                None
            }
        }
    }

    /// A value or comma-separated list of values; labels keep the literal text.
    fn float_list(&mut self, key: &str, default: f64, lo: f64, hi: f64) -> Option<Vec<(String, f64)>> {
        let Some((text, line)) = self.raw(key) else {
            self.resolve(key, default);
            return Some(vec![(String::new(), default)]);
        };
        let mut out = Vec::new();
        let mut ok = true;
        for item in text.split(',').map(str::trim) {
            match self.parse_float(key, item, line, lo, hi) {
                Some(v) => out.push((item.to_string(), v)),
                None => ok = false,
            }
        }
        if !ok {
            return None;
        }
        self.resolve(key, out.iter().map(|(s, _)| s.as_str()).collect::<Vec<_>>().join(", "));
        if out.len() == 1 {
            out[0].0.clear();
        }
        Some(out)
    }

    fn int(&mut self, key: &str, default: Option<usize>, lo: usize, hi: usize) -> Option<usize> {
        let v = match self.raw(key) {
            None => {
                if default.is_none() {
                    self.missing(key);
                }
                default
            }
            Some((text, line)) => match text.parse::<usize>() {
                Ok(v) if v < lo || v > hi => {
                    self.error(line, format!("`{key}` = {v} is outside [{lo}, {hi}]"));
                    None
                }
                Ok(v) => Some(v),
                Err(_) => {
                    self.error(line, format!("`{key}` must be a non-negative integer, found `{text}`"));
                    None
                }
            },
        };
        if let Some(v) = v {
            self.resolve(key, v);
        }
        v
    }

    fn boolean(&mut self, key: &str, default: bool) -> bool {
        let v = match self.raw(key) {
            None => default,
            Some((text, line)) => match text.as_str() {
                "true" | "yes" | "on" => true,
                "false" | "no" | "off" => false,
                _ => {
                    self.error(line, format!("`{key}` must be true or false, found `{text}`"));
                    default
                }
            },
        };
        self.resolve(key, v);
        v
    }

    fn choice<T: Copy>(&mut self, key: &str, default: Option<&str>, options: &[(&str, T)]) -> Option<T> {
        let (text, line) = match self.raw(key) {
            Some(v) => v,
            None => match default {
                Some(d) => (d.to_string(), 0),
                None => {
                    self.missing(key);
                    return None;
                }
            },
        };
        match options.iter().find(|(name, _)| *name == text) {
            Some(&(name, v)) => {
                self.resolve(key, name);
                Some(v)
            }
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.error(line, format!("`{key}` must be one of {}, found `{text}`", names.join(", ")));
                None
            }
        }
    }

    fn field(&mut self, key: &str) -> Option<FieldState> {
        let Some((text, line)) = self.raw(key) else {
            self.resolve(key, "vacuum");
            return Some(FieldState::Vacuum);
        };
        let parsed = match text.split_once(':') {
            None if text == "vacuum" => Some(FieldState::Vacuum),
            Some(("fock", n)) => n.trim().parse::<usize>().ok().map(FieldState::Fock),
            Some(("coherent", m)) => m.trim().parse::<f64>().ok().filter(|m| *m >= 0.0 && m.is_finite()).map(FieldState::Coherent),
            _ => None,
        };
        match parsed {
            Some(f) => {
                self.resolve(key, &text);
                Some(f)
            }
            None => {
                self.error(line, format!("`{key}` must be vacuum, fock:<n> or coherent:<mean>, found `{text}`"));
                None
            }
        }
    }

    fn text(&mut self, key: &str, default: &str) -> String {
        let v = match self.raw(key) {
            None => default.to_string(),
            Some((text, line)) => {
                if text.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) && !text.starts_with('.') {
                    text
                } else {
                    self.error(line, format!("`{key}` may only contain letters, digits, '-', '_' and '.'"));
                    default.to_string()
                }
            }
        };
        self.resolve(key, &v);
        v
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    /// Flags keys that exist but do not apply to the chosen scenario.
    fn finish(&mut self, scenario: &str) {
        let unused: Vec<(String, usize)> =
            self.entries.iter().filter(|(_, e)| !e.used).map(|(k, e)| (k.clone(), e.line)).collect();
        for (key, line) in unused {
            self.error(line, format!("key `{key}` does not apply to scenario {scenario}"));
        }
        self.errors.sort_by_key(|e| e.line);
    }
}

/// Parses and validates a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> std::result::Result<RunConfig, Vec<ConfigError>> {
    let mut r = Reader::parse(text);
    let scenario = r.choice(
        "scenario",
        None,
        &[("compact", ScenarioKind::Compact), ("lambda", ScenarioKind::Lambda), ("tcm", ScenarioKind::Tcm)],
    );
    let Some(scenario) = scenario else {
        r.finish("(unset)");
        return Err(r.errors);
    };

    let t_max = r.float("time.t_max", Some(10.0), 1e-12, 1e6);
    let points = r.int("time.points", Some(201), 2, 1_000_000);

    let defaults = IntegratorConfig::default();
    let auto = if scenario == ScenarioKind::Lambda { Method::Rkc } else { Method::Dopri5 };
    let method = r.choice(
        "integrator.method",
        Some("auto"),
        &[("auto", Some(auto)), ("dopri5", Some(Method::Dopri5)), ("rkc", Some(Method::Rkc)), ("rk4", None)],
    );
    let (rtol_default, atol_default) = match scenario {
        ScenarioKind::Lambda => (1e-5, 1e-8),
        _ => (defaults.rel_tol, defaults.abs_tol),
    };
    let rtol = r.float("integrator.rtol", Some(rtol_default), 1e-15, 0.1);
    let atol = r.float("integrator.atol", Some(atol_default), 1e-300, 1.0);
    let max_step = r.float("integrator.max_step", Some(f64::INFINITY), 1e-12, f64::INFINITY);
    let method = match method {
        Some(Some(m)) => {
            if r.entries.contains_key("integrator.step") {
                let line = r.line_of("integrator.step");
                r.raw("integrator.step");
                r.error(line, "`integrator.step` only applies to integrator.method = rk4".into());
            }
            Some(m)
        }
        Some(None) => r.float("integrator.step", None, 1e-12, 1e3).map(|step| Method::Rk4 { step }),
        None => None,
    };

    let prefix = r.text("output.prefix", scenario.name());
    let snapshot = r.boolean("output.snapshot", false);

    let mut jobs = Vec::new();
    let mut spectrum = None;
    let (t_max_v, points_v) = (t_max.unwrap_or(1.0), points.unwrap_or(2));
    match scenario {
        ScenarioKind::Compact => {
            let n = r.int("compact.N", None, 1, 2000);
            let p2 = r.float_list("compact.p2", 1.0, 0.0, 1.0);
            if let (Some(n), Some(p2)) = (n, p2) {
                for (label, p) in p2 {
                    let label = if label.is_empty() { label } else { format!("p2_{label}") };
                    let params = CompactEmissionParams { particles: n, p2: p, t_max: t_max_v, points: points_v };
                    jobs.push((label, Job::Compact(params)));
                }
            }
            if r.boolean("spectrum.enabled", false) {
                spectrum = spectrum_params(&mut r);
            }
        }
        ScenarioKind::Lambda => {
            let n = r.int("lambda.N", None, 1, 2000);
            let gamma = r.float_list("lambda.gamma", 0.0, 0.0, 1e6);
            let ip = r.float("lambda.ip", Some(10.0), 0.0, 1e6);
            let t0 = r.float("lambda.t0", Some(2.0), -1e6, 1e6);
            let tau = r.float("lambda.tau", Some(0.5), 1e-9, 1e6);
            if let (Some(n), Some(gamma), Some(ip), Some(t0), Some(tau)) = (n, gamma, ip, t0, tau) {
                for (label, g) in gamma {
                    let label = if label.is_empty() { label } else { format!("gamma_{label}") };
                    let params = LambdaParams {
                        particles: n,
                        auger: g,
                        pump_area: ip,
                        pump_center: t0,
                        pump_width: tau,
                        t_max: t_max_v,
                        points: points_v,
                    };
                    jobs.push((label, Job::Lambda(params)));
                }
            }
        }
        ScenarioKind::Tcm => {
            let n = r.int("tcm.N", None, 1, 2000);
            let p2 = r.float_list("tcm.p2", 1.0, 0.0, 1.0);
            let field = r.field("tcm.field");
            let n_max_line = r.line_of("tcm.n_max");
            let n_max = if r.entries.contains_key("tcm.n_max") { r.int("tcm.n_max", None, 0, 60_000) } else { None };
            if n_max.is_none() {
                r.resolve("tcm.n_max", "auto");
            }
            if let (Some(n), Some(p2), Some(field)) = (n, p2, field) {
                for (label, p) in p2 {
                    let label = if label.is_empty() { label } else { format!("p2_{label}") };
                    let mut params = TavisCummingsParams::new(n, p, field, t_max_v);
                    params.points = points_v;
                    params.n_max = n_max;
                    if let Some(m) = n_max {
                        if m < params.required_cutoff() {
                            r.error(n_max_line, format!("`tcm.n_max` = {m} is below the required {}", params.required_cutoff()));
                            break;
                        }
                    }
                    jobs.push((label, Job::Tcm(params)));
                }
            }
            if snapshot {
                let line = r.line_of("output.snapshot");
                r.error(line, "`output.snapshot` is not supported for scenario tcm".into());
            }
        }
    }
    r.finish(scenario.name());
    if !r.errors.is_empty() {
        return Err(r.errors);
    }
    let integrator = IntegratorConfig {
        method: method.expect("validated"),
        rel_tol: rtol.expect("validated"),
        abs_tol: atol.expect("validated"),
        max_step: max_step.expect("validated"),
        ..defaults
    };
    Ok(RunConfig {
        scenario,
        jobs,
        integrator,
        spectrum,
        prefix,
        snapshot,
        resolved: r.resolved.into_iter().collect(),
    })
}

fn spectrum_params(r: &mut Reader) -> Option<SpectrumParams> {
    let t_max = r.float("spectrum.t_max", Some(10.0), 0.0, 1e6);
    let t_points = r.int("spectrum.t_points", Some(201), 2, 100_000);
    let tau_max = r.float("spectrum.tau_max", Some(10.0), 1e-12, 1e6);
    let tau_points = r.int("spectrum.tau_points", Some(201), 2, 100_000);
    let lo = r.float("spectrum.omega_min", Some(-5.0), -1e6, 1e6);
    let hi = r.float("spectrum.omega_max", Some(5.0), -1e6, 1e6);
    let n = r.int("spectrum.omega_points", Some(401), 1, 1_000_000);
    if let (Some(lo), Some(hi)) = (lo, hi) {
        if !(hi > lo) {
            let line = r.line_of("spectrum.omega_max");
            r.error(line, "`spectrum.omega_max` must exceed `spectrum.omega_min`".into());
            return None;
        }
    }
    if t_max == Some(0.0) && t_points.is_some_and(|p| p > 1) {
        let line = r.line_of("spectrum.t_max");
        r.error(line, "`spectrum.t_max` must be positive".into());
        return None;
    }
    Some(SpectrumParams {
        t_max: t_max?,
        t_points: t_points?,
        tau_max: tau_max?,
        tau_points: tau_points?,
        omega: uniform_grid(lo?, hi?, n?),
    })
}

fn header(config: &RunConfig, extra: &[(&str, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# superfock {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# units: {}", config.scenario.units());
    for (k, v) in &config.resolved {
        let _ = writeln!(s, "# config: {k} = {v}");
    }
    for (k, v) in extra {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s
}

fn table(head: String, columns: &[&str], data: &[&[f64]]) -> String {
    let mut s = head;
    let _ = writeln!(s, "# columns: {}", columns.join(","));
    let rows = data.first().map_or(0, |c| c.len());
    for i in 0..rows {
        let row: Vec<String> = data.iter().map(|c| format!("{:e}", c[i])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn stem(config: &RunConfig, label: &str) -> String {
    if label.is_empty() {
        config.prefix.clone()
    } else {
        format!("{}_{label}", config.prefix)
    }
}

/// Renders one job's output files in memory.
fn render(config: &RunConfig, label: &str, job: &Job) -> Result<Vec<(String, String)>> {
    let stem = stem(config, label);
    let mut files = Vec::new();
    let mut extra = Vec::new();
    if !label.is_empty() {
        extra.push(("sweep", label.replacen('_', " = ", 1)));
    }
    match job {
        Job::Compact(p) => {
            let run = run_compact(p, &config.integrator)?;
            extra.push(("sector_size", run.sector_size.to_string()));
            let head = header(config, &extra);
            files.push((
                format!("{stem}.csv"),
                table(head.clone(), &["t", "p1", "p2", "intensity"], &[&run.times, &run.p1, &run.p2, &run.intensity]),
            ));
            if let Some(sp) = &config.spectrum {
                let s = compact_spectrum(p, sp, &config.integrator)?;
                files.push((format!("{stem}_spectrum.csv"), table(head.clone(), &["omega", "S", "S_normalized"], &[&s.omega, &s.s, &s.s_normalized])));
            }
            if config.snapshot {
                files.push((format!("{stem}_final.state"), head + &run.final_state.to_snapshot()));
            }
        }
        Job::Lambda(p) => {
            let run = run_lambda(p, &config.integrator)?;
            extra.push(("sector_size", run.sector_size.to_string()));
            extra.push(("total_photons", format!("{:e}", run.total_photons())));
            let head = header(config, &extra);
            let [p0, p1, p2, pi] = &run.populations;
            files.push((
                format!("{stem}.csv"),
                table(
                    head.clone(),
                    &["t", "p0", "p1", "p2", "p_ion", "intensity", "photons"],
                    &[&run.times, p0, p1, p2, pi, &run.intensity, &run.photons],
                ),
            ));
            if config.snapshot {
                files.push((format!("{stem}_final.state"), head + &run.final_state.to_snapshot()));
            }
        }
        Job::Tcm(p) => {
            let run = run_tavis_cummings(p, &config.integrator)?;
            extra.push(("n_max", run.n_max.to_string()));
            extra.push(("sectors", run.sectors.to_string()));
            extra.push(("basis_size", run.basis_size.to_string()));
            extra.push(("field_norm", format!("{:e}", run.field_norm)));
            extra.push(("sector_trace_drift", format!("{:e}", run.sector_drift)));
            let head = header(config, &extra);
            files.push((
                format!("{stem}.csv"),
                table(
                    head,
                    &["t", "p2", "photons", "excitations", "K1", "K2", "trace"],
                    &[&run.times, &run.p2, &run.photons, &run.excitations, &run.k1, &run.k2, &run.trace],
                ),
            ));
        }
    }
    Ok(files)
}

/// Runs every job (in parallel) and writes the outputs into `out_dir`,
/// returning the written paths in a fixed order.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rendered: Vec<Vec<(String, String)>> =
        config.jobs.par_iter().map(|(label, job)| render(config, label, job)).collect::<Result<_>>()?;
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for (name, contents) in rendered.into_iter().flatten() {
        let path = out_dir.join(name);
        fs::write(&path, contents)?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Parser, Debug)]
#[command(name = "superfock", version, about = "Collective dynamics of identical multilevel emitters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the scenario described by a configuration file.
    Run {
        config: PathBuf,
        /// Directory for output files.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Worker threads; overrides SUPERFOCK_THREADS.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a configuration file without running it.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> std::result::Result<RunConfig, i32> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(EXIT_CONFIG);
        }
    };
    parse_config(&text).map_err(|errors| {
        for e in &errors {
            eprintln!("{}: {e}", path.display());
        }
        EXIT_CONFIG
    })
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Capacity { .. } | Error::InvalidArgument(_) | Error::OracleCap { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn thread_count(flag: Option<usize>) -> std::result::Result<Option<usize>, String> {
    if let Some(k) = flag {
        return if k == 0 { Err("--threads must be positive".into()) } else { Ok(Some(k)) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, found `{v}`")),
        },
        Err(_) => Ok(None),
    }
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(c) => {
                println!("{}: ok ({} scenario, {} run(s))", config.display(), c.scenario.name(), c.jobs.len());
                EXIT_OK
            }
            Err(code) => code,
        },
        Command::Run { config, out_dir, threads } => {
            let c = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let threads = match thread_count(threads) {
                Ok(t) => t,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return EXIT_CONFIG;
                }
            };
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(k) = threads {
                builder = builder.num_threads(k);
            }
            let pool = match builder.build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: cannot start worker threads: {e}");
                    return EXIT_NUMERICAL;
                }
            };
            match pool.install(|| run(&c, &out_dir)) {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_compact() {
        let c = parse_config("scenario = compact\ncompact.N = 10\ncompact.p2 = 0.5").unwrap();
        assert_eq!(c.scenario, ScenarioKind::Compact);
        assert_eq!(c.jobs.len(), 1);
        assert_eq!(c.jobs[0].0, "");
        match &c.jobs[0].1 {
            Job::Compact(p) => assert_eq!((p.particles, p.p2), (10, 0.5)),
            other => panic!("{other:?}"),
        }
        assert!(c.resolved.iter().any(|(k, v)| k == "integrator.method" && v == "auto"));
    }

    #[test]
    fn range_error_has_line() {
        let errs = parse_config("scenario = compact\ncompact.p2 = 1.5\ncompact.N = 3").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, 2);
        assert!(errs[0].message.contains("outside"));
    }

    #[test]
    fn collects_all_errors() {
        let text = "scenario = tcm\ntcm.N = x\nfoo = 1\ntcm.field = laser\ncompact.N = 3\ntcm.N = 2";
        let errs = parse_config(text).unwrap_err();
        let lines: Vec<usize> = errs.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 5, 6]);
        assert!(errs[1].message.contains("unknown key"));
        assert!(errs[3].message.contains("does not apply"));
        assert!(errs[4].message.contains("duplicate"));
    }

    #[test]
    fn missing_required_key() {
        let errs = parse_config("scenario = lambda").unwrap_err();
        assert_eq!(errs, vec![ConfigError { line: 0, message: "missing required key `lambda.N`".into() }]);
        assert!(parse_config("").is_err());
    }

    #[test]
    fn lambda_figure_parameters() {
        let text = "scenario = lambda\nlambda.N = 100\nlambda.ip = 10\nlambda.t0 = 2\nlambda.tau = 0.5\nlambda.gamma = 5\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.integrator.method, Method::Rkc);
        match &c.jobs[0].1 {
            Job::Lambda(p) => assert_eq!(*p, LambdaParams { t_max: 10.0, points: 201, ..LambdaParams::standard(100, 5.0) }),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_labels() {
        let c = parse_config("scenario = compact\ncompact.N = 4\ncompact.p2 = 1.0, 0.8,0.5").unwrap();
        let labels: Vec<&str> = c.jobs.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, vec!["p2_1.0", "p2_0.8", "p2_0.5"]);
    }

    #[test]
    fn field_and_cutoff() {
        let c = parse_config("scenario = tcm\ntcm.N = 2\ntcm.field = fock:3\ntcm.n_max = 5").unwrap();
        match &c.jobs[0].1 {
            Job::Tcm(p) => assert_eq!((p.field, p.n_max), (FieldState::Fock(3), Some(5))),
            other => panic!("{other:?}"),
        }
        let errs = parse_config("scenario = tcm\ntcm.N = 2\ntcm.field = fock:3\ntcm.n_max = 4").unwrap_err();
        assert_eq!(errs[0].line, 4);
        let c = parse_config("scenario = tcm\ntcm.N = 1\ntcm.field = coherent:2.5").unwrap();
        assert!(matches!(c.jobs[0].1, Job::Tcm(TavisCummingsParams { field: FieldState::Coherent(m), .. }) if m == 2.5));
    }

    #[test]
    fn rk4_needs_step() {
        assert!(parse_config("scenario = compact\ncompact.N = 2\nintegrator.method = rk4").is_err());
        let c = parse_config("scenario = compact\ncompact.N = 2\nintegrator.method = rk4\nintegrator.step = 0.01").unwrap();
        assert_eq!(c.integrator.method, Method::Rk4 { step: 0.01 });
        let errs = parse_config("scenario = compact\ncompact.N = 2\nintegrator.step = 0.01").unwrap_err();
        assert_eq!(errs[0].line, 3);
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = parse_config("# header\n\nscenario = compact # trailing\n  compact.N = 3  \n").unwrap();
        assert_eq!(c.jobs.len(), 1);
    }
}
