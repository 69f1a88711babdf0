//! Command implementations behind the `lyapspec` binary.

pub mod config;
pub mod selftest;
pub mod svg;

use crate::conformal::{circle_arc_disks, estimate_conformal_with, jacobian_residual, pointwise_dim_bound, Disk};
use crate::error::{Error, ErrorClass, Result};
use crate::gds::{
    bridge, convergence_report, is_transitive, refine, sample_limit_set, subsystem_spectrum, validate_gds, GdsSystem,
};
use crate::map::RationalMap;
use crate::orbit::{hyperbolic_times, sample_julia_orbit, trace_orbit};
use crate::precision::Precision;
use crate::pressure::{
    default_base, default_method, pressure_curve_with, tree_pressure, PressureCurve, PressureMethod, PressureOptions,
};
use crate::pullback::pullback_census;
use crate::spectrum::{alpha_range, duality_check, legendre_spectrum, linspace, SpectrumCurve};
use crate::wmeasure::{build_schedule, synthesize_trace, verify_oscillation, ScheduleOptions};
use config::{point, ExperimentConfig, MethodChoice};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use svg::{Marker, Plot, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Pressure,
    Spectrum,
    Orbit,
    Gds,
    Conformal,
    Wmeasure,
    Selftest,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub precision: Precision,
    pub parallel: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { out: PathBuf::from("out"), precision: Precision::Double, parallel: true }
    }
}

/// Files written and human-readable summary lines of one command.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    /// Reasons for exit status 3; outputs are still written.
    pub degraded: Vec<String>,
}

impl Outcome {
    fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_SEARCH: i32 = 4;

pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if o.degraded.is_empty() => EXIT_OK,
        Ok(_) => EXIT_NUMERIC,
        Err(e) => match e.class() {
            ErrorClass::Config => EXIT_CONFIG,
            ErrorClass::Numeric => EXIT_NUMERIC,
            ErrorClass::Search => EXIT_SEARCH,
        },
    }
}

/// Writes through a temporary file and a rename, so readers never see a
/// partial artifact.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

struct Writer<'a> {
    dir: &'a Path,
    outcome: Outcome,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Self {
        Writer { dir, outcome: Outcome::default() }
    }

    fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = write_atomic(self.dir, name, contents)?;
        self.outcome.files.push(p);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, &s)
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    match cmd {
        Command::Pressure => run_pressure(cfg, opts),
        Command::Spectrum => run_spectrum(cfg, opts),
        Command::Orbit => run_orbit(cfg, opts),
        Command::Gds => run_gds(cfg, opts),
        Command::Conformal => run_conformal(cfg, opts),
        Command::Wmeasure => run_wmeasure(cfg, opts),
        Command::Selftest => selftest::run_to_dir(cfg.seed, &opts.out),
    }
}

fn compute_pressure(map: &RationalMap, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PressureCurve> {
    let sec = cfg.section(&cfg.pressure, "pressure")?;
    let method = match sec.method {
        MethodChoice::Auto => default_method(map)?,
        MethodChoice::Tree => PressureMethod::Tree,
        MethodChoice::Periodic => PressureMethod::Periodic,
    };
    let popts = PressureOptions { precision: opts.precision, parallel: opts.parallel, base: sec.base.map(point) };
    pressure_curve_with(map, &sec.d.values(), method, sec.depth, &popts)
}

fn pressure_plot(curve: &PressureCurve) -> Plot {
    Plot {
        title: format!("Pressure P(d) ({} method, depth {})", curve.method, curve.depth),
        x_label: "d".into(),
        y_label: "P(d)".into(),
        series: vec![Series { name: "P".into(), points: curve.d.iter().cloned().zip(curve.p.iter().cloned()).collect() }],
        markers: Vec::new(),
    }
}

fn note_curve(w: &mut Writer, curve: &PressureCurve) {
    if curve.degraded {
        w.outcome
            .degraded
            .push(format!("pressure curve degraded: dropped mass {:.3e}", curve.dropped_mass));
    }
    for warn in &curve.warnings {
        w.outcome.note(format!("warning: {warn}"));
    }
}

fn run_pressure(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let map = cfg.map()?;
    let curve = compute_pressure(&map, cfg, opts)?;
    let mut w = Writer::new(&opts.out);
    w.text("pressure.csv", &curve.to_csv())?;
    w.json("pressure.json", &curve)?;
    w.text("pressure.svg", &pressure_plot(&curve).render())?;
    note_curve(&mut w, &curve);
    w.outcome.note(format!(
        "pressure: {} points, method {}, convex {}, max err {:.3e}",
        curve.len(),
        curve.method,
        curve.convex,
        curve.err.iter().cloned().fold(0.0, f64::max)
    ));
    Ok(w.outcome)
}

fn default_alpha_grid(curve: &PressureCurve) -> Result<Vec<f64>> {
    let (lo, hi) = alpha_range(curve)?;
    if hi - lo < 1e-12 {
        Ok(vec![lo])
    } else {
        Ok(linspace(lo, hi, 201))
    }
}

#[derive(Serialize)]
struct SpectrumOutput<'a> {
    spectrum: &'a SpectrumCurve,
    duality: crate::spectrum::DualityReport,
    max_f: f64,
}

fn run_spectrum(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let map = cfg.map()?;
    let curve = compute_pressure(&map, cfg, opts)?;
    let alpha = match cfg.spectrum.as_ref().and_then(|s| s.alpha.as_ref()) {
        Some(g) => g.values(),
        None => default_alpha_grid(&curve)?,
    };
    let spectrum = legendre_spectrum(&curve, &alpha)?.with_exceptional(map.detect_exceptional()?);
    let duality = duality_check(&curve, &spectrum);
    let mut w = Writer::new(&opts.out);
    w.text("pressure.csv", &curve.to_csv())?;
    w.text("spectrum.csv", &spectrum.to_csv())?;
    w.json("spectrum.json", &SpectrumOutput { spectrum: &spectrum, duality: duality.clone(), max_f: spectrum.max_f() })?;
    let d0 = spectrum.d0.map_or("none".to_string(), |d| format!("{:.6}", d + 0.0));
    let plot = Plot {
        title: format!("Lyapunov spectrum F(alpha), d0 = {d0}"),
        x_label: "alpha".into(),
        y_label: "F(alpha)".into(),
        series: vec![Series { name: "F".into(), points: spectrum.finite_points() }],
        markers: vec![
            Marker { label: format!("alpha- = {:.4}", spectrum.alpha_minus), x: spectrum.alpha_minus },
            Marker { label: format!("alpha+ = {:.4}", spectrum.alpha_plus), x: spectrum.alpha_plus },
        ],
    };
    w.text("spectrum.svg", &plot.render())?;
    note_curve(&mut w, &curve);
    for warn in &spectrum.warnings {
        w.outcome.note(format!("warning: {warn}"));
    }
    w.outcome.note(format!(
        "spectrum: alpha- = {:.6}, alpha+ = {:.6}, d0 = {d0}, duality residual {:.3e}",
        spectrum.alpha_minus, spectrum.alpha_plus, duality.residual
    ));
    Ok(w.outcome)
}

#[derive(Serialize)]
struct OrbitSummary {
    length: u128,
    final_average: f64,
    tail_min: Option<f64>,
    tail_max: Option<f64>,
    hyperbolic: crate::orbit::HyperbolicTimeSet,
}

fn run_orbit(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let map = cfg.map()?;
    let sec = cfg.section(&cfg.orbit, "orbit")?;
    let trace = match sec.start {
        Some(s) => trace_orbit(&map, point(s), sec.length)?,
        None => {
            let anchor = match sec.anchor {
                Some(a) => point(a),
                None => default_base(&map)?,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            sample_julia_orbit(&map, anchor, sec.length, &mut rng)?.1
        }
    };
    let hyp = hyperbolic_times(&trace, sec.sigma)?;
    let n = trace.len();
    let tail = trace.running_avg_extremes((n / 5).max(1));
    let mut w = Writer::new(&opts.out);
    w.text("trace.csv", &trace.to_csv(100_000))?;
    let summary = OrbitSummary {
        length: n,
        final_average: trace.running_avg(n),
        tail_min: tail.map(|t| t.0),
        tail_max: tail.map(|t| t.1),
        hyperbolic: hyp,
    };
    w.json("orbit.json", &summary)?;
    w.outcome.note(format!(
        "orbit: {} steps, final average {:.6}, {} hyperbolic times (density {:.3})",
        n,
        summary.final_average,
        summary.hyperbolic.times.len(),
        summary.hyperbolic.density
    ));
    if let Some(c) = &sec.census {
        let census = pullback_census(&map, point(c.y), c.depth, c.radius)?;
        w.outcome.note(format!("census: N = {}, log N / n = {:.4}", census.count, census.growth_exponent()));
        w.json("census.json", &census)?;
    }
    Ok(w.outcome)
}

fn points_csv(pts: &[Complex64]) -> String {
    let mut s = String::from("re,im\n");
    for p in pts {
        s.push_str(&format!("{},{}\n", p.re, p.im));
    }
    s
}

#[derive(Serialize)]
struct BridgeOutput<'a> {
    system: &'a GdsSystem,
    spec: &'a crate::gds::BridgeSpec,
    pressure: Vec<(f64, f64, f64, f64)>,
}

fn run_gds(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let map = cfg.map()?;
    let sec = cfg.section(&cfg.gds, "gds")?;
    let system = sec.system.build(&map)?;
    let mut w = Writer::new(&opts.out);
    let json = system.to_json()?;
    if GdsSystem::from_json(&json)? != system {
        return Err(Error::Degraded("gds JSON round trip changed the system".into()));
    }
    w.text("gds.json", &(json + "\n"))?;
    let report = validate_gds(&system, &map)?;
    let transitive = is_transitive(&system);
    w.json("validation.json", &serde_json::json!({ "report": report, "passed": report.passed(), "transitive": transitive }))?;
    if !report.passed() {
        w.outcome.degraded.push(format!("system fails validation: {}", report.messages.join("; ")));
        return Ok(w.outcome);
    }
    let d = sec.d.as_ref().map_or_else(|| linspace(-1.0, 2.0, 31), |g| g.values());
    let sub = subsystem_spectrum(&system, &d, &default_alpha_grid(&crate::gds::subsystem_pressure_curve(&system, &d)?)?)?;
    w.text("gds_pressure.csv", &sub.pressure.to_csv())?;
    w.text("gds_spectrum.csv", &sub.spectrum.to_csv())?;
    w.text("gds_pressure.svg", &pressure_plot(&sub.pressure).render())?;
    w.text("limit_set.csv", &points_csv(&sample_limit_set(&system, &map, sec.sample_depth)?))?;
    w.outcome.note(format!(
        "gds: {} vertices, {} edges, transitive {}, Bowen root {}",
        system.vertices.len(),
        system.edges.len(),
        transitive,
        sub.spectrum.d0.map_or("none".into(), |x| format!("{:.6}", x + 0.0))
    ));
    if !sec.refine.is_empty() {
        let systems: Vec<GdsSystem> = sec.refine.iter().map(|&m| refine(&system, &map, m)).collect::<Result<_>>()?;
        let popts = PressureOptions { precision: opts.precision, parallel: opts.parallel, base: None };
        let reference = pressure_curve_with(&map, &d, PressureMethod::Tree, sec.reference_depth, &popts)?;
        let alpha = default_alpha_grid(&reference)?;
        let rep = convergence_report(&systems, &reference, &alpha)?;
        w.outcome.note(format!("convergence: gaps {:?}, final gap {:.4}", rep.gaps, rep.final_gap()));
        w.json("convergence.json", &rep)?;
    }
    if let Some(other) = &sec.bridge_with {
        let second = other.build(&map)?;
        let res = bridge(&system, &second, &map, sec.search_depth)?;
        let pressure = d
            .iter()
            .map(|&x| {
                (
                    x,
                    crate::gds::subsystem_pressure(&res.system, x).pressure,
                    crate::gds::subsystem_pressure(&system, x).pressure,
                    crate::gds::subsystem_pressure(&second, x).pressure,
                )
            })
            .collect();
        w.json("bridge.json", &BridgeOutput { system: &res.system, spec: &res.spec, pressure })?;
        w.outcome.note(format!(
            "bridge: merged system with {} vertices, transitive {}",
            res.system.vertices.len(),
            is_transitive(&res.system)
        ));
    }
    Ok(w.outcome)
}

fn run_conformal(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let map = cfg.map()?;
    let sec = cfg.section(&cfg.conformal, "conformal")?;
    let base = point(sec.base);
    let pressure = match sec.pressure {
        Some(p) => p,
        None => tree_pressure(&map, sec.d, base, sec.depth)?,
    };
    let est = estimate_conformal_with(&map, sec.d, base, sec.depth, pressure, opts.precision)?;
    let mut tests: Vec<Disk> =
        sec.test_disks.iter().map(|d| Disk::new(Complex64::new(d.c[0], d.c[1]), d.r)).collect();
    if let Some(n) = sec.arcs {
        tests.extend(circle_arc_disks(n, 0.25 / n as f64));
    }
    let mut w = Writer::new(&opts.out);
    w.text("atoms.csv", &est.to_csv())?;
    let jac = if tests.is_empty() { None } else { Some(jacobian_residual(&est, &map, &tests)?) };
    let pw = match &sec.pointwise {
        Some(p) => Some(pointwise_dim_bound(&map, &est, p.q.unwrap_or(f64::INFINITY), point(p.x), p.delta, &p.n)?),
        None => None,
    };
    w.json(
        "conformal.json",
        &serde_json::json!({
            "d": est.d,
            "pressure": est.pressure,
            "depth": est.depth,
            "atoms": est.atoms.len(),
            "flagged_atoms": est.flagged_atoms,
            "jacobian": jac,
            "pointwise": pw,
        }),
    )?;
    w.outcome.note(format!("conformal: {} atoms, pressure {:.6}", est.atoms.len(), pressure));
    if let Some(j) = &jac {
        w.outcome.note(format!("jacobian residual {:.3e} over {} sets", j.residual, j.per_set.len()));
    }
    if let Some(p) = &pw {
        w.outcome.note(format!("pointwise bound {:.4}, empirical liminf {:?}", p.bound, p.empirical_liminf));
    }
    Ok(w.outcome)
}

fn run_wmeasure(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let map = cfg.map()?;
    let sec = cfg.section(&cfg.wmeasure, "wmeasure")?;
    let systems: Vec<GdsSystem> = sec.subsystems.iter().map(|s| s.build(&map)).collect::<Result<_>>()?;
    let sopts = ScheduleOptions { c: sec.c, search_depth: sec.search_depth };
    let mut schedule = build_schedule(&map, &systems, sec.eps_seed, sec.depth, &sopts)?;
    if let Some(lengths) = &sec.override_lengths {
        schedule = schedule.with_block_lengths(lengths).map_err(|e| match e {
            Error::Precondition(m) => Error::Config(format!("wmeasure.override_lengths: {m}")),
            other => other,
        })?;
    }
    let trace = synthesize_trace(&schedule, &map)?;
    let report = verify_oscillation(&trace, &schedule);
    let mut w = Writer::new(&opts.out);
    w.text("schedule.json", &(schedule.to_json()? + "\n"))?;
    w.text("oscillation.json", &(report.to_json()? + "\n"))?;
    w.text("trace.csv", &trace.to_csv(2000))?;
    w.outcome.note(format!(
        "wmeasure: {} blocks, horizon {}, liminf {:.6}, limsup {:.6}, failed checkpoints {}",
        schedule.blocks.len(),
        schedule.len(),
        report.liminf,
        report.limsup,
        report.failed_checkpoints()
    ));
    if !report.all_passed {
        w.outcome.degraded.push(format!("{} checkpoints failed", report.failed_checkpoints()));
    }
    Ok(w.outcome)
}
