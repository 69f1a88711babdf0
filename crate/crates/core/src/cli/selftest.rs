//! Fast deterministic end-to-end checks with closed-form or exact oracles.

use super::{write_atomic, Outcome};
use crate::conformal::{circle_arc_disks, estimate_conformal, jacobian_residual};
use crate::error::Result;
use crate::gds::{bridge, is_transitive, subsystem_pressure, subsystem_spectrum, validate_gds, GdsSystem, Vertex};
use crate::map::RationalMap;
use crate::orbit::{hyperbolic_times_brute_force, hyperbolic_times_of, pliss_bound, sample_julia_orbit};
use crate::pressure::{pressure_curve, tree_pressure, PressureMethod};
use crate::pullback::pullback_census;
use crate::spectrum::{duality_check, legendre_spectrum, linspace};
use crate::sphere::SpherePoint;
use crate::wmeasure::{build_schedule, synthesize_trace, verify_oscillation, ScheduleOptions};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub requirement: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Report plus the artifacts it writes, as `(file name, contents)`.
pub struct Selftest {
    pub report: SelftestReport,
    pub artifacts: Vec<(String, String)>,
}

struct Suite {
    checks: Vec<Check>,
    artifacts: Vec<(String, String)>,
}

impl Suite {
    fn check(&mut self, name: &str, value: f64, requirement: &str, passed: bool) {
        self.checks.push(Check { name: name.into(), value, requirement: requirement.into(), passed });
    }

    fn below(&mut self, name: &str, value: f64, bound: f64) {
        self.check(name, value, &format!("< {bound:e}"), value < bound);
    }

    fn near(&mut self, name: &str, value: f64, target: f64, tol: f64) {
        self.check(name, value, &format!("{target} +- {tol}"), (value - target).abs() <= tol);
    }
}

fn quad(c: f64) -> RationalMap {
    RationalMap::quadratic(Complex64::new(c, 0.0))
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

pub fn run(seed: u64) -> Result<Selftest> {
    let mut s = Suite { checks: Vec::new(), artifacts: Vec::new() };
    let ln2 = 2f64.ln();

    // z^2: |f'| = 2 on the unit circle
    let z2 = quad(0.0);
    let mut err: f64 = 0.0;
    for d in [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0] {
        err = err.max((tree_pressure(&z2, d, SpherePoint::real(1.0), 8)? - (1.0 - d) * ln2).abs());
    }
    s.below("z2 tree pressure vs (1-d) log 2", err, 1e-9);
    let curve = pressure_curve(&z2, &linspace(-2.0, 3.0, 11), PressureMethod::Tree, 8)?;
    let spec = legendre_spectrum(&curve, &[ln2])?;
    s.near("z2 F(log 2)", spec.alpha_f_at(ln2).unwrap_or(f64::NAN) / ln2, 1.0, 1e-6);
    s.near("z2 alpha-", spec.alpha_minus, ln2, 1e-6);
    s.near("z2 alpha+", spec.alpha_plus, ln2, 1e-6);
    s.near("z2 d0", spec.d0.unwrap_or(f64::NAN), 1.0, 1e-6);
    s.artifacts.push(("z2_pressure.csv".into(), curve.to_csv()));

    // Chebyshev z^2 - 2: [alpha-, alpha+] = [log 2, 2 log 2]
    let cheb = quad(-2.0);
    let curve = pressure_curve(&cheb, &linspace(-3.0, 4.0, 71), PressureMethod::Periodic, 10)?;
    let spec = legendre_spectrum(&curve, &linspace(0.6, 1.45, 86))?;
    s.near("chebyshev alpha-", spec.alpha_minus, ln2, 0.05);
    s.near("chebyshev alpha+", spec.alpha_plus, 2.0 * ln2, 0.05);
    s.near("chebyshev d0", spec.d0.unwrap_or(f64::NAN), 1.0, 0.02);
    s.artifacts.push(("chebyshev_spectrum.csv".into(), spec.to_csv()));

    // z^2 - 6: Legendre duality on a tree curve
    let f6 = quad(-6.0);
    let curve6 = pressure_curve(&f6, &linspace(-2.0, 3.0, 101), PressureMethod::Tree, 10)?;
    let spec6 = legendre_spectrum(&curve6, &linspace(1.4, 1.8, 201))?;
    let dual = duality_check(&curve6, &spec6);
    s.below("z2-6 duality residual", dual.residual, 1e-4);
    s.below("z2-6 double transform recovery", dual.recovery, 1e-3);

    // two-disk system with weights 6 and 4
    let two = GdsSystem::from_disks(
        &f6,
        vec![Vertex::new(re(-2.4), 0.8).with_anchor(re(-2.0)), Vertex::new(re(2.4), 0.8).with_anchor(re(3.0))],
        1,
    )?;
    s.check("two-disk system validates", 0.0, "valid", validate_gds(&two, &f6)?.passed());
    let mut gap: f64 = 0.0;
    for d in linspace(0.0, 1.0, 11) {
        gap = gap.max((subsystem_pressure(&two, d).pressure - (6f64.powf(-d) + 4f64.powf(-d)).ln()).abs());
    }
    s.below("two-disk pressure vs log(6^-d + 4^-d)", gap, 1e-9);
    let sub = subsystem_spectrum(&two, &linspace(0.0, 1.0, 101), &linspace(1.4, 1.8, 41))?;
    s.near("two-disk Bowen root", sub.spectrum.d0.unwrap_or(f64::NAN), 0.438694221823891, 1e-4);
    s.artifacts.push(("two_disk_gds.json".into(), two.to_json()? + "\n"));

    let l3 = GdsSystem::loop_at(&f6, re(3.0), 0.2)?;
    let l2 = GdsSystem::loop_at(&f6, re(-2.0), 0.2)?;
    let merged = bridge(&l3, &l2, &f6, 12)?;
    let mut worst = f64::INFINITY;
    for d in linspace(-1.0, 2.0, 13) {
        let parts = subsystem_pressure(&l3, d).pressure.max(subsystem_pressure(&l2, d).pressure);
        worst = worst.min(subsystem_pressure(&merged.system, d).pressure - parts);
    }
    s.check("bridge is transitive", 0.0, "strongly connected", is_transitive(&merged.system));
    s.check("bridge pressure minus max of parts", worst, ">= -1e-9", worst >= -1e-9);

    // conformal measure of z^2 at d = 1 is Lebesgue on the circle
    let est = estimate_conformal(&z2, 1.0, SpherePoint::real(1.0), 8, 0.0)?;
    let jac = jacobian_residual(&est, &z2, &circle_arc_disks(16, 0.25 / 16.0))?;
    s.below("z2 conformal Jacobian residual", jac.residual, 1e-3);

    // hyperbolic times against the quadratic scan
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0usize;
    let mut pliss_failures = 0usize;
    for _ in 0..200 {
        let len = rng.gen_range(1..=200);
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let sigma = rng.gen_range(0.05..1.0);
        let fast = hyperbolic_times_of(&values, sigma);
        if fast.times != hyperbolic_times_brute_force(&values, sigma) {
            mismatches += 1;
        }
        if let Some(theta) = pliss_bound(&values, sigma) {
            if fast.density + 1e-12 < theta {
                pliss_failures += 1;
            }
        }
    }
    s.check("hyperbolic times vs brute force (mismatches)", mismatches as f64, "= 0", mismatches == 0);
    s.check("Pliss density bound (failures)", pliss_failures as f64, "= 0", pliss_failures == 0);

    // pullback census of the Chebyshev map
    let census = pullback_census(&cheb, SpherePoint::real(1.9), 6, 0.3)?;
    s.check("chebyshev census N(1.9, 6, 0.3)", census.count as f64, "= 11", census.count == 11);

    // seeded orbits of z^2 - 6 stay inside the spectrum's support
    let mut outside = 0usize;
    let mut first_trace = None;
    for _ in 0..20 {
        let (_, trace) = sample_julia_orbit(&f6, SpherePoint::real(3.0), 300, &mut rng)?;
        let (lo, hi) = trace.running_avg_extremes(100).unwrap_or((f64::NAN, f64::NAN));
        if !(lo >= spec6.alpha_minus - 0.05 && hi <= spec6.alpha_plus + 0.05) {
            outside += 1;
        }
        first_trace.get_or_insert(trace);
    }
    s.check("z2-6 orbit averages outside [alpha-, alpha+] +- 0.05", outside as f64, "= 0", outside == 0);
    if let Some(t) = first_trace {
        s.artifacts.push(("orbit_trace.csv".into(), t.to_csv(1000)));
    }

    // oscillating orbit between the loops at 3 and -2
    let sched = build_schedule(&f6, &[l3, l2], 0.1, 6, &ScheduleOptions::default())?;
    let trace = synthesize_trace(&sched, &f6)?;
    let rep = verify_oscillation(&trace, &sched);
    s.check("wmeasure checkpoints", rep.failed_checkpoints() as f64, "= 0 failures", rep.all_passed);
    s.near("wmeasure liminf", rep.liminf, 4f64.ln(), 0.02);
    s.near("wmeasure limsup", rep.limsup, 6f64.ln(), 0.02);
    s.artifacts.push(("wmeasure_oscillation.json".into(), rep.to_json()? + "\n"));

    let passed = s.checks.iter().all(|c| c.passed);
    let report = SelftestReport { seed, checks: s.checks, passed };
    Ok(Selftest { report, artifacts: s.artifacts })
}

pub fn run_to_dir(seed: u64, dir: &Path) -> Result<Outcome> {
    let st = run(seed)?;
    let mut outcome = Outcome::default();
    for (name, contents) in &st.artifacts {
        outcome.files.push(write_atomic(dir, name, contents)?);
    }
    let mut json = serde_json::to_string_pretty(&st.report)?;
    json.push('\n');
    outcome.files.push(write_atomic(dir, "selftest.json", &json)?);
    for c in &st.report.checks {
        outcome.summary.push(format!(
            "{} {}: {} (required {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.requirement
        ));
    }
    if !st.report.passed {
        outcome.degraded.push("selftest checks failed".into());
    }
    Ok(outcome)
}
