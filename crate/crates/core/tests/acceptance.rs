//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line
//! straight to stderr, so the lines show even when output is captured.

use lyapspec::cli::selftest;
use lyapspec::conformal::{circle_arc_disks, estimate_conformal, jacobian_residual, pointwise_dim_bound};
use lyapspec::gds::{
    bridge, convergence_report, is_transitive, refine, subsystem_pressure, subsystem_spectrum, GdsSystem, Vertex,
};
use lyapspec::map::RationalMap;
use lyapspec::orbit::{hyperbolic_times_brute_force, hyperbolic_times_of, pliss_bound, sample_julia_orbit};
use lyapspec::pressure::{pressure_curve, tree_pressure, PressureMethod};
use lyapspec::pullback::{pullback_census, BOUNDARY_SAMPLES, HULL_INFLATION};
use lyapspec::spectrum::{duality_check, legendre_spectrum, linspace, SpectrumCurve};
use lyapspec::sphere::SpherePoint;
use lyapspec::wmeasure::{build_schedule, synthesize_trace, verify_oscillation, ScheduleOptions};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::time::{Duration, Instant};

const LN2: f64 = std::f64::consts::LN_2;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn quad(c: f64) -> RationalMap {
    RationalMap::quadratic(Complex64::new(c, 0.0))
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn two_disk(map: &RationalMap) -> GdsSystem {
    GdsSystem::from_disks(
        map,
        vec![Vertex::new(re(-2.4), 0.8).with_anchor(re(-2.0)), Vertex::new(re(2.4), 0.8).with_anchor(re(3.0))],
        1,
    )
    .unwrap()
}

fn z2_suite() -> Outcome {
    let start = Instant::now();
    let f = quad(0.0);
    let mut err: f64 = 0.0;
    for d in [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0] {
        err = err.max((tree_pressure(&f, d, SpherePoint::real(1.0), 8).unwrap() - (1.0 - d) * LN2).abs());
    }
    let curve = pressure_curve(&f, &linspace(-2.0, 3.0, 51), PressureMethod::Tree, 8).unwrap();
    let spec = legendre_spectrum(&curve, &[LN2]).unwrap();
    let f_ln2 = spec.alpha_f_at(LN2).unwrap_or(f64::NAN) / LN2;
    let d0 = spec.d0.unwrap_or(f64::NAN);
    let elapsed = start.elapsed();
    let passed = err < 1e-9
        && within(f_ln2, 1.0, 1e-6)
        && within(spec.alpha_minus, LN2, 1e-6)
        && within(spec.alpha_plus, LN2, 1e-6)
        && within(d0, 1.0, 1e-6)
        && elapsed < Duration::from_secs(10);
    outcome(
        passed,
        format!(
            "tree err {err:.1e}, F(log 2) = {f_ln2:.9}, alpha = [{:.9}, {:.9}], d0 = {d0:.9}, {:.2?}",
            spec.alpha_minus, spec.alpha_plus, elapsed
        ),
    )
}

fn chebyshev() -> Outcome {
    let start = Instant::now();
    let f = quad(-2.0);
    let curve = pressure_curve(&f, &linspace(-3.0, 4.0, 141), PressureMethod::Periodic, 12).unwrap();
    let spec = legendre_spectrum(&curve, &linspace(0.6, 1.45, 171)).unwrap();
    let d0 = spec.d0.unwrap_or(f64::NAN);
    let elapsed = start.elapsed();
    let passed = within(spec.alpha_minus, LN2, 0.05)
        && within(spec.alpha_plus, 2.0 * LN2, 0.05)
        && within(d0, 1.0, 0.02)
        && elapsed < Duration::from_secs(120);
    outcome(
        passed,
        format!("alpha = [{:.6}, {:.6}], d0 = {d0:.6}, {:.2?}", spec.alpha_minus, spec.alpha_plus, elapsed),
    )
}

fn cantor_spectrum() -> SpectrumCurve {
    let curve = pressure_curve(&quad(-6.0), &linspace(-2.0, 3.0, 101), PressureMethod::Tree, 10).unwrap();
    legendre_spectrum(&curve, &linspace(1.4, 1.8, 201)).unwrap()
}

fn duality() -> Outcome {
    let curve = pressure_curve(&quad(-6.0), &linspace(-2.0, 3.0, 101), PressureMethod::Tree, 10).unwrap();
    let spec = legendre_spectrum(&curve, &linspace(1.4, 1.8, 201)).unwrap();
    let dual = duality_check(&curve, &spec);
    let concavity = spec.concavity_defect();
    let d0 = spec.d0.unwrap_or(f64::NAN);
    let passed = dual.residual < 1e-4 && dual.recovery < 1e-3 && concavity <= 1e-9 && within(spec.max_f(), d0, 1e-3);
    outcome(
        passed,
        format!(
            "residual {:.1e}, recovery {:.1e}, concavity defect {concavity:.1e}, max F {:.6} vs d0 {d0:.6}",
            dual.residual,
            dual.recovery,
            spec.max_f()
        ),
    )
}

fn gds_machinery() -> Outcome {
    let f = quad(-6.0);
    let two = two_disk(&f);
    let mut closed_form_ok = true;
    let mut worst_gap: f64 = 0.0;
    for d in linspace(0.0, 1.0, 21) {
        let sp = subsystem_pressure(&two, d);
        let gap = (sp.pressure - (6f64.powf(-d) + 4f64.powf(-d)).ln()).abs();
        worst_gap = worst_gap.max(gap);
        closed_form_ok &= gap <= sp.error_bar + 1e-12;
    }
    let sub = subsystem_spectrum(&two, &linspace(0.0, 1.0, 101), &linspace(1.4, 1.8, 41)).unwrap();
    let root = sub.spectrum.d0.unwrap_or(f64::NAN);

    let l3 = GdsSystem::loop_at(&f, re(3.0), 0.2).unwrap();
    let l2 = GdsSystem::loop_at(&f, re(-2.0), 0.2).unwrap();
    let merged = bridge(&l3, &l2, &f, 12).unwrap();
    let mut margin = f64::INFINITY;
    for d in linspace(-1.0, 2.0, 13) {
        let parts = subsystem_pressure(&l3, d).pressure.max(subsystem_pressure(&l2, d).pressure);
        margin = margin.min(subsystem_pressure(&merged.system, d).pressure - parts);
    }
    let transitive = is_transitive(&merged.system);

    let grid = linspace(-1.0, 2.0, 13);
    let reference = pressure_curve(&f, &grid, PressureMethod::Tree, 12).unwrap();
    let systems: Vec<GdsSystem> = (1..=4).map(|m| refine(&two, &f, m).unwrap()).collect();
    let report = convergence_report(&systems, &reference, &linspace(1.2, 2.0, 81)).unwrap();

    let passed = closed_form_ok
        && within(root, 0.4435, 5e-3)
        && transitive
        && margin >= -1e-9
        && report.sup_monotone
        && report.final_gap() < 0.02;
    outcome(
        passed,
        format!(
            "closed-form gap {worst_gap:.1e}, Bowen root {root:.6}, bridge transitive {transitive} margin {margin:.2e}, \
             sup monotone {}, gaps {:?}",
            report.sup_monotone,
            report.gaps.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn conformal() -> Outcome {
    let f = quad(0.0);
    let est = estimate_conformal(&f, 1.0, SpherePoint::real(1.0), 8, 0.0).unwrap();
    let jac = jacobian_residual(&est, &f, &circle_arc_disks(16, 0.25 / 16.0)).unwrap();
    let n_list: Vec<usize> = (60..=200).step_by(20).collect();
    let pw = pointwise_dim_bound(&f, &est, LN2, SpherePoint::real(1.0), 0.1, &n_list).unwrap();
    let ratios: Vec<f64> = pw.entries.iter().filter_map(|e| e.ratio).collect();
    let worst = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    let passed = jac.residual < 1e-3 && within(pw.bound, 1.0, 1e-12) && !ratios.is_empty() && worst <= 0.05;
    outcome(
        passed,
        format!("Jacobian residual {:.1e}, bound {:.6}, {} ratios, max |ratio - 1| {worst:.4}", jac.residual, pw.bound, ratios.len()),
    )
}

fn hyperbolic_times() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut mismatches = 0;
    let mut pliss_checked = 0;
    let mut pliss_failures = 0;
    for _ in 0..1000 {
        let len = rng.gen_range(1..=200);
        let hi = rng.gen_range(0.5..3.0);
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..hi)).collect();
        let sigma = rng.gen_range(0.01..1.0);
        let fast = hyperbolic_times_of(&values, sigma);
        if fast.times != hyperbolic_times_brute_force(&values, sigma) {
            mismatches += 1;
        }
        if let Some(theta) = pliss_bound(&values, sigma) {
            pliss_checked += 1;
            if fast.density + 1e-12 < theta {
                pliss_failures += 1;
            }
        }
    }
    outcome(
        mismatches == 0 && pliss_failures == 0,
        format!("{mismatches} mismatches, Pliss bound failed on {pliss_failures} of {pliss_checked} traces"),
    )
}

/// Census by explicit enumeration of every branch word of `z^2 - 2`, with
/// preimages taken as square roots in absolute coordinates. Uses the same
/// decision rule as the library: a region whose inflated sample hull meets
/// the critical value ramifies, and a pulled region whose hull meets 0
/// contains the critical point.
fn census_oracle(y: Complex64, n: usize, radius: f64) -> usize {
    let circle: Vec<Complex64> = std::iter::once(Complex64::new(0.0, 0.0))
        .chain((0..BOUNDARY_SAMPLES).map(|k| {
            Complex64::from_polar(radius, std::f64::consts::TAU * k as f64 / BOUNDARY_SAMPLES as f64)
        }))
        .collect();
    let disk = |c: Complex64| circle.iter().map(|o| c + o).collect::<Vec<_>>();
    let hull_contains = |pts: &[Complex64], p: Complex64| {
        let c = pts.iter().sum::<Complex64>() / pts.len() as f64;
        let r = pts.iter().map(|q| (q - c).norm()).fold(0.0, f64::max) * HULL_INFLATION;
        (p - c).norm() <= r
    };
    let crit = Complex64::new(0.0, 0.0);
    let crit_value = Complex64::new(-2.0, 0.0);
    let mut pairs: Vec<(Complex64, usize)> = Vec::new();
    for word in 0u32..(1 << n) {
        let mut node = y;
        let mut region = disk(y);
        let (mut anchor, mut anchor_point) = (0, y);
        for t in 0..n {
            let root = (node + 2.0).sqrt();
            let child = if word >> t & 1 == 0 { root } else { -root };
            let reset = if hull_contains(&region, crit_value) {
                true
            } else {
                region = region
                    .iter()
                    .map(|p| {
                        let w = (p + 2.0).sqrt();
                        if (w - child).norm() <= (w + child).norm() { w } else { -w }
                    })
                    .collect();
                hull_contains(&region, crit)
            };
            if reset {
                anchor = t + 1;
                anchor_point = child;
                region = disk(child);
            }
            node = child;
        }
        if !pairs.iter().any(|(p, k)| *k == anchor && (p - anchor_point).norm() < 1e-8) {
            pairs.push((anchor_point, anchor));
        }
    }
    pairs.len()
}

fn census() -> Outcome {
    let cheb = quad(-2.0);
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (y, radius) in [(re(1.9), 0.3), (Complex64::new(0.4, 0.7), 0.2), (re(-1.3), 0.5)] {
        for n in 0..=10 {
            let got = pullback_census(&cheb, SpherePoint::Finite(y), n, radius).unwrap().count;
            let want = census_oracle(y, n, radius);
            compared += 1;
            if got != want {
                mismatches.push(format!("y={y} R={radius} n={n}: {got} vs {want}"));
            }
        }
    }
    let cantor = pullback_census(&quad(-6.0), SpherePoint::real(3.0), 12, 0.5).unwrap();
    let growth = (cantor.count as f64).ln() / 12.0;
    outcome(
        mismatches.is_empty() && growth < 0.1,
        format!("{compared} censuses compared, mismatches {mismatches:?}; z^2-6 N = {}, log N / n = {growth:.4}", cantor.count),
    )
}

fn completeness(spec: &SpectrumCurve) -> Outcome {
    let f = quad(-6.0);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (lo_bound, hi_bound) = (spec.alpha_minus - 0.05, spec.alpha_plus + 0.05);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut outside = 0;
    for _ in 0..100 {
        let (_, trace) = sample_julia_orbit(&f, SpherePoint::real(3.0), 500, &mut rng).unwrap();
        let (a, b) = trace.running_avg_extremes(100).unwrap();
        lo = lo.min(a);
        hi = hi.max(b);
        if a < lo_bound || b > hi_bound {
            outside += 1;
        }
    }
    outcome(
        outside == 0,
        format!("l_n range [{lo:.4}, {hi:.4}] within [{lo_bound:.4}, {hi_bound:.4}]; {outside} orbits outside"),
    )
}

fn wmeasure() -> Outcome {
    let start = Instant::now();
    let f = quad(-6.0);
    let loops = [GdsSystem::loop_at(&f, re(3.0), 0.2).unwrap(), GdsSystem::loop_at(&f, re(-2.0), 0.2).unwrap()];
    let sched = build_schedule(&f, &loops, 0.1, 6, &ScheduleOptions::default()).unwrap();
    let report = verify_oscillation(&synthesize_trace(&sched, &f).unwrap(), &sched);
    let truncated = sched.with_block_lengths(&[1, 2, 3, 4, 5, 6]).unwrap();
    let control = verify_oscillation(&synthesize_trace(&truncated, &f).unwrap(), &truncated);
    let elapsed = start.elapsed();
    let passed = report.all_passed
        && within(report.liminf, 4f64.ln(), 0.02)
        && within(report.limsup, 6f64.ln(), 0.02)
        && control.failed_checkpoints() >= 1
        && elapsed < Duration::from_secs(60);
    outcome(
        passed,
        format!(
            "{} checkpoints, {} failed; liminf {:.6}, limsup {:.6}; control fails {}; {:.2?}",
            report.checkpoints.len(),
            report.failed_checkpoints(),
            report.liminf,
            report.limsup,
            control.failed_checkpoints(),
            elapsed
        ),
    )
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        selftest::run_to_dir(7, dir.path()).unwrap();
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let differing: Vec<_> = names
        .iter()
        .filter(|name| std::fs::read(dirs[0].path().join(name)).ok() != std::fs::read(dirs[1].path().join(name)).ok())
        .collect();
    outcome(differing.is_empty() && !names.is_empty(), format!("{} files compared, differing {differing:?}", names.len()))
}

#[test]
fn acceptance_criteria() {
    let spec = cantor_spectrum();
    let results = [
        ("1 z^2 analytic suite", z2_suite()),
        ("2 Chebyshev interval", chebyshev()),
        ("3 Legendre duality", duality()),
        ("4 GDS machinery", gds_machinery()),
        ("5 conformal measure", conformal()),
        ("6 hyperbolic times", hyperbolic_times()),
        ("7 pullback census", census()),
        ("8 orbit averages in spectrum support", completeness(&spec)),
        ("9 W-measure oscillation", wmeasure()),
        ("10 determinism", determinism()),
    ];
    let mut err = std::io::stderr().lock();
    writeln!(err).unwrap();
    for (name, r) in &results {
        writeln!(err, "{} {name}: {}", if r.passed { "PASS" } else { "FAIL" }, r.detail).unwrap();
    }
    drop(err);
    let failed: Vec<&str> = results.iter().filter(|(_, r)| !r.passed).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
