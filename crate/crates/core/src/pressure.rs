//! Topological pressure of `phi_d = -d log|f'|` from preimage trees and
//! periodic-orbit sums.

use crate::error::{Error, Result};
use crate::map::{dedup_points, RationalMap};
use crate::poly::aberth;
use crate::precision::Precision;
use crate::sphere::SpherePoint;
use crate::tree::{log_sum_exp, PreimageTree};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Multiplier threshold `|(f^n)'(p)| > 1 + REPELLING_MARGIN` for periodic sums.
pub const REPELLING_MARGIN: f64 = 1e-6;
/// Periodic points closer than this are merged.
pub const MERGE_TOL: f64 = 1e-8;
/// Chordal distance below which two Aberth roots count as one periodic
/// point. Simple roots come out accurate to rounding, and distinct repelling
/// points of high period can lie closer than [`MERGE_TOL`].
pub const PERIODIC_MERGE_TOL: f64 = 1e-11;
/// Largest number of leaves or periodic roots a single run may request.
pub const MAX_TREE_LEAVES: usize = 1 << 22;
pub const MAX_PERIODIC_ROOTS: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PressureMethod {
    Tree,
    Periodic,
    Gds,
}

impl std::fmt::Display for PressureMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PressureMethod::Tree => "tree",
            PressureMethod::Periodic => "periodic",
            PressureMethod::Gds => "gds",
        };
        f.write_str(s)
    }
}

/// Sampled pressure function `d -> P(phi_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureCurve {
    pub d: Vec<f64>,
    pub p: Vec<f64>,
    pub err: Vec<f64>,
    pub method: PressureMethod,
    pub depth: usize,
    /// Discrete convexity held to tolerance.
    pub convex: bool,
    /// Set when convexity failed or too much mass was dropped.
    pub degraded: bool,
    /// Largest fraction of the partition sum carried by dropped (flagged)
    /// tree nodes, over the grid.
    pub dropped_mass: f64,
    pub warnings: Vec<String>,
}

impl PressureCurve {
    /// Builds a curve from samples and runs the convexity check.
    pub fn new(d: Vec<f64>, p: Vec<f64>, err: Vec<f64>, method: PressureMethod, depth: usize) -> Result<Self> {
        if d.len() != p.len() || d.len() != err.len() {
            return Err(Error::Precondition("grid, values and errors differ in length".into()));
        }
        if d.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Precondition("d grid must be strictly increasing".into()));
        }
        let mut curve = PressureCurve {
            d,
            p,
            err,
            method,
            depth,
            convex: true,
            degraded: false,
            dropped_mass: 0.0,
            warnings: Vec::new(),
        };
        curve.check_convexity();
        Ok(curve)
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// `max |P|` over the grid (at least 1, to give tolerances a floor).
    pub fn scale(&self) -> f64 {
        self.p.iter().fold(1.0f64, |m, v| m.max(v.abs()))
    }

    /// Chord slopes `(P_{i+1} - P_i) / (d_{i+1} - d_i)`.
    pub fn slopes(&self) -> Vec<f64> {
        self.d
            .windows(2)
            .zip(self.p.windows(2))
            .map(|(d, p)| (p[1] - p[0]) / (d[1] - d[0]))
            .collect()
    }

    /// Worst violation of nondecreasing slopes, as a nonnegative number.
    pub fn convexity_defect(&self) -> f64 {
        self.slopes()
            .windows(2)
            .map(|s| (s[0] - s[1]).max(0.0))
            .fold(0.0, f64::max)
    }

    fn check_convexity(&mut self) {
        let tol = 1e-6 * self.scale();
        let defect = self.convexity_defect();
        if defect > tol {
            self.convex = false;
            self.degraded = true;
            self.warnings.push(format!("pressure not convex on grid (slope defect {defect:.3e})"));
        }
    }

    /// Piecewise-linear interpolant; `None` outside the grid.
    pub fn value_at(&self, d: f64) -> Option<f64> {
        interpolate(&self.d, &self.p, d)
    }

    /// CSV with header `d,P,err`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("d,P,err\n");
        for i in 0..self.len() {
            out.push_str(&format!("{},{},{}\n", self.d[i], self.p[i], self.err[i]));
        }
        out
    }
}

/// Linear interpolation on a sorted grid.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let i = xs.partition_point(|&v| v < x);
    if i < xs.len() && xs[i] == x {
        return Some(ys[i]);
    }
    if i == 0 {
        return Some(ys[0]);
    }
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    Some(ys[i - 1] + t * (ys[i] - ys[i - 1]))
}

/// Log-partition sum over one tree level, skipping flagged nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelSum {
    /// `log sum |(f^k)'(y)|^{-d}` over unflagged nodes.
    pub log_sum: f64,
    /// Fraction of the full sum carried by flagged nodes.
    pub dropped_mass: f64,
}

pub fn level_sum(tree: &PreimageTree, d: f64, level: usize) -> LevelSum {
    let nodes = tree.level(level);
    let kept = log_sum_exp(nodes.iter().filter(|n| !n.flagged).map(|n| -d * n.cum_log_deriv));
    let dropped_nodes: Vec<f64> = nodes.iter().filter(|n| n.flagged).map(|n| -d * n.cum_log_deriv).collect();
    let dropped_mass = if dropped_nodes.is_empty() {
        0.0
    } else {
        let dropped = log_sum_exp(dropped_nodes);
        if dropped.is_nan() || dropped == f64::INFINITY {
            1.0
        } else {
            let total = log_sum_exp([kept, dropped]);
            (dropped - total).exp()
        }
    };
    LevelSum { log_sum: kept, dropped_mass }
}

/// `(1/n) log sum_{y in f^{-n}(x)} |(f^n)'(y)|^{-d}`.
pub fn tree_pressure(map: &RationalMap, d: f64, x: SpherePoint, n: usize) -> Result<f64> {
    check_tree_size(map, n)?;
    let tree = PreimageTree::build(map, x, n)?;
    Ok(level_sum(&tree, d, n).log_sum / n as f64)
}

fn check_tree_size(map: &RationalMap, n: usize) -> Result<()> {
    let leaves = (map.degree() as f64).powi(n as i32);
    if leaves > MAX_TREE_LEAVES as f64 {
        return Err(Error::Precondition(format!(
            "tree depth {n} needs {leaves:.0} leaves, limit {MAX_TREE_LEAVES}"
        )));
    }
    Ok(())
}

/// Periodic points of exact-or-dividing period `n`, with multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicOrbitData {
    pub period: usize,
    /// Distinct solutions of `f^n(z) = z` and their `log |(f^n)'|`.
    pub points: Vec<(SpherePoint, f64)>,
    pub repelling: usize,
    pub indifferent: usize,
    pub attracting: usize,
    /// Roots whose final Newton correction stayed above tolerance.
    pub unconverged: usize,
}

impl PeriodicOrbitData {
    /// `log sum |(f^n)'(p)|^{-d}` over repelling points.
    pub fn log_sum(&self, d: f64) -> f64 {
        let threshold = (1.0 + REPELLING_MARGIN).ln();
        log_sum_exp(self.points.iter().filter(|(_, m)| *m > threshold).map(|(_, m)| -d * m))
    }

    pub fn pressure(&self, d: f64) -> f64 {
        self.log_sum(d) / self.period as f64
    }
}

/// `(N, D, N', D')` for `f^n = N/D` at `z`, rescaled at every step.
fn iterate_homogeneous(map: &RationalMap, z: Complex64, n: usize) -> [Complex64; 4] {
    let p = map.numerator().coeffs();
    let q = map.denominator().coeffs();
    let deg = map.degree();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let (mut nn, mut dd, mut dn, mut ddd) = (z, one, one, zero);
    let mut npow = vec![one; deg + 1];
    let mut dpow = vec![one; deg + 1];
    for _ in 0..n {
        let s = nn.norm().max(dd.norm());
        if s > 0.0 && s.is_finite() {
            let inv = 1.0 / s;
            nn *= inv;
            dd *= inv;
            dn *= inv;
            ddd *= inv;
        }
        for k in 1..=deg {
            npow[k] = npow[k - 1] * nn;
            dpow[k] = dpow[k - 1] * dd;
        }
        let hom = |c: &[Complex64]| {
            let (mut v, mut vn, mut vd) = (zero, zero, zero);
            for (k, &ck) in c.iter().enumerate().take(deg + 1) {
                v += ck * npow[k] * dpow[deg - k];
                if k > 0 {
                    vn += ck * (k as f64) * npow[k - 1] * dpow[deg - k];
                }
                if k < deg {
                    vd += ck * ((deg - k) as f64) * npow[k] * dpow[deg - k - 1];
                }
            }
            (v, vn, vd)
        };
        let (pv, pn, pd) = hom(p);
        let (qv, qn, qd) = hom(q);
        let new_dn = pn * dn + pd * ddd;
        let new_ddd = qn * dn + qd * ddd;
        nn = pv;
        dd = qv;
        dn = new_dn;
        ddd = new_ddd;
    }
    [nn, dd, dn, ddd]
}

/// `(h, h')` up to a common factor, where `h(z) = N_n(z) - z D_n(z)`.
fn periodic_equation(map: &RationalMap, z: Complex64, n: usize) -> (Complex64, Complex64) {
    let [nn, dd, dn, ddd] = iterate_homogeneous(map, z, n);
    (nn - z * dd, dn - dd - z * ddd)
}

/// Repelling fixed point whose preimage tree stays clear of critical values.
pub fn default_base(map: &RationalMap) -> Result<SpherePoint> {
    let mut candidates: Vec<(SpherePoint, f64)> = Vec::new();
    for p in dedup_points(map.fixed_points()?, MERGE_TOL) {
        let m = map.log_multiplier(p, 1)?;
        if m > (1.0 + REPELLING_MARGIN).ln() && !p.is_infinity() {
            candidates.push((p, m));
        }
    }
    // prefer the weakest expansion: it sits deepest inside J
    candidates.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    for &(p, _) in &candidates {
        let tree = PreimageTree::build(map, p, 4)?;
        if tree.flagged_leaves() == 0 {
            return Ok(p);
        }
    }
    candidates
        .first()
        .map(|c| c.0)
        .ok_or_else(|| Error::Precondition("no repelling fixed point to use as tree base".into()))
}

/// Periodic points of `f^n` via Aberth iteration seeded by `f^{-n}(base)`.
pub fn periodic_points(map: &RationalMap, n: usize, parallel: bool) -> Result<PeriodicOrbitData> {
    if n == 0 {
        return Err(Error::Precondition("period must be at least 1".into()));
    }
    let expected = (map.degree() as f64).powi(n as i32);
    if expected > MAX_PERIODIC_ROOTS as f64 {
        return Err(Error::Precondition(format!(
            "period {n} needs {expected:.0} roots, limit {MAX_PERIODIC_ROOTS}"
        )));
    }
    let base = default_base(map)?;
    let tree = PreimageTree::build(map, base, n)?;
    let mut guesses: Vec<Complex64> = tree
        .leaves()
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let z = node.point.finite().unwrap_or(Complex64::new(1e3, 0.0));
            // tiny deterministic jitter breaks real symmetry
            let jitter = 1e-7 * (((i * 7919) % 13) as f64 - 6.0) * (1.0 + z.norm());
            z + Complex64::new(0.0, jitter)
        })
        .collect();
    if !map.is_polynomial() {
        guesses.push(Complex64::new(0.3, 1e4));
    }
    let eval = |z: Complex64| periodic_equation(map, z, n);
    let mut roots = aberth(eval, guesses, 200, 1e-15, parallel);
    let mut unconverged = 0;
    let mut points = Vec::new();
    for r in roots.iter_mut() {
        if !(r.re.is_finite() && r.im.is_finite()) || r.norm() > 1e12 {
            continue;
        }
        let mut last = f64::INFINITY;
        for _ in 0..3 {
            let (h, dh) = periodic_equation(map, *r, n);
            if dh.norm() == 0.0 || h.norm() == 0.0 {
                last = 0.0;
                break;
            }
            let step = h / dh;
            last = step.norm() / (1.0 + r.norm());
            if last < 1e-6 {
                *r -= step;
            }
        }
        if last > 1e-8 {
            unconverged += 1;
            continue;
        }
        points.push(SpherePoint::Finite(*r));
    }
    // infinity is a periodic point when f^n fixes it
    let mut inf = SpherePoint::Infinity;
    for _ in 0..n {
        inf = map.evaluate(inf)?;
    }
    if inf.is_infinity() {
        points.push(SpherePoint::Infinity);
    }
    let points = dedup_points(points, PERIODIC_MERGE_TOL);
    let threshold = (1.0 + REPELLING_MARGIN).ln();
    let mut data = PeriodicOrbitData {
        period: n,
        points: Vec::with_capacity(points.len()),
        repelling: 0,
        indifferent: 0,
        attracting: 0,
        unconverged,
    };
    for p in points {
        let m = map.log_multiplier(p, n)?;
        if m > threshold {
            data.repelling += 1;
        } else if m < -threshold {
            data.attracting += 1;
        } else {
            data.indifferent += 1;
        }
        data.points.push((p, m));
    }
    Ok(data)
}

/// `(1/n) log sum_{p in Fix(f^n), repelling} |(f^n)'(p)|^{-d}`.
pub fn periodic_pressure(map: &RationalMap, d: f64, n: usize) -> Result<f64> {
    Ok(periodic_points(map, n, false)?.pressure(d))
}

/// Tree pressure when critical orbits avoid J, periodic sums otherwise.
pub fn default_method(map: &RationalMap) -> Result<PressureMethod> {
    if map.critical_orbits_in_julia(200)? {
        Ok(PressureMethod::Periodic)
    } else {
        Ok(PressureMethod::Tree)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PressureOptions {
    pub precision: Precision,
    pub parallel: bool,
    /// Tree base point; defaults to [`default_base`].
    pub base: Option<SpherePoint>,
}

impl Default for PressureOptions {
    fn default() -> Self {
        PressureOptions { precision: Precision::Double, parallel: false, base: None }
    }
}

/// Pressure on a grid with Richardson-style errors from depths `n` and `n-1`.
pub fn pressure_curve(map: &RationalMap, grid: &[f64], method: PressureMethod, depth: usize) -> Result<PressureCurve> {
    pressure_curve_with(map, grid, method, depth, &PressureOptions::default())
}

pub fn pressure_curve_with(
    map: &RationalMap,
    grid: &[f64],
    method: PressureMethod,
    depth: usize,
    opts: &PressureOptions,
) -> Result<PressureCurve> {
    if grid.is_empty() {
        return PressureCurve::new(Vec::new(), Vec::new(), Vec::new(), method, depth);
    }
    if depth == 0 {
        return Err(Error::Precondition("pressure depth must be at least 1".into()));
    }
    let n = depth as f64;
    let (p, prev, dropped): (Vec<f64>, Vec<Option<f64>>, f64) = match method {
        PressureMethod::Tree => {
            check_tree_size(map, depth)?;
            let base = match opts.base {
                Some(b) => b,
                None => default_base(map)?,
            };
            let tree = PreimageTree::build_with(map, base, depth, opts.precision)?;
            let mut dropped: f64 = 0.0;
            let mut p = Vec::new();
            let mut prev = Vec::new();
            for &d in grid {
                let s = level_sum(&tree, d, depth);
                dropped = dropped.max(s.dropped_mass);
                p.push(s.log_sum / n);
                prev.push((depth > 1).then(|| level_sum(&tree, d, depth - 1).log_sum / (n - 1.0)));
            }
            (p, prev, dropped)
        }
        PressureMethod::Periodic => {
            let data = periodic_points(map, depth, opts.parallel)?;
            let before = if depth > 1 { Some(periodic_points(map, depth - 1, opts.parallel)?) } else { None };
            let p = grid.iter().map(|&d| data.pressure(d)).collect();
            let prev = grid.iter().map(|&d| before.as_ref().map(|b| b.pressure(d))).collect();
            let lost = data.unconverged as f64 / (data.points.len() + data.unconverged).max(1) as f64;
            (p, prev, lost)
        }
        PressureMethod::Gds => {
            return Err(Error::Precondition(
                "gds pressure curves are built from a system, not a map".into(),
            ))
        }
    };
    let err = p
        .iter()
        .zip(&prev)
        .map(|(pn, pm)| match pm {
            Some(pm) => (n - 1.0) * (pn - pm).abs(),
            None => f64::INFINITY,
        })
        .collect();
    let mut curve = PressureCurve::new(grid.to_vec(), p, err, method, depth)?;
    curve.dropped_mass = dropped;
    if dropped > 1e-6 {
        curve.degraded = true;
        curve.warnings.push(format!("dropped mass {dropped:.3e} from flagged nodes"));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(c: f64) -> RationalMap {
        RationalMap::quadratic(Complex64::new(c, 0.0))
    }

    #[test]
    fn z_squared_tree_pressure_closed_form() {
        let f = quad(0.0);
        let ln2 = 2f64.ln();
        for d in [0.0, 1.0, 2.0] {
            let p = tree_pressure(&f, d, SpherePoint::real(1.0), 6).unwrap();
            assert!((p - (1.0 - d) * ln2).abs() < 1e-12, "d={d}: {p}");
        }
    }

    #[test]
    fn z_squared_periodic_sums() {
        let f = quad(0.0);
        let p1 = periodic_pressure(&f, 1.0, 5).unwrap();
        assert!((p1 - (31f64 / 32.0).ln() / 5.0).abs() < 1e-12, "{p1}");
        let p0 = periodic_pressure(&f, 0.0, 5).unwrap();
        assert!((p0 - 31f64.ln() / 5.0).abs() < 1e-12);
        let data = periodic_points(&f, 5, false).unwrap();
        assert_eq!(data.repelling, 31);
        assert_eq!(data.attracting, 2); // 0 and infinity
    }

    #[test]
    fn chebyshev_counts_and_entropy() {
        let f = quad(-2.0);
        let data = periodic_points(&f, 8, false).unwrap();
        assert_eq!(data.repelling, 256);
        assert_eq!(data.unconverged, 0);
        assert!((data.pressure(0.0) - 2f64.ln()).abs() < 0.01);
    }

    #[test]
    fn chebyshev_periodic_points_match_cosine_formula() {
        // finite periodic points of period dividing n are 2cos(2 pi k/(2^n -+ 1))
        let f = quad(-2.0);
        let n = 6;
        let data = periodic_points(&f, n, true).unwrap();
        let mut oracle = Vec::new();
        for m in [(1u32 << n) - 1, (1u32 << n) + 1] {
            for k in 0..m {
                oracle.push(SpherePoint::real(2.0 * (std::f64::consts::TAU * k as f64 / m as f64).cos()));
            }
        }
        let oracle = dedup_points(oracle, 1e-9);
        assert_eq!(oracle.len(), 64);
        for (p, _) in data.points.iter().filter(|(p, _)| !p.is_infinity()) {
            assert!(oracle.iter().any(|q| q.close_to(p, 1e-9)), "{p}");
        }
    }

    #[test]
    fn chebyshev_pressure_at_one_vanishes() {
        let f = quad(-2.0);
        let curve = pressure_curve(&f, &[1.0], PressureMethod::Periodic, 12).unwrap();
        assert!(curve.p[0].abs() < 0.02, "{}", curve.p[0]);
    }

    #[test]
    fn z_squared_curve() {
        let f = quad(0.0);
        let grid = [-1.0, 0.0, 1.0, 2.0];
        let curve = pressure_curve(&f, &grid, PressureMethod::Tree, 6).unwrap();
        let ln2 = 2f64.ln();
        for (p, want) in curve.p.iter().zip([2.0 * ln2, ln2, 0.0, -ln2]) {
            assert!((p - want).abs() < 1e-12);
        }
        assert!(curve.convex && !curve.degraded);
        assert!(curve.err.iter().all(|e| *e < 1e-12));
    }

    #[test]
    fn empty_grid_gives_empty_curve() {
        let curve = pressure_curve(&quad(0.0), &[], PressureMethod::Tree, 6).unwrap();
        assert!(curve.is_empty());
    }

    #[test]
    fn default_method_and_base() {
        assert_eq!(default_method(&quad(0.0)).unwrap(), PressureMethod::Tree);
        assert_eq!(default_method(&quad(-6.0)).unwrap(), PressureMethod::Tree);
        assert_eq!(default_method(&quad(-2.0)).unwrap(), PressureMethod::Periodic);
        let b = default_base(&quad(-2.0)).unwrap();
        assert!(b.close_to(&SpherePoint::real(-1.0), 1e-12));
    }

    #[test]
    fn tree_and_periodic_agree_for_cantor_repeller() {
        let f = quad(-6.0);
        let grid: Vec<f64> = (-4..=6).map(|k| k as f64 * 0.5).collect();
        let tree = pressure_curve(&f, &grid, PressureMethod::Tree, 10).unwrap();
        let per = pressure_curve(&f, &grid, PressureMethod::Periodic, 10).unwrap();
        for i in 0..grid.len() {
            let gap = (tree.p[i] - per.p[i]).abs();
            assert!(gap <= 2.0 * (tree.err[i] + per.err[i]), "d={} gap {gap}", grid[i]);
        }
    }

    #[test]
    fn non_convex_samples_are_flagged() {
        let c = PressureCurve::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0], vec![0.0; 3], PressureMethod::Gds, 1)
            .unwrap();
        assert!(!c.convex && c.degraded);
    }

    #[test]
    fn rational_map_periodic_points_include_all_roots() {
        // (z^2+1)/(z^2-1): 2^3 + 1 = 9 solutions of f^3(z) = z on the sphere
        let f = RationalMap::new(
            crate::poly::Poly::from_real(&[1.0, 0.0, 1.0]),
            crate::poly::Poly::from_real(&[-1.0, 0.0, 1.0]),
        )
        .unwrap();
        let data = periodic_points(&f, 3, false).unwrap();
        for (p, _) in &data.points {
            let mut z = *p;
            for _ in 0..3 {
                z = f.evaluate(z).unwrap();
            }
            assert!(z.chordal_distance(p) < 1e-8);
        }
        assert!(data.points.len() + data.unconverged <= 9);
    }
}
