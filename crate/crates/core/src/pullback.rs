//! Pullbacks of small disks along inverse branches.
//!
//! A disk is represented by its center plus 32 boundary samples, all stored
//! as offsets from a base point so that very deep pullbacks (radii far below
//! double-precision resolution of the base point) stay accurate. One step
//! back solves `f(x + v) - f(x) = u` by Newton continuation in `v`, starting
//! at `v = 0`, which selects the branch through `x`.

use crate::error::{Error, Result};
use crate::map::{LocalExpansion, RationalMap, POINT_TOL};
use crate::orbit::ordered_preimages;
use crate::sphere::SpherePoint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const BOUNDARY_SAMPLES: usize = 32;
/// Inflation of the sample hull when testing for critical points.
pub const HULL_INFLATION: f64 = 1.1;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Center offset 0 followed by `BOUNDARY_SAMPLES` points on the circle.
pub fn disk_offsets(r: f64) -> Vec<Complex64> {
    let mut out = vec![ZERO];
    out.extend((0..BOUNDARY_SAMPLES).map(|k| {
        Complex64::from_polar(r, std::f64::consts::TAU * k as f64 / BOUNDARY_SAMPLES as f64)
    }));
    out
}

/// Solves `f(x + v) - f(x) = u` for small `v` on the branch through `x`.
pub fn pull_offset(local: &LocalExpansion, u: Complex64) -> Option<Complex64> {
    if u == ZERO {
        return Some(ZERO);
    }
    let mut v = ZERO;
    let mut substeps = 4;
    'outer: while substeps <= 256 {
        v = ZERO;
        for s in 1..=substeps {
            let target = u * (s as f64 / substeps as f64);
            let mut converged = false;
            for _ in 0..40 {
                let dv = local.derivative(v);
                if dv == ZERO || !dv.re.is_finite() {
                    substeps *= 4;
                    continue 'outer;
                }
                let step = (local.increment(v) - target) / dv;
                v -= step;
                if step.norm() <= 1e-15 * v.norm() || step.norm() == 0.0 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                substeps *= 4;
                continue 'outer;
            }
        }
        break;
    }
    if substeps > 256 || !(v.re.is_finite() && v.im.is_finite()) {
        return None;
    }
    // the continuation must land on a solution
    let resid = (local.increment(v) - u).norm();
    (resid <= 1e-9 * u.norm()).then_some(v)
}

/// Disk containing sample points: centroid and inflated maximal distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hull {
    /// Offset of the centroid from the base point.
    pub center: Complex64,
    pub radius: f64,
}

impl Hull {
    pub fn of(offsets: &[Complex64]) -> Hull {
        let c = offsets.iter().sum::<Complex64>() / offsets.len() as f64;
        let r = offsets.iter().map(|o| (o - c).norm()).fold(0.0, f64::max);
        Hull { center: c, radius: r * HULL_INFLATION }
    }

    /// Whether `p` (absolute) lies in the hull of a region based at `base`.
    pub fn contains(&self, base: Complex64, p: Complex64) -> bool {
        ((p - base) - self.center).norm() <= self.radius
    }

    /// Diameter of the uninflated samples' disk.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius / HULL_INFLATION
    }
}

/// Finite critical points and critical values, cached for repeated tests.
#[derive(Clone, Debug)]
pub struct CriticalData {
    pub points: Vec<Complex64>,
    pub values: Vec<Complex64>,
}

impl CriticalData {
    pub fn of(map: &RationalMap) -> Result<Self> {
        let points: Vec<Complex64> = map.distinct_critical_points()?.iter().filter_map(|c| c.finite()).collect();
        let values = map.critical_values()?.iter().filter_map(|c| c.finite()).collect();
        Ok(CriticalData { points, values })
    }
}

/// Result of pulling a disk back along a chain of points.
#[derive(Clone, Debug, PartialEq)]
pub struct Pullback {
    /// Offsets of the pulled samples from `chain[0]`.
    pub offsets: Vec<Complex64>,
    /// `log |(f^n)'|` at each pulled sample.
    pub log_derivs: Vec<f64>,
}

impl Pullback {
    /// `sup |g'| / inf |g'|` over the samples, `g` the inverse branch.
    pub fn distortion(&self) -> f64 {
        let lo = self.log_derivs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.log_derivs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo).exp()
    }

    pub fn hull(&self) -> Hull {
        Hull::of(&self.offsets)
    }

    /// `log` of the sample diameter.
    pub fn log_diameter(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (i, a) in self.offsets.iter().enumerate() {
            for b in &self.offsets[i + 1..] {
                m = m.max((a - b).norm());
            }
        }
        m.ln()
    }
}

/// Pulls `offsets` (around `chain[n]`) back to `chain[0]`, where
/// `f(chain[k]) = chain[k+1]`. Returns the level at which a critical point
/// entered the region (or the continuation broke) on failure.
pub fn pull_back_chain(
    map: &RationalMap,
    crit: &CriticalData,
    chain: &[Complex64],
    offsets: &[Complex64],
) -> std::result::Result<Pullback, usize> {
    let n = chain.len() - 1;
    let mut cur = offsets.to_vec();
    let mut logd = vec![0.0; cur.len()];
    for k in (1..=n).rev() {
        let hull = Hull::of(&cur);
        if crit.values.iter().any(|&v| hull.contains(chain[k], v)) {
            return Err(k - 1);
        }
        let local = map.local(chain[k - 1]);
        for (u, l) in cur.iter_mut().zip(logd.iter_mut()) {
            match pull_offset(&local, *u) {
                Some(v) => {
                    *l += local.derivative(v).norm().ln();
                    *u = v;
                }
                None => return Err(k - 1),
            }
        }
        let hull = Hull::of(&cur);
        if crit.points.iter().any(|&c| hull.contains(chain[k - 1], c)) {
            return Err(k - 1);
        }
    }
    Ok(Pullback { offsets: cur, log_derivs: logd })
}

/// Distortion of one inverse branch on a disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub branch: usize,
    /// Domain disk of the branch.
    pub center: SpherePoint,
    pub radius: f64,
    pub distortion: f64,
}

/// Finite forward orbit `x, f(x), ..., f^n(x)` as planar points.
pub fn forward_chain(map: &RationalMap, x: Complex64, n: usize) -> Result<Vec<Complex64>> {
    let mut chain = vec![x];
    let mut z = x;
    for k in 0..n {
        z = map.eval(z);
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Escape { index: k + 1 });
        }
        chain.push(z);
    }
    Ok(chain)
}

/// Times `n <= n_max` at which `B(f^n x, r)` pulls back along the orbit
/// without meeting a critical point and with sampled distortion at most
/// `k_cap`.
pub fn conical_probe(
    map: &RationalMap,
    x: SpherePoint,
    r: f64,
    n_max: usize,
    k_cap: f64,
) -> Result<Vec<(usize, DistortionReport)>> {
    if !(r > 0.0) || !(k_cap > 1.0) {
        return Err(Error::Precondition("conical probe needs r > 0 and K_cap > 1".into()));
    }
    let x = x
        .finite()
        .ok_or_else(|| Error::Precondition("conical probe needs a finite base point".into()))?;
    let crit = CriticalData::of(map)?;
    let chain = forward_chain(map, x, n_max)?;
    let disk = disk_offsets(r);
    let mut out = Vec::new();
    for n in 1..=n_max {
        if let Ok(pb) = pull_back_chain(map, &crit, &chain[..=n], &disk) {
            let distortion = pb.distortion();
            if distortion <= k_cap {
                out.push((
                    n,
                    DistortionReport {
                        branch: n,
                        center: SpherePoint::Finite(chain[n]),
                        radius: r,
                        distortion,
                    },
                ));
            }
        }
    }
    Ok(out)
}

/// Distinct `(y_k, k)` pairs reached by the critical-encounter construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PullbackCensus {
    pub base: SpherePoint,
    pub depth: usize,
    pub radius: f64,
    pub pairs: Vec<(SpherePoint, usize)>,
    pub count: usize,
    /// Branches whose last step could not be continued.
    pub broken_branches: usize,
}

impl PullbackCensus {
    /// `log N / n`.
    pub fn growth_exponent(&self) -> f64 {
        if self.depth == 0 {
            0.0
        } else {
            (self.count as f64).ln() / self.depth as f64
        }
    }
}

/// Checks `y` against `f^i(Crit)` for `1 <= i <= n`.
pub fn check_off_critical_orbits(map: &RationalMap, y: SpherePoint, n: usize) -> Result<()> {
    for c in map.distinct_critical_points()? {
        if map.is_polynomial() && c.is_infinity() {
            continue;
        }
        let mut z = c;
        for i in 1..=n {
            z = map.evaluate(z)?;
            let distance = z.chordal_distance(&y);
            if distance < POINT_TOL {
                return Err(Error::CriticalOrbit { index: i, distance });
            }
        }
    }
    Ok(())
}

struct CensusState<'a> {
    map: &'a RationalMap,
    crit: CriticalData,
    radius: f64,
    depth: usize,
    pairs: Vec<(SpherePoint, usize)>,
    broken: usize,
}

impl CensusState<'_> {
    fn record(&mut self, p: Complex64, k: usize) {
        let p = SpherePoint::Finite(p);
        if !self.pairs.iter().any(|(q, j)| *j == k && q.close_to(&p, POINT_TOL)) {
            self.pairs.push((p, k));
        }
    }

    /// `node` is `y_t`; `anchor` the level of the last reset, `region` the
    /// samples of the current pulled-back ball as offsets from `node`.
    fn visit(&mut self, node: Complex64, t: usize, anchor: usize, anchor_point: Complex64, region: Vec<Complex64>) -> Result<()> {
        if t == self.depth {
            self.record(anchor_point, anchor);
            return Ok(());
        }
        // a critical value inside the region puts a critical point in every
        // component of its preimage through the children
        let hull = Hull::of(&region);
        let ramified = self.crit.values.iter().any(|&v| hull.contains(node, v));
        for child in ordered_preimages(self.map, SpherePoint::Finite(node))? {
            let Some(child) = child.finite() else { continue };
            let local = self.map.local(child);
            let pulled: Option<Vec<Complex64>> = if ramified {
                Some(Vec::new())
            } else {
                region.iter().map(|&u| pull_offset(&local, u)).collect()
            };
            let (next_anchor, next_point, next_region) = match pulled {
                Some(p) if p.is_empty() => (t + 1, child, disk_offsets(self.radius)),
                Some(p) => {
                    let hull = Hull::of(&p);
                    if self.crit.points.iter().any(|&c| hull.contains(child, c)) {
                        (t + 1, child, disk_offsets(self.radius))
                    } else {
                        (anchor, anchor_point, p)
                    }
                }
                None => {
                    // continuation broke: the region swallowed a critical point
                    self.broken += 1;
                    (t + 1, child, disk_offsets(self.radius))
                }
            };
            self.visit(child, t + 1, next_anchor, next_point, next_region)?;
        }
        Ok(())
    }
}

/// Pullback census `N(y, n, R)` by depth-first enumeration of all backward
/// branches of length `n`.
///
/// Along a branch `y = y_0, y_1, ...`, the ball `B(y, R)` is pulled back
/// until the pulled region at some level `k_1` contains a critical point;
/// the construction then restarts from `B(y_{k_1}, R)`, and so on. Each
/// branch contributes `(y_k, k)` for its last encounter `k`, or `(y, 0)` if
/// it never meets a critical point.
pub fn pullback_census(map: &RationalMap, y: SpherePoint, n: usize, radius: f64) -> Result<PullbackCensus> {
    if !(radius > 0.0) {
        return Err(Error::Precondition("census radius must be positive".into()));
    }
    let yc = y
        .finite()
        .ok_or_else(|| Error::Precondition("census needs a finite base point".into()))?;
    check_off_critical_orbits(map, y, n)?;
    let mut state = CensusState {
        map,
        crit: CriticalData::of(map)?,
        radius,
        depth: n,
        pairs: Vec::new(),
        broken: 0,
    };
    state.visit(yc, 0, 0, yc, disk_offsets(radius))?;
    let count = state.pairs.len();
    Ok(PullbackCensus { base: y, depth: n, radius, pairs: state.pairs, count, broken_branches: state.broken })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(c: f64) -> RationalMap {
        RationalMap::quadratic(Complex64::new(c, 0.0))
    }

    #[test]
    fn pull_offset_inverts_the_increment() {
        let f = quad(-2.0);
        let local = f.local(Complex64::new(1.3, 0.2));
        for u in [Complex64::new(0.3, -0.1), Complex64::new(1e-40, 3e-41)] {
            let v = pull_offset(&local, u).unwrap();
            assert!((local.increment(v) - u).norm() <= 1e-12 * u.norm());
        }
    }

    #[test]
    fn circle_orbit_is_conical_at_every_time() {
        let f = quad(0.0);
        let x = SpherePoint::Finite(Complex64::from_polar(1.0, 0.7));
        let found = conical_probe(&f, x, 0.5, 20, 10.0).unwrap();
        assert_eq!(found.len(), 20);
        // per-step distortion of z -> sqrt(z) on B(w, r), |w| = 1, is at most
        // sqrt((1 + r)/(1 - r)); the composite contracts toward 1 geometrically
        let bound = ((1.5f64 / 0.5).sqrt()).powi(2);
        for (_, rep) in &found {
            assert!(rep.distortion >= 1.0 && rep.distortion <= bound);
        }
    }

    #[test]
    fn critical_orbit_is_never_conical() {
        let f = quad(-2.0);
        for r in [0.05, 0.3, 1.0] {
            assert!(conical_probe(&f, SpherePoint::real(0.0), r, 10, 100.0).unwrap().is_empty());
        }
        assert!(conical_probe(&f, SpherePoint::real(0.7), 0.1, 0, 10.0).unwrap().is_empty());
    }

    #[test]
    fn census_without_encounters() {
        let c = pullback_census(&quad(0.0), SpherePoint::real(1.0), 4, 0.5).unwrap();
        assert_eq!(c.count, 1);
        assert_eq!(c.pairs[0], (SpherePoint::real(1.0), 0));
        let c = pullback_census(&quad(-2.0), SpherePoint::real(1.9), 0, 0.3).unwrap();
        assert_eq!(c.pairs, vec![(SpherePoint::real(1.9), 0)]);
    }

    #[test]
    fn census_rejects_critical_orbit_points() {
        match pullback_census(&quad(-2.0), SpherePoint::real(2.0), 3, 0.3) {
            Err(Error::CriticalOrbit { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deep_pullback_keeps_scale() {
        // B(1, 0.3) pulled back 200 times along the fixed point 1 of z^2
        let f = quad(0.0);
        let crit = CriticalData::of(&f).unwrap();
        let chain = vec![Complex64::new(1.0, 0.0); 201];
        let pb = pull_back_chain(&f, &crit, &chain, &disk_offsets(0.3)).unwrap();
        let expect = (0.6f64).ln() - 200.0 * 2f64.ln();
        assert!((pb.log_diameter() - expect).abs() < 0.2, "{}", pb.log_diameter());
        assert!(pb.distortion() < 2.0);
    }
}
