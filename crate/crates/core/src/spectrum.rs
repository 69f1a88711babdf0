//! Legendre-transform Lyapunov spectrum `F(alpha) = (1/alpha) inf_d (P(d) + d alpha)`.

use crate::error::{Error, Result};
use crate::map::ExceptionalReport;
use crate::pressure::{interpolate, PressureCurve};
use serde::{Deserialize, Serialize};

/// Slack allowed on `[alpha-, alpha+]` before `F` is set to `-inf`.
pub const ALPHA_TOL: f64 = 1e-9;
/// Bisection tolerance for the Bowen root.
pub const BOWEN_TOL: f64 = 1e-8;

/// Sampled spectrum `alpha -> F(alpha)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCurve {
    pub alpha: Vec<f64>,
    /// `-inf` outside `[alpha-, alpha+]`; serialized as `null`.
    #[serde(with = "ext_real")]
    pub f: Vec<f64>,
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    /// Zero of `P`, if the grid brackets one.
    pub d0: Option<f64>,
    /// Grid point where `F` is largest.
    pub argmax: Option<f64>,
    /// Per-alpha flag: the infimum over `d` sits at the edge of the grid.
    pub boundary: Vec<bool>,
    pub warnings: Vec<String>,
    pub exceptional: Option<ExceptionalReport>,
    /// Pressure samples the transform was taken from.
    pub source_d: Vec<f64>,
    pub source_p: Vec<f64>,
}

mod ext_real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opt: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        opt.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opt: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(opt.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

impl SpectrumCurve {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// `max F` over the grid, `-inf` if no point is finite.
    pub fn max_f(&self) -> f64 {
        self.f.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(alpha, F)` pairs with finite `F`.
    pub fn finite_points(&self) -> Vec<(f64, f64)> {
        self.alpha
            .iter()
            .zip(&self.f)
            .filter(|(_, f)| f.is_finite())
            .map(|(a, f)| (*a, *f))
            .collect()
    }

    /// Largest positive second difference of `alpha F(alpha)` over
    /// consecutive finite points (0 for a concave sample).
    pub fn concavity_defect(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.finite_points().into_iter().map(|(a, f)| (a, a * f)).collect();
        let mut worst: f64 = 0.0;
        for w in pts.windows(3) {
            let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
            worst = worst.max(s2 - s1);
        }
        worst
    }

    /// CSV with header `alpha,F`; only finite points are written.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,F\n");
        for (a, f) in self.finite_points() {
            out.push_str(&format!("{a},{f}\n"));
        }
        out
    }

    /// `alpha F(alpha)` by linear interpolation between finite samples.
    pub fn alpha_f_at(&self, alpha: f64) -> Option<f64> {
        let pts = self.finite_points();
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.0 * p.1).collect();
        interpolate(&xs, &ys, alpha)
    }

    /// `alpha F(alpha) = min_j (P_j + d_j alpha)` evaluated on the source
    /// samples at any alpha; `-inf` outside the slope range.
    pub fn envelope_at(&self, alpha: f64) -> f64 {
        if alpha < self.alpha_minus - ALPHA_TOL || alpha > self.alpha_plus + ALPHA_TOL {
            return f64::NEG_INFINITY;
        }
        self.source_d
            .iter()
            .zip(&self.source_p)
            .map(|(d, p)| p + d * alpha)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `g(alpha) = min_j (P_j + d_j alpha)` and the minimizing index.
fn lower_envelope(curve: &PressureCurve, alpha: f64) -> (f64, usize) {
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (j, (&d, &p)) in curve.d.iter().zip(&curve.p).enumerate() {
        let v = p + d * alpha;
        if v < best {
            best = v;
            arg = j;
        }
    }
    (best, arg)
}

/// Extreme slopes: `alpha- = -(last chord)`, `alpha+ = -(first chord)`.
pub fn alpha_range(curve: &PressureCurve) -> Result<(f64, f64)> {
    let s = curve.slopes();
    if s.is_empty() {
        return Err(Error::Precondition("at least two grid points are needed for slopes".into()));
    }
    Ok((-s[s.len() - 1], -s[0]))
}

/// Zero of the piecewise-linear interpolant of `P`, by bisection.
pub fn bowen_root(curve: &PressureCurve) -> Option<f64> {
    let i = (0..curve.len().saturating_sub(1)).find(|&i| curve.p[i] >= 0.0 && curve.p[i + 1] <= 0.0)?;
    if curve.p[i] == 0.0 {
        return Some(curve.d[i]);
    }
    let (mut lo, mut hi) = (curve.d[i], curve.d[i + 1]);
    let at = |x: f64| curve.value_at(x).unwrap();
    while hi - lo > BOWEN_TOL {
        let mid = 0.5 * (lo + hi);
        if at(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Discrete Legendre transform of a pressure curve.
///
/// The extreme slopes `alpha-` and `alpha+` are added to the grid so the
/// endpoints of the spectrum are always sampled.
pub fn legendre_spectrum(curve: &PressureCurve, alpha_grid: &[f64]) -> Result<SpectrumCurve> {
    if alpha_grid.is_empty() || curve.is_empty() {
        let (am, ap) = alpha_range(curve).unwrap_or((f64::NAN, f64::NAN));
        return Ok(SpectrumCurve {
            alpha: Vec::new(),
            f: Vec::new(),
            alpha_minus: am,
            alpha_plus: ap,
            d0: bowen_root(curve),
            argmax: None,
            boundary: Vec::new(),
            warnings: Vec::new(),
            exceptional: None,
            source_d: curve.d.clone(),
            source_p: curve.p.clone(),
        });
    }
    let (am, ap) = alpha_range(curve)?;
    let mut warnings = Vec::new();
    if !curve.convex {
        warnings.push("pressure curve is not convex; spectrum is unreliable".to_string());
    }
    let mut alpha: Vec<f64> = alpha_grid.to_vec();
    for extra in [am, ap] {
        if !alpha.iter().any(|a| (a - extra).abs() <= ALPHA_TOL) {
            alpha.push(extra);
        }
    }
    alpha.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let d0 = bowen_root(curve);
    if d0.is_none() {
        warnings.push("pressure does not change sign on the grid; d0 unavailable".to_string());
    }
    let last = curve.len() - 1;
    let mut f = Vec::with_capacity(alpha.len());
    let mut boundary = Vec::with_capacity(alpha.len());
    for &a in &alpha {
        if a < am - ALPHA_TOL || a > ap + ALPHA_TOL {
            f.push(f64::NEG_INFINITY);
            boundary.push(false);
            continue;
        }
        if a.abs() <= ALPHA_TOL {
            f.push(d0.unwrap_or(f64::NAN));
            boundary.push(false);
            continue;
        }
        let (g, arg) = lower_envelope(curve, a);
        // minimizer pinned to an edge of the grid with no interior tie
        let interior_tie = (1..last).any(|j| curve.p[j] + curve.d[j] * a <= g + 1e-12 * (1.0 + g.abs()));
        boundary.push((arg == 0 || arg == last) && !interior_tie);
        f.push(g / a);
    }
    let flagged = boundary.iter().filter(|b| **b).count();
    if flagged > 0 {
        warnings.push(format!("{flagged} alpha values have their infimum at the grid edge"));
    }
    let argmax = alpha
        .iter()
        .zip(&f)
        .filter(|(_, v)| v.is_finite())
        .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .map(|(a, _)| *a);
    Ok(SpectrumCurve {
        alpha,
        f,
        alpha_minus: am,
        alpha_plus: ap,
        d0,
        argmax,
        boundary,
        warnings,
        exceptional: None,
        source_d: curve.d.clone(),
        source_p: curve.p.clone(),
    })
}

impl SpectrumCurve {
    /// Attaches an exceptional-set report, warning when it is nonempty.
    pub fn with_exceptional(mut self, report: ExceptionalReport) -> Self {
        if report.is_exceptional {
            self.warnings.push(format!(
                "map is exceptional (|Sigma| = {}); the spectrum may be incomplete",
                report.sigma.len()
            ));
        }
        self.exceptional = Some(report);
        self
    }
}

/// `alpha(d) = -P'(d)` and `h(d) = P(d) + d alpha(d)` at one parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumStats {
    pub d: f64,
    pub alpha: f64,
    pub entropy: f64,
    /// Uncertainty on `alpha`: 0 for interior central differences, the gap
    /// between adjacent one-sided slopes at the boundary.
    pub alpha_err: f64,
    pub one_sided: bool,
}

/// Central-difference equilibrium data; one-sided at the ends of the grid.
pub fn equilibrium_stats(curve: &PressureCurve, d: f64) -> Result<EquilibriumStats> {
    let n = curve.len();
    if n < 2 {
        return Err(Error::Precondition("at least two grid points are needed".into()));
    }
    let p = curve
        .value_at(d)
        .ok_or_else(|| Error::Precondition(format!("d = {d} lies outside the grid")))?;
    let slopes = curve.slopes();
    let i = curve.d.partition_point(|&x| x < d);
    let on_grid = i < n && (curve.d[i] - d).abs() <= 1e-12 * (1.0 + d.abs());
    let (slope, err, one_sided) = if on_grid {
        if i == 0 || i == n - 1 {
            let k = if i == 0 { 0 } else { n - 2 };
            let neighbour = if slopes.len() > 1 {
                if i == 0 { slopes[1] } else { slopes[n - 3] }
            } else {
                slopes[k]
            };
            (slopes[k], (slopes[k] - neighbour).abs(), true)
        } else {
            let s = (curve.p[i + 1] - curve.p[i - 1]) / (curve.d[i + 1] - curve.d[i - 1]);
            (s, 0.0, false)
        }
    } else {
        (slopes[i - 1], 0.0, false)
    };
    let alpha = -slope;
    Ok(EquilibriumStats { d, alpha, entropy: p + d * alpha, alpha_err: err, one_sided })
}

/// Consistency between a pressure curve and its spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    /// `max |alpha F(alpha) - (P + d alpha)|` over interior `d`, with
    /// `alpha = alpha(d)` from central differences.
    pub residual: f64,
    /// `max |P**(d) - P(d)|` over `d` whose `alpha(d)` is inside the sampled range.
    pub recovery: f64,
    pub checked: usize,
    pub flagged: bool,
}

/// Duality residual and double-Legendre recovery error.
pub fn duality_check(curve: &PressureCurve, spectrum: &SpectrumCurve) -> DualityReport {
    let pts = spectrum.finite_points();
    let (lo, hi) = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => {
            return DualityReport { residual: f64::INFINITY, recovery: f64::INFINITY, checked: 0, flagged: true }
        }
    };
    let mut residual: f64 = 0.0;
    let mut recovery: f64 = 0.0;
    let mut checked = 0;
    for i in 1..curve.len().saturating_sub(1) {
        let Ok(st) = equilibrium_stats(curve, curve.d[i]) else { continue };
        let a = st.alpha;
        let slack = 1e-9 * (1.0 + a.abs());
        if a < lo - slack || a > hi + slack {
            residual = f64::INFINITY;
            continue;
        }
        let a = a.clamp(lo, hi);
        checked += 1;
        residual = residual.max((spectrum.envelope_at(a) - st.entropy).abs());
        let pss = pts
            .iter()
            .map(|(al, f)| al * f - curve.d[i] * al)
            .fold(f64::NEG_INFINITY, f64::max);
        recovery = recovery.max((pss - curve.p[i]).abs());
    }
    DualityReport { residual, recovery, checked, flagged: !(residual < 1e-3 && recovery < 1e-3) }
}

/// Evenly spaced grid from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pressure::PressureMethod;

    fn closed_form(f: impl Fn(f64) -> f64, grid: &[f64]) -> PressureCurve {
        let p = grid.iter().map(|&d| f(d)).collect();
        PressureCurve::new(grid.to_vec(), p, vec![0.0; grid.len()], PressureMethod::Gds, 1).unwrap()
    }

    #[test]
    fn z_squared_spectrum_is_a_single_point() {
        let ln2 = 2f64.ln();
        let curve = closed_form(|d| (1.0 - d) * ln2, &linspace(-2.0, 3.0, 11));
        let s = legendre_spectrum(&curve, &linspace(0.1, 2.0, 20)).unwrap();
        assert!((s.alpha_minus - ln2).abs() < 1e-12 && (s.alpha_plus - ln2).abs() < 1e-12);
        assert!((s.d0.unwrap() - 1.0).abs() < 1e-8);
        let finite = s.finite_points();
        assert_eq!(finite.len(), 1);
        assert!((finite[0].0 - ln2).abs() < 1e-12);
        assert!((finite[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(s.to_csv().lines().count(), 2);
    }

    #[test]
    fn two_branch_spectrum() {
        // P(d) = log(6^-d + 4^-d): alpha range [log 4, log 6], max F at the Bowen root
        let p = |d: f64| (6f64.powf(-d) + 4f64.powf(-d)).ln();
        let curve = closed_form(p, &linspace(-6.0, 8.0, 1401));
        let s = legendre_spectrum(&curve, &linspace(1.3, 1.85, 276)).unwrap();
        assert!((s.d0.unwrap() - 0.438694221823891).abs() < 1e-6);
        assert!((s.max_f() - s.d0.unwrap()).abs() < 1e-4);
        assert!(s.concavity_defect() < 1e-9);
        let eq = equilibrium_stats(&curve, 0.0).unwrap();
        assert!((eq.alpha - 1.589026915173973).abs() < 1e-4);
        let report = duality_check(&curve, &s);
        assert!(report.residual < 1e-6 && report.recovery < 1e-4, "{report:?}");
    }

    #[test]
    fn piecewise_linear_synthetic_curve() {
        // P(d) = |d| - d: slopes -2 and 0, so alpha in [0, 2] and alpha F = min(0, 2 - 2 ... )
        let curve = closed_form(|d| d.abs() - d, &linspace(-2.0, 2.0, 9));
        let s = legendre_spectrum(&curve, &linspace(0.25, 2.0, 8)).unwrap();
        assert_eq!((s.alpha_minus, s.alpha_plus), (0.0, 2.0));
        for (a, f) in s.finite_points() {
            // inf over d of |d| - d + d a is attained at d = 0 for a in [0, 2]
            assert!((a * f).abs() < 1e-12, "{a} {f}");
        }
    }

    #[test]
    fn mismatched_curves_are_flagged() {
        let ln2 = 2f64.ln();
        let grid = linspace(-1.0, 2.0, 31);
        let a = closed_form(|d| (6f64.powf(-d) + 4f64.powf(-d)).ln(), &grid);
        let b = closed_form(|d| (1.0 - d) * ln2, &grid);
        let s = legendre_spectrum(&b, &linspace(0.5, 1.0, 10)).unwrap();
        assert!(duality_check(&a, &s).flagged);
    }

    #[test]
    fn boundary_minimizers_are_flagged() {
        let p = |d: f64| (6f64.powf(-d) + 4f64.powf(-d)).ln();
        let curve = closed_form(p, &linspace(0.0, 1.0, 11));
        // alpha(0) ~ 1.589, alpha(1) ~ 1.522; 1.6 needs d < 0
        let s = legendre_spectrum(&curve, &[1.55, 1.6]).unwrap();
        let i = s.alpha.iter().position(|a| (*a - 1.55).abs() < 1e-12).unwrap();
        assert!(!s.boundary[i]);
    }

    #[test]
    fn equilibrium_stats_for_linear_pressure() {
        let ln2 = 2f64.ln();
        let curve = closed_form(|d| (1.0 - d) * ln2, &[-1.0, 0.0, 1.0, 2.0]);
        for d in [0.0, 1.0] {
            let e = equilibrium_stats(&curve, d).unwrap();
            assert!((e.alpha - ln2).abs() < 1e-12);
            assert!((e.entropy - ln2).abs() < 1e-12);
        }
        assert!(equilibrium_stats(&curve, 2.0).unwrap().one_sided);
        assert!(equilibrium_stats(&curve, 5.0).is_err());
    }

    #[test]
    fn serde_round_trip_keeps_negative_infinity() {
        let ln2 = 2f64.ln();
        let curve = closed_form(|d| (1.0 - d) * ln2, &[-1.0, 0.0, 1.0]);
        let s = legendre_spectrum(&curve, &[0.5, 1.0]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: SpectrumCurve = serde_json::from_str(&json).unwrap();
        assert_eq!(back.f.len(), s.f.len());
        assert!(back.f.iter().zip(&s.f).all(|(a, b)| a == b));
    }
}
