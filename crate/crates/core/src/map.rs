//! Rational maps of the Riemann sphere.
//!
//! A map is stored as a numerator/denominator pair of complex polynomials in
//! ascending degree order. Evaluation switches to the `w = 1/z` chart outside
//! the unit disk; polynomial maps are evaluated directly by Horner's rule at
//! finite points so fixed points such as `2` for `z^2 - 2` come out exact.

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::sphere::SpherePoint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Tolerance used when comparing sphere points as set elements.
pub const POINT_TOL: f64 = 1e-8;

/// Metric used for derivative moduli.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Euclidean at finite points with finite images, spherical otherwise.
    #[default]
    Auto,
    Euclidean,
    Spherical,
}

/// JSON map specification: coefficient pairs `[re, im]` in ascending order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub num: Vec<[f64; 2]>,
    pub den: Vec<[f64; 2]>,
}

#[derive(Clone, Debug)]
pub struct RationalMap {
    num: Poly,
    den: Poly,
    degree: usize,
    dnum: Poly,
    wronskian: Poly,
    polynomial: bool,
}

impl PartialEq for RationalMap {
    fn eq(&self, other: &Self) -> bool {
        self.num == other.num && self.den == other.den
    }
}

impl RationalMap {
    pub fn new(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::InvalidMap("denominator is identically zero".into()));
        }
        if num.is_zero() {
            return Err(Error::InvalidMap("numerator is identically zero".into()));
        }
        let degree = num.degree().max(den.degree());
        if degree < 2 {
            return Err(Error::InvalidMap(format!("degree {degree} < 2")));
        }
        let res = normalized_resultant(&num, &den);
        if !(res > 1e-12) {
            return Err(Error::InvalidMap(format!(
                "numerator and denominator share a root (|resultant| = {res:.3e})"
            )));
        }
        let dnum = num.derivative();
        let dden = den.derivative();
        let wronskian = dnum.mul(&den).sub(&num.mul(&dden));
        let polynomial = den.degree() == 0;
        Ok(RationalMap { num, den, degree, dnum, wronskian, polynomial })
    }

    /// Polynomial map from real coefficients in ascending order.
    pub fn polynomial(coeffs: &[f64]) -> Result<Self> {
        RationalMap::new(Poly::from_real(coeffs), Poly::from_real(&[1.0]))
    }

    /// The quadratic family `z^2 + c`.
    pub fn quadratic(c: Complex64) -> Self {
        RationalMap::new(
            Poly::new(vec![c, ZERO, Complex64::new(1.0, 0.0)]),
            Poly::from_real(&[1.0]),
        )
        .expect("z^2 + c is a valid map")
    }

    pub fn from_spec(spec: &MapSpec) -> Result<Self> {
        let conv = |v: &[[f64; 2]]| Poly::new(v.iter().map(|c| Complex64::new(c[0], c[1])).collect());
        RationalMap::new(conv(&spec.num), conv(&spec.den))
    }

    pub fn to_spec(&self) -> MapSpec {
        let conv = |p: &Poly| p.coeffs().iter().map(|c| [c.re, c.im]).collect();
        MapSpec { num: conv(&self.num), den: conv(&self.den) }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MapSpec = serde_json::from_str(text)?;
        RationalMap::from_spec(&spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        RationalMap::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_polynomial(&self) -> bool {
        self.polynomial
    }

    pub fn numerator(&self) -> &Poly {
        &self.num
    }

    pub fn denominator(&self) -> &Poly {
        &self.den
    }

    /// `P'Q - PQ'`; its roots are the finite critical points.
    pub fn wronskian(&self) -> &Poly {
        &self.wronskian
    }

    pub fn evaluate(&self, z: SpherePoint) -> Result<SpherePoint> {
        match z {
            SpherePoint::Finite(z) if self.polynomial => {
                Ok(SpherePoint::from_complex(self.num.eval(z) / self.den.coeff(0)))
            }
            SpherePoint::Infinity if self.polynomial => Ok(SpherePoint::Infinity),
            _ => {
                let (p, q) = self.homogeneous(z);
                let scale = p.norm().max(q.norm());
                if scale == 0.0 || !scale.is_finite() {
                    return Err(Error::InvalidMap(format!("indeterminate value at {z}")));
                }
                if q.norm() <= 1e-300 * scale {
                    Ok(SpherePoint::Infinity)
                } else {
                    Ok(SpherePoint::from_complex(p / q))
                }
            }
        }
    }

    /// Fast planar evaluation; returns a non-finite value at poles.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        if self.polynomial {
            self.num.eval(z) / self.den.coeff(0)
        } else {
            self.num.eval(z) / self.den.eval(z)
        }
    }

    /// Planar derivative `f'(z)`.
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        if self.polynomial {
            self.dnum.eval(z) / self.den.coeff(0)
        } else {
            let q = self.den.eval(z);
            self.wronskian.eval(z) / (q * q)
        }
    }

    /// `log |f'(z)|` in the Euclidean metric at a finite point.
    pub fn log_deriv_planar(&self, z: Complex64) -> f64 {
        if self.polynomial {
            (self.dnum.eval(z) / self.den.coeff(0)).norm().ln()
        } else {
            self.wronskian.eval(z).norm().ln() - 2.0 * self.den.eval(z).norm().ln()
        }
    }

    /// Numerator and denominator values in the chart of `z`, both scaled by
    /// the same factor.
    fn homogeneous(&self, z: SpherePoint) -> (Complex64, Complex64) {
        match z {
            SpherePoint::Finite(z) if z.norm() <= 1.0 => (self.num.eval(z), self.den.eval(z)),
            SpherePoint::Finite(z) => {
                let w = z.inv();
                (self.num.reversed(self.degree).eval(w), self.den.reversed(self.degree).eval(w))
            }
            SpherePoint::Infinity => (self.num.coeff(self.degree), self.den.coeff(self.degree)),
        }
    }

    /// `log` of the spherical derivative `|f'(z)| (1+|z|^2) / (1+|f(z)|^2)`.
    pub fn log_deriv_spherical(&self, z: SpherePoint) -> f64 {
        match z {
            SpherePoint::Finite(z) if z.norm() <= 1.0 => {
                let p = self.num.eval(z);
                let q = self.den.eval(z);
                let w = self.wronskian.eval(z);
                w.norm().ln() + (1.0 + z.norm_sqr()).ln() - (p.norm_sqr() + q.norm_sqr()).ln()
            }
            _ => {
                // chart w = 1/z: g(w) = P~(w)/Q~(w)
                let w = match z {
                    SpherePoint::Finite(z) => z.inv(),
                    SpherePoint::Infinity => ZERO,
                };
                let pr = self.num.reversed(self.degree);
                let qr = self.den.reversed(self.degree);
                let (p, dp) = pr.eval_with_derivative(w);
                let (q, dq) = qr.eval_with_derivative(w);
                let wr = dp * q - p * dq;
                wr.norm().ln() + (1.0 + w.norm_sqr()).ln() - (p.norm_sqr() + q.norm_sqr()).ln()
            }
        }
    }

    /// `log |f'(z)|`; `-inf` exactly at critical points.
    pub fn log_deriv_modulus(&self, z: SpherePoint) -> f64 {
        self.log_deriv_with(z, Metric::Auto)
    }

    pub fn log_deriv_with(&self, z: SpherePoint, metric: Metric) -> f64 {
        match (metric, z) {
            (Metric::Spherical, _) => self.log_deriv_spherical(z),
            (_, SpherePoint::Finite(w)) if self.polynomial => self.log_deriv_planar(w),
            (Metric::Euclidean, SpherePoint::Finite(w)) => self.log_deriv_planar(w),
            (Metric::Auto, SpherePoint::Finite(w)) if self.den.eval(w).norm() > 1e-12 * self.den.scale() => {
                self.log_deriv_planar(w)
            }
            _ => self.log_deriv_spherical(z),
        }
    }

    /// Critical points with multiplicity; there are always `2d - 2` of them.
    pub fn critical_points(&self) -> Result<Vec<SpherePoint>> {
        let (w, _) = self.wronskian.trimmed(1e-14);
        let mut out: Vec<SpherePoint> = if w.degree() == 0 {
            Vec::new()
        } else {
            w.roots()?.into_iter().map(SpherePoint::Finite).collect()
        };
        let at_infinity = (2 * self.degree - 2).saturating_sub(out.len());
        out.extend(std::iter::repeat(SpherePoint::Infinity).take(at_infinity));
        Ok(out)
    }

    /// Critical points without repetition.
    pub fn distinct_critical_points(&self) -> Result<Vec<SpherePoint>> {
        Ok(dedup_points(self.critical_points()?, 1e-6))
    }

    pub fn critical_values(&self) -> Result<Vec<SpherePoint>> {
        self.distinct_critical_points()?
            .into_iter()
            .map(|c| self.evaluate(c))
            .collect()
    }

    /// All solutions of `f(w) = z`, with multiplicity (`degree` of them).
    pub fn preimages(&self, z: SpherePoint) -> Result<Vec<SpherePoint>> {
        let target = match z {
            SpherePoint::Finite(z) if z.norm() <= 1.0 => self.num.sub(&self.den.scaled(z)),
            SpherePoint::Finite(z) => self.num.scaled(z.inv()).sub(&self.den),
            SpherePoint::Infinity => self.den.clone(),
        };
        let (trimmed, _) = target.trimmed(1e-14);
        let mut out: Vec<SpherePoint> = if trimmed.degree() == 0 {
            Vec::new()
        } else {
            trimmed.roots()?.into_iter().map(SpherePoint::Finite).collect()
        };
        let missing = self.degree.saturating_sub(out.len());
        out.extend(std::iter::repeat(SpherePoint::Infinity).take(missing));
        Ok(out)
    }

    /// Fixed points with multiplicity (`degree + 1` of them).
    pub fn fixed_points(&self) -> Result<Vec<SpherePoint>> {
        let z = Poly::from_real(&[0.0, 1.0]);
        let g = self.num.sub(&self.den.mul(&z));
        let (g, _) = g.trimmed(1e-14);
        let mut out: Vec<SpherePoint> = g.roots()?.into_iter().map(SpherePoint::Finite).collect();
        let missing = (self.degree + 1).saturating_sub(out.len());
        out.extend(std::iter::repeat(SpherePoint::Infinity).take(missing));
        Ok(out)
    }

    /// `log |(f^n)'(p)|` for a periodic point of period dividing `n`.
    ///
    /// Uses spherical derivatives, which telescope to the chart-independent
    /// multiplier along a cycle.
    pub fn log_multiplier(&self, p: SpherePoint, n: usize) -> Result<f64> {
        let mut z = p;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += self.log_deriv_spherical(z);
            z = self.evaluate(z)?;
        }
        Ok(sum)
    }

    /// Local expansion of `f` around a finite point, for accurate increments
    /// `f(x + u) - f(x)` at tiny offsets.
    pub fn local(&self, x: Complex64) -> LocalExpansion {
        LocalExpansion {
            x,
            p: self.num.taylor_at(x),
            q: self.den.taylor_at(x),
        }
    }

    /// Exhaustive search for the largest exceptional set among small subsets
    /// of a candidate pool.
    pub fn detect_exceptional(&self) -> Result<ExceptionalReport> {
        self.detect_exceptional_with(4, 16)
    }

    pub fn detect_exceptional_with(&self, depth: usize, pool_bound: usize) -> Result<ExceptionalReport> {
        let crit = self.distinct_critical_points()?;
        let mut pool: Vec<SpherePoint> = Vec::new();
        for &c in &crit {
            let mut z = c;
            pool.push(z);
            for _ in 0..depth {
                z = self.evaluate(z)?;
                pool.push(z);
            }
        }
        pool.extend(self.fixed_points()?);
        let mut pool = dedup_points(pool, POINT_TOL);
        let truncated = pool.len() > pool_bound;
        pool.truncate(pool_bound);

        let mut found: Vec<Vec<SpherePoint>> = Vec::new();
        for mask in 1u64..(1u64 << pool.len()) {
            if mask.count_ones() > 4 {
                continue;
            }
            let sigma: Vec<SpherePoint> = (0..pool.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| pool[i])
                .collect();
            if self.satisfies_exceptional_equality(&sigma, &crit)? {
                found.push(sigma);
            }
        }
        let mut union: Vec<SpherePoint> = Vec::new();
        for s in &found {
            union.extend(s.iter().copied());
        }
        let union = dedup_points(union, POINT_TOL);
        let union_verified = union.is_empty() || self.satisfies_exceptional_equality(&union, &crit)?;
        let sigma = if union_verified {
            union
        } else {
            // fall back to the largest individual set
            found.iter().max_by_key(|s| s.len()).cloned().unwrap_or_default()
        };
        Ok(ExceptionalReport {
            is_exceptional: !sigma.is_empty(),
            sigma,
            search_depth: depth,
            pool_truncated: truncated,
            union_verified,
        })
    }

    /// Checks `f^{-1}(sigma) \ Crit = sigma` as sets.
    pub fn satisfies_exceptional_equality(
        &self,
        sigma: &[SpherePoint],
        crit: &[SpherePoint],
    ) -> Result<bool> {
        let mut pre = Vec::new();
        for &s in sigma {
            pre.extend(self.preimages(s)?);
        }
        let pre: Vec<SpherePoint> = dedup_points(pre, 1e-6)
            .into_iter()
            .filter(|p| !crit.iter().any(|c| c.close_to(p, 1e-6)))
            .collect();
        Ok(same_set(&pre, sigma, 1e-6))
    }

    /// Whether the critical set meets the Julia set, judged by whether each
    /// critical orbit escapes to an attracting cycle within `steps` iterates.
    pub fn critical_orbits_in_julia(&self, steps: usize) -> Result<bool> {
        for c in self.distinct_critical_points()? {
            if self.polynomial && c.is_infinity() {
                continue;
            }
            if !self.orbit_is_attracted(c, steps)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn orbit_is_attracted(&self, start: SpherePoint, steps: usize) -> Result<bool> {
        let mut z = start;
        for _ in 0..steps {
            if self.polynomial {
                if let SpherePoint::Finite(w) = z {
                    if w.norm() > self.escape_radius() {
                        return Ok(true);
                    }
                } else {
                    return Ok(true);
                }
            }
            z = self.evaluate(z)?;
        }
        // look for an attracting cycle of small period at the end of the orbit
        let mut w = z;
        for period in 1..=12 {
            w = self.evaluate(w)?;
            if w.chordal_distance(&z) < 1e-9 {
                return Ok(self.log_multiplier(z, period)? < -1e-6);
            }
        }
        Ok(false)
    }

    /// Radius beyond which polynomial orbits escape monotonically to infinity.
    pub fn escape_radius(&self) -> f64 {
        if !self.polynomial {
            return f64::INFINITY;
        }
        let lead = self.num.leading().norm() / self.den.coeff(0).norm();
        let lower: f64 = (0..self.degree)
            .map(|k| self.num.coeff(k).norm() / self.den.coeff(0).norm())
            .sum();
        // |f(z)| >= lead |z|^d - lower |z|^{d-1} >= 2|z| once |z| is past this
        (lower / lead + (2.0 / lead).powf(1.0 / (self.degree - 1) as f64)).max(2.0) * 2.0
    }
}

/// Taylor data of numerator and denominator at a base point.
#[derive(Clone, Debug)]
pub struct LocalExpansion {
    x: Complex64,
    p: Poly,
    q: Poly,
}

impl LocalExpansion {
    pub fn base(&self) -> Complex64 {
        self.x
    }

    /// `f(x + u) - f(x)` without cancellation.
    pub fn increment(&self, u: Complex64) -> Complex64 {
        let p0 = self.p.coeff(0);
        let q0 = self.q.coeff(0);
        let dp = self.tail(&self.p, u);
        let dq = self.tail(&self.q, u);
        (dp * q0 - p0 * dq) / (q0 * (q0 + dq))
    }

    /// `f'(x + u)`.
    pub fn derivative(&self, u: Complex64) -> Complex64 {
        let (p, dp) = self.p.eval_with_derivative(u);
        let (q, dq) = self.q.eval_with_derivative(u);
        (dp * q - p * dq) / (q * q)
    }

    fn tail(&self, p: &Poly, u: Complex64) -> Complex64 {
        // sum_{k>=1} a_k u^k
        p.coeffs().iter().skip(1).rev().fold(ZERO, |acc, &c| (acc + c) * u)
    }
}

/// Outcome of the exceptional-set search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalReport {
    pub is_exceptional: bool,
    pub sigma: Vec<SpherePoint>,
    pub search_depth: usize,
    pub pool_truncated: bool,
    pub union_verified: bool,
}

impl ExceptionalReport {
    /// Heuristic `Sigma ∩ J != ∅`: some point of Sigma lands on a
    /// non-attracting cycle.
    pub fn meets_julia(&self, map: &RationalMap) -> Result<bool> {
        for &s in &self.sigma {
            let mut orbit = vec![s];
            let mut z = s;
            for _ in 0..8 {
                z = map.evaluate(z)?;
                if let Some(pos) = orbit.iter().position(|o| o.close_to(&z, 1e-8)) {
                    let period = orbit.len() - pos;
                    if map.log_multiplier(orbit[pos], period)? > -1e-9 {
                        return Ok(true);
                    }
                    break;
                }
                orbit.push(z);
            }
        }
        Ok(false)
    }
}

/// Removes near-duplicates, keeping the first occurrence.
pub fn dedup_points(points: Vec<SpherePoint>, tol: f64) -> Vec<SpherePoint> {
    let mut out: Vec<SpherePoint> = Vec::new();
    for p in points {
        if !out.iter().any(|q| q.close_to(&p, tol)) {
            out.push(p);
        }
    }
    out
}

fn same_set(a: &[SpherePoint], b: &[SpherePoint], tol: f64) -> bool {
    a.iter().all(|p| b.iter().any(|q| q.close_to(p, tol)))
        && b.iter().all(|p| a.iter().any(|q| q.close_to(p, tol)))
}

/// Resultant of the coefficient-normalized pair, via the Sylvester matrix.
fn normalized_resultant(p: &Poly, q: &Poly) -> f64 {
    let p = p.scaled(Complex64::new(1.0 / p.scale(), 0.0));
    let q = q.scaled(Complex64::new(1.0 / q.scale(), 0.0));
    let m = p.degree();
    let n = q.degree();
    if m + n == 0 {
        return 1.0;
    }
    let size = m + n;
    let mut a = vec![vec![ZERO; size]; size];
    // rows: n shifted copies of p, m shifted copies of q (descending order)
    for r in 0..n {
        for k in 0..=m {
            a[r][r + k] = p.coeff(m - k);
        }
    }
    for r in 0..m {
        for k in 0..=n {
            a[n + r][r + k] = q.coeff(n - k);
        }
    }
    determinant(a).norm()
}

fn determinant(mut a: Vec<Vec<Complex64>>) -> Complex64 {
    let n = a.len();
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].norm().partial_cmp(&a[j][col].norm()).unwrap())
            .unwrap();
        if a[pivot][col] == ZERO {
            return ZERO;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        let pv = a[col][col];
        det *= pv;
        for row in col + 1..n {
            let factor = a[row][col] / pv;
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= factor * v;
            }
        }
    }
    det
}
