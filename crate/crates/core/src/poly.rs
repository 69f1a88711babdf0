//! Dense complex polynomials and simultaneous root finding.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Complex polynomial with coefficients in ascending degree order.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coeffs: Vec<Complex64>,
}

impl Poly {
    /// Builds a polynomial, dropping exactly-zero leading coefficients.
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&ZERO) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(ZERO);
        }
        Poly { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Poly::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn constant(c: Complex64) -> Self {
        Poly::new(vec![c])
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == ZERO)
    }

    pub fn leading(&self) -> Complex64 {
        *self.coeffs.last().unwrap()
    }

    /// Coefficient of `z^k`, zero past the degree.
    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or(ZERO)
    }

    /// Largest coefficient modulus.
    pub fn scale(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, &c| acc * z + c)
    }

    /// Value and first derivative by a single Horner pass.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = ZERO;
        let mut dp = ZERO;
        for &c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    /// `sum |a_k| |z|^k`, the natural scale for backward-error residuals.
    pub fn abs_eval(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.norm())
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::constant(ZERO);
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    /// Coefficients of `u -> p(x + u)`.
    pub fn taylor_at(&self, x: Complex64) -> Poly {
        let mut c = self.coeffs.clone();
        let n = c.len();
        for i in 0..n {
            for j in (i..n - 1).rev() {
                let hi = c[j + 1];
                c[j] += x * hi;
            }
        }
        Poly::new(c)
    }

    /// Coefficients reversed after padding to `degree`: `w^degree p(1/w)`.
    pub fn reversed(&self, degree: usize) -> Poly {
        let mut c: Vec<Complex64> = (0..=degree).map(|k| self.coeff(k)).collect();
        c.reverse();
        Poly::new(c)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![ZERO; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - other.coeff(k)).collect())
    }

    pub fn scaled(&self, s: Complex64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    /// Drops leading coefficients smaller than `rel_tol` times the scale.
    /// Returns the trimmed polynomial and the number of dropped degrees.
    pub fn trimmed(&self, rel_tol: f64) -> (Poly, usize) {
        let scale = self.scale();
        let mut c = self.coeffs.clone();
        let mut dropped = 0;
        while c.len() > 1 && c.last().unwrap().norm() <= rel_tol * scale {
            c.pop();
            dropped += 1;
        }
        (Poly::new(c), dropped)
    }

    /// Backward error of `z` as a root, relative to the coefficient scale
    /// on the disk of radius `max(1, |z|)`.
    pub fn residual(&self, z: Complex64) -> f64 {
        let scale = self.abs_eval(z.norm().max(1.0));
        if scale == 0.0 {
            0.0
        } else {
            self.eval(z).norm() / scale
        }
    }

    /// All roots, with multiplicity.
    ///
    /// Degrees one and two use closed forms; higher degrees run the
    /// Aberth-Ehrlich iteration followed by Newton polishing.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let n = self.degree();
        if self.is_zero() {
            return Err(Error::InvalidMap("roots of the zero polynomial".into()));
        }
        let roots = match n {
            0 => Vec::new(),
            1 => vec![-self.coeffs[0] / self.coeffs[1]],
            2 => quadratic_roots(self.coeffs[2], self.coeffs[1], self.coeffs[0]).to_vec(),
            _ => {
                let guesses = circle_guesses(self);
                let d = self.derivative();
                let eval = |z: Complex64| (self.eval(z), d.eval(z));
                let mut roots = aberth(eval, guesses, 500, 1e-15, false);
                for r in roots.iter_mut() {
                    for _ in 0..2 {
                        let (p, dp) = self.eval_with_derivative(*r);
                        if dp.norm() > 0.0 {
                            let step = p / dp;
                            if step.norm() < 1e-6 * (1.0 + r.norm()) {
                                *r -= step;
                            }
                        }
                    }
                }
                roots
            }
        };
        let residuals: Vec<f64> = roots.iter().map(|&z| self.residual(z)).collect();
        let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
        // multiple roots only reach ~sqrt(eps) accuracy
        if !(max_residual <= 1e-9) {
            return Err(Error::RootFinding { max_residual, residuals });
        }
        Ok(roots)
    }
}

/// Roots of `a z^2 + b z + c` using the cancellation-free form.
pub fn quadratic_roots(a: Complex64, b: Complex64, c: Complex64) -> [Complex64; 2] {
    let disc = (b * b - a * c * 4.0).sqrt();
    let plus = b + disc;
    let minus = b - disc;
    let q = if plus.norm() >= minus.norm() { plus * -0.5 } else { minus * -0.5 };
    if q == ZERO {
        return [ZERO, ZERO];
    }
    [q / a, c / q]
}

fn circle_guesses(p: &Poly) -> Vec<Complex64> {
    let n = p.degree();
    let lead = p.leading().norm();
    // Fujiwara-style radius: geometric mean of the coefficient ratios
    let mut radius: f64 = 0.0;
    for k in 0..n {
        let c = p.coeff(k).norm();
        if c > 0.0 {
            radius = radius.max((c / lead).powf(1.0 / (n - k) as f64));
        }
    }
    if radius == 0.0 {
        radius = 1.0;
    }
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / n as f64 + 0.4;
            Complex64::from_polar(radius, theta)
        })
        .collect()
}

/// Simultaneous Aberth-Ehrlich iteration (Jacobi form).
///
/// `eval` returns `(p(z), p'(z))` for the polynomial whose roots are sought;
/// it may be scaled by any nonzero factor per call since only `p/p'` is used.
/// The update order is fixed, so results do not depend on `parallel`.
pub fn aberth<F>(
    eval: F,
    mut z: Vec<Complex64>,
    max_iter: usize,
    tol: f64,
    parallel: bool,
) -> Vec<Complex64>
where
    F: Fn(Complex64) -> (Complex64, Complex64) + Sync,
{
    let n = z.len();
    let mut active = vec![true; n];
    for _ in 0..max_iter {
        let step_of = |i: usize, zs: &[Complex64]| -> Complex64 {
            let zi = zs[i];
            let (p, dp) = eval(zi);
            if p == ZERO {
                return ZERO;
            }
            let ratio = if dp == ZERO { p * 1e-8 } else { p / dp };
            let mut s = ZERO;
            for (j, &zj) in zs.iter().enumerate() {
                if j != i {
                    let diff = zi - zj;
                    if diff != ZERO {
                        s += diff.inv();
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - ratio * s;
            if denom == ZERO {
                ratio
            } else {
                ratio / denom
            }
        };
        let steps: Vec<Complex64> = if parallel {
            let zs = &z;
            (0..n)
                .into_par_iter()
                .map(|i| if active[i] { step_of(i, zs) } else { ZERO })
                .collect()
        } else {
            (0..n).map(|i| if active[i] { step_of(i, &z) } else { ZERO }).collect()
        };
        let mut moving = false;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            let s = steps[i];
            if s.re.is_finite() && s.im.is_finite() {
                z[i] -= s;
            }
            if s.norm() <= tol * (1.0 + z[i].norm()) {
                active[i] = false;
            } else {
                moving = true;
            }
        }
        if !moving {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted_re(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        v
    }

    #[test]
    fn quadratic_closed_form() {
        let r = sorted_re(Poly::from_real(&[-9.0, 0.0, 1.0]).roots().unwrap());
        assert!((r[0] - c(-3.0, 0.0)).norm() < 1e-14);
        assert!((r[1] - c(3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn cubic_and_quintic_roots() {
        // (z-1)(z-2)(z+3) = z^3 - 7z + 6
        let r = sorted_re(Poly::from_real(&[6.0, -7.0, 0.0, 1.0]).roots().unwrap());
        for (got, want) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((got - c(want, 0.0)).norm() < 1e-12, "{got} vs {want}");
        }
        // z^5 - 1
        let r = Poly::from_real(&[-1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).roots().unwrap();
        for z in &r {
            assert!((z.powu(5) - 1.0).norm() < 1e-12);
        }
        for i in 0..5 {
            for j in 0..i {
                assert!((r[i] - r[j]).norm() > 0.5);
            }
        }
    }

    #[test]
    fn double_root_is_accepted() {
        let r = Poly::from_real(&[0.0, 0.0, 3.0, 1.0]).roots().unwrap();
        let near_zero = r.iter().filter(|z| z.norm() < 1e-6).count();
        assert_eq!(near_zero, 2);
    }

    #[test]
    fn taylor_shift_matches_direct_evaluation() {
        let p = Poly::new(vec![c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 1.0), c(2.0, -1.0)]);
        let x = c(0.7, -0.3);
        let t = p.taylor_at(x);
        for u in [c(0.1, 0.0), c(-0.2, 0.4), c(1.5, 1.0)] {
            assert!((t.eval(u) - p.eval(x + u)).norm() < 1e-12);
        }
        assert!((t.coeff(0) - p.eval(x)).norm() < 1e-14);
    }

    #[test]
    fn reversed_pads_to_degree() {
        let p = Poly::from_real(&[-2.0, 0.0, 1.0]);
        let r = p.reversed(2);
        assert_eq!(r.coeffs(), &[c(1.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0)]);
        let q = Poly::from_real(&[1.0]).reversed(2);
        assert_eq!(q.degree(), 2);
        assert_eq!(q.coeff(0), ZERO);
    }

    #[test]
    fn trimming_reports_dropped_degrees() {
        let p = Poly::new(vec![c(1.0, 0.0), c(2.0, 0.0), c(1e-18, 0.0)]);
        let (t, dropped) = p.trimmed(1e-14);
        assert_eq!(t.degree(), 1);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn aberth_parallel_and_serial_agree() {
        let p = Poly::from_real(&[1.0, -3.0, 0.5, 0.0, 2.0, 1.0, -1.0]);
        let d = p.derivative();
        let eval = |z: Complex64| (p.eval(z), d.eval(z));
        let g = circle_guesses(&p);
        let a = aberth(eval, g.clone(), 300, 1e-15, false);
        let b = aberth(eval, g, 300, 1e-15, true);
        assert_eq!(a, b);
        for z in &a {
            assert!(p.residual(*z) < 1e-12);
        }
    }
}
