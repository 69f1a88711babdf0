//! Points of the Riemann sphere.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// A point of the Riemann sphere: a finite complex value or the point at infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpherePoint {
    Finite(Complex64),
    Infinity,
}

/// Local coordinate of a sphere point.
///
/// Points with `|z| <= 1` use the identity chart, everything else (including
/// infinity) uses `w = 1/z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Chart {
    Zero(Complex64),
    Infinity(Complex64),
}

impl SpherePoint {
    pub fn new(re: f64, im: f64) -> Self {
        SpherePoint::Finite(Complex64::new(re, im))
    }

    pub fn real(x: f64) -> Self {
        SpherePoint::new(x, 0.0)
    }

    /// Builds a sphere point, mapping non-finite coordinates to infinity.
    pub fn from_complex(z: Complex64) -> Self {
        if z.re.is_finite() && z.im.is_finite() {
            SpherePoint::Finite(z)
        } else {
            SpherePoint::Infinity
        }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, SpherePoint::Infinity)
    }

    pub fn finite(&self) -> Option<Complex64> {
        match *self {
            SpherePoint::Finite(z) => Some(z),
            SpherePoint::Infinity => None,
        }
    }

    pub fn chart(&self) -> Chart {
        match *self {
            SpherePoint::Finite(z) if z.norm() <= 1.0 => Chart::Zero(z),
            SpherePoint::Finite(z) => Chart::Infinity(z.inv()),
            SpherePoint::Infinity => Chart::Infinity(Complex64::new(0.0, 0.0)),
        }
    }

    /// Chordal distance on the unit-diameter sphere, in `[0, 1]`.
    pub fn chordal_distance(&self, other: &SpherePoint) -> f64 {
        match (*self, *other) {
            (SpherePoint::Infinity, SpherePoint::Infinity) => 0.0,
            (SpherePoint::Finite(z), SpherePoint::Infinity)
            | (SpherePoint::Infinity, SpherePoint::Finite(z)) => 1.0 / z.norm().hypot(1.0),
            (SpherePoint::Finite(a), SpherePoint::Finite(b)) => {
                (a - b).norm() / a.norm().hypot(1.0) / b.norm().hypot(1.0)
            }
        }
    }

    /// Distance used when comparing points for set equality: Euclidean inside
    /// the unit disk chart, chordal otherwise.
    pub fn close_to(&self, other: &SpherePoint, tol: f64) -> bool {
        match (*self, *other) {
            (SpherePoint::Finite(a), SpherePoint::Finite(b)) => {
                (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
            }
            _ => self.chordal_distance(other) <= tol,
        }
    }
}

impl From<Complex64> for SpherePoint {
    fn from(z: Complex64) -> Self {
        SpherePoint::from_complex(z)
    }
}

impl fmt::Display for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpherePoint::Finite(z) => write!(f, "{}{:+}i", z.re, z.im),
            SpherePoint::Infinity => write!(f, "inf"),
        }
    }
}

// Serialized as `[re, im]` or the string `"inf"`.
impl Serialize for SpherePoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SpherePoint::Finite(z) => [z.re, z.im].serialize(s),
            SpherePoint::Infinity => "inf".serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for SpherePoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Pair([f64; 2]),
            Tag(String),
        }
        match Repr::deserialize(d)? {
            Repr::Pair([re, im]) => Ok(SpherePoint::new(re, im)),
            Repr::Tag(t) if t == "inf" => Ok(SpherePoint::Infinity),
            Repr::Tag(t) => Err(serde::de::Error::custom(format!("unknown sphere point `{t}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_switches_outside_unit_disk() {
        assert_eq!(SpherePoint::real(0.5).chart(), Chart::Zero(Complex64::new(0.5, 0.0)));
        assert_eq!(SpherePoint::real(2.0).chart(), Chart::Infinity(Complex64::new(0.5, 0.0)));
        assert_eq!(SpherePoint::Infinity.chart(), Chart::Infinity(Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn chordal_distance_is_symmetric_and_bounded() {
        let a = SpherePoint::new(0.3, -1.2);
        let b = SpherePoint::Infinity;
        assert!((a.chordal_distance(&b) - b.chordal_distance(&a)).abs() < 1e-15);
        assert!(a.chordal_distance(&b) <= 1.0);
        assert_eq!(b.chordal_distance(&b), 0.0);
        let huge = SpherePoint::real(1e200);
        assert!((huge.chordal_distance(&SpherePoint::real(3.0)) - 1.0 / 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn non_finite_coordinates_become_infinity() {
        assert!(SpherePoint::from_complex(Complex64::new(f64::INFINITY, 0.0)).is_infinity());
        assert!(SpherePoint::from_complex(Complex64::new(0.0, f64::NAN)).is_infinity());
    }

    #[test]
    fn json_representation() {
        let s = serde_json::to_string(&vec![SpherePoint::real(2.0), SpherePoint::Infinity]).unwrap();
        assert_eq!(s, "[[2.0,0.0],\"inf\"]");
        let back: Vec<SpherePoint> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![SpherePoint::real(2.0), SpherePoint::Infinity]);
    }
}
