//! Backward preimage trees `f^{-k}(x)`, `k = 0..depth`.

use crate::error::{Error, Result};
use crate::map::RationalMap;
use crate::precision::{polish_preimage, BigComplex, Precision};
use crate::sphere::SpherePoint;

/// Distance below which a node counts as sitting on a critical value.
pub const CRITICAL_VALUE_TOL: f64 = 1e-8;

/// Node of a preimage tree.
#[derive(Clone, Debug)]
pub struct TreeNode {
    pub point: SpherePoint,
    /// Index of the parent in the previous level (0 for the root).
    pub parent: usize,
    /// `log |f'(point)|`.
    pub log_deriv: f64,
    /// `log |(f^k)'(point)|` where `k` is the level; 0 at the root.
    pub cum_log_deriv: f64,
    /// Set when the node or one of its ancestors was produced from a
    /// critical value, or the solver residual was too large.
    pub flagged: bool,
}

/// Full `degree`-ary backward tree stored level by level.
#[derive(Clone, Debug)]
pub struct PreimageTree {
    levels: Vec<Vec<TreeNode>>,
    precision: Precision,
}

impl PreimageTree {
    pub fn build(map: &RationalMap, root: SpherePoint, depth: usize) -> Result<Self> {
        Self::build_with(map, root, depth, Precision::Double)
    }

    pub fn build_with(
        map: &RationalMap,
        root: SpherePoint,
        depth: usize,
        precision: Precision,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Precondition("preimage tree depth must be at least 1".into()));
        }
        let crit_values = map.critical_values()?;
        let near_critical_value =
            |z: &SpherePoint| crit_values.iter().any(|v| v.close_to(z, CRITICAL_VALUE_TOL));
        let root_node = TreeNode {
            point: root,
            parent: 0,
            log_deriv: map.log_deriv_modulus(root),
            cum_log_deriv: 0.0,
            flagged: false,
        };
        let mut levels = vec![vec![root_node]];
        let mut big_level: Vec<Option<BigComplex>> = match (precision, root) {
            (Precision::Extended(bits), SpherePoint::Finite(z)) => vec![Some(BigComplex::from_c64(z, bits))],
            _ => vec![None],
        };
        for _ in 0..depth {
            let prev = levels.last().unwrap();
            let mut next = Vec::with_capacity(prev.len() * map.degree());
            let mut next_big = Vec::with_capacity(prev.len() * map.degree());
            for (pi, parent) in prev.iter().enumerate() {
                let ramified = near_critical_value(&parent.point);
                let (children, solver_ok) = match map.preimages(parent.point) {
                    Ok(c) => (c, true),
                    Err(Error::RootFinding { .. }) => {
                        (vec![SpherePoint::Infinity; map.degree()], false)
                    }
                    Err(e) => return Err(e),
                };
                for child in children {
                    let (point, big) = match (&big_level[pi], child) {
                        (Some(target), SpherePoint::Finite(guess)) if !ramified => {
                            let w = polish_preimage(map.numerator(), map.denominator(), target, guess);
                            (SpherePoint::Finite(w.to_c64()), Some(w))
                        }
                        _ => (child, None),
                    };
                    let log_deriv = map.log_deriv_modulus(point);
                    let flagged = parent.flagged || ramified || !solver_ok || !log_deriv.is_finite();
                    next.push(TreeNode {
                        point,
                        parent: pi,
                        log_deriv,
                        cum_log_deriv: parent.cum_log_deriv + log_deriv,
                        flagged,
                    });
                    next_big.push(big);
                }
            }
            levels.push(next);
            big_level = next_big;
        }
        Ok(PreimageTree { levels, precision })
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn level(&self, k: usize) -> &[TreeNode] {
        &self.levels[k]
    }

    pub fn leaves(&self) -> &[TreeNode] {
        self.levels.last().unwrap()
    }

    pub fn root(&self) -> &TreeNode {
        &self.levels[0][0]
    }

    /// Number of flagged leaves.
    pub fn flagged_leaves(&self) -> usize {
        self.leaves().iter().filter(|n| n.flagged).count()
    }

    /// Path of node indices from the root (index 0) to leaf `i`.
    pub fn path_to_leaf(&self, i: usize) -> Vec<usize> {
        let mut path = vec![i];
        let mut idx = i;
        for k in (1..self.levels.len()).rev() {
            idx = self.levels[k][idx].parent;
            path.push(idx);
        }
        path.reverse();
        path
    }
}

/// Numerically stable `log sum exp` in a fixed order.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn z_squared_depth_three_gives_eighth_roots_of_unity() {
        let f = RationalMap::quadratic(Complex64::new(0.0, 0.0));
        let t = PreimageTree::build(&f, SpherePoint::real(1.0), 3).unwrap();
        assert_eq!(t.leaves().len(), 8);
        for leaf in t.leaves() {
            let z = leaf.point.finite().unwrap();
            assert!((z.powu(8) - 1.0).norm() < 1e-13);
            assert!((leaf.cum_log_deriv - 3.0 * 2f64.ln()).abs() < 1e-13);
            assert!(!leaf.flagged);
        }
        // distinct leaves
        for i in 0..8 {
            for j in 0..i {
                let a = t.leaves()[i].point.finite().unwrap();
                let b = t.leaves()[j].point.finite().unwrap();
                assert!((a - b).norm() > 0.5);
            }
        }
    }

    #[test]
    fn hand_solved_leaves_for_z_squared_minus_six() {
        let f = RationalMap::quadratic(Complex64::new(-6.0, 0.0));
        let t = PreimageTree::build(&f, SpherePoint::real(3.0), 2).unwrap();
        let mut leaves: Vec<f64> = t.leaves().iter().map(|n| n.point.finite().unwrap().re).collect();
        leaves.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let s3 = 3f64.sqrt();
        for (got, want) in leaves.iter().zip([-3.0, -s3, s3, 3.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn critical_value_root_is_flagged() {
        let f = RationalMap::quadratic(Complex64::new(0.0, 0.0));
        let t = PreimageTree::build(&f, SpherePoint::real(0.0), 1).unwrap();
        assert_eq!(t.flagged_leaves(), 2);
    }

    #[test]
    fn zero_depth_is_rejected() {
        let f = RationalMap::quadratic(Complex64::new(0.0, 0.0));
        assert!(PreimageTree::build(&f, SpherePoint::real(1.0), 0).is_err());
    }

    #[test]
    fn extended_tree_matches_double_tree() {
        let f = RationalMap::quadratic(Complex64::new(-2.0, 0.0));
        let a = PreimageTree::build(&f, SpherePoint::real(-1.0), 6).unwrap();
        let b = PreimageTree::build_with(&f, SpherePoint::real(-1.0), 6, Precision::Extended(160)).unwrap();
        for (x, y) in a.leaves().iter().zip(b.leaves()) {
            let (x, y) = (x.point.finite().unwrap(), y.point.finite().unwrap());
            assert!((x - y).norm() < 1e-12);
        }
        // cos-angle closed form: leaves of f^{-6}(2cos(2pi/3)) are 2cos((2pi/3 + 2pi k)/64)
        let mut got: Vec<f64> = b.leaves().iter().map(|n| n.point.finite().unwrap().re).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<f64> = (0..64)
            .map(|k| 2.0 * ((2.0 * std::f64::consts::PI / 3.0 + 2.0 * std::f64::consts::PI * k as f64) / 64.0).cos())
            .collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-13, "{g} vs {w}");
        }
    }

    #[test]
    fn path_reconstruction() {
        let f = RationalMap::quadratic(Complex64::new(-6.0, 0.0));
        let t = PreimageTree::build(&f, SpherePoint::real(3.0), 4).unwrap();
        for i in [0, 5, 15] {
            let path = t.path_to_leaf(i);
            assert_eq!(path.len(), 5);
            // each node maps to its parent
            for k in 1..=4 {
                let child = t.level(k)[path[k]].point.finite().unwrap();
                let parent = t.level(k - 1)[path[k - 1]].point.finite().unwrap();
                assert!((f.eval(child) - parent).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = log_sum_exp([1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
