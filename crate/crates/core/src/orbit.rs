//! Finite-orbit Lyapunov statistics and hyperbolic times.
//!
//! Traces are stored run-length encoded: a run is a short pattern of
//! per-step `log|f'|` values repeated a (possibly astronomically large)
//! number of times. Ordinary orbits are a single run with one repeat.

use crate::error::{Error, Result};
use crate::map::RationalMap;
use crate::sphere::SpherePoint;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Slack in the hyperbolic-time inequality.
pub const HYPERBOLIC_TOL: f64 = 1e-9;
/// Longest trace that may be expanded into an explicit list.
pub const MAX_MATERIALIZED: u128 = 1 << 26;

/// A pattern of per-step values repeated `repeats` times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub pattern: Vec<f64>,
    pub repeats: u128,
}

impl Run {
    pub fn len(&self) -> u128 {
        self.pattern.len() as u128 * self.repeats
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn pattern_sum(&self) -> f64 {
        self.pattern.iter().sum()
    }
}

/// Per-step `log|f'(f^k x)|` along an orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrace {
    pub base: SpherePoint,
    runs: Vec<Run>,
    /// `(steps before run, sum before run)` for each run.
    #[serde(skip)]
    offsets: Vec<(u128, f64)>,
    /// Set when the trace was produced with extended precision.
    pub extended: bool,
}

impl OrbitTrace {
    pub fn new(base: SpherePoint) -> Self {
        OrbitTrace { base, runs: Vec::new(), offsets: Vec::new(), extended: false }
    }

    pub fn from_values(base: SpherePoint, values: Vec<f64>) -> Self {
        let mut t = OrbitTrace::new(base);
        t.push_run(values, 1);
        t
    }

    /// Appends `repeats` copies of `pattern`.
    pub fn push_run(&mut self, pattern: Vec<f64>, repeats: u128) {
        if pattern.is_empty() || repeats == 0 {
            return;
        }
        let (count, sum) = self.totals();
        self.offsets.push((count, sum));
        self.runs.push(Run { pattern, repeats });
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    fn totals(&self) -> (u128, f64) {
        match (self.runs.last(), self.offsets.last()) {
            (Some(r), Some(&(c, s))) => (c + r.len(), s + r.pattern_sum() * r.repeats as f64),
            _ => (0, 0.0),
        }
    }

    /// Rebuilds cached offsets, e.g. after deserialization.
    pub fn reindex(&mut self) {
        let runs = std::mem::take(&mut self.runs);
        self.offsets.clear();
        for r in runs {
            self.push_run(r.pattern, r.repeats);
        }
    }

    pub fn len(&self) -> u128 {
        self.totals().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `S_k = sum_{j<k} log|f'(f^j x)|`.
    pub fn prefix_sum(&self, k: u128) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let i = self.offsets.partition_point(|&(c, _)| c < k) - 1;
        let (c0, s0) = self.offsets[i];
        let run = &self.runs[i];
        let l = run.pattern.len() as u128;
        let within = k - c0;
        let full = within / l;
        let part = (within % l) as usize;
        s0 + full as f64 * run.pattern_sum() + run.pattern[..part].iter().sum::<f64>()
    }

    /// `l_k = S_k / k`.
    pub fn running_avg(&self, k: u128) -> f64 {
        self.prefix_sum(k) / k as f64
    }

    /// Value at step `k` (0-based).
    pub fn step(&self, k: u128) -> f64 {
        let i = self.offsets.partition_point(|&(c, _)| c <= k) - 1;
        let (c0, _) = self.offsets[i];
        let run = &self.runs[i];
        run.pattern[((k - c0) % run.pattern.len() as u128) as usize]
    }

    /// Explicit per-step values; refuses very long traces.
    pub fn values(&self) -> Result<Vec<f64>> {
        let n = self.len();
        if n > MAX_MATERIALIZED {
            return Err(Error::Precondition(format!("trace of length {n} is too long to expand")));
        }
        let mut out = Vec::with_capacity(n as usize);
        for r in &self.runs {
            for _ in 0..r.repeats {
                out.extend_from_slice(&r.pattern);
            }
        }
        Ok(out)
    }

    /// `l_1, ..., l_n` for a materializable trace.
    pub fn running_averages(&self) -> Result<Vec<f64>> {
        let v = self.values()?;
        let mut sum = 0.0;
        Ok(v.iter()
            .enumerate()
            .map(|(k, x)| {
                sum += x;
                sum / (k + 1) as f64
            })
            .collect())
    }

    /// Extremes of `(S_k - a - b k) / k` over `k` in `[from, to]`.
    ///
    /// For a fixed phase inside a run the quantity is a Mobius function of
    /// the repeat index, so only the first and last admissible repeats of
    /// each phase need to be evaluated.
    pub fn deviation_extremes(&self, from: u128, to: u128, a: f64, b: f64) -> Option<(f64, f64)> {
        let from = from.max(1);
        let to = to.min(self.len());
        if from > to {
            return None;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (run, &(c0, s0)) in self.runs.iter().zip(&self.offsets) {
            let l = run.pattern.len() as u128;
            if c0 + run.len() < from || c0 + 1 > to {
                continue;
            }
            let sigma = run.pattern_sum();
            let mut partial = 0.0;
            for j in 1..=l {
                partial += run.pattern[(j - 1) as usize];
                // k = c0 + r l + j for r in [0, repeats)
                let first = c0 + j;
                let r_lo = if from > first { (from - first).div_ceil(l) } else { 0 };
                if to < first {
                    continue;
                }
                let r_hi = ((to - first) / l).min(run.repeats - 1);
                if r_lo > r_hi {
                    continue;
                }
                for r in [r_lo, r_hi] {
                    let k = first + r * l;
                    let s = s0 + r as f64 * sigma + partial;
                    let v = (s - a - b * k as f64) / k as f64;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        Some((lo, hi))
    }

    /// `(min, max)` of `l_k` over `k` in `[from, len]`.
    pub fn running_avg_extremes(&self, from: u128) -> Option<(f64, f64)> {
        self.deviation_extremes(from, self.len(), 0.0, 0.0)
    }

    /// CSV `k,log_deriv,running_avg` (1-based `k`); traces longer than
    /// `max_rows` are written at evenly spaced steps.
    pub fn to_csv(&self, max_rows: usize) -> String {
        let n = self.len();
        let mut out = String::from("k,log_deriv,running_avg\n");
        if n == 0 {
            return out;
        }
        let stride = (n / max_rows.max(1) as u128).max(1);
        let mut k = stride.min(n);
        if stride == 1 {
            if let Ok(v) = self.values() {
                let mut sum = 0.0;
                for (i, x) in v.iter().enumerate() {
                    sum += x;
                    out.push_str(&format!("{},{},{}\n", i + 1, x, sum / (i + 1) as f64));
                }
                return out;
            }
        }
        while k <= n {
            out.push_str(&format!("{},{},{}\n", k, self.step(k - 1), self.running_avg(k)));
            k += stride;
        }
        out
    }
}

/// Forward orbit statistics for `n` steps from `x`.
pub fn trace_orbit(map: &RationalMap, x: SpherePoint, n: usize) -> Result<OrbitTrace> {
    if n == 0 {
        return Err(Error::Precondition("trace length must be at least 1".into()));
    }
    let bound = map.escape_radius();
    let mut z = x;
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        if let SpherePoint::Finite(w) = z {
            if w.norm() > bound {
                return Err(Error::Escape { index: k });
            }
        } else if map.is_polynomial() {
            return Err(Error::Escape { index: k });
        }
        values.push(map.log_deriv_modulus(z));
        z = map.evaluate(z)?;
    }
    Ok(OrbitTrace::from_values(x, values))
}

/// Times at which every suffix product beats `e^{k sigma}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicTimeSet {
    pub sigma: f64,
    pub times: Vec<usize>,
    pub density: f64,
}

/// Hyperbolic times of a per-step sequence.
///
/// With `T_j = S_j - j sigma`, `n` qualifies iff `T_n >= max_{j<n} T_j`,
/// which makes the scan linear.
pub fn hyperbolic_times_of(values: &[f64], sigma: f64) -> HyperbolicTimeSet {
    let mut times = Vec::new();
    let mut s = 0.0;
    let mut best = 0.0f64; // T_0
    for (i, &v) in values.iter().enumerate() {
        s += v;
        let n = i + 1;
        let t = s - n as f64 * sigma;
        if t + HYPERBOLIC_TOL >= best {
            times.push(n);
        }
        if t > best || t.is_nan() {
            best = if t.is_nan() { f64::INFINITY } else { t };
        }
    }
    let density = if values.is_empty() { 0.0 } else { times.len() as f64 / values.len() as f64 };
    HyperbolicTimeSet { sigma, times, density }
}

pub fn hyperbolic_times(trace: &OrbitTrace, sigma: f64) -> Result<HyperbolicTimeSet> {
    if !(sigma > 0.0) {
        return Err(Error::Precondition("sigma must be positive".into()));
    }
    Ok(hyperbolic_times_of(&trace.values()?, sigma))
}

/// Lower bound `(mean - sigma) / (max - sigma)` on the density of hyperbolic
/// times, valid when the mean exceeds `sigma`.
pub fn pliss_bound(values: &[f64], sigma: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (mean > sigma).then(|| (mean - sigma) / (max - sigma))
}

/// Quadratic reference scan: checks every suffix directly.
pub fn hyperbolic_times_brute_force(values: &[f64], sigma: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for n in 1..=values.len() {
        let mut ok = true;
        let mut suffix = 0.0;
        for k in 1..=n {
            suffix += values[n - k];
            if !(suffix + HYPERBOLIC_TOL >= k as f64 * sigma) {
                ok = false;
                break;
            }
        }
        if ok {
            out.push(n);
        }
    }
    out
}

/// Preimages of `z` sorted lexicographically, so branch indices are stable.
pub fn ordered_preimages(map: &RationalMap, z: SpherePoint) -> Result<Vec<SpherePoint>> {
    let mut pre = map.preimages(z)?;
    pre.sort_by(|a, b| match (a, b) {
        (SpherePoint::Finite(x), SpherePoint::Finite(y)) => {
            x.re.partial_cmp(&y.re).unwrap().then(x.im.partial_cmp(&y.im).unwrap())
        }
        (SpherePoint::Infinity, SpherePoint::Infinity) => std::cmp::Ordering::Equal,
        (SpherePoint::Infinity, _) => std::cmp::Ordering::Greater,
        (_, SpherePoint::Infinity) => std::cmp::Ordering::Less,
    });
    Ok(pre)
}

/// An orbit in J of length `len` obtained from a random backward word.
///
/// Starting at `anchor` (a point of J), `len` random inverse branches give
/// `y_len`; its forward orbit is the chain `y_len, ..., y_1`. Backward
/// iteration is contracting, so the chain is accurate where forward
/// iteration of `y_len` would drift off a Cantor Julia set.
pub fn sample_julia_orbit<R: Rng>(
    map: &RationalMap,
    anchor: SpherePoint,
    len: usize,
    rng: &mut R,
) -> Result<(Vec<SpherePoint>, OrbitTrace)> {
    let mut chain = vec![anchor];
    let mut z = anchor;
    for _ in 0..len {
        let pre = ordered_preimages(map, z)?;
        z = pre[rng.gen_range(0..pre.len())];
        chain.push(z);
    }
    chain.reverse();
    chain.pop();
    let values: Vec<f64> = chain.iter().map(|&p| map.log_deriv_modulus(p)).collect();
    let trace = OrbitTrace::from_values(chain[0], values);
    Ok((chain, trace))
}
