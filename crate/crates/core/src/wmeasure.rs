//! Block schedules alternating between subsystems, and orbits whose
//! finite-time exponents oscillate between the subsystem exponents.
//!
//! Block `i` runs `n_i` times around a periodic cycle of subsystem `s(i)`
//! (`a_i` steps per turn), then follows a bridge of `b_i` steps into the
//! next subsystem. Checkpoints are `m_i = sum_{k<=i} (a_k n_k + b_k)`.

use crate::error::{Error, Result};
use crate::gds::{bridge, subsystem_pressure, GdsSystem};
use crate::map::RationalMap;
use crate::orbit::{ordered_preimages, OrbitTrace};
use crate::sphere::SpherePoint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

/// Longest closed walk considered when choosing a block cycle.
pub const MAX_CYCLE: usize = 6;

/// Cap on explicitly iterated turns per block before the backward orbit
/// must have settled on the cycle.
const MAX_EXPLICIT_TURNS: u128 = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOptions {
    /// Constant in the growth predicate.
    pub c: f64,
    /// Backward search depth for bridges.
    pub search_depth: usize,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions { c: 10.0, search_depth: 12 }
    }
}

/// Disk used to select the inverse branch at one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRef {
    pub point: Complex64,
    pub center: Complex64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsystemStats {
    /// `-P'(d*)` at the subsystem's Bowen root `d*`.
    pub chi_equilibrium: f64,
    /// `h = P(d*) + d* chi` at the Bowen root.
    pub entropy: f64,
    /// `h / chi`, the Bowen root.
    pub dimension: f64,
    /// Per-step exponent of the block cycle; the schedule target.
    pub chi: f64,
    /// Vertices of the block cycle, starting at vertex 0.
    pub cycle: Vec<usize>,
    /// Periodic orbit realizing the cycle.
    pub cycle_points: Vec<Complex64>,
    pub cycle_refs: Vec<StepRef>,
    /// `log|f'|` along the cycle, in forward order.
    pub cycle_values: Vec<f64>,
}

impl SubsystemStats {
    pub fn period(&self) -> usize {
        self.cycle.len()
    }
}

/// Forward path from the end of a block of `from` into the start of a
/// block of `to`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeSegment {
    pub from: usize,
    pub to: usize,
    pub refs: Vec<StepRef>,
    /// `min log|f'|` over the bridge points.
    pub log_w: f64,
    /// `log` of the product of bridge branch distortions and the
    /// subsystem's worst distortion.
    pub log_distortion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub subsystem: usize,
    pub n: u128,
    /// Index into the bridge list, if the next block changes subsystem.
    pub bridge: Option<usize>,
    pub b: u128,
    pub eps: f64,
    pub checkpoint: u128,
    /// `a_i n_i eps_i`.
    pub predicate_lhs: f64,
    /// `C (m_{i-1}(|chi_{i-1}| + 1) + b_i max(|log w_i|, |log W|) + log K_i)`.
    pub predicate_rhs: f64,
}

impl Block {
    pub fn predicate_holds(&self) -> bool {
        self.predicate_lhs >= self.predicate_rhs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WSchedule {
    pub c: f64,
    pub eps_seed: f64,
    pub subsystems: Vec<SubsystemStats>,
    pub bridges: Vec<BridgeSegment>,
    pub blocks: Vec<Block>,
    /// `log W`, the largest log-derivative over cycles and bridges.
    pub log_w_max: f64,
}

impl WSchedule {
    pub fn len(&self) -> u128 {
        self.blocks.last().map_or(0, |b| b.checkpoint)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn predicates_hold(&self) -> bool {
        self.blocks.iter().all(Block::predicate_holds)
    }

    /// Subsystem entered after the last block.
    fn final_subsystem(&self) -> usize {
        match self.blocks.last() {
            Some(b) => b.bridge.map_or(b.subsystem, |k| self.bridges[k].to),
            None => 0,
        }
    }

    /// Copy with block lengths replaced, checkpoints and predicate values
    /// recomputed. Used for negative controls.
    pub fn with_block_lengths(&self, lengths: &[u128]) -> Result<WSchedule> {
        if lengths.len() != self.blocks.len() {
            return Err(Error::Precondition("one length per block is required".into()));
        }
        let mut out = self.clone();
        let mut m: u128 = 0;
        for (i, (blk, &n)) in out.blocks.iter_mut().zip(lengths).enumerate() {
            let a = self.subsystems[blk.subsystem].period() as u128;
            blk.n = n;
            m = n
                .checked_mul(a)
                .and_then(|s| s.checked_add(blk.b))
                .and_then(|s| s.checked_add(m))
                .ok_or(Error::ScheduleOverflow { block: i })?;
            blk.checkpoint = m;
            blk.predicate_lhs = a as f64 * n as f64 * blk.eps;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn pick_preimage(map: &RationalMap, z: Complex64, r: &StepRef) -> Result<Complex64> {
    let pre = ordered_preimages(map, SpherePoint::Finite(z))?;
    let mut best: Option<(bool, f64, Complex64)> = None;
    for q in pre.iter().filter_map(|q| q.finite()) {
        let inside = (q - r.center).norm() < r.radius;
        let dist = (q - r.point).norm();
        let better = match best {
            None => true,
            Some((bi, bd, _)) => (inside && !bi) || (inside == bi && dist < bd),
        };
        if better {
            best = Some((inside, dist, q));
        }
    }
    best.map(|b| b.2).ok_or_else(|| Error::Escape { index: 0 })
}

fn log_deriv(map: &RationalMap, z: Complex64) -> f64 {
    map.log_deriv_modulus(SpherePoint::Finite(z))
}

/// Bowen root, exponent and entropy of the equilibrium state.
fn equilibrium(system: &GdsSystem) -> (f64, f64, f64) {
    let p = |d: f64| subsystem_pressure(system, d).pressure;
    let root = if p(0.0) <= 0.0 {
        0.0
    } else {
        let mut hi = 1.0;
        while p(hi) > 0.0 && hi < 1e3 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let h = 1e-5;
    let chi = -(p(root + h) - p(root - h)) / (2.0 * h);
    let entropy = (p(root) + root * chi).max(0.0);
    (root, chi, entropy)
}

fn vertex_ref(system: &GdsSystem, v: usize, point: Complex64) -> StepRef {
    let u = &system.vertices[v];
    StepRef { point, center: u.center, radius: u.radius }
}

/// Periodic orbit following the closed walk `cycle` (vertex sequence from
/// vertex 0, returning to it).
fn cycle_orbit(map: &RationalMap, system: &GdsSystem, cycle: &[usize]) -> Result<Vec<Complex64>> {
    let l = cycle.len();
    let refs: Vec<StepRef> = cycle.iter().map(|&v| vertex_ref(system, v, system.vertices[v].center)).collect();
    let mut z = system.vertices[0].anchor;
    let mut pts = vec![z; l];
    for _ in 0..500 {
        let start = z;
        for j in (0..l).rev() {
            z = pick_preimage(map, z, &refs[j])?;
            pts[j] = z;
        }
        if (z - start).norm() <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    Ok(pts)
}

/// Closed walks from vertex 0 of length at most [`MAX_CYCLE`].
fn closed_walks(system: &GdsSystem) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack: Vec<Vec<usize>> = vec![vec![0]];
    while let Some(w) = stack.pop() {
        let last = *w.last().unwrap();
        let mut succ: Vec<usize> = system.edges.iter().filter(|e| e.from == last).map(|e| e.to).collect();
        succ.sort_unstable();
        for s in succ.into_iter().rev() {
            if s == 0 {
                out.push(w.clone());
            }
            if w.len() < MAX_CYCLE {
                let mut next = w.clone();
                next.push(s);
                stack.push(next);
            }
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out.dedup();
    out
}

pub fn subsystem_stats(map: &RationalMap, system: &GdsSystem) -> Result<SubsystemStats> {
    if system.iterate != 1 {
        return Err(Error::Precondition("schedules need subsystems of f itself (iterate 1)".into()));
    }
    let (root, chi_eq, entropy) = equilibrium(system);
    let mut best: Option<(f64, Vec<usize>, Vec<Complex64>, Vec<f64>)> = None;
    for walk in closed_walks(system) {
        let pts = cycle_orbit(map, system, &walk)?;
        let vals: Vec<f64> = pts.iter().map(|&z| log_deriv(map, z)).collect();
        let chi = vals.iter().sum::<f64>() / vals.len() as f64;
        if best.as_ref().map_or(true, |b| (chi - chi_eq).abs() < (b.0 - chi_eq).abs() - 1e-12) {
            best = Some((chi, walk, pts, vals));
        }
    }
    let (chi, cycle, cycle_points, cycle_values) =
        best.ok_or_else(|| Error::Precondition("vertex 0 lies on no cycle".into()))?;
    let cycle_refs = cycle.iter().zip(&cycle_points).map(|(&v, &q)| vertex_ref(system, v, q)).collect();
    Ok(SubsystemStats {
        chi_equilibrium: chi_eq,
        entropy,
        dimension: root,
        chi,
        cycle,
        cycle_points,
        cycle_refs,
        cycle_values,
    })
}

fn shortest_path(system: &GdsSystem, from: usize, to: usize) -> Option<Vec<usize>> {
    let n = system.vertices.len();
    let mut prev = vec![usize::MAX; n];
    let mut queue = VecDeque::from([from]);
    prev[from] = from;
    while let Some(v) = queue.pop_front() {
        if v == to {
            let mut path = vec![to];
            let mut c = to;
            while c != from {
                c = prev[c];
                path.push(c);
            }
            path.reverse();
            return Some(path);
        }
        let mut succ: Vec<usize> = system.edges.iter().filter(|e| e.from == v).map(|e| e.to).collect();
        succ.sort_unstable();
        for s in succ {
            if prev[s] == usize::MAX {
                prev[s] = v;
                queue.push_back(s);
            }
        }
    }
    None
}

/// Forward transition from vertex 0 of `sys_from` to the anchor of vertex
/// 0 of `sys_to`.
fn bridge_segment(
    map: &RationalMap,
    systems: &[GdsSystem],
    from: usize,
    to: usize,
    search_depth: usize,
) -> Result<BridgeSegment> {
    let (a, b) = (&systems[from], &systems[to]);
    let res = bridge(a, b, map, search_depth).map_err(|e| match e {
        Error::BridgeNotFound { .. } => Error::MissingBridge { from, to },
        other => other,
    })?;
    let merged = &res.system;
    // paths[1] runs backward from sys_to's anchor into sys_from
    let path = &res.spec.paths[1];
    let t = path.len() - 1;
    let exit = path[t];
    let exit_vertex = (0..res.offsets[1])
        .find(|&v| merged.vertices[v].contains(exit))
        .ok_or_else(|| Error::Precondition("bridge endpoint outside the source system".into()))?;
    if res.spec.shrink_depth > 0 && a.vertices.len() > 1 {
        return Err(Error::Precondition(format!(
            "bridge {from}->{to} needed refinement; schedules support that only for single-vertex subsystems"
        )));
    }
    let exit_vertex = if a.vertices.len() == 1 { 0 } else { exit_vertex };
    let walk = shortest_path(a, 0, exit_vertex).ok_or(Error::MissingBridge { from, to })?;
    let mut refs: Vec<StepRef> = walk[..walk.len() - 1]
        .iter()
        .map(|&v| vertex_ref(a, v, a.vertices[v].center))
        .collect();
    for s in (1..=t).rev() {
        let y = path[s];
        let disk = merged
            .vertices
            .iter()
            .filter(|v| v.contains(y))
            .min_by(|p, q| p.radius.partial_cmp(&q.radius).unwrap())
            .copied()
            .ok_or_else(|| Error::Precondition("bridge point outside every disk".into()))?;
        refs.push(StepRef { point: y, center: disk.center, radius: disk.radius });
    }
    let log_w = path[1..].iter().map(|&y| log_deriv(map, y)).fold(f64::INFINITY, f64::min);
    let n1 = res.offsets[1];
    let n2 = merged.vertices.len();
    let n_parts = n1 + b.vertices.len();
    let bridge_distortion: f64 = merged
        .edges
        .iter()
        .filter(|e| e.from >= n_parts || e.to >= n_parts || ((e.from < n1) != (e.to < n1)))
        .map(|e| e.distortion.ln())
        .sum();
    debug_assert!(n2 >= n_parts);
    Ok(BridgeSegment {
        from,
        to,
        refs,
        log_w,
        log_distortion: bridge_distortion + a.max_distortion().ln(),
    })
}

/// Schedule of `depth` blocks cycling through `subsystems`, with
/// `eps_i = eps_seed / 2^i` and minimal `n_i` satisfying the growth predicate.
pub fn build_schedule(
    map: &RationalMap,
    subsystems: &[GdsSystem],
    eps_seed: f64,
    depth: usize,
    opts: &ScheduleOptions,
) -> Result<WSchedule> {
    if subsystems.is_empty() {
        return Err(Error::Precondition("at least one subsystem is required".into()));
    }
    if !(eps_seed > 0.0) || !(opts.c > 0.0) {
        return Err(Error::Precondition("eps seed and C must be positive".into()));
    }
    let stats: Vec<SubsystemStats> = subsystems.iter().map(|s| subsystem_stats(map, s)).collect::<Result<_>>()?;
    let s = subsystems.len();
    let mut bridges = Vec::new();
    let mut bridge_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    if s > 1 {
        for i in 0..depth.min(s) {
            let (from, to) = (i % s, (i + 1) % s);
            if let std::collections::btree_map::Entry::Vacant(e) = bridge_index.entry((from, to)) {
                e.insert(bridges.len());
                bridges.push(bridge_segment(map, subsystems, from, to, opts.search_depth)?);
            }
        }
    }
    let log_w_max = stats
        .iter()
        .flat_map(|st| st.cycle_values.iter().copied())
        .chain(bridges.iter().flat_map(|b| b.refs.iter().map(|r| log_deriv(map, r.point))))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut blocks = Vec::with_capacity(depth);
    let mut m: u128 = 0;
    let mut prev_chi: f64 = 0.0;
    for i in 0..depth {
        let sub = i % s;
        let st = &stats[sub];
        let a = st.period() as u128;
        let eps = eps_seed / 2f64.powi(i as i32 + 1);
        let next = (i + 1) % s;
        let bidx = if next != sub { bridge_index.get(&(sub, next)).copied() } else { None };
        let (b, bridge_term, log_k) = match bidx {
            Some(k) => {
                let br = &bridges[k];
                let b = br.refs.len() as f64;
                (br.refs.len() as u128, b * br.log_w.abs().max(log_w_max.abs()), br.log_distortion.max(0.0))
            }
            None => (0, 0.0, subsystems[sub].max_distortion().ln()),
        };
        let rhs = opts.c * (m as f64 * (prev_chi.abs() + 1.0) + bridge_term + log_k);
        let n_f = (rhs / (a as f64 * eps)).ceil().max(1.0);
        if !(n_f < u128::MAX as f64 / 4.0) {
            return Err(Error::ScheduleOverflow { block: i });
        }
        let mut n = n_f as u128;
        // float rounding of the bound
        while (a as f64) * (n as f64) * eps < rhs {
            n += 1;
        }
        m = n
            .checked_mul(a)
            .and_then(|x| x.checked_add(b))
            .and_then(|x| x.checked_add(m))
            .ok_or(Error::ScheduleOverflow { block: i })?;
        blocks.push(Block {
            subsystem: sub,
            n,
            bridge: bidx,
            b,
            eps,
            checkpoint: m,
            predicate_lhs: a as f64 * n as f64 * eps,
            predicate_rhs: rhs,
        });
        prev_chi = st.chi;
    }
    Ok(WSchedule { c: opts.c, eps_seed, subsystems: stats, bridges, blocks, log_w_max })
}

enum Piece {
    /// Values in backward order.
    Explicit(Vec<f64>),
    Run(Vec<f64>, u128),
}

/// Orbit of the point whose itinerary follows the schedule, built by
/// backward iteration from the cycle point of the final subsystem.
///
/// Once the backward orbit agrees with the block cycle to double
/// precision, the remaining turns of that block are stored as one run.
pub fn synthesize_trace(schedule: &WSchedule, map: &RationalMap) -> Result<OrbitTrace> {
    let end = schedule.final_subsystem();
    let mut x = schedule.subsystems[end].cycle_points[0];
    let mut pieces: Vec<Piece> = Vec::new();
    let mut buf: Vec<f64> = Vec::new();
    for blk in schedule.blocks.iter().rev() {
        if let Some(k) = blk.bridge {
            for r in schedule.bridges[k].refs.iter().rev() {
                x = pick_preimage(map, x, r)?;
                buf.push(log_deriv(map, x));
            }
        }
        let st = &schedule.subsystems[blk.subsystem];
        let q0 = st.cycle_points[0];
        let mut turns: u128 = 0;
        while turns < blk.n {
            for r in st.cycle_refs.iter().rev() {
                x = pick_preimage(map, x, r)?;
                buf.push(log_deriv(map, x));
            }
            turns += 1;
            if (x - q0).norm() <= 1e-14 * (1.0 + q0.norm()) && turns < blk.n {
                pieces.push(Piece::Explicit(std::mem::take(&mut buf)));
                pieces.push(Piece::Run(st.cycle_values.clone(), blk.n - turns));
                x = q0;
                break;
            }
            if turns >= MAX_EXPLICIT_TURNS {
                return Err(Error::Degraded(format!(
                    "backward orbit did not settle on the cycle of subsystem {}",
                    blk.subsystem
                )));
            }
        }
    }
    pieces.push(Piece::Explicit(buf));
    let mut trace = OrbitTrace::new(SpherePoint::Finite(x));
    for p in pieces.into_iter().rev() {
        match p {
            Piece::Explicit(mut v) => {
                v.reverse();
                trace.push_run(v, 1);
            }
            Piece::Run(pattern, reps) => trace.push_run(pattern, reps),
        }
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub block: usize,
    pub m: u128,
    pub ell: f64,
    pub target: f64,
    pub eps: f64,
    pub residual: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interpolation {
    pub from: u128,
    pub to: u128,
    /// `max |l_n - (m_i chi_i + (n - m_i) chi_{i+1}) / n|` on the range.
    pub max_residual: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Lower bounds for the Hausdorff and packing dimensions of the level set
/// carrying the synthesized point; certified by construction, not measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub hausdorff_lower_bound: f64,
    pub packing_lower_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub checkpoints: Vec<Checkpoint>,
    pub interpolations: Vec<Interpolation>,
    /// First step of the tail used for the liminf/limsup estimates.
    pub tail_from: u128,
    pub liminf: f64,
    pub limsup: f64,
    pub certificate: Certificate,
    pub all_passed: bool,
}

impl OscillationReport {
    pub fn failed_checkpoints(&self) -> usize {
        self.checkpoints.iter().filter(|c| !c.passed).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn verify_oscillation(trace: &OrbitTrace, schedule: &WSchedule) -> OscillationReport {
    let blocks = &schedule.blocks;
    let chi = |i: usize| schedule.subsystems[blocks[i].subsystem].chi;
    let mut checkpoints = Vec::new();
    for (i, blk) in blocks.iter().enumerate() {
        if blk.checkpoint > trace.len() || blk.checkpoint == 0 {
            continue;
        }
        let ell = trace.running_avg(blk.checkpoint);
        let residual = (ell - chi(i)).abs();
        checkpoints.push(Checkpoint {
            block: i,
            m: blk.checkpoint,
            ell,
            target: chi(i),
            eps: blk.eps,
            residual,
            passed: residual < 2.0 * blk.eps,
        });
    }
    let mut interpolations = Vec::new();
    for i in 0..blocks.len().saturating_sub(1) {
        let (mi, mj) = (blocks[i].checkpoint, blocks[i + 1].checkpoint);
        let a = mi as f64 * (chi(i) - chi(i + 1));
        if let Some((lo, hi)) = trace.deviation_extremes(mi + 1, mj.saturating_sub(1), a, chi(i + 1)) {
            let max_residual = lo.abs().max(hi.abs());
            let bound = 2.0 * (blocks[i].eps + blocks[i + 1].eps);
            interpolations.push(Interpolation { from: mi, to: mj, max_residual, bound, passed: max_residual < bound });
        }
    }
    let k0 = blocks.len().div_ceil(2);
    let tail_from = if k0 == 0 { 1 } else { blocks[k0 - 1].checkpoint.max(1) };
    let (liminf, limsup) = trace.running_avg_extremes(tail_from).unwrap_or((f64::NAN, f64::NAN));
    let dims: Vec<f64> = blocks.iter().map(|b| schedule.subsystems[b.subsystem].dimension).collect();
    let certificate = Certificate {
        hausdorff_lower_bound: if dims.is_empty() { 0.0 } else { dims.iter().cloned().fold(f64::INFINITY, f64::min) },
        packing_lower_bound: dims.iter().cloned().fold(0.0, f64::max),
    };
    let all_passed = checkpoints.iter().all(|c| c.passed) && interpolations.iter().all(|c| c.passed);
    OscillationReport { checkpoints, interpolations, tail_from, liminf, limsup, certificate, all_passed }
}
