//! Graph-directed systems of inverse branches on disjoint disks.
//!
//! An edge `k -> l` stands for an inverse branch `g` of `f^a` with
//! `g(U_l)` inside `U_k`. The branch is identified by its witness
//! `g(anchor_l)`; evaluating `g` elsewhere on `U_l` is done by pulling the
//! points back along the forward orbit of the witness.

use crate::error::{Error, Result};
use crate::map::RationalMap;
use crate::orbit::ordered_preimages;
use crate::pressure::{PressureCurve, PressureMethod};
use crate::pullback::{disk_offsets, forward_chain, pull_back_chain, CriticalData, Hull, Pullback};
use crate::spectrum::{legendre_spectrum, SpectrumCurve};
use crate::sphere::SpherePoint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Radius inflation applied to bridge disks.
pub const BRIDGE_THICKENING: f64 = 1.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vertex {
    pub center: Complex64,
    pub radius: f64,
    /// A point of the limit set inside the disk.
    pub anchor: Complex64,
}

impl Vertex {
    pub fn new(center: Complex64, radius: f64) -> Self {
        Vertex { center, radius, anchor: center }
    }

    pub fn with_anchor(mut self, anchor: Complex64) -> Self {
        self.anchor = anchor;
        self
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() < self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// `g(anchor_to)`, a point of `U_from`.
    pub witness: Complex64,
    /// `|(f^a)'(witness)|`.
    pub weight: f64,
    /// Sampled `sup |g'| / inf |g'|` on `U_to`.
    pub distortion: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdsSystem {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub iterate: usize,
}

// JSON layout: {vertices: [{c, r, anchor}], edges: [{from, to, witness, weight, distortion}], iterate}
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexRepr {
    c: [f64; 2],
    r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor: Option<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRepr {
    from: usize,
    to: usize,
    witness: [f64; 2],
    weight: f64,
    distortion: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemRepr {
    vertices: Vec<VertexRepr>,
    edges: Vec<EdgeRepr>,
    iterate: usize,
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn cplx(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

impl Serialize for GdsSystem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SystemRepr {
            vertices: self
                .vertices
                .iter()
                .map(|v| VertexRepr { c: pair(v.center), r: v.radius, anchor: Some(pair(v.anchor)) })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRepr {
                    from: e.from,
                    to: e.to,
                    witness: pair(e.witness),
                    weight: e.weight,
                    distortion: e.distortion,
                })
                .collect(),
            iterate: self.iterate,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GdsSystem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SystemRepr::deserialize(d)?;
        let n = r.vertices.len();
        if r.edges.iter().any(|e| e.from >= n || e.to >= n) {
            return Err(serde::de::Error::custom("edge refers to a missing vertex"));
        }
        Ok(GdsSystem {
            vertices: r
                .vertices
                .into_iter()
                .map(|v| Vertex { center: cplx(v.c), radius: v.r, anchor: cplx(v.anchor.unwrap_or(v.c)) })
                .collect(),
            edges: r
                .edges
                .into_iter()
                .map(|e| Edge {
                    from: e.from,
                    to: e.to,
                    witness: cplx(e.witness),
                    weight: e.weight,
                    distortion: e.distortion,
                })
                .collect(),
            iterate: r.iterate,
        })
    }
}

/// Result of pushing points of `U_to` through an edge's branch.
struct BranchImage {
    points: Vec<Complex64>,
    pullback: Pullback,
}

fn apply_branch(
    map: &RationalMap,
    crit: &CriticalData,
    witness: Complex64,
    iterate: usize,
    points: &[Complex64],
) -> Result<BranchImage> {
    let chain = forward_chain(map, witness, iterate)?;
    let end = chain[iterate];
    let offsets: Vec<Complex64> = points.iter().map(|p| p - end).collect();
    let pullback = pull_back_chain(map, crit, &chain, &offsets).map_err(|level| {
        Error::Separation(format!("branch through {witness} meets a critical point at level {level}"))
    })?;
    let points = pullback.offsets.iter().map(|o| chain[0] + o).collect();
    Ok(BranchImage { points, pullback })
}

fn disk_samples(v: &Vertex) -> Vec<Complex64> {
    disk_offsets(v.radius).into_iter().map(|o| v.center + o).collect()
}

fn log_deriv_along(map: &RationalMap, z: Complex64, iterate: usize) -> f64 {
    let mut s = 0.0;
    let mut w = z;
    for _ in 0..iterate {
        s += map.log_deriv_planar(w);
        w = map.eval(w);
    }
    s
}

/// Preimages of `z` under `f^a`, in lexicographic branch order.
fn iterated_preimages(map: &RationalMap, z: Complex64, a: usize) -> Result<Vec<Complex64>> {
    let mut level = vec![z];
    for _ in 0..a {
        let mut next = Vec::new();
        for p in level {
            next.extend(ordered_preimages(map, SpherePoint::Finite(p))?.iter().filter_map(|q| q.finite()));
        }
        level = next;
    }
    Ok(level)
}

impl GdsSystem {
    /// Builds an edge from its witness, measuring weight and distortion.
    pub fn make_edge(map: &RationalMap, vertices: &[Vertex], iterate: usize, from: usize, to: usize, witness: Complex64) -> Result<Edge> {
        let crit = CriticalData::of(map)?;
        let img = apply_branch(map, &crit, witness, iterate, &disk_samples(&vertices[to]))?;
        Ok(Edge {
            from,
            to,
            witness,
            weight: log_deriv_along(map, witness, iterate).exp(),
            distortion: img.pullback.distortion(),
        })
    }

    /// All edges `k -> l` for which an `a`-fold preimage of `anchor_l`
    /// lands in `U_k`. Two such preimages in one disk are an error.
    pub fn from_disks(map: &RationalMap, vertices: Vec<Vertex>, iterate: usize) -> Result<Self> {
        if iterate == 0 {
            return Err(Error::Precondition("iterate must be at least 1".into()));
        }
        let mut edges = Vec::new();
        for (l, vl) in vertices.iter().enumerate() {
            for y in iterated_preimages(map, vl.anchor, iterate)? {
                if let Some(k) = vertices.iter().position(|v| v.contains(y)) {
                    if edges.iter().any(|e: &Edge| e.from == k && e.to == l) {
                        return Err(Error::Separation(format!(
                            "two branches map U_{l} into U_{k}; shrink the disks"
                        )));
                    }
                    edges.push(Self::make_edge(map, &vertices, iterate, k, l, y)?);
                }
            }
        }
        edges.sort_by_key(|e| (e.from, e.to));
        Ok(GdsSystem { vertices, edges, iterate })
    }

    /// One disk around a repelling fixed point with its self-loop.
    pub fn loop_at(map: &RationalMap, p: Complex64, radius: f64) -> Result<Self> {
        let v = Vertex::new(p, radius).with_anchor(p);
        let sys = Self::from_disks(map, vec![v], 1)?;
        if sys.edges.len() != 1 {
            return Err(Error::Precondition(format!("{p} is not a fixed point isolated by radius {radius}")));
        }
        Ok(sys)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("gds system: {e}")))
    }

    fn successors(&self, k: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.from == k)
    }

    /// Largest sampled distortion over all edges.
    pub fn max_distortion(&self) -> f64 {
        self.edges.iter().map(|e| e.distortion).fold(1.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Closed vertex disks pairwise disjoint.
    pub ssc: bool,
    /// Every branch maps its target disk into its source disk.
    pub containment: bool,
    /// At most one edge per ordered pair.
    pub unique_edges: bool,
    /// Every vertex has in- and out-degree at least one.
    pub surjective: bool,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.ssc && self.containment && self.unique_edges && self.surjective
    }
}

pub fn validate_gds(system: &GdsSystem, map: &RationalMap) -> Result<ValidationReport> {
    let mut messages = Vec::new();
    let vs = &system.vertices;
    let mut ssc = true;
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            if (vs[i].center - vs[j].center).norm() <= vs[i].radius + vs[j].radius {
                ssc = false;
                messages.push(format!("disks {i} and {j} overlap"));
            }
        }
    }
    let crit = CriticalData::of(map)?;
    let mut containment = true;
    for e in &system.edges {
        match apply_branch(map, &crit, e.witness, system.iterate, &disk_samples(&vs[e.to])) {
            Ok(img) => {
                if let Some(p) = img.points.iter().find(|p| !vs[e.from].contains(**p)) {
                    containment = false;
                    messages.push(format!("branch {}->{} sends {p} outside U_{}", e.from, e.to, e.from));
                }
            }
            Err(err) => {
                containment = false;
                messages.push(format!("branch {}->{}: {err}", e.from, e.to));
            }
        }
    }
    let mut unique_edges = true;
    for (i, a) in system.edges.iter().enumerate() {
        if system.edges[i + 1..].iter().any(|b| a.from == b.from && a.to == b.to) {
            unique_edges = false;
            messages.push(format!("duplicate edge {}->{}", a.from, a.to));
        }
    }
    let mut surjective = !vs.is_empty();
    for k in 0..vs.len() {
        let out = system.edges.iter().any(|e| e.from == k);
        let inc = system.edges.iter().any(|e| e.to == k);
        if !out || !inc {
            surjective = false;
            messages.push(format!("vertex {k} has in-degree or out-degree zero"));
        }
    }
    Ok(ValidationReport { ssc, containment, unique_edges, surjective, messages })
}

/// Strongly connected components (Tarjan), each sorted, in discovery order.
pub fn strongly_connected_components(system: &GdsSystem) -> Vec<Vec<usize>> {
    let n = system.vertices.len();
    let adj: Vec<Vec<usize>> = (0..n).map(|k| system.successors(k).map(|e| e.to).collect()).collect();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut out = Vec::new();
    // iterative Tarjan: frames of (vertex, next child position)
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut frames = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = frames.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(&(u, _)) = frames.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out
}

/// Strong connectivity of the transition graph.
pub fn is_transitive(system: &GdsSystem) -> bool {
    let n = system.vertices.len();
    if n == 0 || system.edges.is_empty() {
        return false;
    }
    strongly_connected_components(system).len() == 1
}

/// Spectral radius of a nonnegative matrix by power iteration on
/// `M/s + I`, stopped when the Collatz-Wielandt bounds agree.
pub fn spectral_radius(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 0 {
        return 0.0;
    }
    let s = m.iter().map(|row| row.iter().sum::<f64>()).fold(0.0, f64::max);
    if s == 0.0 {
        return 0.0;
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut estimate = 0.0;
    for _ in 0..200_000 {
        let y: Vec<f64> = (0..n)
            .map(|i| x[i] + (0..n).map(|j| m[i][j] / s * x[j]).sum::<f64>())
            .collect();
        let ratios: Vec<f64> = (0..n).filter(|&i| x[i] > 0.0).map(|i| y[i] / x[i]).collect();
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm: f64 = y.iter().sum();
        x = y.iter().map(|v| v / norm).collect();
        estimate = 0.5 * (lo + hi);
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    s * (estimate - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsystemPressure {
    pub pressure: f64,
    /// `(1/a) |d| log(max distortion)`.
    pub error_bar: f64,
    /// Computed on the dominant strongly connected component.
    pub reducible: bool,
}

/// `(1/a) log rho(M)` with `M_{kl} = w_{kl}^{-d}`.
pub fn subsystem_pressure(system: &GdsSystem, d: f64) -> SubsystemPressure {
    let a = system.iterate as f64;
    let comps = strongly_connected_components(system);
    let n = system.vertices.len();
    let mut rho: f64 = 0.0;
    for comp in &comps {
        let idx = |v: usize| comp.iter().position(|&c| c == v);
        let mut m = vec![vec![0.0; comp.len()]; comp.len()];
        for e in &system.edges {
            if let (Some(i), Some(j)) = (idx(e.from), idx(e.to)) {
                // log space keeps extreme d from overflowing
                m[i][j] = (-d * e.weight.ln()).exp();
            }
        }
        rho = rho.max(spectral_radius(&m));
    }
    let reducible = comps.len() > 1 || n == 0;
    SubsystemPressure {
        pressure: rho.ln() / a,
        error_bar: d.abs() * system.max_distortion().ln() / a,
        reducible,
    }
}

pub fn subsystem_pressure_curve(system: &GdsSystem, grid: &[f64]) -> Result<PressureCurve> {
    let vals: Vec<SubsystemPressure> = grid.iter().map(|&d| subsystem_pressure(system, d)).collect();
    let mut curve = PressureCurve::new(
        grid.to_vec(),
        vals.iter().map(|v| v.pressure).collect(),
        vals.iter().map(|v| v.error_bar).collect(),
        PressureMethod::Gds,
        system.iterate,
    )?;
    if vals.iter().any(|v| v.reducible) {
        curve.warnings.push("system is reducible; pressure taken on the dominant component".into());
    }
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsystemSpectrum {
    pub pressure: PressureCurve,
    pub spectrum: SpectrumCurve,
    pub alpha_minus: f64,
    pub alpha_plus: f64,
}

pub fn subsystem_spectrum(system: &GdsSystem, d_grid: &[f64], alpha_grid: &[f64]) -> Result<SubsystemSpectrum> {
    let pressure = subsystem_pressure_curve(system, d_grid)?;
    let spectrum = legendre_spectrum(&pressure, alpha_grid)?;
    Ok(SubsystemSpectrum {
        alpha_minus: spectrum.alpha_minus,
        alpha_plus: spectrum.alpha_plus,
        pressure,
        spectrum,
    })
}

/// Admissible vertex words with `len` letters, in lexicographic order.
fn words(system: &GdsSystem, len: usize) -> Vec<Vec<usize>> {
    if len == 0 {
        return Vec::new();
    }
    let mut out: Vec<Vec<usize>> = (0..system.vertices.len()).map(|k| vec![k]).collect();
    for _ in 1..len {
        let mut next = Vec::new();
        for w in &out {
            let last = *w.last().unwrap();
            let mut succ: Vec<usize> = system.successors(last).map(|e| e.to).collect();
            succ.sort_unstable();
            for s in succ {
                let mut v = w.clone();
                v.push(s);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

fn edge_between(system: &GdsSystem, k: usize, l: usize) -> &Edge {
    system.edges.iter().find(|e| e.from == k && e.to == l).expect("admissible word")
}

/// `g_{w1 w2} o ... o g_{w(m-1) wm}` applied to points of `U_{wm}`.
fn compose_word(map: &RationalMap, crit: &CriticalData, system: &GdsSystem, word: &[usize], points: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut pts = points.to_vec();
    for w in word.windows(2).rev() {
        let e = edge_between(system, w[0], w[1]);
        pts = apply_branch(map, crit, e.witness, system.iterate, &pts)?.points;
    }
    Ok(pts)
}

/// Cylinder points `G_W(anchor_{last})` of all admissible words with
/// `depth` letters.
pub fn sample_limit_set(system: &GdsSystem, map: &RationalMap, depth: usize) -> Result<Vec<Complex64>> {
    let crit = CriticalData::of(map)?;
    let mut out = Vec::new();
    for w in words(system, depth) {
        let last = system.vertices[*w.last().unwrap()].anchor;
        out.push(compose_word(map, &crit, system, &w, &[last])?[0]);
    }
    Ok(out)
}

/// Refinement by words of `m` letters.
///
/// Vertex `W = (k1..km)` is the disk hull of `G_W(U_km)`, anchored at
/// `G_W(anchor_km)`; edges are the one-step extensions `W -> (k2..k(m+1))`
/// through `g_{k1 k2}`, whose witnesses sit one cylinder deeper. The
/// iterate is unchanged, so pressure per step is comparable across `m`.
pub fn refine(system: &GdsSystem, map: &RationalMap, m: usize) -> Result<GdsSystem> {
    if m == 0 {
        return Err(Error::Precondition("refinement depth must be at least 1".into()));
    }
    if m == 1 {
        return Ok(system.clone());
    }
    let crit = CriticalData::of(map)?;
    let ws = words(system, m);
    let mut vertices = Vec::with_capacity(ws.len());
    for w in &ws {
        let last = &system.vertices[*w.last().unwrap()];
        let mut pts = disk_samples(last);
        pts.push(last.anchor);
        let img = compose_word(map, &crit, system, w, &pts)?;
        let anchor = *img.last().unwrap();
        let hull = Hull::of(&img[..img.len() - 1]);
        vertices.push(Vertex { center: hull.center, radius: hull.radius, anchor });
    }
    let mut edges = Vec::new();
    for (i, w) in ws.iter().enumerate() {
        for (j, v) in ws.iter().enumerate() {
            if w[1..] == v[..m - 1] {
                let e = edge_between(system, w[0], w[1]);
                let witness = apply_branch(map, &crit, e.witness, system.iterate, &[vertices[j].anchor])?.points[0];
                edges.push(GdsSystem::make_edge(map, &vertices, system.iterate, i, j, witness)?);
            }
        }
    }
    let refined = GdsSystem { vertices, edges, iterate: system.iterate };
    let report = validate_gds(&refined, map)?;
    if !report.ssc {
        return Err(Error::Separation(format!(
            "refinement to depth {m} breaks disjointness: {}",
            report.messages.join("; ")
        )));
    }
    Ok(refined)
}

/// Anchors and backward paths of a bridge construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub anchors: [Complex64; 2],
    /// `paths[i][t] = y_{i,t}`, `y_{i,0} = anchors[i]`, `f(y_{i,t}) = y_{i,t-1}`.
    pub paths: [Vec<Complex64>; 2],
    /// Refinement depth applied to both inputs before bridging.
    pub shrink_depth: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BridgeResult {
    pub system: GdsSystem,
    pub spec: BridgeSpec,
    /// Vertex offsets of the two input systems inside the merged one.
    pub offsets: [usize; 2],
}

fn overlaps(a: &[Vertex], b: &[Vertex]) -> bool {
    a.iter().any(|u| b.iter().any(|v| (u.center - v.center).norm() <= u.radius + v.radius))
}

/// Shortest backward path from `p` into a disk of `target` (within 90% of
/// its radius) whose intermediate points avoid all disks and critical
/// points. Breadth-first in lexicographic branch order.
fn search_bridge(
    map: &RationalMap,
    crit: &CriticalData,
    p: Complex64,
    avoid: &[Vertex],
    target: &[Vertex],
    depth: usize,
) -> Result<Option<(Vec<Complex64>, usize)>> {
    let mut queue: VecDeque<Vec<Complex64>> = VecDeque::new();
    queue.push_back(vec![p]);
    while let Some(path) = queue.pop_front() {
        if path.len() > depth {
            continue;
        }
        let y = *path.last().unwrap();
        for q in ordered_preimages(map, SpherePoint::Finite(y))? {
            let Some(q) = q.finite() else { continue };
            if crit.points.iter().any(|c| (c - q).norm() < 1e-3) {
                continue;
            }
            let mut next = path.clone();
            next.push(q);
            if let Some(j) = target.iter().position(|v| (q - v.center).norm() < 0.9 * v.radius) {
                return Ok(Some((next, j)));
            }
            if avoid.iter().chain(target).any(|v| (q - v.center).norm() <= v.radius) {
                continue;
            }
            queue.push_back(next);
        }
    }
    Ok(None)
}

/// Bridge disks along `path` (excluding both ends) and the edges joining
/// the vertex `source` (containing `path[0]`) to `sink` (containing the
/// last point) through them. Vertex indices of new disks start at `base`.
fn bridge_chain(
    map: &RationalMap,
    crit: &CriticalData,
    vertices: &[Vertex],
    path: &[Complex64],
    source: usize,
    sink: usize,
    base: usize,
) -> Result<(Vec<Vertex>, Vec<(usize, usize, Complex64)>)> {
    let t = path.len() - 1;
    let mut new_vertices = Vec::new();
    let mut links = Vec::new();
    // image of the source disk, pulled one step at a time
    let mut region = disk_samples(&vertices[source]);
    let mut prev_index = source;
    for s in 1..=t {
        let img = apply_branch(map, crit, path[s], 1, &region)?;
        if s == t {
            links.push((sink, prev_index, path[s]));
            break;
        }
        let hull = Hull::of(&img.points);
        let v = Vertex {
            center: hull.center,
            radius: hull.radius * BRIDGE_THICKENING,
            anchor: path[s],
        };
        let idx = base + new_vertices.len();
        links.push((idx, prev_index, path[s]));
        new_vertices.push(v);
        region = disk_samples(&v);
        prev_index = idx;
    }
    Ok((new_vertices, links))
}

/// Merges two transitive systems through backward-orbit bridges.
pub fn bridge(sys1: &GdsSystem, sys2: &GdsSystem, map: &RationalMap, search_depth: usize) -> Result<BridgeResult> {
    if sys1.iterate != 1 || sys2.iterate != 1 {
        return Err(Error::Precondition("bridging is implemented for systems of f itself (iterate 1)".into()));
    }
    if overlaps(&sys1.vertices, &sys2.vertices) {
        return Err(Error::Precondition("the two systems have overlapping domains".into()));
    }
    for (i, s) in [sys1, sys2].iter().enumerate() {
        if !validate_gds(s, map)?.passed() || !is_transitive(s) {
            return Err(Error::Precondition(format!("input system {} is not valid and transitive", i + 1)));
        }
    }
    let crit = CriticalData::of(map)?;
    let mut last_error = String::new();
    for shrink in 0..6 {
        let a = refine(sys1, map, shrink + 1)?;
        let b = refine(sys2, map, shrink + 1)?;
        let p1 = a.vertices[0].anchor;
        let p2 = b.vertices[0].anchor;
        let Some((path1, j2)) = search_bridge(map, &crit, p1, &a.vertices, &b.vertices, search_depth)? else {
            return Err(Error::BridgeNotFound { depth: search_depth, detail: format!("no backward path from {p1}") });
        };
        let Some((path2, j1)) = search_bridge(map, &crit, p2, &b.vertices, &a.vertices, search_depth)? else {
            return Err(Error::BridgeNotFound { depth: search_depth, detail: format!("no backward path from {p2}") });
        };
        let n1 = a.vertices.len();
        let mut vertices: Vec<Vertex> = a.vertices.iter().chain(&b.vertices).copied().collect();
        let mut links = Vec::new();
        let (v1, l1) = bridge_chain(map, &crit, &vertices, &path1, 0, n1 + j2, vertices.len())?;
        vertices.extend(v1);
        links.extend(l1);
        let (v2, l2) = bridge_chain(map, &crit, &vertices, &path2, n1, j1, vertices.len())?;
        vertices.extend(v2);
        links.extend(l2);
        let mut edges: Vec<Edge> = a.edges.clone();
        edges.extend(b.edges.iter().map(|e| Edge { from: e.from + n1, to: e.to + n1, ..*e }));
        let mut ok = true;
        for (from, to, witness) in links {
            match GdsSystem::make_edge(map, &vertices, 1, from, to, witness) {
                Ok(e) => edges.push(e),
                Err(e) => {
                    ok = false;
                    last_error = e.to_string();
                }
            }
        }
        if !ok {
            continue;
        }
        let merged = GdsSystem { vertices, edges, iterate: 1 };
        let report = validate_gds(&merged, map)?;
        if report.passed() && is_transitive(&merged) {
            return Ok(BridgeResult {
                system: merged,
                spec: BridgeSpec { anchors: [p1, p2], paths: [path1, path2], shrink_depth: shrink },
                offsets: [0, n1],
            });
        }
        last_error = report.messages.join("; ");
    }
    Err(Error::BridgeNotFound { depth: search_depth, detail: format!("bridge disks never separated: {last_error}") })
}

/// Comparison of subsystem pressures with a reference curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub d: Vec<f64>,
    pub reference: Vec<f64>,
    /// `pressures[m][i]` for system `m` at `d[i]`.
    pub pressures: Vec<Vec<f64>>,
    /// Running `sup_{j <= m} P_j` at each `d`.
    pub running_sup: Vec<Vec<f64>>,
    /// `max_d |P_ref - P_m|` per system.
    pub gaps: Vec<f64>,
    /// `max_d |P_ref - sup_{j<=m} P_j|` per system.
    pub sup_gaps: Vec<f64>,
    /// Per system: `P_m <= P_ref + tol` on the whole grid.
    pub below_reference: Vec<bool>,
    /// Running sup never decreases (always true by construction; kept as a
    /// check on the bookkeeping).
    pub sup_monotone: bool,
    /// `gaps` is nonincreasing.
    pub gaps_decreasing: bool,
    pub alpha_minus: Vec<f64>,
    pub alpha_plus: Vec<f64>,
    /// `max |F_ref - F_m|` over alpha values finite for both.
    pub f_gaps: Vec<f64>,
}

impl ConvergenceReport {
    pub fn final_gap(&self) -> f64 {
        self.gaps.last().copied().unwrap_or(f64::INFINITY)
    }
}

pub fn convergence_report(systems: &[GdsSystem], reference: &PressureCurve, alpha_grid: &[f64]) -> Result<ConvergenceReport> {
    let d = reference.d.clone();
    let ref_spec = legendre_spectrum(reference, alpha_grid)?;
    let mut pressures = Vec::new();
    let mut running_sup: Vec<Vec<f64>> = Vec::new();
    let mut gaps = Vec::new();
    let mut sup_gaps = Vec::new();
    let mut below = Vec::new();
    let mut alpha_minus = Vec::new();
    let mut alpha_plus = Vec::new();
    let mut f_gaps = Vec::new();
    for sys in systems {
        let sub = subsystem_spectrum(sys, &d, alpha_grid)?;
        let p = sub.pressure.p.clone();
        let sup: Vec<f64> = match running_sup.last() {
            Some(prev) => prev.iter().zip(&p).map(|(a, b)| a.max(*b)).collect(),
            None => p.clone(),
        };
        gaps.push(p.iter().zip(&reference.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        sup_gaps.push(sup.iter().zip(&reference.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        below.push(
            (0..d.len()).all(|i| p[i] <= reference.p[i] + reference.err[i] + sub.pressure.err[i] + 1e-9),
        );
        alpha_minus.push(sub.alpha_minus);
        alpha_plus.push(sub.alpha_plus);
        let mut fg: f64 = 0.0;
        for (a, f) in sub.spectrum.finite_points() {
            let r = ref_spec.envelope_at(a);
            if r.is_finite() {
                fg = fg.max((r / a - f).abs());
            }
        }
        f_gaps.push(fg);
        pressures.push(p);
        running_sup.push(sup);
    }
    let sup_monotone = running_sup.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b >= a));
    let gaps_decreasing = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(ConvergenceReport {
        d,
        reference: reference.p.clone(),
        pressures,
        running_sup,
        gaps,
        sup_gaps,
        below_reference: below,
        sup_monotone,
        gaps_decreasing,
        alpha_minus,
        alpha_plus,
        f_gaps,
    })
}

/// System whose vertices are the connected components of the union of
/// `r`-balls around an expanding, roughly invariant sample.
pub fn gds_from_sample(map: &RationalMap, sample: &[Complex64], r: f64) -> Result<GdsSystem> {
    if sample.is_empty() || !(r > 0.0) {
        return Err(Error::Precondition("need a nonempty sample and r > 0".into()));
    }
    let min_expansion = sample.iter().map(|&z| map.log_deriv_planar(z)).fold(f64::INFINITY, f64::min);
    if !(min_expansion > 0.0) {
        return Err(Error::Precondition("sample is not expanding: min |f'| <= 1".into()));
    }
    // union-find on overlapping balls
    let n = sample.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut i = i;
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (sample[i] - sample[j]).norm() < 2.0 * r {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut order: Vec<usize> = roots.clone();
    order.sort_unstable();
    order.dedup();
    let mut vertices = Vec::new();
    for &root in &order {
        let members: Vec<Complex64> = (0..n).filter(|&i| roots[i] == root).map(|i| sample[i]).collect();
        let c = members.iter().sum::<Complex64>() / members.len() as f64;
        let radius = members.iter().map(|m| (m - c).norm()).fold(0.0, f64::max) + r;
        // anchor: the sample point nearest the center
        let anchor = *members
            .iter()
            .min_by(|a, b| (*a - c).norm().partial_cmp(&(*b - c).norm()).unwrap())
            .unwrap();
        vertices.push(Vertex { center: c, radius, anchor });
    }
    roots.clear();
    for i in 0..vertices.len() {
        for j in i + 1..vertices.len() {
            if (vertices[i].center - vertices[j].center).norm() <= vertices[i].radius + vertices[j].radius {
                return Err(Error::Separation(format!(
                    "component disks {i} and {j} overlap at r = {r}; use a smaller r"
                )));
            }
        }
    }
    let system = GdsSystem::from_disks(map, vertices, 1)?;
    let report = validate_gds(&system, map)?;
    if !report.containment {
        return Err(Error::Separation(format!("branches leave their components: {}", report.messages.join("; "))));
    }
    Ok(system)
}
