//! JSON experiment configuration.

use crate::error::{Error, Result};
use crate::gds::{GdsSystem, Vertex};
use crate::map::{MapSpec, RationalMap};
use crate::spectrum::linspace;
use crate::sphere::SpherePoint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;

/// Either an explicit sorted list or an evenly spaced range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range { from: f64, to: f64, count: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Range { from, to, count } => linspace(*from, *to, *count),
        }
    }

    fn check(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.values();
        if v.is_empty() {
            return Err(Error::Config(format!("{key}: grid is empty")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!("{key}: grid has a non-finite value")));
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("{key}: grid must be strictly increasing")));
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    #[default]
    Auto,
    Tree,
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureSection {
    pub d: Grid,
    #[serde(default)]
    pub method: MethodChoice,
    pub depth: usize,
    /// Tree base point `[re, im]`; defaults to a repelling fixed point.
    #[serde(default)]
    pub base: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    /// Defaults to 201 points spanning the slopes of the pressure curve.
    #[serde(default)]
    pub alpha: Option<Grid>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensusSection {
    pub y: [f64; 2],
    pub depth: usize,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSection {
    /// Forward orbit start; when absent an orbit in J is sampled by random
    /// backward iteration from `anchor` using the seed.
    #[serde(default)]
    pub start: Option<[f64; 2]>,
    #[serde(default)]
    pub anchor: Option<[f64; 2]>,
    pub length: usize,
    pub sigma: f64,
    #[serde(default)]
    pub census: Option<CensusSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSpec {
    pub point: [f64; 2],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskSpec {
    pub c: [f64; 2],
    pub r: f64,
    #[serde(default)]
    pub anchor: Option<[f64; 2]>,
}

/// How a subsystem is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    /// A repelling fixed point with one disk around it.
    Loop(LoopSpec),
    /// Disks; edges are found from preimages of the anchors.
    Disks {
        disks: Vec<DiskSpec>,
        #[serde(default = "one")]
        iterate: usize,
    },
    /// A full system in the JSON layout written by the `gds` command.
    System(GdsSystem),
    /// Components of `r`-balls around the periodic points of period
    /// `1..=max_period`.
    Sample { max_period: usize, r: f64 },
}

fn one() -> usize {
    1
}

fn cplx(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

impl SystemSpec {
    pub fn build(&self, map: &RationalMap) -> Result<GdsSystem> {
        match self {
            SystemSpec::Loop(l) => GdsSystem::loop_at(map, cplx(l.point), l.radius),
            SystemSpec::Disks { disks, iterate } => {
                let vs = disks
                    .iter()
                    .map(|d| Vertex::new(cplx(d.c), d.r).with_anchor(cplx(d.anchor.unwrap_or(d.c))))
                    .collect();
                GdsSystem::from_disks(map, vs, *iterate)
            }
            SystemSpec::System(s) => Ok(s.clone()),
            SystemSpec::Sample { max_period, r } => {
                let mut sample = Vec::new();
                for n in 1..=*max_period {
                    for (p, _) in crate::pressure::periodic_points(map, n, false)?.points {
                        if let Some(z) = p.finite() {
                            sample.push(z);
                        }
                    }
                }
                crate::gds::gds_from_sample(map, &sample, *r)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdsSection {
    pub system: SystemSpec,
    /// Refinement depths for the convergence report.
    #[serde(default)]
    pub refine: Vec<usize>,
    /// Tree depth of the reference pressure in the convergence report.
    #[serde(default = "default_reference_depth")]
    pub reference_depth: usize,
    #[serde(default)]
    pub d: Option<Grid>,
    /// Second system to bridge with the first.
    #[serde(default)]
    pub bridge_with: Option<SystemSpec>,
    #[serde(default = "default_search_depth")]
    pub search_depth: usize,
    /// Word length for the limit-set sample.
    #[serde(default = "default_sample_depth")]
    pub sample_depth: usize,
}

fn default_reference_depth() -> usize {
    12
}

fn default_search_depth() -> usize {
    12
}

fn default_sample_depth() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointwiseSection {
    pub x: [f64; 2],
    /// Lyapunov exponent at `x`; `null` for infinity.
    #[serde(default)]
    pub q: Option<f64>,
    pub delta: f64,
    pub n: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformalSection {
    pub d: f64,
    pub depth: usize,
    pub base: [f64; 2],
    /// Pressure at `d`; computed from a tree of the same depth if absent.
    #[serde(default)]
    pub pressure: Option<f64>,
    /// Number of unit-circle test arcs.
    #[serde(default)]
    pub arcs: Option<usize>,
    #[serde(default)]
    pub test_disks: Vec<DiskSpec>,
    #[serde(default)]
    pub pointwise: Option<PointwiseSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WmeasureSection {
    pub subsystems: Vec<SystemSpec>,
    pub eps_seed: f64,
    pub depth: usize,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_search_depth")]
    pub search_depth: usize,
    /// Replaces the computed block lengths (negative controls).
    #[serde(default)]
    pub override_lengths: Option<Vec<u128>>,
}

fn default_c() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub map: Option<MapSpec>,
    /// Map file, relative to the config file.
    #[serde(default)]
    pub map_file: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pressure: Option<PressureSection>,
    #[serde(default)]
    pub spectrum: Option<SpectrumSection>,
    #[serde(default)]
    pub orbit: Option<OrbitSection>,
    #[serde(default)]
    pub gds: Option<GdsSection>,
    #[serde(default)]
    pub conformal: Option<ConformalSection>,
    #[serde(default)]
    pub wmeasure: Option<WmeasureSection>,
    #[serde(skip)]
    pub dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!("version: expected {CONFIG_VERSION}, found {}", cfg.version)));
        }
        if cfg.map.is_some() && cfg.map_file.is_some() {
            return Err(Error::Config("map: give either `map` or `map_file`, not both".into()));
        }
        if let Some(p) = &cfg.pressure {
            p.d.check("pressure.d")?;
            if p.depth == 0 || p.depth > 22 {
                return Err(Error::Config("pressure.depth: must lie in 1..=22".into()));
            }
        }
        if let Some(Some(a)) = cfg.spectrum.as_ref().map(|s| &s.alpha) {
            a.check("spectrum.alpha")?;
        }
        if let Some(g) = &cfg.gds {
            if let Some(d) = &g.d {
                d.check("gds.d")?;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn map(&self) -> Result<RationalMap> {
        match (&self.map, &self.map_file) {
            (Some(spec), None) => RationalMap::from_spec(spec),
            (None, Some(file)) => {
                let path = self.dir.join(file);
                let text =
                    std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("map_file {}: {e}", path.display())))?;
                RationalMap::from_json(&text).map_err(|e| Error::Config(format!("map_file {}: {e}", path.display())))
            }
            _ => Err(Error::Config("map: missing; give `map` or `map_file`".into())),
        }
    }

    pub fn section<'a, T>(&self, s: &'a Option<T>, key: &str) -> Result<&'a T> {
        s.as_ref().ok_or_else(|| Error::Config(format!("missing `{key}` section")))
    }
}

pub fn point(p: [f64; 2]) -> SpherePoint {
    SpherePoint::Finite(cplx(p))
}
