//! Config-file descriptors and parsing helpers.
//!
//! Files may be JSON or TOML (decided by extension); unknown keys are
//! rejected. Flags take precedence over file values, which take precedence
//! over defaults.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use plaplab::capacity::{CompactSet, Domain};
use plaplab::geom::{Ball, Point};
use plaplab::grid::Grid;
use plaplab::measure::{PowerSegment, RadonMeasure, SurfaceGenerator};
use plaplab::thinness::{ball_chain, RegionSet};
use plaplab::{Error, Result};

/// Loads a JSON or TOML file into a deserializable type.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
        _ => serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
    }
}

/// Parses a comma-separated list of floats ("-0.5,0.5,1").
pub fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number '{tok}': {e}")))
        })
        .collect()
}

/// Measure description: either explicit data or a built-in generator.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureConfig {
    Atomic {
        points: Vec<Point>,
        weights: Vec<f64>,
    },
    Radial {
        center: Point,
        segments: Vec<PowerSegment>,
    },
    Surface {
        #[serde(default)]
        points: Vec<Point>,
        #[serde(default)]
        weights: Vec<f64>,
        #[serde(default)]
        generator: Option<SurfaceGenerator>,
    },
    Grid {
        grid: Grid,
        density: Vec<f64>,
    },
}

impl MeasureConfig {
    pub fn build(self) -> Result<RadonMeasure> {
        match self {
            MeasureConfig::Atomic { points, weights } => RadonMeasure::atomic(points, weights),
            MeasureConfig::Radial { center, segments } => RadonMeasure::radial(center, segments),
            MeasureConfig::Surface { points, weights, generator } => {
                if let Some(g) = generator {
                    if !points.is_empty() {
                        return Err(Error::Config(
                            "surface measure: give either points or a generator, not both".into(),
                        ));
                    }
                    g.build()
                } else {
                    RadonMeasure::surface(points, weights)
                }
            }
            MeasureConfig::Grid { grid, density } => RadonMeasure::grid_density(grid, density),
        }
    }
}

/// Region description, including the parametric ball-chain family
/// `B(x0 + 0.75 * 2^-i * dir, c * 2^(-a i))`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegionConfig {
    BallUnion {
        balls: Vec<Ball>,
    },
    HalfSpace {
        normal: Point,
        offset: f64,
    },
    BallChain {
        x0: Point,
        direction: Point,
        a: f64,
        c: f64,
        i_min: i32,
        i_max: i32,
    },
}

impl RegionConfig {
    pub fn build(self) -> Result<RegionSet> {
        match self {
            RegionConfig::BallUnion { balls } => Ok(RegionSet::BallUnion { balls }),
            RegionConfig::HalfSpace { normal, offset } => {
                Ok(RegionSet::HalfSpace { normal, offset })
            }
            RegionConfig::BallChain { x0, direction, a, c, i_min, i_max } => {
                ball_chain(&x0, &direction, a, c, i_min, i_max)
            }
        }
    }
}

/// Condenser description by named shapes.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CondenserConfig {
    pub k: CompactSet,
    pub omega: Domain,
    /// Grid spacing; the grid covers the domain bounds.
    pub h: f64,
}

/// Sampled-field CSV dump: a header line `n,<origin...>,h,<dims...>`
/// followed by one value per line in row-major order (last axis fastest).
pub fn load_field_csv(path: &Path) -> Result<plaplab::conformal::VertexGrid> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Config("empty field dump".into()))?;
    let head = parse_floats(header)?;
    if head.len() < 2 {
        return Err(Error::Config("field header needs n, origin, h, dims".into()));
    }
    let n = head[0] as usize;
    if head.len() != 2 + 2 * n {
        return Err(Error::Config(format!(
            "field header must hold n, {n} origin coords, h, {n} dims"
        )));
    }
    let origin = head[1..1 + n].to_vec();
    let h = head[1 + n];
    let dims: Vec<usize> = head[2 + n..].iter().map(|v| *v as usize).collect();
    let expected: usize = dims.iter().product();
    let values: Vec<f64> = lines
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad field value '{l}': {e}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::Config(format!(
            "field dump holds {} values, dims require {expected}",
            values.len()
        )));
    }
    Ok(plaplab::conformal::VertexGrid { origin, h, dims, values })
}
