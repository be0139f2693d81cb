//! Nonnegative finite Radon measures with ball-mass queries.
//!
//! Four representations cover the laboratory's needs: atomic measures,
//! radially symmetric measures given by their cumulative ball mass around a
//! center, sampled surface measures approximating m-dimensional Hausdorff
//! measure, and grid densities. Ball queries use the closed-ball convention
//! throughout; the Wolff integrand only sees the monotone envelope of
//! `t -> mu(B(x,t))`, so the convention is harmless and fixed once here.

use serde::{Deserialize, Serialize};

use crate::geom::{dist, Ball, Point};
use crate::grid::Grid;
use crate::{Error, Result};

/// One piece of a piecewise power-law cumulative function:
/// `F(t) = coeff * t^exponent` on `[t_start, t_end)` where `t_start` is the
/// previous piece's `t_end` (the first piece starts at 0). Beyond the last
/// piece the cumulative function is constant at its final value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSegment {
    pub t_end: f64,
    pub coeff: f64,
    pub exponent: f64,
}

/// A nonnegative finite Radon measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RadonMeasure {
    /// Finite sum of weighted Dirac atoms.
    Atomic { points: Vec<Point>, weights: Vec<f64> },
    /// Rotationally symmetric measure around `center` with cumulative ball
    /// mass `t -> mu(B(center, t))` given piecewise.
    Radial { center: Point, segments: Vec<PowerSegment> },
    /// Weighted point sample approximating an m-dimensional surface measure.
    Surface { points: Vec<Point>, weights: Vec<f64> },
    /// Piecewise-constant density on a grid.
    Grid { grid: Grid, density: Vec<f64> },
}

impl RadonMeasure {
    /// Zero measure in dimension `n` (an empty atomic sum).
    pub fn zero(_n: usize) -> Self {
        RadonMeasure::Atomic { points: vec![], weights: vec![] }
    }

    pub fn atomic(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidParameter("atoms and weights length mismatch".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) && !weights.is_empty() {
            return Err(Error::InvalidParameter("atom weights must be positive".into()));
        }
        Ok(RadonMeasure::Atomic { points, weights })
    }

    pub fn dirac(point: Point, weight: f64) -> Result<Self> {
        Self::atomic(vec![point], vec![weight])
    }

    pub fn radial(center: Point, segments: Vec<PowerSegment>) -> Result<Self> {
        validate_segments(&segments)?;
        Ok(RadonMeasure::Radial { center, segments })
    }

    /// Single power law `F(t) = coeff * t^m` capped at `t_cap`.
    pub fn radial_power_law(center: Point, coeff: f64, m: f64, t_cap: f64) -> Result<Self> {
        Self::radial(center, vec![PowerSegment { t_end: t_cap, coeff, exponent: m }])
    }

    pub fn surface(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::InvalidParameter("surface sample needs matching nonempty arrays".into()));
        }
        Ok(RadonMeasure::Surface { points, weights })
    }

    pub fn grid_density(grid: Grid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.n_cells() {
            return Err(Error::InvalidParameter("density length must equal cell count".into()));
        }
        if density.iter().any(|d| *d < 0.0) {
            return Err(Error::InvalidParameter("density must be nonnegative".into()));
        }
        Ok(RadonMeasure::Grid { grid, density })
    }

    pub fn dim(&self) -> usize {
        match self {
            RadonMeasure::Atomic { points, .. } | RadonMeasure::Surface { points, .. } => {
                points.first().map(|p| p.len()).unwrap_or(0)
            }
            RadonMeasure::Radial { center, .. } => center.len(),
            RadonMeasure::Grid { grid, .. } => grid.dim(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            RadonMeasure::Atomic { weights, .. } | RadonMeasure::Surface { weights, .. } => {
                weights.iter().sum()
            }
            RadonMeasure::Radial { segments, .. } => segments
                .last()
                .map(|s| s.coeff * s.t_end.powf(s.exponent))
                .unwrap_or(0.0),
            RadonMeasure::Grid { grid, density } => {
                density.iter().sum::<f64>() * grid.cell_volume()
            }
        }
    }
}

fn validate_segments(segments: &[PowerSegment]) -> Result<()> {
    let mut t_prev = 0.0;
    let mut f_prev = 0.0f64;
    for (i, s) in segments.iter().enumerate() {
        if !(s.t_end > t_prev) {
            return Err(Error::InvalidParameter("segment breakpoints must increase".into()));
        }
        if s.coeff < 0.0 || s.exponent < 0.0 {
            return Err(Error::InvalidParameter("segments must be nondecreasing".into()));
        }
        if i == 0 && s.exponent == 0.0 && s.coeff > 0.0 {
            return Err(Error::InvalidParameter("cumulative must vanish at t = 0".into()));
        }
        let f_start = s.coeff * t_prev.powf(s.exponent);
        if f_start + 1e-14 * (1.0 + f_prev.abs()) < f_prev {
            return Err(Error::InvalidParameter("cumulative must be nondecreasing at breakpoints".into()));
        }
        t_prev = s.t_end;
        f_prev = s.coeff * s.t_end.powf(s.exponent);
    }
    Ok(())
}

/// Evaluates the cumulative `F(t)` of a radial measure at `t >= 0`.
fn segments_cumulative(segments: &[PowerSegment], t: f64) -> f64 {
    if t <= 0.0 || segments.is_empty() {
        return 0.0;
    }
    for s in segments {
        if t < s.t_end {
            return s.coeff * t.powf(s.exponent);
        }
    }
    let last = segments.last().unwrap();
    last.coeff * last.t_end.powf(last.exponent)
}

/// Mass of the closed ball `b` under `mu`.
///
/// Exact for atomic measures and concentric radial queries; a weight sum of
/// enclosed samples for surface samples; a Riemann sum (cell centers inside
/// the ball) for grid densities. For off-center radial queries the
/// rotationally symmetric interpretation is integrated numerically against
/// spherical-cap fractions.
pub fn ball_mass(mu: &RadonMeasure, b: &Ball) -> f64 {
    match mu {
        RadonMeasure::Atomic { points, weights } | RadonMeasure::Surface { points, weights } => {
            let r2 = b.radius * b.radius;
            let mut m = 0.0;
            for (p, w) in points.iter().zip(weights) {
                if crate::geom::dist_sq(p, &b.center) <= r2 {
                    m += w;
                }
            }
            m
        }
        RadonMeasure::Radial { center, segments } => {
            let d = dist(center, &b.center);
            if d <= 1e-14 * (1.0 + b.radius) {
                segments_cumulative(segments, b.radius)
            } else {
                radial_off_center_mass(segments, d, b.radius, center.len())
            }
        }
        RadonMeasure::Grid { grid, density } => {
            let strides = grid.strides();
            let vol = grid.cell_volume();
            let r2 = b.radius * b.radius;
            let mut m = 0.0;
            let mut c = vec![0.0; grid.dim()];
            for (flat, rho) in density.iter().enumerate() {
                if *rho == 0.0 {
                    continue;
                }
                grid.center_into(flat, &strides, &mut c);
                if crate::geom::dist_sq(&c, &b.center) <= r2 {
                    m += rho * vol;
                }
            }
            m
        }
    }
}

/// Fraction of the sphere of radius `s` (centered at the measure's center)
/// covered by a ball of radius `t` whose center is at distance `d`.
fn cap_fraction(n: usize, s: f64, d: f64, t: f64) -> f64 {
    if d + s <= t {
        return 1.0;
    }
    if (d - s).abs() >= t || s <= 0.0 {
        return if s <= 0.0 && d <= t { 1.0 } else { 0.0 };
    }
    let cos_theta = ((s * s + d * d - t * t) / (2.0 * s * d)).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    // fraction = int_0^theta sin^(n-2) / int_0^pi sin^(n-2)
    let m = (n - 2) as i32;
    let full = sin_power_integral(std::f64::consts::PI, m);
    sin_power_integral(theta, m) / full
}

/// `int_0^x sin^m(t) dt` by fixed Gauss-Legendre panels (m small).
fn sin_power_integral(x: f64, m: i32) -> f64 {
    // 5-point Gauss-Legendre on 16 panels is far below the quadrature
    // tolerances used elsewhere.
    const GL_X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const GL_W: [f64; 5] = [
        0.236_926_885_056_189,
        0.478_628_670_499_366,
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
    ];
    let panels = 16;
    let dx = x / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * dx;
        for (xi, wi) in GL_X.iter().zip(&GL_W) {
            let t = mid + 0.5 * dx * xi;
            acc += wi * t.sin().powi(m);
        }
    }
    acc * 0.5 * dx
}

fn radial_off_center_mass(segments: &[PowerSegment], d: f64, t: f64, n: usize) -> f64 {
    // mu(B) = int cap_fraction(s) dF(s). Spheres of radius s <= t - d lie
    // inside the ball (fraction 1), spheres with s >= d + t or s <= d - t
    // miss it (fraction 0); only s in (|d-t|, d+t) needs quadrature. Jumps
    // of F at segment breakpoints are handled exactly.
    let full_end = (t - d).max(0.0);
    let partial_lo = (d - t).abs();
    let partial_hi = d + t;
    let mut total = 0.0;
    let mut seg_start = 0.0;
    let mut f_prev = 0.0;
    for s in segments {
        let f_at = |r: f64| s.coeff * r.powf(s.exponent);
        // jump of F at the segment start
        let jump = f_at(seg_start) - f_prev;
        if jump > 0.0 {
            total += jump * cap_fraction(n, seg_start, d, t);
        }
        // fully covered continuous part
        let c1_hi = s.t_end.min(full_end);
        if c1_hi > seg_start {
            total += f_at(c1_hi) - f_at(seg_start);
        }
        // partially covered continuous part
        let lo = seg_start.max(partial_lo);
        let hi = s.t_end.min(partial_hi);
        if hi > lo && s.exponent > 0.0 && s.coeff > 0.0 {
            let steps = 256;
            let dx = (hi - lo) / steps as f64;
            let g = |r: f64| {
                s.coeff * s.exponent * r.powf(s.exponent - 1.0) * cap_fraction(n, r, d, t)
            };
            let mut acc = 0.0;
            for k in 0..steps {
                let a = lo + k as f64 * dx;
                let b = a + dx;
                acc += dx / 6.0 * (g(a) + 4.0 * g(0.5 * (a + b)) + g(b));
            }
            total += acc;
        }
        seg_start = s.t_end;
        f_prev = f_at(s.t_end);
    }
    total
}

/// A fast radial view of `t -> mu(B(x, t))` anchored at a fixed query point.
///
/// The Wolff quadrature asks for many masses at the same `x`; building the
/// sorted distance profile once makes each query `O(log N)` and exposes the
/// exact first-hitting radius and jump structure.
pub enum MassProfile {
    /// Step cumulative: `radii` sorted ascending with cumulative weights.
    Steps { radii: Vec<f64>, cumulative: Vec<f64> },
    /// Concentric closed-form cumulative.
    Segments { segments: Vec<PowerSegment> },
    /// Off-center radial measure: queries fall back to cap integration.
    RadialOffCenter { segments: Vec<PowerSegment>, d: f64, n: usize },
}

impl MassProfile {
    pub fn new(mu: &RadonMeasure, x: &[f64]) -> Self {
        match mu {
            RadonMeasure::Atomic { points, weights } | RadonMeasure::Surface { points, weights } => {
                let mut pairs: Vec<(f64, f64)> = points
                    .iter()
                    .zip(weights)
                    .map(|(p, w)| (dist(p, x), *w))
                    .collect();
                pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let mut radii = Vec::with_capacity(pairs.len());
                let mut cumulative = Vec::with_capacity(pairs.len());
                let mut acc = 0.0;
                for (r, w) in pairs {
                    acc += w;
                    radii.push(r);
                    cumulative.push(acc);
                }
                MassProfile::Steps { radii, cumulative }
            }
            RadonMeasure::Radial { center, segments } => {
                let d = dist(center, x);
                if d <= 1e-14 {
                    MassProfile::Segments { segments: segments.clone() }
                } else {
                    MassProfile::RadialOffCenter { segments: segments.clone(), d, n: center.len() }
                }
            }
            RadonMeasure::Grid { grid, density } => {
                let strides = grid.strides();
                let vol = grid.cell_volume();
                let mut pairs: Vec<(f64, f64)> = Vec::new();
                let mut c = vec![0.0; grid.dim()];
                for (flat, rho) in density.iter().enumerate() {
                    if *rho == 0.0 {
                        continue;
                    }
                    grid.center_into(flat, &strides, &mut c);
                    pairs.push((dist(&c, x), rho * vol));
                }
                pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let mut radii = Vec::with_capacity(pairs.len());
                let mut cumulative = Vec::with_capacity(pairs.len());
                let mut acc = 0.0;
                for (r, w) in pairs {
                    acc += w;
                    radii.push(r);
                    cumulative.push(acc);
                }
                MassProfile::Steps { radii, cumulative }
            }
        }
    }

    /// `mu(B(x, t))`, closed-ball convention.
    pub fn mass(&self, t: f64) -> f64 {
        match self {
            MassProfile::Steps { radii, cumulative } => {
                // count of radii <= t
                let k = radii.partition_point(|r| *r <= t);
                if k == 0 {
                    0.0
                } else {
                    cumulative[k - 1]
                }
            }
            MassProfile::Segments { segments } => segments_cumulative(segments, t),
            MassProfile::RadialOffCenter { segments, d, n } => {
                radial_off_center_mass(segments, *d, t, *n)
            }
        }
    }

    /// Largest radius below which the mass is exactly zero, when the profile
    /// exposes it (step profiles and concentric segment profiles do).
    pub fn first_hitting_radius(&self) -> Option<f64> {
        match self {
            MassProfile::Steps { radii, .. } => Some(radii.first().copied().unwrap_or(f64::INFINITY)),
            MassProfile::Segments { segments } => {
                let mut t_prev = 0.0;
                for s in segments {
                    if s.coeff > 0.0 {
                        return Some(t_prev);
                    }
                    t_prev = s.t_end;
                }
                Some(f64::INFINITY)
            }
            MassProfile::RadialOffCenter { segments, d, .. } => {
                // Support lives on spheres with radii in [s_lo, s_max]; the
                // hitting radius from distance d is the gap to that shell.
                let mut s_lo = None;
                let mut seg_start = 0.0;
                for s in segments {
                    if s.coeff > 0.0 {
                        s_lo = Some(seg_start);
                        break;
                    }
                    seg_start = s.t_end;
                }
                let s_lo = match s_lo {
                    Some(v) => v,
                    None => return Some(f64::INFINITY),
                };
                let s_max = segments.last().unwrap().t_end;
                if *d < s_lo {
                    Some(s_lo - d)
                } else if *d > s_max {
                    Some(d - s_max)
                } else {
                    Some(0.0)
                }
            }
        }
    }

    pub fn total(&self) -> f64 {
        match self {
            MassProfile::Steps { cumulative, .. } => cumulative.last().copied().unwrap_or(0.0),
            MassProfile::Segments { segments } | MassProfile::RadialOffCenter { segments, .. } => {
                segments
                    .last()
                    .map(|s| s.coeff * s.t_end.powf(s.exponent))
                    .unwrap_or(0.0)
            }
        }
    }
}

/// Least-squares growth exponent of `t -> mu(B(x0, t))` on geometric scales,
/// with the constant rescaled so `mu(B(x0,t)) <= C t^m` holds at every
/// sampled scale (envelope fit).
pub fn growth_exponent(
    mu: &RadonMeasure,
    x0: &[f64],
    t_min: f64,
    t_max: f64,
    n_scales: usize,
) -> Result<(f64, f64, f64)> {
    if !(t_min > 0.0 && t_min < t_max) {
        return Err(Error::InvalidParameter("need 0 < t_min < t_max".into()));
    }
    if n_scales < 4 {
        return Err(Error::InvalidParameter("need n_scales >= 4".into()));
    }
    let profile = MassProfile::new(mu, x0);
    let ratio = (t_max / t_min).powf(1.0 / (n_scales as f64 - 1.0));
    let mut logs: Vec<(f64, f64)> = Vec::new();
    let mut masses: Vec<(f64, f64)> = Vec::new();
    let mut t = t_min;
    for _ in 0..n_scales {
        let m = profile.mass(t);
        if m > 0.0 {
            logs.push((t.ln(), m.ln()));
            masses.push((t, m));
        }
        t *= ratio;
    }
    if logs.len() < 2 {
        return Err(Error::NoMassAtCenter);
    }
    let (slope, intercept, residual) = least_squares(&logs);
    // Envelope constant: smallest C with mass <= C t^slope at all scales.
    let mut c = intercept.exp();
    for (t, m) in &masses {
        c = c.max(m / t.powf(slope));
    }
    Ok((slope, c, residual))
}

/// Slope/intercept/RMS-residual of a least-squares line through `(x, y)`.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let slope = if denom.abs() < 1e-300 { 0.0 } else { (n * sxy - sx * sy) / denom };
    let intercept = (sy - slope * sx) / n;
    let mut rss = 0.0;
    for (x, y) in pts {
        let e = y - (slope * x + intercept);
        rss += e * e;
    }
    (slope, intercept, (rss / n).sqrt())
}

// ---------------------------------------------------------------------------
// Built-in surface generators
// ---------------------------------------------------------------------------

/// Descriptors for generated surface samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurfaceGenerator {
    /// Unit segment `[0, length]` on the first axis, offset to `base`.
    Segment { n: usize, length: f64, samples: usize },
    /// m-dimensional unit patch spanned by the first `m` axes.
    KPlanePatch { n: usize, m: usize, side: f64, samples_per_axis: usize },
    /// Self-similar dust on the first axis with contraction `ratio` and the
    /// natural weights `2^-depth`.
    CantorDust { n: usize, ratio: f64, depth: usize },
}

impl SurfaceGenerator {
    pub fn build(&self) -> Result<RadonMeasure> {
        match *self {
            SurfaceGenerator::Segment { n, length, samples } => {
                if samples == 0 || n == 0 {
                    return Err(Error::InvalidParameter("segment generator needs samples".into()));
                }
                let w = length / samples as f64;
                let points: Vec<Point> = (0..samples)
                    .map(|i| {
                        let mut p = vec![0.0; n];
                        p[0] = (i as f64 + 0.5) * length / samples as f64;
                        p
                    })
                    .collect();
                RadonMeasure::surface(points, vec![w; samples])
            }
            SurfaceGenerator::KPlanePatch { n, m, side, samples_per_axis } => {
                if m == 0 || m > n || samples_per_axis == 0 {
                    return Err(Error::InvalidParameter("bad k-plane-patch parameters".into()));
                }
                let total = samples_per_axis.pow(m as u32);
                let w = side.powi(m as i32) / total as f64;
                let mut points = Vec::with_capacity(total);
                for flat in 0..total {
                    let mut p = vec![0.0; n];
                    let mut rem = flat;
                    for d in 0..m {
                        let i = rem % samples_per_axis;
                        rem /= samples_per_axis;
                        p[d] = (i as f64 + 0.5) * side / samples_per_axis as f64;
                    }
                    points.push(p);
                }
                RadonMeasure::surface(points, vec![w; total])
            }
            SurfaceGenerator::CantorDust { n, ratio, depth } => {
                if !(ratio > 0.0 && ratio < 0.5) || n == 0 || depth == 0 || depth > 24 {
                    return Err(Error::InvalidParameter("bad cantor-dust parameters".into()));
                }
                let count = 1usize << depth;
                let seg_len = ratio.powi(depth as i32);
                let mut points = Vec::with_capacity(count);
                for code in 0..count {
                    // Each 1-bit selects the right child interval, which
                    // starts at (1 - ratio) of the current interval length.
                    let mut start = 0.0;
                    let mut len = 1.0;
                    for level in 0..depth {
                        if code >> (depth - 1 - level) & 1 == 1 {
                            start += (1.0 - ratio) * len;
                        }
                        len *= ratio;
                    }
                    let mut p = vec![0.0; n];
                    p[0] = start + 0.5 * seg_len;
                    points.push(p);
                }
                let w = 1.0 / count as f64;
                RadonMeasure::surface(points, vec![w; count])
            }
        }
    }
}
