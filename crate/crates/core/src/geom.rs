//! Shared geometric primitives: points, balls, unit-sphere constants,
//! deterministic direction sequences, and a small symmetric eigensolver.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A point in `R^n`, dimension carried at runtime.
pub type Point = Vec<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

pub fn sub(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(a: &[f64], c: f64) -> Point {
    a.iter().map(|x| c * x).collect()
}

/// Closed ball `{y : |y - center| <= radius}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> crate::Result<Self> {
        if !(radius > 0.0) {
            return Err(crate::Error::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dist_sq(x, &self.center) <= self.radius * self.radius
    }
}

/// Gamma function at integer or half-integer arguments, exact recursion.
pub fn gamma_half(twice_arg: u32) -> f64 {
    // twice_arg = 2a for Gamma(a); a in {1/2, 1, 3/2, ...}
    match twice_arg {
        0 => f64::INFINITY,
        1 => std::f64::consts::PI.sqrt(),
        2 => 1.0,
        m => (m as f64 / 2.0 - 1.0) * gamma_half(m - 2),
    }
}

/// Surface area of the unit sphere `S^{n-1}` in `R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half(n as u32)
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    unit_sphere_area(n) / n as f64
}

/// Deterministic RNG stream: one base seed, independent named substreams.
pub fn seeded_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    // FNV-1a fold of the stream name into the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x100_0000_01b3);
    for b in stream.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Radical-inverse (van der Corput) value of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

const HALTON_PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Low-discrepancy direction sequence on `S^{n-1}`.
///
/// Halton points in the unit cube are pushed to the sphere through the
/// Box-Muller map (pairs of coordinates to standard normals, then
/// normalization), and a seed-controlled rotation is applied so different
/// seeds explore differently rotated copies of the same sequence.
pub struct DirectionSequence {
    n: usize,
    rotation: Vec<Vec<f64>>,
    index: u64,
}

impl DirectionSequence {
    pub fn new(n: usize, seed: u64) -> Self {
        let rotation = random_rotation(n, seed);
        // Skip the degenerate all-zero leading Halton point.
        Self { n, rotation, index: 1 }
    }

    fn raw_direction(&self, i: u64) -> Point {
        let pairs = self.n.div_ceil(2);
        let mut z = Vec::with_capacity(self.n);
        for k in 0..pairs {
            let u1 = radical_inverse(i, HALTON_PRIMES[2 * k % HALTON_PRIMES.len()]).max(1e-12);
            let u2 = radical_inverse(i, HALTON_PRIMES[(2 * k + 1) % HALTON_PRIMES.len()]);
            let r = (-2.0 * u1.ln()).sqrt();
            let a = 2.0 * std::f64::consts::PI * u2;
            z.push(r * a.cos());
            if z.len() < self.n {
                z.push(r * a.sin());
            }
        }
        let nz = norm(&z);
        if nz < 1e-12 {
            let mut e = vec![0.0; self.n];
            e[0] = 1.0;
            return e;
        }
        z.iter().map(|v| v / nz).collect()
    }
}

impl Iterator for DirectionSequence {
    type Item = Point;

    fn next(&mut self) -> Option<Point> {
        let raw = self.raw_direction(self.index);
        self.index += 1;
        Some(mat_vec(&self.rotation, &raw))
    }
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Point {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Seeded orthogonal matrix built from two Householder reflections.
fn random_rotation(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded_rng(seed, "rotation");
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..2 {
        let mut v: Point = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nv = norm(&v);
        if nv < 1e-9 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        // H = I - 2 v v^T applied on the left.
        for row in m.iter_mut() {
            let c = 2.0 * dot(row, &v);
            axpy(row, -c, &v);
        }
    }
    m
}

/// Uniform point in the closed ball, from a seeded stream (rejection-free:
/// normal direction times a radius with the correct density).
pub fn sample_ball(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Point {
    let n = center.len();
    let mut z = Vec::with_capacity(n);
    while z.len() < n {
        let u1: f64 = rng.random_range(1e-12..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let a = 2.0 * std::f64::consts::PI * u2;
        z.push(r * a.cos());
        if z.len() < n {
            z.push(r * a.sin());
        }
    }
    let nz = norm(&z).max(1e-300);
    let u: f64 = rng.random_range(0.0f64..1.0);
    let rad = radius * u.powf(1.0 / n as f64);
    center
        .iter()
        .zip(&z)
        .map(|(c, zi)| c + rad * zi / nz)
        .collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
///
/// Intended for the small (n <= 12) curvature matrices used here.
pub fn symmetric_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let frob: f64 = m
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let tol = 1e-15 * frob.max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i][j].abs();
            }
        }
        if off < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < tol * 1e-2 {
                    continue;
                }
                let theta = 0.5 * (m[q][q] - m[p][p]) / m[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas_match_closed_forms() {
        assert!((unit_sphere_area(2) - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((unit_sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        // S^3 in R^4 has area 2 pi^2.
        assert!((unit_sphere_area(4) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn jacobi_recovers_diagonal_plus_rank_one() {
        // A = diag(1,2,3) + 0.1 * ones; eigenvalues via characteristic
        // polynomial cross-checked against a dense reference computed once.
        let a = vec![
            vec![1.1, 0.1, 0.1],
            vec![0.1, 2.1, 0.1],
            vec![0.1, 0.1, 3.1],
        ];
        let eig = symmetric_eigenvalues(&a);
        let trace: f64 = eig.iter().sum();
        assert!((trace - 6.3).abs() < 1e-12);
        // det(A) from cofactor expansion.
        let det = 1.1 * (2.1 * 3.1 - 0.01) - 0.1 * (0.1 * 3.1 - 0.01) + 0.1 * (0.01 - 0.21);
        let prod: f64 = eig.iter().product();
        assert!((prod - det).abs() < 1e-10);
        assert!(eig.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn directions_are_unit_and_deterministic() {
        let dirs1: Vec<Point> = DirectionSequence::new(4, 7).take(50).collect();
        let dirs2: Vec<Point> = DirectionSequence::new(4, 7).take(50).collect();
        assert_eq!(dirs1, dirs2);
        for d in &dirs1 {
            assert!((norm(d) - 1.0).abs() < 1e-9);
        }
        let other: Vec<Point> = DirectionSequence::new(4, 8).take(1).collect();
        assert!(dist(&dirs1[0], &other[0]) > 1e-6);
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = seeded_rng(0, "ball");
        let c = vec![1.0, -2.0, 0.5];
        for _ in 0..200 {
            let x = sample_ball(&mut rng, &c, 0.7);
            assert!(dist(&x, &c) <= 0.7 + 1e-12);
        }
    }
}
