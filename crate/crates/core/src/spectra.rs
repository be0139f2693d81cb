//! Pointwise linear algebra of Schouten eigenvalue spectra.
//!
//! A metric that is conformally flat has a Schouten tensor diagonalizable in
//! a shared frame, so everything here works at the level of ordered
//! eigenvalue tuples. The intermediate curvature spectrum is
//! `mu_i = (p-2) lambda_i + J` with `J = sum(lambda)`, the positivity cone
//! `A(p)` is `(p-2) min(lambda) + sum(lambda) >= 0`, and the curvature
//! operator on decomposable r-forms has eigenvalue
//! `(n-r) sum_{i in T} lambda_i + r sum_{i not in T} lambda_i` minimized over
//! r-subsets `T`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ordered Schouten eigenvalues `lambda_1 <= ... <= lambda_n`, n >= 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    values: Vec<f64>,
}

impl EigenSpectrum {
    /// Builds a spectrum from raw values; sorts them ascending.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InvalidParameter(format!(
                "spectrum needs dimension n >= 3, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite eigenvalue".into()));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Eigenvalues, ascending. The sorted invariant is maintained by
    /// construction, so formulas below never re-sort.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    /// Trace `J = sum(lambda)`. Scalar curvature is `2(n-1) J`.
    pub fn trace(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }
}

/// Positivity cone selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConeSpec {
    /// `A(p)` cone: `(p-2) min(lambda) + sum(lambda) >= 0`, p > 1.
    Ap { p: f64 },
    /// Curvature-operator cone on r-forms, 1 <= r <= n.
    Rr { r: usize },
}

impl ConeSpec {
    fn validate(&self, n: usize) -> Result<()> {
        match *self {
            ConeSpec::Ap { p } => {
                if !(p > 1.0) {
                    return Err(Error::InvalidParameter(format!("A(p) cone needs p > 1, got {p}")));
                }
            }
            ConeSpec::Rr { r } => {
                if r < 1 || r > n {
                    return Err(Error::InvalidParameter(format!(
                        "R(r) cone needs 1 <= r <= {n}, got {r}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Intermediate curvature spectrum `mu_i = (p-2) lambda_i + sum(lambda)`.
///
/// The result is re-sorted (for p < 2 the map reverses order). Its trace is
/// `(n+p-2) sum(lambda)`.
pub fn ap_spectrum(s: &EigenSpectrum, p: f64) -> Result<EigenSpectrum> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("ap_spectrum needs p > 1, got {p}")));
    }
    let j = s.trace();
    EigenSpectrum::new(s.values().iter().map(|l| (p - 2.0) * l + j).collect())
}

/// Value of the cone functional; membership is `functional >= -tol`.
pub fn cone_functional(s: &EigenSpectrum, cone: ConeSpec) -> Result<f64> {
    cone.validate(s.n())?;
    Ok(match cone {
        ConeSpec::Ap { p } => (p - 2.0) * s.min() + s.trace(),
        ConeSpec::Rr { r } => bochner_form_eigenvalue(s, r)?,
    })
}

/// Cone membership with an exact sign test (closed cones).
pub fn cone_membership(s: &EigenSpectrum, cone: ConeSpec) -> Result<bool> {
    cone_membership_tol(s, cone, 0.0)
}

/// Cone membership with a tolerance: `functional >= -tol`. The verification
/// suites use 1e-12 to absorb float rounding.
pub fn cone_membership_tol(s: &EigenSpectrum, cone: ConeSpec, tol: f64) -> Result<bool> {
    Ok(cone_functional(s, cone)? >= -tol)
}

/// Smallest eigenvalue of the curvature operator on r-forms:
/// `min over r-subsets T of (n-r) sum_{i in T} lambda_i + r sum_{i not in T} lambda_i`.
///
/// For `r <= n/2` the minimum is attained on the sorted prefix and is
/// computed in closed form; for `r > n/2` the subsets are enumerated (the
/// prefix shortcut is not relied on there). `r = n` degenerates to an empty
/// complement and returns `(n-r) sum(lambda) = 0`.
pub fn bochner_form_eigenvalue(s: &EigenSpectrum, r: usize) -> Result<f64> {
    let n = s.n();
    if r < 1 || r > n {
        return Err(Error::InvalidParameter(format!(
            "bochner_form_eigenvalue needs 1 <= r <= {n}, got {r}"
        )));
    }
    if 2 * r <= n {
        Ok(sorted_prefix_value(s.values(), r))
    } else {
        Ok(min_over_subsets(s.values(), r))
    }
}

/// `G(n, r) = (n-r) sum_{i<=r} lambda_i + r sum_{i>r} lambda_i` on sorted
/// values.
fn sorted_prefix_value(values: &[f64], r: usize) -> f64 {
    let n = values.len();
    let head: f64 = values[..r].iter().sum();
    let tail: f64 = values[r..].iter().sum();
    (n - r) as f64 * head + r as f64 * tail
}

/// Exhaustive minimum over all r-subsets.
fn min_over_subsets(values: &[f64], r: usize) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    // (n-r) sum_T + r (total - sum_T) = r total + (n-2r) sum_T.
    let w = (n as f64) - 2.0 * r as f64;
    let mut best = f64::INFINITY;
    let mut subset: Vec<usize> = (0..r).collect();
    loop {
        let sum_t: f64 = subset.iter().map(|&i| values[i]).sum();
        let v = r as f64 * total + w * sum_t;
        if v < best {
            best = v;
        }
        // next combination in lexicographic order
        let mut i = r;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] != i + n - r {
                break;
            }
        }
        if subset[i] == i + n - r {
            return best;
        }
        subset[i] += 1;
        for j in (i + 1)..r {
            subset[j] = subset[j - 1] + 1;
        }
    }
}

/// Schouten spectrum of the product of hyperbolic k-space with a round
/// (n-k)-sphere: k copies of -1/2 followed by n-k copies of 1/2.
pub fn model_spectrum(n: usize, k: usize) -> Result<EigenSpectrum> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("model spectrum needs n >= 3, got {n}")));
    }
    if k < 1 || 2 * k > n {
        return Err(Error::InvalidParameter(format!(
            "model spectrum needs 1 <= k <= n/2, got k = {k}, n = {n}"
        )));
    }
    let mut v = vec![-0.5; k];
    v.extend(std::iter::repeat_n(0.5, n - k));
    EigenSpectrum::new(v)
}

/// Uniform spectrum sample on `[-1, 1]^n`.
pub fn sample_uniform(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> EigenSpectrum {
    use rand::Rng;
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    EigenSpectrum::new(v).expect("uniform sample is valid")
}

/// Spectrum shifted so the cone functional lands uniformly in
/// `[-0.1, 0.1]`; boundary cases are where sign errors hide.
pub fn sample_near_boundary(
    rng: &mut rand_chacha::ChaCha8Rng,
    n: usize,
    cone: ConeSpec,
) -> Result<EigenSpectrum> {
    use rand::Rng;
    let s = sample_uniform(rng, n);
    let f = cone_functional(&s, cone)?;
    // Response of the functional to a uniform shift by c.
    let slope = match cone {
        ConeSpec::Ap { p } => p - 2.0 + n as f64,
        ConeSpec::Rr { r } => 2.0 * r as f64 * (n - r) as f64,
    };
    if slope.abs() < 1e-9 {
        return Ok(s);
    }
    let target = rng.random_range(-0.1..0.1);
    Ok(s.shifted((target - f) / slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::seeded_rng;

    /// Brute-force oracle: apply `(p-2) diag(lambda) + J I` as a matrix and
    /// read eigenvalues off the diagonal.
    fn ap_matrix_oracle(values: &[f64], p: f64) -> Vec<f64> {
        let j: f64 = values.iter().sum();
        let n = values.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = (p - 2.0) * values[i] + j;
        }
        let mut eig: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eig
    }

    /// Permutation-style oracle for the r-form eigenvalue, independent of the
    /// combination-walk in the implementation: recursive subset enumeration.
    fn bochner_recursive_oracle(values: &[f64], r: usize) -> f64 {
        fn rec(values: &[f64], start: usize, left: usize, acc: f64, best: &mut f64, total: f64, r: usize) {
            let n = values.len();
            if left == 0 {
                let v = (n - r) as f64 * acc + r as f64 * (total - acc);
                if v < *best {
                    *best = v;
                }
                return;
            }
            for i in start..=(n - left) {
                rec(values, i + 1, left - 1, acc + values[i], best, total, r);
            }
        }
        let mut best = f64::INFINITY;
        let total: f64 = values.iter().sum();
        rec(values, 0, r, 0.0, &mut best, total, r);
        best
    }

    #[test]
    fn model_case_n6_k2_p4() {
        let s = model_spectrum(6, 2).unwrap();
        assert_eq!(s.values(), &[-0.5, -0.5, 0.5, 0.5, 0.5, 0.5]);
        let ap = ap_spectrum(&s, 4.0).unwrap();
        assert_eq!(ap.values(), &[0.0, 0.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn p_two_is_pure_trace() {
        let s = EigenSpectrum::new(vec![-0.3, 0.1, 0.9, 1.7]).unwrap();
        let ap = ap_spectrum(&s, 2.0).unwrap();
        let j = s.trace();
        for v in ap.values() {
            assert!((v - j).abs() < 1e-15);
        }
    }

    #[test]
    fn ap_matches_matrix_oracle() {
        // Frozen from the direct matrix arithmetic oracle.
        let s = EigenSpectrum::new(vec![-1.0, 0.0, 1.0, 2.0]).unwrap();
        let ap = ap_spectrum(&s, 3.0).unwrap();
        assert_eq!(ap.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ap.values(), ap_matrix_oracle(s.values(), 3.0).as_slice());
        // Trace identity Tr A(p) = (n+p-2) J.
        let n = s.n() as f64;
        assert!((ap.trace() - (n + 3.0 - 2.0) * s.trace()).abs() < 1e-12);
    }

    #[test]
    fn ap_rejects_p_at_most_one() {
        let s = model_spectrum(4, 1).unwrap();
        assert!(ap_spectrum(&s, 1.0).is_err());
        assert!(ap_spectrum(&s, 0.5).is_err());
    }

    #[test]
    fn membership_examples() {
        // Model spectrum is on the cone boundary at p = n-2k+2.
        for (n, k) in [(6usize, 2usize), (5, 2), (8, 3), (3, 1)] {
            let p = (n - 2 * k + 2) as f64;
            let s = model_spectrum(n, k).unwrap();
            let f = cone_functional(&s, ConeSpec::Ap { p }).unwrap();
            assert!(f.abs() < 1e-12, "model ({n},{k}) not on boundary: {f}");
            assert!(cone_membership(&s, ConeSpec::Ap { p }).unwrap());
        }
        let zero = EigenSpectrum::new(vec![0.0; 5]).unwrap();
        assert!(cone_membership(&zero, ConeSpec::Ap { p: 7.0 }).unwrap());
        assert!(cone_membership(&zero, ConeSpec::Rr { r: 2 }).unwrap());
        // (-1,1,1,1) at p=3: (1)(-1) + 2 = 1 >= 0.
        let s = EigenSpectrum::new(vec![-1.0, 1.0, 1.0, 1.0]).unwrap();
        let f = cone_functional(&s, ConeSpec::Ap { p: 3.0 }).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
        // Cross-check against an explicit min over entries.
        let brute = s.values().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((f - ((3.0 - 2.0) * brute + s.trace())).abs() < 1e-15);
    }

    #[test]
    fn bochner_examples() {
        // Frozen via brute force over all C(6,2) subsets: 4*(-1) + 2*2 = 0.
        let s = model_spectrum(6, 2).unwrap();
        let v = bochner_form_eigenvalue(&s, 2).unwrap();
        assert!((v - 0.0).abs() < 1e-12);
        assert!((bochner_recursive_oracle(s.values(), 2) - v).abs() < 1e-12);

        // Exhaustive singleton scan on (1,2,3): min_i (2 l_i + (S - l_i)) = 7.
        let s = EigenSpectrum::new(vec![1.0, 2.0, 3.0]).unwrap();
        let v = bochner_form_eigenvalue(&s, 1).unwrap();
        assert!((v - 7.0).abs() < 1e-12);

        // r = n degenerates to zero weight on the chosen subset complement.
        let v = bochner_form_eigenvalue(&s, 3).unwrap();
        assert!(v.abs() < 1e-12);

        assert!(bochner_form_eigenvalue(&s, 0).is_err());
        assert!(bochner_form_eigenvalue(&s, 4).is_err());
    }

    #[test]
    fn fast_path_equals_enumeration() {
        let mut rng = seeded_rng(11, "bochner");
        for n in 3..=8 {
            for _ in 0..200 {
                let s = sample_uniform(&mut rng, n);
                for r in 1..=n {
                    let v = bochner_form_eigenvalue(&s, r).unwrap();
                    let oracle = bochner_recursive_oracle(s.values(), r);
                    assert!(
                        (v - oracle).abs() < 1e-12,
                        "n={n} r={r} fast={v} oracle={oracle}"
                    );
                }
            }
        }
    }

    #[test]
    fn model_ap_negative_beyond_threshold() {
        for (n, k) in [(6usize, 2usize), (8, 3), (5, 1)] {
            let s = model_spectrum(n, k).unwrap();
            let p0 = (n - 2 * k + 2) as f64;
            for dq in [0.25, 1.0, 3.0] {
                let ap = ap_spectrum(&s, p0 + dq).unwrap();
                assert!(ap.min() < 0.0, "expected negative direction for q > {p0}");
                let ap = ap_spectrum(&s, (p0 - dq).max(1.01)).unwrap();
                assert!(ap.min() > -1e-12, "expected nonnegative for q < {p0}");
            }
        }
    }

    #[test]
    fn shift_commutation() {
        let mut rng = seeded_rng(3, "shift");
        for _ in 0..100 {
            let s = sample_uniform(&mut rng, 5);
            let c = 0.37;
            let p = 2.8;
            let a = ap_spectrum(&s.shifted(c), p).unwrap();
            let b = ap_spectrum(&s, p).unwrap().shifted(c * (p - 2.0 + 5.0));
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn membership_threshold_in_p() {
        let mut rng = seeded_rng(4, "threshold");
        for _ in 0..200 {
            let s = sample_uniform(&mut rng, 6);
            if s.min() >= 0.0 {
                continue;
            }
            let threshold = s.trace() / (-s.min()) + 2.0;
            let slack = 1e-9 * (1.0 + threshold.abs());
            for p in [threshold + 1e-6 + slack, threshold + 0.5, threshold + 5.0] {
                if p > 1.0 {
                    assert!(!cone_membership(&s, ConeSpec::Ap { p }).unwrap());
                }
            }
            if threshold - 1e-6 - slack > 1.0 {
                assert!(cone_membership(&s, ConeSpec::Ap { p: threshold - 1e-6 - slack }).unwrap());
            }
        }
    }

    #[test]
    fn boundary_sampler_lands_near_boundary() {
        let mut rng = seeded_rng(5, "boundary");
        for _ in 0..100 {
            let cone = ConeSpec::Ap { p: 3.5 };
            let s = sample_near_boundary(&mut rng, 5, cone).unwrap();
            let f = cone_functional(&s, cone).unwrap();
            assert!((-0.1..0.1).contains(&f), "functional {f} not near boundary");
        }
    }
}
