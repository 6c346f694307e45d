//! Flat dense parameter vectors.
//!
//! `ParamVector` is the single currency passed between models, clients and
//! the server: model parameters, gradients, perturbations, dual variables
//! and global updates are all plain `f64` vectors of a fixed length.

use serde::Serialize;

/// Radius below which a vector is treated as zero when normalizing.
pub const NORM_EPS: f64 = 1e-12;

/// Dense vector of 64-bit model parameters. All binary operations require
/// equal lengths and panic otherwise; length is fixed for the lifetime of
/// an experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "parameter vector must have length >= 1");
        ParamVector(values)
    }

    pub fn zeros(len: usize) -> Self {
        ParamVector::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    #[inline]
    fn check_len(&self, other: &ParamVector) {
        assert_eq!(
            self.0.len(),
            other.0.len(),
            "vector length mismatch: {} vs {}",
            self.0.len(),
            other.0.len()
        );
    }

    pub fn add(&self, other: &ParamVector) -> ParamVector {
        self.check_len(other);
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        self.check_len(other);
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, factor: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|a| a * factor).collect())
    }

    /// `self + factor * other`, elementwise.
    pub fn add_scaled(&self, factor: f64, other: &ParamVector) -> ParamVector {
        self.check_len(other);
        ParamVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + factor * b)
                .collect(),
        )
    }

    /// In-place `self += factor * other`.
    pub fn axpy(&mut self, factor: f64, other: &ParamVector) {
        self.check_len(other);
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.check_len(other);
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Largest absolute entry exceeds the guard, or something is NaN/Inf.
    pub fn exceeds_magnitude(&self, guard: f64) -> bool {
        self.0.iter().any(|x| !x.is_finite() || x.abs() > guard)
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector::new(values)
    }
}

/// Rescale `v` so its Euclidean norm equals `rho`; vectors with norm at most
/// `eps` (and the degenerate `rho = 0` case) map to the zero vector.
pub fn normalize_to_radius(v: &ParamVector, rho: f64, eps: f64) -> ParamVector {
    assert!(rho >= 0.0, "radius must be nonnegative");
    assert!(eps >= 0.0, "eps must be nonnegative");
    let norm = v.norm();
    if rho == 0.0 || norm <= eps {
        ParamVector::zeros(v.len())
    } else {
        v.scale(rho / norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_basic() {
        let v = ParamVector::new(vec![3.0, 4.0]);
        let r = normalize_to_radius(&v, 0.1, 1e-12);
        assert!((r[0] - 0.06).abs() < 1e-15);
        assert!((r[1] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn normalize_zero_vector() {
        let v = ParamVector::new(vec![0.0, 0.0]);
        let r = normalize_to_radius(&v, 0.1, 1e-12);
        assert_eq!(r.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn normalize_one_dimensional() {
        let v = ParamVector::new(vec![5.0]);
        let r = normalize_to_radius(&v, 2.0, 1e-12);
        assert!((r[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_zero_radius() {
        let v = ParamVector::new(vec![1.0, 2.0]);
        let r = normalize_to_radius(&v, 0.0, 1e-12);
        assert_eq!(r.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "length mismatch")]
    fn mismatched_lengths_panic() {
        let a = ParamVector::new(vec![1.0]);
        let b = ParamVector::new(vec![1.0, 2.0]);
        let _ = a.add(&b);
    }

    #[test]
    fn arithmetic_identities() {
        let a = ParamVector::new(vec![1.0, -2.0, 3.0]);
        let b = ParamVector::new(vec![0.5, 0.25, -1.0]);
        let sum = a.add(&b);
        assert_eq!(sum.sub(&b), a);
        assert_eq!(a.add_scaled(2.0, &b), a.add(&b.scale(2.0)));
        assert!((a.dot(&b) - (0.5 - 0.5 - 3.0)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn normalized_norm_equals_rho(
            values in proptest::collection::vec(-1e3f64..1e3, 1..32),
            rho in 1e-3f64..10.0,
        ) {
            let v = ParamVector::new(values);
            let r = normalize_to_radius(&v, rho, NORM_EPS);
            let n = r.norm();
            if v.norm() > NORM_EPS {
                prop_assert!((n - rho).abs() / rho <= 1e-10, "norm {n} vs rho {rho}");
            } else {
                prop_assert_eq!(n, 0.0);
            }
        }

        #[test]
        fn normalization_is_scale_invariant(
            values in proptest::collection::vec(-1e2f64..1e2, 1..16),
            rho in 1e-3f64..10.0,
            lambda in 1e-2f64..1e2,
        ) {
            let v = ParamVector::new(values);
            prop_assume!(v.norm() > 1e-6);
            let a = normalize_to_radius(&v, rho, NORM_EPS);
            let b = normalize_to_radius(&v.scale(lambda), rho, NORM_EPS);
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
            }
        }
    }
}
