//! Per-subject trial data container.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};

/// Outcome, arm assignment, and baseline covariates for one trial.
///
/// Arm labels are 1-based in the public API (`1..=k`); internally rows carry
/// 0-based arm indices. Every arm must be non-empty and no value may be
/// missing.
#[derive(Debug, Clone)]
pub struct TrialData {
    y: Array1<f64>,
    arm: Vec<usize>, // 0-based
    w: Array2<f64>,
    k: usize,
    arm_counts: Vec<usize>,
}

impl TrialData {
    /// Build from 1-based arm labels. `k` is the largest label present.
    pub fn new(y: Array1<f64>, arm_labels: &[usize], w: Array2<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty trial".into()));
        }
        if arm_labels.len() != n || w.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {n} rows, arm has {}, w has {}",
                arm_labels.len(),
                w.nrows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("missing or non-finite value".into()));
        }
        let k = *arm_labels.iter().max().unwrap_or(&0);
        if k < 1 {
            return Err(Error::InvalidInput("arm labels must be in 1..=k".into()));
        }
        let mut arm_counts = vec![0usize; k];
        let mut arm = Vec::with_capacity(n);
        for &label in arm_labels {
            if label < 1 || label > k {
                return Err(Error::InvalidInput(format!("arm label {label} outside 1..={k}")));
            }
            arm_counts[label - 1] += 1;
            arm.push(label - 1);
        }
        if let Some(a) = arm_counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!("arm {} has no subjects", a + 1)));
        }
        Ok(Self { y, arm, w, k, arm_counts })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn q(&self) -> usize {
        self.w.ncols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    /// 0-based arm index per subject.
    pub fn arm(&self) -> &[usize] {
        &self.arm
    }

    pub fn arm_counts(&self) -> &[usize] {
        &self.arm_counts
    }

    /// Empirical assignment proportions `n_a / n`.
    pub fn pi_hat(&self) -> Array1<f64> {
        let n = self.n() as f64;
        Array1::from_iter(self.arm_counts.iter().map(|&c| c as f64 / n))
    }

    /// Outcome mean within arm `a` (0-based).
    pub fn arm_mean(&self, a: usize) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.n() {
            if self.arm[i] == a {
                sum += self.y[i];
            }
        }
        sum / self.arm_counts[a] as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn validates_labels_and_counts() {
        let y = array![1.0, 0.0, 1.0];
        let w = Array2::zeros((3, 0));
        let d = TrialData::new(y.clone(), &[1, 2, 1], w.clone()).unwrap();
        assert_eq!(d.k(), 2);
        assert_eq!(d.arm_counts(), &[2, 1]);
        assert!((d.pi_hat()[0] - 2.0 / 3.0).abs() < 1e-15);

        assert!(TrialData::new(y.clone(), &[1, 3, 1], w.clone()).is_err()); // empty arm 2
        assert!(TrialData::new(y, &[0, 1, 1], w).is_err()); // label 0
    }

    #[test]
    fn rejects_missing_values() {
        let y = array![1.0, f64::NAN];
        let w = Array2::zeros((2, 0));
        assert!(TrialData::new(y, &[1, 2], w).is_err());
    }
}
