//! Working-model specification and design-matrix construction, including
//! the counterfactual builder that re-assigns a row to an arbitrary arm.

use crate::data::TrialData;
use crate::error::{Error, Result};
use crate::link::LinkFamily;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// Pooled (one model across arms, with arm indicators) or stratified
/// (one model per arm, fitted on that arm's rows only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelMode {
    Pooled {
        /// Include arm-by-covariate interaction columns.
        interactions: bool,
    },
    Stratified,
}

/// What to fit: mode, link family, and which covariate columns of `w`
/// enter the model. An empty selection is legal and reproduces the
/// unadjusted (arm-only) analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkingModelSpec {
    pub mode: ModelMode,
    pub link: LinkFamily,
    pub covariates: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Layout {
    /// Full design plus one precomputed counterfactual design per arm.
    Pooled { x: Array2<f64>, cf: Vec<Array2<f64>> },
    /// Shared per-arm regressor block `[1, w_sel]`; arm `a` is fitted on
    /// its own rows. The stacked parameter vector is `(beta[1], ..,
    /// beta[k])` and the stacked row for subject `i` places `z_i` in the
    /// block of the subject's arm.
    Stratified { z: Array2<f64> },
}

/// Design matrix with column-role bookkeeping and a counterfactual builder.
///
/// The intercept is always column 0 of each block; the counterfactual of a
/// row under its own observed arm equals the row itself.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    n: usize,
    k: usize,
    arm: Vec<usize>, // 0-based
    layout: Layout,
}

/// Build the design for `spec`; stratified mode yields the stacked
/// block-diagonal parameterization with one block per arm.
pub fn build_design(data: &TrialData, spec: &WorkingModelSpec) -> Result<DesignMatrix> {
    for &c in &spec.covariates {
        if c >= data.q() {
            return Err(Error::InvalidInput(format!(
                "covariate index {c} out of range (q = {})",
                data.q()
            )));
        }
    }
    let n = data.n();
    let k = data.k();
    let arm = data.arm().to_vec();
    let q = spec.covariates.len();
    let layout = match spec.mode {
        ModelMode::Pooled { interactions } => {
            let p = 1 + (k - 1) + q + if interactions { (k - 1) * q } else { 0 };
            let mut x = Array2::zeros((n, p));
            for i in 0..n {
                fill_pooled_row(
                    x.row_mut(i).as_slice_mut().unwrap(),
                    arm[i],
                    k,
                    &spec.covariates,
                    data.w().row(i),
                    interactions,
                );
            }
            let cf = (0..k)
                .map(|a| {
                    let mut xa = Array2::zeros((n, p));
                    for i in 0..n {
                        fill_pooled_row(
                            xa.row_mut(i).as_slice_mut().unwrap(),
                            a,
                            k,
                            &spec.covariates,
                            data.w().row(i),
                            interactions,
                        );
                    }
                    xa
                })
                .collect();
            Layout::Pooled { x, cf }
        }
        ModelMode::Stratified => {
            let mut z = Array2::zeros((n, 1 + q));
            for i in 0..n {
                z[(i, 0)] = 1.0;
                for (j, &c) in spec.covariates.iter().enumerate() {
                    z[(i, 1 + j)] = data.w()[(i, c)];
                }
            }
            Layout::Stratified { z }
        }
    };
    Ok(DesignMatrix { n, k, arm, layout })
}

fn fill_pooled_row(
    row: &mut [f64],
    arm: usize,
    k: usize,
    covariates: &[usize],
    w: ArrayView1<f64>,
    interactions: bool,
) {
    let q = covariates.len();
    row[0] = 1.0;
    for a in 1..k {
        row[a] = if arm == a { 1.0 } else { 0.0 };
    }
    for (j, &c) in covariates.iter().enumerate() {
        row[k + j] = w[c];
    }
    if interactions {
        for a in 1..k {
            for (j, &c) in covariates.iter().enumerate() {
                row[k + q + (a - 1) * q + j] = if arm == a { w[c] } else { 0.0 };
            }
        }
    }
}

impl DesignMatrix {
    /// Pooled design in the block-indicator parameterization
    /// `[I(A=1), .., I(A=k), w_sel]` — same column space as the default
    /// intercept form, so fitted values agree.
    pub fn pooled_with_arm_blocks(data: &TrialData, covariates: &[usize]) -> Result<Self> {
        for &c in covariates {
            if c >= data.q() {
                return Err(Error::InvalidInput(format!("covariate index {c} out of range")));
            }
        }
        let (n, k) = (data.n(), data.k());
        let q = covariates.len();
        let arm = data.arm().to_vec();
        let build = |assign: &dyn Fn(usize) -> usize| {
            let mut x = Array2::zeros((n, k + q));
            for i in 0..n {
                x[(i, assign(i))] = 1.0;
                for (j, &c) in covariates.iter().enumerate() {
                    x[(i, k + j)] = data.w()[(i, c)];
                }
            }
            x
        };
        let x = build(&|i| arm[i]);
        let cf = (0..k).map(|a| build(&|_| a)).collect();
        Ok(DesignMatrix { n, k, arm, layout: Layout::Pooled { x, cf } })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// 0-based arm index per row.
    pub fn arm(&self) -> &[usize] {
        &self.arm
    }

    pub fn is_stratified(&self) -> bool {
        matches!(self.layout, Layout::Stratified { .. })
    }

    /// Total (stacked) parameter count.
    pub fn p(&self) -> usize {
        match &self.layout {
            Layout::Pooled { x, .. } => x.ncols(),
            Layout::Stratified { z } => self.k * z.ncols(),
        }
    }

    /// Per-arm parameter count (`p` itself for pooled designs).
    pub fn p_arm(&self) -> usize {
        match &self.layout {
            Layout::Pooled { x, .. } => x.ncols(),
            Layout::Stratified { z } => z.ncols(),
        }
    }

    pub(crate) fn pooled_x(&self) -> Option<&Array2<f64>> {
        match &self.layout {
            Layout::Pooled { x, .. } => Some(x),
            Layout::Stratified { .. } => None,
        }
    }

    pub(crate) fn stratified_z(&self) -> Option<&Array2<f64>> {
        match &self.layout {
            Layout::Stratified { z } => Some(z),
            Layout::Pooled { .. } => None,
        }
    }

    /// Linear predictor at the observed assignments.
    pub fn eta_observed(&self, beta: &Array1<f64>) -> Array1<f64> {
        assert_eq!(beta.len(), self.p(), "beta length must match design");
        match &self.layout {
            Layout::Pooled { x, .. } => x.dot(beta),
            Layout::Stratified { z } => {
                let pa = z.ncols();
                let mut eta = Array1::zeros(self.n);
                for i in 0..self.n {
                    let block = beta.slice(ndarray::s![self.arm[i] * pa..(self.arm[i] + 1) * pa]);
                    eta[i] = z.row(i).dot(&block);
                }
                eta
            }
        }
    }

    /// Linear predictor with every row re-assigned to arm `a` (0-based).
    pub fn eta_counterfactual(&self, beta: &Array1<f64>, a: usize) -> Array1<f64> {
        assert!(a < self.k);
        assert_eq!(beta.len(), self.p(), "beta length must match design");
        match &self.layout {
            Layout::Pooled { cf, .. } => cf[a].dot(beta),
            Layout::Stratified { z } => {
                let pa = z.ncols();
                let block = beta.slice(ndarray::s![a * pa..(a + 1) * pa]).to_owned();
                z.dot(&block)
            }
        }
    }

    /// Stacked row `X_i` at the observed arm.
    pub fn row_observed(&self, i: usize) -> Array1<f64> {
        self.row_counterfactual(i, self.arm[i])
    }

    /// Stacked counterfactual row `X_{i|a}`.
    pub fn row_counterfactual(&self, i: usize, a: usize) -> Array1<f64> {
        match &self.layout {
            Layout::Pooled { cf, .. } => cf[a].row(i).to_owned(),
            Layout::Stratified { z } => {
                let pa = z.ncols();
                let mut row = Array1::zeros(self.k * pa);
                row.slice_mut(ndarray::s![a * pa..(a + 1) * pa]).assign(&z.row(i));
                row
            }
        }
    }

    /// `X_{i|a} . v` without materializing the stacked row.
    pub fn dot_counterfactual(&self, i: usize, a: usize, v: ArrayView1<f64>) -> f64 {
        match &self.layout {
            Layout::Pooled { cf, .. } => cf[a].row(i).dot(&v),
            Layout::Stratified { z } => {
                let pa = z.ncols();
                z.row(i).dot(&v.slice(ndarray::s![a * pa..(a + 1) * pa]))
            }
        }
    }

    /// Row indices belonging to arm `a`.
    pub fn arm_rows(&self, a: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.arm[i] == a).collect()
    }

    /// Gathered per-arm regressor block and outcomes (stratified fitting).
    pub(crate) fn gather_arm(&self, a: usize, y: ArrayView1<f64>) -> (Array2<f64>, Array1<f64>, Vec<usize>) {
        let z = match &self.layout {
            Layout::Stratified { z } => z,
            Layout::Pooled { .. } => unreachable!("gather_arm is stratified-only"),
        };
        let rows = self.arm_rows(a);
        let mut xa = Array2::zeros((rows.len(), z.ncols()));
        let mut ya = Array1::zeros(rows.len());
        for (r, &i) in rows.iter().enumerate() {
            xa.row_mut(r).assign(&z.row(i));
            ya[r] = y[i];
        }
        (xa, ya, rows)
    }
}

/// View of the full design for pooled fits.
pub(crate) fn pooled_view(design: &DesignMatrix) -> ArrayView2<'_, f64> {
    design.pooled_x().expect("pooled design expected").view()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn toy(k_labels: &[usize], w: Array2<f64>) -> TrialData {
        let y = Array1::from_iter(k_labels.iter().map(|_| 0.0));
        TrialData::new(y, k_labels, w).unwrap()
    }

    #[test]
    fn pooled_no_covariates_is_intercept_plus_indicator() {
        let d = toy(&[1, 2, 1, 2], Array2::zeros((4, 0)));
        let spec = WorkingModelSpec {
            mode: ModelMode::Pooled { interactions: false },
            link: LinkFamily::LogitBinomial,
            covariates: vec![],
        };
        let design = build_design(&d, &spec).unwrap();
        assert_eq!(design.p(), 2);
        let x = design.pooled_x().unwrap();
        assert_eq!(x.column(0).to_vec(), vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(x.column(1).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn pooled_interaction_column_count() {
        let w = array![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6], [0.7, 0.8]];
        let d = toy(&[1, 2, 1, 2], w);
        let spec = WorkingModelSpec {
            mode: ModelMode::Pooled { interactions: true },
            link: LinkFamily::LogitBinomial,
            covariates: vec![0, 1],
        };
        let design = build_design(&d, &spec).unwrap();
        assert_eq!(design.p(), 6); // 1 + 1 + 2 + 2
    }

    #[test]
    fn stratified_per_arm_block_is_intercept_plus_covariates() {
        let w = array![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6], [0.7, 0.8], [0.9, 1.0]];
        let d = toy(&[1, 2, 1, 2, 1], w);
        let spec = WorkingModelSpec {
            mode: ModelMode::Stratified,
            link: LinkFamily::LogitBinomial,
            covariates: vec![0, 1],
        };
        let design = build_design(&d, &spec).unwrap();
        assert_eq!(design.p_arm(), 3);
        assert_eq!(design.p(), 6);
        let (xa, _, rows) = design.gather_arm(0, d.y().view());
        assert_eq!(xa.nrows(), 3);
        assert_eq!(rows, vec![0, 2, 4]);
    }

    #[test]
    fn counterfactual_of_own_arm_is_identity() {
        let w = array![[0.1], [0.3], [0.5], [0.7]];
        let d = toy(&[1, 2, 2, 1], w);
        for mode in [ModelMode::Pooled { interactions: true }, ModelMode::Stratified] {
            let spec = WorkingModelSpec {
                mode,
                link: LinkFamily::LogitBinomial,
                covariates: vec![0],
            };
            let design = build_design(&d, &spec).unwrap();
            for i in 0..4 {
                let own = design.row_counterfactual(i, d.arm()[i]);
                let obs = design.row_observed(i);
                assert_eq!(own, obs);
            }
        }
    }
}
