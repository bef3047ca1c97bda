//! Domain types shared across the pipeline: per-task data, the stacked
//! co-training problem, hypothesis directions, selection traces, intervals.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::linalg::{self, BlockDiag, Cholesky, GRAM_PIVOT_REL_TOL, SYMMETRY_TOL};

/// Coefficients with absolute value at or below this are treated as zero when
/// reading active sets off a solution. Soft-thresholding produces exact
/// zeros; the threshold only guards float dust from linear algebra.
pub const ZERO_THRESHOLD: f64 = 1e-10;

/// Indices and signs of the coordinates of `v` that clear [`ZERO_THRESHOLD`].
pub fn active_set(v: &DVector<f64>) -> (Vec<usize>, Vec<f64>) {
    let mut idx = Vec::new();
    let mut signs = Vec::new();
    for (i, &c) in v.iter().enumerate() {
        if c.abs() > ZERO_THRESHOLD {
            idx.push(i);
            signs.push(if c > 0.0 { 1.0 } else { -1.0 });
        }
    }
    (idx, signs)
}

/// One task: a design, its response, and the (known) noise covariance.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl TaskData {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if response.len() != design.nrows() {
            return Err(CoreError::validation(format!(
                "response length {} does not match design rows {}",
                response.len(),
                design.nrows()
            )));
        }
        if covariance.nrows() != design.nrows() || covariance.ncols() != design.nrows() {
            return Err(CoreError::validation(format!(
                "covariance is {}x{}, expected {n}x{n}",
                covariance.nrows(),
                covariance.ncols(),
                n = design.nrows()
            )));
        }
        for v in design.iter().chain(response.iter()).chain(covariance.iter()) {
            if !v.is_finite() {
                return Err(CoreError::validation("non-finite entry in task data"));
            }
        }
        linalg::check_symmetric(&covariance, SYMMETRY_TOL, "covariance")?;
        Cholesky::factor(&covariance, 0.0)
            .map_err(|_| CoreError::validation("covariance is not positive definite"))?;
        Ok(TaskData { design, response, covariance })
    }

    /// Convenience constructor with covariance `sigma2 * I`.
    pub fn with_iso_noise(design: DMatrix<f64>, response: DVector<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(CoreError::validation(format!("sigma2 must be positive, got {sigma2}")));
        }
        let n = design.nrows();
        TaskData::new(design, response, DMatrix::identity(n, n) * sigma2)
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }
}

/// One target task plus `K` source tasks over a common feature set.
#[derive(Debug, Clone)]
pub struct MultiTaskData {
    pub target: TaskData,
    pub sources: Vec<TaskData>,
}

impl MultiTaskData {
    pub fn new(target: TaskData, sources: Vec<TaskData>) -> Result<Self> {
        if sources.is_empty() {
            return Err(CoreError::validation("need at least one source task"));
        }
        if target.n() < 1 {
            return Err(CoreError::validation("target task has no rows"));
        }
        let p = target.p();
        let n_s = sources[0].n();
        for (k, s) in sources.iter().enumerate() {
            if s.p() != p {
                return Err(CoreError::validation(format!(
                    "source task {} has {} columns, expected {}",
                    k,
                    s.p(),
                    p
                )));
            }
            if s.n() != n_s {
                return Err(CoreError::validation(format!(
                    "source task {} has {} rows, expected {} (all sources share a sample size)",
                    k,
                    s.n(),
                    n_s
                )));
            }
            if s.n() < 1 {
                return Err(CoreError::validation(format!("source task {k} has no rows")));
            }
        }
        Ok(MultiTaskData { target, sources })
    }

    pub fn feature_count(&self) -> usize {
        self.target.p()
    }

    pub fn k(&self) -> usize {
        self.sources.len()
    }

    pub fn n_t(&self) -> usize {
        self.target.n()
    }

    pub fn n_s(&self) -> usize {
        self.sources[0].n()
    }
}

/// The co-training system: block design over `(K+1)p` coefficients, stacked
/// response, block-diagonal covariance, per-coordinate penalty weights.
///
/// Source row-block `k` carries its design in column block `k` and again in
/// the last column block; the target row-block carries its design only in the
/// last column block. Coefficient block `k < K` is the offset of source `k`
/// from the shared component; the last block is the shared component itself.
#[derive(Debug, Clone)]
pub struct StackedProblem {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub covariance: BlockDiag,
    pub penalty_weights: DVector<f64>,
    pub k: usize,
    pub p: usize,
    pub n_s: usize,
    pub n_t: usize,
}

impl StackedProblem {
    /// Total row count `N = K n_S + n_T`.
    pub fn big_n(&self) -> usize {
        self.k * self.n_s + self.n_t
    }
}

/// Assemble the stacked co-training problem from per-task data and positive
/// per-source penalty factors (the shared block always has factor 1).
pub fn build_stacked(data: &MultiTaskData, source_weights: &[f64]) -> Result<StackedProblem> {
    let k = data.k();
    let p = data.feature_count();
    let n_s = data.n_s();
    let n_t = data.n_t();
    if source_weights.len() != k {
        return Err(CoreError::validation(format!(
            "got {} source weights for {} sources",
            source_weights.len(),
            k
        )));
    }
    for (i, &a) in source_weights.iter().enumerate() {
        if !(a > 0.0) || !a.is_finite() {
            return Err(CoreError::validation(format!(
                "source weight {} must be positive, got {}",
                i, a
            )));
        }
    }
    let big_n = k * n_s + n_t;
    let total_p = (k + 1) * p;
    let mut design = DMatrix::<f64>::zeros(big_n, total_p);
    let mut response = DVector::<f64>::zeros(big_n);
    let mut blocks = Vec::with_capacity(k + 1);
    for (ki, s) in data.sources.iter().enumerate() {
        let row0 = ki * n_s;
        design.view_mut((row0, ki * p), (n_s, p)).copy_from(&s.design);
        design.view_mut((row0, k * p), (n_s, p)).copy_from(&s.design);
        response.rows_mut(row0, n_s).copy_from(&s.response);
        blocks.push(s.covariance.clone());
    }
    let trow = k * n_s;
    design.view_mut((trow, k * p), (n_t, p)).copy_from(&data.target.design);
    response.rows_mut(trow, n_t).copy_from(&data.target.response);
    blocks.push(data.target.covariance.clone());

    let mut penalty_weights = DVector::<f64>::zeros(total_p);
    for ki in 0..k {
        penalty_weights.rows_mut(ki * p, p).fill(source_weights[ki]);
    }
    penalty_weights.rows_mut(k * p, p).fill(1.0);

    Ok(StackedProblem {
        design,
        response,
        covariance: BlockDiag::new(blocks)?,
        penalty_weights,
        k,
        p,
        n_s,
        n_t,
    })
}

/// A test direction for one selected feature: the contrast whose inner
/// product with the stacked response is the feature's least-squares
/// coefficient on the selected target columns.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub feature_index: usize,
    pub eta: DVector<f64>,
    pub sigma2: f64,
    pub observed_statistic: f64,
}

/// Direction for feature `j` (which must belong to `selected`): zeros on the
/// first `zero_prefix` rows, and `X_M (X_M^T X_M)^{-1} e_j` on the target
/// block.
pub fn build_eta(
    target_design: &DMatrix<f64>,
    selected: &[usize],
    j: usize,
    zero_prefix: usize,
) -> Result<DVector<f64>> {
    let pos = selected.iter().position(|&m| m == j).ok_or_else(|| {
        CoreError::validation(format!("feature {} is not in the selected set", j))
    })?;
    let xm = linalg::columns(target_design, selected);
    let g = linalg::gram(&xm);
    let chol = Cholesky::factor(&g, GRAM_PIVOT_REL_TOL).map_err(|e| {
        CoreError::singular(format!(
            "selected-column Gram matrix is singular ({}); inference for this selection is undefined",
            e
        ))
    })?;
    let mut ej = DVector::<f64>::zeros(selected.len());
    ej[pos] = 1.0;
    let coef = chol.solve_vec(&ej);
    let target_block = &xm * coef;
    let mut eta = DVector::<f64>::zeros(zero_prefix + target_design.nrows());
    eta.rows_mut(zero_prefix, target_design.nrows()).copy_from(&target_block);
    Ok(eta)
}

/// Build the full hypothesis for feature `j`: direction, variance under the
/// stacked covariance, and the observed statistic.
pub fn hypothesis_for(
    target_design: &DMatrix<f64>,
    selected: &[usize],
    j: usize,
    zero_prefix: usize,
    covariance: &BlockDiag,
    y_obs: &DVector<f64>,
) -> Result<Hypothesis> {
    let eta = build_eta(target_design, selected, j, zero_prefix)?;
    if eta.len() != covariance.dim() || eta.len() != y_obs.len() {
        return Err(CoreError::validation(format!(
            "hypothesis dimension mismatch: eta {}, covariance {}, response {}",
            eta.len(),
            covariance.dim(),
            y_obs.len()
        )));
    }
    let sigma2 = covariance.quad_form(&eta);
    if !(sigma2 > 0.0) {
        return Err(CoreError::degenerate(format!(
            "test-direction variance is not positive: {sigma2}"
        )));
    }
    let observed_statistic = eta.dot(y_obs);
    Ok(Hypothesis { feature_index: j, eta, sigma2, observed_statistic })
}

/// Active sets, signs, and coefficient estimates from one pipeline run.
///
/// `stage_one` is the co-training solution (length `(K+1)p`) for TransFusion,
/// or the pooled-source solution (length `p`) for Oracle Trans-Lasso.
#[derive(Debug, Clone)]
pub struct SelectionTrace {
    pub stage_one: DVector<f64>,
    pub co_active: Vec<usize>,
    pub co_signs: Vec<f64>,
    pub w_hat: DVector<f64>,
    pub delta_hat: DVector<f64>,
    pub debias_active: Vec<usize>,
    pub debias_signs: Vec<f64>,
    pub beta_hat: DVector<f64>,
    pub selected: Vec<usize>,
    pub selected_signs: Vec<f64>,
}

/// Closed interval with optionally infinite endpoints; empty intervals are
/// never constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Option<Interval> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            None
        } else {
            Some(Interval { lower, upper })
        }
    }

    pub fn whole_line() -> Interval {
        Interval { lower: f64::NEG_INFINITY, upper: f64::INFINITY }
    }

    pub fn contains(&self, z: f64, tol: f64) -> bool {
        z >= self.lower - tol && z <= self.upper + tol
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Intersection, or `None` when empty.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        Interval::new(self.lower.max(other.lower), self.upper.min(other.upper))
    }
}

/// Sorted union of pairwise disjoint closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationRegion {
    pub intervals: Vec<Interval>,
}

impl TruncationRegion {
    /// Sort, merge overlaps and gaps of at most `merge_tol`, and wrap.
    pub fn from_intervals(mut iv: Vec<Interval>, merge_tol: f64) -> TruncationRegion {
        iv.sort_by(|a, b| a.lower.partial_cmp(&b.lower).unwrap());
        let mut merged: Vec<Interval> = Vec::with_capacity(iv.len());
        for cur in iv {
            match merged.last_mut() {
                Some(prev) if cur.lower <= prev.upper + merge_tol => {
                    prev.upper = prev.upper.max(cur.upper);
                }
                _ => merged.push(cur),
            }
        }
        TruncationRegion { intervals: merged }
    }

    pub fn contains(&self, z: f64, tol: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(z, tol))
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total_width(&self) -> f64 {
        self.intervals.iter().map(Interval::width).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn toy_task(design: DMatrix<f64>, response: DVector<f64>) -> TaskData {
        TaskData::with_iso_noise(design, response, 1.0).unwrap()
    }

    fn randn_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn randn_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn stacked_layout_minimal_case() {
        // K=1, n_S=1, n_T=1, p=1, source design [2], target design [3]
        let src = toy_task(DMatrix::from_row_slice(1, 1, &[2.0]), DVector::from_row_slice(&[5.0]));
        let tgt = toy_task(DMatrix::from_row_slice(1, 1, &[3.0]), DVector::from_row_slice(&[7.0]));
        let data = MultiTaskData::new(tgt, vec![src]).unwrap();
        let sp = build_stacked(&data, &[1.0]).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 0.0, 3.0]);
        assert_eq!(sp.design, want);
        assert_eq!(sp.response, DVector::from_row_slice(&[5.0, 7.0]));
        assert_eq!(sp.penalty_weights, DVector::from_row_slice(&[1.0, 1.0]));
        assert_eq!(sp.big_n(), 2);
    }

    #[test]
    fn stacked_dimensions_at_published_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = 300;
        let n_s = 100;
        let n_t = 50;
        let sources = (0..2)
            .map(|_| toy_task(randn_mat(&mut rng, n_s, p), randn_vec(&mut rng, n_s)))
            .collect();
        let target = toy_task(randn_mat(&mut rng, n_t, p), randn_vec(&mut rng, n_t));
        let data = MultiTaskData::new(target, sources).unwrap();
        let sp = build_stacked(&data, &[1.0, 1.0]).unwrap();
        assert_eq!(sp.design.nrows(), 250);
        assert_eq!(sp.design.ncols(), 900);
        assert_eq!(sp.response.len(), 250);
    }

    #[test]
    fn stacked_blocks_reproduce_sources_bit_exactly_and_zeros_elsewhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (p, n_s, n_t, k) = (4, 3, 2, 2);
        let sources: Vec<TaskData> = (0..k)
            .map(|_| toy_task(randn_mat(&mut rng, n_s, p), randn_vec(&mut rng, n_s)))
            .collect();
        let target = toy_task(randn_mat(&mut rng, n_t, p), randn_vec(&mut rng, n_t));
        let src_copy: Vec<DMatrix<f64>> = sources.iter().map(|s| s.design.clone()).collect();
        let tgt_copy = target.design.clone();
        let data = MultiTaskData::new(target, sources).unwrap();
        let sp = build_stacked(&data, &[0.5, 2.0]).unwrap();
        for ki in 0..k {
            let own = sp.design.view((ki * n_s, ki * p), (n_s, p)).clone_owned();
            let shared = sp.design.view((ki * n_s, k * p), (n_s, p)).clone_owned();
            assert_eq!(own, src_copy[ki]);
            assert_eq!(shared, src_copy[ki]);
            // every other column block of this row block is exactly zero
            for kj in 0..k {
                if kj != ki {
                    let z = sp.design.view((ki * n_s, kj * p), (n_s, p));
                    assert!(z.iter().all(|&v| v == 0.0));
                }
            }
        }
        let tgt_block = sp.design.view((k * n_s, k * p), (n_t, p)).clone_owned();
        assert_eq!(tgt_block, tgt_copy);
        for kj in 0..k {
            let z = sp.design.view((k * n_s, kj * p), (n_t, p));
            assert!(z.iter().all(|&v| v == 0.0));
        }
        assert_eq!(sp.penalty_weights[0], 0.5);
        assert_eq!(sp.penalty_weights[p], 2.0);
        assert_eq!(sp.penalty_weights[2 * p], 1.0);
    }

    #[test]
    fn mismatched_source_columns_name_the_task() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s0 = toy_task(randn_mat(&mut rng, 3, 5), randn_vec(&mut rng, 3));
        let s1 = toy_task(randn_mat(&mut rng, 3, 7), randn_vec(&mut rng, 3));
        let tgt = toy_task(randn_mat(&mut rng, 2, 5), randn_vec(&mut rng, 2));
        let err = MultiTaskData::new(tgt, vec![s0, s1]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("source task 1") && msg.contains("7"), "{msg}");
    }

    #[test]
    fn eta_identity_design() {
        // X_M = I_2, zero offset 3, j = first selected feature
        let x = DMatrix::identity(2, 2);
        let eta = build_eta(&x, &[0, 1], 0, 3).unwrap();
        assert_eq!(eta, DVector::from_row_slice(&[0.0, 0.0, 0.0, 1.0, 0.0]));
    }

    #[test]
    fn eta_single_column_scales_by_gram_inverse() {
        let c = DMatrix::from_row_slice(2, 1, &[2.0, 0.0]); // c^T c = 4
        let eta = build_eta(&c, &[0], 0, 0).unwrap();
        assert_relative_eq!(eta, DVector::from_row_slice(&[0.5, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn eta_inner_product_is_least_squares_coefficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = randn_mat(&mut rng, 6, 2);
        let selected = [0usize, 1];
        for j in selected {
            let eta = build_eta(&x, &selected, j, 0).unwrap();
            for _ in 0..20 {
                let y = randn_vec(&mut rng, 6);
                // independent least-squares solve via normal equations
                let g = linalg::gram(&x);
                let chol = Cholesky::factor(&g, GRAM_PIVOT_REL_TOL).unwrap();
                let coef = chol.solve_vec(&x.tr_mul(&y));
                let pos = selected.iter().position(|&m| m == j).unwrap();
                assert_relative_eq!(eta.dot(&y), coef[pos], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn eta_prefix_is_exactly_zero_and_variance_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = randn_mat(&mut rng, 7, 3);
        let eta = build_eta(&x, &[0, 2], 2, 4).unwrap();
        assert!(eta.rows(0, 4).iter().all(|&v| v == 0.0));
        // random SPD covariance: eta^T Sigma eta > 0
        let a = randn_mat(&mut rng, 11, 11);
        let spd = &a * a.transpose() + DMatrix::identity(11, 11) * 0.1;
        let bd = BlockDiag::new(vec![spd]).unwrap();
        assert!(bd.quad_form(&eta) > 0.0);
    }

    #[test]
    fn eta_rejects_singular_gram() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(build_eta(&x, &[0, 1], 0, 0), Err(CoreError::Singular(_))));
    }

    #[test]
    fn covariance_must_be_symmetric_and_pd() {
        let design = DMatrix::identity(2, 2);
        let y = DVector::from_row_slice(&[1.0, 2.0]);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(TaskData::new(design.clone(), y.clone(), asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(TaskData::new(design, y, indef).is_err());
    }

    #[test]
    fn interval_and_region_basics() {
        assert!(Interval::new(2.0, 1.0).is_none());
        let r = TruncationRegion::from_intervals(
            vec![
                Interval::new(3.0, 4.0).unwrap(),
                Interval::new(0.0, 1.0).unwrap(),
                Interval::new(1.0 + 5e-7, 2.0).unwrap(),
            ],
            1e-6,
        );
        assert_eq!(r.intervals.len(), 2);
        assert_eq!(r.intervals[0].lower, 0.0);
        assert_eq!(r.intervals[0].upper, 2.0);
        assert!(r.contains(3.5, 0.0));
        assert!(!r.contains(2.5, 0.0));
    }

    #[test]
    fn active_set_threshold_rule() {
        let v = DVector::from_row_slice(&[0.0, 0.3, 5e-11, -1.2]);
        let (idx, signs) = active_set(&v);
        assert_eq!(idx, vec![1, 3]);
        assert_eq!(signs, vec![1.0, -1.0]);
    }
}
