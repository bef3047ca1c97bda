//! From a fitted selection to the exact interval of test-statistic values
//! that reproduce it.
//!
//! With every discrete outcome of the pipeline held fixed — first-stage
//! active set and signs, debias active set and signs, final selection and
//! signs — both stages become linear systems, so each estimate is affine in
//! the statistic `z`, and every optimality condition (sign consistency of
//! active coordinates, subgradient bounds on inactive ones, the selection
//! threshold on final coefficients) is a one-dimensional linear inequality
//! `psi * z <= gamma`. Their intersection is the segment on which the fitted
//! outcome is exactly the one the pipeline would produce.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::data_model::{Interval, SelectionTrace, ZERO_THRESHOLD};
use crate::error::Result;
use crate::inference::LineSlice;
use crate::linalg::{self, Cholesky, GRAM_PIVOT_REL_TOL};
use crate::pipelines::PipelineSystem;

/// Slopes below this fraction of the largest slope are treated as zero.
pub const SLOPE_REL_TOL: f64 = 1e-12;

/// Constant rows (zero slope) tolerate this much relative violation before
/// the system is declared infeasible; it absorbs solver-tolerance dust.
pub const CONSTANT_ROW_SLACK: f64 = 1e-9;

/// Coefficients whose affine representation has slope and intercept both at
/// dust level are identically zero along the line and generate no rows.
const IDENTICALLY_ZERO_SLOPE: f64 = 1e-13;

/// A conjunction of inequalities `psi[i] * z <= gamma[i]`.
#[derive(Debug, Clone, Default)]
pub struct LinearSystem1D {
    pub psi: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Solution set of a [`LinearSystem1D`].
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(Interval),
    Infeasible,
}

impl LinearSystem1D {
    pub fn push(&mut self, psi: f64, gamma: f64) {
        self.psi.push(psi);
        self.gamma.push(gamma);
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// Intersect all half-lines. An empty system is the whole line; a
    /// constant row with a meaningfully negative bound is infeasible.
    pub fn interval_of(&self) -> Feasibility {
        let max_psi = self.psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let slope_tol = SLOPE_REL_TOL * max_psi;
        let max_gamma = self.gamma.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let const_tol = CONSTANT_ROW_SLACK * max_gamma;
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        for (&psi, &gamma) in self.psi.iter().zip(self.gamma.iter()) {
            if psi > slope_tol {
                upper = upper.min(gamma / psi);
            } else if psi < -slope_tol {
                lower = lower.max(gamma / psi);
            } else if gamma < -const_tol {
                return Feasibility::Infeasible;
            }
        }
        match Interval::new(lower, upper) {
            Some(iv) => Feasibility::Feasible(iv),
            None => Feasibility::Infeasible,
        }
    }
}

/// Affine representation (`value = *_a + z * *_b`) of every estimate in the
/// pipeline over one fixed selection outcome.
#[derive(Debug, Clone)]
pub struct RegionMatrices {
    pub stage_one_dim: usize,
    pub co_active: Vec<usize>,
    pub theta_a: DVector<f64>,
    pub theta_b: DVector<f64>,
    pub w_a: DVector<f64>,
    pub w_b: DVector<f64>,
    /// Debias-stage response (target residual), affine in `z`.
    pub resid_a: DVector<f64>,
    pub resid_b: DVector<f64>,
    pub debias_active: Vec<usize>,
    pub delta_a: DVector<f64>,
    pub delta_b: DVector<f64>,
    pub beta_a: DVector<f64>,
    pub beta_b: DVector<f64>,
}

impl RegionMatrices {
    fn scatter(idx: &[usize], a: &DVector<f64>, b: &DVector<f64>, z: f64, len: usize) -> DVector<f64> {
        let mut out = DVector::zeros(len);
        for (q, &i) in idx.iter().enumerate() {
            out[i] = a[q] + z * b[q];
        }
        out
    }

    /// First-stage coefficient vector at `z` (full length, zeros off the
    /// active set).
    pub fn theta_at(&self, z: f64) -> DVector<f64> {
        Self::scatter(&self.co_active, &self.theta_a, &self.theta_b, z, self.stage_one_dim)
    }

    /// Transferred estimate at `z`.
    pub fn w_at(&self, z: f64) -> DVector<f64> {
        &self.w_a + &self.w_b * z
    }

    /// Debias coefficients at `z` (full length).
    pub fn delta_at(&self, z: f64) -> DVector<f64> {
        Self::scatter(&self.debias_active, &self.delta_a, &self.delta_b, z, self.beta_a.len())
    }

    /// Final target coefficients at `z`.
    pub fn beta_at(&self, z: f64) -> DVector<f64> {
        &self.beta_a + &self.beta_b * z
    }
}

const STAGE_ONE_TAG: u8 = 1;
const STAGE_TWO_TAG: u8 = 2;

/// Cholesky factors of active-set Gram matrices, keyed by stage and index
/// set, reused across the segments of a scan.
#[derive(Default)]
pub struct GramCache {
    map: HashMap<(u8, Vec<usize>), Cholesky>,
}

impl GramCache {
    pub fn new() -> Self {
        GramCache { map: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn factor(&mut self, tag: u8, cols: &[usize], design: &DMatrix<f64>) -> Result<&Cholesky> {
        let key = (tag, cols.to_vec());
        if !self.map.contains_key(&key) {
            let xo = linalg::columns(design, cols);
            let g = linalg::gram(&xo);
            let chol = Cholesky::factor(&g, GRAM_PIVOT_REL_TOL)?;
            self.map.insert(key.clone(), chol);
        }
        Ok(self.map.get(&key).expect("just inserted"))
    }
}

/// Builds selection segments for one pipeline system along one response line.
pub struct RegionAssembler<'a> {
    sys: &'a PipelineSystem,
    line: &'a LineSlice,
    cache: GramCache,
}

impl<'a> RegionAssembler<'a> {
    pub fn new(sys: &'a PipelineSystem, line: &'a LineSlice) -> Self {
        RegionAssembler { sys, line, cache: GramCache::new() }
    }

    /// Number of distinct Gram factorizations computed so far.
    pub fn cached_factors(&self) -> usize {
        self.cache.len()
    }

    /// The interval of `z` on which the pipeline reproduces `trace` exactly,
    /// together with the affine form of every estimate on that interval.
    pub fn segment_for(&mut self, trace: &SelectionTrace) -> Result<(Feasibility, RegionMatrices)> {
        let sys = self.sys;
        let p = sys.p();
        let mut rows = LinearSystem1D::default();

        // --- first stage: active-coordinate closed form ---
        let s1_design = sys.stage_one_design();
        let s1_range = sys.stage_one_row_range();
        let n1 = s1_range.len();
        let a1 = self.line.a.rows(s1_range.start, n1);
        let b1 = self.line.b.rows(s1_range.start, n1);
        let lam1 = sys.stage_one_lambda_n();
        let weights1 = sys.stage_one_weights();
        let o = &trace.co_active;
        let s_o = &trace.co_signs;

        let (theta_a, theta_b) = if o.is_empty() {
            (DVector::zeros(0), DVector::zeros(0))
        } else {
            let mut rhs_a = DVector::zeros(o.len());
            let mut rhs_b = DVector::zeros(o.len());
            for (q, &i) in o.iter().enumerate() {
                let col = s1_design.column(i);
                rhs_a[q] = col.dot(&a1) - lam1 * weights1[i] * s_o[q];
                rhs_b[q] = col.dot(&b1);
            }
            let chol = self.cache.factor(STAGE_ONE_TAG, o, s1_design)?;
            (chol.solve_vec(&rhs_a), chol.solve_vec(&rhs_b))
        };

        // sign consistency of active coordinates: s * theta(z) >= 0
        for q in 0..o.len() {
            rows.push(-s_o[q] * theta_b[q], s_o[q] * theta_a[q]);
        }

        // subgradient bounds on inactive coordinates, normalized by their
        // penalty so every row is |t_a + z t_b| / d <= 1
        let mut r_a = a1.clone_owned();
        let mut r_b = b1.clone_owned();
        for (q, &i) in o.iter().enumerate() {
            r_a -= s1_design.column(i) * theta_a[q];
            r_b -= s1_design.column(i) * theta_b[q];
        }
        let t_a = s1_design.tr_mul(&r_a);
        let t_b = s1_design.tr_mul(&r_b);
        let mut active1 = vec![false; s1_design.ncols()];
        for &i in o {
            active1[i] = true;
        }
        for i in 0..s1_design.ncols() {
            if active1[i] {
                continue;
            }
            let d = lam1 * weights1[i];
            rows.push(t_b[i] / d, 1.0 - t_a[i] / d);
            rows.push(-t_b[i] / d, 1.0 + t_a[i] / d);
        }

        // transferred estimate, affine in z
        let mut w_a = DVector::zeros(p);
        let mut w_b = DVector::zeros(p);
        for (q, &i) in o.iter().enumerate() {
            let (f, m) = sys.combine_coeff(i);
            w_a[f] += m * theta_a[q];
            w_b[f] += m * theta_b[q];
        }

        // --- debias stage on the target residual ---
        let x0 = sys.target_design();
        let n_t = sys.n_t();
        let zp = sys.zero_prefix();
        let a_t = self.line.a.rows(zp, n_t);
        let b_t = self.line.b.rows(zp, n_t);
        let resid_a = a_t.clone_owned() - x0 * &w_a;
        let resid_b = b_t.clone_owned() - x0 * &w_b;
        let lam2 = sys.stage_two_lambda_n();
        let l_set = &trace.debias_active;
        let s_l = &trace.debias_signs;

        let (delta_a, delta_b) = if l_set.is_empty() {
            (DVector::zeros(0), DVector::zeros(0))
        } else {
            let mut rhs_a = DVector::zeros(l_set.len());
            let mut rhs_b = DVector::zeros(l_set.len());
            for (q, &j) in l_set.iter().enumerate() {
                let col = x0.column(j);
                rhs_a[q] = col.dot(&resid_a) - lam2 * s_l[q];
                rhs_b[q] = col.dot(&resid_b);
            }
            let chol = self.cache.factor(STAGE_TWO_TAG, l_set, x0)?;
            (chol.solve_vec(&rhs_a), chol.solve_vec(&rhs_b))
        };

        for q in 0..l_set.len() {
            rows.push(-s_l[q] * delta_b[q], s_l[q] * delta_a[q]);
        }

        let mut r2_a = resid_a.clone();
        let mut r2_b = resid_b.clone();
        for (q, &j) in l_set.iter().enumerate() {
            r2_a -= x0.column(j) * delta_a[q];
            r2_b -= x0.column(j) * delta_b[q];
        }
        let t2_a = x0.tr_mul(&r2_a);
        let t2_b = x0.tr_mul(&r2_b);
        let mut active2 = vec![false; p];
        for &j in l_set {
            active2[j] = true;
        }
        for j in 0..p {
            if active2[j] {
                continue;
            }
            rows.push(t2_b[j] / lam2, 1.0 - t2_a[j] / lam2);
            rows.push(-t2_b[j] / lam2, 1.0 + t2_a[j] / lam2);
        }

        // --- final selection thresholds ---
        let mut beta_a = w_a.clone();
        let mut beta_b = w_b.clone();
        for (q, &j) in l_set.iter().enumerate() {
            beta_a[j] += delta_a[q];
            beta_b[j] += delta_b[q];
        }
        let mut in_m = vec![false; p];
        for &j in &trace.selected {
            in_m[j] = true;
        }
        for (q, &j) in trace.selected.iter().enumerate() {
            let s = trace.selected_signs[q];
            // selected with sign s: s * beta_j(z) must clear the threshold
            rows.push(-s * beta_b[j], s * beta_a[j] - ZERO_THRESHOLD);
        }
        for j in 0..p {
            if in_m[j] {
                continue;
            }
            if beta_b[j].abs() <= IDENTICALLY_ZERO_SLOPE && beta_a[j].abs() <= ZERO_THRESHOLD {
                continue; // identically zero along the line
            }
            // unselected: |beta_j(z)| must stay at or below the threshold
            rows.push(beta_b[j], ZERO_THRESHOLD - beta_a[j]);
            rows.push(-beta_b[j], ZERO_THRESHOLD + beta_a[j]);
        }

        let feas = rows.interval_of();
        let mats = RegionMatrices {
            stage_one_dim: s1_design.ncols(),
            co_active: o.clone(),
            theta_a,
            theta_b,
            w_a,
            w_b,
            resid_a,
            resid_b,
            debias_active: l_set.clone(),
            delta_a,
            delta_b,
            beta_a,
            beta_b,
        };
        Ok((feas, mats))
    }
}

/// Do two fitted outcomes agree on every conditioned discrete event?
pub fn traces_match(a: &SelectionTrace, b: &SelectionTrace) -> bool {
    a.co_active == b.co_active
        && a.co_signs == b.co_signs
        && a.debias_active == b.debias_active
        && a.debias_signs == b.debias_signs
        && a.selected == b.selected
        && a.selected_signs == b.selected_signs
}
