//! Coordinate-descent solver for the weighted L1-penalized least-squares
//! problem
//!
//! ```text
//! minimize over beta:  1/(2n) * ||y - X beta||^2  +  lambda * sum_i w_i |beta_i|
//! ```
//!
//! with `n` an explicit scale (not necessarily the row count), no intercept,
//! and per-coordinate nonnegative weights `w`.

use nalgebra::{DMatrix, DVector};

use crate::data_model::ZERO_THRESHOLD;
use crate::error::{CoreError, Result};

/// Problem data for one solve. `scale` is the `n` in the `1/(2n)` factor.
#[derive(Debug, Clone)]
pub struct L1Problem {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub lambda: f64,
    pub weights: DVector<f64>,
    pub scale: f64,
}

impl L1Problem {
    pub fn new(
        design: DMatrix<f64>,
        response: DVector<f64>,
        lambda: f64,
        weights: DVector<f64>,
        scale: f64,
    ) -> Result<Self> {
        if response.len() != design.nrows() {
            return Err(CoreError::validation(format!(
                "response length {} does not match design rows {}",
                response.len(),
                design.nrows()
            )));
        }
        if weights.len() != design.ncols() {
            return Err(CoreError::validation(format!(
                "weight length {} does not match design columns {}",
                weights.len(),
                design.ncols()
            )));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(CoreError::validation(format!("lambda must be nonnegative, got {lambda}")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(CoreError::validation(format!("scale must be positive, got {scale}")));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(CoreError::validation("penalty weights must be finite and nonnegative"));
        }
        for v in design.iter().chain(response.iter()) {
            if !v.is_finite() {
                return Err(CoreError::validation("non-finite entry in problem data"));
            }
        }
        Ok(L1Problem { design, response, lambda, weights, scale })
    }

    /// Borrowed form, for callers that reuse a large design across solves.
    pub fn view(&self) -> L1View<'_> {
        L1View {
            design: &self.design,
            response: &self.response,
            lambda: self.lambda,
            weights: &self.weights,
            scale: self.scale,
        }
    }

    /// Penalized objective at `beta`.
    pub fn objective(&self, beta: &DVector<f64>) -> f64 {
        self.view().objective(beta)
    }

    /// Worst coordinate-wise violation of the stationarity conditions at
    /// `beta`: for active coordinates the gradient must sit at
    /// `-lambda w_i sign(beta_i)`, for inactive ones inside
    /// `[-lambda w_i, lambda w_i]`.
    pub fn kkt_check(&self, beta: &DVector<f64>) -> f64 {
        self.view().kkt_check(beta)
    }
}

/// Borrowed problem data; all invariants are the caller's responsibility
/// beyond the dimension checks done at solve time.
#[derive(Debug, Clone, Copy)]
pub struct L1View<'a> {
    pub design: &'a DMatrix<f64>,
    pub response: &'a DVector<f64>,
    pub lambda: f64,
    pub weights: &'a DVector<f64>,
    pub scale: f64,
}

impl L1View<'_> {
    pub fn objective(&self, beta: &DVector<f64>) -> f64 {
        let r = self.response - self.design * beta;
        let fit = r.norm_squared() / (2.0 * self.scale);
        let pen: f64 = beta
            .iter()
            .zip(self.weights.iter())
            .map(|(&b, &w)| w * b.abs())
            .sum();
        fit + self.lambda * pen
    }

    pub fn kkt_check(&self, beta: &DVector<f64>) -> f64 {
        let r = self.response - self.design * beta;
        let g = self.design.tr_mul(&r) / self.scale; // = -grad of fit term
        let mut worst: f64 = 0.0;
        for i in 0..beta.len() {
            let lw = self.lambda * self.weights[i];
            let v = if beta[i].abs() > ZERO_THRESHOLD {
                (g[i] - lw * beta[i].signum()).abs()
            } else {
                (g[i].abs() - lw).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Solver controls.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Maximum allowed stationarity violation at exit.
    pub tol: f64,
    /// Hard cap on full coordinate sweeps.
    pub max_sweeps: usize,
    /// Optional starting point (must match the column count).
    pub warm_start: Option<DVector<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-8, max_sweeps: 100_000, warm_start: None }
    }
}

/// Solver output: the minimizer plus exit diagnostics.
#[derive(Debug, Clone)]
pub struct L1Solution {
    pub beta: DVector<f64>,
    pub sweeps: usize,
    pub kkt_residual: f64,
}

fn soft_threshold(rho: f64, t: f64) -> f64 {
    if rho > t {
        rho - t
    } else if rho < -t {
        rho + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent with exact single-coordinate minimization.
///
/// Coordinates whose update lands exactly on the soft-threshold kink are set
/// to exact zero, so active sets can be read off the solution directly.
pub fn solve(problem: &L1Problem, opts: &SolveOptions) -> Result<L1Solution> {
    solve_view(problem.view(), opts)
}

/// [`solve`] over borrowed data.
pub fn solve_view(problem: L1View<'_>, opts: &SolveOptions) -> Result<L1Solution> {
    let n_cols = problem.design.ncols();
    if problem.response.len() != problem.design.nrows() || problem.weights.len() != n_cols {
        return Err(CoreError::validation("solver input dimensions do not agree"));
    }
    let mut beta = match &opts.warm_start {
        Some(b0) => {
            if b0.len() != n_cols {
                return Err(CoreError::validation(format!(
                    "warm start length {} does not match column count {}",
                    b0.len(),
                    n_cols
                )));
            }
            b0.clone()
        }
        None => DVector::zeros(n_cols),
    };

    // Cached per-column curvature c_i = ||x_i||^2 / n.
    let col_sq: Vec<f64> = (0..n_cols)
        .map(|i| problem.design.column(i).norm_squared() / problem.scale)
        .collect();

    // Residual maintained incrementally.
    let mut r = problem.response - problem.design * &beta;

    let mut sweeps = 0;
    loop {
        for i in 0..n_cols {
            let c = col_sq[i];
            if c == 0.0 {
                // A zero column contributes nothing to the fit; the penalized
                // minimum over this coordinate is zero whenever w_i > 0, and
                // the coordinate is irrelevant when w_i == 0.
                if beta[i] != 0.0 {
                    r += problem.design.column(i) * beta[i];
                    beta[i] = 0.0;
                }
                continue;
            }
            let xi = problem.design.column(i);
            let rho = xi.dot(&r) / problem.scale + c * beta[i];
            let new = soft_threshold(rho, problem.lambda * problem.weights[i]) / c;
            let diff = new - beta[i];
            if diff != 0.0 {
                r -= xi * diff;
                beta[i] = new;
            }
        }
        sweeps += 1;
        let kkt = problem.kkt_check(&beta);
        if kkt <= opts.tol {
            return Ok(L1Solution { beta, sweeps, kkt_residual: kkt });
        }
        if sweeps >= opts.max_sweeps {
            return Err(CoreError::NonConvergence { kkt_residual: kkt, iterations: sweeps });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::active_set;
    use crate::linalg::{self, Cholesky, GRAM_PIVOT_REL_TOL};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn unit_weights(p: usize) -> DVector<f64> {
        DVector::from_element(p, 1.0)
    }

    /// Dense grid search over one coordinate, used as an independent check
    /// of small solves.
    fn grid_min_1d(problem: &L1Problem, lo: f64, hi: f64, steps: usize) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for s in 0..=steps {
            let b = lo + (hi - lo) * (s as f64) / (steps as f64);
            let v = problem.objective(&DVector::from_row_slice(&[b]));
            if v < best.0 {
                best = (v, b);
            }
        }
        best.1
    }

    #[test]
    fn single_column_shrinkage_matches_grid() {
        // X = [1;1], y = (2,2), n = 2, lambda = 0 -> beta = 2
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let y = DVector::from_row_slice(&[2.0, 2.0]);
        let p0 = L1Problem::new(x.clone(), y.clone(), 0.0, unit_weights(1), 2.0).unwrap();
        let s0 = solve(&p0, &SolveOptions::default()).unwrap();
        assert_relative_eq!(s0.beta[0], 2.0, epsilon = 1e-10);

        // lambda = 1, w = 2: rho = 2, threshold 2 -> exact kink -> beta = 0...
        // use w = 1 first: beta = soft(2, 1)/1 = 1
        let p1 = L1Problem::new(
            x.clone(),
            y.clone(),
            1.0,
            DVector::from_row_slice(&[1.0]),
            2.0,
        )
        .unwrap();
        let s1 = solve(&p1, &SolveOptions::default()).unwrap();
        assert_relative_eq!(s1.beta[0], 1.0, epsilon = 1e-10);
        let g = grid_min_1d(&p1, -1.0, 3.0, 400_000);
        assert!((s1.beta[0] - g).abs() < 1e-4);

        // doubling the weight halves the surviving coefficient here
        let p2 = L1Problem::new(x, y, 1.0, DVector::from_row_slice(&[2.0]), 2.0).unwrap();
        let s2 = solve(&p2, &SolveOptions::default()).unwrap();
        assert!(s2.beta[0].abs() < 1e-15, "kink case must give exact zero, got {}", s2.beta[0]);
    }

    #[test]
    fn tie_at_kink_is_exact_zero() {
        // rho lands exactly at lambda * w: coefficient must be exactly 0.0
        let x = DMatrix::from_row_slice(1, 1, &[1.0]);
        let y = DVector::from_row_slice(&[3.0]);
        // n=1: rho = 3, choose lambda = 3, w = 1
        let p = L1Problem::new(x, y, 3.0, unit_weights(1), 1.0).unwrap();
        let s = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(s.beta[0], 0.0);
    }

    #[test]
    fn large_penalty_kills_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = DMatrix::from_fn(12, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(12, |_, _| rng.sample::<f64, _>(StandardNormal));
        let lam_max = (x.tr_mul(&y) / 12.0).abs().max() * 1.001;
        let p = L1Problem::new(x, y, lam_max, unit_weights(6), 12.0).unwrap();
        let s = solve(&p, &SolveOptions::default()).unwrap();
        assert!(s.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn kkt_residual_reported_and_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(30, 12, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(30, |_, _| rng.sample::<f64, _>(StandardNormal));
        let p = L1Problem::new(x, y, 0.08, unit_weights(12), 30.0).unwrap();
        let s = solve(&p, &SolveOptions::default()).unwrap();
        assert!(s.kkt_residual <= 1e-8);
        assert_relative_eq!(p.kkt_check(&s.beta), s.kkt_residual, epsilon = 1e-15);
        // perturbing the solution off-optimum worsens the residual
        let mut b = s.beta.clone();
        b[0] += 1e-3;
        assert!(p.kkt_check(&b) > s.kkt_residual);
    }

    #[test]
    fn objective_decreases_across_restarts() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = DMatrix::from_fn(25, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(25, |_, _| rng.sample::<f64, _>(StandardNormal));
        let p = L1Problem::new(x, y, 0.05, unit_weights(10), 25.0).unwrap();
        let cold = solve(&p, &SolveOptions::default()).unwrap();
        // a warm start from a random point reaches the same optimum
        let w0 = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let warm = solve(
            &p,
            &SolveOptions { warm_start: Some(w0.clone()), ..SolveOptions::default() },
        )
        .unwrap();
        assert!(p.objective(&warm.beta) <= p.objective(&w0) + 1e-12);
        assert_relative_eq!(p.objective(&cold.beta), p.objective(&warm.beta), epsilon = 1e-10);
    }

    #[test]
    fn matches_active_set_closed_form() {
        // With the active set and signs fixed at the optimum, the minimizer
        // solves G beta_A = X_A^T y - n lambda (w .* s)_A.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..20 {
            let n = 40;
            let p_dim = 8;
            let x = DMatrix::from_fn(n, p_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let beta_true = {
                let mut b = DVector::zeros(p_dim);
                b[0] = 1.5;
                b[1] = -1.0;
                b
            };
            let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = &x * &beta_true + noise * 0.3;
            let lam = 0.05 + 0.01 * (trial as f64);
            let prob = L1Problem::new(x.clone(), y.clone(), lam, unit_weights(p_dim), n as f64)
                .unwrap();
            let sol = solve(&prob, &SolveOptions::default()).unwrap();
            let (act, signs) = active_set(&sol.beta);
            if act.is_empty() {
                continue;
            }
            let xa = linalg::columns(&x, &act);
            let g = linalg::gram(&xa);
            let chol = Cholesky::factor(&g, GRAM_PIVOT_REL_TOL).unwrap();
            let mut rhs = xa.tr_mul(&y);
            for (r, &s) in rhs.iter_mut().zip(signs.iter()) {
                *r -= (n as f64) * lam * s;
            }
            let closed = chol.solve_vec(&rhs);
            for (pos, &i) in act.iter().enumerate() {
                assert_relative_eq!(sol.beta[i], closed[pos], epsilon = 1e-6, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn two_dim_grid_confirms_optimum() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.3, 0.2, 1.1, 0.9, -0.4, -0.1, 0.8]);
        let y = DVector::from_row_slice(&[1.2, -0.3, 0.8, 0.5]);
        let p = L1Problem::new(x, y, 0.1, unit_weights(2), 4.0).unwrap();
        let s = solve(&p, &SolveOptions::default()).unwrap();
        let obj = p.objective(&s.beta);
        let steps = 400;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                let b = DVector::from_row_slice(&[
                    -2.0 + 4.0 * (i as f64) / (steps as f64),
                    -2.0 + 4.0 * (j as f64) / (steps as f64),
                ]);
                best = best.min(p.objective(&b));
            }
        }
        assert!(obj <= best + 1e-6, "solver {obj} vs grid {best}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = DMatrix::identity(2, 2);
        let y = DVector::from_row_slice(&[1.0, 2.0]);
        assert!(L1Problem::new(x.clone(), y.clone(), -1.0, unit_weights(2), 2.0).is_err());
        assert!(L1Problem::new(x.clone(), y.clone(), 1.0, unit_weights(3), 2.0).is_err());
        assert!(L1Problem::new(x.clone(), y.clone(), 1.0, unit_weights(2), 0.0).is_err());
        assert!(L1Problem::new(
            x,
            DVector::from_row_slice(&[1.0]),
            1.0,
            unit_weights(2),
            2.0
        )
        .is_err());
    }

    #[test]
    fn zero_column_coefficient_is_zero() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let y = DVector::from_row_slice(&[1.0, 1.0, 1.0]);
        let p = L1Problem::new(x, y, 0.01, unit_weights(2), 3.0).unwrap();
        let s = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(s.beta[1], 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Permuting columns permutes the solution accordingly.
        #[test]
        fn permutation_equivariance(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 15;
            let pd = 5;
            let x = DMatrix::from_fn(n, pd, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let w = DVector::from_fn(pd, |i, _| 0.5 + 0.25 * (i as f64));
            let prob = L1Problem::new(x.clone(), y.clone(), 0.07, w.clone(), n as f64).unwrap();
            let sol = solve(&prob, &SolveOptions::default()).unwrap();

            let perm: Vec<usize> = vec![3, 0, 4, 1, 2];
            let xp = linalg::columns(&x, &perm);
            let wp = DVector::from_fn(pd, |i, _| w[perm[i]]);
            let prob_p = L1Problem::new(xp, y, 0.07, wp, n as f64).unwrap();
            let sol_p = solve(&prob_p, &SolveOptions::default()).unwrap();
            for (new_pos, &orig) in perm.iter().enumerate() {
                prop_assert!((sol_p.beta[new_pos] - sol.beta[orig]).abs() < 1e-7,
                    "coordinate {orig} moved: {} vs {}", sol_p.beta[new_pos], sol.beta[orig]);
            }
        }

        /// The exit certificate holds on random problems.
        #[test]
        fn kkt_certificate_random(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
            let n = 12;
            let pd = 8; // wide: more columns than informative rows is fine
            let x = DMatrix::from_fn(n, pd, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let lam = 0.02 + 0.1 * rng.random::<f64>();
            let prob = L1Problem::new(x, y, lam, DVector::from_element(pd, 1.0), n as f64).unwrap();
            let sol = solve(&prob, &SolveOptions::default()).unwrap();
            prop_assert!(sol.kkt_residual <= 1e-8);
        }
    }
}
