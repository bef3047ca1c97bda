//! Small statistical helpers for the Monte Carlo harness: binomial interval,
//! Kolmogorov-Smirnov uniformity test, simple least-squares R^2.

/// Wilson score interval for a binomial proportion at ~95% coverage.
pub fn wilson_ci(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054_f64;
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Two-sided KS statistic of a sample against Uniform(0,1).
pub fn ks_statistic_uniform(sample: &[f64]) -> f64 {
    assert!(!sample.is_empty());
    let mut s: Vec<f64> = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let hi = (i + 1) as f64 / n - x;
        let lo = x - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Survival function of the Kolmogorov distribution,
/// `Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2)`, with the theta-dual form
/// for small `t` where that series converges slowly.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 0.4 {
        // Q(t) = 1 - sqrt(2 pi)/t * sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 t^2))
        let mut sum = 0.0;
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * t * t);
        for k in 1..20 {
            let m = (2 * k - 1) as f64;
            let term = (-m * m * c).exp();
            sum += term;
            if term < 1e-18 * sum.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / t * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..200 {
            let kk = k as f64;
            let term = (-2.0 * kk * kk * t * t).exp();
            if k % 2 == 1 {
                sum += term;
            } else {
                sum -= term;
            }
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Asymptotic two-sided KS test of uniformity; returns `(D, p)`.
/// Meant for samples of 1000 or more, where the asymptotic null is standard.
pub fn ks_test_uniform(sample: &[f64]) -> (f64, f64) {
    let d = ks_statistic_uniform(sample);
    let n = sample.len() as f64;
    (d, kolmogorov_sf(n.sqrt() * d))
}

/// Ordinary least squares of y on x with intercept; returns `(slope, intercept, r2)`.
/// R^2 is defined as 1 when the response is constant and perfectly fit.
pub fn linear_fit_r2(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 {
        return (0.0, my, if syy == 0.0 { 1.0 } else { 0.0 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if syy == 0.0 {
        return (slope, intercept, 1.0);
    }
    let mut ss_res = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let e = yi - (intercept + slope * xi);
        ss_res += e * e;
    }
    (slope, intercept, 1.0 - ss_res / syy)
}
