//! Summary statistics, multiple-testing correction and goodness of fit.

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (divisor n-1); 0 for fewer than two values.
pub fn sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

pub fn median(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn centered_sums(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy, sxx, syy)
}

/// Pearson correlation; NaN when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "pearson inputs differ in length");
    let (sxy, sxx, syy) = centered_sums(x, y);
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Least-squares slope of `y` on `x` (with intercept).
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "regression inputs differ in length");
    let (sxy, sxx, _) = centered_sums(x, y);
    sxy / sxx
}

/// Benjamini-Hochberg adjusted values and rejection flags.
#[derive(Debug, Clone, PartialEq)]
pub struct BhResult {
    pub q: Vec<f64>,
    pub significant: Vec<bool>,
}

/// Benjamini-Hochberg step-up adjustment; requires every p in (0,1].
pub fn bh_fdr(p: &[f64], alpha: f64) -> Result<BhResult> {
    if let Some(bad) = p.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(Error::invalid(format!("p-value {bad} is outside (0,1]")));
    }
    bh_adjust(p, alpha)
}

/// As [`bh_fdr`] but also admits p = 0, for unsmoothed permutation p-values.
pub fn bh_adjust(p: &[f64], alpha: f64) -> Result<BhResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("FDR level {alpha} is not in (0,1)")));
    }
    let q = bh_qvalues(p)?;
    let significant = q.iter().map(|&v| v < alpha).collect();
    Ok(BhResult { q, significant })
}

/// Step-up adjusted values `q_(i) = min_{k >= i} p_(k) m / k`.
pub fn bh_qvalues(p: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        return Err(Error::invalid(format!("p-value {bad} is outside [0,1]")));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &idx) in order.iter().enumerate().rev() {
        let adj = p[idx] * (m as f64 / (pos + 1) as f64);
        running = running.min(adj);
        q[idx] = running;
    }
    Ok(q)
}

/// One-sample Kolmogorov-Smirnov statistic against U(0,1).
pub fn ks_uniform_statistic(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (i, &u)| {
        let u = u.clamp(0.0, 1.0);
        d.max((i + 1) as f64 / n - u).max(u - i as f64 / n)
    })
}

/// Asymptotic Kolmogorov tail probability `Q(lambda)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS p-value with the finite-sample correction `(sqrt(n) + 0.12 + 0.11/sqrt(n)) d`.
pub fn ks_uniform_pvalue(d: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let rn = (n as f64).sqrt();
    kolmogorov_q((rn + 0.12 + 0.11 / rn) * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bh_hand_example() {
        let r = bh_fdr(&[0.01, 0.02, 0.03, 0.5], 0.05).unwrap();
        for (a, b) in r.q.iter().zip([0.04, 0.04, 0.04, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(r.significant, vec![true, true, true, false]);
    }

    #[test]
    fn bh_edge_cases() {
        let r = bh_fdr(&[1.0; 5], 0.05).unwrap();
        assert!(r.q.iter().all(|&q| q == 1.0));
        assert!(r.significant.iter().all(|&s| !s));
        let r = bh_fdr(&[0.04], 0.05).unwrap();
        assert_eq!(r.q, vec![0.04]);
        assert!(r.significant[0]);
        assert!(bh_fdr(&[0.0], 0.05).is_err());
        assert!(bh_fdr(&[1.5], 0.05).is_err());
        assert!(bh_adjust(&[0.0], 0.05).is_ok());
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Q(1.36) is the classical 5% critical point, Q(1.63) the 1% point.
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_statistic_of_perfect_grid() {
        let u: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        assert!((ks_uniform_statistic(&u) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn summaries() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(sd(&[1.0]), 0.0);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
        assert!((ols_slope(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 2.0).abs() < 1e-15);
    }
}
