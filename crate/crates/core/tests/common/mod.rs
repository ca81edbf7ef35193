//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and the matching eigenvectors as columns, unsorted.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Thresholded pseudoinverse built from the Jacobi decomposition.
pub fn oracle_pinv(c: &DMatrix<f64>, lambda_min: f64) -> DMatrix<f64> {
    let (vals, vecs) = jacobi_eigen(c);
    let n = c.nrows();
    let mut j = DMatrix::zeros(n, n);
    for (k, &l) in vals.iter().enumerate() {
        if l >= lambda_min {
            let v = vecs.column(k);
            j += (v * v.transpose()) / l;
        }
    }
    j
}

/// Random orthogonal matrix from Gram-Schmidt on Gaussian columns.
pub fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    use rand_distr::StandardNormal;
    loop {
        let mut q = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        let mut ok = true;
        for k in 0..n {
            for prev in 0..k {
                let d = q.column(prev).dot(&q.column(k));
                let pc = q.column(prev).clone_owned();
                q.column_mut(k).axpy(-d, &pc, 1.0);
            }
            let norm = q.column(k).norm();
            if norm < 1e-6 {
                ok = false;
                break;
            }
            q.column_mut(k).scale_mut(1.0 / norm);
        }
        if ok {
            return q;
        }
    }
}

/// Symmetric PSD matrix `Q diag(spectrum) Qᵀ`.
pub fn psd_with_spectrum<R: Rng>(spectrum: &[f64], rng: &mut R) -> DMatrix<f64> {
    let q = random_orthogonal(spectrum.len(), rng);
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(spectrum));
    let a = &q * d * q.transpose();
    (&a + a.transpose()) * 0.5
}

/// Step-up BH by its definition: `q_i = min over ranks j whose p is at least
/// p_i of min(1, p_(j)·(m/j))`; flagged when `q < alpha`.
pub fn brute_force_bh(p: &[f64], alpha: f64) -> (Vec<f64>, Vec<bool>) {
    let m = p.len();
    let mut sorted: Vec<f64> = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q: Vec<f64> = p
        .iter()
        .map(|&pi| {
            let mut best = f64::INFINITY;
            for (j, &pj) in sorted.iter().enumerate() {
                if pj >= pi {
                    best = best.min(pj * (m as f64 / (j + 1) as f64));
                }
            }
            best.min(1.0)
        })
        .collect();
    let flags = q.iter().map(|&x| x < alpha).collect();
    (q, flags)
}

/// Smallest `k` with `P(Binomial(n, p) <= k) >= level`.
pub fn binomial_quantile(n: usize, p: f64, level: f64) -> usize {
    let mut cdf = 0.0;
    let mut pmf = (1.0 - p).powi(n as i32);
    for k in 0..=n {
        cdf += pmf;
        if cdf >= level {
            return k;
        }
        pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
    }
    n
}
