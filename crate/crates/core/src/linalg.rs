//! Dense symmetric-matrix helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn symmetric_eigen(a: &DMatrix<f64>) -> Eigen {
    let se = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| se.eigenvalues[y].total_cmp(&se.eigenvalues[x]).then(x.cmp(&y)));
    let values = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vectors = se.eigenvectors.select_columns(&order);
    Eigen { values, vectors }
}

/// Largest `|a_ij - a_ji|`.
pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Copies the upper triangle onto the lower one.
pub fn mirror_upper(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            a[(j, i)] = a[(i, j)];
        }
    }
}

/// Row means of a variables-by-observations matrix.
pub fn row_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.ncols() as f64;
    DVector::from_iterator(x.nrows(), x.row_iter().map(|r| r.sum() / n))
}

/// Sample covariance (divisor n-1) of a variables-by-observations matrix.
pub fn covariance(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let (p, n) = x.shape();
    let mut centered = x.clone();
    for j in 0..n {
        let mut col = centered.column_mut(j);
        col -= mean;
    }
    let mut c = DMatrix::zeros(p, p);
    for i in 0..p {
        for k in i..p {
            let mut s = 0.0;
            for j in 0..n {
                s += centered[(i, j)] * centered[(k, j)];
            }
            c[(i, k)] = s / (n as f64 - 1.0);
        }
    }
    mirror_upper(&mut c);
    c
}

/// Pearson correlation matrix from a covariance; zero-variance rows give 0.
pub fn correlation_from_covariance(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let d = (c[(i, i)] * c[(j, j)]).sqrt();
        if i == j {
            1.0
        } else if d > 0.0 {
            c[(i, j)] / d
        } else {
            0.0
        }
    })
}
