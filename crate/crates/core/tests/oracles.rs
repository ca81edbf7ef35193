//! Library results checked against independent reference computations.

mod common;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use daa::assoc::{self, TestOptions};
use daa::classify;
use daa::ingest::Labels;
use daa::maxent;
use daa::stats;
use daa::transform::LogAbundanceMatrix;

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

#[test]
fn pseudo_inverse_matches_jacobi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = rng.gen_range(2..12);
        let spectrum: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.05..5.0) })
            .collect();
        let c = common::psd_with_spectrum(&spectrum, &mut rng);
        let got = maxent::pseudo_inverse(&c, 0.01).unwrap();
        let want = common::oracle_pinv(&c, 0.01);
        assert!((&got.j - &want).abs().max() < 1e-10);
        assert_eq!(got.retained, spectrum.iter().filter(|&&v| v > 0.0).count());
    }
}

#[test]
fn two_by_two_inverse_in_closed_form() {
    for &(a, b, d) in &[(2.0, 0.5, 1.0), (1.0, -0.9, 1.0), (4.0, 1.0, 0.5)] {
        let c = DMatrix::from_row_slice(2, 2, &[a, b, b, d]);
        let det = a * d - b * b;
        let want = DMatrix::from_row_slice(2, 2, &[d / det, -b / det, -b / det, a / det]);
        let got = maxent::pseudo_inverse(&c, 0.01).unwrap();
        assert!((&got.j - &want).abs().max() < 1e-12 * want.abs().max());
    }
}

#[test]
fn top_k_keeps_largest_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let c = common::psd_with_spectrum(&[5.0, 3.0, 1.0, 0.5], &mut rng);
    let k2 = maxent::pseudo_inverse_top_k(&c, 2).unwrap();
    let via_cutoff = maxent::pseudo_inverse(&c, 2.0).unwrap();
    assert_eq!(k2.retained, 2);
    assert!((&k2.j - &via_cutoff.j).abs().max() < 1e-12);
}

/// All labelings with the observed group sizes, by brute force.
fn exhaustive_fraction(x: &[f64], n_case: usize) -> f64 {
    let n = x.len();
    let stat = |mask: u32| {
        let (mut a, mut b) = (0.0, 0.0);
        for (j, v) in x.iter().enumerate() {
            if mask >> j & 1 == 1 {
                a += v;
            } else {
                b += v;
            }
        }
        a / n_case as f64 - b / (n - n_case) as f64
    };
    let observed = stat((1u32 << n_case) - 1).abs();
    let masks: Vec<u32> = (0..1u32 << n).filter(|m| m.count_ones() as usize == n_case).collect();
    let hits = masks.iter().filter(|&&m| stat(m).abs() >= observed * (1.0 - 1e-12)).count();
    hits as f64 / masks.len() as f64
}

#[test]
fn permutation_p_converges_to_exhaustive_enumeration() {
    let x = [3.0, 2.5, 0.0, 1.0];
    let exact = exhaustive_fraction(&x, 2);
    assert!((exact - 1.0 / 3.0).abs() < 1e-12);
    let l = LogAbundanceMatrix::new(
        vec!["t".into()],
        names("s", 4),
        DMatrix::from_row_slice(1, 4, &x),
        None,
    )
    .unwrap();
    let labels = Labels::from_mask(l.samples(), &[true, true, false, false]).unwrap();
    let n_perm = 20_000;
    let opts = TestOptions {
        n_perm,
        smoothed: false,
        ..TestOptions::default()
    };
    let raw = assoc::naive_mwas(&l, &labels, &opts).unwrap().rows[0].p;
    assert!((raw - exact).abs() < 0.015, "raw {raw} vs {exact}");
    let smoothed = assoc::naive_mwas(&l, &labels, &TestOptions { smoothed: true, ..opts }).unwrap().rows[0].p;
    let e = (raw * n_perm as f64).round();
    assert!((smoothed - (1.0 + e) / (n_perm as f64 + 1.0)).abs() < 1e-15);
}

#[test]
fn bh_matches_hand_computation() {
    let r = stats::bh_fdr(&[0.01, 0.02, 0.03, 0.5], 0.05).unwrap();
    let want = [0.04, 0.04, 0.04, 0.5];
    for (q, w) in r.q.iter().zip(want) {
        assert!((q - w).abs() < 1e-15);
    }
    assert_eq!(r.significant, vec![true, true, true, false]);
}

#[test]
fn bh_matches_brute_force_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let n = rng.gen_range(1..40);
        let p: Vec<f64> = (0..n).map(|_| (rng.gen_range(1..=20) as f64) / 20.0).collect();
        let got = stats::bh_fdr(&p, 0.1).unwrap();
        let (q, flags) = common::brute_force_bh(&p, 0.1);
        assert_eq!(got.q, q);
        assert_eq!(got.significant, flags);
    }
}

/// Grid search of the one-feature L1 logistic objective, refined twice.
fn grid_minimum(x: &DMatrix<f64>, y: &[bool], penalty: f64) -> f64 {
    let yf: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let obj = |w: f64, b: f64| {
        let loss: f64 = (0..x.nrows())
            .map(|i| {
                let eta = b + w * x[(i, 0)];
                (1.0 + eta.exp()).ln() - yf[i] * eta
            })
            .sum::<f64>()
            / x.nrows() as f64;
        loss + penalty * w.abs()
    };
    let (mut cw, mut cb, mut span) = (0.0, 0.0, 4.0);
    let mut best = obj(0.0, 0.0);
    for _ in 0..4 {
        let steps = 200;
        let (mut bw, mut bb) = (cw, cb);
        for a in 0..=steps {
            for c in 0..=steps {
                let w = cw - span + 2.0 * span * a as f64 / steps as f64;
                let b = cb - span + 2.0 * span * c as f64 / steps as f64;
                let v = obj(w, b);
                if v < best {
                    best = v;
                    bw = w;
                    bb = b;
                }
            }
        }
        cw = bw;
        cb = bb;
        span /= 20.0;
    }
    best
}

#[test]
fn l1_logistic_reaches_grid_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for &penalty in &[0.001, 0.02, 0.1] {
        let n = 60;
        let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let x = DMatrix::from_fn(n, 1, |i, _| if y[i] { 0.6 } else { -0.4 } + rng.gen_range(-1.0..1.0));
        let fit = classify::l1_logistic_fit(&x, &y, penalty).unwrap();
        assert!(fit.converged);
        let got = classify::objective(&x, &y, &fit.weights, fit.intercept, penalty);
        let grid = grid_minimum(&x, &y, penalty);
        assert!(got <= grid + 1e-7, "penalty {penalty}: {got} vs grid {grid}");
        assert!(grid - got < 1e-4);
    }
}

#[test]
fn large_penalty_zeroes_all_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let y: Vec<bool> = (0..40).map(|i| i < 15).collect();
    let x = DMatrix::from_fn(40, 3, |_, _| rng.gen_range(-1.0..1.0));
    let fit = classify::l1_logistic_fit(&x, &y, 10.0).unwrap();
    assert!(fit.weights.iter().all(|&w| w == 0.0));
    let rate: f64 = 15.0 / 40.0;
    assert!((fit.intercept - (rate / (1.0 - rate)).ln()).abs() < 1e-5);
}

#[test]
fn gaussian_sample_reproduces_moments() {
    let m = DVector::from_column_slice(&[1.0, -0.5, 0.2]);
    let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.4, 0.8, 0.1, -0.2, 0.1, 0.5]);
    let n = 200_000;
    let x = maxent::sample(&m, &c, n, 16).unwrap();
    let l = LogAbundanceMatrix::new(names("t", 3), names("s", n), x.clone(), None).unwrap();
    let (mh, ch) = maxent::estimate_moments(&l).unwrap();
    assert!((&mh - &m).abs().max() < 0.01);
    assert!((&ch - &c).abs().max() < 0.015);
    let pred = maxent::predict_higher_moments(&m, &c).unwrap();
    let obs = maxent::observed_higher_moments(&x);
    for (p, o) in pred.third_noncentral.iter().zip(&obs.third_noncentral) {
        assert!((p - o).abs() < 0.05, "third {p} vs {o}");
    }
    for (p, o) in pred.fourth_central.iter().zip(&obs.fourth_central) {
        assert!((p - o).abs() < 0.05, "fourth {p} vs {o}");
    }
}

#[test]
fn isserlis_formula_by_hand() {
    let m = DVector::from_column_slice(&[1.0, 2.0]);
    let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
    // E[x0 x0 x1] = m0² m1 + C00 m1 + 2 C01 m0
    assert!((maxent::third_noncentral(&m, &c, 0, 0, 1) - (2.0 + 2.0 + 1.0)).abs() < 1e-14);
    // central E[x0² x1²] = C00 C11 + 2 C01²
    assert!((maxent::fourth_central(&c, 0, 0, 1, 1) - (2.0 + 0.5)).abs() < 1e-14);
    assert!((maxent::fourth_central(&c, 1, 1, 1, 1) - 12.0).abs() < 1e-14);
}

#[test]
fn ks_critical_values() {
    assert!((stats::kolmogorov_q(1.358) - 0.05).abs() < 5e-4);
    assert!((stats::kolmogorov_q(1.628) - 0.01).abs() < 5e-4);
}
