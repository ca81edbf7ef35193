//! Property tests over randomly generated inputs.

mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use daa::assoc::{self, TestOptions};
use daa::classify;
use daa::ingest::{self, CountMatrix, Labels};
use daa::maxent;
use daa::network::{self, EdgeKind};
use daa::stats;
use daa::synth;
use daa::transform::{self, LogAbundanceMatrix, Normalization, Scheme};

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:03}")).collect()
}

fn counts_strategy() -> impl Strategy<Value = (CountMatrix, Vec<bool>)> {
    (2usize..8, 4usize..16).prop_flat_map(|(p, n)| {
        (
            prop::collection::vec(prop_oneof![Just(0u64), 1u64..500], p * n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(v, mut mask)| {
                mask[0] = true;
                mask[1] = false;
                let m = CountMatrix::new(names("t", p), names("s", n), DMatrix::from_vec(p, n, v)).unwrap();
                (m, mask)
            })
    })
}

fn values_strategy() -> impl Strategy<Value = (LogAbundanceMatrix, Vec<bool>)> {
    (2usize..6, 6usize..20).prop_flat_map(|(p, n)| {
        (
            prop::collection::vec(-5.0f64..5.0, p * n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(v, mut mask)| {
                mask[0] = true;
                mask[1] = true;
                mask[2] = false;
                mask[3] = false;
                let l = LogAbundanceMatrix::new(names("t", p), names("s", n), DMatrix::from_vec(p, n, v), None).unwrap();
                (l, mask)
            })
    })
}

fn quick(seed: u64) -> TestOptions {
    TestOptions {
        n_perm: 200,
        seed,
        ..TestOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn count_table_round_trips((m, _) in counts_strategy()) {
        let text = ingest::format_count_table(&m);
        let back = ingest::parse_count_table_str(&text, "mem").unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn labels_round_trip((m, mask) in counts_strategy()) {
        let labels = Labels::from_mask(m.samples(), &mask).unwrap();
        let text = ingest::format_labels(&labels, m.samples()).unwrap();
        prop_assert_eq!(ingest::parse_labels_str(&text, "mem").unwrap(), labels);
    }

    #[test]
    fn value_table_round_trips((l, _) in values_strategy()) {
        let text = transform::format_value_table(&l);
        let back = transform::parse_value_table_str(&text, "mem").unwrap();
        prop_assert_eq!(back.values(), l.values());
        prop_assert_eq!(back.taxa(), l.taxa());
    }

    #[test]
    fn prevalence_filter_is_idempotent_and_monotone((m, mask) in counts_strategy(), a in 0.05f64..0.95, b in 0.05f64..0.95) {
        let labels = Labels::from_mask(m.samples(), &mask).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if let Ok(once) = ingest::filter_prevalence(&m, &labels, lo) {
            let twice = ingest::filter_prevalence(&once, &labels, lo).unwrap();
            prop_assert_eq!(&twice, &once);
            if let Ok(strict) = ingest::filter_prevalence(&m, &labels, hi) {
                prop_assert!(strict.taxa().iter().all(|t| once.taxa().contains(t)));
            }
        } else {
            prop_assert!(ingest::filter_prevalence(&m, &labels, hi).is_err());
        }
    }

    #[test]
    fn clr_rows_are_centered((m, _) in counts_strategy()) {
        let l = transform::log_transform(&m, Normalization { scheme: Scheme::Clr, ..Normalization::default() }).unwrap();
        for row in l.values().row_iter() {
            prop_assert!(row.sum().abs() / row.len() as f64 <= 1e-12);
        }
    }

    #[test]
    fn tss_abundances_sum_to_one_without_pseudocount_mass((m, _) in counts_strategy()) {
        prop_assume!(m.totals().iter().all(|&t| t > 0));
        let l = transform::log_transform(&m, Normalization { pseudocount: 1e-300, ..Normalization::default() }).unwrap();
        for col in l.values().column_iter() {
            let s: f64 = col.iter().map(|v| v.exp()).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn label_swap_negates_statistics((l, mask) in values_strategy(), seed in 0u64..1000) {
        let labels = Labels::from_mask(l.samples(), &mask).unwrap();
        let swapped = labels.swapped();
        for method in [assoc::Method::Naive, assoc::Method::Daa] {
            let a = assoc::run_method(method, &l, &labels, &quick(seed));
            let b = assoc::run_method(method, &l, &swapped, &quick(seed));
            if let (Ok(a), Ok(b)) = (a, b) {
                for (x, y) in a.rows.iter().zip(&b.rows) {
                    prop_assert_eq!(x.statistic, -y.statistic);
                    prop_assert_eq!(x.p, y.p);
                }
            }
        }
    }

    #[test]
    fn identity_interactions_reduce_to_naive((l, mask) in values_strategy(), seed in 0u64..1000) {
        let labels = Labels::from_mask(l.samples(), &mask).unwrap();
        let p = l.n_taxa();
        let naive = assoc::naive_mwas(&l, &labels, &quick(seed)).unwrap();
        let daa = assoc::daa_with_interactions(&l, &labels, &DMatrix::identity(p, p), p, &quick(seed)).unwrap();
        for (x, y) in naive.rows.iter().zip(&daa.rows) {
            prop_assert!((x.statistic - y.statistic).abs() <= 1e-12 * (1.0 + x.statistic.abs()));
            prop_assert_eq!(x.p, y.p);
        }
    }

    #[test]
    fn p_and_q_are_valid((l, mask) in values_strategy(), seed in 0u64..1000, smoothed in any::<bool>()) {
        let labels = Labels::from_mask(l.samples(), &mask).unwrap();
        let opts = TestOptions { smoothed, ..quick(seed) };
        if let Ok(t) = assoc::daa(&l, &labels, &opts) {
            for r in &t.rows {
                prop_assert!(r.p <= 1.0 && r.q <= 1.0 && r.q >= r.p);
                if smoothed {
                    prop_assert!(r.p > 0.0);
                }
                prop_assert_eq!(r.significant, r.q < opts.alpha);
            }
        }
    }

    #[test]
    fn daa_is_equivariant_under_taxon_order((l, mask) in values_strategy(), seed in 0u64..1000) {
        let labels = Labels::from_mask(l.samples(), &mask).unwrap();
        let p = l.n_taxa();
        let order: Vec<usize> = (0..p).rev().collect();
        let a = assoc::daa(&l, &labels, &quick(seed));
        let b = assoc::daa(&l.select_taxa(&order), &labels, &quick(seed));
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert_eq!(a.retained, b.retained);
            for (k, &i) in order.iter().enumerate() {
                let scale = 1.0 + a.rows[i].statistic.abs();
                prop_assert!((a.rows[i].statistic - b.rows[k].statistic).abs() < 1e-8 * scale);
            }
        }
    }

    #[test]
    fn bh_properties(p in prop::collection::vec(1e-6f64..=1.0, 1..60), alpha in 0.01f64..0.5) {
        let r = stats::bh_fdr(&p, alpha).unwrap();
        let (q, flags) = common::brute_force_bh(&p, alpha);
        prop_assert_eq!(&r.q, &q);
        prop_assert_eq!(&r.significant, &flags);
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
        for w in order.windows(2) {
            prop_assert!(r.q[w[0]] <= r.q[w[1]]);
        }
        for (qi, pi) in r.q.iter().zip(&p) {
            prop_assert!(qi >= pi);
        }
    }

    #[test]
    fn l1_norm_shrinks_with_penalty(seed in 0u64..500, n in 20usize..50) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
        let x = DMatrix::from_fn(n, 3, |i, k| rng.gen_range(-1.0..1.0) + if y[i] && k == 0 { 0.5 } else { 0.0 });
        let mut last = f64::INFINITY;
        for &penalty in &classify::PENALTY_LADDER {
            let fit = classify::l1_logistic_fit(&x, &y, penalty).unwrap();
            prop_assert!(fit.converged);
            let norm: f64 = fit.weights.iter().map(|w| w.abs()).sum();
            prop_assert!(norm <= last + 1e-4);
            last = norm;
        }
    }

    #[test]
    fn folds_cover_every_sample_once(n_case in 5usize..40, n_ctrl in 5usize..40, folds in 2usize..6, seed in 0u64..1000) {
        let mask: Vec<bool> = (0..n_case + n_ctrl).map(|j| j < n_case).collect();
        let f = classify::stratified_folds(&mask, folds, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(f.len(), mask.len());
        for k in 0..folds {
            let cases = (0..mask.len()).filter(|&j| f[j] == k && mask[j]).count();
            let ctrls = (0..mask.len()).filter(|&j| f[j] == k && !mask[j]).count();
            prop_assert!(cases.abs_diff(n_case / folds) <= 1);
            prop_assert!(ctrls.abs_diff(n_ctrl / folds) <= 1);
        }
    }

    #[test]
    fn stricter_cutoffs_give_edge_subsets(vals in prop::collection::vec(-1.0f64..1.0, 15), qs in prop::collection::vec(0.0f64..0.1, 15), bump in 0.0f64..0.5) {
        let p = 6;
        let mut w = DMatrix::zeros(p, p);
        let mut q = DMatrix::from_element(p, p, 1.0);
        let mut k = 0;
        for i in 0..p {
            for j in (i + 1)..p {
                w[(i, j)] = vals[k];
                w[(j, i)] = vals[k];
                q[(i, j)] = qs[k];
                q[(j, i)] = qs[k];
                k += 1;
            }
        }
        let taxa = names("t", p);
        let loose = network::extract_edges(&taxa, &w, &q, EdgeKind::Correlation, 0.27, -0.15, 0.05).unwrap();
        let strict = network::extract_edges(&taxa, &w, &q, EdgeKind::Correlation, 0.27 + bump, -0.15 - bump, 0.05).unwrap();
        for e in &strict.edges {
            prop_assert!(loose.edges.contains(e));
            prop_assert!(e.a != e.b && e.q < 0.05 && (e.weight > 0.27 + bump || e.weight < -0.15 - bump));
        }
        for pair in loose.edges.windows(2) {
            prop_assert!(pair[0].weight.abs() >= pair[1].weight.abs());
        }
    }

    #[test]
    fn planting_without_interactions_stays_local(seed in 0u64..200, idx in 0usize..5, delta in -0.5f64..0.5) {
        let taxa = names("t", 5);
        let m = nalgebra::DVector::from_fn(5, |i, _| -1.0 - i as f64);
        let c = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(5, |i, _| 1.0 + i as f64 * 0.3));
        let gt = synth::GroundTruthModel {
            model: maxent::MaxEntModel::from_moments(taxa, m.clone(), c, 0.01).unwrap(),
            provenance: synth::Provenance::ProcedurallyGenerated,
        };
        let spec = synth::SyntheticSpec { planted: vec![synth::PlantedEffect { index: idx, delta }], n_cases: 3, n_controls: 3, seed };
        let (h_case, m_case) = synth::plant_effects(&gt, &spec).unwrap();
        for i in 0..5 {
            if i != idx {
                prop_assert_eq!(m_case[i], m[i]);
                prop_assert_eq!(h_case[i], gt.model.h[i]);
            }
        }
        prop_assert!((h_case[idx] - gt.model.h[idx] * (1.0 + delta)).abs() < 1e-12);
    }

    #[test]
    fn score_partitions_detections(det in prop::collection::btree_set(0usize..20, 0..10), truth in prop::collection::btree_set(0usize..20, 0..10)) {
        let d: Vec<usize> = det.iter().copied().collect();
        let t: Vec<usize> = truth.iter().copied().collect();
        let s = synth::score(&d, &t);
        prop_assert_eq!(s.true_positives.len() + s.false_positives.len(), d.len());
        prop_assert_eq!(s.true_positives.len() + s.missed.len(), t.len());
    }

    #[test]
    fn pseudo_inverse_is_symmetric_and_ordered(seed in 0u64..1000, n in 2usize..10) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spectrum: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let c = common::psd_with_spectrum(&spectrum, &mut rng);
        let r = maxent::pseudo_inverse(&c, 0.01).unwrap();
        prop_assert!((&r.j - r.j.transpose()).abs().max() == 0.0);
        prop_assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        prop_assert_eq!(r.retained, r.eigenvalues.iter().filter(|&&v| v >= 0.01).count());
    }
}

#[test]
fn independent_rows_give_few_network_edges() {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = 8;
    let n = 300;
    let x = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let l = LogAbundanceMatrix::new(names("t", p), names("s", n), x, None).unwrap();
    let sig = network::edge_significance(&l, EdgeKind::Correlation, 400, 0.01, 3).unwrap();
    let pairs = p * (p - 1) / 2;
    let hits = (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .filter(|&(i, j)| sig.q[(i, j)] < 0.05)
        .count();
    assert!(hits <= 2, "{hits} of {pairs} null pairs significant");
}

#[test]
fn correlated_pair_is_detected() {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n = 200;
    let mut x = DMatrix::from_fn(3, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    for j in 0..n {
        x[(1, j)] = 0.8 * x[(0, j)] + 0.6 * x[(1, j)];
    }
    let l = LogAbundanceMatrix::new(names("t", 3), names("s", n), x, None).unwrap();
    let sig = network::edge_significance(&l, EdgeKind::Interaction, 300, 0.01, 4).unwrap();
    assert!(sig.q[(0, 1)] < 0.05);
    assert!(sig.weights[(0, 1)] < 0.0);
}
