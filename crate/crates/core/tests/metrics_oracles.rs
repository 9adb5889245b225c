use std::f64::consts::PI;

use hybridaug_core::metrics::{
    confusion, report, student_t_cdf, t_test_one_sample, t_test_two_sample, two_tailed_p, ConfusionMatrix,
    Prediction, PredictionSet, SummaryStat,
};
use hybridaug_core::rng::rng_for;
use hybridaug_core::ClassLabel;
use proptest::prelude::*;
use rand::Rng;

/// Gamma at positive half-integers.
fn gamma_half(two_x: u32) -> f64 {
    let mut g = if two_x.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut k = if two_x.is_multiple_of(2) { 2 } else { 1 };
    while k < two_x {
        g *= k as f64 / 2.0;
        k += 2;
    }
    g
}

/// Student-t CDF by composite Simpson integration of the density.
fn simpson_t_cdf(t: f64, df: u32) -> f64 {
    let nu = df as f64;
    let c = gamma_half(df + 1) / ((nu * PI).sqrt() * gamma_half(df));
    let pdf = |x: f64| c * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let n = 20_000;
    let h = t / n as f64;
    let mut s = pdf(0.0) + pdf(t);
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 + s * h / 3.0
}

#[test]
fn t_cdf_matches_numerical_integration() {
    for df in [1, 2, 3, 4, 7, 10, 30] {
        for t in [-6.0, -2.5, -1.0, -0.3, 0.0, 0.4, 1.0, 2.776, 4.18, 8.0] {
            let got = student_t_cdf(t, df as f64);
            let want = simpson_t_cdf(t, df);
            assert!((got - want).abs() < 1e-8, "df {df} t {t}: {got} vs {want}");
        }
    }
}

#[test]
fn t_cdf_closed_forms() {
    assert_eq!(student_t_cdf(0.0, 5.0), 0.5);
    assert!((student_t_cdf(1.0, 1.0) - 0.75).abs() < 1e-12);
    assert!((student_t_cdf(2.776, 4.0) - 0.975).abs() < 1e-4);
    // df = 2 has cdf 1/2 + t / (2 sqrt(2 + t^2))
    for t in [-3.0f64, 0.5, 1.7] {
        let want = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
        assert!((student_t_cdf(t, 2.0) - want).abs() < 1e-12);
    }
}

#[test]
fn two_sample_matches_pooled_formula() {
    let (a, b) = (SummaryStat::new(95.63, 0.20, 3), SummaryStat::new(95.11, 0.08, 3));
    let sp2 = (2.0 * 0.20f64.powi(2) + 2.0 * 0.08f64.powi(2)) / 4.0;
    let t = (95.63f64 - 95.11).abs() / (sp2.sqrt() * (2.0f64 / 3.0).sqrt());
    let r = t_test_two_sample(&a, &b).unwrap();
    assert!((r.t - t).abs() < 1e-12);
    assert_eq!(r.df, 4.0);
    let want = 2.0 * (1.0 - simpson_t_cdf(t, 4));
    assert!((r.p - want).abs() < 1e-8);
}

#[test]
fn identical_groups_give_p_one() {
    let a = SummaryStat::new(90.0, 1.0, 3);
    let r = t_test_two_sample(&a, &a).unwrap();
    assert_eq!(r.t, 0.0);
    assert!((r.p - 1.0).abs() < 1e-12);
    assert!((t_test_one_sample(&a, 90.0).unwrap().p - 1.0).abs() < 1e-12);
}

#[test]
fn degenerate_variance_is_reported() {
    let a = SummaryStat::new(90.0, 0.0, 3);
    assert_eq!(t_test_two_sample(&a, &a).unwrap_err().degenerate_p(), Some(1.0));
    assert_eq!(t_test_one_sample(&a, 91.0).unwrap_err().degenerate_p(), Some(0.0));
    assert!(t_test_one_sample(&SummaryStat::new(1.0, 1.0, 1), 0.0).is_err());
}

#[test]
fn p_decreases_with_mean_difference() {
    for sd in [0.1, 0.5, 2.0] {
        let mut last = 1.0 + 1e-12;
        for k in 0..40 {
            let d = k as f64 * 0.05;
            let p = t_test_two_sample(&SummaryStat::new(50.0, sd, 3), &SummaryStat::new(50.0 + d, sd, 3))
                .unwrap()
                .p;
            assert!(p <= last, "sd {sd} d {d}");
            last = p;
        }
    }
}

fn random_predictions(seed: u64, n: usize) -> Vec<Prediction> {
    let mut rng = rng_for(seed, &[]);
    (0..n)
        .map(|i| {
            let t = rng.gen_range(0..6);
            let p = if rng.gen_bool(0.7) { t } else { rng.gen_range(0..6) };
            Prediction {
                id: format!("r{i}"),
                true_label: ClassLabel::from_index(t).unwrap(),
                predicted: ClassLabel::from_index(p).unwrap(),
            }
        })
        .collect()
}

#[test]
fn confusion_equals_nested_loop_tally() {
    let rows = random_predictions(11, 1000);
    let cm = confusion(&PredictionSet::new(rows.clone()).unwrap()).unwrap();
    for (i, ti) in ClassLabel::ALL.iter().enumerate() {
        for (j, pj) in ClassLabel::ALL.iter().enumerate() {
            let mut n = 0;
            for r in &rows {
                if r.true_label == *ti && r.predicted == *pj {
                    n += 1;
                }
            }
            assert_eq!(cm.counts[i][j], n);
        }
    }
}

#[test]
fn report_matches_per_class_definitions() {
    let rows = random_predictions(12, 777);
    let r = report(&confusion(&PredictionSet::new(rows.clone()).unwrap()).unwrap());
    let mut f1_sum = 0.0;
    for l in ClassLabel::ALL {
        let tp = rows.iter().filter(|x| x.true_label == l && x.predicted == l).count() as f64;
        let support = rows.iter().filter(|x| x.true_label == l).count() as f64;
        let predicted = rows.iter().filter(|x| x.predicted == l).count() as f64;
        let (rec, prec) = (tp / support, tp / predicted);
        let f1 = 2.0 * prec * rec / (prec + rec);
        assert!((r.per_class_recall[l.index()].unwrap() - 100.0 * rec).abs() < 1e-9);
        assert!((r.per_class_precision[l.index()].unwrap() - 100.0 * prec).abs() < 1e-9);
        assert!((r.per_class_f1[l.index()] - 100.0 * f1).abs() < 1e-9);
        f1_sum += f1;
    }
    assert!((r.macro_f1 - 100.0 * f1_sum / 6.0).abs() < 1e-9);
    let correct = rows.iter().filter(|x| x.true_label == x.predicted).count() as f64;
    assert!((r.accuracy - 100.0 * correct / 777.0).abs() < 1e-9);
}

#[test]
fn single_off_diagonal_row() {
    let rows = vec![Prediction {
        id: "a".into(),
        true_label: ClassLabel::AxialFourChamber,
        predicted: ClassLabel::NonTarget,
    }];
    let cm = confusion(&PredictionSet::new(rows).unwrap()).unwrap();
    assert_eq!(cm.total(), 1);
    assert_eq!(cm.counts[2][5], 1);
    let norm = cm.normalized();
    assert!(norm[0].is_none());
    assert_eq!(norm[2].unwrap()[5], 1.0);
}

#[test]
fn empty_and_duplicate_predictions_are_errors() {
    assert!(confusion(&PredictionSet::new(vec![]).unwrap()).is_err());
    let p = Prediction {
        id: "x".into(),
        true_label: ClassLabel::NonTarget,
        predicted: ClassLabel::NonTarget,
    };
    assert!(PredictionSet::new(vec![p.clone(), p]).is_err());
}

fn arb_matrix() -> impl Strategy<Value = ConfusionMatrix> {
    proptest::collection::vec(0u64..50, 36).prop_map(|v| ConfusionMatrix {
        counts: std::array::from_fn(|i| std::array::from_fn(|j| v[i * 6 + j])),
    })
}

proptest! {
    #[test]
    fn normalized_rows_sum_to_one(cm in arb_matrix()) {
        for (i, row) in cm.normalized().iter().enumerate() {
            match row {
                Some(r) => prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9),
                None => prop_assert_eq!(cm.row_sum(i), 0),
            }
        }
    }

    #[test]
    fn macro_f1_is_permutation_invariant(cm in arb_matrix(), perm in Just([0usize, 1, 2, 3, 4, 5]).prop_shuffle()) {
        prop_assume!(cm.total() > 0);
        let permuted = ConfusionMatrix {
            counts: std::array::from_fn(|i| std::array::from_fn(|j| cm.counts[perm[i]][perm[j]])),
        };
        let (a, b) = (report(&cm), report(&permuted));
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-9);
        prop_assert!((a.accuracy - b.accuracy).abs() < 1e-9);
        prop_assert!((0.0..=100.0).contains(&a.macro_f1) && (0.0..=100.0).contains(&a.accuracy));
    }

    #[test]
    fn two_sample_is_symmetric(m1 in 50.0f64..100.0, s1 in 0.01f64..3.0, n1 in 2u32..8, m2 in 50.0f64..100.0, s2 in 0.01f64..3.0, n2 in 2u32..8) {
        let (a, b) = (SummaryStat::new(m1, s1, n1), SummaryStat::new(m2, s2, n2));
        let (x, y) = (t_test_two_sample(&a, &b).unwrap(), t_test_two_sample(&b, &a).unwrap());
        prop_assert!((x.p - y.p).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&x.p));
    }

    #[test]
    fn two_tailed_p_is_symmetric_in_t(t in -20.0f64..20.0, df in 1.0f64..60.0) {
        let p = two_tailed_p(t, df);
        prop_assert!((p - two_tailed_p(-t, df)).abs() < 1e-12);
        prop_assert!((p - 2.0 * (1.0 - student_t_cdf(t.abs(), df))).abs() < 1e-9);
    }
}
