mod common;

use chrono::NaiveDate;
use pmaudit::preprocess::{iir_filter, smote_oversample, FeatureMatrix, SmoteConfig};
use proptest::prelude::*;
use rand::Rng;

fn column(x: &[f64]) -> Vec<Vec<f64>> {
    x.iter().map(|&v| vec![v]).collect()
}

fn first(y: Vec<Vec<f64>>) -> Vec<f64> {
    y.into_iter().map(|r| r[0]).collect()
}

proptest! {
    #[test]
    fn iir_is_linear(
        x in prop::collection::vec(0.0f64..100.0, 1..60),
        shift in prop::collection::vec(0.0f64..100.0, 60),
        a in 0.0f64..5.0,
        b in 0.0f64..5.0,
        alpha in 0.01f64..0.99,
    ) {
        let n = x.len();
        let z = &shift[..n];
        let labels = vec![false; n];
        let mix: Vec<f64> = x.iter().zip(z).map(|(u, v)| a * u + b * v).collect();
        let lhs = first(iir_filter(&column(&mix), alpha, false, &labels).unwrap());
        let fx = first(iir_filter(&column(&x), alpha, false, &labels).unwrap());
        let fz = first(iir_filter(&column(z), alpha, false, &labels).unwrap());
        for i in 0..n {
            let rhs = a * fx[i] + b * fz[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn iir_reset_restarts_after_each_order(
        x in prop::collection::vec(0.0f64..20.0, 2..80),
        marks in prop::collection::vec(any::<bool>(), 80),
        alpha in 0.05f64..0.95,
    ) {
        let n = x.len();
        let labels = &marks[..n];
        let y = first(iir_filter(&column(&x), alpha, true, labels).unwrap());
        // segments start at 0 and right after every labeled day
        let mut start = 0;
        for i in 0..n {
            if i > 0 && labels[i - 1] {
                start = i;
            }
            let want: f64 = (start..=i).map(|j| alpha.powi((i - j) as i32) * x[j]).sum();
            prop_assert!((y[i] - want).abs() <= 1e-10 * want.max(1.0));
        }
    }

    #[test]
    fn iir_output_is_never_below_input(
        x in prop::collection::vec(0.0f64..20.0, 1..50),
        alpha in 0.05f64..0.95,
    ) {
        let y = first(iir_filter(&column(&x), alpha, false, &vec![false; x.len()]).unwrap());
        for (xi, yi) in x.iter().zip(&y) {
            prop_assert!(yi >= xi);
        }
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[test]
fn smote_points_lie_between_a_minority_row_and_one_of_its_neighbours() {
    let k = 5;
    for seed in 0..8u64 {
        let mut r = common::rng(seed);
        let width = r.random_range(1..=4);
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let mut fm = FeatureMatrix::empty(width);
        for i in 0..120 {
            let label = i % 10 == 3;
            let row: Vec<f64> = (0..width).map(|_| r.random_range(0.0..10.0) + if label { 5.0 } else { 0.0 }).collect();
            fm.push_row(&row, label, "M", start + chrono::Days::new(i), false);
        }
        let out = smote_oversample(&fm, &SmoteConfig { k_neighbors: k, target_ratio: 1.0, seed }).unwrap();
        assert_eq!(out.slice(0..fm.len()), fm, "original rows must be untouched");
        assert_eq!(out.positives(), fm.len() - fm.positives());

        let minority: Vec<usize> = (0..fm.len()).filter(|&i| fm.labels[i]).collect();
        for s in fm.len()..out.len() {
            assert!(out.synthetic[s] && out.labels[s]);
            let p = (0..fm.len()).find(|&i| fm.dates[i] == out.dates[s]).unwrap();
            assert!(fm.labels[p]);
            let mut others: Vec<usize> = minority.iter().copied().filter(|&j| j != p).collect();
            others.sort_by(|&a, &b| sq(fm.row(p), fm.row(a)).total_cmp(&sq(fm.row(p), fm.row(b))));
            let on_segment = others[..k].iter().any(|&q| {
                let (a, b, x) = (fm.row(p), fm.row(q), out.row(s));
                let d2 = sq(a, b);
                let lambda = a.iter().zip(b).zip(x).map(|((a, b), x)| (x - a) * (b - a)).sum::<f64>() / d2;
                let proj: Vec<f64> = a.iter().zip(b).map(|(a, b)| a + lambda * (b - a)).collect();
                (-1e-12..=1.0 + 1e-12).contains(&lambda) && sq(&proj, x) <= 1e-18 * d2.max(1.0)
            });
            assert!(on_segment, "seed {seed}: synthetic row {s} is off every neighbour segment");
        }
    }
}

#[test]
fn smote_is_seed_deterministic() {
    let mut r = common::rng(99);
    let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
    let mut fm = FeatureMatrix::empty(3);
    for i in 0..60 {
        let row: Vec<f64> = (0..3).map(|_| r.random_range(0.0..1.0)).collect();
        fm.push_row(&row, i % 7 == 0, "M", start + chrono::Days::new(i), false);
    }
    let cfg = SmoteConfig { seed: 7, ..Default::default() };
    assert_eq!(smote_oversample(&fm, &cfg).unwrap(), smote_oversample(&fm, &cfg).unwrap());
    let other = smote_oversample(&fm, &SmoteConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(smote_oversample(&fm, &cfg).unwrap(), other);
}
