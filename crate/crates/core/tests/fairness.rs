use std::sync::Arc;

use fedfair::fairness::{demographic_disparity, equalized_odds_difference, Argmax, Level, Metric};
use fedfair::{bias_label, fairness_table, BiasTarget, ColumnSchema, Dataset, Granularity, Predictions, Schema};
use num_rational::Ratio;
use proptest::prelude::*;

fn absr(r: Ratio<i64>) -> Ratio<i64> {
    if r < Ratio::from_integer(0) {
        -r
    } else {
        r
    }
}

fn exact(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn one_attr(name: &str, values: impl IntoIterator<Item = i64> + Clone, codes: &[i64], labels: &[u8]) -> Dataset {
    let schema = Arc::new(Schema::new(
        vec![ColumnSchema::categorical(name, values)],
        "Y",
        vec![name.into()],
    ));
    let rows: Vec<Vec<f64>> = codes.iter().map(|&c| vec![c as f64]).collect();
    Dataset::from_rows(schema, &rows, labels.to_vec()).unwrap()
}

fn group_rate(codes: &[i64], preds: &[u8], keep: impl Fn(usize) -> bool) -> Option<Ratio<i64>> {
    let idx: Vec<usize> = (0..codes.len()).filter(|&i| keep(i)).collect();
    (!idx.is_empty()).then(|| Ratio::new(idx.iter().map(|&i| i64::from(preds[i])).sum(), idx.len() as i64))
}

fn instance() -> impl Strategy<Value = (i64, Vec<(i64, u8, u8)>)> {
    (2i64..=4).prop_flat_map(|k| (Just(k), prop::collection::vec((1..=k, 0u8..=1, 0u8..=1), 2..48)))
}

proptest! {
    #[test]
    fn dd_matches_rational_enumeration((k, rows) in instance()) {
        let codes: Vec<i64> = rows.iter().map(|r| r.0).collect();
        let labels: Vec<u8> = rows.iter().map(|r| r.1).collect();
        let preds: Vec<u8> = rows.iter().map(|r| r.2).collect();
        let d = one_attr("Z", 1..=k, &codes, &labels);
        let mut best: Option<Ratio<i64>> = None;
        for a in 1..=k {
            for b in a + 1..=k {
                let ra = group_rate(&codes, &preds, |i| codes[i] == a);
                let rb = group_rate(&codes, &preds, |i| codes[i] == b);
                if let (Some(ra), Some(rb)) = (ra, rb) {
                    let g = absr(ra - rb);
                    best = Some(best.map_or(g, |x| x.max(g)));
                }
            }
        }
        match (demographic_disparity(&preds, &d, "Z"), best) {
            (Ok(r), Some(b)) => prop_assert_eq!(r.dd, exact(b)),
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "{:?} vs {:?}", got.map(|r| r.dd), want),
        }
    }

    #[test]
    fn eod_matches_rational_enumeration((k, rows) in instance()) {
        let codes: Vec<i64> = rows.iter().map(|r| r.0).collect();
        let labels: Vec<u8> = rows.iter().map(|r| r.1).collect();
        let preds: Vec<u8> = rows.iter().map(|r| r.2).collect();
        let d = one_attr("Z", 1..=k, &codes, &labels);
        let live = (1..=k).filter(|v| codes.contains(v)).count();
        let mut best: Option<Ratio<i64>> = None;
        if live >= 2 {
            for v in 1..=k {
                for y in [0u8, 1] {
                    let a = group_rate(&codes, &preds, |i| codes[i] == v && labels[i] == y);
                    let b = group_rate(&codes, &preds, |i| codes[i] != v && labels[i] == y);
                    if let (Some(a), Some(b)) = (a, b) {
                        let g = absr(a - b);
                        best = Some(best.map_or(g, |x| x.max(g)));
                    }
                }
            }
        }
        match (equalized_odds_difference(&preds, &labels, &d, "Z"), best) {
            (Ok(r), Some(b)) => prop_assert_eq!(r.eod, exact(b)),
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "{:?} vs {:?}", got.map(|r| r.eod), want),
        }
    }

    #[test]
    fn dd_is_invariant_to_row_order((k, rows) in instance(), seed in any::<u64>()) {
        let codes: Vec<i64> = rows.iter().map(|r| r.0).collect();
        let preds: Vec<u8> = rows.iter().map(|r| r.2).collect();
        let d = one_attr("Z", 1..=k, &codes, &vec![0; codes.len()]);
        let perm = fedfair::rng::permutation(codes.len(), seed);
        let shuffled = d.take(&perm);
        let sp: Vec<u8> = perm.iter().map(|&i| preds[i]).collect();
        let a = demographic_disparity(&preds, &d, "Z").ok().map(|r| r.dd);
        let b = demographic_disparity(&sp, &shuffled, "Z").ok().map(|r| r.dd);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn race_value_level_argmax_pair() {
    // Group 4 always positive, group 8 never; every other group half.
    let mut codes = Vec::new();
    let mut preds = Vec::new();
    for v in 1..=9i64 {
        for i in 0..10 {
            codes.push(v);
            preds.push(match v {
                4 => 1,
                8 => 0,
                _ => u8::from(i % 2 == 0),
            });
        }
    }
    let d = one_attr("RAC1P", 1..=9, &codes, &vec![0; codes.len()]);
    let r = fairness_table(
        &d,
        Predictions::Model { id: "m", preds: &preds },
        &["RAC1P".into()],
        Metric::Dd,
        Level::Value,
    )
    .unwrap();
    let a = r.attribute("RAC1P").unwrap();
    assert_eq!(a.max, Some(1.0));
    assert_eq!(a.argmax, Some(Argmax::Pair { a: 4, b: 8 }));
}

fn sex_race() -> Dataset {
    let schema = Arc::new(Schema::new(
        vec![
            ColumnSchema::categorical("SEX", [1, 2]),
            ColumnSchema::categorical("RAC1P", [1, 2, 3]),
        ],
        "Y",
        vec!["SEX".into(), "RAC1P".into()],
    ));
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for s in 1..=2 {
        for r in 1..=3 {
            for i in 0..6 {
                rows.push(vec![s as f64, r as f64]);
                // Group (s, r) has positive rate (s + r - 1) / 6.
                labels.push(u8::from(i < s + r - 1));
            }
        }
    }
    Dataset::from_rows(schema, &rows, labels).unwrap()
}

#[test]
fn intersection_is_one_composite_attribute() {
    let d = sex_race();
    let r = fairness_table(
        &d,
        Predictions::TrueLabels,
        &["SEX*RAC1P".into()],
        Metric::Dd,
        Level::AttributeValue,
    )
    .unwrap();
    let a = r.attribute("SEX*RAC1P").unwrap();
    // Six composite groups; rates (s + r - 1) / 6 span 1/6 ..= 4/6.
    assert_eq!(a.one_vs_rest.len(), 6);
    assert_eq!(a.pairs.len(), 15);
    assert_eq!(a.max, Some(exact(Ratio::new(3, 6))));
    assert_eq!(a.argmax, Some(Argmax::Pair { a: 1, b: 6 }));
}

#[test]
fn attribute_value_level_is_the_full_table() {
    let d = sex_race();
    let attrs = vec!["SEX".to_string(), "RAC1P".to_string()];
    let flat = fairness_table(&d, Predictions::TrueLabels, &attrs, Metric::Dd, Level::Attribute).unwrap();
    assert!(flat.attributes.iter().all(|a| a.pairs.is_empty() && a.argmax.is_none()));
    let full = fairness_table(&d, Predictions::TrueLabels, &attrs, Metric::Dd, Level::AttributeValue).unwrap();
    assert_eq!(full.attribute("SEX").unwrap().pairs.len(), 1);
    assert_eq!(full.attribute("RAC1P").unwrap().pairs.len(), 3);
    for (a, b) in flat.attributes.iter().zip(&full.attributes) {
        assert_eq!(a.max, b.max);
    }
    let eod = fairness_table(&d, Predictions::TrueLabels, &attrs, Metric::Eod, Level::AttributeValue).unwrap();
    // True labels as predictions: TPR is 1 and FPR 0 everywhere.
    assert_eq!(eod.max_value, Some(0.0));
    assert_eq!(eod.attribute("RAC1P").unwrap().cells.len(), 6);
}

#[test]
fn two_models_agreeing_above_threshold() {
    let d = sex_race();
    let attrs = vec!["SEX".to_string()];
    let mk = |max: f64| {
        let mut r = fairness_table(&d, Predictions::TrueLabels, &attrs, Metric::Dd, Level::Attribute).unwrap();
        r.attributes[0].max = Some(max);
        r.max_value = Some(max);
        r
    };
    let label = bias_label(&[mk(0.12), mk(0.10)], 0.09, Granularity::Attribute).unwrap();
    assert_eq!(label, Some(BiasTarget::Attribute { attr: "SEX".into() }));
    assert_eq!(
        bias_label(&[mk(0.12), mk(0.09)], 0.09, Granularity::Attribute).unwrap(),
        None
    );
}
