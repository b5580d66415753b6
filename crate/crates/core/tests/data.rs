mod common;

use drmdit::data::{skew_filter, split, synth_generate, FeatureMatrix, SynthSpec};
use drmdit::detect::Tag;
use drmdit::ndmath::Matrix;
use drmdit::robust::{mad, median};
use proptest::prelude::*;

use common::gaussian_matrix;

fn norms_by_tag(fm: &FeatureMatrix, tag: Tag) -> Vec<f64> {
    let tags = fm.tags.as_ref().unwrap();
    fm.features
        .iter_rows()
        .zip(tags)
        .filter(|(_, t)| **t == tag)
        .map(|(r, _)| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

#[test]
fn far_anomalies_sit_well_outside_the_normal_cloud() {
    let fm = synth_generate(&SynthSpec::benchmark(), 42).unwrap();
    let mut normal = norms_by_tag(&fm, Tag::Normal);
    normal.sort_by(f64::total_cmp);
    let p99 = normal[(0.99 * normal.len() as f64) as usize];
    let far = norms_by_tag(&fm, Tag::Far);
    let far_mean = far.iter().sum::<f64>() / far.len() as f64;
    assert!(far_mean > 4.0 * p99, "far mean {far_mean} vs normal p99 {p99}");

    let near = norms_by_tag(&fm, Tag::Near);
    let near_median = median(&near).unwrap();
    assert!(near_median < p99, "near anomalies should overlap the normal radius range");
}

#[test]
fn synthetic_correlation_matches_rho() {
    let spec = SynthSpec { n_normal: 20_000, n_near: 0, n_far: 0, d: 3, rho: 0.7, ..SynthSpec::benchmark() };
    let x = synth_generate(&spec, 1).unwrap().features;
    let (a, b) = (x.column(0), x.column(1));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov = a.iter().zip(&b).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / n;
    let va = a.iter().map(|p| (p - ma).powi(2)).sum::<f64>() / n;
    let vb = b.iter().map(|q| (q - mb).powi(2)).sum::<f64>() / n;
    assert!((cov / (va * vb).sqrt() - 0.7).abs() < 0.02);
    assert!((va - 1.0).abs() < 0.05);
}

#[test]
fn skew_filter_barely_touches_gaussian_data() {
    let x = gaussian_matrix(20_000, 5, 7);
    let res = skew_filter(&x).unwrap();
    assert!(!res.widened);
    assert!((res.dropped as f64) < 0.001 * x.rows() as f64, "dropped {}", res.dropped);
}

#[test]
fn skew_filter_removes_planted_spikes() {
    let mut rows: Vec<Vec<f64>> = gaussian_matrix(1000, 3, 3).iter_rows().map(|r| r.to_vec()).collect();
    for r in rows.iter_mut().step_by(100) {
        r[1] = 50.0;
    }
    let res = skew_filter(&Matrix::from_rows(&rows).unwrap()).unwrap();
    assert!((0..1000).step_by(100).all(|i| !res.kept.contains(&i)));
    assert!(res.dropped < 20);
}

#[test]
fn splits_partition_and_stratify() {
    let fm = synth_generate(&SynthSpec { n_normal: 101, n_near: 20, n_far: 9, d: 3, rho: 0.3, seed: Some(5), ..SynthSpec::benchmark() }, 0)
        .unwrap();
    let s = split(&fm, 0.6, 9).unwrap();
    assert_eq!(s.train.rows() + s.validation.rows() + s.test.rows(), fm.rows());
    let anomalies = |m: &FeatureMatrix| m.labels.as_ref().unwrap().iter().filter(|&&l| l == 1).count();
    assert_eq!(anomalies(&s.train), 17);
    assert_eq!(anomalies(&s.validation) + anomalies(&s.test), 12);
    assert_eq!(s, split(&fm, 0.6, 9).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn skew_filter_never_drops_more_than_a_tenth(seed in 0u64..1000, spikes in 0usize..60) {
        let mut rows: Vec<Vec<f64>> = gaussian_matrix(200, 2, seed).iter_rows().map(|r| r.to_vec()).collect();
        for r in rows.iter_mut().take(spikes) {
            r[0] = 1e3;
        }
        let res = skew_filter(&Matrix::from_rows(&rows).unwrap()).unwrap();
        prop_assert!(res.dropped <= 20);
        prop_assert_eq!(res.kept.len() + res.dropped, 200);
    }

    #[test]
    fn median_and_mad_resist_a_minority_of_outliers(seed in 0u64..1000, k in 0usize..30, level in 10.0f64..1e6) {
        let clean = gaussian_matrix(100, 1, seed).column(0);
        let mut dirty = clean.clone();
        dirty.iter_mut().take(k).for_each(|v| *v = level);
        let mut sorted = clean.clone();
        sorted.sort_by(f64::total_cmp);
        // k outliers can move the median by at most k order statistics
        let m = median(&dirty).unwrap();
        prop_assert!(m >= sorted[49 - k.min(49)] - 1e-12 && m <= sorted[(50 + k).min(99)] + 1e-12);
        prop_assert!(mad(&dirty).unwrap() < 10.0);
    }
}
