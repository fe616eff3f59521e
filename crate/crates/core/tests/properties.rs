use proptest::prelude::*;

use mia_core::attack::{offline_score, online_score, GaussianParams};
use mia_core::dataset::Dataset;
use mia_core::evaluation::{auc, roc_curve, tpr_at_fpr};
use mia_core::model::softmax;
use mia_core::scoring::{score_confidence, score_log_confidence, ScoreVariant};
use mia_core::{AttackResult, AttackVariant, LOG_EPS};

fn result(scores: Vec<f64>, truth: Vec<bool>) -> AttackResult {
    AttackResult::new(scores, truth, AttackVariant::Online, ScoreVariant::LogConfidence).unwrap()
}

/// Scores on a coarse grid (plenty of ties) with both classes present.
fn tied_result() -> impl Strategy<Value = (Vec<i32>, Vec<bool>)> {
    (2usize..300).prop_flat_map(|n| {
        (
            prop::collection::vec(-20i32..20, n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
    .prop_map(|(s, mut t)| {
        t[0] = true;
        t[1] = false;
        (s, t)
    })
}

proptest! {
    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(
        logits in prop::collection::vec(-50.0f64..50.0, 2..12),
        shift in -1e3f64..1e3,
    ) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn score_transforms_are_monotone_and_finite(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        // Two-class vectors keep the argmax reading p* = max(p, 1 - p); use p >= 0.5 for it.
        for v in ScoreVariant::ALL {
            let (x, y) = if v.needs_labels() { (lo, hi) } else { (0.5 + lo / 2.0, 0.5 + hi / 2.0) };
            let s_lo = v.score(&[x, 1.0 - x], 0);
            let s_hi = v.score(&[y, 1.0 - y], 0);
            prop_assert!(s_lo.is_finite() && s_hi.is_finite());
            prop_assert!(s_lo <= s_hi, "{v}: {s_lo} > {s_hi}");
        }
        let p = [a, 1.0 - a];
        prop_assert_eq!(score_log_confidence(&p, 0), (score_confidence(&p, 0) + LOG_EPS).ln());
    }

    #[test]
    fn argmax_scores_ignore_the_label(p in prop::collection::vec(0.01f64..1.0, 2..6), y in 0usize..6) {
        let total: f64 = p.iter().sum();
        let p: Vec<f64> = p.iter().map(|v| v / total).collect();
        let y = y % p.len();
        for v in [ScoreVariant::Argmax, ScoreVariant::LogArgmax] {
            prop_assert_eq!(v.score(&p, y), v.score(&p, 0));
        }
    }

    #[test]
    fn online_score_invariant_under_common_shift(
        conf in -50.0f64..50.0,
        m_in in -50.0f64..50.0,
        m_out in -50.0f64..50.0,
        v_in in 0.01f64..10.0,
        v_out in 0.01f64..10.0,
        shift in -100.0f64..100.0,
    ) {
        let a = online_score(conf, &GaussianParams { mean: m_in, variance: v_in }, &GaussianParams { mean: m_out, variance: v_out });
        let b = online_score(
            conf + shift,
            &GaussianParams { mean: m_in + shift, variance: v_in },
            &GaussianParams { mean: m_out + shift, variance: v_out },
        );
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn offline_score_strictly_increasing(mean in -5.0f64..5.0, sd in 0.1f64..3.0, z in -8.0f64..7.9, dz in 0.01f64..0.1) {
        let q = GaussianParams { mean, variance: sd * sd };
        let a = offline_score(mean + z * sd, &q);
        let b = offline_score(mean + (z + dz) * sd, &q);
        prop_assert!(a < b);
    }

    #[test]
    fn offline_auc_equals_z_score_auc((raw, truth) in tied_result(), mean in -1.0f64..1.0, sd in 1.0f64..3.0) {
        let q = GaussianParams { mean, variance: sd * sd };
        let conf: Vec<f64> = raw.iter().map(|&r| r as f64 / 4.0).collect();
        let z: Vec<f64> = conf.iter().map(|c| (c - mean) / sd).collect();
        let off: Vec<f64> = conf.iter().map(|&c| offline_score(c, &q)).collect();
        let a = auc(&roc_curve(&result(z, truth.clone())).unwrap());
        let b = auc(&roc_curve(&result(off, truth)).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn roc_shape_and_monotone_transform_invariance((raw, truth) in tied_result()) {
        let s: Vec<f64> = raw.iter().map(|&r| r as f64).collect();
        let curve = roc_curve(&result(s.clone(), truth.clone())).unwrap();
        prop_assert_eq!(curve.points[0], (0.0, 0.0));
        prop_assert_eq!(*curve.points.last().unwrap(), (1.0, 1.0));
        for w in curve.points.windows(2) {
            prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
        let transformed: Vec<f64> = s.iter().map(|v| (v / 4.0).exp() * 3.0 - 7.0).collect();
        let a = auc(&curve);
        let b = auc(&roc_curve(&result(transformed, truth)).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tpr_at_fpr_non_decreasing((raw, truth) in tied_result(), a in 0.0001f64..0.9999, b in 0.0001f64..0.9999) {
        let s: Vec<f64> = raw.iter().map(|&r| r as f64).collect();
        let curve = roc_curve(&result(s, truth)).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (t_lo, t_hi) = (tpr_at_fpr(&curve, lo).unwrap(), tpr_at_fpr(&curve, hi).unwrap());
        prop_assert!(t_lo <= t_hi);
        prop_assert!((0.0..=1.0).contains(&t_lo) && (0.0..=1.0).contains(&t_hi));
    }

    #[test]
    fn dataset_bytes_round_trip(
        rows in 1usize..20,
        dim in 1usize..5,
        classes in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut x = seed;
        let mut next = || { x = mia_core::rng::splitmix64(x); x };
        let features: Vec<f64> = (0..rows * dim).map(|_| f64::from_bits(next() >> 2) - 1.0).collect();
        let features: Vec<f64> = features.into_iter().map(|v| if v.is_finite() { v } else { 0.0 }).collect();
        let labels: Vec<u32> = (0..rows).map(|_| (next() % classes as u64) as u32).collect();
        let ds = Dataset::new(features, labels, dim, classes).unwrap();
        prop_assert_eq!(Dataset::from_bytes(&ds.to_bytes()).unwrap(), ds);
    }

    #[test]
    fn attack_result_bytes_round_trip(scores in prop::collection::vec(-1e300f64..1e300, 0..50), code in 0u8..5, score_code in 0u8..5) {
        let truth: Vec<bool> = scores.iter().map(|v| *v > 0.0).collect();
        let r = AttackResult::new(
            scores,
            truth,
            AttackVariant::from_code(code).unwrap(),
            ScoreVariant::from_code(score_code).unwrap(),
        ).unwrap();
        prop_assert_eq!(AttackResult::from_bytes(&r.to_bytes()).unwrap(), r);
    }
}
