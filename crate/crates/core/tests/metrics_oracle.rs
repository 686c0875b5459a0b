use proptest::prelude::*;
use structbench_core::metrics::{
    assert_pct, classification_report, cohen_kappa, correlations, marginal_effect, pass_at_k,
    ConstraintAxis, MetricsError, RunScore,
};

/// Brute-force pass@k: enumerate every k-subset of n outcomes where the
/// first c succeed and count subsets with at least one success.
fn brute_pass_at_k(n: u32, c: u32, k: u32) -> f64 {
    let mut total = 0u64;
    let mut hit = 0u64;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() != k {
            continue;
        }
        total += 1;
        let success_mask = (1u32 << c) - 1;
        if mask & success_mask != 0 {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

#[test]
fn pass_at_k_equals_enumeration() {
    for n in 1..=6u32 {
        for c in 0..=n {
            for k in 1..=n {
                let got = pass_at_k(n as u64, c as u64, k as u64).unwrap();
                let want = brute_pass_at_k(n, c, k);
                assert!(
                    (got - want).abs() <= 1e-12,
                    "n={n} c={c} k={k}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn pass_at_k_rejects_k_above_n() {
    assert!(matches!(
        pass_at_k(2, 1, 3),
        Err(MetricsError::Domain { .. })
    ));
    assert!(matches!(
        pass_at_k(2, 1, 0),
        Err(MetricsError::Domain { .. })
    ));
}

#[test]
fn correlation_hand_values() {
    // Centered x = y = (-1.5, -0.5, 0.5, 1.5) with the middle pair of y
    // swapped: sxy = 4, sxx = syy = 5, so r = 0.8. Ranks equal the values.
    let c = correlations(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert!((c.pearson - 0.8).abs() < 1e-12);
    assert!((c.spearman - 0.8).abs() < 1e-12);

    let x = [1.0, 2.0, 4.0, 8.0, 16.0];
    let same = correlations(&x, &x).unwrap();
    assert!((same.pearson - 1.0).abs() < 1e-12 && (same.spearman - 1.0).abs() < 1e-12);
    let rev: Vec<f64> = x.iter().rev().copied().collect();
    assert!((correlations(&x, &rev).unwrap().spearman + 1.0).abs() < 1e-12);

    assert_eq!(
        correlations(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
        Err(MetricsError::ConstantInput)
    );
    assert_eq!(
        correlations(&[1.0, 2.0], &[1.0, 2.0]),
        Err(MetricsError::TooFewPoints(2))
    );
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Sub {
    Auth,
    Query,
    State,
    Db,
    Framework,
    Business,
}

impl std::fmt::Display for Sub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// The validation table: supports 11/12/5/11/5/6 and a single
/// framework-idiosyncrasy case labeled as incorrect query logic.
fn judge_validation_sample() -> (Vec<Sub>, Vec<Sub>) {
    let supports = [
        (Sub::Auth, 11),
        (Sub::Query, 12),
        (Sub::State, 5),
        (Sub::Db, 11),
        (Sub::Framework, 5),
        (Sub::Business, 6),
    ];
    let mut human = Vec::new();
    for (s, n) in supports {
        human.extend(std::iter::repeat_n(s, n));
    }
    let mut judge = human.clone();
    let idx = judge.iter().position(|s| *s == Sub::Framework).unwrap();
    judge[idx] = Sub::Query;
    (human, judge)
}

#[test]
fn judge_validation_table_reconstruction() {
    let (human, judge) = judge_validation_sample();
    // p_o = 49/50; p_e = (121 + 156 + 25 + 121 + 20 + 36) / 2500 = 0.1916.
    let expected = (0.98 - 0.1916) / (1.0 - 0.1916);
    let kappa = cohen_kappa(&human, &judge).unwrap();
    assert!((kappa - expected).abs() < 1e-12);
    assert_eq!(format!("{kappa:.3}"), "0.975");

    let report = classification_report(&human, &judge).unwrap();
    assert!((report.accuracy - 98.0).abs() < 1e-12);
    let row = |s: Sub| {
        report
            .classes
            .iter()
            .find(|r| r.class == s.to_string())
            .unwrap()
    };
    assert_eq!(format!("{:.1}", row(Sub::Query).precision), "92.3");
    assert_eq!(format!("{:.1}", row(Sub::Query).f1), "96.0");
    assert_eq!(format!("{:.1}", row(Sub::Framework).recall), "80.0");
    assert_eq!(format!("{:.1}", row(Sub::Framework).f1), "88.9");
    assert_eq!(format!("{:.1}", report.macro_precision), "98.7");
    assert_eq!(format!("{:.1}", report.macro_recall), "96.7");
    assert_eq!(format!("{:.1}", report.macro_f1), "97.5");
    for s in [Sub::Auth, Sub::State, Sub::Db, Sub::Business] {
        assert_eq!(row(s).f1, 100.0);
    }
}

#[test]
fn never_predicted_class_is_flagged() {
    let truth = ["a", "b", "c"];
    let pred = ["a", "b", "b"];
    let r = classification_report(&truth, &pred).unwrap();
    let c = r.classes.iter().find(|x| x.class == "c").unwrap();
    assert!(c.precision_undefined);
    assert_eq!(c.precision, 0.0);
    // Three classes: precision 100, 50, 0; recall 100, 100, 0.
    assert!((r.macro_precision - 50.0).abs() < 1e-12);
    assert!((r.macro_recall - 200.0 / 3.0).abs() < 1e-12);
}

#[test]
fn orm_axis_without_database_pairs_is_an_error() {
    let runs = vec![
        RunScore::new("flask-openapi", 1, "a", "m", 10, 10, true),
        RunScore::new("flask-openapi-clean_architecture", 1, "a", "m", 5, 10, true),
    ];
    assert_eq!(
        marginal_effect(&runs, ConstraintAxis::Sqlalchemy, true),
        Err(MetricsError::NoPairs(ConstraintAxis::Sqlalchemy))
    );
    let e = marginal_effect(&runs, ConstraintAxis::Architecture, true).unwrap();
    assert_eq!(e.mean_delta, -50.0);
    assert_eq!(e.pairs, 1);
    assert_eq!(e.stderr, None);
}

#[test]
fn constant_shift_gives_zero_stderr() {
    let mut runs = Vec::new();
    for (fw, base) in [("flask", 80), ("koa", 60), ("hono", 40)] {
        runs.push(RunScore::new(
            format!("{fw}-openapi"),
            1,
            "a",
            "m",
            base,
            100,
            true,
        ));
        runs.push(RunScore::new(
            format!("{fw}-openapi-sqlite"),
            1,
            "a",
            "m",
            base - 5,
            100,
            true,
        ));
    }
    let e = marginal_effect(&runs, ConstraintAxis::Sqlite, true).unwrap();
    assert!((e.mean_delta + 5.0).abs() < 1e-9);
    assert!(e.stderr.unwrap().abs() < 1e-9);
    assert_eq!(e.pairs, 3);
}

fn run_strategy() -> impl Strategy<Value = (u32, u32, bool)> {
    (1u32..50)
        .prop_flat_map(|total| (0..=total, Just(total), any::<bool>()))
        .prop_map(|(passed, total, compliant)| (passed, total, compliant))
}

proptest! {
    #[test]
    fn pass_at_k_monotone(n in 1u64..30, c in 0u64..30, k in 1u64..30) {
        prop_assume!(c <= n && k <= n);
        let p = pass_at_k(n, c, k).unwrap();
        if c < n {
            prop_assert!(pass_at_k(n, c + 1, k).unwrap() >= p - 1e-12);
        }
        if k < n {
            prop_assert!(pass_at_k(n, c, k + 1).unwrap() >= p - 1e-12);
        }
    }

    #[test]
    fn enforced_never_exceeds_raw(runs in prop::collection::vec(run_strategy(), 1..20)) {
        let scores: Vec<RunScore> = runs
            .iter()
            .enumerate()
            .map(|(i, (p, t, c))| RunScore::new(format!("t{}", i % 4), i as u32, "a", "m", *p as usize, *t as usize, *c))
            .collect();
        let raw = assert_pct(&scores, false).unwrap();
        let enforced = assert_pct(&scores, true).unwrap();
        prop_assert!(enforced <= raw + 1e-9);
        if scores.iter().all(|s| s.compliant) {
            prop_assert!((enforced - raw).abs() < 1e-9);
        }
        for s in &scores {
            prop_assert!(s.enforced_fraction <= s.raw_fraction);
            if s.full_pass {
                prop_assert_eq!(s.enforced_fraction, 1.0);
            }
        }
    }

    #[test]
    fn swapping_pairs_negates_effect(values in prop::collection::vec((0usize..=10, 0usize..=10), 1..8)) {
        let frameworks = ["flask", "fastapi", "django", "aiohttp", "express", "fastify", "hono", "koa"];
        let mut runs = Vec::new();
        let mut swapped = Vec::new();
        for (i, (with, without)) in values.iter().enumerate() {
            let fw = frameworks[i];
            let a = format!("{fw}-openapi-clean_architecture");
            let b = format!("{fw}-openapi");
            runs.push(RunScore::new(&a, 1, "x", "m", *with, 10, true));
            runs.push(RunScore::new(&b, 1, "x", "m", *without, 10, true));
            swapped.push(RunScore::new(&a, 1, "x", "m", *without, 10, true));
            swapped.push(RunScore::new(&b, 1, "x", "m", *with, 10, true));
        }
        let e = marginal_effect(&runs, ConstraintAxis::Architecture, true).unwrap();
        let s = marginal_effect(&swapped, ConstraintAxis::Architecture, true).unwrap();
        prop_assert_eq!(e.mean_delta, -s.mean_delta);
    }

    #[test]
    fn correlation_transform_invariance(
        xs in prop::collection::vec(-100.0f64..100.0, 4..15),
        scale in 0.1f64..10.0,
        shift in -50.0f64..50.0,
    ) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * 0.5 + (i as f64).sin() * 10.0).collect();
        let Ok(base) = correlations(&xs, &ys) else { return Ok(()); };
        let affine: Vec<f64> = xs.iter().map(|x| x * scale + shift).collect();
        let c = correlations(&affine, &ys).unwrap();
        prop_assert!((c.pearson - base.pearson).abs() < 1e-9);
        let monotone: Vec<f64> = xs.iter().map(|x| x.powi(3) + 2.0 * x).collect();
        let m = correlations(&monotone, &ys).unwrap();
        prop_assert!((m.spearman - base.spearman).abs() < 1e-9);
    }
}
