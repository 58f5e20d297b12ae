use std::path::PathBuf;

use proptest::prelude::*;
use rankdea::dea::{
    ap_score, ap_to_h, ccr_score, cross_section_scores, efficiency_panel, h_score, log_score,
    CrossSection, DeaModel, ScoreStatus,
};
use rankdea::pipeline::{load_panel, Lags, LoadConfig};
use rankdea::ranking::{rank_scores, SCORE_TIE_TOL};

fn rows(n: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.5f64..10.0, cols), n)
}

fn section(x: &[Vec<f64>], y: &[Vec<f64>]) -> CrossSection {
    CrossSection::from_rows(x, y).unwrap()
}

fn ap(cs: &CrossSection, n: usize) -> f64 {
    let s = ap_score(cs, n).unwrap();
    assert_eq!(s.status, ScoreStatus::Optimal);
    s.value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn h_and_log_follow_from_ap(x in rows(10, 2), y in rows(10, 2)) {
        let cs = section(&x, &y);
        for n in 0..10 {
            let a = ap(&cs, n);
            let h = h_score(&cs, n).unwrap();
            prop_assert!((h - ap_to_h(a)).abs() <= 1e-7, "h {h} vs 2a/(1+a) {}", ap_to_h(a));
            prop_assert!((h - 2.0 * a / (1.0 + a)).abs() <= 1e-7);
            prop_assert!((log_score(a) + (2.0 / h - 1.0).ln()).abs() <= 1e-6);
        }
    }

    #[test]
    fn ccr_is_ap_capped_at_one(x in rows(10, 2), y in rows(10, 2)) {
        let cs = section(&x, &y);
        for n in 0..10 {
            let c = ccr_score(&cs, n).unwrap();
            let a = ap(&cs, n);
            prop_assert!((c - a.min(1.0)).abs() <= 1e-7, "ccr {c} ap {a}");
            prop_assert!(c <= 1.0 + 1e-9 && c > 0.0);
            // efficient exactly when super-efficiency reaches one
            prop_assert_eq!(a >= 1.0 - 1e-7, c >= 1.0 - 1e-7);
        }
    }

    #[test]
    fn scores_do_not_depend_on_units(
        x in rows(8, 2),
        y in rows(8, 2),
        col in 0usize..4,
        factor in prop::sample::select(vec![1e-3, 0.25, 7.0, 1e4, 1e6]),
    ) {
        let base = section(&x, &y);
        let (mut x2, mut y2) = (x.clone(), y.clone());
        for n in 0..8 {
            if col < 2 { x2[n][col] *= factor } else { y2[n][col - 2] *= factor }
        }
        let scaled = section(&x2, &y2);
        for model in [DeaModel::Ccr, DeaModel::Ap, DeaModel::H] {
            let a = cross_section_scores(&base, model);
            let b = cross_section_scores(&scaled, model);
            for n in 0..8 {
                prop_assert!((a[n].value - b[n].value).abs() <= 1e-7, "{:?} DMU {n}", model);
            }
        }
    }

    #[test]
    fn ap_and_h_rank_alike(x in rows(10, 2), y in rows(10, 2)) {
        let cs = section(&x, &y);
        let a: Vec<f64> = cross_section_scores(&cs, DeaModel::Ap).iter().map(|s| s.value).collect();
        let h: Vec<f64> = cross_section_scores(&cs, DeaModel::H).iter().map(|s| s.value).collect();
        // compare orderings only where the AP scores are clearly separated
        for i in 0..10 {
            for j in 0..10 {
                if a[i] > a[j] + 1e-6 {
                    prop_assert!(h[i] > h[j], "AP orders {i} above {j} but H does not");
                }
            }
        }
        if a.iter().enumerate().all(|(i, v)| a.iter().enumerate().all(|(j, w)| i == j || (v - w).abs() > 1e-6)) {
            prop_assert_eq!(
                rank_scores(&a, SCORE_TIE_TOL).ranking,
                rank_scores(&h, SCORE_TIE_TOL).ranking
            );
        }
    }

    /// With one input and one output every score is a ratio of productivities.
    #[test]
    fn single_ratio_oracle(pairs in prop::collection::vec((0.5f64..10.0, 0.5f64..10.0), 3..9)) {
        let x: Vec<Vec<f64>> = pairs.iter().map(|p| vec![p.0]).collect();
        let y: Vec<Vec<f64>> = pairs.iter().map(|p| vec![p.1]).collect();
        let cs = section(&x, &y);
        let ratio: Vec<f64> = pairs.iter().map(|(x, y)| y / x).collect();
        let best = ratio.iter().cloned().fold(f64::MIN, f64::max);
        for n in 0..pairs.len() {
            let others = ratio.iter().enumerate().filter(|(m, _)| *m != n).map(|(_, r)| *r).fold(f64::MIN, f64::max);
            let ccr = ccr_score(&cs, n).unwrap();
            let a = ap(&cs, n);
            prop_assert!((ccr - ratio[n] / best).abs() <= 1e-9 * (1.0 + ccr), "ccr {ccr}");
            prop_assert!((a - ratio[n] / others).abs() <= 1e-9 * (1.0 + a), "ap {a}");
        }
    }

    /// Dropping a strictly inefficient DMU moves no CCR score, and no AP
    /// score of another inefficient DMU.
    #[test]
    fn inefficient_dmus_are_redundant(x in rows(9, 2), y in rows(9, 2)) {
        let cs = section(&x, &y);
        let ccr: Vec<f64> = (0..9).map(|n| ccr_score(&cs, n).unwrap()).collect();
        let aps: Vec<f64> = (0..9).map(|n| ap(&cs, n)).collect();
        for k in (0..9).filter(|&k| ccr[k] < 1.0 - 1e-6) {
            let reduced = cs.without(k).unwrap();
            for (i, n) in (0..9).filter(|&n| n != k).enumerate() {
                prop_assert!((ccr_score(&reduced, i).unwrap() - ccr[n]).abs() <= 1e-7);
                if ccr[n] < 1.0 - 1e-6 {
                    prop_assert!((ap(&reduced, i) - aps[n]).abs() <= 1e-7, "AP of {n} moved after dropping {k}");
                }
            }
        }
    }

    /// With a single frontier DMU every other DMU's AP score survives any
    /// inefficient removal, and the frontier DMU stays first.
    #[test]
    fn single_frontier_dmu_keeps_every_ap_order(
        x0 in prop::collection::vec(0.5f64..5.0, 2),
        y0 in prop::collection::vec(0.5f64..5.0, 2),
        shrink in prop::collection::vec((prop::collection::vec(1.05f64..4.0, 2), prop::collection::vec(0.2f64..0.95, 2)), 5),
    ) {
        let mut x = vec![x0.clone()];
        let mut y = vec![y0.clone()];
        for (a, b) in &shrink {
            x.push(vec![x0[0] * a[0], x0[1] * a[1]]);
            y.push(vec![y0[0] * b[0], y0[1] * b[1]]);
        }
        let cs = section(&x, &y);
        let aps: Vec<f64> = (0..6).map(|n| ap(&cs, n)).collect();
        prop_assert!(aps[0] > 1.0);
        prop_assert!(aps[1..].iter().all(|&a| a < 1.0));
        for k in 1..6 {
            let reduced = cs.without(k).unwrap();
            let after: Vec<f64> = (0..5).map(|i| ap(&reduced, i)).collect();
            let before: Vec<f64> = (0..6).filter(|&n| n != k).map(|n| aps[n]).collect();
            for i in 1..5 {
                prop_assert!((after[i] - before[i]).abs() <= 1e-7);
            }
            prop_assert_eq!(
                rank_scores(&after, SCORE_TIE_TOL).ranking,
                rank_scores(&before, SCORE_TIE_TOL).ranking
            );
        }
    }
}

/// An inefficient DMU can still bind the super-efficiency program of a
/// frontier DMU, so its removal raises that AP score.
#[test]
fn inefficient_removal_can_raise_a_frontier_ap_score() {
    let cs = section(
        &[vec![1.0], vec![1.0], vec![1.0]],
        &[vec![2.0], vec![1.5], vec![1.0]],
    );
    assert!((ccr_score(&cs, 1).unwrap() - 0.75).abs() < 1e-12);
    assert!((ap(&cs, 0) - 2.0 / 1.5).abs() < 1e-12);
    let reduced = cs.without(1).unwrap();
    assert!((ap(&reduced, 0) - 2.0).abs() < 1e-12);
    assert!((ap(&reduced, 1) - ap(&cs, 2)).abs() < 1e-12);
}

#[test]
fn ratio_fixture_matches_golden_scores() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/ratio");
    let config = LoadConfig {
        lags: Lags {
            inputs: 0,
            outputs: 0,
            context: 0,
        },
        interpolate: false,
    };
    let data = load_panel(
        dir.join("inputs.csv"),
        dir.join("outputs.csv"),
        None,
        &config,
    )
    .unwrap();
    let panel = efficiency_panel(&data, DeaModel::Ccr).unwrap();

    let mut reader = csv::Reader::from_path(dir.join("ccr_golden.csv")).unwrap();
    let mut checked = 0;
    for record in reader.records() {
        let record = record.unwrap();
        let n = data
            .dmu_labels()
            .iter()
            .position(|l| l == &record[0])
            .unwrap();
        let period: i64 = record[1].parse().unwrap();
        let t = data.periods().iter().position(|&p| p == period).unwrap();
        let golden: f64 = record[2].parse().unwrap();
        assert!(
            (panel.scores[(n, t)] - golden).abs() <= 1e-9,
            "{} {}",
            &record[0],
            period
        );
        checked += 1;
    }
    assert_eq!(checked, 15);
}
