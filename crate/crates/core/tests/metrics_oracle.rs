use std::collections::BTreeSet;

use pcr_core::dataset::Necessity;
use pcr_core::metrics::{
    classification_metrics, evaluate, f1_at_k, f1_exact, mean_report, precision_at_k_exact, recall_at_k_exact,
    EvalItem, Fraction, RecallMode,
};
use proptest::prelude::*;

fn same(f: Fraction, num: u64, den: u64) -> bool {
    f.num * den == num * f.den
}

fn hits(truth: &[u8], predicted: &[u8], k: usize) -> u64 {
    predicted.iter().take(k).filter(|p| truth.contains(p)).count() as u64
}

fn instance() -> impl Strategy<Value = (Vec<u8>, Vec<u8>, usize)> {
    (
        proptest::collection::btree_set(0u8..20, 1..8),
        proptest::sample::subsequence((0u8..20).collect::<Vec<_>>(), 0..15).prop_shuffle(),
        1usize..12,
    )
        .prop_map(|(t, p, k)| (t.into_iter().collect(), p, k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn precision(inst in instance()) {
        let (truth, pred, k) = inst;
        let set: BTreeSet<u8> = truth.iter().copied().collect();
        let got = precision_at_k_exact(&set, &pred, k).unwrap();
        prop_assert!(same(got, hits(&truth, &pred, k), k as u64));
    }

    #[test]
    fn recall_both_modes(inst in instance()) {
        let (truth, pred, k) = inst;
        let set: BTreeSet<u8> = truth.iter().copied().collect();
        let h = hits(&truth, &pred, k);
        let n = truth.len();
        let printed = if n < k { k } else { n };
        prop_assert!(same(recall_at_k_exact(&set, &pred, k, RecallMode::AsPrinted).unwrap(), h, printed as u64));
        prop_assert!(same(recall_at_k_exact(&set, &pred, k, RecallMode::Conventional).unwrap(), h, n.min(k) as u64));
    }

    #[test]
    fn f1(inst in instance()) {
        let (truth, pred, k) = inst;
        let set: BTreeSet<u8> = truth.iter().copied().collect();
        let p = precision_at_k_exact(&set, &pred, k).unwrap();
        let r = recall_at_k_exact(&set, &pred, k, RecallMode::AsPrinted).unwrap();
        // 2PR/(P+R) over a common denominator
        let (pn, pd, rn, rd) = (p.num, p.den, r.num, r.den);
        let f = f1_exact(p, r);
        if pn == 0 && rn == 0 {
            prop_assert_eq!(f, Fraction::new(0, 1));
            prop_assert_eq!(f1_at_k(0.0, 0.0), 0.0);
        } else {
            prop_assert!(same(f, 2 * pn * rn, pn * rd + rn * pd));
            let (pf, rf) = (p.to_f64(), r.to_f64());
            prop_assert!((f1_at_k(pf, rf) - f.to_f64()).abs() <= 1e-12);
        }
    }

    #[test]
    fn classification(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let lab = |b: bool| if b { Necessity::Necessary } else { Necessity::Unnecessary };
        let gold: Vec<_> = pairs.iter().map(|p| lab(p.0)).collect();
        let pred: Vec<_> = pairs.iter().map(|p| lab(p.1)).collect();
        let m = classification_metrics(&gold, &pred).unwrap();
        let acc = pairs.iter().filter(|p| p.0 == p.1).count() as f64 / pairs.len() as f64;
        prop_assert!((m.accuracy - acc).abs() <= 1e-12);
        for (class, got) in [(true, m.f1_necessary), (false, m.f1_unnecessary)] {
            let tp = pairs.iter().filter(|p| p.0 == class && p.1 == class).count() as f64;
            let fp = pairs.iter().filter(|p| p.0 != class && p.1 == class).count() as f64;
            let fneg = pairs.iter().filter(|p| p.0 == class && p.1 != class).count() as f64;
            let prec = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
            let rec = if tp + fneg == 0.0 { 0.0 } else { tp / (tp + fneg) };
            let want = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
            prop_assert!((got - want).abs() <= 1e-12, "class {} got {} want {}", class, got, want);
        }
    }
}

#[test]
fn recall_branches() {
    let two: BTreeSet<&str> = ["a", "b"].into();
    assert_eq!(recall_at_k_exact(&two, &["a", "x", "y"], 3, RecallMode::AsPrinted).unwrap(), Fraction::new(1, 3));
    assert_eq!(recall_at_k_exact(&two, &["a", "x", "y"], 3, RecallMode::Conventional).unwrap(), Fraction::new(1, 2));
    let five: BTreeSet<&str> = ["a", "b", "c", "d", "e"].into();
    assert_eq!(recall_at_k_exact(&five, &["a", "b", "y"], 3, RecallMode::AsPrinted).unwrap(), Fraction::new(2, 5));
}

#[test]
fn evaluate_and_mean() {
    let item = |t: &[&str], p: &[&str], g, q| EvalItem {
        true_tags: t.iter().map(|s| s.to_string()).collect(),
        predicted_tags: p.iter().map(|s| s.to_string()).collect(),
        gold_necessity: g,
        predicted_necessity: q,
    };
    use Necessity::*;
    let items = [
        item(&["a", "b", "c"], &["a", "b", "c"], Necessary, Necessary),
        item(&["a"], &["x", "y", "z"], Unnecessary, Necessary),
    ];
    let r = evaluate(&items, &[3], RecallMode::AsPrinted, Some(0)).unwrap();
    let s = r.per_k[&3];
    assert!((s.precision - 0.5).abs() < 1e-12);
    assert!((s.recall - 0.5).abs() < 1e-12);
    assert!((s.f1 - 0.5).abs() < 1e-12);
    assert!((r.accuracy - 0.5).abs() < 1e-12);
    assert!((r.f1_necessary - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(r.f1_unnecessary, 0.0);
    let m = mean_report(&[r.clone(), r.clone()]).unwrap();
    assert_eq!(m.per_k, r.per_k);
    assert_eq!(m.n_requests, 4);
}
