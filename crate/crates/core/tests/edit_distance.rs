use pcr_core::answer::edit_distance;
use proptest::prelude::*;

/// Full-table Levenshtein straight from the recurrence.
fn oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-c]{0,12}",
        "[a-z]{0,30}",
        "[a-zé日本+#]{0,10}",
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn matches_full_table(a in word(), b in word()) {
        prop_assert_eq!(edit_distance(&a, &b), oracle(&a, &b));
    }

    #[test]
    fn metric_axioms(a in word(), b in word(), c in word()) {
        let ab = edit_distance(&a, &b);
        prop_assert_eq!(ab, edit_distance(&b, &a));
        prop_assert_eq!(edit_distance(&a, &a), 0);
        prop_assert_eq!(ab == 0, a == b);
        prop_assert!(edit_distance(&a, &c) <= ab + edit_distance(&b, &c));
    }

    #[test]
    fn bounded_by_lengths(a in word(), b in word()) {
        let (la, lb) = (a.chars().count(), b.chars().count());
        let d = edit_distance(&a, &b);
        prop_assert!(d >= la.abs_diff(lb));
        prop_assert!(d <= la.max(lb));
    }
}

#[test]
fn pinned() {
    assert_eq!(edit_distance("if", "iff"), 1);
    assert_eq!(edit_distance("pyhton", "python"), 2);
    assert_eq!(edit_distance("", ""), 0);
    assert_eq!(edit_distance("naïve", "naive"), 1);
}
