use maptrack::assignment::{solve_assignment, CostMatrix};
use proptest::prelude::*;

/// Exhaustive search: most feasible pairs first, then least cost.
fn brute_force(c: &CostMatrix) -> (usize, f64) {
    fn rec(c: &CostMatrix, i: usize, used: &mut Vec<bool>) -> (usize, f64) {
        if i == c.rows() {
            return (0, 0.0);
        }
        // Row i left unassigned.
        let mut best = rec(c, i + 1, used);
        for j in 0..c.cols() {
            if used[j] {
                continue;
            }
            if let Some(v) = c.get(i, j) {
                used[j] = true;
                let (n, s) = rec(c, i + 1, used);
                used[j] = false;
                let cand = (n + 1, s + v);
                if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                    best = cand;
                }
            }
        }
        best
    }
    rec(c, 0, &mut vec![false; c.cols()])
}

fn matrix(rows: usize, cols: usize, values: &[u16], mask: &[bool]) -> CostMatrix {
    CostMatrix::from_fn(rows, cols, |i, j| {
        let k = i * cols + j;
        mask[k].then_some(f64::from(values[k]))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn matches_exhaustive_search_with_infeasible_entries(
        rows in 1usize..=6,
        cols in 1usize..=6,
        values in prop::collection::vec(0u16..500, 36),
        mask in prop::collection::vec(prop::bool::weighted(0.7), 36),
    ) {
        let c = matrix(rows, cols, &values, &mask);
        let a = solve_assignment(&c);
        let (n, cost) = brute_force(&c);
        prop_assert_eq!(a.matches.len(), n);
        prop_assert_eq!(a.total_cost(&c), cost);
    }

    #[test]
    fn transposition_preserves_cost(
        rows in 1usize..=7,
        cols in 1usize..=7,
        values in prop::collection::vec(0u16..500, 49),
        mask in prop::collection::vec(prop::bool::weighted(0.8), 49),
    ) {
        let c = matrix(rows, cols, &values, &mask);
        let t = CostMatrix::from_fn(cols, rows, |i, j| c.get(j, i));
        let a = solve_assignment(&c);
        let b = solve_assignment(&t);
        prop_assert_eq!(a.matches.len(), b.matches.len());
        prop_assert_eq!(a.total_cost(&c), b.total_cost(&t));
    }
}

#[test]
fn all_infeasible_matches_nothing() {
    let c = CostMatrix::new(3, 4);
    let a = solve_assignment(&c);
    assert!(a.matches.is_empty());
    assert_eq!(a.unmatched_rows, vec![0, 1, 2]);
    assert_eq!(a.unmatched_cols, vec![0, 1, 2, 3]);
}

#[test]
fn negative_and_fractional_costs() {
    let c = CostMatrix::from_rows(&[vec![-0.5, 0.25, 3.0], vec![-2.0, -0.75, 0.0], vec![1.5, 0.5, -1.25]]);
    let a = solve_assignment(&c);
    assert_eq!(a.matches, vec![(0, 1), (1, 0), (2, 2)]);
    assert_eq!(a.total_cost(&c), -3.0);
}
