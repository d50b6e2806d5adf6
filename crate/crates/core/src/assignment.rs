//! Minimum-cost bipartite assignment (Hungarian method with potentials,
//! O(n^2 m) for an `n x m` matrix with `n <= m`).
//!
//! Entries may be marked infeasible. The solver first maximizes the number of
//! feasible pairs and then minimizes their total cost; infeasible pairs are
//! never reported as matches.

/// Dense row-major cost matrix with a feasibility mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    cost: Vec<f64>,
    feasible: Vec<bool>,
}

impl CostMatrix {
    /// All entries infeasible.
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cost: vec![0.0; rows * cols],
            feasible: vec![false; rows * cols],
        }
    }

    /// `f(i, j)` returns `None` for infeasible pairs.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut m = Self::new(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if let Some(c) = f(i, j) {
                    m.set(i, j, c);
                }
            }
        }
        m
    }

    /// Fully feasible matrix from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self::from_fn(rows.len(), cols, |i, j| Some(rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn set(&mut self, i: usize, j: usize, cost: f64) {
        debug_assert!(cost.is_finite());
        self.cost[i * self.cols + j] = cost;
        self.feasible[i * self.cols + j] = true;
    }

    pub fn forbid(&mut self, i: usize, j: usize) {
        self.feasible[i * self.cols + j] = false;
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = i * self.cols + j;
        self.feasible[k].then_some(self.cost[k])
    }

    /// Stored cost, feasible or not.
    pub fn raw(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.cols + j]
    }

    pub fn is_feasible(&self, i: usize, j: usize) -> bool {
        self.feasible[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self, cost: &CostMatrix) -> f64 {
        self.matches
            .iter()
            .map(|&(i, j)| cost.get(i, j).expect("matches are feasible"))
            .sum()
    }

    fn all_unmatched(rows: usize, cols: usize) -> Self {
        Self {
            matches: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        }
    }
}

pub fn solve_assignment(cost: &CostMatrix) -> Assignment {
    let (rows, cols) = (cost.rows, cost.cols);
    if rows == 0 || cols == 0 {
        return Assignment::all_unmatched(rows, cols);
    }
    let (lo, hi) = cost
        .cost
        .iter()
        .zip(&cost.feasible)
        .filter(|(_, &ok)| ok)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&c, _)| {
            (lo.min(c), hi.max(c))
        });
    if !lo.is_finite() {
        return Assignment::all_unmatched(rows, cols);
    }
    // Any assignment with one more feasible pair is cheaper than one without.
    let n = rows.min(cols);
    let penalty = (hi - lo) * n as f64 + 1.0;

    let transposed = rows > cols;
    let (n, m) = if transposed { (cols, rows) } else { (rows, cols) };
    let entry = |i: usize, j: usize| -> f64 {
        let (r, c) = if transposed { (j, i) } else { (i, j) };
        match cost.get(r, c) {
            Some(v) => v - lo,
            None => penalty,
        }
    };

    let col_of_row = hungarian(n, m, entry);

    let mut matches = Vec::with_capacity(n);
    for (i, &j) in col_of_row.iter().enumerate() {
        let (r, c) = if transposed { (j, i) } else { (i, j) };
        if cost.is_feasible(r, c) {
            matches.push((r, c));
        }
    }
    matches.sort_unstable();
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &matches {
        row_used[r] = true;
        col_used[c] = true;
    }
    Assignment {
        matches,
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}

/// Assigns every one of `n` rows to a distinct column among `m >= n`.
/// Returns the column of each row.
fn hungarian(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based arrays; index 0 is the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    col_of_row
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_entry() {
        let c = CostMatrix::from_rows(&[vec![0.1]]);
        assert_eq!(solve_assignment(&c).matches, vec![(0, 0)]);
    }

    #[test]
    fn diagonal_optimum() {
        let c = CostMatrix::from_rows(&[vec![0.1, 0.9], vec![0.9, 0.1]]);
        let a = solve_assignment(&c);
        assert_eq!(a.matches, vec![(0, 0), (1, 1)]);
        assert!((a.total_cost(&c) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_input() {
        let a = solve_assignment(&CostMatrix::new(0, 3));
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_cols, vec![0, 1, 2]);
        let a = solve_assignment(&CostMatrix::new(2, 0));
        assert_eq!(a.unmatched_rows, vec![0, 1]);
    }

    #[test]
    fn infeasible_pairs_are_reported_unmatched() {
        let mut c = CostMatrix::from_rows(&[vec![0.2, 0.5], vec![0.3, 0.9]]);
        c.forbid(1, 1);
        c.forbid(1, 0);
        let a = solve_assignment(&c);
        assert_eq!(a.matches, vec![(0, 0)]);
        assert_eq!(a.unmatched_rows, vec![1]);
        assert_eq!(a.unmatched_cols, vec![1]);
    }

    #[test]
    fn prefers_more_feasible_pairs() {
        // Greedy would take (0,0) and strand row 1.
        let mut c = CostMatrix::from_rows(&[vec![0.0, 0.9], vec![0.1, 5.0]]);
        c.forbid(1, 1);
        let a = solve_assignment(&c);
        assert_eq!(a.matches, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn rectangular_both_orientations() {
        let c = CostMatrix::from_rows(&[vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0]]);
        let a = solve_assignment(&c);
        assert_eq!(a.total_cost(&c), 3.0);
        assert_eq!(a.unmatched_cols.len(), 1);
        let t = CostMatrix::from_fn(3, 2, |i, j| c.get(j, i));
        let b = solve_assignment(&t);
        assert_eq!(b.total_cost(&t), 3.0);
        assert_eq!(b.unmatched_rows.len(), 1);
    }

    proptest! {
        #[test]
        fn output_is_a_matching(rows in 0usize..8, cols in 0usize..8, seed in any::<u64>()) {
            let mut s = seed;
            let c = CostMatrix::from_fn(rows, cols, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = (s >> 33) as f64 / (1u64 << 31) as f64;
                (v < 0.8).then_some(v)
            });
            let a = solve_assignment(&c);
            let mut seen_r = std::collections::HashSet::new();
            let mut seen_c = std::collections::HashSet::new();
            for &(r, cc) in &a.matches {
                prop_assert!(seen_r.insert(r));
                prop_assert!(seen_c.insert(cc));
                prop_assert!(c.is_feasible(r, cc));
            }
            prop_assert_eq!(a.matches.len() + a.unmatched_rows.len(), rows);
            prop_assert_eq!(a.matches.len() + a.unmatched_cols.len(), cols);
        }
    }
}
