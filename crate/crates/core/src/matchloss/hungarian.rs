use std::collections::VecDeque;

use crate::error::{Error, Result};

/// `rows × cols` matrix of finite costs, row-major. Rows are predictions,
/// columns ground truths.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                actual: values.len(),
                context: "cost matrix entries",
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("cost matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("cost matrix rows differ in length".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                values.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `(pred, gt)` pairs sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of the matched entries, accumulated in pair order.
    pub total_cost: f64,
}

impl Assignment {
    fn from_pairs(c: &CostMatrix, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let total_cost = pairs.iter().fold(0.0, |acc, &(r, k)| acc + c.get(r, k));
        Self { pairs, total_cost }
    }
}

/// Minimum-cost assignment of `min(rows, cols)` pairs.
///
/// Among optimal assignments the lexicographically smallest pair sequence
/// is returned: the optimal dual potentials identify every optimal matching
/// as a perfect matching of the tight-edge graph, which is then fixed row by
/// row to the smallest feasible column.
pub fn hungarian(c: &CostMatrix) -> Assignment {
    let n = c.rows.max(c.cols);
    if c.rows == 0 || c.cols == 0 {
        return Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        };
    }
    let scale = c.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // Padding entries are all equal, so any constant keeps the optimum of
    // the real entries; a large one keeps the padded problem well scaled.
    let sentinel = scale + 1.0;
    let a = |r: usize, k: usize| {
        if r < c.rows && k < c.cols {
            c.get(r, k)
        } else {
            sentinel
        }
    };

    // Shortest augmenting paths with potentials, 1-based with a virtual
    // column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
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
            }
            for j in 0..=n {
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

    let mut row_of = vec![0usize; n];
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        row_of[j - 1] = p[j] - 1;
        col_of[p[j] - 1] = j - 1;
    }
    let tol = 1e-11 * (1.0 + sentinel) * n as f64;
    let tight = |r: usize, k: usize| a(r, k) - u[r + 1] - v[k + 1] <= tol;
    lexicographic_refine(n, c.cols, &tight, &mut col_of, &mut row_of);

    let pairs = (0..c.rows)
        .filter(|&r| col_of[r] < c.cols)
        .map(|r| (r, col_of[r]))
        .collect();
    Assignment::from_pairs(c, pairs)
}

/// Rewrites a perfect matching of the tight graph into the lexicographically
/// smallest one. Columns `>= real_cols` are padding and rank last.
fn lexicographic_refine(
    n: usize,
    real_cols: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    col_of: &mut [usize],
    row_of: &mut [usize],
) {
    let mut fixed = vec![false; n];
    for i in 0..n {
        let preference = (0..real_cols).chain(real_cols..n);
        for j in preference {
            if !tight(i, j) {
                continue;
            }
            if col_of[i] == j || reroute(i, j, n, tight, &fixed, col_of, row_of) {
                break;
            }
        }
        fixed[i] = true;
    }
}

/// Tries to give column `j` to row `i`, moving the row that holds `j` along
/// an alternating path of tight edges that ends at `i`'s current column.
fn reroute(
    i: usize,
    j: usize,
    n: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    fixed: &[bool],
    col_of: &mut [usize],
    row_of: &mut [usize],
) -> bool {
    let target = col_of[i];
    let start = row_of[j];
    if fixed[start] {
        return false;
    }
    // BFS over rows; parent[col] = row that claimed it.
    let mut parent = vec![usize::MAX; n];
    let mut seen_row = vec![false; n];
    seen_row[start] = true;
    seen_row[i] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(r) = queue.pop_front() {
        for k in 0..n {
            if k == j || parent[k] != usize::MAX || !tight(r, k) {
                continue;
            }
            parent[k] = r;
            if k == target {
                // Shift assignments back along the path.
                let mut col = k;
                loop {
                    let row = parent[col];
                    let prev = col_of[row];
                    col_of[row] = col;
                    row_of[col] = row;
                    if row == start {
                        break;
                    }
                    col = prev;
                }
                col_of[i] = j;
                row_of[j] = i;
                return true;
            }
            let next = row_of[k];
            if !fixed[next] && !seen_row[next] {
                seen_row[next] = true;
                queue.push_back(next);
            }
        }
    }
    false
}

/// Exhaustive oracle: enumerates every assignment of `min(rows, cols)`
/// pairs; ties go to the lexicographically smallest pair sequence.
pub fn brute_force_assignment(c: &CostMatrix) -> Assignment {
    if c.rows == 0 || c.cols == 0 {
        return Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        };
    }
    let transposed = c.rows > c.cols;
    let m = if transposed { c.transpose() } else { c.clone() };
    let mut best: Option<Assignment> = None;
    let mut chosen = Vec::with_capacity(m.rows);
    let mut used = vec![false; m.cols];
    enumerate(&m, &mut chosen, &mut used, &mut |cols| {
        let pairs: Vec<(usize, usize)> = cols
            .iter()
            .enumerate()
            .map(|(r, &k)| if transposed { (k, r) } else { (r, k) })
            .collect();
        let cand = Assignment::from_pairs(c, pairs);
        let better = match &best {
            None => true,
            Some(b) => cand.total_cost < b.total_cost || (cand.total_cost == b.total_cost && cand.pairs < b.pairs),
        };
        if better {
            best = Some(cand);
        }
    });
    best.expect("non-empty matrix has an assignment")
}

fn enumerate(m: &CostMatrix, chosen: &mut Vec<usize>, used: &mut [bool], visit: &mut dyn FnMut(&[usize])) {
    if chosen.len() == m.rows {
        visit(chosen);
        return;
    }
    for k in 0..m.cols {
        if !used[k] {
            used[k] = true;
            chosen.push(k);
            enumerate(m, chosen, used, visit);
            chosen.pop();
            used[k] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use rand::Rng;

    #[test]
    fn small_examples() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 2.0);
        let one = CostMatrix::from_rows(&[vec![7.0]]).unwrap();
        assert_eq!(hungarian(&one).pairs, vec![(0, 0)]);
        assert_eq!(hungarian(&one).total_cost, 7.0);
        let empty = CostMatrix::new(0, 3, vec![]).unwrap();
        assert!(hungarian(&empty).pairs.is_empty());
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let c = CostMatrix::from_rows(&[vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]]).unwrap();
        assert_eq!(hungarian(&c).pairs, vec![(0, 0), (1, 1), (2, 2)]);
        let c = CostMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![5.0, 5.0]]).unwrap();
        assert_eq!(hungarian(&c).pairs, vec![(0, 0), (1, 1)]);
        let c = CostMatrix::from_rows(&[vec![3.0, 0.0, 0.0]]).unwrap();
        assert_eq!(hungarian(&c).pairs, vec![(0, 1)]);
    }

    #[test]
    fn seeded_six_by_six_matches_brute_force() {
        let mut rng = seeded_rng(6);
        let c = CostMatrix::new(6, 6, (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        assert_eq!(hungarian(&c), brute_force_assignment(&c));
    }

    #[test]
    fn rectangular_and_integer_matrices_match_brute_force() {
        let mut rng = seeded_rng(7);
        for _ in 0..300 {
            let rows = rng.gen_range(1..=6);
            let cols = rng.gen_range(1..=6);
            let values = (0..rows * cols).map(|_| rng.gen_range(0..4) as f64).collect();
            let c = CostMatrix::new(rows, cols, values).unwrap();
            assert_eq!(hungarian(&c), brute_force_assignment(&c), "{c:?}");
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(CostMatrix::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(CostMatrix::new(1, 2, vec![0.0]).is_err());
    }
}
