//! Linear assignment: a dense shortest-augmenting-path solver and a gated
//! variant that refuses pairs above a cost ceiling.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("cost matrix has {got} entries, expected {rows}x{cols}")]
    Shape { rows: usize, cols: usize, got: usize },
    #[error("non-finite cost at ({0}, {1})")]
    NonFinite(usize, usize),
}

/// Dense row-major cost matrix; lower is better.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AssignmentError> {
        if data.len() != rows * cols {
            return Err(AssignmentError::Shape { rows, cols, got: data.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(AssignmentError::NonFinite(pos / cols, pos % cols));
        }
        Ok(Self { rows, cols, data })
    }

    /// Panics if `f` yields a non-finite cost.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data).expect("cost function produced a non-finite value")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    fn transposed(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Matching {
    fn from_pairs(mut pairs: Vec<(usize, usize)>, cost: &CostMatrix) -> Self {
        pairs.sort_unstable();
        let total_cost = pairs.iter().map(|&(i, j)| cost.get(i, j)).sum();
        Self { pairs, total_cost }
    }
}

/// Minimum-cost matching of cardinality `min(rows, cols)`.
///
/// Rows are inserted in index order and each insertion runs a Dijkstra-style
/// search for the cheapest augmenting path over reduced costs. Ties go to an
/// unassigned column, then to the lowest column index, which makes the result
/// a pure function of the matrix.
pub fn solve_assignment(cost: &CostMatrix) -> Matching {
    if cost.rows == 0 || cost.cols == 0 {
        return Matching::default();
    }
    if cost.rows > cost.cols {
        let t = cost.transposed();
        let pairs = augment_all(&t).into_iter().map(|(j, i)| (i, j)).collect();
        return Matching::from_pairs(pairs, cost);
    }
    let pairs = augment_all(cost);
    Matching::from_pairs(pairs, cost)
}

/// Requires `rows <= cols`.
fn augment_all(cost: &CostMatrix) -> Vec<(usize, usize)> {
    let (nr, nc) = (cost.rows, cost.cols);
    let mut u = vec![0.0; nr];
    let mut v = vec![0.0; nc];
    let mut col4row: Vec<Option<usize>> = vec![None; nr];
    let mut row4col: Vec<Option<usize>> = vec![None; nc];
    let mut shortest = vec![f64::INFINITY; nc];
    let mut path = vec![0usize; nc];
    let mut row_seen = vec![false; nr];
    let mut col_seen = vec![false; nc];

    for cur_row in 0..nr {
        shortest.fill(f64::INFINITY);
        row_seen.fill(false);
        col_seen.fill(false);

        let mut min_val = 0.0;
        let mut i = cur_row;
        let sink = loop {
            row_seen[i] = true;
            let mut best: Option<usize> = None;
            let mut lowest = f64::INFINITY;
            for j in 0..nc {
                if col_seen[j] {
                    continue;
                }
                let reduced = min_val + cost.get(i, j) - u[i] - v[j];
                if reduced < shortest[j] {
                    path[j] = i;
                    shortest[j] = reduced;
                }
                let better = match best {
                    None => true,
                    Some(b) => {
                        shortest[j] < lowest
                            || (shortest[j] == lowest && row4col[j].is_none() && row4col[b].is_some())
                    }
                };
                if better {
                    lowest = shortest[j];
                    best = Some(j);
                }
            }
            // Finite costs and rows <= cols guarantee an unseen column exists.
            let j = best.expect("rectangular matrix with rows <= cols always has a free column");
            min_val = lowest;
            col_seen[j] = true;
            match row4col[j] {
                None => break j,
                Some(next) => i = next,
            }
        };

        u[cur_row] += min_val;
        for r in 0..nr {
            if row_seen[r] && r != cur_row {
                let c = col4row[r].expect("seen rows other than the inserted one are assigned");
                u[r] += min_val - shortest[c];
            }
        }
        for c in 0..nc {
            if col_seen[c] {
                v[c] -= min_val - shortest[c];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = Some(r);
            let prev = col4row[r].replace(j);
            if r == cur_row {
                break;
            }
            j = prev.expect("rows on the augmenting path are assigned");
        }
    }

    col4row
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c.expect("every row is assigned")))
        .collect()
}

/// Optimal matching restricted to pairs with `cost <= max_cost`.
///
/// Entries above the ceiling are inflated by a penalty large enough that any
/// assignment with more admissible pairs beats one with fewer; among equally
/// many admissible pairs the total admissible cost is minimised. Inflated
/// pairs are dropped from the result.
pub fn threshold_match(cost: &CostMatrix, max_cost: f64) -> Matching {
    if cost.rows == 0 || cost.cols == 0 {
        return Matching::default();
    }
    let admissible = |v: f64| v <= max_cost;
    let span = cost.data.iter().filter(|&&v| admissible(v)).fold(0.0f64, |m, v| m.max(v.abs()));
    if !cost.data.iter().any(|&v| admissible(v)) {
        return Matching::default();
    }
    let k = cost.rows.min(cost.cols) as f64;
    let penalty = (2.0 * k + 2.0) * span + 1.0;
    let gated = CostMatrix::from_fn(cost.rows, cost.cols, |i, j| {
        let v = cost.get(i, j);
        if admissible(v) {
            v
        } else {
            penalty
        }
    });
    let solved = solve_assignment(&gated);
    let pairs = solved.pairs.into_iter().filter(|&(i, j)| admissible(cost.get(i, j))).collect();
    Matching::from_pairs(pairs, cost)
}
