//! Linear assignment over rectangular cost matrices.
//!
//! [`solve_optimal`] finds a minimum-cost assignment of every row to a
//! distinct column with a shortest-augmenting-path Hungarian method.
//! [`k_best`] ranks the cheapest assignments with Murty's partitioning,
//! calling the optimal solver on each constrained subproblem. Forbidden
//! pairings carry `f64::INFINITY`.

use nalgebra::DMatrix;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

pub type CostMatrix = DMatrix<f64>;

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
pub enum AssignmentError {
    #[error("no finite-cost assignment exists")]
    Infeasible,
    #[error("cost matrix contains NaN")]
    NotANumber,
}

/// Row-to-column assignment with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `columns[row]` is the column assigned to `row`.
    pub columns: Vec<usize>,
    pub cost: f64,
}

/// Minimum-cost assignment of every row to a distinct column.
pub fn solve_optimal(costs: &CostMatrix) -> Result<Assignment, AssignmentError> {
    if costs.iter().any(|c| c.is_nan()) {
        return Err(AssignmentError::NotANumber);
    }
    hungarian(costs).ok_or(AssignmentError::Infeasible)
}

fn hungarian(costs: &CostMatrix) -> Option<Assignment> {
    let (n, m) = costs.shape();
    if n == 0 {
        return Some(Assignment {
            columns: Vec::new(),
            cost: 0.0,
        });
    }
    if n > m {
        return None;
    }
    // 1-based potentials and matching; index 0 is the virtual column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut matched_row = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut min_slack = vec![0.0; m + 1];
    let mut used = vec![false; m + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut j0 = 0;
        min_slack.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = usize::MAX;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = costs[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            if j1 == usize::MAX || !delta.is_finite() {
                return None;
            }
            for j in 0..=m {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut columns = vec![0usize; n];
    for j in 1..=m {
        if matched_row[j] != 0 {
            columns[matched_row[j] - 1] = j - 1;
        }
    }
    let cost = columns.iter().enumerate().map(|(i, &j)| costs[(i, j)]).sum();
    Some(Assignment { columns, cost })
}

#[derive(Debug, Clone)]
struct Node {
    solution: Assignment,
    /// Rows `0..fixed` are pinned to their columns in `solution`.
    fixed: usize,
    forbidden: Vec<(usize, usize)>,
}

impl Node {
    fn key(&self) -> (f64, &[usize]) {
        (self.solution.cost, &self.solution.columns)
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // reversed: BinaryHeap is a max-heap, we pop the cheapest
    fn cmp(&self, other: &Self) -> Ordering {
        let (a_cost, a_cols) = self.key();
        let (b_cost, b_cols) = other.key();
        b_cost.total_cmp(&a_cost).then_with(|| b_cols.cmp(a_cols))
    }
}

fn constrained(costs: &CostMatrix, pinned: &[(usize, usize)], forbidden: &[(usize, usize)]) -> CostMatrix {
    let mut c = costs.clone();
    for &(row, col) in pinned {
        let keep = c[(row, col)];
        c.row_mut(row).fill(f64::INFINITY);
        c.column_mut(col).fill(f64::INFINITY);
        c[(row, col)] = keep;
    }
    for &(row, col) in forbidden {
        c[(row, col)] = f64::INFINITY;
    }
    c
}

/// The `k` cheapest distinct assignments in nondecreasing cost order.
/// Equal costs are ordered lexicographically by column vector.
pub fn k_best(costs: &CostMatrix, k: usize) -> Result<Vec<Assignment>, AssignmentError> {
    k_best_bounded(costs, k, f64::INFINITY)
}

/// Like [`k_best`], but stops once the next assignment would cost more
/// than `max_cost`.
pub fn k_best_bounded(costs: &CostMatrix, k: usize, max_cost: f64) -> Result<Vec<Assignment>, AssignmentError> {
    k_best_within(costs, k, max_cost, f64::INFINITY)
}

/// Like [`k_best_bounded`], additionally dropping assignments that cost
/// more than `max_gap` above the optimum.
pub fn k_best_within(
    costs: &CostMatrix,
    k: usize,
    max_cost: f64,
    max_gap: f64,
) -> Result<Vec<Assignment>, AssignmentError> {
    let first = solve_optimal(costs)?;
    let max_cost = max_cost.min(first.cost + max_gap);
    let mut out = Vec::new();
    if k == 0 || first.cost > max_cost {
        return Ok(out);
    }
    let rows = costs.nrows();
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        solution: first,
        fixed: 0,
        forbidden: Vec::new(),
    });
    while let Some(node) = heap.pop() {
        if node.solution.cost > max_cost {
            break;
        }
        out.push(node.solution.clone());
        if out.len() == k {
            break;
        }
        // partition the remaining space of this node around its solution
        let cols = &node.solution.columns;
        let mut pinned: Vec<(usize, usize)> = (0..node.fixed).map(|r| (r, cols[r])).collect();
        for row in node.fixed..rows {
            let mut forbidden = node.forbidden.clone();
            forbidden.push((row, cols[row]));
            if let Some(solution) = hungarian(&constrained(costs, &pinned, &forbidden)) {
                if solution.cost <= max_cost {
                    heap.push(Node {
                        solution,
                        fixed: row,
                        forbidden,
                    });
                }
            }
            pinned.push((row, cols[row]));
        }
    }
    out.sort_by(|a, b| a.cost.total_cmp(&b.cost).then_with(|| a.columns.cmp(&b.columns)));
    Ok(out)
}
