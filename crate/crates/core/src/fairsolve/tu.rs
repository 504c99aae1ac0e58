//! Total-unimodularity utilities for small instances.

use ndarray::Array2;

use super::flow::FlowNetwork;
use super::types::GroupMembership;

/// The `(T + 1) x (N + K)` coefficient matrix of the fairness and
/// single-assignment constraints.
///
/// Column `i < N` has a 1 in the row of instance `i`'s group; columns
/// `N..N + K` have a 1 in the last row.
pub fn constraint_matrix(membership: &GroupMembership, k: usize) -> Array2<i64> {
    let (n, t) = (membership.n(), membership.t());
    let mut c = Array2::zeros((t + 1, n + k));
    for (i, &g) in membership.groups().iter().enumerate() {
        c[[g, i]] = 1;
    }
    for j in 0..k {
        c[[t, n + j]] = 1;
    }
    c
}

/// Node-arc incidence matrix: `+1` at the tail, `-1` at the head.
pub fn incidence_matrix(net: &FlowNetwork) -> Array2<i64> {
    let mut a = Array2::zeros((net.num_nodes(), net.arcs().len()));
    for (e, arc) in net.arcs().iter().enumerate() {
        a[[arc.from, e]] += 1;
        a[[arc.to, e]] -= 1;
    }
    a
}

/// Exact determinant by fraction-free Gaussian elimination.
pub fn determinant(m: &Array2<i64>) -> i128 {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "determinant of a non-square matrix");
    if n == 0 {
        return 1;
    }
    let mut a: Vec<Vec<i128>> = m
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&v| v as i128).collect())
        .collect();
    let mut sign = 1;
    let mut prev = 1i128;
    for p in 0..n - 1 {
        if a[p][p] == 0 {
            match (p + 1..n).find(|&r| a[r][p] != 0) {
                Some(r) => {
                    a.swap(p, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in p + 1..n {
            for j in p + 1..n {
                a[i][j] = (a[i][j] * a[p][p] - a[i][p] * a[p][j]) / prev;
            }
        }
        prev = a[p][p];
    }
    sign * a[n - 1][n - 1]
}

/// True iff every square submatrix of order at most `max_order` has
/// determinant in {-1, 0, 1}.
pub fn verify_tu(matrix: &Array2<i64>, max_order: usize) -> bool {
    let (rows, cols) = matrix.dim();
    let top = max_order.min(rows).min(cols);
    for order in 1..=top {
        for rs in combinations(rows, order) {
            for cs in combinations(cols, order) {
                let sub = Array2::from_shape_fn((order, order), |(a, b)| matrix[[rs[a], cs[b]]]);
                if determinant(&sub).abs() > 1 {
                    return false;
                }
            }
        }
    }
    true
}

/// All `r`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if r > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.clone());
        let Some(pos) = (0..r).rev().find(|&p| idx[p] != p + n - r) else {
            return out;
        };
        idx[pos] += 1;
        for q in pos + 1..r {
            idx[q] = idx[q - 1] + 1;
        }
    }
}
