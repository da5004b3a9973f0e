//! Transportation simplex over an arbitrary [`Scalar`].
//!
//! The initial basis comes from the northwest-corner rule and always has
//! exactly `m + n - 1` cells, degenerate ones included, so the basis is a
//! spanning tree of the bipartite row/column graph. Entering cells are
//! chosen by the most negative reduced cost; after a streak of `m + n`
//! degenerate pivots the rule switches for good to Bland's first-index rule,
//! which cannot cycle. Ties are always broken by the lowest cell index.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotRule {
    Dantzig,
    Bland,
}

#[derive(Debug, Clone)]
pub struct SimplexSolution<S> {
    /// Row-major `m x n` flows.
    pub flow: Vec<S>,
    pub cost: S,
    pub u: Vec<S>,
    pub v: Vec<S>,
    pub pivots: usize,
    /// The rule in force when the solver stopped.
    pub final_rule: PivotRule,
}

/// Minimizes `sum c_ij x_ij` subject to row sums `supply` and column sums
/// `demand`. Totals must agree within the scalar's tolerance.
pub fn solve<S: Scalar>(supply: &[S], demand: &[S], cost: &[S]) -> Result<SimplexSolution<S>> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 || cost.len() != m * n {
        return Err(Error::Solver("empty or inconsistent transportation problem".into()));
    }
    let total_a = supply.iter().fold(S::zero(), |a, b| a + b.clone());
    let total_b = demand.iter().fold(S::zero(), |a, b| a + b.clone());
    let scale = S::one() + total_a.abs_val();
    let mass_tol = S::eps() * S::from_ratio(1000, 1) * scale;
    if (total_a.clone() - total_b).abs_val() > mass_tol {
        return Err(Error::Solver("supply and demand totals differ".into()));
    }
    if supply.iter().chain(demand).any(|x| *x < S::zero()) {
        return Err(Error::Solver("negative supply or demand".into()));
    }

    let mut flow = vec![S::zero(); m * n];
    let mut basic = vec![false; m * n];
    let mut basis: Vec<usize> = Vec::with_capacity(m + n - 1);
    {
        let mut a: Vec<S> = supply.to_vec();
        let mut b: Vec<S> = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = S::min_of(a[i].clone(), b[j].clone());
            flow[i * n + j] = x.clone();
            basic[i * n + j] = true;
            basis.push(i * n + j);
            a[i] = a[i].clone() - x.clone();
            b[j] = b[j].clone() - x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if (a[i] <= b[j] && i < m - 1) || j == n - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        // round-off in floating mode leaves residues in the last cell only
        let last = (m - 1) * n + (n - 1);
        if flow[last] < S::zero() {
            flow[last] = S::zero();
        }
    }
    debug_assert_eq!(basis.len(), m + n - 1);

    let price_tol = S::eps() * S::from_ratio(100, 1);
    let mut rule = PivotRule::Dantzig;
    let mut streak = 0usize;
    let mut pivots = 0usize;
    let cap = 200 * (m * n + m + n) + 10_000;
    let (mut u, mut v) = potentials(m, n, &basis, cost);
    loop {
        // pricing
        let mut enter: Option<(usize, S)> = None;
        for idx in 0..m * n {
            if basic[idx] {
                continue;
            }
            let (i, j) = (idx / n, idx % n);
            let r = cost[idx].clone() - u[i].clone() - v[j].clone();
            if r < -price_tol.clone() {
                match rule {
                    PivotRule::Bland => {
                        enter = Some((idx, r));
                        break;
                    }
                    PivotRule::Dantzig => {
                        if enter.as_ref().is_none_or(|(_, best)| r < *best) {
                            enter = Some((idx, r));
                        }
                    }
                }
            }
        }
        let Some((e, _)) = enter else { break };
        pivots += 1;
        if pivots > cap {
            return Err(Error::Solver(format!("no convergence after {cap} pivots")));
        }

        let cycle = tree_path(m, n, &basis, e / n, e % n);
        // cycle[k] for k even gets -theta, odd gets +theta
        let mut leave: Option<usize> = None;
        for (k, &c) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                leave = match leave {
                    None => Some(c),
                    Some(l) if flow[c] < flow[l] || (flow[c] == flow[l] && c < l) => Some(c),
                    keep => keep,
                };
            }
        }
        let l = leave.expect("a cycle has at least one decreasing cell");
        let theta = flow[l].clone();
        if theta.is_negligible() {
            streak += 1;
            if streak >= m + n {
                rule = PivotRule::Bland;
            }
        } else {
            streak = 0;
        }
        for (k, &c) in cycle.iter().enumerate() {
            flow[c] = if k % 2 == 0 {
                flow[c].clone() - theta.clone()
            } else {
                flow[c].clone() + theta.clone()
            };
        }
        flow[l] = S::zero();
        flow[e] = theta;
        basic[l] = false;
        basic[e] = true;
        let pos = basis.iter().position(|&c| c == l).unwrap();
        basis[pos] = e;
        (u, v) = potentials(m, n, &basis, cost);
    }

    for x in flow.iter_mut() {
        if *x < S::zero() {
            *x = S::zero();
        }
    }
    let total_cost = flow
        .iter()
        .zip(cost)
        .fold(S::zero(), |acc, (x, c)| acc + x.clone() * c.clone());
    Ok(SimplexSolution {
        flow,
        cost: total_cost,
        u,
        v,
        pivots,
        final_rule: rule,
    })
}

/// Solves `u_i + v_j = c_ij` on the basis tree with `u_0 = 0`.
fn potentials<S: Scalar>(m: usize, n: usize, basis: &[usize], cost: &[S]) -> (Vec<S>, Vec<S>) {
    let mut row_adj: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut col_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &c in basis {
        row_adj[c / n].push(c % n);
        col_adj[c % n].push(c / n);
    }
    let mut u: Vec<Option<S>> = vec![None; m];
    let mut v: Vec<Option<S>> = vec![None; n];
    u[0] = Some(S::zero());
    // stack of (is_row, index)
    let mut stack = vec![(true, 0usize)];
    while let Some((is_row, k)) = stack.pop() {
        if is_row {
            let uk = u[k].clone().unwrap();
            for &j in &row_adj[k] {
                if v[j].is_none() {
                    v[j] = Some(cost[k * n + j].clone() - uk.clone());
                    stack.push((false, j));
                }
            }
        } else {
            let vk = v[k].clone().unwrap();
            for &i in &col_adj[k] {
                if u[i].is_none() {
                    u[i] = Some(cost[i * n + k].clone() - vk.clone());
                    stack.push((true, i));
                }
            }
        }
    }
    (
        u.into_iter().map(|x| x.unwrap_or_else(S::zero)).collect(),
        v.into_iter().map(|x| x.unwrap_or_else(S::zero)).collect(),
    )
}

/// Cells of the tree path from row `r` to column `col`, in order. The first
/// cell lies in row `r`.
fn tree_path(m: usize, n: usize, basis: &[usize], r: usize, col: usize) -> Vec<usize> {
    let mut row_adj: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut col_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &c in basis {
        row_adj[c / n].push(c % n);
        col_adj[c % n].push(c / n);
    }
    // BFS from row r over nodes: rows 0..m, columns m..m+n
    let total = m + n;
    let mut parent: Vec<Option<usize>> = vec![None; total];
    let mut seen = vec![false; total];
    let mut queue = std::collections::VecDeque::new();
    seen[r] = true;
    queue.push_back(r);
    while let Some(node) = queue.pop_front() {
        if node == m + col {
            break;
        }
        if node < m {
            for &j in &row_adj[node] {
                if !seen[m + j] {
                    seen[m + j] = true;
                    parent[m + j] = Some(node);
                    queue.push_back(m + j);
                }
            }
        } else {
            for &i in &col_adj[node - m] {
                if !seen[i] {
                    seen[i] = true;
                    parent[i] = Some(node);
                    queue.push_back(i);
                }
            }
        }
    }
    let mut cells = Vec::new();
    let mut node = m + col;
    while let Some(p) = parent[node] {
        let cell = if node >= m { p * n + (node - m) } else { node * n + (p - m) };
        cells.push(cell);
        node = p;
    }
    cells.reverse();
    cells
}

/// Largest violation of dual feasibility and of complementary slackness.
pub fn certificate_residuals<S: Scalar>(sol: &SimplexSolution<S>, cost: &[S], n: usize) -> (f64, f64) {
    let mut infeas: f64 = 0.0;
    let mut slack: f64 = 0.0;
    for (idx, c) in cost.iter().enumerate() {
        let r = (c.clone() - sol.u[idx / n].clone() - sol.v[idx % n].clone()).to_f64();
        infeas = infeas.max(-r);
        if sol.flow[idx].to_f64() > 0.0 {
            slack = slack.max(r.abs());
        }
    }
    (infeas, slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;
    use num_rational::BigRational;

    #[test]
    fn small_problem() {
        let a = [0.5, 0.5];
        let b = [0.5, 0.5];
        let c = [1.0, 0.0, 0.0, 1.0];
        let s = solve(&a, &b, &c).unwrap();
        assert_eq!(s.cost, 0.0);
        assert_eq!(s.flow, vec![0.0, 0.5, 0.5, 0.0]);
        let (i, sl) = certificate_residuals(&s, &c, 2);
        assert!(i <= 1e-12 && sl <= 1e-12);
    }

    #[test]
    fn rational_degenerate_problem() {
        let a = vec![rat(1, 3), rat(1, 3), rat(1, 3)];
        let b = vec![rat(1, 3), rat(1, 3), rat(1, 3)];
        // cyclic costs, optimum is the shifted permutation with cost 0
        let mut c: Vec<BigRational> = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                c.push(if j == (i + 1) % 3 { rat(0, 1) } else { rat(1, 1) });
            }
        }
        let s = solve(&a, &b, &c).unwrap();
        assert_eq!(s.cost, rat(0, 1));
    }

    #[test]
    fn rejects_unbalanced() {
        assert!(solve(&[1.0], &[0.5], &[0.0]).is_err());
    }
}
