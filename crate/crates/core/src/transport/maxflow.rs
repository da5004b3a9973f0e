//! Dinic's maximum flow, used as the feasibility oracle of the bottleneck
//! solver. Capacities are either exact integers or floats with a tolerance.

use std::collections::VecDeque;
use std::ops::{Add, Sub};

pub trait Capacity: Copy + PartialOrd + Add<Output = Self> + Sub<Output = Self> {
    fn zero() -> Self;
    fn infinite() -> Self;
    /// Whether a residual capacity counts as usable.
    fn usable(self) -> bool;
    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Capacity for u64 {
    fn zero() -> Self {
        0
    }
    fn infinite() -> Self {
        u64::MAX / 4
    }
    fn usable(self) -> bool {
        self > 0
    }
}

/// Residual capacities at or below this are treated as saturated.
pub const FLOAT_CAP_TOL: f64 = 1e-10;

impl Capacity for f64 {
    fn zero() -> Self {
        0.0
    }
    fn infinite() -> Self {
        f64::INFINITY
    }
    fn usable(self) -> bool {
        self > FLOAT_CAP_TOL * 1e-3
    }
}

#[derive(Debug, Clone)]
struct Edge<C> {
    to: usize,
    cap: C,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork<C> {
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge<C>>,
}

impl<C: Capacity> FlowNetwork<C> {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            adj: vec![Vec::new(); nodes],
            edges: Vec::new(),
        }
    }

    /// Adds an edge and returns its id; the reverse edge is `id ^ 1`.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: C) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap });
        self.adj[from].push(id);
        self.edges.push(Edge { to: from, cap: C::zero() });
        self.adj[to].push(id + 1);
        id
    }

    /// Flow currently routed through edge `id`.
    pub fn flow(&self, id: usize) -> C {
        self.edges[id ^ 1].cap
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> C {
        let mut total = C::zero();
        loop {
            let level = self.levels(s);
            if level[t] == usize::MAX {
                return total;
            }
            let mut it = vec![0usize; self.adj.len()];
            loop {
                let f = self.augment(s, t, C::infinite(), &level, &mut it);
                if !f.usable() {
                    break;
                }
                total = total + f;
            }
        }
    }

    fn levels(&self, s: usize) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.adj.len()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &e in &self.adj[v] {
                let Edge { to, cap } = self.edges[e];
                if cap.usable() && level[to] == usize::MAX {
                    level[to] = level[v] + 1;
                    q.push_back(to);
                }
            }
        }
        level
    }

    fn augment(&mut self, v: usize, t: usize, pushed: C, level: &[usize], it: &mut [usize]) -> C {
        if v == t {
            return pushed;
        }
        while it[v] < self.adj[v].len() {
            let e = self.adj[v][it[v]];
            let Edge { to, cap } = self.edges[e];
            if cap.usable() && level[to] == level[v] + 1 {
                let f = self.augment(to, t, pushed.min(cap), level, it);
                if f.usable() {
                    self.edges[e].cap = self.edges[e].cap - f;
                    self.edges[e ^ 1].cap = self.edges[e ^ 1].cap + f;
                    return f;
                }
            }
            it[v] += 1;
        }
        C::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_network() {
        let mut g = FlowNetwork::<u64>::new(6);
        g.add_edge(0, 1, 16);
        g.add_edge(0, 2, 13);
        g.add_edge(1, 2, 10);
        g.add_edge(2, 1, 4);
        g.add_edge(1, 3, 12);
        g.add_edge(3, 2, 9);
        g.add_edge(2, 4, 14);
        g.add_edge(4, 3, 7);
        g.add_edge(3, 5, 20);
        g.add_edge(4, 5, 4);
        assert_eq!(g.max_flow(0, 5), 23);
    }

    #[test]
    fn float_capacities() {
        let mut g = FlowNetwork::<f64>::new(4);
        g.add_edge(0, 1, 0.3);
        g.add_edge(0, 2, 0.7);
        g.add_edge(1, 3, 0.5);
        g.add_edge(2, 3, 0.4);
        assert!((g.max_flow(0, 3) - 0.7).abs() < 1e-12);
    }
}
