//! Highest-label push-relabel maximum flow with the gap heuristic.
//!
//! Residual capacities are stored directly, so a saturating push leaves an
//! exact zero even in floating point. Generic over [`Scalar`] so the same
//! solver runs in exact rational arithmetic.

use std::collections::VecDeque;

use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct FlowNetwork<T> {
    n: usize,
    to: Vec<usize>,
    residual: Vec<T>,
    original: Vec<T>,
    adj: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Default)]
pub struct FlowStats {
    pub pushes: usize,
    pub relabels: usize,
    pub gaps: usize,
}

impl<T: Scalar> FlowNetwork<T> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            to: Vec::new(),
            residual: Vec::new(),
            original: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Adds `u -> v`; the returned id addresses the forward arc.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: T) -> usize {
        let id = self.to.len();
        self.to.push(v);
        self.residual.push(cap.clone());
        self.original.push(cap);
        self.adj[u].push(id);
        self.to.push(u);
        self.residual.push(T::zero());
        self.original.push(T::zero());
        self.adj[v].push(id + 1);
        id
    }

    pub fn flow_on(&self, edge: usize) -> T {
        self.original[edge].clone() - self.residual[edge].clone()
    }

    pub fn capacity(&self, edge: usize) -> &T {
        &self.original[edge]
    }

    pub fn target(&self, edge: usize) -> usize {
        self.to[edge]
    }

    /// Runs to a maximum flow (not just a preflow) and returns its value.
    pub fn max_flow(&mut self, s: usize, t: usize) -> (T, FlowStats) {
        let n = self.n;
        let mut stats = FlowStats::default();
        if s == t {
            return (T::zero(), stats);
        }
        let max_h = 2 * n;
        let mut height = self.distances_to(t);
        for h in height.iter_mut() {
            if *h == usize::MAX {
                *h = n;
            }
        }
        height[s] = n;
        let mut excess = vec![T::zero(); n];
        let mut count = vec![0usize; max_h + 1];
        for (v, &h) in height.iter().enumerate() {
            if v != s {
                count[h] += 1;
            }
        }
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); max_h + 1];
        let mut in_bucket = vec![false; n];
        let mut highest = 0usize;
        let mut current = vec![0usize; n];

        for k in 0..self.adj[s].len() {
            let e = self.adj[s][k];
            let cap = self.residual[e].clone();
            if cap > T::zero() {
                let v = self.to[e];
                self.residual[e] = T::zero();
                self.residual[e ^ 1] = self.residual[e ^ 1].clone() + cap.clone();
                excess[v] = excess[v].clone() + cap;
                if v != t && !in_bucket[v] && height[v] < max_h {
                    buckets[height[v]].push(v);
                    in_bucket[v] = true;
                    highest = highest.max(height[v]);
                }
            }
        }

        loop {
            while highest > 0 && buckets[highest].is_empty() {
                highest -= 1;
            }
            let u = match buckets[highest].pop() {
                Some(u) => u,
                None => break,
            };
            in_bucket[u] = false;
            // discharge u
            while excess[u] > T::zero() {
                if current[u] == self.adj[u].len() {
                    let old = height[u];
                    let mut best = usize::MAX;
                    for &e in &self.adj[u] {
                        if self.residual[e] > T::zero() {
                            best = best.min(height[self.to[e]]);
                        }
                    }
                    stats.relabels += 1;
                    let new_h = if best == usize::MAX { max_h } else { (best + 1).min(max_h) };
                    count[old] -= 1;
                    height[u] = new_h;
                    count[new_h] += 1;
                    current[u] = 0;
                    if count[old] == 0 && old < n {
                        stats.gaps += 1;
                        for v in 0..n {
                            if v != s && height[v] > old && height[v] < n {
                                count[height[v]] -= 1;
                                height[v] = n + 1;
                                count[n + 1] += 1;
                                current[v] = 0;
                            }
                        }
                        // re-file active nodes under their new heights
                        for b in (old + 1)..n {
                            let moved = std::mem::take(&mut buckets[b]);
                            for v in moved {
                                buckets[height[v]].push(v);
                                highest = highest.max(height[v]);
                            }
                        }
                    }
                    if height[u] >= max_h {
                        break;
                    }
                    continue;
                }
                let e = self.adj[u][current[u]];
                let v = self.to[e];
                if self.residual[e] > T::zero() && height[u] == height[v] + 1 {
                    let delta = if excess[u] < self.residual[e] {
                        excess[u].clone()
                    } else {
                        self.residual[e].clone()
                    };
                    stats.pushes += 1;
                    self.residual[e] = self.residual[e].clone() - delta.clone();
                    self.residual[e ^ 1] = self.residual[e ^ 1].clone() + delta.clone();
                    excess[u] = excess[u].clone() - delta.clone();
                    excess[v] = excess[v].clone() + delta;
                    if v != s && v != t && !in_bucket[v] && height[v] < max_h {
                        buckets[height[v]].push(v);
                        in_bucket[v] = true;
                        highest = highest.max(height[v]);
                    }
                } else {
                    current[u] += 1;
                }
            }
            if excess[u] > T::zero() && height[u] < max_h && !in_bucket[u] {
                buckets[height[u]].push(u);
                in_bucket[u] = true;
                highest = highest.max(height[u]);
            }
        }
        (excess[t].clone(), stats)
    }

    /// BFS distances to `t` over arcs with positive residual capacity.
    fn distances_to(&self, t: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n];
        dist[t] = 0;
        let mut queue = VecDeque::from([t]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.adj[v] {
                // arc u -> v is the reverse of e
                let u = self.to[e];
                if dist[u] == usize::MAX && self.residual[e ^ 1] > T::zero() {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// Source side of the maximal minimum cut: nodes that cannot reach `t`
    /// in the residual network.
    pub fn min_cut_source_side(&self, t: usize) -> Vec<bool> {
        self.distances_to(t).into_iter().map(|d| d == usize::MAX).collect()
    }

    /// Source side of the minimal minimum cut: nodes reachable from `s`.
    pub fn reachable_from(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if !seen[v] && self.residual[e] > T::zero() {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }
}
