//! Edmonds-Karp maximum flow over real capacities.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

/// Residual capacities below this are treated as exhausted.
const EPS: f64 = 1e-12;

struct Edge {
    to: usize,
    rev: usize,
    cap: f64,
}

pub(crate) struct EdmondsKarp {
    graph: Vec<Vec<Edge>>,
}

impl EdmondsKarp {
    pub fn new(nodes: usize) -> Self {
        Self {
            graph: (0..nodes).map(|_| Vec::new()).collect(),
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
        let rev_from = self.graph[to].len();
        let rev_to = self.graph[from].len();
        self.graph[from].push(Edge {
            to,
            rev: rev_from,
            cap,
        });
        self.graph[to].push(Edge {
            to: from,
            rev: rev_to,
            cap: 0.0,
        });
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let n = self.graph.len();
        let mut total = 0.0;
        loop {
            // (node, edge index) used to reach each node
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                if v == t {
                    break;
                }
                for (i, e) in self.graph[v].iter().enumerate() {
                    if e.cap > EPS && !seen[e.to] {
                        seen[e.to] = true;
                        prev[e.to] = Some((v, i));
                        queue.push_back(e.to);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            let mut bottleneck = f64::INFINITY;
            let mut v = t;
            while let Some((u, i)) = prev[v] {
                bottleneck = bottleneck.min(self.graph[u][i].cap);
                v = u;
            }
            let mut v = t;
            while let Some((u, i)) = prev[v] {
                self.graph[u][i].cap -= bottleneck;
                let (to, rev) = (self.graph[u][i].to, self.graph[u][i].rev);
                self.graph[to][rev].cap += bottleneck;
                v = u;
            }
            total += bottleneck;
        }
    }

    /// Nodes reachable from `s` in the residual graph; after `max_flow`
    /// this is the source side of a minimum cut.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.graph.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for e in &self.graph[v] {
                if e.cap > EPS && !seen[e.to] {
                    seen[e.to] = true;
                    stack.push(e.to);
                }
            }
        }
        seen
    }
}
