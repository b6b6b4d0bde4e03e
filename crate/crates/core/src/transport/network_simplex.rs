//! Primal network simplex on the complete bipartite transportation graph.
//!
//! The tree bookkeeping (parent / thread / successor counts) follows the
//! classic LEMON layout with an artificial root joined to every node. The
//! leaving-arc rule keeps the spanning tree strongly feasible, which is what
//! rules out cycling on the very degenerate problems produced by uniform
//! weights.
//!
//! Masses are carried as integer multiples of `2^-60`, so flow updates and
//! zero tests are exact; only costs and potentials are floating point.

use crate::error::{Error, Result};

/// Integer mass of one unit of probability.
pub(crate) const MASS_SCALE: i64 = 1 << 60;

const NONE: usize = usize::MAX;
const STATE_UPPER: i8 = -1;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

/// How the entering arc is picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotRule {
    /// Most negative reduced cost within rotating blocks of `√arcs` arcs.
    BlockSearch,
    /// Lowest-index arc with negative reduced cost.
    Bland,
}

/// Converts a non-negative mass vector to integers summing exactly to
/// [`MASS_SCALE`]. The rounding residual goes to the largest entry.
pub(crate) fn quantize(masses: &[f64]) -> Vec<i64> {
    let total: f64 = masses.iter().sum();
    let mut q: Vec<i64> = masses
        .iter()
        .map(|m| ((m / total) * MASS_SCALE as f64).round() as i64)
        .collect();
    let sum: i64 = q.iter().sum();
    let (imax, _) = q.iter().enumerate().max_by_key(|(_, v)| **v).expect("non-empty");
    q[imax] += MASS_SCALE - sum;
    q
}

pub(crate) struct Solution {
    /// `(i, j, flow)` for every arc carrying positive flow.
    pub flows: Vec<(usize, usize, i64)>,
    /// Node potentials: sources `0..n`, sinks `n..n+m`.
    pub potentials: Vec<f64>,
    pub pivots: usize,
}

pub(crate) struct NetworkSimplex<'a> {
    n: usize,
    m: usize,
    cost: &'a [f64],
    art_cost: f64,
    eps: f64,
    rule: PivotRule,

    // Arcs: the first n*m are the bipartite arcs (implicit endpoints), the
    // next node_num are artificial arcs between each node and the root.
    art_source: Vec<usize>,
    art_target: Vec<usize>,
    flow: Vec<i64>,
    state: Vec<i8>,

    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    dirty_revs: Vec<usize>,
    root: usize,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: i64,

    block_size: usize,
    next_arc: usize,
}

impl<'a> NetworkSimplex<'a> {
    /// `supply` has length `n`, `demand` length `m`, both summing to the
    /// same integer total; `cost` is row-major `n x m`.
    pub fn new(supply: &[i64], demand: &[i64], cost: &'a [f64], rule: PivotRule) -> Self {
        let n = supply.len();
        let m = demand.len();
        assert_eq!(cost.len(), n * m);
        let node_num = n + m;
        let arc_num = n * m;
        let all_arcs = arc_num + node_num;
        let max_cost = cost.iter().copied().fold(0.0f64, f64::max);
        let art_cost = (max_cost + 1.0) * node_num as f64;
        let eps = 1e-14 * max_cost.max(f64::MIN_POSITIVE);

        let root = node_num;
        let mut s = Self {
            n,
            m,
            cost,
            art_cost,
            eps,
            rule,
            art_source: vec![0; node_num],
            art_target: vec![0; node_num],
            flow: vec![0; all_arcs],
            state: vec![STATE_LOWER; all_arcs],
            pi: vec![0.0; node_num + 1],
            parent: vec![NONE; node_num + 1],
            pred: vec![NONE; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![0; node_num + 1],
            last_succ: vec![0; node_num + 1],
            pred_dir: vec![DIR_UP; node_num + 1],
            dirty_revs: Vec::new(),
            root,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0,
            block_size: ((arc_num as f64).sqrt().ceil() as usize).max(10),
            next_arc: 0,
        };

        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = node_num + 1;
        s.last_succ[root] = node_num - 1;
        s.pi[root] = 0.0;
        for u in 0..node_num {
            let e = arc_num + u;
            let b = if u < n { supply[u] } else { -demand[u - n] };
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            if b >= 0 {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.art_source[u] = u;
                s.art_target[u] = root;
                s.flow[e] = b;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art_cost;
                s.art_source[u] = root;
                s.art_target[u] = u;
                s.flow[e] = -b;
            }
        }
        s
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        let arc_num = self.n * self.m;
        if e < arc_num {
            e / self.m
        } else {
            self.art_source[e - arc_num]
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        let arc_num = self.n * self.m;
        if e < arc_num {
            self.n + e % self.m
        } else {
            self.art_target[e - arc_num]
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        let arc_num = self.n * self.m;
        if e < arc_num {
            self.cost[e]
        } else if self.art_source[e - arc_num] == self.root {
            self.art_cost
        } else {
            0.0
        }
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        // bipartite arcs only: source i, target n + j
        let i = e / self.m;
        let j = self.n + e % self.m;
        self.state[e] as f64 * (self.cost[e] + self.pi[i] - self.pi[j])
    }

    fn find_entering_arc(&mut self) -> bool {
        let arc_num = self.n * self.m;
        match self.rule {
            PivotRule::Bland => {
                for e in 0..arc_num {
                    if self.reduced(e) < -self.eps {
                        self.in_arc = e;
                        return true;
                    }
                }
                false
            }
            PivotRule::BlockSearch => {
                let mut min = -self.eps;
                let mut found = false;
                let mut cnt = self.block_size;
                let start = self.next_arc;
                let mut e = start;
                for _ in 0..arc_num {
                    let c = self.reduced(e);
                    if c < min {
                        min = c;
                        self.in_arc = e;
                        found = true;
                    }
                    e += 1;
                    if e == arc_num {
                        e = 0;
                    }
                    cnt -= 1;
                    if cnt == 0 {
                        if found {
                            self.next_arc = e;
                            return true;
                        }
                        cnt = self.block_size;
                    }
                }
                if found {
                    self.next_arc = e;
                }
                found
            }
        }
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Strongly feasible leaving-arc rule: strict on the first side of the
    /// cycle, non-strict on the second.
    fn find_leaving_arc(&mut self) -> bool {
        let (first, second) = if self.state[self.in_arc] == STATE_LOWER {
            (self.source(self.in_arc), self.target(self.in_arc))
        } else {
            (self.target(self.in_arc), self.source(self.in_arc))
        };
        self.delta = i64::MAX;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_DOWN {
                i64::MAX
            } else {
                self.flow[e]
            };
            if d < self.delta {
                self.delta = d;
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            let e = self.pred[u];
            let d = if self.pred_dir[u] == DIR_UP {
                i64::MAX
            } else {
                self.flow[e]
            };
            if d <= self.delta {
                self.delta = d;
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self) {
        if self.delta > 0 {
            let val = self.state[self.in_arc] as i64 * self.delta;
            self.flow[self.in_arc] += val;
            let mut u = self.source(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as i64 * val;
                u = self.parent[u];
            }
            let mut u = self.target(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as i64 * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.state[out] = if self.flow[out] == 0 { STATE_LOWER } else { STATE_UPPER };
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];
        let in_dir = if u_in == self.source(self.in_arc) {
            DIR_UP
        } else {
            DIR_DOWN
        };

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = in_dir;
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // re-hang the stem u_in .. u_out under v_in
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = in_dir;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[self.join] == v_in {
            self.join
        } else {
            NONE
        };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if self.join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && u != NONE && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && u != NONE && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != self.join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != self.join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let sigma =
            self.pi[self.v_in] - self.pi[self.u_in] - self.pred_dir[self.u_in] as f64 * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    /// Recomputes every potential from the tree, walking the thread from
    /// the root so that each parent is settled before its children.
    fn refresh_potentials(&mut self) {
        self.pi[self.root] = 0.0;
        let mut u = self.thread[self.root];
        while u != self.root {
            let e = self.pred[u];
            let p = self.parent[u];
            // reduced cost of a tree arc is zero: c + pi[src] - pi[tgt] = 0
            self.pi[u] = if self.pred_dir[u] == DIR_UP {
                self.pi[p] - self.arc_cost(e)
            } else {
                self.pi[p] + self.arc_cost(e)
            };
            u = self.thread[u];
        }
    }

    pub fn run(mut self) -> Result<Solution> {
        let node_num = self.n + self.m;
        let max_pivots = 50 * (self.n * self.m + node_num) + 10_000;
        let mut pivots = 0usize;
        while self.find_entering_arc() {
            self.find_join_node();
            if !self.find_leaving_arc() || self.delta == i64::MAX {
                return Err(Error::Numerical {
                    message: "transport problem reported unbounded".into(),
                    residual: f64::INFINITY,
                });
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            pivots += 1;
            if pivots.is_multiple_of(node_num.max(64)) {
                self.refresh_potentials();
            }
            if pivots > max_pivots {
                return Err(Error::Convergence {
                    iterations: pivots,
                    residual: f64::NAN,
                });
            }
        }
        self.refresh_potentials();

        let arc_num = self.n * self.m;
        let stranded: i64 = self.flow[arc_num..].iter().sum();
        if stranded != 0 {
            return Err(Error::Numerical {
                message: "flow left on artificial arcs".into(),
                residual: stranded as f64 / MASS_SCALE as f64,
            });
        }
        let flows = (0..arc_num)
            .filter(|&e| self.flow[e] > 0)
            .map(|e| (e / self.m, e % self.m, self.flow[e]))
            .collect();
        // potentials in the convention cost(i,j) >= pi[j] - pi[i]
        let potentials = self.pi[..node_num].to_vec();
        Ok(Solution {
            flows,
            potentials,
            pivots,
        })
    }
}

/// Most negative reduced cost `c_ij + π_i - π_j` over all bipartite arcs.
#[cfg(test)]
pub(crate) fn min_reduced_cost(n: usize, m: usize, cost: &[f64], pi: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in 0..m {
            best = best.min(cost[i * m + j] + pi[i] - pi[n + j]);
        }
    }
    best
}
