//! Agglomerative description-length minimisation.
//!
//! Start from singleton tag blocks and structurally-equivalent question
//! blocks, then alternate rounds of greedy block merges (both layers ranked
//! together by ΔDL) with greedy single-node move sweeps. The best partition
//! seen whose tag block count lies in `[b_min, b_max]` is returned.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{description_length, BipartiteGraph, Partition, Side};
use crate::lnfact::{ln_choose, ln_factorial, ln_multiset};

const IMPROVEMENT_EPS: f64 = 1e-10;
/// Below this many candidate blocks every block is evaluated.
const EXHAUSTIVE_CANDIDATES: usize = 32;
/// Total block count under which rounds merge one pair at a time.
const FINE_MERGE_BELOW: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SbmConfig {
    pub seed: u64,
    pub max_sweeps: usize,
    pub b_min: usize,
    /// Defaults to `min(N_tags, 2·√E)`.
    pub b_max: Option<usize>,
    pub degree_corrected: bool,
    /// Random merge candidates evaluated per block per round.
    pub merge_candidates: usize,
    /// Cap on the initial number of question blocks.
    pub max_initial_question_blocks: usize,
}

impl Default for SbmConfig {
    fn default() -> Self {
        SbmConfig {
            seed: 0,
            max_sweeps: 10,
            b_min: 1,
            b_max: None,
            degree_corrected: false,
            merge_candidates: 10,
            max_initial_question_blocks: 4096,
        }
    }
}

impl SbmConfig {
    pub fn resolved_b_max(&self, graph: &BipartiteGraph) -> usize {
        let n = graph.n_tags().max(1);
        let default = ((2.0 * (graph.n_edges() as f64).sqrt()).floor() as usize).max(1);
        self.b_max.unwrap_or(default).min(n).max(self.resolved_b_min(graph))
    }

    pub fn resolved_b_min(&self, graph: &BipartiteGraph) -> usize {
        self.b_min.max(1).min(graph.n_tags().max(1))
    }
}

fn side_idx(side: Side) -> usize {
    match side {
        Side::Tag => 0,
        Side::Question => 1,
    }
}

fn other(side: Side) -> Side {
    match side {
        Side::Tag => Side::Question,
        Side::Question => Side::Tag,
    }
}

/// Mutable block state with incremental ΔDL evaluation.
pub(crate) struct State<'g> {
    g: &'g BipartiteGraph,
    dc: bool,
    block: [Vec<u32>; 2],
    size: [Vec<u64>; 2],
    /// Edge total per block.
    deg: [Vec<u64>; 2],
    /// `e[r * cap_q + s]`, r a tag block, s a question block.
    e: Vec<u64>,
    cap: [usize; 2],
    active: [Vec<u32>; 2],
    scratch: Vec<u64>,
    touched: Vec<u32>,
}

impl<'g> State<'g> {
    pub(crate) fn new(g: &'g BipartiteGraph, partition: &Partition, dc: bool) -> Self {
        let p = partition.canonical();
        let cap = [p.n_tag_blocks(), p.n_question_blocks()];
        let mut st = State {
            g,
            dc,
            block: [p.tag_blocks().to_vec(), p.question_blocks().to_vec()],
            size: [vec![0; cap[0]], vec![0; cap[1]]],
            deg: [vec![0; cap[0]], vec![0; cap[1]]],
            e: vec![0; cap[0] * cap[1]],
            cap,
            active: [(0..cap[0] as u32).collect(), (0..cap[1] as u32).collect()],
            scratch: vec![0; cap[0].max(cap[1])],
            touched: Vec::new(),
        };
        for side in [Side::Tag, Side::Question] {
            let i = side_idx(side);
            for &b in &st.block[i] {
                st.size[i][b as usize] += 1;
            }
        }
        for (t, q) in g.edges() {
            let r = st.block[0][t as usize] as usize;
            let s = st.block[1][q as usize] as usize;
            st.e[r * cap[1] + s] += 1;
            st.deg[0][r] += 1;
            st.deg[1][s] += 1;
        }
        st
    }

    pub(crate) fn partition(&self) -> Partition {
        Partition::new(&self.block[0], &self.block[1])
    }

    fn n_blocks(&self, side: Side) -> usize {
        self.active[side_idx(side)].len()
    }

    #[inline]
    fn e_at(&self, side: Side, b: usize, t: usize) -> u64 {
        match side {
            Side::Tag => self.e[b * self.cap[1] + t],
            Side::Question => self.e[t * self.cap[1] + b],
        }
    }

    #[inline]
    fn e_add(&mut self, side: Side, b: usize, t: usize, delta: i64) {
        let idx = match side {
            Side::Tag => b * self.cap[1] + t,
            Side::Question => t * self.cap[1] + b,
        };
        self.e[idx] = (self.e[idx] as i64 + delta) as u64;
    }

    #[inline]
    fn pair_term(&self, n_a: u64, n_b: u64, e: u64) -> f64 {
        if self.dc {
            -ln_factorial(e)
        } else {
            ln_choose(n_a * n_b, e)
        }
    }

    #[inline]
    fn block_term(&self, n: u64, d: u64) -> f64 {
        let base = -ln_factorial(n);
        if self.dc {
            base + ln_factorial(d) + ln_multiset(n, d)
        } else {
            base
        }
    }

    /// The parts of the DL that depend only on block counts.
    fn global_term(&self, bt: usize, bq: usize) -> f64 {
        let side = |n: usize, b: usize| {
            if n == 0 {
                0.0
            } else {
                (n as f64).ln() + ln_choose(n as u64 - 1, b as u64 - 1)
            }
        };
        ln_multiset((bt * bq) as u64, self.g.n_edges() as u64)
            + side(self.g.n_tags(), bt)
            + side(self.g.n_questions(), bq)
    }

    fn block_counts_after(&self, side: Side, removed: usize) -> (usize, usize) {
        let mut b = [self.n_blocks(Side::Tag), self.n_blocks(Side::Question)];
        b[side_idx(side)] -= removed;
        (b[0], b[1])
    }

    /// Fills `scratch[t]` with the edges from node `v` into each block `t`
    /// of the other side and records the touched blocks.
    fn count_neighbor_blocks(&mut self, side: Side, v: usize) {
        let oi = side_idx(other(side));
        for &t in &self.touched {
            self.scratch[t as usize] = 0;
        }
        self.touched.clear();
        for &u in self.g.neighbors(side, v) {
            let t = self.block[oi][u as usize];
            if self.scratch[t as usize] == 0 {
                self.touched.push(t);
            }
            self.scratch[t as usize] += 1;
        }
    }

    /// ΔDL of moving `v` to block `s`. Requires `count_neighbor_blocks(side, v)`.
    fn move_delta(&self, side: Side, v: usize, s: usize) -> f64 {
        let i = side_idx(side);
        let oi = 1 - i;
        let r = self.block[i][v] as usize;
        debug_assert_ne!(r, s);
        let (nr, ns) = (self.size[i][r], self.size[i][s]);
        let k = self.g.neighbors(side, v).len() as u64;

        let mut delta = 0.0;
        let mut pair = |t: usize, kt: u64| {
            let nt = self.size[oi][t];
            let (ert, est) = (self.e_at(side, r, t), self.e_at(side, s, t));
            delta += self.pair_term(nr - 1, nt, ert - kt) + self.pair_term(ns + 1, nt, est + kt)
                - self.pair_term(nr, nt, ert)
                - self.pair_term(ns, nt, est);
        };
        if self.dc {
            for &t in &self.touched {
                pair(t as usize, self.scratch[t as usize]);
            }
        } else {
            for &t in &self.active[oi] {
                pair(t as usize, self.scratch[t as usize]);
            }
        }
        let (dr, ds) = (self.deg[i][r], self.deg[i][s]);
        delta += self.block_term(nr - 1, dr - k) + self.block_term(ns + 1, ds + k)
            - self.block_term(nr, dr)
            - self.block_term(ns, ds);
        if nr == 1 {
            let (bt, bq) = self.block_counts_after(side, 1);
            delta += self.global_term(bt, bq)
                - self.global_term(self.n_blocks(Side::Tag), self.n_blocks(Side::Question));
        }
        delta
    }

    /// Moves `v` to block `s`. Requires `count_neighbor_blocks(side, v)`.
    fn apply_move(&mut self, side: Side, v: usize, s: usize) {
        let i = side_idx(side);
        let r = self.block[i][v] as usize;
        let k = self.g.neighbors(side, v).len() as u64;
        for j in 0..self.touched.len() {
            let t = self.touched[j] as usize;
            let kt = self.scratch[t] as i64;
            self.e_add(side, r, t, -kt);
            self.e_add(side, s, t, kt);
        }
        self.size[i][r] -= 1;
        self.size[i][s] += 1;
        self.deg[i][r] -= k;
        self.deg[i][s] += k;
        self.block[i][v] = s as u32;
        if self.size[i][r] == 0 {
            self.active[i].retain(|&b| b as usize != r);
        }
    }

    /// ΔDL of merging block `a` into block `b` on `side`.
    fn merge_delta(&self, side: Side, a: usize, b: usize) -> f64 {
        let i = side_idx(side);
        let oi = 1 - i;
        let (na, nb) = (self.size[i][a], self.size[i][b]);
        let mut delta = 0.0;
        for &t in &self.active[oi] {
            let t = t as usize;
            let (eat, ebt) = (self.e_at(side, a, t), self.e_at(side, b, t));
            if self.dc && eat == 0 && ebt == 0 {
                continue;
            }
            let nt = self.size[oi][t];
            delta += self.pair_term(na + nb, nt, eat + ebt) - self.pair_term(na, nt, eat) - self.pair_term(nb, nt, ebt);
        }
        let (da, db) = (self.deg[i][a], self.deg[i][b]);
        delta += self.block_term(na + nb, da + db) - self.block_term(na, da) - self.block_term(nb, db);
        let (bt, bq) = self.block_counts_after(side, 1);
        delta + self.global_term(bt, bq) - self.global_term(self.n_blocks(Side::Tag), self.n_blocks(Side::Question))
    }

    /// One greedy pass over all nodes in random order. Returns accepted moves.
    fn sweep(&mut self, rng: &mut ChaCha8Rng, b_min_tags: usize) -> usize {
        let mut order: Vec<(Side, u32)> = (0..self.g.n_tags() as u32)
            .map(|v| (Side::Tag, v))
            .chain((0..self.g.n_questions() as u32).map(|v| (Side::Question, v)))
            .collect();
        order.shuffle(rng);
        let mut moves = 0;
        let mut candidates = Vec::new();
        for (side, v) in order {
            let v = v as usize;
            let i = side_idx(side);
            if self.n_blocks(side) < 2 {
                continue;
            }
            let r = self.block[i][v] as usize;
            let min_blocks = if side == Side::Tag { b_min_tags } else { 1 };
            if self.size[i][r] == 1 && self.n_blocks(side) <= min_blocks {
                continue;
            }
            self.count_neighbor_blocks(side, v);
            self.move_candidates(side, v, rng, &mut candidates);
            let mut best: Option<(f64, usize)> = None;
            for &s in &candidates {
                let d = self.move_delta(side, v, s);
                if best.is_none_or(|(bd, bs)| d < bd || (d == bd && s < bs)) {
                    best = Some((d, s));
                }
            }
            if let Some((d, s)) = best {
                if d < -IMPROVEMENT_EPS {
                    self.apply_move(side, v, s);
                    moves += 1;
                }
            }
        }
        moves
    }

    /// All other blocks when there are few; otherwise a random sample plus
    /// the blocks reached by two-hop walks from `v`.
    fn move_candidates(&self, side: Side, v: usize, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        let i = side_idx(side);
        let r = self.block[i][v] as usize;
        out.clear();
        let act = &self.active[i];
        if act.len() - 1 <= EXHAUSTIVE_CANDIDATES {
            out.extend(act.iter().map(|&b| b as usize).filter(|&b| b != r));
            return;
        }
        for j in index::sample(rng, act.len(), 10) {
            out.push(act[j] as usize);
        }
        let nbrs = self.g.neighbors(side, v);
        if !nbrs.is_empty() {
            use rand::Rng;
            for _ in 0..10 {
                let u = nbrs[rng.random_range(0..nbrs.len())] as usize;
                let back = self.g.neighbors(other(side), u);
                let w = back[rng.random_range(0..back.len())] as usize;
                out.push(self.block[i][w] as usize);
            }
        }
        out.sort_unstable();
        out.dedup();
        out.retain(|&b| b != r);
    }

    /// Best merge partner for each block of `side`.
    fn merge_proposals(&self, side: Side, k: usize, rng: &mut ChaCha8Rng, out: &mut Vec<(f64, Side, u32, u32)>) {
        let act = &self.active[side_idx(side)];
        for (ai, &a) in act.iter().enumerate() {
            let cands: Vec<u32> = if act.len() - 1 <= k.max(1) {
                act.iter().copied().filter(|&b| b != a).collect()
            } else {
                index::sample(rng, act.len() - 1, k)
                    .into_iter()
                    .map(|j| act[if j >= ai { j + 1 } else { j }])
                    .collect()
            };
            let mut best: Option<(f64, u32)> = None;
            for b in cands {
                let d = self.merge_delta(side, a as usize, b as usize);
                if best.is_none_or(|(bd, bb)| d < bd || (d == bd && b < bb)) {
                    best = Some((d, b));
                }
            }
            if let Some((d, b)) = best {
                out.push((d, side, a, b));
            }
        }
    }
}

fn find(parent: &mut [u32], x: u32) -> u32 {
    let mut root = x;
    while parent[root as usize] != root {
        root = parent[root as usize];
    }
    let mut cur = x;
    while parent[cur as usize] != root {
        let next = parent[cur as usize];
        parent[cur as usize] = root;
        cur = next;
    }
    root
}

/// Questions with identical tag sets share a block. If there are more
/// classes than `cap`, each question joins the block of its first tag.
fn initial_partition(graph: &BipartiteGraph, cap: usize) -> Partition {
    let tags: Vec<u32> = (0..graph.n_tags() as u32).collect();
    let mut classes: BTreeMap<&[u32], u32> = BTreeMap::new();
    let mut qb = Vec::with_capacity(graph.n_questions());
    for q in 0..graph.n_questions() {
        let next = classes.len() as u32;
        qb.push(*classes.entry(graph.question_neighbors(q)).or_insert(next));
    }
    if classes.len() > cap.max(1) {
        qb = (0..graph.n_questions())
            .map(|q| graph.question_neighbors(q).first().map_or(u32::MAX, |&t| t))
            .collect();
    }
    Partition::new(&tags, &qb)
}

/// Infers a partition of `graph` by agglomerative DL minimisation.
///
/// Deterministic for a given graph and config.
pub fn infer_partition(graph: &BipartiteGraph, config: &SbmConfig) -> Partition {
    let b_min = config.resolved_b_min(graph);
    let b_max = config.resolved_b_max(graph);
    let dc = config.degree_corrected;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let dl = |p: &Partition| description_length(graph, p, dc).expect("partition matches graph").total;
    let in_range = |p: &Partition| (b_min..=b_max).contains(&p.n_tag_blocks()) || graph.n_tags() == 0;

    let mut current = initial_partition(graph, config.max_initial_question_blocks);
    let mut best: Option<(f64, Partition)> = None;
    let consider = |p: &Partition, best: &mut Option<(f64, Partition)>| {
        if in_range(p) {
            let d = dl(p);
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                *best = Some((d, p.clone()));
            }
        }
    };

    {
        let mut st = State::new(graph, &current, dc);
        for _ in 0..config.max_sweeps {
            if st.sweep(&mut rng, b_min) == 0 {
                break;
            }
        }
        current = st.partition();
    }
    consider(&current, &mut best);

    loop {
        let bt = current.n_tag_blocks();
        let bq = current.n_question_blocks();
        let reducible = bt.saturating_sub(b_min) + bq.saturating_sub(1);
        if reducible == 0 {
            break;
        }
        let total = bt + bq;
        let target = if total > FINE_MERGE_BELOW { total / 2 } else { 1 }.min(reducible);

        let mut merged = 0;
        while merged < target {
            let st = State::new(graph, &current, dc);
            let mut proposals = Vec::new();
            if st.n_blocks(Side::Tag) > b_min {
                st.merge_proposals(Side::Tag, config.merge_candidates, &mut rng, &mut proposals);
            }
            if st.n_blocks(Side::Question) > 1 {
                st.merge_proposals(Side::Question, config.merge_candidates, &mut rng, &mut proposals);
            }
            proposals.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));

            let mut parent = [
                (0..st.cap[0] as u32).collect::<Vec<_>>(),
                (0..st.cap[1] as u32).collect::<Vec<_>>(),
            ];
            let mut blocks = [st.n_blocks(Side::Tag), st.n_blocks(Side::Question)];
            let min_blocks = [b_min, 1];
            let before = merged;
            for &(_, side, a, b) in &proposals {
                if merged == target {
                    break;
                }
                let i = side_idx(side);
                if blocks[i] <= min_blocks[i] {
                    continue;
                }
                let (ra, rb) = (find(&mut parent[i], a), find(&mut parent[i], b));
                if ra == rb {
                    continue;
                }
                parent[i][ra as usize] = rb;
                blocks[i] -= 1;
                merged += 1;
            }
            let tb: Vec<u32> = current.tag_blocks().iter().map(|&b| find(&mut parent[0], b)).collect();
            let qb: Vec<u32> = current.question_blocks().iter().map(|&b| find(&mut parent[1], b)).collect();
            current = Partition::new(&tb, &qb);
            if merged == before {
                break;
            }
        }

        let mut st = State::new(graph, &current, dc);
        for _ in 0..config.max_sweeps {
            if st.sweep(&mut rng, b_min) == 0 {
                break;
            }
        }
        current = st.partition();
        consider(&current, &mut best);
        if merged == 0 {
            break;
        }
    }

    best.map(|(_, p)| p.canonical()).unwrap_or_else(|| current.canonical())
}
