//! Bipartite stochastic block model over the tag–question graph.
//!
//! The description length is that of the microcanonical, non-degree-corrected
//! bipartite SBM on a simple graph (degree correction is optional):
//!
//! ```text
//! likelihood      = Σ_{r∈tag blocks, s∈question blocks} ln C(n_r·n_s, e_rs)
//! edge prior      = ln C(B_t·B_q + E − 1, E)
//! partition prior = Σ_sides  ln N + ln C(N−1, B−1) + ln(N! / Π_r n_r!)
//! ```
//!
//! Block labels are kept separately per side, so a block can never hold
//! nodes of both layers.

mod enumerate;
mod inference;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TagId};
use crate::lnfact::{ln_choose, ln_factorial, ln_multiset};
use crate::{Error, Result};

pub use enumerate::{oracle_enumerate, oracle_enumerate_with, OracleConfig};
pub use inference::{infer_partition, SbmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Tag,
    Question,
}

/// Simple bipartite graph: tags on the left, questions on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    tag_adj: Vec<Vec<u32>>,
    question_adj: Vec<Vec<u32>>,
    n_edges: usize,
    /// External id of each left node (corpus tag id).
    pub tag_ids: Vec<u64>,
    /// External id of each right node (question id).
    pub question_ids: Vec<u64>,
}

impl BipartiteGraph {
    /// Builds a graph from `(tag index, question index)` pairs. Duplicate
    /// edges collapse to one.
    pub fn from_edges(n_tags: usize, n_questions: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut tag_adj = vec![Vec::new(); n_tags];
        let mut question_adj = vec![Vec::new(); n_questions];
        for &(t, q) in edges {
            if t as usize >= n_tags || q as usize >= n_questions {
                return Err(Error::InvalidParameter(format!(
                    "edge ({t}, {q}) outside {n_tags}×{n_questions}"
                )));
            }
            tag_adj[t as usize].push(q);
        }
        let mut n_edges = 0;
        for (t, adj) in tag_adj.iter_mut().enumerate() {
            adj.sort_unstable();
            adj.dedup();
            n_edges += adj.len();
            for &q in adj.iter() {
                question_adj[q as usize].push(t as u32);
            }
        }
        Ok(BipartiteGraph {
            tag_adj,
            question_adj,
            n_edges,
            tag_ids: (0..n_tags as u64).collect(),
            question_ids: (0..n_questions as u64).collect(),
        })
    }

    /// Question–tag graph restricted to `tags`; questions carrying none of
    /// them are left out.
    pub fn from_corpus(corpus: &Corpus, tags: &BTreeSet<TagId>) -> Self {
        let tag_list: Vec<TagId> = tags.iter().copied().collect();
        let tag_pos: BTreeMap<TagId, u32> = tag_list.iter().enumerate().map(|(i, &t)| (t, i as u32)).collect();
        let mut edges = Vec::new();
        let mut question_ids = Vec::new();
        for q in corpus.questions() {
            let hits: Vec<u32> = q.tag_ids.iter().filter_map(|t| tag_pos.get(t).copied()).collect();
            if hits.is_empty() {
                continue;
            }
            let qi = question_ids.len() as u32;
            question_ids.push(q.question_id);
            edges.extend(hits.into_iter().map(|t| (t, qi)));
        }
        let mut g = Self::from_edges(tag_list.len(), question_ids.len(), &edges).expect("indices in range");
        g.tag_ids = tag_list.into_iter().map(u64::from).collect();
        g.question_ids = question_ids;
        g
    }

    pub fn n_tags(&self) -> usize {
        self.tag_adj.len()
    }

    pub fn n_questions(&self) -> usize {
        self.question_adj.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn n_side(&self, side: Side) -> usize {
        match side {
            Side::Tag => self.n_tags(),
            Side::Question => self.n_questions(),
        }
    }

    /// Neighbours of node `v` on `side` (indices into the other side).
    pub fn neighbors(&self, side: Side, v: usize) -> &[u32] {
        match side {
            Side::Tag => &self.tag_adj[v],
            Side::Question => &self.question_adj[v],
        }
    }

    pub fn tag_neighbors(&self, t: usize) -> &[u32] {
        &self.tag_adj[t]
    }

    pub fn question_neighbors(&self, q: usize) -> &[u32] {
        &self.question_adj[q]
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.tag_adj
            .iter()
            .enumerate()
            .flat_map(|(t, adj)| adj.iter().map(move |&q| (t as u32, q)))
    }
}

/// Block assignment for both layers, labels compact per side.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    tag_blocks: Vec<u32>,
    question_blocks: Vec<u32>,
}

fn compact(labels: &[u32]) -> Vec<u32> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len() as u32;
            *map.entry(l).or_insert(next)
        })
        .collect()
}

impl Partition {
    /// Relabels each side in order of first appearance.
    pub fn new(tag_blocks: &[u32], question_blocks: &[u32]) -> Self {
        Partition {
            tag_blocks: compact(tag_blocks),
            question_blocks: compact(question_blocks),
        }
    }

    /// Builds a partition from one label per node over the concatenated node
    /// list (tags first). A label used on both sides is an error.
    pub fn from_global(labels: &[u32], n_tags: usize) -> Result<Self> {
        let (left, right) = labels.split_at(n_tags.min(labels.len()));
        let left_set: BTreeSet<u32> = left.iter().copied().collect();
        if let Some(&b) = right.iter().find(|b| left_set.contains(b)) {
            return Err(Error::MixedLayerBlock(b));
        }
        Ok(Self::new(left, right))
    }

    pub fn tag_blocks(&self) -> &[u32] {
        &self.tag_blocks
    }

    pub fn question_blocks(&self) -> &[u32] {
        &self.question_blocks
    }

    pub fn blocks(&self, side: Side) -> &[u32] {
        match side {
            Side::Tag => &self.tag_blocks,
            Side::Question => &self.question_blocks,
        }
    }

    pub fn n_blocks(&self, side: Side) -> usize {
        self.blocks(side).iter().map(|&b| b as usize + 1).max().unwrap_or(0)
    }

    pub fn n_tag_blocks(&self) -> usize {
        self.n_blocks(Side::Tag)
    }

    pub fn n_question_blocks(&self) -> usize {
        self.n_blocks(Side::Question)
    }

    pub fn block_sizes(&self, side: Side) -> Vec<u64> {
        let mut n = vec![0u64; self.n_blocks(side)];
        for &b in self.blocks(side) {
            n[b as usize] += 1;
        }
        n
    }

    /// Block edge-count matrix `e_rs`, row-major `B_tags × B_questions`.
    pub fn edge_counts(&self, graph: &BipartiteGraph) -> Vec<u64> {
        let bq = self.n_question_blocks();
        let mut e = vec![0u64; self.n_tag_blocks() * bq];
        for (t, q) in graph.edges() {
            let r = self.tag_blocks[t as usize] as usize;
            let s = self.question_blocks[q as usize] as usize;
            e[r * bq + s] += 1;
        }
        e
    }

    /// Canonical form: on each side, blocks numbered by their smallest member.
    pub fn canonical(&self) -> Self {
        Self::new(&self.tag_blocks, &self.question_blocks)
    }

    fn check(&self, graph: &BipartiteGraph) -> Result<()> {
        if self.tag_blocks.len() != graph.n_tags() || self.question_blocks.len() != graph.n_questions() {
            return Err(Error::InvalidParameter(format!(
                "partition covers {}+{} nodes, graph has {}+{}",
                self.tag_blocks.len(),
                self.question_blocks.len(),
                graph.n_tags(),
                graph.n_questions()
            )));
        }
        Ok(())
    }
}

/// Description length in nats, split into its additive parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptionLength {
    pub total: f64,
    pub likelihood_term: f64,
    pub edge_matrix_prior: f64,
    pub partition_prior: f64,
    /// Zero unless the degree-corrected variant is used.
    pub degree_prior: f64,
}

pub(crate) fn side_partition_prior(n: u64, sizes: impl Iterator<Item = u64>) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut b = 0u64;
    let mut sum_ln = 0.0;
    for s in sizes.filter(|&s| s > 0) {
        b += 1;
        sum_ln += ln_factorial(s);
    }
    (n as f64).ln() + ln_choose(n - 1, b - 1) + ln_factorial(n) - sum_ln
}

/// Description length of `graph` under `partition`.
pub fn description_length(graph: &BipartiteGraph, partition: &Partition, degree_corrected: bool) -> Result<DescriptionLength> {
    partition.check(graph)?;
    let bt = partition.n_tag_blocks();
    let bq = partition.n_question_blocks();
    let nt = partition.block_sizes(Side::Tag);
    let nq = partition.block_sizes(Side::Question);
    let e = partition.edge_counts(graph);
    let n_edges = graph.n_edges() as u64;

    let likelihood_term = if degree_corrected {
        let mut row = vec![0u64; bt];
        let mut col = vec![0u64; bq];
        let mut pairs = 0.0;
        for r in 0..bt {
            for s in 0..bq {
                let ers = e[r * bq + s];
                row[r] += ers;
                col[s] += ers;
                pairs += ln_factorial(ers);
            }
        }
        let degrees: f64 = (0..graph.n_tags())
            .map(|t| ln_factorial(graph.tag_neighbors(t).len() as u64))
            .chain((0..graph.n_questions()).map(|q| ln_factorial(graph.question_neighbors(q).len() as u64)))
            .sum();
        row.iter().chain(&col).map(|&x| ln_factorial(x)).sum::<f64>() - pairs - degrees
    } else {
        let mut acc = 0.0;
        for r in 0..bt {
            for s in 0..bq {
                acc += ln_choose(nt[r] * nq[s], e[r * bq + s]);
            }
        }
        acc
    };

    let edge_matrix_prior = ln_multiset((bt * bq) as u64, n_edges);
    let partition_prior = side_partition_prior(graph.n_tags() as u64, nt.iter().copied())
        + side_partition_prior(graph.n_questions() as u64, nq.iter().copied());

    let degree_prior = if degree_corrected {
        let mut acc = 0.0;
        for r in 0..bt {
            let er: u64 = (0..bq).map(|s| e[r * bq + s]).sum();
            acc += ln_multiset(nt[r], er);
        }
        for s in 0..bq {
            let es: u64 = (0..bt).map(|r| e[r * bq + s]).sum();
            acc += ln_multiset(nq[s], es);
        }
        acc
    } else {
        0.0
    };

    Ok(DescriptionLength {
        total: likelihood_term + edge_matrix_prior + partition_prior + degree_prior,
        likelihood_term,
        edge_matrix_prior,
        partition_prior,
        degree_prior,
    })
}

#[derive(Serialize, Deserialize)]
struct BlockRecord {
    block_id: u32,
    side: String,
    members: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    blocks: Vec<BlockRecord>,
    dl_nats: f64,
}

/// Writes `partition.json`: tag blocks first, then question blocks, with
/// external ids as members.
pub fn write_partition_json(path: &Path, graph: &BipartiteGraph, partition: &Partition, dl_nats: f64) -> Result<()> {
    let bt = partition.n_tag_blocks() as u32;
    let mut blocks = Vec::new();
    for side in [Side::Tag, Side::Question] {
        let (ids, offset, name) = match side {
            Side::Tag => (&graph.tag_ids, 0, "tag"),
            Side::Question => (&graph.question_ids, bt, "question"),
        };
        let mut members: Vec<Vec<u64>> = vec![Vec::new(); partition.n_blocks(side)];
        for (v, &b) in partition.blocks(side).iter().enumerate() {
            members[b as usize].push(ids[v]);
        }
        blocks.extend(members.into_iter().enumerate().map(|(b, members)| BlockRecord {
            block_id: offset + b as u32,
            side: name.into(),
            members,
        }));
    }
    let file = PartitionFile { blocks, dl_nats };
    let mut w = crate::corpus::io_create(path)?;
    serde_json::to_writer(&mut w, &file)?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
}

/// Reads `partition.json` against `graph`. Returns the partition and the
/// stored description length.
pub fn read_partition_json(path: &Path, graph: &BipartiteGraph) -> Result<(Partition, f64)> {
    let file: PartitionFile = serde_json::from_reader(crate::corpus::io_open(path)?)?;
    let tag_pos: BTreeMap<u64, usize> = graph.tag_ids.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let q_pos: BTreeMap<u64, usize> = graph.question_ids.iter().enumerate().map(|(i, &q)| (q, i)).collect();
    let mut labels = vec![u32::MAX; graph.n_tags() + graph.n_questions()];
    let mut block_side: BTreeMap<u32, String> = BTreeMap::new();
    for b in &file.blocks {
        if let Some(prev) = block_side.insert(b.block_id, b.side.clone()) {
            if prev != b.side {
                return Err(Error::MixedLayerBlock(b.block_id));
            }
        }
        for &m in &b.members {
            let idx = match b.side.as_str() {
                "tag" => tag_pos.get(&m).copied(),
                "question" => q_pos.get(&m).map(|&q| graph.n_tags() + q),
                other => {
                    return Err(Error::InvalidParameter(format!("unknown side `{other}`")));
                }
            }
            .ok_or_else(|| Error::Integrity(format!("partition member {m} not in graph")))?;
            labels[idx] = b.block_id;
        }
    }
    if labels.contains(&u32::MAX) {
        return Err(Error::Integrity("partition does not cover every node".into()));
    }
    Ok((Partition::from_global(&labels, graph.n_tags())?, file.dl_nats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k22() -> BipartiteGraph {
        BipartiteGraph::from_edges(2, 2, &[(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap()
    }

    #[test]
    fn complete_bipartite_k22_closed_form() {
        // likelihood ln C(4,4)=0, edge prior ln C(1+4-1,4)=0,
        // each side: ln 2 + ln C(1,0) + ln(2!/2!) = ln 2.
        let dl = description_length(&k22(), &Partition::new(&[0, 0], &[0, 0]), false).unwrap();
        assert_eq!(dl.likelihood_term, 0.0);
        assert_eq!(dl.edge_matrix_prior, 0.0);
        assert!((dl.partition_prior - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((dl.total - 1.3862943611198906).abs() < 1e-15);
    }

    #[test]
    fn k22_singletons_hand_evaluated() {
        // 2x2 blocks each of size 1 holding one edge: likelihood 4·ln C(1,1)=0.
        // edge prior ln C(4+4-1, 4) = ln 35. Each side: ln 2 + ln C(1,1) + ln 2! = 2 ln 2.
        let dl = description_length(&k22(), &Partition::new(&[0, 1], &[0, 1]), false).unwrap();
        let expected = 35f64.ln() + 4.0 * 2f64.ln();
        assert!((dl.total - expected).abs() < 1e-12, "{} vs {expected}", dl.total);
    }

    #[test]
    fn empty_graph_has_zero_likelihood() {
        let g = BipartiteGraph::from_edges(3, 2, &[]).unwrap();
        let dl = description_length(&g, &Partition::new(&[0, 1, 1], &[0, 0]), false).unwrap();
        assert_eq!(dl.likelihood_term, 0.0);
        assert_eq!(dl.edge_matrix_prior, 0.0);
    }

    #[test]
    fn mixed_layer_rejected() {
        assert!(matches!(Partition::from_global(&[0, 1, 1, 2], 2), Err(Error::MixedLayerBlock(1))));
        assert!(Partition::from_global(&[0, 1, 2, 2], 2).is_ok());
    }

    #[test]
    fn parts_sum_to_total_degree_corrected() {
        let g = BipartiteGraph::from_edges(3, 4, &[(0, 0), (0, 1), (1, 1), (2, 2), (2, 3), (1, 3)]).unwrap();
        let p = Partition::new(&[0, 0, 1], &[0, 1, 1, 0]);
        for dc in [false, true] {
            let dl = description_length(&g, &p, dc).unwrap();
            let sum = dl.likelihood_term + dl.edge_matrix_prior + dl.partition_prior + dl.degree_prior;
            assert!((dl.total - sum).abs() < 1e-12);
            assert!(dl.total.is_finite());
        }
    }

    #[test]
    fn partition_json_round_trip() {
        let g = k22();
        let p = Partition::new(&[0, 1], &[0, 0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partition.json");
        write_partition_json(&path, &g, &p, 1.5).unwrap();
        let (back, dl) = read_partition_json(&path, &g).unwrap();
        assert_eq!(back, p);
        assert_eq!(dl, 1.5);
    }

    proptest! {
        #[test]
        fn relabeling_invariance(
            edges in proptest::collection::vec((0u32..5, 0u32..6), 0..20),
            tb in proptest::collection::vec(0u32..3, 5),
            qb in proptest::collection::vec(0u32..3, 6),
            shift in 1u32..7,
        ) {
            let g = BipartiteGraph::from_edges(5, 6, &edges).unwrap();
            let p = Partition::new(&tb, &qb);
            let relabeled: Vec<u32> = tb.iter().map(|b| (b + shift) * 7 % 11).collect();
            let q_relabeled: Vec<u32> = qb.iter().map(|b| 10 - b).collect();
            let p2 = Partition::new(&relabeled, &q_relabeled);
            for dc in [false, true] {
                let a = description_length(&g, &p, dc).unwrap().total;
                let b = description_length(&g, &p2, dc).unwrap().total;
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
