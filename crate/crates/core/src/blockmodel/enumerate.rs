//! Exhaustive DL minimisation over small graphs, used as a test oracle.

use super::{description_length, side_partition_prior, BipartiteGraph, Partition};
use crate::lnfact::{ln_choose, ln_multiset};
use crate::{Error, Result};

const HARD_LIMIT: usize = 10;
const MAX_ENUMERATED_QUESTIONS: usize = 6;

#[derive(Debug, Clone, Default)]
pub struct OracleConfig {
    pub max_left_nodes: usize,
    /// Upper bound on tag blocks; `None` allows one block per tag.
    pub max_tag_blocks: Option<usize>,
    /// Question-side partition to hold fixed. When absent, question
    /// partitions are enumerated if there are at most six questions and the
    /// single-block partition is used otherwise.
    pub fixed_question_blocks: Option<Vec<u32>>,
    pub degree_corrected: bool,
}

/// All set partitions of `n` items with at most `max_blocks` blocks, as
/// restricted growth strings.
pub(crate) fn set_partitions(n: usize, max_blocks: usize) -> Vec<Vec<u32>> {
    fn rec(labels: &mut Vec<u32>, n: usize, used: u32, max_blocks: u32, out: &mut Vec<Vec<u32>>) {
        if labels.len() == n {
            out.push(labels.clone());
            return;
        }
        let top = (used + 1).min(max_blocks);
        for b in 0..top {
            labels.push(b);
            rec(labels, n, used.max(b + 1), max_blocks, out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
        return out;
    }
    rec(&mut Vec::with_capacity(n), n, 0, max_blocks.max(1) as u32, &mut out);
    out
}

fn sizes(labels: &[u32], b: usize) -> Vec<u64> {
    let mut n = vec![0u64; b];
    for &l in labels {
        n[l as usize] += 1;
    }
    n
}

/// Globally DL-minimal partition of a graph with at most `max_left_nodes`
/// tags (`max_left_nodes ≤ 10`).
pub fn oracle_enumerate(graph: &BipartiteGraph, max_left_nodes: usize) -> Result<Partition> {
    oracle_enumerate_with(
        graph,
        &OracleConfig {
            max_left_nodes,
            ..Default::default()
        },
    )
}

pub fn oracle_enumerate_with(graph: &BipartiteGraph, config: &OracleConfig) -> Result<Partition> {
    let nt = graph.n_tags();
    let nq = graph.n_questions();
    if config.max_left_nodes > HARD_LIMIT {
        return Err(Error::TooManyNodes {
            nodes: config.max_left_nodes,
            limit: HARD_LIMIT,
        });
    }
    if nt > config.max_left_nodes {
        return Err(Error::TooManyNodes {
            nodes: nt,
            limit: config.max_left_nodes,
        });
    }
    let tag_parts = set_partitions(nt, config.max_tag_blocks.unwrap_or(nt).max(1));
    let question_parts: Vec<Vec<u32>> = match &config.fixed_question_blocks {
        Some(fixed) => {
            if fixed.len() != nq {
                return Err(Error::InvalidParameter("fixed question partition has wrong length".into()));
            }
            vec![Partition::new(&[], fixed).question_blocks().to_vec()]
        }
        None if nq <= MAX_ENUMERATED_QUESTIONS => set_partitions(nq, nq.max(1)),
        None => vec![vec![0; nq]],
    };

    let mut best: Option<(f64, Partition)> = None;
    let mut offer = |d: f64, tb: &[u32], qb: &[u32]| {
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, Partition::new(tb, qb)));
        }
    };

    if config.degree_corrected {
        for tb in &tag_parts {
            for qb in &question_parts {
                let p = Partition::new(tb, qb);
                offer(description_length(graph, &p, true)?.total, tb, qb);
            }
        }
    } else {
        let n_edges = graph.n_edges() as u64;
        let q_info: Vec<(usize, Vec<u64>, f64)> = question_parts
            .iter()
            .map(|qb| {
                let b = qb.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
                let s = sizes(qb, b);
                let prior = side_partition_prior(nq as u64, s.iter().copied());
                (b, s, prior)
            })
            .collect();
        let mut counts = Vec::new();
        let mut e = Vec::new();
        for tb in &tag_parts {
            let bt = tb.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
            let ntr = sizes(tb, bt);
            let t_prior = side_partition_prior(nt as u64, ntr.iter().copied());
            counts.clear();
            counts.resize(bt * nq, 0u64);
            for (t, &r) in tb.iter().enumerate() {
                for &q in graph.tag_neighbors(t) {
                    counts[r as usize * nq + q as usize] += 1;
                }
            }
            for (qb, (bq, nqs, q_prior)) in question_parts.iter().zip(&q_info) {
                e.clear();
                e.resize(bt * bq, 0u64);
                for r in 0..bt {
                    for (q, &s) in qb.iter().enumerate() {
                        e[r * bq + s as usize] += counts[r * nq + q];
                    }
                }
                let mut lik = 0.0;
                for r in 0..bt {
                    for s in 0..*bq {
                        lik += ln_choose(ntr[r] * nqs[s], e[r * bq + s]);
                    }
                }
                let d = lik + ln_multiset((bt * bq) as u64, n_edges) + t_prior + q_prior;
                offer(d, tb, qb);
            }
        }
    }
    Ok(best.expect("at least one partition enumerated").1)
}
