//! Seeded generators for planted models and the bundled mini corpus.

mod mini;

pub use mini::{write_mini_corpus, MiniSpec};

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};

use crate::activity::{TimeWindow, UserTaskMatrix};
use crate::blockmodel::BipartiteGraph;
use crate::econometrics::{EntryYear, Frame};
use crate::jobmatch::JobTaskVector;
use crate::relatedness::{densities, row_normalized, Provenance, RelatednessMatrix};
use crate::structure::TaskLanguageMatrix;
use crate::valuation::TaskValueVector;

/// A bipartite graph with its planted block labels.
#[derive(Debug, Clone)]
pub struct PlantedGraph {
    pub graph: BipartiteGraph,
    pub tag_blocks: Vec<u32>,
    pub question_blocks: Vec<u32>,
}

/// Bipartite SBM sample: tag group `i` links to question group `i` with
/// probability `p_in` and to every other group with `p_out`.
pub fn planted_bipartite(tag_sizes: &[usize], question_sizes: &[usize], p_in: f64, p_out: f64, seed: u64) -> PlantedGraph {
    assert_eq!(tag_sizes.len(), question_sizes.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag_blocks: Vec<u32> = tag_sizes.iter().enumerate().flat_map(|(b, &n)| std::iter::repeat_n(b as u32, n)).collect();
    let question_blocks: Vec<u32> =
        question_sizes.iter().enumerate().flat_map(|(b, &n)| std::iter::repeat_n(b as u32, n)).collect();
    let mut edges = Vec::new();
    for (t, &bt) in tag_blocks.iter().enumerate() {
        for (q, &bq) in question_blocks.iter().enumerate() {
            let p = if bt == bq { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((t as u32, q as u32));
            }
        }
    }
    let graph = BipartiteGraph::from_edges(tag_blocks.len(), question_blocks.len(), &edges).expect("in range");
    PlantedGraph {
        graph,
        tag_blocks,
        question_blocks,
    }
}

/// Task sets drawn around `n_blocks` equal blocks of `n_tasks` tasks: each
/// set picks a home block, then includes every home task with probability
/// `p_in` and every other task with `p_out`.
pub fn planted_task_sets(n_sets: usize, n_tasks: usize, n_blocks: usize, p_in: f64, p_out: f64, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = |t: usize| t * n_blocks / n_tasks;
    (0..n_sets)
        .map(|_| {
            let home = rng.random_range(0..n_blocks);
            (0..n_tasks)
                .filter(|&t| rng.random::<f64>() < if block(t) == home { p_in } else { p_out })
                .map(|t| t as u32)
                .collect()
        })
        .collect()
}

/// Job task vectors with planted block co-requirements.
pub fn planted_jobs(n_jobs: usize, n_tasks: usize, n_blocks: usize, p_in: f64, p_out: f64, seed: u64) -> Vec<JobTaskVector> {
    planted_task_sets(n_jobs, n_tasks, n_blocks, p_in, p_out, seed)
        .into_iter()
        .enumerate()
        .map(|(j, tasks)| JobTaskVector {
            job_id: j as u64,
            year: 2023,
            salary: None,
            n_tasks,
            tasks: tasks.into_iter().map(|t| (t, 1.0)).collect(),
        })
        .collect()
}

/// Entry panel with entry probability logistic in density.
#[derive(Debug, Clone)]
pub struct EntryDgp {
    pub relatedness: RelatednessMatrix,
    pub values: TaskValueVector,
    pub years: Vec<EntryYear>,
}

/// `n_users` users over `n_tasks` tasks placed on a ring, with relatedness
/// `3·exp(−d/2)` at ring distance `d`. Each user has a centre task and an
/// activity level; prior activity decays with distance from the centre.
/// An at-risk task is entered with probability
/// `1 / (1 + exp(−(intercept + slope · density)))`.
pub fn planted_entry(n_users: usize, n_tasks: usize, intercept: f64, slope: f64, seed: u64) -> EntryDgp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ring = |i: usize, j: usize| {
        let d = i.abs_diff(j);
        d.min(n_tasks - d) as f64
    };
    let r = DMatrix::from_fn(n_tasks, n_tasks, |i, j| if i == j { 0.0 } else { 3.0 * (-ring(i, j) / 2.0).exp() });
    let relatedness = RelatednessMatrix::from_values(
        r,
        Provenance {
            sample: "S1".into(),
            window: "all".into(),
        },
    )
    .expect("valid relatedness");
    let weights = row_normalized(&relatedness);
    let sums = relatedness.row_sums();
    let values = TaskValueVector {
        window: "all".into(),
        values: (0..n_tasks).map(|_| Some(rng.random_range(5e4..1.5e5))).collect(),
        contributing_users: vec![1; n_tasks],
    };
    let mut prior = BTreeMap::new();
    let mut current = BTreeMap::new();
    for u in 0..n_users as u64 {
        let centre = rng.random_range(0..n_tasks);
        let level: f64 = rng.random_range(0.2..4.0);
        let x: Vec<u64> = (0..n_tasks)
            .map(|t| {
                let p = 0.9 * (-ring(t, centre) / 2.5).exp();
                if rng.random::<f64>() < p {
                    1 + Poisson::new(level).expect("positive").sample(&mut rng) as u64
                } else {
                    0
                }
            })
            .collect();
        let xf: Vec<f64> = x.iter().map(|&c| c as f64).collect();
        let d = densities(&weights, &sums, &xf);
        let y: Vec<u64> = (0..n_tasks)
            .map(|t| {
                let p = if x[t] > 0 {
                    0.8
                } else {
                    1.0 / (1.0 + (-(intercept + slope * d[t].unwrap_or(0.0))).exp())
                };
                (rng.random::<f64>() < p) as u64
            })
            .collect();
        prior.insert(u, x);
        current.insert(u, y);
    }
    let years = vec![EntryYear {
        year: 2020,
        prior: UserTaskMatrix::from_columns(TimeWindow::experience(2020), n_tasks, prior).expect("dimensions"),
        current: UserTaskMatrix::from_columns(TimeWindow::calendar_year(2020), n_tasks, current).expect("dimensions"),
    }];
    EntryDgp {
        relatedness,
        values,
        years,
    }
}

/// Confounded linear model `x = z + u`, `y = beta·x + u + e` with standard
/// normal `z`, `u`, `e`; columns `y`, `x`, `z`.
pub fn confounded_iv(n: usize, beta: f64, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut y, mut x, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let (zi, ui, ei): (f64, f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let xi = zi + ui;
        x.push(xi);
        z.push(zi);
        y.push(beta * xi + ui + ei);
    }
    Frame::new()
        .with_numeric("y", y)
        .and_then(|f| f.with_numeric("x", x))
        .and_then(|f| f.with_numeric("z", z))
        .expect("equal lengths")
}

/// Two languages `a` and `b` over `n_tasks` tasks: `a` fades and `b` rises,
/// with equal expected users per task in `switch_year`.
pub fn adoption_switch(
    n_tasks: usize,
    years: std::ops::Range<i32>,
    switch_year: i32,
    seed: u64,
) -> BTreeMap<i32, TaskLanguageMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    years
        .map(|y| {
            let share_b = 1.0 / (1.0 + (-(y - switch_year) as f64).exp());
            let users = DMatrix::from_fn(n_tasks, 2, |_, l| {
                let p = if l == 0 { 1.0 - share_b } else { share_b };
                Binomial::new(60, p).expect("probability").sample(&mut rng) as f64
            });
            let m = TaskLanguageMatrix::from_counts(vec!["a".into(), "b".into()], users, 10.0, &y.to_string())
                .expect("valid counts");
            (y, m)
        })
        .collect()
}
