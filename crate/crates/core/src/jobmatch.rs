//! Matching pre-embedded job requirements to tasks, and the masked-task
//! prediction table.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{io_create, io_open, Corpus, JobAd, TagEmbedding};
use crate::econometrics::{equal_size_bins, BinRow};
use crate::relatedness::{densities, row_normalized, RelatednessMatrix};
use crate::taxonomy::TaskTaxonomy;
use crate::{Error, Result};

/// Settings of the masked-task validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskConfig {
    pub mask_frac: f64,
    pub bins: usize,
    /// Jobs with fewer matched tasks are left out.
    pub min_tasks: usize,
    pub seed: u64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            mask_frac: 0.4,
            bins: 10,
            min_tasks: 3,
            seed: 0,
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// How a task is represented for matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchStrategy {
    /// The task label embedding.
    Label,
    /// Embedding of the task's most used tag.
    MainTag,
    /// Mean of the task's tag embeddings.
    MeanTag,
    /// Best cosine over the task's individual tag embeddings.
    ClosestTag,
}

impl std::str::FromStr for MatchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "label" => Ok(MatchStrategy::Label),
            "main_tag" => Ok(MatchStrategy::MainTag),
            "mean_tag" => Ok(MatchStrategy::MeanTag),
            "closest_tag" => Ok(MatchStrategy::ClosestTag),
            other => Err(Error::Config(format!("unknown match strategy `{other}`"))),
        }
    }
}

/// One or more vectors per task; a task's score is its best cosine.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEmbeddings {
    vectors: Vec<Vec<Vec<f64>>>,
    dim: usize,
}

impl TaskEmbeddings {
    pub fn new(vectors: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let dim = vectors
            .iter()
            .flatten()
            .map(Vec::len)
            .next()
            .ok_or_else(|| Error::EmptyInput("no task embeddings".into()))?;
        for (t, vs) in vectors.iter().enumerate() {
            if vs.is_empty() {
                return Err(Error::EmptyInput(format!("task {t} has no embedding")));
            }
            for v in vs {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
                }
                if v.iter().all(|&x| x == 0.0) {
                    return Err(Error::ZeroNorm);
                }
            }
        }
        Ok(TaskEmbeddings { vectors, dim })
    }

    pub fn n_tasks(&self) -> usize {
        self.vectors.len()
    }

    /// Label embeddings carried by the taxonomy.
    pub fn from_labels(taxonomy: &TaskTaxonomy) -> Result<Self> {
        Self::new(taxonomy.tasks().iter().map(|t| vec![t.embedding.clone()]).collect())
    }

    /// Tag-embedding variants; every task needs at least one embedded tag.
    pub fn from_tags(
        taxonomy: &TaskTaxonomy,
        corpus: &Corpus,
        tags: &[TagEmbedding],
        strategy: MatchStrategy,
    ) -> Result<Self> {
        let by_name: BTreeMap<&str, &Vec<f64>> = tags.iter().map(|t| (t.tag.as_str(), &t.embedding)).collect();
        let mut out = Vec::with_capacity(taxonomy.n_tasks());
        for task in taxonomy.tasks() {
            let mut members: Vec<(u64, &str, &Vec<f64>)> = task
                .tag_ids
                .iter()
                .filter_map(|&id| {
                    let tag = corpus.tag(id);
                    by_name.get(tag.name.as_str()).map(|e| (tag.usage_count, tag.name.as_str(), *e))
                })
                .collect();
            if members.is_empty() {
                return Err(Error::EmptyInput(format!("task {} has no embedded tag", task.task_id)));
            }
            members.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
            let vs = match strategy {
                MatchStrategy::Label => return Self::from_labels(taxonomy),
                MatchStrategy::MainTag => vec![members[0].2.clone()],
                MatchStrategy::MeanTag => {
                    let d = members[0].2.len();
                    let mut mean = vec![0.0; d];
                    for (_, _, e) in &members {
                        for (m, x) in mean.iter_mut().zip(e.iter()) {
                            *m += x / members.len() as f64;
                        }
                    }
                    vec![mean]
                }
                MatchStrategy::ClosestTag => members.iter().map(|m| m.2.clone()).collect(),
            };
            out.push(vs);
        }
        Self::new(out)
    }
}

/// Best-matching task with cosine ≥ `threshold`; ties go to the lower task id.
pub fn match_requirement(req: &[f64], tasks: &TaskEmbeddings, threshold: f64) -> Result<Option<(u32, f64)>> {
    if req.len() != tasks.dim {
        return Err(Error::DimensionMismatch {
            expected: tasks.dim,
            got: req.len(),
        });
    }
    let mut best: Option<(u32, f64)> = None;
    for (t, vs) in tasks.vectors.iter().enumerate() {
        let mut score = f64::NEG_INFINITY;
        for v in vs {
            score = score.max(cosine(req, v)?);
        }
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((t as u32, score));
        }
    }
    Ok(best.filter(|&(_, s)| s >= threshold))
}

/// Tasks required by one job, with the best cosine backing each.
#[derive(Debug, Clone, PartialEq)]
pub struct JobTaskVector {
    pub job_id: u64,
    pub year: u16,
    pub salary: Option<f64>,
    pub n_tasks: usize,
    pub tasks: BTreeMap<u32, f64>,
}

impl JobTaskVector {
    pub fn to_binary(&self) -> Vec<u8> {
        let mut v = vec![0u8; self.n_tasks];
        for &t in self.tasks.keys() {
            v[t as usize] = 1;
        }
        v
    }
}

/// Union of per-requirement matches; unmatched requirements are dropped.
pub fn job_task_vector(job: &JobAd, tasks: &TaskEmbeddings, threshold: f64) -> Result<JobTaskVector> {
    let mut out = BTreeMap::new();
    for r in &job.requirements {
        if let Some((t, c)) = match_requirement(&r.embedding, tasks, threshold)? {
            let e = out.entry(t).or_insert(c);
            *e = f64::max(*e, c);
        }
    }
    Ok(JobTaskVector {
        job_id: job.job_id,
        year: job.year,
        salary: job.salary,
        n_tasks: tasks.n_tasks(),
        tasks: out,
    })
}

/// Summary of a masked prediction run.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedTable {
    pub bins: Vec<BinRow>,
    pub n_jobs: usize,
    pub n_cells: usize,
    pub n_masked: usize,
    /// Masked cells skipped because their task has no relatedness.
    pub n_isolated: usize,
}

/// Masked-task validation.
///
/// Jobs with fewer than `min_tasks` tasks are ignored. The (job, task)
/// cells of the rest are stacked, `round(mask_frac · cells)` of them masked
/// uniformly at random, and each masked cell scored by the density of the
/// job's unmasked required tasks around the cell's task.
pub fn masked_prediction_table(jobs: &[JobTaskVector], r: &RelatednessMatrix, config: &MaskConfig) -> Result<MaskedTable> {
    let MaskConfig {
        mask_frac,
        bins,
        min_tasks,
        seed,
    } = *config;
    if !(0.0..=1.0).contains(&mask_frac) {
        return Err(Error::InvalidParameter(format!("mask_frac must be in [0, 1], got {mask_frac}")));
    }
    let n_tasks = r.n_tasks();
    let eligible: Vec<&JobTaskVector> = jobs.iter().filter(|j| j.tasks.len() >= min_tasks).collect();
    for j in &eligible {
        if j.n_tasks != n_tasks {
            return Err(Error::DimensionMismatch {
                expected: n_tasks,
                got: j.n_tasks,
            });
        }
    }
    let n_cells = eligible.len() * n_tasks;
    let n_masked = (mask_frac * n_cells as f64).round() as usize;
    if n_masked < bins {
        return Err(Error::InvalidParameter(format!("{n_masked} masked cells for {bins} bins")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked: Vec<usize> = sample(&mut rng, n_cells, n_masked).into_vec();
    masked.sort_unstable();
    let masked_set: BTreeSet<usize> = masked.iter().copied().collect();
    let weights = row_normalized(r);
    let row_sums = r.row_sums();
    let mut scores = Vec::with_capacity(n_masked);
    let mut outcomes = Vec::with_capacity(n_masked);
    let mut n_isolated = 0;
    let mut x = vec![0.0; n_tasks];
    let mut current_job = usize::MAX;
    let mut dens: Vec<Option<f64>> = Vec::new();
    for &cell in &masked {
        let (job, task) = (cell / n_tasks, cell % n_tasks);
        if job != current_job {
            current_job = job;
            x.iter_mut().for_each(|v| *v = 0.0);
            for &t in eligible[job].tasks.keys() {
                if !masked_set.contains(&(job * n_tasks + t as usize)) {
                    x[t as usize] = 1.0;
                }
            }
            dens = densities(&weights, &row_sums, &x);
        }
        match dens[task] {
            Some(d) => {
                scores.push(d);
                outcomes.push(eligible[job].tasks.contains_key(&(task as u32)));
            }
            None => n_isolated += 1,
        }
    }
    Ok(MaskedTable {
        bins: equal_size_bins(&scores, &outcomes, bins)?,
        n_jobs: eligible.len(),
        n_cells,
        n_masked,
        n_isolated,
    })
}

/// `job_vectors.csv`: `job_id,task_id,cosine`.
pub fn write_job_vectors_csv(path: &Path, jobs: &[JobTaskVector]) -> Result<()> {
    let mut w = io_create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "job_id,task_id,cosine").map_err(io)?;
    for j in jobs {
        for (t, c) in &j.tasks {
            writeln!(w, "{},{t},{c}", j.job_id).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[derive(serde::Deserialize)]
struct JobVectorRow {
    job_id: u64,
    task_id: u32,
    cosine: f64,
}

/// Rebuilds job vectors from `job_vectors.csv` and the job ads (for year and
/// salary). Jobs absent from the CSV get empty vectors.
pub fn read_job_vectors_csv(path: &Path, jobs: &[JobAd], n_tasks: usize) -> Result<Vec<JobTaskVector>> {
    let mut rdr = csv::Reader::from_reader(io_open(path)?);
    let mut tasks: BTreeMap<u64, BTreeMap<u32, f64>> = BTreeMap::new();
    for row in rdr.deserialize::<JobVectorRow>() {
        let row = row?;
        if row.task_id as usize >= n_tasks {
            return Err(Error::DimensionMismatch {
                expected: n_tasks,
                got: row.task_id as usize + 1,
            });
        }
        tasks.entry(row.job_id).or_default().insert(row.task_id, row.cosine);
    }
    Ok(jobs
        .iter()
        .map(|j| JobTaskVector {
            job_id: j.job_id,
            year: j.year,
            salary: j.salary,
            n_tasks,
            tasks: tasks.remove(&j.job_id).unwrap_or_default(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Requirement;
    use crate::relatedness::{cooccurrence_from_sets, pmi_matrix};
    use proptest::prelude::*;

    fn unit(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    fn basis_tasks(n: usize) -> TaskEmbeddings {
        TaskEmbeddings::new((0..n).map(|i| vec![unit(n + 1, i)]).collect()).unwrap()
    }

    fn job(id: u64, reqs: Vec<Vec<f64>>) -> JobAd {
        JobAd {
            job_id: id,
            year: 2023,
            salary: None,
            requirements: reqs
                .into_iter()
                .enumerate()
                .map(|(i, embedding)| Requirement {
                    text: format!("r{i}"),
                    embedding,
                })
                .collect(),
        }
    }

    #[test]
    fn identical_embedding_matches_with_cosine_one() {
        let t = basis_tasks(15);
        assert_eq!(match_requirement(&unit(16, 12), &t, 0.3).unwrap(), Some((12, 1.0)));
    }

    #[test]
    fn orthogonal_requirement_unmatched() {
        let t = basis_tasks(4);
        assert_eq!(match_requirement(&unit(5, 4), &t, 0.3).unwrap(), None);
    }

    #[test]
    fn ties_go_to_lower_task() {
        let t = basis_tasks(3);
        assert_eq!(match_requirement(&[0.0, 1.0, 1.0, 0.0], &t, 0.3).unwrap().unwrap().0, 1);
    }

    #[test]
    fn zero_norm_rejected() {
        let t = basis_tasks(3);
        assert!(matches!(match_requirement(&[0.0; 4], &t, 0.3), Err(Error::ZeroNorm)));
    }

    #[test]
    fn closest_tag_uses_best_vector() {
        let t = TaskEmbeddings::new(vec![vec![unit(3, 0)], vec![unit(3, 1), unit(3, 2)]]).unwrap();
        assert_eq!(match_requirement(&unit(3, 2), &t, 0.3).unwrap(), Some((1, 1.0)));
    }

    #[test]
    fn job_vector_is_union_of_matches() {
        let t = basis_tasks(5);
        let j = job(1, vec![unit(6, 2), unit(6, 2), unit(6, 5), unit(6, 0)]);
        let v = job_task_vector(&j, &t, 0.3).unwrap();
        assert_eq!(v.to_binary(), vec![1, 0, 1, 0, 0]);
        let empty = job_task_vector(&job(2, vec![unit(6, 5)]), &t, 0.3).unwrap();
        assert!(empty.tasks.is_empty());
    }

    fn two_block_jobs(n: usize, seed: u64) -> Vec<JobTaskVector> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|j| {
                let home = rng.random_range(0..2u32);
                let tasks = (0..8u32)
                    .filter(|t| rng.random_bool(if t / 4 == home { 0.6 } else { 0.02 }))
                    .map(|t| (t, 1.0))
                    .collect();
                JobTaskVector {
                    job_id: j as u64,
                    year: 2023,
                    salary: None,
                    n_tasks: 8,
                    tasks,
                }
            })
            .collect()
    }

    fn relatedness_of(jobs: &[JobTaskVector]) -> RelatednessMatrix {
        let sets: Vec<Vec<u32>> = jobs.iter().map(|j| j.tasks.keys().copied().collect()).collect();
        pmi_matrix(&cooccurrence_from_sets(8, sets.iter().map(Vec::as_slice))).unwrap()
    }

    #[test]
    fn masked_table_accounting() {
        let jobs = two_block_jobs(500, 3);
        let r = relatedness_of(&jobs);
        let t = masked_prediction_table(&jobs, &r, &MaskConfig { seed: 1, ..Default::default() }).unwrap();
        assert_eq!(t.n_masked, (0.4 * t.n_cells as f64).round() as usize);
        let binned: usize = t.bins.iter().map(|b| b.n).sum();
        assert_eq!(binned + t.n_isolated, t.n_masked);
        for b in &t.bins {
            assert!((b.p_hat * b.n as f64 - b.successes as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn all_zero_vectors_give_zero_bins() {
        let jobs: Vec<JobTaskVector> = (0..50)
            .map(|j| JobTaskVector {
                job_id: j,
                year: 2023,
                salary: None,
                n_tasks: 4,
                tasks: BTreeMap::new(),
            })
            .collect();
        let r = RelatednessMatrix::from_values(nalgebra::DMatrix::from_element(4, 4, 1.0), Default::default()).unwrap();
        let config = MaskConfig {
            min_tasks: 0,
            ..Default::default()
        };
        let t = masked_prediction_table(&jobs, &r, &config).unwrap();
        assert!(t.bins.iter().all(|b| b.p_hat == 0.0));
        assert!(masked_prediction_table(&jobs, &r, &MaskConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn requirement_order_irrelevant(perm_seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let t = basis_tasks(6);
            let reqs: Vec<Vec<f64>> = (0..7).map(|i| {
                let mut v = unit(7, i % 7);
                v[(i + 1) % 7] += 0.3;
                v
            }).collect();
            let mut shuffled = reqs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            let a = job_task_vector(&job(1, reqs), &t, 0.3).unwrap();
            let b = job_task_vector(&job(1, shuffled), &t, 0.3).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
