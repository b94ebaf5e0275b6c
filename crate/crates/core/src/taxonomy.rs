//! From tag communities to a task taxonomy: tag co-occurrence projection,
//! over-representation pruning, size filtering and language canonicalization.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::blockmodel::{BipartiteGraph, Partition};
use crate::corpus::{io_create, io_open, Corpus, Tag, TagId, TaskLabel};
use crate::{Error, Result};

/// Symmetric tag × tag co-occurrence weights with a zero diagonal.
///
/// Stored sparsely: `rows[i]` lists `(j, w_ij)` for `j != i`, sorted by `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TagProjection {
    pub tag_ids: Vec<TagId>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TagProjection {
    /// Weight between two tags = number of questions carrying both.
    pub fn from_graph(graph: &BipartiteGraph) -> Self {
        let n = graph.n_tags();
        let mut acc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for q in 0..graph.n_questions() {
            let tags = graph.question_neighbors(q);
            for (a, &i) in tags.iter().enumerate() {
                for &j in &tags[a + 1..] {
                    *acc[i as usize].entry(j as usize).or_default() += 1.0;
                    *acc[j as usize].entry(i as usize).or_default() += 1.0;
                }
            }
        }
        TagProjection {
            tag_ids: graph.tag_ids.iter().map(|&t| t as TagId).collect(),
            rows: acc.into_iter().map(|m| m.into_iter().collect()).collect(),
        }
    }

    /// From a dense matrix; the diagonal is ignored.
    pub fn from_dense(tag_ids: Vec<TagId>, w: &DMatrix<f64>) -> Result<Self> {
        let n = w.nrows();
        if w.ncols() != n || tag_ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: w.ncols().max(tag_ids.len()),
            });
        }
        let mut rows = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                let v = w[(i, j)];
                if i == j {
                    continue;
                }
                if !(v >= 0.0 && v.is_finite()) || v != w[(j, i)] {
                    return Err(Error::InvalidParameter(format!(
                        "projection must be symmetric and nonnegative, cell ({i},{j}) = {v}"
                    )));
                }
                if v > 0.0 {
                    rows[i].push((j, v));
                }
            }
        }
        Ok(TagProjection { tag_ids, rows })
    }

    pub fn n_tags(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map_or(0.0, |p| self.rows[i][p].1)
    }
}

/// Tag × community over-representation `O_tc`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverRepresentation {
    pub values: DMatrix<f64>,
    /// Tags without any projection weight; their rows are all zero.
    pub zero_rows: Vec<usize>,
}

/// `O_tc = (w_tc / Σ_c' w_tc') / (Σ_t' w_t'c / Σ_t'c' w_t'c')` with
/// `w_tc = Σ_{t' ∈ c} w_tt'`. Communities are the tag blocks of `partition`.
pub fn tag_overrepresentation(projection: &TagProjection, partition: &Partition) -> Result<OverRepresentation> {
    let n = projection.n_tags();
    let blocks = partition.tag_blocks();
    if blocks.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: blocks.len(),
        });
    }
    let b = partition.n_tag_blocks();
    let mut w = DMatrix::<f64>::zeros(n, b);
    for i in 0..n {
        for &(j, v) in projection.row(i) {
            w[(i, blocks[j] as usize)] += v;
        }
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeight);
    }
    let col_share: Vec<f64> = (0..b).map(|c| w.column(c).sum() / total).collect();
    let mut values = DMatrix::<f64>::zeros(n, b);
    let mut zero_rows = Vec::new();
    for i in 0..n {
        let row_total: f64 = w.row(i).sum();
        if row_total <= 0.0 {
            zero_rows.push(i);
            continue;
        }
        for c in 0..b {
            if col_share[c] > 0.0 {
                values[(i, c)] = (w[(i, c)] / row_total) / col_share[c];
            }
        }
    }
    Ok(OverRepresentation { values, zero_rows })
}

/// One task: a pruned tag community with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub task_id: u32,
    /// Sorted.
    pub tag_ids: Vec<TagId>,
    pub short_label: String,
    pub long_label: String,
    pub embedding: Vec<f64>,
}

/// Disjoint tasks with a partial tag → task map.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTaxonomy {
    tasks: Vec<Task>,
    tag_to_task: BTreeMap<TagId, u32>,
}

impl TaskTaxonomy {
    /// Task ids are assigned `0..n` in the order given.
    pub fn from_tag_sets(sets: Vec<Vec<TagId>>) -> Result<Self> {
        let mut tag_to_task = BTreeMap::new();
        let mut tasks = Vec::with_capacity(sets.len());
        for (k, mut tags) in sets.into_iter().enumerate() {
            tags.sort_unstable();
            tags.dedup();
            if tags.is_empty() {
                return Err(Error::InvalidParameter(format!("task {k} has no tags")));
            }
            for &t in &tags {
                if tag_to_task.insert(t, k as u32).is_some() {
                    return Err(Error::InvalidParameter(format!("tag {t} assigned to two tasks")));
                }
            }
            tasks.push(Task {
                task_id: k as u32,
                tag_ids: tags,
                short_label: String::new(),
                long_label: String::new(),
                embedding: Vec::new(),
            });
        }
        Ok(TaskTaxonomy { tasks, tag_to_task })
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, id: u32) -> &Task {
        &self.tasks[id as usize]
    }

    pub fn task_of(&self, tag: TagId) -> Option<u32> {
        self.tag_to_task.get(&tag).copied()
    }

    /// Distinct tasks touched by a tag list, ascending.
    pub fn tasks_of_tags(&self, tags: &[TagId]) -> Vec<u32> {
        let mut out: Vec<u32> = tags.iter().filter_map(|t| self.task_of(*t)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn n_tagged(&self) -> usize {
        self.tag_to_task.len()
    }

    /// Attaches labels by task id. Every task must be labelled.
    pub fn attach_labels(&mut self, labels: &[TaskLabel]) -> Result<()> {
        let by_id: BTreeMap<u32, &TaskLabel> = labels.iter().map(|l| (l.task_id, l)).collect();
        for task in &mut self.tasks {
            let label = by_id.get(&task.task_id).ok_or_else(|| {
                Error::Integrity(format!("no label for task {}", task.task_id))
            })?;
            if label.short_label.trim().is_empty() {
                return Err(Error::InvalidParameter(format!("empty label for task {}", task.task_id)));
            }
            task.short_label = label.short_label.clone();
            task.long_label = label.long_label.clone();
            task.embedding = label.embedding.clone();
        }
        if let Some(extra) = by_id.keys().find(|&&k| k as usize >= self.tasks.len()) {
            warn!("label for unknown task {extra} ignored");
        }
        Ok(())
    }

    pub fn has_labels(&self) -> bool {
        self.tasks.iter().all(|t| !t.short_label.is_empty())
    }

    pub fn write_json(&self, path: &Path, corpus: &Corpus) -> Result<()> {
        let doc = TaxonomyDoc {
            tasks: self
                .tasks
                .iter()
                .map(|t| TaskDoc {
                    task_id: t.task_id,
                    tags: t.tag_ids.iter().map(|&id| corpus.tag(id).name.clone()).collect(),
                    short_label: t.short_label.clone(),
                    long_label: t.long_label.clone(),
                })
                .collect(),
        };
        let mut w = io_create(path)?;
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads `taxonomy.json`; task ids must be `0..n` in file order.
    pub fn read_json(path: &Path, corpus: &Corpus) -> Result<Self> {
        let doc: TaxonomyDoc = serde_json::from_reader(io_open(path)?)?;
        let mut sets = Vec::with_capacity(doc.tasks.len());
        for (k, t) in doc.tasks.iter().enumerate() {
            if t.task_id as usize != k {
                return Err(Error::Integrity(format!("task ids must be dense, found {} at {k}", t.task_id)));
            }
            let ids = t
                .tags
                .iter()
                .map(|name| {
                    corpus
                        .tag_id(name)
                        .ok_or_else(|| Error::Integrity(format!("unknown tag `{name}` in taxonomy")))
                })
                .collect::<Result<Vec<_>>>()?;
            sets.push(ids);
        }
        let mut tax = TaskTaxonomy::from_tag_sets(sets)?;
        for (task, t) in tax.tasks.iter_mut().zip(doc.tasks) {
            task.short_label = t.short_label;
            task.long_label = t.long_label;
        }
        Ok(tax)
    }
}

#[derive(Serialize, Deserialize)]
struct TaxonomyDoc {
    tasks: Vec<TaskDoc>,
}

#[derive(Serialize, Deserialize)]
struct TaskDoc {
    task_id: u32,
    tags: Vec<String>,
    short_label: String,
    long_label: String,
}

/// Drops the `⌊drop_frac · size⌋` tags with the lowest own-community
/// over-representation from each community, then removes communities with
/// fewer than `min_size` survivors.
///
/// `usage[i]` is the usage count of projection tag `i`; among equal `O`
/// values the tag with the higher usage count survives. Surviving
/// communities become tasks in ascending community order.
pub fn prune_taxonomy(
    tag_ids: &[TagId],
    partition: &Partition,
    o: &OverRepresentation,
    usage: &[u64],
    drop_frac: f64,
    min_size: usize,
) -> Result<TaskTaxonomy> {
    if !(0.0..1.0).contains(&drop_frac) {
        return Err(Error::InvalidParameter(format!("drop_frac must be in [0, 1), got {drop_frac}")));
    }
    if min_size == 0 {
        return Err(Error::InvalidParameter("min_size must be at least 1".into()));
    }
    let blocks = partition.tag_blocks();
    let n = blocks.len();
    if tag_ids.len() != n || usage.len() != n || o.values.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: tag_ids.len(),
        });
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); partition.n_tag_blocks()];
    for (i, &b) in blocks.iter().enumerate() {
        members[b as usize].push(i);
    }
    let mut sets = Vec::new();
    for (c, mut tags) in members.into_iter().enumerate() {
        let drop = (drop_frac * tags.len() as f64).floor() as usize;
        tags.sort_by(|&a, &b| {
            o.values[(a, c)]
                .total_cmp(&o.values[(b, c)])
                .then(usage[a].cmp(&usage[b]))
                .then(tag_ids[b].cmp(&tag_ids[a]))
        });
        let survivors = &tags[drop..];
        if survivors.len() >= min_size {
            sets.push(survivors.iter().map(|&i| tag_ids[i]).collect());
        }
    }
    TaskTaxonomy::from_tag_sets(sets)
}

/// Canonical language per language tag.
///
/// Precedence: explicit rule, then the tag table's `canonical_language`,
/// then the tag's own name. Rules naming an unknown tag are skipped with a
/// warning; a rule target that is not a language tag name is an error.
pub fn canonicalize_languages(tags: &[Tag], rules: &[(String, String)]) -> Result<BTreeMap<TagId, String>> {
    let by_name: BTreeMap<&str, &Tag> = tags.iter().map(|t| (t.name.as_str(), t)).collect();
    let known: BTreeSet<&str> = tags
        .iter()
        .filter(|t| t.is_language)
        .flat_map(|t| std::iter::once(t.name.as_str()).chain(t.canonical_language.as_deref()))
        .collect();
    let mut out: BTreeMap<TagId, String> = tags
        .iter()
        .filter(|t| t.is_language)
        .map(|t| (t.tag_id, t.canonical_language.clone().unwrap_or_else(|| t.name.clone())))
        .collect();
    for (tag, target) in rules {
        if !known.contains(target.as_str()) {
            return Err(Error::UnknownLanguage(target.clone()));
        }
        match by_name.get(tag.as_str()) {
            Some(t) if t.is_language => {
                out.insert(t.tag_id, target.clone());
            }
            Some(_) => warn!("language rule for non-language tag `{tag}` skipped"),
            None => warn!("language rule for unknown tag `{tag}` skipped"),
        }
    }
    Ok(out)
}
