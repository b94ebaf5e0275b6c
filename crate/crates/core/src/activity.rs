//! User task experience over rolling windows and task user shares.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use crate::corpus::{io_create, year_of, year_start, Corpus, Timestamp, UserId};
use crate::taxonomy::TaskTaxonomy;
use crate::{Error, Result};

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeWindow {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidParameter(format!("window end {end} precedes start {start}")));
        }
        Ok(TimeWindow { start, end })
    }

    /// The two calendar years preceding `year`: Jan 1 of `year − 2` up to
    /// (excluding) Jan 1 of `year`.
    pub fn experience(year: i32) -> Self {
        TimeWindow {
            start: year_start(year - 2),
            end: year_start(year),
        }
    }

    pub fn calendar_year(year: i32) -> Self {
        TimeWindow {
            start: year_start(year),
            end: year_start(year + 1),
        }
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        ts >= self.start && ts < self.end
    }
}

/// Tasks touched by each question, precomputed from a taxonomy.
#[derive(Debug, Clone)]
pub struct TaskIndex {
    n_tasks: usize,
    by_question: Vec<Vec<u32>>,
}

impl TaskIndex {
    pub fn new(corpus: &Corpus, taxonomy: &TaskTaxonomy) -> Result<Self> {
        if taxonomy.is_empty() {
            return Err(Error::EmptyInput("taxonomy has no tasks".into()));
        }
        Ok(TaskIndex {
            n_tasks: taxonomy.n_tasks(),
            by_question: corpus
                .questions()
                .iter()
                .map(|q| taxonomy.tasks_of_tags(&q.tag_ids))
                .collect(),
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    /// Tasks of the question at dense index `qi`, ascending.
    pub fn tasks_of_question(&self, qi: usize) -> &[u32] {
        &self.by_question[qi]
    }
}

/// Answer counts per task for one user in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceVector {
    pub user_id: UserId,
    pub window: TimeWindow,
    pub counts: Vec<u64>,
}

/// Counts the user's in-window answers per task. An answer increments every
/// task its question touches. Unknown users get the zero vector.
pub fn experience_vector(corpus: &Corpus, index: &TaskIndex, user: UserId, window: TimeWindow) -> ExperienceVector {
    let mut counts = vec![0u64; index.n_tasks()];
    for a in corpus.answers_by(user).filter(|a| window.contains(a.created_at)) {
        let qi = corpus.question_index(a.question_id).expect("answer question exists");
        for &t in index.tasks_of_question(qi) {
            counts[t as usize] += 1;
        }
    }
    ExperienceVector {
        user_id: user,
        window,
        counts,
    }
}

/// Sparse task × user count matrix for one window; columns ordered by user id.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTaskMatrix {
    pub window: TimeWindow,
    n_tasks: usize,
    users: Vec<UserId>,
    /// Per user column, `(task, count)` with count > 0, ascending task.
    columns: Vec<Vec<(u32, u64)>>,
}

impl UserTaskMatrix {
    pub fn from_columns(window: TimeWindow, n_tasks: usize, columns: BTreeMap<UserId, Vec<u64>>) -> Result<Self> {
        let mut users = Vec::with_capacity(columns.len());
        let mut cols = Vec::with_capacity(columns.len());
        for (u, c) in columns {
            if c.len() != n_tasks {
                return Err(Error::DimensionMismatch {
                    expected: n_tasks,
                    got: c.len(),
                });
            }
            users.push(u);
            cols.push(
                c.into_iter()
                    .enumerate()
                    .filter(|&(_, v)| v > 0)
                    .map(|(t, v)| (t as u32, v))
                    .collect(),
            );
        }
        Ok(UserTaskMatrix {
            window,
            n_tasks,
            users,
            columns: cols,
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn user_position(&self, user: UserId) -> Option<usize> {
        self.users.binary_search(&user).ok()
    }

    /// Nonzero `(task, count)` entries of column `j`.
    pub fn column(&self, j: usize) -> &[(u32, u64)] {
        &self.columns[j]
    }

    pub fn get(&self, task: u32, j: usize) -> u64 {
        let col = &self.columns[j];
        col.binary_search_by_key(&task, |&(t, _)| t).map_or(0, |p| col[p].1)
    }

    /// Dense experience of `user`; zeros for users outside the matrix.
    pub fn dense_column(&self, user: UserId) -> Vec<u64> {
        let mut out = vec![0u64; self.n_tasks];
        if let Some(j) = self.user_position(user) {
            for &(t, v) in &self.columns[j] {
                out[t as usize] = v;
            }
        }
        out
    }

    /// Appends `user,year,task_id,count` rows for nonzero cells.
    pub fn write_rows<W: Write>(&self, year: i32, w: &mut W) -> std::io::Result<()> {
        for (u, col) in self.users.iter().zip(&self.columns) {
            for &(t, v) in col {
                writeln!(w, "{u},{year},{t},{v}")?;
            }
        }
        Ok(())
    }
}

/// Experience vectors of `users` stacked as columns, ordered by user id.
pub fn experience_matrix(
    corpus: &Corpus,
    index: &TaskIndex,
    users: &BTreeSet<UserId>,
    window: TimeWindow,
) -> Result<UserTaskMatrix> {
    if users.is_empty() {
        return Err(Error::EmptyInput("no users for experience matrix".into()));
    }
    let columns = users
        .iter()
        .map(|&u| (u, experience_vector(corpus, index, u, window).counts))
        .collect();
    UserTaskMatrix::from_columns(window, index.n_tasks(), columns)
}

/// Writes `experience.csv` for a set of labelled windows.
pub fn write_experience_csv(path: &Path, matrices: &BTreeMap<i32, UserTaskMatrix>) -> Result<()> {
    let mut w = io_create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "user_id,year,task_id,count").map_err(io)?;
    for (&year, m) in matrices {
        m.write_rows(year, &mut w).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShareChange {
    pub task_id: u32,
    pub share_a: f64,
    pub share_b: f64,
    pub delta: f64,
}

/// Users active per task during one calendar year.
fn active_users_per_task(corpus: &Corpus, index: &TaskIndex, year: i32) -> Vec<BTreeSet<UserId>> {
    let window = TimeWindow::calendar_year(year);
    let mut sets = vec![BTreeSet::new(); index.n_tasks()];
    for a in corpus.answers().iter().filter(|a| window.contains(a.created_at)) {
        let qi = corpus.question_index(a.question_id).expect("answer question exists");
        for &t in index.tasks_of_question(qi) {
            sets[t as usize].insert(a.user_id);
        }
    }
    sets
}

/// Per-task share of user–task incidences in two calendar years.
///
/// A user active in `k` tasks in a year contributes to `k` numerators, so
/// the shares of one year sum to one.
pub fn task_share_change(corpus: &Corpus, index: &TaskIndex, year_a: i32, year_b: i32) -> Result<Vec<ShareChange>> {
    let (lo, hi) = corpus
        .time_range()
        .ok_or_else(|| Error::EmptyInput("corpus has no posts".into()))?;
    let (ylo, yhi) = (year_of(lo), year_of(hi));
    for y in [year_a, year_b] {
        if y < ylo || y > yhi {
            return Err(Error::InvalidParameter(format!("year {y} outside corpus range {ylo}..={yhi}")));
        }
    }
    let shares = |year: i32| -> Result<Vec<f64>> {
        let counts: Vec<f64> = active_users_per_task(corpus, index, year)
            .iter()
            .map(|s| s.len() as f64)
            .collect();
        let total: f64 = counts.iter().sum();
        if total == 0.0 {
            return Err(Error::EmptyInput(format!("no task activity in {year}")));
        }
        Ok(counts.into_iter().map(|c| c / total).collect())
    };
    let a = shares(year_a)?;
    let b = shares(year_b)?;
    Ok(a
        .into_iter()
        .zip(b)
        .enumerate()
        .map(|(t, (sa, sb))| ShareChange {
            task_id: t as u32,
            share_a: sa,
            share_b: sb,
            delta: sb - sa,
        })
        .collect())
}

pub fn write_shares_csv(path: &Path, changes: &[ShareChange]) -> Result<()> {
    let mut w = io_create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "task_id,yearA_share,yearB_share,delta").map_err(io)?;
    for c in changes {
        writeln!(w, "{},{},{},{}", c.task_id, c.share_a, c.share_b, c.delta).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{date_start, Answer, Question, Tag};
    use proptest::prelude::*;

    pub(crate) fn tag(id: u32) -> Tag {
        Tag {
            tag_id: id,
            name: format!("t{id}"),
            usage_count: 1,
            is_language: false,
            canonical_language: None,
        }
    }

    /// Tags 0..6; tasks {0,1}, {2,3}, {4,5}.
    pub(crate) fn fixture() -> (Corpus, TaskTaxonomy) {
        let q = |id, tags: &[u32], y| Question {
            question_id: id,
            created_at: date_start(y, 3, 1),
            tag_ids: tags.to_vec(),
        };
        let a = |id, qid, user, y, m| Answer {
            answer_id: id,
            question_id: qid,
            user_id: user,
            created_at: date_start(y, m, 1),
            votes: id % 3,
        };
        let questions = vec![
            q(1, &[0, 2], 2016),
            q(2, &[1], 2016),
            q(3, &[4, 5], 2017),
            q(4, &[3], 2018),
        ];
        let answers = vec![
            a(10, 1, 7, 2016, 5),
            a(11, 2, 7, 2017, 12),
            a(12, 3, 8, 2017, 6),
            a(13, 4, 7, 2018, 1),
            a(14, 1, 8, 2016, 4),
            a(15, 4, 9, 2018, 7),
        ];
        let corpus = Corpus::new((0..6).map(tag).collect(), questions, answers).unwrap();
        let tax = TaskTaxonomy::from_tag_sets(vec![vec![0, 1], vec![2, 3], vec![4, 5]]).unwrap();
        (corpus, tax)
    }

    fn brute_force(corpus: &Corpus, tax: &TaskTaxonomy, user: UserId, w: TimeWindow) -> Vec<u64> {
        let mut out = vec![0; tax.n_tasks()];
        for a in corpus.answers() {
            if a.user_id != user || !w.contains(a.created_at) {
                continue;
            }
            let q = corpus.question(a.question_id).unwrap();
            for task in tax.tasks() {
                if task.tag_ids.iter().any(|t| q.tag_ids.contains(t)) {
                    out[task.task_id as usize] += 1;
                }
            }
        }
        out
    }

    #[test]
    fn window_boundaries() {
        let w = TimeWindow::experience(2018);
        assert!(w.contains(date_start(2016, 1, 1)));
        assert!(w.contains(date_start(2018, 1, 1) - 1));
        assert!(!w.contains(date_start(2018, 1, 1)));
        assert!(!w.contains(date_start(2016, 1, 1) - 1));
    }

    #[test]
    fn answer_touching_two_tasks_counts_in_both() {
        let (c, tax) = fixture();
        let idx = TaskIndex::new(&c, &tax).unwrap();
        let v = experience_vector(&c, &idx, 7, TimeWindow::experience(2018));
        assert_eq!(v.counts, vec![2, 1, 0]);
    }

    #[test]
    fn current_year_excluded() {
        let (c, tax) = fixture();
        let idx = TaskIndex::new(&c, &tax).unwrap();
        let v = experience_vector(&c, &idx, 9, TimeWindow::experience(2018));
        assert_eq!(v.counts, vec![0, 0, 0]);
    }

    #[test]
    fn vectors_match_join_oracle() {
        let (c, tax) = fixture();
        let idx = TaskIndex::new(&c, &tax).unwrap();
        for user in [7, 8, 9, 100] {
            for year in 2016..=2020 {
                let w = TimeWindow::experience(year);
                assert_eq!(experience_vector(&c, &idx, user, w).counts, brute_force(&c, &tax, user, w));
            }
        }
    }

    #[test]
    fn matrix_columns_match_vectors() {
        let (c, tax) = fixture();
        let idx = TaskIndex::new(&c, &tax).unwrap();
        let users: BTreeSet<_> = [7, 8, 9].into();
        let w = TimeWindow::experience(2019);
        let m = experience_matrix(&c, &idx, &users, w).unwrap();
        for (j, &u) in m.users().iter().enumerate() {
            let v = experience_vector(&c, &idx, u, w).counts;
            for t in 0..3 {
                assert_eq!(m.get(t, j), v[t as usize]);
            }
        }
        assert!(experience_matrix(&c, &idx, &BTreeSet::new(), w).is_err());
    }

    #[test]
    fn shares_sum_and_deltas_cancel() {
        let (c, tax) = fixture();
        let idx = TaskIndex::new(&c, &tax).unwrap();
        let ch = task_share_change(&c, &idx, 2016, 2018).unwrap();
        let sa: f64 = ch.iter().map(|x| x.share_a).sum();
        assert!((sa - 1.0).abs() < 1e-12);
        assert!(ch.iter().map(|x| x.delta).sum::<f64>().abs() < 1e-12);
        assert!(task_share_change(&c, &idx, 2016, 2030).is_err());
    }

    #[test]
    fn single_task_share_is_one() {
        let (c, _) = fixture();
        let tax = TaskTaxonomy::from_tag_sets(vec![vec![0, 1, 2, 3, 4, 5]]).unwrap();
        let idx = TaskIndex::new(&c, &tax).unwrap();
        let ch = task_share_change(&c, &idx, 2016, 2017).unwrap();
        assert_eq!((ch[0].share_a, ch[0].share_b, ch[0].delta), (1.0, 1.0, 0.0));
    }

    proptest! {
        #[test]
        fn adding_answers_never_decreases_cells(extra in proptest::collection::vec((1u64..5, 7u64..10, 2015i32..2020), 0..8)) {
            let (c, tax) = fixture();
            let mut answers = c.answers().to_vec();
            for (k, (q, u, y)) in extra.iter().enumerate() {
                answers.push(Answer { answer_id: 100 + k as u64, question_id: *q, user_id: *u, created_at: date_start(*y, 6, 1), votes: 0 });
            }
            let grown = Corpus::new(c.tags().to_vec(), c.questions().to_vec(), answers).unwrap();
            let idx = TaskIndex::new(&c, &tax).unwrap();
            let idx2 = TaskIndex::new(&grown, &tax).unwrap();
            for user in 7..10 {
                for year in 2016..2022 {
                    let w = TimeWindow::experience(year);
                    let a = experience_vector(&c, &idx, user, w).counts;
                    let b = experience_vector(&grown, &idx2, user, w).counts;
                    prop_assert!(a.iter().zip(&b).all(|(x, y)| x <= y));
                }
            }
        }
    }
}
