//! Task–language ecology: user-count and incidence matrices, NODF
//! nestedness, top-language rankings, share reweighting and dominance.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::activity::{TaskIndex, TimeWindow};
use crate::corpus::{io_create, Corpus, LanguageShare, TagId, UserId};
use crate::{Error, Result};

/// Users per (task, canonical language) and its thresholded incidence.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLanguageMatrix {
    /// Canonical language names, ascending.
    pub languages: Vec<String>,
    /// Tasks × languages user counts (real-valued after reweighting).
    pub users: DMatrix<f64>,
    /// `users ≥ threshold`.
    pub incidence: DMatrix<u8>,
    pub threshold: f64,
    pub window: String,
}

impl TaskLanguageMatrix {
    pub fn from_counts(languages: Vec<String>, users: DMatrix<f64>, threshold: f64, window: &str) -> Result<Self> {
        if users.ncols() != languages.len() {
            return Err(Error::DimensionMismatch {
                expected: languages.len(),
                got: users.ncols(),
            });
        }
        if languages.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("languages must be unique and ascending".into()));
        }
        if users.iter().any(|&u| !(u >= 0.0 && u.is_finite())) {
            return Err(Error::InvalidParameter("user counts must be finite and nonnegative".into()));
        }
        let incidence = users.map(|u| (u >= threshold) as u8);
        Ok(TaskLanguageMatrix {
            languages,
            users,
            incidence,
            threshold,
            window: window.to_string(),
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.users.nrows()
    }

    pub fn language_index(&self, name: &str) -> Result<usize> {
        self.languages
            .binary_search_by(|l| l.as_str().cmp(name))
            .map_err(|_| Error::UnknownLanguage(name.to_string()))
    }

    /// Rank of `lang` in `task` among all languages (1 = most users, ties by
    /// name ascending).
    fn rank(&self, task: usize, lang: usize) -> usize {
        let u = self.users[(task, lang)];
        1 + (0..self.languages.len())
            .filter(|&l| {
                let v = self.users[(task, l)];
                v > u || (v == u && l < lang)
            })
            .count()
    }

    /// Language ranked first in `task`, if any language has users there.
    pub fn top_language(&self, task: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for l in 0..self.languages.len() {
            let v = self.users[(task, l)];
            if v > 0.0 && best.is_none_or(|b| v > self.users[(task, b)]) {
                best = Some(l);
            }
        }
        best
    }
}

/// Counts, for each task and canonical language, the distinct users with at
/// least one in-window answer to a question carrying both a tag of the task
/// and a tag of the language. A question with several language tags counts
/// once per language. Languages in `excluded` are left out.
pub fn task_language_matrix(
    corpus: &Corpus,
    index: &TaskIndex,
    languages: &BTreeMap<TagId, String>,
    excluded: &BTreeSet<String>,
    window: TimeWindow,
    label: &str,
    threshold: f64,
) -> Result<TaskLanguageMatrix> {
    let names: Vec<String> = languages
        .values()
        .filter(|l| !excluded.contains(*l))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let position: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let n_lang = names.len();
    let mut users: Vec<BTreeSet<UserId>> = vec![BTreeSet::new(); index.n_tasks() * n_lang];
    for (qi, q) in corpus.questions().iter().enumerate() {
        let tasks = index.tasks_of_question(qi);
        if tasks.is_empty() {
            continue;
        }
        let langs: BTreeSet<usize> = q
            .tag_ids
            .iter()
            .filter_map(|t| languages.get(t))
            .filter_map(|l| position.get(l.as_str()).copied())
            .collect();
        if langs.is_empty() {
            continue;
        }
        for a in corpus.answers_to(qi).filter(|a| window.contains(a.created_at)) {
            for &t in tasks {
                for &l in &langs {
                    users[t as usize * n_lang + l].insert(a.user_id);
                }
            }
        }
    }
    let counts = DMatrix::from_fn(index.n_tasks(), n_lang, |t, l| users[t * n_lang + l].len() as f64);
    TaskLanguageMatrix::from_counts(names, counts, threshold, label)
}

/// NODF nestedness and its row and column components, each in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodfScore {
    pub total: f64,
    pub rows: f64,
    pub columns: f64,
}

/// Sum of paired overlaps over all unordered pairs of `sets`, and the pair
/// count. A pair contributes `100·|ones(low) ∩ ones(high)| / deg(low)` when
/// the degrees differ and the smaller is positive, else 0.
fn paired_overlap(sets: &[Vec<usize>]) -> (f64, usize) {
    let n = sets.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (hi, lo) = if sets[i].len() >= sets[j].len() { (&sets[i], &sets[j]) } else { (&sets[j], &sets[i]) };
            if hi.len() == lo.len() || lo.is_empty() {
                continue;
            }
            let shared = lo.iter().filter(|x| hi.binary_search(x).is_ok()).count();
            sum += 100.0 * shared as f64 / lo.len() as f64;
        }
    }
    (sum, n * n.saturating_sub(1) / 2)
}

pub fn nodf(a: &DMatrix<u8>) -> NodfScore {
    let rows: Vec<Vec<usize>> = (0..a.nrows())
        .map(|i| (0..a.ncols()).filter(|&j| a[(i, j)] != 0).collect())
        .collect();
    let cols: Vec<Vec<usize>> = (0..a.ncols())
        .map(|j| (0..a.nrows()).filter(|&i| a[(i, j)] != 0).collect())
        .collect();
    let (rs, rn) = paired_overlap(&rows);
    let (cs, cn) = paired_overlap(&cols);
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    NodfScore {
        total: mean(rs + cs, rn + cn),
        rows: mean(rs, rn),
        columns: mean(cs, cn),
    }
}

/// Number of tasks in which each language ranks first.
pub fn top_language_counts(u: &TaskLanguageMatrix) -> Vec<usize> {
    let mut counts = vec![0; u.languages.len()];
    for t in 0..u.n_tasks() {
        if let Some(l) = u.top_language(t) {
            counts[l] += 1;
        }
    }
    counts
}

/// Per year, the number of tasks where `language` ranks first; years where
/// the language is absent from the matrix count zero.
pub fn top_language_series(per_year: &BTreeMap<i32, TaskLanguageMatrix>, language: &str) -> Vec<(i32, usize)> {
    per_year
        .iter()
        .map(|(&y, u)| {
            let n = u
                .language_index(language)
                .map_or(0, |l| (0..u.n_tasks()).filter(|&t| u.top_language(t) == Some(l)).count());
            (y, n)
        })
        .collect()
}

/// Task → rank of `language`, for tasks where it has users and ranks `≤ k`.
pub fn language_footprint(u: &TaskLanguageMatrix, language: &str, k: usize) -> Result<BTreeMap<u32, usize>> {
    let l = u.language_index(language)?;
    Ok((0..u.n_tasks())
        .filter(|&t| u.users[(t, l)] > 0.0)
        .map(|t| (t as u32, u.rank(t, l)))
        .filter(|&(_, r)| r <= k)
        .collect())
}

/// External shares of one year, keyed by language.
pub fn shares_for_year(shares: &[LanguageShare], year: i32) -> BTreeMap<String, f64> {
    shares
        .iter()
        .filter(|s| s.year == year)
        .map(|s| (s.language.clone(), s.external_share))
        .collect()
}

/// Scales each language column by `external / platform` share, where the
/// platform share is the column's fraction of all users. Languages without
/// an external share keep weight 1. Incidence is recomputed.
pub fn reweight_languages(u: &TaskLanguageMatrix, shares: &BTreeMap<String, f64>) -> Result<TaskLanguageMatrix> {
    let total_share: f64 = shares.values().sum();
    if total_share > 1.0 + 1e-9 {
        return Err(Error::InvalidParameter(format!("external shares sum to {total_share} > 1")));
    }
    let total = u.users.sum();
    let mut out = u.users.clone();
    for (l, name) in u.languages.iter().enumerate() {
        let Some(&external) = shares.get(name) else {
            warn!("no external share for `{name}`; weight 1 kept");
            continue;
        };
        let platform = if total > 0.0 { u.users.column(l).sum() / total } else { 0.0 };
        if platform == 0.0 {
            if external > 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "`{name}` has external share {external} but no platform users"
                )));
            }
            continue;
        }
        out.column_mut(l).scale_mut(external / platform);
    }
    for (name, _) in shares.iter().filter(|(n, _)| u.language_index(n).is_err()) {
        warn!("external share for `{name}` has no matching language");
    }
    TaskLanguageMatrix::from_counts(u.languages.clone(), out, u.threshold, &u.window)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DominanceRow {
    pub year: i32,
    /// Tasks where the first language has strictly more users.
    pub a_more: usize,
    pub b_more: usize,
}

pub fn pairwise_dominance(
    per_year: &BTreeMap<i32, TaskLanguageMatrix>,
    lang_a: &str,
    lang_b: &str,
) -> Result<Vec<DominanceRow>> {
    per_year
        .iter()
        .map(|(&year, u)| {
            let (a, b) = (u.language_index(lang_a)?, u.language_index(lang_b)?);
            let mut row = DominanceRow { year, a_more: 0, b_more: 0 };
            for t in 0..u.n_tasks() {
                let (x, y) = (u.users[(t, a)], u.users[(t, b)]);
                if x > y {
                    row.a_more += 1;
                } else if y > x {
                    row.b_more += 1;
                }
            }
            Ok(row)
        })
        .collect()
}

fn write_with<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let mut w = io_create(path)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// `task,language,users,present`, nonzero cells only.
pub fn write_task_language_csv(path: &Path, u: &TaskLanguageMatrix) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "task,language,users,present")?;
        for t in 0..u.n_tasks() {
            for (l, name) in u.languages.iter().enumerate() {
                if u.users[(t, l)] > 0.0 {
                    writeln!(w, "{t},{name},{},{}", u.users[(t, l)], u.incidence[(t, l)])?;
                }
            }
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct NodfFile<'a> {
    window: &'a str,
    n_tasks: usize,
    n_languages: usize,
    threshold: f64,
    #[serde(flatten)]
    score: NodfScore,
}

pub fn write_nodf_json(path: &Path, u: &TaskLanguageMatrix, score: &NodfScore) -> Result<()> {
    let file = NodfFile {
        window: &u.window,
        n_tasks: u.n_tasks(),
        n_languages: u.languages.len(),
        threshold: u.threshold,
        score: *score,
    };
    let text = serde_json::to_string_pretty(&file)?;
    write_with(path, |w| writeln!(w, "{text}"))
}

/// `year,language,top_task_count` for every language of every year.
pub fn write_top_language_series_csv(path: &Path, per_year: &BTreeMap<i32, TaskLanguageMatrix>) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "year,language,top_task_count")?;
        for (year, u) in per_year {
            for (name, n) in u.languages.iter().zip(top_language_counts(u)) {
                writeln!(w, "{year},{name},{n}")?;
            }
        }
        Ok(())
    })
}

/// `year,language,task,rank`.
pub fn write_footprint_csv(path: &Path, rows: &[(i32, String, BTreeMap<u32, usize>)]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "year,language,task,rank")?;
        for (year, lang, ranks) in rows {
            for (t, r) in ranks {
                writeln!(w, "{year},{lang},{t},{r}")?;
            }
        }
        Ok(())
    })
}

/// `year,language_a,language_b,a_more,b_more`.
pub fn write_dominance_csv(path: &Path, lang_a: &str, lang_b: &str, rows: &[DominanceRow]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "year,language_a,language_b,a_more,b_more")?;
        for r in rows {
            writeln!(w, "{},{lang_a},{lang_b},{},{}", r.year, r.a_more, r.b_more)?;
        }
        Ok(())
    })
}
