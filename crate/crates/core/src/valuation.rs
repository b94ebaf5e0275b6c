//! Salary imputation from survey respondents and activity-weighted task values.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use log::warn;

use crate::activity::UserTaskMatrix;
use crate::corpus::{io_create, Corpus, SurveyRecord, TagId, UserId};
use crate::{Error, Result};

/// Survey respondent with technologies mapped to canonical keys.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyRespondent {
    pub respondent_id: u64,
    pub salary: f64,
    pub keys: BTreeSet<String>,
}

/// Canonical matching key per tag: the canonical language for language
/// tags, the tag name otherwise.
pub fn tag_keys(corpus: &Corpus, languages: &BTreeMap<TagId, String>) -> Vec<String> {
    corpus
        .tags()
        .iter()
        .map(|t| languages.get(&t.tag_id).cloned().unwrap_or_else(|| t.name.clone()))
        .collect()
}

/// Maps reported technologies onto canonical tag keys. Names are looked up
/// as tag names first, then in `aliases`; unmatched names are dropped with
/// a warning, as are respondents left without any key.
pub fn prepare_survey(
    records: &[SurveyRecord],
    corpus: &Corpus,
    keys: &[String],
    aliases: &BTreeMap<String, String>,
) -> Vec<SurveyRespondent> {
    let known: BTreeSet<&str> = keys.iter().map(String::as_str).collect();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let mut set = BTreeSet::new();
        for name in &r.tags {
            let name = name.trim();
            let key = corpus
                .tag_id(name)
                .map(|id| keys[id as usize].clone())
                .or_else(|| aliases.get(name).cloned())
                .filter(|k| known.contains(k.as_str()));
            match key {
                Some(k) => {
                    set.insert(k);
                }
                None => warn!("respondent {}: technology `{name}` not matched", r.respondent_id),
            }
        }
        if set.is_empty() {
            warn!("respondent {} has no matched technology", r.respondent_id);
            continue;
        }
        out.push(SurveyRespondent {
            respondent_id: r.respondent_id,
            salary: r.salary,
            keys: set,
        });
    }
    out
}

/// Top respondents for one user, by descending overlap then ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct RespondentMatch {
    pub user_id: UserId,
    /// `(respondent index into the survey, respondent id, overlap)`.
    pub matches: Vec<(usize, u64, u64)>,
    /// Salaries aligned with `matches`.
    pub salaries: Vec<f64>,
}

pub fn match_respondents(
    user_id: UserId,
    user_keys: &BTreeSet<String>,
    survey: &[SurveyRespondent],
    k: usize,
) -> Result<RespondentMatch> {
    if survey.is_empty() {
        return Err(Error::EmptyInput("survey has no respondents".into()));
    }
    let mut scored: Vec<(usize, u64, u64)> = survey
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let m = r.keys.intersection(user_keys).count() as u64;
            (m > 0).then_some((i, r.respondent_id, m))
        })
        .collect();
    scored.sort_by(|a, b| b.2.cmp(&a.2).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    let salaries = scored.iter().map(|&(i, _, _)| survey[i].salary).collect();
    Ok(RespondentMatch {
        user_id,
        matches: scored,
        salaries,
    })
}

/// `V_u = Σ_ρ M_uρ V_ρ / Σ_α M_uα`.
pub fn impute_user_value(m: &RespondentMatch) -> Result<f64> {
    let total: u64 = m.matches.iter().map(|x| x.2).sum();
    if total == 0 {
        return Err(Error::UnmatchedUser);
    }
    let num: f64 = m.matches.iter().zip(&m.salaries).map(|(x, s)| x.2 as f64 * s).sum();
    Ok(num / total as f64)
}

/// Per-task activity-weighted mean of user values.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskValueVector {
    pub window: String,
    /// `None` for tasks without valued activity.
    pub values: Vec<Option<f64>>,
    pub contributing_users: Vec<usize>,
}

impl TaskValueVector {
    pub fn n_tasks(&self) -> usize {
        self.values.len()
    }
}

/// `V_θ = Σ_u X_uθ V_u / Σ_u' X_u'θ` over users with a value.
pub fn task_values(user_values: &BTreeMap<UserId, f64>, x: &UserTaskMatrix, window: &str) -> TaskValueVector {
    let n = x.n_tasks();
    let mut num = vec![0.0f64; n];
    let mut den = vec![0u64; n];
    let mut contributing = vec![0usize; n];
    for (j, u) in x.users().iter().enumerate() {
        let Some(&v) = user_values.get(u) else { continue };
        for &(t, c) in x.column(j) {
            num[t as usize] += c as f64 * v;
            den[t as usize] += c;
            contributing[t as usize] += 1;
        }
    }
    TaskValueVector {
        window: window.to_string(),
        values: num
            .into_iter()
            .zip(&den)
            .map(|(s, &d)| (d > 0).then(|| s / d as f64))
            .collect(),
        contributing_users: contributing,
    }
}

pub fn write_task_values_csv(path: &Path, v: &TaskValueVector) -> Result<()> {
    let mut w = io_create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "task_id,value,contributing_users").map_err(io)?;
    for (t, (val, n)) in v.values.iter().zip(&v.contributing_users).enumerate() {
        match val {
            Some(x) => writeln!(w, "{t},{x},{n}"),
            None => writeln!(w, "{t},,{n}"),
        }
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(serde::Deserialize)]
struct TaskValueRow {
    task_id: usize,
    value: Option<f64>,
    contributing_users: usize,
}

pub fn read_task_values_csv(path: &Path, window: &str) -> Result<TaskValueVector> {
    let mut rdr = csv::Reader::from_reader(crate::corpus::io_open(path)?);
    let mut values = Vec::new();
    let mut contributing = Vec::new();
    for (i, row) in rdr.deserialize::<TaskValueRow>().enumerate() {
        let row = row?;
        if row.task_id != i {
            return Err(Error::Integrity(format!("task values out of order at row {}", i + 2)));
        }
        values.push(row.value);
        contributing.push(row.contributing_users);
    }
    Ok(TaskValueVector {
        window: window.to_string(),
        values,
        contributing_users: contributing,
    })
}

/// `user_values.csv`: `user_id,value,matched_k`.
pub fn write_user_values_csv(path: &Path, rows: &BTreeMap<UserId, (f64, usize)>) -> Result<()> {
    let mut w = io_create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "user_id,value,matched_k").map_err(io)?;
    for (u, (v, k)) in rows {
        writeln!(w, "{u},{v},{k}").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::TimeWindow;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn resp(id: u64, salary: f64, keys: &[&str]) -> SurveyRespondent {
        SurveyRespondent {
            respondent_id: id,
            salary,
            keys: keys.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn keys(k: &[&str]) -> BTreeSet<String> {
        k.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn superset_respondent_ranks_first() {
        let survey = vec![resp(1, 1.0, &["a"]), resp(2, 1.0, &["a", "b", "c"]), resp(3, 1.0, &["z"])];
        let m = match_respondents(0, &keys(&["a", "b"]), &survey, 300).unwrap();
        assert_eq!(m.matches[0].1, 2);
        assert_eq!(m.matches.len(), 2);
    }

    #[test]
    fn ties_by_lower_id() {
        let survey = vec![resp(9, 1.0, &["a"]), resp(4, 1.0, &["a"])];
        let m = match_respondents(0, &keys(&["a"]), &survey, 300).unwrap();
        assert_eq!(m.matches.iter().map(|x| x.1).collect::<Vec<_>>(), vec![4, 9]);
    }

    #[test]
    fn top_k_matches_full_sort() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(500);
        let pool: Vec<String> = (0..20).map(|i| format!("k{i}")).collect();
        let survey: Vec<SurveyRespondent> = (0..500)
            .map(|i| SurveyRespondent {
                respondent_id: 1000 - i,
                salary: rng.random_range(1e4..2e5),
                keys: pool.iter().filter(|_| rng.random_bool(0.3)).cloned().collect(),
            })
            .collect();
        let user: BTreeSet<String> = pool[..8].iter().cloned().collect();
        let m = match_respondents(1, &user, &survey, 300).unwrap();
        let mut all: Vec<(u64, u64)> = survey
            .iter()
            .map(|r| (r.keys.intersection(&user).count() as u64, r.respondent_id))
            .filter(|x| x.0 > 0)
            .collect();
        all.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        all.truncate(300);
        assert_eq!(m.matches.iter().map(|x| (x.2, x.1)).collect::<Vec<_>>(), all);
    }

    #[test]
    fn weighted_mean_examples() {
        let survey = vec![resp(1, 100_000.0, &["a", "b", "c"]), resp(2, 50_000.0, &["a"])];
        let m = match_respondents(0, &keys(&["a", "b", "c"]), &survey, 300).unwrap();
        assert_eq!(impute_user_value(&m).unwrap(), 87_500.0);
        let one = match_respondents(0, &keys(&["a"]), &survey[..1], 300).unwrap();
        assert_eq!(impute_user_value(&one).unwrap(), 100_000.0);
        let none = match_respondents(0, &keys(&["q"]), &survey, 300).unwrap();
        assert!(matches!(impute_user_value(&none), Err(Error::UnmatchedUser)));
    }

    #[test]
    fn ten_respondent_weighted_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let pool: Vec<String> = (0..6).map(|i| format!("k{i}")).collect();
        let survey: Vec<SurveyRespondent> = (0..10)
            .map(|i| SurveyRespondent {
                respondent_id: i,
                salary: rng.random_range(3e4..3e5),
                keys: pool.iter().filter(|_| rng.random_bool(0.5)).cloned().collect(),
            })
            .collect();
        let user: BTreeSet<String> = pool.iter().cloned().collect();
        let v = impute_user_value(&match_respondents(0, &user, &survey, 300).unwrap()).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for r in &survey {
            let m = r.keys.len() as f64;
            num += m * r.salary;
            den += m;
        }
        assert!((v - num / den).abs() < 1e-9 * v);
    }

    fn matrix(cols: &[(u64, Vec<u64>)]) -> UserTaskMatrix {
        let n = cols[0].1.len();
        UserTaskMatrix::from_columns(TimeWindow::calendar_year(2020), n, cols.iter().cloned().collect()).unwrap()
    }

    #[test]
    fn task_value_examples() {
        let x = matrix(&[(1, vec![3, 2, 0]), (2, vec![0, 2, 0]), (3, vec![5, 0, 0])]);
        let uv: BTreeMap<u64, f64> = [(1, 100.0), (2, 200.0)].into();
        let v = task_values(&uv, &x, "w");
        assert_eq!(v.values[0], Some(100.0));
        assert_eq!(v.values[1], Some(150.0));
        assert_eq!(v.values[2], None);
        assert_eq!(v.contributing_users, vec![1, 2, 0]);
    }

    proptest! {
        #[test]
        fn task_values_are_convex_and_order_free(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut users: Vec<(u64, Vec<u64>)> = Vec::new();
            for u in 0..12 {
                let mut counts = Vec::new();
                for _ in 0..5 {
                    let c = rng.random_range(1..10);
                    counts.push(if rng.random_bool(0.5) { c } else { 0 });
                }
                users.push((u, counts));
            }
            let mut uv = BTreeMap::new();
            for u in 0..12u64 {
                let v: f64 = rng.random_range(1e4..1e6);
                if rng.random_bool(0.8) {
                    uv.insert(u, v);
                }
            }
            let v = task_values(&uv, &matrix(&users), "w");
            for (t, val) in v.values.iter().enumerate() {
                let contrib: Vec<f64> = users.iter().filter(|(u, c)| c[t] > 0 && uv.contains_key(u)).map(|(u, _)| uv[u]).collect();
                match val {
                    Some(x) => {
                        let lo = contrib.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = contrib.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        prop_assert!(*x >= lo * (1.0 - 1e-12) && *x <= hi * (1.0 + 1e-12));
                    }
                    None => prop_assert!(contrib.is_empty()),
                }
            }
        }

        #[test]
        fn raising_a_salary_never_lowers_value(seed in any::<u64>(), bump in 0.0f64..1e5) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pool: Vec<String> = (0..6).map(|i| format!("k{i}")).collect();
            let mut survey: Vec<SurveyRespondent> = (0..15)
                .map(|i| SurveyRespondent {
                    respondent_id: i,
                    salary: rng.random_range(3e4..3e5),
                    keys: pool.iter().filter(|_| rng.random_bool(0.5)).cloned().collect(),
                })
                .collect();
            let user: BTreeSet<String> = pool[..3].iter().cloned().collect();
            let m = match_respondents(0, &user, &survey, 5).unwrap();
            prop_assume!(!m.matches.is_empty());
            let before = impute_user_value(&m).unwrap();
            survey[m.matches[0].0].salary += bump;
            let after = impute_user_value(&match_respondents(0, &user, &survey, 5).unwrap()).unwrap();
            prop_assert!(after >= before - 1e-9);
            let mut shuffled = survey.clone();
            shuffled.reverse();
            let again = impute_user_value(&match_respondents(0, &user, &shuffled, 5).unwrap()).unwrap();
            prop_assert!((again - after).abs() <= 1e-9 * after);
        }
    }
}
