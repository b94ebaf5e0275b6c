//! Builders for the voting, entry and salary datasets and the minute-task
//! count instrument.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::DMatrix;

use super::Frame;
use crate::activity::{TaskIndex, UserTaskMatrix};
use crate::corpus::{day_minute, year_of, Answer, Corpus, UserId, MINUTES_PER_DAY, SECONDS_PER_DAY};
use crate::jobmatch::JobTaskVector;
use crate::relatedness::{densities, row_normalized, RelatednessMatrix};
use crate::valuation::TaskValueVector;
use crate::{Error, Result};

/// First answers arriving within this many seconds go to the "within" set.
pub const PLACEBO_GAP_SECONDS: i64 = SECONDS_PER_DAY;

const DAY: f64 = MINUTES_PER_DAY as f64;

/// Circular mean of day-minutes on the 1440-minute clock, rounded to a
/// micro-minute. Falls back to the arithmetic mean when the resultant
/// vanishes (perfectly balanced minutes).
pub fn circular_mean_minute(minutes: &[u32]) -> Option<f64> {
    if minutes.is_empty() {
        return None;
    }
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &m in minutes {
        let a = TAU * m as f64 / DAY;
        s += a.sin();
        c += a.cos();
    }
    let n = minutes.len() as f64;
    let mean = if (s * s + c * c).sqrt() / n < 1e-9 {
        minutes.iter().map(|&m| m as f64).sum::<f64>() / n
    } else {
        (s.atan2(c) / TAU * DAY).rem_euclid(DAY)
    };
    Some(((mean * 1e6).round() / 1e6).rem_euclid(DAY))
}

/// Mean answer day-minute of every answering user.
pub fn user_mean_minutes(corpus: &Corpus) -> BTreeMap<UserId, f64> {
    corpus
        .user_ids()
        .filter_map(|u| {
            let mins: Vec<u32> = corpus.answers_by(u).map(|a| day_minute(a.created_at)).collect();
            circular_mean_minute(&mins).map(|m| (u, m))
        })
        .collect()
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(DAY);
    d.min(DAY - d)
}

/// `M[θ][m] = Σ_u X_uθ · max(0, 1 − dist(m, m̄_u) / width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinuteTaskCount {
    /// Tasks × 1440 day-minutes.
    pub values: DMatrix<f64>,
}

impl MinuteTaskCount {
    pub fn get(&self, task: u32, minute: u32) -> f64 {
        self.values[(task as usize, minute as usize)]
    }
}

pub fn minute_task_counts(
    mean_minutes: &BTreeMap<UserId, f64>,
    experience: &UserTaskMatrix,
    width: f64,
) -> Result<MinuteTaskCount> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidParameter(format!("kernel width must be positive, got {width}")));
    }
    let mut values = DMatrix::<f64>::zeros(experience.n_tasks(), MINUTES_PER_DAY as usize);
    let mut kernel = vec![0.0; MINUTES_PER_DAY as usize];
    for (j, u) in experience.users().iter().enumerate() {
        let col = experience.column(j);
        if col.is_empty() {
            continue;
        }
        let mbar = *mean_minutes
            .get(u)
            .ok_or_else(|| Error::InvalidParameter(format!("user {u} has no answer day-minutes")))?;
        for (m, k) in kernel.iter_mut().enumerate() {
            *k = (1.0 - circular_distance(m as f64, mbar) / width).max(0.0);
        }
        for &(t, x) in col {
            let mut row = values.row_mut(t as usize);
            for (m, k) in kernel.iter().enumerate() {
                if *k > 0.0 {
                    row[m] += x as f64 * k;
                }
            }
        }
    }
    Ok(MinuteTaskCount { values })
}

/// Experience and instrument for answers posted in one year.
#[derive(Debug, Clone)]
pub struct VotingPanel {
    /// Experience over the two calendar years before the answer year.
    pub experience: UserTaskMatrix,
    pub minutes: MinuteTaskCount,
}

fn first_answer<'a>(answers: &[&'a Answer]) -> &'a Answer {
    answers
        .iter()
        .min_by_key(|a| (a.created_at, a.answer_id))
        .copied()
        .expect("nonempty")
}

fn top_answer<'a>(answers: &[&'a Answer]) -> &'a Answer {
    answers
        .iter()
        .min_by(|a, b| {
            b.votes
                .cmp(&a.votes)
                .then(a.created_at.cmp(&b.created_at))
                .then(a.answer_id.cmp(&b.answer_id))
        })
        .copied()
        .expect("nonempty")
}

/// One row per (first answer to a question, task of that question).
///
/// The first answer is the earliest (then lowest id); the top answer has
/// the most votes, ties going to the earliest. Questions without answers or
/// without tasks yield no rows; answers from years without a panel are an
/// error.
pub fn build_voting_rows(corpus: &Corpus, index: &TaskIndex, panels: &BTreeMap<i32, VotingPanel>) -> Result<Frame> {
    let mut top = Vec::new();
    let mut log_votes = Vec::new();
    let mut log_exp = Vec::new();
    let mut log_answers = Vec::new();
    let mut log_total = Vec::new();
    let mut instrument = Vec::new();
    let mut gap = Vec::new();
    let (mut year, mut task, mut task_year, mut qminute, mut group) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut user, mut question, mut answer) = (Vec::new(), Vec::new(), Vec::new());
    for (qi, q) in corpus.questions().iter().enumerate() {
        let answers: Vec<&Answer> = corpus.answers_to(qi).collect();
        let tasks = index.tasks_of_question(qi);
        if answers.is_empty() || tasks.is_empty() {
            continue;
        }
        let first = first_answer(&answers);
        let is_top = top_answer(&answers).answer_id == first.answer_id;
        let y = year_of(first.created_at);
        let panel = panels
            .get(&y)
            .ok_or_else(|| Error::InvalidParameter(format!("no experience panel for year {y}")))?;
        let col = panel.experience.user_position(first.user_id);
        let total_votes: u64 = answers.iter().map(|a| a.votes).sum();
        let m = day_minute(q.created_at);
        for &t in tasks {
            let x = col.map_or(0, |j| panel.experience.get(t, j));
            top.push(is_top as u8 as f64);
            log_votes.push((first.votes as f64 + 1.0).ln());
            log_exp.push((x as f64 + 1.0).ln());
            log_answers.push((answers.len() as f64).ln());
            log_total.push((total_votes as f64 + 1.0).ln());
            instrument.push(panel.minutes.get(t, m));
            gap.push((first.created_at - q.created_at) as f64);
            year.push(y as u64);
            task.push(t as u64);
            task_year.push(((t as u64) << 16) | y as u64);
            qminute.push(m as u64);
            group.push(t as u64 * MINUTES_PER_DAY as u64 + m as u64);
            user.push(first.user_id);
            question.push(q.question_id);
            answer.push(first.answer_id);
        }
    }
    Frame::new()
        .with_numeric("top_answer", top)?
        .with_numeric("log_votes", log_votes)?
        .with_numeric("log_experience", log_exp)?
        .with_numeric("log_answers", log_answers)?
        .with_numeric("log_total_votes", log_total)?
        .with_numeric("instrument", instrument)?
        .with_numeric("gap_seconds", gap)?
        .with_factor("year", year)?
        .with_factor("task", task)?
        .with_factor("task_year", task_year)?
        .with_factor("qminute", qminute)?
        .with_factor("group_task_qminute", group)?
        .with_factor("user", user)?
        .with_factor("question", question)?
        .with_factor("answer", answer)
}

/// Splits voting rows on the first-answer delay: `≤ 24h` and `> 24h`.
pub fn placebo_split(rows: &Frame) -> Result<(Frame, Frame)> {
    let gap = rows.numeric("gap_seconds")?;
    let ids = rows.factor("answer")?;
    let (mut within, mut after) = (Vec::new(), Vec::new());
    for (i, &g) in gap.iter().enumerate() {
        if g < 0.0 {
            return Err(Error::ClockInconsistency {
                answer_id: ids[i],
                seconds: -g as i64,
            });
        }
        if g <= PLACEBO_GAP_SECONDS as f64 {
            within.push(i);
        } else {
            after.push(i);
        }
    }
    Ok((rows.take(&within), rows.take(&after)))
}

/// Prior-window experience and calendar-year activity for one entry year.
#[derive(Debug, Clone)]
pub struct EntryYear {
    pub year: i32,
    pub prior: UserTaskMatrix,
    pub current: UserTaskMatrix,
}

#[derive(Debug, Clone)]
pub struct EntryRows {
    pub frame: Frame,
    pub dropped_unvalued: usize,
    pub dropped_isolated: usize,
}

fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    v.iter().map(|x| if sd > 0.0 { (x - mean) / sd } else { 0.0 }).collect()
}

/// One row per (user, year, at-risk task).
///
/// Users are those of `user_sample` with some activity in the prior window;
/// a task is at risk when the user has no prior-window activity in it. The
/// relatedness must come from a different sample than the users. Density
/// (`density`) and log task value (`log_value`) are standardized over all
/// rows; raw versions are kept as `density_raw` and `log_value_raw`.
pub fn build_entry_rows(
    years: &[EntryYear],
    r: &RelatednessMatrix,
    values: &TaskValueVector,
    user_sample: &str,
) -> Result<EntryRows> {
    if r.provenance.sample == user_sample {
        return Err(Error::Provenance(format!(
            "relatedness and entry users both come from `{user_sample}`"
        )));
    }
    let n = r.n_tasks();
    if values.n_tasks() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: values.n_tasks(),
        });
    }
    let weights = row_normalized(r);
    let sums = r.row_sums();
    let mut entered = Vec::new();
    let mut dens = Vec::new();
    let mut logv = Vec::new();
    let (mut users, mut ys, mut tasks) = (Vec::new(), Vec::new(), Vec::new());
    let (mut dropped_unvalued, mut dropped_isolated) = (0, 0);
    for ey in years {
        if ey.prior.n_tasks() != n || ey.current.n_tasks() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: ey.prior.n_tasks(),
            });
        }
        for (j, &u) in ey.prior.users().iter().enumerate() {
            let col = ey.prior.column(j);
            if col.is_empty() {
                continue;
            }
            let mut x = vec![0.0; n];
            for &(t, c) in col {
                x[t as usize] = c as f64;
            }
            let d = densities(&weights, &sums, &x);
            let now = ey.current.user_position(u);
            for t in 0..n {
                if x[t] > 0.0 {
                    continue;
                }
                let Some(v) = values.values[t].filter(|v| *v > 0.0) else {
                    dropped_unvalued += 1;
                    continue;
                };
                let Some(dt) = d[t] else {
                    dropped_isolated += 1;
                    continue;
                };
                entered.push(now.is_some_and(|k| ey.current.get(t as u32, k) > 0) as u8 as f64);
                dens.push(dt);
                logv.push(v.ln());
                users.push(u);
                ys.push(ey.year as u64);
                tasks.push(t as u64);
            }
        }
    }
    let frame = Frame::new()
        .with_numeric("entered", entered)?
        .with_numeric("density", standardize(&dens))?
        .with_numeric("log_value", standardize(&logv))?
        .with_numeric("density_raw", dens)?
        .with_numeric("log_value_raw", logv)?
        .with_factor("user", users)?
        .with_factor("year", ys)?
        .with_factor("task", tasks)?;
    Ok(EntryRows {
        frame,
        dropped_unvalued,
        dropped_isolated,
    })
}

#[derive(Debug, Clone)]
pub struct SalaryRows {
    pub frame: Frame,
    pub dropped: usize,
}

/// One row per job with a salary and at least one valued task.
///
/// `vbar` is the mean log value of the job's valued tasks; `rbar` the mean
/// over required tasks of the density of the job's other required tasks
/// (isolated tasks skipped, zero when none remain).
pub fn build_salary_rows(jobs: &[JobTaskVector], r: &RelatednessMatrix, values: &TaskValueVector) -> Result<SalaryRows> {
    let n = r.n_tasks();
    let weights = row_normalized(r);
    let sums = r.row_sums();
    let (mut log_salary, mut vbar, mut rbar, mut log_n, mut year, mut job_id) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut dropped = 0;
    for job in jobs {
        let Some(salary) = job.salary else { continue };
        if job.tasks.is_empty() {
            continue;
        }
        if job.n_tasks != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: job.n_tasks,
            });
        }
        let logs: Vec<f64> = job
            .tasks
            .keys()
            .filter_map(|&t| values.values[t as usize].filter(|v| *v > 0.0).map(f64::ln))
            .collect();
        if logs.is_empty() {
            dropped += 1;
            continue;
        }
        let mut x = vec![0.0; n];
        for &t in job.tasks.keys() {
            x[t as usize] = 1.0;
        }
        let mut coh = Vec::new();
        for &t in job.tasks.keys() {
            x[t as usize] = 0.0;
            if sums[t as usize] > 0.0 {
                coh.push(densities(&weights, &sums, &x)[t as usize].expect("row is not isolated"));
            }
            x[t as usize] = 1.0;
        }
        log_salary.push(salary.ln());
        vbar.push(logs.iter().sum::<f64>() / logs.len() as f64);
        rbar.push(if coh.is_empty() { 0.0 } else { coh.iter().sum::<f64>() / coh.len() as f64 });
        log_n.push((job.tasks.len() as f64).ln());
        year.push(job.year as u64);
        job_id.push(job.job_id);
    }
    let frame = Frame::new()
        .with_numeric("log_salary", log_salary)?
        .with_numeric("vbar", vbar)?
        .with_numeric("rbar", rbar)?
        .with_numeric("log_n_tasks", log_n)?
        .with_factor("year", year)?
        .with_factor("job", job_id)?;
    Ok(SalaryRows { frame, dropped })
}
