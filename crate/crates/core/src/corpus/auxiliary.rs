//! Readers and writers for the auxiliary inputs: survey, job ads, task
//! labels, external language shares and language rules.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{create, file_label, open, read_jsonl, write_jsonl};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyRecord {
    pub respondent_id: u64,
    pub salary: f64,
    /// Technology / tag names as reported.
    pub tags: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SurveyRow {
    respondent_id: u64,
    salary: f64,
    tags: String,
}

pub fn read_survey(path: &Path) -> Result<Vec<SurveyRecord>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SurveyRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(file_label(path), line, e))?;
        if !(row.salary > 0.0 && row.salary.is_finite()) {
            return Err(Error::parse(file_label(path), line, format!("salary must be positive, got {}", row.salary)));
        }
        let tags: Vec<String> = row
            .tags
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if tags.is_empty() {
            return Err(Error::parse(file_label(path), line, "respondent lists no tags"));
        }
        out.push(SurveyRecord {
            respondent_id: row.respondent_id,
            salary: row.salary,
            tags,
        });
    }
    Ok(out)
}

pub fn write_survey(path: &Path, records: &[SurveyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in records {
        w.serialize(SurveyRow {
            respondent_id: r.respondent_id,
            salary: r.salary,
            tags: r.tags.join(";"),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub text: String,
    pub embedding: Vec<f64>,
}

/// One advertised position with pre-extracted requirements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobAd {
    pub job_id: u64,
    pub year: u16,
    pub salary: Option<f64>,
    pub requirements: Vec<Requirement>,
}

pub fn read_job_ads(path: &Path) -> Result<Vec<JobAd>> {
    let file = file_label(path);
    let mut dim: Option<usize> = None;
    let mut out = Vec::new();
    for (line, job) in read_jsonl::<JobAd>(path)? {
        if let Some(s) = job.salary {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::parse(&file, line, format!("salary must be positive, got {s}")));
            }
        }
        for r in &job.requirements {
            match dim {
                None => dim = Some(r.embedding.len()),
                Some(d) if d != r.embedding.len() => {
                    return Err(Error::parse(
                        &file,
                        line,
                        format!("embedding dimension {} differs from {d}", r.embedding.len()),
                    ))
                }
                _ => {}
            }
        }
        out.push(job);
    }
    Ok(out)
}

pub fn write_job_ads(path: &Path, jobs: &[JobAd]) -> Result<()> {
    write_jsonl(path, jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLabel {
    pub task_id: u32,
    pub short_label: String,
    pub long_label: String,
    pub embedding: Vec<f64>,
}

pub fn read_task_labels(path: &Path) -> Result<Vec<TaskLabel>> {
    let file = file_label(path);
    let mut out: Vec<TaskLabel> = Vec::new();
    for (line, label) in read_jsonl::<TaskLabel>(path)? {
        if label.short_label.trim().is_empty() {
            return Err(Error::parse(&file, line, "empty short_label"));
        }
        if let Some(first) = out.first() {
            if first.embedding.len() != label.embedding.len() {
                return Err(Error::parse(&file, line, "embedding dimension differs from first label"));
            }
        }
        out.push(label);
    }
    out.sort_by_key(|l| l.task_id);
    Ok(out)
}

pub fn write_task_labels(path: &Path, labels: &[TaskLabel]) -> Result<()> {
    write_jsonl(path, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagEmbedding {
    pub tag: String,
    pub embedding: Vec<f64>,
}

pub fn read_tag_embeddings(path: &Path) -> Result<Vec<TagEmbedding>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageShare {
    pub language: String,
    pub year: i32,
    pub external_share: f64,
}

pub fn read_language_shares(path: &Path) -> Result<Vec<LanguageShare>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<LanguageShare>().enumerate() {
        let row = row.map_err(|e| Error::parse(file_label(path), i + 2, e))?;
        if !(0.0..=1.0).contains(&row.external_share) {
            return Err(Error::parse(file_label(path), i + 2, "share outside [0, 1]"));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_language_shares(path: &Path, shares: &[LanguageShare]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for s in shares {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct RuleRow {
    tag: String,
    canonical_language: String,
}

/// `tag,canonical_language` synonym rules.
pub fn read_language_rules(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    rdr.deserialize::<RuleRow>()
        .enumerate()
        .map(|(i, r)| {
            r.map(|r| (r.tag, r.canonical_language))
                .map_err(|e| Error::parse(file_label(path), i + 2, e))
        })
        .collect()
}

/// One canonical language per line; `#` starts a comment.
pub fn read_exclusions(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let entry = line.split('#').next().unwrap_or("").trim();
        if !entry.is_empty() {
            out.push(entry.to_string());
        }
    }
    Ok(out)
}

#[allow(dead_code)]
pub(crate) fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut w = create(path)?;
    for l in lines {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
