use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{format_timestamp, parse_timestamp, Answer, Corpus, Question, Tag};
use crate::{Error, Result};

/// Locations of the three core tables.
#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub questions: PathBuf,
    pub answers: PathBuf,
    pub tags: PathBuf,
}

impl CorpusPaths {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusPaths {
            questions: dir.join("questions.jsonl"),
            answers: dir.join("answers.jsonl"),
            tags: dir.join("tags.csv"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct QuestionRecord {
    id: u64,
    created_at: String,
    tags: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct AnswerRecord {
    id: u64,
    question_id: u64,
    user_id: u64,
    created_at: String,
    votes: i64,
}

#[derive(Serialize, Deserialize)]
struct TagRow {
    tag: String,
    count: u64,
    is_language: String,
    canonical_language: String,
}

/// Persisted id ↔ dense-index maps: position in each list is the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub tags: Vec<String>,
    pub questions: Vec<u64>,
    pub users: Vec<u64>,
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub(crate) fn file_label(path: &Path) -> String {
    path.display().to_string()
}

/// Reads a JSON-lines file, skipping blank lines. Yields `(line_number, record)`.
pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::parse(file_label(path), i + 1, e))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for rec in records {
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" | "" => Some(false),
        _ => None,
    }
}

fn read_tags(path: &Path) -> Result<Vec<Tag>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut tags = Vec::new();
    for (i, row) in rdr.deserialize::<TagRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(file_label(path), line, e))?;
        let is_language = parse_bool(&row.is_language)
            .ok_or_else(|| Error::parse(file_label(path), line, format!("bad boolean `{}`", row.is_language)))?;
        let canonical = row.canonical_language.trim();
        tags.push(Tag {
            tag_id: tags.len() as u32,
            name: row.tag,
            usage_count: row.count,
            is_language,
            canonical_language: (!canonical.is_empty()).then(|| canonical.to_string()),
        });
    }
    Ok(tags)
}

/// Loads `questions.jsonl`, `answers.jsonl` and `tags.csv`.
///
/// Tag ids are assigned by row order in `tags.csv`.
pub fn load_corpus(paths: &CorpusPaths) -> Result<Corpus> {
    let tags = read_tags(&paths.tags)?;
    let by_name: std::collections::HashMap<&str, u32> =
        tags.iter().map(|t| (t.name.as_str(), t.tag_id)).collect();

    let qfile = file_label(&paths.questions);
    let mut questions = Vec::new();
    for (line, rec) in read_jsonl::<QuestionRecord>(&paths.questions)? {
        let created_at = parse_timestamp(&rec.created_at).map_err(|m| Error::parse(&qfile, line, m))?;
        if rec.tags.is_empty() {
            return Err(Error::parse(&qfile, line, "question has no tags"));
        }
        let tag_ids = rec
            .tags
            .iter()
            .map(|n| {
                by_name
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| Error::parse(&qfile, line, format!("unknown tag `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        questions.push(Question {
            question_id: rec.id,
            created_at,
            tag_ids,
        });
    }

    let afile = file_label(&paths.answers);
    let mut answers = Vec::new();
    for (line, rec) in read_jsonl::<AnswerRecord>(&paths.answers)? {
        let created_at = parse_timestamp(&rec.created_at).map_err(|m| Error::parse(&afile, line, m))?;
        if rec.votes < 0 {
            return Err(Error::parse(&afile, line, format!("negative votes {}", rec.votes)));
        }
        answers.push(Answer {
            answer_id: rec.id,
            question_id: rec.question_id,
            user_id: rec.user_id,
            created_at,
            votes: rec.votes as u64,
        });
    }
    Corpus::new(tags, questions, answers)
}

/// Writes the corpus tables and `index.json` into `dir`.
pub fn save_snapshot(corpus: &Corpus, dir: &Path) -> Result<()> {
    let paths = CorpusPaths::in_dir(dir);
    let tag_name = |id: u32| corpus.tag(id).name.clone();
    write_jsonl(
        &paths.questions,
        corpus.questions().iter().map(|q| QuestionRecord {
            id: q.question_id,
            created_at: format_timestamp(q.created_at),
            tags: q.tag_ids.iter().map(|&t| tag_name(t)).collect(),
        }),
    )?;
    write_jsonl(
        &paths.answers,
        corpus.answers().iter().map(|a| AnswerRecord {
            id: a.answer_id,
            question_id: a.question_id,
            user_id: a.user_id,
            created_at: format_timestamp(a.created_at),
            votes: a.votes as i64,
        }),
    )?;
    let mut w = csv::Writer::from_writer(create(&paths.tags)?);
    for t in corpus.tags() {
        w.serialize(TagRow {
            tag: t.name.clone(),
            count: t.usage_count,
            is_language: t.is_language.to_string(),
            canonical_language: t.canonical_language.clone().unwrap_or_default(),
        })?;
    }
    w.flush().map_err(|e| Error::io(&paths.tags, e))?;

    let manifest = IndexManifest {
        tags: corpus.tags().iter().map(|t| t.name.clone()).collect(),
        questions: corpus.questions().iter().map(|q| q.question_id).collect(),
        users: corpus.user_ids().collect(),
    };
    let path = dir.join("index.json");
    let mut f = create(&path)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    f.flush().map_err(|e| Error::io(&path, e))
}

/// Loads a snapshot directory and checks it against its index manifest.
pub fn load_snapshot(dir: &Path) -> Result<(Corpus, IndexManifest)> {
    let corpus = load_corpus(&CorpusPaths::in_dir(dir))?;
    let path = dir.join("index.json");
    let manifest: IndexManifest = serde_json::from_reader(open(&path)?)?;
    let users: Vec<u64> = corpus.user_ids().collect();
    let questions: Vec<u64> = corpus.questions().iter().map(|q| q.question_id).collect();
    if manifest.users != users || manifest.questions != questions || manifest.tags.len() != corpus.tags().len() {
        return Err(Error::Integrity(format!("index manifest {} disagrees with tables", path.display())));
    }
    Ok((corpus, manifest))
}
