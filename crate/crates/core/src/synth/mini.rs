//! A small self-contained corpus with every auxiliary input, used by the
//! end-to-end tests and shipped under `data/mini`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal, Poisson};
use serde_json::json;

use crate::corpus::{
    format_timestamp, io_create, write_job_ads, write_language_shares, write_survey, year_of, year_start, JobAd,
    LanguageShare, Requirement, SurveyRecord, Timestamp, MINUTES_PER_DAY, SECONDS_PER_DAY,
};
use crate::{Error, Result};

const TOPICS: [(&str, [&str; 5]); 8] = [
    ("web", ["css", "http", "rest", "django", "react"]),
    ("data", ["pandas", "dataframe", "csv-parsing", "etl", "joins"]),
    ("systems", ["pointers", "memory", "threads", "linker", "syscalls"]),
    ("mobile", ["android", "ios", "layout-xml", "gradle", "push-notifications"]),
    ("devops", ["docker", "kubernetes", "ci", "yaml", "nginx"]),
    ("ml", ["tensorflow", "neural-network", "regression", "numpy", "scikit-learn"]),
    ("games", ["unity", "opengl", "shaders", "physics", "sprites"]),
    ("security", ["tls", "oauth", "encryption", "hashing", "jwt"]),
];

const LANGUAGES: [&str; 9] = ["python", "javascript", "java", "c++", "rust", "go", "r", "sql", "html"];

/// Version or synonym tags: (tag, canonical language in the tag table,
/// language it stands for).
const VARIANTS: [(&str, &str, &str); 5] = [
    ("python-3.x", "python", "python"),
    ("java-8", "java", "java"),
    ("c++17", "c++", "c++"),
    ("ecmascript-6", "", "javascript"),
    ("golang", "", "go"),
];

/// Per-topic language weights, in `LANGUAGES` order.
const AFFINITY: [[f64; 9]; 8] = [
    [2.0, 5.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.5, 3.0],
    [4.0, 0.5, 0.0, 0.0, 0.0, 0.0, 3.0, 4.0, 0.0],
    [0.5, 0.0, 0.0, 5.0, 3.0, 2.0, 0.0, 0.0, 0.0],
    [0.0, 2.0, 5.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5],
    [3.0, 0.5, 0.5, 0.0, 0.5, 3.0, 0.0, 0.0, 0.0],
    [6.0, 0.5, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0],
    [0.5, 1.0, 0.5, 5.0, 0.5, 0.0, 0.0, 0.0, 0.0],
    [2.0, 0.5, 2.0, 1.0, 1.0, 2.0, 0.0, 0.0, 0.0],
];

const PREMIUM: [f64; 8] = [0.0, 0.15, 0.25, 0.05, 0.2, 0.35, -0.1, 0.3];

const EMBEDDING_DIM: usize = 16;

/// Size and seed of the generated corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiniSpec {
    pub n_questions: usize,
    pub n_users: usize,
    pub n_respondents: usize,
    pub n_jobs: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub seed: u64,
}

impl Default for MiniSpec {
    fn default() -> Self {
        MiniSpec {
            n_questions: 1000,
            n_users: 100,
            n_respondents: 300,
            n_jobs: 300,
            first_year: 2015,
            last_year: 2022,
            seed: 7,
        }
    }
}

struct User {
    id: u64,
    joined: i32,
    /// Topics by year of adoption.
    topics: Vec<(i32, usize)>,
    minute: f64,
    skill: f64,
    activity: f64,
}

impl User {
    fn knows(&self, topic: usize, year: i32) -> bool {
        self.topics.iter().any(|&(y, t)| t == topic && y <= year)
    }
}

fn neighbour<R: Rng>(topic: usize, rng: &mut R) -> usize {
    let n = TOPICS.len();
    if rng.random_bool(0.5) {
        (topic + 1) % n
    } else {
        (topic + n - 1) % n
    }
}

fn weighted<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).expect("positive weight")
}

fn language_weights(topic: usize, year: i32, first_year: i32) -> Vec<f64> {
    let mut w = AFFINITY[topic].to_vec();
    w[0] *= 1.0 + 0.3 * (year - first_year) as f64;
    w
}

fn topic_weights(year: i32, first_year: i32) -> Vec<f64> {
    let s = (year - first_year) as f64;
    let mut w = vec![1.0; TOPICS.len()];
    w[5] += 0.25 * s;
    w[3] = (1.5 - 0.15 * s).max(0.3);
    w
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % MINUTES_PER_DAY as f64;
    d.min(MINUTES_PER_DAY as f64 - d)
}

fn noisy_unit<R: Rng>(base: &[f64], sd: f64, rng: &mut R) -> Vec<f64> {
    let noise = Normal::new(0.0, sd).expect("sd > 0");
    let v: Vec<f64> = base.iter().map(|x| x + noise.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = io_create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes questions, answers, tags, survey, job ads, tag embeddings,
/// language shares, rules, exclusions and a ready-to-run `pipeline.conf`
/// into `dir`. Output depends only on `spec`.
pub fn write_mini_corpus(dir: &Path, spec: &MiniSpec) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (y0, y1) = (spec.first_year, spec.last_year);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut users: Vec<User> = (0..spec.n_users)
        .map(|i| {
            let home = rng.random_range(0..TOPICS.len());
            let joined = rng.random_range(y0..=y0 + 3);
            let mut topics = vec![(joined, home)];
            if rng.random_bool(0.6) {
                topics.push((joined, neighbour(home, &mut rng)));
            }
            User {
                id: 1000 + i as u64,
                joined,
                topics,
                minute: rng.random_range(0.0..MINUTES_PER_DAY as f64),
                skill: normal.sample(&mut rng),
                activity: LogNormal::new(0.0, 0.5).expect("valid").sample(&mut rng),
            }
        })
        .collect();
    for u in &mut users {
        for year in u.joined + 1..=y1 {
            if rng.random_bool(0.3) {
                let &(_, from) = u.topics.choose(&mut rng).expect("nonempty");
                let to = if rng.random_bool(0.8) { neighbour(from, &mut rng) } else { rng.random_range(0..TOPICS.len()) };
                if !u.knows(to, year) {
                    u.topics.push((year, to));
                }
            }
        }
    }

    let span = year_start(y1 + 1) - year_start(y0);
    let mut times: Vec<Timestamp> =
        (0..spec.n_questions).map(|_| year_start(y0) + rng.random_range(0..span - 30 * SECONDS_PER_DAY)).collect();
    times.sort_unstable();

    let mut tag_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut questions = Vec::new();
    let mut answers: Vec<(Timestamp, u64, u64, u64)> = Vec::new();
    let mut topic_experience: BTreeMap<(u64, usize), f64> = BTreeMap::new();
    let delay = Exp::new(1.0 / 3.0).expect("rate > 0");
    for (qi, &t) in times.iter().enumerate() {
        let year = year_of(t);
        let topic = weighted(&topic_weights(year, y0), &mut rng);
        let mut tags: BTreeSet<String> = BTreeSet::new();
        let k = rng.random_range(2..=3);
        for name in TOPICS[topic].1.choose_multiple(&mut rng, k) {
            tags.insert(name.to_string());
        }
        if rng.random_bool(0.1) {
            let other = rng.random_range(0..TOPICS.len());
            tags.insert(TOPICS[other].1.choose(&mut rng).expect("nonempty").to_string());
        }
        if rng.random_bool(0.85) {
            let lang = weighted(&language_weights(topic, year, y0), &mut rng);
            let variant = VARIANTS.iter().find(|v| v.2 == LANGUAGES[lang]).filter(|_| rng.random_bool(0.25));
            match variant {
                Some(v) => tags.insert(v.0.to_string()),
                None => tags.insert(LANGUAGES[lang].to_string()),
            };
        }
        for name in &tags {
            *tag_counts.entry(name.clone()).or_default() += 1;
        }
        let qid = qi as u64 + 1;
        questions.push(json!({"id": qid, "created_at": format_timestamp(t), "tags": tags}));

        let q_minute = ((t.rem_euclid(SECONDS_PER_DAY)) / 60) as f64;
        let n_answers = (1 + Poisson::new(1.5).expect("rate > 0").sample(&mut rng) as usize).min(5);
        let mut pool: Vec<(usize, f64)> = users
            .iter()
            .enumerate()
            .filter(|(_, u)| u.joined <= year)
            .map(|(i, u)| {
                let fit = if u.knows(topic, year) { 5.0 } else { 0.15 };
                let clock = (-circular_gap(u.minute, q_minute) / 240.0).exp();
                (i, u.activity * fit * (0.2 + clock))
            })
            .collect();
        let mut chosen = Vec::new();
        while chosen.len() < n_answers && !pool.is_empty() {
            let w: Vec<f64> = pool.iter().map(|p| p.1).collect();
            let pick = weighted(&w, &mut rng);
            chosen.push(pool.remove(pick).0);
        }
        let mut replies: Vec<(Timestamp, usize)> = chosen
            .into_iter()
            .map(|ui| {
                let u = &users[ui];
                let minute = (u.minute + 45.0 * normal.sample(&mut rng)).rem_euclid(MINUTES_PER_DAY as f64);
                let day = t - t.rem_euclid(SECONDS_PER_DAY);
                let mut at = day + (minute as i64) * 60 + rng.random_range(0..60);
                while at <= t {
                    at += SECONDS_PER_DAY;
                }
                at += (delay.sample(&mut rng) as i64) * SECONDS_PER_DAY / 4;
                (at, ui)
            })
            .collect();
        replies.sort_unstable();
        for (rank, &(at, ui)) in replies.iter().enumerate() {
            let u = &users[ui];
            let exp = topic_experience.entry((u.id, topic)).or_default();
            let rate = (0.4 + 0.4 * u.skill + 0.2 * (1.0 + *exp).ln() - 0.35 * rank as f64).exp();
            let votes = Poisson::new(rate).expect("rate > 0").sample(&mut rng) as u64;
            *exp += 1.0;
            answers.push((at, qid, u.id, votes));
        }
    }
    answers.sort_unstable();

    let path = dir.join("questions.jsonl");
    let mut w = io_create(&path)?;
    for q in &questions {
        writeln!(w, "{q}").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let path = dir.join("answers.jsonl");
    let mut w = io_create(&path)?;
    for (i, &(at, qid, uid, votes)) in answers.iter().enumerate() {
        let rec = json!({"id": 50_000 + i as u64, "question_id": qid, "user_id": uid, "created_at": format_timestamp(at), "votes": votes});
        writeln!(w, "{rec}").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("tags.csv");
    let mut w = csv::Writer::from_writer(io_create(&path)?);
    w.write_record(["tag", "count", "is_language", "canonical_language"])?;
    for (name, count) in &tag_counts {
        let variant = VARIANTS.iter().find(|v| v.0 == name);
        let is_language = LANGUAGES.contains(&name.as_str()) || variant.is_some();
        let canonical = variant.map(|v| v.1).unwrap_or("");
        w.write_record([name.as_str(), &count.to_string(), if is_language { "true" } else { "false" }, canonical])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let survey: Vec<SurveyRecord> = (0..spec.n_respondents)
        .map(|i| {
            let home = rng.random_range(0..TOPICS.len());
            let mut topics = vec![home];
            if rng.random_bool(0.5) {
                topics.push(neighbour(home, &mut rng));
            }
            let mut tags = BTreeSet::new();
            for &t in &topics {
                let k = rng.random_range(1..=3);
                for name in TOPICS[t].1.choose_multiple(&mut rng, k) {
                    tags.insert(name.to_string());
                }
                let lang = LANGUAGES[weighted(&AFFINITY[t], &mut rng)];
                let reported = match lang {
                    "python" if rng.random_bool(0.3) => "py",
                    "javascript" if rng.random_bool(0.3) => "js",
                    "c++" if rng.random_bool(0.3) => "cpp",
                    other => other,
                };
                tags.insert(reported.to_string());
            }
            let premium: f64 = topics.iter().map(|&t| PREMIUM[t]).sum::<f64>() / topics.len() as f64;
            SurveyRecord {
                respondent_id: i as u64 + 1,
                salary: (60_000.0 * (premium + 0.25 * normal.sample(&mut rng)).exp()).round(),
                tags: tags.into_iter().collect(),
            }
        })
        .collect();
    write_survey(&dir.join("survey.csv"), &survey)?;
    write_text(&dir.join("survey_aliases.csv"), "alias,key\npy,python\njs,javascript\ncpp,c++\n")?;

    let centres: Vec<Vec<f64>> =
        (0..TOPICS.len()).map(|_| noisy_unit(&vec![0.0; EMBEDDING_DIM], 1.0, &mut rng)).collect();
    let path = dir.join("tag_embeddings.jsonl");
    let mut w = io_create(&path)?;
    for (t, (_, names)) in TOPICS.iter().enumerate() {
        for name in names {
            let rec = json!({"tag": name, "embedding": noisy_unit(&centres[t], 0.08, &mut rng)});
            writeln!(w, "{rec}").map_err(|e| Error::io(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let jobs: Vec<JobAd> = (0..spec.n_jobs)
        .map(|i| {
            let home = rng.random_range(0..TOPICS.len());
            let n = rng.random_range(3..=6);
            let mut used = Vec::new();
            let requirements = (0..n)
                .map(|r| {
                    let topic = match rng.random::<f64>() {
                        x if x < 0.6 => home,
                        x if x < 0.9 => neighbour(home, &mut rng),
                        _ => rng.random_range(0..TOPICS.len()),
                    };
                    used.push(topic);
                    Requirement {
                        text: format!("{} skill {r}", TOPICS[topic].0),
                        embedding: noisy_unit(&centres[topic], 0.1, &mut rng),
                    }
                })
                .collect();
            let premium: f64 = used.iter().map(|&t| PREMIUM[t]).sum::<f64>() / used.len() as f64;
            let salary = (70_000.0 * (premium + 0.05 * n as f64 + 0.2 * normal.sample(&mut rng)).exp()).round();
            JobAd {
                job_id: i as u64 + 1,
                year: rng.random_range(y1 - 1..=y1 + 1) as u16,
                salary: rng.random_bool(0.9).then_some(salary),
                requirements,
            }
        })
        .collect();
    write_job_ads(&dir.join("jobs.jsonl"), &jobs)?;

    let mut shares = Vec::new();
    for year in y0..=y1 {
        let mut w: Vec<f64> = (0..LANGUAGES.len())
            .map(|l| (0..TOPICS.len()).map(|t| language_weights(t, year, y0)[l]).sum())
            .collect();
        w.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed ^ year as u64));
        let total: f64 = w.iter().sum();
        for (l, x) in LANGUAGES.iter().zip(&w) {
            shares.push(LanguageShare {
                language: l.to_string(),
                year,
                external_share: (0.9 * x / total * 1e6).round() / 1e6,
            });
        }
    }
    write_language_shares(&dir.join("language_shares.csv"), &shares)?;
    write_text(&dir.join("language_rules.csv"), "tag,canonical_language\necmascript-6,javascript\ngolang,go\n")?;
    write_text(&dir.join("language_exclusions.txt"), "# markup, not a programming language\nhtml\n")?;
    write_text(&dir.join("pipeline.conf"), &mini_config(spec))
}

fn mini_config(spec: &MiniSpec) -> String {
    format!(
        "# Pipeline settings for the bundled mini corpus.\n\
         corpus_dir = .\n\
         survey = survey.csv\n\
         survey_aliases = survey_aliases.csv\n\
         job_ads = jobs.jsonl\n\
         tag_embeddings = tag_embeddings.jsonl\n\
         language_shares = language_shares.csv\n\
         language_rules = language_rules.csv\n\
         language_exclusions = language_exclusions.txt\n\
         seed = {seed}\n\
         min_uses = 20\n\
         min_answers = 10\n\
         credible_draws = 200\n\
         value_start = {vs}\n\
         value_end = {ve}\n\
         k_respondents = 25\n\
         match_strategy = mean_tag\n\
         user_threshold = 3\n\
         dominance_a = python\n\
         dominance_b = javascript\n",
        seed = spec.seed,
        vs = format_timestamp(year_start(spec.last_year - 3)),
        ve = format_timestamp(year_start(spec.last_year + 1)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, read_job_ads, read_survey, CorpusPaths};

    #[test]
    fn mini_corpus_loads_and_is_reproducible() {
        let spec = MiniSpec {
            n_questions: 200,
            n_users: 30,
            n_respondents: 40,
            n_jobs: 20,
            ..MiniSpec::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_mini_corpus(a.path(), &spec).unwrap();
        write_mini_corpus(b.path(), &spec).unwrap();
        for f in ["questions.jsonl", "answers.jsonl", "tags.csv", "survey.csv", "jobs.jsonl", "pipeline.conf"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let corpus = load_corpus(&CorpusPaths::in_dir(a.path())).unwrap();
        assert_eq!(corpus.questions().len(), 200);
        assert!(corpus.answers().iter().all(|ans| ans.created_at > corpus.question(ans.question_id).unwrap().created_at));
        assert_eq!(read_survey(&a.path().join("survey.csv")).unwrap().len(), 40);
        assert_eq!(read_job_ads(&a.path().join("jobs.jsonl")).unwrap().len(), 20);
    }
}
