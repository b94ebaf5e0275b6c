//! The immutable question/answer/tag store and the population filters.

mod auxiliary;
mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Datelike, NaiveDate, Timelike, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub use auxiliary::{
    read_exclusions, read_job_ads, read_language_rules, read_language_shares, read_survey,
    read_tag_embeddings, read_task_labels, write_job_ads, write_language_shares, write_survey,
    write_task_labels, JobAd, LanguageShare, Requirement, SurveyRecord, TagEmbedding, TaskLabel,
};
pub use io::{load_corpus, load_snapshot, save_snapshot, CorpusPaths, IndexManifest};

pub type TagId = u32;
pub type QuestionId = u64;
pub type AnswerId = u64;
pub type UserId = u64;

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const MINUTES_PER_DAY: u32 = 1440;

#[derive(Debug, Clone, PartialEq)]
pub struct Tag {
    pub tag_id: TagId,
    pub name: String,
    pub usage_count: u64,
    pub is_language: bool,
    pub canonical_language: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Question {
    pub question_id: QuestionId,
    pub created_at: Timestamp,
    /// Sorted, deduplicated.
    pub tag_ids: Vec<TagId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub answer_id: AnswerId,
    pub question_id: QuestionId,
    pub user_id: UserId,
    pub created_at: Timestamp,
    pub votes: u64,
}

/// Questions, answers and tags with the derived lookup indices.
///
/// Tables are sorted by id and never mutated after construction. Answers
/// inherit the tags of their question through [`Corpus::answer_tags`].
#[derive(Debug, Clone)]
pub struct Corpus {
    tags: Vec<Tag>,
    questions: Vec<Question>,
    answers: Vec<Answer>,
    tag_by_name: HashMap<String, TagId>,
    question_pos: HashMap<QuestionId, usize>,
    answers_by_question: Vec<Vec<usize>>,
    answers_by_user: BTreeMap<UserId, Vec<usize>>,
}

impl Corpus {
    /// Builds a corpus and checks referential integrity.
    ///
    /// Tag ids must be `0..tags.len()` in table order. Questions and answers
    /// are sorted by id; duplicate ids are rejected.
    pub fn new(tags: Vec<Tag>, mut questions: Vec<Question>, mut answers: Vec<Answer>) -> Result<Self> {
        let mut tag_by_name = HashMap::with_capacity(tags.len());
        for (i, tag) in tags.iter().enumerate() {
            if tag.tag_id as usize != i {
                return Err(Error::Integrity(format!(
                    "tag `{}` has id {} at position {i}",
                    tag.name, tag.tag_id
                )));
            }
            if tag.canonical_language.is_some() && !tag.is_language {
                return Err(Error::Integrity(format!(
                    "tag `{}` has a canonical language but is not a language tag",
                    tag.name
                )));
            }
            if tag_by_name.insert(tag.name.clone(), tag.tag_id).is_some() {
                return Err(Error::Integrity(format!("duplicate tag `{}`", tag.name)));
            }
        }

        questions.sort_by_key(|q| q.question_id);
        for w in questions.windows(2) {
            if w[0].question_id == w[1].question_id {
                return Err(Error::Integrity(format!("duplicate question id {}", w[0].question_id)));
            }
        }
        for q in &mut questions {
            q.tag_ids.sort_unstable();
            q.tag_ids.dedup();
            if q.tag_ids.is_empty() {
                return Err(Error::Integrity(format!("question {} has no tags", q.question_id)));
            }
            if let Some(&bad) = q.tag_ids.iter().find(|&&t| t as usize >= tags.len()) {
                return Err(Error::Integrity(format!(
                    "question {} references unknown tag id {bad}",
                    q.question_id
                )));
            }
        }
        let question_pos: HashMap<_, _> = questions
            .iter()
            .enumerate()
            .map(|(i, q)| (q.question_id, i))
            .collect();

        answers.sort_by_key(|a| a.answer_id);
        for w in answers.windows(2) {
            if w[0].answer_id == w[1].answer_id {
                return Err(Error::Integrity(format!("duplicate answer id {}", w[0].answer_id)));
            }
        }
        let dangling: Vec<_> = answers
            .iter()
            .filter(|a| !question_pos.contains_key(&a.question_id))
            .map(|a| a.answer_id)
            .collect();
        if !dangling.is_empty() {
            return Err(Error::Integrity(format!(
                "answers reference absent questions: {dangling:?}"
            )));
        }

        let mut answers_by_question = vec![Vec::new(); questions.len()];
        let mut answers_by_user: BTreeMap<UserId, Vec<usize>> = BTreeMap::new();
        for (i, a) in answers.iter().enumerate() {
            answers_by_question[question_pos[&a.question_id]].push(i);
            answers_by_user.entry(a.user_id).or_default().push(i);
        }

        Ok(Corpus {
            tags,
            questions,
            answers,
            tag_by_name,
            question_pos,
            answers_by_question,
            answers_by_user,
        })
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn answers(&self) -> &[Answer] {
        &self.answers
    }

    pub fn tag(&self, id: TagId) -> &Tag {
        &self.tags[id as usize]
    }

    pub fn tag_id(&self, name: &str) -> Option<TagId> {
        self.tag_by_name.get(name).copied()
    }

    pub fn question(&self, id: QuestionId) -> Option<&Question> {
        self.question_pos.get(&id).map(|&i| &self.questions[i])
    }

    /// Dense index of a question (position in the sorted table).
    pub fn question_index(&self, id: QuestionId) -> Option<usize> {
        self.question_pos.get(&id).copied()
    }

    /// Answers to the question at dense index `qi`, in answer-id order.
    pub fn answers_to(&self, qi: usize) -> impl Iterator<Item = &Answer> {
        self.answers_by_question[qi].iter().map(move |&i| &self.answers[i])
    }

    /// Answers posted by `user`, in answer-id order.
    pub fn answers_by(&self, user: UserId) -> impl Iterator<Item = &Answer> {
        self.answers_by_user
            .get(&user)
            .into_iter()
            .flatten()
            .map(move |&i| &self.answers[i])
    }

    /// Tags inherited by an answer from its question.
    pub fn answer_tags(&self, answer: &Answer) -> &[TagId] {
        &self.questions[self.question_pos[&answer.question_id]].tag_ids
    }

    /// All users with at least one answer, ascending.
    pub fn user_ids(&self) -> impl Iterator<Item = UserId> + '_ {
        self.answers_by_user.keys().copied()
    }

    pub fn answer_count(&self, user: UserId) -> usize {
        self.answers_by_user.get(&user).map_or(0, Vec::len)
    }

    /// Earliest and latest post timestamps, if any posts exist.
    pub fn time_range(&self) -> Option<(Timestamp, Timestamp)> {
        let q = self.questions.iter().map(|q| q.created_at);
        let a = self.answers.iter().map(|a| a.created_at);
        let all: Vec<_> = q.chain(a).collect();
        Some((*all.iter().min()?, *all.iter().max()?))
    }
}

/// Tags passing the usage threshold, split by the language flag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagSelection {
    pub general: BTreeSet<TagId>,
    pub languages: BTreeSet<TagId>,
}

impl TagSelection {
    pub fn all(&self) -> BTreeSet<TagId> {
        self.general.union(&self.languages).copied().collect()
    }
}

/// Tags whose curated usage count is at least `min_uses`.
pub fn filter_tags(corpus: &Corpus, min_uses: u64) -> Result<TagSelection> {
    if min_uses == 0 {
        return Err(Error::InvalidParameter("min_uses must be at least 1".into()));
    }
    let mut sel = TagSelection::default();
    for tag in corpus.tags().iter().filter(|t| t.usage_count >= min_uses) {
        if tag.is_language {
            sel.languages.insert(tag.tag_id);
        } else {
            sel.general.insert(tag.tag_id);
        }
    }
    Ok(sel)
}

/// Users with at least `min_answers` answer posts in total.
pub fn select_active_users(corpus: &Corpus, min_answers: usize) -> Result<BTreeSet<UserId>> {
    if min_answers == 0 {
        return Err(Error::InvalidParameter("min_answers must be at least 1".into()));
    }
    Ok(corpus
        .answers_by_user
        .iter()
        .filter(|(_, a)| a.len() >= min_answers)
        .map(|(&u, _)| u)
        .collect())
}

/// Random halving of a user population; the first sample gets the extra
/// member when the population is odd.
pub fn split_users(users: &BTreeSet<UserId>, seed: u64) -> Result<(BTreeSet<UserId>, BTreeSet<UserId>)> {
    if users.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "need at least 2 users to split, got {}",
            users.len()
        )));
    }
    let mut order: Vec<UserId> = users.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let half = order.len().div_ceil(2);
    let s2 = order.split_off(half);
    Ok((order.into_iter().collect(), s2.into_iter().collect()))
}

pub fn parse_timestamp(s: &str) -> std::result::Result<Timestamp, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc).timestamp())
        .map_err(|e| format!("bad RFC3339 timestamp `{s}`: {e}"))
}

pub fn format_timestamp(ts: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .expect("timestamp in range")
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn year_of(ts: Timestamp) -> i32 {
    DateTime::<Utc>::from_timestamp(ts, 0).expect("timestamp in range").year()
}

/// Minute of the UTC day, `0..1440`.
pub fn day_minute(ts: Timestamp) -> u32 {
    let d = DateTime::<Utc>::from_timestamp(ts, 0).expect("timestamp in range");
    d.hour() * 60 + d.minute()
}

/// Midnight UTC on January 1 of `year`.
pub fn year_start(year: i32) -> Timestamp {
    date_start(year, 1, 1)
}

pub fn date_start(year: i32, month: u32, day: u32) -> Timestamp {
    NaiveDate::from_ymd_opt(year, month, day)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .unwrap()
        .and_utc()
        .timestamp()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tag(id: u32, name: &str, count: u64) -> Tag {
        Tag {
            tag_id: id,
            name: name.into(),
            usage_count: count,
            is_language: false,
            canonical_language: None,
        }
    }

    fn fixture() -> Corpus {
        let tags = vec![tag(0, "a", 999), tag(1, "b", 1000), tag(2, "c", 5000)];
        let questions = (1..=3)
            .map(|i| Question {
                question_id: i,
                created_at: year_start(2016) + i as i64,
                tag_ids: vec![(i % 3) as u32],
            })
            .collect();
        let answers = (1..=5)
            .map(|i| Answer {
                answer_id: i,
                question_id: 1 + i % 3,
                user_id: i % 2,
                created_at: year_start(2017),
                votes: i,
            })
            .collect();
        Corpus::new(tags, questions, answers).unwrap()
    }

    #[test]
    fn counts_echo_input() {
        let c = fixture();
        assert_eq!((c.questions().len(), c.answers().len()), (3, 5));
        assert_eq!(c.answers_to(0).count() + c.answers_to(1).count() + c.answers_to(2).count(), 5);
    }

    #[test]
    fn dangling_answer_is_an_integrity_error() {
        let tags = vec![tag(0, "a", 1)];
        let q = vec![Question { question_id: 1, created_at: 0, tag_ids: vec![0] }];
        let a = vec![
            Answer { answer_id: 1, question_id: 1, user_id: 1, created_at: 0, votes: 0 },
            Answer { answer_id: 2, question_id: 9, user_id: 1, created_at: 0, votes: 0 },
        ];
        let err = Corpus::new(tags, q, a).unwrap_err();
        assert!(matches!(err, Error::Integrity(ref m) if m.contains("[2]")), "{err}");
    }

    #[test]
    fn duplicate_answer_ids_rejected() {
        let tags = vec![tag(0, "a", 1)];
        let q = vec![Question { question_id: 1, created_at: 0, tag_ids: vec![0] }];
        let a = vec![
            Answer { answer_id: 1, question_id: 1, user_id: 1, created_at: 0, votes: 0 },
            Answer { answer_id: 1, question_id: 1, user_id: 2, created_at: 0, votes: 0 },
        ];
        assert!(Corpus::new(tags, q, a).is_err());
    }

    #[test]
    fn filter_tags_boundaries() {
        let c = fixture();
        let sel = filter_tags(&c, 1000).unwrap();
        assert!(!sel.general.contains(&0));
        assert!(sel.general.contains(&1));
        assert!(sel.general.contains(&2));
        let brute: BTreeSet<_> = c.tags().iter().filter(|t| t.usage_count >= 1000).map(|t| t.tag_id).collect();
        assert_eq!(sel.all(), brute);
    }

    #[test]
    fn active_user_boundaries() {
        let tags = vec![tag(0, "a", 1)];
        let q = vec![Question { question_id: 1, created_at: 0, tag_ids: vec![0] }];
        let mut a = Vec::new();
        for i in 0..19u64 {
            let user = if i < 9 { 7 } else { 8 };
            a.push(Answer { answer_id: i, question_id: 1, user_id: user, created_at: 0, votes: 0 });
        }
        let c = Corpus::new(tags, q, a).unwrap();
        let active = select_active_users(&c, 10).unwrap();
        assert_eq!(active.into_iter().collect::<Vec<_>>(), vec![8]);
    }

    #[test]
    fn split_parity_and_determinism() {
        let ten: BTreeSet<u64> = (0..10).collect();
        let (a, b) = split_users(&ten, 7).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        assert!(a.is_disjoint(&b));
        assert_eq!(split_users(&ten, 7).unwrap(), (a, b));
        let eleven: BTreeSet<u64> = (0..11).collect();
        let (a, b) = split_users(&eleven, 3).unwrap();
        assert_eq!(a.len().abs_diff(b.len()), 1);
        assert!(split_users(&BTreeSet::new(), 1).is_err());
    }

    #[test]
    fn time_helpers() {
        let ts = parse_timestamp("2016-03-01T10:30:00Z").unwrap();
        assert_eq!(year_of(ts), 2016);
        assert_eq!(day_minute(ts), 630);
        assert_eq!(format_timestamp(ts), "2016-03-01T10:30:00Z");
        assert_eq!(parse_timestamp("2016-03-01T12:30:00+02:00").unwrap(), ts);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_is_partition(n in 2usize..200, seed in any::<u64>()) {
                let users: BTreeSet<u64> = (0..n as u64).map(|u| u * 3 + 1).collect();
                let (a, b) = split_users(&users, seed).unwrap();
                prop_assert!(a.is_disjoint(&b));
                let union: BTreeSet<u64> = a.union(&b).copied().collect();
                prop_assert_eq!(union, users);
                prop_assert!(a.len().abs_diff(b.len()) <= 1);
            }

            #[test]
            fn thresholds_are_monotone(counts in proptest::collection::vec(0u64..50, 1..30), lo in 1u64..25, extra in 0u64..25) {
                let tags: Vec<Tag> = counts.iter().enumerate().map(|(i, &c)| tag(i as u32, &format!("t{i}"), c)).collect();
                let q = vec![Question { question_id: 1, created_at: 0, tag_ids: vec![0] }];
                let c = Corpus::new(tags, q, vec![]).unwrap();
                let loose = filter_tags(&c, lo).unwrap().all();
                let strict = filter_tags(&c, lo + extra).unwrap().all();
                prop_assert!(strict.is_subset(&loose));
            }
        }
    }
}

pub(crate) use io::{create as io_create, open as io_open};
