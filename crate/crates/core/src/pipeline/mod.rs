//! End-to-end stage runner. Every stage reads its upstream artifacts from
//! disk, writes into its own directory under the output root and finishes
//! with a manifest.

mod config;
mod figures;
mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use serde::{Deserialize, Serialize};

pub use config::PipelineConfig;
pub use figures::{emit_figure_data, FIGURES};
pub use manifest::{file_sha256, hash_outputs, Manifest, MANIFEST_FILE};

use crate::activity::{
    experience_matrix, task_share_change, write_experience_csv, write_shares_csv, TaskIndex, TimeWindow,
};
use crate::blockmodel::{description_length, infer_partition, read_partition_json, write_partition_json, BipartiteGraph, SbmConfig};
use crate::corpus::{
    filter_tags, load_corpus, load_snapshot, read_exclusions, read_job_ads, read_language_rules, read_language_shares,
    read_survey, read_tag_embeddings, read_task_labels, save_snapshot, select_active_users, split_users, year_of,
    Corpus, CorpusPaths, TagId, UserId,
};
use crate::econometrics::{
    binned_probability, build_entry_rows, build_salary_rows, build_voting_rows, fit_2sls, fit_ols_fe,
    minute_task_counts, placebo_split, user_mean_minutes, write_bins_csv, write_results_json, EntryYear, Frame,
    ModelReport, RegressionSpec, VotingPanel,
};
use crate::jobmatch::{
    job_task_vector, masked_prediction_table, read_job_vectors_csv, write_job_vectors_csv, MaskConfig, MatchStrategy,
    TaskEmbeddings,
};
use crate::relatedness::{
    cooccurrence_counts, pmi_credible_intervals, pmi_matrix, read_relatedness_csv, write_network_csv,
    write_relatedness_csv, Provenance, RelatednessMatrix,
};
use crate::structure::{
    language_footprint, nodf, pairwise_dominance, reweight_languages, shares_for_year, task_language_matrix,
    write_dominance_csv, write_footprint_csv, write_nodf_json, write_task_language_csv, write_top_language_series_csv,
    TaskLanguageMatrix,
};
use crate::taxonomy::{canonicalize_languages, prune_taxonomy, tag_overrepresentation, TagProjection, TaskTaxonomy};
use crate::valuation::{
    impute_user_value, match_respondents, prepare_survey, read_task_values_csv, tag_keys, task_values,
    write_task_values_csv, write_user_values_csv, TaskValueVector,
};
use crate::{Error, Result};

/// Relatedness is estimated on this user sample.
pub const RELATEDNESS_SAMPLE: &str = "S1";
/// Behavioural analyses run on this user sample.
pub const ANALYSIS_SAMPLE: &str = "S2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Sbm,
    Taxonomy,
    Vectors,
    Relatedness,
    Value,
    Jobs,
    Econ,
    Structure,
}

impl Stage {
    /// Dependency order.
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Sbm,
        Stage::Taxonomy,
        Stage::Vectors,
        Stage::Relatedness,
        Stage::Value,
        Stage::Jobs,
        Stage::Econ,
        Stage::Structure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Sbm => "sbm",
            Stage::Taxonomy => "taxonomy",
            Stage::Vectors => "vectors",
            Stage::Relatedness => "relatedness",
            Stage::Value => "value",
            Stage::Jobs => "jobs",
            Stage::Econ => "econ",
            Stage::Structure => "structure",
        }
    }

    pub fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Sbm => &[Stage::Ingest],
            Stage::Taxonomy => &[Stage::Ingest, Stage::Sbm],
            Stage::Vectors | Stage::Relatedness | Stage::Value | Stage::Structure => &[Stage::Ingest, Stage::Taxonomy],
            Stage::Jobs => &[Stage::Ingest, Stage::Taxonomy, Stage::Relatedness],
            Stage::Econ => &[Stage::Ingest, Stage::Taxonomy, Stage::Relatedness, Stage::Value, Stage::Jobs],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Users and tags selected at ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub general_tags: Vec<String>,
    pub language_tags: Vec<String>,
    pub active_users: Vec<UserId>,
    pub s1: Vec<UserId>,
    pub s2: Vec<UserId>,
}

/// Runs stages against one output root.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub out: PathBuf,
}

struct StageRun {
    dir: PathBuf,
    inputs: BTreeMap<String, String>,
}

impl StageRun {
    fn input(&mut self, label: &str, path: &Path) -> Result<()> {
        self.inputs.insert(label.to_string(), file_sha256(path)?);
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_aliases(path: &Path) -> Result<BTreeMap<String, String>> {
    #[derive(Deserialize)]
    struct Row {
        alias: String,
        key: String,
    }
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize::<Row>()
        .map(|r| r.map(|r| (r.alias, r.key)).map_err(Error::from))
        .collect()
}

fn corpus_years(corpus: &Corpus) -> Result<(i32, i32)> {
    let (a, b) = corpus
        .time_range()
        .ok_or_else(|| Error::EmptyInput("corpus has no posts".into()))?;
    Ok((year_of(a), year_of(b)))
}

/// Fits a model, turning estimation failures into a report with a warning.
fn fit_report(name: &str, frame: &Frame, spec: &RegressionSpec) -> ModelReport {
    let fit = if spec.instruments.is_empty() { fit_ols_fe(frame, spec) } else { fit_2sls(frame, spec) };
    match fit {
        Ok(r) => r.report(name),
        Err(e) => {
            warn!("model `{name}` not estimated: {e}");
            ModelReport {
                name: name.to_string(),
                coefficients: Vec::new(),
                n: frame.len(),
                r2: 0.0,
                within_r2: None,
                first_stage_f: None,
                warnings: vec![format!("not estimated: {e}")],
            }
        }
    }
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out: &Path) -> Self {
        Pipeline {
            config,
            out: out.to_path_buf(),
        }
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    fn require(&self, stage: Stage) -> Result<PathBuf> {
        let dir = self.stage_dir(stage);
        let manifest = dir.join(MANIFEST_FILE);
        if manifest.is_file() {
            Ok(dir)
        } else {
            Err(Error::MissingArtifact {
                stage: stage.name().to_string(),
                path: manifest,
            })
        }
    }

    /// Runs every stage in dependency order.
    pub fn run_all(&self) -> Result<Vec<Manifest>> {
        Stage::ALL.into_iter().map(|s| self.run(s)).collect()
    }

    pub fn run(&self, stage: Stage) -> Result<Manifest> {
        let mut run = StageRun {
            dir: self.stage_dir(stage),
            inputs: BTreeMap::new(),
        };
        for &dep in stage.dependencies() {
            let dir = self.require(dep)?;
            run.input(&format!("{dep}/{MANIFEST_FILE}"), &dir.join(MANIFEST_FILE))?;
        }
        if run.dir.exists() {
            std::fs::remove_dir_all(&run.dir).map_err(|e| Error::io(&run.dir, e))?;
        }
        std::fs::create_dir_all(&run.dir).map_err(|e| Error::io(&run.dir, e))?;
        info!("stage {stage}");
        match stage {
            Stage::Ingest => self.ingest(&mut run)?,
            Stage::Sbm => self.sbm(&mut run)?,
            Stage::Taxonomy => self.taxonomy(&mut run)?,
            Stage::Vectors => self.vectors(&mut run)?,
            Stage::Relatedness => self.relatedness(&mut run)?,
            Stage::Value => self.value(&mut run)?,
            Stage::Jobs => self.jobs(&mut run)?,
            Stage::Econ => self.econ(&mut run)?,
            Stage::Structure => self.structure(&mut run)?,
        }
        let manifest = Manifest {
            stage: stage.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config.hash(),
            seed: self.config.seed,
            stage_seed: self.config.stage_seed(stage.name()),
            inputs: run.inputs,
            outputs: hash_outputs(&run.dir)?,
        };
        manifest.write(&run.dir)?;
        Ok(manifest)
    }

    fn corpus(&self) -> Result<Corpus> {
        Ok(load_snapshot(&self.stage_dir(Stage::Ingest).join("corpus"))?.0)
    }

    fn samples(&self) -> Result<Samples> {
        read_json(&self.stage_dir(Stage::Ingest).join("samples.json"))
    }

    fn graph(&self, corpus: &Corpus, samples: &Samples) -> Result<BipartiteGraph> {
        let ids = samples
            .general_tags
            .iter()
            .map(|n| corpus.tag_id(n).ok_or_else(|| Error::Integrity(format!("selected tag `{n}` missing"))))
            .collect::<Result<BTreeSet<TagId>>>()?;
        Ok(BipartiteGraph::from_corpus(corpus, &ids))
    }

    fn taxonomy_of(&self, corpus: &Corpus) -> Result<TaskTaxonomy> {
        TaskTaxonomy::read_json(&self.stage_dir(Stage::Taxonomy).join("taxonomy.json"), corpus)
    }

    fn languages(&self, run: &mut StageRun, corpus: &Corpus) -> Result<BTreeMap<TagId, String>> {
        let rules = match self.config.path("language_rules") {
            Some(p) => {
                run.input("language_rules", &p)?;
                read_language_rules(&p)?
            }
            None => Vec::new(),
        };
        canonicalize_languages(corpus.tags(), &rules)
    }

    fn relatedness_of(&self, n_tasks: usize) -> Result<RelatednessMatrix> {
        read_relatedness_csv(
            &self.stage_dir(Stage::Relatedness).join("relatedness.csv"),
            n_tasks,
            Provenance {
                sample: RELATEDNESS_SAMPLE.into(),
                window: "all".into(),
            },
        )
    }

    fn ingest(&self, run: &mut StageRun) -> Result<()> {
        let dir = self.config.require_path("corpus_dir")?;
        let paths = CorpusPaths::in_dir(&dir);
        for (label, p) in [("questions", &paths.questions), ("answers", &paths.answers), ("tags", &paths.tags)] {
            run.input(&format!("corpus_dir/{label}"), p)?;
        }
        let corpus = load_corpus(&paths)?;
        save_snapshot(&corpus, &run.path("corpus"))?;
        let selection = filter_tags(&corpus, self.config.min_uses)?;
        let active = select_active_users(&corpus, self.config.min_answers)?;
        let (s1, s2) = split_users(&active, self.config.stage_seed("ingest"))?;
        let names = |ids: &BTreeSet<TagId>| ids.iter().map(|&t| corpus.tag(t).name.clone()).collect();
        let samples = Samples {
            general_tags: names(&selection.general),
            language_tags: names(&selection.languages),
            active_users: active.into_iter().collect(),
            s1: s1.into_iter().collect(),
            s2: s2.into_iter().collect(),
        };
        info!(
            "{} questions, {} answers, {} general tags, {} active users",
            corpus.questions().len(),
            corpus.answers().len(),
            samples.general_tags.len(),
            samples.active_users.len()
        );
        write_json(&run.path("samples.json"), &samples)
    }

    fn sbm(&self, run: &mut StageRun) -> Result<()> {
        let corpus = self.corpus()?;
        let graph = self.graph(&corpus, &self.samples()?)?;
        let cfg = SbmConfig {
            seed: self.config.stage_seed("sbm"),
            max_sweeps: self.config.sbm_sweeps,
            b_min: self.config.sbm_b_min,
            b_max: self.config.sbm_b_max,
            degree_corrected: self.config.sbm_degree_corrected,
            ..SbmConfig::default()
        };
        let partition = infer_partition(&graph, &cfg);
        let dl = description_length(&graph, &partition, cfg.degree_corrected)?;
        info!("{} tag blocks, DL {} nats", partition.n_blocks(crate::blockmodel::Side::Tag), dl.total);
        write_partition_json(&run.path("partition.json"), &graph, &partition, dl.total)
    }

    fn taxonomy(&self, run: &mut StageRun) -> Result<()> {
        let corpus = self.corpus()?;
        let graph = self.graph(&corpus, &self.samples()?)?;
        let (partition, _) = read_partition_json(&self.stage_dir(Stage::Sbm).join("partition.json"), &graph)?;
        let projection = TagProjection::from_graph(&graph);
        let o = tag_overrepresentation(&projection, &partition)?;
        let usage: Vec<u64> = projection.tag_ids.iter().map(|&t| corpus.tag(t).usage_count).collect();
        let mut taxonomy = prune_taxonomy(
            &projection.tag_ids,
            &partition,
            &o,
            &usage,
            self.config.drop_frac,
            self.config.min_size,
        )?;
        if let Some(p) = self.config.path("task_labels") {
            run.input("task_labels", &p)?;
            taxonomy.attach_labels(&read_task_labels(&p)?)?;
        }
        info!("{} tasks", taxonomy.n_tasks());
        taxonomy.write_json(&run.path("taxonomy.json"), &corpus)?;
        let languages = self.languages(run, &corpus)?;
        let mut w = csv::Writer::from_path(run.path("languages.csv"))?;
        w.write_record(["tag", "language"])?;
        for (t, l) in &languages {
            w.write_record([corpus.tag(*t).name.as_str(), l.as_str()])?;
        }
        w.flush().map_err(|e| Error::io(run.path("languages.csv"), e))
    }

    fn vectors(&self, run: &mut StageRun) -> Result<()> {
        let corpus = self.corpus()?;
        let samples = self.samples()?;
        let index = TaskIndex::new(&corpus, &self.taxonomy_of(&corpus)?)?;
        let (y0, y1) = corpus_years(&corpus)?;
        let users: BTreeSet<UserId> = samples.active_users.iter().copied().collect();
        let mut matrices = BTreeMap::new();
        for t in y0..=y1 + 1 {
            matrices.insert(t, experience_matrix(&corpus, &index, &users, TimeWindow::experience(t))?);
        }
        write_experience_csv(&run.path("experience.csv"), &matrices)?;
        let a = self.config.share_year_a.unwrap_or(y0);
        let b = self.config.share_year_b.unwrap_or(y1);
        write_shares_csv(&run.path("shares.csv"), &task_share_change(&corpus, &index, a, b)?)
    }

    fn relatedness(&self, run: &mut StageRun) -> Result<()> {
        let corpus = self.corpus()?;
        let samples = self.samples()?;
        let index = TaskIndex::new(&corpus, &self.taxonomy_of(&corpus)?)?;
        let (start, end) = corpus.time_range().expect("nonempty corpus");
        let s1: BTreeSet<UserId> = samples.s1.iter().copied().collect();
        let t = experience_matrix(&corpus, &index, &s1, TimeWindow::new(start, end + 1)?)?;
        let c = cooccurrence_counts(&t)?;
        let mut r = pmi_matrix(&c)?;
        r.provenance = Provenance {
            sample: RELATEDNESS_SAMPLE.into(),
            window: "all".into(),
        };
        if self.config.credible_draws > 0 {
            r.intervals = Some(pmi_credible_intervals(
                &c,
                self.config.credible_draws,
                self.config.prior_alpha,
                self.config.stage_seed("relatedness"),
            )?);
        }
        write_relatedness_csv(&run.path("relatedness.csv"), &r)?;
        write_network_csv(&run.path("network.csv"), &r)
    }

    fn value(&self, run: &mut StageRun) -> Result<()> {
        let corpus = self.corpus()?;
        let samples = self.samples()?;
        let index = TaskIndex::new(&corpus, &self.taxonomy_of(&corpus)?)?;
        let survey_path = self.config.require_path("survey")?;
        run.input("survey", &survey_path)?;
        let aliases = match self.config.path("survey_aliases") {
            Some(p) => {
                run.input("survey_aliases", &p)?;
                read_aliases(&p)?
            }
            None => BTreeMap::new(),
        };
        let languages = self.languages(run, &corpus)?;
        let keys = tag_keys(&corpus, &languages);
        let respondents = prepare_survey(&read_survey(&survey_path)?, &corpus, &keys, &aliases);
        let window = TimeWindow::new(self.config.value_start, self.config.value_end)?;
        let mut user_values = BTreeMap::new();
        let mut rows = BTreeMap::new();
        for &u in &samples.active_users {
            let user_keys: BTreeSet<String> = corpus
                .answers_by(u)
                .filter(|a| window.contains(a.created_at))
                .flat_map(|a| corpus.answer_tags(a).iter().map(|&t| keys[t as usize].clone()))
                .collect();
            let m = match_respondents(u, &user_keys, &respondents, self.config.k_respondents)?;
            if m.matches.is_empty() {
                continue;
            }
            let v = impute_user_value(&m)?;
            user_values.insert(u, v);
            rows.insert(u, (v, m.matches.len()));
        }
        info!("{} of {} users valued", user_values.len(), samples.active_users.len());
        let users: BTreeSet<UserId> = samples.active_users.iter().copied().collect();
        let x = experience_matrix(&corpus, &index, &users, window)?;
        let label = format!("{}..{}", self.config.value_start, self.config.value_end);
        write_user_values_csv(&run.path("user_values.csv"), &rows)?;
        write_task_values_csv(&run.path("task_values.csv"), &task_values(&user_values, &x, &label))
    }

    fn embeddings(&self, run: &mut StageRun, corpus: &Corpus, taxonomy: &TaskTaxonomy) -> Result<TaskEmbeddings> {
        match self.config.match_strategy {
            MatchStrategy::Label => {
                if !taxonomy.has_labels() {
                    return Err(Error::Config("label matching needs `task_labels`".into()));
                }
                TaskEmbeddings::from_labels(taxonomy)
            }
            strategy => {
                let p = self.config.require_path("tag_embeddings")?;
                run.input("tag_embeddings", &p)?;
                TaskEmbeddings::from_tags(taxonomy, corpus, &read_tag_embeddings(&p)?, strategy)
            }
        }
    }

    fn jobs(&self, run: &mut StageRun) -> Result<()> {
        let corpus = self.corpus()?;
        let taxonomy = self.taxonomy_of(&corpus)?;
        let path = self.config.require_path("job_ads")?;
        run.input("job_ads", &path)?;
        let ads = read_job_ads(&path)?;
        let embeddings = self.embeddings(run, &corpus, &taxonomy)?;
        let vectors = ads
            .iter()
            .map(|j| job_task_vector(j, &embeddings, self.config.cosine))
            .collect::<Result<Vec<_>>>()?;
        write_job_vectors_csv(&run.path("job_vectors.csv"), &vectors)?;
        let r = self.relatedness_of(taxonomy.n_tasks())?;
        let table = masked_prediction_table(
            &vectors,
            &r,
            &MaskConfig {
                mask_frac: self.config.mask_frac,
                bins: self.config.bins,
                min_tasks: self.config.mask_min_tasks,
                seed: self.config.stage_seed("jobs"),
            },
        )?;
        info!(
            "{} jobs masked, {} cells masked, {} isolated",
            table.n_jobs, table.n_masked, table.n_isolated
        );
        write_bins_csv(&run.path("mask_table.csv"), &table.bins)
    }

    fn econ(&self, run: &mut StageRun) -> Result<()> {
        let corpus = self.corpus()?;
        let samples = self.samples()?;
        let taxonomy = self.taxonomy_of(&corpus)?;
        let index = TaskIndex::new(&corpus, &taxonomy)?;
        let r = self.relatedness_of(taxonomy.n_tasks())?;
        let values: TaskValueVector = read_task_values_csv(&self.stage_dir(Stage::Value).join("task_values.csv"), "value")?;
        let (y0, y1) = corpus_years(&corpus)?;
        let mut models = Vec::new();

        let everyone: BTreeSet<UserId> = corpus.user_ids().collect();
        let minutes = user_mean_minutes(&corpus);
        let mut panels = BTreeMap::new();
        for y in y0..=y1 {
            let experience = experience_matrix(&corpus, &index, &everyone, TimeWindow::experience(y))?;
            let m = minute_task_counts(&minutes, &experience, self.config.kernel_width)?;
            panels.insert(y, VotingPanel { experience, minutes: m });
        }
        let voting = build_voting_rows(&corpus, &index, &panels)?;
        voting.write_csv(&run.path("voting_rows.csv"))?;
        let controls = ["log_experience", "log_answers", "log_total_votes"];
        for outcome in ["top_answer", "log_votes"] {
            for fe in ["year", "task_year"] {
                let ols = RegressionSpec::new(outcome, &controls).fixed_effects(&[fe]);
                models.push(fit_report(&format!("voting_ols_{outcome}_{fe}"), &voting, &ols));
                let iv = RegressionSpec::new(outcome, &controls)
                    .fixed_effects(&["qminute", fe])
                    .cluster("group_task_qminute")
                    .instrument(&["log_experience"], &["instrument"]);
                models.push(fit_report(&format!("voting_iv_{outcome}_{fe}"), &voting, &iv));
            }
        }
        let (within, after) = placebo_split(&voting)?;
        for (name, rows) in [("within_24h", &within), ("after_24h", &after)] {
            let iv = RegressionSpec::new("top_answer", &controls)
                .fixed_effects(&["qminute", "task_year"])
                .cluster("group_task_qminute")
                .instrument(&["log_experience"], &["instrument"]);
            models.push(fit_report(&format!("placebo_iv_top_answer_{name}"), rows, &iv));
        }

        let s2: BTreeSet<UserId> = samples.s2.iter().copied().collect();
        let mut years = Vec::new();
        for y in y0 + 2..=y1 {
            years.push(EntryYear {
                year: y,
                prior: experience_matrix(&corpus, &index, &s2, TimeWindow::experience(y))?,
                current: experience_matrix(&corpus, &index, &s2, TimeWindow::calendar_year(y))?,
            });
        }
        let entry = build_entry_rows(&years, &r, &values, ANALYSIS_SAMPLE)?;
        info!(
            "{} entry rows ({} unvalued, {} isolated dropped)",
            entry.frame.len(),
            entry.dropped_unvalued,
            entry.dropped_isolated
        );
        entry.frame.write_csv(&run.path("entry_rows.csv"))?;
        write_bins_csv(
            &run.path("entry_bins.csv"),
            &binned_probability(&entry.frame, "density", "entered", self.config.bins)?,
        )?;
        let spec = RegressionSpec::new("entered", &["log_value", "density"]).cluster("user");
        models.push(fit_report("entry_pooled", &entry.frame, &spec));
        models.push(fit_report("entry_user_fe", &entry.frame, &spec.clone().fixed_effects(&["user"])));

        let ads = read_job_ads(&self.config.require_path("job_ads")?)?;
        let jobs = read_job_vectors_csv(&self.stage_dir(Stage::Jobs).join("job_vectors.csv"), &ads, taxonomy.n_tasks())?;
        let salary = build_salary_rows(&jobs, &r, &values)?;
        salary.frame.write_csv(&run.path("salary_rows.csv"))?;
        let spec = RegressionSpec::new("log_salary", &["vbar", "rbar", "log_n_tasks"]).fixed_effects(&["year"]);
        models.push(fit_report("salary", &salary.frame, &spec));
        write_results_json(&run.path("results.json"), &models)
    }

    fn structure(&self, run: &mut StageRun) -> Result<()> {
        let corpus = self.corpus()?;
        let samples = self.samples()?;
        let index = TaskIndex::new(&corpus, &self.taxonomy_of(&corpus)?)?;
        let selected: BTreeSet<&str> = samples.language_tags.iter().map(String::as_str).collect();
        let languages: BTreeMap<TagId, String> = self
            .languages(run, &corpus)?
            .into_iter()
            .filter(|(t, _)| selected.contains(corpus.tag(*t).name.as_str()))
            .collect();
        let excluded: BTreeSet<String> = match self.config.path("language_exclusions") {
            Some(p) => {
                run.input("language_exclusions", &p)?;
                read_exclusions(&p)?.into_iter().collect()
            }
            None => BTreeSet::new(),
        };
        let shares = match self.config.path("language_shares").filter(|_| self.config.reweight) {
            Some(p) => {
                run.input("language_shares", &p)?;
                Some(read_language_shares(&p)?)
            }
            None => None,
        };
        let (y0, y1) = corpus_years(&corpus)?;
        let mut per_year: BTreeMap<i32, TaskLanguageMatrix> = BTreeMap::new();
        for y in y0..=y1 {
            let mut u = task_language_matrix(
                &corpus,
                &index,
                &languages,
                &excluded,
                TimeWindow::calendar_year(y),
                &y.to_string(),
                self.config.user_threshold,
            )?;
            if let Some(s) = &shares {
                u = reweight_languages(&u, &shares_for_year(s, y))?;
            }
            per_year.insert(y, u);
        }
        let year = self.config.structure_year.unwrap_or(y1);
        let main = per_year
            .get(&year)
            .ok_or_else(|| Error::Config(format!("structure_year {year} outside the corpus")))?;
        write_task_language_csv(&run.path("task_language.csv"), main)?;
        let score = nodf(&main.incidence);
        info!("NODF {} in {year}", score.total);
        write_nodf_json(&run.path("nodf.json"), main, &score)?;
        write_top_language_series_csv(&run.path("top_language_series.csv"), &per_year)?;
        let lang = &self.config.footprint_language;
        let mut footprints = Vec::new();
        for (&y, u) in &per_year {
            match language_footprint(u, lang, self.config.footprint_k) {
                Ok(f) => footprints.push((y, lang.clone(), f)),
                Err(Error::UnknownLanguage(_)) => warn!("footprint language `{lang}` absent in {y}"),
                Err(e) => return Err(e),
            }
        }
        write_footprint_csv(&run.path("footprint.csv"), &footprints)?;
        match &self.config.dominance {
            Some((a, b)) => write_dominance_csv(&run.path("dominance.csv"), a, b, &pairwise_dominance(&per_year, a, b)?),
            None => write_dominance_csv(&run.path("dominance.csv"), "", "", &[]),
        }
    }
}
