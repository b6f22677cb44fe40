//! Stage orchestration over files: ingest, tag, subsets, train, generate,
//! filter, site.
//!
//! Every stage declares its input and output paths. A stage report with the
//! sha256 of each, plus a hash of the settings the stage reads, lands in
//! `stage-reports/{stage}.json`; a stage whose inputs, settings and outputs
//! still match its report is skipped.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{self, Article, CorpusError, CorpusStats, CorpusStore, InputFormat};
use crate::decoder::{self, DecodeError, DecodeParams, Generator};
use crate::io::{sha256_dir, sha256_file, sha256_hex, write_atomic};
use crate::lm::{self, CheckpointError, LanguageModel, LmConfig, LmError};
use crate::novelty::{self, CorpusIndex, NoveltyError, ScanMode, DEFAULT_THRESHOLD};
use crate::site::{self, SiteConfig, SiteError};
use crate::slug::slugify;
use crate::tagger::{self, Idf, TaggerError, TopicSpec, TopicSubset};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage}: missing {path}; run `{run_first}` first")]
    Prerequisite {
        stage: Stage,
        path: PathBuf,
        run_first: Stage,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage {stage}: {message}")]
    Invalid { stage: Stage, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Model(#[from] LmError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Novelty(#[from] NoveltyError),
    #[error(transparent)]
    Site(#[from] SiteError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Threads(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// 3 for a missing prerequisite, 2 for bad input or config, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Prerequisite { .. } => 3,
            PipelineError::Config(_)
            | PipelineError::Invalid { .. }
            | PipelineError::Json(_)
            | PipelineError::Tagger(TaggerError::InvalidTopic { .. } | TaggerError::NoTopics | TaggerError::Parse(_))
            | PipelineError::Site(SiteError::Config(_) | SiteError::SlugCollision { .. } | SiteError::Article { .. })
            | PipelineError::Decode(DecodeError::InvalidParams(_))
            | PipelineError::Model(LmError::InvalidConfig(_) | LmError::CorpusTooShort { .. })
            | PipelineError::Novelty(NoveltyError::InvalidThreshold(_)) => 2,
            PipelineError::Corpus(e) if !matches!(e, CorpusError::Io(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Tag,
    Subsets,
    Train,
    Generate,
    Filter,
    Site,
    All,
}

impl Stage {
    /// Every concrete stage in pipeline order.
    pub const ORDER: [Stage; 7] = [
        Stage::Ingest,
        Stage::Tag,
        Stage::Subsets,
        Stage::Train,
        Stage::Generate,
        Stage::Filter,
        Stage::Site,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Tag => "tag",
            Stage::Subsets => "subsets",
            Stage::Train => "train",
            Stage::Generate => "generate",
            Stage::Filter => "filter",
            Stage::Site => "site",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ORDER
            .iter()
            .chain([Stage::All].iter())
            .find(|st| st.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

fn default_format() -> InputFormat {
    InputFormat::Jsonl
}

fn default_work() -> PathBuf {
    PathBuf::from("work")
}

/// Input locations and optional overrides for artifact directories. Relative
/// paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    #[serde(default = "default_format")]
    pub corpus_format: InputFormat,
    /// Topic table; the bundled three rows when absent.
    #[serde(default)]
    pub topics: Option<PathBuf>,
    #[serde(default = "default_work")]
    pub work: PathBuf,
    #[serde(default)]
    pub checkpoints: Option<PathBuf>,
    #[serde(default)]
    pub pools: Option<PathBuf>,
    #[serde(default)]
    pub reports: Option<PathBuf>,
    #[serde(default)]
    pub kept: Option<PathBuf>,
    #[serde(default)]
    pub manifests: Option<PathBuf>,
    #[serde(default)]
    pub published: Option<PathBuf>,
    #[serde(default)]
    pub site: Option<PathBuf>,
    #[serde(default)]
    pub site_config: Option<PathBuf>,
    /// Built curation UI, served statically when present.
    #[serde(default)]
    pub ui_assets: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSettings {
    pub min_count: u64,
    pub max_size: usize,
}

impl Default for VocabSettings {
    fn default() -> Self {
        VocabSettings {
            min_count: corpus::vocab::DEFAULT_MIN_COUNT,
            max_size: corpus::vocab::DEFAULT_MAX_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoveltySettings {
    pub threshold: f64,
    pub exact: bool,
}

impl Default for NoveltySettings {
    fn default() -> Self {
        NoveltySettings {
            threshold: DEFAULT_THRESHOLD,
            exact: false,
        }
    }
}

fn default_tag_k() -> usize {
    tagger::DEFAULT_K
}

fn default_steps() -> u64 {
    2000
}

fn default_pool_size() -> usize {
    50
}

/// `pipeline.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default)]
    pub vocab: VocabSettings,
    #[serde(default = "default_tag_k")]
    pub tag_k: usize,
    /// Fields overriding [`LmConfig::default`] for every topic.
    #[serde(default)]
    pub model: serde_json::Map<String, Value>,
    /// Further overrides keyed by topic name.
    #[serde(default)]
    pub topic_models: BTreeMap<String, serde_json::Map<String, Value>>,
    #[serde(default = "default_steps")]
    pub train_steps: u64,
    #[serde(default)]
    pub decode: DecodeParams,
    /// Samples generated per topic.
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default)]
    pub novelty: NoveltySettings,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let t = self.novelty.threshold;
        if !(t > 0.0 && t < 1.0) {
            return bad(format!("novelty.threshold must lie in (0, 1), got {t}"));
        }
        if self.tag_k < 1 {
            return bad("tag_k must be at least 1".into());
        }
        if self.vocab.min_count < 1 {
            return bad("vocab.min_count must be at least 1".into());
        }
        if self.pool_size < 1 {
            return bad("pool_size must be at least 1".into());
        }
        self.decode
            .validate()
            .map_err(|e| PipelineError::Config(format!("decode: {e}")))?;
        for topic in self.topic_models.keys() {
            self.model_config(topic, 0, 1)?;
        }
        self.model_config("", 0, 1)?;
        Ok(())
    }

    /// Defaults, then `model`, then the topic's overrides. The seed defaults
    /// to `seed + topic_index` and the vocabulary size always comes from the
    /// topic's vocabulary.
    pub fn model_config(&self, topic: &str, topic_index: usize, vocab_size: usize) -> Result<LmConfig, PipelineError> {
        let mut merged = serde_json::to_value(LmConfig {
            seed: self.seed.wrapping_add(topic_index as u64),
            ..LmConfig::default()
        })?;
        let target = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in self.model.iter().chain(self.topic_models.get(topic).into_iter().flatten()) {
            if !target.contains_key(k) {
                return Err(PipelineError::Config(format!("unknown model field {k:?}")));
            }
            target.insert(k.clone(), v.clone());
        }
        let mut cfg: LmConfig =
            serde_json::from_value(merged).map_err(|e| PipelineError::Config(format!("model: {e}")))?;
        cfg.vocab_size = vocab_size;
        cfg.validate()
            .map_err(|e| PipelineError::Config(format!("model for {topic:?}: {e}")))?;
        Ok(cfg)
    }
}

/// Resolved artifact locations.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// Directory relative paths in the config resolve against; also the root
    /// that report paths are written relative to.
    pub base: PathBuf,
    pub corpus_input: PathBuf,
    pub topics: Option<PathBuf>,
    pub work: PathBuf,
    pub corpus: PathBuf,
    pub stats: PathBuf,
    pub tagged: PathBuf,
    pub idf: PathBuf,
    pub subsets: PathBuf,
    pub checkpoints: PathBuf,
    pub logs: PathBuf,
    pub pools: PathBuf,
    pub reports: PathBuf,
    pub kept: PathBuf,
    pub manifests: PathBuf,
    pub published: PathBuf,
    pub site: PathBuf,
    pub site_config: Option<PathBuf>,
    pub ui_assets: Option<PathBuf>,
    pub stage_reports: PathBuf,
}

impl Layout {
    pub fn new(paths: &Paths, base: &Path) -> Self {
        let abs = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let work = abs(&paths.work);
        let or_work = |p: &Option<PathBuf>, name: &str| p.as_deref().map(abs).unwrap_or_else(|| work.join(name));
        Layout {
            base: base.to_path_buf(),
            corpus_input: abs(&paths.corpus),
            topics: paths.topics.as_deref().map(abs),
            corpus: work.join("corpus.jsonl"),
            stats: work.join("stats.json"),
            tagged: work.join("tagged.jsonl"),
            idf: work.join("idf.json"),
            subsets: work.join("subsets.json"),
            checkpoints: or_work(&paths.checkpoints, "checkpoints"),
            logs: work.join("logs"),
            pools: or_work(&paths.pools, "pools"),
            reports: or_work(&paths.reports, "reports"),
            kept: or_work(&paths.kept, "kept"),
            manifests: or_work(&paths.manifests, "manifests"),
            published: or_work(&paths.published, "published"),
            site: or_work(&paths.site, "site"),
            site_config: paths.site_config.as_deref().map(abs),
            ui_assets: paths.ui_assets.as_deref().map(abs),
            stage_reports: work.join("stage-reports"),
            work,
        }
    }

    pub fn checkpoint(&self, slug: &str) -> PathBuf {
        self.checkpoints.join(slug)
    }

    pub fn pool(&self, slug: &str) -> PathBuf {
        self.pools.join(format!("{slug}.jsonl"))
    }

    pub fn kept_pool(&self, slug: &str) -> PathBuf {
        self.kept.join(format!("{slug}.jsonl"))
    }

    pub fn novelty_report(&self, slug: &str) -> PathBuf {
        self.reports.join(format!("novelty-{slug}.jsonl"))
    }

    pub fn train_log(&self, slug: &str) -> PathBuf {
        self.logs.join(format!("train-{slug}.csv"))
    }

    /// `path` relative to `base` when it lies inside it.
    pub fn display(&self, path: &Path) -> String {
        path.strip_prefix(&self.base)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

/// One row of `subsets.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRecord {
    pub topic: String,
    pub slug: String,
    pub article_ids: Vec<String>,
    pub stats: CorpusStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    /// Hash of the settings the stage reads.
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub details: Value,
    /// Set when the stage was up to date and did not run.
    #[serde(skip)]
    pub skipped: bool,
}

struct Input {
    path: PathBuf,
    producer: Option<Stage>,
    required: bool,
}

impl Input {
    fn from(path: PathBuf, producer: Stage) -> Self {
        Input {
            path,
            producer: Some(producer),
            required: true,
        }
    }

    fn external(path: PathBuf) -> Self {
        Input {
            path,
            producer: None,
            required: true,
        }
    }

    fn optional(path: PathBuf) -> Self {
        Input {
            path,
            producer: None,
            required: false,
        }
    }
}

fn hash_path(path: &Path) -> std::io::Result<String> {
    if path.is_dir() {
        sha256_dir(path)
    } else if path.exists() {
        sha256_file(path)
    } else {
        Ok("absent".into())
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub layout: Layout,
    /// Progress lines on stderr.
    pub verbose: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, base: &Path) -> Result<Self, PipelineError> {
        config.validate()?;
        let layout = Layout::new(&config.paths, base);
        Ok(Pipeline {
            config,
            layout,
            verbose: false,
        })
    }

    /// Reads `pipeline.json`; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let config = PipelineConfig::from_json(&text)?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Pipeline::new(config, &base)
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Runs `stage` inside a pool of `threads` workers.
    pub fn run_with_threads(&self, stage: Stage, threads: usize) -> Result<Vec<StageReport>, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| PipelineError::Threads(e.to_string()))?;
        pool.install(|| self.run(stage))
    }

    /// Runs one stage, or every stage in order for [`Stage::All`].
    pub fn run(&self, stage: Stage) -> Result<Vec<StageReport>, PipelineError> {
        let stages: Vec<Stage> = if stage == Stage::All {
            Stage::ORDER.to_vec()
        } else {
            vec![stage]
        };
        let mut reports = Vec::new();
        for s in stages {
            let report = match s {
                Stage::Ingest => self.ingest(),
                Stage::Tag => self.tag(),
                Stage::Subsets => self.subsets(),
                Stage::Train => self.train(),
                Stage::Generate => self.generate(),
                Stage::Filter => self.filter(),
                Stage::Site => self.site(),
                Stage::All => unreachable!(),
            }?;
            self.log(format!(
                "{}: {}",
                s,
                if report.skipped { "up to date" } else { "done" }
            ));
            reports.push(report);
        }
        Ok(reports)
    }

    pub fn report_path(&self, stage: Stage) -> PathBuf {
        self.layout.stage_reports.join(format!("{stage}.json"))
    }

    fn hashes(&self, paths: impl IntoIterator<Item = PathBuf>) -> Result<BTreeMap<String, String>, PipelineError> {
        paths
            .into_iter()
            .map(|p| Ok((self.layout.display(&p), hash_path(&p)?)))
            .collect()
    }

    /// Checks inputs, skips when up to date, otherwise runs `body` and records
    /// the report.
    fn stage(
        &self,
        stage: Stage,
        inputs: Vec<Input>,
        outputs: Vec<PathBuf>,
        settings: Value,
        body: impl FnOnce() -> Result<Value, PipelineError>,
    ) -> Result<StageReport, PipelineError> {
        for input in &inputs {
            if input.required && !input.path.exists() {
                return Err(match input.producer {
                    Some(run_first) => PipelineError::Prerequisite {
                        stage,
                        path: input.path.clone(),
                        run_first,
                    },
                    None => PipelineError::Invalid {
                        stage,
                        message: format!("input {} does not exist", input.path.display()),
                    },
                });
            }
        }
        let config_hash = sha256_hex(serde_json::to_string(&settings)?.as_bytes());
        let input_hashes = self.hashes(inputs.into_iter().map(|i| i.path))?;
        let report_path = self.report_path(stage);
        if let Ok(text) = fs::read_to_string(&report_path) {
            if let Ok(mut old) = serde_json::from_str::<StageReport>(&text) {
                if old.config_hash == config_hash
                    && old.inputs == input_hashes
                    && outputs.iter().all(|p| p.exists())
                    && old.outputs == self.hashes(outputs.iter().cloned())?
                {
                    old.skipped = true;
                    return Ok(old);
                }
            }
        }
        let details = body()?;
        let report = StageReport {
            stage,
            config_hash,
            inputs: input_hashes,
            outputs: self.hashes(outputs)?,
            details,
            skipped: false,
        };
        write_atomic(&report_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
        Ok(report)
    }

    fn ingest(&self) -> Result<StageReport, PipelineError> {
        let l = &self.layout;
        let format = self.config.paths.corpus_format;
        self.stage(
            Stage::Ingest,
            vec![Input::external(l.corpus_input.clone())],
            vec![l.corpus.clone(), l.stats.clone()],
            json!({ "format": format }),
            || {
                let (store, stats) = corpus::ingest(&l.corpus_input, format)?;
                if store.is_empty() {
                    return Err(CorpusError::EmptyStore.into());
                }
                write_atomic(&l.corpus, store.to_jsonl().as_bytes())?;
                write_atomic(&l.stats, serde_json::to_string_pretty(&stats)?.as_bytes())?;
                Ok(serde_json::to_value(stats)?)
            },
        )
    }

    fn tag(&self) -> Result<StageReport, PipelineError> {
        let l = &self.layout;
        let k = self.config.tag_k;
        self.stage(
            Stage::Tag,
            vec![Input::from(l.corpus.clone(), Stage::Ingest)],
            vec![l.tagged.clone(), l.idf.clone()],
            json!({ "tag_k": k }),
            || {
                let (mut store, _) = corpus::ingest(&l.corpus, InputFormat::Jsonl)?;
                let idf = Idf::build(&store);
                tagger::tag_store(&mut store, &idf, k)?;
                write_atomic(&l.tagged, store.to_jsonl().as_bytes())?;
                write_atomic(&l.idf, serde_json::to_string(&idf)?.as_bytes())?;
                Ok(json!({ "articles": store.len(), "idf_terms": idf.weights.len() }))
            },
        )
    }

    fn topic_specs(&self) -> Result<Vec<TopicSpec>, PipelineError> {
        Ok(match &self.layout.topics {
            Some(p) => tagger::load_topics(p)?,
            None => tagger::default_topics(),
        })
    }

    /// Topic names and slugs from the topic table, rejecting slug clashes.
    pub fn topics(&self) -> Result<Vec<(String, String)>, PipelineError> {
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        let mut out = Vec::new();
        for spec in self.topic_specs()? {
            let slug = slugify(&spec.name);
            if let Some(prev) = seen.insert(slug.clone(), spec.name.clone()) {
                return Err(PipelineError::Config(format!(
                    "topics {prev:?} and {:?} share the slug {slug:?}",
                    spec.name
                )));
            }
            out.push((spec.name, slug));
        }
        Ok(out)
    }

    fn subsets(&self) -> Result<StageReport, PipelineError> {
        let l = &self.layout;
        let mut inputs = vec![Input::from(l.tagged.clone(), Stage::Tag)];
        if let Some(t) = &l.topics {
            inputs.push(Input::external(t.clone()));
        }
        let specs = self.topic_specs()?;
        self.topics()?;
        self.stage(
            Stage::Subsets,
            inputs,
            vec![l.subsets.clone()],
            json!({ "topics": specs }),
            || {
                let (mut store, _) = corpus::ingest(&l.tagged, InputFormat::Jsonl)?;
                let subsets = tagger::build_subsets(&mut store, &specs)?;
                let records: Vec<SubsetRecord> = subsets
                    .into_iter()
                    .map(|(TopicSubset { topic, article_ids }, stats)| SubsetRecord {
                        slug: slugify(&topic),
                        topic,
                        article_ids,
                        stats,
                    })
                    .collect();
                if let Some(empty) = records.iter().find(|r| r.article_ids.is_empty()) {
                    return Err(PipelineError::Invalid {
                        stage: Stage::Subsets,
                        message: format!("topic {:?} matched no articles", empty.topic),
                    });
                }
                write_atomic(&l.subsets, serde_json::to_string_pretty(&records)?.as_bytes())?;
                Ok(json!(records
                    .iter()
                    .map(|r| json!({ "topic": r.topic, "articles": r.article_ids.len(), "words": r.stats.word_count }))
                    .collect::<Vec<_>>()))
            },
        )
    }

    /// Rows of `subsets.json`; `stage` is the stage that needs them.
    pub fn load_subsets(&self, stage: Stage) -> Result<Vec<SubsetRecord>, PipelineError> {
        let path = &self.layout.subsets;
        if !path.exists() {
            return Err(PipelineError::Prerequisite {
                stage,
                path: path.clone(),
                run_first: Stage::Subsets,
            });
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    fn subset_store(&self, record: &SubsetRecord) -> Result<CorpusStore, PipelineError> {
        let (tagged, _) = corpus::ingest(&self.layout.tagged, InputFormat::Jsonl)?;
        let mut store = CorpusStore::new();
        for id in &record.article_ids {
            let a: &Article = tagged.get(id).ok_or_else(|| PipelineError::Invalid {
                stage: Stage::Subsets,
                message: format!("subset {:?} names unknown article {id:?}", record.topic),
            })?;
            store.insert(a.clone())?;
        }
        Ok(store)
    }

    fn train(&self) -> Result<StageReport, PipelineError> {
        let l = &self.layout;
        let subsets = self.load_subsets(Stage::Train)?;
        let outputs = subsets.iter().map(|r| l.checkpoint(&r.slug)).collect();
        let settings = json!({
            "vocab": self.config.vocab,
            "model": self.config.model,
            "topic_models": self.config.topic_models,
            "steps": self.config.train_steps,
            "seed": self.config.seed,
        });
        self.stage(
            Stage::Train,
            vec![
                Input::from(l.tagged.clone(), Stage::Tag),
                Input::from(l.subsets.clone(), Stage::Subsets),
            ],
            outputs,
            settings,
            || {
                let mut details = Vec::new();
                for (i, record) in subsets.iter().enumerate() {
                    let store = self.subset_store(record)?;
                    let vocab = corpus::build_vocab(&store, self.config.vocab.min_count, self.config.vocab.max_size)?;
                    let tokens = store.encode(&vocab, record.article_ids.iter().map(String::as_str));
                    let cfg = self.config.model_config(&record.topic, i, vocab.len())?;
                    let params = cfg.parameter_count();
                    let mut model = LanguageModel::<f32>::new(cfg)?;
                    self.log(format!(
                        "train {}: {} tokens, vocab {}, {} parameters",
                        record.topic,
                        tokens.len(),
                        vocab.len(),
                        params
                    ));
                    let every = (self.config.train_steps / 10).max(1);
                    let log = lm::train(&mut model, &tokens, self.config.train_steps, |r| {
                        if (r.step + 1) % every == 0 {
                            self.log(format!("  step {} loss {:.4}", r.step + 1, r.loss));
                        }
                    })?;
                    lm::save_checkpoint(&model, &vocab, &l.checkpoint(&record.slug))?;
                    write_atomic(&l.train_log(&record.slug), log.to_csv().as_bytes())?;
                    details.push(json!({
                        "topic": record.topic,
                        "tokens": tokens.len(),
                        "vocab": vocab.len(),
                        "parameters": params,
                        "final_loss": log.records.last().map(|r| r.loss),
                    }));
                }
                Ok(Value::Array(details))
            },
        )
    }

    fn generate(&self) -> Result<StageReport, PipelineError> {
        let l = &self.layout;
        let subsets = self.load_subsets(Stage::Generate)?;
        let inputs = subsets
            .iter()
            .map(|r| Input::from(l.checkpoint(&r.slug), Stage::Train))
            .collect();
        let outputs = subsets.iter().map(|r| l.pool(&r.slug)).collect();
        let params = DecodeParams {
            seed: self.config.seed,
            ..self.config.decode.clone()
        };
        let settings = json!({ "decode": params, "pool_size": self.config.pool_size });
        self.stage(Stage::Generate, inputs, outputs, settings, || {
            let mut details = Vec::new();
            for record in &subsets {
                let dir = l.checkpoint(&record.slug);
                let ck = lm::load_checkpoint(&dir)?;
                let generator = Generator {
                    model: &ck.model,
                    vocab: &ck.vocab,
                    topic: record.topic.clone(),
                    checkpoint: l.display(&dir),
                };
                let pool = generator.generate_pool(&params, self.config.pool_size)?;
                decoder::write_pool(&l.pool(&record.slug), &pool)?;
                details.push(json!({ "topic": record.topic, "samples": pool.len() }));
            }
            Ok(Value::Array(details))
        })
    }

    fn filter(&self) -> Result<StageReport, PipelineError> {
        let l = &self.layout;
        let subsets = self.load_subsets(Stage::Filter)?;
        let mut inputs = vec![Input::from(l.tagged.clone(), Stage::Tag)];
        inputs.extend(subsets.iter().map(|r| Input::from(l.pool(&r.slug), Stage::Generate)));
        let outputs = subsets
            .iter()
            .flat_map(|r| [l.kept_pool(&r.slug), l.novelty_report(&r.slug)])
            .collect();
        let mode = if self.config.novelty.exact {
            ScanMode::Exact
        } else {
            ScanMode::Pruned
        };
        let threshold = self.config.novelty.threshold;
        self.stage(Stage::Filter, inputs, outputs, json!(self.config.novelty), || {
            let mut details = Vec::new();
            for record in &subsets {
                let store = self.subset_store(record)?;
                let index = CorpusIndex::build(&store);
                let pool = decoder::read_pool(&l.pool(&record.slug))?;
                let outcome = novelty::filter_pool(&pool, &index, threshold, mode)?;
                novelty::write_report(&l.novelty_report(&record.slug), &outcome)?;
                novelty::write_kept(&l.kept_pool(&record.slug), &outcome.kept)?;
                let summary = outcome.summary();
                self.log(format!(
                    "filter {}: kept {} of {}",
                    record.topic,
                    summary.kept,
                    summary.kept + summary.rejected
                ));
                details.push(json!({ "topic": record.topic, "summary": summary }));
            }
            Ok(Value::Array(details))
        })
    }

    pub fn site_config(&self) -> Result<SiteConfig, PipelineError> {
        let path = self
            .layout
            .site_config
            .as_ref()
            .ok_or_else(|| PipelineError::Config("paths.site_config is required for the site stage".into()))?;
        let cfg = SiteConfig::load(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn site(&self) -> Result<StageReport, PipelineError> {
        let l = &self.layout;
        let cfg = self.site_config()?;
        let mut inputs = vec![Input::optional(l.published.clone())];
        if let Some(p) = &l.site_config {
            inputs.push(Input::external(p.clone()));
        }
        if let Some(p) = &cfg.author.portrait {
            inputs.push(Input::external(p.clone()));
        }
        self.stage(Stage::Site, inputs, vec![l.site.clone()], json!({}), || {
            let articles = site::load_published(&l.published)?;
            let summary = site::build_site(&articles, &cfg, &l.site)?;
            Ok(json!({ "articles": articles.len(), "files": summary.files.len() }))
        })
    }
}
