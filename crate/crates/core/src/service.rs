//! Local JSON-over-HTTP service for the manual assembly step: browse kept
//! sentences, edit draft manifests with live rule checks, publish and rebuild
//! the site. No authentication; it binds to localhost.
//!
//! Drafts live as JSON files in the manifests directory, one per draft, and
//! carry a revision counter. A `PUT` must name the revision it was based on.
//! Edits that break a hard rule are refused outright; the remaining rules
//! only block publishing.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::assembler::{
    render_article, validate_manifest, ArticleManifest, EditVerdict, ImageCredit, ManifestEntry, SentencePool,
    Status, Violation,
};
use crate::io::write_atomic;
use crate::novelty::{read_kept, NoveltyReport, Sentence, Verdict};
use crate::pipeline::{Layout, Pipeline, PipelineError};
use crate::site::{build_site, load_published, publish, save_published, PublishedArticle, SiteConfig};
use crate::slug::slugify;
use crate::tagger::Idf;

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("draft file {path}: {message}")]
    Draft { path: String, message: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A manifest plus its revision and the verdict computed for that revision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftRecord {
    #[serde(flatten)]
    pub manifest: ArticleManifest,
    pub revision: u64,
    #[serde(default)]
    pub verdict: EditVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicInfo {
    pub name: String,
    pub slug: String,
    /// Kept sentences available, `None` before the filter stage has run.
    pub kept: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolItem {
    pub id: String,
    #[serde(flatten)]
    pub sentence: Sentence,
    pub closest_source: Option<String>,
    pub distance: Option<usize>,
    pub dissimilarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolPage {
    pub topic: String,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<PoolItem>,
}

/// Body of `POST /api/drafts`.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct NewDraft {
    #[serde(default)]
    pub id: Option<String>,
    pub topic: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub excerpt: Vec<ManifestEntry>,
    #[serde(default)]
    pub body: Vec<ManifestEntry>,
    #[serde(default)]
    pub image: Option<ImageCredit>,
}

/// Body of `PUT /api/drafts/{id}`: the full editable state plus the revision
/// it was based on.
#[derive(Debug, Clone, Deserialize)]
pub struct DraftUpdate {
    pub revision: u64,
    pub topic: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub excerpt: Vec<ManifestEntry>,
    #[serde(default)]
    pub body: Vec<ManifestEntry>,
    #[serde(default)]
    pub image: Option<ImageCredit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishOutcome {
    pub article: PublishedArticle,
    pub draft: DraftRecord,
    /// Files of the rebuilt site, absent without a site config.
    pub site_files: Option<Vec<String>>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub violations: Option<Vec<Violation>>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            violations: None,
        }
    }

    fn violations(status: StatusCode, code: &'static str, message: impl Into<String>, v: Vec<Violation>) -> Self {
        ApiError {
            violations: Some(v),
            ..ApiError::new(status, code, message)
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "code": self.code, "message": self.message });
        if let Some(v) = self.violations {
            body["violations"] = json!(v);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Inner {
    layout: Layout,
    topics: Vec<(String, String)>,
    site: Option<SiteConfig>,
    clock: Clock,
    drafts: Mutex<BTreeMap<String, DraftRecord>>,
    site_lock: tokio::sync::Mutex<()>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// State over a pipeline's artifact layout, with drafts loaded from disk.
    pub fn new(pipeline: &Pipeline, clock: Clock) -> Result<Self, ServiceError> {
        let layout = pipeline.layout.clone();
        let site = match &layout.site_config {
            Some(_) => Some(pipeline.site_config()?),
            None => None,
        };
        let topics = pipeline.topics()?;
        let drafts = load_drafts(&layout.manifests, |topic| pool_for(&layout, &topics, topic).ok())?;
        Ok(AppState(Arc::new(Inner {
            layout,
            topics,
            site,
            clock,
            drafts: Mutex::new(drafts),
            site_lock: tokio::sync::Mutex::new(()),
        })))
    }

    pub fn system_clock() -> Clock {
        Arc::new(Utc::now)
    }

    fn drafts(&self) -> MutexGuard<'_, BTreeMap<String, DraftRecord>> {
        self.0.drafts.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn topic(&self, key: &str) -> ApiResult<&(String, String)> {
        self.0
            .topics
            .iter()
            .find(|(name, slug)| name == key || slug == key)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_topic", format!("no topic {key:?}")))
    }

    fn pool(&self, topic: &str) -> ApiResult<SentencePool> {
        pool_for(&self.0.layout, &self.0.topics, topic)
    }

    fn persist(&self, record: &DraftRecord) -> ApiResult<()> {
        let path = self.0.layout.manifests.join(format!("{}.json", record.manifest.id));
        let json = serde_json::to_string_pretty(record).map_err(ApiError::internal)?;
        write_atomic(&path, json.as_bytes()).map_err(ApiError::internal)
    }
}

fn pool_for(layout: &Layout, topics: &[(String, String)], topic: &str) -> ApiResult<SentencePool> {
    let (name, slug) = topics
        .iter()
        .find(|(name, slug)| name == topic || slug == topic)
        .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_topic", format!("no topic {topic:?}")))?;
    let path = layout.kept_pool(slug);
    if !path.exists() {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "pool_missing",
            format!("no kept sentences for {name:?} yet; run the filter stage"),
        ));
    }
    Ok(SentencePool::new(read_kept(&path).map_err(ApiError::internal)?))
}

fn load_drafts(
    dir: &Path,
    pool: impl Fn(&str) -> Option<SentencePool>,
) -> Result<BTreeMap<String, DraftRecord>, ServiceError> {
    let mut out = BTreeMap::new();
    if !dir.exists() {
        return Ok(out);
    }
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for p in paths {
        let text = fs::read_to_string(&p)?;
        let bad = |message: String| ServiceError::Draft {
            path: p.display().to_string(),
            message,
        };
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        // a bare manifest written by hand starts at revision 1
        let record = if value.get("revision").is_some() {
            serde_json::from_value(value).map_err(|e| bad(e.to_string()))?
        } else {
            let manifest: ArticleManifest = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            let verdict = pool(&manifest.topic)
                .map(|p| validate_manifest(&manifest, &p))
                .unwrap_or_default();
            DraftRecord {
                manifest,
                revision: 1,
                verdict,
            }
        };
        out.insert(record.manifest.id.clone(), record);
    }
    Ok(out)
}

/// Refuses manifests that break a rule no draft may break.
fn check_hard(verdict: &EditVerdict) -> ApiResult<()> {
    if verdict.has_hard_violation() {
        let hard: Vec<Violation> = verdict
            .violations
            .iter()
            .filter(|v| crate::assembler::rule::is_hard(&v.rule))
            .cloned()
            .collect();
        return Err(ApiError::violations(
            StatusCode::UNPROCESSABLE_ENTITY,
            "rule_violation",
            "the edit breaks an assembly rule",
            hard,
        ));
    }
    Ok(())
}

fn not_found(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "unknown_draft", format!("no draft {id:?}"))
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/topics", get(list_topics))
        .route("/api/pools/{topic}", get(get_pool))
        .route("/api/drafts", get(list_drafts).post(create_draft))
        .route("/api/drafts/{id}", get(get_draft).put(update_draft))
        .route("/api/drafts/{id}/validate", post(validate_draft))
        .route("/api/drafts/{id}/publish", post(publish_draft))
        .route("/api/articles", get(list_articles));
    let api = match state.0.layout.ui_assets.as_ref().filter(|d| d.is_dir()) {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    api.with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(state: AppState, addr: SocketAddr) -> Result<(), ServiceError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })?;
    serve_on(state, listener).await
}

pub async fn serve_on(state: AppState, listener: TcpListener) -> Result<(), ServiceError> {
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn list_topics(State(s): State<AppState>) -> Json<Vec<TopicInfo>> {
    let topics = s
        .0
        .topics
        .iter()
        .map(|(name, slug)| TopicInfo {
            name: name.clone(),
            slug: slug.clone(),
            kept: read_kept(&s.0.layout.kept_pool(slug)).ok().map(|k| k.len()),
        })
        .collect();
    Json(topics)
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn get_pool(
    State(s): State<AppState>,
    UrlPath(topic): UrlPath<String>,
    Query(q): Query<PageQuery>,
) -> ApiResult<Json<PoolPage>> {
    let (name, slug) = s.topic(&topic)?.clone();
    let pool = s.pool(&name)?;
    let reports: HashMap<String, NoveltyReport> = fs::read_to_string(s.0.layout.novelty_report(&slug))
        .map(|text| {
            text.lines()
                .filter_map(|l| serde_json::from_str::<NoveltyReport>(l).ok())
                .filter(|r| r.verdict == Verdict::Keep)
                .map(|r| (r.sentence.id(), r))
                .collect()
        })
        .unwrap_or_default();
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(DEFAULT_PAGE).clamp(1, MAX_PAGE);
    let items = pool
        .sentences()
        .iter()
        .skip(offset)
        .take(limit)
        .map(|sentence| {
            let id = sentence.id();
            let r = reports.get(&id);
            PoolItem {
                closest_source: r.and_then(|r| r.closest_source.clone()),
                distance: r.and_then(|r| r.distance),
                dissimilarity: r.map(|r| r.dissimilarity),
                sentence: sentence.clone(),
                id,
            }
        })
        .collect();
    Ok(Json(PoolPage {
        topic: name,
        total: pool.len(),
        offset,
        limit,
        items,
    }))
}

async fn list_drafts(State(s): State<AppState>) -> Json<Vec<DraftRecord>> {
    Json(s.drafts().values().cloned().collect())
}

async fn create_draft(
    State(s): State<AppState>,
    body: Result<Json<NewDraft>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<DraftRecord>)> {
    let Json(new) = body?;
    let (topic, _) = s.topic(&new.topic).map_err(|mut e| {
        e.status = StatusCode::UNPROCESSABLE_ENTITY;
        e
    })?;
    let topic = topic.clone();
    let pool = s.pool(&topic)?;
    let mut drafts = s.drafts();
    let id = match new.id {
        Some(id) => {
            if id.is_empty() || slugify(&id) != id {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "invalid_id",
                    format!("draft id {id:?} must be lowercase letters, digits and dashes"),
                ));
            }
            if drafts.contains_key(&id) {
                return Err(ApiError::new(StatusCode::CONFLICT, "draft_exists", format!("draft {id:?} exists")));
            }
            id
        }
        None => {
            let base = Some(slugify(&new.title)).filter(|b| !b.is_empty() && !drafts.contains_key(b));
            base.unwrap_or_else(|| {
                (1..)
                    .map(|n| format!("draft-{n}"))
                    .find(|c| !drafts.contains_key(c))
                    .expect("some draft number is free")
            })
        }
    };
    let manifest = ArticleManifest {
        id: id.clone(),
        topic,
        title: new.title,
        excerpt: new.excerpt,
        body: new.body,
        image: new.image,
        status: Status::Draft,
    };
    let verdict = validate_manifest(&manifest, &pool);
    check_hard(&verdict)?;
    let record = DraftRecord {
        manifest,
        revision: 1,
        verdict,
    };
    s.persist(&record)?;
    drafts.insert(id, record.clone());
    Ok((StatusCode::CREATED, Json(record)))
}

async fn get_draft(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<DraftRecord>> {
    s.drafts().get(&id).cloned().map(Json).ok_or_else(|| not_found(&id))
}

async fn update_draft(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<DraftUpdate>, JsonRejection>,
) -> ApiResult<Json<DraftRecord>> {
    let Json(update) = body?;
    let topic = s
        .topic(&update.topic)
        .map_err(|mut e| {
            e.status = StatusCode::UNPROCESSABLE_ENTITY;
            e
        })?
        .0
        .clone();
    let pool = s.pool(&topic)?;
    let mut drafts = s.drafts();
    let current = drafts.get(&id).ok_or_else(|| not_found(&id))?;
    if current.manifest.status == Status::Published {
        return Err(ApiError::new(StatusCode::CONFLICT, "published", format!("draft {id:?} is published and frozen")));
    }
    if update.revision != current.revision {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "revision_conflict",
            format!(
                "draft {id:?} is at revision {}, the update was based on {}",
                current.revision, update.revision
            ),
        ));
    }
    let manifest = ArticleManifest {
        id: id.clone(),
        topic,
        title: update.title,
        excerpt: update.excerpt,
        body: update.body,
        image: update.image,
        status: Status::Draft,
    };
    let verdict = validate_manifest(&manifest, &pool);
    check_hard(&verdict)?;
    let record = DraftRecord {
        manifest,
        revision: current.revision + 1,
        verdict,
    };
    s.persist(&record)?;
    drafts.insert(id, record.clone());
    Ok(Json(record))
}

async fn validate_draft(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<DraftRecord>> {
    let topic = s.drafts().get(&id).ok_or_else(|| not_found(&id))?.manifest.topic.clone();
    let pool = s.pool(&topic)?;
    let mut drafts = s.drafts();
    let record = drafts.get_mut(&id).ok_or_else(|| not_found(&id))?;
    let verdict = validate_manifest(&record.manifest, &pool);
    let mut changed = verdict != record.verdict;
    if record.manifest.status != Status::Published {
        let status = if verdict.valid { Status::Validated } else { Status::Draft };
        if status != record.manifest.status {
            record.manifest.status = status;
            record.revision += 1;
            changed = true;
        }
    }
    record.verdict = verdict;
    let record = record.clone();
    if changed {
        s.persist(&record)?;
    }
    Ok(Json(record))
}

async fn publish_draft(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<PublishOutcome>> {
    let snapshot = s.drafts().get(&id).cloned().ok_or_else(|| not_found(&id))?;
    let pool = s.pool(&snapshot.manifest.topic)?;
    let verdict = validate_manifest(&snapshot.manifest, &pool);
    if !verdict.valid {
        return Err(ApiError::violations(
            StatusCode::CONFLICT,
            "invalid_draft",
            "the draft does not pass validation",
            verdict.violations,
        ));
    }
    let article = render_article(&snapshot.manifest, &pool).map_err(ApiError::internal)?;
    let layout = &s.0.layout;

    // one publish (and rebuild) at a time
    let _guard = s.0.site_lock.lock().await;
    let existing = load_published(&layout.published).map_err(ApiError::internal)?;
    let slug = slugify(&article.title);
    let mut published_at = (s.0.clock)();
    if let Some(prev) = existing.iter().find(|a| a.slug == slug) {
        if prev.article.id != article.id {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "slug_taken",
                format!("article {:?} already uses the slug {slug:?}", prev.article.id),
            ));
        }
        published_at = prev.published_at;
    }
    // freeze the draft before anything is written, so no edit slips in between
    let draft = {
        let mut drafts = s.drafts();
        let record = drafts.get_mut(&id).ok_or_else(|| not_found(&id))?;
        if record.revision != snapshot.revision {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "revision_conflict",
                format!("draft {id:?} changed while publishing; retry"),
            ));
        }
        if record.manifest.status != Status::Published {
            record.manifest.status = Status::Published;
            record.revision += 1;
        }
        record.verdict = verdict;
        let draft = record.clone();
        s.persist(&draft)?;
        draft
    };
    let idf: Idf = fs::read_to_string(&layout.idf)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    let published = publish(article, &idf, published_at);
    save_published(&layout.published, &published).map_err(ApiError::internal)?;
    let site_files = match &s.0.site {
        Some(cfg) => {
            let all = load_published(&layout.published).map_err(ApiError::internal)?;
            Some(build_site(&all, cfg, &layout.site).map_err(ApiError::internal)?.files)
        }
        None => None,
    };
    Ok(Json(PublishOutcome {
        article: published,
        draft,
        site_files,
    }))
}

async fn list_articles(State(s): State<AppState>) -> ApiResult<Json<Vec<PublishedArticle>>> {
    load_published(&s.0.layout.published).map(Json).map_err(ApiError::internal)
}
