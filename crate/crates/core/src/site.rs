//! Static blog output: index, article pages, tag pages, an author page, an
//! RSS feed and a sitemap, all from published articles.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assembler::AssembledArticle;
use crate::corpus::Article;
use crate::slug::slugify;
use crate::tagger::{extract_tags, Idf};

/// Tags computed for each published article.
pub const PUBLISHED_TAGS: usize = 8;

#[derive(Debug, Error)]
pub enum SiteError {
    #[error("articles {first} and {second} both map to slug {slug}")]
    SlugCollision { slug: String, first: String, second: String },
    #[error("invalid site config: {0}")]
    Config(String),
    #[error("malformed article file {path}: {source}")]
    Article { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    #[serde(default)]
    pub bio: String,
    /// Portrait image; a generated avatar is used when absent.
    #[serde(default)]
    pub portrait: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Theme {
    pub background: String,
    pub text: String,
    pub accent: String,
    pub muted: String,
    pub body_font: String,
    pub heading_font: String,
}

impl Default for Theme {
    fn default() -> Self {
        Theme {
            background: "#fdfcf9".into(),
            text: "#1d1d1f".into(),
            accent: "#b3261e".into(),
            muted: "#6b6b6b".into(),
            body_font: "Georgia, 'Times New Roman', serif".into(),
            heading_font: "'Helvetica Neue', Arial, sans-serif".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteConfig {
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub base_url: String,
    pub author: Persona,
    #[serde(default)]
    pub theme: Theme,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Build time written to the feed; the newest article date when unset.
    #[serde(default)]
    pub now: Option<DateTime<Utc>>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("site")
}

impl SiteConfig {
    pub fn load(path: &Path) -> Result<Self, SiteError> {
        let mut cfg: SiteConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        // a relative portrait is relative to the config file
        if let (Some(p), Some(dir)) = (&cfg.author.portrait, path.parent()) {
            if p.is_relative() {
                cfg.author.portrait = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SiteError> {
        if self.base_url.trim().is_empty() {
            return Err(SiteError::Config("base_url is empty".into()));
        }
        if self.author.name.trim().is_empty() {
            return Err(SiteError::Config("author name is empty".into()));
        }
        if let Some(p) = &self.author.portrait {
            if !p.is_file() {
                return Err(SiteError::Config(format!("portrait {} not found", p.display())));
            }
        }
        Ok(())
    }

    fn base(&self) -> &str {
        self.base_url.trim_end_matches('/')
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedArticle {
    #[serde(flatten)]
    pub article: AssembledArticle,
    pub slug: String,
    pub published_at: DateTime<Utc>,
    pub tags: Vec<String>,
}

/// Top tags of the assembled text.
pub fn tag_published(article: &AssembledArticle, idf: &Idf) -> Vec<String> {
    let text = format!("{}\n\n{}", article.excerpt, article.body_text());
    let doc = Article::new(article.id.clone(), article.title.clone(), text);
    extract_tags(&doc, idf, PUBLISHED_TAGS).map(|t| t.names()).unwrap_or_default()
}

pub fn publish(article: AssembledArticle, idf: &Idf, published_at: DateTime<Utc>) -> PublishedArticle {
    PublishedArticle {
        slug: slugify(&article.title),
        tags: tag_published(&article, idf),
        article,
        published_at,
    }
}

pub fn save_published(dir: &Path, article: &PublishedArticle) -> Result<PathBuf, SiteError> {
    let path = dir.join(format!("{}.json", article.slug));
    crate::io::write_atomic(&path, serde_json::to_string_pretty(article)?.as_bytes())?;
    Ok(path)
}

/// Every `*.json` article in `dir`, ordered by file name.
pub fn load_published(dir: &Path) -> Result<Vec<PublishedArticle>, SiteError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p)?;
            serde_json::from_str(&text).map_err(|source| SiteError::Article { path: p, source })
        })
        .collect()
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Replaces each `{{key}}` with its value. Values are inserted as given.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = after[..end].trim();
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[start..start + 2 + end + 2]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

const PAGE: &str = r#"<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<meta name="viewport" content="width=device-width, initial-scale=1">
<title>{{page_title}}</title>
<link rel="stylesheet" href="{{root}}style.css">
<link rel="alternate" type="application/rss+xml" title="{{site_title}}" href="{{root}}feed.xml">
</head>
<body>
<header class="masthead">
<a class="brand" href="{{root}}index.html">{{site_title}}</a>
<nav><a href="{{root}}index.html">Latest</a> <a href="{{root}}author.html">About the author</a> <a href="{{root}}feed.xml">RSS</a></nav>
</header>
<main>
{{content}}
</main>
<footer><p>{{site_title}} · {{site_description}}</p></footer>
</body>
</html>
"#;

const ARTICLE: &str = r#"<article>
<h1>{{title}}</h1>
<p class="byline">By <a href="{{root}}author.html">{{author}}</a> · <time datetime="{{iso_date}}">{{date}}</time></p>
{{figure}}<p class="lede">{{excerpt}}</p>
{{body}}<ul class="tags">{{tags}}</ul>
</article>"#;

const STYLE: &str = r#"body { margin: 0; background: {{background}}; color: {{text}}; font-family: {{body_font}}; line-height: 1.6; }
h1, h2, .brand, nav { font-family: {{heading_font}}; }
.masthead { display: flex; justify-content: space-between; align-items: baseline; padding: 1rem 2rem; border-bottom: 3px solid {{accent}}; }
.brand { font-size: 1.6rem; font-weight: bold; color: {{text}}; text-decoration: none; }
nav a { margin-left: 1rem; color: {{accent}}; }
main { max-width: 42rem; margin: 2rem auto; padding: 0 1rem; }
.byline, time, footer { color: {{muted}}; font-size: 0.9rem; }
.lede { font-size: 1.15rem; font-style: italic; }
.tags { list-style: none; padding: 0; }
.tags li { display: inline-block; margin: 0 0.4rem 0.4rem 0; }
.tags a { color: {{accent}}; }
figure { margin: 1rem 0; }
figure img { max-width: 100%; }
figcaption { color: {{muted}}; font-size: 0.85rem; }
.portrait { width: 160px; height: 160px; border-radius: 50%; }
.teaser { border-bottom: 1px solid #ddd; padding-bottom: 1rem; }
footer { text-align: center; padding: 2rem; }
"#;

fn human_date(t: &DateTime<Utc>) -> String {
    t.format("%B %-d, %Y").to_string()
}

fn tag_file(tag: &str) -> String {
    format!("tags/{}.html", slugify(tag))
}

struct Pages<'a> {
    config: &'a SiteConfig,
    articles: Vec<&'a PublishedArticle>,
    avatar: String,
}

impl Pages<'_> {
    fn page(&self, root: &str, title: &str, content: &str) -> String {
        let page_title = if title.is_empty() {
            escape_html(&self.config.title)
        } else {
            format!("{} · {}", escape_html(title), escape_html(&self.config.title))
        };
        render_template(
            PAGE,
            &[
                ("page_title", &page_title),
                ("root", root),
                ("site_title", &escape_html(&self.config.title)),
                ("site_description", &escape_html(&self.config.description)),
                ("content", content),
            ],
        )
    }

    fn teaser_list(&self, root: &str, articles: &[&PublishedArticle]) -> String {
        if articles.is_empty() {
            return "<p class=\"empty\">No articles yet.</p>\n".into();
        }
        let mut out = String::from("<ul class=\"articles\">\n");
        for a in articles {
            let _ = writeln!(
                out,
                "<li class=\"teaser\"><h2><a href=\"{root}articles/{}.html\">{}</a></h2><time datetime=\"{}\">{}</time><p>{}</p></li>",
                a.slug,
                escape_html(&a.article.title),
                a.published_at.to_rfc3339(),
                human_date(&a.published_at),
                escape_html(&a.article.excerpt)
            );
        }
        out.push_str("</ul>\n");
        out
    }

    fn index(&self) -> String {
        let content = format!("<h1 class=\"section\">Latest</h1>\n{}", self.teaser_list("", &self.articles));
        self.page("", "", &content)
    }

    fn article(&self, a: &PublishedArticle) -> String {
        let root = "../";
        let figure = match &a.article.image {
            Some(img) => format!(
                "<figure><img src=\"{}\" alt=\"{}\"><figcaption>{}</figcaption></figure>\n",
                escape_html(&img.url),
                escape_html(&img.work_title),
                escape_html(&img.credit_line())
            ),
            None => String::new(),
        };
        let body: String = a
            .article
            .body
            .iter()
            .map(|p| format!("<p>{}</p>\n", escape_html(p)))
            .collect();
        let tags: String = a
            .tags
            .iter()
            .map(|t| format!("<li><a href=\"{root}{}\">{}</a></li>", tag_file(t), escape_html(t)))
            .collect();
        let content = render_template(
            ARTICLE,
            &[
                ("title", &escape_html(&a.article.title)),
                ("root", root),
                ("author", &escape_html(&self.config.author.name)),
                ("iso_date", &a.published_at.to_rfc3339()),
                ("date", &human_date(&a.published_at)),
                ("figure", &figure),
                ("excerpt", &escape_html(&a.article.excerpt)),
                ("body", &body),
                ("tags", &tags),
            ],
        );
        self.page(root, &a.article.title, &content)
    }

    fn tag(&self, tag: &str, articles: &[&PublishedArticle]) -> String {
        let content = format!(
            "<h1 class=\"section\">Tagged “{}”</h1>\n{}",
            escape_html(tag),
            self.teaser_list("../", articles)
        );
        self.page("../", tag, &content)
    }

    fn author(&self) -> String {
        let a = &self.config.author;
        let content = format!(
            "<section class=\"author\">\n<img class=\"portrait\" src=\"{}\" alt=\"{}\">\n<h1>{}</h1>\n<p>{}</p>\n</section>\n<h2>Articles</h2>\n{}",
            self.avatar,
            escape_html(&a.name),
            escape_html(&a.name),
            escape_html(&a.bio),
            self.teaser_list("", &self.articles)
        );
        self.page("", &a.name, &content)
    }

    fn feed(&self) -> String {
        let cfg = self.config;
        let base = cfg.base();
        let built = cfg
            .now
            .or_else(|| self.articles.iter().map(|a| a.published_at).max())
            .unwrap_or(DateTime::UNIX_EPOCH);
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<rss version=\"2.0\">\n<channel>\n");
        let _ = writeln!(out, "<title>{}</title>", escape_html(&cfg.title));
        let _ = writeln!(out, "<link>{}/index.html</link>", escape_html(base));
        let _ = writeln!(out, "<description>{}</description>", escape_html(&cfg.description));
        let _ = writeln!(out, "<lastBuildDate>{}</lastBuildDate>", built.to_rfc2822());
        for a in &self.articles {
            let link = format!("{}/articles/{}.html", base, a.slug);
            out.push_str("<item>\n");
            let _ = writeln!(out, "<title>{}</title>", escape_html(&a.article.title));
            let _ = writeln!(out, "<link>{}</link>", escape_html(&link));
            let _ = writeln!(out, "<guid isPermaLink=\"true\">{}</guid>", escape_html(&link));
            let _ = writeln!(out, "<pubDate>{}</pubDate>", a.published_at.to_rfc2822());
            let _ = writeln!(out, "<description>{}</description>", escape_html(&a.article.excerpt));
            for t in &a.tags {
                let _ = writeln!(out, "<category>{}</category>", escape_html(t));
            }
            out.push_str("</item>\n");
        }
        out.push_str("</channel>\n</rss>\n");
        out
    }
}

/// Identicon-style SVG: a mirrored 5×5 grid coloured from a hash of `seed`.
pub fn placeholder_avatar(seed: &str) -> String {
    let h = Sha256::digest(seed.as_bytes());
    let hue = u16::from_be_bytes([h[0], h[1]]) % 360;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 5 5\" width=\"160\" height=\"160\" shape-rendering=\"crispEdges\">\n<rect width=\"5\" height=\"5\" fill=\"hsl({}, 30%, 92%)\"/>\n",
        (hue + 180) % 360
    );
    for row in 0..5 {
        for col in 0..3 {
            if h[2 + row * 3 + col] % 2 == 0 {
                continue;
            }
            for x in [col, 4 - col] {
                let _ = writeln!(
                    out,
                    "<rect x=\"{x}\" y=\"{row}\" width=\"1\" height=\"1\" fill=\"hsl({hue}, 55%, 45%)\"/>"
                );
                if x == 2 {
                    break;
                }
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteSummary {
    pub output_dir: PathBuf,
    /// Emitted files relative to the output directory, sorted.
    pub files: Vec<String>,
}

/// Renders all pages in memory: `(relative path, bytes)` sorted by path.
pub fn render_site(articles: &[PublishedArticle], config: &SiteConfig) -> Result<Vec<(String, Vec<u8>)>, SiteError> {
    config.validate()?;
    let mut by_slug: BTreeMap<&str, &PublishedArticle> = BTreeMap::new();
    for a in articles {
        if let Some(prev) = by_slug.insert(&a.slug, a) {
            return Err(SiteError::SlugCollision {
                slug: a.slug.clone(),
                first: prev.article.id.clone(),
                second: a.article.id.clone(),
            });
        }
    }
    let mut sorted: Vec<&PublishedArticle> = articles.iter().collect();
    sorted.sort_by(|a, b| b.published_at.cmp(&a.published_at).then_with(|| a.slug.cmp(&b.slug)));

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let avatar = match &config.author.portrait {
        Some(p) => {
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("img").to_lowercase();
            let name = format!("portrait.{ext}");
            files.push((name.clone(), fs::read(p)?));
            name
        }
        None => {
            files.push(("avatar.svg".into(), placeholder_avatar(&config.author.name).into_bytes()));
            "avatar.svg".into()
        }
    };
    let pages = Pages {
        config,
        articles: sorted,
        avatar,
    };

    let mut tags: BTreeMap<String, (String, Vec<&PublishedArticle>)> = BTreeMap::new();
    for a in &pages.articles {
        for t in &a.tags {
            let entry = tags.entry(tag_file(t)).or_insert_with(|| (t.clone(), Vec::new()));
            if !entry.1.iter().any(|x| x.slug == a.slug) {
                entry.1.push(a);
            }
        }
    }

    let theme = &config.theme;
    let style = render_template(
        STYLE,
        &[
            ("background", &theme.background),
            ("text", &theme.text),
            ("accent", &theme.accent),
            ("muted", &theme.muted),
            ("body_font", &theme.body_font),
            ("heading_font", &theme.heading_font),
        ],
    );
    files.push(("style.css".into(), style.into_bytes()));
    files.push(("index.html".into(), pages.index().into_bytes()));
    files.push(("author.html".into(), pages.author().into_bytes()));
    files.push(("feed.xml".into(), pages.feed().into_bytes()));
    let article_pages: Vec<(String, Vec<u8>)> = pages
        .articles
        .par_iter()
        .map(|a| (format!("articles/{}.html", a.slug), pages.article(a).into_bytes()))
        .collect();
    files.extend(article_pages);
    let tag_pages: Vec<(String, Vec<u8>)> = tags
        .par_iter()
        .map(|(file, (name, list))| (file.clone(), pages.tag(name, list).into_bytes()))
        .collect();
    files.extend(tag_pages);

    let mut sitemap = String::new();
    let mut html: Vec<&str> = files.iter().map(|(p, _)| p.as_str()).filter(|p| p.ends_with(".html")).collect();
    html.sort();
    for p in html {
        let _ = writeln!(sitemap, "{}/{}", config.base(), p);
    }
    files.push(("sitemap.txt".into(), sitemap.into_bytes()));
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(files)
}

/// Writes the site into `out`, replacing whatever was there.
pub fn build_site(articles: &[PublishedArticle], config: &SiteConfig, out: &Path) -> Result<SiteSummary, SiteError> {
    let files = render_site(articles, config)?;
    let staging = out.with_extension("building");
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    for (rel, bytes) in &files {
        let path = staging.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, bytes)?;
    }
    if out.exists() {
        fs::remove_dir_all(out)?;
    }
    fs::rename(&staging, out)?;
    Ok(SiteSummary {
        output_dir: out.to_path_buf(),
        files: files.into_iter().map(|(p, _)| p).collect(),
    })
}
