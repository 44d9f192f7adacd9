//! Information retrieval over a pluggable page fetcher.
//!
//! Pages are plain text. Extraction uses regular expressions: a `block`
//! pattern cuts a page into items and each field pattern's first capture
//! group is applied inside one item.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::kb::KbError;

mod ira;

pub use ira::{detect_new_phones, discover_shops, enrich_dimension, normalize_name, scrape, NewPhones};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("no page for `{0}`")]
    NotFound(String),
    #[error("fetching `{url}` failed: {message}")]
    Fetch { url: String, message: String },
    #[error("pattern `{name}`: {message}")]
    Pattern { name: String, message: String },
    #[error("pattern file: {0}")]
    Config(#[from] toml::de::Error),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Something that went wrong for one url while the run as a whole went on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub url: String,
    pub message: String,
}

impl Diagnostic {
    fn new(url: impl Into<String>, message: impl Into<String>) -> Self {
        Self { url: url.into(), message: message.into() }
    }
}

pub trait Fetcher {
    fn fetch(&self, url: &str) -> Result<String, RetrievalError>;
}

/// Serves pages from a directory holding one file per url, named by the
/// hex sha256 of the url with an `.html` suffix.
#[derive(Debug, Clone)]
pub struct DirFetcher {
    root: PathBuf,
}

impl DirFetcher {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn file_name(url: &str) -> String {
        format!("{}.html", hex::encode(Sha256::digest(url.as_bytes())))
    }

    pub fn path_for(&self, url: &str) -> PathBuf {
        self.root.join(Self::file_name(url))
    }

    /// Writes a page so that a later fetch of `url` returns `body`.
    pub fn store(&self, url: &str, body: &str) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.root)?;
        std::fs::write(self.path_for(url), body)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl Fetcher for DirFetcher {
    fn fetch(&self, url: &str) -> Result<String, RetrievalError> {
        match std::fs::read_to_string(self.path_for(url)) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(RetrievalError::NotFound(url.to_string())),
            Err(e) => Err(e.into()),
        }
    }
}

/// Plain HTTP fetcher, meant for a local test server.
pub struct HttpFetcher {
    client: reqwest::blocking::Client,
}

impl HttpFetcher {
    pub fn new() -> Result<Self, RetrievalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(10))
            .build()
            .map_err(|e| RetrievalError::Fetch { url: String::new(), message: e.to_string() })?;
        Ok(Self { client })
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<String, RetrievalError> {
        let fail = |e: reqwest::Error| RetrievalError::Fetch { url: url.to_string(), message: e.to_string() };
        let resp = self.client.get(url).send().map_err(fail)?;
        if resp.status() == reqwest::StatusCode::NOT_FOUND {
            return Err(RetrievalError::NotFound(url.to_string()));
        }
        resp.error_for_status().map_err(fail)?.text().map_err(fail)
    }
}

const PLACEHOLDER: &str = "{query}";

/// Url template with exactly one `{query}` placeholder.
fn expand(name: &str, template: &str, query: &str) -> Result<String, RetrievalError> {
    check_template(name, template)?;
    let q: String = url::form_urlencoded::byte_serialize(query.as_bytes()).collect();
    Ok(template.replace(PLACEHOLDER, &q))
}

fn check_template(name: &str, template: &str) -> Result<(), RetrievalError> {
    let n = template.matches(PLACEHOLDER).count();
    if n != 1 {
        return Err(RetrievalError::Pattern {
            name: name.to_string(),
            message: format!("url template must contain exactly one {PLACEHOLDER} placeholder, found {n}"),
        });
    }
    Ok(())
}

fn compile(name: &str, field: &str, src: &str) -> Result<Regex, RetrievalError> {
    let re = Regex::new(src)
        .map_err(|e| RetrievalError::Pattern { name: name.to_string(), message: format!("field `{field}`: {e}") })?;
    if re.captures_len() < 2 {
        return Err(RetrievalError::Pattern {
            name: name.to_string(),
            message: format!("field `{field}` needs a capture group"),
        });
    }
    Ok(re)
}

/// Splits `page` into the first capture group of every `block` match, and
/// extracts every field from each piece. Missing fields are `None`.
fn extract<'p>(block: &Regex, fields: &[(&str, &Regex)], page: &'p str) -> Vec<BTreeMap<String, Option<&'p str>>> {
    block
        .captures_iter(page)
        .map(|c| {
            let item = c.get(1).map_or("", |m| m.as_str());
            fields
                .iter()
                .map(|(f, re)| {
                    let v = re.captures(item).and_then(|c| c.get(1)).map(|m| m.as_str().trim());
                    (f.to_string(), v.filter(|v| !v.is_empty()))
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductFields {
    pub name: String,
    pub brand: String,
    pub price: String,
    pub currency: String,
    #[serde(default)]
    pub availability: Option<String>,
}

/// How to search one shop and read products off the result page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchPattern {
    pub name: String,
    /// Resolved against the shop's base url.
    pub url: String,
    pub block: String,
    pub fields: ProductFields,
}

pub(crate) struct CompiledSearch {
    pub block: Regex,
    pub fields: Vec<(&'static str, Regex)>,
}

impl SearchPattern {
    pub fn check(&self) -> Result<(), RetrievalError> {
        self.compiled().map(|_| ())
    }

    pub(crate) fn compiled(&self) -> Result<CompiledSearch, RetrievalError> {
        check_template(&self.name, &self.url)?;
        let f = &self.fields;
        let mut fields = vec![
            ("name", compile(&self.name, "name", &f.name)?),
            ("brand", compile(&self.name, "brand", &f.brand)?),
            ("price", compile(&self.name, "price", &f.price)?),
            ("currency", compile(&self.name, "currency", &f.currency)?),
        ];
        if let Some(a) = &f.availability {
            fields.push(("availability", compile(&self.name, "availability", a)?));
        }
        Ok(CompiledSearch { block: compile(&self.name, "block", &self.block)?, fields })
    }

    pub fn url_for(&self, base: &str, query: &str) -> Result<String, RetrievalError> {
        let rel = expand(&self.name, &self.url, query)?;
        let base = url::Url::parse(base)
            .map_err(|e| RetrievalError::Pattern { name: self.name.clone(), message: format!("base `{base}`: {e}") })?;
        let full = base
            .join(&rel)
            .map_err(|e| RetrievalError::Pattern { name: self.name.clone(), message: format!("`{rel}`: {e}") })?;
        Ok(full.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetFields {
    pub title: String,
    pub url: String,
    pub date: String,
}

/// Search over a news or document source, one query per dimension member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetPattern {
    pub name: String,
    pub url: String,
    pub block: String,
    pub fields: SnippetFields,
}

impl SnippetPattern {
    pub fn check(&self) -> Result<(), RetrievalError> {
        self.compiled().map(|_| ())
    }

    pub(crate) fn compiled(&self) -> Result<CompiledSearch, RetrievalError> {
        check_template(&self.name, &self.url)?;
        let f = &self.fields;
        Ok(CompiledSearch {
            block: compile(&self.name, "block", &self.block)?,
            fields: vec![
                ("title", compile(&self.name, "title", &f.title)?),
                ("url", compile(&self.name, "url", &f.url)?),
                ("date", compile(&self.name, "date", &f.date)?),
            ],
        })
    }
}

/// Index pages listing shops, and the pattern picking shop urls off them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discovery {
    pub seeds: Vec<String>,
    pub link: String,
}

/// Contents of a pattern file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSet {
    pub discovery: Discovery,
    #[serde(default)]
    pub queries: Vec<String>,
    #[serde(default, rename = "search")]
    pub searches: Vec<SearchPattern>,
    #[serde(default)]
    pub snippets: Vec<SnippetPattern>,
}

impl PatternSet {
    pub fn parse(text: &str) -> Result<Self, RetrievalError> {
        let set: PatternSet = toml::from_str(text)?;
        compile("discovery", "link", &set.discovery.link)?;
        for s in &set.searches {
            s.check()?;
        }
        for s in &set.snippets {
            s.check()?;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShopRecord {
    pub id: String,
    pub url: String,
    pub discovered: chrono::NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductObservation {
    pub name: String,
    pub brand: String,
    pub price: crate::kb::Decimal,
    /// Price as it appeared on the page.
    pub price_text: String,
    pub currency: String,
    pub availability: Option<String>,
    pub shop: String,
    pub observed: chrono::NaiveDate,
}
