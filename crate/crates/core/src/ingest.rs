//! Corpus manifests and the optional URL fetcher.
//!
//! A manifest is a JSON file:
//!
//! ```json
//! {
//!   "entities": [
//!     {
//!       "id": "speakerx",
//!       "display_name": "SpeakerX",
//!       "aliases": ["Speaker X"],
//!       "documents": [
//!         { "url": "https://a.example/review", "search_rank": 1, "text": "..." },
//!         { "url": "https://b.example/review", "search_rank": 2, "text_file": "x/b.txt" },
//!         { "url": "https://c.example/review", "search_rank": 3 }
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! `text_file` is resolved relative to the manifest. Entries with neither
//! `text` nor `text_file` are materialized through a [`UrlFetcher`].

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

use crate::model::{Entity, SourceDocument};
use crate::text::{digest, member_key};

pub const RECOMMENDED_DOCS_PER_ENTITY: std::ops::RangeInclusive<usize> = 5..=20;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("no documents")]
    NoDocuments,
    #[error("entity {entity:?}, document {index}: {reason}")]
    MalformedEntry {
        entity: String,
        index: usize,
        reason: String,
    },
    #[error("duplicate entity id {0:?}")]
    DuplicateEntity(String),
    #[error("entity {entity:?} lists {url} more than once")]
    DuplicateUrl { entity: String, url: String },
    #[error("fetching {url}: {reason}")]
    Fetch { url: String, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entities: Vec<ManifestEntity>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntity {
    pub id: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub documents: Vec<ManifestDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestDocument {
    pub url: String,
    pub search_rank: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntity {
    pub entity: Entity,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl CorpusEntity {
    /// Display name followed by aliases.
    pub fn names(&self) -> Vec<String> {
        std::iter::once(self.entity.display_name.clone())
            .chain(self.aliases.iter().cloned())
            .collect()
    }
}

/// A loaded corpus: entities plus their documents in (entity, rank) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub entities: Vec<CorpusEntity>,
    pub documents: Vec<SourceDocument>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Corpus {
    /// Look an entity up by id or display name (case-insensitive).
    pub fn find_entity(&self, name: &str) -> Option<&CorpusEntity> {
        let key = member_key(name);
        self.entities
            .iter()
            .find(|e| e.entity.id == name)
            .or_else(|| {
                self.entities.iter().find(|e| {
                    member_key(&e.entity.id) == key || member_key(&e.entity.display_name) == key
                })
            })
    }

    pub fn documents_of<'a>(&'a self, entity_id: &'a str) -> impl Iterator<Item = &'a SourceDocument> + 'a {
        self.documents.iter().filter(move |d| d.entity_id == entity_id)
    }

    /// Content digest over entities and document texts.
    pub fn digest(&self) -> String {
        let mut buf = String::new();
        for e in &self.entities {
            buf.push_str(&e.entity.id);
            buf.push('\u{1f}');
        }
        for d in &self.documents {
            buf.push_str(&d.entity_id);
            buf.push('\u{1f}');
            buf.push_str(&d.url);
            buf.push('\u{1f}');
            buf.push_str(&d.search_rank.to_string());
            buf.push('\u{1f}');
            buf.push_str(&d.raw_text);
            buf.push('\u{1e}');
        }
        digest(&buf)
    }

    /// Build a corpus from an in-memory manifest. `base` resolves `text_file`.
    pub fn from_manifest(
        manifest: CorpusManifest,
        base: &Path,
        fetcher: Option<&UrlFetcher>,
    ) -> Result<Corpus, CorpusError> {
        if manifest.entities.iter().all(|e| e.documents.is_empty()) {
            return Err(CorpusError::NoDocuments);
        }
        let mut entity_ids = HashSet::new();
        let mut entities = Vec::new();
        let mut documents = Vec::new();
        let mut warnings = Vec::new();

        for me in manifest.entities {
            if !entity_ids.insert(me.id.clone()) {
                return Err(CorpusError::DuplicateEntity(me.id));
            }
            let malformed = |index: usize, reason: &str| CorpusError::MalformedEntry {
                entity: me.id.clone(),
                index,
                reason: reason.to_string(),
            };
            if me.id.trim().is_empty() || me.display_name.trim().is_empty() {
                return Err(malformed(0, "entity id and display_name must be non-empty"));
            }
            if me.documents.is_empty() {
                return Err(malformed(0, "entity has no documents"));
            }
            let n = me.documents.len();
            if !RECOMMENDED_DOCS_PER_ENTITY.contains(&n) {
                let msg = format!(
                    "entity {:?} has {n} documents, outside the recommended 5-20",
                    me.id
                );
                tracing::warn!("{msg}");
                warnings.push(msg);
            }

            let mut urls = HashSet::new();
            let mut docs = Vec::with_capacity(n);
            for (index, md) in me.documents.iter().enumerate() {
                if md.url.trim().is_empty() {
                    return Err(malformed(index, "empty url"));
                }
                if md.search_rank == 0 {
                    return Err(malformed(index, "search_rank must be >= 1"));
                }
                if !urls.insert(md.url.clone()) {
                    return Err(CorpusError::DuplicateUrl {
                        entity: me.id.clone(),
                        url: md.url.clone(),
                    });
                }
                let raw_text = match (&md.text, &md.text_file, fetcher) {
                    (Some(_), Some(_), _) => {
                        return Err(malformed(index, "give either text or text_file, not both"))
                    }
                    (Some(t), None, _) => t.clone(),
                    (None, Some(f), _) => {
                        let path = base.join(f);
                        std::fs::read_to_string(&path)
                            .map_err(|source| CorpusError::Io { path, source })?
                    }
                    (None, None, Some(fetcher)) => fetcher.fetch(&md.url)?,
                    (None, None, None) => {
                        return Err(malformed(index, "no text, no text_file and no fetcher configured"))
                    }
                };
                docs.push(SourceDocument {
                    url: md.url.clone(),
                    entity_id: me.id.clone(),
                    search_rank: md.search_rank,
                    raw_text,
                    essential_sentences: Vec::new(),
                });
            }
            docs.sort_by_key(|d| d.search_rank);
            documents.extend(docs);
            entities.push(CorpusEntity {
                entity: Entity::new(me.id.clone(), me.display_name.clone()),
                aliases: me.aliases.clone(),
            });
        }

        Ok(Corpus {
            entities,
            documents,
            warnings,
        })
    }
}

/// Load a corpus manifest from disk.
pub fn load_corpus(path: &Path, fetcher: Option<&UrlFetcher>) -> Result<Corpus, CorpusError> {
    let data = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest: CorpusManifest = serde_json::from_str(&data).map_err(|source| CorpusError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Corpus::from_manifest(manifest, base, fetcher)
}

/// Fetches page text over HTTP GET with an on-disk cache keyed by URL hash.
pub struct UrlFetcher {
    client: reqwest::blocking::Client,
    cache_dir: PathBuf,
    max_retries: u32,
}

impl UrlFetcher {
    pub const MAX_RETRIES: u32 = 2;

    pub fn new(cache_dir: impl Into<PathBuf>, timeout: Duration) -> Result<Self, CorpusError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| CorpusError::Fetch {
                url: String::new(),
                reason: e.to_string(),
            })?;
        Ok(Self {
            client,
            cache_dir: cache_dir.into(),
            max_retries: Self::MAX_RETRIES,
        })
    }

    pub fn cache_path(&self, url: &str) -> PathBuf {
        self.cache_dir.join(format!("{}.txt", digest(url)))
    }

    pub fn fetch(&self, url: &str) -> Result<String, CorpusError> {
        let cached = self.cache_path(url);
        if let Ok(text) = std::fs::read_to_string(&cached) {
            return Ok(text);
        }
        let mut last_err = String::new();
        for _ in 0..=self.max_retries {
            match self.client.get(url).send() {
                Ok(resp) if resp.status().is_success() => {
                    let body = resp.text().map_err(|e| CorpusError::Fetch {
                        url: url.to_string(),
                        reason: e.to_string(),
                    })?;
                    let text = strip_html(&body);
                    std::fs::create_dir_all(&self.cache_dir).map_err(|source| CorpusError::Io {
                        path: self.cache_dir.clone(),
                        source,
                    })?;
                    std::fs::write(&cached, &text).map_err(|source| CorpusError::Io {
                        path: cached.clone(),
                        source,
                    })?;
                    return Ok(text);
                }
                Ok(resp) => last_err = format!("HTTP {}", resp.status()),
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(CorpusError::Fetch {
            url: url.to_string(),
            reason: last_err,
        })
    }
}

/// Heuristic markup removal: drops script/style blocks and tags, decodes a
/// handful of common entities, and keeps one line per block.
pub fn strip_html(body: &str) -> String {
    if !(body.contains('<') && body.contains('>')) {
        return body.to_string();
    }
    let lower = body.to_ascii_lowercase();
    let mut out = String::with_capacity(body.len());
    let mut i = 0;
    while i < body.len() {
        let rest = &lower[i..];
        if rest.starts_with("<script") || rest.starts_with("<style") {
            let close = if rest.starts_with("<script") { "</script>" } else { "</style>" };
            i = match rest.find(close) {
                Some(p) => i + p + close.len(),
                None => body.len(),
            };
            out.push('\n');
            continue;
        }
        if rest.starts_with('<') {
            let end = rest.find('>').map_or(body.len(), |p| i + p + 1);
            let tag = &lower[i..end];
            let block = ["<p", "</p", "<br", "<div", "</div", "<li", "<h1", "<h2", "<h3", "<tr", "</h"]
                .iter()
                .any(|t| tag.starts_with(t));
            out.push(if block { '\n' } else { ' ' });
            i = end;
            continue;
        }
        let ch = body[i..].chars().next().expect("in bounds");
        out.push(ch);
        i += ch.len_utf8();
    }
    let decoded = out
        .replace("&nbsp;", " ")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&");
    decoded
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}
