//! Exact cosine-similarity ranking over a generation.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::bank::Generation;
use crate::embed::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub preset_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// How a result list was produced; the UI colours audio-search lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Text,
    Audio,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResults {
    pub kind: QueryKind,
    pub results: Vec<RankedResult>,
}

/// Score descending, then preset id ascending.
pub fn result_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

/// Ranks every preset of `generation` against `query` and keeps the top `k`
/// (capped at the generation size).
pub fn rank(query: &EmbeddingVector, generation: &Generation, k: usize) -> Result<Vec<RankedResult>> {
    rank_pinned(query, generation, k, None)
}

/// Like [`rank`], but `pinned` (if present in the generation) sorts ahead of
/// every other preset.
pub fn rank_pinned(
    query: &EmbeddingVector,
    generation: &Generation,
    k: usize,
    pinned: Option<&str>,
) -> Result<Vec<RankedResult>> {
    let embeddings = generation.embeddings()?;
    if let Some(e) = embeddings.first() {
        if e.dim() != query.dim() {
            return Err(Error::DimensionMismatch {
                expected: e.dim(),
                got: query.dim(),
            });
        }
    }
    let mut scored: Vec<(bool, f64, &str)> = embeddings
        .iter()
        .zip(generation.presets())
        .map(|(e, p)| (Some(p.id.as_str()) == pinned, query.cosine(e), p.id.as_str()))
        .collect();
    let k = k.min(scored.len());
    let cmp = |a: &(bool, f64, &str), b: &(bool, f64, &str)| {
        b.0.cmp(&a.0).then_with(|| result_order(a.1, a.2, b.1, b.2))
    };
    if k < scored.len() && k > 0 {
        scored.select_nth_unstable_by(k - 1, cmp);
    }
    scored.truncate(k);
    scored.sort_unstable_by(cmp);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (_, score, id))| RankedResult {
            preset_id: id.to_string(),
            score,
            rank: i + 1,
        })
        .collect())
}

pub fn text_search(
    query: &str,
    generation: &Generation,
    provider: &dyn EmbeddingProvider,
    k: usize,
) -> Result<SearchResults> {
    if query.trim().is_empty() {
        return Err(Error::InvalidArgument("empty query".into()));
    }
    if !provider.supports_text() {
        return Err(Error::Provider(format!("provider {:?} does not support text queries", provider.name())));
    }
    let q = provider.embed_text(query)?;
    Ok(SearchResults {
        kind: QueryKind::Text,
        results: rank(&q, generation, k)?,
    })
}

/// Presets closest to `anchor`'s embedding. The anchor itself is always
/// rank 1, even if another preset shares its exact embedding.
pub fn audio_search(anchor: &str, generation: &Generation, k: usize) -> Result<SearchResults> {
    let q = generation.embedding_of(anchor)?;
    Ok(SearchResults {
        kind: QueryKind::Audio,
        results: rank_pinned(q, generation, k, Some(anchor))?,
    })
}

/// A search request: free text or an anchor preset id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Query {
    Text(String),
    Anchor(String),
}

impl Query {
    pub fn kind(&self) -> QueryKind {
        match self {
            Query::Text(_) => QueryKind::Text,
            Query::Anchor(_) => QueryKind::Audio,
        }
    }

    pub fn run(&self, generation: &Generation, provider: &dyn EmbeddingProvider, k: usize) -> Result<SearchResults> {
        match self {
            Query::Text(t) => text_search(t, generation, provider, k),
            Query::Anchor(id) => audio_search(id, generation, k),
        }
    }
}
