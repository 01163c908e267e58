//! Per-session state and the mutations that change it.
//!
//! Every state change is a [`Mutation`]. Requests apply one and, on success,
//! append it to the session log; on startup the log is replayed through the
//! same code path, so a restart rebuilds identical chains (mix seeds are
//! stored in the log).

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use presetlab_core::bank::Generation;
use presetlab_core::embed::EmbeddingProvider;
use presetlab_core::highlight::{BaselineCache, HighlightConfig};
use presetlab_core::mix::{mix, Favorites, GenerationChain, NavDirection};
use presetlab_core::modify::{Column, ExampleMatrix, GroupTarget, MatrixSnapshot};
use presetlab_core::preset::Preset;
use presetlab_core::schema::ParameterSchema;
use presetlab_core::search::Query;
use presetlab_core::{Error, Result};

use crate::config::TopK;

/// Shared, read-only pieces every session works against.
pub struct Engine {
    pub schema: ParameterSchema,
    pub provider: Arc<dyn EmbeddingProvider>,
    pub default_bank: Arc<Generation>,
    pub top_k: TopK,
    pub baselines: BaselineCache,
}

impl Engine {
    pub fn highlight_config(&self) -> HighlightConfig {
        HighlightConfig {
            corpus_size: self.top_k.corpus,
            ..HighlightConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FavoriteAction {
    Add,
    Remove,
    Clear,
}

/// Which example search a modify request runs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleSource {
    Query(String),
    Anchor(String),
    /// Audio search from a numbered column of the current matrix.
    Refine(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    Favorite {
        preset_id: Option<String>,
        action: FavoriteAction,
    },
    Mix {
        seed: u64,
    },
    Navigate {
        dir: NavDirection,
    },
    ModifySearch {
        base: Option<String>,
        source: ExampleSource,
    },
    ModifyApply {
        group: String,
        column: Column,
    },
}

pub struct Session {
    pub id: String,
    pub chain: GenerationChain,
    pub favorites: Favorites,
    pub current: Option<String>,
    pub matrix: Option<ExampleMatrix>,
    pub created_at: u64,
    pub updated_at: u64,
}

pub fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session: String,
    pub cursor: usize,
    pub chain_length: usize,
    pub generation_sizes: Vec<usize>,
    pub favorites: Vec<String>,
    pub current: Option<String>,
    pub matrix: Option<MatrixSnapshot>,
    pub created_at: u64,
    pub updated_at: u64,
}

impl Session {
    pub fn new(id: String, engine: &Engine, created_at: u64) -> Self {
        Self {
            id,
            chain: GenerationChain::new(engine.default_bank.clone()),
            favorites: Favorites::new(),
            current: None,
            matrix: None,
            created_at,
            updated_at: created_at,
        }
    }

    pub fn generation(&self) -> &Arc<Generation> {
        self.chain.current()
    }

    /// Looks a preset up in the chain, then in the example matrix.
    pub fn find_preset(&self, id: &str) -> Option<&Preset> {
        if let Some((_, p)) = self.chain.find(id) {
            return Some(p);
        }
        let m = self.matrix.as_ref()?;
        [m.working(), m.base()]
            .into_iter()
            .chain(m.examples())
            .find(|p| p.id == id)
    }

    pub fn summary(&self, schema: &ParameterSchema) -> SessionSummary {
        SessionSummary {
            session: self.id.clone(),
            cursor: self.chain.cursor(),
            chain_length: self.chain.len(),
            generation_sizes: self.chain.generations().iter().map(|g| g.len()).collect(),
            favorites: self.favorites.ids().to_vec(),
            current: self.current.clone(),
            matrix: self.matrix.as_ref().map(|m| m.snapshot(schema)),
            created_at: self.created_at,
            updated_at: self.updated_at,
        }
    }

    /// Applies `m`. On error the session is unchanged.
    pub fn apply(&mut self, engine: &Engine, m: &Mutation, at: u64) -> Result<()> {
        match m {
            Mutation::Favorite { preset_id, action } => {
                let need_id = || {
                    preset_id
                        .clone()
                        .ok_or_else(|| Error::InvalidArgument("preset_id is required".into()))
                };
                match action {
                    FavoriteAction::Add => {
                        let id = need_id()?;
                        if self.chain.find(&id).is_none() {
                            return Err(Error::UnknownPreset(id));
                        }
                        self.favorites.add(id)?;
                    }
                    FavoriteAction::Remove => {
                        let id = need_id()?;
                        if !self.favorites.remove(&id) {
                            return Err(Error::InvalidArgument(format!("{id:?} is not a favorite")));
                        }
                    }
                    FavoriteAction::Clear => self.favorites.clear(),
                }
            }
            Mutation::Mix { seed } => {
                mix(&self.favorites, &mut self.chain, engine.provider.as_ref(), &engine.schema, *seed)?;
            }
            Mutation::Navigate { dir } => {
                self.chain.navigate(*dir);
            }
            Mutation::ModifySearch { base, source } => self.modify_search(engine, base.as_deref(), source)?,
            Mutation::ModifyApply { group, column } => {
                let matrix = self
                    .matrix
                    .as_mut()
                    .ok_or_else(|| Error::InvalidArgument("no example matrix; run a modify search first".into()))?;
                let target: GroupTarget = group.parse().expect("infallible");
                matrix.apply(&target, *column, &engine.schema)?;
            }
        }
        self.updated_at = at;
        Ok(())
    }

    fn modify_search(&mut self, engine: &Engine, base: Option<&str>, source: &ExampleSource) -> Result<()> {
        let generation = self.chain.current().clone();
        if let ExampleSource::Refine(column) = source {
            let matrix = self
                .matrix
                .as_mut()
                .ok_or_else(|| Error::InvalidArgument("no example matrix to refine".into()))?;
            if base.is_some() {
                return Err(Error::InvalidArgument("refine keeps the current base".into()));
            }
            return matrix.refine(*column, &generation, &engine.schema);
        }
        let base = match base {
            Some(id) => self.find_preset(id).cloned().ok_or_else(|| Error::UnknownPreset(id.into()))?,
            None => match (&self.matrix, &self.current) {
                (Some(m), _) => m.base().clone(),
                (None, Some(id)) => self.find_preset(id).cloned().ok_or_else(|| Error::UnknownPreset(id.clone()))?,
                (None, None) => return Err(Error::InvalidArgument("no base preset; pass \"base\"".into())),
            },
        };
        let query = match source {
            ExampleSource::Query(q) => Query::Text(q.clone()),
            ExampleSource::Anchor(a) => Query::Anchor(a.clone()),
            ExampleSource::Refine(_) => unreachable!(),
        };
        let matrix = ExampleMatrix::search(
            base,
            &query,
            &generation,
            engine.provider.as_ref(),
            &engine.schema,
            engine.top_k.examples,
        )?;
        self.current = Some(matrix.base().id.clone());
        self.matrix = Some(matrix);
        Ok(())
    }
}
