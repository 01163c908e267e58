//! Preset exploration engine for a reference subtractive synthesizer.
//!
//! Presets are rendered to a fixed 4 s recording at middle C, embedded by a
//! pluggable provider and ranked by cosine similarity. Favorites are bred
//! into new generations by uniform crossover over parameter groups, and a
//! Jensen-Shannon highlighter scores which groups matter for a query.

pub mod bank;
pub mod embed;
pub mod error;
pub mod highlight;
pub mod mix;
pub mod modify;
pub mod preset;
pub mod render;
pub mod schema;
pub mod search;

pub use bank::{generate_bank, BankGenConfig, Generation, GenerationMeta};
pub use embed::{
    embed_generation, EmbeddingKey, EmbeddingProvider, EmbeddingVector, LookupProvider, SpectralProvider,
};
pub use error::{Error, Result};
pub use highlight::{group_importance, BaselineCache, Baselines, GroupImportance, HighlightConfig};
pub use mix::{breed_pair, mix, Favorites, GenerationChain, MixConfig, NavDirection};
pub use modify::{search_examples, Column, ExampleMatrix, GroupTarget};
pub use preset::{diff_presets, ParamValue, Preset, PresetDiff, Provenance};
pub use render::{render, Recording};
pub use schema::{ParamKind, ParameterSchema, ParameterSpec};
pub use search::{audio_search, text_search, Query, QueryKind, RankedResult, SearchResults};
