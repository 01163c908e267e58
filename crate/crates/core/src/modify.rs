//! Example-driven modification: a base preset (the "old" column) plus up to
//! ten retrieved examples whose parameter groups can be copied onto it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bank::Generation;
use crate::embed::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::preset::{Preset, Provenance};
use crate::schema::ParameterSchema;
use crate::search::{rank_pinned, Query, QueryKind};

pub const EXAMPLE_COLUMNS: usize = 10;

/// A matrix column: the base preset or a 1-based example index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Column {
    Old,
    Example(usize),
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Old => f.write_str("old"),
            Column::Example(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("old") {
            return Ok(Column::Old);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Column::Example(n)),
            _ => Err(Error::InvalidArgument(format!("column {s:?} is not \"old\" or a number >= 1"))),
        }
    }
}

impl Serialize for Column {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Column::Old => s.serialize_str("old"),
            Column::Example(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Column {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(0) => Err(serde::de::Error::custom("columns are numbered from 1")),
            Raw::N(n) => Ok(Column::Example(n as usize)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Which rows a click applies to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupTarget {
    All,
    Group(String),
}

impl FromStr for GroupTarget {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s == "ALL" {
            GroupTarget::All
        } else {
            GroupTarget::Group(s.to_string())
        })
    }
}

#[derive(Clone, Debug)]
pub struct ExampleMatrix {
    base: Preset,
    query: Query,
    examples: Vec<Preset>,
    example_embeddings: Vec<EmbeddingVector>,
    selections: Vec<Column>,
    working: Preset,
}

/// Serializable view of the matrix for the service layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSnapshot {
    pub base_id: String,
    pub query: Query,
    pub query_kind: QueryKind,
    pub examples: Vec<String>,
    /// Group name and selected column, in schema order.
    pub selections: Vec<(String, Column)>,
    pub working_id: String,
}

/// Builds a matrix for `base` from the top examples for `query`.
pub fn search_examples(
    base: Preset,
    query: &Query,
    generation: &Generation,
    provider: &dyn EmbeddingProvider,
    schema: &ParameterSchema,
) -> Result<ExampleMatrix> {
    ExampleMatrix::search(base, query, generation, provider, schema, EXAMPLE_COLUMNS)
}

impl ExampleMatrix {
    pub fn search(
        base: Preset,
        query: &Query,
        generation: &Generation,
        provider: &dyn EmbeddingProvider,
        schema: &ParameterSchema,
        columns: usize,
    ) -> Result<Self> {
        base.validate(schema)?;
        let results = query.run(generation, provider, columns)?;
        let mut examples = Vec::with_capacity(results.results.len());
        let mut example_embeddings = Vec::with_capacity(results.results.len());
        for r in &results.results {
            examples.push(generation.get(&r.preset_id).expect("ranked id").clone());
            example_embeddings.push(generation.embedding_of(&r.preset_id)?.clone());
        }
        Ok(Self::assemble(base, query.clone(), examples, example_embeddings, schema))
    }

    fn assemble(
        base: Preset,
        query: Query,
        examples: Vec<Preset>,
        example_embeddings: Vec<EmbeddingVector>,
        schema: &ParameterSchema,
    ) -> Self {
        Self {
            working: base.clone(),
            base,
            query,
            examples,
            example_embeddings,
            selections: vec![Column::Old; schema.groups().len()],
        }
    }

    /// Runs a new query, keeping the base and resetting every selection.
    pub fn research(
        &mut self,
        query: &Query,
        generation: &Generation,
        provider: &dyn EmbeddingProvider,
        schema: &ParameterSchema,
    ) -> Result<()> {
        let columns = self.examples.len().max(EXAMPLE_COLUMNS);
        *self = Self::search(self.base.clone(), query, generation, provider, schema, columns)?;
        Ok(())
    }

    /// Audio search anchored on example `column`, using the embedding saved
    /// when the example was retrieved. The anchor becomes column 1. The base
    /// is kept and selections reset.
    pub fn refine(&mut self, column: usize, generation: &Generation, schema: &ParameterSchema) -> Result<()> {
        let idx = self.example_index(column)?;
        let anchor = self.examples[idx].clone();
        let anchor_vec = self.example_embeddings[idx].clone();
        let columns = self.examples.len().max(EXAMPLE_COLUMNS);
        let in_generation = generation.get(&anchor.id).is_some_and(|p| p.same_values(&anchor));
        let ranked = if in_generation {
            rank_pinned(&anchor_vec, generation, columns, Some(&anchor.id))?
        } else {
            let mut r = rank_pinned(&anchor_vec, generation, columns.saturating_sub(1), None)?;
            r.retain(|x| x.preset_id != anchor.id);
            r
        };
        let mut examples = Vec::with_capacity(columns);
        let mut embeddings = Vec::with_capacity(columns);
        if !in_generation {
            examples.push(anchor.clone());
            embeddings.push(anchor_vec);
        }
        for r in ranked {
            examples.push(generation.get(&r.preset_id).expect("ranked id").clone());
            embeddings.push(generation.embedding_of(&r.preset_id)?.clone());
        }
        *self = Self::assemble(self.base.clone(), Query::Anchor(anchor.id), examples, embeddings, schema);
        Ok(())
    }

    fn example_index(&self, column: usize) -> Result<usize> {
        if column == 0 || column > self.examples.len() {
            return Err(Error::InvalidArgument(format!(
                "column {column} out of range 1..={}",
                self.examples.len()
            )));
        }
        Ok(column - 1)
    }

    fn source(&self, column: Column) -> &Preset {
        match column {
            Column::Old => &self.base,
            Column::Example(n) => &self.examples[n - 1],
        }
    }

    /// Applies a click and returns the new working preset.
    ///
    /// When every group points at the same column the working preset is an
    /// exact clone of that column's preset. Otherwise it keeps the base id
    /// and name and is marked modified.
    pub fn apply(&mut self, target: &GroupTarget, column: Column, schema: &ParameterSchema) -> Result<&Preset> {
        if let Column::Example(n) = column {
            self.example_index(n)?;
        }
        match target {
            GroupTarget::All => self.selections.iter_mut().for_each(|s| *s = column),
            GroupTarget::Group(g) => {
                let gi = schema.group_index(g).ok_or_else(|| Error::UnknownGroup(g.clone()))?;
                self.selections[gi] = column;
            }
        }
        self.working = self.compose(schema);
        Ok(&self.working)
    }

    fn compose(&self, schema: &ParameterSchema) -> Preset {
        let first = self.selections[0];
        if self.selections.iter().all(|&s| s == first) {
            return self.source(first).clone();
        }
        let mut out = self.base.clone();
        for (gi, &sel) in self.selections.iter().enumerate() {
            if sel != Column::Old {
                out.copy_group_from(self.source(sel), schema, gi);
            }
        }
        out.provenance = Provenance::Modified;
        out
    }

    pub fn base(&self) -> &Preset {
        &self.base
    }

    pub fn working(&self) -> &Preset {
        &self.working
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn query_kind(&self) -> QueryKind {
        self.query.kind()
    }

    pub fn examples(&self) -> &[Preset] {
        &self.examples
    }

    pub fn example(&self, column: usize) -> Result<&Preset> {
        Ok(&self.examples[self.example_index(column)?])
    }

    pub fn selections(&self) -> &[Column] {
        &self.selections
    }

    pub fn snapshot(&self, schema: &ParameterSchema) -> MatrixSnapshot {
        MatrixSnapshot {
            base_id: self.base.id.clone(),
            query: self.query.clone(),
            query_kind: self.query_kind(),
            examples: self.examples.iter().map(|p| p.id.clone()).collect(),
            selections: schema.groups().iter().cloned().zip(self.selections.iter().copied()).collect(),
            working_id: self.working.id.clone(),
        }
    }
}
