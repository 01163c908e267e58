//! Genetic mixing: uniform crossover over parameter groups.
//!
//! A breeding operation between parents A and B creates two children. For
//! every group the first child takes A's or B's values with equal
//! probability; the second child takes whichever parent the first did not.
//! Groups move whole, values are never invented. Mixing breeds every
//! unordered pair of favorites with 5 operations, so `n` favorites yield
//! `10 * n * (n - 1) / 2` children.
//!
//! All randomness comes from a ChaCha8 generator seeded with the mix seed;
//! pairs are visited in favorites order (i < j) and operations in sequence,
//! so a seed replays bit-identically.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bank::{Generation, GenerationMeta};
use crate::embed::{embed_generation, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::preset::{quantize, ParamValue, Preset, Provenance};
use crate::schema::ParameterSchema;

pub const OPS_PER_PAIR: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parent {
    A,
    B,
}

impl Parent {
    pub fn other(self) -> Self {
        match self {
            Parent::A => Parent::B,
            Parent::B => Parent::A,
        }
    }
}

/// Group-to-parent assignment for one child, indexed by schema group order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossoverPlan {
    sources: Vec<Parent>,
}

impl CrossoverPlan {
    pub fn new(sources: Vec<Parent>) -> Self {
        Self { sources }
    }

    pub fn random<R: Rng + ?Sized>(groups: usize, rng: &mut R) -> Self {
        Self {
            sources: (0..groups)
                .map(|_| if rng.gen_bool(0.5) { Parent::A } else { Parent::B })
                .collect(),
        }
    }

    pub fn sources(&self) -> &[Parent] {
        &self.sources
    }

    pub fn complement(&self) -> Self {
        Self {
            sources: self.sources.iter().map(|p| p.other()).collect(),
        }
    }

    /// Assembles a child by copying each group from its assigned parent.
    pub fn apply(&self, a: &Preset, b: &Preset, schema: &ParameterSchema) -> Vec<ParamValue> {
        let mut values = a.values().to_vec();
        for (g, parent) in self.sources.iter().enumerate() {
            if *parent == Parent::B {
                for &i in schema.group_members(g) {
                    values[i] = b.value(i);
                }
            }
        }
        values
    }
}

#[derive(Clone, Debug, Default)]
pub struct MixConfig {
    pub ops_per_pair: usize,
    /// Blend continuous values of the two parents instead of copying them.
    /// Off by default; enabling it gives up the complement law.
    pub interpolate: bool,
}

impl MixConfig {
    pub fn standard() -> Self {
        Self {
            ops_per_pair: OPS_PER_PAIR,
            interpolate: false,
        }
    }
}

/// Output of breeding one pair: one plan per operation and two children per
/// plan (`children[2i]` follows `plans[i]`, `children[2i + 1]` its complement).
#[derive(Clone, Debug)]
pub struct Breeding {
    pub plans: Vec<CrossoverPlan>,
    pub children: Vec<Preset>,
}

fn check_same_schema(a: &Preset, b: &Preset, schema: &ParameterSchema) -> Result<()> {
    for p in [a, b] {
        p.validate(schema)
            .map_err(|e| Error::SchemaMismatch(format!("parent {:?}: {e}", p.id)))?;
    }
    Ok(())
}

/// Runs `ops` breeding operations between `a` and `b`.
///
/// Children are named `{a.id}+{b.id}/{n}` with `n` counting from 1;
/// [`mix`] renames them.
pub fn breed_pair<R: Rng + ?Sized>(
    a: &Preset,
    b: &Preset,
    schema: &ParameterSchema,
    ops: usize,
    rng: &mut R,
) -> Result<Breeding> {
    breed_pair_with(a, b, schema, &MixConfig { ops_per_pair: ops, interpolate: false }, rng)
}

pub fn breed_pair_with<R: Rng + ?Sized>(
    a: &Preset,
    b: &Preset,
    schema: &ParameterSchema,
    config: &MixConfig,
    rng: &mut R,
) -> Result<Breeding> {
    if config.ops_per_pair == 0 {
        return Err(Error::InvalidArgument("breeding needs at least one operation".into()));
    }
    check_same_schema(a, b, schema)?;
    let groups = schema.groups().len();
    let mut plans = Vec::with_capacity(config.ops_per_pair);
    let mut children = Vec::with_capacity(2 * config.ops_per_pair);
    for _ in 0..config.ops_per_pair {
        let plan = CrossoverPlan::random(groups, rng);
        let complement = plan.complement();
        let (mut first, mut second) = (plan.apply(a, b, schema), complement.apply(a, b, schema));
        if config.interpolate {
            let t: f64 = rng.gen();
            blend(&mut first, a, b, t);
            blend(&mut second, b, a, t);
        }
        for values in [first, second] {
            let n = children.len() + 1;
            children.push(Preset::from_parts(
                format!("{}+{}/{n}", a.id, b.id),
                format!("{n}"),
                Provenance::Mixed,
                values,
            ));
        }
        plans.push(plan);
    }
    Ok(Breeding { plans, children })
}

fn blend(values: &mut [ParamValue], toward: &Preset, from: &Preset, t: f64) {
    for (i, v) in values.iter_mut().enumerate() {
        if let (ParamValue::Continuous(x), ParamValue::Continuous(y)) = (toward.value(i), from.value(i)) {
            *v = ParamValue::Continuous(quantize((1.0 - t) * x + t * y).clamp(0.0, 1.0));
        }
    }
}

/// Ordered, duplicate-free favorites list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Favorites {
    ids: Vec<String>,
}

impl Favorites {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids<I: IntoIterator<Item = S>, S: Into<String>>(ids: I) -> Result<Self> {
        let mut f = Self::new();
        for id in ids {
            f.add(id)?;
        }
        Ok(f)
    }

    pub fn add(&mut self, id: impl Into<String>) -> Result<()> {
        let id = id.into();
        if self.ids.contains(&id) {
            return Err(Error::InvalidArgument(format!("{id:?} is already a favorite")));
        }
        self.ids.push(id);
        Ok(())
    }

    /// Returns whether the id was present.
    pub fn remove(&mut self, id: &str) -> bool {
        let before = self.ids.len();
        self.ids.retain(|x| x != id);
        before != self.ids.len()
    }

    pub fn clear(&mut self) {
        self.ids.clear();
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NavDirection {
    Next,
    Prev,
    Clear,
}

impl std::str::FromStr for NavDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "next" => Ok(NavDirection::Next),
            "prev" => Ok(NavDirection::Prev),
            "clear" => Ok(NavDirection::Clear),
            other => Err(Error::InvalidArgument(format!("unknown direction {other:?}"))),
        }
    }
}

/// Generations created in one session. Index 0 is the default bank.
#[derive(Clone, Debug)]
pub struct GenerationChain {
    generations: Vec<Arc<Generation>>,
    cursor: usize,
}

impl GenerationChain {
    pub fn new(default_bank: Arc<Generation>) -> Self {
        Self {
            generations: vec![default_bank],
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.generations.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn current(&self) -> &Arc<Generation> {
        &self.generations[self.cursor]
    }

    pub fn get(&self, index: usize) -> Option<&Arc<Generation>> {
        self.generations.get(index)
    }

    pub fn generations(&self) -> &[Arc<Generation>] {
        &self.generations
    }

    /// Appends a generation and moves the cursor onto it.
    pub fn push(&mut self, generation: Arc<Generation>) {
        self.generations.push(generation);
        self.cursor = self.generations.len() - 1;
    }

    /// Next/Prev clamp at the ends; Clear keeps only the default bank.
    pub fn navigate(&mut self, dir: NavDirection) -> usize {
        match dir {
            NavDirection::Next => self.cursor = (self.cursor + 1).min(self.generations.len() - 1),
            NavDirection::Prev => self.cursor = self.cursor.saturating_sub(1),
            NavDirection::Clear => {
                self.generations.truncate(1);
                self.cursor = 0;
            }
        }
        self.cursor
    }

    /// Finds a preset by id, looking at the current generation first and then
    /// the rest of the chain from newest to oldest.
    pub fn find(&self, id: &str) -> Option<(usize, &Preset)> {
        std::iter::once(self.cursor)
            .chain((0..self.generations.len()).rev().filter(|&i| i != self.cursor))
            .find_map(|g| self.generations[g].get(id).map(|p| (g, p)))
    }
}

/// Number of children produced from `favorites` favorites.
pub fn expected_children(favorites: usize, ops_per_pair: usize) -> usize {
    2 * ops_per_pair * favorites * favorites.saturating_sub(1) / 2
}

/// Breeds the favorites into a new, embedded generation without touching the
/// chain. Children are named `g{index}_{n}` in breeding order (n from 1).
pub fn breed_generation(
    favorites: &Favorites,
    chain: &GenerationChain,
    provider: &dyn EmbeddingProvider,
    schema: &ParameterSchema,
    config: &MixConfig,
    seed: u64,
) -> Result<Generation> {
    if favorites.len() < 2 {
        return Err(Error::NotEnoughFavorites(favorites.len()));
    }
    let parents: Vec<&Preset> = favorites
        .ids()
        .iter()
        .map(|id| chain.find(id).map(|(_, p)| p).ok_or_else(|| Error::UnknownPreset(id.clone())))
        .collect::<Result<_>>()?;

    let index = chain.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut children = Vec::with_capacity(expected_children(parents.len(), config.ops_per_pair));
    for i in 0..parents.len() {
        for j in i + 1..parents.len() {
            let bred = breed_pair_with(parents[i], parents[j], schema, config, &mut rng)?;
            children.extend(bred.children);
        }
    }
    for (n, child) in children.iter_mut().enumerate() {
        child.id = format!("g{index}_{}", n + 1);
        child.name = child.id.clone();
    }

    let mut generation = Generation::new(children)?;
    generation.meta = Some(GenerationMeta {
        index,
        parents: favorites.ids().to_vec(),
        seed,
        created_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    });
    embed_generation(&mut generation, provider, schema)?;
    Ok(generation)
}

/// Mixes the favorites, appends the new generation to `chain` and moves the
/// cursor onto it. On any failure the chain is left unchanged.
pub fn mix(
    favorites: &Favorites,
    chain: &mut GenerationChain,
    provider: &dyn EmbeddingProvider,
    schema: &ParameterSchema,
    seed: u64,
) -> Result<Arc<Generation>> {
    let generation = Arc::new(breed_generation(favorites, chain, provider, schema, &MixConfig::standard(), seed)?);
    chain.push(generation.clone());
    Ok(generation)
}
