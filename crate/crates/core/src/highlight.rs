//! Parameter-group importance for a query.
//!
//! Each parameter is treated as a random variable. Its distribution over the
//! whole bank (the baseline) is compared with its distribution over the top
//! presets retrieved for the query, using the Jensen-Shannon distance
//! (square root of the base-2 JS divergence, so it lies in [0, 1]).
//!
//! * Continuous parameters use 10 equal-width bins over [0, 1] plus one
//!   narrow bin for the default value: values within +-0.005 of the default
//!   go to the default bin instead of their equal-width bin.
//! * Discrete parameters use one bin per choice.
//! * Every bin count gets additive smoothing (alpha = 1 by default) before
//!   normalization, so no bin has zero mass.
//!
//! A group's raw score is the mean of its 20 largest parameter distances
//! (all of them for smaller groups). Shades are raw / max raw; if every raw
//! score is 0, every shade is 0.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::bank::Generation;
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::preset::{ParamValue, Preset};
use crate::schema::{ParamKind, ParameterSchema, ParameterSpec};
use crate::search::Query;

pub const CONDITIONED_CORPUS: usize = 100;
pub const TOP_PARAMS_PER_GROUP: usize = 20;
pub const CONTINUOUS_BINS: usize = 10;
/// Half-width of the default-value bin, in millionths (0.005).
pub const DEFAULT_WINDOW_MICROS: i64 = 5_000;

#[derive(Clone, Debug, PartialEq)]
pub struct HighlightConfig {
    pub corpus_size: usize,
    pub top_params: usize,
    pub smoothing: f64,
}

impl Default for HighlightConfig {
    fn default() -> Self {
        Self {
            corpus_size: CONDITIONED_CORPUS,
            top_params: TOP_PARAMS_PER_GROUP,
            smoothing: 1.0,
        }
    }
}

/// Number of bins used for `spec`.
pub fn bin_count(spec: &ParameterSpec) -> usize {
    match &spec.kind {
        ParamKind::Continuous => CONTINUOUS_BINS + 1,
        ParamKind::Discrete { choices } => choices.len(),
    }
}

fn micros(v: f64) -> i64 {
    (v * 1e6).round() as i64
}

/// Bin index of `value`. For continuous parameters bins `0..10` are the
/// equal-width bins and bin 10 is the default bin.
pub fn bin_of(spec: &ParameterSpec, value: &ParamValue) -> usize {
    match (&spec.kind, value) {
        (ParamKind::Continuous, ParamValue::Continuous(v)) => {
            let m = micros(*v);
            if let ParamValue::Continuous(d) = spec.default {
                if (m - micros(d)).abs() <= DEFAULT_WINDOW_MICROS {
                    return CONTINUOUS_BINS;
                }
            }
            ((m * CONTINUOUS_BINS as i64 / 1_000_000).clamp(0, CONTINUOUS_BINS as i64 - 1)) as usize
        }
        (_, ParamValue::Discrete(i)) => *i as usize,
        (ParamKind::Discrete { .. }, ParamValue::Continuous(_)) => 0,
    }
}

/// Smoothed histogram of one parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterDistribution {
    pub param_id: String,
    pub masses: Vec<f64>,
}

impl ParameterDistribution {
    pub fn from_presets<'a>(
        spec: &ParameterSpec,
        index: usize,
        presets: impl IntoIterator<Item = &'a Preset>,
        smoothing: f64,
    ) -> Self {
        let mut counts = vec![0.0; bin_count(spec)];
        for p in presets {
            counts[bin_of(spec, &p.value(index))] += 1.0;
        }
        Self::from_counts(spec.id.clone(), &counts, smoothing)
    }

    pub fn from_counts(param_id: String, counts: &[f64], smoothing: f64) -> Self {
        let smoothed: Vec<f64> = counts.iter().map(|c| c + smoothing).collect();
        let total: f64 = smoothed.iter().sum();
        Self {
            param_id,
            masses: smoothed.iter().map(|c| c / total).collect(),
        }
    }
}

/// Shannon entropy in bits; zero-mass terms contribute nothing.
fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>()
}

/// Jensen-Shannon distance, computed as `H(M) - (H(P) + H(Q)) / 2` with
/// `M = (P + Q) / 2` and base-2 logs, then square-rooted. Lies in [0, 1].
pub fn js_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over different bins");
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let divergence = entropy_bits(&m) - 0.5 * (entropy_bits(p) + entropy_bits(q));
    divergence.clamp(0.0, 1.0).sqrt()
}

/// Baseline distributions of every parameter over a whole generation.
#[derive(Clone, Debug)]
pub struct Baselines {
    pub generation_uid: u64,
    pub smoothing: f64,
    pub distributions: Vec<ParameterDistribution>,
}

impl Baselines {
    pub fn compute(generation: &Generation, schema: &ParameterSchema, smoothing: f64) -> Self {
        Self {
            generation_uid: generation.uid(),
            smoothing,
            distributions: conditioned(schema, generation.presets().iter(), smoothing),
        }
    }
}

fn conditioned<'a>(
    schema: &ParameterSchema,
    presets: impl Iterator<Item = &'a Preset> + Clone,
    smoothing: f64,
) -> Vec<ParameterDistribution> {
    schema
        .params()
        .iter()
        .enumerate()
        .map(|(i, spec)| ParameterDistribution::from_presets(spec, i, presets.clone(), smoothing))
        .collect()
}

/// Baselines per generation, computed once and shared.
#[derive(Debug, Default)]
pub struct BaselineCache {
    entries: Mutex<HashMap<(u64, u64), Arc<Baselines>>>,
}

impl BaselineCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, generation: &Generation, schema: &ParameterSchema, smoothing: f64) -> Arc<Baselines> {
        let key = (generation.uid(), smoothing.to_bits());
        if let Some(b) = self.entries.lock().expect("cache lock").get(&key) {
            return b.clone();
        }
        let computed = Arc::new(Baselines::compute(generation, schema, smoothing));
        self.entries
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert(computed)
            .clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub group: String,
    pub raw: f64,
    pub shade: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupImportance {
    /// One entry per schema group, in schema order.
    pub groups: Vec<GroupScore>,
    /// Index of the group shaded 1.0; `None` when every raw score is 0.
    pub max_group: Option<usize>,
    /// Number of presets the conditioned distributions were built from.
    pub corpus_size: usize,
    /// Set when the bank was smaller than the requested corpus.
    pub truncated: bool,
    /// Per-parameter JS distance, in schema order.
    pub param_distances: Vec<f64>,
}

impl GroupImportance {
    pub fn shade_of(&self, group: &str) -> Option<f64> {
        self.groups.iter().find(|g| g.group == group).map(|g| g.shade)
    }
}

/// Mean of the `top` largest values (all of them if there are fewer).
pub fn top_mean(values: &[f64], top: usize) -> f64 {
    if values.is_empty() || top == 0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let n = top.min(sorted.len());
    sorted[..n].iter().sum::<f64>() / n as f64
}

/// Normalizes raw scores to shades in [0, 1].
///
/// The first group holding the maximum is the only one shaded exactly 1.0;
/// later groups tied with it get the largest value below 1.0.
pub fn shades(raw: &[f64]) -> (Vec<f64>, Option<usize>) {
    let mut argmax: Option<usize> = None;
    for (i, &r) in raw.iter().enumerate() {
        if r > 0.0 && argmax.is_none_or(|m| r > raw[m]) {
            argmax = Some(i);
        }
    }
    let Some(m) = argmax else {
        return (vec![0.0; raw.len()], None);
    };
    let max = raw[m];
    let below_one = f64::from_bits(1.0f64.to_bits() - 1);
    let shades = raw
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let s = (r / max).clamp(0.0, 1.0);
            if i != m && s >= 1.0 {
                below_one
            } else {
                s
            }
        })
        .collect();
    (shades, Some(m))
}

/// Group scores from per-parameter distances.
pub fn score_groups(schema: &ParameterSchema, distances: &[f64], top: usize) -> Vec<f64> {
    (0..schema.groups().len())
        .map(|g| {
            let members: Vec<f64> = schema.group_members(g).iter().map(|&i| distances[i]).collect();
            top_mean(&members, top)
        })
        .collect()
}

/// Importance of each group given an explicit conditioned preset set.
pub fn importance_for_corpus(
    schema: &ParameterSchema,
    baselines: &Baselines,
    corpus: &[&Preset],
    config: &HighlightConfig,
    truncated: bool,
) -> GroupImportance {
    let conditioned = conditioned(schema, corpus.iter().copied(), config.smoothing);
    let param_distances: Vec<f64> = baselines
        .distributions
        .iter()
        .zip(&conditioned)
        .map(|(b, c)| js_distance(&b.masses, &c.masses))
        .collect();
    let raw = score_groups(schema, &param_distances, config.top_params);
    let (shade, max_group) = shades(&raw);
    GroupImportance {
        groups: schema
            .groups()
            .iter()
            .zip(raw.iter().zip(shade))
            .map(|(g, (&raw, shade))| GroupScore {
                group: g.clone(),
                raw,
                shade,
            })
            .collect(),
        max_group,
        corpus_size: corpus.len(),
        truncated,
        param_distances,
    }
}

/// Retrieves the top presets for `query` and scores every group.
pub fn group_importance(
    query: &Query,
    generation: &Generation,
    provider: &dyn EmbeddingProvider,
    schema: &ParameterSchema,
    config: &HighlightConfig,
    baselines: &Baselines,
) -> Result<GroupImportance> {
    if baselines.generation_uid != generation.uid() {
        return Err(Error::InvalidArgument("baselines belong to another generation".into()));
    }
    let truncated = generation.len() < config.corpus_size;
    let results = query.run(generation, provider, config.corpus_size)?;
    let corpus: Vec<&Preset> = results
        .results
        .iter()
        .map(|r| generation.get(&r.preset_id).expect("ranked ids come from the generation"))
        .collect();
    Ok(importance_for_corpus(schema, baselines, &corpus, config, truncated))
}
