//! Preset banks ("generations"): storage, file format and the seeded
//! default-bank generator.
//!
//! Bank file format: a header line `presetlab-bank format-version=1`, then
//! one JSON object per line:
//!
//! ```text
//! {"id":"p0001","name":"Preset 0001","provenance":"default","values":{"osc1_wave":"saw","osc1_level":0.731204,...}}
//! ```
//!
//! `values` lists every schema parameter in schema order. Continuous values
//! are written with exactly 6 decimals (round half to even), discrete values
//! as their choice token in a JSON string.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};
use crate::preset::{format_continuous, quantize, ParamValue, Preset, Provenance};
use crate::schema::{ParamKind, ParameterSchema};

pub const BANK_HEADER: &str = "presetlab-bank";
pub const BANK_FORMAT_VERSION: u32 = 1;

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

/// Provenance record for a mixed generation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub index: usize,
    pub parents: Vec<String>,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

impl GenerationMeta {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("meta serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }
}

/// An ordered bank of presets with optional per-preset embeddings.
#[derive(Clone, Debug)]
pub struct Generation {
    uid: u64,
    presets: Vec<Preset>,
    embeddings: Vec<Option<EmbeddingVector>>,
    by_id: HashMap<String, usize>,
    pub meta: Option<GenerationMeta>,
}

impl Generation {
    pub fn new(presets: Vec<Preset>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(presets.len());
        for (i, p) in presets.iter().enumerate() {
            if by_id.insert(p.id.clone(), i).is_some() {
                return Err(Error::InvalidPreset {
                    preset: p.id.clone(),
                    message: "duplicate preset id in bank".into(),
                });
            }
        }
        Ok(Self {
            uid: NEXT_UID.fetch_add(1, Ordering::Relaxed),
            embeddings: vec![None; presets.len()],
            presets,
            by_id,
            meta: None,
        })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new()).expect("empty bank is valid")
    }

    /// Process-unique identity of this preset list; unchanged by attaching
    /// embeddings. Used to key per-generation caches.
    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn presets(&self) -> &[Preset] {
        &self.presets
    }

    pub fn len(&self) -> usize {
        self.presets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.presets.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Preset> {
        self.index_of(id).map(|i| &self.presets[i])
    }

    pub fn embedding(&self, index: usize) -> Option<&EmbeddingVector> {
        self.embeddings.get(index).and_then(Option::as_ref)
    }

    pub fn embedding_of(&self, id: &str) -> Result<&EmbeddingVector> {
        let i = self
            .index_of(id)
            .ok_or_else(|| Error::UnknownPreset(id.to_string()))?;
        self.embedding(i).ok_or_else(|| Error::NotEmbedded(id.to_string()))
    }

    pub fn is_embedded(&self) -> bool {
        self.embeddings.iter().all(Option::is_some)
    }

    /// Embeddings in preset order; errors on the first preset without one.
    pub fn embeddings(&self) -> Result<Vec<&EmbeddingVector>> {
        self.embeddings
            .iter()
            .zip(&self.presets)
            .map(|(e, p)| e.as_ref().ok_or_else(|| Error::NotEmbedded(p.id.clone())))
            .collect()
    }

    pub(crate) fn missing_embeddings(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.embeddings[i].is_none()).collect()
    }

    pub fn set_embedding(&mut self, index: usize, embedding: EmbeddingVector) {
        self.embeddings[index] = Some(embedding);
    }

    pub fn load(path: impl AsRef<Path>, schema: &ParameterSchema) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, schema)
    }

    /// Parses bank text. An empty input yields an empty generation.
    pub fn parse(text: &str, schema: &ParameterSchema) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            None => return Ok(Self::empty()),
            Some((n, header)) => check_header(n, header)?,
        }
        let presets = lines
            .map(|(n, line)| parse_record(n, line, schema))
            .collect::<Result<Vec<_>>>()?;
        Self::new(presets)
    }

    pub fn save(&self, path: impl AsRef<Path>, schema: &ParameterSchema) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text(schema)).map_err(|e| Error::io(path, e))
    }

    pub fn to_text(&self, schema: &ParameterSchema) -> String {
        let mut out = format!("{BANK_HEADER} format-version={BANK_FORMAT_VERSION}\n");
        for p in &self.presets {
            out.push_str(&format_record(p, schema));
            out.push('\n');
        }
        out
    }
}

fn check_header(line_no: usize, line: &str) -> Result<()> {
    let expected = format!("{BANK_HEADER} format-version={BANK_FORMAT_VERSION}");
    if line.split_whitespace().collect::<Vec<_>>().join(" ") != expected {
        return Err(Error::parse(line_no, format!("expected header {expected:?}")));
    }
    Ok(())
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// One bank line for `preset`.
pub fn format_record(preset: &Preset, schema: &ParameterSchema) -> String {
    let values: Vec<String> = schema
        .params()
        .iter()
        .zip(preset.values())
        .map(|(spec, v)| {
            let token = match v {
                ParamValue::Continuous(x) => format_continuous(*x),
                ParamValue::Discrete(_) => json_str(&spec.format_value(v)),
            };
            format!("{}:{}", json_str(&spec.id), token)
        })
        .collect();
    format!(
        "{{\"id\":{},\"name\":{},\"provenance\":{},\"values\":{{{}}}}}",
        json_str(&preset.id),
        json_str(&preset.name),
        json_str(preset.provenance.as_str()),
        values.join(",")
    )
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    name: String,
    provenance: String,
    values: serde_json::Map<String, serde_json::Value>,
}

fn parse_record(line_no: usize, line: &str, schema: &ParameterSchema) -> Result<Preset> {
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|e| Error::parse(line_no, e.to_string()))?;
    let provenance: Provenance = raw
        .provenance
        .parse()
        .map_err(|m: String| Error::parse(line_no, m))?;
    let invalid = |message: String| Error::InvalidPreset {
        preset: raw.id.clone(),
        message: format!("line {line_no}: {message}"),
    };

    if let Some(unknown) = raw.values.keys().find(|k| schema.param_index(k).is_none()) {
        return Err(invalid(format!("unknown parameter id {unknown:?}")));
    }
    let mut values = Vec::with_capacity(schema.len());
    for spec in schema.params() {
        let v = raw
            .values
            .get(&spec.id)
            .ok_or_else(|| invalid(format!("missing parameter {:?}", spec.id)))?;
        let value = match (&spec.kind, v) {
            (ParamKind::Continuous, serde_json::Value::Number(n)) => {
                let x = n.as_f64().ok_or_else(|| invalid(format!("{}: bad number", spec.id)))?;
                ParamValue::Continuous(quantize(x))
            }
            (ParamKind::Discrete { .. }, serde_json::Value::String(s)) => {
                spec.parse_value(s).map_err(&invalid)?
            }
            (ParamKind::Continuous, _) => {
                return Err(invalid(format!("{}: type mismatch, expected number", spec.id)))
            }
            (ParamKind::Discrete { .. }, _) => {
                return Err(invalid(format!("{}: type mismatch, expected choice string", spec.id)))
            }
        };
        spec.check(&value).map_err(&invalid)?;
        values.push(value);
    }
    Ok(Preset::from_parts(raw.id, raw.name, provenance, values))
}

/// Settings for the seeded default-bank generator.
#[derive(Clone, Debug)]
pub struct BankGenConfig {
    pub count: usize,
    pub seed: u64,
    /// Probability that a parameter is left at its default in each preset.
    pub default_fraction: f64,
}

impl Default for BankGenConfig {
    fn default() -> Self {
        Self {
            count: 200,
            seed: 0,
            default_fraction: 0.6,
        }
    }
}

/// Generates a deterministic bank: every parameter is held at its default
/// with probability `default_fraction`, otherwise sampled uniformly
/// (continuous) or uniformly over choices (discrete). ChaCha8 seeded with
/// `seed` drives all draws.
pub fn generate_bank(schema: &ParameterSchema, config: &BankGenConfig) -> Generation {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let width = config.count.to_string().len().max(4);
    let presets = (1..=config.count)
        .map(|n| {
            let values = schema
                .params()
                .iter()
                .map(|spec| {
                    if rng.gen_bool(config.default_fraction.clamp(0.0, 1.0)) {
                        return spec.default;
                    }
                    match &spec.kind {
                        ParamKind::Continuous => ParamValue::Continuous(quantize(rng.gen::<f64>())),
                        ParamKind::Discrete { choices } => {
                            ParamValue::Discrete(rng.gen_range(0..choices.len() as u32))
                        }
                    }
                })
                .collect();
            Preset::from_parts(
                format!("p{n:0width$}"),
                format!("Preset {n:0width$}"),
                Provenance::Default,
                values,
            )
        })
        .collect();
    Generation::new(presets).expect("generated ids are unique")
}
