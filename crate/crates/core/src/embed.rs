//! Embedding vectors and providers.
//!
//! A provider maps recordings (and optionally text queries) into one joint
//! space where cosine similarity measures closeness. Two providers ship:
//!
//! * [`SpectralProvider`]: deterministic log-mel / spectral-shape features
//!   computed from the rendered recording. Text is supported through a small
//!   timbre-descriptor lexicon (see [`DescriptorLexicon`]).
//! * [`LookupProvider`]: precomputed vectors (for example produced offline by
//!   a neural text/audio model) loaded from an embedding file.
//!
//! Embedding file format:
//!
//! ```text
//! presetlab-embeddings format-version=1 dim=134
//! p0001 0.0123 -0.0456 ...
//! "the sound of an echo" 0.0311 0.0007 ...
//! ```
//!
//! Bare keys are preset ids, JSON-quoted keys are text queries. Every row
//! carries exactly `dim` decimal components; vectors are L2-normalized on load.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use realfft::num_complex::Complex;
use realfft::{RealFftPlanner, RealToComplex};

use crate::bank::Generation;
use crate::error::{Error, Result};
use crate::preset::Preset;
use crate::render::{render, Recording, GATE_SECS};
use crate::schema::ParameterSchema;

/// Unit-norm embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// L2-normalizes `values`. An all-zero input is replaced by the constant
    /// reference vector (every component `1/sqrt(D)`).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite embedding component".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(Self::reference(values.len()));
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    /// The zero-energy reference vector of dimension `dim`.
    pub fn reference(dim: usize) -> Self {
        Self(vec![1.0 / (dim as f64).sqrt(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity (both vectors are unit norm). Components are
    /// accumulated left to right.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// Source of embeddings in a joint text/audio space. Implementations must be
/// deterministic.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn supports_text(&self) -> bool;

    fn embed_audio(&self, recording: &Recording) -> Result<EmbeddingVector>;

    fn embed_text(&self, query: &str) -> Result<EmbeddingVector>;

    /// Embeds a preset; by default renders it and embeds the recording.
    fn embed_preset(&self, preset: &Preset, schema: &ParameterSchema) -> Result<EmbeddingVector> {
        self.embed_audio(&render(preset, schema))
    }
}

/// Attaches an embedding to every preset of `generation` that lacks one.
///
/// Presets are embedded in parallel; results are collected by preset index.
/// On failure nothing is attached and the error names the first failing
/// preset in bank order.
pub fn embed_generation(
    generation: &mut Generation,
    provider: &dyn EmbeddingProvider,
    schema: &ParameterSchema,
) -> Result<()> {
    let missing = generation.missing_embeddings();
    let computed: Vec<Result<EmbeddingVector>> = missing
        .par_iter()
        .map(|&i| {
            let preset = &generation.presets()[i];
            let wrap = |e: Error| Error::EmbedFailed {
                preset: preset.id.clone(),
                source: Box::new(e),
            };
            let v = provider.embed_preset(preset, schema).map_err(wrap)?;
            if v.dim() != provider.dimension() {
                return Err(wrap(Error::DimensionMismatch {
                    expected: provider.dimension(),
                    got: v.dim(),
                }));
            }
            Ok(v)
        })
        .collect();
    let computed = computed.into_iter().collect::<Result<Vec<_>>>()?;
    for (i, v) in missing.into_iter().zip(computed) {
        generation.set_embedding(i, v);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Spectral provider

pub const MEL_BANDS: usize = 64;
pub const FFT_SIZE: usize = 2048;
pub const HOP_SIZE: usize = 1024;
/// 64 mel bands x (attack, release) + (centroid, flatness, rolloff) x 2.
pub const SPECTRAL_DIM: usize = MEL_BANDS * 2 + 6;

const DB_FLOOR: f64 = -100.0;
const ROLLOFF_FRACTION: f64 = 0.85;
const SILENT_POWER: f64 = 1e-12;

/// Offsets of the scalar features inside a spectral embedding.
pub mod layout {
    use super::MEL_BANDS;
    pub const ATTACK_MEL: usize = 0;
    pub const RELEASE_MEL: usize = MEL_BANDS;
    pub const ATTACK_CENTROID: usize = 2 * MEL_BANDS;
    pub const ATTACK_FLATNESS: usize = 2 * MEL_BANDS + 1;
    pub const ATTACK_ROLLOFF: usize = 2 * MEL_BANDS + 2;
    pub const RELEASE_CENTROID: usize = 2 * MEL_BANDS + 3;
    pub const RELEASE_FLATNESS: usize = 2 * MEL_BANDS + 4;
    pub const RELEASE_ROLLOFF: usize = 2 * MEL_BANDS + 5;
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-mel filters over the rfft bins, peak gain 1.
fn mel_filterbank(bands: usize, fft_size: usize, sample_rate: f64, f_min: f64, f_max: f64) -> Vec<Vec<(usize, f64)>> {
    let bins = fft_size / 2 + 1;
    let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (bands + 1) as f64))
        .collect();
    let bin_hz = sample_rate / fft_size as f64;
    (0..bands)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..bins)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

/// Band energy in dB mapped from [DB_FLOOR, 0] to [0, 1].
fn mel_level(energy: f64) -> f64 {
    let db = 10.0 * (energy + SILENT_POWER * 1e-2).log10();
    ((db - DB_FLOOR) / -DB_FLOOR).clamp(0.0, 1.0)
}

/// Per-window spectral summary.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowFeatures {
    /// Mean over frames of log-mel energy mapped from [-100 dB, 0 dB] to [0, 1].
    pub mel: Vec<f64>,
    /// Spectral centroid as a fraction of Nyquist.
    pub centroid: f64,
    /// Geometric over arithmetic mean of the mean power spectrum.
    pub flatness: f64,
    /// 85% energy rolloff as a fraction of Nyquist.
    pub rolloff: f64,
}

/// Deterministic spectral-feature provider (dimension 134).
pub struct SpectralProvider {
    fft: Arc<dyn RealToComplex<f64>>,
    window: Vec<f64>,
    window_sum: f64,
    filters: Vec<Vec<(usize, f64)>>,
    lexicon: DescriptorLexicon,
}

impl Default for SpectralProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl SpectralProvider {
    pub fn new() -> Self {
        let fft = RealFftPlanner::new().plan_fft_forward(FFT_SIZE);
        let window: Vec<f64> = (0..FFT_SIZE)
            .map(|n| 0.5 - 0.5 * (std::f64::consts::TAU * n as f64 / FFT_SIZE as f64).cos())
            .collect();
        let window_sum = window.iter().sum();
        Self {
            fft,
            window,
            window_sum,
            filters: mel_filterbank(MEL_BANDS, FFT_SIZE, crate::render::SAMPLE_RATE as f64, 20.0, 20_000.0),
            lexicon: DescriptorLexicon::default(),
        }
    }

    fn power_spectrum(&self, frame: &[f32], input: &mut [f64], output: &mut [Complex<f64>], power: &mut [f64]) {
        for ((x, &s), &w) in input.iter_mut().zip(frame).zip(&self.window) {
            *x = s as f64 * w;
        }
        self.fft.process(input, output).expect("buffer sizes come from the plan");
        let scale = 1.0 / (self.window_sum * self.window_sum);
        for (p, c) in power.iter_mut().zip(output.iter()) {
            *p = c.norm_sqr() * scale;
        }
    }

    /// Attack (frames centred before note-off) and release window features.
    pub fn window_features(&self, recording: &Recording) -> (WindowFeatures, WindowFeatures) {
        let split = (GATE_SECS * recording.sample_rate as f64) as usize;
        let nyquist = recording.sample_rate as f64 / 2.0;
        let bins = FFT_SIZE / 2 + 1;
        let mut acc = [WindowAcc::new(bins), WindowAcc::new(bins)];
        let mut input = self.fft.make_input_vec();
        let mut output = self.fft.make_output_vec();
        let mut spectrum = vec![0.0; bins];
        let silent_level = mel_level(0.0);
        let mut start = 0;
        while start + FFT_SIZE <= recording.samples.len() {
            let which = usize::from(start + FFT_SIZE / 2 >= split);
            let a = &mut acc[which];
            let frame = &recording.samples[start..start + FFT_SIZE];
            if frame.iter().all(|&s| s == 0.0) {
                // silent frame: zero spectrum, every band at the floor
                a.mel.iter_mut().for_each(|m| *m += silent_level);
                a.frames += 1;
                start += HOP_SIZE;
                continue;
            }
            self.power_spectrum(frame, &mut input, &mut output, &mut spectrum);
            for (band, filter) in self.filters.iter().enumerate() {
                let e: f64 = filter.iter().map(|&(k, w)| spectrum[k] * w).sum();
                a.mel[band] += mel_level(e);
            }
            for (m, p) in a.power.iter_mut().zip(&spectrum) {
                *m += p;
            }
            a.frames += 1;
            start += HOP_SIZE;
        }
        let [attack, release] = acc;
        (attack.finish(nyquist), release.finish(nyquist))
    }

    /// Raw (unnormalized) 134-dim feature vector.
    pub fn features(&self, recording: &Recording) -> Vec<f64> {
        let (attack, release) = self.window_features(recording);
        let mut v = Vec::with_capacity(SPECTRAL_DIM);
        v.extend(&attack.mel);
        v.extend(&release.mel);
        v.extend([attack.centroid, attack.flatness, attack.rolloff]);
        v.extend([release.centroid, release.flatness, release.rolloff]);
        v
    }
}

struct WindowAcc {
    mel: Vec<f64>,
    power: Vec<f64>,
    frames: usize,
}

impl WindowAcc {
    fn new(bins: usize) -> Self {
        Self {
            mel: vec![0.0; MEL_BANDS],
            power: vec![0.0; bins],
            frames: 0,
        }
    }

    fn finish(self, nyquist: f64) -> WindowFeatures {
        if self.frames == 0 {
            return WindowFeatures {
                mel: vec![0.0; MEL_BANDS],
                centroid: 0.0,
                flatness: 0.0,
                rolloff: 0.0,
            };
        }
        let n = self.frames as f64;
        let mel = self.mel.iter().map(|m| m / n).collect();
        let power: Vec<f64> = self.power.iter().map(|p| p / n).collect();
        let total: f64 = power.iter().sum();
        if total < SILENT_POWER {
            return WindowFeatures {
                mel,
                centroid: 0.0,
                flatness: 0.0,
                rolloff: 0.0,
            };
        }
        let bin_hz = nyquist / (power.len() - 1) as f64;
        let centroid = power
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * bin_hz * p)
            .sum::<f64>()
            / total
            / nyquist;
        // skip DC for flatness
        let body = &power[1..];
        let log_mean = body.iter().map(|p| (p + 1e-30).ln()).sum::<f64>() / body.len() as f64;
        let arith = body.iter().sum::<f64>() / body.len() as f64;
        let flatness = (log_mean.exp() / arith).clamp(0.0, 1.0);
        let mut cumulative = 0.0;
        let mut rolloff_bin = power.len() - 1;
        for (k, p) in power.iter().enumerate() {
            cumulative += p;
            if cumulative >= ROLLOFF_FRACTION * total {
                rolloff_bin = k;
                break;
            }
        }
        WindowFeatures {
            mel,
            centroid,
            flatness,
            rolloff: rolloff_bin as f64 * bin_hz / nyquist,
        }
    }
}

impl EmbeddingProvider for SpectralProvider {
    fn name(&self) -> &str {
        "spectral"
    }

    fn dimension(&self) -> usize {
        SPECTRAL_DIM
    }

    fn supports_text(&self) -> bool {
        true
    }

    fn embed_audio(&self, recording: &Recording) -> Result<EmbeddingVector> {
        EmbeddingVector::new(self.features(recording))
    }

    fn embed_text(&self, query: &str) -> Result<EmbeddingVector> {
        if query.trim().is_empty() {
            return Err(Error::InvalidArgument("empty query".into()));
        }
        EmbeddingVector::new(self.lexicon.profile(query))
    }
}

/// Maps timbre words in a text query onto a target spectral-feature profile.
///
/// The profile starts from a neutral sustained tone and each recognised word
/// shifts it: tail words raise release-window energy, brightness words tilt
/// the mel bands upward, noise words raise flatness, and so on. Unrecognised
/// words are ignored. This is a coarse, transparent stand-in for a learned
/// text encoder, good enough to drive the pipeline end to end.
#[derive(Clone, Debug)]
pub struct DescriptorLexicon {
    entries: Vec<(&'static [&'static str], Shift)>,
}

#[derive(Clone, Copy, Debug)]
struct Shift {
    tail: f64,
    attack: f64,
    tilt: f64,
    noise: f64,
}

impl Default for DescriptorLexicon {
    fn default() -> Self {
        const fn shift(tail: f64, attack: f64, tilt: f64, noise: f64) -> Shift {
            Shift { tail, attack, tilt, noise }
        }
        Self {
            entries: vec![
                (
                    &["echo", "echoing", "delay", "delayed", "repeating", "spacious", "reverb", "ringing", "long", "atmospheric", "evolving", "huge", "large"],
                    shift(0.6, 0.0, 0.0, 0.0),
                ),
                (
                    &["short", "percussive", "punchy", "plucked", "pluck", "staccato", "drum", "tight"],
                    shift(-0.6, 0.2, 0.0, 0.0),
                ),
                (
                    &["bright", "sharp", "harsh", "shrill", "metallic", "thin", "nasal", "clear", "crisp", "brass"],
                    shift(0.0, 0.0, 0.6, 0.0),
                ),
                (
                    &["dark", "mellow", "muffled", "dull", "soft", "warm", "deep", "low", "bass", "calm", "smooth", "weak"],
                    shift(0.0, 0.0, -0.6, 0.0),
                ),
                (
                    &["noisy", "airy", "breathy", "dirty", "rough", "glitchy", "distorted", "wind", "aggressive"],
                    shift(0.0, 0.0, 0.2, 0.6),
                ),
                (
                    &["clean", "pure", "simple", "sine", "organ", "flute"],
                    shift(0.0, 0.0, -0.1, -0.6),
                ),
                (
                    &["loud", "powerful", "full", "rich", "complex", "huge"],
                    shift(0.0, 0.3, 0.1, 0.0),
                ),
                (&["quiet", "soft", "thin", "weak"], shift(0.0, -0.3, 0.0, 0.0)),
            ],
        }
    }
}

impl DescriptorLexicon {
    /// Raw (unnormalized) feature-space profile for `query`.
    pub fn profile(&self, query: &str) -> Vec<f64> {
        let mut total = Shift {
            tail: 0.0,
            attack: 0.0,
            tilt: 0.0,
            noise: 0.0,
        };
        let lowered = query.to_lowercase();
        for word in lowered.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            for (words, shift) in &self.entries {
                if words.contains(&word) {
                    total.tail += shift.tail;
                    total.attack += shift.attack;
                    total.tilt += shift.tilt;
                    total.noise += shift.noise;
                }
            }
        }
        let mut v = vec![0.0; SPECTRAL_DIM];
        for b in 0..MEL_BANDS {
            // position of the band in [-1, 1], low to high
            let pos = 2.0 * b as f64 / (MEL_BANDS - 1) as f64 - 1.0;
            let base = 0.55 - 0.15 * pos;
            let attack = (base + 0.25 * total.tilt * pos + 0.1 * total.attack + 0.1 * total.noise * (pos + 1.0)).clamp(0.0, 1.0);
            let release = (0.5 * base + 0.5 * total.tail + 0.1 * total.tilt * pos).clamp(0.0, 1.0);
            v[layout::ATTACK_MEL + b] = attack;
            v[layout::RELEASE_MEL + b] = release;
        }
        let centroid = (0.1 + 0.1 * total.tilt).clamp(0.0, 1.0);
        let flatness = (0.05 + 0.5 * total.noise).clamp(0.0, 1.0);
        let rolloff = (0.2 + 0.2 * total.tilt + 0.2 * total.noise).clamp(0.0, 1.0);
        v[layout::ATTACK_CENTROID] = centroid;
        v[layout::ATTACK_FLATNESS] = flatness;
        v[layout::ATTACK_ROLLOFF] = rolloff;
        v[layout::RELEASE_CENTROID] = centroid * (0.5 + total.tail.max(0.0));
        v[layout::RELEASE_FLATNESS] = flatness * (0.5 + total.tail.max(0.0));
        v[layout::RELEASE_ROLLOFF] = rolloff * (0.5 + total.tail.max(0.0));
        v
    }
}

// ---------------------------------------------------------------------------
// Lookup provider

pub const EMBEDDING_HEADER: &str = "presetlab-embeddings";
pub const EMBEDDING_FORMAT_VERSION: u32 = 1;

/// Key of an embedding-file row.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum EmbeddingKey {
    Preset(String),
    Text(String),
}

/// Provider backed by precomputed vectors.
#[derive(Clone, Debug)]
pub struct LookupProvider {
    dim: usize,
    presets: HashMap<String, EmbeddingVector>,
    texts: HashMap<String, EmbeddingVector>,
}

impl LookupProvider {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            presets: HashMap::new(),
            texts: HashMap::new(),
        }
    }

    pub fn insert(&mut self, key: EmbeddingKey, vector: EmbeddingVector) -> Result<()> {
        if vector.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        match key {
            EmbeddingKey::Preset(id) => self.presets.insert(id, vector),
            EmbeddingKey::Text(q) => self.texts.insert(q, vector),
        };
        Ok(())
    }

    pub fn preset_count(&self) -> usize {
        self.presets.len()
    }

    pub fn text_count(&self) -> usize {
        self.texts.len()
    }

    pub fn preset_vector(&self, id: &str) -> Result<&EmbeddingVector> {
        self.presets.get(id).ok_or_else(|| Error::NotEmbedded(id.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (n, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing embedding header"))?;
        let dim = parse_embedding_header(n, header)?;
        let mut provider = Self::new(dim);
        for (n, line) in lines {
            let (key, rest) = split_key(n, line)?;
            let values: Vec<f64> = rest
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::parse(n, format!("bad component {t:?}"))))
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: values.len(),
                });
            }
            provider.insert(key, EmbeddingVector::new(values).map_err(|e| Error::parse(n, e.to_string()))?)?;
        }
        Ok(provider)
    }
}

fn parse_embedding_header(line_no: usize, line: &str) -> Result<usize> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(EMBEDDING_HEADER) {
        return Err(Error::parse(line_no, format!("expected {EMBEDDING_HEADER:?} header")));
    }
    let mut version = None;
    let mut dim = None;
    for p in parts {
        match p.split_once('=') {
            Some(("format-version", v)) => version = v.parse::<u32>().ok(),
            Some(("dim", v)) => dim = v.parse::<usize>().ok(),
            _ => return Err(Error::parse(line_no, format!("unexpected header field {p:?}"))),
        }
    }
    if version != Some(EMBEDDING_FORMAT_VERSION) {
        return Err(Error::parse(line_no, "unsupported embedding format-version"));
    }
    match dim {
        Some(d) if d > 0 => Ok(d),
        _ => Err(Error::parse(line_no, "missing or zero dim")),
    }
}

fn split_key(line_no: usize, line: &str) -> Result<(EmbeddingKey, &str)> {
    if line.starts_with('"') {
        let mut stream = serde_json::Deserializer::from_str(line).into_iter::<String>();
        let text = stream
            .next()
            .ok_or_else(|| Error::parse(line_no, "missing key"))?
            .map_err(|e| Error::parse(line_no, format!("bad quoted key: {e}")))?;
        Ok((EmbeddingKey::Text(text), &line[stream.byte_offset()..]))
    } else {
        let (id, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        Ok((EmbeddingKey::Preset(id.to_string()), rest))
    }
}

/// Serializes rows in the embedding file format.
pub fn format_embedding_file(dim: usize, rows: &[(EmbeddingKey, &EmbeddingVector)]) -> Result<String> {
    let mut out = format!("{EMBEDDING_HEADER} format-version={EMBEDDING_FORMAT_VERSION} dim={dim}\n");
    for (key, v) in rows {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
        match key {
            EmbeddingKey::Preset(id) => {
                if id.is_empty() || id.starts_with('"') || id.contains(char::is_whitespace) {
                    return Err(Error::InvalidArgument(format!(
                        "preset id {id:?} cannot be written to an embedding file"
                    )));
                }
                out.push_str(id);
            }
            EmbeddingKey::Text(q) => out.push_str(&serde_json::to_string(q).expect("strings serialize")),
        }
        for c in v.values() {
            let _ = write!(out, " {c}");
        }
        out.push('\n');
    }
    Ok(out)
}

impl EmbeddingProvider for LookupProvider {
    fn name(&self) -> &str {
        "file"
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn supports_text(&self) -> bool {
        !self.texts.is_empty()
    }

    fn embed_audio(&self, _recording: &Recording) -> Result<EmbeddingVector> {
        Err(Error::Provider("lookup provider cannot embed raw audio".into()))
    }

    fn embed_text(&self, query: &str) -> Result<EmbeddingVector> {
        self.texts
            .get(query)
            .cloned()
            .ok_or_else(|| Error::Provider(format!("query {query:?} not embedded")))
    }

    fn embed_preset(&self, preset: &Preset, _schema: &ParameterSchema) -> Result<EmbeddingVector> {
        self.preset_vector(&preset.id).cloned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::{generate_bank, BankGenConfig};
    use crate::render::{SAMPLE_RATE, TOTAL_SAMPLES};

    fn tone(f: impl FnMut(usize) -> f32) -> Recording {
        Recording {
            samples: (0..TOTAL_SAMPLES).map(f).collect(),
            sample_rate: SAMPLE_RATE,
        }
    }

    #[test]
    fn silence_maps_to_reference_vector() {
        let p = SpectralProvider::new();
        let v = p.embed_audio(&Recording::silence(TOTAL_SAMPLES)).unwrap();
        assert_eq!(v, EmbeddingVector::reference(SPECTRAL_DIM));
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_is_flatter_than_sine() {
        let p = SpectralProvider::new();
        let mut state = 0x2545_f491u32;
        let noise = tone(|_| {
            state ^= state << 13;
            state ^= state >> 17;
            state ^= state << 5;
            (state as f32 / u32::MAX as f32) - 0.5
        });
        let sine = tone(|i| 0.5 * (std::f32::consts::TAU * 440.0 * i as f32 / SAMPLE_RATE as f32).sin());
        let fn_ = p.features(&noise);
        let fs = p.features(&sine);
        assert!(fn_[layout::ATTACK_FLATNESS] > fs[layout::ATTACK_FLATNESS]);
        assert!(fn_[layout::RELEASE_FLATNESS] > fs[layout::RELEASE_FLATNESS]);
        assert!(fn_[layout::ATTACK_FLATNESS] > 0.5, "{}", fn_[layout::ATTACK_FLATNESS]);
    }

    #[test]
    fn sine_centroid_near_its_frequency() {
        let p = SpectralProvider::new();
        let sine = tone(|i| 0.5 * (std::f32::consts::TAU * 3000.0 * i as f32 / SAMPLE_RATE as f32).sin());
        let (attack, _) = p.window_features(&sine);
        assert!((attack.centroid * 24_000.0 - 3000.0).abs() < 50.0, "{}", attack.centroid * 24_000.0);
    }

    #[test]
    fn spectral_embedding_is_unit_and_deterministic() {
        let s = ParameterSchema::reference();
        let p = SpectralProvider::new();
        let bank = generate_bank(&s, &BankGenConfig { count: 3, seed: 2, default_fraction: 0.6 });
        for preset in bank.presets() {
            let a = p.embed_preset(preset, &s).unwrap();
            let b = p.embed_preset(preset, &s).unwrap();
            assert_eq!(a.dim(), 134);
            assert!((a.norm() - 1.0).abs() < 1e-6);
            assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn embedding_file_round_trip_and_lookup() {
        let a = EmbeddingVector::new(vec![3.0, 4.0]).unwrap();
        let b = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let text = format_embedding_file(
            2,
            &[
                (EmbeddingKey::Preset("p1".into()), &a),
                (EmbeddingKey::Text("the sound of an \"echo\"".into()), &b),
            ],
        )
        .unwrap();
        let provider = LookupProvider::parse(&text).unwrap();
        assert_eq!(provider.dimension(), 2);
        assert_eq!(provider.preset_vector("p1").unwrap().values(), &[0.6, 0.8]);
        assert_eq!(provider.embed_text("the sound of an \"echo\"").unwrap(), b);
        assert!(matches!(provider.preset_vector("zz"), Err(Error::NotEmbedded(_))));
        assert!(provider.embed_text("missing").is_err());
    }

    #[test]
    fn lookup_file_dimension_512() {
        let mut text = format!("{EMBEDDING_HEADER} format-version=1 dim=512\n");
        text.push_str("p1");
        for i in 0..512 {
            text.push_str(&format!(" {}", (i % 7) as f64 - 3.0));
        }
        text.push('\n');
        let provider = LookupProvider::parse(&text).unwrap();
        let v = provider.preset_vector("p1").unwrap();
        assert_eq!(v.dim(), 512);
        assert!((v.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mixed_dimensions_rejected_at_load() {
        let mut text = format!("{EMBEDDING_HEADER} format-version=1 dim=512\n");
        for (id, d) in [("a", 512), ("b", 256)] {
            text.push_str(id);
            for _ in 0..d {
                text.push_str(" 1");
            }
            text.push('\n');
        }
        assert!(matches!(
            LookupProvider::parse(&text),
            Err(Error::DimensionMismatch { expected: 512, got: 256 })
        ));
    }

    #[test]
    fn embed_generation_is_idempotent_and_handles_empty() {
        let s = ParameterSchema::reference();
        let p = SpectralProvider::new();
        let mut empty = Generation::empty();
        embed_generation(&mut empty, &p, &s).unwrap();
        assert!(empty.is_empty());

        let mut g = generate_bank(&s, &BankGenConfig { count: 4, seed: 9, default_fraction: 0.6 });
        embed_generation(&mut g, &p, &s).unwrap();
        assert!(g.is_embedded());
        let before: Vec<_> = g.embeddings().unwrap().into_iter().cloned().collect();
        embed_generation(&mut g, &p, &s).unwrap();
        let after: Vec<_> = g.embeddings().unwrap().into_iter().cloned().collect();
        assert_eq!(before, after);
    }

    #[test]
    fn embed_generation_failure_names_preset_and_attaches_nothing() {
        let s = ParameterSchema::reference();
        let mut g = generate_bank(&s, &BankGenConfig { count: 3, seed: 9, default_fraction: 0.6 });
        let mut lookup = LookupProvider::new(2);
        lookup
            .insert(EmbeddingKey::Preset("p0001".into()), EmbeddingVector::new(vec![1.0, 0.0]).unwrap())
            .unwrap();
        let err = embed_generation(&mut g, &lookup, &s).unwrap_err();
        match err {
            Error::EmbedFailed { preset, .. } => assert_eq!(preset, "p0002"),
            other => panic!("{other}"),
        }
        assert!(g.embedding(0).is_none());
    }

    #[test]
    fn zero_vector_normalizes_to_reference() {
        let v = EmbeddingVector::new(vec![0.0; 4]).unwrap();
        assert_eq!(v.values(), &[0.5; 4]);
        assert!(EmbeddingVector::new(vec![f64::NAN, 1.0]).is_err());
    }
}
