//! Offline renderer for the reference subtractive synthesizer.
//!
//! Every preset is played at MIDI note 60 for 4 seconds: the gate is held for
//! the first second and released at sample `SAMPLE_RATE` exactly. The
//! renderer is a pure function of the preset values; parameters it does not
//! map (tuning, arpeggiator, chorus/reverb, ...) are inert for audio.
//!
//! Mapped parameters:
//!
//! | group          | parameters                                                        |
//! |----------------|-------------------------------------------------------------------|
//! | Oscillators    | osc1_wave, osc1_level, osc1_pulse_width, osc2_wave, osc2_level, osc2_detune, noise_level, osc_sync |
//! | HighPassFilter | hpf_cutoff                                                        |
//! | MainFilter     | vcf_cutoff, vcf_resonance, vcf_mode, vcf_env_amount, vcf_drive    |
//! | AmpEnvelope    | amp_attack, amp_decay, amp_sustain, amp_release, amp_env_curve, amp_env_velocity |
//! | ModEnvelope    | mod_attack, mod_decay, mod_sustain, mod_release, mod_env_curve    |
//! | LFO1           | lfo1_rate, lfo1_wave, lfo1_pitch_depth, lfo1_cutoff_depth, lfo1_delay |
//! | LFO2           | lfo2_rate, lfo2_wave, lfo2_amp_depth, lfo2_phase                  |
//! | Amplifier      | amp_gain, amp_saturation                                          |
//! | Modulation     | velocity, modenv_to_cutoff, modenv_to_pitch                       |
//! | Effects1       | delay_send, delay_time, delay_feedback, delay_tone                |
//!
//! Parameters missing from a custom schema fall back to neutral values.

use std::f64::consts::{PI, TAU};
use std::io::Cursor;

use crate::error::{Error, Result};
use crate::preset::{ParamValue, Preset};
use crate::schema::{ParamKind, ParameterSchema};

pub const SAMPLE_RATE: u32 = 48_000;
pub const DURATION_SECS: f64 = 4.0;
pub const GATE_SECS: f64 = 1.0;
pub const MIDI_NOTE: u8 = 60;

/// Sample index at which the note is released.
pub const NOTE_OFF_SAMPLE: usize = SAMPLE_RATE as usize;
pub const TOTAL_SAMPLES: usize = SAMPLE_RATE as usize * 4;

/// Bumped whenever rendering output changes; part of render cache keys.
pub const SYNTH_VERSION: &str = "presetlab-synth/1";

pub fn midi_to_hz(note: u8) -> f64 {
    440.0 * 2f64.powf((note as f64 - 69.0) / 12.0)
}

/// Gate state of the rendered note at sample `i`.
pub fn gate_at(i: usize) -> bool {
    i < NOTE_OFF_SAMPLE
}

/// Mono PCM recording.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Recording {
    pub fn silence(len: usize) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// Sum of squared samples in `[start, end)` seconds.
    pub fn energy_between(&self, start: f64, end: f64) -> f64 {
        let a = (start * self.sample_rate as f64) as usize;
        let b = ((end * self.sample_rate as f64) as usize).min(self.samples.len());
        self.samples[a.min(b)..b].iter().map(|&s| (s as f64) * (s as f64)).sum()
    }

    /// RIFF/WAVE, 16-bit PCM, mono.
    pub fn to_wav_bytes(&self) -> Result<Vec<u8>> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::with_capacity(44 + self.samples.len() * 2));
        {
            let mut writer = hound::WavWriter::new(&mut cursor, spec)
                .map_err(|e| Error::InvalidArgument(format!("wav: {e}")))?;
            for &s in &self.samples {
                let v = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
                writer
                    .write_sample(v)
                    .map_err(|e| Error::InvalidArgument(format!("wav: {e}")))?;
            }
            writer
                .finalize()
                .map_err(|e| Error::InvalidArgument(format!("wav: {e}")))?;
        }
        Ok(cursor.into_inner())
    }

    pub fn write_wav(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_wav_bytes()?).map_err(|e| Error::io(path, e))
    }
}

pub fn rms(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / samples.len() as f64).sqrt()
}

pub fn to_dbfs(rms: f64) -> f64 {
    20.0 * rms.max(1e-12).log10()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Wave {
    Saw,
    Square,
    Triangle,
    Sine,
    Random,
}

impl Wave {
    fn from_token(token: Option<&str>) -> Self {
        match token {
            Some("square") => Wave::Square,
            Some("triangle") => Wave::Triangle,
            Some("sine") => Wave::Sine,
            Some("random") => Wave::Random,
            Some("saw") => Wave::Saw,
            _ => Wave::Saw,
        }
    }

    /// Bipolar value at `phase` in [0,1). `Random` is handled by the caller.
    fn sample(self, phase: f64, pulse_width: f64) -> f64 {
        match self {
            Wave::Saw => 2.0 * phase - 1.0,
            Wave::Square => {
                if phase < pulse_width {
                    1.0
                } else {
                    -1.0
                }
            }
            Wave::Triangle => 1.0 - 4.0 * (phase - 0.5).abs(),
            Wave::Sine | Wave::Random => (TAU * phase).sin(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvStage {
    Attack,
    Decay,
    Sustain,
    Release,
    Idle,
}

/// ADSR envelope. Attack is always linear; decay and release follow the
/// configured curve.
#[derive(Clone, Debug)]
pub struct Adsr {
    attack: f64,
    decay: f64,
    sustain: f64,
    release: f64,
    exponential: bool,
    sample_rate: f64,
    stage: EnvStage,
    level: f64,
    release_step: f64,
    decay_coef: f64,
    release_coef: f64,
}

/// Maps a [0,1] envelope time control to seconds (1 ms .. 10 s, exponential).
pub fn env_time_secs(control: f64) -> f64 {
    0.001 * 10_000f64.powf(control.clamp(0.0, 1.0))
}

/// Per-sample coefficient that closes 60 dB of the distance to the target
/// in `secs`.
fn exp_coef(secs: f64, sample_rate: f64) -> f64 {
    1.0 - (-(1000f64.ln()) / (secs * sample_rate)).exp()
}

impl Adsr {
    pub fn new(attack: f64, decay: f64, sustain: f64, release: f64, exponential: bool, sample_rate: f64) -> Self {
        Self {
            attack,
            decay,
            sustain: sustain.clamp(0.0, 1.0),
            release,
            exponential,
            sample_rate,
            stage: EnvStage::Attack,
            level: 0.0,
            release_step: 0.0,
            decay_coef: exp_coef(decay, sample_rate),
            release_coef: exp_coef(release, sample_rate),
        }
    }

    pub fn stage(&self) -> EnvStage {
        self.stage
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// Advances one sample with the given gate and returns the new level.
    pub fn next(&mut self, gate: bool) -> f64 {
        if !gate && matches!(self.stage, EnvStage::Attack | EnvStage::Decay | EnvStage::Sustain) {
            self.stage = EnvStage::Release;
            self.release_step = self.level / (self.release * self.sample_rate);
        }
        match self.stage {
            EnvStage::Attack => {
                self.level += 1.0 / (self.attack * self.sample_rate);
                if self.level >= 1.0 {
                    self.level = 1.0;
                    self.stage = EnvStage::Decay;
                }
            }
            EnvStage::Decay => {
                if self.exponential {
                    self.level += (self.sustain - self.level) * self.decay_coef;
                    if (self.level - self.sustain).abs() < 1e-6 {
                        self.level = self.sustain;
                        self.stage = EnvStage::Sustain;
                    }
                } else {
                    self.level -= (1.0 - self.sustain) / (self.decay * self.sample_rate);
                    if self.level <= self.sustain {
                        self.level = self.sustain;
                        self.stage = EnvStage::Sustain;
                    }
                }
            }
            EnvStage::Sustain => self.level = self.sustain,
            EnvStage::Release => {
                if self.exponential {
                    self.level -= self.level * self.release_coef;
                } else {
                    self.level -= self.release_step;
                }
                if self.level <= 1e-7 {
                    self.level = 0.0;
                    self.stage = EnvStage::Idle;
                }
            }
            EnvStage::Idle => self.level = 0.0,
        }
        self.level
    }
}

/// Zero-delay-feedback state variable filter.
#[derive(Clone, Debug, Default)]
struct Svf {
    ic1: f64,
    ic2: f64,
    a1: f64,
    a2: f64,
    a3: f64,
    damping: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FilterMode {
    Lowpass,
    Bandpass,
    Highpass,
}

impl Svf {
    fn set(&mut self, cutoff_hz: f64, damping: f64, sample_rate: f64) {
        let g = (PI * cutoff_hz / sample_rate).tan();
        self.a1 = 1.0 / (1.0 + g * (g + damping));
        self.a2 = g * self.a1;
        self.a3 = g * self.a2;
        self.damping = damping;
    }

    fn process(&mut self, x: f64, mode: FilterMode) -> f64 {
        let (a1, a2, a3, damping) = (self.a1, self.a2, self.a3, self.damping);
        let v3 = x - self.ic2;
        let v1 = a1 * self.ic1 + a2 * v3;
        let v2 = self.ic2 + a2 * self.ic1 + a3 * v3;
        self.ic1 = 2.0 * v1 - self.ic1;
        self.ic2 = 2.0 * v2 - self.ic2;
        match mode {
            FilterMode::Lowpass => v2,
            FilterMode::Bandpass => v1,
            FilterMode::Highpass => x - damping * v1 - v2,
        }
    }
}

/// Deterministic xorshift noise in [-1, 1].
#[derive(Clone, Debug)]
struct Noise(u32);

impl Noise {
    fn next(&mut self) -> f64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 17;
        x ^= x << 5;
        self.0 = x;
        (x as f64 / u32::MAX as f64) * 2.0 - 1.0
    }
}

struct Lfo {
    wave: Wave,
    freq: f64,
    phase: f64,
    held: f64,
    noise: Noise,
}

impl Lfo {
    fn new(wave: Wave, freq: f64, phase: f64, seed: u32) -> Self {
        let mut noise = Noise(seed);
        let held = noise.next();
        Self {
            wave,
            freq,
            phase,
            held,
            noise,
        }
    }

    fn next(&mut self, sample_rate: f64) -> f64 {
        let out = match self.wave {
            Wave::Random => self.held,
            w => w.sample(self.phase, 0.5),
        };
        self.phase += self.freq / sample_rate;
        if self.phase >= 1.0 {
            self.phase -= 1.0;
            self.held = self.noise.next();
        }
        out
    }
}

/// Preset values resolved by parameter id, with neutral fallbacks.
struct Controls<'a> {
    preset: &'a Preset,
    schema: &'a ParameterSchema,
}

impl Controls<'_> {
    fn cont(&self, id: &str, fallback: f64) -> f64 {
        match self.preset.get(self.schema, id) {
            Some(ParamValue::Continuous(v)) => v,
            _ => fallback,
        }
    }

    fn token(&self, id: &str) -> Option<&str> {
        let spec = self.schema.param(id)?;
        match (&spec.kind, self.preset.get(self.schema, id)?) {
            (ParamKind::Discrete { choices }, ParamValue::Discrete(i)) => choices.get(i as usize).map(String::as_str),
            _ => None,
        }
    }
}

/// Synthesis settings derived from a preset.
struct Patch {
    osc1_wave: Wave,
    osc1_level: f64,
    pulse_width: f64,
    osc2_wave: Wave,
    osc2_level: f64,
    osc2_ratio: f64,
    noise_level: f64,
    sync: bool,
    hpf_hz: f64,
    cutoff: f64,
    damping: f64,
    filter_mode: FilterMode,
    filter_env: f64,
    drive: f64,
    amp_env: Adsr,
    mod_env: Adsr,
    lfo1: Lfo,
    lfo1_pitch: f64,
    lfo1_cutoff: f64,
    lfo1_delay_samples: f64,
    lfo2: Lfo,
    lfo2_amp: f64,
    gain: f64,
    saturation: f64,
    modenv_pitch: f64,
    delay_send: f64,
    delay_samples: usize,
    delay_feedback: f64,
    delay_tone_coef: f64,
}

impl Patch {
    fn new(preset: &Preset, schema: &ParameterSchema) -> Self {
        let c = Controls { preset, schema };
        let sr = SAMPLE_RATE as f64;
        let amp_env = Adsr::new(
            env_time_secs(c.cont("amp_attack", 0.0)),
            env_time_secs(c.cont("amp_decay", 0.5)),
            c.cont("amp_sustain", 1.0),
            env_time_secs(c.cont("amp_release", 0.3)),
            c.token("amp_env_curve") != Some("linear"),
            sr,
        );
        let mod_env = Adsr::new(
            env_time_secs(c.cont("mod_attack", 0.0)),
            env_time_secs(c.cont("mod_decay", 0.5)),
            c.cont("mod_sustain", 0.0),
            env_time_secs(c.cont("mod_release", 0.3)),
            c.token("mod_env_curve") != Some("linear"),
            sr,
        );
        let velocity = c.cont("velocity", 0.8);
        let vel_sens = c.cont("amp_env_velocity", 0.5);
        let amp = c.cont("amp_gain", 0.7);
        let tone = c.cont("delay_tone", 0.5);
        let tone_hz = 500.0 * 32f64.powf(tone);
        Self {
            osc1_wave: Wave::from_token(c.token("osc1_wave")),
            osc1_level: c.cont("osc1_level", 1.0),
            pulse_width: 0.05 + 0.9 * c.cont("osc1_pulse_width", 0.5),
            osc2_wave: Wave::from_token(c.token("osc2_wave")),
            osc2_level: c.cont("osc2_level", 0.0),
            osc2_ratio: 2f64.powf((c.cont("osc2_detune", 0.5) - 0.5) * 2.0 / 12.0),
            noise_level: c.cont("noise_level", 0.0),
            sync: c.token("osc_sync") == Some("on"),
            hpf_hz: 20.0 * 100f64.powf(c.cont("hpf_cutoff", 0.0)),
            cutoff: c.cont("vcf_cutoff", 1.0),
            damping: 2.0 - 1.95 * c.cont("vcf_resonance", 0.0),
            filter_mode: match c.token("vcf_mode") {
                Some("bandpass") => FilterMode::Bandpass,
                Some("highpass") => FilterMode::Highpass,
                _ => FilterMode::Lowpass,
            },
            filter_env: (c.cont("vcf_env_amount", 0.5) - 0.5) * 2.0 + c.cont("modenv_to_cutoff", 0.0),
            drive: 1.0 + 4.0 * c.cont("vcf_drive", 0.0),
            amp_env,
            mod_env,
            lfo1: Lfo::new(
                Wave::from_token(c.token("lfo1_wave")),
                0.05 * 400f64.powf(c.cont("lfo1_rate", 0.5)),
                0.0,
                0x1234_5678,
            ),
            lfo1_pitch: c.cont("lfo1_pitch_depth", 0.0) * 2.0,
            lfo1_cutoff: c.cont("lfo1_cutoff_depth", 0.0) * 0.5,
            lfo1_delay_samples: c.cont("lfo1_delay", 0.0) * 2.0 * sr,
            lfo2: Lfo::new(
                Wave::from_token(c.token("lfo2_wave")),
                0.05 * 400f64.powf(c.cont("lfo2_rate", 0.5)),
                c.cont("lfo2_phase", 0.0),
                0x8765_4321,
            ),
            lfo2_amp: c.cont("lfo2_amp_depth", 0.0),
            gain: 2.0 * amp * amp * (1.0 - vel_sens * (1.0 - velocity)),
            saturation: c.cont("amp_saturation", 0.0),
            modenv_pitch: c.cont("modenv_to_pitch", 0.0) * 12.0,
            delay_send: c.cont("delay_send", 0.0),
            delay_samples: ((0.02 + 0.98 * c.cont("delay_time", 0.5)) * sr).round() as usize,
            delay_feedback: 0.9 * c.cont("delay_feedback", 0.3),
            delay_tone_coef: 1.0 - (-TAU * tone_hz / sr).exp(),
        }
    }
}

/// Rational tanh approximation, exact +-1 beyond |x| = 3. Monotone, so the
/// output never exceeds 1.0 in magnitude.
pub fn soft_clip(x: f64) -> f64 {
    let x = x.clamp(-3.0, 3.0);
    let x2 = x * x;
    x * (27.0 + x2) / (27.0 + 9.0 * x2)
}

/// LFOs, pitch and filter coefficients are updated once per this many
/// samples.
const CONTROL_BLOCK: usize = 16;

/// Renders `preset` at middle C: gate on for [0, 1) s, release tail to 4 s.
pub fn render(preset: &Preset, schema: &ParameterSchema) -> Recording {
    let mut patch = Patch::new(preset, schema);
    let sr = SAMPLE_RATE as f64;
    let f0 = midi_to_hz(MIDI_NOTE);
    let nyquist_guard = 0.45 * sr;

    let mut out = vec![0.0f32; TOTAL_SAMPLES];
    let mut phase1 = 0.0f64;
    let mut phase2 = 0.0f64;
    let mut noise = Noise(0x9E37_79B9);
    let mut svf = Svf::default();
    let mut freq = f0;
    let control_rate = sr / CONTROL_BLOCK as f64;
    // held LFO outputs for the current control block
    let mut lfo = [0.0f64; 2];
    let hp_coef = 1.0 / (1.0 + TAU * patch.hpf_hz / sr);
    let (mut hp_y, mut hp_x) = (0.0f64, 0.0f64);

    let mut delay_line = vec![0.0f64; patch.delay_samples.max(1)];
    let mut delay_pos = 0usize;
    let mut tone_state = 0.0f64;

    for (i, sample) in out.iter_mut().enumerate() {
        let gate = gate_at(i);
        let amp_level = patch.amp_env.next(gate);
        let mod_level = patch.mod_env.next(gate);
        if i % CONTROL_BLOCK == 0 {
            let lfo_fade = if patch.lfo1_delay_samples > 0.0 {
                (i as f64 / patch.lfo1_delay_samples).min(1.0)
            } else {
                1.0
            };
            lfo = [patch.lfo1.next(control_rate) * lfo_fade, patch.lfo2.next(control_rate)];
            let semis = lfo[0] * patch.lfo1_pitch + mod_level * patch.modenv_pitch;
            freq = f0 * 2f64.powf(semis / 12.0);
            let cutoff_ctl = (patch.cutoff + patch.filter_env * mod_level + lfo[0] * patch.lfo1_cutoff).clamp(0.0, 1.0);
            svf.set((20.0 * 1000f64.powf(cutoff_ctl)).min(nyquist_guard), patch.damping, sr);
        }

        let o1 = patch.osc1_wave.sample(phase1, patch.pulse_width);
        let o2 = patch.osc2_wave.sample(phase2, 0.5);
        phase1 += freq / sr;
        phase2 += freq * patch.osc2_ratio / sr;
        if phase1 >= 1.0 {
            phase1 -= 1.0;
            if patch.sync {
                phase2 = 0.0;
            }
        }
        if phase2 >= 1.0 {
            phase2 -= 1.0;
        }
        let mix = 0.5 * (patch.osc1_level * o1 + patch.osc2_level * o2 + patch.noise_level * noise.next());

        // one-pole high-pass
        hp_y = hp_coef * (hp_y + mix - hp_x);
        hp_x = mix;

        let driven = if patch.drive > 1.0 { soft_clip(hp_y * patch.drive) } else { hp_y };
        let filtered = svf.process(driven, patch.filter_mode);

        let tremolo = 1.0 - patch.lfo2_amp * 0.5 * (1.0 - lfo[1]);
        let mut dry = filtered * amp_level * tremolo * patch.gain;
        if patch.saturation > 0.0 {
            let k = 1.0 + 9.0 * patch.saturation;
            dry = soft_clip(dry * k) / soft_clip(k);
        }

        let mut y = dry;
        if patch.delay_send > 0.0 {
            let delayed = delay_line[delay_pos];
            tone_state += (delayed - tone_state) * patch.delay_tone_coef;
            delay_line[delay_pos] = dry + patch.delay_feedback * tone_state;
            delay_pos = (delay_pos + 1) % delay_line.len();
            y += patch.delay_send * delayed;
        }
        *sample = soft_clip(y) as f32;
        // Idle is final once the gate is off; with no delay the rest is silence.
        if patch.delay_send <= 0.0 && patch.amp_env.stage() == EnvStage::Idle {
            break;
        }
    }
    Recording {
        samples: out,
        sample_rate: SAMPLE_RATE,
    }
}

/// Amplitude-envelope levels and stages for every rendered sample.
pub fn amp_envelope_trace(preset: &Preset, schema: &ParameterSchema) -> Vec<(f64, EnvStage)> {
    let mut env = Patch::new(preset, schema).amp_env;
    (0..TOTAL_SAMPLES)
        .map(|i| {
            let level = env.next(gate_at(i));
            (level, env.stage())
        })
        .collect()
}
