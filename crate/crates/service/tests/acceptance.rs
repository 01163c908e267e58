//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use presetlab_core::bank::{generate_bank, BankGenConfig, Generation};
use presetlab_core::embed::{embed_generation, EmbeddingKey, EmbeddingVector, LookupProvider, SpectralProvider};
use presetlab_core::highlight::{
    group_importance, js_distance, score_groups, Baselines, HighlightConfig, CONDITIONED_CORPUS, TOP_PARAMS_PER_GROUP,
};
use presetlab_core::mix::{breed_pair, expected_children, mix, Favorites, GenerationChain, Parent};
use presetlab_core::modify::{search_examples, Column, GroupTarget, EXAMPLE_COLUMNS};
use presetlab_core::preset::{ParamValue, Preset};
use presetlab_core::render::{amp_envelope_trace, render, EnvStage, NOTE_OFF_SAMPLE, SAMPLE_RATE, TOTAL_SAMPLES};
use presetlab_core::schema::{ParamKind, ParameterSchema, ParameterSpec};
use presetlab_core::search::{audio_search, text_search, Query};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

// Tolerances and budgets, one per criterion.
const MIX_BUDGET: Duration = Duration::from_secs(1);
const COMPLEMENT_OPS: usize = 1_000;
const COMPLEMENT_BUDGET: Duration = Duration::from_secs(5);
const FAIRNESS_OPS: usize = 10_000;
const FAIRNESS_TOLERANCE: f64 = 0.02;
const ORACLE_QUERIES: usize = 100;
const ORACLE_MAX_BANK: usize = 10_000;
const ORACLE_BUDGET: Duration = Duration::from_secs(30);
const SELF_RANK_TRIALS: usize = 100;
const SELF_SCORE_TOLERANCE: f64 = 1e-6;
const JS_PAIRS: usize = 1_000;
const JS_TOLERANCE: f64 = 1e-9;
const ECHO_BUDGET: Duration = Duration::from_secs(5);
const RENDER_SPEEDUP: f64 = 50.0;
const RENDER_BANK: usize = 200;
const CLOSURE_SEQUENCES: usize = 1_000;
const ECHO_QUERY: &str = "the sound of an echo";

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Fixture {
    schema: ParameterSchema,
    provider: SpectralProvider,
    bank: Arc<Generation>,
}

fn fixture() -> Fixture {
    let schema = ParameterSchema::reference();
    let provider = SpectralProvider::new();
    let mut bank = generate_bank(&schema, &BankGenConfig { count: 200, seed: 7, default_fraction: 0.6 });
    embed_generation(&mut bank, &provider, &schema).expect("spectral embedding");
    Fixture { schema, provider, bank: Arc::new(bank) }
}

fn c1_count_law(f: &Fixture) -> Outcome {
    let mut timings = Vec::new();
    for n in 2..=8usize {
        let favs = Favorites::from_ids(f.bank.presets()[..n].iter().map(|p| p.id.clone())).map_err(|e| e.to_string())?;
        let mut chain = GenerationChain::new(f.bank.clone());
        let t = Instant::now();
        let g = mix(&favs, &mut chain, &f.provider, &f.schema, 1).map_err(|e| e.to_string())?;
        let took = t.elapsed();
        let want = 10 * n * (n - 1) / 2;
        check(g.len() == want && expected_children(n, 5) == want, || {
            format!("n={n}: {} children, want {want}", g.len())
        })?;
        check(g.is_embedded(), || format!("n={n}: children not embedded"))?;
        timings.push((n, took));
    }
    let (_, five) = timings[3];
    check(five < MIX_BUDGET, || format!("5-favorite mix took {five:?}, budget {MIX_BUDGET:?}"))?;
    let slowest = timings.iter().map(|t| t.1).max().unwrap();
    Ok(format!(
        "10*C(n,2) exact for n=2..8; 5 favorites -> 100 children in {five:.2?} (spectral, bank 200; slowest n=8 {slowest:.2?})"
    ))
}

fn c2_complement(f: &Fixture) -> Outcome {
    let t = Instant::now();
    let (a, b) = (&f.bank.presets()[0], &f.bank.presets()[1]);
    let groups = f.schema.groups().len();
    for seed in 0..(COMPLEMENT_OPS / 5) as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bred = breed_pair(a, b, &f.schema, 5, &mut rng).map_err(|e| e.to_string())?;
        for (op, plan) in bred.plans.iter().enumerate() {
            let (c1, c2) = (&bred.children[2 * op], &bred.children[2 * op + 1]);
            for g in 0..groups {
                let members = f.schema.group_members(g);
                let from = |c: &Preset, p: &Preset| members.iter().all(|&i| c.value(i).same_as(&p.value(i)));
                let (first, second) = match plan.sources()[g] {
                    Parent::A => (a, b),
                    Parent::B => (b, a),
                };
                check(from(c1, first) && from(c2, second), || {
                    format!("seed {seed} op {op} group {g}: not a verbatim complement")
                })?;
            }
        }
    }
    let took = t.elapsed();
    check(took < COMPLEMENT_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("{COMPLEMENT_OPS} operations, every group verbatim and complemented, {took:.2?}"))
}

fn c3_fairness(f: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (a, b) = (&f.bank.presets()[2], &f.bank.presets()[3]);
    let groups = f.schema.groups().len();
    let mut from_a = vec![0usize; groups];
    let bred = breed_pair(a, b, &f.schema, FAIRNESS_OPS, &mut rng).map_err(|e| e.to_string())?;
    for plan in &bred.plans {
        for (g, s) in plan.sources().iter().enumerate() {
            from_a[g] += usize::from(*s == Parent::A);
        }
    }
    let freqs: Vec<f64> = from_a.iter().map(|&c| c as f64 / FAIRNESS_OPS as f64).collect();
    let worst = freqs.iter().map(|f| (f - 0.5).abs()).fold(0.0, f64::max);
    check(worst <= FAIRNESS_TOLERANCE, || format!("group frequencies {freqs:?}"))?;
    let overall = from_a.iter().sum::<usize>() as f64 / (FAIRNESS_OPS * groups) as f64;
    Ok(format!(
        "{FAIRNESS_OPS} operations: overall P(A)={overall:.4}, worst group |f-0.5|={worst:.4} <= {FAIRNESS_TOLERANCE}"
    ))
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    a.iter().zip(b).map(|(x, y)| (x / na) * (y / nb)).sum()
}

fn oracle_order(scores: &[(String, f64)], pinned: Option<&str>) -> Vec<String> {
    let mut v: Vec<&(String, f64)> = scores.iter().collect();
    v.sort_by(|x, y| {
        let px = Some(x.0.as_str()) == pinned;
        let py = Some(y.0.as_str()) == pinned;
        py.cmp(&px)
            .then(y.1.partial_cmp(&x.1).unwrap())
            .then(x.0.cmp(&y.0))
    });
    v.into_iter().map(|x| x.0.clone()).collect()
}

fn c4_oracle() -> Outcome {
    let t = Instant::now();
    let schema = ParameterSchema::reference();
    let dim = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let sizes = [1usize, 17, 500, 2_000, ORACLE_MAX_BANK];
    let mut checked = 0;
    let mut max_delta: f64 = 0.0;
    for (si, &n) in sizes.iter().enumerate() {
        let mut raw: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            // every seventh vector duplicates an earlier one to force ties
            if i % 7 == 6 {
                let j = rng.gen_range(0..i);
                raw.push(raw[j].clone());
            } else {
                raw.push((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
            }
        }
        // ids deliberately not in insertion order
        let ids: Vec<String> = (0..n).map(|i| format!("x{:05}", (i * 7919) % 100_003)).collect();
        let presets = ids.iter().map(|id| Preset::with_defaults(id.clone(), id.clone(), &schema)).collect();
        let mut g = Generation::new(presets).map_err(|e| e.to_string())?;
        for (i, v) in raw.iter().enumerate() {
            g.set_embedding(i, EmbeddingVector::new(v.clone()).map_err(|e| e.to_string())?);
        }
        let mut provider = LookupProvider::new(dim);
        let per_size = ORACLE_QUERIES / sizes.len();
        for q in 0..per_size {
            let k = [1, 10, 50, n, n + 5][q % 5];
            // text query
            let text = format!("query {si}-{q}");
            let qv: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            provider
                .insert(EmbeddingKey::Text(text.clone()), EmbeddingVector::new(qv.clone()).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let got = text_search(&text, &g, &provider, k).map_err(|e| e.to_string())?;
            let scores: Vec<(String, f64)> = ids.iter().cloned().zip(raw.iter().map(|v| oracle_cosine(&qv, v))).collect();
            let want: Vec<String> = oracle_order(&scores, None).into_iter().take(k).collect();
            let got_ids: Vec<String> = got.results.iter().map(|r| r.preset_id.clone()).collect();
            check(got_ids == want, || format!("text query {text} on bank {n}: order differs"))?;
            for r in &got.results {
                let s = scores.iter().find(|s| s.0 == r.preset_id).unwrap().1;
                max_delta = max_delta.max((s - r.score).abs());
            }
            // audio query
            let anchor = rng.gen_range(0..n);
            let got = audio_search(&ids[anchor], &g, k).map_err(|e| e.to_string())?;
            let scores: Vec<(String, f64)> =
                ids.iter().cloned().zip(raw.iter().map(|v| oracle_cosine(&raw[anchor], v))).collect();
            let want: Vec<String> = oracle_order(&scores, Some(&ids[anchor])).into_iter().take(k).collect();
            let got_ids: Vec<String> = got.results.iter().map(|r| r.preset_id.clone()).collect();
            check(got_ids == want, || format!("anchor {} on bank {n}: order differs", ids[anchor]))?;
            checked += 2;
        }
    }
    let took = t.elapsed();
    check(took < ORACLE_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "{checked} text+audio queries on banks up to {ORACLE_MAX_BANK} match brute-force order exactly (max score delta {max_delta:.1e}), {took:.2?}"
    ))
}

fn c5_self_rank(f: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..SELF_RANK_TRIALS {
        let p = &f.bank.presets()[rng.gen_range(0..f.bank.len())];
        let k = rng.gen_range(1..=60);
        let r = audio_search(&p.id, &f.bank, k).map_err(|e| e.to_string())?;
        let top = &r.results[0];
        check(top.preset_id == p.id && top.rank == 1, || format!("{} not at rank 1", p.id))?;
        worst = worst.max((top.score - 1.0).abs());
    }
    check(worst <= SELF_SCORE_TOLERANCE, || format!("self score off by {worst:e}"))?;
    Ok(format!(
        "{SELF_RANK_TRIALS} trials on the spectral bank: anchor rank 1, |score-1| <= {worst:.1e}"
    ))
}

/// Jensen-Shannon distance from its definition: half the KL divergence of
/// each distribution to the mixture, base 2, square-rooted.
fn js_by_kl(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter()
            .zip(m)
            .map(|(&x, &y)| if x == 0.0 { 0.0 } else { x * (x / y).log2() })
            .sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
    (0.5 * kl(p, &m) + 0.5 * kl(q, &m)).max(0.0).sqrt()
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.15) { 0.0 } else { rng.gen::<f64>() })
        .collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        return v;
    }
    raw.iter().map(|x| x / total).collect()
}

fn c6_js() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for i in 0..JS_PAIRS {
        let n = rng.gen_range(2..=16);
        let p = random_distribution(&mut rng, n);
        let q = random_distribution(&mut rng, n);
        let d = js_distance(&p, &q);
        check((0.0..=1.0).contains(&d), || format!("pair {i}: d={d} outside [0,1]"))?;
        check(d == js_distance(&q, &p), || format!("pair {i}: asymmetric"))?;
        check(js_distance(&p, &p) == 0.0, || format!("pair {i}: d(P,P) != 0"))?;
        worst = worst.max((d - js_by_kl(&p, &q)).abs());
    }
    check(worst <= JS_TOLERANCE, || format!("max deviation from KL definition {worst:e}"))?;
    Ok(format!(
        "{JS_PAIRS} random pairs: symmetric, d(P,P)=0, in [0,1], max |d - KL oracle| = {worst:.1e}"
    ))
}

/// Bank where the delay parameters are active exactly in the presets whose
/// embeddings sit near the echo query vector.
pub fn echo_bank(schema: &ParameterSchema) -> (Generation, LookupProvider) {
    let dim = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut g = generate_bank(schema, &BankGenConfig { count: 400, seed: 8, default_fraction: 0.6 });
    let echo_axis: Vec<f64> = (0..dim).map(|d| if d == 0 { 1.0 } else { 0.0 }).collect();
    let mut provider = LookupProvider::new(dim);
    provider
        .insert(EmbeddingKey::Text(ECHO_QUERY.into()), EmbeddingVector::new(echo_axis).unwrap())
        .unwrap();
    let mut presets = g.presets().to_vec();
    for (i, p) in presets.iter_mut().enumerate() {
        let echo = i % 2 == 0;
        for id in ["delay_send", "delay_time", "delay_feedback", "delay_tone"] {
            let v = if echo { rng.gen_range(0.5..1.0) } else { schema.param(id).unwrap().default.as_continuous().unwrap() };
            p.set(schema, id, ParamValue::Continuous(v)).unwrap();
        }
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.2..0.2)).collect();
        v[if echo { 0 } else { 1 }] += 1.0;
        provider
            .insert(EmbeddingKey::Preset(p.id.clone()), EmbeddingVector::new(v).unwrap())
            .unwrap();
    }
    g = Generation::new(presets).unwrap();
    embed_generation(&mut g, &provider, schema).unwrap();
    (g, provider)
}

fn c7_echo() -> Outcome {
    let t = Instant::now();
    let schema = ParameterSchema::reference();
    let (g, provider) = echo_bank(&schema);
    let config = HighlightConfig::default();
    let baselines = Baselines::compute(&g, &schema, config.smoothing);
    let imp = group_importance(&Query::Text(ECHO_QUERY.into()), &g, &provider, &schema, &config, &baselines)
        .map_err(|e| e.to_string())?;
    let took = t.elapsed();
    let effects = imp.shade_of("Effects1").unwrap();
    let runner_up = imp
        .groups
        .iter()
        .filter(|g| g.group != "Effects1")
        .map(|g| (g.group.as_str(), g.shade))
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    check(effects == 1.0, || format!("Effects1 shade {effects}, groups {:?}", imp.groups))?;
    check(took < ECHO_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "Effects1 shade 1.0 on a 400-preset echo bank (next: {} {:.3}), {took:.2?}",
        runner_up.0, runner_up.1
    ))
}

fn c8_constants(f: &Fixture) -> Outcome {
    let config = HighlightConfig::default();
    let baselines = Baselines::compute(&f.bank, &f.schema, config.smoothing);
    let anchor = Query::Anchor(f.bank.presets()[0].id.clone());
    let imp = group_importance(&anchor, &f.bank, &f.provider, &f.schema, &config, &baselines).map_err(|e| e.to_string())?;
    check(imp.corpus_size == 100 && !imp.truncated && CONDITIONED_CORPUS == 100, || {
        format!("corpus {} truncated {}", imp.corpus_size, imp.truncated)
    })?;
    let matrix = search_examples(f.bank.presets()[1].clone(), &anchor, &f.bank, &f.provider, &f.schema)
        .map_err(|e| e.to_string())?;
    check(matrix.examples().len() == 10 && EXAMPLE_COLUMNS == 10, || {
        format!("{} example columns", matrix.examples().len())
    })?;
    let service = presetlab_service::Config::default().top_k;
    check(service.corpus == 100 && service.examples == 10, || format!("service defaults {service:?}"))?;

    // top-20 insensitivity on a schema with a 21-parameter group
    let wide = |extra: bool| {
        let groups: Vec<String> = (0..13).map(|g| format!("G{g}")).collect();
        let mut params = Vec::new();
        let count = |g: usize| if g == 0 { 20 + usize::from(extra) } else { 1 };
        for (gi, g) in groups.iter().enumerate() {
            for i in 0..count(gi) {
                params.push(ParameterSpec {
                    id: format!("{g}_{i}"),
                    group: g.clone(),
                    group_index: gi,
                    kind: ParamKind::Continuous,
                    default: ParamValue::Continuous(0.0),
                });
            }
        }
        ParameterSchema::new(groups, params).unwrap()
    };
    let (s20, s21) = (wide(false), wide(true));
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for _ in 0..200 {
        let d20: Vec<f64> = (0..s20.len()).map(|_| rng.gen::<f64>()).collect();
        let twentieth = d20[..20].iter().cloned().fold(f64::INFINITY, f64::min);
        let mut d21 = d20[..20].to_vec();
        d21.push(twentieth * rng.gen::<f64>());
        d21.extend(&d20[20..]);
        let (r20, r21) = (
            score_groups(&s20, &d20, TOP_PARAMS_PER_GROUP),
            score_groups(&s21, &d21, TOP_PARAMS_PER_GROUP),
        );
        check(r20 == r21, || "adding a low 21st parameter changed a raw score".to_string())?;
    }
    Ok("corpus_size=100 (not truncated), 10 example columns, service defaults 100/10, top-20 insensitivity on 200 draws".into())
}

fn c9_render(f: &Fixture) -> Outcome {
    let presets = &f.bank.presets()[..RENDER_BANK];
    let t = Instant::now();
    let recordings: Vec<_> = presets.iter().map(|p| render(p, &f.schema)).collect();
    let took = t.elapsed();
    for (p, r) in presets.iter().zip(&recordings) {
        check(r.sample_rate == SAMPLE_RATE && r.samples.len() == TOTAL_SAMPLES, || format!("{}: bad length", p.id))?;
        check(r.samples.iter().all(|s| s.abs() <= 1.0), || format!("{}: sample above 1.0", p.id))?;
        let wav = r.to_wav_bytes().map_err(|e| e.to_string())?;
        let reader = hound::WavReader::new(std::io::Cursor::new(wav)).map_err(|e| e.to_string())?;
        let spec = reader.spec();
        let secs = reader.duration() as f64 / spec.sample_rate as f64;
        check(spec.sample_rate == 48_000 && spec.channels == 1 && spec.bits_per_sample == 16 && secs == 4.0, || {
            format!("{}: wav {spec:?} {secs} s", p.id)
        })?;
        let trace = amp_envelope_trace(p, &f.schema);
        let first_off = trace
            .iter()
            .position(|t| matches!(t.1, EnvStage::Release | EnvStage::Idle))
            .unwrap_or(usize::MAX);
        check(first_off == NOTE_OFF_SAMPLE && NOTE_OFF_SAMPLE == 48_000, || {
            format!("{}: note-off at sample {first_off}", p.id)
        })?;
    }
    let speed = (RENDER_BANK as f64 * 4.0) / took.as_secs_f64();
    check(speed >= RENDER_SPEEDUP, || format!("{speed:.1}x real time"))?;
    Ok(format!(
        "{RENDER_BANK} WAVs 48000 Hz mono 16-bit 4.0 s, note-off at sample 48000; single-thread {speed:.0}x real time"
    ))
}

fn c10_closure(f: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let groups = f.schema.groups().to_vec();
    let mut clicks = 0;
    for seq in 0..CLOSURE_SEQUENCES {
        let base = f.bank.presets()[rng.gen_range(0..f.bank.len())].clone();
        let anchor = f.bank.presets()[rng.gen_range(0..f.bank.len())].id.clone();
        let mut m = search_examples(base.clone(), &Query::Anchor(anchor), &f.bank, &f.provider, &f.schema)
            .map_err(|e| e.to_string())?;
        for _ in 0..rng.gen_range(1..30) {
            let target = if rng.gen_bool(0.1) {
                GroupTarget::All
            } else {
                GroupTarget::Group(groups[rng.gen_range(0..groups.len())].clone())
            };
            let column = match rng.gen_range(0..=10) {
                0 => Column::Old,
                n => Column::Example(n),
            };
            let w = m.apply(&target, column, &f.schema).map_err(|e| e.to_string())?;
            w.validate(&f.schema).map_err(|e| format!("sequence {seq}: {e}"))?;
            clicks += 1;
        }
        let restored = m.apply(&GroupTarget::All, Column::Old, &f.schema).map_err(|e| e.to_string())?;
        let bitwise = restored.values().iter().zip(base.values()).all(|(a, b)| a.same_as(b));
        check(bitwise && restored.id == base.id && restored.provenance == base.provenance, || {
            format!("sequence {seq}: ALL/old did not restore the base")
        })?;
    }
    Ok(format!(
        "{CLOSURE_SEQUENCES} fuzzed sequences ({clicks} clicks) stay valid; ALL/old restores the base bitwise"
    ))
}

struct Server {
    child: Child,
    port: u16,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_server(state_dir: &Path) -> Result<Server, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_presetlab-service"))
        .args(["--port", "0", "--state-dir"])
        .arg(state_dir)
        .env("PRESETLAB_BIND", "127.0.0.1")
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut out = child.stdout.take().unwrap();
    let mut line = Vec::new();
    let mut byte = [0u8];
    while out.read(&mut byte).map_err(|e| e.to_string())? == 1 && byte[0] != b'\n' {
        line.push(byte[0]);
    }
    let line = String::from_utf8_lossy(&line).to_string();
    let port = line
        .rsplit(':')
        .next()
        .and_then(|p| p.trim().parse().ok())
        .ok_or_else(|| format!("unexpected startup line {line:?}"))?;
    Ok(Server { child, port })
}

fn http(port: u16, method: &str, path: &str, body: Option<&Value>) -> Result<(u16, Vec<u8>), String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).map_err(|e| e.to_string())?;
    let payload = body.map(|b| b.to_string()).unwrap_or_default();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )
    .map_err(|e| e.to_string())?;
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).map_err(|e| e.to_string())?;
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").ok_or("no header end")?;
    let head = String::from_utf8_lossy(&raw[..split]).to_string();
    let status = head.split_whitespace().nth(1).and_then(|s| s.parse().ok()).ok_or("no status")?;
    Ok((status, raw[split + 4..].to_vec()))
}

fn json_call(port: u16, method: &str, path: &str, body: Option<Value>) -> Result<Value, String> {
    let (status, bytes) = http(port, method, path, body.as_ref())?;
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    check((200..300).contains(&status), || format!("{method} {path} -> {status} {v}"))?;
    Ok(v)
}

/// Creates a session, favorites five presets and mixes with seed 42.
/// Returns the session id, the served bank bytes and the bank file bytes.
fn seeded_mix(server: &Server, state_dir: &Path) -> Result<(String, Vec<u8>, Vec<u8>), String> {
    let port = server.port;
    let session = json_call(port, "POST", "/sessions", None)?["session"].as_str().unwrap().to_string();
    for i in 1..=5 {
        json_call(port, "POST", "/favorites", Some(json!({"session": session, "preset_id": format!("p{i:04}"), "action": "add"})))?;
    }
    let mixed = json_call(port, "POST", "/mix", Some(json!({"session": session, "seed": 42})))?;
    check(mixed["size"] == 100 && mixed["index"] == 1, || format!("mix returned {mixed}"))?;
    let (status, served) = http(port, "GET", &format!("/generations/1/bank?session={session}"), None)?;
    check(status == 200, || format!("bank fetch status {status}"))?;
    let file = std::fs::read(state_dir.join("generations").join(&session).join("g1.jsonl")).map_err(|e| e.to_string())?;
    Ok((session, served, file))
}

fn c11_replay() -> Outcome {
    let dir_a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir_b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (session_a, served_a, file_a) = {
        let server = start_server(dir_a.path())?;
        seeded_mix(&server, dir_a.path())?
    };
    let (_, served_b, file_b) = {
        let server = start_server(dir_b.path())?;
        seeded_mix(&server, dir_b.path())?
    };
    check(served_a == file_a, || "served bank differs from the file on disk".into())?;
    check(file_a == file_b && served_a == served_b, || "two fresh processes produced different banks".into())?;
    // restart on the first state dir: the logged mix replays to the same bytes
    let server = start_server(dir_a.path())?;
    let (status, replayed) = http(server.port, "GET", &format!("/generations/1/bank?session={session_a}"), None)?;
    check(status == 200 && replayed == file_a, || "replayed session served a different bank".into())?;
    let lines = file_a.iter().filter(|&&b| b == b'\n').count();
    Ok(format!(
        "seed 42 -> identical {}-byte bank ({lines} lines) across two fresh processes and a restart with replay",
        file_a.len()
    ))
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let t = Instant::now();
    let f = fixture();
    println!("fixture: 200-preset spectral bank embedded in {:.2?}", t.elapsed());
    let criteria: Vec<(&str, Criterion)> = vec![
        ("mixing count law", Box::new(|| c1_count_law(&f))),
        ("crossover complement", Box::new(|| c2_complement(&f))),
        ("inheritance fairness", Box::new(|| c3_fairness(&f))),
        ("retrieval oracle equivalence", Box::new(c4_oracle)),
        ("audio-search self-rank", Box::new(|| c5_self_rank(&f))),
        ("JS-distance properties", Box::new(c6_js)),
        ("echo sanity", Box::new(c7_echo)),
        ("highlighter constants", Box::new(|| c8_constants(&f))),
        ("render contract", Box::new(|| c9_render(&f))),
        ("modification closure", Box::new(|| c10_closure(&f))),
        ("seeded replay", Box::new(c11_replay)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
