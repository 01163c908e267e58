mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use presetlab_core::bank::{generate_bank, BankGenConfig, Generation};
use presetlab_core::embed::{
    embed_generation, format_embedding_file, EmbeddingKey, EmbeddingProvider, LookupProvider, SpectralProvider,
};
use presetlab_core::highlight::{group_importance, Baselines, HighlightConfig};
use presetlab_core::mix::{breed_generation, Favorites, GenerationChain, MixConfig};
use presetlab_core::render::render;
use presetlab_core::schema::ParameterSchema;
use presetlab_core::search::Query;
use presetlab_core::Error;

use config::CliConfig;

#[derive(Parser)]
#[command(name = "presetlab", version, about = "Synth preset bank generation, search, mixing and highlighting")]
struct Cli {
    /// Directory every relative path resolves against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Config file (default: presetlab.toml in the work directory, if present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Structured JSON on stdout instead of tab-separated rows.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Sources {
    /// Schema file (default: the reference schema).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Bank file (default: the generated 200-preset bank, seed 0).
    #[arg(long)]
    bank: Option<PathBuf>,
    /// `spectral` or `file:PATH`.
    #[arg(long)]
    provider: Option<String>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct QueryArgs {
    #[arg(long)]
    text: Option<String>,
    /// Preset id to use as an audio query.
    #[arg(long)]
    anchor: Option<String>,
}

impl QueryArgs {
    fn query(&self) -> Query {
        match (&self.text, &self.anchor) {
            (Some(t), _) => Query::Text(t.clone()),
            (None, Some(a)) => Query::Anchor(a.clone()),
            (None, None) => unreachable!("clap requires one of --text/--anchor"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded bank file.
    BankGen {
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render and embed every preset of a bank into an embedding file.
    Embed {
        #[command(flatten)]
        sources: Sources,
        /// Also store the embedding of this text query (repeatable).
        #[arg(long = "query")]
        queries: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the bank against a text or audio query.
    Search {
        #[command(flatten)]
        sources: Sources,
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Breed a new generation from favorites.
    Mix {
        #[command(flatten)]
        sources: Sources,
        /// Comma-separated preset ids.
        #[arg(long, value_delimiter = ',', required = true)]
        favorites: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the children as a bank file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score parameter groups for a query.
    Highlight {
        #[command(flatten)]
        sources: Sources,
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value_t = 100)]
        corpus: usize,
    },
    /// Render one preset to a WAV file.
    Render {
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the schema in its text form.
    Schema {
        #[arg(long)]
        schema: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Data(String),
    Provider(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Provider(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Provider(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_provider_error() {
            Failure::Provider(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

type Outcome = Result<(String, Value), Failure>;

struct Ctx {
    workdir: PathBuf,
    config: CliConfig,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        self.workdir.join(p)
    }

    fn schema(&self, flag: &Option<PathBuf>) -> Result<ParameterSchema, Failure> {
        match flag.as_ref().or(self.config.schema.as_ref()) {
            Some(p) => Ok(ParameterSchema::load(self.path(p))?),
            None => Ok(ParameterSchema::reference()),
        }
    }

    fn bank(&self, flag: &Option<PathBuf>, schema: &ParameterSchema) -> Result<Generation, Failure> {
        match flag.as_ref().or(self.config.bank.as_ref()) {
            Some(p) => Ok(Generation::load(self.path(p), schema)?),
            None => Ok(generate_bank(schema, &BankGenConfig::default())),
        }
    }

    fn provider(&self, flag: &Option<String>) -> Result<Box<dyn EmbeddingProvider>, Failure> {
        let spec = flag.as_deref().or(self.config.provider.as_deref()).unwrap_or("spectral");
        match spec {
            "spectral" => Ok(Box::new(SpectralProvider::new())),
            s => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => {
                    LookupProvider::load(self.path(Path::new(p))).map(|l| Box::new(l) as Box<dyn EmbeddingProvider>).map_err(|e| Failure::Provider(e.to_string()))
                }
                _ => Err(Failure::Usage(format!("unknown provider {s:?} (want spectral or file:PATH)"))),
            },
        }
    }

    /// Schema, embedded bank and provider for the query commands.
    fn engine(&self, s: &Sources) -> Result<(ParameterSchema, Generation, Box<dyn EmbeddingProvider>), Failure> {
        let schema = self.schema(&s.schema)?;
        let mut bank = self.bank(&s.bank, &schema)?;
        let provider = self.provider(&s.provider)?;
        embed_generation(&mut bank, provider.as_ref(), &schema)?;
        Ok((schema, bank, provider))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((text, value)) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&value).expect("output serializes"));
            } else {
                print!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("presetlab: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let config = CliConfig::discover(&cli.workdir, cli.config.as_deref()).map_err(Failure::Data)?;
    let ctx = Ctx {
        workdir: cli.workdir.clone(),
        config,
    };
    match &cli.command {
        Command::BankGen { schema, count, seed, out } => bank_gen(&ctx, schema, *count, *seed, out),
        Command::Embed { sources, queries, out } => embed(&ctx, sources, queries, out),
        Command::Search { sources, query, k } => search(&ctx, sources, &query.query(), *k),
        Command::Mix {
            sources,
            favorites,
            seed,
            out,
        } => mix(&ctx, sources, favorites, *seed, out.as_deref()),
        Command::Highlight { sources, query, corpus } => highlight(&ctx, sources, &query.query(), *corpus),
        Command::Render {
            schema,
            bank,
            preset,
            out,
        } => render_cmd(&ctx, schema, bank, preset, out),
        Command::Schema { schema } => {
            let s = ctx.schema(schema)?;
            let groups: Vec<Value> = s
                .groups()
                .iter()
                .map(|g| json!({ "group": g, "params": s.params().iter().filter(|p| &p.group == g).map(|p| p.id.clone()).collect::<Vec<_>>() }))
                .collect();
            Ok((s.to_text(), json!({ "groups": groups })))
        }
    }
}

fn bank_gen(ctx: &Ctx, schema: &Option<PathBuf>, count: usize, seed: u64, out: &Path) -> Outcome {
    let schema = ctx.schema(schema)?;
    let bank = generate_bank(
        &schema,
        &BankGenConfig {
            count,
            seed,
            ..BankGenConfig::default()
        },
    );
    let path = ctx.path(out);
    bank.save(&path, &schema)?;
    Ok((
        format!("presets\t{count}\n"),
        json!({ "presets": count, "seed": seed, "out": out }),
    ))
}

fn embed(ctx: &Ctx, sources: &Sources, queries: &[String], out: &Path) -> Outcome {
    let (_, bank, provider) = ctx.engine(sources)?;
    let mut text_rows = Vec::with_capacity(queries.len());
    for q in queries {
        text_rows.push((q.clone(), provider.embed_text(q)?));
    }
    let mut rows: Vec<(EmbeddingKey, _)> = bank
        .embeddings()?
        .into_iter()
        .zip(bank.presets())
        .map(|(v, p)| (EmbeddingKey::Preset(p.id.clone()), v))
        .collect();
    rows.extend(text_rows.iter().map(|(q, v)| (EmbeddingKey::Text(q.clone()), v)));
    let text = format_embedding_file(provider.dimension(), &rows)?;
    let path = ctx.path(out);
    std::fs::write(&path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok((
        format!("embeddings\t{}\ndim\t{}\n", bank.len(), provider.dimension()),
        json!({
            "embeddings": bank.len(),
            "queries": queries.len(),
            "dim": provider.dimension(),
            "provider": provider.name(),
            "out": out,
        }),
    ))
}

fn search(ctx: &Ctx, sources: &Sources, query: &Query, k: usize) -> Outcome {
    let (_, bank, provider) = ctx.engine(sources)?;
    let results = query.run(&bank, provider.as_ref(), k)?;
    let text: String = results
        .results
        .iter()
        .map(|r| format!("{}\t{}\t{:.6}\n", r.rank, r.preset_id, r.score))
        .collect();
    Ok((text, json!({ "query": query, "results": results })))
}

fn mix(ctx: &Ctx, sources: &Sources, favorites: &[String], seed: u64, out: Option<&Path>) -> Outcome {
    let (schema, bank, provider) = ctx.engine(sources)?;
    let favorites = Favorites::from_ids(favorites.iter().cloned())?;
    let chain = GenerationChain::new(Arc::new(bank));
    let generation = breed_generation(&favorites, &chain, provider.as_ref(), &schema, &MixConfig::standard(), seed)?;
    if let Some(out) = out {
        generation.save(ctx.path(out), &schema)?;
    }
    let ids: Vec<&str> = generation.presets().iter().map(|p| p.id.as_str()).collect();
    let mut text = format!("children: {}\n", ids.len());
    for id in &ids {
        text.push_str(id);
        text.push('\n');
    }
    Ok((
        text,
        json!({
            "children": ids.len(),
            "seed": seed,
            "parents": favorites.ids(),
            "ids": ids,
        }),
    ))
}

fn highlight(ctx: &Ctx, sources: &Sources, query: &Query, corpus: usize) -> Outcome {
    let (schema, bank, provider) = ctx.engine(sources)?;
    let config = HighlightConfig {
        corpus_size: corpus,
        ..HighlightConfig::default()
    };
    let baselines = Baselines::compute(&bank, &schema, config.smoothing);
    let importance = group_importance(query, &bank, provider.as_ref(), &schema, &config, &baselines)?;
    let text: String = importance
        .groups
        .iter()
        .map(|g| format!("{}\t{:.6}\n", g.group, g.shade))
        .collect();
    Ok((text, json!({ "query": query, "importance": importance })))
}

fn render_cmd(ctx: &Ctx, schema: &Option<PathBuf>, bank: &Option<PathBuf>, id: &str, out: &Path) -> Outcome {
    let schema = ctx.schema(schema)?;
    let bank = ctx.bank(bank, &schema)?;
    let preset = bank.get(id).ok_or_else(|| Error::UnknownPreset(id.into()))?;
    let recording = render(preset, &schema);
    recording.write_wav(ctx.path(out))?;
    Ok((
        format!("{}\t{}\t{:.3}\n", id, out.display(), recording.duration()),
        json!({
            "preset": id,
            "out": out,
            "sample_rate": recording.sample_rate,
            "samples": recording.samples.len(),
        }),
    ))
}
