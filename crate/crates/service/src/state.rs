use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use presetlab_core::bank::{format_record, generate_bank, BankGenConfig, Generation};
use presetlab_core::embed::{embed_generation, EmbeddingProvider, LookupProvider, SpectralProvider};
use presetlab_core::highlight::BaselineCache;
use presetlab_core::preset::Preset;
use presetlab_core::render::{render, SYNTH_VERSION};
use presetlab_core::schema::ParameterSchema;
use presetlab_core::{Error, Result};

use crate::config::{Config, ProviderSpec, SeedPolicy};
use crate::session::{now_secs, Engine, Mutation, Session};
use crate::store::{Record, SessionStore};

const WAV_CACHE_LIMIT: usize = 512;

pub struct AppState {
    pub engine: Arc<Engine>,
    pub config: Config,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    store: Option<SessionStore>,
    wav_cache: Mutex<HashMap<u64, Arc<Vec<u8>>>>,
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

impl AppState {
    /// Loads schema, provider and bank, embeds generation 0 and replays any
    /// session log. Relative paths in `config` resolve against `base_dir`.
    pub fn build(config: Config, base_dir: Option<&Path>) -> Result<Self> {
        let schema = match &config.schema {
            Some(p) => ParameterSchema::load(resolve(base_dir, p))?,
            None => ParameterSchema::reference(),
        };
        let provider: Arc<dyn EmbeddingProvider> = match config.provider_spec().map_err(Error::InvalidArgument)? {
            ProviderSpec::Spectral => Arc::new(SpectralProvider::new()),
            ProviderSpec::File(p) => Arc::new(LookupProvider::load(resolve(base_dir, &p))?),
        };
        let mut bank = match &config.bank {
            Some(p) => Generation::load(resolve(base_dir, p), &schema)?,
            None => generate_bank(
                &schema,
                &BankGenConfig {
                    count: config.bank_count,
                    seed: config.bank_seed,
                    ..BankGenConfig::default()
                },
            ),
        };
        embed_generation(&mut bank, provider.as_ref(), &schema)?;
        let engine = Arc::new(Engine {
            schema,
            provider,
            default_bank: Arc::new(bank),
            top_k: config.top_k.clone(),
            baselines: BaselineCache::new(),
        });
        let state_dir = config.state_dir.as_ref().map(|d| resolve(base_dir, d));
        let config = Config { state_dir, ..config };
        let (store, records) = match &config.state_dir {
            Some(dir) => {
                let (s, r) = SessionStore::open(dir)?;
                (Some(s), r)
            }
            None => (None, Vec::new()),
        };
        let state = Self {
            engine,
            config,
            sessions: RwLock::new(HashMap::new()),
            store,
            wav_cache: Mutex::new(HashMap::new()),
        };
        state.replay(records)?;
        Ok(state)
    }

    fn replay(&self, records: Vec<Record>) -> Result<()> {
        let mut sessions = self.sessions.write().expect("sessions lock");
        for r in records {
            match r {
                Record::Created { session, at } => {
                    let s = Session::new(session.clone(), &self.engine, at);
                    sessions.insert(session, Arc::new(Mutex::new(s)));
                }
                Record::Mutation { session, at, mutation } => {
                    let Some(s) = sessions.get(&session) else { continue };
                    let mut s = s.lock().expect("session lock");
                    // Only successful mutations are logged, so replay failures
                    // mean the environment changed (bank, provider); keep going.
                    if s.apply(&self.engine, &mutation, at).is_ok() {
                        self.write_generation_files(&s, &mutation, false)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn create_session(&self) -> Result<String> {
        let id = uuid::Uuid::new_v4().to_string();
        let at = now_secs();
        if let Some(store) = &self.store {
            store.append(&Record::Created { session: id.clone(), at })?;
        }
        let s = Session::new(id.clone(), &self.engine, at);
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(id.clone(), Arc::new(Mutex::new(s)));
        Ok(id)
    }

    pub fn session(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.read().expect("sessions lock").get(id).cloned()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("sessions lock").len()
    }

    /// Applies and logs a mutation. The caller holds the session lock.
    pub fn mutate(&self, session: &mut Session, mutation: Mutation) -> Result<()> {
        let at = now_secs();
        session.apply(&self.engine, &mutation, at)?;
        if let Some(store) = &self.store {
            store.append(&Record::Mutation {
                session: session.id.clone(),
                at,
                mutation: mutation.clone(),
            })?;
        }
        self.write_generation_files(session, &mutation, true)
    }

    pub fn mix_seed(&self) -> u64 {
        match self.config.seed_policy {
            SeedPolicy::Fixed => self.config.default_seed,
            SeedPolicy::Random => rand::random(),
        }
    }

    pub fn generation_dir(&self, session: &str) -> Option<PathBuf> {
        self.config.state_dir.as_ref().map(|d| d.join("generations").join(session))
    }

    /// After a mix, writes `g{index}.jsonl` and `g{index}.meta.json`. During
    /// replay existing files are left alone so metadata timestamps survive.
    fn write_generation_files(&self, session: &Session, mutation: &Mutation, overwrite: bool) -> Result<()> {
        let (Mutation::Mix { .. }, Some(dir)) = (mutation, self.generation_dir(&session.id)) else {
            return Ok(());
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        let generation = session.chain.current();
        let index = session.chain.cursor();
        let bank_path = dir.join(format!("g{index}.jsonl"));
        if overwrite || !bank_path.exists() {
            generation.save(&bank_path, &self.engine.schema)?;
        }
        if let Some(meta) = &generation.meta {
            let meta_path = dir.join(format!("g{index}.meta.json"));
            if overwrite || !meta_path.exists() {
                meta.save(meta_path)?;
            }
        }
        Ok(())
    }

    /// WAV bytes for `preset`, cached by its parameter record and synth version.
    pub fn wav(&self, preset: &Preset) -> Result<Arc<Vec<u8>>> {
        let mut h = DefaultHasher::new();
        SYNTH_VERSION.hash(&mut h);
        format_record(preset, &self.engine.schema).hash(&mut h);
        let key = h.finish();
        if let Some(w) = self.wav_cache.lock().expect("wav lock").get(&key) {
            return Ok(w.clone());
        }
        let bytes = Arc::new(render(preset, &self.engine.schema).to_wav_bytes()?);
        let mut cache = self.wav_cache.lock().expect("wav lock");
        if cache.len() >= WAV_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, bytes.clone());
        Ok(bytes)
    }

    pub fn wav_cache_len(&self) -> usize {
        self.wav_cache.lock().expect("wav lock").len()
    }
}
