//! Run settings, layered as flags > config file > `SQLAGENT_*` environment >
//! defaults. API keys never pass through here; they are read from the
//! environment only.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use sqlagent::agent::{DecodingConfig, ToolsetOptions, DEFAULT_MAX_TURNS};
use sqlagent::eval::{CoverageMode, PriceTable};
use sqlagent::{CacheDir, ExecutionLimits};

pub const API_KEY_VAR: &str = "OPENAI_API_KEY";
const ENV_PREFIX: &str = "SQLAGENT_";

macro_rules! settings {
    ($( $(#[$meta:meta])* $name:ident : $ty:ty ),* $(,)?) => {
        /// Every field is optional so that layers can be merged.
        #[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
        pub struct Settings {
            $(
                $(#[$meta])*
                #[arg(long, global = true)]
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $name: Option<$ty>,
            )*
        }

        impl Settings {
            pub const FIELDS: &'static [&'static str] = &[$(stringify!($name)),*];

            /// Fields set here win over those of `lower`.
            pub fn or(self, lower: Settings) -> Settings {
                Settings { $($name: self.$name.or(lower.$name)),* }
            }
        }
    };
}

settings! {
    /// Directory holding the databases (`{id}/{id}.sqlite` or `{id}.sqlite`).
    db_root: PathBuf,
    /// Index cache; defaults to `{db_root}/.sqlagent-cache`.
    cache: PathBuf,
    /// Where outputs and the effective config are written.
    run_dir: PathBuf,
    /// Full URL of the chat completions endpoint.
    endpoint: String,
    /// Embeddings model; the offline trigram embedder is used when unset.
    embedding_model: String,
    /// Full URL of the embeddings endpoint.
    embedding_endpoint: String,
    model: String,
    temperature: f64,
    top_p: f64,
    /// Candidates sampled per turn.
    n: usize,
    max_tokens: u32,
    max_turns: usize,
    parallelism: usize,
    /// Seed for value sampling in column statistics.
    seed: u64,
    top_k: usize,
    sample_size: usize,
    timeout_ms: u64,
    row_cap: usize,
    observation_chars: usize,
    /// Dollars per million prompt tokens.
    prompt_price: f64,
    /// Dollars per million completion tokens.
    completion_price: f64,
    /// Show BIRD evidence to the model.
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    oracle_knowledge: bool,
    /// Spider `tables.json`, for column descriptions.
    spider_tables: PathBuf,
    /// Literal coverage rule for CVCR: all or any.
    coverage: String,
}

impl Settings {
    pub fn defaults() -> Settings {
        let decoding = DecodingConfig::default();
        let limits = ExecutionLimits::default();
        let toolset = ToolsetOptions::default();
        let prices = PriceTable::default();
        Settings {
            db_root: Some(PathBuf::from(".")),
            cache: None,
            run_dir: None,
            endpoint: Some("https://api.openai.com/v1/chat/completions".into()),
            embedding_model: None,
            embedding_endpoint: Some("https://api.openai.com/v1/embeddings".into()),
            model: Some(decoding.model),
            temperature: Some(decoding.temperature),
            top_p: Some(decoding.top_p),
            n: Some(decoding.n),
            max_tokens: Some(decoding.max_tokens),
            max_turns: Some(DEFAULT_MAX_TURNS),
            parallelism: Some(1),
            seed: Some(toolset.seed),
            top_k: Some(toolset.top_k),
            sample_size: Some(toolset.sample_size),
            timeout_ms: Some(limits.timeout_ms),
            row_cap: Some(limits.row_cap),
            observation_chars: Some(limits.observation_char_cap),
            prompt_price: Some(prices.prompt_per_million),
            completion_price: Some(prices.completion_per_million),
            oracle_knowledge: Some(false),
            spider_tables: None,
            coverage: Some("all".into()),
        }
    }

    /// Reads `SQLAGENT_{FIELD}` variables.
    pub fn from_env() -> Result<Settings> {
        Self::from_vars(|key| std::env::var(key).ok())
    }

    pub fn from_vars(get: impl Fn(&str) -> Option<String>) -> Result<Settings> {
        let mut table = toml::Table::new();
        for field in Self::FIELDS {
            let var = format!("{ENV_PREFIX}{}", field.to_uppercase());
            if let Some(raw) = get(&var) {
                // Typed when the text is a TOML literal, a string otherwise.
                let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                    .ok()
                    .and_then(|mut t| t.remove("v"))
                    .unwrap_or(toml::Value::String(raw));
                table.insert(field.to_string(), value);
            }
        }
        toml::Value::Table(table)
            .try_into()
            .with_context(|| format!("invalid {ENV_PREFIX}* environment variable"))
    }

    /// Reads a config file. A `[command]` table (as written into run
    /// directories) is ignored; unknown keys and secrets are rejected.
    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut table: toml::Table = toml::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;
        table.remove("command");
        if let Some(key) = table.keys().find(|k| !Self::FIELDS.contains(&k.as_str())) {
            if ["key", "secret", "token", "password"].iter().any(|s| key.contains(s)) {
                bail!("{}: `{key}` looks like a secret; set {API_KEY_VAR} in the environment instead", path.display());
            }
            bail!("{}: unknown setting `{key}`", path.display());
        }
        toml::Value::Table(table)
            .try_into()
            .with_context(|| format!("invalid setting in {}", path.display()))
    }

    /// Merges the layers and fills in derived defaults.
    pub fn resolve(flags: Settings, file: Option<&Path>, command: &str) -> Result<Resolved> {
        let file = match file {
            Some(path) => Self::from_file(path)?,
            None => Settings::default(),
        };
        let mut s = flags.or(file).or(Self::from_env()?).or(Self::defaults());
        let db_root = s.db_root.clone().expect("defaulted");
        s.cache.get_or_insert_with(|| db_root.join(".sqlagent-cache"));
        s.run_dir.get_or_insert_with(|| PathBuf::from("runs").join(command));
        let resolved = Resolved(s);
        resolved.validate()?;
        Ok(resolved)
    }
}

/// Settings with every defaulted field present.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Resolved(pub Settings);

macro_rules! get {
    ($self:ident . $field:ident) => {
        $self.0.$field.clone().expect(concat!(stringify!($field), " is defaulted"))
    };
}

impl Resolved {
    fn validate(&self) -> Result<()> {
        self.decoding().validate()?;
        self.limits().validate().context("timeout_ms, row_cap and observation_chars")?;
        self.coverage()?;
        if get!(self.parallelism) == 0 {
            bail!("parallelism must be at least 1");
        }
        if get!(self.max_turns) == 0 {
            bail!("max_turns must be at least 1");
        }
        Ok(())
    }

    pub fn db_root(&self) -> PathBuf {
        get!(self.db_root)
    }

    pub fn cache(&self) -> CacheDir {
        CacheDir::new(get!(self.cache))
    }

    pub fn run_dir(&self) -> PathBuf {
        get!(self.run_dir)
    }

    pub fn endpoint(&self) -> String {
        get!(self.endpoint)
    }

    pub fn embedding(&self) -> Option<(String, String)> {
        let model = self.0.embedding_model.clone()?;
        Some((get!(self.embedding_endpoint), model))
    }

    pub fn decoding(&self) -> DecodingConfig {
        DecodingConfig {
            model: get!(self.model),
            temperature: get!(self.temperature),
            top_p: get!(self.top_p),
            n: get!(self.n),
            max_tokens: get!(self.max_tokens),
            ..DecodingConfig::default()
        }
    }

    pub fn limits(&self) -> ExecutionLimits {
        ExecutionLimits {
            timeout_ms: get!(self.timeout_ms),
            row_cap: get!(self.row_cap),
            observation_char_cap: get!(self.observation_chars),
        }
    }

    pub fn toolset(&self) -> ToolsetOptions {
        ToolsetOptions {
            descriptions: None,
            drop_dangling_fks: true,
            sample_size: get!(self.sample_size),
            seed: get!(self.seed),
            top_k: get!(self.top_k),
            limits: self.limits(),
        }
    }

    pub fn prices(&self) -> PriceTable {
        PriceTable {
            prompt_per_million: get!(self.prompt_price),
            completion_per_million: get!(self.completion_price),
        }
    }

    pub fn max_turns(&self) -> usize {
        get!(self.max_turns)
    }

    pub fn parallelism(&self) -> usize {
        get!(self.parallelism)
    }

    pub fn oracle_knowledge(&self) -> bool {
        get!(self.oracle_knowledge)
    }

    pub fn spider_tables(&self) -> Option<PathBuf> {
        self.0.spider_tables.clone()
    }

    pub fn coverage(&self) -> Result<CoverageMode> {
        match get!(self.coverage).to_ascii_lowercase().as_str() {
            "all" => Ok(CoverageMode::All),
            "any" => Ok(CoverageMode::Any),
            other => bail!("coverage must be `all` or `any`, not `{other}`"),
        }
    }

    /// Writes the settings and the command that used them to
    /// `{run_dir}/config.toml`.
    pub fn write(&self, command: &impl Serialize) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Audit<'a, C> {
            #[serde(flatten)]
            settings: &'a Resolved,
            command: &'a C,
        }
        let dir = self.run_dir();
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join("config.toml");
        let text = toml::to_string(&Audit { settings: self, command })?;
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_env_beat_defaults() {
        let env = Settings::from_vars(|k| match k {
            "SQLAGENT_TEMPERATURE" => Some("0".into()),
            "SQLAGENT_TOP_P" => Some("0.5".into()),
            "SQLAGENT_MODEL" => Some("env-model".into()),
            "SQLAGENT_DB_ROOT" => Some("/data/env".into()),
            _ => None,
        })
        .unwrap();
        let file: Settings = toml::from_str("top_p = 0.8\nmodel = \"file-model\"").unwrap();
        let flags = Settings {
            model: Some("flag-model".into()),
            ..Settings::default()
        };
        let s = flags.or(file).or(env).or(Settings::defaults());
        assert_eq!(s.model.as_deref(), Some("flag-model"));
        assert_eq!(s.top_p, Some(0.8));
        assert_eq!(s.temperature, Some(0.0));
        assert_eq!(s.db_root, Some(PathBuf::from("/data/env")));
        assert_eq!(s.max_tokens, Some(384));
    }

    #[test]
    fn config_file_rejects_secrets_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "api_key = \"sk-123\"").unwrap();
        assert!(Settings::from_file(&path).unwrap_err().to_string().contains(API_KEY_VAR));
        std::fs::write(&path, "modle = \"x\"").unwrap();
        assert!(Settings::from_file(&path).unwrap_err().to_string().contains("unknown setting"));
    }

    #[test]
    fn written_config_reloads_to_the_same_settings() {
        let dir = tempfile::tempdir().unwrap();
        let flags = Settings {
            run_dir: Some(dir.path().to_path_buf()),
            ..Settings::default()
        };
        let resolved = Settings::resolve(flags, None, "eval").unwrap();
        let path = resolved.write(&serde_json::json!({"name": "eval"})).unwrap();
        let again = Settings::resolve(Settings::default(), Some(&path), "eval").unwrap();
        assert_eq!(again, resolved);
    }

    #[test]
    fn decoding_defaults_are_the_published_ones() {
        let resolved = Settings::resolve(Settings::default(), None, "ask").unwrap();
        assert_eq!(resolved.decoding(), DecodingConfig::default());
        assert_eq!(resolved.prices(), PriceTable::default());
    }
}
