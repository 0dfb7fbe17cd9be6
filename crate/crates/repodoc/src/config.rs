//! Run configuration: built-in defaults, overlaid by `.repodoc/config.toml`,
//! then `REPODOC_*` environment variables, then command-line flags. The
//! resolved [`RunConfig`] has no unset fields and is embedded in every run
//! report so a run can be reproduced from its artifacts.

use crate::cluster::ClusterConfig;
use crate::incremental::PropagationPolicy;
use crate::provider::{
    HttpConfig, HttpProvider, MockProvider, Provider, RetryPolicy, RetryingProvider,
};
use crate::snapshot::IgnoreSet;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

/// Per-repo state directory holding config, lock, and run artifacts.
pub const STATE_DIR: &str = ".repodoc";
/// Config file name inside [`STATE_DIR`].
pub const CONFIG_FILE: &str = "config.toml";
/// Environment variable prefix for config overrides.
pub const ENV_PREFIX: &str = "REPODOC_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config file: {0}")]
    Toml(String),
    #[error("bad value for {field}: {message}")]
    Value { field: String, message: String },
    #[error("bad ignore pattern: {0}")]
    Ignore(#[from] crate::snapshot::SnapshotError),
    #[error("bad propagation policy: {0}")]
    Policy(#[from] crate::incremental::PolicyError),
    #[error("provider setup failed: {0}")]
    Provider(#[from] crate::provider::ProviderError),
}

/// Which completion backend a run talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Deterministic built-in backend; the pipeline becomes a pure function.
    Mock,
    /// OpenAI-compatible HTTP backend with retries.
    Http,
}

/// Fully resolved configuration for one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Repository to document.
    pub repo_root: PathBuf,
    /// Docs tree location; relative paths resolve against `repo_root`.
    pub output_dir: PathBuf,
    pub provider: ProviderKind,
    /// Base URL for the HTTP provider.
    pub api_base: String,
    /// Name of the environment variable holding the API key. The key itself
    /// is read lazily and never serialized.
    pub api_key_env: String,
    pub model: String,
    pub embed_model: String,
    pub timeout_secs: u64,
    /// Display name used in the README; defaults to the repo directory name.
    pub project_name: String,
    /// Top-level clustering fanout.
    pub k_top: u32,
    /// Recursive clustering fanout.
    pub k_sub: u32,
    /// Token budget per leaf module.
    pub token_budget: u64,
    /// Maximum module-tree depth.
    pub max_depth: u32,
    /// Clustering attempts before falling back.
    pub attempts: u32,
    /// Propagation-policy TOML override; empty selects the built-in policy.
    pub policy_path: String,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Extra ignore globs on top of the built-in set.
    pub ignore: Vec<String>,
    /// Flat $/1M-token rate used for the cost line in run reports.
    pub price_per_mtok: f64,
}

impl RunConfig {
    /// Built-in defaults for a repository root.
    pub fn defaults(repo_root: &Path) -> Self {
        let project_name = repo_root
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .filter(|n| !n.is_empty() && n != ".")
            .unwrap_or_else(|| "repository".to_string());
        let cluster = ClusterConfig::default();
        RunConfig {
            repo_root: repo_root.to_path_buf(),
            output_dir: PathBuf::from("docs"),
            provider: ProviderKind::Mock,
            api_base: "http://localhost:8080/v1".to_string(),
            api_key_env: "REPODOC_API_KEY".to_string(),
            model: "default".to_string(),
            embed_model: "default-embed".to_string(),
            timeout_secs: 120,
            project_name,
            k_top: cluster.k_top,
            k_sub: cluster.k_sub,
            token_budget: cluster.token_budget,
            max_depth: cluster.max_depth,
            attempts: cluster.attempts,
            policy_path: String::new(),
            workers: 0,
            ignore: Vec::new(),
            price_per_mtok: 0.5,
        }
    }

    /// Applies one overlay; set fields win.
    pub fn apply(mut self, overlay: &Overlay) -> Self {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = &overlay.$field {
                    self.$field = v.clone();
                }
            };
        }
        take!(output_dir);
        if let Some(v) = overlay.provider {
            self.provider = v;
        }
        take!(api_base);
        take!(api_key_env);
        take!(model);
        take!(embed_model);
        if let Some(v) = overlay.timeout_secs {
            self.timeout_secs = v;
        }
        take!(project_name);
        if let Some(v) = overlay.k_top {
            self.k_top = v;
        }
        if let Some(v) = overlay.k_sub {
            self.k_sub = v;
        }
        if let Some(v) = overlay.token_budget {
            self.token_budget = v;
        }
        if let Some(v) = overlay.max_depth {
            self.max_depth = v;
        }
        if let Some(v) = overlay.attempts {
            self.attempts = v;
        }
        take!(policy_path);
        if let Some(v) = overlay.workers {
            self.workers = v;
        }
        take!(ignore);
        if let Some(v) = overlay.price_per_mtok {
            self.price_per_mtok = v;
        }
        self
    }

    /// Rejects values the pipeline cannot run with.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive: [(&str, u64); 6] = [
            ("k_top", self.k_top as u64),
            ("k_sub", self.k_sub as u64),
            ("token_budget", self.token_budget),
            ("max_depth", self.max_depth as u64),
            ("attempts", self.attempts as u64),
            ("timeout_secs", self.timeout_secs),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(ConfigError::Value {
                    field: field.to_string(),
                    message: "must be at least 1".to_string(),
                });
            }
        }
        if self.price_per_mtok < 0.0 {
            return Err(ConfigError::Value {
                field: "price_per_mtok".to_string(),
                message: "must not be negative".to_string(),
            });
        }
        Ok(())
    }

    pub fn state_dir(&self) -> PathBuf {
        self.repo_root.join(STATE_DIR)
    }

    /// Absolute docs root for this run.
    pub fn docs_root(&self) -> PathBuf {
        if self.output_dir.is_absolute() {
            self.output_dir.clone()
        } else {
            self.repo_root.join(&self.output_dir)
        }
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig {
            k_top: self.k_top,
            k_sub: self.k_sub,
            token_budget: self.token_budget,
            max_depth: self.max_depth,
            attempts: self.attempts,
            project_name: self.project_name.clone(),
        }
    }

    pub fn ignore_set(&self) -> Result<IgnoreSet, ConfigError> {
        Ok(IgnoreSet::new(&self.ignore)?)
    }

    /// Built-in propagation policy, or the TOML override if one is configured.
    pub fn policy(&self) -> Result<PropagationPolicy, ConfigError> {
        if self.policy_path.is_empty() {
            return Ok(PropagationPolicy::default());
        }
        let path = if Path::new(&self.policy_path).is_absolute() {
            PathBuf::from(&self.policy_path)
        } else {
            self.repo_root.join(&self.policy_path)
        };
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(PropagationPolicy::from_toml(&text)?)
    }

    /// Instantiates the configured backend. The HTTP provider reads its key
    /// from the environment variable named by `api_key_env`.
    pub fn build_provider(&self) -> Result<Box<dyn Provider + Sync>, ConfigError> {
        match self.provider {
            ProviderKind::Mock => Ok(Box::new(MockProvider::new())),
            ProviderKind::Http => {
                let http = HttpProvider::new(HttpConfig {
                    base_url: self.api_base.clone(),
                    api_key: std::env::var(&self.api_key_env).ok(),
                    model: self.model.clone(),
                    embed_model: self.embed_model.clone(),
                    timeout: Duration::from_secs(self.timeout_secs),
                })?;
                Ok(Box::new(RetryingProvider::new(http, RetryPolicy::default())))
            }
        }
    }
}

/// One layer of optional overrides (config file, environment, or flags).
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overlay {
    pub output_dir: Option<PathBuf>,
    pub provider: Option<ProviderKind>,
    pub api_base: Option<String>,
    pub api_key_env: Option<String>,
    pub model: Option<String>,
    pub embed_model: Option<String>,
    pub timeout_secs: Option<u64>,
    pub project_name: Option<String>,
    pub k_top: Option<u32>,
    pub k_sub: Option<u32>,
    pub token_budget: Option<u64>,
    pub max_depth: Option<u32>,
    pub attempts: Option<u32>,
    pub policy_path: Option<String>,
    pub workers: Option<usize>,
    pub ignore: Option<Vec<String>>,
    pub price_per_mtok: Option<f64>,
}

impl Overlay {
    /// Parses a config file; unknown keys are errors so typos fail loudly.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Toml(e.to_string()))
    }

    /// Collects `REPODOC_*` overrides from environment pairs. Unknown names
    /// are ignored: the environment is a shared namespace (the API key
    /// itself lives there, for one).
    pub fn from_env_pairs<I>(pairs: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        fn parsed<T: std::str::FromStr>(var: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| ConfigError::Value {
                field: var.to_string(),
                message: format!("{e}"),
            })
        }

        let mut overlay = Overlay::default();
        for (name, value) in pairs {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            match key {
                "OUTPUT_DIR" => overlay.output_dir = Some(PathBuf::from(&value)),
                "PROVIDER" => {
                    overlay.provider = Some(match value.to_lowercase().as_str() {
                        "mock" => ProviderKind::Mock,
                        "http" => ProviderKind::Http,
                        other => {
                            return Err(ConfigError::Value {
                                field: name.clone(),
                                message: format!("unknown provider {other:?} (want mock or http)"),
                            })
                        }
                    })
                }
                "API_BASE" => overlay.api_base = Some(value),
                "API_KEY_ENV" => overlay.api_key_env = Some(value),
                "MODEL" => overlay.model = Some(value),
                "EMBED_MODEL" => overlay.embed_model = Some(value),
                "TIMEOUT_SECS" => overlay.timeout_secs = Some(parsed(&name, &value)?),
                "PROJECT_NAME" => overlay.project_name = Some(value),
                "K_TOP" => overlay.k_top = Some(parsed(&name, &value)?),
                "K_SUB" => overlay.k_sub = Some(parsed(&name, &value)?),
                "TOKEN_BUDGET" => overlay.token_budget = Some(parsed(&name, &value)?),
                "MAX_DEPTH" => overlay.max_depth = Some(parsed(&name, &value)?),
                "ATTEMPTS" => overlay.attempts = Some(parsed(&name, &value)?),
                "POLICY_PATH" => overlay.policy_path = Some(value),
                "WORKERS" => overlay.workers = Some(parsed(&name, &value)?),
                "IGNORE" => {
                    overlay.ignore = Some(
                        value
                            .split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(str::to_string)
                            .collect(),
                    )
                }
                "PRICE_PER_MTOK" => overlay.price_per_mtok = Some(parsed(&name, &value)?),
                _ => {}
            }
        }
        Ok(overlay)
    }
}

/// Resolves the final config: defaults, then file, then env, then flags.
pub fn resolve_config(
    repo_root: &Path,
    file: Option<&str>,
    env_pairs: impl IntoIterator<Item = (String, String)>,
    flags: &Overlay,
) -> Result<RunConfig, ConfigError> {
    let mut config = RunConfig::defaults(repo_root);
    if let Some(text) = file {
        config = config.apply(&Overlay::from_toml_str(text)?);
    }
    config = config.apply(&Overlay::from_env_pairs(env_pairs)?);
    config = config.apply(flags);
    config.validate()?;
    Ok(config)
}

/// Reads `.repodoc/config.toml` (if present) and the process environment,
/// then resolves with the given flag overlay.
pub fn load_config(repo_root: &Path, flags: &Overlay) -> Result<RunConfig, ConfigError> {
    let path = repo_root.join(STATE_DIR).join(CONFIG_FILE);
    let file = match std::fs::read_to_string(&path) {
        Ok(text) => Some(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(source) => {
            return Err(ConfigError::Io {
                path: path.display().to_string(),
                source,
            })
        }
    };
    resolve_config(repo_root, file.as_deref(), std::env::vars(), flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn defaults_are_fully_explicit() {
        let c = RunConfig::defaults(Path::new("/work/shop"));
        assert_eq!(c.project_name, "shop");
        assert_eq!(c.output_dir, PathBuf::from("docs"));
        assert_eq!(c.provider, ProviderKind::Mock);
        assert_eq!(c.token_budget, 4096);
        assert_eq!(c.docs_root(), PathBuf::from("/work/shop/docs"));
        assert_eq!(c.state_dir(), PathBuf::from("/work/shop/.repodoc"));
        c.validate().unwrap();
        // Round-trips through JSON without losing a field.
        let json = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let file = "k_top = 7\nmodel = \"from-file\"\nproject_name = \"from-file\"\n";
        let envp = env(&[("REPODOC_K_TOP", "8"), ("REPODOC_MODEL", "from-env")]);
        let flags = Overlay {
            k_top: Some(9),
            ..Overlay::default()
        };
        let c = resolve_config(Path::new("/r"), Some(file), envp, &flags).unwrap();
        assert_eq!(c.k_top, 9, "flag wins");
        assert_eq!(c.model, "from-env", "env beats file");
        assert_eq!(c.project_name, "from-file", "file beats defaults");
    }

    #[test]
    fn file_only_overrides_apply() {
        let file = "provider = \"http\"\napi_base = \"http://box:9\"\nignore = [\"gen/**\"]\n";
        let c = resolve_config(Path::new("/r"), Some(file), env(&[]), &Overlay::default())
            .unwrap();
        assert_eq!(c.provider, ProviderKind::Http);
        assert_eq!(c.api_base, "http://box:9");
        assert_eq!(c.ignore, vec!["gen/**".to_string()]);
    }

    #[test]
    fn unknown_file_key_is_an_error() {
        let err = Overlay::from_toml_str("k_topp = 3\n").unwrap_err();
        assert!(err.to_string().contains("k_topp"), "{err}");
    }

    #[test]
    fn unknown_env_names_are_ignored() {
        let envp = env(&[("REPODOC_API_KEY", "sekret"), ("PATH", "/bin")]);
        let overlay = Overlay::from_env_pairs(envp).unwrap();
        assert_eq!(overlay, Overlay::default());
    }

    #[test]
    fn bad_env_number_names_the_variable() {
        let err = Overlay::from_env_pairs(env(&[("REPODOC_WORKERS", "many")])).unwrap_err();
        assert!(err.to_string().contains("REPODOC_WORKERS"), "{err}");
    }

    #[test]
    fn env_ignore_list_splits_on_commas() {
        let overlay =
            Overlay::from_env_pairs(env(&[("REPODOC_IGNORE", "a/**, b/**,,")])).unwrap();
        assert_eq!(
            overlay.ignore,
            Some(vec!["a/**".to_string(), "b/**".to_string()])
        );
    }

    #[test]
    fn zero_budget_is_rejected() {
        let err =
            resolve_config(Path::new("/r"), Some("token_budget = 0"), env(&[]), &Overlay::default())
                .unwrap_err();
        assert!(err.to_string().contains("token_budget"), "{err}");
    }

    #[test]
    fn api_key_never_appears_in_serialized_config() {
        let mut c = RunConfig::defaults(Path::new("/r"));
        c.api_key_env = "MY_KEY_VAR".to_string();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("MY_KEY_VAR"), "env var name is recorded");
        assert!(!json.contains("api_key\""), "no raw key field exists");
    }

    #[test]
    fn policy_override_loads_from_toml() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("policy.toml"),
            PropagationPolicy::default().to_toml(),
        )
        .unwrap();
        let mut c = RunConfig::defaults(dir.path());
        c.policy_path = "policy.toml".to_string();
        assert_eq!(c.policy().unwrap(), PropagationPolicy::default());
        c.policy_path = "missing.toml".to_string();
        assert!(c.policy().is_err());
    }

    #[test]
    fn cluster_config_mirrors_the_run_config() {
        let mut c = RunConfig::defaults(Path::new("/r"));
        c.k_top = 2;
        c.project_name = "demo".to_string();
        let cc = c.cluster_config();
        assert_eq!(cc.k_top, 2);
        assert_eq!(cc.project_name, "demo");
        assert_eq!(cc.token_budget, c.token_budget);
    }
}
