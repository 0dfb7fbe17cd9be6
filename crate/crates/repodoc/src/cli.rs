//! Command-line entry point: `generate`, `update`, `bench`, and `graph
//! export`, sharing one resolved [`RunConfig`]. Machine output is JSON on
//! stdout; human logs go to stderr. Exit codes: 0 success, 1 fatal, 2
//! partial failures.

use crate::bench;
use crate::cluster::{cluster_repository, persist_modules};
use crate::config::{load_config, Overlay, ProviderKind, RunConfig};
use crate::docgen::validate::validate_docs;
use crate::docgen::{
    generate_all_lenient, manifest_from_graph, save_manifest, write_docs, DocFailure, DocGenError,
};
use crate::enrich::enrich_repository;
use crate::extract::{parse_repository, Extraction, ExtractionReport};
use crate::frontend::builtin_frontends;
use crate::graph::RepoKG;
use crate::incremental::{update_repository, UpdateError, UpdateOptions, UpdateReport};
use crate::provider::Provider;
use crate::snapshot::RepoSnapshot;
use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

/// Artifact names inside the `.repodoc/` state directory.
pub const GRAPH_FILE: &str = "graph.json";
pub const EXTRACTION_REPORT_FILE: &str = "extraction_report.json";
pub const UPDATE_REPORT_FILE: &str = "update_report.json";
pub const RUN_REPORT_FILE: &str = "run_report.json";
pub const LOCK_FILE: &str = "lock";

#[derive(Debug, Parser)]
#[command(
    name = "repodoc",
    version,
    about = "Builds a repository knowledge graph and keeps generated docs current"
)]
pub struct Cli {
    #[command(flatten)]
    pub flags: CliFlags,
    #[command(subcommand)]
    pub command: Command,
}

/// Global flags; each one overrides the config file and environment.
#[derive(Debug, Default, Args)]
pub struct CliFlags {
    /// Repository root to operate on.
    #[arg(long, global = true, default_value = ".")]
    pub repo: PathBuf,
    /// Docs output directory (relative to the repo unless absolute).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Completion backend.
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Base URL for the HTTP provider.
    #[arg(long, global = true)]
    pub api_base: Option<String>,
    /// Environment variable that holds the API key.
    #[arg(long, global = true)]
    pub api_key_env: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub embed_model: Option<String>,
    #[arg(long, global = true)]
    pub timeout_secs: Option<u64>,
    /// Project name used in the README.
    #[arg(long, global = true)]
    pub project_name: Option<String>,
    /// Top-level clustering fanout.
    #[arg(long, global = true)]
    pub k_top: Option<u32>,
    /// Recursive clustering fanout.
    #[arg(long, global = true)]
    pub k_sub: Option<u32>,
    /// Token budget per leaf module.
    #[arg(long, global = true)]
    pub token_budget: Option<u64>,
    /// Maximum module-tree depth.
    #[arg(long, global = true)]
    pub max_depth: Option<u32>,
    /// Clustering attempts before falling back.
    #[arg(long, global = true)]
    pub attempts: Option<u32>,
    /// Propagation-policy TOML override file.
    #[arg(long, global = true)]
    pub policy: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Extra ignore glob; repeatable.
    #[arg(long, global = true)]
    pub ignore: Vec<String>,
    /// Flat $/1M-token rate for the run-report cost line.
    #[arg(long, global = true)]
    pub price_per_mtok: Option<f64>,
}

impl CliFlags {
    pub fn overlay(&self) -> Overlay {
        Overlay {
            output_dir: self.output_dir.clone(),
            provider: self.provider,
            api_base: self.api_base.clone(),
            api_key_env: self.api_key_env.clone(),
            model: self.model.clone(),
            embed_model: self.embed_model.clone(),
            timeout_secs: self.timeout_secs,
            project_name: self.project_name.clone(),
            k_top: self.k_top,
            k_sub: self.k_sub,
            token_budget: self.token_budget,
            max_depth: self.max_depth,
            attempts: self.attempts,
            policy_path: self.policy.clone(),
            workers: self.workers,
            ignore: if self.ignore.is_empty() {
                None
            } else {
                Some(self.ignore.clone())
            },
            price_per_mtok: self.price_per_mtok,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the knowledge graph and generate the full docs tree.
    Generate,
    /// Refresh docs incrementally after code changes.
    Update {
        /// Revision the stored graph was built from (recorded for
        /// traceability; the graph itself pins the old state).
        #[arg(long)]
        from: Option<String>,
        /// Revision to update to; defaults to the working tree.
        #[arg(long)]
        to: Option<String>,
    },
    /// Documentation quality metrics.
    Bench {
        #[command(subcommand)]
        metric: BenchCommand,
    },
    /// Knowledge-graph artifact operations.
    Graph {
        #[command(subcommand)]
        action: GraphCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Share of public APIs mentioned anywhere in the docs.
    Coverage {
        #[arg(long)]
        docs: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Raw volume counts: words, files, cross-links, code blocks, diagrams.
    Docinfo {
        #[arg(long)]
        docs: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Share of questions answerable from the top-K retrieved doc chunks.
    Completeness {
        #[arg(long)]
        docs: Option<PathBuf>,
        /// JSON file holding an array of question strings.
        #[arg(long)]
        questions: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: u32,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Share of change-affected docs the last update correctly refreshed.
    Recall {
        #[arg(long)]
        docs: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Update report to score; defaults to the last one in `.repodoc/`.
        #[arg(long)]
        update_report: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum GraphCommand {
    /// Print the stored graph as JSON (exact bytes) or Graphviz dot.
    Export {
        #[arg(long, value_enum, default_value_t = ExportFormat::Json)]
        format: ExportFormat,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Json,
    Dot,
}

/// Summary written as `.repodoc/run_report.json` after every invocation;
/// identical inputs with the mock provider reproduce it except for the
/// timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub from_rev: Option<String>,
    pub to_rev: Option<String>,
    pub config: RunConfig,
    pub provider_calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_usd: f64,
    pub failures: Vec<String>,
    pub exit_code: i32,
    pub unix_time_secs: u64,
}

/// Holds `.repodoc/lock` for the lifetime of a mutating command.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(state_dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(state_dir)
            .with_context(|| format!("cannot create state dir {}", state_dir.display()))?;
        let path = state_dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(anyhow::anyhow!(
                "another run holds the lock at {}; remove the file if it is stale",
                path.display()
            )),
            Err(e) => Err(e).with_context(|| format!("cannot create lock {}", path.display())),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Parses arguments and dispatches; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_FATAL,
            };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    dispatch(cli)
}

fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

pub fn dispatch(cli: Cli) -> i32 {
    let config = match load_config(&cli.flags.repo, &cli.flags.overlay()) {
        Ok(config) => config,
        Err(e) => {
            log::error!("{e}");
            return EXIT_FATAL;
        }
    };
    if config.workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build_global();
    }
    match cli.command {
        Command::Generate => cmd_generate(&config),
        Command::Update { from, to } => cmd_update(&config, from.as_deref(), to.as_deref()),
        Command::Bench { metric } => cmd_bench(&config, &metric),
        Command::Graph {
            action: GraphCommand::Export { format },
        } => cmd_graph_export(&config, format),
    }
}

/// One full pipeline run: extract, enrich, cluster, generate, persist.
pub fn cmd_generate(config: &RunConfig) -> i32 {
    let provider = match config.build_provider() {
        Ok(p) => p,
        Err(e) => {
            log::error!("{e}");
            return EXIT_FATAL;
        }
    };
    finish(
        config,
        "generate",
        None,
        None,
        Some(provider.as_ref()),
        generate_with(config, provider.as_ref()),
    )
}

/// Generate with an injected provider; split out so tests can force
/// per-doc failures.
pub fn generate_with(
    config: &RunConfig,
    provider: &(dyn Provider + Sync),
) -> anyhow::Result<(i32, Vec<String>)> {
    let state_dir = config.state_dir();
    let _lock = RunLock::acquire(&state_dir)?;
    let ignore = config.ignore_set()?;
    let snapshot = RepoSnapshot::scan(&config.repo_root, &ignore)
        .with_context(|| format!("cannot scan {}", config.repo_root.display()))?;
    let frontends = builtin_frontends();
    let Extraction {
        mut kg,
        report: extraction_report,
        ..
    } = parse_repository(&snapshot, &frontends, &ignore)?;
    log::info!(
        "extracted {} entities, {} relationships from {} files",
        extraction_report.entities,
        extraction_report.relationships,
        extraction_report.files_parsed
    );

    let enrich_report = enrich_repository(&mut kg, provider);
    log::info!(
        "enriched {} entities with {} concepts",
        enrich_report.enriched,
        enrich_report.concepts
    );

    let tree = cluster_repository(&kg, provider, &config.cluster_config());
    persist_modules(&mut kg, &tree)?;
    log::info!("clustered into {} modules", tree.modules().count());

    let (docs, gen_report, doc_failures) =
        generate_all_lenient(&mut kg, &tree, provider, &config.project_name)?;
    let docs_root = config.docs_root();
    write_docs(&docs_root, &docs)?;
    save_manifest(&docs_root, &manifest_from_graph(&kg))?;
    fs::write(state_dir.join(GRAPH_FILE), kg.to_json_bytes())?;
    fs::write(
        state_dir.join(EXTRACTION_REPORT_FILE),
        serde_json::to_vec_pretty(&extraction_report)?,
    )?;
    log::info!(
        "wrote {} docs ({} component, {} module, readme: {})",
        docs.len(),
        gen_report.component_docs,
        gen_report.module_docs,
        gen_report.readme
    );

    for issue in validate_docs(&docs_root, &kg) {
        log::warn!("validation: {}: {}", issue.doc, issue.message);
    }

    let mut failures: Vec<String> = enrich_report
        .failures
        .iter()
        .map(|f| format!("enrich {}: {}", f.entity, f.reason))
        .collect();
    failures.extend(
        doc_failures
            .iter()
            .map(|DocFailure { path, error }| format!("doc {path}: {error}")),
    );
    let exit = if failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL };
    Ok((exit, failures))
}

/// One incremental update against previously generated artifacts.
pub fn cmd_update(config: &RunConfig, from: Option<&str>, to: Option<&str>) -> i32 {
    let provider = match config.build_provider() {
        Ok(p) => p,
        Err(e) => {
            log::error!("{e}");
            return EXIT_FATAL;
        }
    };
    finish(
        config,
        "update",
        from,
        to,
        Some(provider.as_ref()),
        update_with(config, provider.as_ref(), to),
    )
}

pub fn update_with(
    config: &RunConfig,
    provider: &(dyn Provider + Sync),
    to: Option<&str>,
) -> anyhow::Result<(i32, Vec<String>)> {
    let state_dir = config.state_dir();
    let _lock = RunLock::acquire(&state_dir)?;
    let graph_path = state_dir.join(GRAPH_FILE);
    let extraction_path = state_dir.join(EXTRACTION_REPORT_FILE);
    if !graph_path.exists() || !extraction_path.exists() {
        log::error!(
            "no stored graph under {}; run `repodoc generate` first",
            state_dir.display()
        );
        return Ok((EXIT_FATAL, vec!["missing generate artifacts".to_string()]));
    }
    let mut kg = RepoKG::from_json_bytes(&fs::read(&graph_path)?)?;
    let old_report: ExtractionReport = serde_json::from_slice(&fs::read(&extraction_path)?)?;
    let ignore = config.ignore_set()?;
    let snapshot = match to {
        Some(rev) => RepoSnapshot::from_git(&config.repo_root, rev, &ignore)?,
        None => RepoSnapshot::scan(&config.repo_root, &ignore)?,
    };
    let options = UpdateOptions {
        policy: config.policy()?,
        suppress: BTreeSet::new(),
    };
    let outcome = update_repository(
        &mut kg,
        &config.docs_root(),
        &snapshot,
        provider,
        &config.project_name,
        &old_report,
        &builtin_frontends(),
        &ignore,
        &options,
    );
    match outcome {
        Ok(outcome) => {
            fs::write(state_dir.join(GRAPH_FILE), kg.to_json_bytes())?;
            fs::write(
                state_dir.join(EXTRACTION_REPORT_FILE),
                serde_json::to_vec_pretty(&outcome.extraction_report)?,
            )?;
            let report_json = serde_json::to_vec_pretty(&outcome.report)?;
            fs::write(state_dir.join(UPDATE_REPORT_FILE), &report_json)?;
            emit_stdout(&outcome.report)?;
            log::info!(
                "update: {} regenerated, {} written, {} created, {} deleted",
                outcome.report.regenerated.len(),
                outcome.report.written.len(),
                outcome.report.created.len(),
                outcome.report.deleted.len()
            );
            for issue in validate_docs(&config.docs_root(), &kg) {
                log::warn!("validation: {}: {}", issue.doc, issue.message);
            }
            Ok((EXIT_OK, Vec::new()))
        }
        // Docs may be partially refreshed, but the graph was not persisted,
        // so the next update re-derives the same work and converges.
        Err(UpdateError::DocGen(DocGenError::Provider { path, source })) => {
            log::error!("doc {path}: {source}; rerun `repodoc update` once the provider recovers");
            Ok((EXIT_PARTIAL, vec![format!("doc {path}: {source}")]))
        }
        Err(e) => Err(e.into()),
    }
}

fn load_graph(path: &Path) -> anyhow::Result<RepoKG> {
    let bytes = fs::read(path)
        .with_context(|| format!("cannot read graph {}; run `repodoc generate` first", path.display()))?;
    Ok(RepoKG::from_json_bytes(&bytes)?)
}

/// Runs one metric and prints its JSON report to stdout.
pub fn cmd_bench(config: &RunConfig, metric: &BenchCommand) -> i32 {
    finish(config, "bench", None, None, None, bench_with(config, metric))
}

fn bench_with(config: &RunConfig, metric: &BenchCommand) -> anyhow::Result<(i32, Vec<String>)> {
    let docs_default = config.docs_root();
    let graph_default = config.state_dir().join(GRAPH_FILE);
    match metric {
        BenchCommand::Coverage { docs, graph, report } => {
            let kg = load_graph(graph.as_deref().unwrap_or(&graph_default))?;
            let out = bench::coverage(&kg, docs.as_deref().unwrap_or(&docs_default))?;
            emit(&out, report.as_deref())?;
        }
        BenchCommand::Docinfo { docs, report } => {
            let out = bench::doc_information(docs.as_deref().unwrap_or(&docs_default))?;
            emit(&out, report.as_deref())?;
        }
        BenchCommand::Completeness {
            docs,
            questions,
            k,
            report,
        } => {
            let text = fs::read_to_string(questions)
                .with_context(|| format!("cannot read questions {}", questions.display()))?;
            let questions: Vec<String> = serde_json::from_str(&text)
                .context("questions file must be a JSON array of strings")?;
            let provider = config.build_provider()?;
            let out = bench::completeness_at_k(
                &questions,
                docs.as_deref().unwrap_or(&docs_default),
                *k,
                provider.as_ref(),
            )?;
            emit(&out, report.as_deref())?;
        }
        BenchCommand::Recall {
            docs,
            graph,
            update_report,
            report,
        } => {
            let kg = load_graph(graph.as_deref().unwrap_or(&graph_default))?;
            let update_default = config.state_dir().join(UPDATE_REPORT_FILE);
            let path = update_report.as_deref().unwrap_or(&update_default);
            let text = fs::read(path).with_context(|| {
                format!("cannot read update report {}; run `repodoc update` first", path.display())
            })?;
            let update: UpdateReport = serde_json::from_slice(&text)?;
            let out = bench::update_recall(&update, &kg, docs.as_deref().unwrap_or(&docs_default))?;
            emit(&out, report.as_deref())?;
        }
    }
    Ok((EXIT_OK, Vec::new()))
}

/// Prints the stored graph, either verbatim or rendered as Graphviz dot.
pub fn cmd_graph_export(config: &RunConfig, format: ExportFormat) -> i32 {
    finish(
        config,
        "graph export",
        None,
        None,
        None,
        graph_export_with(config, format),
    )
}

fn graph_export_with(config: &RunConfig, format: ExportFormat) -> anyhow::Result<(i32, Vec<String>)> {
    let path = config.state_dir().join(GRAPH_FILE);
    let bytes = fs::read(&path)
        .with_context(|| format!("cannot read graph {}; run `repodoc generate` first", path.display()))?;
    match format {
        ExportFormat::Json => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&bytes)?;
            stdout.flush()?;
        }
        ExportFormat::Dot => {
            let kg = RepoKG::from_json_bytes(&bytes)?;
            print!("{}", render_dot(&kg));
        }
    }
    Ok((EXIT_OK, Vec::new()))
}

/// Graphviz rendering: one node per entity labeled `kind:name`, one edge
/// line per relationship labeled by its kind.
pub fn render_dot(kg: &RepoKG) -> String {
    fn quoted(raw: &str) -> String {
        raw.replace('\\', "\\\\").replace('"', "\\\"")
    }
    let mut out = String::from("digraph repokg {\n");
    for entity in kg.entities() {
        let id = quoted(entity.id().as_str());
        out.push_str(&format!("  \"{id}\" [label=\"{id}\"];\n"));
    }
    for rel in kg.relationships() {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
            quoted(rel.src.as_str()),
            quoted(rel.dst.as_str()),
            rel.kind.as_str()
        ));
    }
    out.push_str("}\n");
    out
}

fn emit<T: Serialize>(value: &T, report_path: Option<&Path>) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    println!("{json}");
    if let Some(path) = report_path {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, format!("{json}\n"))?;
    }
    Ok(())
}

fn emit_stdout<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Converts a command result into its exit code and writes the run report
/// (best effort — a fatal error may have left no writable state dir).
fn finish(
    config: &RunConfig,
    command: &str,
    from: Option<&str>,
    to: Option<&str>,
    provider: Option<&(dyn Provider + Sync)>,
    result: anyhow::Result<(i32, Vec<String>)>,
) -> i32 {
    let (exit, failures) = match result {
        Ok(pair) => pair,
        Err(e) => {
            log::error!("{e:#}");
            (EXIT_FATAL, vec![format!("{e:#}")])
        }
    };
    for failure in &failures {
        log::warn!("{failure}");
    }
    let usage = provider.map(|p| p.usage()).unwrap_or_default();
    let report = RunReport {
        command: command.to_string(),
        from_rev: from.map(str::to_string),
        to_rev: to.map(str::to_string),
        config: config.clone(),
        provider_calls: usage.calls(),
        prompt_tokens: usage.prompt_tokens(),
        completion_tokens: usage.completion_tokens(),
        cost_usd: usage.cost(config.price_per_mtok),
        failures,
        exit_code: exit,
        unix_time_secs: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    if command == "generate" {
        // The run report doubles as generate's machine output.
        let _ = emit_stdout(&report);
    }
    match serde_json::to_vec_pretty(&report) {
        Ok(bytes) => {
            let path = config.state_dir().join(RUN_REPORT_FILE);
            if fs::create_dir_all(config.state_dir())
                .and_then(|_| fs::write(&path, bytes))
                .is_err()
            {
                log::debug!("could not write run report to {}", path.display());
            }
        }
        Err(e) => log::debug!("could not serialize run report: {e}"),
    }
    exit
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Entity, EntityId, ModuleEntity, RelationKind};
    use crate::provider::{ops, MockProvider, ProviderErrorKind};
    use crate::testutil::fixture_a;

    fn config_for(repo: &Path) -> RunConfig {
        let mut config = RunConfig::defaults(repo);
        config.project_name = "fixture-a".to_string();
        config
    }

    #[test]
    fn the_lock_blocks_a_second_run_and_clears_on_drop() {
        let dir = tempfile::tempdir().unwrap();
        let lock = RunLock::acquire(dir.path()).unwrap();
        let err = RunLock::acquire(dir.path()).unwrap_err();
        assert!(err.to_string().contains("lock"), "{err}");
        drop(lock);
        assert!(!dir.path().join(LOCK_FILE).exists());
        RunLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn an_empty_graph_renders_a_valid_empty_digraph() {
        assert_eq!(render_dot(&RepoKG::new()), "digraph repokg {\n}\n");
    }

    #[test]
    fn dot_output_has_one_edge_line_per_relationship() {
        let mut kg = RepoKG::new();
        let root = EntityId::new("module", "root");
        let child = EntityId::new("module", "root.child");
        for id in [&root, &child] {
            kg.add_entity(Entity::Module(ModuleEntity {
                id: id.clone(),
                name: id.name_part().to_string(),
                parent: None,
                member_ids: Vec::new(),
                token_estimate: 0,
            }))
            .unwrap();
        }
        kg.add_relationship(&root, &child, RelationKind::Contains).unwrap();
        let dot = render_dot(&kg);
        assert_eq!(dot.matches(" -> ").count(), kg.relationships().count());
        assert!(dot.contains("\"module:root\" -> \"module:root.child\" [label=\"contains\"];"));
        assert!(dot.contains("\"module:root\" [label=\"module:root\"];"));
    }

    #[test]
    fn a_permanently_failing_doc_call_yields_a_partial_exit() {
        let repo = tempfile::tempdir().unwrap();
        fixture_a(repo.path());
        let config = config_for(repo.path());
        let provider = MockProvider::new();
        provider.fail_always(ops::README, ProviderErrorKind::Network);
        let (exit, failures) = generate_with(&config, &provider).unwrap();
        assert_eq!(exit, EXIT_PARTIAL);
        assert_eq!(failures.len(), 1, "{failures:?}");
        assert!(failures[0].contains("README.md"), "{failures:?}");
        // Everything else still generated.
        assert!(repo.path().join("docs/modules/util.md").exists());
        assert!(!repo.path().join("docs/README.md").exists());
    }

    #[test]
    fn update_without_prior_generate_is_fatal_with_a_remedy() {
        let repo = tempfile::tempdir().unwrap();
        fixture_a(repo.path());
        let config = config_for(repo.path());
        let provider = MockProvider::new();
        let (exit, failures) = update_with(&config, &provider, None).unwrap();
        assert_eq!(exit, EXIT_FATAL);
        assert!(failures[0].contains("generate"), "{failures:?}");
    }

    #[test]
    fn generate_then_noop_update_touches_nothing() {
        let repo = tempfile::tempdir().unwrap();
        fixture_a(repo.path());
        let config = config_for(repo.path());
        let provider = MockProvider::new();
        let (exit, _) = generate_with(&config, &provider).unwrap();
        assert_eq!(exit, EXIT_OK);
        let (exit, failures) = update_with(&config, &provider, None).unwrap();
        assert_eq!(exit, EXIT_OK, "{failures:?}");
        let report: UpdateReport = serde_json::from_slice(
            &fs::read(config.state_dir().join(UPDATE_REPORT_FILE)).unwrap(),
        )
        .unwrap();
        assert!(report.written.is_empty());
        assert!(report.regenerated.is_empty());
    }
}
