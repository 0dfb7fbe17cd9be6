//! Documentation generation: plans doc paths, assembles prompt payloads,
//! renders content through the provider in dependency-ordered waves, and
//! tracks every file in the graph and a manifest.

pub mod context;
pub mod mermaid;
pub mod validate;

use crate::cluster::{top_level_ancestor, ModuleTree};
use crate::enrich::concepts_of;
use crate::extract::list_public_apis;
use crate::graph::{
    CodeKind, DocEntity, DocLevel, Entity, EntityId, GraphError, RelationKind, RepoKG,
};
use crate::provider::prompts::{
    component_doc_prompt, module_doc_prompt, readme_prompt, ComponentDocPayload, MemberRef,
    ModuleDocPayload, ReadmePayload, SubmoduleRef,
};
use crate::provider::{ops, CompletionRequest, Provider, ProviderError};
use crate::util::{slugify, stable_hash64, stable_hash64_parts};
use context::{rel_doc_path, related_context, RELATED_BUDGET};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DocGenError {
    #[error("provider failure while rendering {path}: {source}")]
    Provider {
        path: String,
        #[source]
        source: ProviderError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

/// Rendered docs keyed by docs-root-relative path.
pub type DocSet = BTreeMap<String, String>;

/// Stable mapping from entities and modules to their doc file paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocPlan {
    pub component_paths: BTreeMap<EntityId, String>,
    pub module_paths: BTreeMap<EntityId, String>,
    pub readme_path: String,
}

/// Allocates doc paths: component docs for every public definition, module
/// docs for every module except the root (the README covers it). Slug
/// collisions get numeric suffixes, assigned in sorted-id order.
pub fn plan_docs(kg: &RepoKG, tree: &ModuleTree) -> DocPlan {
    let mut used: BTreeMap<String, u32> = BTreeMap::new();
    let mut allocate = |base: &str| -> String {
        let n = used.entry(base.to_string()).or_insert(0);
        *n += 1;
        if *n == 1 {
            base.to_string()
        } else {
            format!("{base}-{n}")
        }
    };
    let mut component_paths = BTreeMap::new();
    for id in list_public_apis(kg) {
        let qname = kg.code_entity(&id).map(|e| e.qualified_name.clone()).unwrap_or_default();
        let slug = allocate(&format!("api/{}", slugify(&qname)));
        component_paths.insert(id, format!("{slug}.md"));
    }
    let mut module_paths = BTreeMap::new();
    for node in tree.modules() {
        if node.id == tree.root {
            continue;
        }
        let local = node
            .path()
            .strip_prefix(&format!("{}.", tree.root_node().path()))
            .unwrap_or(node.path());
        let slug = allocate(&format!("modules/{}", slugify(local)));
        module_paths.insert(node.id.clone(), format!("{slug}.md"));
    }
    DocPlan {
        component_paths,
        module_paths,
        readme_path: "README.md".to_string(),
    }
}

/// Typed payload plus the operation and prompt that carry it.
#[derive(Debug, Clone, PartialEq)]
pub enum DocPayload {
    Component(ComponentDocPayload),
    Module(ModuleDocPayload),
    Readme(ReadmePayload),
}

impl DocPayload {
    pub fn operation(&self) -> &'static str {
        match self {
            DocPayload::Component(_) => ops::COMPONENT_DOC,
            DocPayload::Module(_) => ops::MODULE_DOC,
            DocPayload::Readme(_) => ops::README,
        }
    }

    pub fn prompt(&self) -> String {
        match self {
            DocPayload::Component(p) => component_doc_prompt(p),
            DocPayload::Module(p) => module_doc_prompt(p),
            DocPayload::Readme(p) => readme_prompt(p),
        }
    }

    /// Canonical JSON used for source-state hashing.
    pub fn json(&self) -> String {
        match self {
            DocPayload::Component(p) => serde_json::to_string(p),
            DocPayload::Module(p) => serde_json::to_string(p),
            DocPayload::Readme(p) => serde_json::to_string(p),
        }
        .expect("payloads serialize")
    }

    pub fn title(&self) -> &str {
        match self {
            DocPayload::Component(p) => &p.name,
            DocPayload::Module(p) => &p.name,
            DocPayload::Readme(p) => &p.project_name,
        }
    }
}

/// Everything needed to render one doc and to decide later whether it is
/// stale: the payload, the appended diagram, and the underlying source.
#[derive(Debug, Clone)]
pub struct DocInputs {
    pub path: String,
    pub level: DocLevel,
    pub describes: EntityId,
    pub payload: DocPayload,
    pub diagram: String,
    pub source: String,
}

/// Hash of everything the rendered bytes depend on. Equal hashes mean the
/// deterministic provider would reproduce the file byte for byte.
pub fn doc_source_state(inputs: &DocInputs) -> u64 {
    stable_hash64_parts(&[
        inputs.source.as_bytes(),
        inputs.payload.json().as_bytes(),
        inputs.diagram.as_bytes(),
    ])
}

/// Leaf module that owns a code entity (via its top-level definition).
pub fn module_of_entity(kg: &RepoKG, tree: &ModuleTree, id: &EntityId) -> Option<EntityId> {
    let top = top_level_ancestor(kg, id)?;
    tree.membership().get(&top).cloned()
}

fn summary_of(tree: &ModuleTree, id: &EntityId) -> String {
    match tree.node(id) {
        Some(node) if node.is_leaf() => {
            let n = node.members.len();
            format!("{n} definition{}", if n == 1 { "" } else { "s" })
        }
        Some(node) => {
            let n = node.children.len();
            format!("{n} submodule{}", if n == 1 { "" } else { "s" })
        }
        None => "empty".to_string(),
    }
}

pub fn component_inputs(
    kg: &RepoKG,
    tree: &ModuleTree,
    plan: &DocPlan,
    id: &EntityId,
) -> Option<DocInputs> {
    let entity = kg.code_entity(id)?;
    let path = plan.component_paths.get(id)?.clone();
    let module_id = module_of_entity(kg, tree, id).unwrap_or_else(|| tree.root.clone());
    let module_node = tree.node(&module_id)?;
    let module_doc_path = plan
        .module_paths
        .get(&module_id)
        .map(|p| rel_doc_path(&path, p))
        .unwrap_or_else(|| rel_doc_path(&path, &plan.readme_path));
    let payload = ComponentDocPayload {
        task: "component_doc".to_string(),
        name: entity.name.clone(),
        qualified_name: entity.qualified_name.clone(),
        kind: entity.kind.as_str().to_string(),
        language: entity.language.clone(),
        signature: entity.signature.clone(),
        module_name: module_node.name.clone(),
        module_doc_path,
        related: related_context(kg, id, &plan.component_paths, &path, RELATED_BUDGET),
        concepts: concepts_of(kg, id),
    };
    Some(DocInputs {
        path,
        level: DocLevel::ComponentDoc,
        describes: id.clone(),
        payload: DocPayload::Component(payload),
        diagram: String::new(),
        source: entity.source.clone(),
    })
}

pub fn module_inputs(
    kg: &RepoKG,
    tree: &ModuleTree,
    plan: &DocPlan,
    module_id: &EntityId,
) -> Option<DocInputs> {
    let node = tree.node(module_id)?;
    let path = plan.module_paths.get(module_id)?.clone();
    let mut members: Vec<MemberRef> = node
        .members
        .iter()
        .filter_map(|m| {
            let entity = kg.code_entity(m)?;
            Some(MemberRef {
                name: entity.name.clone(),
                qualified_name: entity.qualified_name.clone(),
                kind: entity.kind.as_str().to_string(),
                doc_path: plan
                    .component_paths
                    .get(m)
                    .map(|p| rel_doc_path(&path, p)),
            })
        })
        .collect();
    members.sort_by(|a, b| a.qualified_name.cmp(&b.qualified_name));
    let submodules: Vec<SubmoduleRef> = node
        .children
        .iter()
        .filter_map(|c| {
            let child = tree.node(c)?;
            Some(SubmoduleRef {
                name: child.name.clone(),
                doc_path: plan
                    .module_paths
                    .get(c)
                    .map(|p| rel_doc_path(&path, p))
                    .unwrap_or_default(),
                summary: summary_of(tree, c),
            })
        })
        .collect();
    let overview = format!("Module {} holds {}.", node.name, summary_of(tree, module_id));
    let diagram = if node.is_leaf() {
        mermaid::leaf_diagram(kg, &node.members)
    } else {
        mermaid::module_diagram(kg, tree, module_id)
    };
    let payload = ModuleDocPayload {
        task: "module_doc".to_string(),
        name: node.name.clone(),
        overview,
        members,
        submodules,
    };
    Some(DocInputs {
        path,
        level: DocLevel::ModuleDoc,
        describes: module_id.clone(),
        payload: DocPayload::Module(payload),
        diagram,
        source: String::new(),
    })
}

pub fn readme_inputs(
    kg: &RepoKG,
    tree: &ModuleTree,
    plan: &DocPlan,
    project_name: &str,
) -> DocInputs {
    let root = tree.root_node();
    let modules: Vec<SubmoduleRef> = root
        .children
        .iter()
        .filter_map(|c| {
            let child = tree.node(c)?;
            Some(SubmoduleRef {
                name: child.name.clone(),
                doc_path: plan.module_paths.get(c).cloned().unwrap_or_default(),
                summary: summary_of(tree, c),
            })
        })
        .collect();
    let entity_count = kg
        .code_entities()
        .filter(|e| e.kind != CodeKind::ModuleFile)
        .count() as u64;
    let file_count = kg
        .code_entities()
        .filter(|e| e.kind == CodeKind::ModuleFile)
        .count() as u64;
    let payload = ReadmePayload {
        task: "readme".to_string(),
        project_name: project_name.to_string(),
        modules,
        entity_count,
        file_count,
        module_count: tree.nodes.len().saturating_sub(1) as u64,
    };
    DocInputs {
        path: plan.readme_path.clone(),
        level: DocLevel::Readme,
        describes: tree.root.clone(),
        payload: DocPayload::Readme(payload),
        diagram: mermaid::module_diagram(kg, tree, &tree.root),
        source: String::new(),
    }
}

fn required_sections(level: DocLevel) -> &'static [&'static str] {
    match level {
        DocLevel::ComponentDoc => &["## Signature", "## Description", "## Parameters", "## Related"],
        DocLevel::ModuleDoc => &["## Overview"],
        DocLevel::Readme => &["## Modules"],
    }
}

/// Makes provider output structurally complete: guarantees the title, the
/// mandatory sections, the component's module link, and the diagram.
fn repair_content(mut content: String, inputs: &DocInputs) -> String {
    if !content.starts_with("# ") {
        content = format!("# {}\n\n{content}", inputs.payload.title());
    }
    if let DocPayload::Component(p) = &inputs.payload {
        if !content.contains("Module: [") {
            content = format!(
                "{}\n\nModule: [{}]({})\n",
                content.trim_end(),
                p.module_name,
                p.module_doc_path
            );
        }
    }
    for section in required_sections(inputs.level) {
        if !content.contains(section) {
            content = format!("{}\n\n{section}\n\n_Not provided._\n", content.trim_end());
        }
    }
    if !inputs.diagram.is_empty() {
        content = format!(
            "{}\n\n## Architecture\n\n```mermaid\n{}\n```\n",
            content.trim_end(),
            inputs.diagram
        );
    }
    format!("{}\n", content.trim_end())
}

/// Renders one doc through the provider and normalizes the result.
pub fn render_doc(provider: &dyn Provider, inputs: &DocInputs) -> Result<String, DocGenError> {
    let request = CompletionRequest::new(inputs.payload.prompt());
    let completion = provider
        .complete(inputs.payload.operation(), &request)
        .map_err(|source| DocGenError::Provider {
            path: inputs.path.clone(),
            source,
        })?;
    Ok(repair_content(completion.text, inputs))
}

/// Upserts the doc entity and its `describes` edge for a rendered file.
pub fn record_doc(kg: &mut RepoKG, inputs: &DocInputs, content: &str) -> Result<(), GraphError> {
    let id = DocEntity::make_id(&inputs.path);
    kg.add_entity(Entity::Doc(DocEntity {
        id: id.clone(),
        level: inputs.level,
        path: inputs.path.clone(),
        content_hash: stable_hash64(content.as_bytes()),
        source_state_hash: doc_source_state(inputs),
    }))?;
    for old in kg.edges_from(&id, RelationKind::Describes) {
        if old != inputs.describes {
            kg.remove_relationship(&id, &old, RelationKind::Describes);
        }
    }
    kg.add_relationship(&id, &inputs.describes, RelationKind::Describes)?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateReport {
    pub component_docs: u64,
    pub module_docs: u64,
    pub readme: bool,
    /// Static record of the wave order the run followed.
    pub wave_log: Vec<String>,
}

/// One doc the provider permanently failed on during a lenient run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocFailure {
    pub path: String,
    pub error: String,
}

/// Full generation: component docs in parallel, then module docs from the
/// deepest level upward, then the README. Fails fast on the first error.
pub fn generate_all(
    kg: &mut RepoKG,
    tree: &ModuleTree,
    provider: &(dyn Provider + Sync),
    project_name: &str,
) -> Result<(DocSet, GenerateReport), DocGenError> {
    let (docs, report, _) = generate_docs(kg, tree, provider, project_name, false)?;
    Ok((docs, report))
}

/// Like [`generate_all`], but provider failures are collected per doc and the
/// run keeps going; failed docs are simply absent from the returned set.
/// Graph and IO errors still abort.
pub fn generate_all_lenient(
    kg: &mut RepoKG,
    tree: &ModuleTree,
    provider: &(dyn Provider + Sync),
    project_name: &str,
) -> Result<(DocSet, GenerateReport, Vec<DocFailure>), DocGenError> {
    generate_docs(kg, tree, provider, project_name, true)
}

fn generate_docs(
    kg: &mut RepoKG,
    tree: &ModuleTree,
    provider: &(dyn Provider + Sync),
    project_name: &str,
    lenient: bool,
) -> Result<(DocSet, GenerateReport, Vec<DocFailure>), DocGenError> {
    let plan = plan_docs(kg, tree);
    let mut docs = DocSet::new();
    let mut report = GenerateReport::default();
    let mut failures = Vec::new();
    let keep = |result: Result<String, DocGenError>,
                    failures: &mut Vec<DocFailure>|
     -> Result<Option<String>, DocGenError> {
        match result {
            Ok(content) => Ok(Some(content)),
            Err(DocGenError::Provider { path, source }) if lenient => {
                failures.push(DocFailure {
                    path,
                    error: source.to_string(),
                });
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };

    let component_inputs_list: Vec<DocInputs> = plan
        .component_paths
        .keys()
        .filter_map(|id| component_inputs(kg, tree, &plan, id))
        .collect();
    let rendered: Vec<Result<String, DocGenError>> = component_inputs_list
        .par_iter()
        .map(|inputs| render_doc(provider, inputs))
        .collect();
    for (inputs, result) in component_inputs_list.iter().zip(rendered) {
        let Some(content) = keep(result, &mut failures)? else {
            continue;
        };
        record_doc(kg, inputs, &content)?;
        docs.insert(inputs.path.clone(), content);
        report.component_docs += 1;
    }
    report
        .wave_log
        .push(format!("wave 1: {} component docs", report.component_docs));

    let mut module_ids: Vec<EntityId> = plan.module_paths.keys().cloned().collect();
    module_ids.sort_by(|a, b| {
        let da = tree.node(a).map(|n| n.depth).unwrap_or(0);
        let db = tree.node(b).map(|n| n.depth).unwrap_or(0);
        db.cmp(&da).then_with(|| a.cmp(b))
    });
    for module_id in module_ids {
        let Some(inputs) = module_inputs(kg, tree, &plan, &module_id) else {
            continue;
        };
        if let Some(content) = keep(render_doc(provider, &inputs), &mut failures)? {
            record_doc(kg, &inputs, &content)?;
            docs.insert(inputs.path.clone(), content);
            report.module_docs += 1;
        }
    }
    report
        .wave_log
        .push(format!("wave 2: {} module docs (deepest first)", report.module_docs));

    let inputs = readme_inputs(kg, tree, &plan, project_name);
    if let Some(content) = keep(render_doc(provider, &inputs), &mut failures)? {
        record_doc(kg, &inputs, &content)?;
        docs.insert(inputs.path.clone(), content);
        report.readme = true;
    }
    report.wave_log.push("wave 3: README".to_string());

    Ok((docs, report, failures))
}

pub const MANIFEST_FILE: &str = ".manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub content_hash: String,
    pub source_state_hash: String,
    pub describes: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocManifest {
    pub schema_version: u32,
    pub docs: BTreeMap<String, ManifestEntry>,
}

pub fn hash_hex(h: u64) -> String {
    format!("{h:016x}")
}

/// Builds the manifest from the doc entities currently in the graph.
pub fn manifest_from_graph(kg: &RepoKG) -> DocManifest {
    let mut docs = BTreeMap::new();
    for entity in kg.entities() {
        let Entity::Doc(doc) = entity else { continue };
        let describes = kg
            .edges_from(&doc.id, RelationKind::Describes)
            .first()
            .map(|id| id.as_str().to_string())
            .unwrap_or_default();
        docs.insert(
            doc.path.clone(),
            ManifestEntry {
                content_hash: hash_hex(doc.content_hash),
                source_state_hash: hash_hex(doc.source_state_hash),
                describes,
            },
        );
    }
    DocManifest {
        schema_version: MANIFEST_VERSION,
        docs,
    }
}

/// Writes rendered docs under `docs_root`, creating directories as needed.
pub fn write_docs(docs_root: &Path, docs: &DocSet) -> Result<(), std::io::Error> {
    for (rel, content) in docs {
        let path = docs_root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, content)?;
    }
    Ok(())
}

pub fn save_manifest(docs_root: &Path, manifest: &DocManifest) -> Result<(), DocGenError> {
    std::fs::create_dir_all(docs_root)?;
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    std::fs::write(docs_root.join(MANIFEST_FILE), bytes)?;
    Ok(())
}

pub fn load_manifest(docs_root: &Path) -> Result<DocManifest, DocGenError> {
    let bytes = std::fs::read(docs_root.join(MANIFEST_FILE))?;
    Ok(serde_json::from_slice(&bytes)?)
}
