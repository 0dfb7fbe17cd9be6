//! The incremental update pipeline: detect changes, refresh the graph,
//! propagate impact, and selectively regenerate exactly the documentation
//! whose inputs shifted.

use crate::cluster::{persist_modules, ModuleTree};
use crate::docgen::{
    component_inputs, doc_source_state, manifest_from_graph, module_inputs, plan_docs,
    readme_inputs, record_doc, render_doc, save_manifest, write_docs, DocGenError, DocInputs,
    DocSet,
};
use crate::enrich::{enrich_subset, sweep_orphan_concepts};
use crate::extract::{entities_of_file, ExtractError, ExtractionReport};
use crate::frontend::LanguageFrontend;
use crate::graph::{DocEntity, Entity, EntityId, GraphError, RepoKG};
use crate::incremental::detect::detect_changes;
use crate::incremental::policy::{ChangeType, PropagationPolicy};
use crate::incremental::propagate::propagate;
use crate::incremental::refresh::refresh_graph;
use crate::incremental::topo::affected_order;
use crate::incremental::tree::update_tree_structure;
use crate::provider::Provider;
use crate::snapshot::{IgnoreSet, RepoSnapshot, SnapshotError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UpdateError {
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    DocGen(#[from] DocGenError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Update knobs. `suppress` skips regeneration for specific doc paths while
/// still counting them as required; recall measurement uses it to simulate
/// missed updates. A suppressed doc keeps its stale content until a later
/// change puts it back on the candidate list.
#[derive(Debug, Clone, Default)]
pub struct UpdateOptions {
    pub policy: PropagationPolicy,
    pub suppress: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedEntityRecord {
    pub entity: String,
    pub change: String,
}

/// Machine-readable outcome of one update run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateReport {
    /// Entity-level changes the snapshot diff found.
    pub changed_entities: Vec<ChangedEntityRecord>,
    /// Entities the policy walk marked as potentially stale.
    pub affected_entities: Vec<String>,
    /// Docs whose recomputed source state differed, before any suppression.
    pub required_doc_updates: Vec<String>,
    /// Docs actually re-rendered through the provider.
    pub regenerated: Vec<String>,
    /// Docs whose bytes changed on disk.
    pub written: Vec<String>,
    /// Docs that did not exist before this run.
    pub created: Vec<String>,
    /// Doc files removed because their subject vanished.
    pub deleted: Vec<String>,
    pub parse_errors: u64,
    pub unresolved_references: u64,
}

/// Everything an update leaves behind.
pub struct UpdateOutcome {
    pub report: UpdateReport,
    /// Extraction state for the refreshed graph; persist it for the next
    /// update's unresolved-reference bookkeeping.
    pub extraction_report: ExtractionReport,
    pub tree: ModuleTree,
}

/// Runs one incremental update against `docs_root`, mutating the graph in
/// place and rewriting only stale doc files. Regeneration is gated on the
/// per-doc source-state hash, so an entity inside the affected set whose
/// rendered inputs did not actually change costs no provider call.
pub fn update_repository(
    kg: &mut RepoKG,
    docs_root: &Path,
    snapshot: &RepoSnapshot,
    provider: &(dyn Provider + Sync),
    project_name: &str,
    old_report: &ExtractionReport,
    frontends: &[Box<dyn LanguageFrontend>],
    ignore: &IgnoreSet,
    options: &UpdateOptions,
) -> Result<UpdateOutcome, UpdateError> {
    let changes = detect_changes(kg, snapshot, frontends, ignore)?;
    let old_tree = ModuleTree::from_graph(kg)?;
    let refresh = refresh_graph(kg, &changes, snapshot, frontends, old_report)?;
    let affected = propagate(&refresh.union_edges, &changes.origins(), &options.policy);

    // Re-derive concepts for entities whose code changed; their doc hashes
    // pick the new concept labels up.
    let re_enrich: BTreeSet<EntityId> = changes
        .changes
        .iter()
        .filter(|c| c.change != ChangeType::Removed)
        .map(|c| c.id.clone())
        .collect();
    if !re_enrich.is_empty() {
        enrich_subset(kg, provider, &re_enrich);
    } else if !refresh.removed_entities.is_empty() {
        sweep_orphan_concepts(kg);
    }

    let tree = update_tree_structure(kg, &old_tree);
    persist_modules(kg, &tree)?;
    let plan = plan_docs(kg, &tree);

    let mut report = UpdateReport {
        changed_entities: changes
            .changes
            .iter()
            .map(|c| ChangedEntityRecord {
                entity: c.id.as_str().to_string(),
                change: c.change.as_str().to_string(),
            })
            .collect(),
        affected_entities: affected.iter().map(|id| id.as_str().to_string()).collect(),
        parse_errors: refresh.report.parse_errors.len() as u64,
        unresolved_references: refresh.report.unresolved.len() as u64,
        ..UpdateReport::default()
    };

    // Component docs worth rechecking: the affected set, everything in a
    // changed or re-derived file, members of modules whose doc is not on
    // record yet, and planned docs that do not exist. Rechecking is pure
    // hashing; only hash mismatches reach the provider.
    let mut candidates: BTreeSet<EntityId> = BTreeSet::new();
    for (id, _) in plan.component_paths.iter() {
        if affected.contains(id) {
            candidates.insert(id.clone());
        }
    }
    let mut recheck_files: BTreeSet<String> = changes.changed_files();
    recheck_files.extend(refresh.rederived_files.iter().cloned());
    for file in &recheck_files {
        for id in entities_of_file(kg, file) {
            if plan.component_paths.contains_key(&id) {
                candidates.insert(id);
            }
        }
    }
    for (module_id, path) in &plan.module_paths {
        if doc_entity(kg, path).is_none() {
            if let Some(node) = tree.node(module_id) {
                for member in &node.members {
                    if plan.component_paths.contains_key(member) {
                        candidates.insert(member.clone());
                    }
                }
            }
        }
    }
    for (id, path) in &plan.component_paths {
        if doc_entity(kg, path).is_none() {
            candidates.insert(id.clone());
        }
    }

    let mut staged: DocSet = DocSet::new();
    for id in affected_order(kg, &candidates) {
        let Some(inputs) = component_inputs(kg, &tree, &plan, &id) else {
            continue;
        };
        regenerate_if_stale(kg, provider, &inputs, options, &mut report, &mut staged)?;
    }

    // Module docs and the README are rechecked on every update, bottom-up.
    let mut module_ids: Vec<EntityId> = plan.module_paths.keys().cloned().collect();
    module_ids.sort_by(|a, b| {
        let da = tree.node(a).map(|n| n.depth).unwrap_or(0);
        let db = tree.node(b).map(|n| n.depth).unwrap_or(0);
        db.cmp(&da).then_with(|| a.cmp(b))
    });
    for module_id in module_ids {
        let Some(inputs) = module_inputs(kg, &tree, &plan, &module_id) else {
            continue;
        };
        regenerate_if_stale(kg, provider, &inputs, options, &mut report, &mut staged)?;
    }
    let inputs = readme_inputs(kg, &tree, &plan, project_name);
    regenerate_if_stale(kg, provider, &inputs, options, &mut report, &mut staged)?;

    // Sweep docs whose subject is gone or whose path is no longer planned.
    let planned: BTreeSet<&String> = plan
        .component_paths
        .values()
        .chain(plan.module_paths.values())
        .chain(std::iter::once(&plan.readme_path))
        .collect();
    let stale: Vec<(EntityId, String)> = kg
        .entities()
        .filter_map(|e| match e {
            Entity::Doc(doc) if !planned.contains(&doc.path) => {
                Some((doc.id.clone(), doc.path.clone()))
            }
            _ => None,
        })
        .collect();
    for (doc_id, path) in stale {
        kg.remove_entity(&doc_id)?;
        match std::fs::remove_file(docs_root.join(&path)) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        report.deleted.push(path);
    }

    write_docs(docs_root, &staged)?;
    save_manifest(docs_root, &manifest_from_graph(kg))?;

    report.required_doc_updates.sort();
    report.regenerated.sort();
    report.written.sort();
    report.created.sort();
    report.deleted.sort();
    Ok(UpdateOutcome {
        report,
        extraction_report: refresh.report,
        tree,
    })
}

fn doc_entity<'a>(kg: &'a RepoKG, path: &str) -> Option<&'a DocEntity> {
    kg.entity(&DocEntity::make_id(path)).and_then(|e| e.as_doc())
}

/// Hash-gated regeneration for one doc: a matching source-state hash means
/// the deterministic provider would reproduce the current bytes, so nothing
/// runs. Suppressed paths count as required but are left untouched.
fn regenerate_if_stale(
    kg: &mut RepoKG,
    provider: &(dyn Provider + Sync),
    inputs: &DocInputs,
    options: &UpdateOptions,
    report: &mut UpdateReport,
    staged: &mut DocSet,
) -> Result<(), UpdateError> {
    let new_hash = doc_source_state(inputs);
    let existing = doc_entity(kg, &inputs.path).cloned();
    if let Some(doc) = &existing {
        if doc.source_state_hash == new_hash {
            return Ok(());
        }
    }
    report.required_doc_updates.push(inputs.path.clone());
    if options.suppress.contains(&inputs.path) {
        return Ok(());
    }
    let content = render_doc(provider, inputs)?;
    report.regenerated.push(inputs.path.clone());
    let bytes_changed = match &existing {
        Some(doc) => doc.content_hash != crate::util::stable_hash64(content.as_bytes()),
        None => true,
    };
    if existing.is_none() {
        report.created.push(inputs.path.clone());
    }
    if bytes_changed {
        report.written.push(inputs.path.clone());
        staged.insert(inputs.path.clone(), content.clone());
    }
    record_doc(kg, inputs, &content)?;
    Ok(())
}

/// Convenience entry point: scans `repo_root`, then runs
/// [`update_repository`] with the built-in frontends.
pub fn update_from_directory(
    kg: &mut RepoKG,
    docs_root: &Path,
    repo_root: &Path,
    provider: &(dyn Provider + Sync),
    project_name: &str,
    old_report: &ExtractionReport,
    options: &UpdateOptions,
) -> Result<UpdateOutcome, UpdateError> {
    let ignore = IgnoreSet::default();
    let snapshot = RepoSnapshot::scan(repo_root, &ignore)?;
    let frontends = crate::frontend::builtin_frontends();
    update_repository(
        kg,
        docs_root,
        &snapshot,
        provider,
        project_name,
        old_report,
        &frontends,
        &ignore,
        options,
    )
}
