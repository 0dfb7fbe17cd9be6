//! Context bundles: the related-entity material embedded in component doc
//! prompts, assembled in fixed tiers under a token budget.

use crate::graph::{CodeKind, EntityId, RelationKind, RepoKG};
use crate::provider::prompts::RelatedDoc;
use crate::util::estimate_tokens;
use std::collections::BTreeMap;

/// Token budget for the related-context section of one prompt.
pub const RELATED_BUDGET: u64 = 1024;

/// Relative path from one docs-root-relative file to another.
pub fn rel_doc_path(from: &str, to: &str) -> String {
    let from_dir: Vec<&str> = from.split('/').collect();
    let from_dir = &from_dir[..from_dir.len().saturating_sub(1)];
    let to_parts: Vec<&str> = to.split('/').collect();
    let common = from_dir
        .iter()
        .zip(to_parts.iter())
        .take_while(|(a, b)| a == b)
        .count();
    let mut parts: Vec<String> = Vec::new();
    for _ in common..from_dir.len() {
        parts.push("..".to_string());
    }
    for part in &to_parts[common..] {
        parts.push(part.to_string());
    }
    parts.join("/")
}

fn entry(
    kg: &RepoKG,
    id: &EntityId,
    relation: &str,
    doc_paths: &BTreeMap<EntityId, String>,
    from_doc: &str,
) -> Option<RelatedDoc> {
    let entity = kg.code_entity(id)?;
    let signature = if entity.kind == CodeKind::ModuleFile {
        entity.qualified_name.clone()
    } else {
        entity.signature.clone()
    };
    Some(RelatedDoc {
        qualified_name: entity.qualified_name.clone(),
        relation: relation.to_string(),
        signature,
        doc_path: doc_paths.get(id).map(|p| rel_doc_path(from_doc, p)),
    })
}

fn sorted(mut ids: Vec<EntityId>) -> Vec<EntityId> {
    ids.sort();
    ids.dedup();
    ids
}

/// Builds the tiered related list for `id`'s component doc. Tiers appear in
/// a fixed order (outgoing calls, public callers, inheritance both ways,
/// file imports); assembly stops at the first entry that would overflow
/// the budget.
pub fn related_context(
    kg: &RepoKG,
    id: &EntityId,
    doc_paths: &BTreeMap<EntityId, String>,
    from_doc: &str,
    budget: u64,
) -> Vec<RelatedDoc> {
    let mut tiers: Vec<(String, EntityId)> = Vec::new();
    for dst in sorted(kg.edges_from(id, RelationKind::Calls)) {
        if dst != *id {
            tiers.push(("calls".to_string(), dst));
        }
    }
    // Only public callers are listed: private bodies can change without
    // their callees noticing, and docs must not leak private internals.
    for src in sorted(kg.edges_to(id, RelationKind::Calls)) {
        let public = kg
            .code_entity(&src)
            .map(|e| e.visibility.is_public())
            .unwrap_or(false);
        if public && src != *id {
            tiers.push(("called by".to_string(), src));
        }
    }
    for (kind, fwd, back) in [
        (RelationKind::Implements, "implements", "implemented by"),
        (RelationKind::Extends, "extends", "extended by"),
    ] {
        for dst in sorted(kg.edges_from(id, kind)) {
            tiers.push((fwd.to_string(), dst));
        }
        for src in sorted(kg.edges_to(id, kind)) {
            tiers.push((back.to_string(), src));
        }
    }
    if let Some(entity) = kg.code_entity(id) {
        let file_node = kg
            .code_entities()
            .find(|e| e.kind == CodeKind::ModuleFile && e.file_path == entity.file_path)
            .map(|e| e.id.clone());
        if let Some(file_id) = file_node {
            for dst in sorted(kg.edges_from(&file_id, RelationKind::Imports)) {
                tiers.push(("imports".to_string(), dst));
            }
        }
    }

    let mut out = Vec::new();
    let mut used = 0u64;
    for (relation, other) in tiers {
        let Some(doc) = entry(kg, &other, &relation, doc_paths, from_doc) else {
            continue;
        };
        let cost = estimate_tokens(&doc.qualified_name) + estimate_tokens(&doc.signature);
        if used + cost > budget {
            break;
        }
        used += cost;
        out.push(doc);
    }
    out
}
