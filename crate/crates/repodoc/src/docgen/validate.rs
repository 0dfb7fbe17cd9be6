//! Post-generation validation: link integrity, diagram well-formedness,
//! manifest/graph consistency, and module member indexes.

use super::mermaid::validate_mermaid;
use super::{load_manifest, manifest_from_graph, plan_docs, DocPlan};
use crate::cluster::ModuleTree;
use crate::graph::{DocLevel, Entity, RepoKG};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub doc: String,
    pub message: String,
}

fn issue(doc: &str, message: impl Into<String>) -> ValidationIssue {
    ValidationIssue {
        doc: doc.to_string(),
        message: message.into(),
    }
}

/// Resolves a relative link against a doc's directory; `None` when the link
/// escapes the docs root.
fn resolve_link(from_doc: &str, target: &str) -> Option<String> {
    let mut parts: Vec<&str> = from_doc.split('/').collect();
    parts.pop();
    for piece in target.split('/') {
        match piece {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            other => parts.push(other),
        }
    }
    Some(parts.join("/"))
}

fn is_external(target: &str) -> bool {
    target.starts_with("http://")
        || target.starts_with("https://")
        || target.starts_with("mailto:")
        || target.starts_with('#')
}

/// Extracts fenced ```mermaid blocks.
fn mermaid_blocks(content: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in content.lines() {
        match &mut current {
            Some(block) => {
                if line.trim_end() == "```" {
                    blocks.push(block.trim_end().to_string());
                    current = None;
                } else {
                    block.push_str(line);
                    block.push('\n');
                }
            }
            None if line.trim_end() == "```mermaid" => current = Some(String::new()),
            None => {}
        }
    }
    blocks
}

/// Validates the generated docs on disk against the graph. An empty result
/// means the doc set is complete and internally consistent.
pub fn validate_docs(docs_root: &Path, kg: &RepoKG) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let link_re = Regex::new(r"\[[^\]]*\]\(([^)\s]+)\)").expect("valid regex");

    let manifest = match load_manifest(docs_root) {
        Ok(m) => m,
        Err(e) => {
            issues.push(issue(super::MANIFEST_FILE, format!("cannot load manifest: {e}")));
            return issues;
        }
    };
    let expected = manifest_from_graph(kg);
    if manifest != expected {
        for path in expected.docs.keys() {
            if !manifest.docs.contains_key(path) {
                issues.push(issue(path, "tracked in the graph but missing from the manifest"));
            }
        }
        for path in manifest.docs.keys() {
            if !expected.docs.contains_key(path) {
                issues.push(issue(path, "in the manifest but not tracked in the graph"));
            }
        }
        if issues.is_empty() {
            issues.push(issue(super::MANIFEST_FILE, "manifest hashes disagree with the graph"));
        }
    }

    for (path, entry) in &manifest.docs {
        let file = docs_root.join(path);
        let content = match std::fs::read_to_string(&file) {
            Ok(c) => c,
            Err(e) => {
                issues.push(issue(path, format!("cannot read doc file: {e}")));
                continue;
            }
        };
        let actual = super::hash_hex(crate::util::stable_hash64(content.as_bytes()));
        if actual != entry.content_hash {
            issues.push(issue(path, "content hash does not match the file on disk"));
        }
        for capture in link_re.captures_iter(&content) {
            let target = &capture[1];
            if is_external(target) {
                continue;
            }
            let target = target.split('#').next().unwrap_or(target);
            if target.is_empty() {
                continue;
            }
            match resolve_link(path, target) {
                Some(resolved) if docs_root.join(&resolved).exists() => {}
                Some(resolved) => {
                    issues.push(issue(path, format!("broken link to {resolved}")));
                }
                None => {
                    issues.push(issue(path, format!("link escapes the docs root: {target}")));
                }
            }
        }
        for block in mermaid_blocks(&content) {
            if let Err(e) = validate_mermaid(&block) {
                issues.push(issue(path, format!("invalid mermaid diagram: {e}")));
            }
        }
    }

    // Coverage and index consistency need the module tree.
    if let Ok(tree) = ModuleTree::from_graph(kg) {
        let plan = plan_docs(kg, &tree);
        issues.extend(check_coverage(docs_root, kg, &tree, &plan));
    }
    issues
}

fn check_coverage(
    docs_root: &Path,
    kg: &RepoKG,
    tree: &ModuleTree,
    plan: &DocPlan,
) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    if !docs_root.join(&plan.readme_path).exists() {
        issues.push(issue(&plan.readme_path, "README is missing"));
    }
    for (id, path) in &plan.component_paths {
        if !docs_root.join(path).exists() {
            issues.push(issue(path, format!("missing component doc for {id}")));
        }
    }
    for (module_id, path) in &plan.module_paths {
        let file = docs_root.join(path);
        if !file.exists() {
            issues.push(issue(path, format!("missing module doc for {module_id}")));
            continue;
        }
        // The member index must link every documented member.
        let content = std::fs::read_to_string(&file).unwrap_or_default();
        if let Some(node) = tree.node(module_id) {
            for member in &node.members {
                if let Some(member_path) = plan.component_paths.get(member) {
                    let rel = super::context::rel_doc_path(path, member_path);
                    if !content.contains(&format!("({rel})")) {
                        issues.push(issue(
                            path,
                            format!("member index does not link {member}"),
                        ));
                    }
                }
            }
        }
    }
    // Every doc entity must sit at a planned path.
    let planned: BTreeSet<&String> = plan
        .component_paths
        .values()
        .chain(plan.module_paths.values())
        .chain(std::iter::once(&plan.readme_path))
        .collect();
    for entity in kg.entities() {
        if let Entity::Doc(doc) = entity {
            if !planned.contains(&doc.path) && doc.level != DocLevel::Readme {
                issues.push(issue(&doc.path, "doc entity does not match any planned path"));
            }
        }
    }
    issues
}

/// Convenience used by tests: docs written by [`super::generate_all`] plus
/// [`super::save_manifest`] must validate cleanly.
pub fn assert_valid(docs_root: &Path, kg: &RepoKG) -> Result<(), String> {
    let issues = validate_docs(docs_root, kg);
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues
            .iter()
            .map(|i| format!("{}: {}", i.doc, i.message))
            .collect::<Vec<_>>()
            .join("\n"))
    }
}
