//! Mermaid diagram rendering for module docs, plus a strict validator for
//! the exact dialect the renderer emits.

use crate::cluster::ModuleTree;
use crate::graph::{EntityId, RelationKind, RepoKG};
use std::collections::{BTreeMap, BTreeSet};

/// Diagrams are capped to keep them renderable; highest-degree nodes win.
pub const MAX_NODES: usize = 30;

/// Call graph between the members of one leaf module.
pub fn leaf_diagram(kg: &RepoKG, members: &[EntityId]) -> String {
    let mut edges: BTreeSet<(EntityId, EntityId)> = BTreeSet::new();
    let member_set: BTreeSet<&EntityId> = members.iter().collect();
    for m in members {
        for dst in kg.edges_from(m, RelationKind::Calls) {
            if member_set.contains(&dst) {
                edges.insert((m.clone(), dst.clone()));
            }
        }
    }
    let labels: BTreeMap<EntityId, String> = members
        .iter()
        .map(|m| {
            let label = kg
                .code_entity(m)
                .map(|e| e.name.clone())
                .unwrap_or_else(|| m.name_part().to_string());
            (m.clone(), label)
        })
        .collect();
    render(members, &labels, &edges)
}

/// Module-to-module diagram for one internal node: edges are member calls
/// and file imports rolled up to the node's direct children.
pub fn module_diagram(kg: &RepoKG, tree: &ModuleTree, module: &EntityId) -> String {
    let node = match tree.node(module) {
        Some(n) => n,
        None => return render(&[], &BTreeMap::new(), &BTreeSet::new()),
    };
    let children = node.children.clone();
    let to_child = child_attribution(tree, module);
    let file_child = file_attribution(kg, tree, &to_child);
    let mut edges: BTreeSet<(EntityId, EntityId)> = BTreeSet::new();
    for rel in kg.relationships() {
        let pair = match rel.kind {
            RelationKind::Calls => {
                let (Some(a), Some(b)) = (to_child.get(&rel.src), to_child.get(&rel.dst)) else {
                    continue;
                };
                (a.clone(), b.clone())
            }
            RelationKind::Imports => {
                let src_file = kg.code_entity(&rel.src).map(|e| e.file_path.clone());
                let dst_file = kg.code_entity(&rel.dst).map(|e| e.file_path.clone());
                let (Some(sf), Some(df)) = (src_file, dst_file) else { continue };
                let (Some(a), Some(b)) = (file_child.get(&sf), file_child.get(&df)) else {
                    continue;
                };
                (a.clone(), b.clone())
            }
            _ => continue,
        };
        if pair.0 != pair.1 {
            edges.insert(pair);
        }
    }
    let labels: BTreeMap<EntityId, String> = children
        .iter()
        .filter_map(|c| tree.node(c).map(|n| (c.clone(), n.name.clone())))
        .collect();
    render(&children, &labels, &edges)
}

/// Maps every code entity under `module` to the direct child subtree
/// holding it.
fn child_attribution(tree: &ModuleTree, module: &EntityId) -> BTreeMap<EntityId, EntityId> {
    let mut map = BTreeMap::new();
    let node = match tree.node(module) {
        Some(n) => n,
        None => return map,
    };
    for child in &node.children {
        let mut stack = vec![child.clone()];
        while let Some(current) = stack.pop() {
            if let Some(n) = tree.node(&current) {
                for member in &n.members {
                    map.insert(member.clone(), child.clone());
                }
                stack.extend(n.children.iter().cloned());
            }
        }
    }
    map
}

/// Attributes each source file to the child holding the majority of its
/// top-level items (ties go to the lexicographically smaller child id).
fn file_attribution(
    kg: &RepoKG,
    _tree: &ModuleTree,
    to_child: &BTreeMap<EntityId, EntityId>,
) -> BTreeMap<String, EntityId> {
    let mut votes: BTreeMap<String, BTreeMap<EntityId, u64>> = BTreeMap::new();
    for (member, child) in to_child {
        if let Some(entity) = kg.code_entity(member) {
            *votes
                .entry(entity.file_path.clone())
                .or_default()
                .entry(child.clone())
                .or_insert(0) += 1;
        }
    }
    votes
        .into_iter()
        .map(|(file, counts)| {
            let winner = counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
                .expect("non-empty votes")
                .0;
            (file, winner)
        })
        .collect()
}

/// Renders `graph TD` text: declarations for every kept node (stable
/// `n<idx>` ids in input order) followed by sorted unique edges.
fn render(
    nodes: &[EntityId],
    labels: &BTreeMap<EntityId, String>,
    edges: &BTreeSet<(EntityId, EntityId)>,
) -> String {
    let kept: Vec<EntityId> = if nodes.len() > MAX_NODES {
        let mut degree: BTreeMap<&EntityId, u64> = BTreeMap::new();
        for (a, b) in edges {
            *degree.entry(a).or_insert(0) += 1;
            *degree.entry(b).or_insert(0) += 1;
        }
        let mut ranked: Vec<&EntityId> = nodes.iter().collect();
        ranked.sort_by(|a, b| {
            let da = degree.get(*a).copied().unwrap_or(0);
            let db = degree.get(*b).copied().unwrap_or(0);
            db.cmp(&da)
                .then_with(|| labels.get(*a).cmp(&labels.get(*b)))
                .then_with(|| a.cmp(b))
        });
        let keep: BTreeSet<&EntityId> = ranked.into_iter().take(MAX_NODES).collect();
        nodes.iter().filter(|n| keep.contains(n)).cloned().collect()
    } else {
        nodes.to_vec()
    };
    let mut out = String::from("graph TD");
    if kept.is_empty() {
        out.push_str("\n    empty[\"(no members)\"]");
        return out;
    }
    let index: BTreeMap<&EntityId, usize> =
        kept.iter().enumerate().map(|(i, id)| (id, i)).collect();
    for (i, id) in kept.iter().enumerate() {
        let label = labels
            .get(id)
            .cloned()
            .unwrap_or_else(|| id.name_part().to_string())
            .replace('"', "'");
        out.push_str(&format!("\n    n{i}[\"{label}\"]"));
    }
    let mut lines: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (a, b) in edges {
        if let (Some(&ia), Some(&ib)) = (index.get(a), index.get(b)) {
            lines.insert((ia, ib));
        }
    }
    for (ia, ib) in lines {
        out.push_str(&format!("\n    n{ia} --> n{ib}"));
    }
    out
}

/// Checks diagram text against the emitted dialect: a `graph TD` header,
/// quoted node declarations, and edges between declared nodes only.
pub fn validate_mermaid(text: &str) -> Result<(), String> {
    let mut lines = text.lines();
    if lines.next() != Some("graph TD") {
        return Err("diagram must start with 'graph TD'".to_string());
    }
    let mut declared: BTreeSet<String> = BTreeSet::new();
    for line in lines {
        let line = line.strip_prefix("    ").ok_or_else(|| {
            format!("line not indented four spaces: {line:?}")
        })?;
        if let Some((src, dst)) = line.split_once(" --> ") {
            for end in [src, dst] {
                if !declared.contains(end) {
                    return Err(format!("edge references undeclared node {end:?}"));
                }
            }
        } else if let Some((id, rest)) = line.split_once('[') {
            if !rest.starts_with('"') || !rest.ends_with("\"]") {
                return Err(format!("malformed node label: {line:?}"));
            }
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric()) {
                return Err(format!("malformed node id: {id:?}"));
            }
            if !declared.insert(id.to_string()) {
                return Err(format!("node {id:?} declared twice"));
            }
        } else {
            return Err(format!("unrecognized diagram line: {line:?}"));
        }
    }
    if declared.is_empty() {
        return Err("diagram declares no nodes".to_string());
    }
    Ok(())
}
