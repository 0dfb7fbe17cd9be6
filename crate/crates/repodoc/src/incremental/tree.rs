//! Structural module-tree maintenance. Updates never re-cluster: kept
//! items stay where they are, new items join their file-mates' module, and
//! new files become fresh leaves under the root.

use crate::cluster::{collect_items, ItemInfo, ModuleNode, ModuleTree};
use crate::graph::{EntityId, RepoKG};
use crate::util::slugify;
use std::collections::{BTreeMap, BTreeSet};

/// Re-derives module membership for the refreshed graph while preserving
/// the old tree's shape. Emptied modules are pruned (the root survives);
/// items from files the tree has never seen get a new leaf under the root
/// named after the file stem.
pub fn update_tree_structure(kg: &RepoKG, old_tree: &ModuleTree) -> ModuleTree {
    let items = collect_items(kg);
    let old_membership = old_tree.membership();
    let root_is_leaf = old_tree.root_node().is_leaf();

    // Kept items stay put; their leaves also gather per-file votes that
    // decide where new file-mates land.
    let mut assignment: BTreeMap<EntityId, Vec<ItemInfo>> = BTreeMap::new();
    let mut votes: BTreeMap<String, BTreeMap<EntityId, usize>> = BTreeMap::new();
    let mut pending: Vec<ItemInfo> = Vec::new();
    for item in items {
        let leaf = item
            .ids
            .iter()
            .filter_map(|id| old_membership.get(id))
            .min()
            .filter(|leaf| old_tree.nodes.contains_key(*leaf))
            .cloned();
        match leaf {
            Some(leaf) => {
                *votes.entry(item.file.clone()).or_default().entry(leaf.clone()).or_insert(0) += 1;
                assignment.entry(leaf).or_default().push(item);
            }
            None => pending.push(item),
        }
    }

    let mut used_segments: BTreeSet<String> = old_tree
        .root_node()
        .children
        .iter()
        .filter_map(|c| c.name_part().rsplit('.').next())
        .map(str::to_string)
        .collect();
    let mut new_leaves: BTreeMap<String, EntityId> = BTreeMap::new();
    for item in pending {
        if root_is_leaf {
            assignment.entry(old_tree.root.clone()).or_default().push(item);
            continue;
        }
        if let Some(file_votes) = votes.get(&item.file) {
            // Most kept file-mates wins; ties go to the smaller module id.
            let best = file_votes
                .iter()
                .max_by(|(id_a, n_a), (id_b, n_b)| n_a.cmp(n_b).then(id_b.cmp(id_a)))
                .map(|(id, _)| id.clone())
                .expect("votes maps are never empty");
            assignment.entry(best).or_default().push(item);
            continue;
        }
        let leaf_id = new_leaves.entry(item.file.clone()).or_insert_with(|| {
            let stem = item.file.rsplit('/').next().unwrap_or(&item.file);
            let stem = stem.rsplit_once('.').map(|(s, _)| s).unwrap_or(stem);
            let mut segment = slugify(stem);
            if !used_segments.insert(segment.clone()) {
                let mut n = 2;
                while !used_segments.insert(format!("{segment}-{n}")) {
                    n += 1;
                }
                segment = format!("{segment}-{n}");
            }
            EntityId::new("module", &format!("{}.{segment}", old_tree.root.name_part()))
        });
        assignment.entry(leaf_id.clone()).or_default().push(item);
    }

    let mut nodes = BTreeMap::new();
    rebuild(old_tree, &old_tree.root, None, 0, &assignment, &new_leaves, &mut nodes);
    ModuleTree {
        root: old_tree.root.clone(),
        nodes,
    }
}

/// Copies the kept part of `old` into `nodes` with recomputed members,
/// token estimates, and depths. Returns the subtree's token total, or
/// `None` when the subtree emptied out and was pruned.
fn rebuild(
    old: &ModuleTree,
    id: &EntityId,
    parent: Option<EntityId>,
    depth: u32,
    assignment: &BTreeMap<EntityId, Vec<ItemInfo>>,
    new_leaves: &BTreeMap<String, EntityId>,
    nodes: &mut BTreeMap<EntityId, ModuleNode>,
) -> Option<u64> {
    let old_node = old.node(id)?;
    let mut children: Vec<EntityId> = Vec::new();
    let mut tokens: u64 = 0;
    for child in &old_node.children {
        if let Some(child_tokens) =
            rebuild(old, child, Some(id.clone()), depth + 1, assignment, new_leaves, nodes)
        {
            tokens += child_tokens;
            children.push(child.clone());
        }
    }
    let items = assignment.get(id).map(Vec::as_slice).unwrap_or(&[]);
    tokens += items.iter().map(|i| i.tokens).sum::<u64>();
    if id == &old.root {
        for (file, leaf_id) in new_leaves {
            let leaf_items = &assignment[leaf_id];
            let leaf_tokens: u64 = leaf_items.iter().map(|i| i.tokens).sum();
            let mut members: Vec<EntityId> =
                leaf_items.iter().flat_map(|i| i.ids.iter().cloned()).collect();
            members.sort();
            let name =
                leaf_id.name_part().rsplit('.').next().unwrap_or(file).to_string();
            nodes.insert(
                leaf_id.clone(),
                ModuleNode {
                    id: leaf_id.clone(),
                    name,
                    parent: Some(id.clone()),
                    children: Vec::new(),
                    members,
                    token_estimate: leaf_tokens,
                    depth: depth + 1,
                },
            );
            tokens += leaf_tokens;
            children.push(leaf_id.clone());
        }
    } else if children.is_empty() && items.is_empty() {
        return None;
    }
    children.sort();
    let mut members: Vec<EntityId> = items.iter().flat_map(|i| i.ids.iter().cloned()).collect();
    members.sort();
    nodes.insert(
        id.clone(),
        ModuleNode {
            id: id.clone(),
            name: old_node.name.clone(),
            parent,
            children,
            members,
            token_estimate: tokens,
            depth,
        },
    );
    Some(tokens)
}
