//! Impact propagation: given a set of changed entities, walk the relation
//! graph under a [`PropagationPolicy`] to find every entity whose
//! documentation might be stale.

use crate::graph::{EntityId, RelationKind};
use crate::incremental::policy::{ChangeType, PolicyAction, PropDirection, PropagationPolicy};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// A directed edge in the graph the walk runs over. Callers usually pass the
/// union of the edges before and after a refresh, so impact crosses both
/// removed and newly created relationships.
pub type UnionEdge = (EntityId, RelationKind, EntityId);

/// A changed entity seeding the walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Origin {
    pub id: EntityId,
    pub change: ChangeType,
    pub public: bool,
}

impl Origin {
    pub fn new(id: EntityId, change: ChangeType, public: bool) -> Self {
        Origin { id, change, public }
    }
}

struct Adjacency {
    /// node -> (kind, neighbor, direction seen from node)
    out: BTreeMap<EntityId, Vec<(RelationKind, EntityId, PropDirection)>>,
}

impl Adjacency {
    fn new(edges: &[UnionEdge]) -> Self {
        let mut out: BTreeMap<EntityId, Vec<(RelationKind, EntityId, PropDirection)>> =
            BTreeMap::new();
        for (src, kind, dst) in edges {
            // Walking src->dst follows the edge forward (down to a
            // dependency); dst->src walks it backward (up to a dependent).
            out.entry(src.clone())
                .or_default()
                .push((*kind, dst.clone(), PropDirection::Down));
            out.entry(dst.clone())
                .or_default()
                .push((*kind, src.clone(), PropDirection::Up));
        }
        for steps in out.values_mut() {
            steps.sort();
            steps.dedup();
        }
        Adjacency { out }
    }

    fn steps(&self, node: &EntityId) -> &[(RelationKind, EntityId, PropDirection)] {
        self.out.get(node).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Computes the affected set: every origin plus each entity reachable from
/// one under the policy. Each origin runs its own breadth-first walk keyed
/// by its change type; results are unioned.
pub fn propagate(
    edges: &[UnionEdge],
    origins: &[Origin],
    policy: &PropagationPolicy,
) -> BTreeSet<EntityId> {
    let adjacency = Adjacency::new(edges);
    let mut affected: BTreeSet<EntityId> = BTreeSet::new();
    for origin in origins {
        affected.insert(origin.id.clone());
        walk_from(origin, &adjacency, policy, &mut affected);
    }
    affected
}

/// Min-hop BFS. Every rule admits a step iff the *next* hop count stays
/// within its bound, so reaching a node at a smaller hop count permits a
/// superset of the continuations available at a larger one; remembering only
/// the smallest hop per node is therefore lossless.
fn walk_from(
    origin: &Origin,
    adjacency: &Adjacency,
    policy: &PropagationPolicy,
    affected: &mut BTreeSet<EntityId>,
) {
    let mut best_hop: BTreeMap<EntityId, u32> = BTreeMap::new();
    best_hop.insert(origin.id.clone(), 0);
    let mut queue = VecDeque::new();
    queue.push_back((origin.id.clone(), 0u32));
    while let Some((node, hop)) = queue.pop_front() {
        for (kind, neighbor, direction) in adjacency.steps(&node) {
            let allowed = match policy.action(origin.change, origin.public, *kind, *direction) {
                PolicyAction::Stop => false,
                PolicyAction::Propagate { max_hops: None } => true,
                PolicyAction::Propagate { max_hops: Some(limit) } => hop < limit,
            };
            if !allowed {
                continue;
            }
            let next = hop + 1;
            if best_hop.get(neighbor).is_none_or(|&seen| next < seen) {
                best_hop.insert(neighbor.clone(), next);
                affected.insert(neighbor.clone());
                queue.push_back((neighbor.clone(), next));
            }
        }
    }
}
