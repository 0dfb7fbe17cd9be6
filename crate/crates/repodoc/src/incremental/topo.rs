//! Regeneration ordering: strongly connected components of the dependency
//! subgraph induced by the affected set, scheduled dependencies-first.

use crate::graph::{EntityId, RelationKind, RepoKG};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

const DEPENDENCY_KINDS: [RelationKind; 3] = [
    RelationKind::Calls,
    RelationKind::Implements,
    RelationKind::Extends,
];

/// Orders the affected entities so that dependencies (callees, supertypes)
/// come before their dependents. Cycles are collapsed into components;
/// components and their members break ties by qualified name.
pub fn affected_order(kg: &RepoKG, affected: &BTreeSet<EntityId>) -> Vec<EntityId> {
    let nodes: Vec<EntityId> = affected.iter().cloned().collect();
    let index_of: BTreeMap<&EntityId, usize> =
        nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, node) in nodes.iter().enumerate() {
        for kind in DEPENDENCY_KINDS {
            for dst in kg.edges_from(node, kind) {
                if let Some(&j) = index_of.get(&dst) {
                    succ[i].push(j);
                }
            }
        }
        succ[i].sort_unstable();
        succ[i].dedup();
    }

    let components = tarjan_components(nodes.len(), &succ);
    let mut component_of = vec![0usize; nodes.len()];
    for (c, members) in components.iter().enumerate() {
        for &m in members {
            component_of[m] = c;
        }
    }

    // Kahn over the condensation: an edge i -> j says i depends on j, so j's
    // component must be emitted before i's.
    let mut dependents: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); components.len()];
    let mut indegree = vec![0usize; components.len()];
    for (i, targets) in succ.iter().enumerate() {
        for &j in targets {
            let (ci, cj) = (component_of[i], component_of[j]);
            if ci != cj && dependents[cj].insert(ci) {
                indegree[ci] += 1;
            }
        }
    }

    let sort_key = |i: usize| -> String {
        let id = &nodes[i];
        kg.code_entity(id)
            .map(|c| c.qualified_name.clone())
            .unwrap_or_else(|| id.as_str().to_string())
    };
    let component_key = |c: usize| -> String {
        components[c].iter().map(|&m| sort_key(m)).min().expect("non-empty component")
    };

    let mut ready: BinaryHeap<Reverse<(String, usize)>> = BinaryHeap::new();
    for c in 0..components.len() {
        if indegree[c] == 0 {
            ready.push(Reverse((component_key(c), c)));
        }
    }
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(Reverse((_, c))) = ready.pop() {
        let mut members = components[c].clone();
        members.sort_by_key(|&m| sort_key(m));
        order.extend(members.into_iter().map(|m| nodes[m].clone()));
        for &d in &dependents[c] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.push(Reverse((component_key(d), d)));
            }
        }
    }
    debug_assert_eq!(order.len(), nodes.len());
    order
}

/// Iterative Tarjan: returns components with members sorted, in reverse
/// topological discovery order (order is irrelevant to callers).
fn tarjan_components(n: usize, succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSET: usize = usize::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut components: Vec<Vec<usize>> = Vec::new();

    for start in 0..n {
        if index[start] != UNSET {
            continue;
        }
        // Frames carry (node, next child position) so the DFS can resume
        // after returning from a child.
        let mut frames: Vec<(usize, usize)> = vec![(start, 0)];
        index[start] = next_index;
        low[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;
        while let Some(&mut (v, ref mut child)) = frames.last_mut() {
            if *child < succ[v].len() {
                let w = succ[v][*child];
                *child += 1;
                if index[w] == UNSET {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(&(parent, _)) = frames.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut component = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    component.sort_unstable();
                    components.push(component);
                }
            }
        }
    }
    components
}

/// True when, for every dependency edge between entities of `order` that
/// crosses a component boundary, the dependency appears first. Used by the
/// acceptance suite to certify orderings.
pub fn is_valid_order(kg: &RepoKG, order: &[EntityId]) -> bool {
    let position: BTreeMap<&EntityId, usize> =
        order.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let affected: BTreeSet<EntityId> = order.iter().cloned().collect();
    let nodes: Vec<EntityId> = affected.iter().cloned().collect();
    let index_of: BTreeMap<&EntityId, usize> =
        nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, node) in nodes.iter().enumerate() {
        for kind in DEPENDENCY_KINDS {
            for dst in kg.edges_from(node, kind) {
                if let Some(&j) = index_of.get(&dst) {
                    succ[i].push(j);
                }
            }
        }
    }
    let components = tarjan_components(nodes.len(), &succ);
    let mut component_of = vec![0usize; nodes.len()];
    for (c, members) in components.iter().enumerate() {
        for &m in members {
            component_of[m] = c;
        }
    }
    for (i, targets) in succ.iter().enumerate() {
        for &j in targets {
            if component_of[i] != component_of[j]
                && position[&nodes[j]] >= position[&nodes[i]]
            {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CodeEntity, CodeKind, Entity, Span, Visibility};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph_of(names: &[&str], edges: &[(&str, &str)]) -> RepoKG {
        let mut kg = RepoKG::new();
        for name in names {
            kg.add_entity(Entity::Code(CodeEntity {
                id: CodeEntity::make_id(CodeKind::Function, name),
                kind: CodeKind::Function,
                name: name.to_string(),
                qualified_name: name.to_string(),
                file_path: "f.py".into(),
                span: Span { start_line: 1, end_line: 1 },
                signature: format!("def {name}()"),
                source: format!("def {name}():\n    pass"),
                visibility: Visibility::Public,
                language: "python".into(),
            }))
            .unwrap();
        }
        for (a, b) in edges {
            kg.add_relationship(
                &EntityId::new("function", a),
                &EntityId::new("function", b),
                RelationKind::Calls,
            )
            .unwrap();
        }
        kg
    }

    fn all(kg: &RepoKG) -> BTreeSet<EntityId> {
        kg.code_entities().map(|c| c.id.clone()).collect()
    }

    fn names(order: &[EntityId]) -> Vec<&str> {
        order.iter().map(|e| e.as_str().split_once(':').unwrap().1).collect()
    }

    #[test]
    fn dependencies_come_before_dependents() {
        let kg = graph_of(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        let order = affected_order(&kg, &all(&kg));
        assert_eq!(names(&order), ["c", "b", "a"]);
        assert!(is_valid_order(&kg, &order));
    }

    #[test]
    fn cycles_collapse_into_one_component() {
        let kg = graph_of(
            &["a", "b", "c", "d"],
            &[("a", "b"), ("b", "a"), ("a", "c"), ("d", "a")],
        );
        let order = affected_order(&kg, &all(&kg));
        assert_eq!(names(&order), ["c", "a", "b", "d"]);
        assert!(is_valid_order(&kg, &order));
    }

    #[test]
    fn independent_components_sort_by_qualified_name() {
        let kg = graph_of(&["zeta", "alpha", "mid"], &[]);
        let order = affected_order(&kg, &all(&kg));
        assert_eq!(names(&order), ["alpha", "mid", "zeta"]);
    }

    #[test]
    fn edges_leaving_the_affected_set_are_ignored() {
        let kg = graph_of(&["a", "b", "outside"], &[("a", "b"), ("b", "outside")]);
        let affected: BTreeSet<EntityId> =
            [EntityId::new("function", "a"), EntityId::new("function", "b")]
                .into_iter()
                .collect();
        let order = affected_order(&kg, &affected);
        assert_eq!(names(&order), ["b", "a"]);
    }

    #[test]
    fn random_subgraphs_yield_valid_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..40 {
            let n = rng.random_range(1..=20);
            let node_names: Vec<String> = (0..n).map(|i| format!("n{i:02}")).collect();
            let refs: Vec<&str> = node_names.iter().map(String::as_str).collect();
            let mut edges = Vec::new();
            for _ in 0..rng.random_range(0..=40) {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                edges.push((refs[a], refs[b]));
            }
            let kg = graph_of(&refs, &edges);
            let mut affected = BTreeSet::new();
            for name in &node_names {
                if rng.random_bool(0.7) {
                    affected.insert(EntityId::new("function", name));
                }
            }
            let order = affected_order(&kg, &affected);
            assert_eq!(order.len(), affected.len());
            assert!(is_valid_order(&kg, &order));
            assert_eq!(order, affected_order(&kg, &affected), "order must be deterministic");
        }
    }
}
