//! Concept enrichment: asks the provider for the domain concepts each code
//! entity embodies and records them as `semantic_impact` edges.

use crate::graph::{CodeKind, ConceptEntity, Entity, EntityId, RelationKind, RepoKG};
use crate::provider::prompts::{concept_prompt, ConceptPayload, ConceptResponse};
use crate::provider::{ops, CompletionRequest, Provider};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// A per-entity enrichment failure; the pipeline continues past these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichFailure {
    pub entity: EntityId,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentReport {
    pub enriched: u64,
    pub concepts: u64,
    pub failures: Vec<EnrichFailure>,
}

/// Entities eligible for enrichment: every code definition except file nodes.
pub fn enrichable_entities(kg: &RepoKG) -> Vec<EntityId> {
    kg.code_entities()
        .filter(|e| e.kind != CodeKind::ModuleFile)
        .map(|e| e.id.clone())
        .collect()
}

/// Enrich every eligible entity in the graph.
pub fn enrich_repository(kg: &mut RepoKG, provider: &dyn Provider) -> EnrichmentReport {
    let targets: BTreeSet<EntityId> = enrichable_entities(kg).into_iter().collect();
    enrich_subset(kg, provider, &targets)
}

/// Enrich the given entities, replacing any concepts they previously carried.
/// Unknown or non-code ids are skipped silently.
pub fn enrich_subset(
    kg: &mut RepoKG,
    provider: &dyn Provider,
    targets: &BTreeSet<EntityId>,
) -> EnrichmentReport {
    let mut report = EnrichmentReport::default();
    for id in targets {
        let Some(entity) = kg.code_entity(id) else {
            continue;
        };
        if entity.kind == CodeKind::ModuleFile {
            continue;
        }
        let payload = ConceptPayload {
            task: "concept".to_string(),
            qualified_name: entity.qualified_name.clone(),
            name: entity.name.clone(),
            kind: entity.kind.as_str().to_string(),
            signature: entity.signature.clone(),
        };
        let request = CompletionRequest::new(concept_prompt(&payload));
        let concepts = match provider
            .complete(ops::CONCEPT, &request)
            .map_err(|e| e.to_string())
            .and_then(|c| {
                serde_json::from_str::<ConceptResponse>(&c.text).map_err(|e| e.to_string())
            }) {
            Ok(response) => response.concepts,
            Err(reason) => {
                report.failures.push(EnrichFailure {
                    entity: id.clone(),
                    reason,
                });
                continue;
            }
        };
        // Replace the previous concept set for this entity.
        for old in kg.edges_from(id, RelationKind::SemanticImpact) {
            kg.remove_relationship(id, &old, RelationKind::SemanticImpact);
        }
        for item in concepts {
            let label = item.label.trim();
            if label.is_empty() {
                continue;
            }
            let concept = ConceptEntity::new(label, item.description.trim());
            let concept_id = concept.id.clone();
            if kg.entity(&concept_id).is_none() {
                kg.add_entity(Entity::Concept(concept)).expect("valid concept");
            }
            if kg
                .add_relationship(id, &concept_id, RelationKind::SemanticImpact)
                .expect("valid endpoints")
            {
                report.concepts += 1;
            }
        }
        report.enriched += 1;
    }
    sweep_orphan_concepts(kg);
    report
}

/// Labels of the concepts attached to an entity, sorted.
pub fn concepts_of(kg: &RepoKG, id: &EntityId) -> Vec<String> {
    let mut labels: Vec<String> = kg
        .edges_from(id, RelationKind::SemanticImpact)
        .into_iter()
        .filter_map(|cid| kg.entity(&cid).and_then(|e| e.as_concept()).map(|c| c.label.clone()))
        .collect();
    labels.sort();
    labels
}

/// Drops concept entities no code entity points at anymore.
pub fn sweep_orphan_concepts(kg: &mut RepoKG) -> Vec<EntityId> {
    let orphans: Vec<EntityId> = kg
        .entities()
        .filter(|e| matches!(e, Entity::Concept(_)))
        .map(|e| e.id().clone())
        .filter(|id| kg.edges_to(id, RelationKind::SemanticImpact).is_empty())
        .collect();
    for id in &orphans {
        kg.remove_entity(id).expect("listed above");
    }
    orphans
}
