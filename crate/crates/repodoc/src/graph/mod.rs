//! The repository knowledge graph: typed entities plus directed, typed edges,
//! with forward and backward adjacency indices and a stable JSON file format.

mod entity;

pub use entity::{
    CodeEntity, CodeKind, ConceptEntity, DocEntity, DocLevel, Entity, EntityId, ModuleEntity,
    Provenance, RelationKind, Relationship, Span, Visibility,
};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

/// Version written into and required from persisted graph files.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("entity id {0} already exists with a different role or kind")]
    DuplicateConflict(EntityId),
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("relationship endpoint {0} does not exist")]
    MissingEndpoint(EntityId),
    #[error("invalid entity: {0}")]
    InvalidEntity(String),
    #[error("invalid relationship: {0}")]
    InvalidRelationship(String),
    #[error("unsupported graph schema version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed graph file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Traversal direction for neighbor queries. `Both` unions forward and
/// backward edge entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
    Both,
}

/// One entry returned by [`RepoKG::neighbors`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Neighbor {
    pub kind: RelationKind,
    pub id: EntityId,
    /// `Forward` if the queried node is the edge source, else `Backward`.
    pub direction: Direction,
}

type EdgeKey = (EntityId, RelationKind, EntityId);
type AdjIndex = BTreeMap<EntityId, BTreeMap<RelationKind, BTreeSet<EntityId>>>;

/// Typed repository knowledge graph with set-semantics edges.
#[derive(Debug, Clone, Default)]
pub struct RepoKG {
    entities: BTreeMap<EntityId, Entity>,
    edges: BTreeSet<EdgeKey>,
    forward: AdjIndex,
    backward: AdjIndex,
}

impl PartialEq for RepoKG {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities && self.edges == other.edges
    }
}

impl Eq for RepoKG {}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    schema_version: u32,
    entities: Vec<Entity>,
    relationships: Vec<Relationship>,
}

impl RepoKG {
    pub fn new() -> Self {
        RepoKG::default()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_entity(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    pub fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn code_entity(&self, id: &EntityId) -> Option<&CodeEntity> {
        self.entities.get(id).and_then(Entity::as_code)
    }

    pub fn module_entity(&self, id: &EntityId) -> Option<&ModuleEntity> {
        self.entities.get(id).and_then(Entity::as_module)
    }

    /// All entities in id order.
    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    /// All code entities in id order.
    pub fn code_entities(&self) -> impl Iterator<Item = &CodeEntity> {
        self.entities.values().filter_map(Entity::as_code)
    }

    /// All module entities in id order.
    pub fn module_entities(&self) -> impl Iterator<Item = &ModuleEntity> {
        self.entities.values().filter_map(Entity::as_module)
    }

    /// All edges in (src, kind, dst) order.
    pub fn relationships(&self) -> impl Iterator<Item = Relationship> + '_ {
        self.edges
            .iter()
            .map(|(src, kind, dst)| Relationship::new(src.clone(), dst.clone(), *kind))
    }

    pub fn has_edge(&self, src: &EntityId, kind: RelationKind, dst: &EntityId) -> bool {
        self.edges
            .contains(&(src.clone(), kind, dst.clone()))
    }

    /// Destination ids of `kind` edges out of `src`, in id order.
    pub fn edges_from(&self, src: &EntityId, kind: RelationKind) -> Vec<EntityId> {
        self.forward
            .get(src)
            .and_then(|m| m.get(&kind))
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Source ids of `kind` edges into `dst`, in id order.
    pub fn edges_to(&self, dst: &EntityId, kind: RelationKind) -> Vec<EntityId> {
        self.backward
            .get(dst)
            .and_then(|m| m.get(&kind))
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }

    fn validate_entity(entity: &Entity) -> Result<(), GraphError> {
        match entity {
            Entity::Code(e) => {
                if e.qualified_name.is_empty() {
                    return Err(GraphError::InvalidEntity(
                        "code entity with empty qualified_name".into(),
                    ));
                }
                if e.id != CodeEntity::make_id(e.kind, &e.qualified_name) {
                    return Err(GraphError::InvalidEntity(format!(
                        "code entity id {} does not match kind/qualified_name",
                        e.id
                    )));
                }
                if e.span.start_line == 0 || e.span.start_line > e.span.end_line {
                    return Err(GraphError::InvalidEntity(format!(
                        "entity {} has invalid span {}..{}",
                        e.id, e.span.start_line, e.span.end_line
                    )));
                }
                if matches!(e.kind, CodeKind::Function | CodeKind::Method)
                    && !e.source.starts_with(&e.signature)
                {
                    return Err(GraphError::InvalidEntity(format!(
                        "entity {} signature is not a prefix of its source",
                        e.id
                    )));
                }
            }
            Entity::Concept(e) => {
                if e.label.trim().is_empty() {
                    return Err(GraphError::InvalidEntity("concept with empty label".into()));
                }
            }
            Entity::Doc(e) => {
                if e.path.is_empty() {
                    return Err(GraphError::InvalidEntity("doc with empty path".into()));
                }
            }
            Entity::Module(e) => {
                if e.name.is_empty() {
                    return Err(GraphError::InvalidEntity("module with empty name".into()));
                }
            }
        }
        Ok(())
    }

    /// Insert or replace an entity. Re-adding the same id with the same role
    /// replaces the record; the same id under a different role is a conflict.
    pub fn add_entity(&mut self, entity: Entity) -> Result<EntityId, GraphError> {
        Self::validate_entity(&entity)?;
        let id = entity.id().clone();
        if let Some(existing) = self.entities.get(&id) {
            if existing.role() != entity.role() {
                return Err(GraphError::DuplicateConflict(id));
            }
        }
        self.entities.insert(id.clone(), entity);
        Ok(id)
    }

    fn validate_edge_shape(
        &self,
        src: &EntityId,
        dst: &EntityId,
        kind: RelationKind,
    ) -> Result<(), GraphError> {
        let src_entity = self
            .entities
            .get(src)
            .ok_or_else(|| GraphError::MissingEndpoint(src.clone()))?;
        let dst_entity = self
            .entities
            .get(dst)
            .ok_or_else(|| GraphError::MissingEndpoint(dst.clone()))?;
        if src == dst && kind != RelationKind::Calls {
            return Err(GraphError::InvalidRelationship(format!(
                "self-loop on {src} only allowed for calls"
            )));
        }
        let ok = match kind {
            RelationKind::Calls | RelationKind::Implements | RelationKind::Extends => {
                src_entity.as_code().is_some() && dst_entity.as_code().is_some()
            }
            RelationKind::Imports => {
                let is_file = |e: &Entity| {
                    e.as_code()
                        .map(|c| c.kind == CodeKind::ModuleFile)
                        .unwrap_or(false)
                };
                is_file(src_entity) && is_file(dst_entity)
            }
            RelationKind::Contains => match src_entity {
                Entity::Code(_) => dst_entity.as_code().is_some(),
                Entity::Module(_) => {
                    dst_entity.as_code().is_some() || dst_entity.as_module().is_some()
                }
                _ => false,
            },
            RelationKind::SemanticImpact => {
                src_entity.as_code().is_some() && dst_entity.as_concept().is_some()
            }
            RelationKind::Describes => {
                src_entity.as_doc().is_some() && dst_entity.as_doc().is_none()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(GraphError::InvalidRelationship(format!(
                "{kind} edge not permitted from {} to {}",
                src_entity.role(),
                dst_entity.role(),
                kind = kind.as_str()
            )))
        }
    }

    /// Add an edge; duplicates are a no-op. Returns whether the edge is new.
    pub fn add_relationship(
        &mut self,
        src: &EntityId,
        dst: &EntityId,
        kind: RelationKind,
    ) -> Result<bool, GraphError> {
        self.validate_edge_shape(src, dst, kind)?;
        let key = (src.clone(), kind, dst.clone());
        if !self.edges.insert(key) {
            return Ok(false);
        }
        self.forward
            .entry(src.clone())
            .or_default()
            .entry(kind)
            .or_default()
            .insert(dst.clone());
        self.backward
            .entry(dst.clone())
            .or_default()
            .entry(kind)
            .or_default()
            .insert(src.clone());
        Ok(true)
    }

    /// Remove an edge if present. Returns whether anything was removed.
    pub fn remove_relationship(&mut self, src: &EntityId, dst: &EntityId, kind: RelationKind) -> bool {
        let key = (src.clone(), kind, dst.clone());
        if !self.edges.remove(&key) {
            return false;
        }
        if let Some(kinds) = self.forward.get_mut(src) {
            if let Some(set) = kinds.get_mut(&kind) {
                set.remove(dst);
                if set.is_empty() {
                    kinds.remove(&kind);
                }
            }
            if kinds.is_empty() {
                self.forward.remove(src);
            }
        }
        if let Some(kinds) = self.backward.get_mut(dst) {
            if let Some(set) = kinds.get_mut(&kind) {
                set.remove(src);
                if set.is_empty() {
                    kinds.remove(&kind);
                }
            }
            if kinds.is_empty() {
                self.backward.remove(dst);
            }
        }
        true
    }

    /// Remove an entity along with every incident edge.
    pub fn remove_entity(&mut self, id: &EntityId) -> Result<Entity, GraphError> {
        let entity = self
            .entities
            .remove(id)
            .ok_or_else(|| GraphError::UnknownEntity(id.clone()))?;
        let incident: Vec<EdgeKey> = self
            .edges
            .iter()
            .filter(|(s, _, d)| s == id || d == id)
            .cloned()
            .collect();
        for (s, k, d) in incident {
            self.remove_relationship(&s, &d, k);
        }
        Ok(entity)
    }

    /// Typed neighbors of `id`, filtered to `kinds`, ordered by
    /// (kind, neighbor id, direction). An empty filter set yields no entries.
    pub fn neighbors(
        &self,
        id: &EntityId,
        direction: Direction,
        kinds: &BTreeSet<RelationKind>,
    ) -> Result<Vec<Neighbor>, GraphError> {
        if !self.entities.contains_key(id) {
            return Err(GraphError::UnknownEntity(id.clone()));
        }
        let mut out = Vec::new();
        let mut gather = |index: &AdjIndex, dir: Direction| {
            if let Some(by_kind) = index.get(id) {
                for (kind, ids) in by_kind {
                    if kinds.contains(kind) {
                        for other in ids {
                            out.push(Neighbor {
                                kind: *kind,
                                id: other.clone(),
                                direction: dir,
                            });
                        }
                    }
                }
            }
        };
        match direction {
            Direction::Forward => gather(&self.forward, Direction::Forward),
            Direction::Backward => gather(&self.backward, Direction::Backward),
            Direction::Both => {
                gather(&self.forward, Direction::Forward);
                gather(&self.backward, Direction::Backward);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Serialize to the stable JSON file format (sorted, pretty-printed).
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let file = GraphFile {
            schema_version: SCHEMA_VERSION,
            entities: self.entities.values().cloned().collect(),
            relationships: self.relationships().collect(),
        };
        let mut bytes = serde_json::to_vec_pretty(&file).expect("graph serialization");
        bytes.push(b'\n');
        bytes
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_json_bytes())?;
        Ok(())
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_slice(bytes)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(GraphError::SchemaVersion(file.schema_version));
        }
        let mut kg = RepoKG::new();
        for entity in file.entities {
            let id = entity.id().clone();
            if kg.contains_entity(&id) {
                return Err(GraphError::InvalidEntity(format!(
                    "duplicate entity {id} in graph file"
                )));
            }
            kg.add_entity(entity)?;
        }
        for rel in file.relationships {
            if rel.provenance != rel.kind.provenance() {
                return Err(GraphError::InvalidRelationship(format!(
                    "edge {} -> {} has provenance inconsistent with kind {}",
                    rel.src,
                    rel.dst,
                    rel.kind.as_str()
                )));
            }
            kg.add_relationship(&rel.src, &rel.dst, rel.kind)?;
        }
        Ok(kg)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let bytes = std::fs::read(path)?;
        Self::from_json_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(kind: CodeKind, qname: &str, vis: Visibility) -> Entity {
        let (sig, source) = match kind {
            CodeKind::ModuleFile => (String::new(), format!("# module {qname}\n")),
            _ => (
                format!("def {qname}():"),
                format!("def {qname}():\n    pass"),
            ),
        };
        Entity::Code(CodeEntity {
            id: CodeEntity::make_id(kind, qname),
            kind,
            name: qname.rsplit('.').next().unwrap_or(qname).to_string(),
            qualified_name: qname.to_string(),
            file_path: "m.py".into(),
            span: Span {
                start_line: 1,
                end_line: 2,
            },
            signature: sig,
            source,
            visibility: vis,
            language: "python".into(),
        })
    }

    fn sample_graph() -> RepoKG {
        let mut kg = RepoKG::new();
        let f = kg
            .add_entity(code(CodeKind::Function, "m.f", Visibility::Public))
            .unwrap();
        let g = kg
            .add_entity(code(CodeKind::Function, "m.g", Visibility::Private))
            .unwrap();
        let file = kg
            .add_entity(code(CodeKind::ModuleFile, "m.py", Visibility::Public))
            .unwrap();
        kg.add_relationship(&f, &g, RelationKind::Calls).unwrap();
        kg.add_relationship(&file, &f, RelationKind::Contains).unwrap();
        kg.add_relationship(&file, &g, RelationKind::Contains).unwrap();
        kg
    }

    #[test]
    fn re_adding_same_entity_replaces_without_duplicating() {
        let mut kg = RepoKG::new();
        kg.add_entity(code(CodeKind::Function, "m.f", Visibility::Public))
            .unwrap();
        kg.add_entity(code(CodeKind::Function, "m.f", Visibility::Private))
            .unwrap();
        assert_eq!(kg.entity_count(), 1);
        let id = EntityId::from_raw("function:m.f");
        let vis = kg.code_entity(&id).unwrap().visibility;
        assert_eq!(vis, Visibility::Private);
    }

    #[test]
    fn conflicting_role_for_same_id_is_rejected() {
        let mut kg = RepoKG::new();
        kg.add_entity(Entity::Module(ModuleEntity {
            id: EntityId::from_raw("module:root"),
            name: "root".into(),
            parent: None,
            member_ids: vec![],
            token_estimate: 0,
        }))
        .unwrap();
        let clash = Entity::Doc(DocEntity {
            id: EntityId::from_raw("module:root"),
            level: DocLevel::Readme,
            path: "README.md".into(),
            content_hash: 0,
            source_state_hash: 0,
        });
        assert!(matches!(
            kg.add_entity(clash),
            Err(GraphError::DuplicateConflict(_))
        ));
    }

    #[test]
    fn signature_must_prefix_source_for_functions() {
        let mut kg = RepoKG::new();
        let bad = Entity::Code(CodeEntity {
            id: CodeEntity::make_id(CodeKind::Function, "m.f"),
            kind: CodeKind::Function,
            name: "f".into(),
            qualified_name: "m.f".into(),
            file_path: "m.py".into(),
            span: Span {
                start_line: 1,
                end_line: 1,
            },
            signature: "def other():".into(),
            source: "def f():\n    pass".into(),
            visibility: Visibility::Public,
            language: "python".into(),
        });
        assert!(matches!(
            kg.add_entity(bad),
            Err(GraphError::InvalidEntity(_))
        ));
    }

    #[test]
    fn edge_requires_both_endpoints() {
        let mut kg = sample_graph();
        let missing = EntityId::from_raw("function:m.nope");
        let f = EntityId::from_raw("function:m.f");
        assert!(matches!(
            kg.add_relationship(&f, &missing, RelationKind::Calls),
            Err(GraphError::MissingEndpoint(_))
        ));
    }

    #[test]
    fn duplicate_edges_are_no_ops() {
        let mut kg = sample_graph();
        let f = EntityId::from_raw("function:m.f");
        let g = EntityId::from_raw("function:m.g");
        assert!(!kg.add_relationship(&f, &g, RelationKind::Calls).unwrap());
        assert_eq!(kg.edge_count(), 3);
    }

    #[test]
    fn self_loop_only_for_calls() {
        let mut kg = sample_graph();
        let f = EntityId::from_raw("function:m.f");
        assert!(kg.add_relationship(&f, &f, RelationKind::Calls).unwrap());
        assert!(kg
            .add_relationship(&f, &f, RelationKind::Extends)
            .is_err());
    }

    #[test]
    fn imports_requires_module_files() {
        let mut kg = sample_graph();
        let f = EntityId::from_raw("function:m.f");
        let file = EntityId::from_raw("module_file:m.py");
        assert!(kg
            .add_relationship(&f, &file, RelationKind::Imports)
            .is_err());
    }

    #[test]
    fn neighbors_matches_brute_force_edge_scan() {
        // Oracle: recompute neighbor entries by scanning the raw edge list.
        let kg = sample_graph();
        let all = RelationKind::all();
        for entity in kg.entities() {
            let id = entity.id();
            for dir in [Direction::Forward, Direction::Backward, Direction::Both] {
                let got = kg.neighbors(id, dir, &all).unwrap();
                let mut want = Vec::new();
                for rel in kg.relationships() {
                    if rel.src == *id
                        && matches!(dir, Direction::Forward | Direction::Both)
                    {
                        want.push(Neighbor {
                            kind: rel.kind,
                            id: rel.dst.clone(),
                            direction: Direction::Forward,
                        });
                    }
                    if rel.dst == *id
                        && matches!(dir, Direction::Backward | Direction::Both)
                    {
                        want.push(Neighbor {
                            kind: rel.kind,
                            id: rel.src.clone(),
                            direction: Direction::Backward,
                        });
                    }
                }
                want.sort();
                assert_eq!(got, want, "entity {id} direction {dir:?}");
            }
        }
    }

    #[test]
    fn neighbors_filter_excludes_other_kinds() {
        let kg = sample_graph();
        let f = EntityId::from_raw("function:m.f");
        let only_imports: BTreeSet<_> = [RelationKind::Imports].into_iter().collect();
        assert!(kg.neighbors(&f, Direction::Both, &only_imports).unwrap().is_empty());
        let empty: BTreeSet<RelationKind> = BTreeSet::new();
        assert!(kg.neighbors(&f, Direction::Both, &empty).unwrap().is_empty());
    }

    #[test]
    fn neighbors_unknown_entity_errors() {
        let kg = sample_graph();
        let missing = EntityId::from_raw("function:m.nope");
        assert!(kg
            .neighbors(&missing, Direction::Both, &RelationKind::all())
            .is_err());
    }

    #[test]
    fn remove_entity_drops_incident_edges() {
        let mut kg = sample_graph();
        let g = EntityId::from_raw("function:m.g");
        kg.remove_entity(&g).unwrap();
        assert!(!kg.contains_entity(&g));
        for rel in kg.relationships() {
            assert_ne!(rel.src, g);
            assert_ne!(rel.dst, g);
        }
        assert_eq!(kg.edge_count(), 1);
    }

    #[test]
    fn save_load_round_trip_is_structurally_equal() {
        let kg = sample_graph();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.json");
        kg.save(&path).unwrap();
        let loaded = RepoKG::load(&path).unwrap();
        assert_eq!(kg, loaded);
    }

    #[test]
    fn serialization_is_byte_stable() {
        let a = sample_graph().to_json_bytes();
        // Build the same graph with operations in a different order.
        let mut kg = RepoKG::new();
        let file = kg
            .add_entity(code(CodeKind::ModuleFile, "m.py", Visibility::Public))
            .unwrap();
        let g = kg
            .add_entity(code(CodeKind::Function, "m.g", Visibility::Private))
            .unwrap();
        let f = kg
            .add_entity(code(CodeKind::Function, "m.f", Visibility::Public))
            .unwrap();
        kg.add_relationship(&file, &g, RelationKind::Contains).unwrap();
        kg.add_relationship(&file, &f, RelationKind::Contains).unwrap();
        kg.add_relationship(&f, &g, RelationKind::Calls).unwrap();
        assert_eq!(a, kg.to_json_bytes());
    }

    #[test]
    fn load_rejects_wrong_schema_version() {
        let mut kg_json: serde_json::Value =
            serde_json::from_slice(&sample_graph().to_json_bytes()).unwrap();
        kg_json["schema_version"] = serde_json::json!(99);
        let bytes = serde_json::to_vec(&kg_json).unwrap();
        assert!(matches!(
            RepoKG::from_json_bytes(&bytes),
            Err(GraphError::SchemaVersion(99))
        ));
    }

    #[test]
    fn load_rejects_inconsistent_provenance() {
        let mut kg_json: serde_json::Value =
            serde_json::from_slice(&sample_graph().to_json_bytes()).unwrap();
        kg_json["relationships"][0]["provenance"] = serde_json::json!("semantic");
        let bytes = serde_json::to_vec(&kg_json).unwrap();
        assert!(RepoKG::from_json_bytes(&bytes).is_err());
    }
}
