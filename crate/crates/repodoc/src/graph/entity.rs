//! Entity and relationship types for the repository knowledge graph.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Stable identifier for any graph node: `"<kind>:<qualified_name>"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(kind: &str, qualified_name: &str) -> Self {
        EntityId(format!("{kind}:{qualified_name}"))
    }

    pub fn from_raw(raw: impl Into<String>) -> Self {
        EntityId(raw.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The kind prefix, e.g. `"function"` for `"function:app.main"`.
    pub fn kind_label(&self) -> &str {
        self.0.split_once(':').map_or("", |(k, _)| k)
    }

    /// The qualified-name suffix after the kind prefix.
    pub fn name_part(&self) -> &str {
        self.0.split_once(':').map_or(self.0.as_str(), |(_, n)| n)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Code entity kinds recognised by the extractors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeKind {
    Function,
    Method,
    Class,
    Interface,
    ModuleFile,
}

impl CodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeKind::Function => "function",
            CodeKind::Method => "method",
            CodeKind::Class => "class",
            CodeKind::Interface => "interface",
            CodeKind::ModuleFile => "module_file",
        }
    }
}

/// Source visibility, normalised across languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Public,
    Private,
    Protected,
    Internal,
}

impl Visibility {
    pub fn is_public(self) -> bool {
        matches!(self, Visibility::Public)
    }
}

/// 1-based inclusive line span within a source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start_line: u32,
    pub end_line: u32,
}

/// A function, method, class, interface, or whole-file entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeEntity {
    pub id: EntityId,
    pub kind: CodeKind,
    pub name: String,
    pub qualified_name: String,
    pub file_path: String,
    pub span: Span,
    pub signature: String,
    pub source: String,
    pub visibility: Visibility,
    pub language: String,
}

impl CodeEntity {
    /// Derive the canonical id for a code entity.
    pub fn make_id(kind: CodeKind, qualified_name: &str) -> EntityId {
        EntityId::new(kind.as_str(), qualified_name)
    }
}

/// A business/domain concept attached to code entities during enrichment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptEntity {
    pub id: EntityId,
    pub label: String,
    pub description: String,
}

impl ConceptEntity {
    pub fn new(label: impl Into<String>, description: impl Into<String>) -> Self {
        let label = label.into();
        let id = EntityId::new("concept", &label.to_lowercase());
        ConceptEntity {
            id,
            label,
            description: description.into(),
        }
    }
}

/// Documentation granularity levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocLevel {
    Readme,
    ModuleDoc,
    ComponentDoc,
}

/// A generated documentation file tracked inside the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocEntity {
    pub id: EntityId,
    pub level: DocLevel,
    /// Path relative to the documentation root, forward slashes.
    pub path: String,
    pub content_hash: u64,
    pub source_state_hash: u64,
}

impl DocEntity {
    pub fn make_id(path: &str) -> EntityId {
        EntityId::new("doc", path)
    }
}

/// A node in the hierarchical module tree produced by clustering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleEntity {
    pub id: EntityId,
    pub name: String,
    pub parent: Option<EntityId>,
    /// Leaf modules list their member code entities, sorted by id.
    pub member_ids: Vec<EntityId>,
    pub token_estimate: u64,
}

/// Discriminated union over all node roles stored in the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "node_role", rename_all = "snake_case")]
pub enum Entity {
    Code(CodeEntity),
    Concept(ConceptEntity),
    Doc(DocEntity),
    Module(ModuleEntity),
}

impl Entity {
    pub fn id(&self) -> &EntityId {
        match self {
            Entity::Code(e) => &e.id,
            Entity::Concept(e) => &e.id,
            Entity::Doc(e) => &e.id,
            Entity::Module(e) => &e.id,
        }
    }

    pub fn role(&self) -> &'static str {
        match self {
            Entity::Code(_) => "code",
            Entity::Concept(_) => "concept",
            Entity::Doc(_) => "doc",
            Entity::Module(_) => "module",
        }
    }

    pub fn as_code(&self) -> Option<&CodeEntity> {
        match self {
            Entity::Code(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_concept(&self) -> Option<&ConceptEntity> {
        match self {
            Entity::Concept(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_module(&self) -> Option<&ModuleEntity> {
        match self {
            Entity::Module(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_doc(&self) -> Option<&DocEntity> {
        match self {
            Entity::Doc(e) => Some(e),
            _ => None,
        }
    }

    /// A human-oriented sort key: qualified name for code, label/path/name otherwise.
    pub fn sort_name(&self) -> &str {
        match self {
            Entity::Code(e) => &e.qualified_name,
            Entity::Concept(e) => &e.label,
            Entity::Doc(e) => &e.path,
            Entity::Module(e) => e.id.name_part(),
        }
    }
}

/// All relationship kinds. The first five are structural (extracted from
/// syntax); the last two are semantic (established by enrichment/docgen).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Calls,
    Implements,
    Extends,
    Imports,
    Contains,
    SemanticImpact,
    Describes,
}

impl RelationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Calls => "calls",
            RelationKind::Implements => "implements",
            RelationKind::Extends => "extends",
            RelationKind::Imports => "imports",
            RelationKind::Contains => "contains",
            RelationKind::SemanticImpact => "semantic_impact",
            RelationKind::Describes => "describes",
        }
    }

    pub fn provenance(self) -> Provenance {
        match self {
            RelationKind::SemanticImpact | RelationKind::Describes => Provenance::Semantic,
            _ => Provenance::Structural,
        }
    }

    pub fn all() -> std::collections::BTreeSet<RelationKind> {
        [
            RelationKind::Calls,
            RelationKind::Implements,
            RelationKind::Extends,
            RelationKind::Imports,
            RelationKind::Contains,
            RelationKind::SemanticImpact,
            RelationKind::Describes,
        ]
        .into_iter()
        .collect()
    }
}

/// Whether an edge came from syntax or from semantic enrichment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Structural,
    Semantic,
}

/// A directed, typed edge between two graph entities.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relationship {
    pub src: EntityId,
    pub dst: EntityId,
    pub kind: RelationKind,
    pub provenance: Provenance,
}

impl Relationship {
    pub fn new(src: EntityId, dst: EntityId, kind: RelationKind) -> Self {
        Relationship {
            src,
            dst,
            kind,
            provenance: kind.provenance(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entity_id_splits_kind_and_name() {
        let id = EntityId::new("function", "app.main");
        assert_eq!(id.as_str(), "function:app.main");
        assert_eq!(id.kind_label(), "function");
        assert_eq!(id.name_part(), "app.main");
    }

    #[test]
    fn concept_id_is_lowercased_label() {
        let c = ConceptEntity::new("Auth Manager", "desc");
        assert_eq!(c.id.as_str(), "concept:auth manager");
        assert_eq!(c.label, "Auth Manager");
    }

    #[test]
    fn node_role_tag_round_trips() {
        let entity = Entity::Code(CodeEntity {
            id: CodeEntity::make_id(CodeKind::Function, "app.main"),
            kind: CodeKind::Function,
            name: "main".into(),
            qualified_name: "app.main".into(),
            file_path: "app.py".into(),
            span: Span {
                start_line: 1,
                end_line: 2,
            },
            signature: "def main():".into(),
            source: "def main():\n    pass".into(),
            visibility: Visibility::Public,
            language: "python".into(),
        });
        let json = serde_json::to_value(&entity).unwrap();
        assert_eq!(json["node_role"], "code");
        assert_eq!(json["kind"], "function");
        let back: Entity = serde_json::from_value(json).unwrap();
        assert_eq!(back, entity);
    }

    #[test]
    fn provenance_follows_kind() {
        assert_eq!(RelationKind::Calls.provenance(), Provenance::Structural);
        assert_eq!(
            RelationKind::SemanticImpact.provenance(),
            Provenance::Semantic
        );
        assert_eq!(RelationKind::Describes.provenance(), Provenance::Semantic);
        let rel = Relationship::new(
            EntityId::from_raw("doc:README.md"),
            EntityId::from_raw("module:root"),
            RelationKind::Describes,
        );
        assert_eq!(rel.provenance, Provenance::Semantic);
    }
}
