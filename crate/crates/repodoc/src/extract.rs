//! Repository extraction: turns snapshots into graph entities (via the
//! language frontends) and derives structural relationships with a fixed
//! resolution order: exact qualified name, then import-alias/wildcard
//! expansion, then module-prefix lookup, then unique same-file simple name.

use crate::frontend::{FileSyntax, InheritKind, LanguageFrontend, RawCall};
use crate::graph::{
    CodeEntity, CodeKind, Entity, EntityId, GraphError, RelationKind, RepoKG, Span, Visibility,
};
use crate::snapshot::{IgnoreSet, RepoSnapshot, SnapshotError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A file the frontend could not parse; its entities are skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseErrorEntry {
    pub file: String,
    pub message: String,
}

/// A reference (call / import / base type) that did not resolve to a graph
/// entity, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnresolvedRef {
    pub file: String,
    pub kind: String,
    pub reference: String,
    pub reason: String,
}

/// Machine-readable extraction outcome, persisted alongside the graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub files_parsed: u64,
    pub entities: u64,
    pub relationships: u64,
    pub parse_errors: Vec<ParseErrorEntry>,
    pub unresolved: Vec<UnresolvedRef>,
}

/// Full extraction result: the graph, per-file syntax, and the report.
pub struct Extraction {
    pub kg: RepoKG,
    pub syntax: BTreeMap<String, FileSyntax>,
    pub report: ExtractionReport,
}

/// File stem without extension: `src/com/acme/App.java` -> `App`.
fn file_stem(path: &str) -> String {
    let name = path.rsplit('/').next().unwrap_or(path);
    name.rsplit_once('.')
        .map(|(stem, _)| stem.to_string())
        .unwrap_or_else(|| name.to_string())
}

/// Parse every routed file in the snapshot and assemble entities plus
/// containment edges. Structural relations are added by
/// [`extract_structural_relations`].
pub fn parse_repository(
    snapshot: &RepoSnapshot,
    frontends: &[Box<dyn LanguageFrontend>],
    ignore: &IgnoreSet,
) -> Result<Extraction, ExtractError> {
    let mut routed: Vec<(&str, &dyn LanguageFrontend)> = Vec::new();
    for file in snapshot.files() {
        if ignore.matches(&file.path) {
            continue;
        }
        let ext = file.path.rsplit('.').next().unwrap_or("").to_lowercase();
        if let Some(frontend) = frontends.iter().find(|f| f.extensions().contains(&ext.as_str()))
        {
            routed.push((&file.path, frontend.as_ref()));
        }
    }

    // Parallel parse; indexed collect keeps results in path order.
    let parsed: Vec<(String, Result<FileSyntax, ParseErrorEntry>)> = routed
        .par_iter()
        .map(|(path, frontend)| {
            let result = match snapshot.read_file(path) {
                Ok(text) => frontend.parse_file(path, &text).map_err(|e| ParseErrorEntry {
                    file: e.file,
                    message: e.message,
                }),
                Err(e) => Err(ParseErrorEntry {
                    file: path.to_string(),
                    message: e.to_string(),
                }),
            };
            (path.to_string(), result)
        })
        .collect();

    let mut kg = RepoKG::new();
    let mut syntax = BTreeMap::new();
    let mut report = ExtractionReport::default();
    for (path, result) in parsed {
        match result {
            Ok(file_syntax) => {
                report.files_parsed += 1;
                let text = snapshot.read_file(&path)?;
                add_file_entities(&mut kg, &file_syntax, &text)?;
                syntax.insert(path, file_syntax);
            }
            Err(entry) => report.parse_errors.push(entry),
        }
    }
    let added = extract_structural_relations(&mut kg, &syntax, &mut report);
    report.entities = kg.code_entities().count() as u64;
    report.relationships = kg.edge_count() as u64;
    log::debug!(
        "extracted {} entities, {} relationships ({} structural)",
        report.entities,
        report.relationships,
        added
    );
    Ok(Extraction { kg, syntax, report })
}

/// Build one parsed file's entities without touching a graph: the
/// module_file first, then definitions in syntax order. Change detection
/// compares this output against the stored graph, so it must construct
/// entities exactly as [`add_file_entities`] would store them.
pub fn entities_from_syntax(file_syntax: &FileSyntax, text: &str) -> Vec<CodeEntity> {
    let path = &file_syntax.path;
    let line_count = text.lines().count().max(1) as u32;
    let stem = file_stem(path);
    let visibility = if file_syntax.language == "python" && stem.starts_with('_') && stem != "__init__"
    {
        Visibility::Private
    } else {
        Visibility::Public
    };
    let mut entities = vec![CodeEntity {
        id: CodeEntity::make_id(CodeKind::ModuleFile, path),
        kind: CodeKind::ModuleFile,
        name: stem,
        qualified_name: path.clone(),
        file_path: path.clone(),
        span: Span {
            start_line: 1,
            end_line: line_count,
        },
        signature: String::new(),
        source: text.trim_end_matches(['\n', '\r']).to_string(),
        visibility,
        language: file_syntax.language.to_string(),
    }];
    for raw in &file_syntax.entities {
        entities.push(CodeEntity {
            id: CodeEntity::make_id(raw.kind, &raw.qualified_name),
            kind: raw.kind,
            name: raw.name.clone(),
            qualified_name: raw.qualified_name.clone(),
            file_path: path.clone(),
            span: raw.span,
            signature: raw.signature.clone(),
            source: raw.source.clone(),
            visibility: raw.visibility,
            language: file_syntax.language.to_string(),
        });
    }
    entities
}

/// Add one parsed file's module_file entity, definition entities, and
/// containment edges. Used by both full extraction and incremental refresh.
pub fn add_file_entities(
    kg: &mut RepoKG,
    file_syntax: &FileSyntax,
    text: &str,
) -> Result<(), ExtractError> {
    let entities = entities_from_syntax(file_syntax, text);
    let file_id = kg.add_entity(Entity::Code(entities[0].clone()))?;

    // Map qname -> id within this file so children can find their parents.
    let mut local: BTreeMap<String, EntityId> = BTreeMap::new();
    for (raw, entity) in file_syntax.entities.iter().zip(&entities[1..]) {
        let qname = entity.qualified_name.clone();
        let id = kg.add_entity(Entity::Code(entity.clone()))?;
        let container = raw
            .parent_qname
            .as_deref()
            .and_then(|p| local.get(p).cloned())
            .unwrap_or_else(|| file_id.clone());
        kg.add_relationship(&container, &id, RelationKind::Contains)?;
        local.insert(qname, id);
    }
    Ok(())
}

/// Symbol tables shared by the resolution rules, built from the whole graph.
struct Resolver<'a> {
    kg: &'a RepoKG,
    /// qname -> candidate ids, ordered by target preference.
    by_qname: BTreeMap<&'a str, Vec<(&'a CodeEntity, EntityId)>>,
    /// Dotted module name -> module_file ids (several files per Java package).
    module_files: BTreeMap<String, Vec<EntityId>>,
    /// file path -> entities in that file.
    by_file: BTreeMap<&'a str, Vec<&'a CodeEntity>>,
}

fn kind_preference(kind: CodeKind) -> u8 {
    match kind {
        CodeKind::Function => 0,
        CodeKind::Class => 1,
        CodeKind::Interface => 2,
        CodeKind::Method => 3,
        CodeKind::ModuleFile => 4,
    }
}

impl<'a> Resolver<'a> {
    fn new(kg: &'a RepoKG) -> Self {
        let mut by_qname: BTreeMap<&str, Vec<(&CodeEntity, EntityId)>> = BTreeMap::new();
        let mut by_file: BTreeMap<&str, Vec<&CodeEntity>> = BTreeMap::new();
        for entity in kg.code_entities() {
            if entity.kind != CodeKind::ModuleFile {
                by_qname
                    .entry(entity.qualified_name.as_str())
                    .or_default()
                    .push((entity, entity.id.clone()));
            }
            by_file.entry(entity.file_path.as_str()).or_default().push(entity);
        }
        for candidates in by_qname.values_mut() {
            candidates.sort_by_key(|(e, id)| (kind_preference(e.kind), id.clone()));
        }

        let mut module_files: BTreeMap<String, Vec<EntityId>> = BTreeMap::new();
        for entity in kg.code_entities() {
            if entity.kind != CodeKind::ModuleFile {
                continue;
            }
            let module = match entity.language.as_str() {
                "python" => Some(python_module_qname(&entity.qualified_name)),
                _ => {
                    // A Java file's package is its top-level entities' qname
                    // prefix; files without entities are not import targets.
                    kg.edges_from(&entity.id, RelationKind::Contains)
                        .into_iter()
                        .filter_map(|id| kg.code_entity(&id).cloned())
                        .map(|e| {
                            e.qualified_name
                                .rsplit_once('.')
                                .map(|(prefix, _)| prefix.to_string())
                                .unwrap_or_default()
                        })
                        .next()
                }
            };
            if let Some(module) = module {
                module_files.entry(module).or_default().push(entity.id.clone());
            }
        }
        Resolver {
            kg,
            by_qname,
            module_files,
            by_file,
        }
    }

    /// Rule 1 and 3 share this: qname lookup with kind preference.
    fn lookup_qname(&self, qname: &str) -> Option<EntityId> {
        self.by_qname
            .get(qname)
            .and_then(|c| c.first())
            .map(|(_, id)| id.clone())
    }

    /// Resolve a dotted reference from a given file. Applies exact, alias,
    /// wildcard, and module-prefix rules; same-file matching is the caller's
    /// final fallback because its semantics differ per reference kind.
    fn resolve_dotted(&self, path: &[String], file_syntax: &FileSyntax) -> ResolveOutcome {
        let joined = path.join(".");
        if let Some(id) = self.lookup_qname(&joined) {
            return ResolveOutcome::Found(id);
        }
        // Alias expansion of the first segment.
        for import in &file_syntax.imports {
            if let Some((name, expansion)) = &import.binding {
                if name == &path[0] {
                    let mut expanded = expansion.clone();
                    for seg in &path[1..] {
                        expanded.push('.');
                        expanded.push_str(seg);
                    }
                    if let Some(id) = self.lookup_qname(&expanded) {
                        return ResolveOutcome::Found(id);
                    }
                }
            }
        }
        // Wildcard imports: unique match across the imported prefixes.
        let mut wildcard_hits: BTreeSet<EntityId> = BTreeSet::new();
        for import in &file_syntax.imports {
            if import.wildcard {
                let candidate = format!("{}.{joined}", import.module);
                if let Some(id) = self.lookup_qname(&candidate) {
                    wildcard_hits.insert(id);
                }
            }
        }
        match wildcard_hits.len() {
            1 => return ResolveOutcome::Found(wildcard_hits.into_iter().next().unwrap()),
            n if n > 1 => return ResolveOutcome::Ambiguous,
            _ => {}
        }
        // Module/package prefix: names visible without an import.
        if !file_syntax.module_qname.is_empty() {
            let candidate = format!("{}.{joined}", file_syntax.module_qname);
            if let Some(id) = self.lookup_qname(&candidate) {
                return ResolveOutcome::Found(id);
            }
        }
        ResolveOutcome::NotFound
    }

    /// Unique same-file match on a simple name.
    fn same_file(&self, file: &str, name: &str, types_only: bool) -> ResolveOutcome {
        let Some(entities) = self.by_file.get(file) else {
            return ResolveOutcome::NotFound;
        };
        let matches: Vec<EntityId> = entities
            .iter()
            .filter(|e| {
                e.kind != CodeKind::ModuleFile
                    && e.name == name
                    && (!types_only || matches!(e.kind, CodeKind::Class | CodeKind::Interface))
            })
            .map(|e| e.id.clone())
            .collect();
        match matches.len() {
            0 => ResolveOutcome::NotFound,
            1 => ResolveOutcome::Found(matches.into_iter().next().unwrap()),
            _ => ResolveOutcome::Ambiguous,
        }
    }

    /// Walk the enclosing class and its transitive bases (already-added
    /// extends/implements edges) looking for a method named `name`.
    fn resolve_self_call(&self, enclosing_class: &str, name: &str) -> Option<EntityId> {
        let start = self
            .lookup_qname(enclosing_class)
            .or_else(|| self.by_qname.get(enclosing_class).and_then(|c| c.first()).map(|(_, id)| id.clone()))?;
        let mut queue = vec![start];
        let mut seen = BTreeSet::new();
        while let Some(class_id) = queue.pop() {
            if !seen.insert(class_id.clone()) {
                continue;
            }
            let class_qname = self.kg.code_entity(&class_id)?.qualified_name.clone();
            if let Some(id) = self.lookup_qname(&format!("{class_qname}.{name}")) {
                return Some(id);
            }
            let mut parents = Vec::new();
            parents.extend(self.kg.edges_from(&class_id, RelationKind::Extends));
            parents.extend(self.kg.edges_from(&class_id, RelationKind::Implements));
            parents.sort();
            queue.extend(parents);
        }
        None
    }
}

enum ResolveOutcome {
    Found(EntityId),
    Ambiguous,
    NotFound,
}

/// Derive imports / extends / implements / calls edges for every file in
/// `syntax`, resolving against the whole graph. Returns the number of edges
/// added. Incremental refresh passes only the re-parsed files here.
pub fn extract_structural_relations(
    kg: &mut RepoKG,
    syntax: &BTreeMap<String, FileSyntax>,
    report: &mut ExtractionReport,
) -> usize {
    struct PlannedEdge {
        src: EntityId,
        dst: EntityId,
        kind: RelationKind,
    }
    let mut planned: Vec<PlannedEdge> = Vec::new();
    let mut unresolved: Vec<UnresolvedRef> = Vec::new();
    {
        let resolver = Resolver::new(kg);
        for (path, file_syntax) in syntax {
            let file_id = CodeEntity::make_id(CodeKind::ModuleFile, path);
            if !kg.contains_entity(&file_id) {
                continue;
            }

            // Imports: file -> file edges.
            for import in &file_syntax.imports {
                let mut targets: Vec<EntityId> = Vec::new();
                if import.wildcard {
                    if let Some(files) = resolver.module_files.get(&import.module) {
                        targets.extend(files.iter().cloned());
                    }
                } else if let Some(files) = resolver.module_files.get(&import.module) {
                    targets.extend(files.iter().cloned());
                } else if let Some(entity_id) = resolver.lookup_qname(&import.module) {
                    // Java class import: edge to the file defining the class.
                    if let Some(e) = kg.code_entity(&entity_id) {
                        targets.push(CodeEntity::make_id(CodeKind::ModuleFile, &e.file_path));
                    }
                }
                targets.sort();
                targets.dedup();
                if targets.is_empty() {
                    unresolved.push(UnresolvedRef {
                        file: path.clone(),
                        kind: "import".into(),
                        reference: import.module.clone(),
                        reason: "no file in the repository defines this module".into(),
                    });
                    continue;
                }
                for target in targets {
                    if target != file_id {
                        planned.push(PlannedEdge {
                            src: file_id.clone(),
                            dst: target,
                            kind: RelationKind::Imports,
                        });
                    }
                }
            }

            // Inheritance: child -> parent edges.
            for inherit in &file_syntax.inherits {
                let Some(child_id) = resolver.lookup_qname(&inherit.child_qname) else {
                    continue;
                };
                let parts: Vec<String> =
                    inherit.parent_name.split('.').map(str::to_string).collect();
                let outcome = match resolver.resolve_dotted(&parts, file_syntax) {
                    ResolveOutcome::NotFound => {
                        resolver.same_file(path, parts.last().unwrap(), true)
                    }
                    other => other,
                };
                match outcome {
                    ResolveOutcome::Found(parent_id) if parent_id != child_id => {
                        planned.push(PlannedEdge {
                            src: child_id,
                            dst: parent_id,
                            kind: match inherit.kind {
                                InheritKind::Extends => RelationKind::Extends,
                                InheritKind::Implements => RelationKind::Implements,
                            },
                        });
                    }
                    ResolveOutcome::Found(_) | ResolveOutcome::NotFound => {
                        unresolved.push(UnresolvedRef {
                            file: path.clone(),
                            kind: "inheritance".into(),
                            reference: inherit.parent_name.clone(),
                            reason: "base type not defined in the repository".into(),
                        });
                    }
                    ResolveOutcome::Ambiguous => {
                        unresolved.push(UnresolvedRef {
                            file: path.clone(),
                            kind: "inheritance".into(),
                            reference: inherit.parent_name.clone(),
                            reason: "ambiguous base type".into(),
                        });
                    }
                }
            }
        }

        // Calls need inheritance edges resolved first (self-call walks bases),
        // but planned inheritance edges are not in the graph yet. Stage them
        // into a clone used only for resolution.
        let mut resolution_kg = kg.clone();
        for edge in &planned {
            let _ = resolution_kg.add_relationship(&edge.src, &edge.dst, edge.kind);
        }
        let call_resolver = Resolver::new(&resolution_kg);
        for (path, file_syntax) in syntax {
            for call in &file_syntax.calls {
                match resolve_call(&call_resolver, path, file_syntax, call) {
                    Ok(Some((src, dst))) => planned.push(PlannedEdge {
                        src,
                        dst,
                        kind: RelationKind::Calls,
                    }),
                    Ok(None) => {}
                    Err(entry) => unresolved.push(entry),
                }
            }
        }
    }

    let mut added = 0;
    for edge in planned {
        match kg.add_relationship(&edge.src, &edge.dst, edge.kind) {
            Ok(true) => added += 1,
            Ok(false) => {}
            Err(e) => log::warn!("skipping edge: {e}"),
        }
    }
    unresolved.sort();
    unresolved.dedup();
    report.unresolved.extend(unresolved);
    report.unresolved.sort();
    report.unresolved.dedup();
    added
}

/// Resolve one call site to (caller id, callee id), or an unresolved entry.
fn resolve_call(
    resolver: &Resolver,
    path: &str,
    file_syntax: &FileSyntax,
    call: &RawCall,
) -> Result<Option<(EntityId, EntityId)>, UnresolvedRef> {
    let caller_id = match &call.caller_qname {
        Some(qname) => match resolver.lookup_qname(qname) {
            Some(id) => id,
            None => return Ok(None),
        },
        None => CodeEntity::make_id(CodeKind::ModuleFile, path),
    };
    let reference = call.path.join(".");
    let unresolved = |reason: &str| UnresolvedRef {
        file: path.to_string(),
        kind: "call".into(),
        reference: reference.clone(),
        reason: reason.to_string(),
    };

    if call.self_receiver {
        let Some(class_qname) = call.enclosing_class.as_deref() else {
            return Err(unresolved("self receiver outside a class"));
        };
        let name = call.path.last().expect("non-empty call path");
        return match resolver.resolve_self_call(class_qname, name) {
            Some(dst) => Ok(Some((caller_id, dst))),
            None => Err(unresolved("no such method on the class or its bases")),
        };
    }

    if !call.dynamic_receiver {
        match resolver.resolve_dotted(&call.path, file_syntax) {
            ResolveOutcome::Found(dst) => return Ok(Some((caller_id, dst))),
            ResolveOutcome::Ambiguous => return Err(unresolved("ambiguous reference")),
            ResolveOutcome::NotFound => {}
        }
    }
    let name = call.path.last().expect("non-empty call path");
    match resolver.same_file(path, name, false) {
        ResolveOutcome::Found(dst) => Ok(Some((caller_id, dst))),
        ResolveOutcome::Ambiguous => Err(unresolved(
            "dynamically dispatched: multiple candidate receivers",
        )),
        ResolveOutcome::NotFound => Err(unresolved("callee not defined in the repository")),
    }
}

/// Dotted module name for a Python file path (mirrors the frontend rule).
fn python_module_qname(rel_path: &str) -> String {
    let no_ext = rel_path.strip_suffix(".py").unwrap_or(rel_path);
    let mut parts: Vec<&str> = no_ext.split('/').collect();
    if parts.last() == Some(&"__init__") {
        parts.pop();
    }
    if parts.is_empty() {
        "init".to_string()
    } else {
        parts.join(".")
    }
}

/// Public, documentable API entities (module files excluded), sorted by
/// qualified name.
pub fn list_public_apis(kg: &RepoKG) -> Vec<EntityId> {
    let mut apis: Vec<(&str, EntityId)> = kg
        .code_entities()
        .filter(|e| e.visibility == Visibility::Public && e.kind != CodeKind::ModuleFile)
        .map(|e| (e.qualified_name.as_str(), e.id.clone()))
        .collect();
    apis.sort();
    apis.into_iter().map(|(_, id)| id).collect()
}

/// Ids of every entity extracted from `file` (the module_file included).
pub fn entities_of_file(kg: &RepoKG, file: &str) -> Vec<EntityId> {
    kg.code_entities()
        .filter(|e| e.file_path == file)
        .map(|e| e.id.clone())
        .collect()
}

/// Drop structural reference edges (calls, imports, inheritance) whose
/// source is an entity of `file`, ahead of re-deriving them from fresh
/// syntax. `include_contains` also drops the file's containment edges, for
/// when the entities themselves are about to be re-added.
pub fn remove_file_edges(kg: &mut RepoKG, file: &str, include_contains: bool) {
    let ids: BTreeSet<EntityId> = entities_of_file(kg, file).into_iter().collect();
    let stale: Vec<(EntityId, RelationKind, EntityId)> = kg
        .relationships()
        .filter(|r| {
            let kind_matches = matches!(
                r.kind,
                RelationKind::Calls
                    | RelationKind::Imports
                    | RelationKind::Implements
                    | RelationKind::Extends
            ) || (include_contains && r.kind == RelationKind::Contains);
            kind_matches && ids.contains(&r.src)
        })
        .map(|r| (r.src, r.kind, r.dst))
        .collect();
    for (src, kind, dst) in stale {
        kg.remove_relationship(&src, &dst, kind);
    }
}
