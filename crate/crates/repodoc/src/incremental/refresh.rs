//! Graph refresh: apply a detected change set to the stored graph and
//! re-derive structural edges for exactly the files whose resolution
//! outcomes could have shifted.

use crate::extract::{
    add_file_entities, entities_from_syntax, entities_of_file, extract_structural_relations,
    remove_file_edges, ExtractError, ExtractionReport,
};
use crate::frontend::{FileSyntax, LanguageFrontend};
use crate::graph::{CodeEntity, CodeKind, EntityId, RelationKind, RepoKG};
use crate::incremental::detect::ChangeSet;
use crate::incremental::propagate::UnionEdge;
use crate::snapshot::RepoSnapshot;
use std::collections::{BTreeMap, BTreeSet};

/// What a refresh did to the graph.
#[derive(Debug, Default)]
pub struct RefreshOutcome {
    /// Every edge present before or after the refresh. Impact propagation
    /// runs over this union so removed relationships still carry impact.
    pub union_edges: Vec<UnionEdge>,
    /// Files whose structural edges were re-derived.
    pub rederived_files: BTreeSet<String>,
    /// Report describing the refreshed graph, with unresolved references
    /// carried over for files that were not re-derived.
    pub report: ExtractionReport,
    pub added_entities: Vec<EntityId>,
    pub removed_entities: Vec<EntityId>,
}

/// Applies `changes` to `kg` in place.
///
/// Besides the changed files themselves, edges are re-derived for files
/// whose references could resolve differently now: files holding unresolved
/// references, files importing a changed file, and files sharing a changed
/// file's directory (same-package visibility). Anything else keeps its
/// edges byte-for-byte, which is what makes the refresh equivalent to a
/// full re-extraction.
pub fn refresh_graph(
    kg: &mut RepoKG,
    changes: &ChangeSet,
    snapshot: &RepoSnapshot,
    frontends: &[Box<dyn LanguageFrontend>],
    old_report: &ExtractionReport,
) -> Result<RefreshOutcome, ExtractError> {
    let mut outcome = RefreshOutcome::default();
    let base_edges: Vec<UnionEdge> = kg
        .relationships()
        .map(|r| (r.src.clone(), r.kind, r.dst.clone()))
        .collect();

    let changed: BTreeSet<String> = changes.changed_files();
    let removed: BTreeSet<&String> = changes.removed_files.iter().collect();
    let failing: BTreeSet<&str> =
        changes.parse_errors.iter().map(|e| e.file.as_str()).collect();

    // The re-derive set, beyond the changed files themselves. Computed
    // against the pre-refresh graph.
    let mut extra: BTreeSet<String> = BTreeSet::new();
    if !changes.syntax.is_empty() || !changes.removed_files.is_empty() {
        for entry in &old_report.unresolved {
            extra.insert(entry.file.clone());
        }
        for file in &changed {
            let file_id = CodeEntity::make_id(CodeKind::ModuleFile, file);
            if kg.contains_entity(&file_id) {
                for importer in kg.edges_to(&file_id, RelationKind::Imports) {
                    if let Some(entity) = kg.code_entity(&importer) {
                        extra.insert(entity.file_path.clone());
                    }
                }
            }
            let dir = file.rsplit_once('/').map(|(d, _)| d).unwrap_or("");
            for entity in kg.code_entities() {
                if entity.kind == CodeKind::ModuleFile
                    && entity.file_path.rsplit_once('/').map(|(d, _)| d).unwrap_or("") == dir
                {
                    extra.insert(entity.file_path.clone());
                }
            }
        }
        extra.retain(|f| {
            !changes.syntax.contains_key(f)
                && !removed.contains(f)
                && !failing.contains(f.as_str())
        });
    }

    // Re-parse the extra files; their text is unchanged, so this cannot
    // introduce new entities, only fresh syntax for edge derivation.
    let mut derive_syntax: BTreeMap<String, FileSyntax> = changes.syntax.clone();
    for file in &extra {
        let ext = file.rsplit('.').next().unwrap_or("").to_lowercase();
        let Some(frontend) = frontends.iter().find(|f| f.extensions().contains(&ext.as_str()))
        else {
            continue;
        };
        let Ok(text) = snapshot.read_file(file) else {
            continue;
        };
        match frontend.parse_file(file, &text) {
            Ok(file_syntax) => {
                derive_syntax.insert(file.clone(), file_syntax);
            }
            Err(failure) => {
                log::warn!("skipping re-derive of {}: {}", failure.file, failure.message)
            }
        }
    }

    // Entity mutations: removals first, then per-file upserts.
    for file in &changes.removed_files {
        for id in entities_of_file(kg, file) {
            kg.remove_entity(&id)?;
            outcome.removed_entities.push(id);
        }
    }
    for (file, file_syntax) in &changes.syntax {
        let text = &changes.texts[file];
        let old_ids: BTreeSet<EntityId> = entities_of_file(kg, file).into_iter().collect();
        let new_ids: BTreeSet<EntityId> = entities_from_syntax(file_syntax, text)
            .into_iter()
            .map(|e| e.id)
            .collect();
        remove_file_edges(kg, file, true);
        for id in old_ids.difference(&new_ids) {
            kg.remove_entity(id)?;
            outcome.removed_entities.push(id.clone());
        }
        outcome.added_entities.extend(new_ids.difference(&old_ids).cloned());
        add_file_entities(kg, file_syntax, text)?;
    }
    for file in derive_syntax.keys() {
        if !changes.syntax.contains_key(file) {
            remove_file_edges(kg, file, false);
        }
    }

    let mut report = ExtractionReport {
        parse_errors: changes.parse_errors.clone(),
        ..ExtractionReport::default()
    };
    extract_structural_relations(kg, &derive_syntax, &mut report);
    for entry in &old_report.unresolved {
        if !derive_syntax.contains_key(&entry.file) && !removed.contains(&entry.file) {
            report.unresolved.push(entry.clone());
        }
    }
    report.unresolved.sort();
    report.unresolved.dedup();
    report.entities = kg.code_entities().count() as u64;
    report.relationships = kg.edge_count() as u64;
    report.files_parsed =
        kg.code_entities().filter(|e| e.kind == CodeKind::ModuleFile).count() as u64;

    let mut union: BTreeSet<UnionEdge> = base_edges.into_iter().collect();
    union.extend(kg.relationships().map(|r| (r.src.clone(), r.kind, r.dst.clone())));
    outcome.union_edges = union.into_iter().collect();
    outcome.rederived_files = derive_syntax.into_keys().collect();
    outcome.report = report;
    outcome.added_entities.sort();
    outcome.removed_entities.sort();
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::builtin_frontends;
    use crate::incremental::detect::detect_changes;
    use crate::snapshot::IgnoreSet;
    use crate::testutil::{extract_dir, fixture_a, fixture_b, write_file};
    use std::path::Path;

    /// Detect + refresh against `root`, returning the outcome.
    fn refresh(kg: &mut RepoKG, root: &Path, old_report: &ExtractionReport) -> RefreshOutcome {
        let ignore = IgnoreSet::new(&[]).unwrap();
        let snapshot = RepoSnapshot::scan(root, &ignore).unwrap();
        let frontends = builtin_frontends();
        let changes = detect_changes(kg, &snapshot, &frontends, &ignore).unwrap();
        refresh_graph(kg, &changes, &snapshot, &frontends, old_report).unwrap()
    }

    /// The refreshed graph and report must match a from-scratch extraction.
    fn assert_matches_full(kg: &RepoKG, report: &ExtractionReport, root: &Path) {
        let full = extract_dir(root);
        assert_eq!(
            String::from_utf8(kg.to_json_bytes()).unwrap(),
            String::from_utf8(full.kg.to_json_bytes()).unwrap(),
            "refreshed graph must equal a full re-extraction"
        );
        assert_eq!(report.unresolved, full.report.unresolved);
        assert_eq!(report.entities, full.report.entities);
        assert_eq!(report.relationships, full.report.relationships);
    }

    #[test]
    fn body_edit_touches_no_edges() {
        let dir = tempfile::tempdir().unwrap();
        fixture_a(dir.path());
        let ex = extract_dir(dir.path());
        let mut kg = ex.kg;
        let before: Vec<_> = kg.relationships().collect();
        write_file(
            dir.path(),
            "util.py",
            "\
def helper(value):
    return _scrub(value)


def _scrub(value):
    return str(value).strip().lower()


def format_name(value):
    return str(value).title()
",
        );
        let outcome = refresh(&mut kg, dir.path(), &ex.report);
        assert_eq!(kg.relationships().collect::<Vec<_>>(), before);
        assert!(outcome.added_entities.is_empty());
        assert!(outcome.removed_entities.is_empty());
        assert_matches_full(&kg, &outcome.report, dir.path());
    }

    #[test]
    fn rename_rewires_callers() {
        let dir = tempfile::tempdir().unwrap();
        fixture_a(dir.path());
        let ex = extract_dir(dir.path());
        let mut kg = ex.kg;
        // util.helper -> util.assist, and app.py follows the rename.
        write_file(
            dir.path(),
            "util.py",
            "\
def assist(value):
    return _scrub(value)


def _scrub(value):
    return str(value).strip()


def format_name(value):
    return str(value).title()
",
        );
        write_file(
            dir.path(),
            "app.py",
            "\
import util
from util import format_name as fmt
from models import Greeter


def main():
    name = fmt(\"world\")
    util.assist(name)
    return Greeter()


def _setup():
    util.assist(\"boot\")
",
        );
        let outcome = refresh(&mut kg, dir.path(), &ex.report);
        assert_eq!(
            outcome.added_entities,
            [EntityId::new("function", "util.assist")]
        );
        assert_eq!(
            outcome.removed_entities,
            [EntityId::new("function", "util.helper")]
        );
        assert!(kg.has_edge(
            &EntityId::new("function", "app.main"),
            RelationKind::Calls,
            &EntityId::new("function", "util.assist"),
        ));
        assert_matches_full(&kg, &outcome.report, dir.path());
        // The union keeps the old edge so impact still crosses it.
        assert!(outcome.union_edges.contains(&(
            EntityId::new("function", "app.main"),
            RelationKind::Calls,
            EntityId::new("function", "util.helper")
        )));
    }

    #[test]
    fn previously_unresolved_references_resolve_after_an_add() {
        let dir = tempfile::tempdir().unwrap();
        write_file(
            dir.path(),
            "a.py",
            "import b\n\n\ndef f():\n    return b.g()\n",
        );
        let ex = extract_dir(dir.path());
        let mut kg = ex.kg;
        assert_eq!(ex.report.unresolved.len(), 2, "import and call both dangle");
        write_file(dir.path(), "b.py", "def g():\n    return 1\n");
        let outcome = refresh(&mut kg, dir.path(), &ex.report);
        assert!(outcome.rederived_files.contains("a.py"), "a.py held unresolved refs");
        assert!(kg.has_edge(
            &EntityId::new("function", "a.f"),
            RelationKind::Calls,
            &EntityId::new("function", "b.g"),
        ));
        assert_matches_full(&kg, &outcome.report, dir.path());
    }

    #[test]
    fn file_removal_leaves_importers_consistent() {
        let dir = tempfile::tempdir().unwrap();
        fixture_a(dir.path());
        let ex = extract_dir(dir.path());
        let mut kg = ex.kg;
        std::fs::remove_file(dir.path().join("util.py")).unwrap();
        let outcome = refresh(&mut kg, dir.path(), &ex.report);
        assert!(outcome.rederived_files.contains("app.py"), "app.py imported util");
        assert!(!kg.contains_entity(&EntityId::new("module_file", "util.py")));
        assert_matches_full(&kg, &outcome.report, dir.path());
    }

    #[test]
    fn java_same_package_files_are_rederived() {
        let dir = tempfile::tempdir().unwrap();
        fixture_b(dir.path());
        let ex = extract_dir(dir.path());
        let mut kg = ex.kg;
        // A new same-package type; siblings resolve it without imports.
        write_file(
            dir.path(),
            "src/com/acme/store/NullStore.java",
            "\
package com.acme.store;

public class NullStore implements Store {
    public String get(String key) {
        return \"\";
    }

    public void put(String key, String value) {
    }
}
",
        );
        let outcome = refresh(&mut kg, dir.path(), &ex.report);
        assert!(outcome
            .rederived_files
            .contains("src/com/acme/store/MemoryStore.java"));
        assert_matches_full(&kg, &outcome.report, dir.path());
    }

    #[test]
    fn broken_revision_is_conservatively_kept() {
        let dir = tempfile::tempdir().unwrap();
        fixture_a(dir.path());
        let ex = extract_dir(dir.path());
        let mut kg = ex.kg;
        let before = String::from_utf8(kg.to_json_bytes()).unwrap();
        write_file(dir.path(), "syntax_err.py", "def broken(:\n");
        std::fs::write(
            dir.path().join("util.py"),
            "def helper(value:\n    return ???\n",
        )
        .unwrap();
        let outcome = refresh(&mut kg, dir.path(), &ex.report);
        assert_eq!(
            String::from_utf8(kg.to_json_bytes()).unwrap(),
            before,
            "unparseable revisions must not disturb the graph"
        );
        assert_eq!(outcome.report.parse_errors.len(), 2);
        assert_eq!(outcome.report.unresolved, ex.report.unresolved);
    }
}
