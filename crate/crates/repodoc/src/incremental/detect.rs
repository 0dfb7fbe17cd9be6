//! Change detection: diff the stored graph against a fresh snapshot to
//! classify every entity-level change without re-parsing unchanged files.

use crate::extract::{entities_from_syntax, ExtractError, ParseErrorEntry};
use crate::frontend::{FileSyntax, LanguageFrontend};
use crate::graph::{CodeEntity, CodeKind, EntityId, RepoKG};
use crate::incremental::policy::ChangeType;
use crate::incremental::propagate::Origin;
use crate::snapshot::{IgnoreSet, RepoSnapshot};
use std::collections::{BTreeMap, BTreeSet};

/// One entity-level difference between the stored graph and the snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityChange {
    pub id: EntityId,
    pub change: ChangeType,
    pub public: bool,
}

/// Everything an update needs to know about what moved: per-entity changes,
/// the file lists behind them, and the fresh syntax for changed files.
#[derive(Debug, Default)]
pub struct ChangeSet {
    /// Entity changes sorted by id.
    pub changes: Vec<EntityChange>,
    pub added_files: Vec<String>,
    pub modified_files: Vec<String>,
    pub removed_files: Vec<String>,
    /// Parsed syntax for added and modified files.
    pub syntax: BTreeMap<String, FileSyntax>,
    /// Raw text for added and modified files.
    pub texts: BTreeMap<String, String>,
    /// Files whose new revision failed to parse. Their stored entities are
    /// kept untouched rather than guessed at.
    pub parse_errors: Vec<ParseErrorEntry>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.changes.is_empty() && self.parse_errors.is_empty()
    }

    /// Added, modified, and removed file paths together.
    pub fn changed_files(&self) -> BTreeSet<String> {
        self.added_files
            .iter()
            .chain(&self.modified_files)
            .chain(&self.removed_files)
            .cloned()
            .collect()
    }

    /// The changes as propagation origins.
    pub fn origins(&self) -> Vec<Origin> {
        self.changes
            .iter()
            .map(|c| Origin::new(c.id.clone(), c.change, c.public))
            .collect()
    }
}

/// Compares the graph's per-file state against the snapshot. A file counts
/// as modified when its stored module_file source differs from the text on
/// disk, so no prior snapshot needs to be kept around.
pub fn detect_changes(
    kg: &RepoKG,
    snapshot: &RepoSnapshot,
    frontends: &[Box<dyn LanguageFrontend>],
    ignore: &IgnoreSet,
) -> Result<ChangeSet, ExtractError> {
    let mut old_by_file: BTreeMap<&str, Vec<&CodeEntity>> = BTreeMap::new();
    for entity in kg.code_entities() {
        old_by_file.entry(entity.file_path.as_str()).or_default().push(entity);
    }

    let mut set = ChangeSet::default();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for file in snapshot.files() {
        if ignore.matches(&file.path) {
            continue;
        }
        let ext = file.path.rsplit('.').next().unwrap_or("").to_lowercase();
        let Some(frontend) =
            frontends.iter().find(|f| f.extensions().contains(&ext.as_str()))
        else {
            continue;
        };
        seen.insert(file.path.as_str());
        let text = snapshot.read_file(&file.path)?;
        let old = old_by_file.get(file.path.as_str());
        if let Some(old_entities) = old {
            let stored_source = old_entities
                .iter()
                .find(|e| e.kind == CodeKind::ModuleFile)
                .map(|e| e.source.as_str());
            if stored_source == Some(text.trim_end_matches(['\n', '\r'])) {
                continue;
            }
        }
        match frontend.parse_file(&file.path, &text) {
            Ok(file_syntax) => {
                let new_entities = entities_from_syntax(&file_syntax, &text);
                diff_file(old.map(Vec::as_slice).unwrap_or(&[]), &new_entities, &mut set.changes);
                if old.is_some() {
                    set.modified_files.push(file.path.clone());
                } else {
                    set.added_files.push(file.path.clone());
                }
                set.syntax.insert(file.path.clone(), file_syntax);
                set.texts.insert(file.path.clone(), text);
            }
            Err(failure) => set.parse_errors.push(ParseErrorEntry {
                file: failure.file,
                message: failure.message,
            }),
        }
    }

    for (file, old_entities) in &old_by_file {
        if !seen.contains(file) {
            set.removed_files.push(file.to_string());
            for old in old_entities {
                set.changes.push(EntityChange {
                    id: old.id.clone(),
                    change: ChangeType::Removed,
                    public: old.visibility.is_public(),
                });
            }
        }
    }

    set.changes.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(set)
}

/// Classifies one file's entity differences. Identity is the entity id
/// (kind plus qualified name): a rename shows up as a removal plus an
/// addition, which is exactly how its impact behaves.
fn diff_file(old: &[&CodeEntity], new: &[CodeEntity], out: &mut Vec<EntityChange>) {
    let old_by_id: BTreeMap<&EntityId, &CodeEntity> =
        old.iter().map(|e| (&e.id, *e)).collect();
    let new_by_id: BTreeMap<&EntityId, &CodeEntity> = new.iter().map(|e| (&e.id, e)).collect();
    for (id, new_entity) in &new_by_id {
        match old_by_id.get(id) {
            None => out.push(EntityChange {
                id: (*id).clone(),
                change: ChangeType::Added,
                public: new_entity.visibility.is_public(),
            }),
            Some(old_entity) if **old_entity != **new_entity => {
                let change = if old_entity.signature != new_entity.signature {
                    ChangeType::SignatureModified
                } else {
                    ChangeType::BodyModified
                };
                out.push(EntityChange {
                    id: (*id).clone(),
                    change,
                    public: new_entity.visibility.is_public(),
                });
            }
            Some(_) => {}
        }
    }
    for (id, old_entity) in &old_by_id {
        if !new_by_id.contains_key(*id) {
            out.push(EntityChange {
                id: (*id).clone(),
                change: ChangeType::Removed,
                public: old_entity.visibility.is_public(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::builtin_frontends;
    use crate::testutil::{extract_dir, fixture_a, write_file};
    use std::path::Path;

    fn detect(kg: &RepoKG, root: &Path) -> ChangeSet {
        let ignore = IgnoreSet::new(&[]).unwrap();
        let snapshot = RepoSnapshot::scan(root, &ignore).unwrap();
        detect_changes(kg, &snapshot, &builtin_frontends(), &ignore).unwrap()
    }

    fn change_of<'a>(set: &'a ChangeSet, id: &str) -> &'a EntityChange {
        set.changes
            .iter()
            .find(|c| c.id.as_str() == id)
            .unwrap_or_else(|| panic!("no change recorded for {id}"))
    }

    #[test]
    fn identical_snapshot_yields_no_changes() {
        let dir = tempfile::tempdir().unwrap();
        fixture_a(dir.path());
        let kg = extract_dir(dir.path()).kg;
        let set = detect(&kg, dir.path());
        assert!(set.is_empty());
        assert!(set.changed_files().is_empty());
    }

    #[test]
    fn body_edit_is_classified_per_entity() {
        let dir = tempfile::tempdir().unwrap();
        fixture_a(dir.path());
        let kg = extract_dir(dir.path()).kg;
        // Same line layout as the fixture, so nothing else's span shifts.
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
        let set = detect(&kg, dir.path());
        assert_eq!(set.modified_files, ["util.py"]);
        assert_eq!(set.changes.len(), 2, "only _scrub and the file node moved");
        let scrub = change_of(&set, "function:util._scrub");
        assert_eq!(scrub.change, ChangeType::BodyModified);
        assert!(!scrub.public);
        assert_eq!(
            change_of(&set, "module_file:util.py").change,
            ChangeType::BodyModified
        );
    }

    #[test]
    fn signature_edit_and_rename_are_distinguished() {
        let dir = tempfile::tempdir().unwrap();
        fixture_a(dir.path());
        let kg = extract_dir(dir.path()).kg;
        write_file(
            dir.path(),
            "util.py",
            "\
def assist(value):
    return _scrub(value)


def _scrub(value):
    return str(value).strip()


def format_name(value, upper):
    return str(value).title()
",
        );
        let set = detect(&kg, dir.path());
        assert_eq!(
            change_of(&set, "function:util.format_name").change,
            ChangeType::SignatureModified
        );
        assert!(change_of(&set, "function:util.format_name").public);
        assert_eq!(change_of(&set, "function:util.helper").change, ChangeType::Removed);
        assert_eq!(change_of(&set, "function:util.assist").change, ChangeType::Added);
        assert_eq!(
            change_of(&set, "module_file:util.py").change,
            ChangeType::BodyModified
        );
    }

    #[test]
    fn added_and_removed_files_list_every_entity() {
        let dir = tempfile::tempdir().unwrap();
        fixture_a(dir.path());
        let kg = extract_dir(dir.path()).kg;
        std::fs::remove_file(dir.path().join("models.py")).unwrap();
        write_file(dir.path(), "extra.py", "def bonus():\n    return 1\n");
        let set = detect(&kg, dir.path());
        assert_eq!(set.added_files, ["extra.py"]);
        assert_eq!(set.removed_files, ["models.py"]);
        assert_eq!(change_of(&set, "function:extra.bonus").change, ChangeType::Added);
        assert_eq!(change_of(&set, "class:models.Greeter").change, ChangeType::Removed);
        assert_eq!(change_of(&set, "module_file:models.py").change, ChangeType::Removed);
        assert!(set.syntax.contains_key("extra.py"));
    }

    #[test]
    fn unparseable_revision_keeps_the_stored_state() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "A.java", "public class A { public void go() {} }\n");
        let kg = extract_dir(dir.path()).kg;
        write_file(dir.path(), "A.java", "public class A { public void go( {} }\n");
        let set = detect(&kg, dir.path());
        assert!(set.changes.is_empty());
        assert_eq!(set.parse_errors.len(), 1);
        assert_eq!(set.parse_errors[0].file, "A.java");
        assert!(!set.is_empty(), "a parse failure still counts as activity");
    }
}
