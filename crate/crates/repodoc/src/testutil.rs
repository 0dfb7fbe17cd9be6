//! Shared fixtures and helpers for this crate's test suites.

use crate::extract::{parse_repository, Extraction};
use crate::frontend::builtin_frontends;
use crate::snapshot::{IgnoreSet, RepoSnapshot};
use std::path::Path;

pub fn write_file(root: &Path, rel: &str, contents: &str) {
    let path = root.join(rel);
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, contents).unwrap();
}

/// Scan and extract a directory with the default frontends and ignores.
pub fn extract_dir(root: &Path) -> Extraction {
    let snapshot = RepoSnapshot::scan(root, &IgnoreSet::default()).unwrap();
    parse_repository(&snapshot, &builtin_frontends(), &IgnoreSet::default()).unwrap()
}

/// Small Python project: 3 files, 2 classes, 5 functions; 4 public and 3
/// private definitions.
pub fn fixture_a(root: &Path) {
    write_file(
        root,
        "app.py",
        "\
import util
from util import format_name as fmt
from models import Greeter


def main():
    name = fmt(\"world\")
    util.helper(name)
    return Greeter()


def _setup():
    util.helper(\"boot\")
",
    );
    write_file(
        root,
        "util.py",
        "\
def helper(value):
    return _scrub(value)


def _scrub(value):
    return str(value).strip()


def format_name(value):
    return str(value).title()
",
    );
    write_file(
        root,
        "models.py",
        "\
class Greeter:
    \"\"\"Greets formatted names.\"\"\"


class _Config:
    pass
",
    );
}

/// Small Java project yielding exactly 25 code entities (6 file nodes,
/// 6 types, 13 methods) across three packages.
pub fn fixture_b(root: &Path) {
    write_file(
        root,
        "src/com/acme/store/Store.java",
        "\
package com.acme.store;

public interface Store {
    String get(String key);

    void put(String key, String value);
}
",
    );
    write_file(
        root,
        "src/com/acme/store/MemoryStore.java",
        "\
package com.acme.store;

import java.util.HashMap;

public class MemoryStore implements Store {
    private HashMap<String, String> data = new HashMap<>();

    public String get(String key) {
        return data.get(key);
    }

    public void put(String key, String value) {
        data.put(key, value);
    }

    public int size() {
        return data.size();
    }
}
",
    );
    write_file(
        root,
        "src/com/acme/store/CachingStore.java",
        "\
package com.acme.store;

public class CachingStore extends MemoryStore {
    private int hits;

    public String get(String key) {
        hits = hits + 1;
        return super.get(key);
    }

    public int hits() {
        return hits;
    }
}
",
    );
    write_file(
        root,
        "src/com/acme/app/App.java",
        "\
package com.acme.app;

import com.acme.store.MemoryStore;
import com.acme.store.Store;

public class App {
    public static void main(String[] args) {
        Store store = new MemoryStore();
        store.put(\"greeting\", \"hello\");
        Greeter greeter = new Greeter(store);
        System.out.println(greeter.greet(\"world\"));
    }
}
",
    );
    write_file(
        root,
        "src/com/acme/app/Greeter.java",
        "\
package com.acme.app;

import com.acme.store.Store;

public class Greeter {
    private final Store store;

    public Greeter(Store store) {
        this.store = store;
    }

    public String greet(String name) {
        String greeting = store.get(\"greeting\");
        return format(greeting, name);
    }

    private String format(String greeting, String name) {
        return greeting + \", \" + name + \"!\";
    }
}
",
    );
    write_file(
        root,
        "src/com/acme/util/Text.java",
        "\
package com.acme.util;

public final class Text {
    public static String trim(String value) {
        return value == null ? \"\" : value.trim();
    }

    public static String upper(String value) {
        return trim(value).toUpperCase();
    }
}
",
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_b_has_exactly_25_entities() {
        let dir = tempfile::tempdir().unwrap();
        fixture_b(dir.path());
        let ex = extract_dir(dir.path());
        assert_eq!(ex.kg.entity_count(), 25, "fixture B must stay at 25 entities");
        assert!(ex.report.parse_errors.is_empty());
    }
}
