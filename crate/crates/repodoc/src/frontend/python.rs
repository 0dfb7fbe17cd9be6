//! Python frontend: extracts definitions, imports, inheritance, and call
//! sites from tree-sitter syntax trees.

use super::{
    node_children, Capabilities, FileSyntax, InheritKind, LanguageFrontend, LineIndex,
    ParseFailure, RawCall, RawEntity, RawImport, RawInheritance,
};
use crate::graph::{CodeKind, Span, Visibility};
use tree_sitter::Node;

pub struct PythonFrontend;

impl PythonFrontend {
    pub fn new() -> Self {
        PythonFrontend
    }
}

impl Default for PythonFrontend {
    fn default() -> Self {
        Self::new()
    }
}

impl LanguageFrontend for PythonFrontend {
    fn language(&self) -> &'static str {
        "python"
    }

    fn extensions(&self) -> &'static [&'static str] {
        &["py"]
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            entities: true,
            imports: true,
            inheritance: true,
            calls: true,
        }
    }

    fn parse_file(&self, rel_path: &str, source: &str) -> Result<FileSyntax, ParseFailure> {
        let mut parser = tree_sitter::Parser::new();
        parser
            .set_language(&tree_sitter_python::LANGUAGE.into())
            .expect("python grammar loads");
        let tree = parser.parse(source, None).ok_or_else(|| ParseFailure {
            file: rel_path.to_string(),
            message: "parser returned no tree".into(),
        })?;
        if tree.root_node().has_error() {
            return Err(ParseFailure {
                file: rel_path.to_string(),
                message: "syntax error".into(),
            });
        }
        let module_qname = module_qname_for(rel_path);
        let is_package_init = rel_path
            .rsplit('/')
            .next()
            .is_some_and(|f| f == "__init__.py");
        let mut walker = Walker {
            src: source,
            lines: LineIndex::new(source),
            module_qname: module_qname.clone(),
            is_package_init,
            out: FileSyntax {
                path: rel_path.to_string(),
                language: "python",
                module_qname,
                entities: Vec::new(),
                imports: Vec::new(),
                inherits: Vec::new(),
                calls: Vec::new(),
            },
        };
        walker.visit_module(tree.root_node());
        Ok(walker.out)
    }
}

/// Dotted module name from a repo-relative path: `pkg/util.py` -> `pkg.util`,
/// `pkg/__init__.py` -> `pkg`.
fn module_qname_for(rel_path: &str) -> String {
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

/// Leading-underscore names are private, except dunder names (`__init__`),
/// which are part of the public protocol.
fn name_visibility(name: &str) -> Visibility {
    if name.starts_with('_') && !(name.starts_with("__") && name.ends_with("__")) {
        Visibility::Private
    } else {
        Visibility::Public
    }
}

struct Walker<'a> {
    src: &'a str,
    lines: LineIndex,
    module_qname: String,
    is_package_init: bool,
    out: FileSyntax,
}

impl<'a> Walker<'a> {
    fn text(&self, node: Node) -> &'a str {
        node.utf8_text(self.src.as_bytes()).unwrap_or("")
    }

    fn visit_module(&mut self, root: Node) {
        for child in node_children(root) {
            match child.kind() {
                "import_statement" => self.handle_import(child),
                "import_from_statement" => self.handle_from_import(child),
                "function_definition" | "class_definition" | "decorated_definition" => {
                    self.handle_definition(child, None);
                }
                _ => self.collect_calls(child, None, None),
            }
        }
    }

    fn handle_import(&mut self, node: Node) {
        let line = node.start_position().row as u32 + 1;
        for child in node_children(node) {
            match child.kind() {
                "dotted_name" => {
                    let target = self.text(child).to_string();
                    let first = target.split('.').next().unwrap_or("").to_string();
                    self.out.imports.push(RawImport {
                        module: target,
                        binding: Some((first.clone(), first)),
                        wildcard: false,
                        line,
                    });
                }
                "aliased_import" => {
                    let target = child
                        .child_by_field_name("name")
                        .map(|n| self.text(n).to_string())
                        .unwrap_or_default();
                    let alias = child
                        .child_by_field_name("alias")
                        .map(|n| self.text(n).to_string())
                        .unwrap_or_default();
                    self.out.imports.push(RawImport {
                        module: target.clone(),
                        binding: Some((alias, target)),
                        wildcard: false,
                        line,
                    });
                }
                _ => {}
            }
        }
    }

    /// Resolve the base module of a `from X import ...` statement, handling
    /// relative imports against this file's package.
    fn from_import_base(&self, module_node: Option<Node>) -> Option<String> {
        let node = module_node?;
        match node.kind() {
            "dotted_name" => Some(self.text(node).to_string()),
            "relative_import" => {
                let mut level = 0usize;
                let mut suffix = String::new();
                for child in node_children(node) {
                    match child.kind() {
                        "import_prefix" => {
                            level = self.text(child).chars().filter(|c| *c == '.').count()
                        }
                        "dotted_name" => suffix = self.text(child).to_string(),
                        _ => {}
                    }
                }
                let mut parts: Vec<&str> = self.module_qname.split('.').collect();
                // The package of a module is its qname minus the file stem;
                // an __init__.py's qname already names the package.
                if !self.is_package_init {
                    parts.pop();
                }
                for _ in 1..level {
                    parts.pop();
                }
                let mut base = parts.join(".");
                if !suffix.is_empty() {
                    if !base.is_empty() {
                        base.push('.');
                    }
                    base.push_str(&suffix);
                }
                if base.is_empty() {
                    None
                } else {
                    Some(base)
                }
            }
            _ => None,
        }
    }

    fn handle_from_import(&mut self, node: Node) {
        let line = node.start_position().row as u32 + 1;
        let Some(base) = self.from_import_base(node.child_by_field_name("module_name")) else {
            return;
        };
        let mut saw_name = false;
        for child in node_children(node) {
            // Skip the module_name node itself; remaining dotted_name /
            // aliased_import children are the imported symbols.
            if Some(child) == node.child_by_field_name("module_name") {
                continue;
            }
            match child.kind() {
                "wildcard_import" => {
                    saw_name = true;
                    self.out.imports.push(RawImport {
                        module: base.clone(),
                        binding: None,
                        wildcard: true,
                        line,
                    });
                }
                "dotted_name" => {
                    saw_name = true;
                    let symbol = self.text(child).to_string();
                    self.out.imports.push(RawImport {
                        module: base.clone(),
                        binding: Some((symbol.clone(), format!("{base}.{symbol}"))),
                        wildcard: false,
                        line,
                    });
                }
                "aliased_import" => {
                    saw_name = true;
                    let symbol = child
                        .child_by_field_name("name")
                        .map(|n| self.text(n).to_string())
                        .unwrap_or_default();
                    let alias = child
                        .child_by_field_name("alias")
                        .map(|n| self.text(n).to_string())
                        .unwrap_or_default();
                    self.out.imports.push(RawImport {
                        module: base.clone(),
                        binding: Some((alias, format!("{base}.{symbol}"))),
                        wildcard: false,
                        line,
                    });
                }
                _ => {}
            }
        }
        if !saw_name {
            self.out.imports.push(RawImport {
                module: base,
                binding: None,
                wildcard: false,
                line,
            });
        }
    }

    /// Extract a definition (possibly decorated) into an entity, recursing
    /// into class bodies. `class_ctx` = (enclosing class qname, visibility).
    fn handle_definition(&mut self, node: Node, class_ctx: Option<(&str, Visibility)>) {
        let (span_node, def_node) = if node.kind() == "decorated_definition" {
            match node.child_by_field_name("definition") {
                Some(inner) => (node, inner),
                None => return,
            }
        } else {
            (node, node)
        };
        let Some(name_node) = def_node.child_by_field_name("name") else {
            return;
        };
        let name = self.text(name_node).to_string();
        let qname = match class_ctx {
            Some((class_qname, _)) => format!("{class_qname}.{name}"),
            None => format!("{}.{name}", self.module_qname),
        };
        let kind = match def_node.kind() {
            "class_definition" => CodeKind::Class,
            _ if class_ctx.is_some() => CodeKind::Method,
            _ => CodeKind::Function,
        };
        let mut visibility = name_visibility(&name);
        if let Some((_, class_vis)) = class_ctx {
            if class_vis == Visibility::Private {
                visibility = Visibility::Private;
            }
        }
        let start_row = span_node.start_position().row;
        let end_row = span_node.end_position().row;
        let source = self
            .lines
            .lines_slice(self.src, start_row, end_row)
            .to_string();
        let body = def_node.child_by_field_name("body");
        let signature = match body {
            Some(b) => self.src[self.lines.line_start(start_row)..b.start_byte()]
                .trim_end()
                .to_string(),
            None => source.clone(),
        };
        self.out.entities.push(RawEntity {
            kind,
            name,
            qualified_name: qname.clone(),
            parent_qname: class_ctx.map(|(c, _)| c.to_string()),
            span: Span {
                start_line: start_row as u32 + 1,
                end_line: end_row as u32 + 1,
            },
            signature,
            source,
            visibility,
        });

        if kind == CodeKind::Class {
            if let Some(supers) = def_node.child_by_field_name("superclasses") {
                let line = supers.start_position().row as u32 + 1;
                for base in node_children(supers) {
                    let parent_name = match base.kind() {
                        "identifier" | "attribute" | "dotted_name" => self.text(base).to_string(),
                        _ => continue,
                    };
                    self.out.inherits.push(RawInheritance {
                        child_qname: qname.clone(),
                        parent_name,
                        kind: InheritKind::Extends,
                        line,
                    });
                }
            }
            if let Some(body) = body {
                for child in node_children(body) {
                    match child.kind() {
                        "function_definition" | "class_definition" | "decorated_definition" => {
                            self.handle_definition(child, Some((&qname, visibility)));
                        }
                        _ => self.collect_calls(child, Some(&qname), Some(&qname)),
                    }
                }
            }
        } else if let Some(body) = body {
            let enclosing_class = class_ctx.map(|(c, _)| c.to_string());
            self.collect_calls(body, Some(&qname), enclosing_class.as_deref());
        }
    }

    /// Flatten a call's function expression into a dotted path. Returns the
    /// path plus whether the leading receiver was a non-name expression.
    fn flatten_callee(&self, node: Node) -> Option<(Vec<String>, bool)> {
        match node.kind() {
            "identifier" => Some((vec![self.text(node).to_string()], false)),
            "attribute" => {
                let attr = node
                    .child_by_field_name("attribute")
                    .map(|n| self.text(n).to_string())?;
                let object = node.child_by_field_name("object")?;
                match self.flatten_callee(object) {
                    Some((mut path, dynamic)) => {
                        path.push(attr);
                        Some((path, dynamic))
                    }
                    None => Some((vec![attr], true)),
                }
            }
            _ => None,
        }
    }

    /// Record call sites in `node`'s subtree, attributed to `caller`.
    /// Does not descend into nested definitions (handled as entities, or
    /// deliberately skipped for closures).
    fn collect_calls(&mut self, node: Node, caller: Option<&str>, enclosing_class: Option<&str>) {
        match node.kind() {
            "function_definition" | "class_definition" | "decorated_definition" => return,
            "call" => {
                if let Some(function) = node.child_by_field_name("function") {
                    if let Some((mut path, mut dynamic)) = self.flatten_callee(function) {
                        let mut self_receiver = false;
                        if path.len() > 1 && (path[0] == "self" || path[0] == "cls") {
                            path.remove(0);
                            if path.len() == 1 {
                                self_receiver = true;
                            } else {
                                // A field access like self.store.put(): only
                                // the final name is meaningful.
                                path = vec![path.pop().unwrap()];
                                dynamic = true;
                            }
                        }
                        if !path.is_empty() {
                            self.out.calls.push(RawCall {
                                caller_qname: caller.map(str::to_string),
                                enclosing_class: enclosing_class.map(str::to_string),
                                path,
                                self_receiver,
                                dynamic_receiver: dynamic,
                                line: node.start_position().row as u32 + 1,
                            });
                        }
                    }
                }
            }
            _ => {}
        }
        for child in node_children(node) {
            self.collect_calls(child, caller, enclosing_class);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> FileSyntax {
        PythonFrontend::new().parse_file("pkg/app.py", src).unwrap()
    }

    #[test]
    fn module_qnames_follow_paths() {
        assert_eq!(module_qname_for("app.py"), "app");
        assert_eq!(module_qname_for("pkg/util.py"), "pkg.util");
        assert_eq!(module_qname_for("pkg/__init__.py"), "pkg");
    }

    #[test]
    fn extracts_functions_classes_and_methods() {
        let src = "\
def top():
    pass


class Greeter:
    def greet(self):
        return 1

    def _hidden(self):
        return 2


def _private():
    pass
";
        let syn = parse(src);
        let names: Vec<(&str, CodeKind, Visibility)> = syn
            .entities
            .iter()
            .map(|e| (e.qualified_name.as_str(), e.kind, e.visibility))
            .collect();
        assert_eq!(
            names,
            vec![
                ("pkg.app.top", CodeKind::Function, Visibility::Public),
                ("pkg.app.Greeter", CodeKind::Class, Visibility::Public),
                ("pkg.app.Greeter.greet", CodeKind::Method, Visibility::Public),
                (
                    "pkg.app.Greeter._hidden",
                    CodeKind::Method,
                    Visibility::Private
                ),
                ("pkg.app._private", CodeKind::Function, Visibility::Private),
            ]
        );
        let greet = &syn.entities[2];
        assert_eq!(greet.parent_qname.as_deref(), Some("pkg.app.Greeter"));
        assert_eq!(greet.span, Span { start_line: 6, end_line: 7 });
        assert_eq!(greet.signature, "    def greet(self):");
        assert!(greet.source.starts_with(&greet.signature));
    }

    #[test]
    fn source_matches_file_lines_exactly() {
        let src = "def f(x,\n      y):\n    return x + y\n";
        let syn = PythonFrontend::new().parse_file("m.py", src).unwrap();
        let e = &syn.entities[0];
        assert_eq!(e.span, Span { start_line: 1, end_line: 3 });
        let from_file: Vec<&str> = src.lines().collect();
        let expect = from_file[(e.span.start_line as usize - 1)..e.span.end_line as usize]
            .join("\n");
        assert_eq!(e.source, expect);
        assert_eq!(e.signature, "def f(x,\n      y):");
    }

    #[test]
    fn decorated_definitions_cover_decorator_lines() {
        let src = "@wraps(f)\ndef g():\n    pass\n";
        let syn = PythonFrontend::new().parse_file("m.py", src).unwrap();
        let e = &syn.entities[0];
        assert_eq!(e.span.start_line, 1);
        assert!(e.signature.starts_with("@wraps(f)\ndef g():"));
        assert!(e.source.starts_with(&e.signature));
    }

    #[test]
    fn imports_normalize_bindings() {
        let src = "\
import util
import pkg.deep as d
from models import Greeter
from models import helper as h
from . import sibling
";
        let syn = parse(src);
        let got: Vec<(String, Option<(String, String)>, bool)> = syn
            .imports
            .iter()
            .map(|i| (i.module.clone(), i.binding.clone(), i.wildcard))
            .collect();
        assert_eq!(
            got,
            vec![
                ("util".into(), Some(("util".into(), "util".into())), false),
                (
                    "pkg.deep".into(),
                    Some(("d".into(), "pkg.deep".into())),
                    false
                ),
                (
                    "models".into(),
                    Some(("Greeter".into(), "models.Greeter".into())),
                    false
                ),
                (
                    "models".into(),
                    Some(("h".into(), "models.helper".into())),
                    false
                ),
                (
                    "pkg".into(),
                    Some(("sibling".into(), "pkg.sibling".into())),
                    false
                ),
            ]
        );
    }

    #[test]
    fn inheritance_and_calls_are_recorded() {
        let src = "\
class Base:
    pass


class Child(Base, abc.ABC):
    def run(self):
        self.step()
        helper(self.x)


def helper(x):
    return format(x)
";
        let syn = parse(src);
        let inherits: Vec<(&str, &str)> = syn
            .inherits
            .iter()
            .map(|i| (i.child_qname.as_str(), i.parent_name.as_str()))
            .collect();
        assert_eq!(
            inherits,
            vec![("pkg.app.Child", "Base"), ("pkg.app.Child", "abc.ABC")]
        );
        let calls: Vec<(Option<&str>, Vec<&str>, bool)> = syn
            .calls
            .iter()
            .map(|c| {
                (
                    c.caller_qname.as_deref(),
                    c.path.iter().map(String::as_str).collect(),
                    c.self_receiver,
                )
            })
            .collect();
        assert_eq!(
            calls,
            vec![
                (Some("pkg.app.Child.run"), vec!["step"], true),
                (Some("pkg.app.Child.run"), vec!["helper"], false),
                (Some("pkg.app.helper"), vec!["format"], false),
            ]
        );
    }

    #[test]
    fn module_level_calls_have_no_caller() {
        let src = "import util\n\nutil.setup()\n";
        let syn = parse(src);
        assert_eq!(syn.calls.len(), 1);
        assert_eq!(syn.calls[0].caller_qname, None);
        assert_eq!(syn.calls[0].path, vec!["util", "setup"]);
    }

    #[test]
    fn syntax_errors_fail_the_file() {
        let err = PythonFrontend::new()
            .parse_file("bad.py", "def f(:\n")
            .unwrap_err();
        assert_eq!(err.file, "bad.py");
    }

    #[test]
    fn dynamic_receivers_keep_only_final_name() {
        let src = "def f():\n    get_store().flush()\n";
        let syn = PythonFrontend::new().parse_file("m.py", src).unwrap();
        let flush = syn.calls.iter().find(|c| c.path == ["flush"]).unwrap();
        assert!(flush.dynamic_receiver);
        // The inner call is also recorded.
        assert!(syn.calls.iter().any(|c| c.path == ["get_store"]));
    }
}
