//! Java frontend: extracts types, methods, imports, inheritance, and call
//! sites from tree-sitter syntax trees.

use super::{
    node_children, Capabilities, FileSyntax, InheritKind, LanguageFrontend, LineIndex,
    ParseFailure, RawCall, RawEntity, RawImport, RawInheritance,
};
use crate::graph::{CodeKind, Span, Visibility};
use tree_sitter::Node;

pub struct JavaFrontend;

impl JavaFrontend {
    pub fn new() -> Self {
        JavaFrontend
    }
}

impl Default for JavaFrontend {
    fn default() -> Self {
        Self::new()
    }
}

impl LanguageFrontend for JavaFrontend {
    fn language(&self) -> &'static str {
        "java"
    }

    fn extensions(&self) -> &'static [&'static str] {
        &["java"]
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
            .set_language(&tree_sitter_java::LANGUAGE.into())
            .expect("java grammar loads");
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
        let root = tree.root_node();
        let mut package = String::new();
        for child in node_children(root) {
            if child.kind() == "package_declaration" {
                for part in node_children(child) {
                    if matches!(part.kind(), "scoped_identifier" | "identifier") {
                        package = part
                            .utf8_text(source.as_bytes())
                            .unwrap_or("")
                            .to_string();
                    }
                }
            }
        }
        let mut walker = Walker {
            src: source,
            lines: LineIndex::new(source),
            out: FileSyntax {
                path: rel_path.to_string(),
                language: "java",
                module_qname: package,
                entities: Vec::new(),
                imports: Vec::new(),
                inherits: Vec::new(),
                calls: Vec::new(),
            },
        };
        for child in node_children(root) {
            match child.kind() {
                "import_declaration" => walker.handle_import(child),
                "class_declaration" | "interface_declaration" | "enum_declaration"
                | "record_declaration" => walker.handle_type(child, None),
                _ => {}
            }
        }
        Ok(walker.out)
    }
}

fn rank(v: Visibility) -> u8 {
    match v {
        Visibility::Public => 3,
        Visibility::Protected => 2,
        Visibility::Internal => 1,
        Visibility::Private => 0,
    }
}

/// The effective visibility of a member is capped by its enclosing type.
fn effective(own: Visibility, enclosing: Option<Visibility>) -> Visibility {
    match enclosing {
        Some(outer) if rank(outer) < rank(own) => outer,
        _ => own,
    }
}

struct Walker<'a> {
    src: &'a str,
    lines: LineIndex,
    out: FileSyntax,
}

impl<'a> Walker<'a> {
    fn text(&self, node: Node) -> &'a str {
        node.utf8_text(self.src.as_bytes()).unwrap_or("")
    }

    fn handle_import(&mut self, node: Node) {
        let line = node.start_position().row as u32 + 1;
        let mut target = String::new();
        let mut wildcard = false;
        for child in node_children(node) {
            match child.kind() {
                "scoped_identifier" | "identifier" => target = self.text(child).to_string(),
                "asterisk" => wildcard = true,
                _ => {}
            }
        }
        if target.is_empty() {
            return;
        }
        let binding = if wildcard {
            None
        } else {
            target
                .rsplit('.')
                .next()
                .map(|last| (last.to_string(), target.clone()))
        };
        self.out.imports.push(RawImport {
            module: target,
            binding,
            wildcard,
            line,
        });
    }

    fn modifiers_visibility(&self, node: Node, default: Visibility) -> Visibility {
        for child in node_children(node) {
            if child.kind() == "modifiers" {
                let text = self.text(child);
                if text.contains("public") {
                    return Visibility::Public;
                }
                if text.contains("private") {
                    return Visibility::Private;
                }
                if text.contains("protected") {
                    return Visibility::Protected;
                }
                return Visibility::Internal;
            }
        }
        default
    }

    /// Strip generics/scoping down to the dotted type name as written.
    fn type_name(&self, node: Node) -> Option<String> {
        match node.kind() {
            "type_identifier" | "scoped_type_identifier" | "identifier" | "scoped_identifier" => {
                Some(self.text(node).to_string())
            }
            "generic_type" => node_children(node)
                .into_iter()
                .find_map(|c| self.type_name(c)),
            _ => None,
        }
    }

    fn entity_for(
        &mut self,
        node: Node,
        kind: CodeKind,
        name: String,
        qname: String,
        parent_qname: Option<String>,
        visibility: Visibility,
        body: Option<Node>,
    ) {
        let start_row = node.start_position().row;
        let end_row = node.end_position().row;
        let source = self
            .lines
            .lines_slice(self.src, start_row, end_row)
            .to_string();
        let signature = match body {
            Some(b) => self.src[self.lines.line_start(start_row)..b.start_byte()]
                .trim_end()
                .to_string(),
            None => source.clone(),
        };
        self.out.entities.push(RawEntity {
            kind,
            name,
            qualified_name: qname,
            parent_qname,
            span: Span {
                start_line: start_row as u32 + 1,
                end_line: end_row as u32 + 1,
            },
            signature,
            source,
            visibility,
        });
    }

    fn handle_type(&mut self, node: Node, outer: Option<(&str, Visibility)>) {
        let Some(name_node) = node.child_by_field_name("name") else {
            return;
        };
        let name = self.text(name_node).to_string();
        let qname = match outer {
            Some((outer_qname, _)) => format!("{outer_qname}.{name}"),
            None if self.out.module_qname.is_empty() => name.clone(),
            None => format!("{}.{name}", self.out.module_qname),
        };
        let kind = if node.kind() == "interface_declaration" {
            CodeKind::Interface
        } else {
            CodeKind::Class
        };
        let own_vis = self.modifiers_visibility(node, Visibility::Internal);
        let visibility = effective(own_vis, outer.map(|(_, v)| v));
        let body = node.child_by_field_name("body");
        self.entity_for(
            node,
            kind,
            name.clone(),
            qname.clone(),
            outer.map(|(o, _)| o.to_string()),
            visibility,
            body,
        );

        let line = node.start_position().row as u32 + 1;
        if let Some(superclass) = node.child_by_field_name("superclass") {
            for child in node_children(superclass) {
                if let Some(parent_name) = self.type_name(child) {
                    self.out.inherits.push(RawInheritance {
                        child_qname: qname.clone(),
                        parent_name,
                        kind: InheritKind::Extends,
                        line,
                    });
                }
            }
        }
        if let Some(interfaces) = node.child_by_field_name("interfaces") {
            self.collect_type_list(interfaces, &qname, InheritKind::Implements, line);
        }
        // `interface X extends A, B` arrives as an extends_interfaces child.
        for child in node_children(node) {
            if child.kind() == "extends_interfaces" {
                self.collect_type_list(child, &qname, InheritKind::Extends, line);
            }
        }

        let Some(body) = body else { return };
        let in_interface = kind == CodeKind::Interface;
        for member in node_children(body) {
            match member.kind() {
                "method_declaration" | "constructor_declaration" => {
                    self.handle_method(member, &qname, visibility, in_interface);
                }
                "class_declaration" | "interface_declaration" | "enum_declaration"
                | "record_declaration" => {
                    self.handle_type(member, Some((&qname, visibility)));
                }
                // Field initializers and static blocks may contain calls,
                // attributed to the enclosing type.
                _ => self.collect_calls(member, Some(&qname), Some(&qname)),
            }
        }
    }

    fn handle_method(
        &mut self,
        node: Node,
        class_qname: &str,
        class_vis: Visibility,
        in_interface: bool,
    ) {
        let Some(name_node) = node.child_by_field_name("name") else {
            return;
        };
        let name = self.text(name_node).to_string();
        let qname = format!("{class_qname}.{name}");
        let default = if in_interface {
            Visibility::Public
        } else {
            Visibility::Internal
        };
        let own_vis = self.modifiers_visibility(node, default);
        let visibility = effective(own_vis, Some(class_vis));
        let body = node.child_by_field_name("body");
        self.entity_for(
            node,
            CodeKind::Method,
            name,
            qname.clone(),
            Some(class_qname.to_string()),
            visibility,
            body,
        );
        if let Some(body) = body {
            self.collect_calls(body, Some(&qname), Some(class_qname));
        }
    }

    fn collect_type_list(
        &mut self,
        node: Node,
        child_qname: &str,
        kind: InheritKind,
        line: u32,
    ) {
        for child in node_children(node) {
            if child.kind() == "type_list" {
                for ty in node_children(child) {
                    if let Some(parent_name) = self.type_name(ty) {
                        self.out.inherits.push(RawInheritance {
                            child_qname: child_qname.to_string(),
                            parent_name,
                            kind,
                            line,
                        });
                    }
                }
            } else if let Some(parent_name) = self.type_name(child) {
                self.out.inherits.push(RawInheritance {
                    child_qname: child_qname.to_string(),
                    parent_name,
                    kind,
                    line,
                });
            }
        }
    }

    /// Flatten a receiver expression into leading dotted names, if it is a
    /// plain name chain.
    fn flatten_receiver(&self, node: Node) -> Option<Vec<String>> {
        match node.kind() {
            "identifier" => Some(vec![self.text(node).to_string()]),
            "field_access" => {
                let object = node.child_by_field_name("object")?;
                let field = node.child_by_field_name("field")?;
                let mut path = self.flatten_receiver(object)?;
                path.push(self.text(field).to_string());
                Some(path)
            }
            _ => None,
        }
    }

    fn collect_calls(&mut self, node: Node, caller: Option<&str>, enclosing_class: Option<&str>) {
        match node.kind() {
            // Nested definitions are walked as entities, never as call bodies.
            "method_declaration" | "constructor_declaration" | "class_declaration"
            | "interface_declaration" | "enum_declaration" => return,
            "method_invocation" => {
                let line = node.start_position().row as u32 + 1;
                if let Some(name_node) = node.child_by_field_name("name") {
                    let name = self.text(name_node).to_string();
                    let (path, self_receiver, dynamic) =
                        match node.child_by_field_name("object") {
                            None => (vec![name], true, false),
                            Some(obj) if matches!(obj.kind(), "this" | "super") => {
                                (vec![name], true, false)
                            }
                            Some(obj) => match self.flatten_receiver(obj) {
                                Some(mut path) => {
                                    if path.first().map(String::as_str) == Some("this") {
                                        (vec![name], false, true)
                                    } else {
                                        path.push(name);
                                        (path, false, false)
                                    }
                                }
                                None => (vec![name], false, true),
                            },
                        };
                    self.out.calls.push(RawCall {
                        caller_qname: caller.map(str::to_string),
                        enclosing_class: enclosing_class.map(str::to_string),
                        path,
                        self_receiver,
                        dynamic_receiver: dynamic,
                        line,
                    });
                }
            }
            "object_creation_expression" => {
                if let Some(ty) = node.child_by_field_name("type") {
                    if let Some(type_name) = self.type_name(ty) {
                        self.out.calls.push(RawCall {
                            caller_qname: caller.map(str::to_string),
                            enclosing_class: enclosing_class.map(str::to_string),
                            path: type_name.split('.').map(str::to_string).collect(),
                            self_receiver: false,
                            dynamic_receiver: false,
                            line: node.start_position().row as u32 + 1,
                        });
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
        JavaFrontend::new()
            .parse_file("src/com/acme/App.java", src)
            .unwrap()
    }

    #[test]
    fn extracts_types_methods_and_visibility() {
        let src = "\
package com.acme;

import com.acme.store.Storage;

public class App {
    private Storage storage;

    public static void main(String[] args) {
        App app = new App();
        app.run();
    }

    private void run() {
        storage.put(\"k\", \"v\");
    }
}
";
        let syn = parse(src);
        assert_eq!(syn.module_qname, "com.acme");
        let entities: Vec<(&str, CodeKind, Visibility)> = syn
            .entities
            .iter()
            .map(|e| (e.qualified_name.as_str(), e.kind, e.visibility))
            .collect();
        assert_eq!(
            entities,
            vec![
                ("com.acme.App", CodeKind::Class, Visibility::Public),
                ("com.acme.App.main", CodeKind::Method, Visibility::Public),
                ("com.acme.App.run", CodeKind::Method, Visibility::Private),
            ]
        );
        let main = &syn.entities[1];
        assert_eq!(
            main.signature,
            "    public static void main(String[] args)"
        );
        assert!(main.source.starts_with(&main.signature));
        // new App() resolves as a constructor-style call to the class.
        assert!(syn
            .calls
            .iter()
            .any(|c| c.path == ["App"] && c.caller_qname.as_deref() == Some("com.acme.App.main")));
        assert!(syn
            .calls
            .iter()
            .any(|c| c.path == ["app", "run"] && !c.self_receiver));
        assert!(syn
            .calls
            .iter()
            .any(|c| c.path == ["storage", "put"]
                && c.caller_qname.as_deref() == Some("com.acme.App.run")));
    }

    #[test]
    fn imports_and_wildcards() {
        let src = "\
package com.acme;

import com.acme.store.Storage;
import com.acme.util.*;
import static com.acme.util.Maths.max;

public class A {}
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
                (
                    "com.acme.store.Storage".into(),
                    Some(("Storage".into(), "com.acme.store.Storage".into())),
                    false
                ),
                ("com.acme.util".into(), None, true),
                (
                    "com.acme.util.Maths.max".into(),
                    Some(("max".into(), "com.acme.util.Maths.max".into())),
                    false
                ),
            ]
        );
    }

    #[test]
    fn inheritance_covers_extends_and_implements() {
        let src = "\
package com.acme;

public interface Store extends AutoCloseable {
    void put(String key);
}

public class MemoryStore extends BaseStore implements Store, Iterable<String> {
    public void put(String key) {}
}
";
        let syn = parse(src);
        let inherits: Vec<(&str, &str, InheritKind)> = syn
            .inherits
            .iter()
            .map(|i| (i.child_qname.as_str(), i.parent_name.as_str(), i.kind))
            .collect();
        assert_eq!(
            inherits,
            vec![
                ("com.acme.Store", "AutoCloseable", InheritKind::Extends),
                ("com.acme.MemoryStore", "BaseStore", InheritKind::Extends),
                ("com.acme.MemoryStore", "Store", InheritKind::Implements),
                ("com.acme.MemoryStore", "Iterable", InheritKind::Implements),
            ]
        );
        // Interface methods are implicitly public; bodyless signature is the
        // whole declaration.
        let put = syn
            .entities
            .iter()
            .find(|e| e.qualified_name == "com.acme.Store.put")
            .unwrap();
        assert_eq!(put.visibility, Visibility::Public);
        assert_eq!(put.signature, "    void put(String key);");
    }

    #[test]
    fn package_private_and_nested_types() {
        let src = "\
package com.acme;

class Helper {
    public void visible() {}

    static class Inner {
        public void deep() {}
    }
}
";
        let syn = parse(src);
        let entities: Vec<(&str, Visibility)> = syn
            .entities
            .iter()
            .map(|e| (e.qualified_name.as_str(), e.visibility))
            .collect();
        // Members of a package-private class are capped at package-private.
        assert_eq!(
            entities,
            vec![
                ("com.acme.Helper", Visibility::Internal),
                ("com.acme.Helper.visible", Visibility::Internal),
                ("com.acme.Helper.Inner", Visibility::Internal),
                ("com.acme.Helper.Inner.deep", Visibility::Internal),
            ]
        );
        let inner = syn
            .entities
            .iter()
            .find(|e| e.qualified_name == "com.acme.Helper.Inner")
            .unwrap();
        assert_eq!(inner.parent_qname.as_deref(), Some("com.acme.Helper"));
    }

    #[test]
    fn this_and_bare_calls_are_self_receiver() {
        let src = "\
package com.acme;

public class A {
    public void a() {
        b();
        this.b();
        this.field.c();
    }

    private void b() {}
}
";
        let syn = parse(src);
        let calls: Vec<(Vec<&str>, bool, bool)> = syn
            .calls
            .iter()
            .map(|c| {
                (
                    c.path.iter().map(String::as_str).collect(),
                    c.self_receiver,
                    c.dynamic_receiver,
                )
            })
            .collect();
        assert_eq!(
            calls,
            vec![
                (vec!["b"], true, false),
                (vec!["b"], true, false),
                (vec!["c"], false, true),
            ]
        );
    }

    #[test]
    fn default_package_uses_plain_names() {
        let syn = JavaFrontend::new()
            .parse_file("Main.java", "public class Main { void go() {} }\n")
            .unwrap();
        assert_eq!(syn.module_qname, "");
        assert_eq!(syn.entities[0].qualified_name, "Main");
        assert_eq!(syn.entities[1].qualified_name, "Main.go");
    }

    #[test]
    fn syntax_errors_fail_the_file() {
        let err = JavaFrontend::new()
            .parse_file("Bad.java", "public class {{{\n")
            .unwrap_err();
        assert_eq!(err.file, "Bad.java");
    }
}
