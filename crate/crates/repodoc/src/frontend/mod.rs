//! Language frontends: per-language parsing into a normalized raw syntax
//! model that the extractor assembles into graph entities and edges.

mod java;
mod python;

pub use java::JavaFrontend;
pub use python::PythonFrontend;

use crate::graph::{CodeKind, Span, Visibility};

/// What a frontend can extract. All built-in frontends support everything;
/// partial frontends simply leave the unsupported vectors empty.
#[derive(Debug, Clone, Copy)]
pub struct Capabilities {
    pub entities: bool,
    pub imports: bool,
    pub inheritance: bool,
    pub calls: bool,
}

/// A file that could not be parsed; the file is skipped and the failure is
/// recorded in the extraction report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailure {
    pub file: String,
    pub message: String,
}

/// One extracted definition, before graph assembly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEntity {
    pub kind: CodeKind,
    pub name: String,
    pub qualified_name: String,
    /// Qualified name of the enclosing class/interface, if any.
    pub parent_qname: Option<String>,
    pub span: Span,
    pub signature: String,
    pub source: String,
    pub visibility: Visibility,
}

/// One import statement, normalized across languages.
///
/// `module` is the dotted target used to resolve the file-level imports edge
/// (a module path in Python, a class or package path in Java). `binding`
/// maps a local name to its fully dotted expansion for call/inheritance
/// resolution. Wildcard imports record the package prefix instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImport {
    pub module: String,
    pub binding: Option<(String, String)>,
    pub wildcard: bool,
    pub line: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InheritKind {
    Extends,
    Implements,
}

/// One `class C(Base)` / `class C extends B implements I` style link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawInheritance {
    pub child_qname: String,
    /// Parent type as written (possibly dotted), generics stripped.
    pub parent_name: String,
    pub kind: InheritKind,
    pub line: u32,
}

/// One call site. `path` is the dotted callee as written, already stripped
/// of `self.`/`this.` receivers (recorded via `self_receiver`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCall {
    /// Qualified name of the enclosing definition; `None` = module level.
    pub caller_qname: Option<String>,
    /// Qualified name of the enclosing class, for self-receiver resolution.
    pub enclosing_class: Option<String>,
    pub path: Vec<String>,
    pub self_receiver: bool,
    /// The leading receiver was an expression (not a plain name), so only
    /// same-file simple-name resolution applies.
    pub dynamic_receiver: bool,
    pub line: u32,
}

/// Parsed view of one source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileSyntax {
    pub path: String,
    pub language: &'static str,
    /// Dotted namespace that prefixes this file's entity names.
    pub module_qname: String,
    pub entities: Vec<RawEntity>,
    pub imports: Vec<RawImport>,
    pub inherits: Vec<RawInheritance>,
    pub calls: Vec<RawCall>,
}

/// A pluggable source-language parser.
pub trait LanguageFrontend: Send + Sync {
    fn language(&self) -> &'static str;
    /// File extensions (lowercase, no dot) this frontend claims.
    fn extensions(&self) -> &'static [&'static str];
    fn capabilities(&self) -> Capabilities;
    fn parse_file(&self, rel_path: &str, source: &str) -> Result<FileSyntax, ParseFailure>;
}

/// The built-in reference frontends.
pub fn builtin_frontends() -> Vec<Box<dyn LanguageFrontend>> {
    vec![Box::new(PythonFrontend::new()), Box::new(JavaFrontend::new())]
}

/// Byte offsets of line starts, for line-exact source slicing.
pub(crate) struct LineIndex {
    starts: Vec<usize>,
    len: usize,
}

impl LineIndex {
    pub fn new(text: &str) -> Self {
        let mut starts = vec![0usize];
        for (i, b) in text.bytes().enumerate() {
            if b == b'\n' {
                starts.push(i + 1);
            }
        }
        LineIndex {
            starts,
            len: text.len(),
        }
    }

    /// Byte offset where 0-based `row` starts.
    pub fn line_start(&self, row: usize) -> usize {
        *self.starts.get(row).unwrap_or(&self.len)
    }

    /// Byte offset just past the content of 0-based `row` (excludes `\n`/`\r`).
    pub fn line_content_end(&self, row: usize, text: &str) -> usize {
        let end = if row + 1 < self.starts.len() {
            self.starts[row + 1]
        } else {
            self.len
        };
        let mut end = end;
        let bytes = text.as_bytes();
        while end > self.line_start(row) && (bytes[end - 1] == b'\n' || bytes[end - 1] == b'\r') {
            end -= 1;
        }
        end
    }

    /// Full-line slice covering 0-based rows `r0..=r1`, without the trailing
    /// newline. This is exactly what "the file's lines start..=end" reads as.
    pub fn lines_slice<'a>(&self, text: &'a str, r0: usize, r1: usize) -> &'a str {
        &text[self.line_start(r0)..self.line_content_end(r1, text)]
    }
}

pub(crate) fn node_children<'a>(node: tree_sitter::Node<'a>) -> Vec<tree_sitter::Node<'a>> {
    let mut cursor = node.walk();
    node.children(&mut cursor).collect()
}
