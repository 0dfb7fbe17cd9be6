//! Prompt construction. Every prompt carries a human-readable task header
//! plus a machine-readable JSON payload between `<payload>` markers; the
//! deterministic mock renders its output purely from the payload, and real
//! backends get the same grounded facts.

use serde::{Deserialize, Serialize};

pub const PAYLOAD_BEGIN: &str = "<payload>";
pub const PAYLOAD_END: &str = "</payload>";

/// Echo contract: a prompt containing `[[ECHO:text]]` makes the mock return
/// `text` verbatim, for plumbing tests.
pub const ECHO_BEGIN: &str = "[[ECHO:";
pub const ECHO_END: &str = "]]";

/// Assemble the final prompt text for a task.
pub fn build_prompt(header: &str, payload: &impl Serialize) -> String {
    let json = serde_json::to_string_pretty(payload).expect("payload serializes");
    format!("{header}\n\n{PAYLOAD_BEGIN}\n{json}\n{PAYLOAD_END}\n")
}

/// Pull the JSON payload back out of a prompt.
pub fn extract_payload(prompt: &str) -> Option<&str> {
    let start = prompt.find(PAYLOAD_BEGIN)? + PAYLOAD_BEGIN.len();
    let end = prompt[start..].find(PAYLOAD_END)? + start;
    Some(prompt[start..end].trim())
}

/// One related entity listed in a component doc.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelatedDoc {
    pub qualified_name: String,
    /// Human-readable relation, e.g. "calls", "called by", "implements".
    pub relation: String,
    pub signature: String,
    /// Relative link target when the related entity has its own doc.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentDocPayload {
    pub task: String,
    pub name: String,
    pub qualified_name: String,
    pub kind: String,
    pub language: String,
    pub signature: String,
    pub module_name: String,
    pub module_doc_path: String,
    pub related: Vec<RelatedDoc>,
    pub concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberRef {
    pub name: String,
    pub qualified_name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmoduleRef {
    pub name: String,
    pub doc_path: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDocPayload {
    pub task: String,
    pub name: String,
    pub overview: String,
    pub members: Vec<MemberRef>,
    pub submodules: Vec<SubmoduleRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadmePayload {
    pub task: String,
    pub project_name: String,
    pub modules: Vec<SubmoduleRef>,
    pub entity_count: u64,
    pub file_count: u64,
    pub module_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterItem {
    pub qualified_name: String,
    pub file: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterEdge {
    pub src: String,
    pub dst: String,
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPayload {
    pub task: String,
    pub k: u32,
    pub items: Vec<ClusterItem>,
    pub edges: Vec<ClusterEdge>,
}

/// Expected response for a clustering prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterResponse {
    pub modules: Vec<ClusterGroup>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterGroup {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptPayload {
    pub task: String,
    pub qualified_name: String,
    pub name: String,
    pub kind: String,
    pub signature: String,
}

/// Expected response for a concept-extraction prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptResponse {
    pub concepts: Vec<ConceptItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptItem {
    pub label: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgePayload {
    pub task: String,
    pub question: String,
    pub chunks: Vec<String>,
}

pub fn component_doc_prompt(payload: &ComponentDocPayload) -> String {
    build_prompt(
        "Write API reference documentation in markdown for the code entity \
         described by the payload. Keep the stated sections and link targets.",
        payload,
    )
}

pub fn module_doc_prompt(payload: &ModuleDocPayload) -> String {
    build_prompt(
        "Write module-level documentation in markdown for the module \
         described by the payload, listing its members or submodules.",
        payload,
    )
}

pub fn readme_prompt(payload: &ReadmePayload) -> String {
    build_prompt(
        "Write a repository README in markdown summarizing the project and \
         its top-level modules as described by the payload.",
        payload,
    )
}

pub fn cluster_prompt(payload: &ClusterPayload) -> String {
    build_prompt(
        "Partition the listed code entities into at most k cohesive modules. \
         Respond with JSON: {\"modules\": [{\"name\": str, \"members\": \
         [qualified names]}]}.",
        payload,
    )
}

pub fn concept_prompt(payload: &ConceptPayload) -> String {
    build_prompt(
        "Identify the business concept this code entity embodies. Respond \
         with JSON: {\"concepts\": [{\"label\": str, \"description\": str}]}.",
        payload,
    )
}

pub fn judge_prompt(payload: &JudgePayload) -> String {
    build_prompt(
        "Answer strictly YES or NO: do the documentation chunks in the \
         payload contain the information asked by the question?",
        payload,
    )
}

/// Lower-cased, space-separated words from a code identifier:
/// `AuthManager` -> "auth manager", `format_name` -> "format name".
pub fn humanize_identifier(name: &str) -> String {
    let mut words: Vec<String> = Vec::new();
    for chunk in name.split(|c: char| c == '_' || c == '-' || c == '.') {
        if chunk.is_empty() {
            continue;
        }
        let mut current = String::new();
        let chars: Vec<char> = chunk.chars().collect();
        for (i, &ch) in chars.iter().enumerate() {
            let boundary = i > 0
                && ch.is_uppercase()
                && (chars[i - 1].is_lowercase()
                    || (i + 1 < chars.len() && chars[i + 1].is_lowercase()));
            if boundary && !current.is_empty() {
                words.push(current.to_lowercase());
                current = String::new();
            }
            current.push(ch);
        }
        if !current.is_empty() {
            words.push(current.to_lowercase());
        }
    }
    words.join(" ")
}
