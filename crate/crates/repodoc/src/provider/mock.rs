//! Deterministic mock provider: renders schema-valid markdown and JSON
//! purely from the prompt payload, so every pipeline run is reproducible
//! byte for byte. Supports failure injection for retry/registry tests.

use super::prompts::{
    self, ClusterGroup, ClusterPayload, ClusterResponse, ComponentDocPayload, ConceptItem,
    ConceptPayload, ConceptResponse, JudgePayload, ModuleDocPayload, ReadmePayload,
};
use super::{
    counted_tokens, ops, Completion, CompletionRequest, LedgerCell, Provider, ProviderError,
    ProviderErrorKind, UsageLedger,
};
use crate::util::stable_hash64;
use std::collections::BTreeMap;
use std::sync::Mutex;

pub const EMBED_DIMENSIONS: usize = 256;

struct FailRule {
    op_contains: String,
    kind: ProviderErrorKind,
    /// `None` = always fail; `Some(n)` = fail the next n matching calls.
    remaining: Option<u32>,
}

/// Deterministic offline provider.
pub struct MockProvider {
    ledger: LedgerCell,
    fail_rules: Mutex<Vec<FailRule>>,
}

impl MockProvider {
    pub fn new() -> Self {
        MockProvider {
            ledger: LedgerCell::new(),
            fail_rules: Mutex::new(Vec::new()),
        }
    }

    /// Fail the next `times` calls whose operation contains `op`.
    pub fn fail_times(&self, op: &str, kind: ProviderErrorKind, times: u32) {
        self.fail_rules.lock().expect("rules lock").push(FailRule {
            op_contains: op.to_string(),
            kind,
            remaining: Some(times),
        });
    }

    /// Fail every call whose operation contains `op`.
    pub fn fail_always(&self, op: &str, kind: ProviderErrorKind) {
        self.fail_rules.lock().expect("rules lock").push(FailRule {
            op_contains: op.to_string(),
            kind,
            remaining: None,
        });
    }

    fn check_failure(&self, operation: &str) -> Result<(), ProviderError> {
        let mut rules = self.fail_rules.lock().expect("rules lock");
        for rule in rules.iter_mut() {
            if !operation.contains(&rule.op_contains) {
                continue;
            }
            match &mut rule.remaining {
                None => {
                    return Err(ProviderError::new(rule.kind, "injected failure"));
                }
                Some(0) => {}
                Some(n) => {
                    *n -= 1;
                    return Err(ProviderError::new(rule.kind, "injected failure"));
                }
            }
        }
        Ok(())
    }

    fn render(&self, operation: &str, prompt: &str) -> Result<String, ProviderError> {
        // Echo contract takes precedence over everything else.
        if let Some(start) = prompt.find(prompts::ECHO_BEGIN) {
            let rest = &prompt[start + prompts::ECHO_BEGIN.len()..];
            if let Some(end) = rest.find(prompts::ECHO_END) {
                return Ok(rest[..end].to_string());
            }
        }
        let payload = prompts::extract_payload(prompt).ok_or_else(|| {
            ProviderError::new(ProviderErrorKind::Precondition, "prompt has no payload")
        })?;
        let malformed =
            |e: serde_json::Error| ProviderError::new(ProviderErrorKind::Precondition, e.to_string());
        match operation {
            ops::COMPONENT_DOC => {
                let p: ComponentDocPayload = serde_json::from_str(payload).map_err(malformed)?;
                Ok(render_component_doc(&p))
            }
            ops::MODULE_DOC => {
                let p: ModuleDocPayload = serde_json::from_str(payload).map_err(malformed)?;
                Ok(render_module_doc(&p))
            }
            ops::README => {
                let p: ReadmePayload = serde_json::from_str(payload).map_err(malformed)?;
                Ok(render_readme(&p))
            }
            ops::CLUSTER => {
                let p: ClusterPayload = serde_json::from_str(payload).map_err(malformed)?;
                Ok(serde_json::to_string_pretty(&cluster_by_file(&p)).expect("serializes"))
            }
            ops::CONCEPT => {
                let p: ConceptPayload = serde_json::from_str(payload).map_err(malformed)?;
                let response = ConceptResponse {
                    concepts: vec![ConceptItem {
                        label: prompts::humanize_identifier(&p.name),
                        description: format!("Core responsibility of `{}`.", p.qualified_name),
                    }],
                };
                Ok(serde_json::to_string_pretty(&response).expect("serializes"))
            }
            ops::JUDGE => {
                let p: JudgePayload = serde_json::from_str(payload).map_err(malformed)?;
                Ok(judge(&p))
            }
            other => Err(ProviderError::new(
                ProviderErrorKind::Precondition,
                format!("unknown operation {other}"),
            )),
        }
    }
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn complete(
        &self,
        operation: &str,
        request: &CompletionRequest,
    ) -> Result<Completion, ProviderError> {
        request.validate()?;
        self.check_failure(operation)?;
        let text = self.render(operation, &request.prompt)?;
        let (prompt_tokens, completion_tokens) = counted_tokens(&request.prompt, &text);
        self.ledger
            .record(operation, prompt_tokens, completion_tokens, 0);
        Ok(Completion {
            text,
            prompt_tokens,
            completion_tokens,
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        self.check_failure(ops::EMBED)?;
        let vectors: Vec<Vec<f32>> = texts.iter().map(|t| embed_text(t)).collect();
        let tokens: u64 = texts.iter().map(|t| crate::util::whitespace_tokens(t)).sum();
        self.ledger.record(ops::EMBED, tokens, 0, 0);
        Ok(vectors)
    }

    fn usage(&self) -> UsageLedger {
        self.ledger.snapshot()
    }
}

/// Hashed bag-of-tokens embedding, unit-normalized. Deterministic across
/// runs and platforms.
pub fn embed_text(text: &str) -> Vec<f32> {
    let mut v = vec![0f32; EMBED_DIMENSIONS];
    for token in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let idx = (stable_hash64(token.to_lowercase().as_bytes()) % EMBED_DIMENSIONS as u64)
            as usize;
        v[idx] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Parameter names parsed out of a signature's first parenthesized list.
/// Best-effort and deterministic; used only for the mock's Parameters table.
fn signature_params(signature: &str, language: &str) -> Vec<String> {
    let Some(open) = signature.find('(') else {
        return Vec::new();
    };
    let mut depth = 0usize;
    let mut end = None;
    for (i, ch) in signature[open..].char_indices() {
        match ch {
            '(' | '[' | '<' => depth += 1,
            ')' | ']' | '>' if depth > 0 => {
                depth -= 1;
                if depth == 0 && ch == ')' {
                    end = Some(open + i);
                    break;
                }
            }
            _ => {}
        }
    }
    let Some(end) = end else { return Vec::new() };
    let inner = &signature[open + 1..end];
    let mut params = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for ch in inner.chars() {
        match ch {
            '(' | '[' | '<' => {
                depth += 1;
                current.push(ch);
            }
            ')' | ']' | '>' => {
                depth = depth.saturating_sub(1);
                current.push(ch);
            }
            ',' if depth == 0 => {
                params.push(current.clone());
                current.clear();
            }
            _ => current.push(ch),
        }
    }
    if !current.trim().is_empty() {
        params.push(current);
    }
    params
        .into_iter()
        .filter_map(|raw| {
            let raw = raw.trim();
            if raw.is_empty() {
                return None;
            }
            let name = if language == "java" {
                raw.rsplit([' ', '\t']).next().unwrap_or(raw).to_string()
            } else {
                let head = raw.split([':', '=']).next().unwrap_or(raw).trim();
                head.trim_start_matches('*').to_string()
            };
            let name = name.trim_start_matches("...").trim().to_string();
            if name.is_empty() || name == "self" || name == "cls" {
                None
            } else {
                Some(name)
            }
        })
        .collect()
}

fn title_case(kind: &str) -> String {
    let mut chars = kind.replace('_', " ").chars().collect::<Vec<_>>();
    if let Some(first) = chars.first_mut() {
        *first = first.to_ascii_uppercase();
    }
    chars.into_iter().collect()
}

fn render_component_doc(p: &ComponentDocPayload) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {}\n\n", p.name));
    out.push_str(&format!(
        "Module: [{}]({})\n\n",
        p.module_name, p.module_doc_path
    ));
    out.push_str("## Signature\n\n");
    out.push_str(&format!("```{}\n{}\n```\n\n", p.language, p.signature));
    out.push_str("## Description\n\n");
    let mut description = format!("{} `{}`", title_case(&p.kind), p.qualified_name);
    if p.concepts.is_empty() {
        description.push('.');
    } else {
        description.push_str(&format!(
            ", which embodies the concept{} {}.",
            if p.concepts.len() > 1 { "s" } else { "" },
            p.concepts
                .iter()
                .map(|c| format!("*{c}*"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    out.push_str(&description);
    out.push_str("\n\n");
    out.push_str("## Parameters\n\n");
    let params = signature_params(&p.signature, &p.language);
    if params.is_empty() {
        out.push_str("_None._\n\n");
    } else {
        out.push_str("| Name | Description |\n| --- | --- |\n");
        for param in params {
            out.push_str(&format!("| `{param}` | Parameter of `{}`. |\n", p.name));
        }
        out.push('\n');
    }
    out.push_str("## Related\n\n");
    if p.related.is_empty() {
        out.push_str("_None._\n");
    } else {
        for rel in &p.related {
            match &rel.doc_path {
                Some(path) => out.push_str(&format!(
                    "- [`{}`]({}) — {}\n",
                    rel.qualified_name, path, rel.relation
                )),
                None => out.push_str(&format!("- `{}` — {}\n", rel.qualified_name, rel.relation)),
            }
        }
    }
    out
}

fn render_module_doc(p: &ModuleDocPayload) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {}\n\n", p.name));
    out.push_str("## Overview\n\n");
    out.push_str(&p.overview);
    out.push_str("\n\n");
    if !p.submodules.is_empty() {
        out.push_str("## Submodules\n\n");
        for sub in &p.submodules {
            out.push_str(&format!("- [{}]({}) — {}\n", sub.name, sub.doc_path, sub.summary));
        }
        out.push('\n');
    }
    if !p.members.is_empty() {
        out.push_str("## Members\n\n");
        for member in &p.members {
            match &member.doc_path {
                Some(path) => out.push_str(&format!(
                    "- [`{}`]({}) — {}\n",
                    member.name, path, member.kind
                )),
                None => out.push_str(&format!("- `{}` — {}\n", member.name, member.kind)),
            }
        }
        out.push('\n');
    }
    out.trim_end().to_string() + "\n"
}

fn render_readme(p: &ReadmePayload) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {}\n\n", p.project_name));
    out.push_str(&format!(
        "{} contains {} code entities across {} files, organized into {} modules.\n\n",
        p.project_name, p.entity_count, p.file_count, p.module_count
    ));
    out.push_str("## Modules\n\n");
    out.push_str("| Module | Summary |\n| --- | --- |\n");
    for module in &p.modules {
        out.push_str(&format!(
            "| [{}]({}) | {} |\n",
            module.name, module.doc_path, module.summary
        ));
    }
    out
}

/// The mock's clustering strategy: group items by source file (path order),
/// merging trailing groups into the k-th when there are more files than k.
fn cluster_by_file(p: &ClusterPayload) -> ClusterResponse {
    let mut by_file: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for item in &p.items {
        by_file
            .entry(item.file.as_str())
            .or_default()
            .push(item.qualified_name.as_str());
    }
    let k = p.k.max(1) as usize;
    let mut groups: Vec<ClusterGroup> = Vec::new();
    for (file, mut members) in by_file {
        members.sort();
        let name = file
            .rsplit('/')
            .next()
            .unwrap_or(file)
            .rsplit_once('.')
            .map(|(stem, _)| stem.to_string())
            .unwrap_or_else(|| file.to_string());
        groups.push(ClusterGroup {
            name,
            members: members.into_iter().map(str::to_string).collect(),
        });
    }
    while groups.len() > k {
        let extra = groups.pop().expect("len > k >= 1");
        let last = groups.last_mut().expect("non-empty");
        last.members.extend(extra.members);
        last.members.sort();
    }
    ClusterResponse { modules: groups }
}

/// YES iff any chunk contains the question's first double-quoted phrase
/// (or, with no quoted phrase, the question text itself).
fn judge(p: &JudgePayload) -> String {
    let needle = p
        .question
        .split('"')
        .nth(1)
        .unwrap_or(p.question.trim())
        .to_string();
    if !needle.is_empty() && p.chunks.iter().any(|c| c.contains(&needle)) {
        "YES".to_string()
    } else {
        "NO".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::prompts::*;

    fn complete(op: &str, prompt: String) -> Completion {
        MockProvider::new()
            .complete(op, &CompletionRequest::new(prompt))
            .unwrap()
    }

    #[test]
    fn echo_contract_returns_marked_text() {
        let c = complete(ops::COMPONENT_DOC, "[[ECHO:exact output]] rest ignored".into());
        assert_eq!(c.text, "exact output");
    }

    #[test]
    fn component_doc_has_mandatory_sections_and_links() {
        let payload = ComponentDocPayload {
            task: "component_doc".into(),
            name: "helper".into(),
            qualified_name: "util.helper".into(),
            kind: "function".into(),
            language: "python".into(),
            signature: "def helper(value):".into(),
            module_name: "util".into(),
            module_doc_path: "../modules/util.md".into(),
            related: vec![
                RelatedDoc {
                    qualified_name: "util._scrub".into(),
                    relation: "calls".into(),
                    signature: "def _scrub(value):".into(),
                    doc_path: None,
                },
                RelatedDoc {
                    qualified_name: "app.main".into(),
                    relation: "called by".into(),
                    signature: "def main():".into(),
                    doc_path: Some("app-main.md".into()),
                },
            ],
            concepts: vec!["helper".into()],
        };
        let doc = complete(ops::COMPONENT_DOC, component_doc_prompt(&payload)).text;
        assert!(doc.starts_with("# helper\n"));
        for section in ["## Signature", "## Description", "## Parameters", "## Related"] {
            assert!(doc.contains(section), "missing {section}");
        }
        assert!(doc.contains("Module: [util](../modules/util.md)"));
        assert!(doc.contains("```python\ndef helper(value):\n```"));
        assert!(doc.contains("| `value` | Parameter of `helper`. |"));
        // Two related entries -> exactly two list lines under Related.
        assert!(doc.contains("- `util._scrub` — calls"));
        assert!(doc.contains("- [`app.main`](app-main.md) — called by"));
    }

    #[test]
    fn module_doc_lists_members_and_submodules() {
        let payload = ModuleDocPayload {
            task: "module_doc".into(),
            name: "util".into(),
            overview: "Module util groups 2 members from 1 file.".into(),
            members: vec![
                MemberRef {
                    name: "helper".into(),
                    qualified_name: "util.helper".into(),
                    kind: "function".into(),
                    doc_path: Some("../api/util-helper.md".into()),
                },
                MemberRef {
                    name: "_scrub".into(),
                    qualified_name: "util._scrub".into(),
                    kind: "function".into(),
                    doc_path: None,
                },
            ],
            submodules: vec![],
        };
        let doc = complete(ops::MODULE_DOC, module_doc_prompt(&payload)).text;
        assert!(doc.starts_with("# util\n"));
        assert!(doc.contains("## Overview"));
        assert!(doc.contains("## Members"));
        assert!(doc.contains("- [`helper`](../api/util-helper.md) — function"));
        assert!(doc.contains("- `_scrub` — function"));
    }

    #[test]
    fn readme_renders_module_table() {
        let payload = ReadmePayload {
            task: "readme".into(),
            project_name: "fixture-a".into(),
            modules: vec![SubmoduleRef {
                name: "util".into(),
                doc_path: "modules/util.md".into(),
                summary: "Utility helpers.".into(),
            }],
            entity_count: 10,
            file_count: 3,
            module_count: 4,
        };
        let doc = complete(ops::README, readme_prompt(&payload)).text;
        assert!(doc.starts_with("# fixture-a\n"));
        assert!(doc.contains("10 code entities across 3 files"));
        assert!(doc.contains("| [util](modules/util.md) | Utility helpers. |"));
    }

    #[test]
    fn clustering_groups_by_file_and_respects_k() {
        let items = |names: &[(&str, &str)]| {
            names
                .iter()
                .map(|(q, f)| ClusterItem {
                    qualified_name: q.to_string(),
                    file: f.to_string(),
                    kind: "function".into(),
                })
                .collect::<Vec<_>>()
        };
        let payload = ClusterPayload {
            task: "cluster".into(),
            k: 2,
            items: items(&[
                ("a.one", "a.py"),
                ("b.two", "b.py"),
                ("c.three", "c.py"),
                ("a.zero", "a.py"),
            ]),
            edges: vec![],
        };
        let text = complete(ops::CLUSTER, cluster_prompt(&payload)).text;
        let response: ClusterResponse = serde_json::from_str(&text).unwrap();
        assert_eq!(response.modules.len(), 2);
        assert_eq!(response.modules[0].name, "a");
        assert_eq!(response.modules[0].members, vec!["a.one", "a.zero"]);
        // c.py merged into the b group to respect k=2.
        assert_eq!(response.modules[1].members, vec!["b.two", "c.three"]);
    }

    #[test]
    fn concept_extraction_humanizes_names() {
        let payload = ConceptPayload {
            task: "concept".into(),
            qualified_name: "app.AuthManager".into(),
            name: "AuthManager".into(),
            kind: "class".into(),
            signature: "class AuthManager:".into(),
        };
        let text = complete(ops::CONCEPT, concept_prompt(&payload)).text;
        let response: ConceptResponse = serde_json::from_str(&text).unwrap();
        assert_eq!(response.concepts.len(), 1);
        assert_eq!(response.concepts[0].label, "auth manager");
    }

    #[test]
    fn judge_answers_yes_iff_quoted_phrase_present() {
        let ask = |question: &str, chunks: &[&str]| {
            let payload = JudgePayload {
                task: "judge".into(),
                question: question.to_string(),
                chunks: chunks.iter().map(|c| c.to_string()).collect(),
            };
            complete(ops::JUDGE, judge_prompt(&payload)).text
        };
        assert_eq!(
            ask("Does the doc mention \"rate limiting\"?", &["We apply rate limiting here."]),
            "YES"
        );
        assert_eq!(
            ask("Does the doc mention \"rate limiting\"?", &["Nothing relevant."]),
            "NO"
        );
    }

    #[test]
    fn failure_injection_is_consumed_per_call() {
        let mock = MockProvider::new();
        mock.fail_times(ops::CONCEPT, ProviderErrorKind::RateLimit, 2);
        let payload = ConceptPayload {
            task: "concept".into(),
            qualified_name: "m.f".into(),
            name: "f".into(),
            kind: "function".into(),
            signature: "def f():".into(),
        };
        let request = CompletionRequest::new(concept_prompt(&payload));
        assert!(mock.complete(ops::CONCEPT, &request).is_err());
        assert!(mock.complete(ops::CONCEPT, &request).is_err());
        assert!(mock.complete(ops::CONCEPT, &request).is_ok());
        // Failed calls are not recorded in the ledger.
        assert_eq!(mock.usage().calls(), 1);
    }

    #[test]
    fn embeddings_are_unit_normalized_and_deterministic() {
        let a = embed_text("the auth manager handles tokens");
        let b = embed_text("the auth manager handles tokens");
        assert_eq!(a, b);
        let norm: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
        assert_eq!(a.len(), EMBED_DIMENSIONS);
        let zero = embed_text("  ");
        assert!(zero.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn identical_texts_have_cosine_one_different_texts_less() {
        let a = embed_text("parse the configuration file");
        let b = embed_text("parse the configuration file");
        let c = embed_text("render markdown documentation");
        let dot = |x: &[f32], y: &[f32]| -> f32 { x.iter().zip(y).map(|(a, b)| a * b).sum() };
        assert!((dot(&a, &b) - 1.0).abs() < 1e-5);
        assert!(dot(&a, &c) < 0.9);
    }

    #[test]
    fn usage_ledger_counts_whitespace_tokens() {
        let mock = MockProvider::new();
        let c = mock
            .complete(
                ops::COMPONENT_DOC,
                &CompletionRequest::new("[[ECHO:one two three]]"),
            )
            .unwrap();
        assert_eq!(c.completion_tokens, 3);
        let ledger = mock.usage();
        assert_eq!(ledger.calls(), 1);
        assert_eq!(ledger.records[0].operation, ops::COMPONENT_DOC);
        assert_eq!(ledger.records[0].completion_tokens, 3);
    }

    #[test]
    fn java_signature_params_use_last_word() {
        let params = signature_params("public void put(String key, int count)", "java");
        assert_eq!(params, vec!["key", "count"]);
        let py = signature_params("def f(x, y=1, *args, **kw):", "python");
        assert_eq!(py, vec!["x", "y", "args", "kw"]);
    }
}
