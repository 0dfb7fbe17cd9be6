//! Documentation quality metrics: coverage, doc information, completeness
//! at K, and update recall, computed over a docs directory plus graph.

use crate::docgen::{
    component_inputs, doc_source_state, module_inputs, module_of_entity, plan_docs, readme_inputs,
};
use crate::extract::list_public_apis;
use crate::graph::{CodeKind, DocEntity, EntityId, GraphError, RepoKG, Visibility};
use crate::incremental::UpdateReport;
use crate::provider::{ops, prompts, CompletionRequest, Provider, ProviderError};
use crate::util::{slugify, stable_hash64};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

/// Metric failures.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("provider: {0}")]
    Provider(#[from] ProviderError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
}

/// Share of public APIs mentioned anywhere in the documentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total_apis: u64,
    pub covered_apis: u64,
    pub coverage_pct: f64,
    pub uncovered: Vec<String>,
    /// Public APIs sharing a simple name with another public API; the
    /// whole-word mention rule may over-count exactly these.
    pub name_collisions: u64,
}

/// Raw size and structure counts over a docs directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocInfoReport {
    pub words: u64,
    pub files: u64,
    pub cross_refs: u64,
    pub code_blocks: u64,
    pub diagrams: u64,
}

/// One question's outcome in the completeness check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionVerdict {
    pub question: String,
    pub answerable: bool,
    pub error: Option<String>,
}

/// Share of questions answerable from the top-K retrieved doc chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    #[serde(rename = "K")]
    pub k: u32,
    pub verdicts: Vec<QuestionVerdict>,
    pub answerable_pct: f64,
}

/// Share of update-requiring entities whose docs now reflect the code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecallReport {
    pub required: Vec<String>,
    pub correctly_updated: Vec<String>,
    pub recall_pct: f64,
    /// True when nothing required an update and 100.0 is by convention.
    pub vacuous: bool,
}

struct MdFile {
    path: String,
    text: String,
}

fn md_files(docs_dir: &Path) -> Result<Vec<MdFile>, std::io::Error> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(docs_dir).sort_by_file_name() {
        let entry = entry.map_err(std::io::Error::other)?;
        if !entry.file_type().is_file()
            || entry.path().extension().and_then(|e| e.to_str()) != Some("md")
        {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(docs_dir)
            .unwrap_or(entry.path())
            .to_string_lossy()
            .replace('\\', "/");
        out.push(MdFile {
            path: rel,
            text: std::fs::read_to_string(entry.path())?,
        });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Info string when the line opens or closes a fence; blockquote markers are
/// tolerated so a quoted fence still toggles exactly once.
fn fence_marker(line: &str) -> Option<&str> {
    let mut rest = line.trim_start();
    while let Some(stripped) = rest.strip_prefix('>') {
        rest = stripped.trim_start();
    }
    rest.strip_prefix("```").map(str::trim)
}

pub fn coverage(kg: &RepoKG, docs_dir: &Path) -> Result<CoverageReport, BenchError> {
    let files = md_files(docs_dir)?;
    let apis = list_public_apis(kg);
    let mut simple_names: BTreeMap<&str, u32> = BTreeMap::new();
    for id in &apis {
        if let Some(e) = kg.code_entity(id) {
            *simple_names.entry(e.name.as_str()).or_insert(0) += 1;
        }
    }
    let mut covered = 0u64;
    let mut uncovered = Vec::new();
    for id in &apis {
        let entity = kg.code_entity(id).expect("listed above");
        let pattern = format!(
            r"\b(?:{}|{})\b",
            regex::escape(&entity.qualified_name),
            regex::escape(&entity.name)
        );
        let re = regex::Regex::new(&pattern).expect("escaped pattern compiles");
        if files.iter().any(|f| re.is_match(&f.text)) {
            covered += 1;
        } else {
            uncovered.push(entity.qualified_name.clone());
        }
    }
    let total = apis.len() as u64;
    let name_collisions = apis
        .iter()
        .filter_map(|id| kg.code_entity(id))
        .filter(|e| simple_names.get(e.name.as_str()).copied().unwrap_or(0) > 1)
        .count() as u64;
    Ok(CoverageReport {
        total_apis: total,
        covered_apis: covered,
        coverage_pct: if total == 0 {
            0.0
        } else {
            100.0 * covered as f64 / total as f64
        },
        uncovered,
        name_collisions,
    })
}

pub fn doc_information(docs_dir: &Path) -> Result<DocInfoReport, BenchError> {
    let link = regex::Regex::new(r"\[[^\]]*\]\(([^)]+)\)").expect("static pattern");
    let mut report = DocInfoReport::default();
    for file in md_files(docs_dir)? {
        report.files += 1;
        let mut in_fence = false;
        for line in file.text.lines() {
            if let Some(info) = fence_marker(line) {
                if !in_fence {
                    report.code_blocks += 1;
                    if info.starts_with("mermaid") {
                        report.diagrams += 1;
                    }
                }
                in_fence = !in_fence;
                continue;
            }
            if in_fence {
                continue;
            }
            report.words += line.split_whitespace().count() as u64;
            for capture in link.captures_iter(line) {
                let target = &capture[1];
                let external = target.starts_with("http://")
                    || target.starts_with("https://")
                    || target.starts_with("mailto:")
                    || target.starts_with('#')
                    || target.starts_with('/');
                if !external {
                    report.cross_refs += 1;
                }
            }
        }
    }
    Ok(report)
}

/// One chunk per markdown heading section, in file-then-position order.
fn heading_chunks(files: &[MdFile]) -> Vec<String> {
    let mut chunks = Vec::new();
    for file in files {
        let mut current = String::new();
        let mut in_fence = false;
        for line in file.text.lines() {
            if fence_marker(line).is_some() {
                in_fence = !in_fence;
            } else if !in_fence && line.starts_with('#') && !current.trim().is_empty() {
                chunks.push(std::mem::take(&mut current));
            }
            current.push_str(line);
            current.push('\n');
        }
        if !current.trim().is_empty() {
            chunks.push(current);
        }
    }
    chunks
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn completeness_at_k(
    questions: &[String],
    docs_dir: &Path,
    k: u32,
    provider: &dyn Provider,
) -> Result<CompletenessReport, BenchError> {
    let files = md_files(docs_dir)?;
    let chunks = heading_chunks(&files);
    let chunk_embeddings = if chunks.is_empty() {
        Vec::new()
    } else {
        provider.embed(&chunks)?
    };
    let mut verdicts = Vec::new();
    for question in questions {
        let verdict = answer_one(question, &chunks, &chunk_embeddings, k, provider);
        verdicts.push(match verdict {
            Ok(answerable) => QuestionVerdict {
                question: question.clone(),
                answerable,
                error: None,
            },
            Err(e) => QuestionVerdict {
                question: question.clone(),
                answerable: false,
                error: Some(e.to_string()),
            },
        });
    }
    let valid = verdicts.iter().filter(|v| v.error.is_none()).count();
    let yes = verdicts.iter().filter(|v| v.answerable).count();
    Ok(CompletenessReport {
        k,
        verdicts,
        answerable_pct: if valid == 0 {
            0.0
        } else {
            100.0 * yes as f64 / valid as f64
        },
    })
}

fn answer_one(
    question: &str,
    chunks: &[String],
    chunk_embeddings: &[Vec<f32>],
    k: u32,
    provider: &dyn Provider,
) -> Result<bool, ProviderError> {
    let question_embedding = provider
        .embed(std::slice::from_ref(&question.to_string()))?
        .into_iter()
        .next()
        .unwrap_or_default();
    let mut ranked: Vec<(usize, f64)> = chunk_embeddings
        .iter()
        .map(|e| cosine(&question_embedding, e))
        .enumerate()
        .collect();
    ranked.sort_by(|(ia, sa), (ib, sb)| {
        sb.partial_cmp(sa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ia.cmp(ib))
    });
    let top: Vec<String> = ranked
        .iter()
        .take(k as usize)
        .map(|(i, _)| chunks[*i].clone())
        .collect();
    let payload = prompts::JudgePayload {
        task: "judge".to_string(),
        question: question.to_string(),
        chunks: top,
    };
    let request = CompletionRequest::new(prompts::judge_prompt(&payload));
    let completion = provider.complete(ops::JUDGE, &request)?;
    Ok(completion.text.trim().to_ascii_uppercase().starts_with("YES"))
}

pub fn update_recall(
    update_report: &UpdateReport,
    kg: &RepoKG,
    docs_dir: &Path,
) -> Result<UpdateRecallReport, BenchError> {
    let tree = crate::cluster::ModuleTree::from_graph(kg)?;
    let plan = plan_docs(kg, &tree);
    let project_name = tree.root_node().name.clone();
    let signature_changed: BTreeSet<&str> = update_report
        .changed_entities
        .iter()
        .filter(|c| c.change == "signature_modified")
        .map(|c| c.entity.as_str())
        .collect();

    let mut required: BTreeSet<String> = update_report
        .changed_entities
        .iter()
        .filter(|c| matches!(c.change.as_str(), "added" | "removed" | "signature_modified"))
        .map(|c| c.entity.clone())
        .collect();
    for raw in &update_report.affected_entities {
        let id = EntityId::from_raw(raw);
        if let Some(e) = kg.code_entity(&id) {
            if e.visibility == Visibility::Public && e.kind != CodeKind::ModuleFile {
                required.insert(raw.clone());
            }
        }
    }
    required.retain(|raw| !raw.starts_with("module_file:"));

    let module_level_regen = update_report
        .regenerated
        .iter()
        .any(|p| p == "README.md" || p.starts_with("modules/"));

    let mut correct = Vec::new();
    for raw in &required {
        let id = EntityId::from_raw(raw);
        let ok = match kg.code_entity(&id) {
            None => {
                let old_api = format!("api/{}.md", slugify(id.name_part()));
                !docs_dir.join(&old_api).exists() && module_level_regen
            }
            Some(entity) if entity.visibility == Visibility::Public => {
                let current = plan
                    .component_paths
                    .get(&id)
                    .and_then(|path| {
                        let inputs = component_inputs(kg, &tree, &plan, &id)?;
                        Some((path.clone(), doc_source_state(&inputs)))
                    });
                match current {
                    Some((path, state)) => {
                        let text = std::fs::read_to_string(docs_dir.join(&path)).ok();
                        doc_is_current(kg, &path, state, text.as_deref())
                            && (!signature_changed.contains(raw.as_str())
                                || text
                                    .as_deref()
                                    .is_some_and(|t| t.contains(entity.signature.trim())))
                    }
                    None => false,
                }
            }
            Some(_) => {
                // Private entities are reflected through their module's doc.
                let module =
                    module_of_entity(kg, &tree, &id).unwrap_or_else(|| tree.root.clone());
                let current = if module == tree.root {
                    Some((
                        plan.readme_path.clone(),
                        doc_source_state(&readme_inputs(kg, &tree, &plan, &project_name)),
                    ))
                } else {
                    plan.module_paths.get(&module).and_then(|path| {
                        let inputs = module_inputs(kg, &tree, &plan, &module)?;
                        Some((path.clone(), doc_source_state(&inputs)))
                    })
                };
                match current {
                    Some((path, state)) => {
                        let text = std::fs::read_to_string(docs_dir.join(&path)).ok();
                        doc_is_current(kg, &path, state, text.as_deref())
                    }
                    None => false,
                }
            }
        };
        if ok {
            correct.push(raw.clone());
        }
    }

    let vacuous = required.is_empty();
    Ok(UpdateRecallReport {
        recall_pct: if vacuous {
            100.0
        } else {
            100.0 * correct.len() as f64 / required.len() as f64
        },
        required: required.into_iter().collect(),
        correctly_updated: correct,
        vacuous,
    })
}

/// A doc reflects the code iff its recorded source state matches the freshly
/// recomputed one and the bytes on disk match the recorded content hash.
fn doc_is_current(kg: &RepoKG, path: &str, current_state: u64, text: Option<&str>) -> bool {
    let Some(doc) = kg
        .entity(&DocEntity::make_id(path))
        .and_then(|e| e.as_doc())
    else {
        return false;
    };
    doc.source_state_hash == current_state
        && text.is_some_and(|t| stable_hash64(t.as_bytes()) == doc.content_hash)
}
