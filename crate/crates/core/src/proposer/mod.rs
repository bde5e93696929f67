//! Candidate rubric generation.
//!
//! Seed rubrics come from preference pairs through a three-stage chain
//! (vision reasoning, rule extraction, global merge); refinement rubrics
//! come from hard pairs through two-stage failure diagnosis. Both paths run
//! through a pluggable text-generation backend and deduplicate against the
//! working set before anything enters the pool.

mod parse;
mod remote;

pub use parse::parse_statement_list;
pub use remote::RemoteProposer;

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{PreferencePair, Rubric, WeightedRubricSet};
use crate::util::parallel_map;

#[derive(Debug, Error)]
pub enum ProposerError {
    /// Backend failure after retries; carries whatever was produced before
    /// the failure.
    #[error("proposal failure ({partial} rubrics completed): {message}")]
    ProposalFailure { partial: usize, message: String },

    /// Seed generation produced nothing at all; the pipeline cannot start.
    #[error("seed generation extracted zero rubrics across all pairs")]
    EmptyPool,

    #[error("backend unavailable: {0}")]
    Unavailable(String),

    #[error("template: {0}")]
    Template(#[from] std::io::Error),

    #[error(transparent)]
    Type(#[from] crate::types::TypeError),
}

/// Which proposal path produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStage {
    Seed,
    Refinement,
}

/// Provenance of one proposal call: what came out of the backend and what
/// survived dedup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub source_pair_id: String,
    pub stage: ProposalStage,
    /// Failure diagnosis text (refinement stage only).
    pub diagnosis_text: Option<String>,
    /// Raw statements the backend extracted.
    pub extracted_rubrics: Vec<String>,
    /// Ids of extracted statements that entered the pool.
    pub accepted_ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProposerConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env: Option<String>,
    pub temperature: f64,
    /// Reasoning-token budget forwarded to backends that support one.
    pub thinking_budget: Option<u32>,
    pub max_rubrics_per_pair: usize,
    pub max_parallel_requests: usize,
    pub retry_budget: u32,
    pub request_timeout_secs: u64,
    /// Template file overrides for the four prompt roles; built-in defaults
    /// apply when absent.
    pub vision_reasoner_template: Option<String>,
    pub rule_extractor_template: Option<String>,
    pub rule_merger_template: Option<String>,
    pub failure_diagnosis_template: Option<String>,
    /// Cosine similarity above which a candidate counts as a duplicate when
    /// an embedding backend is configured.
    pub semantic_dedup_threshold: f64,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8001/v1/chat/completions".to_string(),
            model_name: "gemini-3-flash".to_string(),
            api_key_env: None,
            temperature: 0.1,
            thinking_budget: Some(1024),
            max_rubrics_per_pair: 3,
            max_parallel_requests: 4,
            retry_budget: 3,
            request_timeout_secs: 120,
            vision_reasoner_template: None,
            rule_extractor_template: None,
            rule_merger_template: None,
            failure_diagnosis_template: None,
            semantic_dedup_threshold: 0.9,
        }
    }
}

/// Text-generation backend behind the proposer. The two extraction contexts
/// share one method: the seed chain passes the vision rationale, the
/// refinement chain passes the failure diagnosis.
pub trait ProposerBackend: Send + Sync {
    /// Stage 1 of seed generation: explain the preference.
    fn vision_reason(&self, pair: &PreferencePair) -> Result<String, ProposerError>;

    /// Stage 2: extract rubric statements conditioned on `context`.
    fn extract_rules(
        &self,
        pair: &PreferencePair,
        context: &str,
    ) -> Result<Vec<String>, ProposerError>;

    /// Stage 3 of seed generation: merge the pooled statements.
    fn merge_rules(&self, statements: &[String]) -> Result<Vec<String>, ProposerError>;

    /// Stage 1 of refinement: diagnose what the retained set missed.
    fn diagnose_failure(
        &self,
        pair: &PreferencePair,
        retained: &WeightedRubricSet<f64>,
    ) -> Result<String, ProposerError>;
}

/// Optional embedding backend for semantic dedup.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Vec<f64>;
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Runtime dedup options. Exact dedup on normalized text always applies;
/// semantic dedup only when an embedder is injected.
#[derive(Clone, Default)]
pub struct DedupOptions {
    pub embedder: Option<Arc<dyn Embedder>>,
    pub semantic_threshold: f64,
}

/// Drops candidates that duplicate the existing pool or each other: exact
/// duplicates by normalized text always, near-duplicates by cosine
/// similarity when an embedder is configured. Returns the surviving
/// candidate texts in input order.
pub fn dedup(candidates: &[String], existing: &[Rubric], options: &DedupOptions) -> Vec<String> {
    let mut seen_ids: HashSet<String> = existing.iter().map(|r| r.id.clone()).collect();
    let mut kept_texts: Vec<String> = existing.iter().map(|r| r.text.clone()).collect();
    let mut accepted = Vec::new();

    for candidate in candidates {
        let id = match crate::types::rubric_id(candidate) {
            Ok(id) => id,
            Err(_) => {
                log::warn!("skipping rubric candidate that normalizes to empty");
                continue;
            }
        };
        if seen_ids.contains(&id) {
            continue;
        }
        if let Some(embedder) = &options.embedder {
            let embedding = embedder.embed(candidate);
            let near_duplicate = kept_texts.iter().any(|text| {
                cosine_similarity(&embedding, &embedder.embed(text)) > options.semantic_threshold
            });
            if near_duplicate {
                continue;
            }
        }
        seen_ids.insert(id);
        kept_texts.push(candidate.clone());
        accepted.push(candidate.clone());
    }
    accepted
}

/// Proposal orchestration over a backend.
pub struct Proposer {
    backend: Arc<dyn ProposerBackend>,
    max_rubrics_per_pair: usize,
    max_parallel: usize,
    dedup_options: DedupOptions,
}

impl Proposer {
    pub fn new(backend: Arc<dyn ProposerBackend>, config: &ProposerConfig) -> Self {
        Self {
            backend,
            max_rubrics_per_pair: config.max_rubrics_per_pair.max(1),
            max_parallel: config.max_parallel_requests.max(1),
            dedup_options: DedupOptions {
                embedder: None,
                semantic_threshold: config.semantic_dedup_threshold,
            },
        }
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.dedup_options.embedder = Some(embedder);
        self
    }

    /// Seed chain: per pair reason + extract, then one global merge over the
    /// pooled statements, then dedup into `origin = seed` rubrics.
    pub fn generate_seed_rubrics(
        &self,
        pairs: &[PreferencePair],
    ) -> Result<(Vec<Rubric>, Vec<ProposalRecord>), ProposerError> {
        let backend = &*self.backend;
        let cap = self.max_rubrics_per_pair;
        let (results, failure) = parallel_map(pairs, self.max_parallel, |pair| {
            let rationale = backend.vision_reason(pair).map_err(|e| e.to_string())?;
            let mut statements = backend
                .extract_rules(pair, &rationale)
                .map_err(|e| e.to_string())?;
            statements.truncate(cap);
            Ok::<_, String>(statements)
        });
        if let Some((_, message)) = failure {
            let partial = results.iter().filter(|r| r.is_some()).count();
            return Err(ProposerError::ProposalFailure { partial, message });
        }

        let mut records = Vec::with_capacity(pairs.len());
        let mut pooled: Vec<String> = Vec::new();
        for (pair, statements) in pairs.iter().zip(results.into_iter()) {
            let statements = statements.expect("no failure implies all results present");
            pooled.extend(statements.iter().cloned());
            records.push(ProposalRecord {
                source_pair_id: pair.id.clone(),
                stage: ProposalStage::Seed,
                diagnosis_text: None,
                extracted_rubrics: statements,
                accepted_ids: Vec::new(),
            });
        }
        if pooled.is_empty() {
            return Err(ProposerError::EmptyPool);
        }

        let merged = self.backend.merge_rules(&pooled)?;
        let surviving = dedup(&merged, &[], &self.dedup_options);
        if surviving.is_empty() {
            return Err(ProposerError::EmptyPool);
        }
        let rubrics: Vec<Rubric> = surviving
            .iter()
            .map(|text| Rubric::seed(text))
            .collect::<Result<_, _>>()?;

        // Seed provenance: a record claims each of its extracted statements
        // that survived into the final pool.
        let final_ids: HashSet<&str> = rubrics.iter().map(|r| r.id.as_str()).collect();
        for record in &mut records {
            record.accepted_ids = record
                .extracted_rubrics
                .iter()
                .filter_map(|text| crate::types::rubric_id(text).ok())
                .filter(|id| final_ids.contains(id.as_str()))
                .collect();
            record.accepted_ids.sort();
            record.accepted_ids.dedup();
        }
        Ok((rubrics, records))
    }

    /// Refinement over a batch of hard pairs: backend calls fan out up to
    /// the configured parallelism, then dedup runs serially in pair order —
    /// against the working set and against earlier acceptances in the same
    /// batch — so the merge point is deterministic.
    pub fn propose_batch(
        &self,
        pairs: &[PreferencePair],
        retained: &WeightedRubricSet<f64>,
        working_set: &[Rubric],
        round: u32,
    ) -> Result<(Vec<Rubric>, Vec<ProposalRecord>), ProposerError> {
        let backend = &*self.backend;
        let cap = self.max_rubrics_per_pair;
        let (results, failure) = parallel_map(pairs, self.max_parallel, |pair| {
            let diagnosis = backend
                .diagnose_failure(pair, retained)
                .map_err(|e| e.to_string())?;
            let mut extracted = backend
                .extract_rules(pair, &diagnosis)
                .map_err(|e| e.to_string())?;
            extracted.truncate(cap);
            Ok::<_, String>((diagnosis, extracted))
        });
        if let Some((_, message)) = failure {
            let partial = results.iter().filter(|r| r.is_some()).count();
            return Err(ProposerError::ProposalFailure { partial, message });
        }

        let mut pool: Vec<Rubric> = working_set.to_vec();
        let mut accepted_all = Vec::new();
        let mut records = Vec::with_capacity(pairs.len());
        for (pair, result) in pairs.iter().zip(results.into_iter()) {
            let (diagnosis, extracted) = result.expect("no failure implies all results present");
            let surviving = dedup(&extracted, &pool, &self.dedup_options);
            let rubrics: Vec<Rubric> = surviving
                .iter()
                .map(|text| Rubric::refined(text, round))
                .collect::<Result<_, _>>()?;
            records.push(ProposalRecord {
                source_pair_id: pair.id.clone(),
                stage: ProposalStage::Refinement,
                diagnosis_text: Some(diagnosis),
                extracted_rubrics: extracted,
                accepted_ids: rubrics.iter().map(|r| r.id.clone()).collect(),
            });
            pool.extend(rubrics.iter().cloned());
            accepted_all.extend(rubrics);
        }
        Ok((accepted_all, records))
    }

    /// Refinement chain for one hard pair: diagnose, extract, then return
    /// only rubrics novel with respect to the current working set.
    pub fn propose_from_hard_pair(
        &self,
        pair: &PreferencePair,
        retained: &WeightedRubricSet<f64>,
        working_set: &[Rubric],
        round: u32,
    ) -> Result<(Vec<Rubric>, ProposalRecord), ProposerError> {
        let diagnosis = self.backend.diagnose_failure(pair, retained)?;
        let mut extracted = self.backend.extract_rules(pair, &diagnosis)?;
        extracted.truncate(self.max_rubrics_per_pair);
        let surviving = dedup(&extracted, working_set, &self.dedup_options);
        let rubrics: Vec<Rubric> = surviving
            .iter()
            .map(|text| Rubric::refined(text, round))
            .collect::<Result<_, _>>()?;
        let record = ProposalRecord {
            source_pair_id: pair.id.clone(),
            stage: ProposalStage::Refinement,
            diagnosis_text: Some(diagnosis),
            extracted_rubrics: extracted,
            accepted_ids: rubrics.iter().map(|r| r.id.clone()).collect(),
        };
        Ok((rubrics, record))
    }
}
