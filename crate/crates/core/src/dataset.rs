//! Demonstration export along the look-ahead expert trajectory, and the
//! matching audit.
//!
//! Files are JSON Lines: one compact JSON object per line, `\n` terminated,
//! keys in the order shown. SFT records look like
//!
//! ```text
//! {"prompt":"SLOT 101\n...","completion":"BS 1: NOOP\nBS 2: SWAP slot=3 out=17 in=42","metadata":{"seed":1,"slot":101,"instance_hash":"..."}}
//! ```
//!
//! GRPO state records carry `expert` in place of `completion` plus a
//! `peek_hash` of the frozen look-ahead window. A run that exhausts the
//! trace before the requested size ends with a marker line
//! `{"truncated":{"requested":N,"emitted":K}}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::interface::{decode_prompt, encode, parse, serialize, CompletionText, PromptText, SlotObservation};
use crate::model::{apply, BsAction, JointAction, RequestSlot};
use crate::policies::oracle_joint;
use crate::traffic::{warm_up, Instance};

/// Expert used for generation: look-ahead horizon and discount, warm-up length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertConfig {
    pub horizon: usize,
    pub discount: f64,
    pub warmup: usize,
}

impl ExpertConfig {
    pub fn for_instance(instance: &Instance) -> Self {
        ExpertConfig {
            horizon: 10,
            discount: 0.9,
            warmup: instance.config.warmup,
        }
    }
}

/// One slot of the expert trajectory.
pub struct ExpertStep<'a> {
    pub slot: usize,
    pub observation: SlotObservation,
    pub requests: &'a RequestSlot,
    pub peek: &'a [RequestSlot],
    pub expert: JointAction,
    pub all_full: bool,
}

/// Walks the expert trajectory after warm-up, calling `visit` on every slot
/// that still has a full look-ahead window. `visit` returns `false` to stop.
/// Returns the number of slots visited.
pub fn expert_trajectory<F>(instance: &Instance, cfg: &ExpertConfig, mut visit: F) -> Result<usize>
where
    F: FnMut(&ExpertStep<'_>) -> Result<bool>,
{
    let mut env = warm_up(instance, cfg.warmup)?.environment;
    let mut visited = 0;
    while env.slot() + 1 + cfg.horizon <= env.trace_len() {
        let t = env.begin_slot()?;
        let observation = env.observation();
        let requests = env.requests(t);
        let peek = env.peek(t, cfg.horizon)?;
        let expert = oracle_joint(
            env.cache(),
            requests,
            peek,
            &instance.graph,
            cfg.horizon,
            cfg.discount,
        )?;
        let step = ExpertStep {
            slot: t,
            all_full: env.cache().all_full(),
            observation,
            requests,
            peek,
            expert,
        };
        visited += 1;
        let go_on = visit(&step)?;
        let next = apply(env.cache(), &step.expert, step.requests)?;
        env.commit(next)?;
        if !go_on {
            break;
        }
    }
    Ok(visited)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordMeta {
    pub seed: u64,
    pub slot: usize,
    pub instance_hash: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftRecord {
    pub prompt: PromptText,
    pub completion: CompletionText,
    pub metadata: RecordMeta,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrpoRecord {
    pub prompt: PromptText,
    pub expert: CompletionText,
    pub peek_hash: String,
    pub metadata: RecordMeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub requested: usize,
    pub emitted: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruncationLine {
    truncated: Truncation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Export<R> {
    pub records: Vec<R>,
    pub truncated: Option<Truncation>,
}

impl<R: Serialize> Export<R> {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        if let Some(t) = self.truncated {
            out.push_str(&serde_json::to_string(&TruncationLine { truncated: t })?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }
}

/// SHA-256 over the compact JSON of the window's per-user file ids.
pub fn peek_hash(peek: &[RequestSlot]) -> Result<String> {
    let files: Vec<Vec<u32>> = peek
        .iter()
        .map(|q| q.requests().iter().map(|r| r.file.get()).collect())
        .collect();
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&files)?)))
}

fn collect<R, F>(instance: &Instance, cfg: &ExpertConfig, n: usize, mut make: F) -> Result<Export<R>>
where
    F: FnMut(&ExpertStep<'_>, RecordMeta) -> Result<R>,
{
    let hash = instance.hash()?;
    let mut records = Vec::with_capacity(n);
    if n > 0 {
        expert_trajectory(instance, cfg, |step| {
            if step.all_full {
                let meta = RecordMeta {
                    seed: instance.seed,
                    slot: step.slot,
                    instance_hash: hash.clone(),
                };
                records.push(make(step, meta)?);
            }
            Ok(records.len() < n)
        })?;
    } else {
        // keep the warm-start side effects identical to a non-empty run
        warm_up(instance, cfg.warmup)?;
    }
    let truncated = (records.len() < n).then_some(Truncation {
        requested: n,
        emitted: records.len(),
    });
    Ok(Export { records, truncated })
}

/// Up to `n` demonstration pairs from full-cache slots of the expert
/// trajectory.
pub fn generate_sft(instance: &Instance, cfg: &ExpertConfig, n: usize) -> Result<Export<SftRecord>> {
    collect(instance, cfg, n, |step, metadata| {
        Ok(SftRecord {
            prompt: encode(&step.observation),
            completion: serialize(&step.expert)?,
            metadata,
        })
    })
}

/// Up to `n` prompt states with the expert witness attached.
pub fn generate_grpo(instance: &Instance, cfg: &ExpertConfig, n: usize) -> Result<Export<GrpoRecord>> {
    collect(instance, cfg, n, |step, metadata| {
        Ok(GrpoRecord {
            prompt: encode(&step.observation),
            expert: serialize(&step.expert)?,
            peek_hash: peek_hash(step.peek)?,
            metadata,
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditIssue {
    pub index: usize,
    pub kind: String,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BsTally {
    pub noop: usize,
    pub write: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub records: usize,
    pub invalid: Vec<AuditIssue>,
    /// Records whose state had an empty cache slot.
    pub gate_violations: Vec<usize>,
    /// Share of per-BS decisions that are NoOp, over valid records.
    pub noop_fraction: f64,
    pub all_noop_records: usize,
    pub per_bs: Vec<BsTally>,
    pub truncated: Option<Truncation>,
    pub instance_hashes: BTreeMap<String, usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnyRecord {
    prompt: String,
    #[serde(alias = "expert")]
    completion: String,
    #[serde(default)]
    #[allow(dead_code)]
    peek_hash: Option<String>,
    metadata: RecordMeta,
}

/// Re-parses every completion against the observation decoded from its own
/// prompt. Record indices are zero-based line numbers.
pub fn audit_text(text: &str) -> Result<AuditReport> {
    let mut report = AuditReport::default();
    let lines: Vec<&str> = text.lines().collect();
    let (mut noops, mut decisions) = (0usize, 0usize);
    for (index, line) in lines.iter().enumerate() {
        let schema = |message: String| Error::Schema { index, message };
        if let Ok(marker) = serde_json::from_str::<TruncationLine>(line) {
            if index + 1 != lines.len() {
                return Err(schema("truncation marker before the last line".into()));
            }
            report.truncated = Some(marker.truncated);
            break;
        }
        let record: AnyRecord = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        let obs = decode_prompt(&record.prompt).map_err(|e| schema(e.to_string()))?;
        report.records += 1;
        *report
            .instance_hashes
            .entry(record.metadata.instance_hash.clone())
            .or_default() += 1;
        if !obs.cache().all_full() {
            report.gate_violations.push(index);
        }
        if report.per_bs.len() < obs.cache().num_bs() {
            report.per_bs.resize(obs.cache().num_bs(), BsTally::default());
        }
        match parse(&record.completion, &obs) {
            JointAction::Invalid(r) => report.invalid.push(AuditIssue {
                index,
                kind: r.kind.to_string(),
                detail: r.detail,
            }),
            JointAction::Valid(actions) => {
                if actions.iter().all(BsAction::is_noop) {
                    report.all_noop_records += 1;
                }
                for (b, a) in actions.iter().enumerate() {
                    decisions += 1;
                    if a.is_noop() {
                        noops += 1;
                        report.per_bs[b].noop += 1;
                    } else {
                        report.per_bs[b].write += 1;
                    }
                }
            }
        }
    }
    report.noop_fraction = if decisions == 0 {
        0.0
    } else {
        noops as f64 / decisions as f64
    };
    Ok(report)
}

pub fn audit_dataset(path: &Path) -> Result<AuditReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    audit_text(&text)
}
