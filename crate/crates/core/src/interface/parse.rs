use crate::error::{Error, Result};
use crate::model::{check_bs_action, BsAction, FileId, InvalidKind, InvalidReason, JointAction};

use super::{CompletionText, SlotObservation};

enum Line {
    NoOp { bs: u32 },
    Swap { bs: u32, slot: u32, out: u32, insert: u32 },
}

impl Line {
    fn bs(&self) -> u32 {
        match *self {
            Line::NoOp { bs } | Line::Swap { bs, .. } => bs,
        }
    }
}

fn invalid(kind: InvalidKind, detail: String) -> JointAction {
    JointAction::Invalid(InvalidReason { kind, detail })
}

/// Decimal without sign or leading zeros that fits in `u32`.
fn number(s: &str) -> Option<u32> {
    if s.is_empty() || !s.bytes().all(|c| c.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0'))
    {
        return None;
    }
    s.parse().ok()
}

fn field(token: &str, key: &str) -> Option<u32> {
    number(token.strip_prefix(key)?.strip_prefix('=')?)
}

fn decision_line(line: &str) -> Option<Line> {
    let (bs, body) = line.strip_prefix("BS ")?.split_once(": ")?;
    let bs = number(bs)?;
    if body == "NOOP" {
        return Some(Line::NoOp { bs });
    }
    let mut tokens = body.split(' ');
    if tokens.next()? != "SWAP" {
        return None;
    }
    let slot = field(tokens.next()?, "slot")?;
    let out = field(tokens.next()?, "out")?;
    let insert = field(tokens.next()?, "in")?;
    if tokens.next().is_some() {
        return None;
    }
    Some(Line::Swap {
        bs,
        slot,
        out,
        insert,
    })
}

fn feasibility(obs: &SlotObservation, b: usize, slot: u32, out: u32, insert: u32) -> Result<BsAction, InvalidReason> {
    let fail = |kind, detail: String| InvalidReason { kind, detail };
    let Some(insert) = FileId::new(insert) else {
        return Err(fail(
            InvalidKind::Admissibility,
            format!("BS {}: in=0 is not a requested file", b + 1),
        ));
    };
    let slot = slot as usize;
    match FileId::new(out) {
        Some(evict) => {
            let action = BsAction::Replace {
                slot,
                insert,
                evict,
            };
            check_bs_action(obs.cache(), b, &action, obs)
                .map(|_| action)
                .map_err(|e| fail(e.rule.into(), e.to_string()))
        }
        None => {
            // Probe with evict = insert: admissibility and duplication are
            // checked first, and an admissible uncached `insert` can never be
            // the stored file, so whatever remains is a consistency failure.
            let probe = BsAction::Replace {
                slot,
                insert,
                evict: insert,
            };
            let kind = match check_bs_action(obs.cache(), b, &probe, obs) {
                Err(e) => InvalidKind::from(e.rule),
                Ok(()) => InvalidKind::Consistency,
            };
            let detail = match kind {
                InvalidKind::Consistency => format!("BS {}: out=0 is not a stored file", b + 1),
                _ => format!("BS {}: {kind} violated", b + 1),
            };
            Err(fail(kind, detail))
        }
    }
}

/// Maps a completion to a joint action. Checks run in the order syntax,
/// count, order, then the per-BS feasibility rules; the first failure
/// decides the reason. Never panics.
pub fn parse(text: &str, obs: &SlotObservation) -> JointAction {
    let mut lines = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match decision_line(line) {
            Some(l) => lines.push(l),
            None => {
                let shown: String = line.chars().take(60).collect();
                return invalid(
                    InvalidKind::Syntax,
                    format!("line {}: not a decision line: {shown:?}", i + 1),
                );
            }
        }
    }
    let num_bs = obs.cache().num_bs();
    if lines.len() != num_bs {
        return invalid(
            InvalidKind::Count,
            format!("{} decision lines for {num_bs} BSs", lines.len()),
        );
    }
    for (i, l) in lines.iter().enumerate() {
        if l.bs() as usize != i + 1 {
            return invalid(
                InvalidKind::Order,
                format!("decision {} names BS {}", i + 1, l.bs()),
            );
        }
    }
    let mut actions = Vec::with_capacity(num_bs);
    for (b, l) in lines.iter().enumerate() {
        match *l {
            Line::NoOp { .. } => actions.push(BsAction::NoOp),
            Line::Swap {
                slot, out, insert, ..
            } => match feasibility(obs, b, slot, out, insert) {
                Ok(a) => actions.push(a),
                Err(reason) => return JointAction::Invalid(reason),
            },
        }
    }
    JointAction::Valid(actions)
}

/// Renders one decision line per BS, joined by `\n` with no trailing newline.
pub fn serialize(action: &JointAction) -> Result<CompletionText> {
    let Some(actions) = action.actions() else {
        return Err(Error::InvalidAction);
    };
    let lines: Vec<String> = actions
        .iter()
        .enumerate()
        .map(|(b, a)| match *a {
            BsAction::NoOp => format!("BS {}: NOOP", b + 1),
            BsAction::Replace {
                slot,
                insert,
                evict,
            } => format!("BS {}: SWAP slot={slot} out={evict} in={insert}", b + 1),
        })
        .collect();
    Ok(CompletionText(lines.join("\n")))
}
