use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::model::{AdmissibleSets, CacheState, FileId};

use super::{PromptText, Rate, SlotObservation};

/// Trailing instruction block of every prompt.
pub const INSTRUCTIONS: &str = "\
DECIDE: output exactly one decision line per BS, in ascending BS order, and nothing else.
FORMAT:
  BS <b>: NOOP
  BS <b>: SWAP slot=<z> out=<f_out> in=<f_in>
RULES:
  1. in must be requested at BS <b> in this slot.
  2. in must not already be cached at BS <b>.
  3. out must be the file currently stored in slot <z> of BS <b>; slots are numbered from 1.
";

/// Renders `hits / span` with three decimals, rounding half to even on the
/// exact rational value.
pub fn render_rate(rate: Rate) -> String {
    if rate.span == 0 {
        return "0.000".to_string();
    }
    let num = rate.hits as u64 * 1000;
    let span = rate.span as u64;
    let (mut q, r) = (num / span, num % span);
    if 2 * r > span || (2 * r == span && q % 2 == 1) {
        q += 1;
    }
    format!("{}.{:03}", q / 1000, q % 1000)
}

/// Layout:
///
/// ```text
/// SLOT <t>
/// LIBRARY <F>
/// BS <b> CACHE: <file or -> ...                  (slot order)
/// BS <b> REQUESTS: <file>:<count> ...            (count desc, then id)
/// BS <b> FREQ w=<w>: <file>:<rate> ...           (one line per window, id order)
/// <instruction block>
/// ```
pub fn encode(obs: &SlotObservation) -> PromptText {
    let mut out = String::new();
    writeln!(out, "SLOT {}", obs.slot()).unwrap();
    writeln!(out, "LIBRARY {}", obs.cache().library_size()).unwrap();
    for b in 0..obs.cache().num_bs() {
        let n = b + 1;
        write!(out, "BS {n} CACHE:").unwrap();
        for s in obs.cache().slots(b) {
            match s {
                Some(f) => write!(out, " {f}").unwrap(),
                None => out.push_str(" -"),
            }
        }
        out.push('\n');

        let mut requests: Vec<(FileId, u32)> =
            obs.counts(b).iter().map(|(&f, &c)| (f, c)).collect();
        requests.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        write!(out, "BS {n} REQUESTS:").unwrap();
        for (f, c) in requests {
            write!(out, " {f}:{c}").unwrap();
        }
        out.push('\n');

        for (wi, w) in obs.windows().iter().enumerate() {
            write!(out, "BS {n} FREQ w={w}:").unwrap();
            for (f, rates) in obs.frequencies(b) {
                write!(out, " {f}:{}", render_rate(rates[wi])).unwrap();
            }
            out.push('\n');
        }
    }
    out.push_str(INSTRUCTIONS);
    PromptText(out)
}

/// Rebuilds an observation from its prompt. Frequencies come back at the
/// rendered precision (`Rate { hits: milli, span: 1000 }`).
pub fn decode_prompt(text: &str) -> Result<SlotObservation> {
    let bad = |m: String| Error::Prompt(m);
    let mut lines = text.lines();
    let slot = lines
        .next()
        .and_then(|l| l.strip_prefix("SLOT "))
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(|| bad("missing SLOT header".into()))?;
    let library = lines
        .next()
        .and_then(|l| l.strip_prefix("LIBRARY "))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| bad("missing LIBRARY header".into()))?;

    let mut rows: Vec<Vec<Option<FileId>>> = Vec::new();
    let mut requests: Vec<BTreeMap<FileId, u32>> = Vec::new();
    let mut frequencies: Vec<BTreeMap<FileId, Vec<Rate>>> = Vec::new();
    let mut windows: Vec<usize> = Vec::new();
    let mut saw_instructions = false;

    for line in lines {
        if line.starts_with("DECIDE:") {
            saw_instructions = true;
            break;
        }
        let rest = line
            .strip_prefix("BS ")
            .ok_or_else(|| bad(format!("unexpected line {line:?}")))?;
        let (num, rest) = rest
            .split_once(' ')
            .ok_or_else(|| bad(format!("unexpected line {line:?}")))?;
        let b: usize = num
            .parse()
            .map_err(|_| bad(format!("bad BS number in {line:?}")))?;
        let (tag, items) = rest
            .split_once(':')
            .ok_or_else(|| bad(format!("missing ':' in {line:?}")))?;
        let items: Vec<&str> = items.split_whitespace().collect();
        match tag {
            "CACHE" => {
                if b != rows.len() + 1 {
                    return Err(bad(format!("BS {b} CACHE out of order")));
                }
                let row = items
                    .iter()
                    .map(|&item| match item {
                        "-" => Ok(None),
                        _ => item
                            .parse::<u32>()
                            .ok()
                            .and_then(FileId::new)
                            .map(Some)
                            .ok_or_else(|| bad(format!("bad cache entry {item:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.push(row);
                requests.push(BTreeMap::new());
                frequencies.push(BTreeMap::new());
            }
            "REQUESTS" => {
                if b != rows.len() {
                    return Err(bad(format!("BS {b} REQUESTS out of order")));
                }
                for item in items {
                    let (f, c) = item
                        .split_once(':')
                        .and_then(|(f, c)| Some((FileId::new(f.parse().ok()?)?, c.parse::<u32>().ok()?)))
                        .filter(|(_, c)| *c > 0)
                        .ok_or_else(|| bad(format!("bad request entry {item:?}")))?;
                    requests[b - 1].insert(f, c);
                }
            }
            tag if tag.starts_with("FREQ w=") => {
                if b != rows.len() {
                    return Err(bad(format!("BS {b} FREQ out of order")));
                }
                let w: usize = tag["FREQ w=".len()..]
                    .parse()
                    .map_err(|_| bad(format!("bad window in {line:?}")))?;
                if b == 1 {
                    windows.push(w);
                }
                let wi = windows
                    .iter()
                    .position(|&x| x == w)
                    .ok_or_else(|| bad(format!("window {w} not declared by BS 1")))?;
                for item in items {
                    let (f, r) = item
                        .split_once(':')
                        .and_then(|(f, r)| Some((FileId::new(f.parse().ok()?)?, parse_milli(r)?)))
                        .ok_or_else(|| bad(format!("bad frequency entry {item:?}")))?;
                    let rates = frequencies[b - 1].entry(f).or_default();
                    if rates.len() != wi {
                        return Err(bad(format!("frequency lines out of order for BS {b}")));
                    }
                    rates.push(Rate {
                        hits: r,
                        span: 1000,
                    });
                }
            }
            _ => return Err(bad(format!("unknown block {tag:?}"))),
        }
    }
    if !saw_instructions {
        return Err(bad("missing instruction block".into()));
    }
    let cache = CacheState::from_slots(rows, library)?;
    Ok(SlotObservation::from_parts(
        slot,
        cache,
        requests,
        windows,
        frequencies,
    ))
}

fn parse_milli(s: &str) -> Option<u32> {
    let (whole, frac) = s.split_once('.')?;
    if frac.len() != 3 || !frac.bytes().all(|c| c.is_ascii_digit()) {
        return None;
    }
    Some(whole.parse::<u32>().ok()? * 1000 + frac.parse::<u32>().ok()?)
}
