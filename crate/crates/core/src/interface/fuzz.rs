//! Randomized soundness and totality checks for the parser.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{apply, check_transition, feasible_actions, AdmissibleSets, JointAction};

use super::{encode, parse, serialize, SlotObservation};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FuzzReport {
    pub cases: usize,
    pub panics: usize,
    pub valid: usize,
    /// Valid parses that `apply` rejected or that broke the transition check.
    pub infeasible_valid: usize,
    pub invalid_by_kind: BTreeMap<String, usize>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.panics == 0 && self.infeasible_valid == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RoundTripReport {
    pub cases: usize,
    pub failures: usize,
}

const TOKENS: &[&str] = &[
    "BS", "BS ", " ", ": ", ":", "NOOP", "SWAP", "slot=", "out=", "in=", "\n", "\r\n", "\t", "0",
    "1", "2", "9", "01", "-1", "4294967296", "=", "noop", "swap", "\u{00e9}", "\u{0000}",
];

fn random_joint(obs: &SlotObservation, rng: &mut ChaCha8Rng) -> JointAction {
    JointAction::Valid(
        (0..obs.cache().num_bs())
            .map(|b| {
                *feasible_actions(obs.cache(), b, obs)
                    .choose(rng)
                    .expect("NoOp is always feasible")
            })
            .collect(),
    )
}

/// A syntactically plausible line with numbers drawn near the state.
fn near_miss(obs: &SlotObservation, rng: &mut ChaCha8Rng) -> String {
    let cache = obs.cache();
    let nb = cache.num_bs();
    let b = rng.gen_range(0..nb);
    let bs_num = if rng.gen_bool(0.9) { b + 1 } else { rng.gen_range(0..nb + 2) };
    if rng.gen_bool(0.2) {
        return format!("BS {bs_num}: NOOP");
    }
    let cap = cache.capacity(b);
    let slot = rng.gen_range(0..cap + 2);
    let pick = |rng: &mut ChaCha8Rng, pool: Vec<u32>| -> u32 {
        match pool.choose(rng) {
            Some(&x) if rng.gen_bool(0.8) => x,
            _ => rng.gen_range(0..cache.library_size() + 3),
        }
    };
    let stored: Vec<u32> = cache.files(b).map(|f| f.get()).collect();
    let requested: Vec<u32> = obs.counts(b).keys().map(|f| f.get()).collect();
    let out = pick(rng, stored.clone());
    let insert = if rng.gen_bool(0.5) {
        pick(rng, requested)
    } else {
        pick(rng, stored)
    };
    format!("BS {bs_num}: SWAP slot={slot} out={out} in={insert}")
}

fn mutate(text: &str, obs: &SlotObservation, rng: &mut ChaCha8Rng) -> String {
    let mut bytes = text.as_bytes().to_vec();
    let rounds = rng.gen_range(1..=3);
    for _ in 0..rounds {
        match rng.gen_range(0..8) {
            0 if !bytes.is_empty() => {
                let i = rng.gen_range(0..bytes.len());
                bytes[i] ^= 1 << rng.gen_range(0..8);
            }
            1 if !bytes.is_empty() => {
                let i = rng.gen_range(0..bytes.len());
                let j = (i + rng.gen_range(1..8)).min(bytes.len());
                bytes.drain(i..j);
            }
            2 => {
                let i = rng.gen_range(0..=bytes.len());
                let tok = TOKENS.choose(rng).unwrap();
                bytes.splice(i..i, tok.bytes());
            }
            3..=5 => {
                let s = String::from_utf8_lossy(&bytes).into_owned();
                let mut lines: Vec<String> = s.split('\n').map(str::to_string).collect();
                let n = lines.len();
                match rng.gen_range(0..4) {
                    0 => {
                        let i = rng.gen_range(0..n);
                        let l = lines[i].clone();
                        lines.insert(i, l);
                    }
                    1 if n > 1 => {
                        lines.remove(rng.gen_range(0..n));
                    }
                    2 if n > 1 => {
                        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
                        lines.swap(i, j);
                    }
                    _ => {
                        let i = rng.gen_range(0..=n);
                        lines.insert(i, near_miss(obs, rng));
                    }
                }
                bytes = lines.join("\n").into_bytes();
            }
            _ => {
                // perturb one decimal run
                let runs: Vec<usize> = (0..bytes.len())
                    .filter(|&i| bytes[i].is_ascii_digit() && (i == 0 || !bytes[i - 1].is_ascii_digit()))
                    .collect();
                if let Some(&i) = runs.choose(rng) {
                    let j = (i..bytes.len())
                        .find(|&j| !bytes[j].is_ascii_digit())
                        .unwrap_or(bytes.len());
                    let v: u64 = std::str::from_utf8(&bytes[i..j])
                        .ok()
                        .and_then(|s| s.parse().ok())
                        .unwrap_or(0);
                    let delta: i64 = rng.gen_range(-2..=2);
                    let nv = (v as i64 + delta).max(0).to_string();
                    bytes.splice(i..j, nv.bytes());
                }
            }
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

fn fuzz_input(obs: &SlotObservation, rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..5) {
        0 => {
            let len = rng.gen_range(0..256);
            let raw: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            String::from_utf8_lossy(&raw).into_owned()
        }
        1 => mutate(encode(obs).as_str(), obs, rng),
        2 | 3 => {
            let valid = serialize(&random_joint(obs, rng)).expect("valid action");
            mutate(valid.as_str(), obs, rng)
        }
        _ => (0..obs.cache().num_bs())
            .map(|_| near_miss(obs, rng))
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

/// Feeds `cases` generated inputs through the parser, cycling through
/// `observations`. Every Valid result must execute cleanly.
pub fn fuzz_parser(observations: &[SlotObservation], cases: usize, seed: u64) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FuzzReport {
        cases,
        ..FuzzReport::default()
    };
    if observations.is_empty() {
        report.cases = 0;
        return report;
    }
    for i in 0..cases {
        let obs = &observations[i % observations.len()];
        let text = fuzz_input(obs, &mut rng);
        let outcome = catch_unwind(AssertUnwindSafe(|| parse(&text, obs)));
        match outcome {
            Err(_) => report.panics += 1,
            Ok(JointAction::Invalid(r)) => {
                *report.invalid_by_kind.entry(r.kind.to_string()).or_default() += 1;
            }
            Ok(action) => {
                report.valid += 1;
                let sound = match apply(obs.cache(), &action, obs) {
                    Ok(next) => check_transition(obs.cache(), &next),
                    Err(_) => false,
                };
                if !sound {
                    log::error!("infeasible Valid parse of {text:?}");
                    report.infeasible_valid += 1;
                }
            }
        }
    }
    report
}

/// serialize -> parse identity over random feasible joint actions.
pub fn round_trip(observations: &[SlotObservation], cases: usize, seed: u64) -> RoundTripReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = RoundTripReport {
        cases,
        failures: 0,
    };
    if observations.is_empty() {
        report.cases = 0;
        return report;
    }
    for i in 0..cases {
        let obs = &observations[i % observations.len()];
        let action = random_joint(obs, &mut rng);
        let ok = serialize(&action)
            .map(|text| parse(text.as_str(), obs) == action)
            .unwrap_or(false);
        if !ok {
            report.failures += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interface::testing::golden_observation;

    #[test]
    fn golden_fuzz_is_clean() {
        let report = fuzz_parser(&[golden_observation()], 5_000, 7);
        assert_eq!(report.panics, 0);
        assert_eq!(report.infeasible_valid, 0);
        assert!(report.valid > 0, "generator never produced a valid parse");
        assert!(report.invalid_by_kind.len() >= 4, "{:?}", report.invalid_by_kind);
    }

    #[test]
    fn golden_round_trip() {
        let obs = [golden_observation()];
        assert_eq!(round_trip(&obs, 500, 3).failures, 0);
        // the generator must not be trivially all-NoOp
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let writes = (0..500)
            .filter(|_| !random_joint(&obs[0], &mut rng).is_all_noop())
            .count();
        assert!(writes > 250, "{writes}");
    }

    #[test]
    fn one_mebibyte_inputs() {
        let obs = golden_observation();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let raw: Vec<u8> = (0..1 << 20).map(|_| rng.gen()).collect();
        let text = String::from_utf8_lossy(&raw);
        assert!(!parse(&text, &obs).is_valid());

        let line = "BS 1: NOOP\n";
        let repeated = line.repeat((1 << 20) / line.len());
        assert_eq!(
            parse(&repeated, &obs).invalid_kind(),
            Some(crate::model::InvalidKind::Count)
        );

        let long_number = format!("BS 1: NOOP\nBS 2: SWAP slot={} out=1 in=2", "9".repeat(1 << 20));
        assert_eq!(
            parse(&long_number, &obs).invalid_kind(),
            Some(crate::model::InvalidKind::Syntax)
        );
    }
}
