//! Tab-separated report tables.
//!
//! * `per_seed.tsv`: `policy seed <t>... mean series_mean writes invalid`,
//!   one row per report, where `<t>` are the checkpoint slots and `mean` is
//!   the mean of the checkpoint prefix averages.
//! * `aggregate.tsv`: `policy seeds <t>... mean mean_std series_mean invalid`,
//!   averaged over seeds; `mean_std` is the population std of `mean`.
//! * `series_long.tsv`: `policy seed slot hit_rate prefix_average`.
//! * `latency.tsv`: `policy seed slot latency_us` (wall clock, not
//!   reproducible).
//! * `reports.json`: the reports themselves, without latency.
//!
//! Rates are printed with six decimals.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::rollout::{mean, prefix_averages, EvalReport};
use super::sweep::SweepRow;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub policy: String,
    pub seeds: usize,
    pub checkpoints: Vec<(usize, f64)>,
    pub mean: f64,
    pub mean_std: f64,
    pub series_mean: f64,
    pub invalid: usize,
}

/// Per-policy averages over seeds, in order of first appearance.
pub fn aggregate(reports: &[EvalReport]) -> Vec<AggregateRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in reports {
        if !order.contains(&r.policy.as_str()) {
            order.push(&r.policy);
        }
    }
    order
        .into_iter()
        .map(|policy| {
            let rows: Vec<&EvalReport> = reports.iter().filter(|r| r.policy == policy).collect();
            let checkpoints = rows[0]
                .checkpoints
                .iter()
                .enumerate()
                .map(|(i, &(t, _))| (t, mean(rows.iter().filter_map(|r| r.checkpoints.get(i).map(|c| c.1)))))
                .collect();
            let m = mean(rows.iter().map(|r| r.checkpoint_mean));
            let var = mean(rows.iter().map(|r| (r.checkpoint_mean - m).powi(2)));
            AggregateRow {
                policy: policy.to_string(),
                seeds: rows.len(),
                checkpoints,
                mean: m,
                mean_std: var.sqrt(),
                series_mean: mean(rows.iter().map(|r| r.series_mean)),
                invalid: rows.iter().map(|r| r.invalid).sum(),
            }
        })
        .collect()
}

fn write(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| Error::io(path, e))
}

fn checkpoint_header(reports: &[EvalReport]) -> String {
    reports
        .first()
        .map(|r| r.checkpoints.iter().map(|c| format!("\t{}", c.0)).collect())
        .unwrap_or_default()
}

/// Writes every table into `dir` (created if missing).
pub fn write_reports(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cp = checkpoint_header(reports);

    let mut s = format!("policy\tseed{cp}\tmean\tseries_mean\twrites\tinvalid\n");
    for r in reports {
        write!(s, "{}\t{}", r.policy, r.seed).unwrap();
        for c in &r.checkpoints {
            write!(s, "\t{:.6}", c.1).unwrap();
        }
        writeln!(
            s,
            "\t{:.6}\t{:.6}\t{}\t{}",
            r.checkpoint_mean, r.series_mean, r.writes, r.invalid
        )
        .unwrap();
    }
    write(dir, "per_seed.tsv", &s)?;

    let mut s = format!("policy\tseeds{cp}\tmean\tmean_std\tseries_mean\tinvalid\n");
    for a in aggregate(reports) {
        write!(s, "{}\t{}", a.policy, a.seeds).unwrap();
        for c in &a.checkpoints {
            write!(s, "\t{:.6}", c.1).unwrap();
        }
        writeln!(
            s,
            "\t{:.6}\t{:.6}\t{:.6}\t{}",
            a.mean, a.mean_std, a.series_mean, a.invalid
        )
        .unwrap();
    }
    write(dir, "aggregate.tsv", &s)?;

    let mut s = String::from("policy\tseed\tslot\thit_rate\tprefix_average\n");
    for r in reports {
        for (i, (h, p)) in r.series.iter().zip(prefix_averages(&r.series)).enumerate() {
            writeln!(s, "{}\t{}\t{}\t{:.6}\t{:.6}", r.policy, r.seed, i + 1, h, p).unwrap();
        }
    }
    write(dir, "series_long.tsv", &s)?;

    let mut s = String::from("policy\tseed\tslot\tlatency_us\n");
    for r in reports {
        for (i, l) in r.latency_us.iter().enumerate() {
            writeln!(s, "{}\t{}\t{}\t{}", r.policy, r.seed, i + 1, l).unwrap();
        }
    }
    write(dir, "latency.tsv", &s)?;

    let mut json = serde_json::to_string_pretty(reports)?;
    json.push('\n');
    write(dir, "reports.json", &json)
}

pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// `sweep.tsv` with one row per cell and `sweep_aggregate.tsv` averaged
/// over seeds.
pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut s = String::from("axis\tvalue\tpolicy\tseed\tmean\tseries_mean\tinvalid\n");
    for r in rows {
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}",
            r.axis, r.value, r.policy, r.seed, r.checkpoint_mean, r.series_mean, r.invalid
        )
        .unwrap();
    }
    write(dir, "sweep.tsv", &s)?;

    let mut keys: Vec<(f64, &str)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|k| k.0 == r.value && k.1 == r.policy) {
            keys.push((r.value, &r.policy));
        }
    }
    let mut s = String::from("axis\tvalue\tpolicy\tseeds\tmean\tseries_mean\n");
    for (value, policy) in keys {
        let cell: Vec<&SweepRow> = rows
            .iter()
            .filter(|r| r.value == value && r.policy == policy)
            .collect();
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
            cell[0].axis,
            value,
            policy,
            cell.len(),
            mean(cell.iter().map(|r| r.checkpoint_mean)),
            mean(cell.iter().map(|r| r.series_mean))
        )
        .unwrap();
    }
    write(dir, "sweep_aggregate.tsv", &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn report(policy: &str, seed: u64, series: Vec<f64>) -> EvalReport {
        let mut r = EvalReport {
            policy: policy.into(),
            seed,
            instance_hash: "h".into(),
            series,
            checkpoints: Vec::new(),
            checkpoint_mean: 0.0,
            series_mean: 0.0,
            writes: 0,
            invalid: 0,
            invalid_by_kind: BTreeMap::new(),
            latency_us: vec![],
        };
        r.summarize();
        r
    }

    #[test]
    fn table_shapes() {
        let mut reports = Vec::new();
        for seed in 1..=3 {
            for p in ["oracle:1", "lru", "lfu", "fifo"] {
                reports.push(report(p, seed, vec![0.5; 300]));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        write_reports(dir.path(), &reports).unwrap();
        let per_seed = std::fs::read_to_string(dir.path().join("per_seed.tsv")).unwrap();
        let lines: Vec<&str> = per_seed.lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(
            lines[0],
            "policy\tseed\t50\t100\t150\t200\t250\t300\tmean\tseries_mean\twrites\tinvalid"
        );
        let agg = std::fs::read_to_string(dir.path().join("aggregate.tsv")).unwrap();
        assert_eq!(agg.lines().count(), 5);
        assert!(agg.lines().nth(1).unwrap().starts_with("oracle:1\t3\t0.500000"));
        let long = std::fs::read_to_string(dir.path().join("series_long.tsv")).unwrap();
        assert_eq!(long.lines().count(), 1 + 12 * 300);

        // re-emission from the json is idempotent
        let back = read_reports(&dir.path().join("reports.json")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_reports(dir2.path(), &back).unwrap();
        for f in ["per_seed.tsv", "aggregate.tsv", "series_long.tsv", "reports.json"] {
            assert_eq!(
                std::fs::read(dir.path().join(f)).unwrap(),
                std::fs::read(dir2.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn table_mean_is_mean_of_checkpoints() {
        // hit 1.0 for the first 50 slots, 0 afterwards
        let mut series = vec![1.0; 50];
        series.extend(vec![0.0; 250]);
        let r = report("x", 1, series);
        let expected = (1.0 + 0.5 + 1.0 / 3.0 + 0.25 + 0.2 + 1.0 / 6.0) / 6.0;
        assert!((r.checkpoint_mean - expected).abs() < 1e-12);
        assert!((r.series_mean - 50.0 / 300.0).abs() < 1e-12);
    }
}
