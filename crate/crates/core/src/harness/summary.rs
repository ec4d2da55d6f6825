use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use super::plot::run_label;
use super::HarnessError;
use crate::trainer::read_metrics;

/// Median of a sample; the mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 })
}

/// Final evaluated reward per run label (rows) and agent (columns), median
/// over the runs sharing a label.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryTable {
    pub num_agents: usize,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl SummaryTable {
    /// Comma-delimited table with a `variant,agent0,...` header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant");
        for i in 0..self.num_agents {
            let _ = write!(s, ",agent{i}");
        }
        s.push('\n');
        for (label, values) in &self.rows {
            s.push_str(label);
            for v in values {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.rows.iter().find(|r| r.0 == label).map(|r| r.1.as_slice())
    }
}

pub fn summarize_final_rewards(metrics: &[impl AsRef<Path>]) -> Result<SummaryTable, HarnessError> {
    let mut finals: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut num_agents = None;
    for path in metrics {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
        let records = read_metrics(file)?;
        let Some(last) = records.iter().map(|r| r.iteration).max() else {
            continue;
        };
        let mut row: Vec<(usize, f64)> = records
            .iter()
            .filter(|r| r.iteration == last)
            .map(|r| (r.agent, r.mean_episode_reward))
            .collect();
        row.sort_by_key(|r| r.0);
        let m = row.len();
        if *num_agents.get_or_insert(m) != m {
            return Err(HarnessError::Invalid(format!("{} has {m} agents, expected {}", path.display(), num_agents.unwrap_or(0))));
        }
        finals.entry(run_label(path)).or_default().push(row.into_iter().map(|r| r.1).collect());
    }
    let num_agents = num_agents.unwrap_or(0);
    let rows = finals
        .into_iter()
        .map(|(label, runs)| {
            let cols = (0..num_agents)
                .map(|i| median(&runs.iter().map(|r| r[i]).collect::<Vec<_>>()).unwrap_or(f64::NAN))
                .collect();
            (label, cols)
        })
        .collect();
    Ok(SummaryTable { num_agents, rows })
}

pub fn write_summary(table: &SummaryTable, out: &Path) -> Result<(), HarnessError> {
    std::fs::write(out, table.to_csv()).map_err(|e| HarnessError::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{MetricsRecord, MetricsWriter};
    use std::path::PathBuf;

    fn write_run(root: &Path, label: &str, seed: u64, finals: &[f64]) -> PathBuf {
        let dir = root.join(label).join(format!("seed_{seed}"));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("metrics.csv");
        let mut w = MetricsWriter::new(File::create(&path).unwrap());
        for it in 0..3 {
            let recs: Vec<MetricsRecord> = finals
                .iter()
                .enumerate()
                .map(|(agent, &v)| MetricsRecord {
                    iteration: it,
                    agent,
                    mean_episode_reward: if it == 2 { v } else { -1.0 },
                    kl: 0.0,
                    surrogate_gain: 0.0,
                    accepted: true,
                })
                .collect();
            w.write_all(&recs).unwrap();
        }
        path
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }

    #[test]
    fn known_fixture_is_reported_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let files = [write_run(dir.path(), "ga-matr", 1, &[123.25, 456.5])];
        let t = summarize_final_rewards(&files).unwrap();
        assert_eq!(t.to_csv(), "variant,agent0,agent1\nga-matr,123.25,456.5\n");
    }

    #[test]
    fn shape_and_order_invariance() {
        let dir = tempfile::tempdir().unwrap();
        let mut files = vec![
            write_run(dir.path(), "ga-matr", 1, &[1.0, 10.0]),
            write_run(dir.path(), "ga-matr", 2, &[3.0, 30.0]),
            write_run(dir.path(), "ga-matr", 3, &[2.0, 20.0]),
            write_run(dir.path(), "matr", 1, &[5.0, 6.0]),
        ];
        let t = summarize_final_rewards(&files).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows.iter().all(|r| r.1.len() + 1 == 3));
        assert_eq!(t.get("ga-matr").unwrap(), &[2.0, 20.0]);
        files.reverse();
        assert_eq!(summarize_final_rewards(&files).unwrap(), t);
    }
}
