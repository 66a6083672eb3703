//! Aggregate score statistics: IQM, mean, median, optimality gap and
//! stratified bootstrap confidence intervals.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnalysisError;

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Interquartile mean: the mean of the middle 50% of the sorted scores.
///
/// Sample `i` (0-based, sorted) covers `[i, i+1)`; it is weighted by its
/// overlap with `[n/4, 3n/4]`, so boundary samples are trimmed fractionally.
pub fn iqm(scores: &[f64]) -> Result<f64, AnalysisError> {
    if scores.len() < 4 {
        return Err(AnalysisError::TooFewScores {
            need: 4,
            got: scores.len(),
        });
    }
    let v = sorted(scores);
    let n = v.len() as f64;
    let (lo, hi) = (n / 4.0, 3.0 * n / 4.0);
    let mut acc = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let (a, b) = (i as f64, i as f64 + 1.0);
        let w = (b.min(hi) - a.max(lo)).max(0.0);
        acc += w * x;
    }
    Ok(acc / (hi - lo))
}

pub fn mean(scores: &[f64]) -> Result<f64, AnalysisError> {
    if scores.is_empty() {
        return Err(AnalysisError::TooFewScores { need: 1, got: 0 });
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn median(scores: &[f64]) -> Result<f64, AnalysisError> {
    if scores.is_empty() {
        return Err(AnalysisError::TooFewScores { need: 1, got: 0 });
    }
    let v = sorted(scores);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Mean shortfall of normalized scores below 1.
pub fn optimality_gap(scores: &[f64]) -> Result<f64, AnalysisError> {
    if scores.is_empty() {
        return Err(AnalysisError::TooFewScores { need: 1, got: 0 });
    }
    Ok(scores.iter().map(|&x| (1.0 - x).max(0.0)).sum::<f64>() / scores.len() as f64)
}

/// Standard error of the mean (sample std / sqrt(n)); zero for a single value.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (var / n as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data, `q ∈ [0, 1]`.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] + (v[hi] - v[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Iqm,
    Mean,
    Median,
    OptimalityGap,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [
        Statistic::Iqm,
        Statistic::Mean,
        Statistic::Median,
        Statistic::OptimalityGap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Iqm => "iqm",
            Statistic::Mean => "mean",
            Statistic::Median => "median",
            Statistic::OptimalityGap => "optimality_gap",
        }
    }

    pub fn apply(self, scores: &[f64]) -> Result<f64, AnalysisError> {
        match self {
            Statistic::Iqm => iqm(scores),
            Statistic::Mean => mean(scores),
            Statistic::Median => median(scores),
            Statistic::OptimalityGap => optimality_gap(scores),
        }
    }
}

/// Normalized scores indexed by `[task][seed]`; every task has the same seed count.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMatrix {
    tasks: Vec<String>,
    seeds: Vec<String>,
    scores: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunRow {
    task: String,
    seed: String,
    normalized_return: f64,
}

impl RunMatrix {
    pub fn new(
        tasks: Vec<String>,
        seeds: Vec<String>,
        scores: Vec<Vec<f64>>,
    ) -> Result<Self, AnalysisError> {
        if tasks.len() != scores.len() {
            return Err(AnalysisError::Shape(format!(
                "{} task labels for {} score rows",
                tasks.len(),
                scores.len()
            )));
        }
        if let Some((i, row)) = scores
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != seeds.len())
        {
            return Err(AnalysisError::Shape(format!(
                "task '{}' has {} seeds, expected {}",
                tasks[i],
                row.len(),
                seeds.len()
            )));
        }
        if tasks.is_empty() || seeds.is_empty() {
            return Err(AnalysisError::Empty("run matrix"));
        }
        Ok(Self {
            tasks,
            seeds,
            scores,
        })
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    pub fn seeds(&self) -> &[String] {
        &self.seeds
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.scores.iter().flatten().copied().collect()
    }

    /// Reads `task,seed,normalized_return` rows (header required).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, AnalysisError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut by_task: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        let mut task_order: Vec<String> = Vec::new();
        for (i, rec) in rdr.deserialize::<RunRow>().enumerate() {
            // Line 1 is the header.
            let line = i + 2;
            let row = rec.map_err(|e| AnalysisError::MalformedCsv {
                line,
                detail: e.to_string(),
            })?;
            if !row.normalized_return.is_finite() {
                return Err(AnalysisError::MalformedCsv {
                    line,
                    detail: "normalized_return is not finite".into(),
                });
            }
            if !by_task.contains_key(&row.task) {
                task_order.push(row.task.clone());
            }
            let seeds = by_task.entry(row.task.clone()).or_default();
            if seeds
                .insert(row.seed.clone(), row.normalized_return)
                .is_some()
            {
                return Err(AnalysisError::MalformedCsv {
                    line,
                    detail: format!("duplicate (task '{}', seed '{}')", row.task, row.seed),
                });
            }
        }
        let first = task_order
            .first()
            .ok_or(AnalysisError::Empty("run matrix CSV"))?;
        let seeds: Vec<String> = by_task[first].keys().cloned().collect();
        let mut scores = Vec::with_capacity(task_order.len());
        for t in &task_order {
            let row = &by_task[t];
            let keys: Vec<&String> = row.keys().collect();
            if keys.len() != seeds.len() || keys.iter().zip(&seeds).any(|(a, b)| *a != b) {
                return Err(AnalysisError::MalformedCsv {
                    line: 0,
                    detail: format!(
                        "task '{t}' has seeds {keys:?}, expected the same seeds as '{first}': {seeds:?}"
                    ),
                });
            }
            scores.push(seeds.iter().map(|s| row[s]).collect());
        }
        Self::new(task_order, seeds, scores)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(writer);
        for (t, row) in self.tasks.iter().zip(&self.scores) {
            for (s, &x) in self.seeds.iter().zip(row) {
                w.serialize(RunRow {
                    task: t.clone(),
                    seed: s.clone(),
                    normalized_return: x,
                })
                .map_err(|e| AnalysisError::MalformedCsv {
                    line: 0,
                    detail: e.to_string(),
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Point estimate with a percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Percentile bootstrap stratified by task: each resample redraws, with
/// replacement, the seeds of every task independently.
pub fn bootstrap_ci(
    matrix: &RunMatrix,
    statistic: Statistic,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<ConfidenceInterval, AnalysisError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(AnalysisError::Shape(format!(
            "confidence level {level} not in (0, 1)"
        )));
    }
    if n_resamples == 0 {
        return Err(AnalysisError::Shape(
            "need at least one bootstrap resample".into(),
        ));
    }
    let point = statistic.apply(&matrix.flatten())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_seeds = matrix.seeds.len();
    let mut buf = Vec::with_capacity(matrix.tasks.len() * n_seeds);
    let mut stats = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        buf.clear();
        for row in &matrix.scores {
            for _ in 0..n_seeds {
                buf.push(row[rng.gen_range(0..n_seeds)]);
            }
        }
        stats.push(statistic.apply(&buf)?);
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        point,
        ci_low: quantile_sorted(&stats, tail),
        ci_high: quantile_sorted(&stats, 1.0 - tail),
    })
}

/// One line of the statistics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub statistic: String,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// IQM, mean, median and optimality gap with bootstrap intervals.
pub fn summarize(
    matrix: &RunMatrix,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<StatReport>, AnalysisError> {
    Statistic::ALL
        .iter()
        .map(|&s| {
            let ci = bootstrap_ci(matrix, s, n_resamples, level, seed)?;
            Ok(StatReport {
                statistic: s.name().to_string(),
                point: ci.point,
                ci_low: ci.ci_low,
                ci_high: ci.ci_high,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iqm_golden_values() {
        assert_eq!(iqm(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(
            iqm(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 100.0]).unwrap(),
            3.5
        );
    }

    #[test]
    fn iqm_fractional_trim() {
        // n = 5: window [1.25, 3.75] covers 0.75 of x1, all of x2, 0.75 of x3.
        let v = iqm(&[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((v - (0.75 * 1.0 + 2.0 + 0.75 * 3.0) / 2.5).abs() < 1e-15);
    }

    #[test]
    fn iqm_needs_four_scores() {
        assert!(matches!(
            iqm(&[1.0, 2.0, 3.0]),
            Err(AnalysisError::TooFewScores { need: 4, got: 3 })
        ));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
    }

    #[test]
    fn gap_ignores_scores_above_one() {
        assert_eq!(optimality_gap(&[1.5, 0.5]).unwrap(), 0.25);
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let err = RunMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["0".into(), "1".into()],
            vec![vec![1.0, 2.0], vec![1.0]],
        )
        .unwrap_err();
        assert!(matches!(err, AnalysisError::Shape(_)));
    }

    #[test]
    fn csv_missing_seed_is_diagnosed() {
        let csv = "task,seed,normalized_return\na,0,0.5\na,1,0.6\nb,0,0.7\n";
        let err = RunMatrix::read_csv(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, AnalysisError::MalformedCsv { .. }), "{err}");
    }

    #[test]
    fn csv_bad_number_reports_line() {
        let csv = "task,seed,normalized_return\na,0,0.5\na,1,oops\n";
        match RunMatrix::read_csv(csv.as_bytes()).unwrap_err() {
            AnalysisError::MalformedCsv { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let m = RunMatrix::new(
            vec!["reach".into(), "run".into()],
            vec!["0".into(), "1".into()],
            vec![vec![0.25, 0.5], vec![0.75, 1.0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(RunMatrix::read_csv(&buf[..]).unwrap(), m);
    }
}
