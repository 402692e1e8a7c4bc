//! Accuracy summary tables: per run, pick the checkpoint with the highest
//! in-domain accuracy, read every dataset's accuracy there, and report
//! mean ± sample standard deviation across runs, next to a chance baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{DatasetId, EvalTrace, RunSet};

/// Chance accuracy of the binarized two-class task.
pub const CHANCE_ACCURACY: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummaryError {
    #[error("MissingStep: run {run} dataset {dataset} has no measurement at step {step}")]
    MissingStep {
        run: String,
        dataset: DatasetId,
        step: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: DatasetId,
    pub mean: f64,
    pub std: f64,
    pub is_in_domain: bool,
}

/// Mean ± std accuracy per dataset at each run's best in-domain checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub runset_label: String,
    pub in_domain: DatasetId,
    pub rows: Vec<SummaryRow>,
    pub chance: f64,
    pub n_runs: usize,
}

/// The step with the highest in-domain accuracy; ties break to the
/// earliest step.
pub fn best_checkpoint(trace: &EvalTrace) -> u64 {
    let series = &trace.in_domain_series;
    let mut best_idx = 0;
    for i in 1..series.values.len() {
        if series.values[i] > series.values[best_idx] {
            best_idx = i;
        }
    }
    series.steps[best_idx]
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Builds the summary table for a runset. Per-run best checkpoints are
/// selected independently, matching each run's own in-domain trajectory.
pub fn summary_table(runset: &RunSet) -> Result<SummaryTable, SummaryError> {
    let mut datasets: Vec<(DatasetId, bool)> = vec![(runset.in_domain.clone(), true)];
    datasets.extend(runset.ood_datasets().into_iter().map(|d| (d, false)));

    let mut per_dataset: Vec<Vec<f64>> = vec![Vec::new(); datasets.len()];
    for trace in &runset.traces {
        let step = best_checkpoint(trace);
        for (i, (dataset, is_in_domain)) in datasets.iter().enumerate() {
            let series = if *is_in_domain {
                &trace.in_domain_series
            } else {
                &trace.ood_series[dataset]
            };
            let value = series
                .value_at(step)
                .ok_or_else(|| SummaryError::MissingStep {
                    run: trace.run_id.clone(),
                    dataset: dataset.clone(),
                    step,
                })?;
            per_dataset[i].push(value);
        }
    }

    let rows = datasets
        .into_iter()
        .zip(per_dataset)
        .map(|((dataset, is_in_domain), values)| {
            let (mean, std) = mean_and_sample_std(&values);
            SummaryRow {
                dataset,
                mean,
                std,
                is_in_domain,
            }
        })
        .collect();

    Ok(SummaryTable {
        runset_label: runset.label.clone(),
        in_domain: runset.in_domain.clone(),
        rows,
        chance: CHANCE_ACCURACY,
        n_runs: runset.traces.len(),
    })
}

/// One-decimal "m ± s" cell, the tables' visual convention.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{mean:.1} ± {std:.1}")
}

impl SummaryTable {
    /// Aligned plain-text rendering with the chance baseline as final row.
    pub fn to_text(&self) -> String {
        let mut lines: Vec<(String, String)> = Vec::new();
        for row in &self.rows {
            let name = if row.is_in_domain {
                format!("{} (in-domain)", row.dataset)
            } else {
                row.dataset.to_string()
            };
            lines.push((name, format_cell(row.mean, row.std)));
        }
        lines.push((
            "Chance performance".to_string(),
            format!("{:.1}", self.chance),
        ));

        let width = lines.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        let mut out = format!(
            "{} (in-domain {}, {} runs)\n",
            self.runset_label, self.in_domain, self.n_runs
        );
        for (name, cell) in lines {
            out.push_str(&format!("{name:<width$}  {cell}\n"));
        }
        out
    }

    /// CSV rendering: `dataset,mean,std,role` with the chance row last.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,mean,std,role\n");
        for row in &self.rows {
            let role = if row.is_in_domain { "in_domain" } else { "ood" };
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.dataset, row.mean, row.std, role
            ));
        }
        out.push_str(&format!("Chance performance,{},,chance\n", self.chance));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::ScoreSeries;
    use std::collections::BTreeMap;

    fn trace(run: &str, steps: &[u64], ind: &[f64], ood: &[(&str, &[f64])]) -> EvalTrace {
        EvalTrace {
            run_id: run.to_string(),
            in_domain: DatasetId::new("IND"),
            in_domain_series: ScoreSeries::new(steps.to_vec(), ind.to_vec()),
            ood_series: ood
                .iter()
                .map(|(n, v)| {
                    (
                        DatasetId::new(*n),
                        ScoreSeries::new(steps.to_vec(), v.to_vec()),
                    )
                })
                .collect::<BTreeMap<_, _>>(),
        }
    }

    fn runset(traces: Vec<EvalTrace>) -> RunSet {
        RunSet {
            label: "fixture".to_string(),
            in_domain: DatasetId::new("IND"),
            traces,
        }
    }

    #[test]
    fn best_checkpoint_on_monotone_series() {
        let t = trace(
            "r",
            &[0, 10, 20],
            &[50.0, 70.0, 90.0],
            &[("A", &[1.0, 2.0, 3.0])],
        );
        assert_eq!(best_checkpoint(&t), 20);
    }

    #[test]
    fn best_checkpoint_tie_breaks_to_earliest() {
        let t = trace(
            "r",
            &[0, 10, 20],
            &[90.0, 70.0, 90.0],
            &[("A", &[1.0, 2.0, 3.0])],
        );
        assert_eq!(best_checkpoint(&t), 0);
    }

    #[test]
    fn best_checkpoint_interior_max() {
        let t = trace(
            "r",
            &[0, 10, 20],
            &[50.0, 95.0, 80.0],
            &[("A", &[1.0, 2.0, 3.0])],
        );
        assert_eq!(best_checkpoint(&t), 10);
    }

    #[test]
    fn identical_runs_have_zero_std() {
        let mk = |run: &str| {
            trace(
                run,
                &[0, 10],
                &[50.0, 80.0],
                &[("A", &[40.0, 60.0]), ("B", &[45.0, 55.0])],
            )
        };
        let table = summary_table(&runset(vec![mk("r1"), mk("r2"), mk("r3")])).unwrap();
        assert_eq!(table.n_runs, 3);
        for row in &table.rows {
            assert_eq!(row.std, 0.0);
        }
        assert_eq!(table.rows[0].mean, 80.0);
    }

    #[test]
    fn two_run_std_matches_hand_computed_value() {
        // best-step OOD accuracies {60, 70}: mean 65, sample std sqrt(50)
        let t1 = trace("r1", &[0, 10], &[50.0, 80.0], &[("A", &[40.0, 60.0])]);
        let t2 = trace("r2", &[0, 10], &[50.0, 82.0], &[("A", &[42.0, 70.0])]);
        let table = summary_table(&runset(vec![t1, t2])).unwrap();
        let row = table.rows.iter().find(|r| r.dataset.name() == "A").unwrap();
        assert!((row.mean - 65.0).abs() < 1e-12);
        assert!((row.std - 50.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(format!("{:.2}", row.std), "7.07");
    }

    #[test]
    fn cell_formatting_matches_table_style() {
        assert_eq!(format_cell(89.0, 5.9), "89.0 ± 5.9");
        assert_eq!(format_cell(65.0, 50.0f64.sqrt()), "65.0 ± 7.1");
    }

    #[test]
    fn single_run_reports_zero_std() {
        let t = trace("r1", &[0, 10], &[50.0, 80.0], &[("A", &[40.0, 60.0])]);
        let table = summary_table(&runset(vec![t])).unwrap();
        assert!(table.rows.iter().all(|r| r.std == 0.0));
    }

    #[test]
    fn table_is_invariant_to_trace_order() {
        let t1 = trace("r1", &[0, 10], &[50.0, 80.0], &[("A", &[40.0, 60.0])]);
        let t2 = trace("r2", &[0, 10], &[50.0, 82.0], &[("A", &[42.0, 70.0])]);
        let fwd = summary_table(&runset(vec![t1.clone(), t2.clone()])).unwrap();
        let rev = summary_table(&runset(vec![t2, t1])).unwrap();
        assert_eq!(fwd.rows, rev.rows);
    }

    #[test]
    fn means_stay_within_contributing_values() {
        let t1 = trace("r1", &[0, 10], &[50.0, 80.0], &[("A", &[40.0, 61.0])]);
        let t2 = trace("r2", &[0, 10], &[50.0, 82.0], &[("A", &[42.0, 70.0])]);
        let table = summary_table(&runset(vec![t1, t2])).unwrap();
        let row = table.rows.iter().find(|r| r.dataset.name() == "A").unwrap();
        assert!(row.mean >= 61.0 && row.mean <= 70.0);
    }

    #[test]
    fn missing_step_is_reported() {
        let mut t = trace("r1", &[0, 10], &[50.0, 80.0], &[("A", &[40.0, 60.0])]);
        // OOD series lacks the best in-domain step 10
        t.ood_series.insert(
            DatasetId::new("A"),
            ScoreSeries::new(vec![0, 20], vec![40.0, 60.0]),
        );
        let err = summary_table(&runset(vec![t])).unwrap_err();
        assert!(matches!(err, SummaryError::MissingStep { step: 10, .. }));
    }

    #[test]
    fn text_and_csv_renderings_include_chance_row() {
        let t = trace("r1", &[0, 10], &[50.0, 80.0], &[("A", &[40.0, 60.0])]);
        let table = summary_table(&runset(vec![t])).unwrap();
        let text = table.to_text();
        assert!(text.contains("IND (in-domain)"));
        assert!(text.contains("80.0 ± 0.0"));
        assert!(text.contains("Chance performance"));
        assert!(text.contains("50.0"));
        let csv = table.to_csv();
        assert!(csv.starts_with("dataset,mean,std,role\n"));
        assert!(csv.contains("Chance performance,50,,chance"));
        assert!(csv.contains("IND,80,0,in_domain"));
    }
}
