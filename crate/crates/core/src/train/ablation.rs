//! Component ablations over several seeds.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Switches, TrainConfig};
use super::trainer::{BatchSink, Evaluation, JsonLinesLog, NullSink, Trainer};
use crate::data::WindowedDataset;
use crate::error::Result;
use crate::model::DualPathNetwork;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub switches: Switches,
}

impl AblationVariant {
    pub fn new(name: impl Into<String>, switches: Switches) -> Self {
        Self {
            name: name.into(),
            switches,
        }
    }

    /// Row label in the `+ DPFE + CL` style; all four on is `full`,
    /// all four off is `baseline`.
    pub fn from_switches(switches: Switches) -> Self {
        let name = if switches == Switches::all() {
            "full".to_string()
        } else if switches == Switches::none() {
            "baseline".to_string()
        } else {
            [
                ("DPFE", switches.dpfe),
                ("CL", switches.cl),
                ("CGM", switches.cgm),
                ("DA", switches.da),
            ]
            .iter()
            .filter(|(_, on)| *on)
            .map(|(n, _)| format!("+ {n}"))
            .collect::<Vec<_>>()
            .join(" ")
        };
        Self::new(name, switches)
    }

    fn slug(&self) -> String {
        let s: String = self
            .name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
            .collect();
        s.trim_matches('_').to_string()
    }
}

/// The nine component combinations of the published ablation table.
pub fn table_grid() -> Vec<AblationVariant> {
    let s = |dpfe, cl, cgm, da| Switches { dpfe, cl, cgm, da };
    [
        s(false, false, false, false),
        s(true, false, false, false),
        s(true, true, false, false),
        s(true, false, true, false),
        s(true, false, false, true),
        s(true, true, true, false),
        s(true, false, true, true),
        s(true, true, false, true),
        s(true, true, true, true),
    ]
    .into_iter()
    .map(AblationVariant::from_switches)
    .collect()
}

/// The full model followed by each variant with exactly one component removed.
pub fn leave_one_out_grid() -> Vec<AblationVariant> {
    let full = Switches::all();
    vec![
        AblationVariant::new("full", full),
        AblationVariant::new("w/o DPFE", Switches { dpfe: false, ..full }),
        AblationVariant::new("w/o CL", Switches { cl: false, ..full }),
        AblationVariant::new("w/o CGM", Switches { cgm: false, ..full }),
        AblationVariant::new("w/o DA", Switches { da: false, ..full }),
    ]
}

/// Test metrics of one trained model. Precision and recall are macro averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub res_accuracy: f64,
    pub dense_accuracy: Option<f64>,
}

impl RunMetrics {
    pub fn from_evaluation(seed: u64, e: &Evaluation) -> Self {
        let r = &e.report;
        Self {
            seed,
            accuracy: r.accuracy,
            precision: r.precision_macro,
            recall: r.recall_macro,
            f1: r.f1_macro,
            precision_weighted: r.precision_weighted,
            recall_weighted: r.recall_weighted,
            f1_weighted: r.f1_weighted,
            res_accuracy: e.res_accuracy,
            dense_accuracy: e.dense_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub dense_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub runs: Vec<RunMetrics>,
    pub median: MedianMetrics,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

/// Median; the mean of the two middle values for an even count.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

impl AblationRow {
    fn new(variant: AblationVariant, runs: Vec<RunMetrics>) -> Self {
        let col = |f: fn(&RunMetrics) -> f64| median(&runs.iter().map(f).collect::<Vec<_>>());
        let dense: Option<Vec<f64>> = runs.iter().map(|r| r.dense_accuracy).collect();
        let median = MedianMetrics {
            accuracy: col(|r| r.accuracy),
            precision: col(|r| r.precision),
            recall: col(|r| r.recall),
            f1: col(|r| r.f1),
            dense_accuracy: dense.map(|d| median(&d)),
        };
        Self { variant, runs, median }
    }
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant.name == name)
    }

    /// Component marks followed by median ACC (%), macro precision, macro recall and F1.
    pub fn table(&self) -> String {
        let mark = |on: bool| if on { "✓" } else { "✗" };
        let mut out = format!(
            "{:<22} {:^5} {:^5} {:^5} {:^5} {:>8} {:>9} {:>8} {:>8}\n",
            "Method", "DPFE", "CL", "CGM", "DA", "ACC (%)", "Precision", "Recall", "F1"
        );
        for row in &self.rows {
            let s = row.variant.switches;
            let m = &row.median;
            out.push_str(&format!(
                "{:<22} {:^5} {:^5} {:^5} {:^5} {:>8.2} {:>9.4} {:>8.4} {:>8.4}\n",
                row.variant.name,
                mark(s.dpfe),
                mark(s.cl),
                mark(s.cgm),
                mark(s.da),
                100.0 * m.accuracy,
                m.precision,
                m.recall,
                m.f1
            ));
        }
        out
    }
}

/// Trains on `train` for `config.epochs` epochs and evaluates on `test`.
pub fn run_experiment(
    config: &TrainConfig,
    train: &WindowedDataset,
    test: &WindowedDataset,
    sink: &mut dyn BatchSink,
) -> Result<(DualPathNetwork, Evaluation)> {
    let mut trainer = Trainer::new(config.clone(), train.partition.clone(), train.classes())?;
    trainer.fit(train, sink)?;
    let evaluation = trainer.evaluate(test)?;
    Ok((trainer.into_network(), evaluation))
}

/// Trains every variant under every seed, in parallel, and reports per-seed
/// metrics with medians. When `log_dir` is given each run writes its own
/// training log there.
pub fn run_ablation(
    base: &TrainConfig,
    grid: &[AblationVariant],
    seeds: &[u64],
    train: &WindowedDataset,
    test: &WindowedDataset,
    log_dir: Option<&Path>,
) -> Result<AblationReport> {
    let jobs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(v, seed)| {
            let variant = &grid[v];
            let config = TrainConfig {
                switches: variant.switches,
                seed,
                ..base.clone()
            };
            let evaluation = match log_dir {
                Some(dir) => {
                    let file = File::create(dir.join(format!("{}-seed{seed}.jsonl", variant.slug())))?;
                    let mut sink = JsonLinesLog::new(BufWriter::new(file));
                    run_experiment(&config, train, test, &mut sink)?.1
                }
                None => run_experiment(&config, train, test, &mut NullSink)?.1,
            };
            log::info!(
                "{} seed {seed}: accuracy {:.4}",
                variant.name,
                evaluation.report.accuracy
            );
            Ok(RunMetrics::from_evaluation(seed, &evaluation))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut runs = results.into_iter();
    let rows = grid
        .iter()
        .map(|variant| AblationRow::new(variant.clone(), runs.by_ref().take(seeds.len()).collect()))
        .collect();
    Ok(AblationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn table_grid_labels() {
        let names: Vec<String> = table_grid().into_iter().map(|v| v.name).collect();
        assert_eq!(names[0], "baseline");
        assert_eq!(names[1], "+ DPFE");
        assert_eq!(names[4], "+ DPFE + DA");
        assert_eq!(names[8], "full");
        assert_eq!(names.len(), 9);
    }

    #[test]
    fn leave_one_out_removes_one_each() {
        let grid = leave_one_out_grid();
        for v in &grid[1..] {
            let s = v.switches;
            let on = [s.dpfe, s.cl, s.cgm, s.da].iter().filter(|b| **b).count();
            assert_eq!(on, 3);
        }
    }

    #[test]
    fn slug_is_file_safe() {
        assert_eq!(AblationVariant::new("w/o CL", Switches::all()).slug(), "w_o_cl");
    }
}
