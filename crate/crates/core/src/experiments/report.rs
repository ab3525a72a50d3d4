use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::io::fmt_f64;
use crate::stats::{mean, ols, sample_sd, LineFit};

/// Metrics of one repetition of one table cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RepRecord {
    pub experiment: String,
    pub method: String,
    pub d: usize,
    /// `ell` for length-calibrated runs, `beta` for coverage-calibrated ones.
    pub ell_or_beta: f64,
    pub n_cal: usize,
    pub rep: usize,
    pub metrics: Vec<(String, f64)>,
}

impl RepRecord {
    /// `experiment:method`, the value of the `experiment` CSV column.
    pub fn label(&self) -> String {
        format!("{}:{}", self.experiment, self.method)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(m, _)| m == name).map(|(_, v)| *v)
    }
}

/// Mean and standard deviation of one metric over the repetitions of a cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub experiment: String,
    pub method: String,
    pub d: usize,
    pub ell_or_beta: f64,
    pub n_cal: usize,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub reps: usize,
    pub seed: u64,
}

/// All repetitions of a study, in cell order then repetition order.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub records: Vec<RepRecord>,
}

type CellKey = (String, String, usize, u64, usize, String);

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>, seed: u64, records: Vec<RepRecord>) -> Self {
        Self { experiment: experiment.into(), seed, records }
    }

    /// One aggregate per (cell, metric), in order of first appearance.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut keys: Vec<CellKey> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        for rec in &self.records {
            for (metric, v) in &rec.metrics {
                let key = (
                    rec.experiment.clone(),
                    rec.method.clone(),
                    rec.d,
                    rec.ell_or_beta.to_bits(),
                    rec.n_cal,
                    metric.clone(),
                );
                match keys.iter().position(|k| *k == key) {
                    Some(i) => values[i].push(*v),
                    None => {
                        keys.push(key);
                        values.push(vec![*v]);
                    }
                }
            }
        }
        keys.into_iter()
            .zip(values)
            .map(|((experiment, method, d, param, n_cal, metric), vals)| Aggregate {
                experiment,
                method,
                d,
                ell_or_beta: f64::from_bits(param),
                n_cal,
                metric,
                mean: mean(&vals),
                sd: sample_sd(&vals),
                reps: vals.len(),
                seed: self.seed,
            })
            .collect()
    }

    pub fn aggregate(&self, method: &str, d: usize, ell_or_beta: f64, n_cal: usize, metric: &str) -> Option<Aggregate> {
        self.aggregates().into_iter().find(|a| {
            a.method == method && a.d == d && a.ell_or_beta == ell_or_beta && a.n_cal == n_cal && a.metric == metric
        })
    }

    /// Least-squares slope of `log(mean metric)` against `log N` over the
    /// cells of `method`.
    pub fn loglog_slope(&self, method: &str, metric: &str) -> LineFit {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .aggregates()
            .iter()
            .filter(|a| a.method == method && a.metric == metric)
            .map(|a| ((a.n_cal as f64).ln(), a.mean.ln()))
            .unzip();
        ols(&xs, &ys)
    }

    /// Long format: `experiment,d,ell_or_beta,N,rep,metric,value`.
    pub fn long_csv(&self) -> String {
        let mut out = String::from("experiment,d,ell_or_beta,N,rep,metric,value\n");
        for rec in &self.records {
            let label = rec.label();
            for (metric, v) in &rec.metrics {
                let _ = writeln!(
                    out,
                    "{label},{},{},{},{},{metric},{}",
                    rec.d,
                    fmt_f64(rec.ell_or_beta),
                    rec.n_cal,
                    rec.rep,
                    fmt_f64(*v)
                );
            }
        }
        out
    }

    /// Per-cell summary: `experiment,d,ell_or_beta,N,metric,mean,sd,reps,seed`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("experiment,d,ell_or_beta,N,metric,mean,sd,reps,seed\n");
        for a in self.aggregates() {
            let _ = writeln!(
                out,
                "{}:{},{},{},{},{},{},{},{},{}",
                a.experiment,
                a.method,
                a.d,
                fmt_f64(a.ell_or_beta),
                a.n_cal,
                a.metric,
                fmt_f64(a.mean),
                fmt_f64(a.sd),
                a.reps,
                a.seed
            );
        }
        out
    }

    /// Plot-ready `N,method,metric,mean,sd`.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("N,method,metric,mean,sd\n");
        for a in self.aggregates() {
            let _ = writeln!(out, "{},{},{},{},{}", a.n_cal, a.method, a.metric, fmt_f64(a.mean), fmt_f64(a.sd));
        }
        out
    }

    pub fn write_long_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.long_csv())?;
        Ok(())
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.summary_csv())?;
        Ok(())
    }

    pub fn write_plot_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.plot_csv())?;
        Ok(())
    }
}
