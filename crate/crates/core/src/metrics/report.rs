use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{BootstrapInterval, Metric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    /// Evaluation level, `turn` or `dialogue`.
    pub level: String,
    pub metrics: Vec<(Metric, BootstrapInterval)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub model_a: String,
    pub model_b: String,
    pub level: String,
    pub metric: Metric,
    pub difference: BootstrapInterval,
    pub significant: bool,
}

/// Model × metric table with bootstrap intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub significance: Vec<SignificanceRow>,
}

fn cell(ci: &BootstrapInterval) -> String {
    format!("{:.3} ± {:.3}", ci.point, ci.half_width())
}

impl EvalReport {
    /// Tab-separated table, one row per (model, level), cells formatted
    /// `point ± half-width`.
    pub fn to_table(&self) -> String {
        let metrics = [Metric::Pearson, Metric::FDissatisfactory];
        let mut out = String::from("model\tlevel");
        for m in metrics {
            write!(out, "\t{}", m.header()).expect("string write");
        }
        out.push('\n');
        for row in &self.rows {
            write!(out, "{}\t{}", row.model, row.level).expect("string write");
            for m in metrics {
                let v = row.metrics.iter().find(|(k, _)| *k == m).map_or_else(|| "-".into(), |(_, ci)| cell(ci));
                write!(out, "\t{v}").expect("string write");
            }
            out.push('\n');
        }
        if !self.significance.is_empty() {
            out.push_str("\nmodel_a\tmodel_b\tlevel\tmetric\tdifference\tlow\thigh\tsignificant\n");
            for s in &self.significance {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{}",
                    s.model_a,
                    s.model_b,
                    s.level,
                    s.metric.header(),
                    s.difference.point,
                    s.difference.low,
                    s.difference.high,
                    if s.significant { "yes" } else { "no" }
                )
                .expect("string write");
            }
        }
        out
    }
}
