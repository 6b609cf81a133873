use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::{par, seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    /// Metric on the full (unresampled) data.
    pub point: f64,
    pub low: f64,
    pub high: f64,
    /// Mean over the non-degenerate resamples.
    pub mean: f64,
    pub resamples: usize,
    /// Resamples on which the metric was undefined; excluded from the interval.
    pub degenerate: usize,
    pub level: f64,
    pub seed: u64,
}

impl BootstrapInterval {
    pub fn half_width(&self) -> f64 {
        (self.high - self.low) / 2.0
    }
}

/// Linear-interpolation quantile of sorted data: position `(n - 1) q`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Row indices grouped by unit, groups in order of first appearance.
fn groups<U: Eq + Hash>(units: &[U]) -> Vec<Vec<usize>> {
    let mut index: HashMap<&U, usize> = HashMap::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (row, u) in units.iter().enumerate() {
        let g = *index.entry(u).or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[g].push(row);
    }
    out
}

/// Resample `r` draws `G` units with replacement using the generator seeded
/// by `derive(seed, r)`; each draw is `random_range(0..G)`.
fn resample_rows(groups: &[Vec<usize>], seed_value: u64, r: usize) -> Vec<usize> {
    let mut rng = seed::rng(seed::derive(seed_value, r as u64));
    let mut rows = Vec::new();
    for _ in 0..groups.len() {
        rows.extend_from_slice(&groups[rng.random_range(0..groups.len())]);
    }
    rows
}

fn check_args(b: usize, level: f64) -> Result<(), MetricError> {
    if b < 2 {
        return Err(MetricError::TooFewResamples(b));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::Level(level));
    }
    Ok(())
}

fn interval(point: f64, stats: Vec<Option<f64>>, level: f64, seed_value: u64) -> Result<BootstrapInterval, MetricError> {
    let resamples = stats.len();
    let mut values: Vec<f64> = stats.into_iter().flatten().collect();
    if values.is_empty() {
        return Err(MetricError::AllDegenerate);
    }
    let degenerate = resamples - values.len();
    values.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Ok(BootstrapInterval {
        point,
        low: percentile(&values, alpha / 2.0),
        high: percentile(&values, 1.0 - alpha / 2.0),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        resamples,
        degenerate,
        level,
        seed: seed_value,
    })
}

fn gather(v: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| v[i]).collect()
}

/// Percentile bootstrap over units (dialogues): every row of a unit travels
/// with it. Resamples on which `metric` fails are counted and skipped.
pub fn bootstrap_ci<U, F>(
    metric: F,
    preds: &[f64],
    labels: &[f64],
    units: &[U],
    b: usize,
    level: f64,
    seed_value: u64,
) -> Result<BootstrapInterval, MetricError>
where
    U: Eq + Hash + Sync,
    F: Fn(&[f64], &[f64]) -> Result<f64, MetricError> + Sync,
{
    check_args(b, level)?;
    if preds.len() != labels.len() || preds.len() != units.len() {
        return Err(MetricError::UnitMismatch(format!(
            "{} predictions, {} labels, {} unit ids",
            preds.len(),
            labels.len(),
            units.len()
        )));
    }
    let point = metric(preds, labels)?;
    let g = groups(units);
    let stats = par::map_range(b, |r| {
        let rows = resample_rows(&g, seed_value, r);
        metric(&gather(preds, &rows), &gather(labels, &rows)).ok()
    });
    interval(point, stats, level, seed_value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedResult {
    /// Interval of `metric(A) - metric(B)`.
    pub difference: BootstrapInterval,
    /// Zero lies outside the interval.
    pub significant: bool,
}

/// Paired bootstrap of the metric difference between two systems scored on
/// the same rows.
#[allow(clippy::too_many_arguments)]
pub fn paired_significance<U, F>(
    metric: F,
    preds_a: &[f64],
    preds_b: &[f64],
    labels: &[f64],
    units: &[U],
    b: usize,
    level: f64,
    seed_value: u64,
) -> Result<PairedResult, MetricError>
where
    U: Eq + Hash + Sync,
    F: Fn(&[f64], &[f64]) -> Result<f64, MetricError> + Sync,
{
    check_args(b, level)?;
    if preds_a.len() != labels.len() || preds_b.len() != labels.len() || units.len() != labels.len() {
        return Err(MetricError::UnitMismatch(format!(
            "{} / {} predictions for {} labels and {} unit ids",
            preds_a.len(),
            preds_b.len(),
            labels.len(),
            units.len()
        )));
    }
    let point = metric(preds_a, labels)? - metric(preds_b, labels)?;
    let g = groups(units);
    let stats = par::map_range(b, |r| {
        let rows = resample_rows(&g, seed_value, r);
        let y = gather(labels, &rows);
        let a = metric(&gather(preds_a, &rows), &y).ok()?;
        let b = metric(&gather(preds_b, &rows), &y).ok()?;
        Some(a - b)
    });
    let difference = interval(point, stats, level, seed_value)?;
    let significant = difference.low > 0.0 || difference.high < 0.0;
    Ok(PairedResult { difference, significant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{pearson_r, Metric};

    fn data(n_units: usize, seed_value: u64) -> (Vec<f64>, Vec<f64>, Vec<String>) {
        let mut rng = seed::rng(seed_value);
        let (mut p, mut y, mut u) = (Vec::new(), Vec::new(), Vec::new());
        for d in 0..n_units {
            for _ in 0..rng.random_range(1..6) {
                let label: f64 = rng.random_range(1.0..5.0);
                y.push(label);
                p.push(label + rng.random_range(-1.5..1.5));
                u.push(format!("d{d}"));
            }
        }
        (p, y, u)
    }

    /// Reference bootstrap written independently: explicit loops, unit
    /// lookup via a sorted list of distinct ids in first-appearance order,
    /// and a separately implemented interpolated quantile.
    fn reference(p: &[f64], y: &[f64], u: &[String], b: usize, seed_value: u64) -> (f64, f64) {
        let mut ids: Vec<&String> = Vec::new();
        for id in u {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        let mut stats = Vec::new();
        for r in 0..b {
            let mut rng = seed::rng(seed::derive(seed_value, r as u64));
            let (mut rp, mut ry) = (Vec::new(), Vec::new());
            for _ in 0..ids.len() {
                let pick = ids[rng.random_range(0..ids.len())];
                for i in 0..u.len() {
                    if &u[i] == pick {
                        rp.push(p[i]);
                        ry.push(y[i]);
                    }
                }
            }
            if let Ok(v) = pearson_r(&rp, &ry) {
                stats.push(v);
            }
        }
        stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |x: f64| {
            let pos = x * (stats.len() as f64 - 1.0);
            let i = pos as usize;
            if i + 1 >= stats.len() {
                stats[stats.len() - 1]
            } else {
                stats[i] * (1.0 - (pos - i as f64)) + stats[i + 1] * (pos - i as f64)
            }
        };
        (q(0.025), q(0.975))
    }

    #[test]
    fn matches_reference_implementation() {
        let (p, y, u) = data(60, 1);
        let ci = bootstrap_ci(pearson_r, &p, &y, &u, 2000, 0.95, 42).unwrap();
        let (lo, hi) = reference(&p, &y, &u, 2000, 42);
        assert!((ci.low - lo).abs() < 0.01 && (ci.high - hi).abs() < 0.01, "{ci:?} vs {lo} {hi}");
        assert!(ci.low <= ci.high);
    }

    #[test]
    fn deterministic_and_constant_metric() {
        let (p, y, u) = data(20, 2);
        let a = bootstrap_ci(pearson_r, &p, &y, &u, 200, 0.95, 7).unwrap();
        assert_eq!(a, bootstrap_ci(pearson_r, &p, &y, &u, 200, 0.95, 7).unwrap());
        let c = bootstrap_ci(|_: &[f64], _: &[f64]| Ok(0.25), &p, &y, &u, 50, 0.95, 7).unwrap();
        assert_eq!((c.low, c.point, c.high), (0.25, 0.25, 0.25));
        assert!(bootstrap_ci(pearson_r, &p, &y, &u, 1, 0.95, 7).is_err());
    }

    #[test]
    fn resampling_keeps_dialogues_whole() {
        let units = ["a", "a", "b", "c", "c", "c"];
        let g = groups(&units);
        assert_eq!(g, vec![vec![0, 1], vec![2], vec![3, 4, 5]]);
        for r in 0..50 {
            let rows = resample_rows(&g, 3, r);
            let mut i = 0;
            while i < rows.len() {
                let grp = g.iter().find(|grp| grp[0] == rows[i]).expect("starts a group");
                assert_eq!(&rows[i..i + grp.len()], grp.as_slice());
                i += grp.len();
            }
        }
    }

    #[test]
    fn paired_identical_and_dominant() {
        let (p, y, u) = data(30, 3);
        let same = paired_significance(pearson_r, &p, &p, &y, &u, 200, 0.95, 1).unwrap();
        assert_eq!((same.difference.low, same.difference.high), (0.0, 0.0));
        assert!(!same.significant);
        let noisy: Vec<f64> = y.iter().enumerate().map(|(i, v)| if i % 2 == 0 { 6.0 - v } else { v + 0.5 }).collect();
        let better = paired_significance(pearson_r, &y, &noisy, &y, &u, 200, 0.95, 1).unwrap();
        assert!(better.significant && better.difference.low > 0.0, "{better:?}");
        assert!(paired_significance(pearson_r, &p, &p[1..], &y, &u, 200, 0.95, 1).is_err());
    }

    #[test]
    fn paired_flag_matches_reference_on_near_tie() {
        let (p, y, u) = data(40, 4);
        let q: Vec<f64> = p.iter().enumerate().map(|(i, v)| v + if i % 3 == 0 { 0.02 } else { -0.01 }).collect();
        let res = paired_significance(pearson_r, &p, &q, &y, &u, 1000, 0.95, 5).unwrap();
        // Reference: same draws, explicit difference list.
        let g = groups(&u);
        let mut diffs: Vec<f64> = (0..1000)
            .filter_map(|r| {
                let rows = resample_rows(&g, 5, r);
                let yy: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                let a = pearson_r(&rows.iter().map(|&i| p[i]).collect::<Vec<_>>(), &yy).ok()?;
                let b = pearson_r(&rows.iter().map(|&i| q[i]).collect::<Vec<_>>(), &yy).ok()?;
                Some(a - b)
            })
            .collect();
        diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = percentile(&diffs, 0.025);
        let hi = percentile(&diffs, 0.975);
        assert_eq!(res.significant, lo > 0.0 || hi < 0.0);
        let f = |a: &[f64], b: &[f64]| Metric::FDissatisfactory.compute(a, b);
        assert!(paired_significance(f, &p, &q, &y, &u, 100, 0.95, 5).is_ok());
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(percentile(&[1.0], 0.9), 1.0);
        assert_eq!(percentile(&[0.0, 10.0], 0.25), 2.5);
    }
}
