//! Correlation, F-score on the dissatisfactory class, skewness and
//! dialogue-level bootstrap intervals.

mod bootstrap;
mod report;

pub use bootstrap::{bootstrap_ci, paired_significance, percentile, BootstrapInterval, PairedResult};
pub use report::{EvalReport, EvalRow, SignificanceRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scored;

pub const DISSATISFACTORY_THRESHOLD: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("{0} is undefined for constant input")]
    Degenerate(&'static str),
    #[error("bootstrap needs at least 2 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("confidence level must be in (0, 1), got {0}")]
    Level(f64),
    #[error("every bootstrap resample was degenerate")]
    AllDegenerate,
    #[error("paired inputs disagree: {0}")]
    UnitMismatch(String),
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// Sample Pearson correlation. Constant input is an error rather than 0.
pub fn pearson_r(pred: &[f64], label: &[f64]) -> Result<f64, MetricError> {
    check_pair(pred, label)?;
    if pred.len() < 2 {
        return Err(MetricError::TooShort { need: 2, got: pred.len() });
    }
    let n = pred.len() as f64;
    let mx = pred.iter().sum::<f64>() / n;
    let my = label.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pred.iter().zip(label) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::Degenerate("pearson correlation"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// F1 of the class `rating < threshold`. 0/0 precision or recall count as
/// 0; F with `P + R = 0` is 0 and flagged degenerate.
pub fn f_dissatisfactory(pred: &[f64], label: &[f64], threshold: f64) -> Result<Scored, MetricError> {
    check_pair(pred, label)?;
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (p, y) in pred.iter().zip(label) {
        match (*p < threshold, *y < threshold) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fne);
    if precision + recall == 0.0 {
        return Ok(Scored::degenerate(0.0));
    }
    Ok(Scored::new(2.0 * precision * recall / (precision + recall)))
}

/// Moment coefficient of skewness `m3 / m2^1.5` with central moments over n.
pub fn skewness(values: &[f64]) -> Result<f64, MetricError> {
    if values.len() < 3 {
        return Err(MetricError::TooShort { need: 3, got: values.len() });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 == 0.0 {
        return Err(MetricError::Degenerate("skewness"));
    }
    Ok(m3 / m2.powf(1.5))
}

/// Metrics reported in evaluation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Pearson,
    FDissatisfactory,
}

impl Metric {
    pub fn compute(self, pred: &[f64], label: &[f64]) -> Result<f64, MetricError> {
        match self {
            Metric::Pearson => pearson_r(pred, label),
            Metric::FDissatisfactory => Ok(f_dissatisfactory(pred, label, DISSATISFACTORY_THRESHOLD)?.value),
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            Metric::Pearson => "Correlation",
            Metric::FDissatisfactory => "F-dissatisfactory",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_anchors() {
        let x = [1.0, 2.0, 4.0, 7.0];
        assert!((pearson_r(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson_r(&[2., 4., 5., 1.], &[1., 5., 4., 2.]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(pearson_r(&[1., 1., 1.], &[1., 2., 3.]), Err(MetricError::Degenerate("pearson correlation")));
        assert!(pearson_r(&[1.0], &[1.0]).is_err());
        assert!(pearson_r(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn f_score_anchors() {
        let l = [1.0, 5.0, 2.0, 4.0];
        assert_eq!(f_dissatisfactory(&l, &l, 3.0).unwrap(), Scored::new(1.0));
        let f = f_dissatisfactory(&[2.5, 4.1, 3.2, 4.4], &l, 3.0).unwrap();
        assert!((f.value - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f_dissatisfactory(&[4.0, 5.0], &[3.0, 4.0], 3.0).unwrap(), Scored::degenerate(0.0));
        // A rating of exactly 3 is satisfactory.
        assert_eq!(f_dissatisfactory(&[3.0, 2.0], &[2.0, 2.0], 3.0).unwrap().value, 2.0 / 3.0);
    }

    #[test]
    fn skewness_anchors() {
        assert_eq!(skewness(&[1., 2., 3.]).unwrap(), 0.0);
        assert!((skewness(&[1., 1., 1., 5.]).unwrap() - 6.0 / 3f64.powf(1.5)).abs() < 1e-12);
        assert!((skewness(&[1., 1., 1., 5.]).unwrap() - 1.1547).abs() < 1e-4);
        assert!(skewness(&[2., 2., 2.]).is_err());
        assert!(skewness(&[1., 2.]).is_err());
    }

    fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
        // Textbook sum-of-products form.
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let syy: f64 = y.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    fn brute_f(p: &[f64], y: &[f64]) -> f64 {
        let pos_p: Vec<bool> = p.iter().map(|v| *v < 3.0).collect();
        let pos_y: Vec<bool> = y.iter().map(|v| *v < 3.0).collect();
        let tp = pos_p.iter().zip(&pos_y).filter(|(a, b)| **a && **b).count() as f64;
        let pp = pos_p.iter().filter(|a| **a).count() as f64;
        let ap = pos_y.iter().filter(|a| **a).count() as f64;
        // F1 = 2TP / (predicted positives + actual positives)
        if pp + ap == 0.0 || tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (pp + ap)
        }
    }

    fn brute_skew(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let raw = |k: i32| v.iter().map(|x| x.powi(k)).sum::<f64>() / n;
        let (m1, r2, r3) = (raw(1), raw(2), raw(3));
        let m2 = r2 - m1 * m1;
        let m3 = r3 - 3.0 * m1 * r2 + 2.0 * m1.powi(3);
        m3 / m2.powf(1.5)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn metrics_match_brute_force(v in proptest::collection::vec((1.0f64..5.0, 1.0f64..5.0), 3..40)) {
            let (p, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            prop_assert!((pearson_r(&p, &y).unwrap() - brute_pearson(&p, &y)).abs() < 1e-9);
            prop_assert!((f_dissatisfactory(&p, &y, 3.0).unwrap().value - brute_f(&p, &y)).abs() < 1e-9);
            prop_assert!((skewness(&p).unwrap() - brute_skew(&p)).abs() < 1e-9);
        }

        #[test]
        fn pearson_affine_invariance(v in proptest::collection::vec((1.0f64..5.0, 1.0f64..5.0), 3..30), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let (p, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let r = pearson_r(&p, &y).unwrap();
            let pos: Vec<f64> = p.iter().map(|x| a * x + b).collect();
            let neg: Vec<f64> = p.iter().map(|x| -a * x + b).collect();
            prop_assert!((pearson_r(&pos, &y).unwrap() - r).abs() < 1e-9);
            prop_assert!((pearson_r(&neg, &y).unwrap() + r).abs() < 1e-9);
        }

        #[test]
        fn f_ignores_moves_within_class(v in proptest::collection::vec((1.0f64..5.0, 1.0f64..5.0, 0.0f64..1.0), 1..30)) {
            let p: Vec<f64> = v.iter().map(|t| t.0).collect();
            let y: Vec<f64> = v.iter().map(|t| t.1).collect();
            // Move each prediction toward the scale end on its side.
            let moved: Vec<f64> = v.iter().map(|t| if t.0 < 3.0 { t.0 - t.2 * (t.0 - 1.0) } else { t.0 + t.2 * (5.0 - t.0) }).collect();
            prop_assert_eq!(f_dissatisfactory(&p, &y, 3.0).unwrap(), f_dissatisfactory(&moved, &y, 3.0).unwrap());
        }

        #[test]
        fn skewness_antisymmetry(v in proptest::collection::vec(1.0f64..5.0, 3..30)) {
            let mirrored: Vec<f64> = v.iter().map(|x| 6.0 - x).collect();
            if let Ok(s) = skewness(&v) {
                prop_assert!((s + skewness(&mirrored).unwrap()).abs() < 1e-9);
            }
        }
    }
}
