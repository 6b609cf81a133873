use serde::{Deserialize, Serialize};

use super::{FeatureError, TurnFeatures, N_SCALARS};

/// Z-score statistics of the scalar block, fitted on training turns.
///
/// Columns with zero variance normalize to 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn fit(features: &[TurnFeatures]) -> Result<Self, FeatureError> {
        if features.is_empty() {
            return Err(FeatureError::EmptyTraining);
        }
        let n = features.len() as f64;
        let mut mean = vec![0.0; N_SCALARS];
        for f in features {
            for (m, x) in mean.iter_mut().zip(&f.scalars) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; N_SCALARS];
        for f in features {
            for ((v, x), m) in var.iter_mut().zip(&f.scalars).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn is_fitted(&self) -> bool {
        self.mean.len() == N_SCALARS && self.std.len() == N_SCALARS
    }

    pub fn normalize(&self, scalars: &[f64; N_SCALARS]) -> [f64; N_SCALARS] {
        let mut out = [0.0; N_SCALARS];
        for i in 0..N_SCALARS {
            let s = self.std[i];
            out[i] = if s > 1e-12 { (scalars[i] - self.mean[i]) / s } else { 0.0 };
        }
        out
    }
}
