//! Central finite-difference check of tape gradients.
//!
//! The numeric side only evaluates the forward pass, so it is independent
//! of every backward rule it checks.

use super::{Tape, Tensor, TensorError, Var};
use crate::par;

/// Denominator floor for the relative error, so that near-zero gradients
/// are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;
pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, element index, analytic, numeric) at the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub n_checked: usize,
}

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn evaluate<F>(params: &[Tensor], f: &F) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|p| tape.constant(p.clone()))
        .collect::<Result<_, _>>()?;
    let loss = f(&mut tape, &vars)?;
    Ok(tape.value(loss).item())
}

/// Analytic gradients of `f` at `params`.
pub fn analytic_gradients<F>(params: &[Tensor], f: &F) -> Result<(f64, Vec<Tensor>), TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|p| tape.param(p.clone()))
        .collect::<Result<_, _>>()?;
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), vars.iter().map(|v| grads.get(*v)).collect()))
}

/// Compares analytic gradients of `f` against central differences for every
/// element of every parameter.
pub fn check_gradients<F>(params: &[Tensor], eps: f64, f: F) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError> + Sync + Send,
{
    let (_, analytic) = analytic_gradients(params, &f)?;
    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.numel()).map(move |j| (i, j)))
        .collect();
    let numeric = par::try_map(&coords, |&(i, j)| {
        let mut plus = params.to_vec();
        plus[i].data_mut()[j] += eps;
        let mut minus = params.to_vec();
        minus[i].data_mut()[j] -= eps;
        Ok::<_, TensorError>((evaluate(&plus, &f)? - evaluate(&minus, &f)?) / (2.0 * eps))
    })?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        n_checked: coords.len(),
    };
    for (&(i, j), n) in coords.iter().zip(numeric) {
        let a = analytic[i].data()[j];
        let e = relative_error(a, n);
        if e > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(e);
            report.worst = Some((i, j, a, n));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn every_primitive_passes() {
        let mut rng = seed::rng(42);
        let params = vec![
            random(&[3, 4], &mut rng),
            random(&[4, 2], &mut rng),
            random(&[1, 2], &mut rng),
            random(&[3, 2], &mut rng),
        ];
        let target = random(&[3, 2], &mut rng);
        let mask = Tensor::matrix(3, 2, vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        let report = check_gradients(&params, DEFAULT_EPS, |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let h = t.add(h, v[2])?;
            let a = t.sigmoid(h)?;
            let b = t.tanh(v[3])?;
            let c = t.mul(a, b)?;
            let d = t.sub(c, v[3])?;
            let e = t.concat(&[d, a], 1)?;
            let e = t.slice(e, 1, 1, 3)?;
            let s = t.softmax(e, 1)?;
            let s0 = t.softmax(e, 0)?;
            let tr = t.transpose(s0)?;
            let m = t.matmul(s, tr)?;
            let m = t.scale(m, 0.7)?;
            let m = t.add_scalar(m, 0.1)?;
            let x = t.exp(m)?;
            let rows = t.concat(&[x, x], 0)?;
            let r = t.row(rows, 4)?;
            let r = t.clamp(r, -5.0, 5.0)?;
            let sum = t.sum(r)?;
            let pred = t.sigmoid(d)?;
            let mse = t.mean_squared_error(pred, &target, &mask)?;
            t.add(sum, mse)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        assert_eq!(report.n_checked, 12 + 8 + 2 + 6);
    }

    #[test]
    fn dropout_with_fixed_mask_passes() {
        let params = vec![Tensor::row_vector(&[0.3, -0.2, 0.9, 0.1])];
        let report = check_gradients(&params, DEFAULT_EPS, |t, v| {
            let mut rng = seed::rng(3);
            let d = t.dropout(v[0], 0.5, true, &mut rng)?;
            let s = t.tanh(d)?;
            t.sum(s)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
    }
}
