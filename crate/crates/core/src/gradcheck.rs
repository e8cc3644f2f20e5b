//! Central finite-difference gradient checking.
//!
//! The checker re-evaluates the forward pass at perturbed inputs and never
//! consults the tape, so it is an independent oracle for every backward rule.

use crate::tensor::{Result, Tensor};

/// Outcome of a gradient check for one parameter tensor.
#[derive(Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares backward() gradients of `f(params)` against central finite
/// differences for every parameter, returning the per-parameter worst case.
///
/// `f` must build a fresh graph from the given leaves and return a scalar
/// loss. `h` is the perturbation step (1e-6 is the usual choice for f64).
pub fn check_gradients<F>(params: &[Tensor], f: F, h: f64) -> Result<Vec<GradCheckReport>>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    for p in params {
        p.zero_grad();
    }
    let loss = f(params)?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();

    let mut reports = Vec::with_capacity(params.len());
    for (pi, param) in params.iter().enumerate() {
        let base = param.to_vec();
        let mut worst = GradCheckReport {
            max_relative_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for j in 0..base.len() {
            let mut bumped = base.clone();
            bumped[j] = base[j] + h;
            param.set_data(&bumped);
            let plus = f(params)?.item();
            bumped[j] = base[j] - h;
            param.set_data(&bumped);
            let minus = f(params)?.item();
            param.set_data(&base);

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi][j];
            // the floor keeps central-difference roundoff on near-zero
            // gradients (|g| ~ 1e-8, absolute noise ~ 1e-11) from
            // registering as relative error
            let denom = a.abs().max(numeric.abs()).max(1e-5);
            let rel = (a - numeric).abs() / denom;
            if rel > worst.max_relative_error {
                worst = GradCheckReport {
                    max_relative_error: rel,
                    worst_index: j,
                    analytic: a,
                    numeric,
                };
            }
        }
        for p in params {
            p.zero_grad();
        }
        reports.push(worst);
    }
    Ok(reports)
}

/// Convenience wrapper: checks and asserts every parameter is within `tol`.
pub fn assert_gradients<F>(params: &[Tensor], f: F, h: f64, tol: f64)
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let reports = check_gradients(params, f, h).expect("gradient check forward pass failed");
    for (i, r) in reports.iter().enumerate() {
        assert!(
            r.max_relative_error < tol,
            "param {} failed gradient check: rel err {:.3e} at flat index {} (analytic {:.6e}, numeric {:.6e})",
            i,
            r.max_relative_error,
            r.worst_index,
            r.analytic,
            r.numeric
        );
    }
}
