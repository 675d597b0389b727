//! Central finite-difference oracle for the tape's analytic gradients.

use super::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn eval_scalar(t: &Tape, out: Var) -> Result<f64> {
    let v = t.value(out);
    if v.len() != 1 {
        return Err(Error::Evaluation(format!(
            "objective has shape {:?}, expected a scalar",
            v.shape()
        )));
    }
    let s = v.data()[0];
    if !s.is_finite() {
        return Err(Error::Evaluation(format!("objective evaluated to {s}")));
    }
    Ok(s)
}

/// Maximum relative error between the tape gradient of `f` at `x` and
/// central differences with step `eps`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let mut tape = Tape::new();
    let input = tape.leaf(x.clone());
    let out = f(&mut tape, input)?;
    eval_scalar(&tape, out)?;
    let grads = tape.backward(out)?;
    let zeros = vec![0.0; x.len()];
    let analytic = grads.wrt(input).unwrap_or(&zeros);

    let probe = |point: Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.leaf(point);
        let o = f(&mut t, v)?;
        eval_scalar(&t, o)
    };
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (probe(plus)? - probe(minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

/// Per-parameter outcome of [`grad_check_params`].
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
}

/// Finite-difference sweep over every scalar of every parameter in `store`.
/// `f` must build the objective from scratch on the given tape.
pub fn grad_check_params<F>(store: &ParamStore, f: F, eps: f64) -> Result<Vec<ParamCheck>>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    eval_scalar(&tape, out)?;
    let mut analytic_store = store.clone();
    analytic_store.zero_grad();
    tape.backward(out)?.accumulate_into(&mut analytic_store);

    let mut scratch = store.clone();
    let probe = |id: ParamId, i: usize, delta: f64, scratch: &mut ParamStore| -> Result<f64> {
        let original = scratch.value(id).data()[i];
        scratch.value_mut(id).data_mut()[i] = original + delta;
        let mut t = Tape::new();
        let o = f(&mut t, scratch);
        scratch.value_mut(id).data_mut()[i] = original;
        eval_scalar(&t, o?)
    };
    let mut report = Vec::with_capacity(store.len());
    for id in store.ids() {
        let mut worst = 0.0f64;
        for i in 0..store.value(id).len() {
            let numeric = (probe(id, i, eps, &mut scratch)? - probe(id, i, -eps, &mut scratch)?)
                / (2.0 * eps);
            worst = worst.max(relative_error(analytic_store.grad(id)[i], numeric));
        }
        report.push(ParamCheck {
            name: store.name(id).to_string(),
            max_rel_error: worst,
        });
    }
    Ok(report)
}
