//! Finite-difference gradient checking.
//!
//! The caller supplies a closure that rebuilds the loss graph from a given
//! parameter set. Analytic gradients from one backward pass are compared
//! against central differences taken over a sampled subset of entries.

use super::params::ParameterSet;
use super::tape::{Tape, Var};
use super::EngineError;

#[derive(Debug, Clone)]
pub struct GradCheckSettings {
    /// Central-difference half step.
    pub eps: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
    /// Below this magnitude the comparison falls back to absolute error.
    pub denom_floor: f64,
    /// Entries checked per tensor (evenly strided).
    pub max_per_tensor: usize,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        GradCheckSettings { eps: 1e-5, tol: 1e-6, denom_floor: 1e-6, max_per_tensor: 8 }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub pass: bool,
    pub checked: usize,
    pub worst_rel: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Compare analytic and numeric gradients of `build` with respect to every
/// parameter in `params`. `build` must register each parameter it uses under
/// its `ParameterSet` name and return the scalar loss node.
pub fn gradcheck<F>(
    params: &ParameterSet,
    settings: &GradCheckSettings,
    mut build: F,
) -> Result<GradCheckReport, EngineError>
where
    F: FnMut(&ParameterSet, &mut Tape) -> Var,
{
    let mut tape = Tape::new();
    let loss = build(params, &mut tape);
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        pass: true,
        checked: 0,
        worst_rel: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };

    let eval = |p: &ParameterSet, build: &mut F| -> f64 {
        let mut t = Tape::new();
        let l = build(p, &mut t);
        t.scalar_value(l)
    };

    for (name, grad) in &grads {
        let n = grad.numel();
        let stride = (n / settings.max_per_tensor).max(1);
        let mut idx = 0;
        while idx < n {
            let mut plus = params.clone();
            plus.get_mut(name)?.values_mut()[idx] += settings.eps;
            let f_plus = eval(&plus, &mut build);

            let mut minus = params.clone();
            minus.get_mut(name)?.values_mut()[idx] -= settings.eps;
            let f_minus = eval(&minus, &mut build);

            let numeric = (f_plus - f_minus) / (2.0 * settings.eps);
            let analytic = grad.values()[idx];
            let denom = analytic.abs().max(numeric.abs());
            let rel = if denom < settings.denom_floor {
                (analytic - numeric).abs()
            } else {
                (analytic - numeric).abs() / denom
            };
            report.checked += 1;
            if rel > report.worst_rel {
                report.worst_rel = rel;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
            idx += stride;
        }
    }
    report.pass = report.worst_rel <= settings.tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rng::Rng;
    use crate::engine::tensor::Tensor;

    #[test]
    fn passes_on_a_small_mlp() {
        let mut rng = Rng::new(11);
        let mut params = ParameterSet::new();
        params.insert("w1", Tensor::xavier(3, 4, &mut rng));
        params.insert("b1", Tensor::uniform(vec![4], 0.1, &mut rng));
        params.insert("w2", Tensor::xavier(4, 2, &mut rng));
        let x = Tensor::xavier(5, 3, &mut rng);
        let report = gradcheck(&params, &GradCheckSettings::default(), |p, tape| {
            let w1 = tape.param("w1", p.get("w1").unwrap());
            let b1 = tape.param("b1", p.get("b1").unwrap());
            let w2 = tape.param("w2", p.get("w2").unwrap());
            let xv = tape.constant(&x);
            let h = tape.matmul(xv, w1);
            let h = tape.add_bias(h, b1);
            let h = tape.tanh(h);
            let o = tape.matmul(h, w2);
            let o = tape.sigmoid(o);
            tape.mean_all(o)
        })
        .unwrap();
        assert!(report.pass, "worst rel {} at {}[{}]", report.worst_rel, report.worst_param, report.worst_index);
    }

    #[test]
    fn catches_a_wrong_gradient() {
        // tanh forward paired with a sigmoid-style "gradient" by abusing the
        // tape: build the loss with tanh but compare against sigmoid values.
        // Simplest honest trap: scale the loss in the numeric direction only.
        let mut params = ParameterSet::new();
        params.insert("w", Tensor::scalar(0.7));
        let mut flip = false;
        let report = gradcheck(&params, &GradCheckSettings::default(), move |p, tape| {
            let w = tape.param("w", p.get("w").unwrap());
            let scale = if flip { 2.0 } else { 1.0 };
            flip = true;
            tape.affine(w, scale, 0.0)
        })
        .unwrap();
        assert!(!report.pass);
    }
}
