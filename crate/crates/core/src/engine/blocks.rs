//! Reusable model blocks: a batched GRU cell on the tape and a matching
//! single-row tapeless step for inference.

use super::kernels;
use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Gate column layout within the fused 3h weight matrices: reset, update,
/// candidate.
pub const GATES: usize = 3;

/// One batched GRU step on the tape.
///
/// `x` is (B x in), `h` is (B x hidden); `wx` (in x 3h), `wh` (hidden x 3h),
/// `b` (3h). Returns the next hidden state (B x hidden).
pub fn gru_step(tape: &mut Tape, x: Var, h: Var, wx: Var, wh: Var, b: Var) -> Var {
    let hidden = tape.shape(h)[1];
    let xw = tape.matmul(x, wx);
    let pre_x = tape.add_bias(xw, b);
    let pre_h = tape.matmul(h, wh);

    let rx = tape.slice_cols(pre_x, 0, hidden);
    let rh = tape.slice_cols(pre_h, 0, hidden);
    let r_sum = tape.add(rx, rh);
    let r = tape.sigmoid(r_sum);

    let ux = tape.slice_cols(pre_x, hidden, 2 * hidden);
    let uh = tape.slice_cols(pre_h, hidden, 2 * hidden);
    let u_sum = tape.add(ux, uh);
    let u = tape.sigmoid(u_sum);

    let nx = tape.slice_cols(pre_x, 2 * hidden, 3 * hidden);
    let nh = tape.slice_cols(pre_h, 2 * hidden, 3 * hidden);
    let gated = tape.mul(r, nh);
    let n_sum = tape.add(nx, gated);
    let n = tape.tanh(n_sum);

    let keep = tape.mul(u, h);
    let one_minus_u = tape.affine(u, -1.0, 1.0);
    let fresh = tape.mul(one_minus_u, n);
    tape.add(fresh, keep)
}

/// Masked variant: rows with mask 0 keep their previous hidden state. `mask`
/// must be (B x hidden) with each row all-ones or all-zeros.
pub fn gru_step_masked(
    tape: &mut Tape,
    x: Var,
    h: Var,
    wx: Var,
    wh: Var,
    b: Var,
    mask: Var,
) -> Var {
    let next = gru_step(tape, x, h, wx, wh, b);
    let fresh = tape.mul(next, mask);
    let inv = tape.affine(mask, -1.0, 1.0);
    let kept = tape.mul(h, inv);
    tape.add(fresh, kept)
}

/// Tapeless single-row GRU step; `h` is updated in place.
pub fn gru_step_infer(x: &[f64], h: &mut [f64], wx: &Tensor, wh: &Tensor, b: &Tensor) {
    let hidden = h.len();
    let mut pre_x = b.values().to_vec();
    kernels::matmul_acc(&mut pre_x, x, wx.values(), 1, x.len(), GATES * hidden);
    let mut pre_h = vec![0.0; GATES * hidden];
    kernels::matmul_acc(&mut pre_h, h, wh.values(), 1, hidden, GATES * hidden);
    for j in 0..hidden {
        let r = kernels::sigmoid(pre_x[j] + pre_h[j]);
        let u = kernels::sigmoid(pre_x[hidden + j] + pre_h[hidden + j]);
        let n = (pre_x[2 * hidden + j] + r * pre_h[2 * hidden + j]).tanh();
        h[j] = (1.0 - u) * n + u * h[j];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::gradcheck::{gradcheck, GradCheckSettings};
    use crate::engine::params::ParameterSet;
    use crate::engine::rng::Rng;

    fn gru_params(inp: usize, hidden: usize, rng: &mut Rng) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("wx", Tensor::xavier(inp, GATES * hidden, rng));
        p.insert("wh", Tensor::xavier(hidden, GATES * hidden, rng));
        p.insert("b", Tensor::uniform(vec![GATES * hidden], 0.1, rng));
        p
    }

    #[test]
    fn taped_and_tapeless_steps_agree() {
        let mut rng = Rng::new(3);
        let p = gru_params(4, 5, &mut rng);
        let x = Tensor::uniform(vec![1, 4], 1.0, &mut rng);
        let h0 = Tensor::uniform(vec![1, 5], 1.0, &mut rng);

        let mut tape = Tape::new();
        let xv = tape.constant(&x);
        let hv = tape.constant(&h0);
        let wx = tape.constant(p.get("wx").unwrap());
        let wh = tape.constant(p.get("wh").unwrap());
        let b = tape.constant(p.get("b").unwrap());
        let h1 = gru_step(&mut tape, xv, hv, wx, wh, b);
        let taped = tape.values(h1).to_vec();

        let mut h = h0.values().to_vec();
        gru_step_infer(
            x.values(),
            &mut h,
            p.get("wx").unwrap(),
            p.get("wh").unwrap(),
            p.get("b").unwrap(),
        );
        for (a, b) in taped.iter().zip(&h) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let mut rng = Rng::new(5);
        let p = gru_params(3, 4, &mut rng);
        let x = Tensor::uniform(vec![2, 3], 1.0, &mut rng);
        let h0 = Tensor::uniform(vec![2, 4], 1.0, &mut rng);
        let report = gradcheck(&p, &GradCheckSettings::default(), |p, tape| {
            let xv = tape.constant(&x);
            let hv = tape.constant(&h0);
            let wx = tape.param("wx", p.get("wx").unwrap());
            let wh = tape.param("wh", p.get("wh").unwrap());
            let b = tape.param("b", p.get("b").unwrap());
            let h1 = gru_step(tape, xv, hv, wx, wh, b);
            let h2 = gru_step(tape, xv, h1, wx, wh, b);
            tape.mean_all(h2)
        })
        .unwrap();
        assert!(report.pass, "worst {} at {}", report.worst_rel, report.worst_param);
    }

    #[test]
    fn masked_step_freezes_finished_rows() {
        let mut rng = Rng::new(8);
        let p = gru_params(3, 4, &mut rng);
        let x = Tensor::uniform(vec![2, 3], 1.0, &mut rng);
        let h0 = Tensor::uniform(vec![2, 4], 1.0, &mut rng);
        let mask = Tensor::new(vec![2, 4], vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap();
        let mut tape = Tape::new();
        let xv = tape.constant(&x);
        let hv = tape.constant(&h0);
        let wx = tape.constant(p.get("wx").unwrap());
        let wh = tape.constant(p.get("wh").unwrap());
        let b = tape.constant(p.get("b").unwrap());
        let mv = tape.constant(&mask);
        let h1 = gru_step_masked(&mut tape, xv, hv, wx, wh, b, mv);
        let out = tape.values(h1);
        // Row 1 frozen, row 0 updated.
        assert_eq!(&out[4..8], &h0.values()[4..8]);
        assert_ne!(&out[0..4], &h0.values()[0..4]);
    }
}
