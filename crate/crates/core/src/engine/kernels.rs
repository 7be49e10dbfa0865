//! Shared numeric kernels used by both the tape ops and tapeless inference.

/// out += a (m x k) * b (k x n)
pub fn matmul_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
}

/// da += dout (m x n) * b^T, i.e. da[i,kk] += dot(dout[i,:], b[kk,:])
pub fn matmul_grad_a(da: &mut [f64], dout: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let drow = &dout[i * n..(i + 1) * n];
        let arow = &mut da[i * k..(i + 1) * k];
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += drow[j] * brow[j];
            }
            arow[kk] += acc;
        }
    }
}

/// db += a^T (k x m) * dout (m x n), i.e. db[kk,:] += a[i,kk] * dout[i,:]
pub fn matmul_grad_b(db: &mut [f64], a: &[f64], dout: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let drow = &dout[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let brow = &mut db[kk * n..(kk + 1) * n];
            for j in 0..n {
                brow[j] += aik * drow[j];
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable log(1 + exp(x)).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// In-place stable softmax over `row`.
pub fn softmax_row(row: &mut [f64]) {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - mx).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Stable log-sum-exp of a row.
pub fn logsumexp(row: &[f64]) -> f64 {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|v| (v - mx).exp()).sum();
    mx + sum.ln()
}

/// 3x3 zero-padded convolution over an (s x t x c) grid with f filters,
/// followed by the logistic activation. Weight layout: w[f][(di*3+dj)*c + ch].
pub fn conv3x3_sigmoid(
    out: &mut [f64],
    input: &[f64],
    w: &[f64],
    b: &[f64],
    s: usize,
    t: usize,
    c: usize,
    f: usize,
) {
    debug_assert_eq!(input.len(), s * t * c);
    debug_assert_eq!(w.len(), f * 9 * c);
    debug_assert_eq!(b.len(), f);
    debug_assert_eq!(out.len(), s * t * f);
    for i in 0..s {
        for j in 0..t {
            let obase = (i * t + j) * f;
            for fi in 0..f {
                let wf = &w[fi * 9 * c..(fi + 1) * 9 * c];
                let mut acc = b[fi];
                for di in 0..3usize {
                    let ii = i as isize + di as isize - 1;
                    if ii < 0 || ii >= s as isize {
                        continue;
                    }
                    for dj in 0..3usize {
                        let jj = j as isize + dj as isize - 1;
                        if jj < 0 || jj >= t as isize {
                            continue;
                        }
                        let irow = &input[((ii as usize) * t + jj as usize) * c..][..c];
                        let wrow = &wf[(di * 3 + dj) * c..][..c];
                        for ch in 0..c {
                            acc += wrow[ch] * irow[ch];
                        }
                    }
                }
                out[obase + fi] = sigmoid(acc);
            }
        }
    }
}

/// Ceil-mode non-overlapping 2x2 max pooling over (s x t x f). Returns the
/// flat input index of each maximum for gradient scattering.
pub fn maxpool2x2(
    out: &mut [f64],
    arg: &mut [usize],
    input: &[f64],
    s: usize,
    t: usize,
    f: usize,
) {
    let so = s.div_ceil(2);
    let to = t.div_ceil(2);
    debug_assert_eq!(out.len(), so * to * f);
    for oi in 0..so {
        for oj in 0..to {
            for fi in 0..f {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for di in 0..2usize {
                    let ii = oi * 2 + di;
                    if ii >= s {
                        continue;
                    }
                    for dj in 0..2usize {
                        let jj = oj * 2 + dj;
                        if jj >= t {
                            continue;
                        }
                        let idx = (ii * t + jj) * f + fi;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (oi * to + oj) * f + fi;
                out[o] = best;
                arg[o] = best_idx;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_known() {
        // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut out = [0.0; 4];
        matmul_acc(&mut out, &a, &b, 2, 2, 2);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn sigmoid_extremes_stay_finite() {
        assert!(sigmoid(1e4) <= 1.0);
        assert!(sigmoid(-1e4) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(softplus(-1e4).is_finite());
        assert!(softplus(1e4).is_finite());
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut r = [1.0, 2.0, 3.0, 900.0];
        softmax_row(&mut r);
        let s: f64 = r.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(r.iter().all(|v| v.is_finite()));
    }
}
