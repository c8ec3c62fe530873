//! Forward and backward numeric kernels on plain tensors.
//!
//! Shapes are validated by the tape before these run; kernels assume
//! consistent inputs.

use super::Tensor;

/// Output length of a 1-D convolution or pooling window sweep.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (len + 2 * padding - kernel) / stride + 1
}

/// Range of output positions `t` for which `t * stride + k - padding` lies in `[0, len)`.
fn valid_range(len: usize, out_len: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    let lo = if padding > k {
        (padding - k).div_ceil(stride)
    } else {
        0
    };
    // largest t with t*stride + k - padding <= len - 1
    let hi = if len + padding > k {
        ((len - 1 + padding - k) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

pub fn conv1d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, padding: usize) -> Tensor {
    let (n, c_in, len) = (x.dim(0), x.dim(1), x.dim(2));
    let (c_out, k_len) = (w.dim(0), w.dim(2));
    let out_len = conv_out_len(len, k_len, stride, padding);
    let xd = x.data();
    let wd = w.data();
    let mut y = vec![0.0; n * c_out * out_len];
    for s in 0..n {
        for co in 0..c_out {
            let row = &mut y[(s * c_out + co) * out_len..(s * c_out + co + 1) * out_len];
            row.fill(b.data()[co]);
            for ci in 0..c_in {
                let xin = &xd[(s * c_in + ci) * len..(s * c_in + ci + 1) * len];
                for k in 0..k_len {
                    let wv = wd[(co * c_in + ci) * k_len + k];
                    let (lo, hi) = valid_range(len, out_len, k, stride, padding);
                    for (t, out) in row.iter_mut().enumerate().take(hi).skip(lo) {
                        *out += wv * xin[t * stride + k - padding];
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, c_out, out_len], y).expect("conv1d output shape")
}

/// Returns `(d_input, d_kernel, d_bias)`.
pub fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    stride: usize,
    padding: usize,
) -> (Tensor, Tensor, Tensor) {
    let (n, c_in, len) = (x.dim(0), x.dim(1), x.dim(2));
    let (c_out, k_len) = (w.dim(0), w.dim(2));
    let out_len = dy.dim(2);
    let xd = x.data();
    let wd = w.data();
    let dyd = dy.data();
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; c_out];
    for s in 0..n {
        for co in 0..c_out {
            let grow = &dyd[(s * c_out + co) * out_len..(s * c_out + co + 1) * out_len];
            db[co] += grow.iter().sum::<f64>();
            for ci in 0..c_in {
                let base = (s * c_in + ci) * len;
                for k in 0..k_len {
                    let widx = (co * c_in + ci) * k_len + k;
                    let wv = wd[widx];
                    let (lo, hi) = valid_range(len, out_len, k, stride, padding);
                    let mut acc = 0.0;
                    for (t, &g) in grow.iter().enumerate().take(hi).skip(lo) {
                        let idx = base + t * stride + k - padding;
                        acc += g * xd[idx];
                        dx[idx] += g * wv;
                    }
                    dw[widx] += acc;
                }
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx).unwrap(),
        Tensor::new(w.shape().to_vec(), dw).unwrap(),
        Tensor::new(vec![c_out], db).unwrap(),
    )
}

/// Batch statistics for a `[N, C, T]` tensor: per-channel mean and biased variance.
pub fn channel_stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, c, len) = (x.dim(0), x.dim(1), x.dim(2));
    let count = (n * len) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut sum = 0.0;
        for s in 0..n {
            sum += x.data()[(s * c + ch) * len..(s * c + ch + 1) * len].iter().sum::<f64>();
        }
        let mu = sum / count;
        let mut sq = 0.0;
        for s in 0..n {
            for &v in &x.data()[(s * c + ch) * len..(s * c + ch + 1) * len] {
                sq += (v - mu) * (v - mu);
            }
        }
        mean[ch] = mu;
        var[ch] = sq / count;
    }
    (mean, var)
}

/// Per-channel affine normalization `gamma * (x - mean) * inv_std + beta`.
/// Also returns the normalized values `(x - mean) * inv_std`.
pub fn channel_normalize(
    x: &Tensor,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &Tensor,
    beta: &Tensor,
) -> (Tensor, Tensor) {
    let (n, c, len) = (x.dim(0), x.dim(1), x.dim(2));
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for s in 0..n {
        for ch in 0..c {
            let (g, b) = (gamma.data()[ch], beta.data()[ch]);
            for t in 0..len {
                let i = (s * c + ch) * len + t;
                let h = (x.data()[i] - mean[ch]) * inv_std[ch];
                xhat[i] = h;
                y[i] = g * h + b;
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), y).unwrap(),
        Tensor::new(x.shape().to_vec(), xhat).unwrap(),
    )
}

/// Backward through train-mode batch normalization. Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_train_backward(
    dy: &Tensor,
    xhat: &Tensor,
    inv_std: &[f64],
    gamma: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (n, c, len) = (dy.dim(0), dy.dim(1), dy.dim(2));
    let count = (n * len) as f64;
    let mut dx = vec![0.0; dy.len()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for ch in 0..c {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for s in 0..n {
            for t in 0..len {
                let i = (s * c + ch) * len + t;
                sum_dy += dy.data()[i];
                sum_dy_xhat += dy.data()[i] * xhat.data()[i];
            }
        }
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        let scale = gamma.data()[ch] * inv_std[ch] / count;
        for s in 0..n {
            for t in 0..len {
                let i = (s * c + ch) * len + t;
                dx[i] = scale * (count * dy.data()[i] - sum_dy - xhat.data()[i] * sum_dy_xhat);
            }
        }
    }
    (
        Tensor::new(dy.shape().to_vec(), dx).unwrap(),
        Tensor::new(vec![c], dgamma).unwrap(),
        Tensor::new(vec![c], dbeta).unwrap(),
    )
}

/// Backward through eval-mode (fixed statistics) normalization.
pub fn batchnorm_eval_backward(
    dy: &Tensor,
    xhat: &Tensor,
    inv_std: &[f64],
    gamma: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (n, c, len) = (dy.dim(0), dy.dim(1), dy.dim(2));
    let mut dx = vec![0.0; dy.len()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for s in 0..n {
        for ch in 0..c {
            let scale = gamma.data()[ch] * inv_std[ch];
            for t in 0..len {
                let i = (s * c + ch) * len + t;
                let g = dy.data()[i];
                dx[i] = g * scale;
                dgamma[ch] += g * xhat.data()[i];
                dbeta[ch] += g;
            }
        }
    }
    (
        Tensor::new(dy.shape().to_vec(), dx).unwrap(),
        Tensor::new(vec![c], dgamma).unwrap(),
        Tensor::new(vec![c], dbeta).unwrap(),
    )
}

/// `y = x · wᵀ + b` for `x: [N, d_in]`, `w: [d_out, d_in]`.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (n, d_in) = (x.dim(0), x.dim(1));
    let d_out = w.dim(0);
    let mut y = vec![0.0; n * d_out];
    for i in 0..n {
        let xr = &x.data()[i * d_in..(i + 1) * d_in];
        for o in 0..d_out {
            let wr = &w.data()[o * d_in..(o + 1) * d_in];
            y[i * d_out + o] = b.data()[o] + xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Tensor::new(vec![n, d_out], y).unwrap()
}

pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, d_in) = (x.dim(0), x.dim(1));
    let d_out = w.dim(0);
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; d_out];
    for i in 0..n {
        for o in 0..d_out {
            let g = dy.data()[i * d_out + o];
            db[o] += g;
            for j in 0..d_in {
                dx[i * d_in + j] += g * w.data()[o * d_in + j];
                dw[o * d_in + j] += g * x.data()[i * d_in + j];
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx).unwrap(),
        Tensor::new(w.shape().to_vec(), dw).unwrap(),
        Tensor::new(vec![d_out], db).unwrap(),
    )
}

/// `[A, B] · [C, B]ᵀ -> [A, C]`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (rows, d) = (a.dim(0), a.dim(1));
    let cols = b.dim(0);
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        let ar = &a.data()[i * d..(i + 1) * d];
        for j in 0..cols {
            let br = &b.data()[j * d..(j + 1) * d];
            out[i * cols + j] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::new(vec![rows, cols], out).unwrap()
}

pub fn transpose2d(a: &Tensor) -> Tensor {
    let (r, c) = (a.dim(0), a.dim(1));
    let mut out = vec![0.0; a.len()];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a.data()[i * c + j];
        }
    }
    Tensor::new(vec![c, r], out).unwrap()
}

/// Mean over the last axis of `[N, C, T]`.
pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let (n, c, len) = (x.dim(0), x.dim(1), x.dim(2));
    let data = x
        .data()
        .chunks(len)
        .map(|row| row.iter().sum::<f64>() / len as f64)
        .collect();
    Tensor::new(vec![n, c], data).unwrap()
}

/// Non-overlapping average pooling with window and stride `size`; trailing
/// positions that do not fill a window are dropped.
pub fn avg_pool1d(x: &Tensor, size: usize) -> Tensor {
    let (n, c, len) = (x.dim(0), x.dim(1), x.dim(2));
    let out_len = len / size;
    let mut out = Vec::with_capacity(n * c * out_len);
    for row in x.data().chunks(len) {
        for t in 0..out_len {
            out.push(row[t * size..(t + 1) * size].iter().sum::<f64>() / size as f64);
        }
    }
    Tensor::new(vec![n, c, out_len], out).unwrap()
}

/// Row-wise softmax on a 2-D tensor, stabilized by subtracting the row maximum.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let c = x.dim(1);
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / total));
    }
    Tensor::new(x.shape().to_vec(), out).unwrap()
}

/// Row-wise `x - logsumexp(x)`.
pub fn log_softmax_rows(x: &Tensor) -> Tensor {
    let c = x.dim(1);
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|v| v - lse));
    }
    Tensor::new(x.shape().to_vec(), out).unwrap()
}

/// Row-wise L2 norms clamped below at `eps`.
pub fn row_norms(x: &Tensor, eps: f64) -> Vec<f64> {
    let d = x.dim(1);
    if d == 0 {
        return vec![eps; x.dim(0)];
    }
    x.data()
        .chunks(d)
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt().max(eps))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_covers_padding() {
        // len 4, kernel 3, pad 1, stride 1: out_len 4
        assert_eq!(valid_range(4, 4, 0, 1, 1), (1, 4));
        assert_eq!(valid_range(4, 4, 1, 1, 1), (0, 4));
        assert_eq!(valid_range(4, 4, 2, 1, 1), (0, 3));
    }

    #[test]
    fn avg_pool_drops_tail() {
        let x = Tensor::new(vec![1, 1, 5], vec![1.0, 3.0, 5.0, 7.0, 100.0]).unwrap();
        assert_eq!(avg_pool1d(&x, 2).data(), &[2.0, 6.0]);
    }
}
