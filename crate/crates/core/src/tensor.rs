//! Dense tensor kernels.
//!
//! A [`Tensor`] is a rank-1..=4 array of `f32` in row-major order with a
//! channels-first convention for images and feature maps (`[C, H, W]`,
//! kernels `[K, C, kh, kw]`). All operations here are pure functions:
//! identical inputs produce bit-identical outputs. Reductions (convolution,
//! pooling, dot products) accumulate in `f64` before rounding back to `f32`
//! so results are stable against summation-order concerns at these sizes.

use crate::error::{Error, Result};

/// Dense row-major `f32` array of rank 1 to 4.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, checking that the shape is rank 1..=4, every extent
    /// is at least 1, and the flat data length matches the shape product.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::Dim(format!(
                "tensor rank must be 1..=4, got {}",
                shape.len()
            )));
        }
        if let Some((axis, &e)) = shape.iter().enumerate().find(|(_, &e)| e == 0) {
            return Err(Error::Dim(format!(
                "tensor extent must be >= 1, axis {axis} has extent {e}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dim(format!(
                "shape {:?} implies {} elements but data has {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Result<Self> {
        let n: usize = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Element (c, h, w) of a rank-3 tensor; maps to `data[c*H*W + h*W + w]`.
    #[inline]
    pub fn at3(&self, c: usize, h: usize, w: usize) -> f32 {
        debug_assert_eq!(self.rank(), 3);
        let (hh, ww) = (self.shape[1], self.shape[2]);
        self.data[c * hh * ww + h * ww + w]
    }

    #[inline]
    pub fn set3(&mut self, c: usize, h: usize, w: usize, v: f32) {
        debug_assert_eq!(self.rank(), 3);
        let (hh, ww) = (self.shape[1], self.shape[2]);
        self.data[c * hh * ww + h * ww + w] = v;
    }

    /// Element (k, c, h, w) of a rank-4 tensor.
    #[inline]
    pub fn at4(&self, k: usize, c: usize, h: usize, w: usize) -> f32 {
        debug_assert_eq!(self.rank(), 4);
        let (cc, hh, ww) = (self.shape[1], self.shape[2], self.shape[3]);
        self.data[((k * cc + c) * hh + h) * ww + w]
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}

fn expect_rank(t: &Tensor, rank: usize, op: &str, role: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::Dim(format!(
            "{op}: {role} must be rank {rank}, got rank {} (shape {:?})",
            t.rank(),
            t.shape()
        )));
    }
    Ok(())
}

/// 2-D convolution with zero padding.
///
/// `input` is `[C, H, W]`, `kernel` is `[K, C, kh, kw]`, `bias` has length K.
/// Output is `[K, H', W']` with `H' = (H + 2*padding - kh) / stride + 1`.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &[f32],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    expect_rank(input, 3, "conv2d", "input")?;
    expect_rank(kernel, 4, "conv2d", "kernel")?;
    if stride == 0 {
        return Err(Error::Range("conv2d: stride must be positive".into()));
    }
    let (c_in, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let (k_out, kc, kh, kw) = (
        kernel.shape[0],
        kernel.shape[1],
        kernel.shape[2],
        kernel.shape[3],
    );
    if kc != c_in {
        return Err(Error::Dim(format!(
            "conv2d: kernel channel axis is {kc} but input channel axis is {c_in}"
        )));
    }
    if bias.len() != k_out {
        return Err(Error::Dim(format!(
            "conv2d: bias length {} but kernel output axis is {k_out}",
            bias.len()
        )));
    }
    let (ph, pw) = (h + 2 * padding, w + 2 * padding);
    if kh > ph || kw > pw {
        return Err(Error::Dim(format!(
            "conv2d: kernel window {kh}x{kw} exceeds padded input {ph}x{pw} (H axis {h}, W axis {w}, padding {padding})"
        )));
    }
    let out_h = (ph - kh) / stride + 1;
    let out_w = (pw - kw) / stride + 1;

    let mut out = vec![0.0f32; k_out * out_h * out_w];
    let in_plane = h * w;
    for k in 0..k_out {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = f64::from(bias[k]);
                // Top-left corner of the window in unpadded coordinates.
                let base_y = oy * stride;
                let base_x = ox * stride;
                for c in 0..c_in {
                    for ky in 0..kh {
                        let iy = base_y + ky;
                        if iy < padding || iy >= padding + h {
                            continue; // zero padding
                        }
                        let row = (iy - padding) * w;
                        for kx in 0..kw {
                            let ix = base_x + kx;
                            if ix < padding || ix >= padding + w {
                                continue;
                            }
                            let iv = input.data[c * in_plane + row + (ix - padding)];
                            let kv = kernel.at4(k, c, ky, kx);
                            acc += f64::from(iv) * f64::from(kv);
                        }
                    }
                }
                out[(k * out_h + oy) * out_w + ox] = acc as f32;
            }
        }
    }
    Tensor::new(vec![k_out, out_h, out_w], out)
}

/// Elementwise `max(0, x)`; shape preserved.
pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data.iter().map(|&v| v.max(0.0)).collect();
    Tensor {
        shape: input.shape.clone(),
        data,
    }
}

/// 2x2 max pooling with stride 2 on a `[C, H, W]` tensor. H and W must be even.
pub fn maxpool2d(input: &Tensor) -> Result<Tensor> {
    expect_rank(input, 3, "maxpool2d", "input")?;
    let (c, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Dim(format!(
            "maxpool2d: spatial extents must be even, got H axis {h}, W axis {w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0f32; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let (y, x) = (oy * 2, ox * 2);
                let m = input
                    .at3(ch, y, x)
                    .max(input.at3(ch, y, x + 1))
                    .max(input.at3(ch, y + 1, x))
                    .max(input.at3(ch, y + 1, x + 1));
                out[(ch * oh + oy) * ow + ox] = m;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// `out[i] = sum_j weight[i,j] * input[j] + bias[i]` with `weight` `[m, n]`.
pub fn linear(input: &[f32], weight: &Tensor, bias: &[f32]) -> Result<Vec<f32>> {
    expect_rank(weight, 2, "linear", "weight")?;
    let (m, n) = (weight.shape[0], weight.shape[1]);
    if input.len() != n {
        return Err(Error::Dim(format!(
            "linear: input length {} but weight column axis is {n}",
            input.len()
        )));
    }
    if bias.len() != m {
        return Err(Error::Dim(format!(
            "linear: bias length {} but weight row axis is {m}",
            bias.len()
        )));
    }
    let mut out = vec![0.0f32; m];
    for i in 0..m {
        let mut acc = f64::from(bias[i]);
        let row = &weight.data[i * n..(i + 1) * n];
        for j in 0..n {
            acc += f64::from(row[j]) * f64::from(input[j]);
        }
        out[i] = acc as f32;
    }
    Ok(out)
}

/// Per-channel spatial mean of a `[C, H, W]` tensor.
pub fn global_avg_pool(input: &Tensor) -> Result<Vec<f32>> {
    expect_rank(input, 3, "global_avg_pool", "input")?;
    let (c, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let plane = h * w;
    let mut out = vec![0.0f32; c];
    for ch in 0..c {
        let mut acc = 0.0f64;
        for &v in &input.data[ch * plane..(ch + 1) * plane] {
            acc += f64::from(v);
        }
        out[ch] = (acc / plane as f64) as f32;
    }
    Ok(out)
}

/// Source coordinate for align-corners bilinear sampling.
///
/// `out == 1` degenerates to index 0; otherwise the first and last output
/// samples land exactly on the first and last input samples.
#[inline]
fn align_corners_src(out_idx: usize, in_len: usize, out_len: usize) -> f64 {
    if out_len == 1 {
        0.0
    } else {
        out_idx as f64 * (in_len - 1) as f64 / (out_len - 1) as f64
    }
}

/// Bilinear resize of a `[C, h, w]` tensor to `[C, out_h, out_w]`
/// (align-corners convention).
///
/// When the output size equals the input size the result is bit-identical
/// to the input.
pub fn resize_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    expect_rank(input, 3, "resize_bilinear", "input")?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Dim(format!(
            "resize_bilinear: output extents must be >= 1, got {out_h}x{out_w}"
        )));
    }
    let (c, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let mut out = vec![0.0f32; c * out_h * out_w];
    for oy in 0..out_h {
        let sy = align_corners_src(oy, h, out_h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = align_corners_src(ox, w, out_w);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            for ch in 0..c {
                let v00 = f64::from(input.at3(ch, y0, x0));
                let v01 = f64::from(input.at3(ch, y0, x1));
                let v10 = f64::from(input.at3(ch, y1, x0));
                let v11 = f64::from(input.at3(ch, y1, x1));
                let top = v00 * (1.0 - fx) + v01 * fx;
                let bot = v10 * (1.0 - fx) + v11 * fx;
                out[(ch * out_h + oy) * out_w + ox] = (top * (1.0 - fy) + bot * fy) as f32;
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_tensor(rng: &mut SplitMix64, shape: Vec<usize>, lo: f32, hi: f32) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(lo, hi)).collect();
        Tensor::new(shape, data).unwrap()
    }

    /// Naive six-nested-loop convolution used as the oracle.
    fn conv2d_oracle(
        input: &Tensor,
        kernel: &Tensor,
        bias: &[f32],
        stride: usize,
        padding: usize,
    ) -> Tensor {
        let (c_in, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
        let (k_out, kh, kw) = (kernel.shape[0], kernel.shape[2], kernel.shape[3]);
        let out_h = (h + 2 * padding - kh) / stride + 1;
        let out_w = (w + 2 * padding - kw) / stride + 1;
        let mut out = Tensor::zeros(vec![k_out, out_h, out_w]).unwrap();
        for k in 0..k_out {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = f64::from(bias[k]);
                    for c in 0..c_in {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += f64::from(input.at3(c, iy as usize, ix as usize))
                                    * f64::from(kernel.at4(k, c, ky, kx));
                            }
                        }
                    }
                    out.set3(k, oy, ox, acc as f32);
                }
            }
        }
        out
    }

    fn max_abs_diff(a: &Tensor, b: &Tensor) -> f32 {
        assert_eq!(a.shape(), b.shape());
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f32::max)
    }

    #[test]
    fn tensor_new_validates_shape() {
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![1, 2, 3, 4, 5], vec![0.0; 120]).is_err());
    }

    #[test]
    fn tensor_set_get_roundtrip_indexing() {
        let mut t = Tensor::zeros(vec![2, 3, 4]).unwrap();
        let mut v = 0.0;
        for c in 0..2 {
            for h in 0..3 {
                for w in 0..4 {
                    t.set3(c, h, w, v);
                    v += 1.0;
                }
            }
        }
        // Row-major layout: data[c*H*W + h*W + w].
        let mut v = 0.0;
        for c in 0..2 {
            for h in 0..3 {
                for w in 0..4 {
                    assert_eq!(t.at3(c, h, w), v);
                    assert_eq!(t.data()[c * 12 + h * 4 + w], v);
                    v += 1.0;
                }
            }
        }
    }

    #[test]
    fn conv2d_identity_kernel() {
        let input = Tensor::filled(vec![1, 3, 3], 1.0).unwrap();
        let kernel = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let out = conv2d(&input, &kernel, &[0.0], 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn conv2d_sum_reduction() {
        let input = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let kernel = Tensor::filled(vec![1, 1, 2, 2], 1.0).unwrap();
        let out = conv2d(&input, &kernel, &[0.0], 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[10.0]);
    }

    #[test]
    fn conv2d_matches_oracle_fixture() {
        let mut rng = SplitMix64::new(101);
        let input = random_tensor(&mut rng, vec![2, 5, 5], -1.0, 1.0);
        let kernel = random_tensor(&mut rng, vec![3, 2, 3, 3], -1.0, 1.0);
        let bias: Vec<f32> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let got = conv2d(&input, &kernel, &bias, 1, 1).unwrap();
        let want = conv2d_oracle(&input, &kernel, &bias, 1, 1);
        assert_eq!(got.shape(), &[3, 5, 5]);
        assert!(max_abs_diff(&got, &want) <= 1e-6);
    }

    #[test]
    fn conv2d_matches_oracle_randomized() {
        let mut rng = SplitMix64::new(2024);
        for _ in 0..100 {
            let c = 1 + rng.below(3);
            let h = 3 + rng.below(5);
            let w = 3 + rng.below(5);
            let k = 1 + rng.below(3);
            let kh = 1 + rng.below(3.min(h));
            let kw = 1 + rng.below(3.min(w));
            let stride = 1 + rng.below(2);
            let padding = rng.below(2);
            let input = random_tensor(&mut rng, vec![c, h, w], -2.0, 2.0);
            let kernel = random_tensor(&mut rng, vec![k, c, kh, kw], -2.0, 2.0);
            let bias: Vec<f32> = (0..k).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let got = conv2d(&input, &kernel, &bias, stride, padding).unwrap();
            let want = conv2d_oracle(&input, &kernel, &bias, stride, padding);
            assert!(max_abs_diff(&got, &want) <= 1e-5);
        }
    }

    #[test]
    fn conv2d_shape_errors_name_axes() {
        let input = Tensor::zeros(vec![2, 4, 4]).unwrap();
        let kernel = Tensor::zeros(vec![1, 3, 3, 3]).unwrap();
        let err = conv2d(&input, &kernel, &[0.0], 1, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("channel"), "got: {msg}");

        let kernel = Tensor::zeros(vec![1, 2, 5, 5]).unwrap();
        let err = conv2d(&input, &kernel, &[0.0], 1, 0).unwrap_err();
        assert!(err.to_string().contains("5x5"), "got: {err}");
    }

    #[test]
    fn conv2d_is_linear_in_input() {
        let mut rng = SplitMix64::new(55);
        for _ in 0..20 {
            let x = random_tensor(&mut rng, vec![2, 6, 6], -1.0, 1.0);
            let y = random_tensor(&mut rng, vec![2, 6, 6], -1.0, 1.0);
            let kernel = random_tensor(&mut rng, vec![3, 2, 3, 3], -1.0, 1.0);
            let (a, b) = (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
            let mixed = Tensor::new(
                vec![2, 6, 6],
                x.data()
                    .iter()
                    .zip(y.data())
                    .map(|(&xv, &yv)| a * xv + b * yv)
                    .collect(),
            )
            .unwrap();
            let zero_bias = [0.0; 3];
            let lhs = conv2d(&mixed, &kernel, &zero_bias, 1, 1).unwrap();
            let cx = conv2d(&x, &kernel, &zero_bias, 1, 1).unwrap();
            let cy = conv2d(&y, &kernel, &zero_bias, 1, 1).unwrap();
            for ((&l, &cxv), &cyv) in lhs.data().iter().zip(cx.data()).zip(cy.data()) {
                let rhs = a * cxv + b * cyv;
                let scale = l.abs().max(rhs.abs()).max(1.0);
                assert!((l - rhs).abs() / scale <= 1e-5, "lhs {l} rhs {rhs}");
            }
        }
    }

    #[test]
    fn relu_basics() {
        let t = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);

        let nonneg = Tensor::new(vec![4], vec![0.0, 1.0, 0.5, 3.0]).unwrap();
        assert_eq!(relu(&nonneg), nonneg);
    }

    #[test]
    fn relu_matches_elementwise_oracle() {
        let mut rng = SplitMix64::new(9);
        for _ in 0..100 {
            let t = random_tensor(&mut rng, vec![2, 3, 4], -5.0, 5.0);
            let r = relu(&t);
            for (&o, &i) in r.data().iter().zip(t.data()) {
                assert_eq!(o, i.max(0.0));
            }
        }
    }

    #[test]
    fn maxpool_basics() {
        let t = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = maxpool2d(&t).unwrap();
        assert_eq!(p.shape(), &[1, 1, 1]);
        assert_eq!(p.data(), &[4.0]);

        let c = Tensor::filled(vec![2, 4, 4], 7.5).unwrap();
        let p = maxpool2d(&c).unwrap();
        assert_eq!(p.shape(), &[2, 2, 2]);
        assert!(p.data().iter().all(|&v| v == 7.5));
    }

    #[test]
    fn maxpool_rejects_odd_extents() {
        let t = Tensor::zeros(vec![1, 3, 4]).unwrap();
        let err = maxpool2d(&t).unwrap_err();
        assert!(err.to_string().contains("H axis 3"), "got: {err}");
    }

    #[test]
    fn maxpool_matches_sliding_window_oracle() {
        let mut rng = SplitMix64::new(31);
        for _ in 0..100 {
            let t = random_tensor(&mut rng, vec![3, 8, 8], -3.0, 3.0);
            let p = maxpool2d(&t).unwrap();
            for c in 0..3 {
                for oy in 0..4 {
                    for ox in 0..4 {
                        let mut m = f32::NEG_INFINITY;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                m = m.max(t.at3(c, oy * 2 + dy, ox * 2 + dx));
                            }
                        }
                        assert_eq!(p.at3(c, oy, ox), m);
                    }
                }
            }
        }
    }

    #[test]
    fn linear_identity_and_sum() {
        let eye = Tensor::new(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
            .unwrap();
        let out = linear(&[1.0, 2.0, 3.0], &eye, &[0.0; 3]).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0]);

        let ones = Tensor::filled(vec![1, 3], 1.0).unwrap();
        let out = linear(&[1.0, 2.0, 3.0], &ones, &[0.0]).unwrap();
        assert_eq!(out, vec![6.0]);
    }

    #[test]
    fn linear_matches_dot_oracle() {
        let mut rng = SplitMix64::new(77);
        for _ in 0..100 {
            let weight = random_tensor(&mut rng, vec![4, 7], -1.0, 1.0);
            let bias: Vec<f32> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let input: Vec<f32> = (0..7).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let out = linear(&input, &weight, &bias).unwrap();
            for i in 0..4 {
                let mut acc = f64::from(bias[i]);
                for j in 0..7 {
                    acc += f64::from(weight.data()[i * 7 + j]) * f64::from(input[j]);
                }
                assert!((out[i] - acc as f32).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn linear_dimension_errors() {
        let w = Tensor::zeros(vec![2, 3]).unwrap();
        assert!(linear(&[1.0, 2.0], &w, &[0.0, 0.0]).is_err());
        assert!(linear(&[1.0, 2.0, 3.0], &w, &[0.0]).is_err());
    }

    #[test]
    fn gap_basics() {
        let c = Tensor::filled(vec![2, 3, 3], 4.25).unwrap();
        assert_eq!(global_avg_pool(&c).unwrap(), vec![4.25, 4.25]);

        let t = Tensor::new(vec![1, 2, 2], vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        assert_eq!(global_avg_pool(&t).unwrap(), vec![3.0]);
    }

    #[test]
    fn gap_matches_summation_oracle() {
        let mut rng = SplitMix64::new(13);
        for _ in 0..100 {
            let t = random_tensor(&mut rng, vec![5, 4, 4], -2.0, 2.0);
            let g = global_avg_pool(&t).unwrap();
            for c in 0..5 {
                let mut acc = 0.0f64;
                for y in 0..4 {
                    for x in 0..4 {
                        acc += f64::from(t.at3(c, y, x));
                    }
                }
                assert!((g[c] - (acc / 16.0) as f32).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn resize_constant_map() {
        let t = Tensor::filled(vec![1, 2, 2], 3.5).unwrap();
        for &(h, w) in &[(1, 1), (3, 3), (5, 7), (2, 2)] {
            let r = resize_bilinear(&t, h, w).unwrap();
            assert_eq!(r.shape(), &[1, h, w]);
            assert!(r.data().iter().all(|&v| v == 3.5));
        }
    }

    #[test]
    fn resize_two_by_two_to_three_by_three() {
        let t = Tensor::new(vec![1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let r = resize_bilinear(&t, 3, 3).unwrap();
        let want = [0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0];
        for (&g, &w) in r.data().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-7, "got {g}, want {w}");
        }
    }

    #[test]
    fn resize_identity_size_is_bit_exact() {
        let mut rng = SplitMix64::new(5);
        let t = random_tensor(&mut rng, vec![3, 7, 9], -4.0, 4.0);
        let r = resize_bilinear(&t, 7, 9).unwrap();
        assert_eq!(r, t);
    }

    #[test]
    fn resize_output_within_input_bounds() {
        let mut rng = SplitMix64::new(21);
        for _ in 0..100 {
            let h = 1 + rng.below(6);
            let w = 1 + rng.below(6);
            let oh = 1 + rng.below(12);
            let ow = 1 + rng.below(12);
            let t = random_tensor(&mut rng, vec![2, h, w], -3.0, 3.0);
            let r = resize_bilinear(&t, oh, ow).unwrap();
            let (lo, hi) = (t.min(), t.max());
            for &v in r.data() {
                assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
            }
        }
    }

    #[test]
    fn resize_matches_closed_form_oracle() {
        // Independent oracle: evaluate the bilinear surface directly at each
        // align-corners sample point.
        let mut rng = SplitMix64::new(87);
        for _ in 0..100 {
            let h = 2 + rng.below(4);
            let w = 2 + rng.below(4);
            let oh = 1 + rng.below(9);
            let ow = 1 + rng.below(9);
            let t = random_tensor(&mut rng, vec![1, h, w], -1.0, 1.0);
            let r = resize_bilinear(&t, oh, ow).unwrap();
            for oy in 0..oh {
                for ox in 0..ow {
                    let sy = if oh == 1 {
                        0.0
                    } else {
                        oy as f64 * (h - 1) as f64 / (oh - 1) as f64
                    };
                    let sx = if ow == 1 {
                        0.0
                    } else {
                        ox as f64 * (w - 1) as f64 / (ow - 1) as f64
                    };
                    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                    let want = f64::from(t.at3(0, y0, x0)) * (1.0 - fy) * (1.0 - fx)
                        + f64::from(t.at3(0, y0, x1)) * (1.0 - fy) * fx
                        + f64::from(t.at3(0, y1, x0)) * fy * (1.0 - fx)
                        + f64::from(t.at3(0, y1, x1)) * fy * fx;
                    assert!((r.at3(0, oy, ox) - want as f32).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn ops_are_pure_and_bit_stable() {
        let mut rng = SplitMix64::new(42);
        let input = random_tensor(&mut rng, vec![2, 6, 6], -1.0, 1.0);
        let kernel = random_tensor(&mut rng, vec![3, 2, 3, 3], -1.0, 1.0);
        let bias = [0.1, -0.2, 0.3];
        let a = conv2d(&input, &kernel, &bias, 1, 1).unwrap();
        let b = conv2d(&input, &kernel, &bias, 1, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(relu(&a), relu(&b));
        assert_eq!(maxpool2d(&a).unwrap(), maxpool2d(&b).unwrap());
        assert_eq!(
            resize_bilinear(&a, 9, 11).unwrap(),
            resize_bilinear(&b, 9, 11).unwrap()
        );
    }
}
