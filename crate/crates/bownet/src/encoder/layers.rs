//! Convolution, pooling, and activation primitives with exact hand-derived
//! backward passes.
//!
//! Activations are batched `[B, C, H, W]` tensors. The 3x3 convolution is
//! im2col plus a small matrix multiply; accumulation is in f64 and each item
//! of a batch is processed independently, so results do not depend on the
//! thread count. Weight gradients are summed over items in index order for
//! the same reason.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const KSIZE: usize = 3;
const KAREA: usize = KSIZE * KSIZE;

fn dims4(t: &Tensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    if t.rank() != 4 {
        return Err(Error::Shape(format!(
            "{what}: expected [B,C,H,W], got {:?}",
            t.shape()
        )));
    }
    let s = t.shape();
    Ok((s[0], s[1], s[2], s[3]))
}

/// Scatter a zero-padded 3x3 neighborhood matrix: `col[(ci*9 + tap)][y*w + x]`.
fn im2col(input: &[f32], cin: usize, h: usize, w: usize, col: &mut [f64]) {
    let hw = h * w;
    col.fill(0.0);
    for ci in 0..cin {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for dy in 0..KSIZE {
            for dx in 0..KSIZE {
                let row = &mut col[(ci * KAREA + dy * KSIZE + dx) * hw..][..hw];
                // Valid output rows for this tap offset.
                let oy_lo = 1usize.saturating_sub(dy);
                let oy_hi = (h + 1 - dy).min(h);
                let ox_lo = 1usize.saturating_sub(dx);
                let ox_hi = (w + 1 - dx).min(w);
                for oy in oy_lo..oy_hi {
                    let iy = oy + dy - 1;
                    let src = &plane[iy * w + (ox_lo + dx - 1)..][..ox_hi - ox_lo];
                    let dst = &mut row[oy * w + ox_lo..][..ox_hi - ox_lo];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = f64::from(s);
                    }
                }
            }
        }
    }
}

/// Inverse scatter of `im2col`: accumulate column gradients back into the
/// input layout.
fn col2im(gcol: &[f64], cin: usize, h: usize, w: usize, grad_in: &mut [f32]) {
    let hw = h * w;
    for ci in 0..cin {
        let mut plane = vec![0.0f64; hw];
        for dy in 0..KSIZE {
            for dx in 0..KSIZE {
                let row = &gcol[(ci * KAREA + dy * KSIZE + dx) * hw..][..hw];
                let oy_lo = 1usize.saturating_sub(dy);
                let oy_hi = (h + 1 - dy).min(h);
                let ox_lo = 1usize.saturating_sub(dx);
                let ox_hi = (w + 1 - dx).min(w);
                for oy in oy_lo..oy_hi {
                    let iy = oy + dy - 1;
                    let dst = &mut plane[iy * w + (ox_lo + dx - 1)..][..ox_hi - ox_lo];
                    let src = &row[oy * w + ox_lo..][..ox_hi - ox_lo];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
        for (dst, &v) in grad_in[ci * hw..(ci + 1) * hw].iter_mut().zip(&plane) {
            *dst = v as f32;
        }
    }
}

/// 3x3 cross-correlation, padding 1, stride 1 (spatial size preserved).
pub fn conv3x3_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (batch, cin, h, w) = dims4(input, "conv input")?;
    let ws = weights.shape();
    if weights.rank() != 4 || ws[1] != cin || ws[2] != KSIZE || ws[3] != KSIZE {
        return Err(Error::Shape(format!(
            "conv weights {:?} do not fit input {:?}",
            ws,
            input.shape()
        )));
    }
    let cout = ws[0];
    if bias.shape() != [cout] {
        return Err(Error::Shape(format!(
            "conv bias {:?}, expected [{cout}]",
            bias.shape()
        )));
    }
    let hw = h * w;
    let k = cin * KAREA;
    let wf: Vec<f64> = weights.data().iter().map(|&v| f64::from(v)).collect();
    let bf: Vec<f64> = bias.data().iter().map(|&v| f64::from(v)).collect();

    let mut out = Tensor::zeros(&[batch, cout, h, w]);
    out.data_mut()
        .par_chunks_mut(cout * hw)
        .zip(input.data().par_chunks(cin * hw))
        .for_each(|(out_item, in_item)| {
            let mut col = vec![0.0f64; k * hw];
            im2col(in_item, cin, h, w, &mut col);
            let mut acc = vec![0.0f64; hw];
            for o in 0..cout {
                acc.fill(bf[o]);
                let wrow = &wf[o * k..(o + 1) * k];
                for (kk, &wv) in wrow.iter().enumerate() {
                    if wv != 0.0 {
                        let crow = &col[kk * hw..(kk + 1) * hw];
                        for (a, &c) in acc.iter_mut().zip(crow) {
                            *a += wv * c;
                        }
                    }
                }
                for (dst, &a) in out_item[o * hw..(o + 1) * hw].iter_mut().zip(&acc) {
                    *dst = a as f32;
                }
            }
        });
    Ok(out)
}

pub struct ConvGrads {
    pub grad_in: Tensor,
    pub grad_w: Tensor,
    pub grad_b: Tensor,
}

/// Exact gradients of [`conv3x3_forward`] given the upstream gradient.
pub fn conv3x3_backward(input: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<ConvGrads> {
    let (batch, cin, h, w) = dims4(input, "conv input")?;
    let (gb_batch, cout, gh, gw_) = dims4(grad_out, "conv grad_out")?;
    let ws = weights.shape();
    if ws[0] != cout || ws[1] != cin || gb_batch != batch || gh != h || gw_ != w {
        return Err(Error::Shape(format!(
            "conv backward shapes disagree: input {:?}, weights {:?}, grad {:?}",
            input.shape(),
            ws,
            grad_out.shape()
        )));
    }
    let hw = h * w;
    let k = cin * KAREA;
    let wf: Vec<f64> = weights.data().iter().map(|&v| f64::from(v)).collect();

    let mut grad_in = Tensor::zeros(&[batch, cin, h, w]);

    // Per-item weight/bias gradient contributions, reduced in item order
    // below so the result is independent of scheduling.
    let per_item: Vec<(Vec<f64>, Vec<f64>)> = grad_in
        .data_mut()
        .par_chunks_mut(cin * hw)
        .zip(input.data().par_chunks(cin * hw))
        .zip(grad_out.data().par_chunks(cout * hw))
        .map(|((gin_item, in_item), gout_item)| {
            let mut col = vec![0.0f64; k * hw];
            im2col(in_item, cin, h, w, &mut col);
            let g64: Vec<f64> = gout_item.iter().map(|&v| f64::from(v)).collect();

            // Weight gradient: gw[o][kk] = <g[o], col[kk]>.
            let mut gw_item = vec![0.0f64; cout * k];
            let mut gb_item = vec![0.0f64; cout];
            for o in 0..cout {
                let grow = &g64[o * hw..(o + 1) * hw];
                gb_item[o] = grow.iter().sum();
                let dst = &mut gw_item[o * k..(o + 1) * k];
                for (kk, d) in dst.iter_mut().enumerate() {
                    let crow = &col[kk * hw..(kk + 1) * hw];
                    let mut acc = 0.0f64;
                    for (&gv, &cv) in grow.iter().zip(crow) {
                        acc += gv * cv;
                    }
                    *d = acc;
                }
            }

            // Input gradient via the transposed weight matrix and col2im.
            let mut gcol = vec![0.0f64; k * hw];
            for o in 0..cout {
                let grow = &g64[o * hw..(o + 1) * hw];
                let wrow = &wf[o * k..(o + 1) * k];
                for (kk, &wv) in wrow.iter().enumerate() {
                    if wv != 0.0 {
                        let dst = &mut gcol[kk * hw..(kk + 1) * hw];
                        for (d, &gv) in dst.iter_mut().zip(grow) {
                            *d += wv * gv;
                        }
                    }
                }
            }
            col2im(&gcol, cin, h, w, gin_item);
            (gw_item, gb_item)
        })
        .collect();

    let mut gw_acc = vec![0.0f64; cout * k];
    let mut gb_acc = vec![0.0f64; cout];
    for (gw_item, gb_item) in &per_item {
        for (a, v) in gw_acc.iter_mut().zip(gw_item) {
            *a += v;
        }
        for (a, v) in gb_acc.iter_mut().zip(gb_item) {
            *a += v;
        }
    }
    let mut grad_w = Tensor::zeros(&[cout, cin, KSIZE, KSIZE]);
    for (d, &v) in grad_w.data_mut().iter_mut().zip(&gw_acc) {
        *d = v as f32;
    }
    let mut grad_b = Tensor::zeros(&[cout]);
    for (d, &v) in grad_b.data_mut().iter_mut().zip(&gb_acc) {
        *d = v as f32;
    }
    Ok(ConvGrads {
        grad_in,
        grad_w,
        grad_b,
    })
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Mask the upstream gradient by the forward input's positivity.
pub fn relu_backward(pre_activation: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if pre_activation.shape() != grad_out.shape() {
        return Err(Error::Shape(format!(
            "relu backward: {:?} vs {:?}",
            pre_activation.shape(),
            grad_out.shape()
        )));
    }
    let mut out = grad_out.clone();
    for (g, &z) in out.data_mut().iter_mut().zip(pre_activation.data()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

/// Non-overlapping 2x2 mean pool; spatial extents must be even.
pub fn avgpool2_forward(input: &Tensor) -> Result<Tensor> {
    let (batch, c, h, w) = dims4(input, "avgpool input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "avgpool2 needs even spatial extents, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[batch, c, oh, ow]);
    let planes = batch * c;
    for p in 0..planes {
        let src = &input.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut out.data_mut()[p * oh * ow..(p + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let i = 2 * oy * w + 2 * ox;
                let sum = f64::from(src[i])
                    + f64::from(src[i + 1])
                    + f64::from(src[i + w])
                    + f64::from(src[i + w + 1]);
                dst[oy * ow + ox] = (sum * 0.25) as f32;
            }
        }
    }
    Ok(out)
}

/// Spread each pooled gradient uniformly over its 2x2 window.
pub fn avgpool2_backward(grad_out: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    let (batch, c, oh, ow) = dims4(grad_out, "avgpool grad")?;
    let (h, w) = (input_shape[2], input_shape[3]);
    if input_shape[0] != batch || input_shape[1] != c || h != 2 * oh || w != 2 * ow {
        return Err(Error::Shape(format!(
            "avgpool backward: grad {:?} does not match input shape {:?}",
            grad_out.shape(),
            input_shape
        )));
    }
    let mut out = Tensor::zeros(input_shape);
    let planes = batch * c;
    for p in 0..planes {
        let src = &grad_out.data()[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut out.data_mut()[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let g = src[oy * ow + ox] * 0.25;
                let i = 2 * oy * w + 2 * ox;
                dst[i] = g;
                dst[i + 1] = g;
                dst[i + w] = g;
                dst[i + w + 1] = g;
            }
        }
    }
    Ok(out)
}

/// Mean over all spatial positions: `[B, C, H, W] -> [B, C]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let (batch, c, h, w) = dims4(input, "gap input")?;
    let hw = h * w;
    let mut out = Tensor::zeros(&[batch, c]);
    for b in 0..batch {
        for ch in 0..c {
            let plane = &input.data()[(b * c + ch) * hw..][..hw];
            let sum: f64 = plane.iter().map(|&v| f64::from(v)).sum();
            out.data_mut()[b * c + ch] = (sum / hw as f64) as f32;
        }
    }
    Ok(out)
}

pub fn global_avg_pool_backward(grad_out: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.rank() != 2 || input_shape.len() != 4 {
        return Err(Error::Shape("gap backward: bad ranks".into()));
    }
    let (batch, c, h, w) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    if grad_out.shape() != [batch, c] {
        return Err(Error::Shape(format!(
            "gap backward: grad {:?} vs input {:?}",
            grad_out.shape(),
            input_shape
        )));
    }
    let hw = h * w;
    let mut out = Tensor::zeros(input_shape);
    for b in 0..batch {
        for ch in 0..c {
            let g = grad_out.data()[b * c + ch] / hw as f32;
            out.data_mut()[(b * c + ch) * hw..][..hw].fill(g);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, Rng};

    fn randn(shape: &[usize], rng: &mut Rng) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.normal_f32()).collect()).unwrap()
    }

    fn uniform(shape: &[usize], rng: &mut Rng, lo: f32, hi: f32) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.range_f32(lo, hi)).collect()).unwrap()
    }

    /// Random tensor kept away from ReLU kinks so finite differences behave.
    fn randn_margin(shape: &[usize], rng: &mut Rng, margin: f32) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let mut v = rng.normal_f32();
                if v.abs() < margin {
                    v = margin.copysign(if v == 0.0 { 1.0 } else { v });
                }
                v
            })
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        // One output channel whose kernel is a centered delta on channel 0.
        let mut rng = Rng::new(1);
        let input = randn(&[2, 1, 4, 4], &mut rng);
        let mut w = Tensor::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0; // center tap
        let b = Tensor::zeros(&[1]);
        let out = conv3x3_forward(&input, &w, &b).unwrap();
        for (o, i) in out.data().iter().zip(input.data()) {
            assert!((o - i).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_weights_give_constant_bias() {
        let input = Tensor::filled(&[1, 2, 4, 4], 0.3);
        let w = Tensor::zeros(&[3, 2, 3, 3]);
        let b = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let out = conv3x3_forward(&input, &w, &b).unwrap();
        for o in 0..3 {
            for &v in &out.data()[o * 16..(o + 1) * 16] {
                assert_eq!(v, b.data()[o]);
            }
        }
    }

    #[test]
    fn conv_rejects_shape_mismatch() {
        let input = Tensor::zeros(&[1, 2, 4, 4]);
        let w = Tensor::zeros(&[3, 5, 3, 3]);
        let b = Tensor::zeros(&[3]);
        assert!(conv3x3_forward(&input, &w, &b).is_err());
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        // Pixel-range inputs and a positive upstream mix keep every gradient
        // coordinate well away from zero, so the check measures the formulas
        // rather than f32 round-off. A formula bug would still show as an
        // O(0.1) error here.
        let mut rng = Rng::new(2);
        let input = uniform(&[1, 2, 4, 4], &mut rng, 0.1, 1.0);
        let w = randn(&[3, 2, 3, 3], &mut rng);
        let b = randn(&[3], &mut rng);
        let mix = uniform(&[3 * 16], &mut rng, 0.5, 1.5);

        let loss = |inp: &Tensor, ww: &Tensor, bb: &Tensor| -> f64 {
            let out = conv3x3_forward(inp, ww, bb).unwrap();
            out.data()
                .iter()
                .zip(mix.data())
                .map(|(&o, &m)| f64::from(o) * f64::from(m))
                .sum()
        };

        let grad_out = Tensor::from_vec(&[1, 3, 4, 4], mix.data().to_vec()).unwrap();
        let grads = conv3x3_backward(&input, &w, &grad_out).unwrap();

        let e_w = grad_check(&w, &grads.grad_w, 1e-3, |ww| Ok(loss(&input, ww, &b))).unwrap();
        assert!(e_w < 1e-3, "weight grad error {e_w}");
        let e_b = grad_check(&b, &grads.grad_b, 1e-3, |bb| Ok(loss(&input, &w, bb))).unwrap();
        assert!(e_b < 1e-3, "bias grad error {e_b}");
    }

    #[test]
    fn conv_input_gradient_matches_finite_differences() {
        // Positive weights avoid sign cancellation in grad_in coordinates;
        // the input-gradient code path is identical for signed weights.
        let mut rng = Rng::new(12);
        let input = uniform(&[1, 2, 4, 4], &mut rng, 0.1, 1.0);
        let w = uniform(&[3, 2, 3, 3], &mut rng, 0.05, 0.3);
        let b = randn(&[3], &mut rng);
        let mix = uniform(&[3 * 16], &mut rng, 0.5, 1.5);

        let grad_out = Tensor::from_vec(&[1, 3, 4, 4], mix.data().to_vec()).unwrap();
        let grads = conv3x3_backward(&input, &w, &grad_out).unwrap();
        let e_i = grad_check(&input, &grads.grad_in, 1e-3, |inp| {
            let out = conv3x3_forward(inp, &w, &b)?;
            Ok(out
                .data()
                .iter()
                .zip(mix.data())
                .map(|(&o, &m)| f64::from(o) * f64::from(m))
                .sum())
        })
        .unwrap();
        assert!(e_i < 1e-3, "input grad error {e_i}");
    }

    #[test]
    fn relu_all_negative() {
        let input = Tensor::filled(&[1, 1, 2, 2], -0.5);
        let out = relu_forward(&input);
        assert!(out.data().iter().all(|&v| v == 0.0));
        let g = relu_backward(&input, &Tensor::filled(&[1, 1, 2, 2], 1.0)).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_gradient_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let input = randn_margin(&[1, 2, 6, 6], &mut rng, 0.05);
        let mix = randn(&[72], &mut rng);
        let grad_out = Tensor::from_vec(&[1, 2, 6, 6], mix.data().to_vec()).unwrap();
        let analytic = relu_backward(&input, &grad_out).unwrap();
        let err = grad_check(&input, &analytic, 1e-3, |inp| {
            let out = relu_forward(inp);
            Ok(out
                .data()
                .iter()
                .zip(mix.data())
                .map(|(&o, &m)| f64::from(o) * f64::from(m))
                .sum())
        })
        .unwrap();
        assert!(err < 1e-3, "relu grad error {err}");
    }

    #[test]
    fn avgpool_constant_map() {
        let input = Tensor::filled(&[1, 1, 6, 6], 0.7);
        let out = avgpool2_forward(&input).unwrap();
        assert_eq!(out.shape(), &[1, 1, 3, 3]);
        for &v in out.data() {
            assert!((v - 0.7).abs() < 1e-7);
        }
    }

    #[test]
    fn avgpool_rejects_odd_extent() {
        let input = Tensor::zeros(&[1, 1, 5, 6]);
        assert!(matches!(avgpool2_forward(&input), Err(Error::Shape(_))));
    }

    #[test]
    fn avgpool_gradient_matches_finite_differences() {
        let mut rng = Rng::new(4);
        let input = randn(&[1, 2, 6, 6], &mut rng);
        let mix = randn(&[2 * 9], &mut rng);
        let grad_out = Tensor::from_vec(&[1, 2, 3, 3], mix.data().to_vec()).unwrap();
        let analytic = avgpool2_backward(&grad_out, input.shape()).unwrap();
        let err = grad_check(&input, &analytic, 1e-3, |inp| {
            let out = avgpool2_forward(inp)?;
            Ok(out
                .data()
                .iter()
                .zip(mix.data())
                .map(|(&o, &m)| f64::from(o) * f64::from(m))
                .sum())
        })
        .unwrap();
        assert!(err < 1e-3, "avgpool grad error {err}");
    }

    #[test]
    fn gap_gradient_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let input = randn(&[2, 3, 4, 4], &mut rng);
        let mix = randn(&[6], &mut rng);
        let grad_out = Tensor::from_vec(&[2, 3], mix.data().to_vec()).unwrap();
        let analytic = global_avg_pool_backward(&grad_out, input.shape()).unwrap();
        let err = grad_check(&input, &analytic, 1e-3, |inp| {
            let out = global_avg_pool(inp)?;
            Ok(out
                .data()
                .iter()
                .zip(mix.data())
                .map(|(&o, &m)| f64::from(o) * f64::from(m))
                .sum())
        })
        .unwrap();
        assert!(err < 1e-3, "gap grad error {err}");
    }
}
