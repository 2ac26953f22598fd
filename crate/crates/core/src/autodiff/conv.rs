//! 3×3 zero-padded cross-correlation kernels over `[N, C, H, W]` tensors.
//!
//! Each routine writes disjoint output planes, so the parallel and
//! sequential variants produce bit-identical results.

use crate::parallel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvDims {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvDims {
    fn plane(&self) -> usize {
        self.height * self.width
    }
}

/// `out += k ⋆ src` for one plane, zero padding of one pixel.
#[inline]
fn correlate_accumulate(out: &mut [f64], src: &[f64], k: &[f64], h: usize, w: usize) {
    for y in 0..h {
        let orow = &mut out[y * w..(y + 1) * w];
        for ky in 0..3 {
            let iy = y as isize + ky as isize - 1;
            if iy < 0 || iy >= h as isize {
                continue;
            }
            let irow = &src[iy as usize * w..(iy as usize + 1) * w];
            let (k0, k1, k2) = (k[ky * 3], k[ky * 3 + 1], k[ky * 3 + 2]);
            if w == 1 {
                orow[0] += k1 * irow[0];
                continue;
            }
            orow[0] += k1 * irow[0] + k2 * irow[1];
            for x in 1..w - 1 {
                orow[x] += k0 * irow[x - 1] + k1 * irow[x] + k2 * irow[x + 1];
            }
            orow[w - 1] += k0 * irow[w - 2] + k1 * irow[w - 1];
        }
    }
}

/// Sum over the valid region of `g(y, x) · src(y + ky - 1, x + kx - 1)` for all 9 taps.
#[inline]
fn tap_products(acc: &mut [f64], g: &[f64], src: &[f64], h: usize, w: usize) {
    for y in 0..h {
        let grow = &g[y * w..(y + 1) * w];
        for ky in 0..3 {
            let iy = y as isize + ky as isize - 1;
            if iy < 0 || iy >= h as isize {
                continue;
            }
            let irow = &src[iy as usize * w..(iy as usize + 1) * w];
            let mut s0 = 0.0;
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for x in 0..w {
                s1 += grow[x] * irow[x];
            }
            for x in 1..w {
                s0 += grow[x] * irow[x - 1];
            }
            for x in 0..w.saturating_sub(1) {
                s2 += grow[x] * irow[x + 1];
            }
            acc[ky * 3] += s0;
            acc[ky * 3 + 1] += s1;
            acc[ky * 3 + 2] += s2;
        }
    }
}

fn forward_plane(d: &ConvDims, input: &[f64], weight: &[f64], bias: &[f64], idx: usize, out: &mut [f64]) {
    let p = d.plane();
    let (n, f) = (idx / d.out_channels, idx % d.out_channels);
    out.iter_mut().for_each(|v| *v = bias[f]);
    for c in 0..d.in_channels {
        let src = &input[(n * d.in_channels + c) * p..][..p];
        let k = &weight[(f * d.in_channels + c) * 9..][..9];
        correlate_accumulate(out, src, k, d.height, d.width);
    }
}

fn input_grad_plane(d: &ConvDims, grad_out: &[f64], weight: &[f64], idx: usize, out: &mut [f64]) {
    let p = d.plane();
    let (n, c) = (idx / d.in_channels, idx % d.in_channels);
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut flipped = [0.0; 9];
    for f in 0..d.out_channels {
        let k = &weight[(f * d.in_channels + c) * 9..][..9];
        for (i, v) in flipped.iter_mut().enumerate() {
            *v = k[8 - i];
        }
        let g = &grad_out[(n * d.out_channels + f) * p..][..p];
        correlate_accumulate(out, g, &flipped, d.height, d.width);
    }
}

fn weight_grad_block(d: &ConvDims, grad_out: &[f64], input: &[f64], f: usize, out: &mut [f64]) {
    let p = d.plane();
    out.iter_mut().for_each(|v| *v = 0.0);
    for n in 0..d.batch {
        let g = &grad_out[(n * d.out_channels + f) * p..][..p];
        for c in 0..d.in_channels {
            let src = &input[(n * d.in_channels + c) * p..][..p];
            tap_products(&mut out[c * 9..(c + 1) * 9], g, src, d.height, d.width);
        }
    }
}

macro_rules! conv_entry_points {
    ($forward:ident, $input_grad:ident, $weight_grad:ident, $chunks:path) => {
        pub fn $forward(d: &ConvDims, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
            let mut out = vec![0.0; d.batch * d.out_channels * d.plane()];
            $chunks(&mut out, d.plane(), |i, o| {
                forward_plane(d, input, weight, bias, i, o)
            });
            out
        }

        pub fn $input_grad(d: &ConvDims, grad_out: &[f64], weight: &[f64]) -> Vec<f64> {
            let mut out = vec![0.0; d.batch * d.in_channels * d.plane()];
            $chunks(&mut out, d.plane(), |i, o| {
                input_grad_plane(d, grad_out, weight, i, o)
            });
            out
        }

        pub fn $weight_grad(d: &ConvDims, grad_out: &[f64], input: &[f64]) -> Vec<f64> {
            let mut out = vec![0.0; d.out_channels * d.in_channels * 9];
            $chunks(&mut out, d.in_channels * 9, |f, o| {
                weight_grad_block(d, grad_out, input, f, o)
            });
            out
        }
    };
}

conv_entry_points!(
    forward_seq,
    input_grad_seq,
    weight_grad_seq,
    parallel::for_each_chunk_seq
);
conv_entry_points!(
    forward_par,
    input_grad_par,
    weight_grad_par,
    parallel::for_each_chunk_par
);

pub fn bias_grad(d: &ConvDims, grad_out: &[f64]) -> Vec<f64> {
    let p = d.plane();
    let mut out = vec![0.0; d.out_channels];
    for n in 0..d.batch {
        for (f, o) in out.iter_mut().enumerate() {
            *o += grad_out[(n * d.out_channels + f) * p..][..p].iter().sum::<f64>();
        }
    }
    out
}
