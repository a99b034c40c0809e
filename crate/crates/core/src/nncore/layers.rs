//! Layer kernels over planar `C×H×W` buffers, one sample at a time.

use serde::{Deserialize, Serialize};

use crate::rng::{uniform, Rng};

/// `c = a·b + beta·c` for row-major `a: m×k`, `b: k×n`, `c: m×n`, with
/// explicit strides so transposed operands need no copy.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index matrixmultiply touches for the
    // given dims and strides; `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// 3×3 convolution, stride 1, zero padding 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    /// `cout × (cin·9)`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(cin: usize, cout: usize) -> Self {
        Self {
            cin,
            cout,
            weight: vec![0.0; cout * cin * 9],
            bias: vec![0.0; cout],
        }
    }

    /// He-uniform weights, zero bias.
    pub fn init(cin: usize, cout: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (cin * 9) as f64).sqrt();
        let mut c = Self::zeros(cin, cout);
        for w in &mut c.weight {
            *w = uniform(rng, -bound, bound);
        }
        c
    }

    fn im2col(&self, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let hw = h * w;
        let mut cols = vec![0.0; self.cin * 9 * hw];
        for ci in 0..self.cin {
            let plane = &input[ci * hw..(ci + 1) * hw];
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &mut cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                        let dst = &mut row[y * w..(y + 1) * w];
                        match kx {
                            0 => dst[1..].copy_from_slice(&src[..w - 1]),
                            1 => dst.copy_from_slice(src),
                            _ => dst[..w - 1].copy_from_slice(&src[1..]),
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im_add(&self, cols: &[f64], h: usize, w: usize, out: &mut [f64]) {
        let hw = h * w;
        for ci in 0..self.cin {
            let plane = &mut out[ci * hw..(ci + 1) * hw];
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                        let src = &row[y * w..(y + 1) * w];
                        match kx {
                            0 => dst[..w - 1]
                                .iter_mut()
                                .zip(&src[1..])
                                .for_each(|(d, s)| *d += s),
                            1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += s),
                            _ => dst[1..]
                                .iter_mut()
                                .zip(&src[..w - 1])
                                .for_each(|(d, s)| *d += s),
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let hw = h * w;
        let cols = self.im2col(input, h, w);
        let mut out = vec![0.0; self.cout * hw];
        for (co, b) in self.bias.iter().enumerate() {
            out[co * hw..(co + 1) * hw].fill(*b);
        }
        let k = self.cin * 9;
        gemm(self.cout, k, hw, &self.weight, (k, 1), &cols, (hw, 1), 1.0, &mut out);
        out
    }

    /// Accumulate parameter gradients into `grad` and, when `dinput` is given,
    /// add the input gradient to it.
    pub fn backward(
        &self,
        input: &[f64],
        h: usize,
        w: usize,
        dout: &[f64],
        grad: &mut Conv2d,
        dinput: Option<&mut [f64]>,
    ) {
        let hw = h * w;
        let k = self.cin * 9;
        let cols = self.im2col(input, h, w);
        // dW += dZ · colsᵀ
        gemm(self.cout, hw, k, dout, (hw, 1), &cols, (1, hw), 1.0, &mut grad.weight);
        for (co, gb) in grad.bias.iter_mut().enumerate() {
            *gb += dout[co * hw..(co + 1) * hw].iter().sum::<f64>();
        }
        if let Some(dinput) = dinput {
            // dcols = Wᵀ · dZ
            let mut dcols = vec![0.0; k * hw];
            gemm(k, self.cout, hw, &self.weight, (1, k), dout, (hw, 1), 0.0, &mut dcols);
            self.col2im_add(&dcols, h, w, dinput);
        }
    }
}

/// Dense layer `y = W·x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inp: usize,
    pub out: usize,
    /// `out × inp`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Self {
            inp,
            out,
            weight: vec![0.0; inp * out],
            bias: vec![0.0; out],
        }
    }

    /// Uniform in `±1/√fan_in`, zero bias.
    pub fn init(inp: usize, out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (inp as f64).sqrt();
        let mut l = Self::zeros(inp, out);
        for w in &mut l.weight {
            *w = uniform(rng, -bound, bound);
        }
        l
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out)
            .map(|o| {
                self.bias[o]
                    + self.weight[o * self.inp..(o + 1) * self.inp]
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Accumulate gradients; returns `Wᵀ·dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut dx = vec![0.0; self.inp];
        for o in 0..self.out {
            grad.bias[o] += dy[o];
            let row = &self.weight[o * self.inp..(o + 1) * self.inp];
            let grow = &mut grad.weight[o * self.inp..(o + 1) * self.inp];
            for i in 0..self.inp {
                grow[i] += dy[o] * x[i];
                dx[i] += row[i] * dy[o];
            }
        }
        dx
    }
}

/// Half-width of the quadratic blend around zero in [`smooth_relu`].
pub const RELU_SMOOTHING: f64 = 0.05;

/// ReLU with the kink replaced by a quadratic on `[-d, d]`: `0` below, `z`
/// above, `(z + d)^2 / 4d` in between. Continuously differentiable, so finite
/// differences agree with the analytic gradient.
pub fn smooth_relu(x: &[f64]) -> Vec<f64> {
    const D: f64 = RELU_SMOOTHING;
    x.iter()
        .map(|&z| {
            if z <= -D {
                0.0
            } else if z >= D {
                z
            } else {
                (z + D) * (z + D) / (4.0 * D)
            }
        })
        .collect()
}

/// Multiply `dy` by the derivative of [`smooth_relu`] at `z`, in place.
pub fn smooth_relu_backward(z: &[f64], dy: &mut [f64]) {
    const D: f64 = RELU_SMOOTHING;
    for (d, &v) in dy.iter_mut().zip(z) {
        if v <= -D {
            *d = 0.0;
        } else if v < D {
            *d *= (v + D) / (2.0 * D);
        }
    }
}

/// 2×2 average pooling, stride 2.
pub fn avg_pool2(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for y in 0..oh {
            for xx in 0..ow {
                let i = 2 * y * w + 2 * xx;
                dst[y * ow + xx] = 0.25 * (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]);
            }
        }
    }
    out
}

pub fn avg_pool2_backward(dy: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        let src = &dy[ch * oh * ow..(ch + 1) * oh * ow];
        let dst = &mut dx[ch * h * w..(ch + 1) * h * w];
        for y in 0..oh {
            for xx in 0..ow {
                let g = 0.25 * src[y * ow + xx];
                let i = 2 * y * w + 2 * xx;
                dst[i] = g;
                dst[i + 1] = g;
                dst[i + w] = g;
                dst[i + w + 1] = g;
            }
        }
    }
    dx
}

/// Mean over non-overlapping `k`×`k` blocks; `h` and `w` must be multiples of `k`.
pub fn block_avg_pool(x: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let (oh, ow) = (h / k, w / k);
    let scale = 1.0 / (k * k) as f64;
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for y in 0..h {
            for xx in 0..w {
                dst[(y / k) * ow + xx / k] += src[y * w + xx] * scale;
            }
        }
    }
    out
}

pub fn block_avg_pool_backward(dy: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let (oh, ow) = (h / k, w / k);
    let scale = 1.0 / (k * k) as f64;
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        let src = &dy[ch * oh * ow..(ch + 1) * oh * ow];
        let dst = &mut dx[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for xx in 0..w {
                dst[y * w + xx] = src[(y / k) * ow + xx / k] * scale;
            }
        }
    }
    dx
}

/// Per-channel spatial maximum and the flat index it came from.
pub fn global_max_pool(x: &[f64], c: usize, hw: usize) -> (Vec<f64>, Vec<usize>) {
    (0..c)
        .map(|ch| {
            let plane = &x[ch * hw..(ch + 1) * hw];
            let (i, v) = plane
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
            (v, ch * hw + i)
        })
        .unzip()
}

pub fn global_max_pool_backward(dy: &[f64], argmax: &[usize], len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; len];
    for (&g, &i) in dy.iter().zip(argmax) {
        dx[i] += g;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    /// Direct 3×3 convolution, used as the reference for the im2col path.
    fn conv_naive(c: &Conv2d, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; c.cout * h * w];
        for co in 0..c.cout {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = c.bias[co];
                    for ci in 0..c.cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = y as isize + ky as isize - 1;
                                let sx = xx as isize + kx as isize - 1;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += c.weight[co * c.cin * 9 + ci * 9 + ky * 3 + kx]
                                    * x[ci * h * w + sy as usize * w + sx as usize];
                            }
                        }
                    }
                    out[co * h * w + y * w + xx] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loop() {
        let mut r = seeded(1);
        let mut conv = Conv2d::init(3, 4, &mut r);
        for b in &mut conv.bias {
            *b = uniform(&mut r, -1.0, 1.0);
        }
        let (h, w) = (5, 6);
        let x: Vec<f64> = (0..3 * h * w).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
        let a = conv.forward(&x, h, w);
        let b = conv_naive(&conv, &x, h, w);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <dY, conv(x)> linear part == <conv_backward(dY), x>
        let mut r = seeded(2);
        let conv = Conv2d::init(2, 3, &mut r);
        let (h, w) = (4, 4);
        let x: Vec<f64> = (0..2 * h * w).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
        let dy: Vec<f64> = (0..3 * h * w).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
        let y = conv.forward(&x, h, w);
        let lhs: f64 = dy.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut grad = Conv2d::zeros(2, 3);
        let mut dx = vec![0.0; x.len()];
        conv.backward(&x, h, w, &dy, &mut grad, Some(&mut dx));
        let rhs: f64 = dx.iter().zip(&x).map(|(a, b)| a * b).sum();
        // bias contributes sum(dy) per channel
        assert!((lhs - rhs - grad.bias.iter().zip(&conv.bias).map(|(g, b)| g * b).sum::<f64>()).abs() < 1e-10);
    }

    #[test]
    fn smooth_relu_pieces() {
        let d = RELU_SMOOTHING;
        assert_eq!(smooth_relu(&[-1.0, 2.0, -d, d]), vec![0.0, 2.0, 0.0, d]);
        assert!((smooth_relu(&[0.0])[0] - d / 4.0).abs() < 1e-15);
        let mut g = [1.0, 1.0, 1.0];
        smooth_relu_backward(&[-1.0, 0.0, 1.0], &mut g);
        assert_eq!(g, [0.0, 0.5, 1.0]);
    }

    #[test]
    fn pooling_round_trip_shapes() {
        let x: Vec<f64> = (0..2 * 4 * 4).map(f64::from).collect();
        let p = avg_pool2(&x, 2, 4, 4);
        assert_eq!(p.len(), 8);
        assert_eq!(p[0], (0.0 + 1.0 + 4.0 + 5.0) / 4.0);
        let g = avg_pool2_backward(&[1.0; 8], 2, 4, 4);
        assert!(g.iter().all(|&v| v == 0.25));
        assert_eq!(block_avg_pool(&x, 2, 4, 4, 2), p);
        assert_eq!(block_avg_pool(&[1.0, 3.0, 5.0, 7.0], 1, 2, 2, 2), vec![4.0]);
        assert_eq!(block_avg_pool_backward(&[1.0; 8], 2, 4, 4, 2), g);
        let (m, idx) = global_max_pool(&[1.0, 3.0, 7.0, 5.0], 2, 2);
        assert_eq!((m, idx.clone()), (vec![3.0, 7.0], vec![1, 2]));
        assert_eq!(global_max_pool_backward(&[1.0, 2.0], &idx, 4), vec![0.0, 1.0, 2.0, 0.0]);
    }
}
