//! Tensor kernels: convolution via im2col + GEMM, nearest upsampling,
//! channel concatenation, and their adjoints.

use super::Real;

/// Channel-major `C × H × W` activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn relu_inplace(&mut self) {
        for v in &mut self.data {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }

    /// Zeroes gradient entries where the post-activation output is not positive.
    pub fn relu_backward(&mut self, out: &Tensor<T>) {
        for (g, y) in self.data.iter_mut().zip(&out.data) {
            if *y <= T::zero() {
                *g = T::zero();
            }
        }
    }

    /// Channel means.
    pub fn global_mean(&self) -> Vec<T> {
        let n = T::of(self.plane() as f64);
        self.data
            .chunks_exact(self.plane())
            .map(|ch| ch.iter().copied().sum::<T>() / n)
            .collect()
    }

    pub fn upsample2(&self) -> Tensor<T> {
        let (h2, w2) = (self.h * 2, self.w * 2);
        let mut out = Tensor::zeros(self.c, h2, w2);
        for c in 0..self.c {
            for y in 0..h2 {
                let src = &self.data[(c * self.h + y / 2) * self.w..][..self.w];
                let dst = &mut out.data[(c * h2 + y) * w2..][..w2];
                for (x, d) in dst.iter_mut().enumerate() {
                    *d = src[x / 2];
                }
            }
        }
        out
    }

    /// Adjoint of [`Tensor::upsample2`]: sums each 2×2 block.
    pub fn downsum2(&self) -> Tensor<T> {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut out = Tensor::zeros(self.c, h, w);
        for c in 0..self.c {
            for y in 0..self.h {
                let src = &self.data[(c * self.h + y) * self.w..][..self.w];
                let dst = &mut out.data[(c * h + y / 2) * w..][..w];
                for (x, v) in src.iter().enumerate() {
                    dst[x / 2] += *v;
                }
            }
        }
        out
    }

    pub fn concat(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        debug_assert_eq!((a.h, a.w), (b.h, b.w));
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor {
            c: a.c + b.c,
            h: a.h,
            w: a.w,
            data,
        }
    }

    /// Splits off the first `c0` channels.
    pub fn split(self, c0: usize) -> (Tensor<T>, Tensor<T>) {
        let n = c0 * self.plane();
        let mut head = self.data;
        let tail = head.split_off(n);
        (
            Tensor {
                c: c0,
                h: self.h,
                w: self.w,
                data: head,
            },
            Tensor {
                c: self.c - c0,
                h: self.h,
                w: self.w,
                data: tail,
            },
        )
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}

/// Geometry of a square-kernel convolution with `k / 2` zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.k / 2;
        ((h + 2 * p - self.k) / self.stride + 1, (w + 2 * p - self.k) / self.stride + 1)
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.k * self.k
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1
    }
}

/// Unfolds `x` into a `(cin·k·k) × (ho·wo)` matrix.
fn im2col<T: Real>(x: &Tensor<T>, s: &ConvShape, ho: usize, wo: usize) -> Vec<T> {
    let k = s.k;
    let p = (k / 2) as isize;
    let n = ho * wo;
    let mut col = vec![T::zero(); s.cin * k * k * n];
    for ci in 0..s.cin {
        let plane = &x.data[ci * x.h * x.w..][..x.h * x.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * n..][..n];
                for oy in 0..ho {
                    let iy = (oy * s.stride) as isize + ky as isize - p;
                    if iy < 0 || iy >= x.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * x.w..][..x.w];
                    let dst = &mut row[oy * wo..][..wo];
                    if s.stride == 1 {
                        // Contiguous copy of the valid span.
                        let shift = kx as isize - p;
                        let x0 = (-shift).max(0) as usize;
                        let x1 = ((x.w as isize - shift).min(wo as isize)).max(0) as usize;
                        if x1 > x0 {
                            let s0 = (x0 as isize + shift) as usize;
                            dst[x0..x1].copy_from_slice(&src[s0..s0 + (x1 - x0)]);
                        }
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s.stride) as isize + kx as isize - p;
                            if ix >= 0 && ix < x.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
fn col2im<T: Real>(col: &[T], s: &ConvShape, h: usize, w: usize, ho: usize, wo: usize) -> Tensor<T> {
    let k = s.k;
    let p = (k / 2) as isize;
    let n = ho * wo;
    let mut x = Tensor::zeros(s.cin, h, w);
    for ci in 0..s.cin {
        let plane = &mut x.data[ci * h * w..][..h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * n..][..n];
                for oy in 0..ho {
                    let iy = (oy * s.stride) as isize + ky as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..][..w];
                    let src = &row[oy * wo..][..wo];
                    for (ox, v) in src.iter().enumerate() {
                        let ix = (ox * s.stride) as isize + kx as isize - p;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += *v;
                        }
                    }
                }
            }
        }
    }
    x
}

const TILE_CO: usize = 8;
const TILE_X: usize = 8;

#[inline(never)]
fn tile<T: Real>(
    xp: &[T],
    wb: &[T],
    cin: usize,
    k: usize,
    plane: usize,
    wp: usize,
) -> [[T; TILE_X]; TILE_CO] {
    let mut acc = [[T::zero(); TILE_X]; TILE_CO];
    let mut taps = wb.chunks_exact(TILE_CO);
    for ci in 0..cin {
        for ky in 0..k {
            let row = &xp[ci * plane + ky * wp..][..TILE_X + k];
            for kx in 0..k {
                let src: &[T; TILE_X] = row[kx..kx + TILE_X].try_into().unwrap();
                let wv: &[T] = taps.next().unwrap();
                for c in 0..TILE_CO {
                    let wc = wv[c];
                    for l in 0..TILE_X {
                        acc[c][l] += wc * src[l];
                    }
                }
            }
        }
    }
    acc
}

/// Stride-1 convolution without im2col: each 8×8 tile of (output channel,
/// column) accumulates in registers over every tap, reading a zero-padded
/// copy of the input.
fn direct_forward<T: Real>(x: &Tensor<T>, s: &ConvShape, weight: &[T], y: &mut Tensor<T>) {
    let (h, w, k) = (x.h, x.w, s.k);
    let p = k / 2;
    let wp = (w + 2 * p).div_ceil(TILE_X) * TILE_X + TILE_X;
    let hp = h + 2 * p;
    let mut xp = vec![T::zero(); s.cin * hp * wp];
    for ci in 0..s.cin {
        for r in 0..h {
            let dst = (ci * hp + r + p) * wp + p;
            xp[dst..dst + w].copy_from_slice(&x.data[(ci * h + r) * w..][..w]);
        }
    }
    let taps = s.cin * k * k;
    let n_blocks = s.cout.div_ceil(TILE_CO);
    // Weights regrouped as [block][tap][TILE_CO], zero-padded past cout.
    let mut wt = vec![T::zero(); n_blocks * taps * TILE_CO];
    for co in 0..s.cout {
        for t in 0..taps {
            wt[((co / TILE_CO) * taps + t) * TILE_CO + co % TILE_CO] = weight[co * taps + t];
        }
    }
    let n = h * w;
    for blk in 0..n_blocks {
        let wb = &wt[blk * taps * TILE_CO..][..taps * TILE_CO];
        let co0 = blk * TILE_CO;
        let co_n = (s.cout - co0).min(TILE_CO);
        for oy in 0..h {
            for x0 in (0..w).step_by(TILE_X) {
                let acc = tile(&xp[oy * wp + x0..], wb, s.cin, k, hp * wp, wp);
                let len = (w - x0).min(TILE_X);
                for (c, a) in acc.iter().enumerate().take(co_n) {
                    let out = &mut y.data[(co0 + c) * n + oy * w + x0..][..len];
                    for (o, v) in out.iter_mut().zip(a) {
                        *o += *v;
                    }
                }
            }
        }
    }
}

/// `y = W ⋆ x + b` with weights `[cout, cin, k, k]`.
pub fn conv_forward<T: Real>(x: &Tensor<T>, s: &ConvShape, weight: &[T], bias: &[T]) -> Tensor<T> {
    debug_assert_eq!(x.c, s.cin);
    let (ho, wo) = s.out_size(x.h, x.w);
    let n = ho * wo;
    let mut y = Tensor::zeros(s.cout, ho, wo);
    for (co, b) in bias.iter().enumerate() {
        y.data[co * n..(co + 1) * n].fill(*b);
    }
    let kk = s.cin * s.k * s.k;
    if s.is_pointwise() {
        T::matmul(s.cout, kk, n, weight, false, &x.data, false, &mut y.data, true);
    } else if s.stride == 1 {
        direct_forward(x, s, weight, &mut y);
    } else {
        let col = im2col(x, s, ho, wo);
        T::matmul(s.cout, kk, n, weight, false, &col, false, &mut y.data, true);
    }
    y
}

/// Accumulates weight and bias gradients; returns the input gradient if asked.
pub fn conv_backward<T: Real>(
    x: &Tensor<T>,
    s: &ConvShape,
    weight: &[T],
    dy: &Tensor<T>,
    dweight: &mut [T],
    dbias: &mut [T],
    need_dx: bool,
) -> Option<Tensor<T>> {
    let (ho, wo) = (dy.h, dy.w);
    let n = ho * wo;
    let kk = s.cin * s.k * s.k;
    for (co, db) in dbias.iter_mut().enumerate() {
        *db += dy.data[co * n..(co + 1) * n].iter().copied().sum::<T>();
    }
    if s.is_pointwise() {
        T::matmul(s.cout, n, kk, &dy.data, false, &x.data, true, dweight, true);
        if !need_dx {
            return None;
        }
        let mut dx = Tensor::zeros(s.cin, x.h, x.w);
        T::matmul(kk, s.cout, n, weight, true, &dy.data, false, &mut dx.data, false);
        return Some(dx);
    }
    let col = im2col(x, s, ho, wo);
    T::matmul(s.cout, n, kk, &dy.data, false, &col, true, dweight, true);
    if !need_dx {
        return None;
    }
    if s.stride == 1 {
        // The adjoint of a same-padded stride-1 conv is a conv with the
        // kernel flipped and the channel roles swapped.
        let k2 = s.k * s.k;
        let mut flipped = vec![T::zero(); weight.len()];
        for co in 0..s.cout {
            for ci in 0..s.cin {
                for t in 0..k2 {
                    flipped[(ci * s.cout + co) * k2 + k2 - 1 - t] = weight[(co * s.cin + ci) * k2 + t];
                }
            }
        }
        let adj = ConvShape { cin: s.cout, cout: s.cin, k: s.k, stride: 1 };
        let mut dx = Tensor::zeros(s.cin, x.h, x.w);
        direct_forward(dy, &adj, &flipped, &mut dx);
        return Some(dx);
    }
    let mut dcol = col;
    T::matmul(kk, s.cout, n, weight, true, &dy.data, false, &mut dcol, false);
    Some(col2im(&dcol, s, x.h, x.w, ho, wo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor {
            c,
            h,
            w,
            data: (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    /// Direct nested-loop convolution used as an oracle.
    fn naive(x: &Tensor<f64>, s: &ConvShape, wt: &[f64], b: &[f64]) -> Tensor<f64> {
        let (ho, wo) = s.out_size(x.h, x.w);
        let p = (s.k / 2) as isize;
        let mut y = Tensor::zeros(s.cout, ho, wo);
        for co in 0..s.cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[co];
                    for ci in 0..s.cin {
                        for ky in 0..s.k {
                            for kx in 0..s.k {
                                let iy = (oy * s.stride) as isize + ky as isize - p;
                                let ix = (ox * s.stride) as isize + kx as isize - p;
                                if iy >= 0 && ix >= 0 && (iy as usize) < x.h && (ix as usize) < x.w {
                                    acc += wt[((co * s.cin + ci) * s.k + ky) * s.k + kx]
                                        * x.data[(ci * x.h + iy as usize) * x.w + ix as usize];
                                }
                            }
                        }
                    }
                    y.data[(co * ho + oy) * wo + ox] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (k, stride, cout, h, w) in [(3, 1, 4, 8, 8), (3, 2, 4, 8, 8), (1, 1, 4, 8, 8), (3, 1, 11, 5, 13), (5, 1, 9, 6, 17)] {
            let s = ConvShape { cin: 3, cout, k, stride };
            let x = random(3, h, w, &mut rng);
            let wt: Vec<f64> = (0..s.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = conv_forward(&x, &s, &wt, &b);
            let z = naive(&x, &s, &wt, &b);
            assert_eq!((y.h, y.w), (z.h, z.w));
            for (a, b) in y.data.iter().zip(&z.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_is_adjoint() {
        // With zero bias the convolution is bilinear in (x, W), so
        // <dy, y> = <dx, x> = <dW, W>.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, stride, cin, h, w) in [(3, 1, 2, 6, 6), (3, 2, 2, 6, 6), (1, 1, 2, 6, 6), (3, 1, 10, 5, 11)] {
            let s = ConvShape { cin, cout: 3, k, stride };
            let x = random(cin, h, w, &mut rng);
            let wt: Vec<f64> = (0..s.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let zero = vec![0.0; 3];
            let y = conv_forward(&x, &s, &wt, &zero);
            let dy = random(3, y.h, y.w, &mut rng);
            let mut dw = vec![0.0; s.weight_len()];
            let mut db = vec![0.0; 3];
            let dx = conv_backward(&x, &s, &wt, &dy, &mut dw, &mut db, true).unwrap();
            let lhs: f64 = dy.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
            let via_x: f64 = dx.data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
            let via_w: f64 = dw.iter().zip(&wt).map(|(a, b)| a * b).sum();
            assert!((lhs - via_x).abs() < 1e-10);
            assert!((lhs - via_w).abs() < 1e-10);
            let total: f64 = dy.data.iter().sum();
            assert!((db.iter().sum::<f64>() - total).abs() < 1e-10);
        }
    }

    #[test]
    fn upsample_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(2, 3, 4, &mut rng);
        let g = random(2, 6, 8, &mut rng);
        let up = x.upsample2();
        let down = g.downsum2();
        let a: f64 = up.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let b: f64 = x.data.iter().zip(&down.data).map(|(a, b)| a * b).sum();
        assert!((a - b).abs() < 1e-12);
    }
}
