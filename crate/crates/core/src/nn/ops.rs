//! Dense kernels: GEMM, im2col, convolution, transposed convolution and the
//! elementwise nonlinearities. Feature maps use the `[C][N][H][W]` layout so
//! a whole batch goes through a layer in one matrix product.

use super::Real;

/// `C = A * B (+ C)` on row-major matrices. `A` is logically `m x k`
/// (stored `k x m` when `ta`), `B` is `k x n` (stored `n x k` when `tb`).
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Real>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize, ta: bool, tb: bool, accumulate: bool) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "matmul operand too short");
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { T::one() } else { T::zero() };
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = T::zero());
        }
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the length assertions above cover every index touched for the
    // given dimensions and strides.
    unsafe { T::gemm(m, k, n, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1) }
}

/// Geometry of a valid (unpadded) sliding window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub channels: usize,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Window {
    pub fn out_h(&self) -> usize {
        (self.height - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width - self.kernel) / self.stride + 1
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.batch * self.out_h() * self.out_w()
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.batch * self.height * self.width
    }
}

/// `[C][N][H][W]` → `[C*k*k][N*Ho*Wo]`.
pub fn im2col<T: Real>(x: &[T], g: &Window, col: &mut Vec<T>) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let cols = g.cols();
    col.clear();
    col.resize(g.rows() * cols, T::zero());
    for c in 0..g.channels {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for n in 0..g.batch {
                    let plane = &x[(c * g.batch + n) * g.height * g.width..][..g.height * g.width];
                    for oy in 0..oh {
                        let src = &plane[(oy * g.stride + ki) * g.width + kj..];
                        let d = &mut dst[(n * oh + oy) * ow..][..ow];
                        for (ox, v) in d.iter_mut().enumerate() {
                            *v = src[ox * g.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `col` back into `[C][N][H][W]`.
pub fn col2im<T: Real>(col: &[T], g: &Window, x: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let cols = g.cols();
    x[..g.input_len()].iter_mut().for_each(|v| *v = T::zero());
    for c in 0..g.channels {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &col[row * cols..(row + 1) * cols];
                for n in 0..g.batch {
                    let plane = &mut x[(c * g.batch + n) * g.height * g.width..][..g.height * g.width];
                    for oy in 0..oh {
                        let s = &src[(n * oh + oy) * ow..][..ow];
                        let base = (oy * g.stride + ki) * g.width + kj;
                        for (ox, v) in s.iter().enumerate() {
                            plane[base + ox * g.stride] += *v;
                        }
                    }
                }
            }
        }
    }
}

fn add_channel_bias<T: Real>(y: &mut [T], bias: &[T], plane: usize) {
    for (chunk, b) in y.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += *b);
    }
}

fn channel_sums<T: Real>(dy: &[T], plane: usize, db: &mut [T]) {
    for (chunk, b) in dy.chunks(plane).zip(db.iter_mut()) {
        *b += chunk.iter().copied().sum::<T>();
    }
}

/// Convolution. `w` is `[Co][C*k*k]`; returns `[Co][N][Ho][Wo]` and keeps the
/// column matrix in `col` for the backward pass.
pub fn conv_forward<T: Real>(x: &[T], g: &Window, w: &[T], b: &[T], co: usize, col: &mut Vec<T>) -> Vec<T> {
    im2col(x, g, col);
    let n = g.cols();
    let mut y = vec![T::zero(); co * n];
    matmul(&mut y, w, col, co, g.rows(), n, false, false, false);
    add_channel_bias(&mut y, b, n);
    y
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `need_dx`.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Real>(
    dy: &[T],
    g: &Window,
    w: &[T],
    co: usize,
    col: &[T],
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    let n = g.cols();
    matmul(dw, dy, col, co, n, g.rows(), false, true, true);
    channel_sums(dy, n, db);
    need_dx.then(|| {
        let mut dcol = vec![T::zero(); g.rows() * n];
        matmul(&mut dcol, w, dy, g.rows(), co, n, true, false, false);
        let mut dx = vec![T::zero(); g.input_len()];
        col2im(&dcol, g, &mut dx);
        dx
    })
}

/// Output geometry of a transposed convolution over an `h x w` input, as the
/// window of the equivalent forward convolution.
pub fn deconv_window(co: usize, batch: usize, h: usize, w: usize, kernel: usize, stride: usize) -> Window {
    Window { channels: co, batch, height: (h - 1) * stride + kernel, width: (w - 1) * stride + kernel, kernel, stride }
}

/// Transposed convolution, the adjoint of [`conv_forward`] in its input.
/// `x` is `[Ci][N][H][W]`, `w` is `[Ci][Co*k*k]`; `g` comes from
/// [`deconv_window`].
pub fn deconv_forward<T: Real>(x: &[T], g: &Window, w: &[T], b: &[T], ci: usize) -> Vec<T> {
    let n = g.cols();
    let mut col = vec![T::zero(); g.rows() * n];
    matmul(&mut col, w, x, g.rows(), ci, n, true, false, false);
    let mut y = vec![T::zero(); g.input_len()];
    col2im(&col, g, &mut y);
    add_channel_bias(&mut y, b, g.batch * g.height * g.width);
    y
}

#[allow(clippy::too_many_arguments)]
pub fn deconv_backward<T: Real>(
    dy: &[T],
    g: &Window,
    x: &[T],
    w: &[T],
    ci: usize,
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    let n = g.cols();
    let mut dcol = Vec::new();
    im2col(dy, g, &mut dcol);
    matmul(dw, x, &dcol, ci, n, g.rows(), false, true, true);
    channel_sums(dy, g.batch * g.height * g.width, db);
    let mut dx = vec![T::zero(); ci * n];
    matmul(&mut dx, w, &dcol, ci, g.rows(), n, false, false, false);
    dx
}

/// `Y = X Wᵀ + b` for `X: [N][in]`, `W: [out][in]`.
pub fn linear_forward<T: Real>(x: &[T], w: &[T], b: &[T], n: usize, inp: usize, out: usize) -> Vec<T> {
    let mut y = vec![T::zero(); n * out];
    matmul(&mut y, x, w, n, inp, out, false, true, false);
    for row in y.chunks_mut(out) {
        row.iter_mut().zip(b).for_each(|(v, b)| *v += *b);
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Real>(
    dy: &[T],
    x: &[T],
    w: &[T],
    n: usize,
    inp: usize,
    out: usize,
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    matmul(dw, dy, x, out, n, inp, true, false, true);
    for row in dy.chunks(out) {
        db.iter_mut().zip(row).for_each(|(d, v)| *d += *v);
    }
    need_dx.then(|| {
        let mut dx = vec![T::zero(); n * inp];
        matmul(&mut dx, dy, w, n, out, inp, false, false, false);
        dx
    })
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    x.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
}

/// Masks `dy` by the ReLU output `y`.
pub fn relu_backward<T: Real>(dy: &mut [T], y: &[T]) {
    dy.iter_mut().zip(y).for_each(|(d, v)| {
        if *v <= T::zero() {
            *d = T::zero()
        }
    });
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Row-wise softmax and log-softmax.
pub fn softmax_rows<T: Real>(logits: &[T], cols: usize) -> (Vec<T>, Vec<T>) {
    let mut p = vec![T::zero(); logits.len()];
    let mut lp = vec![T::zero(); logits.len()];
    for ((row, pr), lr) in logits.chunks(cols).zip(p.chunks_mut(cols)).zip(lp.chunks_mut(cols)) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let z: T = row.iter().map(|v| (*v - m).exp()).sum();
        let lz = z.ln() + m;
        for j in 0..cols {
            lr[j] = row[j] - lz;
            pr[j] = lr[j].exp();
        }
    }
    (p, lp)
}

/// `[C][N][P]` → `[N][C*P]`.
pub fn cnp_to_ncp<T: Real>(x: &[T], c: usize, n: usize, p: usize) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    for ci in 0..c {
        for ni in 0..n {
            y[(ni * c + ci) * p..][..p].copy_from_slice(&x[(ci * n + ni) * p..][..p]);
        }
    }
    y
}

/// `[N][C*P]` → `[C][N][P]`.
pub fn ncp_to_cnp<T: Real>(x: &[T], c: usize, n: usize, p: usize) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    for ci in 0..c {
        for ni in 0..n {
            y[(ci * n + ni) * p..][..p].copy_from_slice(&x[(ni * c + ci) * p..][..p]);
        }
    }
    y
}
