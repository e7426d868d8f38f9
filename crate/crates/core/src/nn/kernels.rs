//! Batched dense, convolution and pooling kernels on row-major `f64` buffers.

use matrixmultiply::dgemm;

/// `c = alpha * a·b + beta * c` with explicit row/column strides.
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
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserted extents keep every strided access inside the slices.
    unsafe {
        dgemm(
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
            rsc as isize,
            csc as isize,
        );
    }
}

/// `y[b][o] = Σ_i x[b][i]·w[o][i] + bias[o]`.
pub fn dense_forward(x: &[f64], batch: usize, inputs: usize, w: &[f64], bias: &[f64]) -> Vec<f64> {
    let outputs = bias.len();
    let mut y = Vec::with_capacity(batch * outputs);
    for _ in 0..batch {
        y.extend_from_slice(bias);
    }
    gemm(
        batch,
        inputs,
        outputs,
        x,
        (inputs, 1),
        w,
        (1, inputs),
        1.0,
        &mut y,
        (outputs, 1),
    );
    y
}

/// Accumulates weight/bias gradients and optionally returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn dense_backward(
    x: &[f64],
    dy: &[f64],
    batch: usize,
    inputs: usize,
    outputs: usize,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    // dW[o][i] += Σ_b dy[b][o]·x[b][i]
    gemm(
        outputs,
        batch,
        inputs,
        dy,
        (1, outputs),
        x,
        (inputs, 1),
        1.0,
        dw,
        (inputs, 1),
    );
    for row in dy.chunks_exact(outputs) {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    need_dx.then(|| {
        let mut dx = vec![0.0; batch * inputs];
        gemm(
            batch,
            outputs,
            inputs,
            dy,
            (outputs, 1),
            w,
            (inputs, 1),
            0.0,
            &mut dx,
            (inputs, 1),
        );
        dx
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        self.height - self.kernel_h + 1
    }
    pub fn out_w(&self) -> usize {
        self.width - self.kernel_w + 1
    }
    /// Rows of the unrolled patch matrix.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }
    pub fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }
    fn in_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Unrolls patches into a `[patch_len][batch·positions]` matrix.
pub fn im2col(x: &[f64], batch: usize, g: &ConvGeometry) -> Vec<f64> {
    let (oh, ow, p) = (g.out_h(), g.out_w(), g.positions());
    let cols_w = batch * p;
    let mut cols = vec![0.0; g.patch_len() * cols_w];
    for b in 0..batch {
        let img = &x[b * g.in_len()..(b + 1) * g.in_len()];
        for c in 0..g.channels {
            for i in 0..g.kernel_h {
                for j in 0..g.kernel_w {
                    let row = (c * g.kernel_h + i) * g.kernel_w + j;
                    let dst = &mut cols[row * cols_w + b * p..row * cols_w + (b + 1) * p];
                    for oy in 0..oh {
                        let src = (c * g.height + oy + i) * g.width + j;
                        dst[oy * ow..(oy + 1) * ow].copy_from_slice(&img[src..src + ow]);
                    }
                }
            }
        }
    }
    cols
}

fn col2im(dcols: &[f64], batch: usize, g: &ConvGeometry) -> Vec<f64> {
    let (oh, ow, p) = (g.out_h(), g.out_w(), g.positions());
    let cols_w = batch * p;
    let mut dx = vec![0.0; batch * g.in_len()];
    for b in 0..batch {
        let img = &mut dx[b * g.in_len()..(b + 1) * g.in_len()];
        for c in 0..g.channels {
            for i in 0..g.kernel_h {
                for j in 0..g.kernel_w {
                    let row = (c * g.kernel_h + i) * g.kernel_w + j;
                    let src = &dcols[row * cols_w + b * p..row * cols_w + (b + 1) * p];
                    for oy in 0..oh {
                        let dst = (c * g.height + oy + i) * g.width + j;
                        for (d, s) in img[dst..dst + ow].iter_mut().zip(&src[oy * ow..(oy + 1) * ow]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Returns `(output [batch][filters][positions], patch matrix for backward)`.
pub fn conv_forward(x: &[f64], batch: usize, g: &ConvGeometry, w: &[f64], bias: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cols = im2col(x, batch, g);
    let (k, p) = (g.patch_len(), g.positions());
    let cols_w = batch * p;
    let mut y = vec![0.0; batch * g.filters * p];
    for b in 0..batch {
        let out = &mut y[b * g.filters * p..(b + 1) * g.filters * p];
        for (f, row) in out.chunks_exact_mut(p).enumerate() {
            row.fill(bias[f]);
        }
        gemm(
            g.filters,
            k,
            p,
            w,
            (k, 1),
            &cols[b * p..],
            (cols_w, 1),
            1.0,
            out,
            (p, 1),
        );
    }
    (y, cols)
}

#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    cols: &[f64],
    dy: &[f64],
    batch: usize,
    g: &ConvGeometry,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    let (k, p) = (g.patch_len(), g.positions());
    let cols_w = batch * p;
    let mut dcols = if need_dx { vec![0.0; k * cols_w] } else { Vec::new() };
    for b in 0..batch {
        let dyb = &dy[b * g.filters * p..(b + 1) * g.filters * p];
        // dW[f][k] += Σ_p dy[f][p]·cols[k][p]
        gemm(
            g.filters,
            p,
            k,
            dyb,
            (p, 1),
            &cols[b * p..],
            (1, cols_w),
            1.0,
            dw,
            (k, 1),
        );
        for (f, row) in dyb.chunks_exact(p).enumerate() {
            db[f] += row.iter().sum::<f64>();
        }
        if need_dx {
            // dcols[k][p] = Σ_f w[f][k]·dy[f][p]
            gemm(
                k,
                g.filters,
                p,
                w,
                (1, k),
                dyb,
                (p, 1),
                0.0,
                &mut dcols[b * p..],
                (cols_w, 1),
            );
        }
    }
    need_dx.then(|| col2im(&dcols, batch, g))
}

/// Non-overlapping max pooling. Returns the output and, for every output cell,
/// the flat input index that won (first maximum in row-major window order).
pub fn maxpool_forward(
    x: &[f64],
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    pool_h: usize,
    pool_w: usize,
) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (height / pool_h, width / pool_w);
    let n = batch * channels * oh * ow;
    let mut y = Vec::with_capacity(n);
    let mut arg = Vec::with_capacity(n);
    for plane in 0..batch * channels {
        let base = plane * height * width;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * pool_h * width + ox * pool_w;
                for i in 0..pool_h {
                    for j in 0..pool_w {
                        let idx = base + (oy * pool_h + i) * width + ox * pool_w + j;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                y.push(x[best]);
                arg.push(best);
            }
        }
    }
    (y, arg)
}

pub fn maxpool_backward(dy: &[f64], argmax: &[usize], in_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; in_len];
    for (&d, &i) in dy.iter().zip(argmax) {
        dx[i] += d;
    }
    dx
}
