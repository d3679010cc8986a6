//! im2col convolution kernels shared by the graph's forward and backward passes.

use crate::element::Element;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    fn col_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_height * self.out_width
    }
}

/// Valid output-column range `[lo, hi)` whose input column `ox * stride + kj - padding`
/// lands inside `0..width`.
fn valid_cols(g: &ConvGeometry, kj: usize) -> (usize, usize) {
    let (p, s) = (g.padding, g.stride);
    let lo = if kj >= p { 0 } else { (p - kj).div_ceil(s) };
    let hi = if g.width + p > kj {
        ((g.width + p - kj - 1) / s + 1).min(g.out_width)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn im2col<T: Element>(g: &ConvGeometry, image: &[T], col: &mut [T]) {
    let k = g.kernel;
    let cols = g.col_cols();
    let mut row = 0;
    for ci in 0..g.in_channels {
        let plane = &image[ci * g.height * g.width..(ci + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let (lo, hi) = valid_cols(g, kj);
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_height {
                    let out_row = &mut dst[oy * g.out_width..(oy + 1) * g.out_width];
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize || lo >= hi {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    out_row[..lo].fill(T::zero());
                    out_row[hi..].fill(T::zero());
                    let start = lo * g.stride + kj - g.padding;
                    if g.stride == 1 {
                        out_row[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    } else {
                        for (i, o) in out_row[lo..hi].iter_mut().enumerate() {
                            *o = src[start + i * g.stride];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im<T: Element>(g: &ConvGeometry, col: &[T], image: &mut [T]) {
    let k = g.kernel;
    let cols = g.col_cols();
    let mut row = 0;
    for ci in 0..g.in_channels {
        let plane = &mut image[ci * g.height * g.width..(ci + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let (lo, hi) = valid_cols(g, kj);
                let src = &col[row * cols..(row + 1) * cols];
                row += 1;
                if lo >= hi {
                    continue;
                }
                for oy in 0..g.out_height {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let srow = &src[oy * g.out_width + lo..oy * g.out_width + hi];
                    let start = lo * g.stride + kj - g.padding;
                    for (i, &v) in srow.iter().enumerate() {
                        let d = &mut dst[start + i * g.stride];
                        *d = *d + v;
                    }
                }
            }
        }
    }
}

pub(crate) fn forward<T: Element>(g: &ConvGeometry, input: &[T], kernel: &[T]) -> Vec<T> {
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let in_stride = g.in_channels * g.height * g.width;
    let out_stride = g.out_channels * cols;
    let mut out = vec![T::zero(); g.batch * out_stride];
    let mut col = vec![T::zero(); rows * cols];
    for n in 0..g.batch {
        im2col(g, &input[n * in_stride..(n + 1) * in_stride], &mut col);
        T::gemm(
            g.out_channels,
            rows,
            cols,
            kernel,
            (rows as isize, 1),
            &col,
            (cols as isize, 1),
            T::zero(),
            &mut out[n * out_stride..(n + 1) * out_stride],
            (cols as isize, 1),
        );
    }
    out
}

/// Returns `(d_input, d_kernel)`, each only when requested.
pub(crate) fn backward<T: Element>(
    g: &ConvGeometry,
    input: &[T],
    kernel: &[T],
    grad_out: &[T],
    need_input: bool,
    need_kernel: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let in_stride = g.in_channels * g.height * g.width;
    let out_stride = g.out_channels * cols;
    let mut d_input = need_input.then(|| vec![T::zero(); input.len()]);
    let mut d_kernel = need_kernel.then(|| vec![T::zero(); kernel.len()]);
    let mut col = vec![T::zero(); rows * cols];
    for n in 0..g.batch {
        let gout = &grad_out[n * out_stride..(n + 1) * out_stride];
        if let Some(dk) = d_kernel.as_mut() {
            im2col(g, &input[n * in_stride..(n + 1) * in_stride], &mut col);
            T::gemm(
                g.out_channels,
                cols,
                rows,
                gout,
                (cols as isize, 1),
                &col,
                (1, cols as isize),
                T::one(),
                dk,
                (rows as isize, 1),
            );
        }
        if let Some(dx) = d_input.as_mut() {
            T::gemm(
                rows,
                g.out_channels,
                cols,
                kernel,
                (1, rows as isize),
                gout,
                (cols as isize, 1),
                T::zero(),
                &mut col,
                (cols as isize, 1),
            );
            col2im(g, &col, &mut dx[n * in_stride..(n + 1) * in_stride]);
        }
    }
    (d_input, d_kernel)
}
