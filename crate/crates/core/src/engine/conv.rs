//! im2col convolution kernels.

use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub c_in: usize,
    pub height: usize,
    pub width: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (&[batch, c_in, height, width], &[c_out, kc, kh, kw]) = (input, kernel) else {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        };
        if kc != c_in {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
        }
        if kh == 0 || kw == 0 || height + 2 * pad < kh || width + 2 * pad < kw {
            return Err(Error::InvalidArgument(format!(
                "conv2d: {kh}x{kw} kernel does not fit a {height}x{width} input with padding {pad}"
            )));
        }
        Ok(Self {
            batch,
            c_in,
            height,
            width,
            c_out,
            kh,
            kw,
            stride,
            pad,
            out_h: (height + 2 * pad - kh) / stride + 1,
            out_w: (width + 2 * pad - kw) / stride + 1,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.c_out, self.out_h, self.out_w]
    }

    fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input row under kernel row `ki` at output row `oy`.
    #[inline]
    fn source_y(&self, oy: usize, ki: usize) -> Option<usize> {
        let y = (oy * self.stride + ki).checked_sub(self.pad)?;
        (y < self.height).then_some(y)
    }

    /// Output columns `lo..hi` whose kernel column `kj` lands inside the input.
    fn valid_x(&self, kj: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kj).div_ceil(self.stride);
        let hi = if self.width + self.pad > kj {
            ((self.width + self.pad - kj - 1) / self.stride + 1).min(self.out_w)
        } else {
            0
        };
        (lo.min(hi), hi)
    }
}

/// Columns per gemm call; bounds the unfolded buffer to a few MB.
const MAX_COLS: usize = 1 << 18;

/// Unfolds one image into columns `offset..offset+out_h*out_w` of a
/// `[c_in*kh*kw, stride]` row-major matrix.
fn im2col<T: Real>(g: &ConvGeometry, image: &[T], cols: &mut [T], stride: usize, offset: usize) {
    for c in 0..g.c_in {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * stride + offset;
                let (lo, hi) = g.valid_x(kj);
                for oy in 0..g.out_h {
                    let dst = &mut cols[row + oy * g.out_w..row + (oy + 1) * g.out_w];
                    let Some(y) = g.source_y(oy, ki) else {
                        dst.fill(T::zero());
                        continue;
                    };
                    let src = &plane[y * g.width..(y + 1) * g.width];
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    let x0 = lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        dst[lo..hi].copy_from_slice(&src[x0..x0 + hi - lo]);
                    } else {
                        for (d, s) in dst[lo..hi].iter_mut().zip(src[x0..].iter().step_by(g.stride)) {
                            *d = *s;
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(g: &ConvGeometry, cols: &[T], stride: usize, offset: usize, image: &mut [T]) {
    for c in 0..g.c_in {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * stride + offset;
                let (lo, hi) = g.valid_x(kj);
                for oy in 0..g.out_h {
                    let Some(y) = g.source_y(oy, ki) else { continue };
                    let src = &cols[row + oy * g.out_w + lo..row + oy * g.out_w + hi];
                    let x0 = lo * g.stride + kj - g.pad;
                    let dst = &mut plane[y * g.width + x0..(y + 1) * g.width];
                    for (d, s) in dst.iter_mut().step_by(g.stride).zip(src) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

/// Images per gemm call.
fn group_size(g: &ConvGeometry) -> usize {
    (MAX_COLS / (g.patch() * g.positions()).max(1)).clamp(1, g.batch.max(1))
}

pub(crate) fn forward<T: Real>(g: &ConvGeometry, input: &[T], kernel: &[T]) -> Vec<T> {
    let (patch, positions) = (g.patch(), g.positions());
    let in_size = g.c_in * g.height * g.width;
    let out_size = g.c_out * positions;
    let group = group_size(g);
    let mut out = vec![T::zero(); g.batch * out_size];
    let mut cols = vec![T::zero(); patch * positions * group];
    let mut tmp = vec![T::zero(); g.c_out * positions * group];
    for first in (0..g.batch).step_by(group) {
        let n = group.min(g.batch - first);
        let width = n * positions;
        for i in 0..n {
            let b = first + i;
            im2col(
                g,
                &input[b * in_size..(b + 1) * in_size],
                &mut cols,
                width,
                i * positions,
            );
        }
        T::gemm(
            g.c_out,
            patch,
            width,
            T::one(),
            kernel,
            (patch, 1),
            &cols[..patch * width],
            (width, 1),
            T::zero(),
            &mut tmp[..g.c_out * width],
            (width, 1),
        );
        for i in 0..n {
            let dst = &mut out[(first + i) * out_size..(first + i + 1) * out_size];
            for c in 0..g.c_out {
                let src = &tmp[c * width + i * positions..c * width + (i + 1) * positions];
                dst[c * positions..(c + 1) * positions].copy_from_slice(src);
            }
        }
    }
    out
}

/// Gradients with respect to the input (when `need_input`) and the kernels.
pub(crate) fn backward<T: Real>(
    g: &ConvGeometry,
    input: &[T],
    kernel: &[T],
    up: &[T],
    need_input: bool,
) -> (Option<Vec<T>>, Vec<T>) {
    let (patch, positions) = (g.patch(), g.positions());
    let in_size = g.c_in * g.height * g.width;
    let out_size = g.c_out * positions;
    let group = group_size(g);
    let mut d_input = vec![T::zero(); input.len()];
    let mut d_kernel = vec![T::zero(); kernel.len()];
    let mut cols = vec![T::zero(); patch * positions * group];
    let mut d_cols = vec![T::zero(); patch * positions * group];
    let mut dy = vec![T::zero(); g.c_out * positions * group];
    for first in (0..g.batch).step_by(group) {
        let n = group.min(g.batch - first);
        let width = n * positions;
        for i in 0..n {
            let b = first + i;
            im2col(
                g,
                &input[b * in_size..(b + 1) * in_size],
                &mut cols,
                width,
                i * positions,
            );
            let src = &up[b * out_size..(b + 1) * out_size];
            for c in 0..g.c_out {
                dy[c * width + i * positions..c * width + (i + 1) * positions]
                    .copy_from_slice(&src[c * positions..(c + 1) * positions]);
            }
        }
        // dK += dY · colsᵀ
        T::gemm(
            g.c_out,
            width,
            patch,
            T::one(),
            &dy[..g.c_out * width],
            (width, 1),
            &cols[..patch * width],
            (1, width),
            T::one(),
            &mut d_kernel,
            (patch, 1),
        );
        if !need_input {
            continue;
        }
        // dcols = Kᵀ · dY
        T::gemm(
            patch,
            g.c_out,
            width,
            T::one(),
            kernel,
            (1, patch),
            &dy[..g.c_out * width],
            (width, 1),
            T::zero(),
            &mut d_cols[..patch * width],
            (width, 1),
        );
        for i in 0..n {
            let b = first + i;
            col2im(
                g,
                &d_cols,
                width,
                i * positions,
                &mut d_input[b * in_size..(b + 1) * in_size],
            );
        }
    }
    (need_input.then_some(d_input), d_kernel)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct loops: returns the output and, for upstream `up`, both gradients.
    fn naive(g: &ConvGeometry, x: &[f64], k: &[f64], up: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut y = vec![0.0; g.batch * g.c_out * g.out_h * g.out_w];
        let (mut dx, mut dk) = (vec![0.0; x.len()], vec![0.0; k.len()]);
        for b in 0..g.batch {
            for o in 0..g.c_out {
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        let yi = ((b * g.c_out + o) * g.out_h + oy) * g.out_w + ox;
                        for c in 0..g.c_in {
                            for ki in 0..g.kh {
                                for kj in 0..g.kw {
                                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= g.height as isize || ix >= g.width as isize {
                                        continue;
                                    }
                                    let xi = ((b * g.c_in + c) * g.height + iy as usize) * g.width + ix as usize;
                                    let ki_ = ((o * g.c_in + c) * g.kh + ki) * g.kw + kj;
                                    y[yi] += x[xi] * k[ki_];
                                    dx[xi] += up[yi] * k[ki_];
                                    dk[ki_] += up[yi] * x[xi];
                                }
                            }
                        }
                    }
                }
            }
        }
        (y, dx, dk)
    }

    fn ramp(n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|i| ((i * 7919) % 23) as f64 * scale - 1.0).collect()
    }

    #[test]
    fn matches_direct_loops() {
        let cases = [
            ([2, 3, 5, 6], [4, 3, 3, 3], 1, 1),
            ([1, 1, 7, 7], [2, 1, 5, 5], 2, 0),
            ([3, 2, 6, 5], [3, 2, 3, 2], 2, 2),
            ([1, 2, 4, 4], [1, 2, 1, 1], 1, 0),
        ];
        for (input, kernel, stride, pad) in cases {
            let g = ConvGeometry::new(&input, &kernel, stride, pad).unwrap();
            let x = ramp(input.iter().product(), 0.09);
            let k = ramp(kernel.iter().product(), 0.07);
            let up = ramp(g.output_shape().iter().product(), 0.05);
            let (y, dx, dk) = naive(&g, &x, &k, &up);
            let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-12);
            assert!(close(&forward(&g, &x, &k), &y), "{input:?} {kernel:?}");
            let (got_dx, got_dk) = backward(&g, &x, &k, &up, true);
            assert!(close(&got_dx.unwrap(), &dx));
            assert!(close(&got_dk, &dk));
            assert!(backward(&g, &x, &k, &up, false).0.is_none());
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ConvGeometry::new(&[1, 2, 4, 4], &[1, 3, 3, 3], 1, 0).is_err());
        assert!(ConvGeometry::new(&[1, 1, 2, 2], &[1, 1, 3, 3], 1, 0).is_err());
        assert!(ConvGeometry::new(&[1, 1, 4, 4], &[1, 1, 3, 3], 0, 0).is_err());
        let g = ConvGeometry::new(&[1, 1, 28, 28], &[4, 1, 5, 5], 2, 0).unwrap();
        assert_eq!(g.output_shape(), vec![1, 4, 12, 12]);
    }
}
