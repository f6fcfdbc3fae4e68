//! im2col / col2im kernels shared by convolution and transposed convolution.
//!
//! Column matrices are laid out `[channels·kh·kw, batch·out_h·out_w]`, so a
//! convolution becomes one GEMM with the kernel viewed as
//! `[out_channels, channels·kh·kw]`.

use crate::nn::Real;

/// Sliding-window geometry over an `[N, C, H, W]` input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Window {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.padding - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.padding - self.kw) / self.stride + 1
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.batch * self.out_h() * self.out_w()
    }
}

/// Output positions `lo..hi` along one axis whose input index
/// `o·stride + k − padding` falls inside `0..size`.
#[inline]
fn valid_range(out: usize, size: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    let lo = if padding > k { (padding - k).div_ceil(stride) } else { 0 };
    let hi = if size + padding > k { ((size + padding - k - 1) / stride + 1).min(out) } else { 0 };
    (lo.min(hi), hi)
}

pub fn im2col<T: Real>(x: &[T], g: &Window) -> Vec<T> {
    let mut cols = vec![T::zero(); g.col_rows() * g.col_cols()];
    im2col_into(x, g, &mut cols);
    cols
}

/// [`im2col`] into a caller buffer. Entries that fall in the padding are
/// never written, so `cols` must hold zeros there (a zeroed buffer, or one
/// last filled with the same geometry).
pub fn im2col_into<T: Real>(x: &[T], g: &Window, cols: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let l = g.col_cols();
    assert_eq!(cols.len(), g.col_rows() * l, "im2col buffer size");
    let plane = g.height * g.width;
    for c in 0..g.channels {
        for i in 0..g.kh {
            let (ylo, yhi) = valid_range(oh, g.height, i, g.stride, g.padding);
            for j in 0..g.kw {
                let (xlo, xhi) = valid_range(ow, g.width, j, g.stride, g.padding);
                let row = (c * g.kh + i) * g.kw + j;
                let dst = &mut cols[row * l..(row + 1) * l];
                for n in 0..g.batch {
                    let src = &x[(n * g.channels + c) * plane..][..plane];
                    for oy in ylo..yhi {
                        let iy = oy * g.stride + i - g.padding;
                        let src_row = &src[iy * g.width..][..g.width];
                        let base = (n * oh + oy) * ow;
                        let start = xlo * g.stride + j - g.padding;
                        let out = &mut dst[base + xlo..base + xhi];
                        for (d, s) in out.iter_mut().zip(src_row[start..].iter().step_by(g.stride)) {
                            *d = *s;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into `x`.
pub fn col2im<T: Real>(cols: &[T], g: &Window, x: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let l = g.col_cols();
    let plane = g.height * g.width;
    for c in 0..g.channels {
        for i in 0..g.kh {
            let (ylo, yhi) = valid_range(oh, g.height, i, g.stride, g.padding);
            for j in 0..g.kw {
                let (xlo, xhi) = valid_range(ow, g.width, j, g.stride, g.padding);
                let row = (c * g.kh + i) * g.kw + j;
                let src = &cols[row * l..(row + 1) * l];
                for n in 0..g.batch {
                    let dst = &mut x[(n * g.channels + c) * plane..][..plane];
                    for oy in ylo..yhi {
                        let iy = oy * g.stride + i - g.padding;
                        let dst_row = &mut dst[iy * g.width..][..g.width];
                        let base = (n * oh + oy) * ow;
                        let start = xlo * g.stride + j - g.padding;
                        for (d, s) in dst_row[start..].iter_mut().step_by(g.stride).zip(&src[base + xlo..base + xhi]) {
                            *d += *s;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = Window { batch: 2, channels: 3, height: 5, width: 6, kh: 3, kw: 2, stride: 2, padding: 1 };
        let x: Vec<f64> = (0..2 * 3 * 5 * 6).map(|v| ((v * 37) % 11) as f64 - 5.0).collect();
        let cols = im2col(&x, &g);
        let y: Vec<f64> = (0..cols.len()).map(|v| ((v * 13) % 7) as f64 - 3.0).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&y, &g, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn im2col_matches_direct_indexing() {
        for (h, w, k, stride, padding) in [(5, 6, 3, 2, 1), (4, 4, 4, 2, 1), (7, 5, 2, 3, 3), (3, 3, 3, 1, 0), (6, 6, 1, 1, 2)] {
            let g = Window { batch: 2, channels: 2, height: h, width: w, kh: k, kw: k, stride, padding };
            let x: Vec<f64> = (0..2 * 2 * h * w).map(|v| v as f64 + 1.0).collect();
            let cols = im2col(&x, &g);
            let (oh, ow, l) = (g.out_h(), g.out_w(), g.col_cols());
            for c in 0..2 {
                for i in 0..k {
                    for j in 0..k {
                        for n in 0..2 {
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let iy = (oy * stride + i) as isize - padding as isize;
                                    let ix = (ox * stride + j) as isize - padding as isize;
                                    let want = if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        x[((n * 2 + c) * h + iy as usize) * w + ix as usize]
                                    } else {
                                        0.0
                                    };
                                    let row = (c * k + i) * k + j;
                                    assert_eq!(cols[row * l + (n * oh + oy) * ow + ox], want);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
