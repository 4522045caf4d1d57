//! Raw array kernels behind the graph ops. Shapes are validated by the
//! callers in `ops`; everything here assumes consistent dimensions.

use crate::real::{gemm, Mat, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub ph: usize,
    pub pw: usize,
}

impl ConvGeom {
    pub fn oh(&self) -> usize {
        self.h + 2 * self.ph + 1 - self.kh
    }

    pub fn ow(&self) -> usize {
        self.w + 2 * self.pw + 1 - self.kw
    }

    fn ckk(&self) -> usize {
        self.c * self.kh * self.kw
    }

    /// 1x1 kernels without padding read the input plane directly.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.ph == 0 && self.pw == 0
    }

    /// Output columns `[lo, hi)` whose input column `ox + kx - pw` is inside the image.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let ow = self.ow();
        let lo = self.pw.saturating_sub(kx).min(ow);
        let hi = (self.w + self.pw).saturating_sub(kx).min(ow);
        (lo, hi.max(lo))
    }
}

fn im2col<T: Real>(g: &ConvGeom, x: &[T], col: &mut [T]) {
    let (oh, ow) = (g.oh(), g.ow());
    let plane = oh * ow;
    for ci in 0..g.c {
        let xin = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * plane..(row + 1) * plane];
                let (lo, hi) = g.valid_cols(kx);
                for oy in 0..oh {
                    let out = &mut dst[oy * ow..(oy + 1) * ow];
                    let iy = oy as isize + ky as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    out[..lo].fill(T::zero());
                    out[hi..].fill(T::zero());
                    if hi > lo {
                        let src0 = iy as usize * g.w + lo + kx - g.pw;
                        out[lo..hi].copy_from_slice(&xin[src0..src0 + (hi - lo)]);
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(g: &ConvGeom, col: &[T], gx: &mut [T]) {
    let (oh, ow) = (g.oh(), g.ow());
    let plane = oh * ow;
    for ci in 0..g.c {
        let gin = &mut gx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &col[row * plane..(row + 1) * plane];
                let (lo, hi) = g.valid_cols(kx);
                if hi <= lo {
                    continue;
                }
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst0 = iy as usize * g.w + lo + kx - g.pw;
                    let dst = &mut gin[dst0..dst0 + (hi - lo)];
                    for (d, s) in dst.iter_mut().zip(&src[oy * ow + lo..oy * ow + hi]) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(g: &ConvGeom, x: &[T], wt: &[T], bias: Option<&[T]>) -> Vec<T> {
    let plane = g.oh() * g.ow();
    let in_sz = g.c * g.h * g.w;
    let mut out = vec![T::zero(); g.n * g.o * plane];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); g.ckk() * plane] };
    for b in 0..g.n {
        let xb = &x[b * in_sz..(b + 1) * in_sz];
        let ob = &mut out[b * g.o * plane..(b + 1) * g.o * plane];
        if let Some(bias) = bias {
            for (o, chunk) in ob.chunks_mut(plane).enumerate() {
                chunk.fill(bias[o]);
            }
        }
        let src: &[T] = if g.is_pointwise() {
            xb
        } else {
            im2col(g, xb, &mut col);
            &col
        };
        gemm(g.o, g.ckk(), plane, Mat::rows(wt, g.ckk()), Mat::rows(src, plane), T::one(), ob);
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

pub(crate) fn conv2d_backward<T: Real>(
    g: &ConvGeom,
    x: &[T],
    wt: &[T],
    gout: &[T],
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let plane = g.oh() * g.ow();
    let in_sz = g.c * g.h * g.w;
    let ckk = g.ckk();
    let (need_x, need_w, need_b) = need;
    let mut gx = need_x.then(|| vec![T::zero(); g.n * in_sz]);
    let mut gw = need_w.then(|| vec![T::zero(); g.o * ckk]);
    let mut gb = need_b.then(|| vec![T::zero(); g.o]);
    let pointwise = g.is_pointwise();
    let mut col = if pointwise || !need_w { Vec::new() } else { vec![T::zero(); ckk * plane] };
    let mut gcol = if pointwise || !need_x { Vec::new() } else { vec![T::zero(); ckk * plane] };
    for b in 0..g.n {
        let gob = &gout[b * g.o * plane..(b + 1) * g.o * plane];
        let xb = &x[b * in_sz..(b + 1) * in_sz];
        if let Some(gb) = gb.as_mut() {
            for (o, chunk) in gob.chunks(plane).enumerate() {
                gb[o] += chunk.iter().copied().sum::<T>();
            }
        }
        if let Some(gw) = gw.as_mut() {
            let src: &[T] = if pointwise {
                xb
            } else {
                im2col(g, xb, &mut col);
                &col
            };
            // gw (o x ckk) += gout_b (o x plane) * col^T (plane x ckk)
            gemm(g.o, plane, ckk, Mat::rows(gob, plane), Mat::rows_t(src, plane), T::one(), gw);
        }
        if let Some(gx) = gx.as_mut() {
            let gxb = &mut gx[b * in_sz..(b + 1) * in_sz];
            if pointwise {
                gemm(ckk, g.o, plane, Mat::rows_t(wt, ckk), Mat::rows(gob, plane), T::one(), gxb);
            } else {
                gemm(ckk, g.o, plane, Mat::rows_t(wt, ckk), Mat::rows(gob, plane), T::zero(), &mut gcol);
                col2im_add(g, &gcol, gxb);
            }
        }
    }
    ConvGrads { input: gx, weight: gw, bias: gb }
}

/// `(n, c*r*r, h, w) -> (n, c, h*r, w*r)`; `inverse` runs the opposite direction
/// with the same index map, which is also the gradient rule.
pub(crate) fn pixel_shuffle<T: Real>(src: &[T], n: usize, c: usize, h: usize, w: usize, r: usize, inverse: bool) -> Vec<T> {
    let mut dst = vec![T::zero(); src.len()];
    let (hr, wr) = (h * r, w * r);
    for b in 0..n {
        for ch in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let in_ch = ch * r * r + i * r + j;
                    for y in 0..h {
                        for x in 0..w {
                            let packed = ((b * c * r * r + in_ch) * h + y) * w + x;
                            let spread = ((b * c + ch) * hr + y * r + i) * wr + x * r + j;
                            if inverse {
                                dst[packed] = src[spread];
                            } else {
                                dst[spread] = src[packed];
                            }
                        }
                    }
                }
            }
        }
    }
    dst
}
