use super::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfold one `[C, H, W]` image into a `[C·k·k, OH·OW]` patch matrix.
fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let n = g.cols();
    for c in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..(c * g.h + iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add patch gradients back onto the image.
fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let n = g.cols();
    for c in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dx[base + ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Per-axis sampling plan for align-corners=false bilinear resampling.
fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

impl Tensor {
    /// 2-D cross-correlation of `[B, C, H, W]` with `[O, C, k, k]`, zero
    /// padding, optional per-channel bias of shape `[O]`.
    pub fn conv2d(&self, kernel: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
        let &[b, c, h, w] = self.shape() else {
            return Err(Error::shape(format!("conv2d input must be 4-D, got {:?}", self.shape())));
        };
        let &[o, kc, k, k2] = kernel.shape() else {
            return Err(Error::shape(format!("conv2d kernel must be 4-D, got {:?}", kernel.shape())));
        };
        if kc != c || k != k2 {
            return Err(Error::shape(format!(
                "conv2d kernel {:?} does not match input {:?}",
                kernel.shape(),
                self.shape()
            )));
        }
        if k % 2 == 0 {
            return Err(Error::shape(format!("conv2d kernel extent must be odd, got {k}")));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d stride must be positive"));
        }
        if h + 2 * padding < k || w + 2 * padding < k {
            return Err(Error::shape(format!(
                "conv2d output extent is not positive for input {:?}, kernel {k}, padding {padding}",
                self.shape()
            )));
        }
        if let Some(bias) = bias {
            if bias.shape() != [o] {
                return Err(Error::shape(format!("conv2d bias must be [{o}], got {:?}", bias.shape())));
            }
        }
        let g = ConvGeom {
            c,
            h,
            w,
            k,
            stride,
            pad: padding,
            oh: (h + 2 * padding - k) / stride + 1,
            ow: (w + 2 * padding - k) / stride + 1,
        };
        let (rows, ncols) = (g.rows(), g.cols());
        let x = self.to_vec();
        let wts = kernel.to_vec();
        let bvals = bias.map(|t| t.to_vec());

        let mut out = vec![0.0; b * o * ncols];
        let mut cols = if g.is_pointwise() { Vec::new() } else { vec![0.0; rows * ncols] };
        for bi in 0..b {
            let xb = &x[bi * c * h * w..(bi + 1) * c * h * w];
            let ob = &mut out[bi * o * ncols..(bi + 1) * o * ncols];
            let patches: &[f64] = if g.is_pointwise() {
                xb
            } else {
                im2col(xb, &g, &mut cols);
                &cols
            };
            gemm(o, rows, ncols, &wts, rows, 1, patches, ncols, 1, 0.0, ob);
            if let Some(bv) = &bvals {
                for (oc, chunk) in ob.chunks_mut(ncols).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += bv[oc]);
                }
            }
        }

        let mut inputs: Vec<&Tensor> = vec![self, kernel];
        if let Some(bias) = bias {
            inputs.push(bias);
        }
        let has_bias = bias.is_some();
        Ok(Tensor::from_op("conv2d", vec![b, o, g.oh, g.ow], out, &inputs, move |grad, needs| {
            let mut gx = needs[0].then(|| vec![0.0; b * c * h * w]);
            let mut gw = needs[1].then(|| vec![0.0; o * rows]);
            let mut cols = if g.is_pointwise() { Vec::new() } else { vec![0.0; rows * ncols] };
            let mut gcols = vec![0.0; if g.is_pointwise() { 0 } else { rows * ncols }];
            for bi in 0..b {
                let gb = &grad[bi * o * ncols..(bi + 1) * o * ncols];
                let xb = &x[bi * c * h * w..(bi + 1) * c * h * w];
                if let Some(gw) = gw.as_mut() {
                    let patches: &[f64] = if g.is_pointwise() {
                        xb
                    } else {
                        im2col(xb, &g, &mut cols);
                        &cols
                    };
                    // gw += gb · patchesᵀ
                    gemm(o, ncols, rows, gb, ncols, 1, patches, 1, ncols, 1.0, gw);
                }
                if let Some(gx) = gx.as_mut() {
                    let dxb = &mut gx[bi * c * h * w..(bi + 1) * c * h * w];
                    if g.is_pointwise() {
                        gemm(rows, o, ncols, &wts, 1, rows, gb, ncols, 1, 0.0, dxb);
                    } else {
                        gemm(rows, o, ncols, &wts, 1, rows, gb, ncols, 1, 0.0, &mut gcols);
                        col2im(&gcols, &g, dxb);
                    }
                }
            }
            let mut res = vec![gx, gw];
            if has_bias {
                res.push(needs[2].then(|| {
                    let mut gbias = vec![0.0; o];
                    for bi in 0..b {
                        for (oc, acc) in gbias.iter_mut().enumerate() {
                            let start = (bi * o + oc) * ncols;
                            *acc += grad[start..start + ncols].iter().sum::<f64>();
                        }
                    }
                    gbias
                }));
            }
            res
        }))
    }

    /// Bilinear resampling of `[B, C, h, w]` to `[B, C, H, W]` with the
    /// align-corners=false convention and edge clamping.
    pub fn bilinear_resample(&self, out_h: usize, out_w: usize) -> Result<Tensor> {
        let &[b, c, h, w] = self.shape() else {
            return Err(Error::shape(format!("bilinear_resample needs 4-D input, got {:?}", self.shape())));
        };
        if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
            return Err(Error::shape(format!(
                "bilinear_resample extents must be positive: {:?} -> ({out_h}, {out_w})",
                self.shape()
            )));
        }
        if (h, w) == (out_h, out_w) {
            return Ok(Tensor::from_op("bilinear_resample", self.shape().to_vec(), self.to_vec(), &[self], |g, _| {
                vec![Some(g.to_vec())]
            }));
        }
        let ty = bilinear_taps(h, out_h);
        let tx = bilinear_taps(w, out_w);
        let x = self.data();
        let planes = b * c;
        let mut out = vec![0.0; planes * out_h * out_w];
        for p in 0..planes {
            let src = &x[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * out_h * out_w..(p + 1) * out_h * out_w];
            for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                    let top = src[y0 * w + x0] * (1.0 - wx) + src[y0 * w + x1] * wx;
                    let bottom = src[y1 * w + x0] * (1.0 - wx) + src[y1 * w + x1] * wx;
                    dst[oy * out_w + ox] = top * (1.0 - wy) + bottom * wy;
                }
            }
        }
        drop(x);
        Ok(Tensor::from_op("bilinear_resample", vec![b, c, out_h, out_w], out, &[self], move |g, _| {
            let mut gx = vec![0.0; planes * h * w];
            for p in 0..planes {
                let gsrc = &g[p * out_h * out_w..(p + 1) * out_h * out_w];
                let dst = &mut gx[p * h * w..(p + 1) * h * w];
                for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                    for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                        let v = gsrc[oy * out_w + ox];
                        dst[y0 * w + x0] += v * (1.0 - wy) * (1.0 - wx);
                        dst[y0 * w + x1] += v * (1.0 - wy) * wx;
                        dst[y1 * w + x0] += v * wy * (1.0 - wx);
                        dst[y1 * w + x1] += v * wy * wx;
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}
