//! im2col convolution kernels. All three are partial derivatives of the same
//! trilinear form `T(x, w, y) = sum y[b,o,p,q] w[o,i,a,c] x[b,i,p*sf+a*df-pf, q*ss+c*ds-ps]`,
//! which is what makes them mutually closed under differentiation.

use crate::{NnError, Result, Scalar, Shape, Tensor};

/// Geometry of a 2-D cross-correlation over the (frames, samples) plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvGeom {
    /// Stride-1 convolution with zero "same" padding (odd kernels).
    pub fn same(kf: usize, ks: usize) -> Self {
        Self { kernel: (kf, ks), stride: (1, 1), dilation: (1, 1), padding: (kf / 2, ks / 2) }
    }

    pub fn pointwise() -> Self {
        Self::same(1, 1)
    }

    /// Frame-axis dilated convolution, "same" padded.
    pub fn dilated_frames(kf: usize, dilation: usize) -> Self {
        Self {
            kernel: (kf, 1),
            stride: (1, 1),
            dilation: (dilation, 1),
            padding: (dilation * (kf / 2), 0),
        }
    }

    /// "Same" padded kernel with a stride along the sample axis.
    pub fn strided(kf: usize, ks: usize, stride: usize) -> Self {
        Self { kernel: (kf, ks), stride: (1, stride), dilation: (1, 1), padding: (kf / 2, ks / 2) }
    }

    pub fn output_dims(&self, frames: usize, samples: usize) -> Result<(usize, usize)> {
        let span_f = self.dilation.0 * (self.kernel.0 - 1) + 1;
        let span_s = self.dilation.1 * (self.kernel.1 - 1) + 1;
        let pf = frames + 2 * self.padding.0;
        let ps = samples + 2 * self.padding.1;
        if pf < span_f || ps < span_s {
            return Err(NnError::Shape {
                op: "conv2d",
                detail: format!("input {frames}x{samples} smaller than kernel span {span_f}x{span_s}"),
            });
        }
        Ok(((pf - span_f) / self.stride.0 + 1, (ps - span_s) / self.stride.1 + 1))
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == (1, 1) && self.stride == (1, 1) && self.padding == (0, 0)
    }
}

// Upper bound on im2col buffer size, in elements.
const COL_BUDGET: usize = 1 << 22;

struct Dims {
    ci: usize,
    fi: usize,
    li: usize,
    fo: usize,
    lo: usize,
}

impl Dims {
    fn k(&self, g: &ConvGeom) -> usize {
        self.ci * g.kernel.0 * g.kernel.1
    }

    fn rows_per_chunk(&self, g: &ConvGeom) -> usize {
        (COL_BUDGET / (self.k(g) * self.lo).max(1)).clamp(1, self.fo)
    }
}

fn im2col<T: Scalar>(x: &[T], d: &Dims, g: &ConvGeom, rows: std::ops::Range<usize>, cols: &mut [T]) {
    let (kf, ks) = g.kernel;
    let n = rows.len() * d.lo;
    let mut r = 0;
    for i in 0..d.ci {
        let xc = &x[i * d.fi * d.li..(i + 1) * d.fi * d.li];
        for a in 0..kf {
            for c in 0..ks {
                let dst = &mut cols[r * n..(r + 1) * n];
                let mut col = 0;
                for p in rows.clone() {
                    let fpos = (p * g.stride.0 + a * g.dilation.0) as isize - g.padding.0 as isize;
                    if fpos < 0 || fpos as usize >= d.fi {
                        dst[col..col + d.lo].fill(T::zero());
                        col += d.lo;
                        continue;
                    }
                    let src = &xc[fpos as usize * d.li..(fpos as usize + 1) * d.li];
                    for q in 0..d.lo {
                        let spos = (q * g.stride.1 + c * g.dilation.1) as isize - g.padding.1 as isize;
                        dst[col] = if spos < 0 || spos as usize >= d.li {
                            T::zero()
                        } else {
                            src[spos as usize]
                        };
                        col += 1;
                    }
                }
                r += 1;
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], d: &Dims, g: &ConvGeom, rows: std::ops::Range<usize>, x: &mut [T]) {
    let (kf, ks) = g.kernel;
    let n = rows.len() * d.lo;
    let mut r = 0;
    for i in 0..d.ci {
        let xc = &mut x[i * d.fi * d.li..(i + 1) * d.fi * d.li];
        for a in 0..kf {
            for c in 0..ks {
                let src = &cols[r * n..(r + 1) * n];
                let mut col = 0;
                for p in rows.clone() {
                    let fpos = (p * g.stride.0 + a * g.dilation.0) as isize - g.padding.0 as isize;
                    if fpos < 0 || fpos as usize >= d.fi {
                        col += d.lo;
                        continue;
                    }
                    let dst = &mut xc[fpos as usize * d.li..(fpos as usize + 1) * d.li];
                    for q in 0..d.lo {
                        let spos = (q * g.stride.1 + c * g.dilation.1) as isize - g.padding.1 as isize;
                        if spos >= 0 && (spos as usize) < d.li {
                            dst[spos as usize] = dst[spos as usize] + src[col];
                        }
                        col += 1;
                    }
                }
                r += 1;
            }
        }
    }
}

fn check_kernel(w: Shape, ci: usize, g: &ConvGeom, op: &'static str) -> Result<()> {
    if w[1] != ci || (w[2], w[3]) != g.kernel {
        return Err(NnError::Shape {
            op,
            detail: format!("kernel {w:?} incompatible with {ci} input channels and {:?}", g.kernel),
        });
    }
    Ok(())
}

pub(crate) fn conv_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, g: &ConvGeom) -> Result<Tensor<T>> {
    let [b, ci, fi, li] = x.shape();
    check_kernel(w.shape(), ci, g, "conv2d")?;
    let co = w.shape()[0];
    let (fo, lo) = g.output_dims(fi, li)?;
    let d = Dims { ci, fi, li, fo, lo };
    let k = d.k(g);
    let mut y = Tensor::zeros([b, co, fo, lo]);
    let xin = x.data();
    let wd = w.data();
    let out = y.data_mut();
    if g.is_pointwise() {
        let n = fo * lo;
        for bi in 0..b {
            unsafe {
                T::gemm(
                    co, k, n, T::one(),
                    wd.as_ptr(), k as isize, 1,
                    xin[bi * ci * n..].as_ptr(), n as isize, 1,
                    T::zero(),
                    out[bi * co * n..].as_mut_ptr(), n as isize, 1,
                );
            }
        }
        return Ok(y);
    }
    let chunk = d.rows_per_chunk(g);
    let mut cols = vec![T::zero(); k * chunk * lo];
    for bi in 0..b {
        let xb = &xin[bi * ci * fi * li..(bi + 1) * ci * fi * li];
        let yb = &mut out[bi * co * fo * lo..(bi + 1) * co * fo * lo];
        let mut p0 = 0;
        while p0 < fo {
            let p1 = (p0 + chunk).min(fo);
            let n = (p1 - p0) * lo;
            im2col(xb, &d, g, p0..p1, &mut cols);
            unsafe {
                T::gemm(
                    co, k, n, T::one(),
                    wd.as_ptr(), k as isize, 1,
                    cols.as_ptr(), n as isize, 1,
                    T::zero(),
                    yb[p0 * lo..].as_mut_ptr(), (fo * lo) as isize, 1,
                );
            }
            p0 = p1;
        }
    }
    Ok(y)
}

/// Adjoint of [`conv_forward`] with respect to its input.
pub(crate) fn conv_grad_input<T: Scalar>(
    y: &Tensor<T>,
    w: &Tensor<T>,
    g: &ConvGeom,
    in_dims: (usize, usize),
) -> Result<Tensor<T>> {
    let [b, co, fo, lo] = y.shape();
    let [wco, ci, _, _] = w.shape();
    let (fi, li) = in_dims;
    if wco != co || g.output_dims(fi, li)? != (fo, lo) {
        return Err(NnError::Shape {
            op: "conv2d_grad_input",
            detail: format!("gradient {:?} vs kernel {:?}", y.shape(), w.shape()),
        });
    }
    let d = Dims { ci, fi, li, fo, lo };
    let k = d.k(g);
    let mut x = Tensor::zeros([b, ci, fi, li]);
    let yd = y.data();
    let wd = w.data();
    let out = x.data_mut();
    if g.is_pointwise() {
        let n = fo * lo;
        for bi in 0..b {
            unsafe {
                T::gemm(
                    k, co, n, T::one(),
                    wd.as_ptr(), 1, k as isize,
                    yd[bi * co * n..].as_ptr(), n as isize, 1,
                    T::zero(),
                    out[bi * ci * n..].as_mut_ptr(), n as isize, 1,
                );
            }
        }
        return Ok(x);
    }
    let chunk = d.rows_per_chunk(g);
    let mut cols = vec![T::zero(); k * chunk * lo];
    for bi in 0..b {
        let yb = &yd[bi * co * fo * lo..(bi + 1) * co * fo * lo];
        let xb = &mut out[bi * ci * fi * li..(bi + 1) * ci * fi * li];
        let mut p0 = 0;
        while p0 < fo {
            let p1 = (p0 + chunk).min(fo);
            let n = (p1 - p0) * lo;
            unsafe {
                T::gemm(
                    k, co, n, T::one(),
                    wd.as_ptr(), 1, k as isize,
                    yb[p0 * lo..].as_ptr(), (fo * lo) as isize, 1,
                    T::zero(),
                    cols.as_mut_ptr(), n as isize, 1,
                );
            }
            col2im(&cols[..k * n], &d, g, p0..p1, xb);
            p0 = p1;
        }
    }
    Ok(x)
}

/// Adjoint of [`conv_forward`] with respect to its kernel.
pub(crate) fn conv_grad_kernel<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, g: &ConvGeom) -> Result<Tensor<T>> {
    let [b, ci, fi, li] = x.shape();
    let [yb_, co, fo, lo] = y.shape();
    if yb_ != b || g.output_dims(fi, li)? != (fo, lo) {
        return Err(NnError::Shape {
            op: "conv2d_grad_kernel",
            detail: format!("input {:?} vs gradient {:?}", x.shape(), y.shape()),
        });
    }
    let d = Dims { ci, fi, li, fo, lo };
    let k = d.k(g);
    let mut w = Tensor::zeros([co, ci, g.kernel.0, g.kernel.1]);
    let xd = x.data();
    let yd = y.data();
    let out = w.data_mut();
    if g.is_pointwise() {
        let n = fo * lo;
        for bi in 0..b {
            unsafe {
                T::gemm(
                    co, n, k, T::one(),
                    yd[bi * co * n..].as_ptr(), n as isize, 1,
                    xd[bi * ci * n..].as_ptr(), 1, n as isize,
                    T::one(),
                    out.as_mut_ptr(), k as isize, 1,
                );
            }
        }
        return Ok(w);
    }
    let chunk = d.rows_per_chunk(g);
    let mut cols = vec![T::zero(); k * chunk * lo];
    for bi in 0..b {
        let xb = &xd[bi * ci * fi * li..(bi + 1) * ci * fi * li];
        let yb = &yd[bi * co * fo * lo..(bi + 1) * co * fo * lo];
        let mut p0 = 0;
        while p0 < fo {
            let p1 = (p0 + chunk).min(fo);
            let n = (p1 - p0) * lo;
            im2col(xb, &d, g, p0..p1, &mut cols);
            unsafe {
                T::gemm(
                    co, n, k, T::one(),
                    yb[p0 * lo..].as_ptr(), (fo * lo) as isize, 1,
                    cols.as_ptr(), 1, n as isize,
                    T::one(),
                    out.as_mut_ptr(), k as isize, 1,
                );
            }
            p0 = p1;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Direct evaluation of the defining sum, independent of im2col.
    fn naive(x: &Tensor<f64>, w: &Tensor<f64>, g: &ConvGeom) -> Tensor<f64> {
        let [b, ci, fi, li] = x.shape();
        let co = w.shape()[0];
        let (fo, lo) = g.output_dims(fi, li).unwrap();
        Tensor::from_fn([b, co, fo, lo], |[bi, o, p, q]| {
            let mut acc = 0.0;
            for i in 0..ci {
                for a in 0..g.kernel.0 {
                    for c in 0..g.kernel.1 {
                        let fp = (p * g.stride.0 + a * g.dilation.0) as isize - g.padding.0 as isize;
                        let sp = (q * g.stride.1 + c * g.dilation.1) as isize - g.padding.1 as isize;
                        if fp >= 0 && sp >= 0 && (fp as usize) < fi && (sp as usize) < li {
                            acc += w.at([o, i, a, c]) * x.at([bi, i, fp as usize, sp as usize]);
                        }
                    }
                }
            }
            acc
        })
    }

    fn pseudo(shape: Shape, seed: u64) -> Tensor<f64> {
        let mut s = seed;
        Tensor::from_fn(shape, |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn matches_direct_sum_for_assorted_geometries() {
        let geoms = [
            ConvGeom::same(3, 7),
            ConvGeom::strided(3, 7, 2),
            ConvGeom::dilated_frames(3, 4),
            ConvGeom::pointwise(),
        ];
        for g in geoms {
            let x = pseudo([2, 3, 5, 8], 1);
            let w = pseudo([4, 3, g.kernel.0, g.kernel.1], 2);
            let y = conv_forward(&x, &w, &g).unwrap();
            let r = naive(&x, &w, &g);
            for (a, b) in y.data().iter().zip(r.data()) {
                assert!((a - b).abs() < 1e-12, "{g:?}");
            }
        }
    }

    #[test]
    fn adjoint_identities_hold() {
        // <conv(x, w), y> = <x, grad_input(y, w)> = <w, grad_kernel(x, y)>
        for g in [ConvGeom::same(3, 7), ConvGeom::strided(3, 7, 2), ConvGeom::dilated_frames(3, 2)] {
            let x = pseudo([2, 3, 6, 8], 3);
            let w = pseudo([5, 3, g.kernel.0, g.kernel.1], 4);
            let (fo, lo) = g.output_dims(6, 8).unwrap();
            let y = pseudo([2, 5, fo, lo], 5);
            let lhs: f64 = conv_forward(&x, &w, &g).unwrap().zip_map(&y, |a, b| a * b).sum();
            let gx = conv_grad_input(&y, &w, &g, (6, 8)).unwrap();
            let mid: f64 = gx.zip_map(&x, |a, b| a * b).sum();
            let gw = conv_grad_kernel(&x, &y, &g).unwrap();
            let rhs: f64 = gw.zip_map(&w, |a, b| a * b).sum();
            assert!((lhs - mid).abs() < 1e-10);
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let x = Tensor::<f64>::zeros([1, 2, 3, 3]);
        let w = Tensor::<f64>::zeros([1, 3, 3, 3]);
        assert!(conv_forward(&x, &w, &ConvGeom::same(3, 3)).is_err());
    }
}
