use super::{ConvKernel, MatRef, Scalar, Shape, Tensor};
use crate::error::{Error, Result};

/// Unroll one `(C, H, W)` image into a `(C·kh·kw) × (Ho·Wo)` column matrix.
fn im2col<T: Scalar>(src: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, cols: &mut [T]) {
    let (ho, wo) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
    let plane_out = ho * wo;
    for ch in 0..c {
        let img = &src[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * plane_out..(row + 1) * plane_out];
                // valid x range: 0 <= x + kx - pad < w
                let x_lo = pad.saturating_sub(kx).min(wo);
                let x_hi = (w + pad).saturating_sub(kx).min(wo).max(x_lo);
                for y in 0..ho {
                    let line = &mut dst[y * wo..(y + 1) * wo];
                    let iy = (y + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let iy = iy as usize;
                    line[..x_lo].fill(T::zero());
                    line[x_hi..].fill(T::zero());
                    if x_hi > x_lo {
                        let ix0 = x_lo + kx - pad;
                        line[x_lo..x_hi].copy_from_slice(&img[iy * w + ix0..iy * w + ix0 + (x_hi - x_lo)]);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into an image buffer.
fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, dst: &mut [T]) {
    let (ho, wo) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
    let plane_out = ho * wo;
    for ch in 0..c {
        let img = &mut dst[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * plane_out..(row + 1) * plane_out];
                let x_lo = pad.saturating_sub(kx).min(wo);
                let x_hi = (w + pad).saturating_sub(kx).min(wo).max(x_lo);
                for y in 0..ho {
                    let iy = (y + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize || x_hi <= x_lo {
                        continue;
                    }
                    let iy = iy as usize;
                    let ix0 = x_lo + kx - pad;
                    let out = &mut img[iy * w + ix0..iy * w + ix0 + (x_hi - x_lo)];
                    for (o, &v) in out.iter_mut().zip(&src[y * wo + x_lo..y * wo + x_hi]) {
                        *o = *o + v;
                    }
                }
            }
        }
    }
}

fn conv_output_shape(input: Shape, weight: Shape, padding: usize) -> Result<Shape> {
    if input.channels != weight.channels {
        return Err(Error::shape("conv2d", input, weight));
    }
    if input.height + 2 * padding < weight.height || input.width + 2 * padding < weight.width {
        return Err(Error::shape("conv2d", input, weight));
    }
    Ok(Shape::new(
        input.batch,
        weight.batch,
        input.height + 2 * padding + 1 - weight.height,
        input.width + 2 * padding + 1 - weight.width,
    ))
}

/// Stride-1 cross-correlation plus bias.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, kernel: &ConvKernel<T>, padding: usize) -> Result<Tensor<T>> {
    let ws = kernel.weight.shape();
    let is = input.shape();
    let os = conv_output_shape(is, ws, padding)?;
    let k = ws.height;
    let depth = ws.channels * k * k;
    let plane_in = is.plane();
    let plane_out = os.plane();
    let direct = k == 1 && padding == 0;
    let mut cols = if direct { Vec::new() } else { vec![T::zero(); depth * plane_out] };
    let mut out = Vec::with_capacity(os.len());
    let bias = kernel.bias.data();
    for b in 0..is.batch {
        let src = &input.data()[b * is.channels * plane_in..(b + 1) * is.channels * plane_in];
        let start = out.len();
        for &bv in bias {
            out.extend(std::iter::repeat_n(bv, plane_out));
        }
        let cols_ref: &[T] = if direct {
            src
        } else {
            im2col(src, is.channels, is.height, is.width, k, padding, &mut cols);
            &cols
        };
        T::gemm(
            ws.batch,
            depth,
            plane_out,
            MatRef::row_major(kernel.weight.data(), depth),
            MatRef::row_major(cols_ref, plane_out),
            T::one(),
            &mut out[start..],
        );
    }
    Tensor::from_vec(os, out)
}

pub struct ConvGrads<T> {
    /// `None` when the input gradient was not requested.
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    padding: usize,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let ws = weight.shape();
    let is = input.shape();
    let os = conv_output_shape(is, ws, padding)?;
    if grad_out.shape() != os {
        return Err(Error::shape("conv2d_backward", os, grad_out.shape()));
    }
    let k = ws.height;
    let depth = ws.channels * k * k;
    let plane_in = is.plane();
    let plane_out = os.plane();
    let direct = k == 1 && padding == 0;

    let mut dw = vec![T::zero(); ws.len()];
    let mut db = vec![T::zero(); ws.batch];
    let mut dx = if need_input { vec![T::zero(); is.len()] } else { Vec::new() };
    let mut cols = if direct { Vec::new() } else { vec![T::zero(); depth * plane_out] };
    let mut dcols = if need_input && !direct { vec![T::zero(); depth * plane_out] } else { Vec::new() };

    for b in 0..is.batch {
        let src = &input.data()[b * is.channels * plane_in..(b + 1) * is.channels * plane_in];
        let gy = &grad_out.data()[b * ws.batch * plane_out..(b + 1) * ws.batch * plane_out];
        for (o, acc) in db.iter_mut().enumerate() {
            *acc = *acc + gy[o * plane_out..(o + 1) * plane_out].iter().copied().sum::<T>();
        }
        let cols_ref: &[T] = if direct {
            src
        } else {
            im2col(src, is.channels, is.height, is.width, k, padding, &mut cols);
            &cols
        };
        // dW += dY · colsᵀ
        T::gemm(
            ws.batch,
            plane_out,
            depth,
            MatRef::row_major(gy, plane_out),
            MatRef::transposed(cols_ref, plane_out),
            T::one(),
            &mut dw,
        );
        if need_input {
            let dst = &mut dx[b * is.channels * plane_in..(b + 1) * is.channels * plane_in];
            // dcols = Wᵀ · dY
            if direct {
                T::gemm(
                    depth,
                    ws.batch,
                    plane_out,
                    MatRef::transposed(weight.data(), depth),
                    MatRef::row_major(gy, plane_out),
                    T::zero(),
                    dst,
                );
            } else {
                T::gemm(
                    depth,
                    ws.batch,
                    plane_out,
                    MatRef::transposed(weight.data(), depth),
                    MatRef::row_major(gy, plane_out),
                    T::zero(),
                    &mut dcols,
                );
                col2im(&dcols, is.channels, is.height, is.width, k, padding, dst);
            }
        }
    }
    Ok(ConvGrads {
        input: if need_input { Some(Tensor::from_vec(is, dx)?) } else { None },
        weight: Tensor::from_vec(ws, dw)?,
        bias: Tensor::from_vec([1, ws.batch, 1, 1], db)?,
    })
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Logistic function, clamped so the result stays strictly inside (0, 1)
/// even where the exact value rounds to 0 or 1.
pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let hi = T::one() - T::epsilon() / (T::one() + T::one());
    let lo = T::min_positive_value();
    input.map(|x| {
        let s = if x >= T::zero() {
            T::one() / (T::one() + (-x).exp())
        } else {
            let e = x.exp();
            e / (T::one() + e)
        };
        s.max(lo).min(hi)
    })
}

pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.batch != sb.batch || sa.height != sb.height || sa.width != sb.width {
        return Err(Error::shape("concat_channels", sa, sb));
    }
    let out = sa.with_channels(sa.channels + sb.channels);
    let (pa, pb) = (sa.channels * sa.plane(), sb.channels * sb.plane());
    let mut data = Vec::with_capacity(out.len());
    for n in 0..sa.batch {
        data.extend_from_slice(&a.data()[n * pa..(n + 1) * pa]);
        data.extend_from_slice(&b.data()[n * pb..(n + 1) * pb]);
    }
    Tensor::from_vec(out, data)
}

pub fn nearest_upsample<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor < 2 {
        return Err(Error::arg("nearest_upsample", format!("factor must be >= 2, got {factor}")));
    }
    let s = input.shape();
    let out = Shape::new(s.batch, s.channels, s.height * factor, s.width * factor);
    let mut data = Vec::with_capacity(out.len());
    for plane in input.data().chunks(s.plane().max(1)).take(s.batch * s.channels) {
        for y in 0..out.height {
            let row = &plane[(y / factor) * s.width..(y / factor + 1) * s.width];
            for &v in row {
                data.extend(std::iter::repeat_n(v, factor));
            }
        }
    }
    Tensor::from_vec(out, data)
}

/// Adjoint of [`nearest_upsample`]: sums each `factor × factor` cell.
pub fn nearest_upsample_backward<T: Scalar>(grad: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let g = grad.shape();
    if factor == 0 || !g.height.is_multiple_of(factor) || !g.width.is_multiple_of(factor) {
        return Err(Error::arg("nearest_upsample_backward", "gradient not divisible by factor"));
    }
    let out = Shape::new(g.batch, g.channels, g.height / factor, g.width / factor);
    let mut data = vec![T::zero(); out.len()];
    for p in 0..g.batch * g.channels {
        let src = &grad.data()[p * g.plane()..(p + 1) * g.plane()];
        let dst = &mut data[p * out.plane()..(p + 1) * out.plane()];
        for y in 0..g.height {
            for x in 0..g.width {
                let d = &mut dst[(y / factor) * out.width + x / factor];
                *d = *d + src[y * g.width + x];
            }
        }
    }
    Tensor::from_vec(out, data)
}

/// Depth-to-space: output channel `c` at cell offset `(dy, dx)` reads input
/// channel `c·r² + dy·r + dx`.
pub fn pixel_shuffle<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if r == 0 || !s.channels.is_multiple_of(r * r) {
        return Err(Error::arg(
            "pixel_shuffle",
            format!("{} channels not divisible by r^2 = {}", s.channels, r * r),
        ));
    }
    let out = Shape::new(s.batch, s.channels / (r * r), s.height * r, s.width * r);
    let mut t = Tensor::zeros(out);
    for b in 0..s.batch {
        for c in 0..out.channels {
            for dy in 0..r {
                for dx in 0..r {
                    let ic = c * r * r + dy * r + dx;
                    for y in 0..s.height {
                        for x in 0..s.width {
                            t.set(b, c, y * r + dy, x * r + dx, input.at(b, ic, y, x));
                        }
                    }
                }
            }
        }
    }
    Ok(t)
}

/// Inverse of [`pixel_shuffle`] (and its adjoint).
pub fn space_to_depth<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if r == 0 || !s.height.is_multiple_of(r) || !s.width.is_multiple_of(r) {
        return Err(Error::arg("space_to_depth", "spatial size not divisible by r"));
    }
    let out = Shape::new(s.batch, s.channels * r * r, s.height / r, s.width / r);
    let mut t = Tensor::zeros(out);
    for b in 0..s.batch {
        for c in 0..s.channels {
            for dy in 0..r {
                for dx in 0..r {
                    let oc = c * r * r + dy * r + dx;
                    for y in 0..out.height {
                        for x in 0..out.width {
                            t.set(b, oc, y, x, input.at(b, c, y * r + dy, x * r + dx));
                        }
                    }
                }
            }
        }
    }
    Ok(t)
}
