//! Forward and backward kernels for the network's layers.
//!
//! Convolutions are 3×3×3 with unit zero padding and stride 1; weights are
//! laid out `[out][in][kz][ky][kx]`. Pointwise maps are `[out][in]`.

use num_traits::Float;

use crate::tensor::Field;

/// Output range `lo..hi` along an axis of length `n` for kernel tap `k`
/// (input index is `o + k − 1`).
#[inline]
fn tap_range(k: usize, n: usize) -> (usize, usize) {
    let lo = if k == 0 { 1.min(n) } else { 0 };
    let hi = if k == 2 { n.saturating_sub(1) } else { n };
    (lo, hi.max(lo))
}

pub(crate) fn conv3<T: Float>(x: &Field<T>, w: &[T], b: &[T], cout: usize) -> Field<T> {
    let cin = x.channels();
    let [d, h, wd] = x.dims();
    debug_assert_eq!(w.len(), cout * cin * 27);
    let mut out = Field::zeros(cout, x.dims());
    for co in 0..cout {
        let oc = out.channel_mut(co);
        oc.iter_mut().for_each(|v| *v = b[co]);
        for ci in 0..cin {
            let xc = x.channel(ci);
            let wk = &w[(co * cin + ci) * 27..(co * cin + ci + 1) * 27];
            for kz in 0..3 {
                let (z0, z1) = tap_range(kz, d);
                for ky in 0..3 {
                    let (y0, y1) = tap_range(ky, h);
                    for kx in 0..3 {
                        let (x0, x1) = tap_range(kx, wd);
                        let wv = wk[kz * 9 + ky * 3 + kx];
                        let n = x1 - x0;
                        for z in z0..z1 {
                            for y in y0..y1 {
                                let o = (z * h + y) * wd + x0;
                                let i = ((z + kz - 1) * h + (y + ky - 1)) * wd + x0 + kx - 1;
                                for (ov, &iv) in oc[o..o + n].iter_mut().zip(&xc[i..i + n]) {
                                    *ov = *ov + wv * iv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients into `gw`/`gb` and returns dL/dx.
pub(crate) fn conv3_backward<T: Float>(
    x: &Field<T>,
    w: &[T],
    g: &Field<T>,
    gw: &mut [T],
    gb: &mut [T],
) -> Field<T> {
    let cin = x.channels();
    let cout = g.channels();
    let [d, h, wd] = x.dims();
    let mut gx = Field::zeros(cin, x.dims());
    for co in 0..cout {
        let gc = g.channel(co);
        gb[co] = gc.iter().fold(gb[co], |acc, &v| acc + v);
        for ci in 0..cin {
            let xc = x.channel(ci);
            let base = (co * cin + ci) * 27;
            for kz in 0..3 {
                let (z0, z1) = tap_range(kz, d);
                for ky in 0..3 {
                    let (y0, y1) = tap_range(ky, h);
                    for kx in 0..3 {
                        let (x0, x1) = tap_range(kx, wd);
                        let k = base + kz * 9 + ky * 3 + kx;
                        let wv = w[k];
                        let n = x1 - x0;
                        let mut acc = T::zero();
                        let gxc = gx.channel_mut(ci);
                        for z in z0..z1 {
                            for y in y0..y1 {
                                let o = (z * h + y) * wd + x0;
                                let i = ((z + kz - 1) * h + (y + ky - 1)) * wd + x0 + kx - 1;
                                let grow = &gc[o..o + n];
                                for (&gv, &iv) in grow.iter().zip(&xc[i..i + n]) {
                                    acc = acc + gv * iv;
                                }
                                for (gi, &gv) in gxc[i..i + n].iter_mut().zip(grow) {
                                    *gi = *gi + wv * gv;
                                }
                            }
                        }
                        gw[k] = gw[k] + acc;
                    }
                }
            }
        }
    }
    gx
}

pub(crate) fn pointwise<T: Float>(x: &Field<T>, w: &[T], b: &[T], cout: usize) -> Field<T> {
    let cin = x.channels();
    debug_assert_eq!(w.len(), cout * cin);
    let mut out = Field::zeros(cout, x.dims());
    for co in 0..cout {
        let oc = out.channel_mut(co);
        oc.iter_mut().for_each(|v| *v = b[co]);
        for ci in 0..cin {
            let wv = w[co * cin + ci];
            for (o, &i) in oc.iter_mut().zip(x.channel(ci)) {
                *o = *o + wv * i;
            }
        }
    }
    out
}

pub(crate) fn pointwise_backward<T: Float>(
    x: &Field<T>,
    w: &[T],
    g: &Field<T>,
    gw: &mut [T],
    gb: &mut [T],
) -> Field<T> {
    let cin = x.channels();
    let cout = g.channels();
    let mut gx = Field::zeros(cin, x.dims());
    for co in 0..cout {
        let gc = g.channel(co);
        gb[co] = gc.iter().fold(gb[co], |acc, &v| acc + v);
        for ci in 0..cin {
            let xc = x.channel(ci);
            let dot = gc.iter().zip(xc).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            gw[co * cin + ci] = gw[co * cin + ci] + dot;
            let wv = w[co * cin + ci];
            for (gi, &gv) in gx.channel_mut(ci).iter_mut().zip(gc) {
                *gi = *gi + wv * gv;
            }
        }
    }
    gx
}

#[inline]
fn sigmoid<T: Float>(a: T) -> T {
    T::one() / (T::one() + (-a).exp())
}

pub(crate) fn silu<T: Float>(x: &Field<T>) -> Field<T> {
    x.map(|a| a * sigmoid(a))
}

/// dL/da given dL/d silu(a).
pub(crate) fn silu_backward<T: Float>(pre: &Field<T>, g: &Field<T>) -> Field<T> {
    let mut out = g.clone();
    for (o, &a) in out.data_mut().iter_mut().zip(pre.data()) {
        let s = sigmoid(a);
        *o = *o * s * (T::one() + a * (T::one() - s));
    }
    out
}
