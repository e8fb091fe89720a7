//! Dense, convolution and Fourier kernels shared by the direct forward path
//! and the gradient tape, so both produce bitwise-identical values.

use std::f64::consts::TAU;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

/// `x · wᵀ + b` for a batch `x` of shape (batch, in) and `w` of shape (out, in).
pub fn dense_forward(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    y += &b;
    y
}

/// Geometry of a "same"-padded, stride-1 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub len: usize,
    pub kernel: usize,
}

impl ConvGeometry {
    fn taps(&self) -> impl Iterator<Item = (usize, isize)> {
        let half = (self.kernel / 2) as isize;
        (0..self.kernel).map(move |j| (j, j as isize - half))
    }

    /// Output positions `t` for which `t + offset` is inside the signal.
    fn valid_range(&self, offset: isize) -> (usize, usize) {
        let len = self.len as isize;
        let lo = (-offset).max(0);
        let hi = (len - offset).min(len);
        (lo as usize, hi.max(lo) as usize)
    }
}

/// Rows of `x` hold `in_channels` consecutive signals of length `len`; the
/// weight matrix is (out_channels, in_channels · kernel).
pub fn conv1d_forward(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>, geom: ConvGeometry) -> Array2<f64> {
    let ConvGeometry {
        in_channels,
        out_channels,
        len,
        kernel,
    } = geom;
    let x = x.as_standard_layout();
    let batch = x.nrows();
    let mut y = Array2::<f64>::zeros((batch, out_channels * len));
    for (xr, mut yr) in x.outer_iter().zip(y.outer_iter_mut()) {
        let xs = xr.as_slice().expect("contiguous row");
        let ys = yr.as_slice_mut().expect("contiguous row");
        for o in 0..out_channels {
            let out = &mut ys[o * len..(o + 1) * len];
            out.fill(b[o]);
            for c in 0..in_channels {
                let sig = &xs[c * len..(c + 1) * len];
                for (j, off) in geom.taps() {
                    let wv = w[[o, c * kernel + j]];
                    let (lo, hi) = geom.valid_range(off);
                    for t in lo..hi {
                        out[t] += wv * sig[(t as isize + off) as usize];
                    }
                }
            }
        }
    }
    y
}

/// Gradients of [`conv1d_forward`] with respect to input, weights and bias.
pub fn conv1d_backward(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    geom: ConvGeometry,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let ConvGeometry {
        in_channels,
        out_channels,
        len,
        kernel,
    } = geom;
    let (x, dy) = (x.as_standard_layout(), dy.as_standard_layout());
    let mut dx = Array2::<f64>::zeros(x.raw_dim());
    let mut dw = Array2::<f64>::zeros(w.raw_dim());
    let mut db = Array1::<f64>::zeros(out_channels);
    for ((xr, dyr), mut dxr) in x.outer_iter().zip(dy.outer_iter()).zip(dx.outer_iter_mut()) {
        let xs = xr.as_slice().expect("contiguous row");
        let dys = dyr.as_slice().expect("contiguous row");
        let dxs = dxr.as_slice_mut().expect("contiguous row");
        for o in 0..out_channels {
            let g = &dys[o * len..(o + 1) * len];
            db[o] += g.iter().sum::<f64>();
            for c in 0..in_channels {
                let sig = &xs[c * len..(c + 1) * len];
                for (j, off) in geom.taps() {
                    let wv = w[[o, c * kernel + j]];
                    let (lo, hi) = geom.valid_range(off);
                    let mut acc = 0.0;
                    for t in lo..hi {
                        let src = (t as isize + off) as usize;
                        acc += g[t] * sig[src];
                        dxs[c * len + src] += wv * g[t];
                    }
                    dw[[o, c * kernel + j]] += acc;
                }
            }
        }
    }
    (dx, dw, db)
}

/// Phase matrix `2π · z · Bᵀ`, shape (batch, rows(B)).
pub fn fourier_phase(z: ArrayView2<f64>, freq: ArrayView2<f64>) -> Array2<f64> {
    let mut phase = z.dot(&freq.t());
    phase.mapv_inplace(|p| TAU * p);
    phase
}

/// `[sin(2π·B·z), cos(2π·B·z)]` for every row of `z`.
pub fn fourier_lift(z: ArrayView2<f64>, freq: ArrayView2<f64>) -> Array2<f64> {
    let phase = fourier_phase(z, freq);
    let sin = phase.mapv(f64::sin);
    let cos = phase.mapv(f64::cos);
    ndarray::concatenate(Axis(1), &[sin.view(), cos.view()]).expect("matching rows")
}
