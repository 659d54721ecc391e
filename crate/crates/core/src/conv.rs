//! Forward and transposed DISCO convolutions by compressed shift-multiply.
//!
//! Every `(batch, channel)` plane is convolved independently with the same
//! sparse structure. Output ring `t'` at longitude `p' = r q + rho` is the dot
//! product of compressed row `(t', rho)` with the input rotated by `q`
//! longitude steps; the rotation is index arithmetic only.

use rayon::prelude::*;

use crate::error::{DiscoError, Result};
use crate::kernel::{CompressedSparseKernel, KernelOrientation};
use crate::signal::Batch;

fn check_input(kernel: &CompressedSparseKernel, x: &Batch) -> Result<()> {
    if x.bandlimit() != kernel.l_in() {
        return Err(DiscoError::ResolutionMismatch {
            expected: kernel.l_in().get(),
            actual: x.bandlimit().get(),
        });
    }
    x.check_finite("convolution input")
}

/// `h_j = sum_i Psi_ji x_i` with a forward kernel.
pub fn disco_conv(kernel: &CompressedSparseKernel, x: &Batch) -> Result<Batch> {
    if kernel.orientation() != KernelOrientation::Forward {
        return Err(DiscoError::WrongOrientation(kernel.orientation().name()));
    }
    apply_kernel(kernel, x)
}

/// `h(w_j) = sum_i x_i psi(R_i^{-1} w_j) dw_i`: a copy of the filter centred
/// on every input sample, weighted by that sample.
pub fn disco_conv_transposed(kernel: &CompressedSparseKernel, x: &Batch) -> Result<Batch> {
    if kernel.orientation() != KernelOrientation::Transposed {
        return Err(DiscoError::WrongOrientation(kernel.orientation().name()));
    }
    apply_kernel(kernel, x)
}

/// Sparse product with whatever the kernel stores, regardless of orientation.
pub fn apply_kernel(kernel: &CompressedSparseKernel, x: &Batch) -> Result<Batch> {
    apply_per_plane(&[kernel], x)
}

/// Applies `kernels[c]` to channel `c` (or a single kernel to every channel).
fn apply_per_plane(kernels: &[&CompressedSparseKernel], x: &Batch) -> Result<Batch> {
    let k0 = kernels[0];
    for k in kernels {
        check_input(k, x)?;
        if k.l_out() != k0.l_out() {
            return Err(DiscoError::ShapeMismatch(
                "kernels disagree on the output resolution".into(),
            ));
        }
    }
    let l_out = k0.l_out();
    let n_rings_out = l_out.n_rings();
    let n_lon_out = l_out.n_lon();
    let n_lon_in = k0.l_in().n_lon();
    let r = k0.residues();
    let channels = x.channels();
    let mut out = Batch::zeros(l_out, x.batch(), channels);

    out.data_mut()
        .par_chunks_mut(n_lon_out)
        .enumerate()
        .for_each(|(k, dst)| {
            let plane = k / n_rings_out;
            let t_out = k % n_rings_out;
            let kernel = kernels[if kernels.len() == 1 { 0 } else { plane % channels }];
            let src = x.plane(plane);
            let mut acc = vec![0.0; n_lon_in];
            for rho in 0..r {
                acc.iter_mut().for_each(|a| *a = 0.0);
                let row = kernel.row(t_out, rho);
                for e in 0..row.values.len() {
                    let v = row.values[e];
                    let ring = &src[row.rings[e] as usize * n_lon_in..][..n_lon_in];
                    let p0 = row.lons[e] as usize;
                    // acc[q] += v * ring[(p0 + q) mod n], split at the wrap
                    let (head, tail) = acc.split_at_mut(n_lon_in - p0);
                    for (a, s) in head.iter_mut().zip(&ring[p0..]) {
                        *a += v * s;
                    }
                    for (a, s) in tail.iter_mut().zip(&ring[..p0]) {
                        *a += v * s;
                    }
                }
                for (q, a) in acc.iter().enumerate() {
                    dst[r * q + rho] = *a;
                }
            }
        });
    Ok(out)
}

/// `Psi^T u`: the adjoint of [`apply_kernel`], gathered per input ring.
pub fn apply_kernel_adjoint(kernel: &CompressedSparseKernel, upstream: &Batch) -> Result<Batch> {
    if upstream.bandlimit() != kernel.l_out() {
        return Err(DiscoError::ResolutionMismatch {
            expected: kernel.l_out().get(),
            actual: upstream.bandlimit().get(),
        });
    }
    upstream.check_finite("upstream gradient")?;
    let l_in = kernel.l_in();
    let n_rings_in = l_in.n_rings();
    let n_lon_in = l_in.n_lon();
    let n_lon_out = kernel.l_out().n_lon();
    let r = kernel.residues();
    let idx = kernel.input_ring_index();
    let (_, lons) = kernel.columns();
    let values = kernel.values();
    let mut out = Batch::zeros(l_in, upstream.batch(), upstream.channels());

    out.data_mut()
        .par_chunks_mut(n_lon_in)
        .enumerate()
        .for_each(|(k, dst)| {
            let plane = k / n_rings_in;
            let t_in = k % n_rings_in;
            let up = upstream.plane(plane);
            for s in idx.ring_ptr[t_in]..idx.ring_ptr[t_in + 1] {
                let e = idx.entries[s] as usize;
                let row = idx.entry_row[s] as usize;
                let (t_out, rho) = (row / r, row % r);
                let v = values[e];
                let p0 = lons[e] as usize;
                let urow = &up[t_out * n_lon_out..][..n_lon_out];
                // dst[(p0 + q) mod n] += v * urow[r q + rho]
                for q in 0..n_lon_in - p0 {
                    dst[p0 + q] += v * urow[r * q + rho];
                }
                for q in n_lon_in - p0..n_lon_in {
                    dst[p0 + q - n_lon_in] += v * urow[r * q + rho];
                }
            }
        });
    Ok(out)
}

/// A 1x1 channel mix `y_o = sum_c W[o][c] h_c + b_o`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pointwise {
    c_out: usize,
    c_in: usize,
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
}

impl Pointwise {
    /// `weights` is row-major `c_out x c_in`.
    pub fn new(c_out: usize, c_in: usize, weights: Vec<f64>, bias: Option<Vec<f64>>) -> Result<Self> {
        if weights.len() != c_out * c_in {
            return Err(DiscoError::ShapeMismatch(format!(
                "{} pointwise weights for a {c_out}x{c_in} mix",
                weights.len()
            )));
        }
        if bias.as_ref().is_some_and(|b| b.len() != c_out) {
            return Err(DiscoError::ShapeMismatch(
                "bias length must equal output channels".into(),
            ));
        }
        Ok(Self {
            c_out,
            c_in,
            weights,
            bias,
        })
    }

    pub fn identity(c: usize) -> Self {
        let mut w = vec![0.0; c * c];
        for i in 0..c {
            w[i * c + i] = 1.0;
        }
        Self::new(c, c, w, None).unwrap()
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn weight(&self, o: usize, c: usize) -> f64 {
        self.weights[o * self.c_in + c]
    }
}

/// Depthwise DISCO convolution (one kernel per input channel) followed by a
/// pointwise channel mix.
pub fn depthwise_separable_conv(kernels: &[CompressedSparseKernel], pointwise: &Pointwise, x: &Batch) -> Result<Batch> {
    if kernels.is_empty() || kernels.len() != x.channels() {
        return Err(DiscoError::ShapeMismatch(format!(
            "{} kernels for {} channels",
            kernels.len(),
            x.channels()
        )));
    }
    if pointwise.c_in != x.channels() {
        return Err(DiscoError::ShapeMismatch(format!(
            "pointwise mix expects {} channels, input has {}",
            pointwise.c_in,
            x.channels()
        )));
    }
    let refs: Vec<&CompressedSparseKernel> = kernels.iter().collect();
    let h = apply_per_plane(&refs, x)?;
    let l = h.bandlimit();
    let n = h.plane_len();
    let mut out = Batch::zeros(l, x.batch(), pointwise.c_out);
    out.data_mut().par_chunks_mut(n).enumerate().for_each(|(k, dst)| {
        let (d, o) = (k / pointwise.c_out, k % pointwise.c_out);
        if let Some(b) = &pointwise.bias {
            dst.iter_mut().for_each(|v| *v = b[o]);
        }
        for c in 0..pointwise.c_in {
            let w = pointwise.weight(o, c);
            if w == 0.0 {
                continue;
            }
            for (v, s) in dst.iter_mut().zip(h.plane(d * pointwise.c_in + c)) {
                *v += w * s;
            }
        }
    });
    Ok(out)
}
