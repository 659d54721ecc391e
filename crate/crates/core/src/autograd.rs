//! Sparse backward passes for the DISCO convolution.
//!
//! Quadrature weights live inside the kernel values, `Psi_ji = psi(Theta_ji,
//! Phi_ji) dw_i`, so the derivative of a value with respect to node `k` is
//! `w_k(Theta_ji, Phi_ji) dw_i`. Both maps take an upstream gradient that has
//! already been chained through whatever follows the convolution.

use rayon::prelude::*;

use crate::conv::{apply_kernel, apply_kernel_adjoint};
use crate::error::{DiscoError, Result};
use crate::filter::Filter;
use crate::kernel::CompressedSparseKernel;
use crate::signal::Batch;

/// Gradients of a scalar loss through one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGradients {
    pub grad_input: Batch,
    pub grad_params: Vec<f64>,
}

/// `dL/dx_i = sum_j u_j Psi_ji`.
pub fn backward_input(kernel: &CompressedSparseKernel, upstream: &Batch) -> Result<Batch> {
    apply_kernel_adjoint(kernel, upstream)
}

/// `dL/dp_k = sum_(j,i) w_k(Theta_ji, Phi_ji) dw_i sum_d u_dj x_di` over the
/// stored nonzeros.
pub fn backward_filter(kernel: &CompressedSparseKernel, x: &Batch, upstream: &Batch) -> Result<Vec<f64>> {
    let (thetas, phis) = kernel.coords().ok_or(DiscoError::MissingCoordinates)?;
    check_pair(kernel, x, upstream)?;
    let g = entry_products(kernel, x, upstream);
    let filter = kernel.filter();
    let weights = kernel.input_weights();
    let (rings, _) = kernel.columns();
    let mut grad = vec![0.0; filter.n_params()];
    // sequential so the reduction order never depends on the thread count
    for e in 0..g.len() {
        if g[e] == 0.0 {
            continue;
        }
        let scale = g[e] * weights[rings[e] as usize];
        for (k, w) in filter.param_gradient(thetas[e], phis[e]).iter() {
            grad[k] += w * scale;
        }
    }
    Ok(grad)
}

/// Both gradients at once.
pub fn conv_backward(kernel: &CompressedSparseKernel, x: &Batch, upstream: &Batch) -> Result<ConvGradients> {
    Ok(ConvGradients {
        grad_input: backward_input(kernel, upstream)?,
        grad_params: backward_filter(kernel, x, upstream)?,
    })
}

fn check_pair(kernel: &CompressedSparseKernel, x: &Batch, upstream: &Batch) -> Result<()> {
    if x.bandlimit() != kernel.l_in() {
        return Err(DiscoError::ResolutionMismatch {
            expected: kernel.l_in().get(),
            actual: x.bandlimit().get(),
        });
    }
    if upstream.bandlimit() != kernel.l_out() {
        return Err(DiscoError::ResolutionMismatch {
            expected: kernel.l_out().get(),
            actual: upstream.bandlimit().get(),
        });
    }
    if x.batch() != upstream.batch() || x.channels() != upstream.channels() {
        return Err(DiscoError::ShapeMismatch(format!(
            "input has {}x{} planes, upstream {}x{}",
            x.batch(),
            x.channels(),
            upstream.batch(),
            upstream.channels()
        )));
    }
    x.check_finite("convolution input")?;
    upstream.check_finite("upstream gradient")
}

/// `sum_d sum_q u[d, (t', r q + rho)] x[d, (t_e, p_e + q)]` for every stored
/// entry, i.e. `dL/dPsi` summed over the longitude shifts sharing the entry.
fn entry_products(kernel: &CompressedSparseKernel, x: &Batch, upstream: &Batch) -> Vec<f64> {
    let r = kernel.residues();
    let n_lon_in = kernel.l_in().n_lon();
    let n_lon_out = kernel.l_out().n_lon();
    let (rings, lons) = kernel.columns();
    let per_row: Vec<Vec<f64>> = (0..kernel.n_rows())
        .into_par_iter()
        .map(|row| {
            let (t_out, rho) = (row / r, row % r);
            kernel
                .row_range(row)
                .map(|e| {
                    let p0 = lons[e] as usize;
                    let t_in = rings[e] as usize;
                    let mut acc = 0.0;
                    for plane in 0..x.planes() {
                        let src = &x.plane(plane)[t_in * n_lon_in..][..n_lon_in];
                        let up = &upstream.plane(plane)[t_out * n_lon_out..][..n_lon_out];
                        for q in 0..n_lon_in {
                            let p = if q < n_lon_in - p0 { p0 + q } else { p0 + q - n_lon_in };
                            acc += up[r * q + rho] * src[p];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    per_row.concat()
}

/// Outcome of [`fit_filter_demo`].
#[derive(Debug, Clone)]
pub struct FitReport {
    pub filter: Filter,
    /// Loss before each step, then the final loss.
    pub losses: Vec<f64>,
}

impl FitReport {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

/// `0.5 ||conv(x) - target||^2`, summed over every sample of every plane.
pub fn fit_loss(kernel: &CompressedSparseKernel, x: &Batch, target: &Batch) -> Result<(f64, Batch)> {
    let h = apply_kernel(kernel, x)?;
    if h.data().len() != target.data().len() {
        return Err(DiscoError::ShapeMismatch(
            "target shape differs from the convolution output".into(),
        ));
    }
    let mut resid = h;
    for (v, t) in resid.data_mut().iter_mut().zip(target.data()) {
        *v -= t;
    }
    let loss = 0.5 * resid.data().iter().map(|v| v * v).sum::<f64>();
    Ok((loss, resid))
}

/// Plain gradient descent on the node values. `kernel` fixes the support and
/// rotated coordinates; its filter is the starting point. Stops early once
/// the loss falls to `tol`.
pub fn fit_filter_demo(
    kernel: &CompressedSparseKernel,
    x: &Batch,
    target: &Batch,
    steps: usize,
    lr: f64,
    tol: f64,
) -> Result<FitReport> {
    if !kernel.has_coords() {
        return Err(DiscoError::MissingCoordinates);
    }
    let mut filter = kernel.filter().clone();
    let mut k = kernel.clone();
    let mut losses = Vec::with_capacity(steps + 1);
    let start = fit_loss(&k, x, target)?.0;
    for _ in 0..steps {
        let (loss, resid) = fit_loss(&k, x, target)?;
        losses.push(loss);
        if loss > 10.0 * start.max(f64::MIN_POSITIVE) || !loss.is_finite() {
            return Err(DiscoError::Diverged { start, current: loss });
        }
        if loss <= tol {
            return Ok(FitReport { filter, losses });
        }
        let grad = backward_filter(&k, x, &resid)?;
        let params: Vec<f64> = filter.params().iter().zip(&grad).map(|(p, g)| p - lr * g).collect();
        filter = filter.with_params(params)?;
        k = k.with_filter(&filter)?;
    }
    let last = fit_loss(&k, x, target)?.0;
    if last > 10.0 * start.max(f64::MIN_POSITIVE) || !last.is_finite() {
        return Err(DiscoError::Diverged { start, current: last });
    }
    losses.push(last);
    Ok(FitReport { filter, losses })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::filter::{make_random_filter, make_smooth_bump, FilterKind};
    use crate::grid::{build_grid, SampleGrid};
    use crate::kernel::{build_kernel, build_transposed_kernel, densify, DenseKernelMatrix};

    fn random_batch(g: &SampleGrid, batch: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..batch * g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Batch::new(g.bandlimit(), batch, 1, data).unwrap()
    }

    fn kinds() -> Vec<Filter> {
        let c = 5.0 * PI / 8.0;
        vec![
            make_random_filter(FilterKind::Axisymmetric, c, 4, 21).unwrap(),
            make_random_filter(FilterKind::Separable, c, 4, 22).unwrap(),
            make_random_filter(FilterKind::Directional, c, 3, 23).unwrap(),
        ]
    }

    fn half_sq(b: &Batch) -> f64 {
        0.5 * b.data().iter().map(|v| v * v).sum::<f64>()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    /// `dPsi/dp_k` from dense matrices. Every value is linear in each single
    /// parameter, so a unit central difference is exact.
    fn dense_param_derivative(kernel: &CompressedSparseKernel, k: usize) -> DenseKernelMatrix {
        let f = kernel.filter();
        let mut up = f.params().to_vec();
        let mut dn = f.params().to_vec();
        up[k] += 1.0;
        dn[k] -= 1.0;
        let a = densify(&kernel.with_filter(&f.with_params(up).unwrap()).unwrap()).unwrap();
        let b = densify(&kernel.with_filter(&f.with_params(dn).unwrap()).unwrap()).unwrap();
        DenseKernelMatrix {
            n_rows: a.n_rows,
            n_cols: a.n_cols,
            data: a.data.iter().zip(&b.data).map(|(x, y)| 0.5 * (x - y)).collect(),
        }
    }

    #[test]
    fn zero_upstream_or_input_gives_zero_gradients() {
        let g = build_grid(8).unwrap();
        let k = build_kernel(&kinds()[1], &g, &g).unwrap();
        let x = random_batch(&g, 1, 1);
        let zero = Batch::zeros(g.bandlimit(), 1, 1);
        assert!(backward_input(&k, &zero).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(backward_filter(&k, &x, &zero).unwrap().iter().all(|&v| v == 0.0));
        assert!(backward_filter(&k, &zero, &x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn input_gradient_matches_dense_transpose() {
        let g = build_grid(8).unwrap();
        let g2 = build_grid(16).unwrap();
        for f in kinds() {
            for (gout, transposed) in [(&g, false), (&g2, false), (&g, true), (&g2, true)] {
                let k = if transposed {
                    build_transposed_kernel(&f, &g, gout).unwrap()
                } else {
                    build_kernel(&f, &g, gout).unwrap()
                };
                let up = random_batch(gout, 2, 3);
                let dt = densify(&k).unwrap().transpose();
                let got = backward_input(&k, &up).unwrap();
                for d in 0..2 {
                    let want = dt.matvec(up.plane(d));
                    let err = got
                        .plane(d)
                        .iter()
                        .zip(&want)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    assert!(err <= 1e-12, "{:?}: {err:e}", f.kind());
                }
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let g = build_grid(8).unwrap();
        let x = random_batch(&g, 1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for f in kinds() {
            let k = build_kernel(&f, &g, &g).unwrap();
            let h = apply_kernel(&k, &x).unwrap();
            let grad = backward_input(&k, &h).unwrap();
            for _ in 0..12 {
                let i = rng.gen_range(0..g.len());
                let step = 1e-6;
                let mut xp = x.clone();
                xp.data_mut()[i] += step;
                let mut xm = x.clone();
                xm.data_mut()[i] -= step;
                let fd = (half_sq(&apply_kernel(&k, &xp).unwrap()) - half_sq(&apply_kernel(&k, &xm).unwrap()))
                    / (2.0 * step);
                assert!(
                    rel(fd, grad.data()[i]) <= 1e-6 || (fd - grad.data()[i]).abs() < 1e-12,
                    "{fd} vs {}",
                    grad.data()[i]
                );
            }
        }
    }

    #[test]
    fn filter_gradient_matches_dense_formulation() {
        let g = build_grid(8).unwrap();
        let g2 = build_grid(16).unwrap();
        for f in kinds() {
            for gout in [&g, &g2] {
                let k = build_kernel(&f, &g, gout).unwrap();
                let x = random_batch(&g, 3, 6);
                let up = random_batch(gout, 3, 7);
                let got = backward_filter(&k, &x, &up).unwrap();
                for (p, gp) in got.iter().enumerate() {
                    let dpsi = dense_param_derivative(&k, p);
                    let mut want = 0.0;
                    for d in 0..3 {
                        let (xd, ud) = (x.plane(d), up.plane(d));
                        for j in 0..dpsi.n_rows {
                            for i in 0..dpsi.n_cols {
                                want += ud[j] * xd[i] * dpsi.get(j, i);
                            }
                        }
                    }
                    assert!((gp - want).abs() <= 1e-12, "{:?} p{p}: {gp} vs {want}", f.kind());
                }
            }
        }
    }

    #[test]
    fn filter_gradient_matches_finite_differences() {
        let g = build_grid(8).unwrap();
        let x = random_batch(&g, 2, 8);
        for f in kinds() {
            let k = build_kernel(&f, &g, &g).unwrap();
            let h = apply_kernel(&k, &x).unwrap();
            let grad = backward_filter(&k, &x, &h).unwrap();
            for p in 0..f.n_params() {
                let step = 1e-6;
                let loss_at = |delta: f64| {
                    let mut params = f.params().to_vec();
                    params[p] += delta;
                    let kp = build_kernel(&f.with_params(params).unwrap(), &g, &g).unwrap();
                    half_sq(&apply_kernel(&kp, &x).unwrap())
                };
                let fd = (loss_at(step) - loss_at(-step)) / (2.0 * step);
                assert!(rel(fd, grad[p]) <= 1e-5, "{:?} p{p}: {fd} vs {}", f.kind(), grad[p]);
            }
        }
    }

    #[test]
    fn single_entry_gradient_is_the_weight_vector() {
        let g = build_grid(8).unwrap();
        let f = kinds()[2].clone();
        let full = build_kernel(&f, &g, &g).unwrap();
        let row = 4;
        let k = full.single_entry(row, 2).unwrap();
        let x = random_batch(&g, 1, 9);
        let up = random_batch(&g, 1, 10);
        let got = backward_filter(&k, &x, &up).unwrap();
        let (th, ph) = k.coords().unwrap();
        let (rings, lons) = k.columns();
        let n = g.n_lon();
        let mut prod = 0.0;
        for q in 0..n {
            prod += up.plane(0)[g.index(row, q)] * x.plane(0)[g.index(rings[0] as usize, (lons[0] as usize + q) % n)];
        }
        let mut want = vec![0.0; f.n_params()];
        for (i, w) in f.param_gradient(th[0], ph[0]).iter() {
            want[i] += w * prod * g.sample_weight(rings[0] as usize);
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn filter_gradient_ignores_batch_order() {
        let g = build_grid(8).unwrap();
        let k = build_kernel(&kinds()[0], &g, &g).unwrap();
        let x = random_batch(&g, 4, 11);
        let up = random_batch(&g, 4, 12);
        let order = [2usize, 0, 3, 1];
        let shuffle = |b: &Batch| {
            let data: Vec<f64> = order.iter().flat_map(|&d| b.plane(d).to_vec()).collect();
            Batch::new(b.bandlimit(), 4, 1, data).unwrap()
        };
        let a = backward_filter(&k, &x, &up).unwrap();
        let b = backward_filter(&k, &shuffle(&x), &shuffle(&up)).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-13 * u.abs().max(1.0));
        }
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let g = build_grid(8).unwrap();
        let k = build_kernel(&kinds()[1], &g, &g).unwrap();
        let x = random_batch(&g, 1, 13);
        let u = random_batch(&g, 1, 14);
        let v = random_batch(&g, 1, 15);
        let combo = Batch::new(
            g.bandlimit(),
            1,
            1,
            u.data().iter().zip(v.data()).map(|(a, b)| 2.0 * a - b).collect(),
        )
        .unwrap();
        let gi = backward_input(&k, &combo).unwrap();
        let (gu, gv) = (backward_input(&k, &u).unwrap(), backward_input(&k, &v).unwrap());
        for s in 0..g.len() {
            assert!((gi.data()[s] - (2.0 * gu.data()[s] - gv.data()[s])).abs() < 1e-12);
        }
        let gf = backward_filter(&k, &x, &combo).unwrap();
        let (fu, fv) = (
            backward_filter(&k, &x, &u).unwrap(),
            backward_filter(&k, &x, &v).unwrap(),
        );
        for p in 0..gf.len() {
            assert!((gf[p] - (2.0 * fu[p] - fv[p])).abs() < 1e-12);
        }
    }

    #[test]
    fn training_needs_coordinates() {
        let g = build_grid(8).unwrap();
        let k = build_kernel(&kinds()[0], &g, &g).unwrap().without_coords();
        let x = random_batch(&g, 1, 1);
        assert!(matches!(
            backward_filter(&k, &x, &x),
            Err(DiscoError::MissingCoordinates)
        ));
    }

    fn fit_problem() -> (CompressedSparseKernel, Batch, Batch, Filter) {
        let g = build_grid(16).unwrap();
        let target_filter = make_smooth_bump(5.0 * PI / 16.0, 4).unwrap();
        let x = random_batch(&g, 2, 16);
        let y = apply_kernel(&build_kernel(&target_filter, &g, &g).unwrap(), &x).unwrap();
        let zero = target_filter.with_params(vec![0.0; 4]).unwrap();
        (build_kernel(&zero, &g, &g).unwrap(), x, y, target_filter)
    }

    #[test]
    fn gradient_descent_recovers_a_target_filter() {
        let (k, x, y, target) = fit_problem();
        // The Hessian's largest eigenvalue is about 14 for this problem, so a
        // step of 0.1 is stable and its condition number (~32) allows
        // convergence well inside 500 steps.
        let report = fit_filter_demo(&k, &x, &y, 500, 0.1, 1e-8).unwrap();
        assert!(report.final_loss() <= 1e-8, "{}", report.final_loss());
        assert!(report.losses.len() <= 501);
        assert!(report.losses.windows(2).all(|w| w[1] <= w[0]));
        for (a, b) in report.filter.params().iter().zip(target.params()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_step_and_optimal_start() {
        let (k, x, y, target) = fit_problem();
        let report = fit_filter_demo(&k, &x, &y, 5, 0.0, 0.0).unwrap();
        assert_eq!(report.filter, *k.filter());
        let at_target = k.with_filter(&target).unwrap();
        let (_, resid) = fit_loss(&at_target, &x, &y).unwrap();
        for g in backward_filter(&at_target, &x, &resid).unwrap() {
            assert!(g.abs() <= 1e-10);
        }
    }

    #[test]
    fn huge_step_reports_divergence() {
        let (k, x, y, _) = fit_problem();
        assert!(matches!(
            fit_filter_demo(&k, &x, &y, 50, 1e6, 0.0),
            Err(DiscoError::Diverged { .. })
        ));
    }
}
