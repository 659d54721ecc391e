use std::fmt::Write as _;
use std::path::Path;

use disco_core::autograd::{backward_filter, backward_input};
use disco_core::conv::{disco_conv, disco_conv_transposed};
use disco_core::equivariance::{run_equivariance_table, EquivarianceReport, TableOptions};
use disco_core::filter::make_random_filter;
use disco_core::io::{read_signal, write_signal};
use disco_core::kernel::{densify, KernelCache, KernelOptions, KernelOrientation};
use disco_core::profiler::scaling_report;
use disco_core::{build_grid, Batch, CompressedSparseKernel, Filter, SampleGrid, SphericalSignal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{ConvConfig, EquivConfig, GradcheckConfig, ProfileConfig, RunConfig};
use crate::failure::Failure;

/// What a command produced: the report payload and whether its checks held.
pub struct Outcome {
    pub result: serde_json::Value,
    pub passed: bool,
}

pub fn run(config: &RunConfig) -> Result<Outcome, Failure> {
    match config {
        RunConfig::Conv(c) => conv(c),
        RunConfig::Equiv(c) => equiv(c),
        RunConfig::Profile(c) => profile(c),
        RunConfig::Gradcheck(c) => gradcheck(c),
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn kernel(
    filter: &Filter,
    g_in: &SampleGrid,
    g_out: &SampleGrid,
    opts: KernelOptions,
) -> Result<CompressedSparseKernel, Failure> {
    match KernelCache::from_env() {
        Some(cache) => {
            log::info!("kernel cache at {}", cache.dir().display());
            Ok(cache.get_or_build(filter, g_in, g_out, opts)?)
        }
        None => Ok(disco_core::kernel::build_kernel_with(filter, g_in, g_out, opts)?),
    }
}

/// Largest deviation within any ring and the spread of ring values relative
/// to the largest magnitude, per channel.
fn constancy(signal: &SphericalSignal) -> (f64, f64) {
    let n_lon = signal.bandlimit().n_lon();
    let (mut within, mut across) = (0.0f64, 0.0f64);
    for c in 0..signal.channels() {
        let ch = signal.channel(c);
        let scale = ch.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for ring in ch.chunks(n_lon) {
            let r_lo = ring.iter().copied().fold(f64::INFINITY, f64::min);
            let r_hi = ring.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            within = within.max((r_hi - r_lo) / scale);
            lo = lo.min(ring[0]);
            hi = hi.max(ring[0]);
        }
        across = across.max((hi - lo) / scale);
    }
    (within, across)
}

/// Rings of a convolved constant are constant to rounding; across rings they
/// differ by the quadrature error of the filter sum.
pub const RING_TOL: f64 = 1e-10;

fn conv(c: &ConvConfig) -> Result<Outcome, Failure> {
    if c.upsample && !c.transposed {
        return Err(Failure::Usage("--upsample requires --transposed".into()));
    }
    if !c.input.exists() {
        return Err(Failure::Usage(format!("input {} does not exist", c.input.display())));
    }
    let signal = read_signal(&c.input)?;
    let l = signal.bandlimit();
    let filter = c.filter.resolve(l.get())?;
    let g_in = SampleGrid::new(l)?;
    let g_out = if c.upsample {
        build_grid(2 * l.get())?
    } else {
        g_in.clone()
    };
    let orientation = if c.transposed {
        KernelOrientation::Transposed
    } else {
        KernelOrientation::Forward
    };
    let k = kernel(
        &filter,
        &g_in,
        &g_out,
        KernelOptions {
            orientation,
            store_coords: false,
        },
    )?;
    let channels = signal.channels();
    let x = Batch::from_signal(signal);
    let h = if c.transposed {
        disco_conv_transposed(&k, &x)?
    } else {
        disco_conv(&k, &x)?
    };
    let out = SphericalSignal::new(g_out.bandlimit(), channels, h.into_data())?;
    write_signal(&c.output, &out)?;
    let bytes = std::fs::read(&c.output)?;
    let mut result = json!({
        "output_sha256": hex(&Sha256::digest(&bytes)),
        "kernel_hash": hex(&k.content_hash()),
        "filter_hash": hex(&filter.content_hash()),
        "l_out": g_out.bandlimit().get(),
        "channels": channels,
        "nonzeros": k.nnz(),
    });
    let mut passed = true;
    if c.verify_constant {
        let (within, across) = constancy(&out);
        let ok = within <= RING_TOL && across <= c.constant_tol;
        eprintln!(
            "verify-constant: ring deviation {within:.3e} (tol {RING_TOL:e}), cross-ring spread {across:.3e} (tol {:e}): {}",
            c.constant_tol,
            if ok { "pass" } else { "FAIL" }
        );
        result["constant_check"] = json!({ "ring_deviation": within, "cross_ring_spread": across, "pass": ok });
        passed = ok;
    }
    Ok(Outcome { result, passed })
}

fn equiv(c: &EquivConfig) -> Result<Outcome, Failure> {
    if let Some(b) = c.beta_deg {
        if !(0.0..=180.0).contains(&b) {
            return Err(Failure::Usage(format!("--beta {b} must lie in [0, 180]")));
        }
    }
    let report = run_equivariance_table(
        c.l,
        c.case,
        c.kind,
        c.beta_deg,
        TableOptions {
            n_signals: c.n_signals,
            n_rotations: c.n_rotations,
            seed: c.seed,
        },
    )?;
    println!("{}", EquivarianceReport::CSV_HEADER);
    println!("{}", report.csv_row());
    Ok(Outcome {
        result: serde_json::to_value(&report)?,
        passed: true,
    })
}

fn profile(c: &ProfileConfig) -> Result<Outcome, Failure> {
    if c.l_list.len() < 2 {
        return Err(Failure::Usage("--L-list needs at least two values".into()));
    }
    if let Some(bad) = c.l_list.iter().find(|&&l| l < 4) {
        return Err(Failure::Usage(format!("bandlimit {bad} is below 4")));
    }
    let r = scaling_report(&c.l_list, c.cost)?;
    let csv = r.to_csv();
    std::fs::write(&c.out, &csv).map_err(|e| Failure::Io(format!("{}: {e}", c.out.display())))?;
    Ok(Outcome {
        result: json!({
            "csv_sha256": hex(&Sha256::digest(csv.as_bytes())),
            "disco_flops_slope": r.disco_flops_slope,
            "disco_memory_slope": r.disco_memory_slope,
            "harmonic_flops_slope": r.harmonic_flops_slope,
        }),
        passed: true,
    })
}

fn random_batch(g: &SampleGrid, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Batch::new(g.bandlimit(), 1, 1, data).expect("length matches grid")
}

fn loss(k: &CompressedSparseKernel, x: &Batch, up: &Batch) -> Result<f64, Failure> {
    let h = disco_core::conv::apply_kernel(k, x)?;
    Ok(h.dot(up))
}

fn gradcheck(c: &GradcheckConfig) -> Result<Outcome, Failure> {
    if c.l > 16 {
        return Err(Failure::Usage(format!(
            "gradcheck uses dense matrices and needs L <= 16, got {}",
            c.l
        )));
    }
    let g = build_grid(c.l)?;
    let cutoff = c.cutoff_cells * std::f64::consts::PI / c.l as f64;
    let filter = make_random_filter(c.kind, cutoff, 4, c.seed)?;
    let x = random_batch(&g, c.seed.wrapping_add(1));
    let up = random_batch(&g, c.seed.wrapping_add(2));
    let mut lines = String::new();
    let mut checks = Vec::new();
    let mut record = |name: String, err: f64, tol: f64| {
        let ok = err <= tol;
        let _ = writeln!(
            lines,
            "{name}: {err:.3e} (tol {tol:e}) {}",
            if ok { "pass" } else { "FAIL" }
        );
        checks.push(json!({ "check": name, "error": err, "tol": tol, "pass": ok }));
        ok
    };
    let mut all = true;
    for orientation in [KernelOrientation::Forward, KernelOrientation::Transposed] {
        let opts = KernelOptions {
            orientation,
            store_coords: true,
        };
        let k = kernel(&filter, &g, &g, opts)?;
        let dense = densify(&k)?;
        let gi = backward_input(&k, &up)?;
        let want = dense.transpose().matvec(up.data());
        let err = gi
            .data()
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        all &= record(format!("{} input gradient vs dense", orientation.name()), err, 1e-12);

        let gp = backward_filter(&k, &x, &up)?;
        let (mut dense_err, mut fd_err) = (0.0f64, 0.0f64);
        let h = 1e-4;
        for q in 0..filter.n_params() {
            // unit central difference of the dense matrix; exact because Psi
            // is linear in each node value on its own
            let mut p = filter.params().to_vec();
            p[q] += 1.0;
            let plus = densify(&k.with_filter(&filter.with_params(p.clone())?)?)?;
            p[q] -= 2.0;
            let minus = densify(&k.with_filter(&filter.with_params(p)?)?)?;
            let dx: Vec<f64> = plus
                .matvec(x.data())
                .iter()
                .zip(minus.matvec(x.data()))
                .map(|(a, b)| 0.5 * (a - b))
                .collect();
            let want: f64 = dx.iter().zip(up.data()).map(|(a, b)| a * b).sum();
            dense_err = dense_err.max((gp[q] - want).abs());
            let mut p = filter.params().to_vec();
            p[q] += h;
            let lp = loss(&k.with_filter(&filter.with_params(p.clone())?)?, &x, &up)?;
            p[q] -= 2.0 * h;
            let lm = loss(&k.with_filter(&filter.with_params(p)?)?, &x, &up)?;
            fd_err = fd_err.max((gp[q] - (lp - lm) / (2.0 * h)).abs() / gp[q].abs().max(1e-3));
        }
        all &= record(
            format!("{} filter gradient vs dense", orientation.name()),
            dense_err,
            1e-12,
        );
        all &= record(
            format!("{} filter gradient vs finite differences", orientation.name()),
            fd_err,
            1e-5,
        );
    }
    print!("{lines}");
    println!(
        "gradcheck L={} kind={:?}: {}",
        c.l,
        c.kind,
        if all { "PASS" } else { "FAIL" }
    );
    Ok(Outcome {
        result: json!({ "checks": checks, "pass": all }),
        passed: all,
    })
}

/// Writes the fixture files used by the integration tests and README.
pub fn write_fixtures(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    let l = disco_core::Bandlimit::new(16)?;
    write_signal(&dir.join("constant_l16.ssig"), &SphericalSignal::constant(l, 1, 1.0))?;
    let bump = disco_core::filter::make_smooth_bump(3.0 * std::f64::consts::PI / 16.0, 4)?;
    bump.save(&dir.join("axisym_bump_l16.sflt"))?;
    write_signal(
        &dir.join("random_l16.ssig"),
        &disco_core::harmonic::random_bandlimited(l, 7),
    )?;
    Ok(())
}
