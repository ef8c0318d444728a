//! Implementations of the subcommands; argument structs live in `main.rs`
//! and file formats in `weights.rs`.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use specnorm::{
    bound_toeplitz_via_circ, conv_power_iteration, conv_spectral_rescale, correction_factor,
    factor_curve, gram_iteration, materialize_circulant_capped, materialize_toeplitz_capped,
    norm2_circ, norm2_toep, sigma1_sandwich, spectral_rescale, Kernel4D, MatrixNorm,
    NormCertificate, Padding, SandwichCertificate,
};

use crate::weights::{self, fmt_f64, Weights};
use crate::{
    BenchArgs, CliError, EstimateArgs, FactorArgs, MethodArg, ModeArg, OracleArgs, RescaleArgs,
};

fn method_name(method: MethodArg) -> &'static str {
    match method {
        MethodArg::GramDense => "gram-dense",
        MethodArg::Circ => "circ",
        MethodArg::Toep => "toep",
        MethodArg::CircApprox => "circ-approx",
        MethodArg::Power => "power",
    }
}

/// Runs a computation and reports its wall time in milliseconds, or 0.0
/// when byte-reproducible output was requested.
fn timed<T>(
    no_timing: bool,
    f: impl FnOnce() -> Result<T, CliError>,
) -> Result<(T, f64), CliError> {
    let start = Instant::now();
    let value = f()?;
    let ms = if no_timing {
        0.0
    } else {
        start.elapsed().as_secs_f64() * 1e3
    };
    Ok((value, ms))
}

fn certificate_json(cert: &NormCertificate, elapsed_ms: f64) -> String {
    format!(
        "{{\"value\":{},\"method\":\"{}\",\"iterations\":{},\"is_upper_bound\":{},\"elapsed_ms\":{:.3}}}",
        fmt_f64(cert.value),
        cert.method.tag(),
        cert.iterations,
        cert.is_upper_bound,
        elapsed_ms
    )
}

fn sandwich_json(cert: &SandwichCertificate) -> String {
    format!(
        "{{\"lower\":{},\"upper\":{},\"gap\":{},\"power_iterations\":{},\"gram_squarings\":{},\"converged\":{}}}",
        fmt_f64(cert.lower),
        fmt_f64(cert.upper),
        fmt_f64(cert.gap),
        cert.power_iterations,
        cert.gram_squarings,
        cert.converged
    )
}

pub fn estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let kernel = weights::read_kernel(&args.kernel)?;
    let needs_n = args.method != MethodArg::Toep;
    let n = match (needs_n, args.n) {
        (true, Some(n)) => n,
        (true, None) => {
            return Err(CliError::semantic(format!(
                "method {} needs --n",
                method_name(args.method)
            )))
        }
        (false, Some(_)) => {
            return Err(CliError::semantic(
                "--n is not accepted for method toep; its bound holds at every input size"
                    .to_string(),
            ))
        }
        (false, None) => 0,
    };
    let (cert, elapsed_ms) = timed(args.no_timing, || {
        let cert = match args.method {
            MethodArg::GramDense => {
                let operator = match args.padding.into() {
                    Padding::Zero => materialize_toeplitz_capped(&kernel, n, args.max_elements)?,
                    Padding::Circular => {
                        materialize_circulant_capped(&kernel, n, args.max_elements)?
                    }
                };
                gram_iteration(&operator, args.iters, MatrixNorm::Frobenius)?
            }
            MethodArg::Circ => norm2_circ(&kernel, n, args.iters)?,
            MethodArg::Toep => norm2_toep(&kernel, args.iters, args.variant.into())?,
            MethodArg::CircApprox => bound_toeplitz_via_circ(&kernel, n, args.iters)?,
            MethodArg::Power => {
                conv_power_iteration(&kernel, n, args.padding.into(), args.iters, args.seed)?
            }
        };
        Ok(cert)
    })?;
    println!("{}", certificate_json(&cert, elapsed_ms));
    Ok(())
}

pub fn oracle(args: &OracleArgs) -> Result<(), CliError> {
    let kernel = weights::read_kernel(&args.kernel)?;
    let operator = match args.padding.into() {
        Padding::Zero => materialize_toeplitz_capped(&kernel, args.n, args.max_elements)?,
        Padding::Circular => materialize_circulant_capped(&kernel, args.n, args.max_elements)?,
    };
    let cert = sigma1_sandwich(&operator, args.tol, args.max_iter)?;
    println!("{}", sandwich_json(&cert));
    Ok(())
}

/// One benchmark measurement before CSV rendering.
struct BenchRow {
    method: &'static str,
    channels: usize,
    iters: usize,
    trial: usize,
    estimate: f64,
    oracle: f64,
    elapsed_ms: f64,
}

fn gaussian_kernel(c_out: usize, c_in: usize, k: usize, seed: u64) -> Kernel4D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Kernel4D::from_fn(c_out, c_in, k, k, |_, _, _, _| {
        rng.sample::<f64, _>(StandardNormal)
    })
    .expect("dimensions are validated before drawing")
}

/// Largest pass count `t <= iters` whose correction factor is admissible at
/// size `n`, probing downward.
fn clamp_approx_passes(k: usize, n: usize, iters: usize) -> Result<usize, CliError> {
    for t in (1..=iters).rev() {
        if correction_factor(k, t, n).is_ok() {
            return Ok(t);
        }
    }
    Err(CliError::semantic(format!(
        "no circ-approx pass count is admissible for k={k} at n={n}; increase n"
    )))
}

pub fn bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::semantic("benchmark needs --trials >= 1".to_string()));
    }
    if args.k == 0 || args.k % 2 == 0 {
        return Err(CliError::semantic(format!(
            "kernel size must be odd for zero-padded benchmarks, got k={}",
            args.k
        )));
    }
    if args.n < args.k {
        return Err(CliError::semantic(format!(
            "input size n={} is smaller than the kernel size k={}",
            args.n, args.k
        )));
    }
    for &c in &args.channels {
        if c == 0 {
            return Err(CliError::semantic("channel counts must be positive".to_string()));
        }
        let dim = (c as u128) * (args.n as u128) * (args.n as u128);
        if dim * dim > args.max_elements {
            return Err(CliError::memory(format!(
                "benchmark operator at c={c}, n={} spans {} dense elements, cap is {}",
                args.n,
                dim * dim,
                args.max_elements
            )));
        }
    }
    let approx_iters = clamp_approx_passes(args.k, args.n, args.iters)?;

    let mut master = ChaCha8Rng::seed_from_u64(args.seed);
    let oracle_iters = 2000.max(args.power_iters.saturating_mul(10));
    let mut rows = Vec::new();
    for &c in &args.channels {
        for trial in 0..args.trials {
            let kernel_seed: u64 = master.gen();
            let power_seed: u64 = master.gen();
            let kernel = gaussian_kernel(c, c, args.k, kernel_seed);
            // The reference shares the power row's seed at a tenfold budget,
            // so the power row's running-max estimate can never exceed it.
            let oracle =
                conv_power_iteration(&kernel, args.n, Padding::Zero, oracle_iters, power_seed)?
                    .value;
            let mut push = |method: &'static str,
                            iters: usize,
                            run: &mut dyn FnMut() -> Result<NormCertificate, CliError>|
             -> Result<(), CliError> {
                let (cert, elapsed_ms) = timed(args.no_timing, run)?;
                rows.push(BenchRow {
                    method,
                    channels: c,
                    iters,
                    trial,
                    estimate: cert.value,
                    oracle,
                    elapsed_ms,
                });
                Ok(())
            };
            push("circ", args.iters, &mut || {
                Ok(norm2_circ(&kernel, args.n, args.iters)?)
            })?;
            push("circ-approx", approx_iters, &mut || {
                Ok(bound_toeplitz_via_circ(&kernel, args.n, approx_iters)?)
            })?;
            push("toep", args.iters, &mut || {
                Ok(norm2_toep(&kernel, args.iters, specnorm::ToepVariant::Inf)?)
            })?;
            push("power", args.power_iters, &mut || {
                Ok(conv_power_iteration(
                    &kernel,
                    args.n,
                    Padding::Zero,
                    args.power_iters,
                    power_seed,
                )?)
            })?;
        }
    }

    let mut csv =
        String::from("method,c_in,c_out,k,n,iters,trial,estimate,oracle_sigma1,rel_err,elapsed_ms\n");
    for row in &rows {
        let rel_err = (row.estimate - row.oracle) / row.oracle;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{:.3}",
            row.method,
            row.channels,
            row.channels,
            args.k,
            args.n,
            row.iters,
            row.trial,
            fmt_f64(row.estimate),
            fmt_f64(row.oracle),
            fmt_f64(rel_err),
            row.elapsed_ms
        );
    }
    weights::write_text(&args.out, &csv)
}

pub fn factor(args: &FactorArgs) -> Result<(), CliError> {
    let curve = factor_curve(args.n0_min, args.n0_max, args.k, &args.t)?;
    for &(n0, t) in &curve.skipped {
        eprintln!(
            "skipped inadmissible point n0={n0}, t={t} for k={}: the wrap term reaches the sampling size",
            args.k
        );
    }
    let mut csv = String::from("n0,k,t,alpha,factor\n");
    for row in &curve.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.n0,
            row.k,
            row.t,
            fmt_f64(row.alpha),
            fmt_f64(row.factor)
        );
    }
    weights::write_text(&args.out, &csv)
}

pub fn rescale(args: &RescaleArgs) -> Result<(), CliError> {
    match (weights::read_weights(&args.input)?, args.mode) {
        (Weights::Matrix(w), ModeArg::Dense) => {
            let diag = spectral_rescale(&w, args.t, None)?;
            let scaled = diag.column_scaled(&w)?;
            weights::write_matrix(&args.out, &scaled)?;
            let cert = sigma1_sandwich(&scaled, args.tol, args.max_iter)?;
            println!("{}", sandwich_json(&cert));
            Ok(())
        }
        (Weights::Kernel(kernel), ModeArg::Conv) => {
            let diag = conv_spectral_rescale(&kernel, args.t)?;
            let scaled = diag.channel_scaled(&kernel)?;
            weights::write_kernel(&args.out, &scaled)?;
            let operator = materialize_toeplitz_capped(&scaled, args.check_n, args.max_elements)?;
            let cert = sigma1_sandwich(&operator, args.tol, args.max_iter)?;
            println!("{}", sandwich_json(&cert));
            Ok(())
        }
        (Weights::Matrix(_), ModeArg::Conv) => Err(CliError::semantic(
            "--mode conv needs a 4-entry kernel shape".to_string(),
        )),
        (Weights::Kernel(_), ModeArg::Dense) => Err(CliError::semantic(
            "--mode dense needs a 2-entry matrix shape".to_string(),
        )),
    }
}
