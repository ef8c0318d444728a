//! Ground-truth machinery: materialized convolution operators, reference
//! convolution loops, a certified lower/upper sandwich for the largest
//! singular value, a power-iteration baseline, and finite-difference probes.
//!
//! Everything here is deliberately slow and direct so the fast estimators
//! have something independent to be checked against.

use crate::error::{Error, Result};
use crate::gram::{unscaled_bound, Method, NormCertificate};
use crate::numerics::{dot_conj, matrix_norm, DenseMatrix, Kernel4D, MatrixNorm};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Default refusal threshold for materialized operators, in dense elements.
pub const DEFAULT_ELEMENT_CAP: u128 = 200_000_000;

/// Padding convention of the convolution operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// "Same" output size with zeros outside the input (Toeplitz structure).
    Zero,
    /// Indices wrap around modulo the input size (circulant structure).
    Circular,
}

/// Certified bracket around the largest singular value: a Rayleigh-quotient
/// lower bound and a Gram-iteration upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCertificate {
    /// Largest Rayleigh quotient seen; never above the true value.
    pub lower: f64,
    /// Gram-iteration bound; never below the true value.
    pub upper: f64,
    /// Relative gap `(upper - lower) / upper`, or 0 for the zero matrix.
    pub gap: f64,
    /// Matrix-vector products spent on the lower side.
    pub power_iterations: usize,
    /// Squaring passes spent on the upper side.
    pub gram_squarings: usize,
    /// Whether the gap reached the requested tolerance.
    pub converged: bool,
}

fn checked_element_count(c_out: usize, c_in: usize, n: usize) -> u128 {
    let n = n as u128;
    (c_out as u128) * (c_in as u128) * n * n * n * n
}

fn guard_cap(c_out: usize, c_in: usize, n: usize, cap: u128) -> Result<()> {
    let required = checked_element_count(c_out, c_in, n);
    if required > cap {
        return Err(Error::MemoryCap { required, cap });
    }
    Ok(())
}

fn require_odd_kernel(kernel: &Kernel4D) -> Result<()> {
    if kernel.k_h() % 2 == 0 || kernel.k_w() % 2 == 0 {
        return Err(Error::Precondition(format!(
            "zero-padding layout needs odd kernel sides, got {}x{}",
            kernel.k_h(),
            kernel.k_w()
        )));
    }
    Ok(())
}

fn require_wrap_fits(kernel: &Kernel4D, n: usize) -> Result<()> {
    if n < kernel.k_h().max(kernel.k_w()) {
        return Err(Error::Precondition(format!(
            "circular padding needs n >= kernel side, got n={n} for a {}x{} kernel",
            kernel.k_h(),
            kernel.k_w()
        )));
    }
    Ok(())
}

/// Dense matrix of the zero-padding "same" convolution: shape
/// `(c_out * n^2) x (c_in * n^2)`, acting on channel-major vectorized inputs
/// `x[i*n*n + p*n + q]`. Kernel sides must be odd for the centered layout.
pub fn materialize_toeplitz(kernel: &Kernel4D, n: usize) -> Result<DenseMatrix<f64>> {
    materialize_toeplitz_capped(kernel, n, DEFAULT_ELEMENT_CAP)
}

/// As [`materialize_toeplitz`] with an explicit dense-element cap.
pub fn materialize_toeplitz_capped(
    kernel: &Kernel4D,
    n: usize,
    cap: u128,
) -> Result<DenseMatrix<f64>> {
    if n == 0 {
        return Err(Error::Precondition(
            "materialization needs n >= 1".to_string(),
        ));
    }
    require_odd_kernel(kernel)?;
    guard_cap(kernel.c_out(), kernel.c_in(), n, cap)?;
    let (c_out, c_in) = (kernel.c_out(), kernel.c_in());
    let (off_h, off_w) = (kernel.k_h() / 2, kernel.k_w() / 2);
    let nn = n * n;
    let mut m = DenseMatrix::zeros(c_out * nn, c_in * nn);
    for j in 0..c_out {
        for u in 0..n {
            for v in 0..n {
                let row = j * nn + u * n + v;
                for i in 0..c_in {
                    for a in 0..kernel.k_h() {
                        let p = match (u + a).checked_sub(off_h) {
                            Some(p) if p < n => p,
                            _ => continue,
                        };
                        for b in 0..kernel.k_w() {
                            let q = match (v + b).checked_sub(off_w) {
                                Some(q) if q < n => q,
                                _ => continue,
                            };
                            m.set(row, i * nn + p * n + q, kernel.at(j, i, a, b));
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Dense matrix of the circular-padding convolution, same shape and
/// vectorization as [`materialize_toeplitz`]. Needs `n >= ` kernel side so
/// wrapped taps cannot collide.
pub fn materialize_circulant(kernel: &Kernel4D, n: usize) -> Result<DenseMatrix<f64>> {
    materialize_circulant_capped(kernel, n, DEFAULT_ELEMENT_CAP)
}

/// As [`materialize_circulant`] with an explicit dense-element cap.
pub fn materialize_circulant_capped(
    kernel: &Kernel4D,
    n: usize,
    cap: u128,
) -> Result<DenseMatrix<f64>> {
    require_wrap_fits(kernel, n)?;
    guard_cap(kernel.c_out(), kernel.c_in(), n, cap)?;
    let (c_out, c_in) = (kernel.c_out(), kernel.c_in());
    let nn = n * n;
    let mut m = DenseMatrix::zeros(c_out * nn, c_in * nn);
    for j in 0..c_out {
        for u in 0..n {
            for v in 0..n {
                let row = j * nn + u * n + v;
                for i in 0..c_in {
                    for a in 0..kernel.k_h() {
                        let p = (u + a) % n;
                        for b in 0..kernel.k_w() {
                            let q = (v + b) % n;
                            m.set(row, i * nn + p * n + q, kernel.at(j, i, a, b));
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

fn check_input_len(len: usize, channels: usize, n: usize, what: &str) -> Result<()> {
    if len != channels * n * n {
        return Err(Error::DimensionMismatch(format!(
            "{what} has {len} entries, expected {channels} x {n} x {n}"
        )));
    }
    Ok(())
}

/// Zero-padding "same" convolution applied directly:
/// `y[j,u,v] = sum_{i,a,b} K[j,i,a,b] * x[i, u+a-floor(kh/2), v+b-floor(kw/2)]`
/// with out-of-range input treated as zero. The independent reference for
/// the Toeplitz materialization.
pub fn conv2d_zero(kernel: &Kernel4D, x: &[f64], n: usize) -> Result<Vec<f64>> {
    require_odd_kernel(kernel)?;
    check_input_len(x.len(), kernel.c_in(), n, "input")?;
    let (off_h, off_w) = (kernel.k_h() / 2, kernel.k_w() / 2);
    let nn = n * n;
    let mut y = vec![0.0; kernel.c_out() * nn];
    for j in 0..kernel.c_out() {
        for u in 0..n {
            for v in 0..n {
                let mut acc = 0.0;
                for i in 0..kernel.c_in() {
                    for a in 0..kernel.k_h() {
                        let p = match (u + a).checked_sub(off_h) {
                            Some(p) if p < n => p,
                            _ => continue,
                        };
                        for b in 0..kernel.k_w() {
                            let q = match (v + b).checked_sub(off_w) {
                                Some(q) if q < n => q,
                                _ => continue,
                            };
                            acc += kernel.at(j, i, a, b) * x[i * nn + p * n + q];
                        }
                    }
                }
                y[j * nn + u * n + v] = acc;
            }
        }
    }
    Ok(y)
}

/// Transpose of [`conv2d_zero`]: maps output-shaped vectors back to
/// input-shaped ones.
pub fn conv2d_zero_adjoint(kernel: &Kernel4D, y: &[f64], n: usize) -> Result<Vec<f64>> {
    require_odd_kernel(kernel)?;
    check_input_len(y.len(), kernel.c_out(), n, "output")?;
    let (off_h, off_w) = (kernel.k_h() / 2, kernel.k_w() / 2);
    let nn = n * n;
    let mut x = vec![0.0; kernel.c_in() * nn];
    for j in 0..kernel.c_out() {
        for u in 0..n {
            for v in 0..n {
                let yjuv = y[j * nn + u * n + v];
                if yjuv == 0.0 {
                    continue;
                }
                for i in 0..kernel.c_in() {
                    for a in 0..kernel.k_h() {
                        let p = match (u + a).checked_sub(off_h) {
                            Some(p) if p < n => p,
                            _ => continue,
                        };
                        for b in 0..kernel.k_w() {
                            let q = match (v + b).checked_sub(off_w) {
                                Some(q) if q < n => q,
                                _ => continue,
                            };
                            x[i * nn + p * n + q] += kernel.at(j, i, a, b) * yjuv;
                        }
                    }
                }
            }
        }
    }
    Ok(x)
}

/// Circular convolution applied directly:
/// `y[j,u,v] = sum_{i,a,b} K[j,i,a,b] * x[i, (u+a) mod n, (v+b) mod n]`.
/// The independent reference for the circulant materialization.
pub fn conv2d_circular(kernel: &Kernel4D, x: &[f64], n: usize) -> Result<Vec<f64>> {
    require_wrap_fits(kernel, n)?;
    check_input_len(x.len(), kernel.c_in(), n, "input")?;
    let nn = n * n;
    let mut y = vec![0.0; kernel.c_out() * nn];
    for j in 0..kernel.c_out() {
        for u in 0..n {
            for v in 0..n {
                let mut acc = 0.0;
                for i in 0..kernel.c_in() {
                    for a in 0..kernel.k_h() {
                        let p = (u + a) % n;
                        for b in 0..kernel.k_w() {
                            let q = (v + b) % n;
                            acc += kernel.at(j, i, a, b) * x[i * nn + p * n + q];
                        }
                    }
                }
                y[j * nn + u * n + v] = acc;
            }
        }
    }
    Ok(y)
}

/// Transpose of [`conv2d_circular`].
pub fn conv2d_circular_adjoint(kernel: &Kernel4D, y: &[f64], n: usize) -> Result<Vec<f64>> {
    require_wrap_fits(kernel, n)?;
    check_input_len(y.len(), kernel.c_out(), n, "output")?;
    let nn = n * n;
    let mut x = vec![0.0; kernel.c_in() * nn];
    for j in 0..kernel.c_out() {
        for u in 0..n {
            for v in 0..n {
                let yjuv = y[j * nn + u * n + v];
                if yjuv == 0.0 {
                    continue;
                }
                for i in 0..kernel.c_in() {
                    for a in 0..kernel.k_h() {
                        let p = (u + a) % n;
                        for b in 0..kernel.k_w() {
                            let q = (v + b) % n;
                            x[i * nn + p * n + q] += kernel.at(j, i, a, b) * yjuv;
                        }
                    }
                }
            }
        }
    }
    Ok(x)
}

fn vec_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) -> f64 {
    let nrm = vec_norm(x);
    if nrm > 0.0 {
        for v in x.iter_mut() {
            *v /= nrm;
        }
    }
    nrm
}

fn seeded_normal_vector<T: Scalar>(len: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| T::from_real(rng.sample(StandardNormal)))
        .collect()
}

const SANDWICH_SEED: u64 = 0x5ec7_0a11;
const SANDWICH_RESTART_SEED: u64 = 0x5ec7_0a11 ^ 0x9e37_79b9_7f4a_7c15;
const SANDWICH_SQUARING_CAP: usize = 64;
const POWER_BURST: usize = 16;

fn unit_start<T: Scalar>(len: usize, seed: u64) -> Vec<T> {
    let mut v = seeded_normal_vector::<T>(len, seed);
    let nrm = v.iter().map(|x| x.modulus_sq()).sum::<f64>().sqrt();
    if nrm > 0.0 {
        for x in v.iter_mut() {
            *x = x.scale(1.0 / nrm);
        }
    } else {
        v[0] = T::one();
    }
    v
}

/// Brackets the largest singular value of `m` between a power-iteration
/// Rayleigh lower bound and a Gram-iteration upper bound, tightening both
/// sides until the relative gap reaches `tol` or the budgets run out
/// (`max_iter` matrix-vector products on the lower side, a fixed internal
/// cap of squarings on the upper side).
///
/// Never fails on hard inputs: when the gap stays above `tol` the
/// certificate comes back with `converged = false` and the bracket is still
/// valid.
pub fn sigma1_sandwich<T: Scalar>(
    m: &DenseMatrix<T>,
    tol: f64,
    max_iter: usize,
) -> Result<SandwichCertificate> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!(
            "sandwich tolerance must be positive, got {tol}"
        )));
    }
    if m.is_zero() {
        return Ok(SandwichCertificate {
            lower: 0.0,
            upper: 0.0,
            gap: 0.0,
            power_iterations: 0,
            gram_squarings: 0,
            converged: true,
        });
    }

    let g = m.gram_product();
    let dim = g.cols();
    let mut v = unit_start::<T>(dim, SANDWICH_SEED);
    let mut power_used = 0usize;
    let mut lower = 0.0_f64;
    let mut upper = matrix_norm(m, MatrixNorm::Frobenius);

    // One Rayleigh evaluation on the start vector.
    let rayleigh_step = |v: &mut Vec<T>, lower: &mut f64| {
        let y = g.matvec(v).expect("dimension fixed by construction");
        let rq = dot_conj(&y, v).real_part().max(0.0);
        *lower = lower.max(rq.sqrt());
        let nrm = y.iter().map(|x| x.modulus_sq()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            *v = y.into_iter().map(|x| x.scale(1.0 / nrm)).collect();
        }
    };
    if max_iter > 0 {
        rayleigh_step(&mut v, &mut lower);
        power_used += 1;
    }

    // Incremental Gram state: the running invariant is that the repeated
    // Gram power of `m` equals exp(r) times `iterate`.
    let mut iterate: Option<DenseMatrix<T>> = None;
    let mut r = 0.0_f64;
    let mut squarings = 0usize;

    let gap_of = |lower: f64, upper: f64| {
        if upper > 0.0 {
            (upper - lower) / upper
        } else {
            0.0
        }
    };

    let mut restarted = false;
    let mut prev_lower = lower;
    while gap_of(lower, upper) > tol && (power_used < max_iter || squarings < SANDWICH_SQUARING_CAP)
    {
        let burst = POWER_BURST.min(max_iter.saturating_sub(power_used));
        for _ in 0..burst {
            rayleigh_step(&mut v, &mut lower);
        }
        power_used += burst;
        if burst > 0 && !restarted && lower <= prev_lower * (1.0 + 1e-13) {
            // Guard against a start vector nearly orthogonal to the top
            // singular space: one reseed, keeping the best bound seen.
            v = unit_start::<T>(dim, SANDWICH_RESTART_SEED);
            restarted = true;
        }
        prev_lower = lower;

        if gap_of(lower, upper) > tol && squarings < SANDWICH_SQUARING_CAP {
            let next = match iterate.take() {
                None => {
                    let nrm = matrix_norm(m, MatrixNorm::Frobenius);
                    r = 2.0 * nrm.ln();
                    let mut w = m.clone();
                    w.scale_in_place(1.0 / nrm);
                    w.gram_product()
                }
                Some(w) => {
                    let nrm = matrix_norm(&w, MatrixNorm::Frobenius);
                    r = 2.0 * (r + nrm.ln());
                    let mut w = w;
                    w.scale_in_place(1.0 / nrm);
                    w.hermitian_square()
                }
            };
            squarings += 1;
            let bound = unscaled_bound(matrix_norm(&next, MatrixNorm::Frobenius), r, squarings);
            upper = upper.min(bound);
            iterate = Some(next);
        }
    }

    let lower = lower.min(upper);
    let gap = gap_of(lower, upper);
    Ok(SandwichCertificate {
        lower,
        upper,
        gap,
        power_iterations: power_used,
        gram_squarings: squarings,
        converged: gap <= tol,
    })
}

/// One power-iteration chain on the convolution operator; reports the
/// largest Rayleigh estimate seen, which is monotone in `steps` for a fixed
/// seed.
fn conv_power_chain(
    kernel: &Kernel4D,
    n: usize,
    padding: Padding,
    steps: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let mut x = seeded_normal_vector::<f64>(kernel.c_in() * n * n, seed);
    if normalize(&mut x) == 0.0 {
        x[0] = 1.0;
    }
    let mut best = 0.0_f64;
    for _ in 0..steps {
        let y = match padding {
            Padding::Zero => conv2d_zero(kernel, &x, n)?,
            Padding::Circular => conv2d_circular(kernel, &x, n)?,
        };
        best = best.max(vec_norm(&y));
        let mut back = match padding {
            Padding::Zero => conv2d_zero_adjoint(kernel, &y, n)?,
            Padding::Circular => conv2d_circular_adjoint(kernel, &y, n)?,
        };
        if normalize(&mut back) == 0.0 {
            break;
        }
        x = back;
    }
    Ok((best, x))
}

/// Continues a chain from an existing unit vector for `steps` more rounds.
fn conv_power_continue(
    kernel: &Kernel4D,
    n: usize,
    padding: Padding,
    steps: usize,
    mut x: Vec<f64>,
    mut best: f64,
) -> Result<f64> {
    for _ in 0..steps {
        let y = match padding {
            Padding::Zero => conv2d_zero(kernel, &x, n)?,
            Padding::Circular => conv2d_circular(kernel, &x, n)?,
        };
        best = best.max(vec_norm(&y));
        let mut back = match padding {
            Padding::Zero => conv2d_zero_adjoint(kernel, &y, n)?,
            Padding::Circular => conv2d_circular_adjoint(kernel, &y, n)?,
        };
        if normalize(&mut back) == 0.0 {
            break;
        }
        x = back;
    }
    Ok(best)
}

/// Power iteration on the convolution operator from a seeded random start.
///
/// The estimate is the running maximum of `||conv(x)||` over unit iterates,
/// so it is a lower estimate of the true norm and never decreases as `iters`
/// grows with the seed held fixed. A short secondary chain from a derived
/// seed guards against an unlucky start: it always contributes via max, and
/// it is extended to the full budget when it beats the main chain.
pub fn conv_power_iteration(
    kernel: &Kernel4D,
    n: usize,
    padding: Padding,
    iters: usize,
    seed: u64,
) -> Result<NormCertificate> {
    if iters == 0 {
        return Err(Error::Precondition(
            "power iteration needs at least one round".to_string(),
        ));
    }
    match padding {
        Padding::Zero => require_odd_kernel(kernel)?,
        Padding::Circular => require_wrap_fits(kernel, n)?,
    }
    if n == 0 {
        return Err(Error::Precondition("input size must be positive".to_string()));
    }
    let certificate = |value: f64| NormCertificate {
        value,
        iterations: iters,
        method: Method::PowerIter,
        is_upper_bound: false,
        norm_used: None,
    };
    if kernel.is_zero() {
        return Ok(certificate(0.0));
    }

    let (main_est, _) = conv_power_chain(kernel, n, padding, iters, seed)?;

    let probe_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let probe_steps = 10.max(iters / 10);
    let (probe_est, probe_x) = conv_power_chain(kernel, n, padding, probe_steps, probe_seed)?;
    let probe_est = if probe_est > main_est * (1.0 + 1e-10) && probe_steps < iters {
        conv_power_continue(kernel, n, padding, iters - probe_steps, probe_x, probe_est)?
    } else {
        probe_est
    };

    Ok(certificate(main_est.max(probe_est)))
}

/// Entrywise central-difference sensitivities of a scalar function of a
/// kernel, plus the summary a differentiability probe needs.
#[derive(Debug, Clone)]
pub struct KernelSensitivity {
    pub c_out: usize,
    pub c_in: usize,
    pub k_h: usize,
    pub k_w: usize,
    /// Row-major `(j, i, a, b)` sensitivities; may contain NaN, counted below.
    pub data: Vec<f64>,
    /// Largest finite absolute sensitivity.
    pub max_abs: f64,
    /// Number of NaN entries; zero for a differentiable function.
    pub nan_count: usize,
}

/// Central finite differences `(f(K + eps*e) - f(K - eps*e)) / (2 eps)` for
/// every kernel entry.
pub fn finite_diff_grad<F>(mut f: F, kernel: &Kernel4D, eps: f64) -> Result<KernelSensitivity>
where
    F: FnMut(&Kernel4D) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let len = kernel.entries().len();
    let mut data = Vec::with_capacity(len);
    let mut max_abs = 0.0_f64;
    let mut nan_count = 0usize;
    for idx in 0..len {
        let mut plus = kernel.entries().to_vec();
        plus[idx] += eps;
        let mut minus = kernel.entries().to_vec();
        minus[idx] -= eps;
        let f_plus = f(&Kernel4D::new(
            kernel.c_out(),
            kernel.c_in(),
            kernel.k_h(),
            kernel.k_w(),
            plus,
        )?)?;
        let f_minus = f(&Kernel4D::new(
            kernel.c_out(),
            kernel.c_in(),
            kernel.k_h(),
            kernel.k_w(),
            minus,
        )?)?;
        let g = (f_plus - f_minus) / (2.0 * eps);
        if g.is_nan() {
            nan_count += 1;
        } else {
            max_abs = max_abs.max(g.abs());
        }
        data.push(g);
    }
    Ok(KernelSensitivity {
        c_out: kernel.c_out(),
        c_in: kernel.c_in(),
        k_h: kernel.k_h(),
        k_w: kernel.k_w(),
        data,
        max_abs,
        nan_count,
    })
}
