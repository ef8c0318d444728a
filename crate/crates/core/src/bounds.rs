//! Correction factors connecting the cheap circular bound to what it cannot
//! see: coarser frequency grids and zero padding. The factor is a closed
//! form in the kernel size, the iteration count, and the sampling size, so
//! the corrected bounds stay certified.

use crate::circulant::norm2_circ;
use crate::error::{Error, Result};
use crate::gram::{Method, NormCertificate};
use crate::numerics::{DenseMatrix, Kernel4D, MatrixNorm};
use crate::ComplexMatrix;
use num_complex::Complex64;

/// The pieces of one correction-factor evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorParams {
    /// Kernel side length.
    pub k: usize,
    /// Gram squaring passes the factor compensates for.
    pub t: usize,
    /// Frequency-grid sampling size.
    pub n0: usize,
    /// Grid-coverage ratio `2^t * floor(k/2) / n0`, in `[0, 1)`.
    pub alpha: f64,
    /// The multiplier `(1 / (1 - alpha))^{2^{-t}}`, at least 1.
    pub factor: f64,
}

fn factor_with_degree(k: usize, t: usize, n0: usize, degree_shift: usize) -> Result<FactorParams> {
    if k == 0 || t == 0 || n0 == 0 {
        return Err(Error::Precondition(format!(
            "correction factor needs k, t, n0 >= 1, got k={k}, t={t}, n0={n0}"
        )));
    }
    let half = (k / 2) as u128;
    // The iterate's trigonometric degree, 2^shift * floor(k/2), in exact
    // integer arithmetic; admissibility is degree + 1 <= n0.
    let degree = if half == 0 {
        0
    } else if degree_shift >= 128 || half.leading_zeros() < degree_shift as u32 {
        u128::MAX
    } else {
        half << degree_shift
    };
    if degree >= n0 as u128 {
        let minimal = degree.saturating_add(1);
        return Err(Error::Precondition(format!(
            "sampling size n0={n0} is too small for k={k}, t={t}; needs n0 >= {minimal}"
        )));
    }
    let alpha = degree as f64 / n0 as f64;
    let halving = 0.5_f64.powi(t as i32);
    let factor = (-halving * (1.0 - alpha).ln()).exp();
    Ok(FactorParams {
        k,
        t,
        n0,
        alpha,
        factor,
    })
}

/// Correction factor for evaluating the frequency grid at sampling size
/// `n0` instead of everywhere: `alpha = 2^t * floor(k/2) / n0` and
/// `factor = (1 / (1 - alpha))^{2^{-t}}`. Admissibility
/// (`n0 >= 2^t * floor(k/2) + 1`) is checked in exact integer arithmetic.
pub fn correction_factor(k: usize, t: usize, n0: usize) -> Result<FactorParams> {
    factor_with_degree(k, t, n0, t)
}

/// Conservative variant that treats the squared modulus of the iterate as
/// the sampled polynomial, doubling the degree: `alpha` uses
/// `2^{t+1} * floor(k/2)` and admissibility tightens accordingly.
pub fn correction_factor_strict(k: usize, t: usize, n0: usize) -> Result<FactorParams> {
    factor_with_degree(k, t, n0, t + 1)
}

/// Rectangular kernels sample the two axes independently, so the combined
/// multiplier is the geometric mean of the per-axis factors; for square
/// kernels it reduces to the plain factor.
fn rect_factor(k_h: usize, k_w: usize, t: usize, n0: usize) -> Result<f64> {
    let fh = correction_factor(k_h, t, n0)?.factor;
    let fw = correction_factor(k_w, t, n0)?.factor;
    Ok((fh * fw).sqrt())
}

/// The kernel's frequency response at a continuous frequency pair:
/// `E(w1, w2)[j][i] = sum_{k1,k2} exp(-i (k1 w1 + k2 w2)) * K[j,i,k1,k2]`.
pub fn spectral_density(kernel: &Kernel4D, w1: f64, w2: f64) -> Result<ComplexMatrix> {
    if !w1.is_finite() || !w2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "frequencies must be finite, got ({w1}, {w2})"
        )));
    }
    DenseMatrix::from_fn(kernel.c_out(), kernel.c_in(), |j, i| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k1 in 0..kernel.k_h() {
            for k2 in 0..kernel.k_w() {
                let angle = -(k1 as f64 * w1 + k2 as f64 * w2);
                acc += Complex64::from_polar(1.0, angle).scale(kernel.at(j, i, k1, k2));
            }
        }
        acc
    })
}

fn corrected_circ_bound(kernel: &Kernel4D, n0: usize, n_iter: usize) -> Result<NormCertificate> {
    let factor = rect_factor(kernel.k_h(), kernel.k_w(), n_iter, n0)?;
    let circ = norm2_circ(kernel, n0, n_iter)?;
    Ok(NormCertificate {
        value: factor * circ.value,
        iterations: n_iter,
        method: Method::CircApprox,
        is_upper_bound: true,
        norm_used: Some(MatrixNorm::Frobenius),
    })
}

/// Certified upper bound on the circular-padding norm at EVERY input size
/// (and on the continuous-frequency symbol), computed from the coarse grid
/// at `n0` and blown up by the correction factor.
pub fn bound_lower_input(kernel: &Kernel4D, n0: usize, n_iter: usize) -> Result<NormCertificate> {
    corrected_circ_bound(kernel, n0, n_iter)
}

/// Certified upper bound on the zero-padding norm at input size `n`: the
/// circular bound at `n` times the correction factor. Cheaper than the
/// kernel Gram loop when `n` is moderate, at the price of the factor.
pub fn bound_toeplitz_via_circ(
    kernel: &Kernel4D,
    n: usize,
    n_iter: usize,
) -> Result<NormCertificate> {
    corrected_circ_bound(kernel, n, n_iter)
}

/// One curve family of factor values over a sampling-size range.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorCurve {
    /// Admissible grid points in `(n0, t)` row-major order.
    pub rows: Vec<FactorParams>,
    /// Inadmissible `(n0, t)` pairs that were skipped.
    pub skipped: Vec<(usize, usize)>,
}

/// Tabulates the correction factor for every `n0` in
/// `n0_min..=n0_max` and every `t` in `t_list`, skipping (and recording)
/// inadmissible combinations.
pub fn factor_curve(
    n0_min: usize,
    n0_max: usize,
    k: usize,
    t_list: &[usize],
) -> Result<FactorCurve> {
    if t_list.is_empty() {
        return Err(Error::InvalidArgument(
            "factor curve needs at least one iteration count".to_string(),
        ));
    }
    if n0_min == 0 || n0_min > n0_max {
        return Err(Error::InvalidArgument(format!(
            "invalid sampling range {n0_min}..={n0_max}"
        )));
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for n0 in n0_min..=n0_max {
        for &t in t_list {
            match correction_factor(k, t, n0) {
                Ok(params) => rows.push(params),
                Err(Error::Precondition(_)) => skipped.push((n0, t)),
                Err(other) => return Err(other),
            }
        }
    }
    Ok(FactorCurve { rows, skipped })
}
