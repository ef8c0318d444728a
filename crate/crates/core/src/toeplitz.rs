//! Certified spectral-norm upper bounds for zero-padding convolutions.
//!
//! Squaring the convolution operator corresponds to cross-correlating the
//! kernel with itself over the output channel, so the whole Gram iteration
//! runs on kernel-sized objects and the resulting bound holds at every input
//! size at once. Small iterates are correlated directly; large ones move to
//! the frequency domain, where one squaring pass is an independent product
//! per frequency (the grid is padded far enough that circular correlation
//! equals linear correlation, so both paths compute the same object).

use crate::error::{Error, Result};
use crate::numerics::{Kernel4D, MatrixNorm};
use crate::gram::{Method, NormCertificate};
use crate::oracle::DEFAULT_ELEMENT_CAP;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Self-correlation of a kernel over its first channel index: a real
/// `m x m` channel grid of spatial shift planes with odd sides, the kernel
/// analogue of a Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramKernel {
    channels: usize,
    s_h: usize,
    s_w: usize,
    data: Vec<f64>,
}

impl GramKernel {
    /// Channel count `m` of the square channel grid.
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Spatial height (odd).
    pub fn s_h(&self) -> usize {
        self.s_h
    }

    /// Spatial width (odd).
    pub fn s_w(&self) -> usize {
        self.s_w
    }

    /// Largest vertical shift magnitude, `(s_h - 1) / 2`.
    pub fn half_h(&self) -> usize {
        (self.s_h - 1) / 2
    }

    /// Largest horizontal shift magnitude, `(s_w - 1) / 2`.
    pub fn half_w(&self) -> usize {
        (self.s_w - 1) / 2
    }

    /// Entry by 0-based grid position; the zero shift sits at
    /// `(half_h, half_w)`.
    pub fn at(&self, i1: usize, i2: usize, p: usize, q: usize) -> f64 {
        debug_assert!(i1 < self.channels && i2 < self.channels && p < self.s_h && q < self.s_w);
        self.data[((i1 * self.channels + i2) * self.s_h + p) * self.s_w + q]
    }

    /// Entry by signed shift `(dp, dq)` with `|dp| <= half_h`,
    /// `|dq| <= half_w`.
    pub fn at_shift(&self, i1: usize, i2: usize, dp: isize, dq: isize) -> f64 {
        let p = (dp + self.half_h() as isize) as usize;
        let q = (dq + self.half_w() as isize) as usize;
        self.at(i1, i2, p, q)
    }

    /// Flat row-major `(i1, i2, p, q)` view of all entries.
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn scale_in_place(&mut self, factor: f64) {
        for x in &mut self.data {
            *x *= factor;
        }
    }

    /// One more Gram pass: the self-correlation of this object viewed as an
    /// `m`-in `m`-out kernel; sides grow `s -> 2s - 1`.
    pub fn gram_step(&self) -> GramKernel {
        correlate(
            self.channels,
            self.channels,
            self.s_h,
            self.s_w,
            &self.data,
        )
    }

    /// Per-second-channel absolute sums `sum_{i1, p, q} |entry(i1, i, p, q)|`;
    /// by shift symmetry these equal the first-channel sums.
    fn second_channel_abs_sums(&self) -> Vec<f64> {
        let m = self.channels;
        let plane = self.s_h * self.s_w;
        let mut sums = vec![0.0; m];
        for i1 in 0..m {
            for i2 in 0..m {
                let start = (i1 * m + i2) * plane;
                sums[i2] += self.data[start..start + plane]
                    .iter()
                    .map(|x| x.abs())
                    .sum::<f64>();
            }
        }
        sums
    }
}

/// Cross-correlation of a 4-D array with itself over the first channel
/// index: `out(i1, i2, dp, dq) = sum_{j,a,b} data(j,i1,a,b) *
/// data(j,i2,a+dp,b+dq)`. The shift-Hermitian mirror
/// `out(i2, i1, -dp, -dq) = out(i1, i2, dp, dq)` is written exactly.
fn correlate(c_out: usize, c_in: usize, k_h: usize, k_w: usize, data: &[f64]) -> GramKernel {
    let m = c_in;
    let (s_h, s_w) = (2 * k_h - 1, 2 * k_w - 1);
    let (hk, hw) = ((k_h - 1) as isize, (k_w - 1) as isize);
    let plane_len = k_h * k_w;
    let plane = |j: usize, i: usize| &data[(j * c_in + i) * plane_len..][..plane_len];

    let corr = |i1: usize, i2: usize, dp: isize, dq: isize| -> f64 {
        let a_lo = 0.max(-dp) as usize;
        let a_hi = (k_h as isize).min(k_h as isize - dp) as usize;
        let b_lo = 0.max(-dq) as usize;
        let b_hi = (k_w as isize).min(k_w as isize - dq) as usize;
        let mut acc = 0.0;
        for j in 0..c_out {
            let p1 = plane(j, i1);
            let p2 = plane(j, i2);
            for a in a_lo..a_hi {
                let a2 = (a as isize + dp) as usize;
                for b in b_lo..b_hi {
                    acc += p1[a * k_w + b] * p2[a2 * k_w + (b as isize + dq) as usize];
                }
            }
        }
        acc
    };

    let mut out = vec![0.0; m * m * s_h * s_w];
    let mut set = |i1: usize, i2: usize, dp: isize, dq: isize, value: f64| {
        let p = (dp + hk) as usize;
        let q = (dq + hw) as usize;
        out[((i1 * m + i2) * s_h + p) * s_w + q] = value;
    };
    for i1 in 0..m {
        for dq in 0..=hw {
            let v = corr(i1, i1, 0, dq);
            set(i1, i1, 0, dq, v);
            set(i1, i1, 0, -dq, v);
        }
        for dp in 1..=hk {
            for dq in -hw..=hw {
                let v = corr(i1, i1, dp, dq);
                set(i1, i1, dp, dq, v);
                set(i1, i1, -dp, -dq, v);
            }
        }
        for i2 in i1 + 1..m {
            for dp in -hk..=hk {
                for dq in -hw..=hw {
                    let v = corr(i1, i2, dp, dq);
                    set(i1, i2, dp, dq, v);
                    set(i2, i1, -dp, -dq, v);
                }
            }
        }
    }
    GramKernel {
        channels: m,
        s_h,
        s_w,
        data: out,
    }
}

/// First Gram pass on a raw kernel: correlation over the output channel,
/// collapsing `(c_out, c_in)` to a `(c_in, c_in)` channel grid and growing
/// the spatial sides `k -> 2k - 1`.
pub fn kernel_gram_step(kernel: &Kernel4D) -> GramKernel {
    correlate(
        kernel.c_out(),
        kernel.c_in(),
        kernel.k_h(),
        kernel.k_w(),
        kernel.entries(),
    )
}

/// Which final reduction of the Gram iterate drives the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToepVariant {
    /// Largest per-channel absolute sum; carries the upper-bound guarantee.
    Inf,
    /// Frobenius reduction scaled by the original kernel area; reported for
    /// comparison but not guaranteed to sit above the true norm.
    Fro,
}

impl ToepVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ToepVariant::Inf => "inf",
            ToepVariant::Fro => "fro",
        }
    }
}

impl std::str::FromStr for ToepVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" => Ok(ToepVariant::Inf),
            "fro" => Ok(ToepVariant::Fro),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant '{other}' (expected inf or fro)"
            ))),
        }
    }
}

/// What the Gram loop leaves behind: the accumulated log-scale and the two
/// reductions of the final iterate that the bounds and the rescaling
/// diagonal need.
pub(crate) struct LoopSummary {
    /// Log-scale accumulator after all passes.
    pub r: f64,
    /// `sum_{i1, p, q} |G(i1, i, p, q)|` per second channel `i`.
    pub abs_sums: Vec<f64>,
    /// Sum of squared entries of the final iterate.
    pub total_sq: f64,
}

const NAIVE_COST_THRESHOLD: f64 = 3e7;

/// Inner-loop multiply count of the direct spatial path.
fn naive_cost(kernel: &Kernel4D, n_iter: usize) -> f64 {
    let m = kernel.c_in() as f64;
    let area = (kernel.k_h() * kernel.k_w()) as f64;
    let mut cost = kernel.c_out() as f64 * m * m * area * area;
    let (mut s_h, mut s_w) = (
        2.0 * kernel.k_h() as f64 - 1.0,
        2.0 * kernel.k_w() as f64 - 1.0,
    );
    for _ in 1..n_iter {
        cost += m * m * m * (s_h * s_w) * (s_h * s_w);
        if cost > NAIVE_COST_THRESHOLD {
            break;
        }
        s_h = 2.0 * s_h - 1.0;
        s_w = 2.0 * s_w - 1.0;
    }
    cost
}

fn loop_naive(kernel: &Kernel4D, n_iter: usize) -> LoopSummary {
    let norm0 = kernel.frobenius();
    let mut r = 2.0 * norm0.ln();
    let scaled = kernel
        .scaled(1.0 / norm0)
        .expect("rescaling a finite nonzero kernel stays finite");
    let mut g = kernel_gram_step(&scaled);
    for _ in 1..n_iter {
        let nrm = g.frobenius();
        r = 2.0 * (r + nrm.ln());
        g.scale_in_place(1.0 / nrm);
        g = g.gram_step();
    }
    LoopSummary {
        r,
        abs_sums: g.second_channel_abs_sums(),
        total_sq: g.entries().iter().map(|x| x * x).sum(),
    }
}

fn is_five_smooth(mut x: usize) -> bool {
    for f in [2, 3, 5] {
        while x % f == 0 {
            x /= f;
        }
    }
    x == 1
}

fn next_five_smooth(n: usize) -> usize {
    let mut x = n.max(1);
    while !is_five_smooth(x) {
        x += 1;
    }
    x
}

/// Planned 2-D FFT of a fixed square size, forward and unnormalized inverse.
struct Fft2 {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl Fft2 {
    fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Fft2 {
            size,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            work: vec![Complex64::new(0.0, 0.0); size * size],
        }
    }

    fn pass(&mut self, buf: &mut [Complex64], forward: bool) {
        debug_assert_eq!(buf.len(), self.size * self.size);
        let fft = if forward { &self.forward } else { &self.inverse };
        let p = self.size;
        fft.process_with_scratch(buf, &mut self.scratch);
        for r in 0..p {
            for c in 0..p {
                self.work[c * p + r] = buf[r * p + c];
            }
        }
        fft.process_with_scratch(&mut self.work, &mut self.scratch);
        for r in 0..p {
            for c in 0..p {
                buf[c * p + r] = self.work[r * p + c];
            }
        }
    }

    fn forward(&mut self, buf: &mut [Complex64]) {
        self.pass(buf, true);
    }

    /// Inverse without the `1/size^2` factor; callers rescale.
    fn inverse_unnormalized(&mut self, buf: &mut [Complex64]) {
        self.pass(buf, false);
    }
}

/// Frequency-domain Gram loop: one forward transform per kernel plane, then
/// every squaring pass is an independent Hermitian block product per
/// frequency, and only the reductions return to the spatial domain.
fn loop_frequency(kernel: &Kernel4D, n_iter: usize) -> Result<LoopSummary> {
    let (c_out, m) = (kernel.c_out(), kernel.c_in());
    let (k_h, k_w) = (kernel.k_h(), kernel.k_w());

    // Final spatial side 2^t (k - 1) + 1 per axis; the grid must hold it so
    // circular correlation stays alias-free at every pass.
    let shifts = |k: usize| -> u128 { ((k as u128) - 1) << n_iter };
    let side = shifts(k_h).max(shifts(k_w)) + 1;
    let blocks = (m * m).max(c_out * m) as u128;
    let required = side
        .checked_mul(side)
        .and_then(|s| s.checked_mul(blocks))
        .unwrap_or(u128::MAX);
    if required > DEFAULT_ELEMENT_CAP {
        return Err(Error::MemoryCap {
            required,
            cap: DEFAULT_ELEMENT_CAP,
        });
    }
    let p = next_five_smooth(side as usize);
    let pp = p * p;
    let mut fft = Fft2::new(p);

    // Forward transforms of the corner-anchored kernel planes.
    let mut kernel_spectrum = vec![Complex64::new(0.0, 0.0); pp * c_out * m];
    let mut plane = vec![Complex64::new(0.0, 0.0); pp];
    for j in 0..c_out {
        for i in 0..m {
            for cell in plane.iter_mut() {
                *cell = Complex64::new(0.0, 0.0);
            }
            let src = kernel.plane(j, i);
            for a in 0..k_h {
                for b in 0..k_w {
                    plane[a * p + b] = Complex64::new(src[a * k_w + b], 0.0);
                }
            }
            fft.forward(&mut plane);
            for (f, value) in plane.iter().enumerate() {
                kernel_spectrum[f * c_out * m + j * m + i] = *value;
            }
        }
    }

    // First pass: per-frequency conjugate products, folding in the kernel
    // rescaling.
    let norm0 = kernel.frobenius();
    let mut r = 2.0 * norm0.ln();
    let inv_sq = 1.0 / (norm0 * norm0);
    let mut cube = vec![Complex64::new(0.0, 0.0); pp * m * m];
    for f in 0..pp {
        let block_in = &kernel_spectrum[f * c_out * m..(f + 1) * c_out * m];
        let block_out = &mut cube[f * m * m..(f + 1) * m * m];
        for i1 in 0..m {
            for i2 in i1..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..c_out {
                    acc += block_in[j * m + i1].conj() * block_in[j * m + i2];
                }
                acc *= inv_sq;
                block_out[i1 * m + i2] = acc;
                block_out[i2 * m + i1] = acc.conj();
            }
        }
    }
    drop(kernel_spectrum);

    // Remaining passes: rescale by the spatial Frobenius norm (Parseval)
    // and square every Hermitian frequency block.
    let spatial_sq =
        |cube: &[Complex64]| cube.iter().map(|z| z.norm_sqr()).sum::<f64>() / (pp as f64);
    let mut block_scratch = vec![Complex64::new(0.0, 0.0); m * m];
    for _ in 1..n_iter {
        let nrm = spatial_sq(&cube).sqrt();
        r = 2.0 * (r + nrm.ln());
        let inv = 1.0 / nrm;
        for z in cube.iter_mut() {
            *z *= inv;
        }
        for f in 0..pp {
            let block = &mut cube[f * m * m..(f + 1) * m * m];
            for i1 in 0..m {
                for i2 in i1..m {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for l in 0..m {
                        acc += block[i1 * m + l] * block[i2 * m + l].conj();
                    }
                    block_scratch[i1 * m + i2] = acc;
                    block_scratch[i2 * m + i1] = acc.conj();
                }
            }
            block.copy_from_slice(&block_scratch);
        }
    }

    let total_sq = spatial_sq(&cube);

    // Support of the final iterate along each axis: shifts up to
    // 2^{t-1} (k - 1) wrap to the top of the grid; everything outside is
    // exactly zero in reals and only rounding noise here.
    let half = |k: usize| (((k as u128 - 1) << (n_iter - 1)) as usize).min(p - 1);
    let (half_h, half_w) = (half(k_h), half(k_w));
    let axis_positions = |half: usize| -> Vec<usize> {
        let mut v: Vec<usize> = (0..=half).collect();
        for offset in (1..=half).rev() {
            v.push(p - offset);
        }
        v
    };
    let rows = axis_positions(half_h);
    let cols = axis_positions(half_w);

    let mut abs_sums = vec![0.0; m];
    for i1 in 0..m {
        for i2 in 0..m {
            for (f, cell) in plane.iter_mut().enumerate() {
                *cell = cube[f * m * m + i1 * m + i2];
            }
            fft.inverse_unnormalized(&mut plane);
            let inv = 1.0 / (pp as f64);
            let mut acc = 0.0;
            for &row in &rows {
                for &col in &cols {
                    acc += (plane[row * p + col].re * inv).abs();
                }
            }
            abs_sums[i2] += acc;
        }
    }

    Ok(LoopSummary {
        r,
        abs_sums,
        total_sq,
    })
}

/// Runs the rescaled kernel Gram loop for `n_iter` passes on a nonzero
/// kernel, choosing the direct spatial path when it is cheap enough and the
/// frequency path otherwise.
pub(crate) fn run_kernel_gram_loop(kernel: &Kernel4D, n_iter: usize) -> Result<LoopSummary> {
    if naive_cost(kernel, n_iter) <= NAIVE_COST_THRESHOLD {
        Ok(loop_naive(kernel, n_iter))
    } else {
        loop_frequency(kernel, n_iter)
    }
}

/// Spectral-norm estimate for the zero-padding convolution built from
/// `n_iter` kernel Gram passes. The bound is independent of the input size:
/// it holds for the operator at every `n` at once.
///
/// The `inf` variant is a certified upper bound. The `fro` variant follows
/// the same loop with a Frobenius reduction scaled by the original kernel
/// area; it tracks the norm closely but can undershoot it, so its
/// certificate says `is_upper_bound = false`.
pub fn norm2_toep(
    kernel: &Kernel4D,
    n_iter: usize,
    variant: ToepVariant,
) -> Result<NormCertificate> {
    if n_iter == 0 {
        return Err(Error::Precondition(
            "gram iteration needs at least one squaring pass".to_string(),
        ));
    }
    let (method, is_upper_bound, norm_used) = match variant {
        ToepVariant::Inf => (Method::ToepInf, true, MatrixNorm::Inf),
        ToepVariant::Fro => (Method::ToepFro, false, MatrixNorm::Frobenius),
    };
    if kernel.is_zero() {
        return Ok(NormCertificate {
            value: 0.0,
            iterations: n_iter,
            method,
            is_upper_bound,
            norm_used: Some(norm_used),
        });
    }
    let summary = run_kernel_gram_loop(kernel, n_iter)?;
    let halving = 0.5_f64.powi(n_iter as i32);
    let value = match variant {
        ToepVariant::Inf => {
            let worst = summary.abs_sums.iter().fold(0.0_f64, |a, &b| a.max(b));
            (halving * (worst.ln() + summary.r)).exp()
        }
        ToepVariant::Fro => {
            let area = (kernel.k_h() * kernel.k_w()) as f64;
            (halving * (0.5 * (area * summary.total_sq).ln() + summary.r)).exp()
        }
    };
    Ok(NormCertificate {
        value,
        iterations: n_iter,
        method,
        is_upper_bound,
        norm_used: Some(norm_used),
    })
}
