//! Diagonal rescalings that make a layer provably 1-Lipschitz. The diagonal
//! comes from row sums of a Gram iterate of the weight, so a larger
//! iteration count trades work for a rescaled norm closer to one.

use crate::error::{Error, Result};
use crate::numerics::{matrix_norm, Kernel4D, MatrixNorm};
use crate::oracle::sigma1_sandwich;
use crate::RealMatrix;
use crate::toeplitz::run_kernel_gram_loop;
use std::fmt;
use std::str::FromStr;

/// A diagonal rescaling for the input side of a weight, together with the
/// settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaleDiag {
    /// Number of diagonal entries (the weight's input dimension).
    pub size: usize,
    /// Nonnegative diagonal entries; zero marks an input the weight ignores.
    pub factors: Vec<f64>,
    /// Gram squaring passes used to build the diagonal.
    pub t: usize,
    /// Strictly positive weights of the weighted row sums; all ones when
    /// no weighting was requested.
    pub q_weights: Vec<f64>,
}

impl RescaleDiag {
    /// `W * diag(factors)`, the rescaled weight the guarantees are about.
    pub fn column_scaled(&self, w: &RealMatrix) -> Result<RealMatrix> {
        if w.cols() != self.size {
            return Err(Error::DimensionMismatch(format!(
                "rescaling of size {} cannot scale a matrix with {} columns",
                self.size,
                w.cols()
            )));
        }
        RealMatrix::from_fn(w.rows(), w.cols(), |r, c| w.at(r, c) * self.factors[c])
    }

    /// The kernel with every input channel `i` multiplied by `factors[i]`.
    pub fn channel_scaled(&self, kernel: &Kernel4D) -> Result<Kernel4D> {
        if kernel.c_in() != self.size {
            return Err(Error::DimensionMismatch(format!(
                "rescaling of size {} cannot scale a kernel with {} input channels",
                self.size,
                kernel.c_in()
            )));
        }
        Kernel4D::from_fn(
            kernel.c_out(),
            kernel.c_in(),
            kernel.k_h(),
            kernel.k_w(),
            |j, i, a, b| kernel.at(j, i, a, b) * self.factors[i],
        )
    }
}

fn validated_weights(q_weights: Option<&[f64]>, size: usize) -> Result<Vec<f64>> {
    match q_weights {
        None => Ok(vec![1.0; size]),
        Some(qs) => {
            if qs.len() != size {
                return Err(Error::DimensionMismatch(format!(
                    "expected {size} row-sum weights, got {}",
                    qs.len()
                )));
            }
            if !qs.iter().all(|x| x.is_finite() && *x > 0.0) {
                return Err(Error::Precondition(
                    "row-sum weights must be finite and strictly positive".to_string(),
                ));
            }
            Ok(qs.to_vec())
        }
    }
}

/// Builds the diagonal `R` with `R_ii = (sum_j |G|_ij q_j / q_i)^{-2^{-t}}`
/// where `G = (W^T W)^{2^{t-1}}`, using `t - 1` rescaled Hermitian
/// squarings and undoing the scaling exactly inside the exponent. The
/// rescaled weight `W R` has spectral norm at most one; `t = 1` recovers
/// the plain absolute-row-sum rescaling.
pub fn spectral_rescale(
    w: &RealMatrix,
    t: usize,
    q_weights: Option<&[f64]>,
) -> Result<RescaleDiag> {
    if t == 0 {
        return Err(Error::Precondition(
            "rescaling needs at least one squaring pass".to_string(),
        ));
    }
    let size = w.cols();
    let weights = validated_weights(q_weights, size)?;
    if w.is_zero() {
        return Ok(RescaleDiag {
            size,
            factors: vec![0.0; size],
            t,
            q_weights: weights,
        });
    }
    let mut g = w.gram_product();
    let mut r = 0.0;
    for _ in 1..t {
        let nrm = matrix_norm(&g, MatrixNorm::Frobenius);
        r = 2.0 * (r + nrm.ln());
        g.scale_in_place(1.0 / nrm);
        g = g.hermitian_square();
    }
    let halving = 0.5_f64.powi(t as i32);
    let factors = (0..size)
        .map(|i| {
            let mut sum = 0.0;
            for j in 0..size {
                sum += g.at(i, j).abs() * weights[j];
            }
            sum /= weights[i];
            if sum > 0.0 {
                (-halving * (sum.ln() + r)).exp()
            } else {
                0.0
            }
        })
        .collect();
    Ok(RescaleDiag {
        size,
        factors,
        t,
        q_weights: weights,
    })
}

/// Elementwise activations with slope in `[0, 1]`, so they preserve the
/// layer-level Lipschitz guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::InvalidArgument(format!(
                "unknown activation '{other}', expected relu, tanh, or sigmoid"
            ))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which 1-Lipschitz map a layer computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// `x -> W diag(R) x + b` on inputs of the weight's column dimension.
    Dense,
    /// `x -> x - 2 W diag(R)^2 phi(W^T x + b)` on inputs of the weight's
    /// row dimension.
    Residual,
}

/// A weight, its rescaling diagonal, and a bias, validated to fit together
/// for one of the two layer forms.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzLayer {
    weight: RealMatrix,
    rescale: RescaleDiag,
    bias: Vec<f64>,
    kind: LayerKind,
}

impl LipschitzLayer {
    fn validated(
        weight: RealMatrix,
        rescale: RescaleDiag,
        bias: Vec<f64>,
        kind: LayerKind,
    ) -> Result<Self> {
        if rescale.size != weight.cols() {
            return Err(Error::DimensionMismatch(format!(
                "rescaling of size {} does not fit a weight with {} columns",
                rescale.size,
                weight.cols()
            )));
        }
        let expected_bias = match kind {
            LayerKind::Dense => weight.rows(),
            LayerKind::Residual => weight.cols(),
        };
        if bias.len() != expected_bias {
            return Err(Error::DimensionMismatch(format!(
                "bias length {} does not match the layer output of size {expected_bias}",
                bias.len()
            )));
        }
        if !bias.iter().all(|b| b.is_finite()) {
            return Err(Error::InvalidArgument(
                "bias entries must be finite".to_string(),
            ));
        }
        Ok(Self {
            weight,
            rescale,
            bias,
            kind,
        })
    }

    pub fn dense(weight: RealMatrix, rescale: RescaleDiag, bias: Vec<f64>) -> Result<Self> {
        Self::validated(weight, rescale, bias, LayerKind::Dense)
    }

    pub fn residual(weight: RealMatrix, rescale: RescaleDiag, bias: Vec<f64>) -> Result<Self> {
        Self::validated(weight, rescale, bias, LayerKind::Residual)
    }

    pub fn weight(&self) -> &RealMatrix {
        &self.weight
    }

    pub fn rescale(&self) -> &RescaleDiag {
        &self.rescale
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }
}

/// Applies a dense layer: `W diag(R) x + b`.
pub fn dense_forward(layer: &LipschitzLayer, x: &[f64]) -> Result<Vec<f64>> {
    if layer.kind != LayerKind::Dense {
        return Err(Error::Precondition(
            "dense_forward needs a dense layer".to_string(),
        ));
    }
    if x.len() != layer.weight.cols() {
        return Err(Error::DimensionMismatch(format!(
            "input of length {} does not fit a weight with {} columns",
            x.len(),
            layer.weight.cols()
        )));
    }
    let scaled: Vec<f64> = x
        .iter()
        .zip(&layer.rescale.factors)
        .map(|(xi, ri)| xi * ri)
        .collect();
    let mut y = layer.weight.matvec(&scaled)?;
    for (yi, bi) in y.iter_mut().zip(&layer.bias) {
        *yi += bi;
    }
    Ok(y)
}

/// Applies a residual layer: `x - 2 W diag(R)^2 phi(W^T x + b)`.
pub fn residual_forward(
    layer: &LipschitzLayer,
    x: &[f64],
    activation: Activation,
) -> Result<Vec<f64>> {
    if layer.kind != LayerKind::Residual {
        return Err(Error::Precondition(
            "residual_forward needs a residual layer".to_string(),
        ));
    }
    if x.len() != layer.weight.rows() {
        return Err(Error::DimensionMismatch(format!(
            "input of length {} does not fit a weight with {} rows",
            x.len(),
            layer.weight.rows()
        )));
    }
    let mut z = layer.weight.conj_transpose_matvec(x)?;
    for (zi, bi) in z.iter_mut().zip(&layer.bias) {
        *zi += bi;
    }
    let gated: Vec<f64> = z
        .iter()
        .zip(&layer.rescale.factors)
        .map(|(zi, ri)| activation.apply(*zi) * ri * ri)
        .collect();
    let update = layer.weight.matvec(&gated)?;
    Ok(x.iter().zip(&update).map(|(xi, ui)| xi - 2.0 * ui).collect())
}

/// Per-input-channel rescaling for a convolution kernel: `t` kernel Gram
/// passes, then `R_i = (sum_{j,p,q} |G_t(j, i, p, q)|)^{-2^{-t}}` with the
/// running scaling undone exactly. Scaling channel `i` of the kernel by
/// `R_i` makes the zero-padding convolution 1-Lipschitz at every input
/// size.
pub fn conv_spectral_rescale(kernel: &Kernel4D, t: usize) -> Result<RescaleDiag> {
    if t == 0 {
        return Err(Error::Precondition(
            "rescaling needs at least one squaring pass".to_string(),
        ));
    }
    let size = kernel.c_in();
    if kernel.is_zero() {
        return Ok(RescaleDiag {
            size,
            factors: vec![0.0; size],
            t,
            q_weights: vec![1.0; size],
        });
    }
    let summary = run_kernel_gram_loop(kernel, t)?;
    let halving = 0.5_f64.powi(t as i32);
    let factors = summary
        .abs_sums
        .iter()
        .map(|&s| {
            if s > 0.0 {
                (-halving * (s.ln() + summary.r)).exp()
            } else {
                0.0
            }
        })
        .collect();
    Ok(RescaleDiag {
        size,
        factors,
        t,
        q_weights: vec![1.0; size],
    })
}

/// `||W||_F^2 / sigma_1(W)^2`, a smooth surrogate for the rank, computed
/// with the certified upper end of the sandwich so the result never
/// exceeds the true value. Undefined for the zero matrix.
pub fn stable_rank(w: &RealMatrix, tol: f64) -> Result<f64> {
    if w.is_zero() {
        return Err(Error::InvalidArgument(
            "stable rank of the zero matrix is undefined".to_string(),
        ));
    }
    let fro = matrix_norm(w, MatrixNorm::Frobenius);
    let cert = sigma1_sandwich(w, tol, 10_000)?;
    Ok((fro / cert.upper).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::materialize_toeplitz;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> RealMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        RealMatrix::new(rows, cols, data).unwrap()
    }

    fn gaussian_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn orthogonal_weights_need_no_rescaling() {
        let (c, s) = (0.7_f64.cos(), 0.7_f64.sin());
        let w = RealMatrix::new(2, 2, vec![c, -s, s, c]).unwrap();
        for t in [1, 4] {
            let diag = spectral_rescale(&w, t, None).unwrap();
            for &f in &diag.factors {
                assert!((f - 1.0).abs() < 1e-12, "t={t}: factor {f}");
            }
            let cert = sigma1_sandwich(&diag.column_scaled(&w).unwrap(), 1e-10, 500).unwrap();
            assert!(cert.upper <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn diagonal_example_is_exact() {
        let w = RealMatrix::new(2, 2, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        let diag = spectral_rescale(&w, 1, None).unwrap();
        assert!((diag.factors[0] - 0.5).abs() < 1e-15);
        assert!((diag.factors[1] - 1.0).abs() < 1e-15);
        let scaled = diag.column_scaled(&w).unwrap();
        assert!((scaled.at(0, 0) - 1.0).abs() < 1e-15);
        assert!((scaled.at(1, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ignored_inputs_get_zero_factors() {
        let w = RealMatrix::new(2, 2, vec![0.0, 0.0, 0.0, 3.0]).unwrap();
        let diag = spectral_rescale(&w, 1, None).unwrap();
        assert_eq!(diag.factors[0], 0.0);
        assert!((diag.factors[1] - 1.0 / 3.0).abs() < 1e-15);

        let zero = RealMatrix::new(3, 2, vec![0.0; 6]).unwrap();
        assert_eq!(spectral_rescale(&zero, 2, None).unwrap().factors, vec![0.0, 0.0]);
    }

    #[test]
    fn single_pass_matches_the_row_sum_rule() {
        let w = gaussian_matrix(8, 6, 11);
        let diag = spectral_rescale(&w, 1, None).unwrap();
        for i in 0..6 {
            let mut sum = 0.0;
            for j in 0..6 {
                let mut entry = 0.0;
                for r in 0..8 {
                    entry += w.at(r, i) * w.at(r, j);
                }
                sum += entry.abs();
            }
            assert!(
                (diag.factors[i] - sum.powf(-0.5)).abs() < 1e-12,
                "column {i}: {} vs {}",
                diag.factors[i],
                sum.powf(-0.5)
            );
        }
    }

    #[test]
    fn weighted_row_sums_shift_the_diagonal() {
        let w = RealMatrix::new(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        let diag = spectral_rescale(&w, 1, Some(&[1.0, 2.0])).unwrap();
        assert!((diag.factors[0] - 3.0_f64.powf(-0.5)).abs() < 1e-15);
        assert!((diag.factors[1] - 2.5_f64.powf(-0.5)).abs() < 1e-15);
        let cert = sigma1_sandwich(&diag.column_scaled(&w).unwrap(), 1e-10, 500).unwrap();
        assert!(cert.upper <= 1.0 + 1e-9);

        assert!(spectral_rescale(&w, 1, Some(&[1.0])).is_err());
        assert!(spectral_rescale(&w, 1, Some(&[1.0, 0.0])).is_err());
        assert!(spectral_rescale(&w, 1, Some(&[1.0, f64::NAN])).is_err());
        assert!(spectral_rescale(&w, 0, None).is_err());
    }

    #[test]
    fn rescaled_weights_are_contractive() {
        for (rows, cols, seed) in [(20, 12, 3), (7, 13, 4)] {
            let w = gaussian_matrix(rows, cols, seed);
            for t in [1, 2, 4, 8] {
                let diag = spectral_rescale(&w, t, None).unwrap();
                let cert = sigma1_sandwich(&diag.column_scaled(&w).unwrap(), 1e-10, 2000).unwrap();
                assert!(
                    cert.upper <= 1.0 + 1e-9,
                    "{rows}x{cols} seed {seed} t={t}: norm bound {}",
                    cert.upper
                );
            }
        }
    }

    #[test]
    fn more_passes_sharpen_the_rescaled_norm() {
        let w = gaussian_matrix(24, 24, 9);
        let diag = spectral_rescale(&w, 8, None).unwrap();
        let cert = sigma1_sandwich(&diag.column_scaled(&w).unwrap(), 1e-10, 4000).unwrap();
        assert!(cert.upper <= 1.0 + 1e-9, "norm bound {}", cert.upper);
        assert!(cert.lower >= 0.99, "rescaled norm only reached {}", cert.lower);
    }

    #[test]
    fn dense_forward_applies_the_map() {
        let w = RealMatrix::new(2, 2, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        let diag = spectral_rescale(&w, 1, None).unwrap();
        let layer = LipschitzLayer::dense(w, diag, vec![0.1, -0.2]).unwrap();
        let y = dense_forward(&layer, &[3.0, 4.0]).unwrap();
        assert!((y[0] - 3.1).abs() < 1e-12);
        assert!((y[1] - 3.8).abs() < 1e-12);

        assert!(dense_forward(&layer, &[1.0]).is_err());
        assert!(residual_forward(&layer, &[1.0, 1.0], Activation::Relu).is_err());
    }

    #[test]
    fn residual_forward_matches_the_scalar_formula() {
        let weight = RealMatrix::new(1, 1, vec![2.0]).unwrap();
        let diag = spectral_rescale(&weight, 1, None).unwrap();
        let layer = LipschitzLayer::residual(weight, diag, vec![0.0]).unwrap();
        for x in [-1.5, -0.3, 0.0, 0.4, 2.0] {
            let relu = residual_forward(&layer, &[x], Activation::Relu).unwrap();
            assert!((relu[0] - (x - (2.0 * x).max(0.0))).abs() < 1e-12, "x={x}");
            let tanh = residual_forward(&layer, &[x], Activation::Tanh).unwrap();
            assert!((tanh[0] - (x - (2.0 * x).tanh())).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn residual_forward_is_empirically_nonexpansive() {
        let weight = gaussian_matrix(16, 8, 21);
        let diag = spectral_rescale(&weight, 2, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let bias = gaussian_vec(8, &mut rng);
        let layer = LipschitzLayer::residual(weight, diag, bias).unwrap();
        for activation in [Activation::Relu, Activation::Tanh, Activation::Sigmoid] {
            for _ in 0..60 {
                let x = gaussian_vec(16, &mut rng);
                let y = gaussian_vec(16, &mut rng);
                let fx = residual_forward(&layer, &x, activation).unwrap();
                let fy = residual_forward(&layer, &y, activation).unwrap();
                let out: f64 = fx
                    .iter()
                    .zip(&fy)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let inp: f64 = x
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(
                    out <= inp * (1.0 + 1e-9),
                    "{activation}: expanded {inp} to {out}"
                );
            }
        }
    }

    #[test]
    fn activation_names_round_trip() {
        for activation in [Activation::Relu, Activation::Tanh, Activation::Sigmoid] {
            assert_eq!(activation.as_str().parse::<Activation>().unwrap(), activation);
        }
        assert!("gelu".parse::<Activation>().is_err());
        assert!((Activation::Sigmoid.apply(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn conv_rescaling_examples() {
        let pointwise = Kernel4D::new(1, 1, 1, 1, vec![4.0]).unwrap();
        let diag = conv_spectral_rescale(&pointwise, 1).unwrap();
        assert!((diag.factors[0] - 0.25).abs() < 1e-15);

        let averaging = Kernel4D::new(1, 1, 3, 3, vec![1.0 / 9.0; 9]).unwrap();
        for t in [1, 3] {
            let diag = conv_spectral_rescale(&averaging, t).unwrap();
            assert!((diag.factors[0] - 1.0).abs() < 1e-12, "t={t}: {}", diag.factors[0]);
        }

        let zero = Kernel4D::new(1, 2, 3, 3, vec![0.0; 18]).unwrap();
        assert_eq!(conv_spectral_rescale(&zero, 2).unwrap().factors, vec![0.0, 0.0]);
        assert!(conv_spectral_rescale(&zero, 0).is_err());
    }

    #[test]
    fn conv_rescaled_operator_is_contractive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kernel = Kernel4D::from_fn(4, 4, 3, 3, |_, _, _, _| {
            rng.sample::<f64, _>(StandardNormal)
        })
        .unwrap();
        let diag = conv_spectral_rescale(&kernel, 3).unwrap();
        let rescaled = diag.channel_scaled(&kernel).unwrap();
        let t16 = materialize_toeplitz(&rescaled, 16).unwrap();
        let cert = sigma1_sandwich(&t16, 1e-7, 3000).unwrap();
        assert!(cert.upper <= 1.0 + 1e-9, "norm bound {}", cert.upper);
    }

    #[test]
    fn stable_rank_examples() {
        let identity = RealMatrix::identity(16);
        assert!((stable_rank(&identity, 1e-8).unwrap() - 16.0).abs() < 1e-6);

        let rank_one = RealMatrix::from_fn(9, 5, |r, c| {
            (0.3 * r as f64 + 0.1).cos() * (0.7 * c as f64 - 0.4).sin()
        })
        .unwrap();
        assert!((stable_rank(&rank_one, 1e-9).unwrap() - 1.0).abs() < 1e-8);

        let diagonal = RealMatrix::new(2, 2, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((stable_rank(&diagonal, 1e-9).unwrap() - 1.25).abs() < 1e-9);

        let zero = RealMatrix::new(3, 3, vec![0.0; 9]).unwrap();
        assert!(stable_rank(&zero, 1e-8).is_err());

        let w = gaussian_matrix(12, 7, 31);
        let sr = stable_rank(&w, 1e-8).unwrap();
        assert!(sr >= 1.0 - 1e-9 && sr <= 7.0 + 1e-9, "stable rank {sr}");
    }

    #[test]
    fn gram_iterates_flatten_the_spectrum() {
        let w = gaussian_matrix(10, 10, 17);
        let mut b = w.gram_product();
        let mut prev = f64::INFINITY;
        for step in 0..6 {
            b.scale_in_place(1.0 / matrix_norm(&b, MatrixNorm::Frobenius));
            let sr = stable_rank(&b, 1e-9).unwrap();
            assert!(
                sr <= prev + 1e-9,
                "step {step}: stable rank rose from {prev} to {sr}"
            );
            prev = sr;
            b = b.hermitian_square();
        }
        assert!(prev <= 1.05, "stable rank settled at {prev}");
    }
}
