//! Certified spectral-norm bounds for convolutional layers.
//!
//! The crate estimates the largest singular value of the linear operator
//! defined by a 2-D convolution, for both circular and zero padding, without
//! materializing the operator. The central routine squares a Gram matrix
//! repeatedly while tracking a running rescaling exponent, which converges
//! quadratically to the spectral norm and stays a certified upper bound at
//! every iteration when driven by a submultiplicative norm. On top of that
//! sit correction factors relating circular to zero padding, Lipschitz
//! rescaling for dense and convolutional layers, and slow-but-sure reference
//! oracles (materialized operators, power iteration, and a certified
//! lower/upper sandwich) used to validate the fast paths.
//!
//! All arithmetic is 64-bit: matrices hold `f64` or `Complex64` entries, and
//! every public estimator reports its result through [`NormCertificate`] so
//! callers always know whether a value is a proven upper bound.

pub mod bounds;
pub mod circulant;
pub mod error;
pub mod gram;
pub mod numerics;
pub mod oracle;
pub mod rescaling;
pub mod scalar;
pub mod toeplitz;

pub use bounds::{
    bound_lower_input, bound_toeplitz_via_circ, correction_factor, correction_factor_strict,
    factor_curve, spectral_density, FactorCurve, FactorParams,
};
pub use circulant::{exact_sigma_circ, norm2_circ};
pub use error::{Error, Result};
pub use gram::{gram_iteration, gram_sequence, Method, NormCertificate};
pub use numerics::{
    dft_matrix, fft2_kernel, matrix_norm, BlockSpectrum, DenseMatrix, Kernel4D, MatrixNorm,
};
pub use oracle::{
    conv2d_circular, conv2d_circular_adjoint, conv2d_zero, conv2d_zero_adjoint,
    conv_power_iteration, finite_diff_grad, materialize_circulant, materialize_circulant_capped,
    materialize_toeplitz, materialize_toeplitz_capped, sigma1_sandwich, KernelSensitivity,
    Padding, SandwichCertificate, DEFAULT_ELEMENT_CAP,
};
pub use rescaling::{
    conv_spectral_rescale, dense_forward, residual_forward, spectral_rescale, stable_rank,
    Activation, LayerKind, LipschitzLayer, RescaleDiag,
};
pub use scalar::Scalar;
pub use toeplitz::{kernel_gram_step, norm2_toep, GramKernel, ToepVariant};

/// Dense matrix with real 64-bit entries.
pub type RealMatrix = DenseMatrix<f64>;

/// Dense matrix with complex 64-bit entries.
pub type ComplexMatrix = DenseMatrix<num_complex::Complex64>;
