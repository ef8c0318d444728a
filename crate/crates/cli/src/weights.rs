//! Weight files on disk: a JSON document with a `shape` array and a flat
//! row-major `data` array. Floats are written in scientific notation with
//! 17 significant digits, so a write-then-read round trip reproduces every
//! value bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use specnorm::{Kernel4D, RealMatrix};

use crate::CliError;

#[derive(Deserialize)]
struct WeightsFile {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Contents of a weight file: a dense matrix (2-entry shape) or a
/// convolution kernel (4-entry shape).
pub enum Weights {
    Matrix(RealMatrix),
    Kernel(Kernel4D),
}

/// Formats a float with 17 significant digits; `serde_json` parses the
/// result back to the identical bit pattern.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Reads and validates a weight file of either shape arity.
pub fn read_weights(path: &Path) -> Result<Weights, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|err| CliError::parse(format!("cannot read {}: {err}", path.display())))?;
    let parsed: WeightsFile = serde_json::from_str(&text)
        .map_err(|err| CliError::parse(format!("{}: {err}", path.display())))?;
    if parsed.shape.is_empty() || parsed.shape.contains(&0) {
        return Err(CliError::parse(format!(
            "{}: shape must list positive dimensions, got {:?}",
            path.display(),
            parsed.shape
        )));
    }
    let expected: usize = parsed.shape.iter().product();
    if expected != parsed.data.len() {
        return Err(CliError::parse(format!(
            "{}: shape {:?} calls for {} values, data has {}",
            path.display(),
            parsed.shape,
            expected,
            parsed.data.len()
        )));
    }
    if !parsed.data.iter().all(|x| x.is_finite()) {
        return Err(CliError::parse(format!(
            "{}: data must be finite",
            path.display()
        )));
    }
    match *parsed.shape.as_slice() {
        [rows, cols] => RealMatrix::new(rows, cols, parsed.data)
            .map(Weights::Matrix)
            .map_err(|err| CliError::parse(format!("{}: {err}", path.display()))),
        [c_out, c_in, k_h, k_w] => Kernel4D::new(c_out, c_in, k_h, k_w, parsed.data)
            .map(Weights::Kernel)
            .map_err(|err| CliError::parse(format!("{}: {err}", path.display()))),
        _ => Err(CliError::parse(format!(
            "{}: shape must have 2 entries (matrix) or 4 (kernel), got {}",
            path.display(),
            parsed.shape.len()
        ))),
    }
}

/// Reads a weight file that must hold a convolution kernel.
pub fn read_kernel(path: &Path) -> Result<Kernel4D, CliError> {
    match read_weights(path)? {
        Weights::Kernel(kernel) => Ok(kernel),
        Weights::Matrix(_) => Err(CliError::parse(format!(
            "{}: expected a 4-entry kernel shape [c_out, c_in, k_h, k_w]",
            path.display()
        ))),
    }
}

fn render(shape: &[usize], data: &[f64]) -> Result<String, CliError> {
    if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
        return Err(CliError::semantic(format!(
            "refusing to write non-finite weight {bad}"
        )));
    }
    let mut out = String::with_capacity(data.len() * 26 + 64);
    out.push_str("{\"shape\":[");
    for (i, dim) in shape.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{dim}");
    }
    out.push_str("],\"data\":[");
    for (i, x) in data.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", fmt_f64(*x));
    }
    out.push_str("]}\n");
    Ok(out)
}

/// Writes a matrix in the weight-file schema.
pub fn write_matrix(path: &Path, m: &RealMatrix) -> Result<(), CliError> {
    let text = render(&[m.rows(), m.cols()], m.entries())?;
    write_text(path, &text)
}

/// Writes a kernel in the weight-file schema.
pub fn write_kernel(path: &Path, kernel: &Kernel4D) -> Result<(), CliError> {
    let shape = [kernel.c_out(), kernel.c_in(), kernel.k_h(), kernel.k_w()];
    let text = render(&shape, kernel.entries())?;
    write_text(path, &text)
}

/// Writes a text file, mapping failures to the I/O exit code.
pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|err| CliError::io(format!("cannot write {}: {err}", path.display())))
}
