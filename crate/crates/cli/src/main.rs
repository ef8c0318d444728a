//! Command-line front end for the spectral-norm estimators: one-shot
//! estimates, two-sided sandwich oracles, benchmark sweeps, correction
//! factor tables, and 1-Lipschitz rescaling of stored weights.

mod commands;
mod weights;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use specnorm::{Error, Padding, ToepVariant, DEFAULT_ELEMENT_CAP};

/// Failure carrying the exit code promised to scripts: 2 for unreadable
/// input, 3 for violated preconditions, 4 for the memory cap, 5 for output
/// I/O. Flag parsing failures exit with 2 through clap itself.
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn parse(message: String) -> Self {
        Self { code: 2, message }
    }

    fn semantic(message: String) -> Self {
        Self { code: 3, message }
    }

    fn memory(message: String) -> Self {
        Self { code: 4, message }
    }

    fn io(message: String) -> Self {
        Self { code: 5, message }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::MemoryCap { .. } => CliError::memory(err.to_string()),
            other => CliError::semantic(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "specnorm", version, about = "Certified spectral-norm bounds for convolutional and dense layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the operator norm of a stored kernel with one method.
    Estimate(EstimateArgs),
    /// Materialize the operator and print a two-sided sandwich certificate.
    Oracle(OracleArgs),
    /// Sweep the estimators over seeded random kernels and write a CSV.
    Bench(BenchArgs),
    /// Tabulate circulant-to-Toeplitz correction factors as a CSV.
    Factor(FactorArgs),
    /// Rescale stored weights to a 1-Lipschitz layer and verify the result.
    Rescale(RescaleArgs),
}

/// Norm estimation methods exposed on the command line.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Gram iteration on the materialized operator matrix.
    GramDense,
    /// Per-frequency Gram iteration for circular padding.
    Circ,
    /// Kernel-space Gram iteration bound for zero padding, any input size.
    Toep,
    /// Circulant bound at the given size times the correction factor.
    CircApprox,
    /// Power iteration on the convolution operator; a lower estimate.
    Power,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    /// Row-sum norm; keeps the upper-bound guarantee at every pass count.
    Inf,
    /// Frobenius norm; tighter in practice but not a certified bound.
    Fro,
}

impl From<VariantArg> for ToepVariant {
    fn from(variant: VariantArg) -> Self {
        match variant {
            VariantArg::Inf => ToepVariant::Inf,
            VariantArg::Fro => ToepVariant::Fro,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PaddingArg {
    /// Zero padding; the operator is block Toeplitz.
    Zero,
    /// Circular padding; the operator is block circulant.
    Circular,
}

impl From<PaddingArg> for Padding {
    fn from(padding: PaddingArg) -> Self {
        match padding {
            PaddingArg::Zero => Padding::Zero,
            PaddingArg::Circular => Padding::Circular,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Kernel file: JSON with "shape" [c_out, c_in, k_h, k_w] and flat "data".
    #[arg(long)]
    kernel: PathBuf,
    /// Estimation method.
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Input grid size; required for gram-dense, circ, circ-approx, and
    /// power, rejected for toep whose bound holds at every size.
    #[arg(long)]
    n: Option<usize>,
    /// Gram squaring passes, or rounds for the power method.
    #[arg(long, default_value_t = 6)]
    iters: usize,
    /// Norm driving the kernel-space Gram loop (toep only).
    #[arg(long, value_enum, default_value_t = VariantArg::Inf)]
    variant: VariantArg,
    /// Boundary handling for gram-dense and power.
    #[arg(long, value_enum, default_value_t = PaddingArg::Zero)]
    padding: PaddingArg,
    /// Seed for the power method's starting vector.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Cap on dense elements when materializing for gram-dense.
    #[arg(long, default_value_t = DEFAULT_ELEMENT_CAP)]
    max_elements: u128,
    /// Report elapsed_ms as 0.0 so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Kernel file: JSON with "shape" [c_out, c_in, k_h, k_w] and flat "data".
    #[arg(long)]
    kernel: PathBuf,
    /// Input grid size of the materialized operator.
    #[arg(long)]
    n: usize,
    /// Boundary handling of the materialized operator.
    #[arg(long, value_enum, default_value_t = PaddingArg::Zero)]
    padding: PaddingArg,
    /// Relative gap at which the lower/upper sandwich is declared closed.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Power iteration budget.
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    /// Cap on dense elements of the materialized operator.
    #[arg(long, default_value_t = DEFAULT_ELEMENT_CAP)]
    max_elements: u128,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated channel counts; each is used for c_in and c_out.
    #[arg(long, value_delimiter = ',', required = true)]
    channels: Vec<usize>,
    /// Square kernel size; must be odd so zero padding is well defined.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Input grid size.
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Gram squaring passes for the bound methods.
    #[arg(long, default_value_t = 6)]
    iters: usize,
    /// Rounds for the power-method row.
    #[arg(long, default_value_t = 100)]
    power_iters: usize,
    /// Independent kernels drawn per channel count.
    #[arg(long, default_value_t = 3)]
    trials: usize,
    /// Seed for kernel draws and power-method starts.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Cap on dense elements the benchmarked operators may span.
    #[arg(long, default_value_t = DEFAULT_ELEMENT_CAP)]
    max_elements: u128,
    /// Report elapsed_ms as 0.0 so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct FactorArgs {
    /// Square kernel size.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Comma-separated Gram pass counts, one curve per value.
    #[arg(long, value_delimiter = ',', required = true)]
    t: Vec<usize>,
    /// Smallest sampling size n0 to tabulate.
    #[arg(long)]
    n0_min: usize,
    /// Largest sampling size n0 to tabulate.
    #[arg(long)]
    n0_max: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Rescale a dense matrix (2-entry shape).
    Dense,
    /// Rescale a convolution kernel per input channel (4-entry shape).
    Conv,
}

#[derive(Args)]
struct RescaleArgs {
    /// Input weight file; shape arity must match --mode.
    #[arg(long)]
    input: PathBuf,
    /// Gram squaring passes of the rescaling; t = 1 is the row-sum rule.
    #[arg(long, default_value_t = 4)]
    t: usize,
    /// Layer kind stored in the file.
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Output path for the rescaled weights.
    #[arg(long)]
    out: PathBuf,
    /// Grid size at which the conv-mode result is oracle-checked.
    #[arg(long, default_value_t = 16)]
    check_n: usize,
    /// Relative gap for the verification oracle.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Power iteration budget of the verification oracle.
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    /// Cap on dense elements of the verification operator.
    #[arg(long, default_value_t = DEFAULT_ELEMENT_CAP)]
    max_elements: u128,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate(args) => commands::estimate(&args),
        Command::Oracle(args) => commands::oracle(&args),
        Command::Bench(args) => commands::bench(&args),
        Command::Factor(args) => commands::factor(&args),
        Command::Rescale(args) => commands::rescale(&args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
