//! Subcommands of the `qtape` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use qtape::compile::Pipeline;
use qtape::gradients::{
    adaptive_fd_experiment, batch_gradient, fd_experiment_exact, gradient, DiffMethod, FdExperiment, GradientResult,
    StepMode,
};
use qtape::mitigation::{
    executor_provider, learn_noise, unitary_folding, zne, InsertPolicy, InsertPosition, NoisyExecutor,
};
use qtape::sim::{simulate, SimState};
use qtape::{Backend, Device, Executor, GateKind, Shots, Tape};

use crate::draw::draw;
use crate::format::{parse_circuit, serialize_circuit};
use crate::specs::specs;
use crate::{fmt_num, fmt_vec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or flag values; exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Unreadable or invalid circuit files and failed computations; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<qtape::Error> for CliError {
    fn from(e: qtape::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<qtape::SimError> for CliError {
    fn from(e: qtape::SimError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "qtape", version, about = "Differentiable quantum tapes: run, differentiate, compile and mitigate circuits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a circuit and print its results.
    Run(RunArgs),
    /// Print the value, jacobian and number of device executions.
    Grad(GradArgs),
    /// Apply a pass pipeline and write the compiled circuit.
    Compile(CompileArgs),
    /// Zero-noise extrapolation under an inserted noise model.
    Zne(ZneArgs),
    /// Learn per-wire depolarizing strengths from a simulated noisy device.
    LearnNoise(LearnArgs),
    /// Draw a circuit as text.
    Draw(DrawArgs),
    /// Report gate counts, trainable parameters and depth.
    Specs(SpecsArgs),
    /// Gradient descent with single-shot finite differences, printing the trace.
    FdExperiment(FdArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Sv,
    Dm,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Comma-separated circuit inputs.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, allow_negative_numbers = true)]
    pub inputs: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct DeviceArgs {
    /// Simulator backend; defaults to `dm` for circuits with channels, else `sv`.
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    /// Number of shots; exact expectation values when absent.
    #[arg(long, conflicts_with = "shot_batches")]
    pub shots: Option<usize>,
    /// `shots,batches` pairs; one result row per batch.
    #[arg(long, value_delimiter = ',')]
    pub shot_batches: Option<Vec<usize>>,
    /// Seed of the shot sampler.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub file: PathBuf,
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub device: DeviceArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Shift,
    Fd,
}

#[derive(Debug, Args)]
pub struct GradArgs {
    pub file: PathBuf,
    #[command(flatten)]
    pub inputs: InputArgs,
    #[arg(long, value_enum, default_value = "shift")]
    pub method: MethodArg,
    /// Forward-difference step for `--method fd`.
    #[arg(long, default_value_t = 1e-6)]
    pub h: f64,
    #[command(flatten)]
    pub device: DeviceArgs,
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    pub file: PathBuf,
    /// `pass[:option],...`; the default pipeline when absent.
    #[arg(long)]
    pub pipeline: Option<String>,
    /// Output file; standard output when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Check that the compiled circuit prepares the same state up to a global phase.
    #[arg(long)]
    pub verify: bool,
    /// Inputs used by `--verify`; a fixed set of points when absent.
    #[command(flatten)]
    pub inputs: InputArgs,
}

#[derive(Debug, Args)]
pub struct ZneArgs {
    pub file: PathBuf,
    #[command(flatten)]
    pub inputs: InputArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9")]
    pub scales: Vec<f64>,
    /// `depolarizing:p` or `amplitude:g`, inserted after every gate.
    #[arg(long)]
    pub noise: Option<String>,
    /// Also print the jacobian of the mitigated value.
    #[arg(long)]
    pub grad: bool,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// Channel-free template circuit.
    pub file: PathBuf,
    #[command(flatten)]
    pub inputs: InputArgs,
    /// True per-wire depolarizing strengths of the simulated device.
    #[arg(long = "true", value_delimiter = ',', required = true)]
    pub truth: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub init: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.05)]
    pub stepsize: f64,
    /// Shots per device call; exact expectation values when absent.
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DrawArgs {
    pub file: PathBuf,
    #[command(flatten)]
    pub inputs: InputArgs,
}

#[derive(Debug, Args)]
pub struct SpecsArgs {
    pub file: PathBuf,
    /// Count each Rot as three layers of depth.
    #[arg(long)]
    pub expand_rot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Adaptive,
    Fixed,
}

#[derive(Debug, Args)]
pub struct FdArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub iters: usize,
    #[arg(long, value_enum, default_value = "adaptive")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1000)]
    pub shots: usize,
}

fn load(path: &Path) -> Result<Tape, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    parse_circuit(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn check_inputs(tape: &Tape, inputs: &[f64]) -> CmdResult {
    if inputs.len() != tape.num_inputs() {
        return Err(CliError::Usage(format!(
            "the circuit takes {} input(s) but --inputs gave {}",
            tape.num_inputs(),
            inputs.len()
        )));
    }
    Ok(())
}

/// The device described by the flags for `tape`.
pub fn build_device(tape: &Tape, args: &DeviceArgs) -> Result<Device, CliError> {
    let backend = match args.backend {
        Some(BackendArg::Sv) => Backend::Statevector,
        Some(BackendArg::Dm) => Backend::DensityMatrix,
        None if tape.has_channels() => Backend::DensityMatrix,
        None => Backend::Statevector,
    };
    let shots = match (&args.shots, &args.shot_batches) {
        (Some(n), _) => Shots::Shots(*n),
        (None, Some(pairs)) => {
            if pairs.is_empty() || pairs.len() % 2 != 0 {
                return Err(CliError::Usage("--shot-batches takes shots,batches pairs".into()));
            }
            Shots::ShotBatches(pairs.chunks(2).map(|c| (c[0], c[1])).collect())
        }
        (None, None) => Shots::Exact,
    };
    Ok(Device::new(backend, tape.num_wires()).with_shots(shots).with_seed(args.seed))
}

fn write_jacobian(out: &mut dyn Write, g: &GradientResult) -> std::io::Result<()> {
    let rows: Vec<String> = g.jacobian.iter().map(|r| fmt_vec(r)).collect();
    writeln!(out, "jacobian: [{}]", rows.join(", "))
}

/// Runs a parsed command line, writing results to `out` and notes to `err`.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match cli.command {
        Command::Run(a) => run(a, out),
        Command::Grad(a) => grad(a, out),
        Command::Compile(a) => compile(a, out, err),
        Command::Zne(a) => zne_cmd(a, out),
        Command::LearnNoise(a) => learn(a, out),
        Command::Draw(a) => {
            let tape = load(&a.file)?;
            check_inputs(&tape, &a.inputs.inputs)?;
            writeln!(out, "{}", draw(&tape, &a.inputs.inputs))?;
            Ok(())
        }
        Command::Specs(a) => {
            writeln!(out, "{}", specs(&load(&a.file)?, a.expand_rot))?;
            Ok(())
        }
        Command::FdExperiment(a) => fd_experiment(a, out),
    }
}

fn run(a: RunArgs, out: &mut dyn Write) -> CmdResult {
    let tape = load(&a.file)?;
    check_inputs(&tape, &a.inputs.inputs)?;
    let dev = build_device(&tape, &a.device)?;
    for row in dev.execute_rows(&tape, &a.inputs.inputs)? {
        writeln!(out, "{}", fmt_vec(&row))?;
    }
    Ok(())
}

fn grad(a: GradArgs, out: &mut dyn Write) -> CmdResult {
    let tape = load(&a.file)?;
    check_inputs(&tape, &a.inputs.inputs)?;
    let dev = build_device(&tape, &a.device)?;
    let method = match a.method {
        MethodArg::Shift => DiffMethod::ParamShift,
        MethodArg::Fd => DiffMethod::FiniteDiff(a.h),
    };
    let g = gradient(&dev, &tape, &a.inputs.inputs, method)?;
    writeln!(out, "value: {}", fmt_vec(&g.value))?;
    write_jacobian(out, &g)?;
    writeln!(out, "executions: {}", g.executions_used)?;
    Ok(())
}

/// Quasi-random points in `[-π, π)^n` used when `--verify` has no inputs.
fn probe_points(n: usize) -> Vec<Vec<f64>> {
    let tau = std::f64::consts::TAU;
    (1..=3)
        .map(|k| (0..n).map(|i| ((k as f64 * 0.754_877_666 + i as f64 * 0.569_840_291) % 1.0) * tau - tau / 2.0).collect())
        .collect()
}

/// Largest entry deviation between two states, up to a global phase for
/// pure states.
pub fn state_distance(a: &SimState, b: &SimState) -> f64 {
    match (a, b) {
        (SimState::Pure { amplitudes: x, .. }, SimState::Pure { amplitudes: y, .. }) => {
            let k = (0..x.len()).max_by(|&i, &j| x[i].norm().total_cmp(&x[j].norm())).unwrap_or(0);
            let phase = if y[k].norm() > 0.0 { x[k] / y[k] } else { 1.0.into() };
            let phase = phase / phase.norm();
            x.iter().zip(y).map(|(p, q)| (p - phase * q).norm()).fold(0.0, f64::max)
        }
        (SimState::Mixed { rho: x, .. }, SimState::Mixed { rho: y, .. }) => {
            x.iter().zip(y).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
        }
        _ => f64::INFINITY,
    }
}

fn compile(a: CompileArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let tape = load(&a.file)?;
    let pipeline = match &a.pipeline {
        Some(spec) => Pipeline::parse(spec).map_err(|e| CliError::Usage(e.to_string()))?,
        None => Pipeline::default_pipeline(),
    };
    let compiled = pipeline.run(&tape)?;
    if a.verify {
        let points = if a.inputs.inputs.is_empty() && tape.num_inputs() > 0 {
            probe_points(tape.num_inputs())
        } else {
            check_inputs(&tape, &a.inputs.inputs)?;
            vec![a.inputs.inputs.clone()]
        };
        let backend = if tape.has_channels() { Backend::DensityMatrix } else { Backend::Statevector };
        let mut worst = 0.0f64;
        for x in &points {
            let d = state_distance(&simulate(backend, &tape, x)?, &simulate(backend, &compiled, x)?);
            worst = worst.max(d);
        }
        if !(worst <= 1e-9) {
            return Err(CliError::Runtime(format!(
                "verification failed: states differ by {}",
                fmt_num(worst)
            )));
        }
        writeln!(err, "verified at {} point(s), max deviation {}", points.len(), fmt_num(worst))?;
    }
    let text = serialize_circuit(&compiled);
    match &a.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Parses `depolarizing:p` or `amplitude:g`.
pub fn parse_noise(spec: &str) -> Result<InsertPolicy, CliError> {
    let (name, value) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("noise must look like depolarizing:p or amplitude:g, got {spec:?}")))?;
    let channel = match name.trim() {
        "depolarizing" => GateKind::DepolarizingChannel,
        "amplitude" => GateKind::AmplitudeDamping,
        other => return Err(CliError::Usage(format!("unknown noise model {other:?}"))),
    };
    let p: f64 = value.trim().parse().map_err(|_| CliError::Usage(format!("bad noise strength {value:?}")))?;
    InsertPolicy::new(channel, p, InsertPosition::AfterEachGate).map_err(|e| CliError::Usage(e.to_string()))
}

fn zne_cmd(a: ZneArgs, out: &mut dyn Write) -> CmdResult {
    let tape = load(&a.file)?;
    check_inputs(&tape, &a.inputs.inputs)?;
    let policy = match &a.noise {
        Some(spec) => parse_noise(spec)?,
        None => InsertPolicy::new(GateKind::DepolarizingChannel, 0.0, InsertPosition::End)?,
    };
    let exec = NoisyExecutor::new(Device::density_matrix(tape.num_wires()), policy, None);
    let batch = zne(&tape, unitary_folding, &a.scales).map_err(|e| CliError::Usage(e.to_string()))?;
    let x = &a.inputs.inputs;
    let rows = exec.execute_batch(&batch.tapes, x)?;
    for (scale, row) in a.scales.iter().zip(&rows) {
        writeln!(out, "scale {}: {}", fmt_num(*scale), fmt_vec(row))?;
    }
    writeln!(out, "mitigated: {}", fmt_vec(&batch.apply(&rows, x)?))?;
    if a.grad {
        let g = batch_gradient(&exec, &batch, x, DiffMethod::ParamShift)?;
        write_jacobian(out, &g)?;
    }
    Ok(())
}

fn learn(a: LearnArgs, out: &mut dyn Write) -> CmdResult {
    let tape = load(&a.file)?;
    check_inputs(&tape, &a.inputs.inputs)?;
    if a.truth.len() != tape.num_wires() {
        return Err(CliError::Usage(format!("--true needs one value per wire ({})", tape.num_wires())));
    }
    let policy = InsertPolicy::new(GateKind::DepolarizingChannel, 0.0, InsertPosition::AfterSingleQubitGates)?;
    let shots = a.shots.map_or(Shots::Exact, Shots::Shots);
    let device = Device::density_matrix(tape.num_wires()).with_shots(shots).with_seed(a.seed);
    let truth = NoisyExecutor::new(device, policy, Some(a.truth.clone()));
    let mut provider = executor_provider(&truth, &tape, &a.inputs.inputs);
    let learned = learn_noise(&tape, &a.inputs.inputs, &mut provider, &a.init, a.iters, a.stepsize)?;
    writeln!(out, "learned: {}", fmt_vec(&learned.params))?;
    writeln!(out, "cost: {}", fmt_num(learned.cost))?;
    Ok(())
}

fn fd_experiment(a: FdArgs, out: &mut dyn Write) -> CmdResult {
    let mode = match a.mode {
        ModeArg::Adaptive => StepMode::Adaptive,
        ModeArg::Fixed => StepMode::Fixed,
    };
    let cfg = FdExperiment { seed: a.seed, iters: a.iters, shots: a.shots, mode, ..Default::default() };
    let trace = adaptive_fd_experiment(&cfg)?;
    writeln!(out, "iteration h x cost")?;
    for (i, p) in trace.iter().enumerate() {
        writeln!(out, "{i} {} {} {}", fmt_num(p.h), fmt_num(p.x), fmt_num(p.cost))?;
    }
    let last = trace.last().expect("trace holds the initial point");
    writeln!(out, "final exact cost: {}", fmt_num(fd_experiment_exact(last.x)?))?;
    Ok(())
}
