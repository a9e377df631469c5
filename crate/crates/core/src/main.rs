//! Command-line front end: evolve configurations, compile circuits to tile
//! layouts, flatten block automata, audit the scattering table and tiles,
//! and render space-time output as text.
//!
//! Failures print one `error: <class>: ...` line and exit 1; flag mistakes
//! exit 2 (standard argument parsing). All output is deterministic for
//! fixed inputs, flags, and seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uqca::compiler::{
    decode_outputs, encode_inputs, layout_circuit, parse_circuit, CircuitInput,
};
use uqca::evolution::{StepOptions, Superposition};
use uqca::intrinsic::{
    check_direct_simulation, flatten_pqca, ReferencePQCA, DIRECT_SIMULATION_TOLERANCE,
};
use uqca::lattice::{Configuration, Coord, Parity};
use uqca::oracle::StateVector;
use uqca::scattering::{format_amplitude, ScatteringTable};
use uqca::tiles::{builtin_tiles, verify_tile};

#[derive(Parser)]
#[command(name = "uqca", version, about = "Universal partitioned quantum cellular automaton")]
struct Cli {
    /// Worker threads for branch expansion (default: all cores; results do
    /// not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a configuration file, reporting the final superposition.
    Run(RunArgs),
    /// Compile a circuit file into a tile layout.
    Compile(CompileArgs),
    /// Flatten a block automaton's circuit onto the universal lattice.
    Flatten(FlattenArgs),
    /// Audit the built-in scattering table.
    VerifyTable(VerifyTableArgs),
    /// Simulate every built-in tile against its gate matrix.
    VerifyTiles,
    /// Compare flattened block automata against their sparse references.
    CheckIntrinsic(CheckIntrinsicArgs),
    /// Dense reference register, without the lattice.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Evolve a configuration, printing one frame per step.
    Render(RenderArgs),
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Apply a circuit file to an input state and print the amplitudes.
    Run(OracleRunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ParityArg {
    Aligned,
    Shifted,
}

impl From<ParityArg> for Parity {
    fn from(p: ParityArg) -> Parity {
        match p {
            ParityArg::Aligned => Parity::Aligned,
            ParityArg::Shifted => Parity::Shifted,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RenderMode {
    None,
    Frames,
    Final,
}

#[derive(Args)]
struct StepFlags {
    /// Drop branches with |amplitude| below this
    /// (default 1e-12; env override UQCA_PRUNE).
    #[arg(long)]
    prune: Option<f64>,
    /// Refuse to grow past this many branches
    /// (default 1048576; env override UQCA_BRANCH_CAP).
    #[arg(long)]
    cap: Option<usize>,
}

impl StepFlags {
    fn options(&self) -> Result<StepOptions> {
        let mut opts = StepOptions::default();
        if let Some(prune) = self.prune.map(Ok).or_else(|| env_parse("UQCA_PRUNE")) {
            opts.prune_threshold = prune?;
        }
        if let Some(cap) = self.cap.map(Ok).or_else(|| env_parse("UQCA_BRANCH_CAP")) {
            opts.branch_cap = cap?;
        }
        if !(opts.prune_threshold > 0.0) {
            bail!("usage: prune threshold must be positive");
        }
        if opts.branch_cap == 0 {
            bail!("usage: branch cap must be positive");
        }
        Ok(opts)
    }
}

fn env_parse<T: std::str::FromStr>(name: &str) -> Option<Result<T>> {
    let value = std::env::var(name).ok()?;
    Some(
        value
            .parse::<T>()
            .map_err(|_| anyhow!("usage: {name}={value} is not a valid value")),
    )
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file in the grid text format.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    steps: u64,
    /// Partition used by the first step.
    #[arg(long, value_enum, default_value_t = ParityArg::Aligned)]
    parity: ParityArg,
    #[command(flatten)]
    step_flags: StepFlags,
    #[arg(long, value_enum, default_value_t = RenderMode::None)]
    render: RenderMode,
    /// Also write the final branches to this file.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Configuration file in the grid text format.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    steps: u64,
    /// Partition used by the first step.
    #[arg(long, value_enum, default_value_t = ParityArg::Aligned)]
    parity: ParityArg,
    #[command(flatten)]
    step_flags: StepFlags,
}

#[derive(Args)]
struct CompileArgs {
    /// Circuit file (`qubits <n>` header, one gate per line).
    #[arg(long)]
    circuit: PathBuf,
    /// Write the layout grid here instead of stdout.
    #[arg(long)]
    out_grid: Option<PathBuf>,
    /// Write the port manifest here instead of stdout.
    #[arg(long)]
    out_ports: Option<PathBuf>,
    /// Also run the layout on this basis input (a bit string like `10`)
    /// and print the decoded state.
    #[arg(long)]
    execute: Option<String>,
    #[command(flatten)]
    step_flags: StepFlags,
}

#[derive(Args)]
struct FlattenArgs {
    /// Block-unitary circuit file over 4 cell-qubits (NW, NE, SW, SE).
    #[arg(long)]
    v: PathBuf,
    /// Simulated region extent, e.g. 2x2.
    #[arg(long, default_value = "2x2")]
    region: String,
    /// Simulated steps to replay.
    #[arg(long, default_value_t = 1)]
    steps: u64,
    /// Write the layout grid here instead of stdout.
    #[arg(long)]
    out_grid: Option<PathBuf>,
    /// Write the port manifest here instead of stdout.
    #[arg(long)]
    out_ports: Option<PathBuf>,
    /// Write the lane/stage coding sidecar here instead of stdout.
    #[arg(long)]
    out_coding: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyTableArgs {
    /// Write every non-identity rule row to this file.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct CheckIntrinsicArgs {
    /// Block-unitary circuit file; default: built-in identity, in-block
    /// swap, and one-Hadamard circuits.
    #[arg(long)]
    v: Option<PathBuf>,
    /// Simulated region extent, e.g. 2x2.
    #[arg(long, default_value = "2x2")]
    region: String,
    /// Simulated step counts to check.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2])]
    steps: Vec<u64>,
    /// Random superposition inputs per case.
    #[arg(long, default_value_t = 3)]
    random_states: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct OracleRunArgs {
    /// Circuit file (`qubits <n>` header, one gate per line).
    #[arg(long)]
    circuit: PathBuf,
    /// Basis input as a bit string (default: all zeros).
    #[arg(long)]
    input: Option<String>,
    /// Use a seeded random input state instead of a basis input.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> ExitCode {
    // Die quietly when a pipe closes (e.g. `uqca render ... | head`),
    // matching the other text tools in a pipeline.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore failure: the pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => run_command(args),
        Command::Compile(args) => compile_command(args),
        Command::Flatten(args) => flatten_command(args),
        Command::VerifyTable(args) => verify_table_command(args),
        Command::VerifyTiles => verify_tiles_command(),
        Command::CheckIntrinsic(args) => check_intrinsic_command(args),
        Command::Oracle(OracleCommand::Run(args)) => oracle_run_command(args),
        Command::Render(args) => render_command(args),
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("io: reading {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("io: writing {}", path.display()))
}

fn load_configuration(path: &Path) -> Result<Configuration> {
    let text = read_file(path)?;
    Configuration::parse_grid(&text).map_err(|e| anyhow!("parse: {e}"))
}

/// One space-time frame: a legend row naming the partition the next step
/// will use and one of its block corner squares, then every branch.
fn frame(state: &Superposition) -> String {
    let parity = match state.parity {
        Parity::Aligned => "aligned",
        Parity::Shifted => "shifted",
    };
    let anchor = state
        .scenery()
        .bounds()
        .map(|(min, _)| min)
        .unwrap_or(Coord::new(0, 0));
    let origin = state.parity.block_origin(anchor);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "t={} parity={parity} block=({},{})..({},{})",
        state.time,
        origin.x,
        origin.y,
        origin.x + 1,
        origin.y + 1
    );
    out.push_str(&state.dump_branches());
    out
}

fn run_command(args: RunArgs) -> Result<()> {
    let opts = args.step_flags.options()?;
    let config = load_configuration(&args.input)?;
    let mut state = Superposition::basis_state(config, args.parity.into());
    if matches!(args.render, RenderMode::Frames) {
        print!("{}", frame(&state));
    }
    for _ in 0..args.steps {
        state = state.step(&opts).map_err(|e| anyhow!("integrity: {e}"))?;
        if matches!(args.render, RenderMode::Frames) {
            print!("{}", frame(&state));
        }
    }
    println!("time: {}", state.time);
    println!("branches: {}", state.branch_count());
    println!("norm: {:.12}", state.norm());
    if matches!(args.render, RenderMode::Final) {
        print!("{}", state.dump_branches());
    }
    if let Some(path) = args.dump {
        write_file(&path, &state.dump_branches())?;
    }
    Ok(())
}

fn render_command(args: RenderArgs) -> Result<()> {
    run_command(RunArgs {
        input: args.input,
        steps: args.steps,
        parity: args.parity,
        step_flags: args.step_flags,
        render: RenderMode::Frames,
        dump: None,
    })
}

fn parse_bits(bits: &str, qubits: usize) -> Result<Vec<u8>> {
    if bits.len() != qubits {
        bail!("usage: input `{bits}` must have {qubits} bits");
    }
    bits.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(anyhow!("usage: input bit `{c}` is not 0 or 1")),
        })
        .collect()
}

fn print_state(state: &StateVector) {
    let n = state.qubits();
    for (index, amp) in state.amplitudes().iter().enumerate() {
        let bits: String = (0..n)
            .map(|q| if (index >> (n - 1 - q)) & 1 == 1 { '1' } else { '0' })
            .collect();
        println!("{bits} {}", format_amplitude(*amp));
    }
    println!("norm: {:.12}", state.norm());
}

fn emit_or_print(label: &str, text: &str, path: Option<&PathBuf>) -> Result<()> {
    match path {
        Some(path) => write_file(path, text),
        None => {
            println!("{label}:");
            print!("{text}");
            Ok(())
        }
    }
}

fn compile_command(args: CompileArgs) -> Result<()> {
    let ir = parse_circuit(&read_file(&args.circuit)?).map_err(|e| anyhow!("parse: {e}"))?;
    let layout = layout_circuit(&ir).map_err(|e| anyhow!("layout: {e}"))?;
    println!("qubits: {}", layout.qubit_count);
    println!("layers: {}", layout.layer_count);
    println!("steps: {}", layout.total_steps);
    emit_or_print("ports", &layout.port_manifest(), args.out_ports.as_ref())?;
    emit_or_print("grid", &layout.grid_text(), args.out_grid.as_ref())?;
    if let Some(bits) = args.execute {
        let opts = args.step_flags.options()?;
        let input = CircuitInput::Basis(parse_bits(&bits, layout.qubit_count)?);
        let start = encode_inputs(&layout, &input).map_err(|e| anyhow!("layout: {e}"))?;
        let finished = start
            .run(layout.total_steps, &opts)
            .map_err(|e| anyhow!("integrity: {e}"))?
            .state;
        let decoded = decode_outputs(&layout, &finished).map_err(|e| anyhow!("integrity: {e}"))?;
        print_state(&decoded);
    }
    Ok(())
}

fn parse_region(extent: &str) -> Result<Vec<Coord>> {
    let (w, h) = extent
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("usage: region `{extent}` is not of the form WxH"))?;
    let parse = |s: &str| {
        s.parse::<i64>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| anyhow!("usage: region `{extent}` needs positive sizes"))
    };
    let (w, h) = (parse(w)?, parse(h)?);
    let mut cells = Vec::new();
    for y in (0..h).rev() {
        for x in 0..w {
            cells.push(Coord::new(x, y));
        }
    }
    Ok(cells)
}

fn flatten_command(args: FlattenArgs) -> Result<()> {
    let p = ReferencePQCA::from_text(&read_file(&args.v)?).map_err(|e| anyhow!("parse: {e}"))?;
    let region = parse_region(&args.region)?;
    let (layout, coding) =
        flatten_pqca(&p, &region, args.steps).map_err(|e| anyhow!("layout: {e}"))?;
    println!("lanes: {}", layout.qubit_count);
    println!("layers-per-step: {}", coding.layers_per_stage);
    println!("multiplier: {}", coding.step_multiplier);
    println!("steps: {}", layout.total_steps);
    emit_or_print("coding", &coding.manifest(), args.out_coding.as_ref())?;
    emit_or_print("ports", &layout.port_manifest(), args.out_ports.as_ref())?;
    emit_or_print("grid", &layout.grid_text(), args.out_grid.as_ref())?;
    Ok(())
}

fn verify_table_command(args: VerifyTableArgs) -> Result<()> {
    let table = ScatteringTable::shared();
    println!(
        "unitary: residual {:.1e}; rows: {}",
        table.unitarity_residual(),
        table.non_identity_count()
    );
    if let Some(path) = args.dump {
        write_file(&path, &table.dump())?;
    }
    Ok(())
}

fn verify_tiles_command() -> Result<()> {
    let mut failures = 0;
    for (gate, spec) in builtin_tiles() {
        let report = verify_tile(spec).map_err(|e| anyhow!("integrity: {e}"))?;
        let period = report
            .machinery_period
            .map_or("none".to_string(), |p| p.to_string());
        let verdict = if report.passes() { "ok" } else { "FAIL" };
        println!(
            "{}: gate-diff {:.2e}; residual {:.2e}; period {period}; {verdict}",
            gate.label(),
            report.gate_diff,
            report.max_residual.max(0.0),
        );
        if !report.passes() {
            failures += 1;
        }
    }
    if failures > 0 {
        bail!("verify: {failures} tile(s) failed");
    }
    Ok(())
}

fn builtin_block_circuits() -> Vec<(&'static str, &'static str)> {
    vec![
        ("identity", "qubits 4\nID 0\nID 1\nID 2\nID 3\n"),
        ("in-block-swap", "qubits 4\nSWAP 0 2\n"),
        ("one-hadamard", "qubits 4\nH 0\n"),
    ]
}

fn check_intrinsic_command(args: CheckIntrinsicArgs) -> Result<()> {
    let region = parse_region(&args.region)?;
    let mut circuits: Vec<(String, ReferencePQCA)> = Vec::new();
    match &args.v {
        Some(path) => {
            let p = ReferencePQCA::from_text(&read_file(path)?)
                .map_err(|e| anyhow!("parse: {e}"))?;
            circuits.push((path.display().to_string(), p));
        }
        None => {
            for (name, text) in builtin_block_circuits() {
                let p = ReferencePQCA::from_text(text).expect("builtin block circuits parse");
                circuits.push((name.to_string(), p));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut worst: f64 = 1.0;
    for (name, p) in &circuits {
        for &steps in &args.steps {
            let report =
                check_direct_simulation(p, &region, steps, args.random_states, &mut rng)
                    .map_err(|e| anyhow!("integrity: {e}"))?;
            println!(
                "{name} i={steps}: fidelity {:.9}; leaked {:.2e}; lanes {}; steps {}; cases {}",
                report.min_fidelity,
                report.max_leaked,
                report.lane_count,
                report.total_steps,
                report.cases,
            );
            worst = worst.min(report.min_fidelity);
        }
    }
    println!("minimum fidelity: {worst:.9}");
    if worst < 1.0 - DIRECT_SIMULATION_TOLERANCE {
        bail!("verify: fidelity {worst:.9} below 1-{DIRECT_SIMULATION_TOLERANCE:.0e}");
    }
    Ok(())
}

fn oracle_run_command(args: OracleRunArgs) -> Result<()> {
    let ir = parse_circuit(&read_file(&args.circuit)?).map_err(|e| anyhow!("parse: {e}"))?;
    let input = if args.random {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        StateVector::random(ir.qubit_count, &mut rng).map_err(|e| anyhow!("usage: {e}"))?
    } else {
        let bits = args.input.unwrap_or_else(|| "0".repeat(ir.qubit_count));
        let bits = parse_bits(&bits, ir.qubit_count)?;
        let index = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        StateVector::basis(ir.qubit_count, index).map_err(|e| anyhow!("usage: {e}"))?
    };
    let output = input
        .apply_all(&ir.flat_gates())
        .map_err(|e| anyhow!("integrity: {e}"))?;
    print_state(&output);
    Ok(())
}
