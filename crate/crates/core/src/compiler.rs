//! Circuit compiler: parse a gate list, schedule it into layers, route
//! multi-lane gates onto adjacent lanes with swap tiles, and place one gate
//! tile per lane per layer to produce an initial lattice configuration.
//!
//! Qubit `q` enters at lane `q` (port `q`·[`LANE_STEP`]); layer `k` sits at
//! offset `k`·[`TILE_DISPLACEMENT`]. Because every tile shares the timing
//! contract, the compiled machine is synchronous: all signals cross layer
//! boundaries together, every [`TILE_DURATION`] steps.
//!
//! Encoding writes the input state's bits onto the entry ports as signal
//! values; decoding reads the exit ports of every branch and checks the
//! leftover machinery (barriers and resident ancillas) is exactly restored.

use std::collections::BTreeSet;

use num_complex::Complex64;
use thiserror::Error;

use crate::evolution::{EvolutionError, Superposition};
use crate::lattice::{CellState, Configuration, Coord, Parity};
use crate::oracle::{GateOp, OracleError, StateVector};
use crate::tiles::{
    tile_for, TileGate, LANE_STEP, TILE_DISPLACEMENT, TILE_DURATION,
};

/// Largest stray probability mass tolerated when decoding.
pub const DECODE_LEAK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: qubit {qubit} out of range (circuit has {count})")]
    Range {
        line: usize,
        qubit: usize,
        count: usize,
    },
    #[error("gate {gate} targets qubit {qubit}, but the circuit has {count}")]
    GateRange {
        gate: String,
        qubit: usize,
        count: usize,
    },
    #[error("layout bug: {0}")]
    LayoutBug(String),
    #[error("input does not fit the layout: {0}")]
    Input(String),
    #[error("decode leakage {mass:.3e} exceeds {DECODE_LEAK_TOLERANCE:.0e}")]
    Leakage { mass: f64 },
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// A circuit as layers of gates; gates within a layer act on disjoint qubits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircuitIR {
    pub qubit_count: usize,
    pub layers: Vec<Vec<GateOp>>,
}

impl CircuitIR {
    /// Expand composites to primitives and schedule them greedily: each gate
    /// lands in the earliest layer after every earlier gate that shares a
    /// qubit with it.
    pub fn from_gates(qubit_count: usize, gates: &[GateOp]) -> Result<CircuitIR, CompileError> {
        let mut layers: Vec<Vec<GateOp>> = Vec::new();
        let mut next_free = vec![0usize; qubit_count];
        for gate in gates.iter().flat_map(GateOp::expand) {
            let targets = gate.targets();
            for &q in &targets {
                if q >= qubit_count {
                    return Err(CompileError::GateRange {
                        gate: gate.to_string(),
                        qubit: q,
                        count: qubit_count,
                    });
                }
            }
            if targets.len() == 2 && targets[0] == targets[1] {
                return Err(CompileError::GateRange {
                    gate: gate.to_string(),
                    qubit: targets[0],
                    count: qubit_count,
                });
            }
            let layer = targets.iter().map(|&q| next_free[q]).max().unwrap_or(0);
            if layer == layers.len() {
                layers.push(Vec::new());
            }
            layers[layer].push(gate);
            for &q in &targets {
                next_free[q] = layer + 1;
            }
        }
        Ok(CircuitIR {
            qubit_count,
            layers,
        })
    }

    /// Gates in execution order (layer by layer).
    pub fn flat_gates(&self) -> Vec<GateOp> {
        self.layers.iter().flatten().copied().collect()
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// True when every multi-qubit gate already sits on adjacent qubits and
    /// is directly expressible as a tile.
    pub fn is_tileable(&self) -> bool {
        self.layers.iter().flatten().all(|gate| {
            if !gate.is_primitive() {
                return false;
            }
            let t = gate.targets();
            t.len() == 1 || t[0].abs_diff(t[1]) == 1
        })
    }
}

/// Parse the circuit text format: a `qubits <n>` header, then one gate per
/// line (`H q`, `T q`, `ID q`, `SWAP a b`, `CP a b`, `CNOT a b`, `CZ a b`).
/// `#` starts a comment; blank lines are ignored. Composite gates expand to
/// the primitive set during scheduling.
pub fn parse_circuit(text: &str) -> Result<CircuitIR, CompileError> {
    let mut qubit_count: Option<usize> = None;
    let mut gates: Vec<(usize, GateOp)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let syntax = |message: String| CompileError::Syntax {
            line: line_no,
            message,
        };
        let qubit = |field: &str| {
            field
                .parse::<usize>()
                .map_err(|_| syntax(format!("bad qubit index `{field}`")))
        };
        if qubit_count.is_none() {
            match fields.as_slice() {
                ["qubits", n] => {
                    let n = n
                        .parse::<usize>()
                        .map_err(|_| syntax(format!("bad qubit count `{n}`")))?;
                    if n == 0 {
                        return Err(syntax("circuit needs at least one qubit".into()));
                    }
                    qubit_count = Some(n);
                    continue;
                }
                _ => return Err(syntax("expected `qubits <n>` header".into())),
            }
        }
        let gate = match fields.as_slice() {
            ["ID", q] => GateOp::Id(qubit(q)?),
            ["H", q] => GateOp::H(qubit(q)?),
            ["T", q] => GateOp::T(qubit(q)?),
            ["SWAP", a, b] => GateOp::Swap(qubit(a)?, qubit(b)?),
            ["CP", a, b] => GateOp::Cp(qubit(a)?, qubit(b)?),
            ["CNOT", a, b] => GateOp::Cnot {
                control: qubit(a)?,
                target: qubit(b)?,
            },
            ["CZ", a, b] => GateOp::Cz(qubit(a)?, qubit(b)?),
            [mnemonic, ..] => return Err(syntax(format!("unknown gate `{mnemonic}`"))),
            [] => unreachable!("blank lines are skipped"),
        };
        gates.push((line_no, gate));
    }
    let qubit_count =
        qubit_count.ok_or(CompileError::Syntax {
            line: text.lines().count().max(1),
            message: "missing `qubits <n>` header".into(),
        })?;
    for (line, gate) in &gates {
        let targets = gate.targets();
        for &q in &targets {
            if q >= qubit_count {
                return Err(CompileError::Range {
                    line: *line,
                    qubit: q,
                    count: qubit_count,
                });
            }
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(CompileError::Syntax {
                line: *line,
                message: format!("gate `{gate}` repeats a qubit"),
            });
        }
    }
    let gates: Vec<GateOp> = gates.into_iter().map(|(_, g)| g).collect();
    CircuitIR::from_gates(qubit_count, &gates)
}

/// Rewrite the circuit so every multi-qubit gate acts on adjacent qubits,
/// by conjugating with chains of adjacent swaps, then reschedule. Circuits
/// that are already tileable come back with their layer structure untouched,
/// so callers may pad layers deliberately.
pub fn route(ir: &CircuitIR) -> Result<CircuitIR, CompileError> {
    if ir.is_tileable() {
        return Ok(ir.clone());
    }
    let flat = ir.flat_gates();
    let expanded: Vec<GateOp> = flat.iter().flat_map(GateOp::expand).collect();
    let mut routed: Vec<GateOp> = Vec::new();
    let mut i = 0;
    while i < expanded.len() {
        let gate = expanded[i];
        let targets = gate.targets();
        if targets.len() < 2 || targets[0].abs_diff(targets[1]) == 1 {
            routed.push(gate);
            i += 1;
            continue;
        }
        let set: BTreeSet<usize> = targets.iter().copied().collect();
        let mut run = vec![gate];
        while i + 1 < expanded.len() {
            let next = expanded[i + 1];
            let next_set: BTreeSet<usize> =
                next.targets().iter().copied().collect();
            if next_set == set {
                run.push(next);
                i += 1;
            } else {
                break;
            }
        }
        let (lo, hi) = (*set.iter().next().unwrap(), *set.iter().last().unwrap());
        // Walk the upper operand down next to the lower one, apply the run
        // on the adjacent pair, then walk it back.
        let chain: Vec<GateOp> = ((lo + 1)..hi).rev().map(|l| GateOp::Swap(l, l + 1)).collect();
        routed.extend(chain.iter().copied());
        for g in &run {
            routed.push(g.retarget(|q| if q == hi { lo + 1 } else { q }));
        }
        routed.extend(chain.iter().rev().copied());
        i += 1;
    }
    CircuitIR::from_gates(ir.qubit_count, &routed)
}

/// A placed circuit: the lattice machinery plus its ports and timing.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledLayout {
    pub qubit_count: usize,
    pub layer_count: usize,
    /// Barriers and resident ancilla signals of every placed tile.
    pub config: Configuration,
    pub in_ports: Vec<Coord>,
    pub out_ports: Vec<Coord>,
    pub total_steps: u64,
    pub entry_parity: Parity,
}

fn tile_assignment(gate: GateOp) -> Result<(TileGate, usize), CompileError> {
    Ok(match gate {
        GateOp::Id(q) => (TileGate::Identity, q),
        GateOp::H(q) => (TileGate::Hadamard, q),
        GateOp::T(q) => (TileGate::Phase, q),
        GateOp::Swap(a, b) => (TileGate::Swap, a.min(b)),
        GateOp::Cp(a, b) => (TileGate::ControlledPhase, a.min(b)),
        composite => {
            return Err(CompileError::LayoutBug(format!(
                "composite gate `{composite}` reached placement"
            )))
        }
    })
}

/// Route `ir` and place one tile per lane per layer.
pub fn layout_circuit(ir: &CircuitIR) -> Result<CompiledLayout, CompileError> {
    let routed = route(ir)?;
    let lanes = routed.qubit_count;

    let mut config = Configuration::new();
    let mut expected_cells = 0usize;
    for (layer, gates) in routed.layers.iter().enumerate() {
        let mut tiles: Vec<(TileGate, usize)> = Vec::new();
        let mut covered = vec![false; lanes];
        for gate in gates {
            let (tile, anchor) = tile_assignment(*gate)?;
            for lane in anchor..anchor + tile.lanes() {
                if covered[lane] {
                    return Err(CompileError::LayoutBug(format!(
                        "layer {layer} places two tiles on lane {lane}"
                    )));
                }
                covered[lane] = true;
            }
            tiles.push((tile, anchor));
        }
        for lane in 0..lanes {
            if !covered[lane] {
                tiles.push((TileGate::Identity, lane));
            }
        }
        for (tile, anchor) in tiles {
            let spec = tile_for(tile).translated(
                anchor as i64 * LANE_STEP.0 + layer as i64 * TILE_DISPLACEMENT.0,
                anchor as i64 * LANE_STEP.1 + layer as i64 * TILE_DISPLACEMENT.1,
            );
            expected_cells += spec.scenery.len();
            config = config.overlay(&spec.scenery);
        }
    }
    if config.len() != expected_cells {
        return Err(CompileError::LayoutBug(
            "placed tiles overlap".into(),
        ));
    }

    let layer_count = routed.layers.len();
    let in_ports: Vec<Coord> = (0..lanes)
        .map(|q| Coord::new(q as i64 * LANE_STEP.0, q as i64 * LANE_STEP.1))
        .collect();
    let out_ports: Vec<Coord> = in_ports
        .iter()
        .map(|p| {
            p.offset(
                layer_count as i64 * TILE_DISPLACEMENT.0,
                layer_count as i64 * TILE_DISPLACEMENT.1,
            )
        })
        .collect();
    Ok(CompiledLayout {
        qubit_count: lanes,
        layer_count,
        config,
        in_ports,
        out_ports,
        total_steps: layer_count as u64 * TILE_DURATION,
        entry_parity: Parity::Aligned,
    })
}

impl CompiledLayout {
    /// Port/timing sidecar: `inport q x y`, `outport q x y`, `steps`,
    /// `parity` lines.
    pub fn port_manifest(&self) -> String {
        let mut out = String::new();
        for (q, p) in self.in_ports.iter().enumerate() {
            out.push_str(&format!("inport {q} {} {}\n", p.x, p.y));
        }
        for (q, p) in self.out_ports.iter().enumerate() {
            out.push_str(&format!("outport {q} {} {}\n", p.x, p.y));
        }
        out.push_str(&format!("steps {}\n", self.total_steps));
        out.push_str(match self.entry_parity {
            Parity::Aligned => "parity aligned\n",
            Parity::Shifted => "parity shifted\n",
        });
        out
    }

    /// The machinery configuration in the grid text format.
    pub fn grid_text(&self) -> String {
        self.config.to_grid()
    }
}

/// What to feed a compiled circuit.
#[derive(Clone, Debug)]
pub enum CircuitInput {
    /// One classical bit per qubit.
    Basis(Vec<u8>),
    /// An arbitrary state; each basis component becomes a branch.
    State(StateVector),
}

fn signal_for_bit(bit: usize) -> CellState {
    if bit == 0 {
        CellState::Sig0
    } else {
        CellState::Sig1
    }
}

/// Place the input on the layout's entry ports.
///
/// Qubit `q` is the `q`-th most significant bit of a basis index, matching
/// the dense reference convention.
pub fn encode_inputs(
    layout: &CompiledLayout,
    input: &CircuitInput,
) -> Result<Superposition, CompileError> {
    let n = layout.qubit_count;
    let config_for_index = |index: usize| {
        let mut config = layout.config.clone();
        for (q, port) in layout.in_ports.iter().enumerate() {
            config.set(*port, signal_for_bit((index >> (n - 1 - q)) & 1));
        }
        config
    };
    match input {
        CircuitInput::Basis(bits) => {
            if bits.len() != n {
                return Err(CompileError::Input(format!(
                    "{} bits for {n} qubits",
                    bits.len()
                )));
            }
            if let Some(bad) = bits.iter().find(|b| **b > 1) {
                return Err(CompileError::Input(format!("bit value {bad}")));
            }
            let index = bits
                .iter()
                .fold(0usize, |acc, &b| (acc << 1) | b as usize);
            Ok(Superposition::basis_state(
                config_for_index(index),
                layout.entry_parity,
            ))
        }
        CircuitInput::State(state) => {
            if state.qubits() != n {
                return Err(CompileError::Input(format!(
                    "state over {} qubits for a {n}-qubit layout",
                    state.qubits()
                )));
            }
            let branches = state
                .amplitudes()
                .iter()
                .enumerate()
                .map(|(index, amp)| (config_for_index(index), *amp));
            Ok(Superposition::from_weighted(branches, layout.entry_parity)?)
        }
    }
}

/// Exit-port contents of a finished run.
#[derive(Clone, Debug)]
pub struct ReadOut {
    pub qubit_count: usize,
    /// Amplitude per basis index (qubit 0 most significant).
    pub amplitudes: Vec<Complex64>,
    /// Probability mass in branches whose signals were off-port or whose
    /// machinery was not restored.
    pub leaked_mass: f64,
}

/// Read the exit ports of every branch, insisting the rest of each branch is
/// exactly the resident machinery.
pub fn read_out_ports(layout: &CompiledLayout, state: &Superposition) -> ReadOut {
    let n = layout.qubit_count;
    let (barriers, resident) = layout.config.partition_signals();
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n];
    let mut leaked_mass = 0.0;
    if *state.scenery() != barriers {
        return ReadOut {
            qubit_count: n,
            amplitudes,
            leaked_mass: state.norm().powi(2),
        };
    }
    'branches: for (signals, amp) in state.signal_branches() {
        let mut residue = signals.clone();
        let mut index = 0usize;
        for port in &layout.out_ports {
            let bit = match residue.get(*port) {
                CellState::Sig0 => 0,
                CellState::Sig1 => 1,
                _ => {
                    leaked_mass += amp.norm_sqr();
                    continue 'branches;
                }
            };
            index = (index << 1) | bit;
            residue.set(*port, CellState::Empty);
        }
        if residue == resident {
            amplitudes[index] += amp;
        } else {
            leaked_mass += amp.norm_sqr();
        }
    }
    ReadOut {
        qubit_count: n,
        amplitudes,
        leaked_mass,
    }
}

/// Reconstitute a dense state from the exit ports, failing on leakage.
pub fn decode_outputs(
    layout: &CompiledLayout,
    state: &Superposition,
) -> Result<StateVector, CompileError> {
    let read = read_out_ports(layout, state);
    if read.leaked_mass > DECODE_LEAK_TOLERANCE {
        return Err(CompileError::Leakage {
            mass: read.leaked_mass,
        });
    }
    Ok(StateVector::from_amplitudes(
        read.qubit_count,
        read.amplitudes,
    )?)
}
