//! Intrinsic simulation: run another block automaton on the universal
//! lattice by compiling its block unitary into gate tiles.
//!
//! The simulated automaton has one qubit per cell (quiescent symbol |0>) and
//! applies a four-cell unitary `V` — given as a circuit over the tile gate
//! set, acting on each 2x2 block's cells in NW, NE, SW, SE order — with the
//! block partition alternating every step, exactly like the universal
//! automaton. Runs are finite: step `s` applies `V` to the blocks meeting
//! the light cone of the initial region, and the reference and flattened
//! machines use the same block schedule.
//!
//! Flattening gives every reachable simulated cell a lane, replays each
//! simulated step as that step's retargeted `V` circuits, and pads every
//! step to a common layer count, so one simulated step always costs
//! [`IsometricCoding::step_multiplier`] universal steps. Encoding writes a
//! cell's qubit onto its lane's signal value; decoding reads it back and
//! insists the machinery is restored.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::compiler::{
    layout_circuit, read_out_ports, route, CircuitIR, CompileError, CompiledLayout,
};
use crate::evolution::{EvolutionError, StepOptions, Superposition};
use crate::lattice::{CellState, Configuration, Coord, Parity};
use crate::oracle::{circuit_unitary, OracleError, StateVector};
use crate::tiles::TILE_DURATION;

/// Most lanes a flattening may allocate (a 4x4 simulated patch).
pub const MAX_LANES: usize = 16;

/// Most simulated steps a flattening may replay.
pub const MAX_SIM_STEPS: u64 = 4;

/// Simulated cells per supercell side in the induced grouping.
pub const SUPERCELL_SIZE: i64 = 2;

/// Branch amplitudes below this are dropped by the reference automaton,
/// matching the universal evolution's pruning threshold.
pub const SIM_PRUNE_EPSILON: f64 = 1e-12;

/// A flattened run must reproduce the reference automaton with at least
/// `1 -` this fidelity.
pub const DIRECT_SIMULATION_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum IntrinsicError {
    #[error("block circuit must act on exactly 4 cell-qubits, got {qubits}")]
    BadBlockCircuit { qubits: usize },
    #[error("state covers {qubits} qubits but {cells} cells were named")]
    CellCountMismatch { qubits: usize, cells: usize },
    #[error("cell ({x}, {y}) has no lane in this flattening")]
    CellOutsideCoding { x: i64, y: i64 },
    #[error("flattening needs {needed} lanes; the resource cap is {MAX_LANES}")]
    TooManyLanes { needed: usize },
    #[error("{steps} simulated steps exceed the resource cap {MAX_SIM_STEPS}")]
    TooManySteps { steps: u64 },
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}

/// The automaton to simulate: its block unitary as a circuit on four
/// cell-qubits.
#[derive(Clone, Debug)]
pub struct ReferencePQCA {
    v_circuit: CircuitIR,
    v_matrix: Vec<Complex64>,
}

impl ReferencePQCA {
    pub fn new(v_circuit: CircuitIR) -> Result<Self, IntrinsicError> {
        if v_circuit.qubit_count != 4 {
            return Err(IntrinsicError::BadBlockCircuit {
                qubits: v_circuit.qubit_count,
            });
        }
        let v_matrix = circuit_unitary(&v_circuit.flat_gates(), 4)?;
        Ok(ReferencePQCA { v_circuit, v_matrix })
    }

    /// Parse the block circuit from the circuit text format.
    pub fn from_text(text: &str) -> Result<Self, IntrinsicError> {
        Self::new(crate::compiler::parse_circuit(text)?)
    }

    pub fn circuit(&self) -> &CircuitIR {
        &self.v_circuit
    }

    /// The 16x16 block unitary, row-major, NW cell most significant.
    pub fn matrix(&self) -> &[Complex64] {
        &self.v_matrix
    }

    /// Whether `V` fixes the all-quiescent block, so finite active regions
    /// agree with the infinite quiescent background.
    pub fn preserves_quiescence(&self) -> bool {
        (self.v_matrix[0] - Complex64::new(1.0, 0.0)).norm() < 1e-9
    }
}

/// Cells of the simulated block at `origin`, in circuit-qubit order
/// (NW, NE, SW, SE). As on the universal lattice, the origin is the SW cell.
pub fn block_cells(origin: Coord) -> [Coord; 4] {
    [
        origin.offset(0, 1),
        origin.offset(1, 1),
        origin,
        origin.offset(1, 0),
    ]
}

/// Block origins applied at each simulated step (1-based), following the
/// light cone of `region`: a step's blocks are those meeting the support so
/// far, and their cells become the next support.
pub fn stage_blocks(region: &[Coord], steps: u64) -> Vec<Vec<Coord>> {
    let mut support: BTreeSet<Coord> = region.iter().copied().collect();
    let mut stages = Vec::new();
    for step in 1..=steps {
        let parity = Parity::for_step(step);
        let origins: BTreeSet<Coord> =
            support.iter().map(|c| parity.block_origin(*c)).collect();
        support = origins.iter().flat_map(|o| block_cells(*o)).collect();
        stages.push(origins.into_iter().collect());
    }
    stages
}

/// A superposition over simulated basis configurations; each basis
/// configuration is the set of cells in |1>, everything else quiescent.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SimState {
    branches: BTreeMap<BTreeSet<Coord>, Complex64>,
}

impl SimState {
    /// The basis state with exactly `ones` in |1>.
    pub fn basis(ones: impl IntoIterator<Item = Coord>) -> SimState {
        let mut branches = BTreeMap::new();
        branches.insert(ones.into_iter().collect(), Complex64::new(1.0, 0.0));
        SimState { branches }
    }

    /// Spread a dense state over `cells` (qubit `q` is `cells[q]`, most
    /// significant first).
    pub fn from_state_vector(
        cells: &[Coord],
        state: &StateVector,
    ) -> Result<SimState, IntrinsicError> {
        let n = state.qubits();
        if n != cells.len() {
            return Err(IntrinsicError::CellCountMismatch {
                qubits: n,
                cells: cells.len(),
            });
        }
        let mut branches = BTreeMap::new();
        for (index, amp) in state.amplitudes().iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let ones: BTreeSet<Coord> = cells
                .iter()
                .enumerate()
                .filter(|(q, _)| (index >> (n - 1 - q)) & 1 == 1)
                .map(|(_, c)| *c)
                .collect();
            branches.insert(ones, *amp);
        }
        Ok(SimState { branches })
    }

    pub fn branches(
        &self,
    ) -> impl Iterator<Item = (&BTreeSet<Coord>, Complex64)> + '_ {
        self.branches.iter().map(|(ones, amp)| (ones, *amp))
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn norm(&self) -> f64 {
        self.branches
            .values()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn inner(&self, other: &SimState) -> Complex64 {
        let (small, large) = if self.branches.len() <= other.branches.len() {
            (&self.branches, &other.branches)
        } else {
            (&other.branches, &self.branches)
        };
        let mut sum = Complex64::new(0.0, 0.0);
        for (ones, a) in small {
            if let Some(b) = large.get(ones) {
                // Conjugation order is irrelevant to the fidelity below.
                sum += a.conj() * b;
            }
        }
        sum
    }

    pub fn fidelity(&self, other: &SimState) -> f64 {
        self.inner(other).norm_sqr()
    }
}

/// One simulated step: apply `V` to each listed (pairwise disjoint) block.
pub fn reference_step(p: &ReferencePQCA, state: &SimState, blocks: &[Coord]) -> SimState {
    let v = p.matrix();
    let mut current = state.clone();
    for origin in blocks {
        let cells = block_cells(*origin);
        let mut next: BTreeMap<BTreeSet<Coord>, Complex64> = BTreeMap::new();
        for (ones, amp) in &current.branches {
            let mut input = 0usize;
            for (k, cell) in cells.iter().enumerate() {
                if ones.contains(cell) {
                    input |= 1 << (3 - k);
                }
            }
            for out in 0..16 {
                let weight = v[out * 16 + input];
                if weight.norm_sqr() == 0.0 {
                    continue;
                }
                let mut set = ones.clone();
                for (k, cell) in cells.iter().enumerate() {
                    if (out >> (3 - k)) & 1 == 1 {
                        set.insert(*cell);
                    } else {
                        set.remove(cell);
                    }
                }
                *next.entry(set).or_insert(Complex64::new(0.0, 0.0)) += amp * weight;
            }
        }
        next.retain(|_, a| a.norm() >= SIM_PRUNE_EPSILON);
        current = SimState { branches: next };
    }
    current
}

/// Run the reference automaton through the given block schedule.
pub fn reference_run(
    p: &ReferencePQCA,
    state: &SimState,
    stages: &[Vec<Coord>],
) -> SimState {
    stages
        .iter()
        .fold(state.clone(), |s, blocks| reference_step(p, &s, blocks))
}

/// How simulated cells map onto universal lanes, plus the grouping
/// economics: supercells of [`SUPERCELL_SIZE`] simulated cells per side
/// advance one simulated step every `step_multiplier` universal steps.
#[derive(Clone, Debug)]
pub struct IsometricCoding {
    /// Simulated cells in lane order (canonical: y descending, x ascending).
    pub cells: Vec<Coord>,
    /// The block schedule shared by the reference and flattened machines.
    pub stage_blocks: Vec<Vec<Coord>>,
    /// Universal steps per simulated step.
    pub step_multiplier: u64,
    pub layers_per_stage: usize,
}

impl IsometricCoding {
    pub fn lane_of(&self, cell: Coord) -> Option<usize> {
        self.cells.binary_search(&cell).ok()
    }

    /// Sidecar text: one `lane i x y` line per lane, then the per-step block
    /// origins and the step multiplier.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for (lane, cell) in self.cells.iter().enumerate() {
            out.push_str(&format!("lane {lane} {} {}\n", cell.x, cell.y));
        }
        for (step, blocks) in self.stage_blocks.iter().enumerate() {
            let origins = blocks
                .iter()
                .map(|o| format!("{} {}", o.x, o.y))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!("stage {} {origins}\n", step + 1));
        }
        out.push_str(&format!("multiplier {}\n", self.step_multiplier));
        out
    }
}

/// Compile `sim_steps` steps of the simulated automaton into one tile
/// layout: a lane per reachable cell, each step's block circuits retargeted
/// to their lanes, routed, and padded to a uniform per-step layer count.
pub fn flatten_pqca(
    p: &ReferencePQCA,
    region: &[Coord],
    sim_steps: u64,
) -> Result<(CompiledLayout, IsometricCoding), IntrinsicError> {
    if sim_steps > MAX_SIM_STEPS {
        return Err(IntrinsicError::TooManySteps { steps: sim_steps });
    }
    let stages = stage_blocks(region, sim_steps);
    let mut cell_set: BTreeSet<Coord> = region.iter().copied().collect();
    for stage in &stages {
        for origin in stage {
            cell_set.extend(block_cells(*origin));
        }
    }
    let cells: Vec<Coord> = cell_set.into_iter().collect();
    if cells.len() > MAX_LANES {
        return Err(IntrinsicError::TooManyLanes {
            needed: cells.len(),
        });
    }
    let lanes = cells.len();
    let lane_of = |cell: Coord| {
        cells
            .binary_search(&cell)
            .expect("every stage cell is a lane")
    };

    let mut staged_layers = Vec::new();
    for stage in &stages {
        let mut gates = Vec::new();
        for origin in stage {
            let block = block_cells(*origin);
            for gate in p.circuit().flat_gates() {
                gates.push(gate.retarget(|q| lane_of(block[q])));
            }
        }
        let ir = CircuitIR::from_gates(lanes, &gates)?;
        staged_layers.push(route(&ir)?.layers);
    }
    let layers_per_stage = staged_layers.iter().map(Vec::len).max().unwrap_or(0);
    let mut layers = Vec::new();
    for mut stage in staged_layers {
        stage.resize(layers_per_stage, Vec::new());
        layers.append(&mut stage);
    }
    let layout = layout_circuit(&CircuitIR {
        qubit_count: lanes,
        layers,
    })?;
    let coding = IsometricCoding {
        cells,
        stage_blocks: stages,
        step_multiplier: layers_per_stage as u64 * TILE_DURATION,
        layers_per_stage,
    };
    Ok((layout, coding))
}

/// Write a simulated state onto the layout's entry ports: each branch
/// becomes a machinery configuration with one signal per lane carrying that
/// lane's cell-qubit.
pub fn encode_sim_state(
    layout: &CompiledLayout,
    coding: &IsometricCoding,
    state: &SimState,
) -> Result<Superposition, IntrinsicError> {
    let mut branches = Vec::new();
    for (ones, amp) in state.branches() {
        if let Some(stray) = ones.iter().find(|c| coding.lane_of(**c).is_none()) {
            return Err(IntrinsicError::CellOutsideCoding {
                x: stray.x,
                y: stray.y,
            });
        }
        let mut config = layout.config.clone();
        for (lane, cell) in coding.cells.iter().enumerate() {
            let value = if ones.contains(cell) {
                CellState::Sig1
            } else {
                CellState::Sig0
            };
            config.set(layout.in_ports[lane], value);
        }
        branches.push((config, amp));
    }
    Ok(Superposition::from_weighted(branches, layout.entry_parity)?)
}

/// Read the exit ports back into a simulated state. Returns the state and
/// the probability mass rejected because signals were off-port or the
/// machinery was not exactly restored.
pub fn decode_sim_state(
    layout: &CompiledLayout,
    coding: &IsometricCoding,
    state: &Superposition,
) -> (SimState, f64) {
    let read = read_out_ports(layout, state);
    let n = layout.qubit_count;
    let mut branches = BTreeMap::new();
    for (index, amp) in read.amplitudes.iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let ones: BTreeSet<Coord> = coding
            .cells
            .iter()
            .enumerate()
            .filter(|(lane, _)| (index >> (n - 1 - lane)) & 1 == 1)
            .map(|(_, c)| *c)
            .collect();
        branches.insert(ones, *amp);
    }
    (SimState { branches }, read.leaked_mass)
}

/// Outcome of comparing the flattened machine against the reference.
#[derive(Clone, Debug)]
pub struct SimulationReport {
    pub sim_steps: u64,
    pub lane_count: usize,
    pub total_steps: u64,
    pub cases: usize,
    pub min_fidelity: f64,
    pub max_leaked: f64,
    pub quiescence_preserved: bool,
}

/// Flatten `sim_steps` steps and verify, state by state, that decoding the
/// universal run reproduces the reference automaton: all basis states with
/// at most two non-quiescent cells in `region`, plus `random_states` random
/// superpositions over `region`.
pub fn check_direct_simulation(
    p: &ReferencePQCA,
    region: &[Coord],
    sim_steps: u64,
    random_states: usize,
    rng: &mut impl Rng,
) -> Result<SimulationReport, IntrinsicError> {
    let (layout, coding) = flatten_pqca(p, region, sim_steps)?;
    let mut tests = vec![SimState::basis([])];
    for (i, a) in region.iter().enumerate() {
        tests.push(SimState::basis([*a]));
        for b in &region[i + 1..] {
            tests.push(SimState::basis([*a, *b]));
        }
    }
    for _ in 0..random_states {
        let state = StateVector::random(region.len(), rng)?;
        tests.push(SimState::from_state_vector(region, &state)?);
    }

    let opts = StepOptions::default();
    let mut min_fidelity = 1.0f64;
    let mut max_leaked = 0.0f64;
    for state in &tests {
        let reference = reference_run(p, state, &coding.stage_blocks);
        let start = encode_sim_state(&layout, &coding, state)?;
        let finished = start.run(layout.total_steps, &opts)?.state;
        let (decoded, leaked) = decode_sim_state(&layout, &coding, &finished);
        min_fidelity = min_fidelity.min(decoded.fidelity(&reference));
        max_leaked = max_leaked.max(leaked);
    }
    Ok(SimulationReport {
        sim_steps,
        lane_count: layout.qubit_count,
        total_steps: layout.total_steps,
        cases: tests.len(),
        min_fidelity,
        max_leaked,
        quiescence_preserved: p.preserves_quiescence(),
    })
}

/// The all-quiescent pipeline check: encode no excitations, run the whole
/// machine, and decode. For quiescence-preserving block unitaries the
/// returned fidelity against the all-quiescent state is 1.
pub fn quiescent_round_trip(
    layout: &CompiledLayout,
    coding: &IsometricCoding,
) -> Result<f64, IntrinsicError> {
    let quiet = SimState::basis([]);
    let encoded = encode_sim_state(layout, coding, &quiet)?;
    let finished = encoded
        .run(layout.total_steps, &StepOptions::default())?
        .state;
    let (decoded, _) = decode_sim_state(layout, coding, &finished);
    Ok(decoded.fidelity(&quiet))
}

/// A machinery-only view of the encoded quiescent state (barriers, resident
/// ancillas, and quiescent lane signals).
pub fn quiescent_configuration(
    layout: &CompiledLayout,
    coding: &IsometricCoding,
) -> Result<Configuration, IntrinsicError> {
    let encoded = encode_sim_state(layout, coding, &SimState::basis([]))?;
    let mut branches = encoded.branches();
    let (config, _) = branches.next().expect("quiescent state has one branch");
    Ok(config)
}
