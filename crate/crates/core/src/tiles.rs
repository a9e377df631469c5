//! Gate tiles: fixed barrier layouts that carry signal values from entry
//! ports to exit ports in a uniform number of steps while applying a chosen
//! gate to the transported values.
//!
//! Every tile obeys one timing contract: a signal entering an `in` port on an
//! aligned step leaves the matching `out` port exactly [`TILE_DURATION`] steps
//! later, displaced by [`TILE_DISPLACEMENT`]. Multi-lane tiles space their
//! ports by [`LANE_STEP`]. Because the contract is uniform, tiles compose
//! side by side (lanes) and back to back (layers) without any glue machinery.
//!
//! Tile interiors use four routing devices, all built from the block rules:
//! straight free flight, two-barrier bounce walls, vertical and horizontal
//! delay corridors (stacked bounce pairs), and signal crossings for
//! controlled phases. The phase tile additionally keeps a looping ancilla
//! signal that meets the transported signal once per pass.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

use crate::evolution::{EvolutionError, StepOptions, Superposition};
use crate::lattice::{CellState, Configuration, Coord, GridError, Parity};
use crate::oracle::{circuit_unitary, phase_aligned_max_diff, GateOp};

/// Steps a signal spends inside one tile.
pub const TILE_DURATION: u64 = 24;

/// Displacement from each `in` port to the matching `out` port.
pub const TILE_DISPLACEMENT: (i64, i64) = (14, 14);

/// Offset between adjacent lanes.
pub const LANE_STEP: (i64, i64) = (8, -8);

/// Largest acceptable phase-aligned deviation between a tile's induced
/// matrix and its nominal gate.
pub const GATE_TOLERANCE: f64 = 1e-9;

/// Largest acceptable probability mass leaking outside the expected exit
/// configurations.
pub const RESIDUAL_TOLERANCE: f64 = 1e-18;

/// The gate a tile applies between its ports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TileGate {
    Identity,
    Hadamard,
    Phase,
    Swap,
    ControlledPhase,
}

impl TileGate {
    pub const ALL: [TileGate; 5] = [
        TileGate::Identity,
        TileGate::Hadamard,
        TileGate::Phase,
        TileGate::Swap,
        TileGate::ControlledPhase,
    ];

    /// Number of lanes (qubits) the tile spans.
    pub fn lanes(self) -> usize {
        match self {
            TileGate::Identity | TileGate::Hadamard | TileGate::Phase => 1,
            TileGate::Swap | TileGate::ControlledPhase => 2,
        }
    }

    /// Label used in tile files and circuit text.
    pub fn label(self) -> &'static str {
        match self {
            TileGate::Identity => "ID",
            TileGate::Hadamard => "H",
            TileGate::Phase => "T",
            TileGate::Swap => "SWAP",
            TileGate::ControlledPhase => "CP",
        }
    }

    pub fn from_label(label: &str) -> Option<TileGate> {
        Some(match label {
            "ID" => TileGate::Identity,
            "H" => TileGate::Hadamard,
            "T" => TileGate::Phase,
            "SWAP" => TileGate::Swap,
            "CP" => TileGate::ControlledPhase,
            _ => return None,
        })
    }

    /// The gate as an operation on lanes `0` (and `1`).
    pub fn gate_op(self) -> GateOp {
        match self {
            TileGate::Identity => GateOp::Id(0),
            TileGate::Hadamard => GateOp::H(0),
            TileGate::Phase => GateOp::T(0),
            TileGate::Swap => GateOp::Swap(0, 1),
            TileGate::ControlledPhase => GateOp::Cp(0, 1),
        }
    }

    /// Row-major matrix over the tile's lanes, lane 0 most significant.
    pub fn matrix(self) -> Vec<Complex64> {
        circuit_unitary(&[self.gate_op()], self.lanes())
            .expect("builtin gate descriptions are well formed")
    }
}

/// A tile layout: ports, timing, gate, and the barrier/ancilla scenery.
#[derive(Clone, Debug, PartialEq)]
pub struct TileSpec {
    pub gate: TileGate,
    pub in_ports: Vec<Coord>,
    pub out_ports: Vec<Coord>,
    pub duration: u64,
    pub entry_parity: Parity,
    /// Barrier cells plus any resident ancilla signals, in tile-local
    /// coordinates (lane-0 `in` port at the origin).
    pub scenery: Configuration,
}

#[derive(Debug, Error)]
pub enum TileError {
    #[error("tile header line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("tile grid: {0}")]
    Grid(#[from] GridError),
    #[error("tile verification run: {0}")]
    Evolution(#[from] EvolutionError),
}

fn header_err(line: usize, message: impl Into<String>) -> TileError {
    TileError::Header {
        line,
        message: message.into(),
    }
}

fn parse_ports(fields: &[&str], line: usize) -> Result<Vec<Coord>, TileError> {
    if fields.is_empty() || fields.len() % 2 != 0 {
        return Err(header_err(line, "ports need an even number of coordinates"));
    }
    fields
        .chunks(2)
        .map(|pair| {
            let x = pair[0]
                .parse::<i64>()
                .map_err(|_| header_err(line, format!("bad coordinate `{}`", pair[0])))?;
            let y = pair[1]
                .parse::<i64>()
                .map_err(|_| header_err(line, format!("bad coordinate `{}`", pair[1])))?;
            if x % 2 != 0 || y % 2 != 0 {
                return Err(header_err(line, format!("port ({x}, {y}) must be even")));
            }
            Ok(Coord::new(x, y))
        })
        .collect()
}

impl TileSpec {
    /// Parse the tile text format: header lines (`ports in`, `ports out`,
    /// `duration`, `gate`, `parity`) followed by a grid section starting at
    /// its `offset` line.
    pub fn parse(text: &str) -> Result<TileSpec, TileError> {
        let lines: Vec<&str> = text.lines().collect();
        let grid_at = lines
            .iter()
            .position(|l| l.starts_with("offset"))
            .ok_or_else(|| header_err(lines.len(), "missing grid offset line"))?;

        let mut in_ports = None;
        let mut out_ports = None;
        let mut duration = None;
        let mut gate = None;
        let mut parity = None;
        for (idx, line) in lines[..grid_at].iter().enumerate() {
            let line_no = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => {}
                ["ports", "in", rest @ ..] => in_ports = Some(parse_ports(rest, line_no)?),
                ["ports", "out", rest @ ..] => out_ports = Some(parse_ports(rest, line_no)?),
                ["duration", value] => {
                    duration = Some(value.parse::<u64>().map_err(|_| {
                        header_err(line_no, format!("bad duration `{value}`"))
                    })?);
                }
                ["gate", label] => {
                    gate = Some(TileGate::from_label(label).ok_or_else(|| {
                        header_err(line_no, format!("unknown gate `{label}`"))
                    })?);
                }
                ["parity", "aligned"] => parity = Some(Parity::Aligned),
                ["parity", "shifted"] => parity = Some(Parity::Shifted),
                _ => return Err(header_err(line_no, format!("unrecognized line `{line}`"))),
            }
        }

        let gate = gate.ok_or_else(|| header_err(grid_at, "missing `gate` line"))?;
        let in_ports = in_ports.ok_or_else(|| header_err(grid_at, "missing `ports in` line"))?;
        let out_ports = out_ports.ok_or_else(|| header_err(grid_at, "missing `ports out` line"))?;
        let duration = duration.ok_or_else(|| header_err(grid_at, "missing `duration` line"))?;
        let entry_parity = parity.ok_or_else(|| header_err(grid_at, "missing `parity` line"))?;
        if in_ports.len() != gate.lanes() || out_ports.len() != gate.lanes() {
            return Err(header_err(
                grid_at,
                format!(
                    "{} needs {} in and out ports, got {} and {}",
                    gate.label(),
                    gate.lanes(),
                    in_ports.len(),
                    out_ports.len()
                ),
            ));
        }
        let grid_text = lines[grid_at..].join("\n");
        let scenery = Configuration::parse_grid(&grid_text)?;
        Ok(TileSpec {
            gate,
            in_ports,
            out_ports,
            duration,
            entry_parity,
            scenery,
        })
    }

    /// Serialize back to the tile text format; inverse of [`TileSpec::parse`].
    pub fn to_text(&self) -> String {
        let ports = |ports: &[Coord]| {
            ports
                .iter()
                .map(|p| format!("{} {}", p.x, p.y))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let parity = match self.entry_parity {
            Parity::Aligned => "aligned",
            Parity::Shifted => "shifted",
        };
        format!(
            "ports in {}\nports out {}\nduration {}\ngate {}\nparity {}\n{}",
            ports(&self.in_ports),
            ports(&self.out_ports),
            self.duration,
            self.gate.label(),
            parity,
            self.scenery.to_grid()
        )
    }

    /// The same tile shifted by `(dx, dy)`. Callers must keep offsets even so
    /// ports stay on aligned block corners.
    pub fn translated(&self, dx: i64, dy: i64) -> TileSpec {
        let shift = |ports: &[Coord]| ports.iter().map(|p| p.offset(dx, dy)).collect();
        TileSpec {
            gate: self.gate,
            in_ports: shift(&self.in_ports),
            out_ports: shift(&self.out_ports),
            duration: self.duration,
            entry_parity: self.entry_parity,
            scenery: self.scenery.translate(dx, dy),
        }
    }
}

/// Outcome of simulating a tile against its nominal gate.
#[derive(Clone, Debug)]
pub struct TileReport {
    /// Phase-aligned max entrywise difference between the induced matrix and
    /// the gate matrix.
    pub gate_diff: f64,
    /// Largest per-input probability mass found outside the expected exit
    /// configurations.
    pub max_residual: f64,
    /// Whether the machinery-only state returns to itself after `duration`.
    pub machinery_restored: bool,
    /// First step count at which the machinery-only state recurs.
    pub machinery_period: Option<u64>,
}

impl TileReport {
    pub fn passes(&self) -> bool {
        self.gate_diff <= GATE_TOLERANCE
            && self.max_residual <= RESIDUAL_TOLERANCE
            && self.machinery_restored
    }
}

fn signal_for_bit(bit: usize) -> CellState {
    if bit == 0 {
        CellState::Sig0
    } else {
        CellState::Sig1
    }
}

/// Simulate `spec` on every basis input and compare the induced matrix with
/// the nominal gate; also confirm the resident machinery is self-restoring.
pub fn verify_tile(spec: &TileSpec) -> Result<TileReport, TileError> {
    let lanes = spec.gate.lanes();
    let dim = 1usize << lanes;
    let opts = StepOptions::default();

    let mut matrix = vec![Complex64::new(0.0, 0.0); dim * dim];
    let mut max_residual: f64 = 0.0;
    for col in 0..dim {
        let mut config = spec.scenery.clone();
        for (lane, port) in spec.in_ports.iter().enumerate() {
            config.set(*port, signal_for_bit((col >> (lanes - 1 - lane)) & 1));
        }
        let start = Superposition::basis_state(config, spec.entry_parity);
        let finished = start.run(spec.duration, &opts)?.state;
        let mut mass = 0.0;
        for row in 0..dim {
            let mut expected = spec.scenery.clone();
            for (lane, port) in spec.out_ports.iter().enumerate() {
                expected.set(*port, signal_for_bit((row >> (lanes - 1 - lane)) & 1));
            }
            let amp = finished.amplitude(&expected);
            mass += amp.norm_sqr();
            matrix[row * dim + col] = amp;
        }
        max_residual = max_residual.max(1.0 - mass);
    }
    let gate_diff = phase_aligned_max_diff(&matrix, &spec.gate.matrix());

    let rest = Superposition::basis_state(spec.scenery.clone(), spec.entry_parity);
    let mut cursor = rest.clone();
    let mut machinery_period = None;
    for t in 1..=spec.duration {
        cursor = cursor.step(&opts)?;
        if machinery_period.is_none() && cursor.fidelity(&rest) > 1.0 - 1e-12 {
            machinery_period = Some(t);
        }
    }
    let machinery_restored = cursor.fidelity(&rest) > 1.0 - 1e-12;

    Ok(TileReport {
        gate_diff,
        max_residual,
        machinery_restored,
        machinery_period,
    })
}

/// Built-in tile layouts, embedded as data files.
pub const TILE_SOURCES: [(TileGate, &str); 5] = [
    (TileGate::Identity, include_str!("data/identity.tile")),
    (TileGate::Hadamard, include_str!("data/hadamard.tile")),
    (TileGate::Phase, include_str!("data/phase.tile")),
    (TileGate::Swap, include_str!("data/swap.tile")),
    (TileGate::ControlledPhase, include_str!("data/cphase.tile")),
];

/// All built-in tiles, parsed once.
pub fn builtin_tiles() -> &'static BTreeMap<TileGate, TileSpec> {
    static TILES: OnceLock<BTreeMap<TileGate, TileSpec>> = OnceLock::new();
    TILES.get_or_init(|| {
        TILE_SOURCES
            .iter()
            .map(|(gate, source)| {
                let spec = TileSpec::parse(source).expect("builtin tile data parses");
                assert_eq!(spec.gate, *gate, "tile data disagrees with its registry entry");
                (*gate, spec)
            })
            .collect()
    })
}

/// The built-in tile for `gate`.
pub fn tile_for(gate: TileGate) -> &'static TileSpec {
    &builtin_tiles()[&gate]
}
