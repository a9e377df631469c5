//! Simulator and circuit compiler for a two-dimensional partitioned quantum
//! cellular automaton with a universal four-state scattering unitary.
//!
//! The automaton partitions the plane into 2x2 blocks, applying one fixed
//! 256x256 block unitary everywhere and alternating the partition offset
//! between steps. Cells hold one of four states: empty, a qubit-carrying
//! signal (`0` or `1`), or a barrier. Signals propagate diagonally; barrier
//! arrangements deflect, split, or phase-shift them, which is enough to run
//! arbitrary quantum circuits laid out as static barrier patterns.
//!
//! Modules build on each other in roughly this order:
//!
//! * [`lattice`] — cells, coordinates, finite configurations, block geometry,
//!   and the grid text format.
//! * [`scattering`] — construction and audit of the block unitary.
//! * [`evolution`] — sparse superposition evolution over configurations.
//! * [`oracle`] — dense state-vector reference for the circuit gate set.
//! * [`tiles`] — gate tiles: barrier layouts that apply one gate to signals
//!   crossing them, with a verifier that recovers each tile's matrix.
//! * [`compiler`] — circuit source -> routed tile layout -> encode/decode.
//! * [`intrinsic`] — simulation of an arbitrary block automaton by compiling
//!   its block unitary's circuit onto the universal lattice.

pub mod compiler;
pub mod evolution;
pub mod intrinsic;
pub mod lattice;
pub mod oracle;
pub mod scattering;
pub mod tiles;

pub use evolution::Superposition;
pub use lattice::{CellState, Configuration, Coord, Parity};
pub use scattering::ScatteringTable;
