//! Construction and audit of the universal block scattering unitary.
//!
//! The unitary acts on the 256-dimensional space spanned by 2x2 block
//! contents. It is specified by a small list of rewrite generators, closed
//! under quarter-turn rotation (the dynamics is isotropic), and completed
//! with the identity on every basis state no generator claims. Construction
//! audits unitarity, isotropy, and quiescence before returning a table.
//!
//! The generator families, written as (NW, NE, SW, SE) tuples:
//!
//! * **Propagation** — a lone signal jumps to the opposite corner.
//! * **Crossing** — two signals in adjacent corners both jump to their
//!   opposite corners; the branch picks up phase `e^{i pi/4}` exactly when
//!   both signals carry `1`.
//! * **Barrier pass** — one barrier plus one signal whose opposite corner is
//!   free: the signal jumps as normal. If the barrier occupies the opposite
//!   corner the block is left alone (the signal is blocked).
//! * **Wall bounce** — two barriers sharing an edge: the two free cells swap
//!   contents (an involution, so an incoming signal bounces back out and a
//!   signal pair exchanges).
//! * **Split** — two barriers on a diagonal: a lone signal on the free
//!   diagonal jumps to the opposite free corner with its value sent through
//!   a Hadamard, `v -> (|0> + (-1)^v |1>)/sqrt(2)`.
//!
//! Everything else — empty blocks, three or more barriers or signals,
//! signals at opposite corners, blocked single signals — is the identity.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

use crate::lattice::{BlockCells, CellState};

/// Number of block basis states (4 cell states over 4 cells).
pub const BASIS_SIZE: usize = 256;

/// Tolerance for treating two amplitudes as equal during closure dedup.
const DEDUP_TOL: f64 = 1e-10;

/// Tolerance for the unitarity audit on the induced 256x256 matrix.
const UNITARITY_TOL: f64 = 1e-12;

/// Phase acquired when two `1` signals cross: `e^{i pi/4}`.
pub const CROSSING_PHASE: Complex64 = Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);

/// One rewrite generator: an input block and its (unit-norm) output
/// superposition. The full rule set is the rotation closure of these.
#[derive(Debug, Clone)]
pub struct RuleGenerator {
    pub input: BlockCells,
    pub outputs: Vec<(BlockCells, Complex64)>,
}

/// Rotate block contents by `quarter_turns` clockwise quarter turns.
/// Positions permute (NW -> NE -> SE -> SW); cell states are untouched,
/// since a signal's heading is encoded by its position alone.
pub fn rotate_block(b: BlockCells, quarter_turns: u32) -> BlockCells {
    let mut out = b;
    for _ in 0..quarter_turns % 4 {
        out = out.rotate_cw();
    }
    out
}

fn sig(bit: u8) -> CellState {
    match bit {
        0 => CellState::Sig0,
        _ => CellState::Sig1,
    }
}

/// The explicit generator list (before rotation closure), enumerated over
/// signal values. See the module docs for the families.
pub fn rule_generators() -> Vec<RuleGenerator> {
    use CellState::{Barrier as B, Empty as E};
    let one = Complex64::new(1.0, 0.0);
    let mut gens = Vec::new();

    // Propagation: lone SW signal jumps to NE.
    for v in 0..2 {
        gens.push(RuleGenerator {
            input: BlockCells([E, E, sig(v), E]),
            outputs: vec![(BlockCells([E, sig(v), E, E]), one)],
        });
    }

    // Crossing: signals in the west column (NW = a, SW = b) jump east;
    // phase e^{i pi/4} exactly when both carry 1.
    for a in 0..2 {
        for b in 0..2 {
            let amp = if a == 1 && b == 1 { CROSSING_PHASE } else { one };
            gens.push(RuleGenerator {
                input: BlockCells([sig(a), E, sig(b), E]),
                outputs: vec![(BlockCells([E, sig(b), E, sig(a)]), amp)],
            });
        }
    }

    // Barrier pass: barrier at SE; a signal at either adjacent corner has a
    // free opposite corner and jumps to it. (The signal diagonal to the
    // barrier is blocked and falls through to the identity completion.)
    for v in 0..2 {
        gens.push(RuleGenerator {
            input: BlockCells([E, E, sig(v), B]),
            outputs: vec![(BlockCells([E, sig(v), E, B]), one)],
        });
        gens.push(RuleGenerator {
            input: BlockCells([E, sig(v), E, B]),
            outputs: vec![(BlockCells([E, E, sig(v), B]), one)],
        });
    }

    // Wall bounce: barriers along the south row; the two free cells swap
    // contents. Enumerated over distinct free-cell contents (equal contents
    // swap to themselves and are left to the identity completion).
    let free_states = [E, CellState::Sig0, CellState::Sig1];
    for a in free_states {
        for b in free_states {
            if a == b {
                continue;
            }
            gens.push(RuleGenerator {
                input: BlockCells([a, b, B, B]),
                outputs: vec![(BlockCells([b, a, B, B]), one)],
            });
        }
    }

    // Split: barriers at NW and SE; a lone SW signal jumps to NE through a
    // Hadamard on its value.
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    for v in 0..2 {
        let minus = if v == 1 { -h } else { h };
        gens.push(RuleGenerator {
            input: BlockCells([B, E, sig(v), B]),
            outputs: vec![
                (BlockCells([B, sig(0), E, B]), h),
                (BlockCells([B, sig(1), E, B]), minus),
            ],
        });
    }

    gens
}

/// Errors detected while constructing or auditing the scattering table.
#[derive(Debug, Error)]
pub enum TableError {
    #[error(
        "rule collision on input {input}: closure produced both {first} and {second}"
    )]
    RuleCollision {
        input: String,
        first: String,
        second: String,
    },
    #[error("generator output for {input} has norm {norm}, expected 1")]
    UnnormalizedGenerator { input: String, norm: f64 },
    #[error(
        "unitarity audit failed: columns {col_a} and {col_b} have inner product {dot} (tolerance {UNITARITY_TOL})"
    )]
    NotUnitary {
        col_a: String,
        col_b: String,
        dot: f64,
    },
    #[error("isotropy audit failed on input {input}: rotated row disagrees")]
    NotIsotropic { input: String },
    #[error("quiescence audit failed: the all-empty block is not fixed")]
    NotQuiescent,
}

fn describe_row(row: &[(usize, Complex64)]) -> String {
    row.iter()
        .map(|(c, a)| format!("{} {}", format_amplitude(*a), BlockCells::from_index(*c).to_chars()))
        .collect::<Vec<_>>()
        .join(" + ")
}

/// Fixed-precision amplitude rendering used by the table dump. Negative
/// zeros are normalized so sign noise never reaches golden files.
pub fn format_amplitude(z: Complex64) -> String {
    let re = if z.re == 0.0 { 0.0 } else { z.re };
    let im = if z.im == 0.0 { 0.0 } else { z.im };
    format!("{re:.12}{im:+.12}i")
}

/// The scattering unitary as a sparse row table: `rows[b]` lists the
/// components of `U` applied to basis block `b`, sorted by output index.
/// Immutable once built; lookups are pure and freely shareable.
#[derive(Debug, Clone)]
pub struct ScatteringTable {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl ScatteringTable {
    /// Build the table from [`rule_generators`]: close the generators under
    /// rotation, fill the rest with the identity, then audit unitarity,
    /// isotropy, and quiescence.
    pub fn build() -> Result<Self, TableError> {
        let mut rows: Vec<Option<Vec<(usize, Complex64)>>> = vec![None; BASIS_SIZE];

        for gen in rule_generators() {
            let norm: f64 = gen.outputs.iter().map(|(_, a)| a.norm_sqr()).sum();
            if (norm - 1.0).abs() > DEDUP_TOL {
                return Err(TableError::UnnormalizedGenerator {
                    input: gen.input.to_chars(),
                    norm,
                });
            }
            for turns in 0..4 {
                let input = rotate_block(gen.input, turns);
                let mut row: Vec<(usize, Complex64)> = gen
                    .outputs
                    .iter()
                    .map(|(out, amp)| (rotate_block(*out, turns).index(), *amp))
                    .collect();
                row.sort_by_key(|(c, _)| *c);
                match &rows[input.index()] {
                    None => rows[input.index()] = Some(row),
                    Some(existing) => {
                        if !rows_equal(existing, &row) {
                            return Err(TableError::RuleCollision {
                                input: input.to_chars(),
                                first: describe_row(existing),
                                second: describe_row(&row),
                            });
                        }
                    }
                }
            }
        }

        let one = Complex64::new(1.0, 0.0);
        let rows: Vec<Vec<(usize, Complex64)>> = rows
            .into_iter()
            .enumerate()
            .map(|(b, row)| row.unwrap_or_else(|| vec![(b, one)]))
            .collect();

        let table = ScatteringTable { rows };
        table.audit_unitarity()?;
        table.audit_isotropy()?;
        table.audit_quiescence()?;
        Ok(table)
    }

    /// The audited table for the built-in rule set, constructed once per
    /// process.
    pub fn shared() -> &'static ScatteringTable {
        static TABLE: OnceLock<ScatteringTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            ScatteringTable::build().expect("built-in rule set is closed and unitary")
        })
    }

    /// The adjoint of [`ScatteringTable::shared`], for reverse evolution.
    pub fn shared_adjoint() -> &'static ScatteringTable {
        static ADJOINT: OnceLock<ScatteringTable> = OnceLock::new();
        ADJOINT.get_or_init(|| ScatteringTable::shared().adjoint())
    }

    /// The row for basis block index `b`: the components of `U|b>`.
    pub fn row(&self, b: usize) -> &[(usize, Complex64)] {
        &self.rows[b]
    }

    /// Apply the table to explicit block contents.
    pub fn apply_block(&self, b: BlockCells) -> &[(usize, Complex64)] {
        self.row(b.index())
    }

    /// The conjugate-transpose table (rows of `U^dagger`).
    pub fn adjoint(&self) -> ScatteringTable {
        let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); BASIS_SIZE];
        for (b, row) in self.rows.iter().enumerate() {
            for (c, amp) in row {
                rows[*c].push((b, amp.conj()));
            }
        }
        for row in &mut rows {
            row.sort_by_key(|(c, _)| *c);
        }
        ScatteringTable { rows }
    }

    fn is_identity_row(&self, b: usize) -> bool {
        let row = &self.rows[b];
        row.len() == 1 && row[0].0 == b && (row[0].1 - 1.0).norm() < UNITARITY_TOL
    }

    /// Number of rows that differ from the identity (a pinned regression
    /// constant for the built-in rule set).
    pub fn non_identity_count(&self) -> usize {
        (0..BASIS_SIZE).filter(|b| !self.is_identity_row(*b)).count()
    }

    /// Largest entrywise deviation of `M^dagger M` from the identity.
    pub fn unitarity_residual(&self) -> f64 {
        let gram = self.gram_matrix();
        let mut worst = 0.0f64;
        for i in 0..BASIS_SIZE {
            for j in 0..BASIS_SIZE {
                let expected = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[i * BASIS_SIZE + j] - expected).norm());
            }
        }
        worst
    }

    /// `M^dagger M` computed from the sparse rows: each row contributes the
    /// outer product of its components.
    fn gram_matrix(&self) -> Vec<Complex64> {
        let mut gram = vec![Complex64::new(0.0, 0.0); BASIS_SIZE * BASIS_SIZE];
        for row in &self.rows {
            for (c1, a1) in row {
                for (c2, a2) in row {
                    gram[c1 * BASIS_SIZE + c2] += a1.conj() * a2;
                }
            }
        }
        gram
    }

    fn audit_unitarity(&self) -> Result<(), TableError> {
        // Columns of M are orthonormal iff M†M = I; with at most two entries
        // per row the Gram matrix is cheap to accumulate sparsely. MM† = I
        // then follows for square M, but is audited via the adjoint anyway.
        for table in [self, &self.adjoint()] {
            let gram = table.gram_matrix();
            for i in 0..BASIS_SIZE {
                for j in 0..BASIS_SIZE {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    let dot = gram[i * BASIS_SIZE + j];
                    if (dot - expected).norm() > UNITARITY_TOL {
                        return Err(TableError::NotUnitary {
                            col_a: BlockCells::from_index(i).to_chars(),
                            col_b: BlockCells::from_index(j).to_chars(),
                            dot: (dot - expected).norm(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn audit_isotropy(&self) -> Result<(), TableError> {
        for b in 0..BASIS_SIZE {
            let rotated_input = rotate_block(BlockCells::from_index(b), 1).index();
            let mut expected: Vec<(usize, Complex64)> = self.rows[b]
                .iter()
                .map(|(c, a)| (rotate_block(BlockCells::from_index(*c), 1).index(), *a))
                .collect();
            expected.sort_by_key(|(c, _)| *c);
            if !rows_equal(&self.rows[rotated_input], &expected) {
                return Err(TableError::NotIsotropic {
                    input: BlockCells::from_index(b).to_chars(),
                });
            }
        }
        Ok(())
    }

    fn audit_quiescence(&self) -> Result<(), TableError> {
        let empty = BlockCells::EMPTY.index();
        if self.is_identity_row(empty) {
            Ok(())
        } else {
            Err(TableError::NotQuiescent)
        }
    }

    /// Textual dump of every non-identity row:
    /// `IN <4 chars> -> <amp> <4 chars> [+ <amp> <4 chars>]`,
    /// in basis-index order. Byte-stable for golden-file regression.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for b in 0..BASIS_SIZE {
            if self.is_identity_row(b) {
                continue;
            }
            out.push_str(&format!(
                "IN {} -> {}\n",
                BlockCells::from_index(b).to_chars(),
                describe_row(&self.rows[b])
            ));
        }
        out
    }
}

fn rows_equal(a: &[(usize, Complex64)], b: &[(usize, Complex64)]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|((c1, a1), (c2, a2))| c1 == c2 && (a1 - a2).norm() <= DEDUP_TOL)
}
