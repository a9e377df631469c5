//! Dense state-vector simulation of small circuits over the native gate set
//! — the independent ground truth that tiles and compiled layouts are
//! checked against.
//!
//! Gate set: `ID`, `H`, `T` = diag(1, e^{i pi/4}), `SWAP`, and
//! `CP` = diag(1, 1, 1, e^{i pi/4}). `CNOT` and `CZ` are composite
//! conveniences with exact native matrices; their expansions into the
//! primitive set, `CNOT = (I (x) H) CP^4 (I (x) H)` and `CZ = CP^4`, are
//! verified to match entrywise.
//!
//! Qubit ordering convention, stated once and relied on everywhere: qubit 0
//! is the **most significant bit** of an amplitude index. In a `k`-qubit
//! register, qubit `q` owns bit `k - 1 - q`.

use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Desk-scale ceiling on dense register width.
pub const MAX_QUBITS: usize = 12;

/// The `e^{i pi/4}` phase shared by `T` and `CP`.
pub const EIGHTH_TURN: Complex64 = Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);

/// One gate application. Two-qubit gates list distinct qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateOp {
    Id(usize),
    H(usize),
    T(usize),
    Swap(usize, usize),
    Cp(usize, usize),
    Cnot { control: usize, target: usize },
    Cz(usize, usize),
}

impl GateOp {
    /// Qubits the gate touches.
    pub fn targets(&self) -> Vec<usize> {
        match *self {
            GateOp::Id(q) | GateOp::H(q) | GateOp::T(q) => vec![q],
            GateOp::Swap(a, b) | GateOp::Cp(a, b) | GateOp::Cz(a, b) => vec![a, b],
            GateOp::Cnot { control, target } => vec![control, target],
        }
    }

    /// True for gates applied directly by tiles; `CNOT`/`CZ` are composites
    /// that expand before layout.
    pub fn is_primitive(&self) -> bool {
        !matches!(self, GateOp::Cnot { .. } | GateOp::Cz(_, _))
    }

    /// Expansion of composites into the primitive set; primitives expand to
    /// themselves.
    pub fn expand(&self) -> Vec<GateOp> {
        match *self {
            GateOp::Cnot { control, target } => vec![
                GateOp::H(target),
                GateOp::Cp(control, target),
                GateOp::Cp(control, target),
                GateOp::Cp(control, target),
                GateOp::Cp(control, target),
                GateOp::H(target),
            ],
            GateOp::Cz(a, b) => vec![GateOp::Cp(a, b); 4],
            primitive => vec![primitive],
        }
    }

    /// The same gate with every qubit index passed through `f`.
    pub fn retarget(&self, f: impl Fn(usize) -> usize) -> GateOp {
        match *self {
            GateOp::Id(q) => GateOp::Id(f(q)),
            GateOp::H(q) => GateOp::H(f(q)),
            GateOp::T(q) => GateOp::T(f(q)),
            GateOp::Swap(a, b) => GateOp::Swap(f(a), f(b)),
            GateOp::Cp(a, b) => GateOp::Cp(f(a), f(b)),
            GateOp::Cnot { control, target } => GateOp::Cnot {
                control: f(control),
                target: f(target),
            },
            GateOp::Cz(a, b) => GateOp::Cz(f(a), f(b)),
        }
    }
}

impl fmt::Display for GateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GateOp::Id(q) => write!(f, "ID {q}"),
            GateOp::H(q) => write!(f, "H {q}"),
            GateOp::T(q) => write!(f, "T {q}"),
            GateOp::Swap(a, b) => write!(f, "SWAP {a} {b}"),
            GateOp::Cp(a, b) => write!(f, "CP {a} {b}"),
            GateOp::Cnot { control, target } => write!(f, "CNOT {control} {target}"),
            GateOp::Cz(a, b) => write!(f, "CZ {a} {b}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("gate {gate} targets qubit {target}, register has {qubits}")]
    TargetOutOfRange {
        gate: String,
        target: usize,
        qubits: usize,
    },
    #[error("gate {gate} lists the same qubit twice")]
    DuplicateTarget { gate: String },
    #[error("register of {qubits} qubits exceeds the dense limit of {MAX_QUBITS}")]
    TooManyQubits { qubits: usize },
    #[error("amplitude vector has {got} entries, expected {expected}")]
    BadAmplitudeCount { expected: usize, got: usize },
}

/// A dense, unit-norm state over `qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|index>` in the computational basis.
    pub fn basis(qubits: usize, index: usize) -> Result<Self, OracleError> {
        if qubits > MAX_QUBITS {
            return Err(OracleError::TooManyQubits { qubits });
        }
        let dim = 1usize << qubits;
        assert!(index < dim, "basis index {index} out of range for {qubits} qubits");
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector { qubits, amps })
    }

    /// Wrap explicit amplitudes (must already be unit norm within 1e-9).
    pub fn from_amplitudes(qubits: usize, amps: Vec<Complex64>) -> Result<Self, OracleError> {
        if qubits > MAX_QUBITS {
            return Err(OracleError::TooManyQubits { qubits });
        }
        let expected = 1usize << qubits;
        if amps.len() != expected {
            return Err(OracleError::BadAmplitudeCount {
                expected,
                got: amps.len(),
            });
        }
        let state = StateVector { qubits, amps };
        debug_assert!((state.norm() - 1.0).abs() < 1e-9);
        Ok(state)
    }

    /// A pseudo-random unit vector (uniform components, normalized) — good
    /// enough for fidelity tests, not Haar-distributed.
    pub fn random(qubits: usize, rng: &mut impl Rng) -> Result<Self, OracleError> {
        if qubits > MAX_QUBITS {
            return Err(OracleError::TooManyQubits { qubits });
        }
        let dim = 1usize << qubits;
        let mut amps: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        Ok(StateVector { qubits, amps })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        assert_eq!(self.qubits, other.qubits);
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm()
    }

    /// Bit position owned by `qubit` (qubit 0 is the most significant).
    fn shift(&self, qubit: usize) -> usize {
        self.qubits - 1 - qubit
    }

    fn check_targets(&self, gate: &GateOp) -> Result<(), OracleError> {
        let targets = gate.targets();
        for &t in &targets {
            if t >= self.qubits {
                return Err(OracleError::TargetOutOfRange {
                    gate: gate.to_string(),
                    target: t,
                    qubits: self.qubits,
                });
            }
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(OracleError::DuplicateTarget {
                gate: gate.to_string(),
            });
        }
        Ok(())
    }

    /// Apply one gate, returning the new state.
    pub fn apply(&self, gate: GateOp) -> Result<StateVector, OracleError> {
        self.check_targets(&gate)?;
        let mut out = self.clone();
        out.apply_in_place(gate);
        Ok(out)
    }

    /// Apply a gate sequence left to right.
    pub fn apply_all(&self, gates: &[GateOp]) -> Result<StateVector, OracleError> {
        let mut out = self.clone();
        for gate in gates {
            out.check_targets(gate)?;
            out.apply_in_place(*gate);
        }
        Ok(out)
    }

    fn apply_in_place(&mut self, gate: GateOp) {
        let one = Complex64::new(1.0, 0.0);
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        match gate {
            GateOp::Id(_) => {}
            GateOp::H(q) => self.single_qubit(q, [h, h, h, -h]),
            GateOp::T(q) => self.single_qubit(q, [one, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), EIGHTH_TURN]),
            GateOp::Swap(a, b) => {
                let (ma, mb) = (1usize << self.shift(a), 1usize << self.shift(b));
                for i in 0..self.amps.len() {
                    let has_a = i & ma != 0;
                    let has_b = i & mb != 0;
                    if has_a && !has_b {
                        let j = (i & !ma) | mb;
                        self.amps.swap(i, j);
                    }
                }
            }
            GateOp::Cp(a, b) => {
                let mask = (1usize << self.shift(a)) | (1usize << self.shift(b));
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *amp *= EIGHTH_TURN;
                    }
                }
            }
            GateOp::Cnot { control, target } => {
                let (mc, mt) = (1usize << self.shift(control), 1usize << self.shift(target));
                for i in 0..self.amps.len() {
                    if i & mc != 0 && i & mt == 0 {
                        self.amps.swap(i, i | mt);
                    }
                }
            }
            GateOp::Cz(a, b) => {
                let mask = (1usize << self.shift(a)) | (1usize << self.shift(b));
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *amp = -*amp;
                    }
                }
            }
        }
    }

    /// Apply a 2x2 matrix `[g00, g01, g10, g11]` to one qubit.
    fn single_qubit(&mut self, q: usize, g: [Complex64; 4]) {
        let mask = 1usize << self.shift(q);
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let j = i | mask;
                let (a0, a1) = (self.amps[i], self.amps[j]);
                self.amps[i] = g[0] * a0 + g[1] * a1;
                self.amps[j] = g[2] * a0 + g[3] * a1;
            }
        }
    }
}

/// Dense row-major unitary of a gate sequence on `qubits` qubits:
/// `matrix[row * dim + col] = <row| U |col>`, built column by column.
pub fn circuit_unitary(gates: &[GateOp], qubits: usize) -> Result<Vec<Complex64>, OracleError> {
    let dim = 1usize << qubits;
    let mut matrix = vec![Complex64::new(0.0, 0.0); dim * dim];
    for col in 0..dim {
        let out = StateVector::basis(qubits, col)?.apply_all(gates)?;
        for row in 0..dim {
            matrix[row * dim + col] = out.amps[row];
        }
    }
    Ok(matrix)
}

/// Largest entrywise difference between `a` and `b` after aligning `b`'s
/// global phase to `a` (via their overlap). Arrays must be equal length.
pub fn phase_aligned_max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let overlap: Complex64 = b.iter().zip(a).map(|(x, y)| x.conj() * y).sum();
    let phase = if overlap.norm() > 1e-12 {
        overlap / overlap.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - phase * y).norm())
        .fold(0.0, f64::max)
}
