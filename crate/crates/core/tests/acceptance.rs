//! End-to-end acceptance gate: one check per release criterion, each
//! printing a PASS/FAIL line (visible with `--nocapture`). The test fails
//! if any criterion fails.
//!
//! Heavy criteria (compiler corpus, intrinsic simulation) run in seconds in
//! release mode and in a few minutes unoptimized.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uqca::compiler::{
    decode_outputs, encode_inputs, layout_circuit, parse_circuit, CircuitIR, CircuitInput,
};
use uqca::evolution::{StepOptions, Superposition};
use uqca::intrinsic::{
    check_direct_simulation, flatten_pqca, encode_sim_state, ReferencePQCA, SimState,
    DIRECT_SIMULATION_TOLERANCE,
};
use uqca::lattice::{BlockCells, CellState, Configuration, Coord, Parity};
use uqca::oracle::{GateOp, StateVector};
use uqca::scattering::ScatteringTable;
use uqca::tiles::{builtin_tiles, verify_tile, TILE_DISPLACEMENT, TILE_DURATION};

const GOLDEN_RULES: &str = include_str!("data/scattering_rules.txt");

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn check(&mut self, number: u32, name: &str, pass: bool, detail: String, started: Instant) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {number:2} {verdict} {name}: {detail} ({} ms)",
            started.elapsed().as_millis()
        );
        if !pass {
            self.failures.push(format!("criterion {number} ({name}): {detail}"));
        }
    }
}

fn row_map(table: &ScatteringTable, chars: &str) -> BTreeMap<String, Complex64> {
    let block = BlockCells::from_chars(chars).unwrap();
    table
        .apply_block(block)
        .iter()
        .map(|(c, a)| (BlockCells::from_index(*c).to_chars(), *a))
        .collect()
}

fn single_image(table: &ScatteringTable, input: &str, output: &str) -> bool {
    let row = row_map(table, input);
    row.len() == 1
        && row
            .get(output)
            .is_some_and(|a| (a - Complex64::new(1.0, 0.0)).norm() < 1e-12)
}

#[test]
fn acceptance() {
    let mut gate = Gate { failures: Vec::new() };
    let table = ScatteringTable::shared();

    // 1. The 256x256 block unitary is unitary and fixes the empty block.
    let started = Instant::now();
    let residual = table.unitarity_residual();
    let quiescent_fixed = single_image(table, "....", "....");
    gate.check(
        1,
        "scattering unitarity",
        residual <= 1e-12 && quiescent_fixed,
        format!("residual {residual:.1e}; quiescent fixed {quiescent_fixed}"),
        started,
    );

    // 2. The unitary commutes with quarter-turn block rotation, exactly.
    let started = Instant::now();
    let mut isotropy_ok = true;
    for b in 0..256usize {
        let rotated = BlockCells::from_index(b).rotate_cw().index();
        let direct: BTreeMap<usize, Complex64> =
            table.apply_block(BlockCells::from_index(rotated)).iter().copied().collect();
        let conjugated: BTreeMap<usize, Complex64> = table
            .apply_block(BlockCells::from_index(b))
            .iter()
            .map(|(c, a)| (BlockCells::from_index(*c).rotate_cw().index(), *a))
            .collect();
        if direct != conjugated {
            isotropy_ok = false;
            break;
        }
    }
    gate.check(
        2,
        "isotropy",
        isotropy_ok,
        "rotation conjugation matches on all 256 blocks".into(),
        started,
    );

    // 3. The displayed rules, row for row: golden file plus direct spot
    // checks of propagation, bounce, pass-through, split, and crossing.
    let started = Instant::now();
    let golden_ok = table.dump() == GOLDEN_RULES;
    let propagation_ok = single_image(table, "...0", "0...")
        && single_image(table, "..1.", ".1..")
        && single_image(table, ".0..", "..0.")
        && single_image(table, "1...", "...1");
    let bounce_ok = single_image(table, "##.0", "##0.");
    let pass_ok = single_image(table, "..0#", ".0.#");
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let split = row_map(table, ".##1");
    let split_ok = split.len() == 2
        && split.get("0##.").is_some_and(|a| (a - Complex64::new(h, 0.0)).norm() < 1e-12)
        && split.get("1##.").is_some_and(|a| (a - Complex64::new(-h, 0.0)).norm() < 1e-12);
    let crossing = row_map(table, "..11");
    let crossing_ok = crossing.len() == 1
        && crossing
            .get("11..")
            .is_some_and(|a| (a - Complex64::new(h, h)).norm() < 1e-12);
    let pass = golden_ok && propagation_ok && bounce_ok && pass_ok && split_ok && crossing_ok;
    gate.check(
        3,
        "rule fidelity",
        pass,
        format!(
            "golden {golden_ok}; propagation {propagation_ok}; bounce {bounce_ok}; \
             pass {pass_ok}; split {split_ok}; crossing {crossing_ok}"
        ),
        started,
    );

    // 4. Norm conservation on a many-branch state over 200 steps, and exact
    // reversal through the adjoint table.
    let started = Instant::now();
    let mut stress = Configuration::new();
    for k in 0..4 {
        let x0 = 10 * k;
        stress.set(Coord::new(x0, 0), CellState::Sig1);
        stress.set(Coord::new(x0, 1), CellState::Barrier);
        stress.set(Coord::new(x0 + 1, 0), CellState::Barrier);
    }
    for i in 0..=9i64 {
        for (x, y) in [(60 + i, 0), (60 + i, 9), (60, i), (69, i)] {
            stress.set(Coord::new(x, y), CellState::Barrier);
        }
    }
    stress.set(Coord::new(64, 4), CellState::Sig1);
    let opts = StepOptions::default();
    let start = Superposition::basis_state(stress, Parity::Aligned);
    let report = start.run(200, &opts).unwrap();
    let max_branches = report.stats.iter().map(|s| s.branches).max().unwrap();
    let worst_norm = report
        .stats
        .iter()
        .map(|s| (s.norm - 1.0).abs())
        .fold(0.0, f64::max);
    let mut reversed = report.state.clone();
    for _ in 0..200 {
        reversed = reversed.step_back(&opts).unwrap();
    }
    let reversal = reversed.fidelity(&start);
    gate.check(
        4,
        "evolution",
        max_branches >= 10 && worst_norm <= 1e-9 && reversal >= 1.0 - 1e-9,
        format!(
            "branches {max_branches}; worst |norm-1| {worst_norm:.1e}; reversal {reversal:.12}"
        ),
        started,
    );

    // 5. Every built-in tile meets the uniform contract and its gate matrix.
    let started = Instant::now();
    let mut tile_ok = true;
    let mut details = Vec::new();
    for (tile_gate, spec) in builtin_tiles() {
        let contract = spec.duration == TILE_DURATION
            && spec
                .in_ports
                .iter()
                .zip(&spec.out_ports)
                .all(|(i, o)| *o == i.offset(TILE_DISPLACEMENT.0, TILE_DISPLACEMENT.1));
        let report = verify_tile(spec).unwrap();
        let phase_period_ok =
            tile_gate.label() != "T" || report.machinery_period == Some(6);
        if !(contract && report.passes() && phase_period_ok) {
            tile_ok = false;
        }
        details.push(format!("{} {:.1e}", tile_gate.label(), report.gate_diff));
    }
    gate.check(5, "tile contracts", tile_ok, details.join(", "), started);

    // 6. The compiled controlled-not layout maps all four basis inputs
    // correctly.
    let started = Instant::now();
    let cnot = layout_circuit(&parse_circuit("qubits 2\nCNOT 0 1\n").unwrap()).unwrap();
    let mut cnot_min: f64 = 1.0;
    for (bits, want) in [([0, 0], 0), ([0, 1], 1), ([1, 0], 3), ([1, 1], 2)] {
        let input = CircuitInput::Basis(bits.to_vec());
        let run = encode_inputs(&cnot, &input)
            .unwrap()
            .run(cnot.total_steps, &opts)
            .unwrap()
            .state;
        let decoded = decode_outputs(&cnot, &run).unwrap();
        let expected = StateVector::basis(2, want).unwrap();
        cnot_min = cnot_min.min(decoded.fidelity(&expected));
    }
    gate.check(
        6,
        "controlled-not identity",
        cnot_min >= 1.0 - 1e-6,
        format!("worst basis fidelity {cnot_min:.9}"),
        started,
    );

    // 7. Random circuits against the dense reference, every basis input.
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10_2019);
    let mut corpus_min: f64 = 1.0;
    for _ in 0..25 {
        let qubits = rng.gen_range(1..=3usize);
        let gate_total = rng.gen_range(1..=8usize);
        let mut gates = Vec::new();
        for _ in 0..gate_total {
            let pick = if qubits == 1 {
                rng.gen_range(0..2)
            } else {
                rng.gen_range(0..5)
            };
            let q = rng.gen_range(0..qubits);
            gates.push(match pick {
                0 => GateOp::H(q),
                1 => GateOp::T(q),
                two_qubit => {
                    let mut p = rng.gen_range(0..qubits);
                    while p == q {
                        p = rng.gen_range(0..qubits);
                    }
                    match two_qubit {
                        2 => GateOp::Cp(q, p),
                        3 => GateOp::Swap(q, p),
                        _ => GateOp::Cnot { control: q, target: p },
                    }
                }
            });
        }
        let ir = CircuitIR::from_gates(qubits, &gates).unwrap();
        let layout = layout_circuit(&ir).unwrap();
        for index in 0..1usize << qubits {
            let expected = StateVector::basis(qubits, index)
                .unwrap()
                .apply_all(&ir.flat_gates())
                .unwrap();
            let bits: Vec<u8> = (0..qubits)
                .map(|q| ((index >> (qubits - 1 - q)) & 1) as u8)
                .collect();
            let run = encode_inputs(&layout, &CircuitInput::Basis(bits))
                .unwrap()
                .run(layout.total_steps, &opts)
                .unwrap()
                .state;
            let decoded = decode_outputs(&layout, &run).unwrap();
            corpus_min = corpus_min.min(decoded.fidelity(&expected));
        }
    }
    gate.check(
        7,
        "compiler vs reference",
        corpus_min >= 1.0 - 1e-6,
        format!("25 circuits; worst fidelity {corpus_min:.9}"),
        started,
    );

    // 8. Two semitransparent barriers in sequence recombine to a single
    // branch (a Hadamard squared is the identity).
    let started = Instant::now();
    let mut split_config = Configuration::new();
    split_config.set(Coord::new(0, 0), CellState::Sig1);
    for (x, y) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
        split_config.set(Coord::new(x, y), CellState::Barrier);
    }
    let done = Superposition::basis_state(split_config.clone(), Parity::Aligned)
        .run(3, &opts)
        .unwrap()
        .state;
    let mut expected = split_config;
    expected.set(Coord::new(0, 0), CellState::Empty);
    expected.set(Coord::new(3, 3), CellState::Sig1);
    // `.abs()` because the empty sum is -0.0.
    let spurious: f64 = done
        .branches()
        .filter(|(config, _)| *config != expected)
        .map(|(_, amp)| amp.norm_sqr())
        .sum::<f64>()
        .abs();
    let recombined = done.branch_count() == 1 && done.amplitude(&expected).norm() > 0.999;
    gate.check(
        8,
        "interference",
        recombined && spurious <= 1e-18,
        format!(
            "branches {}; spurious mass {spurious:.1e}",
            done.branch_count()
        ),
        started,
    );

    // 9. Flattened block automata reproduce their references for one and two
    // simulated steps.
    let started = Instant::now();
    let mut intrinsic_min: f64 = 1.0;
    let mut cases = Vec::new();
    for (name, text) in [
        ("identity", "qubits 4\nID 0\nID 1\nID 2\nID 3\n"),
        ("in-block swap", "qubits 4\nSWAP 0 2\n"),
        ("one-H", "qubits 4\nH 0\n"),
    ] {
        let p = ReferencePQCA::from_text(text).unwrap();
        let region = [
            Coord::new(0, 1),
            Coord::new(1, 1),
            Coord::new(0, 0),
            Coord::new(1, 0),
        ];
        for steps in [1, 2] {
            let mut case_rng = ChaCha8Rng::seed_from_u64(steps);
            let report =
                check_direct_simulation(&p, &region, steps, 2, &mut case_rng).unwrap();
            intrinsic_min = intrinsic_min.min(report.min_fidelity);
            cases.push(format!("{name} i={steps} {:.7}", report.min_fidelity));
        }
    }
    gate.check(
        9,
        "intrinsic simulation",
        intrinsic_min >= 1.0 - DIRECT_SIMULATION_TOLERANCE,
        cases.join("; "),
        started,
    );

    // 10. Coding recovery: decoding an encoded state factors into the input
    // state and a machinery residue that does not depend on the input.
    let started = Instant::now();
    let p = ReferencePQCA::from_text("qubits 4\nT 0\nH 1\n").unwrap();
    let region = [
        Coord::new(0, 1),
        Coord::new(1, 1),
        Coord::new(0, 0),
        Coord::new(1, 0),
    ];
    let (layout, coding) = flatten_pqca(&p, &region, 1).unwrap();
    let mut state_rng = ChaCha8Rng::seed_from_u64(4);
    let mut recovery_min: f64 = 1.0;
    let mut residues: BTreeSet<Configuration> = BTreeSet::new();
    for _ in 0..10 {
        let dense = StateVector::random(4, &mut state_rng).unwrap();
        let sim = SimState::from_state_vector(&region, &dense).unwrap();
        let encoded = encode_sim_state(&layout, &coding, &sim).unwrap();
        let mut recovered: BTreeMap<BTreeSet<Coord>, Complex64> = BTreeMap::new();
        for (config, amp) in encoded.branches() {
            let mut residue = config;
            let mut ones = BTreeSet::new();
            for (lane, port) in layout.in_ports.iter().enumerate() {
                if residue.get(*port) == CellState::Sig1 {
                    ones.insert(coding.cells[lane]);
                }
                residue.set(*port, CellState::Empty);
            }
            residues.insert(residue);
            *recovered.entry(ones).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        let overlap: Complex64 = sim
            .branches()
            .map(|(ones, amp)| {
                amp.conj() * recovered.get(ones).copied().unwrap_or(Complex64::new(0.0, 0.0))
            })
            .sum();
        recovery_min = recovery_min.min(overlap.norm_sqr());
    }
    let residue_independent = residues.len() == 1 && residues.contains(&layout.config);
    gate.check(
        10,
        "coding recovery",
        recovery_min >= 1.0 - 1e-9 && residue_independent,
        format!(
            "worst recovery {recovery_min:.12}; distinct residues {}",
            residues.len()
        ),
        started,
    );

    assert!(
        gate.failures.is_empty(),
        "failed acceptance criteria:\n{}",
        gate.failures.join("\n")
    );
}
