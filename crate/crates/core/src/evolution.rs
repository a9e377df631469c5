//! Superpositions of finite configurations and the global dynamics.
//!
//! A [`Superposition`] is a sparse map from canonical [`Configuration`]s to
//! complex amplitudes. One step applies the scattering table independently to
//! every active block of the current parity — inactive blocks are all-empty
//! and fixed by quiescence — then merges the resulting branches by canonical
//! key with amplitude addition, so interference happens at merge time. The
//! partition parity flips every step.
//!
//! Two structural facts about the scattering table keep stepping cheap, and
//! are pinned by its unit tests: barriers never move (every row preserves the
//! barrier layout), and blocks without signals are identity rows. A
//! superposition therefore stores the static barrier *scenery* once, shared
//! by all branches, and keys branches by their signal cells alone; a step
//! only visits blocks containing signals.
//!
//! Merging is deterministic: branch expansions are collected in branch order
//! (parallel or not), sorted by canonical configuration, and summed
//! sequentially, so results are bit-stable across runs and thread counts.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::lattice::{BlockCells, CellState, Configuration, Coord, Parity, BLOCK_CELL_OFFSETS};
use crate::scattering::ScatteringTable;

/// Branches with |amplitude| below this are dropped after each merge.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 1e-12;

/// Default ceiling on the number of branches before a step refuses to grow.
pub const DEFAULT_BRANCH_CAP: usize = 1 << 20;

/// Norm drift beyond this after a step indicates a table or merge bug.
pub const NORM_DRIFT_TOLERANCE: f64 = 1e-6;

/// Below this many branches a step expands sequentially; parallel and
/// sequential paths produce identical output.
const PARALLEL_THRESHOLD: usize = 16;

/// Tuning knobs for [`Superposition::step`].
#[derive(Debug, Clone, Copy)]
pub struct StepOptions {
    pub prune_threshold: f64,
    pub branch_cap: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            branch_cap: DEFAULT_BRANCH_CAP,
        }
    }
}

/// Errors surfaced by stepping a superposition.
#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("norm drifted to {norm} after step to t={time} (tolerance {NORM_DRIFT_TOLERANCE})")]
    NormDrift { norm: f64, time: i64 },
    #[error("branch count {count} exceeds cap {cap} after step to t={time}")]
    BranchOverflow {
        count: usize,
        cap: usize,
        time: i64,
    },
    #[error("branches disagree on barrier placement; a superposition has one scenery")]
    MixedScenery,
}

/// Per-step telemetry from [`Superposition::run`].
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub time: i64,
    pub branches: usize,
    pub norm: f64,
}

/// Result of a multi-step run: final state plus per-step telemetry.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub state: Superposition,
    pub stats: Vec<StepStats>,
}

/// A normalized superposition of finite configurations at a point in time.
///
/// `parity` is the partition the *next* forward step will use; it is stored
/// rather than derived from `time` so runs can start in either phase.
/// Values are immutable snapshots: stepping returns a new superposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Superposition {
    /// Barrier cells, identical in every branch and fixed by the dynamics.
    scenery: Configuration,
    /// Signal cells per branch; the physical configuration of a branch is
    /// the overlay of `scenery` and its key.
    branches: BTreeMap<Configuration, Complex64>,
    pub time: i64,
    pub parity: Parity,
}

impl Superposition {
    /// The basis state `|config>` at time 0, about to step with `parity`.
    pub fn basis_state(config: Configuration, parity: Parity) -> Self {
        let (scenery, signals) = config.partition_signals();
        let mut branches = BTreeMap::new();
        branches.insert(signals, Complex64::new(1.0, 0.0));
        Superposition {
            scenery,
            branches,
            time: 0,
            parity,
        }
    }

    /// A weighted superposition of full configurations at time 0.
    ///
    /// Amplitudes are taken as given (zeros dropped, duplicates summed); the
    /// caller is responsible for normalization. Every configuration must
    /// place barriers identically, since barriers never move.
    pub fn from_weighted<I>(branches: I, parity: Parity) -> Result<Self, EvolutionError>
    where
        I: IntoIterator<Item = (Configuration, Complex64)>,
    {
        let mut scenery: Option<Configuration> = None;
        let mut map: BTreeMap<Configuration, Complex64> = BTreeMap::new();
        for (config, amp) in branches {
            let (barriers, signals) = config.partition_signals();
            match &scenery {
                None => scenery = Some(barriers),
                Some(s) if *s == barriers => {}
                Some(_) => return Err(EvolutionError::MixedScenery),
            }
            if amp != Complex64::new(0.0, 0.0) {
                *map.entry(signals).or_insert(Complex64::new(0.0, 0.0)) += amp;
            }
        }
        Ok(Superposition {
            scenery: scenery.unwrap_or_default(),
            branches: map,
            time: 0,
            parity,
        })
    }

    /// The shared barrier cells.
    pub fn scenery(&self) -> &Configuration {
        &self.scenery
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Signal-only branch contents in canonical order.
    pub fn signal_branches(&self) -> impl Iterator<Item = (&Configuration, Complex64)> + '_ {
        self.branches.iter().map(|(c, a)| (c, *a))
    }

    /// Full branch configurations (scenery + signals) in canonical order.
    pub fn branches(&self) -> impl Iterator<Item = (Configuration, Complex64)> + '_ {
        self.branches
            .iter()
            .map(|(c, a)| (self.scenery.overlay(c), *a))
    }

    /// Amplitude of a specific full configuration (zero if absent).
    pub fn amplitude(&self, config: &Configuration) -> Complex64 {
        let (barriers, signals) = config.partition_signals();
        if barriers != self.scenery {
            return Complex64::new(0.0, 0.0);
        }
        self.branches
            .get(&signals)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn norm(&self) -> f64 {
        self.branches
            .values()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// One forward step with the built-in scattering table.
    pub fn step(&self, opts: &StepOptions) -> Result<Superposition, EvolutionError> {
        self.apply(
            ScatteringTable::shared(),
            self.parity,
            self.time + 1,
            self.parity.flip(),
            opts,
        )
    }

    /// One reverse step: applies the adjoint table against the parity of the
    /// step that produced this state, restoring its predecessor.
    pub fn step_back(&self, opts: &StepOptions) -> Result<Superposition, EvolutionError> {
        let undone = self.parity.flip();
        self.apply(
            ScatteringTable::shared_adjoint(),
            undone,
            self.time - 1,
            undone,
            opts,
        )
    }

    /// `steps` forward steps, recording branch-count and norm telemetry.
    pub fn run(&self, steps: u64, opts: &StepOptions) -> Result<RunReport, EvolutionError> {
        let mut state = self.clone();
        let mut stats = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            state = state.step(opts)?;
            stats.push(StepStats {
                time: state.time,
                branches: state.branch_count(),
                norm: state.norm(),
            });
        }
        Ok(RunReport { state, stats })
    }

    /// `|<self|other>|`, summed over the union of branch keys.
    pub fn fidelity(&self, other: &Superposition) -> f64 {
        if self.scenery != other.scenery {
            return 0.0;
        }
        let (small, large) = if self.branches.len() <= other.branches.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut overlap = Complex64::new(0.0, 0.0);
        for (config, amp) in &small.branches {
            if let Some(other_amp) = large.branches.get(config) {
                // Conjugation order is irrelevant under the absolute value.
                overlap += amp.conj() * other_amp;
            }
        }
        overlap.norm()
    }

    /// Branch dump: `---`-separated records of `amp <re> <im>` followed by
    /// the branch's full grid text, in canonical branch order.
    pub fn dump_branches(&self) -> String {
        let records: Vec<String> = self
            .branches()
            .map(|(config, amp)| format!("amp {} {}\n{}", amp.re, amp.im, config.to_grid()))
            .collect();
        records.join("---\n")
    }

    fn apply(
        &self,
        table: &ScatteringTable,
        parity: Parity,
        new_time: i64,
        new_parity: Parity,
        opts: &StepOptions,
    ) -> Result<Superposition, EvolutionError> {
        let inputs: Vec<(&Configuration, Complex64)> =
            self.branches.iter().map(|(c, a)| (c, *a)).collect();

        let expanded: Vec<Vec<(Configuration, Complex64)>> =
            if inputs.len() >= PARALLEL_THRESHOLD {
                inputs
                    .par_iter()
                    .map(|(signals, amp)| expand_branch(table, &self.scenery, signals, *amp, parity))
                    .collect()
            } else {
                inputs
                    .iter()
                    .map(|(signals, amp)| expand_branch(table, &self.scenery, signals, *amp, parity))
                    .collect()
            };

        let mut contributions: Vec<(Configuration, Complex64)> =
            expanded.into_iter().flatten().collect();
        contributions.sort_unstable_by(|a, b| a.0.cmp(&b.0));

        let mut branches: BTreeMap<Configuration, Complex64> = BTreeMap::new();
        let mut iter = contributions.into_iter();
        if let Some((mut key, mut acc)) = iter.next() {
            for (config, amp) in iter {
                if config == key {
                    acc += amp;
                } else {
                    if acc.norm() >= opts.prune_threshold {
                        branches.insert(key, acc);
                    }
                    key = config;
                    acc = amp;
                }
            }
            if acc.norm() >= opts.prune_threshold {
                branches.insert(key, acc);
            }
        }

        let result = Superposition {
            scenery: self.scenery.clone(),
            branches,
            time: new_time,
            parity: new_parity,
        };
        let norm = result.norm();
        if (norm - 1.0).abs() > NORM_DRIFT_TOLERANCE {
            return Err(EvolutionError::NormDrift {
                norm,
                time: new_time,
            });
        }
        if result.branch_count() > opts.branch_cap {
            return Err(EvolutionError::BranchOverflow {
                count: result.branch_count(),
                cap: opts.branch_cap,
                time: new_time,
            });
        }
        Ok(result)
    }
}

/// Block contents seen through the scenery/signal overlay.
fn read_overlay_block(scenery: &Configuration, signals: &Configuration, origin: Coord) -> BlockCells {
    let mut cells = [CellState::Empty; 4];
    for (slot, (dx, dy)) in cells.iter_mut().zip(BLOCK_CELL_OFFSETS) {
        let c = origin.offset(dx, dy);
        let s = signals.get(c);
        *slot = if s == CellState::Empty { scenery.get(c) } else { s };
    }
    BlockCells(cells)
}

/// Write a block result back into the signal layer. Barrier cells stay in
/// the scenery (the table preserves barrier layout row-by-row).
fn write_signal_block(signals: &mut Configuration, scenery: &Configuration, origin: Coord, block: BlockCells) {
    for (state, (dx, dy)) in block.0.into_iter().zip(BLOCK_CELL_OFFSETS) {
        let c = origin.offset(dx, dy);
        match state {
            CellState::Barrier => debug_assert_eq!(scenery.get(c), CellState::Barrier),
            s => signals.set(c, s),
        }
    }
}

/// Apply the table to every signal-bearing block of one branch, producing
/// its (unmerged) output contributions. Blocks are disjoint, so input blocks
/// are read up front and outputs written independently; signal-free blocks
/// are identity rows and are skipped wholesale.
fn expand_branch(
    table: &ScatteringTable,
    scenery: &Configuration,
    signals: &Configuration,
    amp: Complex64,
    parity: Parity,
) -> Vec<(Configuration, Complex64)> {
    let origins: Vec<Coord> = signals.active_blocks(parity).into_iter().collect();
    let mut partials: Vec<(Configuration, Complex64)> = vec![(signals.clone(), amp)];
    for origin in origins {
        let input = read_overlay_block(scenery, signals, origin);
        let row = table.apply_block(input);
        if let [(out, weight)] = row {
            if *out == input.index() {
                if (weight - 1.0).norm() > 1e-15 {
                    for (_, a) in &mut partials {
                        *a *= weight;
                    }
                }
                continue;
            }
            let out_block = BlockCells::from_index(*out);
            for (cfg, a) in &mut partials {
                write_signal_block(cfg, scenery, origin, out_block);
                *a *= weight;
            }
        } else {
            let mut next = Vec::with_capacity(partials.len() * row.len());
            for (cfg, a) in &partials {
                for (out, weight) in row {
                    let mut branched = cfg.clone();
                    write_signal_block(&mut branched, scenery, origin, BlockCells::from_index(*out));
                    next.push((branched, a * weight));
                }
            }
            partials = next;
        }
    }
    partials
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::CellState;

    fn cfg(cells: &[(i64, i64, CellState)]) -> Configuration {
        cells
            .iter()
            .map(|(x, y, s)| (Coord::new(*x, *y), *s))
            .collect()
    }

    fn opts() -> StepOptions {
        StepOptions::default()
    }

    #[test]
    fn lone_signal_travels_north_east() {
        let start = Superposition::basis_state(
            cfg(&[(0, 0, CellState::Sig0)]),
            Parity::Aligned,
        );
        let after = start.step(&opts()).unwrap();
        assert_eq!(after.branch_count(), 1);
        assert_eq!(after.time, 1);
        assert_eq!(after.parity, Parity::Shifted);
        let expected = cfg(&[(1, 1, CellState::Sig0)]);
        assert!((after.amplitude(&expected) - 1.0).norm() < 1e-12);

        let far = start.run(24, &opts()).unwrap().state;
        let expected = cfg(&[(24, 24, CellState::Sig0)]);
        assert!((far.amplitude(&expected) - 1.0).norm() < 1e-12);
    }

    #[test]
    fn empty_state_is_fixed() {
        let start = Superposition::basis_state(Configuration::new(), Parity::Aligned);
        let after = start.run(10, &opts()).unwrap().state;
        assert_eq!(after.branch_count(), 1);
        assert!((after.amplitude(&Configuration::new()) - 1.0).norm() < 1e-12);
    }

    #[test]
    fn barrier_only_state_is_fixed() {
        let walls = cfg(&[
            (0, 0, CellState::Barrier),
            (1, 0, CellState::Barrier),
            (4, 3, CellState::Barrier),
            (5, 4, CellState::Barrier),
        ]);
        let start = Superposition::basis_state(walls.clone(), Parity::Aligned);
        let after = start.run(7, &opts()).unwrap().state;
        assert!((after.amplitude(&walls) - 1.0).norm() < 1e-12);
    }

    #[test]
    fn zero_steps_is_identity() {
        let start = Superposition::basis_state(
            cfg(&[(0, 0, CellState::Sig1), (5, 2, CellState::Barrier)]),
            Parity::Aligned,
        );
        let report = start.run(0, &opts()).unwrap();
        assert_eq!(report.state, start);
        assert!(report.stats.is_empty());
    }

    #[test]
    fn diagonal_barriers_split_a_signal() {
        let start = Superposition::basis_state(
            cfg(&[
                (0, 0, CellState::Sig0),
                (0, 1, CellState::Barrier),
                (1, 0, CellState::Barrier),
            ]),
            Parity::Aligned,
        );
        let after = start.step(&opts()).unwrap();
        assert_eq!(after.branch_count(), 2);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let zero_branch = cfg(&[
            (1, 1, CellState::Sig0),
            (0, 1, CellState::Barrier),
            (1, 0, CellState::Barrier),
        ]);
        let one_branch = cfg(&[
            (1, 1, CellState::Sig1),
            (0, 1, CellState::Barrier),
            (1, 0, CellState::Barrier),
        ]);
        assert!((after.amplitude(&zero_branch).norm() - h).abs() < 1e-12);
        assert!((after.amplitude(&one_branch).norm() - h).abs() < 1e-12);
        assert!((after.norm() - 1.0).abs() < 1e-12);
    }

    /// Two successive diagonal-barrier crossings undo each other (the value
    /// map is an involution), so the branches recombine by interference.
    #[test]
    fn double_split_recombines_to_original_value() {
        let mut config = cfg(&[(0, 0, CellState::Sig1)]);
        for (bx, by) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
            config.set(Coord::new(bx, by), CellState::Barrier);
        }
        let start = Superposition::basis_state(config.clone(), Parity::Aligned);
        let mid = start.step(&opts()).unwrap();
        assert_eq!(mid.branch_count(), 2);
        let done = mid.run(2, &opts()).unwrap().state;
        assert_eq!(done.branch_count(), 1);
        let mut expected = config;
        expected.set(Coord::new(0, 0), CellState::Empty);
        expected.set(Coord::new(3, 3), CellState::Sig1);
        assert!((done.amplitude(&expected).norm() - 1.0).abs() < 1e-9);
    }

    /// A signal crossing a line of evenly spaced diagonal-barrier pairs keeps
    /// recombining; the norm stays pinned at 1 over a long run.
    fn mirror_strip() -> Configuration {
        let mut config = cfg(&[(20, 0, CellState::Sig1)]);
        for k in 0..25 {
            config.set(Coord::new(20 + 4 * k, 4 * k + 1), CellState::Barrier);
            config.set(Coord::new(21 + 4 * k, 4 * k), CellState::Barrier);
        }
        config
    }

    fn billiard_box() -> Configuration {
        let mut config = Configuration::new();
        for i in 0..=9 {
            for (x, y) in [(i, 0), (i, 9), (0, i), (9, i)] {
                config.set(Coord::new(x, y), CellState::Barrier);
            }
        }
        config.set(Coord::new(2, 2), CellState::Sig1);
        config.set(Coord::new(4, 4), CellState::Sig0);
        config.set(Coord::new(5, 2), CellState::Sig1);
        config
    }

    #[test]
    fn norm_is_conserved_over_a_long_run() {
        let config = mirror_strip().overlay(&billiard_box());
        let start = Superposition::basis_state(config, Parity::Aligned);
        let report = start.run(100, &opts()).unwrap();
        for stat in &report.stats {
            assert!((stat.norm - 1.0).abs() <= 1e-9, "t={} norm={}", stat.time, stat.norm);
            assert!(stat.branches <= 8, "t={} branches={}", stat.time, stat.branches);
        }
    }

    #[test]
    fn reverse_steps_recover_the_initial_state() {
        let start = Superposition::basis_state(mirror_strip(), Parity::Aligned);
        let mut state = start.run(24, &opts()).unwrap().state;
        for _ in 0..24 {
            state = state.step_back(&opts()).unwrap();
        }
        assert_eq!(state.time, 0);
        assert_eq!(state.parity, Parity::Aligned);
        assert!(start.fidelity(&state) >= 1.0 - 1e-9);
    }

    #[test]
    fn support_expands_at_most_one_cell_per_axis_per_step() {
        let mut state = Superposition::basis_state(mirror_strip(), Parity::Aligned);
        let bbox = |s: &Superposition| {
            let mut lo = Coord::new(i64::MAX, i64::MAX);
            let mut hi = Coord::new(i64::MIN, i64::MIN);
            for (config, _) in s.signal_branches() {
                if let Some((min, max)) = config.bounds() {
                    lo.x = lo.x.min(min.x);
                    lo.y = lo.y.min(min.y);
                    hi.x = hi.x.max(max.x);
                    hi.y = hi.y.max(max.y);
                }
            }
            (lo, hi)
        };
        for _ in 0..30 {
            let (lo, hi) = bbox(&state);
            state = state.step(&opts()).unwrap();
            let (lo2, hi2) = bbox(&state);
            assert!(lo2.x >= lo.x - 1 && lo2.y >= lo.y - 1);
            assert!(hi2.x <= hi.x + 1 && hi2.y <= hi.y + 1);
        }
    }

    #[test]
    fn fidelity_basics() {
        let a = Superposition::basis_state(cfg(&[(0, 0, CellState::Sig0)]), Parity::Aligned);
        let b = Superposition::basis_state(cfg(&[(2, 0, CellState::Sig0)]), Parity::Aligned);
        assert!((a.fidelity(&a) - 1.0).abs() < 1e-12);
        assert_eq!(a.fidelity(&b), 0.0);
    }

    #[test]
    fn split_fidelity_matches_analytic_pair() {
        let start = Superposition::basis_state(
            cfg(&[
                (0, 0, CellState::Sig1),
                (0, 1, CellState::Barrier),
                (1, 0, CellState::Barrier),
            ]),
            Parity::Aligned,
        );
        let after = start.step(&opts()).unwrap();
        // Hand-built expected state.
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut expected = BTreeMap::new();
        for (value, sign) in [(CellState::Sig0, 1.0), (CellState::Sig1, -1.0)] {
            expected.insert(cfg(&[(1, 1, value)]), Complex64::new(sign * h, 0.0));
        }
        let expected = Superposition {
            scenery: cfg(&[(0, 1, CellState::Barrier), (1, 0, CellState::Barrier)]),
            branches: expected,
            time: 1,
            parity: Parity::Shifted,
        };
        assert!((after.fidelity(&expected) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn branch_cap_is_enforced() {
        // Four independent splitters make four simultaneous splits: 16 branches.
        let mut config = Configuration::new();
        for k in 0..4 {
            let x = 8 * k;
            config.set(Coord::new(x, 0), CellState::Sig0);
            config.set(Coord::new(x, 1), CellState::Barrier);
            config.set(Coord::new(x + 1, 0), CellState::Barrier);
        }
        let start = Superposition::basis_state(config, Parity::Aligned);
        let tight = StepOptions {
            branch_cap: 8,
            ..StepOptions::default()
        };
        match start.step(&tight) {
            Err(EvolutionError::BranchOverflow { count: 16, cap: 8, .. }) => {}
            other => panic!("expected overflow, got {other:?}"),
        }
        assert_eq!(start.step(&opts()).unwrap().branch_count(), 16);
    }

    #[test]
    fn dump_is_stable_across_thread_counts() {
        let run_with = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                // 8 splitters force 256 branches through the parallel path.
                let mut config = Configuration::new();
                for k in 0..4 {
                    let x = 8 * k;
                    config.set(Coord::new(x, 0), CellState::Sig1);
                    config.set(Coord::new(x, 1), CellState::Barrier);
                    config.set(Coord::new(x + 1, 0), CellState::Barrier);
                    config.set(Coord::new(x + 4, 5), CellState::Barrier);
                    config.set(Coord::new(x + 5, 4), CellState::Barrier);
                    config.set(Coord::new(x + 4, 4), CellState::Sig0);
                }
                Superposition::basis_state(config, Parity::Aligned)
                    .run(6, &opts())
                    .unwrap()
                    .state
                    .dump_branches()
            })
        };
        let single = run_with(1);
        let multi = run_with(4);
        assert_eq!(single, multi);
        assert!(single.contains("---\n"));
        assert!(single.starts_with("amp "));
    }
}
