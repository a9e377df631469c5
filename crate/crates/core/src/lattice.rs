//! Cells, coordinates, finite configurations, and 2x2 block geometry.
//!
//! The lattice is the infinite grid `Z^2` with `x` growing east and `y`
//! growing north. Only finitely many cells ever differ from [`CellState::Empty`],
//! so a [`Configuration`] stores just the non-empty cells. Iteration order over
//! cells is *canonical*: north-to-south rows, west-to-east within a row. That
//! order is baked into [`Coord`]'s `Ord` so every map or set keyed by
//! coordinates enumerates deterministically.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// A lattice coordinate. `x` grows east, `y` grows north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coord {
    pub x: i64,
    pub y: i64,
}

impl Coord {
    pub const fn new(x: i64, y: i64) -> Self {
        Coord { x, y }
    }

    /// Component-wise translation.
    pub fn offset(self, dx: i64, dy: i64) -> Self {
        Coord::new(self.x + dx, self.y + dy)
    }
}

impl Ord for Coord {
    /// Canonical scan order: decreasing `y` (north first), then increasing `x`.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.y.cmp(&self.y).then(self.x.cmp(&other.x))
    }
}

impl PartialOrd for Coord {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// State of a single cell.
///
/// Signals are the mobile states and carry one qubit of data in their
/// `Sig0`/`Sig1` value; barriers are immobile scenery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum CellState {
    #[default]
    Empty,
    Sig0,
    Sig1,
    Barrier,
}

impl CellState {
    /// Numeric code used to index the scattering basis: `Empty` = 0,
    /// `Sig0` = 1, `Sig1` = 2, `Barrier` = 3.
    pub fn code(self) -> u8 {
        match self {
            CellState::Empty => 0,
            CellState::Sig0 => 1,
            CellState::Sig1 => 2,
            CellState::Barrier => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(CellState::Empty),
            1 => Some(CellState::Sig0),
            2 => Some(CellState::Sig1),
            3 => Some(CellState::Barrier),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            CellState::Empty => '.',
            CellState::Sig0 => '0',
            CellState::Sig1 => '1',
            CellState::Barrier => '#',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '.' => Some(CellState::Empty),
            '0' => Some(CellState::Sig0),
            '1' => Some(CellState::Sig1),
            '#' => Some(CellState::Barrier),
            _ => None,
        }
    }

    /// True for `Sig0` and `Sig1`.
    pub fn is_signal(self) -> bool {
        matches!(self, CellState::Sig0 | CellState::Sig1)
    }

    /// The qubit value carried by a signal, if this is one.
    pub fn signal_bit(self) -> Option<u8> {
        match self {
            CellState::Sig0 => Some(0),
            CellState::Sig1 => Some(1),
            _ => None,
        }
    }
}

/// Which of the two interleaved 2x2 partitions is active.
///
/// `Aligned` blocks have even-coordinate origins, `Shifted` blocks odd. The
/// automaton alternates between them, starting `Aligned` on the first step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Aligned,
    Shifted,
}

impl Parity {
    /// Parity active on step number `step` (steps count from 1).
    pub fn for_step(step: u64) -> Self {
        if step % 2 == 1 {
            Parity::Aligned
        } else {
            Parity::Shifted
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Parity::Aligned => Parity::Shifted,
            Parity::Shifted => Parity::Aligned,
        }
    }

    /// Origin (south-west cell) of the block containing `c` under this parity.
    pub fn block_origin(self, c: Coord) -> Coord {
        match self {
            Parity::Aligned => Coord::new(c.x - c.x.rem_euclid(2), c.y - c.y.rem_euclid(2)),
            Parity::Shifted => Coord::new(
                c.x - (c.x + 1).rem_euclid(2),
                c.y - (c.y + 1).rem_euclid(2),
            ),
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parity::Aligned => write!(f, "aligned"),
            Parity::Shifted => write!(f, "shifted"),
        }
    }
}

/// Offsets of a block's four cells from its origin, in reading order
/// (NW, NE, SW, SE). The origin is the SW cell.
pub const BLOCK_CELL_OFFSETS: [(i64, i64); 4] = [(0, 1), (1, 1), (0, 0), (1, 0)];

/// Contents of one 2x2 block in reading order (NW, NE, SW, SE).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockCells(pub [CellState; 4]);

impl BlockCells {
    pub const EMPTY: BlockCells = BlockCells([CellState::Empty; 4]);

    pub fn nw(self) -> CellState {
        self.0[0]
    }
    pub fn ne(self) -> CellState {
        self.0[1]
    }
    pub fn sw(self) -> CellState {
        self.0[2]
    }
    pub fn se(self) -> CellState {
        self.0[3]
    }

    /// Basis index in `0..256`: base-4 digits NW, NE, SW, SE (NW most
    /// significant) with each cell's [`CellState::code`].
    pub fn index(self) -> usize {
        self.0
            .iter()
            .fold(0usize, |acc, cell| acc * 4 + cell.code() as usize)
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < 256, "block basis index out of range: {index}");
        let digit = |shift: u32| CellState::from_code(((index >> shift) & 3) as u8).unwrap();
        BlockCells([digit(6), digit(4), digit(2), digit(0)])
    }

    /// Rotate the block contents a quarter turn clockwise:
    /// NW -> NE -> SE -> SW -> NW.
    pub fn rotate_cw(self) -> Self {
        let [nw, ne, sw, se] = self.0;
        BlockCells([sw, nw, se, ne])
    }

    pub fn count_barriers(self) -> usize {
        self.0.iter().filter(|c| **c == CellState::Barrier).count()
    }

    pub fn count_signals(self) -> usize {
        self.0.iter().filter(|c| c.is_signal()).count()
    }

    pub fn is_empty(self) -> bool {
        self.0.iter().all(|c| *c == CellState::Empty)
    }

    /// Render as four characters in reading order, e.g. `".1.#"`.
    pub fn to_chars(self) -> String {
        self.0.iter().map(|c| c.to_char()).collect()
    }

    pub fn from_chars(s: &str) -> Option<Self> {
        let mut cells = [CellState::Empty; 4];
        let mut chars = s.chars();
        for slot in cells.iter_mut() {
            *slot = CellState::from_char(chars.next()?)?;
        }
        if chars.next().is_some() {
            return None;
        }
        Some(BlockCells(cells))
    }
}

/// Error parsing the grid text format.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("missing `offset <x> <y>` header line")]
    MissingHeader,
    #[error("malformed offset header: {0:?}")]
    BadHeader(String),
    #[error("invalid cell character {ch:?} at row {row}, column {col}")]
    BadCell { ch: char, row: usize, col: usize },
}

/// A finite configuration: the set of non-empty cells.
///
/// Equality, hashing, and iteration all follow the canonical cell order, so
/// two configurations with the same non-empty cells are identical values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Configuration {
    cells: BTreeMap<Coord, CellState>,
}

impl Configuration {
    pub fn new() -> Self {
        Configuration::default()
    }

    /// State of cell `c` (`Empty` when absent from the map).
    pub fn get(&self, c: Coord) -> CellState {
        self.cells.get(&c).copied().unwrap_or(CellState::Empty)
    }

    /// Set cell `c`; writing `Empty` removes the entry.
    pub fn set(&mut self, c: Coord, state: CellState) {
        if state == CellState::Empty {
            self.cells.remove(&c);
        } else {
            self.cells.insert(c, state);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    /// Non-empty cells in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (Coord, CellState)> + '_ {
        self.cells.iter().map(|(c, s)| (*c, *s))
    }

    /// Origins of every block, under `parity`, that contains at least one
    /// non-empty cell. Blocks outside this set map empty to empty, so these
    /// are the only blocks a step needs to touch.
    pub fn active_blocks(&self, parity: Parity) -> BTreeSet<Coord> {
        self.cells
            .keys()
            .map(|c| parity.block_origin(*c))
            .collect()
    }

    /// Read the block with origin (SW cell) `origin`.
    pub fn read_block(&self, origin: Coord) -> BlockCells {
        let mut cells = [CellState::Empty; 4];
        for (slot, (dx, dy)) in cells.iter_mut().zip(BLOCK_CELL_OFFSETS) {
            *slot = self.get(origin.offset(dx, dy));
        }
        BlockCells(cells)
    }

    /// Overwrite the block with origin `origin`.
    pub fn write_block(&mut self, origin: Coord, block: BlockCells) {
        for (state, (dx, dy)) in block.0.into_iter().zip(BLOCK_CELL_OFFSETS) {
            self.set(origin.offset(dx, dy), state);
        }
    }

    /// Split into (barrier cells, signal cells). The two parts are disjoint
    /// and their overlay reconstructs `self`.
    pub fn partition_signals(&self) -> (Configuration, Configuration) {
        let mut barriers = Configuration::new();
        let mut signals = Configuration::new();
        for (c, s) in self.iter() {
            if s == CellState::Barrier {
                barriers.set(c, s);
            } else {
                signals.set(c, s);
            }
        }
        (barriers, signals)
    }

    /// Union with `other`, whose cells win on (never-expected) overlap.
    pub fn overlay(&self, other: &Configuration) -> Configuration {
        let mut out = self.clone();
        for (c, s) in other.iter() {
            out.set(c, s);
        }
        out
    }

    /// The configuration translated by `(dx, dy)`.
    pub fn translate(&self, dx: i64, dy: i64) -> Self {
        Configuration {
            cells: self
                .cells
                .iter()
                .map(|(c, s)| (c.offset(dx, dy), *s))
                .collect(),
        }
    }

    /// Bounding box `(min, max)` over non-empty cells, or `None` if empty.
    pub fn bounds(&self) -> Option<(Coord, Coord)> {
        let mut iter = self.cells.keys();
        let first = *iter.next()?;
        let (mut min, mut max) = (first, first);
        for c in iter {
            min.x = min.x.min(c.x);
            min.y = min.y.min(c.y);
            max.x = max.x.max(c.x);
            max.y = max.y.max(c.y);
        }
        Some((min, max))
    }

    /// Parse the grid text format:
    ///
    /// ```text
    /// offset <x> <y>
    /// <row>...
    /// ```
    ///
    /// The header gives the coordinate of the first character of the first
    /// row; rows run north to south and characters west to east. Cells are
    /// `.` `0` `1` `#`; a row shorter than its neighbours is padded with
    /// empties on the right.
    pub fn parse_grid(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(GridError::MissingHeader)?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (x0, y0) = match fields.as_slice() {
            ["offset", x, y] => match (x.parse::<i64>(), y.parse::<i64>()) {
                (Ok(x), Ok(y)) => (x, y),
                _ => return Err(GridError::BadHeader(header.to_string())),
            },
            _ => return Err(GridError::BadHeader(header.to_string())),
        };
        let mut config = Configuration::new();
        for (row, line) in lines.enumerate() {
            for (col, ch) in line.chars().enumerate() {
                let state = CellState::from_char(ch).ok_or(GridError::BadCell {
                    ch,
                    row: row + 1,
                    col: col + 1,
                })?;
                config.set(Coord::new(x0 + col as i64, y0 - row as i64), state);
            }
        }
        Ok(config)
    }

    /// Serialize to the grid text format. The bounding box determines the
    /// offset header; trailing empties in each row are omitted. The output
    /// round-trips through [`Configuration::parse_grid`].
    pub fn to_grid(&self) -> String {
        let Some((min, max)) = self.bounds() else {
            return "offset 0 0\n".to_string();
        };
        let mut out = format!("offset {} {}\n", min.x, max.y);
        for y in (min.y..=max.y).rev() {
            let mut row: String = (min.x..=max.x)
                .map(|x| self.get(Coord::new(x, y)).to_char())
                .collect();
            while row.ends_with('.') {
                row.pop();
            }
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

impl FromIterator<(Coord, CellState)> for Configuration {
    fn from_iter<T: IntoIterator<Item = (Coord, CellState)>>(iter: T) -> Self {
        let mut config = Configuration::new();
        for (c, s) in iter {
            config.set(c, s);
        }
        config
    }
}
