//! QCA designs: cells, roles, clock zones and the expected truth table.
//!
//! A [`Layout`] is validated once on construction and is immutable afterwards,
//! so it can be shared freely between concurrent simulation runs.

mod format;
mod library;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{parse_layout, serialize_layout, ParseError, ParseErrorKind};
pub use library::{builtin_circuit, BUILTIN_NAMES, REVERSIBLE_NAMES};

/// Locked polarization of a fixed cell, or the logic value of a driven one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// P = -1, binary 0.
    Neg,
    /// P = +1, binary 1.
    Pos,
}

impl Polarity {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Polarity::Pos
        } else {
            Polarity::Neg
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Polarity::Neg => -1.0,
            Polarity::Pos => 1.0,
        }
    }

    pub fn bit(self) -> bool {
        self == Polarity::Pos
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellRole {
    Normal,
    Input(String),
    Output(String),
    Fixed(Polarity),
}

impl CellRole {
    pub fn input_label(&self) -> Option<&str> {
        match self {
            CellRole::Input(l) => Some(l),
            _ => None,
        }
    }

    pub fn output_label(&self) -> Option<&str> {
        match self {
            CellRole::Output(l) => Some(l),
            _ => None,
        }
    }

    /// Cells whose coherence vector is integrated (as opposed to driven).
    pub fn is_free(&self) -> bool {
        matches!(self, CellRole::Normal | CellRole::Output(_))
    }
}

/// One of the four clock zones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ClockZone(u8);

impl ClockZone {
    pub const COUNT: u8 = 4;

    pub fn new(zone: u8) -> Option<Self> {
        (zone < Self::COUNT).then_some(ClockZone(zone))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// The zone that switches while this one holds.
    pub fn next(self) -> Self {
        ClockZone((self.0 + 1) % Self::COUNT)
    }

    pub fn prev(self) -> Self {
        ClockZone((self.0 + Self::COUNT - 1) % Self::COUNT)
    }
}

impl TryFrom<u8> for ClockZone {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        ClockZone::new(value).ok_or_else(|| format!("unknown clock zone {value}"))
    }
}

impl From<ClockZone> for u8 {
    fn from(z: ClockZone) -> u8 {
        z.0
    }
}

impl fmt::Display for ClockZone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A QCA cell. Positions are cell centers in nanometers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub layer: u32,
    pub zone: ClockZone,
    pub role: CellRole,
}

impl Cell {
    pub fn new(x: f64, y: f64, layer: u32, zone: ClockZone, role: CellRole) -> Self {
        Cell {
            id: 0,
            x,
            y,
            layer,
            zone,
            role,
        }
    }
}

/// One row of a truth table: input bits in the table's input-label order
/// and output bits in its output-label order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub inputs: Vec<bool>,
    pub outputs: Vec<bool>,
}

/// Expected logic of a design. Input labels are kept sorted so that row
/// indices coincide with binary counting (first label = MSB).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TruthTableDoc", into = "TruthTableDoc")]
pub struct TruthTable {
    inputs: Vec<String>,
    outputs: Vec<String>,
    rows: Vec<TruthRow>,
}

#[derive(Serialize, Deserialize)]
struct TruthTableDoc {
    inputs: Vec<String>,
    outputs: Vec<String>,
    rows: Vec<TruthRow>,
}

impl TryFrom<TruthTableDoc> for TruthTable {
    type Error = LayoutError;

    fn try_from(doc: TruthTableDoc) -> Result<Self, Self::Error> {
        TruthTable::new(doc.inputs, doc.outputs, doc.rows)
    }
}

impl From<TruthTable> for TruthTableDoc {
    fn from(t: TruthTable) -> Self {
        TruthTableDoc {
            inputs: t.inputs,
            outputs: t.outputs,
            rows: t.rows,
        }
    }
}

impl TruthTable {
    /// Builds a table, reordering input columns into sorted label order and
    /// rows into binary-counting order.
    pub fn new(
        inputs: Vec<String>,
        outputs: Vec<String>,
        rows: Vec<TruthRow>,
    ) -> Result<Self, LayoutError> {
        let mut seen = HashSet::new();
        for l in inputs.iter().chain(outputs.iter()) {
            if !seen.insert(l.as_str()) {
                return Err(LayoutError::DuplicateLabel(l.clone()));
            }
        }
        for r in &rows {
            if r.inputs.len() != inputs.len() || r.outputs.len() != outputs.len() {
                return Err(LayoutError::MalformedLogic(format!(
                    "row has {} input and {} output bits, expected {} and {}",
                    r.inputs.len(),
                    r.outputs.len(),
                    inputs.len(),
                    outputs.len()
                )));
            }
        }
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.sort_by(|&a, &b| inputs[a].cmp(&inputs[b]));
        let sorted_inputs = order.iter().map(|&i| inputs[i].clone()).collect();
        let mut sorted_rows: Vec<TruthRow> = rows
            .into_iter()
            .map(|r| TruthRow {
                inputs: order.iter().map(|&i| r.inputs[i]).collect(),
                outputs: r.outputs,
            })
            .collect();
        sorted_rows.sort_by_key(|r| bits_to_index(&r.inputs));
        for w in sorted_rows.windows(2) {
            if w[0].inputs == w[1].inputs {
                return Err(LayoutError::MalformedLogic(format!(
                    "input combination {} listed twice",
                    bits_to_string(&w[0].inputs)
                )));
            }
        }
        Ok(TruthTable {
            inputs: sorted_inputs,
            outputs,
            rows: sorted_rows,
        })
    }

    /// Builds a total table by evaluating `f` on every input combination.
    pub fn from_fn<F>(inputs: &[&str], outputs: &[&str], f: F) -> Result<Self, LayoutError>
    where
        F: Fn(&HashMap<&str, bool>) -> Vec<bool>,
    {
        let mut sorted: Vec<&str> = inputs.to_vec();
        sorted.sort_unstable();
        let rows = (0..1usize << sorted.len())
            .map(|idx| {
                let bits = index_to_bits(idx, sorted.len());
                let env: HashMap<&str, bool> =
                    sorted.iter().copied().zip(bits.iter().copied()).collect();
                TruthRow {
                    inputs: bits,
                    outputs: f(&env),
                }
            })
            .collect();
        TruthTable::new(
            sorted.iter().map(|s| s.to_string()).collect(),
            outputs.iter().map(|s| s.to_string()).collect(),
            rows,
        )
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn rows(&self) -> &[TruthRow] {
        &self.rows
    }

    pub fn lookup(&self, inputs: &[bool]) -> Option<&[bool]> {
        self.rows
            .iter()
            .find(|r| r.inputs == inputs)
            .map(|r| r.outputs.as_slice())
    }

    /// Every input combination has exactly one row.
    pub fn is_total(&self) -> bool {
        self.rows.len() == 1usize << self.inputs.len()
    }

    /// Distinct input rows map to distinct output rows.
    pub fn is_injective(&self) -> bool {
        let outs: HashSet<&Vec<bool>> = self.rows.iter().map(|r| &r.outputs).collect();
        outs.len() == self.rows.len()
    }
}

/// Binary counting index of an input vector, first bit most significant.
pub fn bits_to_index(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

pub fn index_to_bits(idx: usize, width: usize) -> Vec<bool> {
    (0..width).map(|i| (idx >> (width - 1 - i)) & 1 == 1).collect()
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("layout has no cells")]
    Empty,
    #[error("cells {first} and {second} share position ({x} nm, {y} nm) on layer {layer}")]
    DuplicatePosition {
        first: usize,
        second: usize,
        x: f64,
        y: f64,
        layer: u32,
    },
    #[error("label `{0}` is used by more than one cell")]
    DuplicateLabel(String),
    #[error("expected logic refers to `{0}`, which is not an input or output cell of this layout")]
    DanglingLabel(String),
    #[error("input cell `{0}` has no column in the expected logic")]
    UnmappedInput(String),
    #[error("expected logic requires at least one input cell")]
    LogicWithoutInputs,
    #[error("malformed truth table: {0}")]
    MalformedLogic(String),
    #[error("invalid coordinate on cell {0}")]
    BadCoordinate(usize),
    #[error("unknown built-in circuit `{0}` (known: {known})", known = BUILTIN_NAMES.join(", "))]
    UnknownCircuit(String),
}

/// An immutable, validated QCA design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayoutDoc", into = "LayoutDoc")]
pub struct Layout {
    name: String,
    cells: Vec<Cell>,
    expected_logic: Option<TruthTable>,
    reconstruction: bool,
}

#[derive(Serialize, Deserialize)]
struct LayoutDoc {
    name: String,
    #[serde(default)]
    reconstruction: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logic: Option<TruthTable>,
    cells: Vec<Cell>,
}

impl TryFrom<LayoutDoc> for Layout {
    type Error = LayoutError;

    fn try_from(doc: LayoutDoc) -> Result<Self, Self::Error> {
        Ok(Layout::new(doc.name, doc.cells, doc.logic)?.with_reconstruction(doc.reconstruction))
    }
}

impl From<Layout> for LayoutDoc {
    fn from(l: Layout) -> Self {
        LayoutDoc {
            name: l.name,
            reconstruction: l.reconstruction,
            logic: l.expected_logic,
            cells: l.cells,
        }
    }
}

impl Layout {
    /// Validates and freezes a design. Cell ids are reassigned to list order.
    pub fn new(
        name: impl Into<String>,
        mut cells: Vec<Cell>,
        expected_logic: Option<TruthTable>,
    ) -> Result<Self, LayoutError> {
        if cells.is_empty() {
            return Err(LayoutError::Empty);
        }
        for (i, c) in cells.iter_mut().enumerate() {
            c.id = i;
            if !c.x.is_finite() || !c.y.is_finite() {
                return Err(LayoutError::BadCoordinate(i));
            }
        }

        let mut positions: HashMap<(i64, i64, u32), usize> = HashMap::new();
        for c in &cells {
            if let Some(&first) = positions.get(&position_key(c)) {
                return Err(LayoutError::DuplicatePosition {
                    first,
                    second: c.id,
                    x: c.x,
                    y: c.y,
                    layer: c.layer,
                });
            }
            positions.insert(position_key(c), c.id);
        }

        let mut labels = HashSet::new();
        for c in &cells {
            if let Some(l) = c.role.input_label().or(c.role.output_label()) {
                if !labels.insert(l.to_string()) {
                    return Err(LayoutError::DuplicateLabel(l.to_string()));
                }
            }
        }

        if let Some(table) = &expected_logic {
            let inputs: BTreeSet<&str> = cells.iter().filter_map(|c| c.role.input_label()).collect();
            let outputs: BTreeSet<&str> =
                cells.iter().filter_map(|c| c.role.output_label()).collect();
            if inputs.is_empty() {
                return Err(LayoutError::LogicWithoutInputs);
            }
            for l in table.inputs() {
                if !inputs.contains(l.as_str()) {
                    return Err(LayoutError::DanglingLabel(l.clone()));
                }
            }
            for l in table.outputs() {
                if !outputs.contains(l.as_str()) {
                    return Err(LayoutError::DanglingLabel(l.clone()));
                }
            }
            if let Some(missing) = inputs.iter().find(|l| !table.inputs().iter().any(|t| t == *l)) {
                return Err(LayoutError::UnmappedInput(missing.to_string()));
            }
        }

        Ok(Layout {
            name: name.into(),
            cells,
            expected_logic,
            reconstruction: false,
        })
    }

    /// Marks the design as a reconstruction from a figure rather than a
    /// published coordinate list.
    pub fn with_reconstruction(mut self, flag: bool) -> Self {
        self.reconstruction = flag;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn expected_logic(&self) -> Option<&TruthTable> {
        self.expected_logic.as_ref()
    }

    pub fn is_reconstruction(&self) -> bool {
        self.reconstruction
    }

    /// Input labels in sorted order.
    pub fn input_labels(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.cells.iter().filter_map(|c| c.role.input_label()).collect();
        v.sort_unstable();
        v
    }

    pub fn output_labels(&self) -> Vec<&str> {
        self.cells.iter().filter_map(|c| c.role.output_label()).collect()
    }

    pub fn input_cell(&self, label: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.role.input_label() == Some(label))
    }

    pub fn output_cell(&self, label: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.role.output_label() == Some(label))
    }
}

fn position_key(c: &Cell) -> (i64, i64, u32) {
    // 1e-6 nm resolution
    ((c.x * 1e6).round() as i64, (c.y * 1e6).round() as i64, c.layer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(n: u8) -> ClockZone {
        ClockZone::new(n).unwrap()
    }

    #[test]
    fn zones_wrap() {
        assert_eq!(z(3).next(), z(0));
        assert_eq!(z(0).prev(), z(3));
        assert!(ClockZone::new(4).is_none());
    }

    #[test]
    fn empty_layout_rejected() {
        assert_eq!(Layout::new("x", vec![], None), Err(LayoutError::Empty));
    }

    #[test]
    fn duplicate_position_rejected() {
        let cells = vec![
            Cell::new(0.0, 0.0, 0, z(0), CellRole::Normal),
            Cell::new(0.0, 0.0, 0, z(1), CellRole::Normal),
        ];
        assert!(matches!(
            Layout::new("x", cells, None),
            Err(LayoutError::DuplicatePosition { first: 0, second: 1, .. })
        ));
        // different layer is fine
        let cells = vec![
            Cell::new(0.0, 0.0, 0, z(0), CellRole::Normal),
            Cell::new(0.0, 0.0, 1, z(0), CellRole::Normal),
        ];
        assert!(Layout::new("x", cells, None).is_ok());
    }

    #[test]
    fn duplicate_labels_rejected() {
        let cells = vec![
            Cell::new(0.0, 0.0, 0, z(0), CellRole::Input("a".into())),
            Cell::new(20.0, 0.0, 0, z(0), CellRole::Output("a".into())),
        ];
        assert_eq!(
            Layout::new("x", cells, None),
            Err(LayoutError::DuplicateLabel("a".into()))
        );
    }

    #[test]
    fn dangling_logic_label_rejected() {
        let cells = vec![
            Cell::new(0.0, 0.0, 0, z(0), CellRole::Input("a".into())),
            Cell::new(20.0, 0.0, 0, z(0), CellRole::Output("f".into())),
        ];
        let t = TruthTable::from_fn(&["a"], &["g"], |e| vec![e["a"]]).unwrap();
        assert_eq!(
            Layout::new("x", cells, Some(t)),
            Err(LayoutError::DanglingLabel("g".into()))
        );
    }

    #[test]
    fn logic_without_inputs_rejected() {
        let cells = vec![Cell::new(0.0, 0.0, 0, z(0), CellRole::Output("f".into()))];
        let t = TruthTable::new(vec![], vec!["f".into()], vec![]).unwrap();
        assert_eq!(
            Layout::new("x", cells, Some(t)),
            Err(LayoutError::LogicWithoutInputs)
        );
    }

    #[test]
    fn truth_table_columns_are_sorted() {
        let t = TruthTable::new(
            vec!["b".into(), "a".into()],
            vec!["f".into()],
            vec![
                TruthRow { inputs: vec![true, false], outputs: vec![true] },
                TruthRow { inputs: vec![false, false], outputs: vec![false] },
            ],
        )
        .unwrap();
        assert_eq!(t.inputs(), &["a".to_string(), "b".to_string()]);
        // (b=1, a=0) is now (a=0, b=1)
        assert_eq!(t.lookup(&[false, true]), Some(&[true][..]));
        assert!(!t.is_total());
    }

    #[test]
    fn binary_counting_order() {
        assert_eq!(index_to_bits(3, 3), vec![false, true, true]);
        assert_eq!(bits_to_index(&[true, false, true]), 5);
        assert_eq!(bits_to_string(&index_to_bits(6, 3)), "110");
    }
}
