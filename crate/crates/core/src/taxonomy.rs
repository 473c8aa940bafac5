//! The 6×3 coordinate system: six infrastructure layers crossed with three
//! meta-domains. Every catalog metric and every propagation-graph node lives
//! in exactly one [`Cell`].

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub const LAYER_COUNT: u8 = 6;
pub const DOMAIN_COUNT: u8 = 3;
pub const CELL_COUNT: usize = (LAYER_COUNT as usize) * (DOMAIN_COUNT as usize);

pub const LAYER_NAMES: [&str; 6] = [
    "Grid & Sustainability",
    "Facility",
    "Compute Hardware",
    "Networking & Interconnect",
    "ML Execution & Reliability",
    "Service, Operations & Economic",
];

pub const DOMAIN_NAMES: [&str; 3] = [
    "Physical Performance & Efficiency",
    "Compute & Workload Efficiency",
    "Lifecycle Economics & Reliability Risk",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoordinateError {
    #[error("layer {0} is outside 1..=6")]
    Layer(i64),
    #[error("domain {0} is outside 1..=3")]
    Domain(i64),
    #[error("cell index {0} is outside 0..18")]
    Index(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct LayerId(u8);

impl LayerId {
    pub fn new(value: i64) -> Result<Self, CoordinateError> {
        if (1..=LAYER_COUNT as i64).contains(&value) {
            Ok(LayerId(value as u8))
        } else {
            Err(CoordinateError::Layer(value))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        LAYER_NAMES[(self.0 - 1) as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DomainId(u8);

impl DomainId {
    pub fn new(value: i64) -> Result<Self, CoordinateError> {
        if (1..=DOMAIN_COUNT as i64).contains(&value) {
            Ok(DomainId(value as u8))
        } else {
            Err(CoordinateError::Domain(value))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        DOMAIN_NAMES[(self.0 - 1) as usize]
    }
}

/// A (layer, domain) coordinate. Ordering is layer-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Cell {
    pub layer: LayerId,
    pub domain: DomainId,
}

impl Cell {
    pub fn new(layer: LayerId, domain: DomainId) -> Self {
        Cell { layer, domain }
    }

    /// Row-major index: `(layer - 1) * 3 + (domain - 1)`.
    pub fn index(self) -> usize {
        (self.layer.0 as usize - 1) * DOMAIN_COUNT as usize + (self.domain.0 as usize - 1)
    }

    pub fn from_index(index: usize) -> Result<Self, CoordinateError> {
        if index >= CELL_COUNT {
            return Err(CoordinateError::Index(index));
        }
        let layer = (index / DOMAIN_COUNT as usize) as u8 + 1;
        let domain = (index % DOMAIN_COUNT as usize) as u8 + 1;
        Ok(Cell {
            layer: LayerId(layer),
            domain: DomainId(domain),
        })
    }

    /// All 18 cells in index order.
    pub fn all() -> impl Iterator<Item = Cell> {
        (0..CELL_COUNT).map(|i| Cell::from_index(i).expect("index in range"))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(L{},D{})", self.layer.0, self.domain.0)
    }
}

pub fn validate_cell(layer: i64, domain: i64) -> Result<Cell, CoordinateError> {
    Ok(Cell::new(LayerId::new(layer)?, DomainId::new(domain)?))
}

pub fn cell_index(cell: Cell) -> usize {
    cell.index()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssignmentError {
    #[error("metric id '{0}' is declared more than once")]
    DuplicateId(String),
    #[error("metric '{id}' is assigned to {} cells ({})", cells.len(), join_cells(cells))]
    MultipleCells { id: String, cells: Vec<Cell> },
    #[error("metric '{0}' is not assigned to any cell")]
    Unassigned(String),
}

fn join_cells(cells: &[Cell]) -> String {
    cells
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// One metric's declared placement. `cell` is `None` when the source
/// omitted the coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub id: String,
    pub cell: Option<Cell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssignmentReport {
    /// Metric id → its unique cell, sorted by id.
    pub metrics: BTreeMap<String, Cell>,
    /// Number of metrics in each cell, indexed by [`Cell::index`].
    pub coverage: [usize; CELL_COUNT],
}

impl AssignmentReport {
    pub fn covered_cells(&self) -> usize {
        self.coverage.iter().filter(|&&n| n > 0).count()
    }

    /// Plain-text 6×3 coverage table.
    pub fn coverage_table(&self) -> String {
        let mut out = String::from("layer      D1    D2    D3\n");
        for layer in 1..=LAYER_COUNT as usize {
            out.push_str(&format!("L{layer}      "));
            for domain in 0..DOMAIN_COUNT as usize {
                out.push_str(&format!("{:>5} ", self.coverage[(layer - 1) * 3 + domain]));
            }
            out.push('\n');
        }
        out
    }
}

/// Checks that each metric id occurs with exactly one cell.
///
/// An id repeated with the same cell is a duplicate declaration; an id
/// repeated with different cells is a multi-cell assignment.
pub fn validate_unique_assignment<I>(assignments: I) -> Result<AssignmentReport, AssignmentError>
where
    I: IntoIterator<Item = Assignment>,
{
    let mut seen: BTreeMap<String, Vec<Option<Cell>>> = BTreeMap::new();
    let mut order = Vec::new();
    for a in assignments {
        let entry = seen.entry(a.id.clone()).or_default();
        if entry.is_empty() {
            order.push(a.id.clone());
        }
        entry.push(a.cell);
    }

    let mut report = AssignmentReport {
        metrics: BTreeMap::new(),
        coverage: [0; CELL_COUNT],
    };
    for id in order {
        let cells = &seen[&id];
        let mut distinct: Vec<Cell> = cells.iter().flatten().copied().collect();
        distinct.sort();
        distinct.dedup();
        match distinct.len() {
            0 => return Err(AssignmentError::Unassigned(id)),
            1 if cells.len() == 1 => {
                report.coverage[distinct[0].index()] += 1;
                report.metrics.insert(id, distinct[0]);
            }
            1 if cells.iter().any(Option::is_none) => return Err(AssignmentError::Unassigned(id)),
            1 => return Err(AssignmentError::DuplicateId(id)),
            _ => {
                return Err(AssignmentError::MultipleCells {
                    id,
                    cells: distinct,
                })
            }
        }
    }
    Ok(report)
}
