//! Pickup-spot hindrance scores and the points table.

use serde::{Deserialize, Serialize};

use super::SchedulerError;
use crate::world::BrickKind;

pub const ROWS: usize = 4;
pub const COLS: usize = 3;

pub type Grid = [[f64; COLS]; ROWS];

/// Multiplier applied when cell `(row, col)` is selected: 5 on the cell,
/// 3 on the rest of its row and column, 1 elsewhere.
pub fn kernel(row: usize, col: usize) -> Result<Grid, SchedulerError> {
    check(row, col)?;
    let mut m = [[1.0; COLS]; ROWS];
    for (r, line) in m.iter_mut().enumerate() {
        for (c, v) in line.iter_mut().enumerate() {
            *v = match (r == row, c == col) {
                (true, true) => 5.0,
                (true, false) | (false, true) => 3.0,
                _ => 1.0,
            };
        }
    }
    Ok(m)
}

fn check(row: usize, col: usize) -> Result<(), SchedulerError> {
    if row >= ROWS || col >= COLS {
        return Err(SchedulerError::IndexOutOfRange { row, col });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub values: Grid,
}

impl Default for ScoreMatrix {
    fn default() -> Self {
        Self {
            values: [[1.0; COLS]; ROWS],
        }
    }
}

impl ScoreMatrix {
    pub fn get(&self, row: usize, col: usize) -> Result<f64, SchedulerError> {
        check(row, col)?;
        Ok(self.values[row][col])
    }

    pub fn increase_cost(&self, row: usize, col: usize) -> Result<ScoreMatrix, SchedulerError> {
        let k = kernel(row, col)?;
        let mut out = *self;
        for r in 0..ROWS {
            for c in 0..COLS {
                out.values[r][c] *= k[r][c];
            }
        }
        Ok(out)
    }

    pub fn reset_cost(&self, row: usize, col: usize) -> Result<ScoreMatrix, SchedulerError> {
        let k = kernel(row, col)?;
        let mut out = *self;
        for r in 0..ROWS {
            for c in 0..COLS {
                out.values[r][c] /= k[r][c];
            }
        }
        Ok(out)
    }

    pub fn all_positive(&self) -> bool {
        self.values.iter().flatten().all(|v| *v > 0.0 && v.is_finite())
    }
}

/// Gain for delivering a brick from each pickup cell. Rows are brick kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointsMatrix {
    pub values: Grid,
}

impl PointsMatrix {
    pub fn from_row_values(rows: [f64; ROWS]) -> Self {
        Self {
            values: rows.map(|v| [v; COLS]),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Result<f64, SchedulerError> {
        check(row, col)?;
        Ok(self.values[row][col])
    }

    pub fn for_kind(&self, kind: BrickKind) -> f64 {
        self.values[kind.row()][0]
    }
}

impl Default for PointsMatrix {
    fn default() -> Self {
        Self::from_row_values([10.0, 6.0, 4.0, 3.0])
    }
}
