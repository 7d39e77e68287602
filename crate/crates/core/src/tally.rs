//! Per-(intensity, basis pair) tables and the interval tally record.

use std::ops::{AddAssign, Index, IndexMut};

use crate::protocol::{BasisPair, Intensity};

/// Fixed 3 x 5 table keyed by intensity and sifted basis pair.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CellTable<T> {
    cells: [[T; 5]; 3],
}

impl<T> CellTable<T> {
    pub fn from_fn(mut f: impl FnMut(Intensity, BasisPair) -> T) -> Self {
        CellTable {
            cells: Intensity::ALL.map(|k| BasisPair::ALL.map(|p| f(k, p))),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Intensity, BasisPair, &T) -> U) -> CellTable<U> {
        CellTable::from_fn(|k, p| f(k, p, &self[(k, p)]))
    }

    /// Cells in canonical order: intensity-major, then pair.
    pub fn iter(&self) -> impl Iterator<Item = (Intensity, BasisPair, &T)> {
        Intensity::ALL.into_iter().flat_map(move |k| {
            BasisPair::ALL
                .into_iter()
                .map(move |p| (k, p, &self.cells[k.index()][p.index()]))
        })
    }

    pub fn row(&self, k: Intensity) -> &[T; 5] {
        &self.cells[k.index()]
    }
}

impl<T> Index<(Intensity, BasisPair)> for CellTable<T> {
    type Output = T;

    fn index(&self, (k, p): (Intensity, BasisPair)) -> &T {
        &self.cells[k.index()][p.index()]
    }
}

impl<T> IndexMut<(Intensity, BasisPair)> for CellTable<T> {
    fn index_mut(&mut self, (k, p): (Intensity, BasisPair)) -> &mut T {
        &mut self.cells[k.index()][p.index()]
    }
}

impl<T: AddAssign + Copy> AddAssign<&CellTable<T>> for CellTable<T> {
    fn add_assign(&mut self, rhs: &CellTable<T>) {
        for (a, b) in self
            .cells
            .iter_mut()
            .flatten()
            .zip(rhs.cells.iter().flatten())
        {
            *a += *b;
        }
    }
}

/// Sifted detections and errors observed in one cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub detections: u64,
    pub errors: u64,
}

impl Counts {
    pub fn new(detections: u64, errors: u64) -> Self {
        Counts { detections, errors }
    }

    pub fn qber(&self) -> Option<f64> {
        (self.detections > 0).then(|| self.errors as f64 / self.detections as f64)
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, rhs: Counts) {
        self.detections += rhs.detections;
        self.errors += rhs.errors;
    }
}

/// Tallies of one sampling interval.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalTally {
    pub index: u64,
    pub t_start: f64,
    pub cells: CellTable<Counts>,
    /// Simulation ground truth; absent for ingested measurement logs.
    pub true_theta: Option<f64>,
}

impl IntervalTally {
    pub fn qber(&self, k: Intensity, p: BasisPair) -> Option<f64> {
        self.cells[(k, p)].qber()
    }
}
