//! Per-interval misalignment estimation, the `m`-slice partition of the
//! circle, and merging of interval tallies into slice accumulators.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::SystemParams;
use crate::decoy::{Observation, SliceStatistics};
use crate::drift::wrap_angle;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::protocol::{BasisPair, Intensity};
use crate::tally::{CellTable, Counts, IntervalTally};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaEstimate {
    pub theta: f64,
    /// `1 - 2 E_XX` had to be clamped into `[-1, 1]`.
    pub clamped: bool,
}

/// Arccos rule on the signal-state XX/XY error rates:
/// `theta = acos(1 - 2 E_XX)` when `E_XY < 0.5`, else `2 pi - acos(1 - 2 E_XX)`.
pub fn estimate_theta(e_xx: f64, e_xy: f64) -> ThetaEstimate {
    let arg = 1.0 - 2.0 * e_xx;
    let clamped = !(-1.0..=1.0).contains(&arg);
    let base = arg.clamp(-1.0, 1.0).acos();
    let theta = if e_xy < 0.5 { base } else { TWO_PI - base };
    ThetaEstimate {
        theta: wrap_angle(theta),
        clamped,
    }
}

/// Visibility-normalised form, `atan2(1 - 2 E_XY, 1 - 2 E_XX)`.
///
/// Agrees with [`estimate_theta`] when the interference visibility is 1, and
/// is not pulled away from `{0, pi}` when it is lower.
pub fn estimate_theta_normalized(e_xx: f64, e_xy: f64) -> ThetaEstimate {
    let cos_part = 1.0 - 2.0 * e_xx;
    let sin_part = 1.0 - 2.0 * e_xy;
    ThetaEstimate {
        theta: wrap_angle(sin_part.atan2(cos_part)),
        clamped: false,
    }
}

/// Index `i` of the slice `[(2i - 1) pi / m, (2i + 1) pi / m)` holding
/// `theta`; slice 0 wraps around `0`.
pub fn slice_index(theta: f64, m: usize) -> Result<usize> {
    if m == 0 {
        return Err(Error::domain("m", 0.0, ">= 1"));
    }
    if !(0.0..TWO_PI).contains(&theta) {
        return Err(Error::domain("theta", theta, "[0, 2pi)"));
    }
    Ok(slice_of(theta, m))
}

fn slice_of(theta: f64, m: usize) -> usize {
    ((theta * m as f64 / TWO_PI + 0.5).floor() as usize) % m
}

pub fn representative_angle(index: usize, m: usize) -> f64 {
    TWO_PI * index as f64 / m as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaEstimator {
    /// `atan2` on both correlators; see [`estimate_theta_normalized`].
    #[default]
    Normalized,
    /// Literal arccos rule; see [`estimate_theta`].
    Arccos,
}

impl ThetaEstimator {
    pub fn estimate(self, e_xx: f64, e_xy: f64) -> ThetaEstimate {
        match self {
            ThetaEstimator::Normalized => estimate_theta_normalized(e_xx, e_xy),
            ThetaEstimator::Arccos => estimate_theta(e_xx, e_xy),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlicingOptions {
    pub estimator: ThetaEstimator,
    /// Number of consecutive intervals pooled for the estimate (centred).
    pub smoothing_width: usize,
}

impl Default for SlicingOptions {
    fn default() -> Self {
        SlicingOptions {
            estimator: ThetaEstimator::default(),
            smoothing_width: 1,
        }
    }
}

/// Merged tallies of one misalignment slice.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceAccumulator {
    pub index: usize,
    pub representative_angle: f64,
    pub cells: CellTable<Counts>,
    pub n_intervals: u64,
}

impl SliceAccumulator {
    pub fn empty(index: usize, m: usize) -> Self {
        SliceAccumulator {
            index,
            representative_angle: representative_angle(index, m),
            cells: CellTable::default(),
            n_intervals: 0,
        }
    }

    pub fn add(&mut self, tally: &IntervalTally) {
        self.cells += &tally.cells;
        self.n_intervals += 1;
    }

    pub fn merge(&mut self, other: &SliceAccumulator) {
        debug_assert_eq!(self.index, other.index);
        self.cells += &other.cells;
        self.n_intervals += other.n_intervals;
    }

    /// Pooled QBER `sum(errors) / sum(detections)`.
    pub fn qber(&self, k: Intensity, pair: BasisPair) -> Option<f64> {
        self.cells[(k, pair)].qber()
    }

    pub fn duration(&self, params: &SystemParams) -> f64 {
        self.n_intervals as f64 * params.t_interval
    }

    /// Observed statistics with the number of pulses sent into each cell.
    pub fn statistics(&self, params: &SystemParams) -> SliceStatistics {
        let pulses = self.n_intervals as f64 * params.pulses_per_interval();
        SliceStatistics {
            cells: self.cells.map(|k, pair, c| Observation {
                detections: c.detections as f64,
                errors: c.errors as f64,
                exposures: pulses * params.cell_share(k, pair),
            }),
            duration: self.duration(params),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlicingResult {
    pub slices: Vec<SliceAccumulator>,
    /// Slice chosen for each interval, in input order.
    pub assignments: Vec<usize>,
    pub estimates: Vec<Option<f64>>,
    /// Intervals without signal X-basis statistics, routed to the slice of
    /// the previous interval.
    pub degenerate: usize,
    pub clamped: usize,
}

fn pooled_signal_qbers(tallies: &[IntervalTally], i: usize, width: usize) -> Option<(f64, f64)> {
    let lo = i.saturating_sub((width.max(1) - 1) / 2);
    let hi = (i + width.max(1) / 2 + 1).min(tallies.len());
    let mut xx = Counts::default();
    let mut xy = Counts::default();
    for t in &tallies[lo..hi] {
        xx += t.cells[(Intensity::Signal, BasisPair::XX)];
        xy += t.cells[(Intensity::Signal, BasisPair::XY)];
    }
    Some((xx.qber()?, xy.qber()?))
}

/// Assigns every interval to one of `m` slices and merges the tallies.
pub fn accumulate(
    tallies: &[IntervalTally],
    m: usize,
    options: &SlicingOptions,
    exec: Execution,
) -> Result<SlicingResult> {
    if m == 0 {
        return Err(Error::domain("m", 0.0, ">= 1"));
    }
    let estimates: Vec<Option<ThetaEstimate>> = exec.map_range(tallies.len(), |i| {
        pooled_signal_qbers(tallies, i, options.smoothing_width)
            .map(|(e_xx, e_xy)| options.estimator.estimate(e_xx, e_xy))
    });

    let mut assignments = Vec::with_capacity(tallies.len());
    let mut degenerate = 0;
    let mut previous = 0;
    for est in &estimates {
        let slice = match est {
            Some(e) => slice_of(e.theta, m),
            None => {
                degenerate += 1;
                previous
            }
        };
        assignments.push(slice);
        previous = slice;
    }
    let clamped = estimates.iter().flatten().filter(|e| e.clamped).count();

    const CHUNK: usize = 4096;
    let n_chunks = tallies.len().div_ceil(CHUNK);
    let partials = exec.map_range(n_chunks, |c| {
        let mut part: Vec<SliceAccumulator> =
            (0..m).map(|i| SliceAccumulator::empty(i, m)).collect();
        let range = c * CHUNK..((c + 1) * CHUNK).min(tallies.len());
        for i in range {
            part[assignments[i]].add(&tallies[i]);
        }
        part
    });
    let mut slices: Vec<SliceAccumulator> = (0..m).map(|i| SliceAccumulator::empty(i, m)).collect();
    for part in &partials {
        for (s, p) in slices.iter_mut().zip(part) {
            s.merge(p);
        }
    }

    Ok(SlicingResult {
        slices,
        assignments,
        estimates: estimates.iter().map(|e| e.map(|e| e.theta)).collect(),
        degenerate,
        clamped,
    })
}
