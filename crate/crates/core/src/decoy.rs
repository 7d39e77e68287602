//! Vacuum + weak decoy estimation of single-photon yield and error rates,
//! with a Gaussian finite-size correction on every observed rate.

use serde::{Deserialize, Serialize};

use crate::channel::{SystemParams, BACKGROUND_ERROR};
use crate::error::{Error, Result};
use crate::protocol::{BasisPair, Intensity, SecurityParams};
use crate::tally::CellTable;

/// Detections and errors observed in a cell, with the number of pulses that
/// were sent into it.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Observation {
    pub detections: f64,
    pub errors: f64,
    pub exposures: f64,
}

impl Observation {
    pub fn qber(&self) -> Option<f64> {
        (self.detections > 0.0).then(|| self.errors / self.detections)
    }
}

/// Everything the per-slice analysis needs. Counts may be fractional when
/// the statistics are expectations rather than samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceStatistics {
    pub cells: CellTable<Observation>,
    /// Wall-clock time the statistics were collected over (s).
    pub duration: f64,
}

impl SliceStatistics {
    pub fn pooled(&self, k: Intensity) -> Observation {
        self.cells
            .row(k)
            .iter()
            .fold(Observation::default(), |acc, o| Observation {
                detections: acc.detections + o.detections,
                errors: acc.errors + o.errors,
                exposures: acc.exposures + o.exposures,
            })
    }

    pub fn qber(&self, k: Intensity, pair: BasisPair) -> Option<f64> {
        self.cells[(k, pair)].qber()
    }

    /// Multiplies every count and exposure by `factor`.
    pub fn scaled(&self, factor: f64) -> SliceStatistics {
        SliceStatistics {
            cells: self.cells.map(|_, _, o| Observation {
                detections: o.detections * factor,
                errors: o.errors * factor,
                exposures: o.exposures * factor,
            }),
            duration: self.duration * factor,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Upper,
    Lower,
}

/// `rate +/- n_sigma * sqrt(rate (1 - rate) / n)`, clamped to `[0, 1]`.
///
/// Without exposures nothing is known, so the upper bound is 1 and the lower
/// bound 0.
pub fn fluctuation_adjust(
    observed_count: f64,
    n_exposures: f64,
    sec: &SecurityParams,
    direction: Direction,
) -> f64 {
    if !(n_exposures > 0.0) {
        return match direction {
            Direction::Upper => 1.0,
            Direction::Lower => 0.0,
        };
    }
    let rate = (observed_count / n_exposures).clamp(0.0, 1.0);
    let delta = sec.n_sigma * (rate * (1.0 - rate) / n_exposures).sqrt();
    match direction {
        Direction::Upper => (rate + delta).min(1.0),
        Direction::Lower => (rate - delta).max(0.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Valid,
    /// The single-photon yield bound is not positive; no key.
    InsufficientStatistics,
    /// Decoy gain exceeds signal gain beyond the fluctuation allowance.
    InconsistentGains,
}

impl BoundStatus {
    pub fn label(self) -> &'static str {
        match self {
            BoundStatus::Valid => "valid",
            BoundStatus::InsufficientStatistics => "insufficient_statistics",
            BoundStatus::InconsistentGains => "inconsistent_gains",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairBound {
    /// Upper bound on the single-photon error rate, measured in the
    /// orientation in which it is below 1/2.
    pub e1_upper: f64,
    /// Errors dominate in this pair (e.g. YX near `theta = pi/2`); the
    /// correlator is negative.
    pub anticorrelated: bool,
}

impl PairBound {
    const UNKNOWN: PairBound = PairBound {
        e1_upper: 0.5,
        anticorrelated: false,
    };

    /// Smallest correlator magnitude consistent with the bound, signed.
    pub fn correlator(&self) -> f64 {
        let magnitude = (1.0 - 2.0 * self.e1_upper).max(0.0);
        if self.anticorrelated {
            -magnitude
        } else {
            magnitude
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoyBounds {
    pub y0_lower: f64,
    pub y0_upper: f64,
    pub y1_lower: f64,
    pub q1_lower: f64,
    /// Lower bound on single-photon signal detections in the key basis.
    pub n1_lower_z: f64,
    pub pairs: [PairBound; 5],
    pub status: BoundStatus,
}

impl DecoyBounds {
    pub fn pair(&self, pair: BasisPair) -> &PairBound {
        &self.pairs[pair.index()]
    }

    pub fn e1_upper_z(&self) -> f64 {
        self.pair(BasisPair::ZZ).e1_upper
    }

    pub fn is_valid(&self) -> bool {
        self.status == BoundStatus::Valid
    }
}

/// Vacuum + weak decoy bounds for one slice.
///
/// ```text
/// Y1 >= mu / (mu nu - nu^2) * (Q_nu^- e^nu - Q_mu^+ e^mu nu^2/mu^2 - (mu^2 - nu^2)/mu^2 Y0^+)
/// e1 <= (E_nu Q_nu^+ e^nu - e0 Y0^-) / (nu Y1^-)
/// ```
///
/// Gains are pooled over all sifted pairs of an intensity; error gains come
/// from the decoy cell of each pair.
pub fn decoy_bounds(
    stats: &SliceStatistics,
    params: &SystemParams,
    sec: &SecurityParams,
) -> Result<DecoyBounds> {
    let (mu, nu) = (params.mu, params.nu);
    if !(nu > 0.0 && mu > nu) {
        return Err(Error::domain("nu", nu, "0 < nu < mu"));
    }
    let adjust = |o: Observation, dir| fluctuation_adjust(o.detections, o.exposures, sec, dir);

    let vacuum = stats.pooled(Intensity::Vacuum);
    let y0_lower = adjust(vacuum, Direction::Lower);
    let y0_upper = adjust(vacuum, Direction::Upper);
    let q_nu_lower = adjust(stats.pooled(Intensity::Decoy), Direction::Lower);
    let q_mu_upper = adjust(stats.pooled(Intensity::Signal), Direction::Upper);

    let y1 = mu / (mu * nu - nu * nu)
        * (q_nu_lower * nu.exp()
            - q_mu_upper * mu.exp() * nu * nu / (mu * mu)
            - (mu * mu - nu * nu) / (mu * mu) * y0_upper);
    let y1_lower = y1.clamp(0.0, 1.0);

    let mut status = if q_nu_lower > q_mu_upper {
        BoundStatus::InconsistentGains
    } else if y1_lower <= 0.0 {
        BoundStatus::InsufficientStatistics
    } else {
        BoundStatus::Valid
    };

    let mut pairs = [PairBound::UNKNOWN; 5];
    if status == BoundStatus::Valid {
        for pair in BasisPair::ALL {
            let decoy = stats.cells[(Intensity::Decoy, pair)];
            let anticorrelated = stats.qber(Intensity::Signal, pair).is_some_and(|e| e > 0.5);
            let minority = if anticorrelated {
                decoy.detections - decoy.errors
            } else {
                decoy.errors
            };
            let error_gain = fluctuation_adjust(minority, decoy.exposures, sec, Direction::Upper);
            let e1 = (error_gain * nu.exp() - BACKGROUND_ERROR * y0_lower) / (nu * y1_lower);
            pairs[pair.index()] = PairBound {
                e1_upper: if decoy.exposures > 0.0 {
                    e1.clamp(0.0, 0.5)
                } else {
                    0.5
                },
                anticorrelated,
            };
        }
    }
    if !pairs.iter().all(|p| p.e1_upper.is_finite()) {
        status = BoundStatus::InsufficientStatistics;
    }

    let q1_lower = y1_lower * mu * (-mu).exp();
    Ok(DecoyBounds {
        y0_lower,
        y0_upper,
        y1_lower,
        q1_lower,
        n1_lower_z: q1_lower * stats.cells[(Intensity::Signal, BasisPair::ZZ)].exposures,
        pairs,
        status,
    })
}
