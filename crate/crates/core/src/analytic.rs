//! Expectation-level evaluation: slice statistics fed straight into the
//! decoy and key-rate stages, with finite-size terms set by the pulse count.
//! Used by the loss and angle sweeps, where Monte Carlo at `N_t = 1e13` is
//! out of reach.

use std::f64::consts::PI;

use crate::channel::{total_transmittance, SystemParams};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::keyrate::{evaluate_slice, window_statistics, KeyRateReport, SliceKeyRate};
use crate::protocol::{validity_bounds, SecurityParams};
use crate::slicer::representative_angle;

/// Free-running scheme: `N_t / m` pulses per slice, drift uniform over each
/// slice's width.
pub fn free_running_report(
    params: &SystemParams,
    sec: &SecurityParams,
    exec: Execution,
) -> Result<KeyRateReport> {
    params.validate()?;
    sec.validate()?;
    let m = params.m_slices;
    let width = 2.0 * PI / m as f64;
    let pulses = params.n_total / m as f64;
    let slices = exec
        .map_range(m, |i| {
            let angle = representative_angle(i, m);
            let stats = window_statistics(params, angle, width, pulses);
            evaluate_slice(i, angle, None, &stats, params, sec)
        })
        .into_iter()
        .collect::<Result<Vec<SliceKeyRate>>>()?;
    let mut report = KeyRateReport::assemble(slices, params.total_duration(), params)?;
    if !free_running_admissible(params, &report) {
        for s in &mut report.slices {
            s.key_length_bits = 0.0;
            s.key_rate_bps = 0.0;
        }
        report.total_key_bits = 0.0;
        report.average_rate_bps = 0.0;
    }
    Ok(report)
}

/// Drift resolution finer than a slice and an interval shorter than `pi / omega`.
fn free_running_admissible(params: &SystemParams, report: &KeyRateReport) -> bool {
    report.validity.delta_theta_min <= 2.0 * PI / params.m_slices as f64 && report.interval_valid
}

pub fn free_running_rate(params: &SystemParams, sec: &SecurityParams) -> Result<f64> {
    Ok(free_running_report(params, sec, Execution::Sequential)?.average_rate_bps)
}

/// Best rate of the original scheme under drift: blocks as long as its
/// validity range allows (`pi / omega`, drift spread `pi`), best initial
/// misalignment among the representative angles. With a static frame one
/// block covers all `N_t` pulses at the best angle.
pub fn original_optimal_rate(params: &SystemParams, sec: &SecurityParams) -> Result<f64> {
    params.validate()?;
    sec.validate()?;
    let single = SystemParams {
        m_slices: 1,
        ..params.clone()
    };
    let (width, block) = if params.omega > 0.0 {
        (PI, PI / params.omega)
    } else {
        (0.0, params.total_duration())
    };
    let pulses = block * params.rep_rate;
    let m = params.m_slices;
    let mut best = 0.0f64;
    for i in 0..m {
        let angle = representative_angle(i, m);
        let stats = window_statistics(params, angle, width, pulses);
        let slice = evaluate_slice(0, angle, None, &stats, &single, sec)?;
        best = best.max(slice.key_length_bits / block);
    }
    Ok(best)
}

/// Free-running expectation for the key bits of each slice together with
/// the representative angle and C value.
pub fn slice_curve(params: &SystemParams, sec: &SecurityParams) -> Result<Vec<SliceKeyRate>> {
    Ok(free_running_report(params, sec, Execution::Sequential)?.slices)
}

/// Largest grid point with a positive value, or `None` if there is none.
/// Assumes the grid is increasing and the rate decreasing in loss.
pub fn cutoff(grid: &[f64], rates: &[f64]) -> Option<f64> {
    grid.iter()
        .zip(rates)
        .rev()
        .find(|(_, r)| **r > 0.0)
        .map(|(g, _)| *g)
}

/// Scans `rate(loss)` upward from `start` in steps of `step` and returns the
/// last loss with positive rate.
pub fn scan_cutoff(
    start: f64,
    stop: f64,
    step: f64,
    mut rate: impl FnMut(f64) -> Result<f64>,
) -> Result<Option<f64>> {
    if !(step > 0.0) || !(stop >= start) {
        return Err(Error::domain("step", step, "> 0 with stop >= start"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    let mut last = None;
    for i in 0..=n {
        let loss = start + i as f64 * step;
        if rate(loss)? > 0.0 {
            last = Some(loss);
        } else if last.is_some() {
            break;
        }
    }
    Ok(last)
}

/// Smallest resolvable drift angle at the current loss.
pub fn drift_resolution(params: &SystemParams) -> Result<f64> {
    Ok(
        validity_bounds(total_transmittance(params), params.rep_rate, params.omega)?
            .delta_theta_min,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_loss(db: f64) -> SystemParams {
        SystemParams::default().with_total_loss(db).unwrap()
    }

    #[test]
    fn slice_extrema_pattern() {
        let rows = slice_curve(&SystemParams::default(), &SecurityParams::default()).unwrap();
        let rate: Vec<f64> = rows.iter().map(|s| s.key_length_bits).collect();
        for i in 0..16 {
            let prev = rate[(i + 15) % 16];
            let next = rate[(i + 1) % 16];
            if i % 4 == 0 {
                assert!(rate[i] > prev && rate[i] > next, "slice {i} not a maximum");
            }
            if i % 4 == 2 {
                assert!(rate[i] < prev && rate[i] < next, "slice {i} not a minimum");
            }
        }
    }

    #[test]
    fn rate_decreases_with_loss() {
        let sec = SecurityParams::default();
        let mut prev = f64::INFINITY;
        for db in [28.0, 31.5, 35.0, 38.0, 41.0, 44.0] {
            let r = free_running_rate(&at_loss(db), &sec).unwrap();
            assert!(r <= prev, "{db} dB");
            prev = r;
        }
        let mut prev = f64::INFINITY;
        for db in [26.0, 29.0, 32.0, 35.0] {
            let r = original_optimal_rate(&at_loss(db), &sec).unwrap();
            assert!(r <= prev, "{db} dB");
            prev = r;
        }
    }

    #[test]
    fn validity_gate_zeroes_key() {
        let p = SystemParams {
            t_interval: 500.0,
            ..SystemParams::default()
        };
        assert_eq!(
            free_running_rate(&p, &SecurityParams::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn static_frame_original_equals_best_fixed_angle() {
        let p = SystemParams {
            omega: 0.0,
            ..SystemParams::default()
        };
        let r = original_optimal_rate(&p, &SecurityParams::default()).unwrap();
        assert!(
            r > free_running_rate(&SystemParams::default(), &SecurityParams::default()).unwrap()
        );
    }

    #[test]
    fn cutoff_helpers() {
        assert_eq!(cutoff(&[1.0, 2.0, 3.0], &[5.0, 1.0, 0.0]), Some(2.0));
        assert_eq!(cutoff(&[1.0], &[0.0]), None);
        let c = scan_cutoff(0.0, 10.0, 0.5, |x| Ok(4.2 - x)).unwrap();
        assert_eq!(c, Some(4.0));
    }
}
