//! Per-slice channel quality, Eve's information and key length, the
//! aggregate report, and the unsliced baseline.

use std::fmt::Write as _;

use crate::channel::{expected_cells, total_transmittance, SystemParams};
use crate::decoy::{decoy_bounds, BoundStatus, DecoyBounds, Observation, SliceStatistics};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::log::Table;
use crate::protocol::{
    c_value, eve_information, h2, validity_bounds, BasisPair, ChannelQuality, CorrelationSet,
    Intensity, SecurityParams, ValidityBounds,
};
use crate::slicer::{accumulate, SliceAccumulator, SlicingOptions, SlicingResult};
use crate::tally::{CellTable, IntervalTally};

pub const REPORT_KIND: &str = "key-rate-report";

/// Single-photon channel quality of a slice, or `None` when the slice has no
/// usable X/Y statistics.
pub fn slice_c_value(stats: &SliceStatistics, bounds: &DecoyBounds) -> Option<ChannelQuality> {
    if !bounds.is_valid() {
        return None;
    }
    let monitored = BasisPair::MONITORING.iter().all(|&p| {
        stats.cells[(Intensity::Signal, p)].detections > 0.0
            && stats.cells[(Intensity::Decoy, p)].exposures > 0.0
    });
    if !monitored {
        return None;
    }
    let c = |p| bounds.pair(p).correlator();
    let corr = CorrelationSet::new(
        c(BasisPair::XX),
        c(BasisPair::XY),
        c(BasisPair::YX),
        c(BasisPair::YY),
    )
    .expect("correlators from error-rate bounds lie in [-1, 1]");
    Some(c_value(&corr))
}

/// Largest Eve information over single-photon error rates in
/// `[0, e_upper]`. Only an upper bound on the error rate is known, and for
/// fixed `C` the bound grows as the error rate falls.
pub fn worst_case_eve_information(c: f64, e_upper: f64) -> f64 {
    const STEPS: usize = 64;
    let c = c.clamp(0.0, ChannelQuality::MAX);
    let e_upper = e_upper.clamp(0.0, 0.5);
    (0..=STEPS)
        .map(|i| {
            eve_information(c, e_upper * i as f64 / STEPS as f64)
                .expect("arguments clamped into the domain")
        })
        .fold(0.0, f64::max)
}

/// `max(0, n1 (1 - I_E) - f n_mu H2(E_mu))` with `I_E` the worst case over
/// single-photon error rates up to `e1_upper`.
pub fn key_length(
    n1_lower: f64,
    c: f64,
    e1_upper: f64,
    n_signal: f64,
    e_signal: f64,
    f_ec: f64,
) -> f64 {
    let i_e = worst_case_eve_information(c, e1_upper);
    (n1_lower * (1.0 - i_e) - f_ec * n_signal * h2(e_signal)).max(0.0)
}

/// Secure key length (bits) of one slice.
pub fn slice_key_length(
    stats: &SliceStatistics,
    bounds: &DecoyBounds,
    sec: &SecurityParams,
) -> f64 {
    let Some(c) = slice_c_value(stats, bounds) else {
        return 0.0;
    };
    let z = stats.cells[(Intensity::Signal, BasisPair::ZZ)];
    let Some(e_z) = z.qber() else {
        return 0.0;
    };
    key_length(
        bounds.n1_lower_z,
        c.clamped(),
        bounds.e1_upper_z(),
        z.detections,
        e_z,
        sec.f_ec,
    )
}

/// `sum(bits) / duration`.
pub fn average_key_rate(slices: &[SliceKeyRate], duration: f64) -> Result<f64> {
    if !(duration > 0.0) {
        return Err(Error::domain("duration", duration, "> 0"));
    }
    Ok(slices.iter().map(|s| s.key_length_bits).sum::<f64>() / duration)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceKeyRate {
    pub index: usize,
    pub representative_angle: f64,
    pub n_intervals: Option<u64>,
    pub duration: f64,
    pub qbers: CellTable<Option<f64>>,
    pub c: Option<ChannelQuality>,
    pub i_e: Option<f64>,
    pub bounds: DecoyBounds,
    pub key_length_bits: f64,
    /// Key bits per second spent in this slice.
    pub key_rate_bps: f64,
}

pub fn evaluate_slice(
    index: usize,
    representative_angle: f64,
    n_intervals: Option<u64>,
    stats: &SliceStatistics,
    params: &SystemParams,
    sec: &SecurityParams,
) -> Result<SliceKeyRate> {
    let bounds = decoy_bounds(stats, params, sec)?;
    let c = slice_c_value(stats, &bounds);
    let i_e = c.map(|c| worst_case_eve_information(c.clamped(), bounds.e1_upper_z()));
    let key_length_bits = slice_key_length(stats, &bounds, sec);
    let key_rate_bps = if stats.duration > 0.0 {
        key_length_bits / stats.duration
    } else {
        0.0
    };
    Ok(SliceKeyRate {
        index,
        representative_angle,
        n_intervals,
        duration: stats.duration,
        qbers: stats.cells.map(|_, _, o| o.qber()),
        c,
        i_e,
        bounds,
        key_length_bits,
        key_rate_bps,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyRateReport {
    pub slices: Vec<SliceKeyRate>,
    pub total_key_bits: f64,
    pub duration: f64,
    pub average_rate_bps: f64,
    pub validity: ValidityBounds,
    /// Sampling interval below `pi / omega`.
    pub interval_valid: bool,
    pub degenerate_intervals: usize,
    pub clamped_estimates: usize,
}

impl KeyRateReport {
    pub fn assemble(
        slices: Vec<SliceKeyRate>,
        duration: f64,
        params: &SystemParams,
    ) -> Result<KeyRateReport> {
        let validity = validity_bounds(total_transmittance(params), params.rep_rate, params.omega)?;
        let total_key_bits = slices.iter().map(|s| s.key_length_bits).sum();
        Ok(KeyRateReport {
            average_rate_bps: average_key_rate(&slices, duration)?,
            total_key_bits,
            duration,
            interval_valid: validity.admits_interval(params.t_interval),
            validity,
            slices,
            degenerate_intervals: 0,
            clamped_estimates: 0,
        })
    }

    /// Per-slice table.
    pub fn table(&self) -> Table {
        let mut header: Vec<String> = [
            "slice_index",
            "representative_angle_rad",
            "n_intervals",
            "duration_s",
        ]
        .map(str::to_owned)
        .to_vec();
        for k in Intensity::ALL {
            for p in BasisPair::ALL {
                header.push(format!("{k}_{p}_qber"));
            }
        }
        header.extend(
            [
                "c_raw",
                "c_value",
                "c_physical",
                "i_e",
                "y0_lower",
                "y1_lower",
                "e1_upper_z",
                "n1_lower_z",
                "bound_status",
                "key_length_bits",
                "key_rate_bps",
            ]
            .map(str::to_owned),
        );
        let mut table = Table::new(REPORT_KIND, header);
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.slices {
            let mut row = vec![
                s.index.to_string(),
                s.representative_angle.to_string(),
                s.n_intervals.map(|n| n.to_string()).unwrap_or_default(),
                s.duration.to_string(),
            ];
            row.extend(s.qbers.iter().map(|(_, _, q)| opt(*q)));
            row.extend([
                opt(s.c.map(|c| c.raw)),
                opt(s.c.map(|c| c.clamped())),
                s.c.map(|c| c.is_physical().to_string()).unwrap_or_default(),
                opt(s.i_e),
                s.bounds.y0_lower.to_string(),
                s.bounds.y1_lower.to_string(),
                s.bounds.e1_upper_z().to_string(),
                s.bounds.n1_lower_z.to_string(),
                s.bounds.status.label().to_owned(),
                s.key_length_bits.to_string(),
                s.key_rate_bps.to_string(),
            ]);
            table.push(row);
        }
        table
    }

    /// Human-readable summary block.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let populated = self.slices.iter().filter(|s| s.duration > 0.0).count();
        let keyed = self
            .slices
            .iter()
            .filter(|s| s.key_length_bits > 0.0)
            .count();
        let _ = writeln!(
            out,
            "slices            {} ({} populated, {} with key)",
            self.slices.len(),
            populated,
            keyed
        );
        let _ = writeln!(out, "duration_s        {}", self.duration);
        let _ = writeln!(out, "total_key_bits    {}", self.total_key_bits);
        let _ = writeln!(out, "average_rate_bps  {:.3}", self.average_rate_bps);
        let rates: Vec<f64> = self
            .slices
            .iter()
            .filter(|s| s.key_length_bits > 0.0)
            .map(|s| s.key_rate_bps)
            .collect();
        if !rates.is_empty() {
            let max = rates.iter().cloned().fold(f64::MIN, f64::max);
            let min = rates.iter().cloned().fold(f64::MAX, f64::min);
            let _ = writeln!(out, "slice_rate_bps    min {min:.3} max {max:.3}");
        }
        let unphysical = self
            .slices
            .iter()
            .filter(|s| s.c.is_some_and(|c| !c.is_physical()))
            .count();
        if unphysical > 0 {
            let _ = writeln!(
                out,
                "warning           {unphysical} slice(s) with C > 2 (statistical fluctuation)"
            );
        }
        let _ = writeln!(
            out,
            "drift_range_rad   [{}, {}] valid={}",
            self.validity.delta_theta_min, self.validity.delta_theta_max, self.validity.valid
        );
        let _ = writeln!(
            out,
            "t_max_s           {} interval_valid={}",
            self.validity.t_max, self.interval_valid
        );
        let _ = writeln!(out, "degenerate        {}", self.degenerate_intervals);
        let _ = writeln!(out, "clamped_estimates {}", self.clamped_estimates);
        out
    }
}

/// Evaluates already-merged slices and assembles the report.
pub fn report_from_slices(
    slices: &[SliceAccumulator],
    params: &SystemParams,
    sec: &SecurityParams,
    duration: f64,
    exec: Execution,
) -> Result<KeyRateReport> {
    let evaluated = exec
        .map_slice(slices, |s| {
            evaluate_slice(
                s.index,
                s.representative_angle,
                Some(s.n_intervals),
                &s.statistics(params),
                params,
                sec,
            )
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    KeyRateReport::assemble(evaluated, duration, params)
}

/// The full post-processing chain over interval tallies.
pub fn analyze_tallies(
    tallies: &[IntervalTally],
    params: &SystemParams,
    sec: &SecurityParams,
    options: &SlicingOptions,
    exec: Execution,
) -> Result<(SlicingResult, KeyRateReport)> {
    if tallies.is_empty() {
        return Err(Error::domain("interval count", 0.0, ">= 1"));
    }
    let slicing = accumulate(tallies, params.m_slices, options, exec)?;
    let duration = tallies.len() as f64 * params.t_interval;
    let mut report = report_from_slices(&slicing.slices, params, sec, duration, exec)?;
    report.degenerate_intervals = slicing.degenerate;
    report.clamped_estimates = slicing.clamped;
    Ok((slicing, report))
}

/// The original RFI post-processing: all intervals form one block.
///
/// With `assume_static` the block's statistics are replaced by the analytic
/// expectation of a frame fixed at `theta = 0` over the same number of
/// pulses, the best case for an unsliced protocol.
pub fn baseline_original_rfi(
    tallies: &[IntervalTally],
    params: &SystemParams,
    sec: &SecurityParams,
    assume_static: bool,
) -> Result<KeyRateReport> {
    if tallies.is_empty() {
        return Err(Error::domain("interval count", 0.0, ">= 1"));
    }
    let single = SystemParams {
        m_slices: 1,
        ..params.clone()
    };
    let merged = accumulate(
        tallies,
        1,
        &SlicingOptions::default(),
        Execution::Sequential,
    )?;
    let block = &merged.slices[0];
    let duration = tallies.len() as f64 * params.t_interval;
    let stats = if assume_static {
        static_statistics(
            params,
            0.0,
            block.n_intervals as f64 * params.pulses_per_interval(),
        )
    } else {
        block.statistics(params)
    };
    let slice = evaluate_slice(0, 0.0, Some(block.n_intervals), &stats, &single, sec)?;
    KeyRateReport::assemble(vec![slice], duration, &single)
}

pub(crate) fn static_statistics(params: &SystemParams, theta: f64, pulses: f64) -> SliceStatistics {
    window_statistics(params, theta, 0.0, pulses)
}

/// Expected statistics for `pulses` pulses with `theta` uniform over a
/// window of `width` around `center`.
pub fn window_statistics(
    params: &SystemParams,
    center: f64,
    width: f64,
    pulses: f64,
) -> SliceStatistics {
    let cells = expected_cells(params, center, width, pulses);
    SliceStatistics {
        cells: CellTable::from_fn(|k, p| Observation {
            detections: cells[(k, p)].detections,
            errors: cells[(k, p)].errors,
            exposures: pulses * params.cell_share(k, p),
        }),
        duration: pulses / params.rep_rate,
    }
}

impl From<BoundStatus> for &'static str {
    fn from(s: BoundStatus) -> Self {
        s.label()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftModel;
    use crate::sim::{simulate_intervals, SamplingMode};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn key_length_examples() {
        assert_eq!(key_length(1e6, 2.0, 0.0, 1e6, 0.0, 1.16), 1e6);
        assert_eq!(key_length(1e6, 2.0, 0.0, 1e6, 0.5, 1.16), 0.0);
        assert_eq!(key_length(1e6, 0.0, 0.0, 1e6, 0.0, 1.16), 0.0);
    }

    #[test]
    fn worst_case_information_bounds_pointwise() {
        for c in [0.5, 1.2, 1.8, 1.95] {
            for e in [0.0, 0.01, 0.05, 0.2] {
                let w = worst_case_eve_information(c, e);
                assert!(w >= eve_information(c, e).unwrap());
                assert!(w >= eve_information(c, 0.0).unwrap() - 1e-15);
            }
        }
    }

    #[test]
    fn key_length_monotonicity() {
        let base = |c: f64, e1: f64, ez: f64| key_length(1e6, c, e1, 2e6, ez, 1.16);
        for i in 0..50 {
            let x = i as f64 / 50.0;
            assert!(base(1.0 + x, 0.02, 0.01) <= base(1.0 + x + 0.02, 0.02, 0.01));
            assert!(base(1.8, 0.5 * x, 0.01) >= base(1.8, 0.5 * x + 0.01, 0.01));
            assert!(base(1.8, 0.02, 0.1 * x) >= base(1.8, 0.02, 0.1 * x + 0.002));
        }
    }

    #[test]
    fn average_rate_examples() {
        let p = SystemParams::default();
        let sec = SecurityParams::default();
        let stats = window_statistics(&p, 0.0, 0.0, 1e9);
        let mut s = evaluate_slice(0, 0.0, None, &stats, &p, &sec).unwrap();
        s.key_length_bits = 3600.0;
        assert_eq!(average_key_rate(&[s.clone()], 3600.0).unwrap(), 1.0);
        s.key_length_bits = 0.0;
        assert_eq!(average_key_rate(&[s], 10.0).unwrap(), 0.0);
        assert!(average_key_rate(&[], 0.0).is_err());
    }

    #[test]
    fn c_value_noiseless_and_depolarized() {
        let ideal = SystemParams {
            dark_rate: 0.0,
            visibility: 1.0,
            intrinsic_error: 0.0,
            ..SystemParams::default()
        };
        let sec = SecurityParams {
            n_sigma: 0.0,
            ..SecurityParams::default()
        };
        for i in 0..4 {
            let th = i as f64 * PI / 2.0;
            let stats = window_statistics(&ideal, th, 0.0, 1e12);
            let b = decoy_bounds(&stats, &ideal, &sec).unwrap();
            assert_relative_eq!(
                slice_c_value(&stats, &b).unwrap().raw,
                2.0,
                max_relative = 1e-12
            );
        }
        // off-axis the decoy bound charges multi-photon errors to single
        // photons, so C sits below 2
        for i in 0..16 {
            let th = 2.0 * PI * i as f64 / 16.0;
            let stats = window_statistics(&ideal, th, 0.0, 1e12);
            let b = decoy_bounds(&stats, &ideal, &sec).unwrap();
            let c = slice_c_value(&stats, &b).unwrap().raw;
            assert!(c > 1.7 && c <= 2.0 + 1e-12, "theta {th}: {c}");
        }

        let depolarized = SystemParams {
            visibility: 0.0,
            ..ideal.clone()
        };
        let stats = window_statistics(&depolarized, 0.3, 0.0, 1e12);
        let b = decoy_bounds(&stats, &depolarized, &sec).unwrap();
        assert_eq!(slice_c_value(&stats, &b).unwrap().raw, 0.0);
        assert_eq!(slice_key_length(&stats, &b, &sec), 0.0);
    }

    #[test]
    fn missing_monitoring_statistics_give_no_key() {
        let p = SystemParams::default();
        let sec = SecurityParams::default();
        let mut stats = window_statistics(&p, 0.0, 0.0, 1e12);
        stats.cells[(Intensity::Signal, BasisPair::XY)] = Observation::default();
        let b = decoy_bounds(&stats, &p, &sec).unwrap();
        assert!(slice_c_value(&stats, &b).is_none());
        assert_eq!(slice_key_length(&stats, &b, &sec), 0.0);
    }

    #[test]
    fn operating_point_pattern() {
        let p = SystemParams::default();
        let sec = SecurityParams::default();
        let pulses = p.n_total / 16.0;
        let width = 2.0 * PI / 16.0;
        let eval = |th: f64| {
            let stats = window_statistics(&p, th, width, pulses);
            evaluate_slice(0, th, None, &stats, &p, &sec).unwrap()
        };
        let aligned = eval(0.0);
        let diagonal = eval(PI / 4.0);
        assert!(aligned.c.unwrap().raw > diagonal.c.unwrap().raw);
        assert!(aligned.key_length_bits > diagonal.key_length_bits);
    }

    #[test]
    fn baseline_matches_single_slice_pipeline() {
        let p = SystemParams::default();
        let sec = SecurityParams::default();
        let tallies = simulate_intervals(
            &p,
            &DriftModel::fixed(0.0),
            3600.0,
            4,
            SamplingMode::Poisson,
            Execution::default(),
        )
        .unwrap();
        let single = SystemParams {
            m_slices: 1,
            ..p.clone()
        };
        let (_, sliced) = analyze_tallies(
            &tallies,
            &single,
            &sec,
            &SlicingOptions::default(),
            Execution::default(),
        )
        .unwrap();
        let baseline = baseline_original_rfi(&tallies, &p, &sec, false).unwrap();
        assert_eq!(sliced.total_key_bits, baseline.total_key_bits);
        assert_eq!(sliced.slices[0].c, baseline.slices[0].c);

        let optimistic = baseline_original_rfi(&tallies, &p, &sec, true).unwrap();
        assert!(optimistic.total_key_bits > 0.0);
    }

    #[test]
    fn report_totals_consistent() {
        let p = SystemParams::default();
        let sec = SecurityParams::default();
        let tallies = simulate_intervals(
            &p,
            &DriftModel::linear(0.0, 2.0 * PI / 7200.0),
            7200.0,
            8,
            SamplingMode::Poisson,
            Execution::default(),
        )
        .unwrap();
        let (_, report) = analyze_tallies(
            &tallies,
            &p,
            &sec,
            &SlicingOptions::default(),
            Execution::default(),
        )
        .unwrap();
        let sum: f64 = report.slices.iter().map(|s| s.key_length_bits).sum();
        assert_relative_eq!(
            report.average_rate_bps * report.duration,
            sum,
            max_relative = 1e-6
        );
        assert!(report.slices.iter().all(|s| s.key_length_bits >= 0.0));
        let table = report.table();
        assert_eq!(table.rows.len(), 16);
        let parsed = Table::parse(&table.render(), std::path::Path::new("r")).unwrap();
        assert_eq!(parsed, table);
    }
}
