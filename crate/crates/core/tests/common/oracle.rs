//! Photon-number expansion of the channel, built from first principles, and
//! a soundness check of the decoy bounds against it.

use std::f64::consts::PI;

use rfiqkd::channel::SystemParams;
use rfiqkd::decoy::{decoy_bounds, Observation, SliceStatistics};
use rfiqkd::keyrate::{key_length, slice_key_length};
use rfiqkd::protocol::{BasisPair, Intensity, SecurityParams};
use rfiqkd::tally::CellTable;

const MAX_PHOTONS: u32 = 80;

fn poisson(n: u32, mean: f64) -> f64 {
    let mut p = (-mean).exp();
    for i in 1..=n {
        p *= mean / i as f64;
    }
    p
}

/// Photon-driven error rate of `pair` averaged over a window by midpoint
/// quadrature.
fn averaged_error(pair: BasisPair, center: f64, width: f64, p: &SystemParams) -> f64 {
    let v = p.visibility * (1.0 - 2.0 * p.intrinsic_error);
    let steps = 400;
    let mut acc = 0.0;
    for i in 0..steps {
        let th = if width == 0.0 {
            center
        } else {
            center - width / 2.0 + width * (i as f64 + 0.5) / steps as f64
        };
        acc += match pair {
            BasisPair::ZZ => p.intrinsic_error,
            BasisPair::XX | BasisPair::YY => (1.0 - v * th.cos()) / 2.0,
            BasisPair::XY => (1.0 - v * th.sin()) / 2.0,
            BasisPair::YX => (1.0 + v * th.sin()) / 2.0,
        };
    }
    acc / steps as f64
}

struct Truth {
    stats: SliceStatistics,
    y1: f64,
    e1: [f64; 5],
}

fn expand(p: &SystemParams, eta: f64, center: f64, width: f64, pulses: f64) -> Truth {
    let y0 = 2.0 * p.dark_rate / p.rep_rate;
    let yield_n = |n: u32| 1.0 - (1.0 - y0) * (1.0 - eta).powi(n as i32);
    let mut e1 = [0.0; 5];
    let cells = CellTable::from_fn(|k, pair| {
        let mean = p.mean_photon_number(k);
        let e = averaged_error(pair, center, width, p);
        let (mut gain, mut err) = (0.0, 0.0);
        for n in 0..=MAX_PHOTONS {
            let w = poisson(n, mean);
            let yn = yield_n(n);
            gain += w * yn;
            err += w * (0.5 * y0 + e * (yn - y0));
        }
        let y1 = yield_n(1);
        e1[pair.index()] = (0.5 * y0 + e * (y1 - y0)) / y1;
        let exposures = pulses * p.cell_share(k, pair);
        Observation {
            detections: gain * exposures,
            errors: err * exposures,
            exposures,
        }
    });
    Truth {
        stats: SliceStatistics {
            cells,
            duration: pulses / p.rep_rate,
        },
        y1: yield_n(1),
        e1,
    }
}

/// Checks every slice of a 5x5 (eta, dark) grid, with and without
/// finite-size terms. Returns the number of valid slices checked.
pub fn check_decoy_soundness() -> Result<usize, String> {
    let m = 16;
    let width = 2.0 * PI / m as f64;
    let etas = [1e-1, 1e-2, 1e-3, 3e-4, 1e-4];
    let darks = [0.0, 20.0, 120.0, 200.0, 1000.0];
    let mut checked = 0;
    for &eta in &etas {
        for &dark in &darks {
            let p = SystemParams {
                dark_rate: dark,
                ..SystemParams::default()
            };
            for n_sigma in [0.0, 5.3] {
                let sec = SecurityParams {
                    n_sigma,
                    ..SecurityParams::default()
                };
                for i in 0..m {
                    let center = 2.0 * PI * i as f64 / m as f64;
                    let truth = expand(&p, eta, center, width, 1e13 / m as f64);
                    let b = decoy_bounds(&truth.stats, &p, &sec).map_err(|e| e.to_string())?;
                    let ctx = format!("eta {eta} dark {dark} n_sigma {n_sigma} slice {i}");
                    if b.y1_lower > truth.y1 * (1.0 + 1e-9) {
                        return Err(format!("{ctx}: Y1 {} > {}", b.y1_lower, truth.y1));
                    }
                    if !b.is_valid() {
                        continue;
                    }
                    for pair in BasisPair::ALL {
                        let bound = b.pair(pair);
                        let e_true = truth.e1[pair.index()];
                        let corr_true = 1.0 - 2.0 * e_true;
                        let corr = bound.correlator();
                        if corr.abs() > corr_true.abs() + 1e-9 {
                            return Err(format!("{ctx} {pair}: |{corr}| > |{corr_true}|"));
                        }
                        if corr != 0.0 && corr.signum() != corr_true.signum() {
                            return Err(format!("{ctx} {pair}: sign of {corr} vs {corr_true}"));
                        }
                    }
                    // the key computed from true single-photon quantities is
                    // never below the bounded one
                    let z = truth.stats.cells[(Intensity::Signal, BasisPair::ZZ)];
                    let mu = p.mu;
                    let n1_true = truth.y1 * mu * (-mu).exp() * z.exposures;
                    let c_true: f64 = BasisPair::MONITORING
                        .iter()
                        .map(|q| (1.0 - 2.0 * truth.e1[q.index()]).powi(2))
                        .sum();
                    let ideal = key_length(
                        n1_true,
                        c_true,
                        truth.e1[BasisPair::ZZ.index()],
                        z.detections,
                        z.errors / z.detections,
                        sec.f_ec,
                    );
                    let bounded = slice_key_length(&truth.stats, &b, &sec);
                    if bounded > ideal * (1.0 + 1e-9) + 1e-6 {
                        return Err(format!("{ctx}: key {bounded} > {ideal}"));
                    }
                    checked += 1;
                }
            }
        }
    }
    if checked <= 400 {
        return Err(format!("only {checked} valid slices checked"));
    }
    Ok(checked)
}
