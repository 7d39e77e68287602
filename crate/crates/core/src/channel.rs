//! Expectation-level model of the decoy-state time-bin/phase link.
//!
//! Gains follow the Poissonian-source model `Q_k = 1 - (1 - y0) e^{-k eta}`.
//! X/Y error rates depend on the frame misalignment `theta` through
//!
//! ```text
//! e_XX = e_YY = (1 - V' cos theta) / 2
//! e_XY        = (1 - V' sin theta) / 2
//! e_YX        = (1 + V' sin theta) / 2
//! ```
//!
//! with `V' = V (1 - 2 e_d)`, and background clicks carry error rate 1/2.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{Basis, BasisPair, Intensity};
use crate::tally::CellTable;

/// Fraction of photons that land in the non-interfering s+s / l+l slots.
pub const Z_PATH_FACTOR: f64 = 0.5;
/// Fraction of photons that land in the interfering s+l / l+s slot.
pub const XY_PATH_FACTOR: f64 = 0.5;
/// Error rate of a background (dark) click.
pub const BACKGROUND_ERROR: f64 = 0.5;
/// Detector channels contributing dark counts to each gate.
pub const DETECTOR_CHANNELS: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Pulse repetition rate (pulses/s).
    pub rep_rate: f64,
    /// Signal mean photon number.
    pub mu: f64,
    /// Decoy mean photon number.
    pub nu: f64,
    pub p_signal: f64,
    pub p_decoy: f64,
    pub p_vacuum: f64,
    pub p_z: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z_b: f64,
    pub p_x_b: f64,
    pub p_y_b: f64,
    pub fiber_loss_db: f64,
    pub receiver_loss_db: f64,
    pub det_efficiency: f64,
    /// Dark counts per second per detector channel.
    pub dark_rate: f64,
    /// Intrinsic interference visibility of the X/Y measurement.
    pub visibility: f64,
    /// Intrinsic bit-flip floor `e_d`.
    pub intrinsic_error: f64,
    /// Sampling interval T (s).
    pub t_interval: f64,
    pub m_slices: usize,
    /// Total pulses N_t used by the analytic evaluation.
    pub n_total: f64,
    /// Drift speed bound (rad/s).
    pub omega: f64,
}

impl Default for SystemParams {
    /// The 100 km operating point, calibrated to the reported Z-basis error
    /// rates and count rates.
    fn default() -> Self {
        SystemParams {
            rep_rate: 80.0e6,
            mu: 0.722,
            nu: 0.104,
            p_signal: 0.5,
            p_decoy: 0.4,
            p_vacuum: 0.1,
            p_z: 0.5,
            p_x: 0.25,
            p_y: 0.25,
            p_z_b: 0.5,
            p_x_b: 0.25,
            p_y_b: 0.25,
            fiber_loss_db: 23.5,
            receiver_loss_db: 7.0309,
            det_efficiency: 0.8,
            dark_rate: 120.0,
            visibility: 0.95,
            intrinsic_error: 0.003,
            t_interval: 5.0,
            m_slices: 16,
            n_total: 1.0e13,
            omega: 6.9e-3,
        }
    }
}

fn is_probability(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_signal", self.p_signal),
            ("p_decoy", self.p_decoy),
            ("p_vacuum", self.p_vacuum),
            ("p_z", self.p_z),
            ("p_x", self.p_x),
            ("p_y", self.p_y),
            ("p_z_b", self.p_z_b),
            ("p_x_b", self.p_x_b),
            ("p_y_b", self.p_y_b),
            ("det_efficiency", self.det_efficiency),
            ("visibility", self.visibility),
            ("intrinsic_error", self.intrinsic_error),
        ];
        for (name, p) in probs {
            if !is_probability(p) {
                return Err(Error::config(
                    format!("system.{name}"),
                    "must lie in [0, 1]",
                ));
            }
        }
        let sums = [
            ("p_signal", self.p_signal + self.p_decoy + self.p_vacuum),
            ("p_z", self.p_z + self.p_x + self.p_y),
            ("p_z_b", self.p_z_b + self.p_x_b + self.p_y_b),
        ];
        for (name, s) in sums {
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::config(
                    format!("system.{name}"),
                    format!("probability group sums to {s}, expected 1"),
                ));
            }
        }
        if !(self.nu >= 0.0 && self.mu > self.nu) {
            return Err(Error::config("system.mu", "need mu > nu >= 0"));
        }
        if !(self.rep_rate > 0.0 && self.rep_rate.is_finite()) {
            return Err(Error::config("system.rep_rate", "must be positive"));
        }
        if self.m_slices < 1 {
            return Err(Error::config("system.m_slices", "must be >= 1"));
        }
        if !(self.t_interval > 0.0) {
            return Err(Error::config("system.t_interval", "must be positive"));
        }
        if !(self.dark_rate >= 0.0) {
            return Err(Error::config("system.dark_rate", "must be >= 0"));
        }
        if !(self.fiber_loss_db >= 0.0 && self.receiver_loss_db >= 0.0) {
            return Err(Error::config(
                "system.fiber_loss_db",
                "losses must be >= 0 dB",
            ));
        }
        if !(self.n_total > 0.0) {
            return Err(Error::config("system.n_total", "must be positive"));
        }
        if !(self.omega >= 0.0) {
            return Err(Error::config("system.omega", "must be >= 0"));
        }
        if self.background_yield() >= 1.0 {
            return Err(Error::config(
                "system.dark_rate",
                "background yield per gate >= 1",
            ));
        }
        Ok(())
    }

    pub fn mean_photon_number(&self, k: Intensity) -> f64 {
        match k {
            Intensity::Signal => self.mu,
            Intensity::Decoy => self.nu,
            Intensity::Vacuum => 0.0,
        }
    }

    pub fn p_intensity(&self, k: Intensity) -> f64 {
        match k {
            Intensity::Signal => self.p_signal,
            Intensity::Decoy => self.p_decoy,
            Intensity::Vacuum => self.p_vacuum,
        }
    }

    pub fn p_alice(&self, b: Basis) -> f64 {
        match b {
            Basis::X => self.p_x,
            Basis::Y => self.p_y,
            Basis::Z => self.p_z,
        }
    }

    pub fn p_bob(&self, b: Basis) -> f64 {
        match b {
            Basis::X => self.p_x_b,
            Basis::Y => self.p_y_b,
            Basis::Z => self.p_z_b,
        }
    }

    /// Fraction of emitted pulses that are sifted into cell `(k, pair)`
    /// before channel loss.
    pub fn cell_share(&self, k: Intensity, pair: BasisPair) -> f64 {
        let path = if pair == BasisPair::ZZ {
            Z_PATH_FACTOR
        } else {
            XY_PATH_FACTOR
        };
        self.p_intensity(k) * self.p_alice(pair.alice()) * self.p_bob(pair.bob()) * path
    }

    pub fn pulses_per_interval(&self) -> f64 {
        self.rep_rate * self.t_interval
    }

    /// Background yield per sifted gate, `2 * dark_rate / rep_rate`.
    pub fn background_yield(&self) -> f64 {
        DETECTOR_CHANNELS * self.dark_rate / self.rep_rate
    }

    pub fn total_loss_db(&self) -> f64 {
        self.fiber_loss_db + self.receiver_loss_db + detector_loss_db(self.det_efficiency)
    }

    /// Copy with the fiber loss adjusted so the total loss (fiber, receiver
    /// and detector) equals `total_db`.
    pub fn with_total_loss(&self, total_db: f64) -> Result<Self> {
        let fiber = total_db - self.receiver_loss_db - detector_loss_db(self.det_efficiency);
        if fiber < -1e-9 {
            return Err(Error::config(
                "sweep.loss_db",
                format!(
                    "total loss {total_db} dB is below the receiver and detector loss {:.4} dB",
                    total_db - fiber
                ),
            ));
        }
        Ok(SystemParams {
            fiber_loss_db: fiber.max(0.0),
            ..self.clone()
        })
    }

    /// Pulses sent while accumulating `n_total`.
    pub fn total_duration(&self) -> f64 {
        self.n_total / self.rep_rate
    }

    /// Effective visibility `V (1 - 2 e_d)`.
    pub fn effective_visibility(&self) -> f64 {
        self.visibility * (1.0 - 2.0 * self.intrinsic_error)
    }
}

fn detector_loss_db(det_efficiency: f64) -> f64 {
    -10.0 * det_efficiency.log10()
}

/// `eta = 10^(-(fiber + receiver)/10) * det_efficiency`.
pub fn total_transmittance(params: &SystemParams) -> f64 {
    10f64.powf(-(params.fiber_loss_db + params.receiver_loss_db) / 10.0) * params.det_efficiency
}

/// `Q_k = 1 - (1 - y0) e^{-k eta}`.
pub fn expected_gain(k: f64, eta: f64, y0: f64) -> f64 {
    1.0 - (1.0 - y0) * (-k * eta).exp()
}

/// Intrinsic (photon-driven) error rate of a pair with effective
/// visibility `v_eff`.
pub fn signal_error_rate(pair: BasisPair, theta: f64, v_eff: f64, e_d: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    match pair {
        BasisPair::ZZ => e_d,
        BasisPair::XX | BasisPair::YY => (1.0 - v_eff * c) / 2.0,
        BasisPair::XY => (1.0 - v_eff * s) / 2.0,
        BasisPair::YX => (1.0 + v_eff * s) / 2.0,
    }
}

/// Factor by which averaging `cos`/`sin` uniformly over a window of width
/// `width` around its centre scales the correlators: `sin(w/2) / (w/2)`.
pub fn window_contrast(width: f64) -> f64 {
    let half = width / 2.0;
    if half.abs() < 1e-8 {
        1.0 - half * half / 6.0
    } else {
        half.sin() / half
    }
}

fn background_weighted(e_pair: f64, q: f64, y0: f64) -> f64 {
    if q <= 0.0 {
        return BACKGROUND_ERROR;
    }
    (BACKGROUND_ERROR * y0 + e_pair * (q - y0)) / q
}

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..2.0 * PI).contains(&theta) {
        Ok(())
    } else {
        Err(Error::domain("theta", theta, "[0, 2pi)"))
    }
}

/// Background-weighted QBER of `pair` at misalignment `theta` for a source
/// of mean photon number `k`.
pub fn expected_qber(pair: BasisPair, theta: f64, k: f64, params: &SystemParams) -> Result<f64> {
    check_theta(theta)?;
    Ok(expected_qber_windowed(pair, theta, 0.0, k, params))
}

/// QBER averaged over `theta` uniform on `[center - width/2, center + width/2]`.
pub fn expected_qber_windowed(
    pair: BasisPair,
    center: f64,
    width: f64,
    k: f64,
    params: &SystemParams,
) -> f64 {
    let eta = total_transmittance(params);
    let y0 = params.background_yield();
    let q = expected_gain(k, eta, y0);
    let v_eff = params.effective_visibility() * window_contrast(width);
    let e = signal_error_rate(pair, center, v_eff, params.intrinsic_error);
    background_weighted(e, q, y0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExpectedCell {
    pub detections: f64,
    pub errors: f64,
}

/// Expected sifted detections and errors for one sampling interval.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedIntervalStats {
    pub theta: f64,
    pub cells: CellTable<ExpectedCell>,
}

/// Expected per-interval statistics at misalignment `theta`.
pub fn interval_expectation(params: &SystemParams, theta: f64) -> Result<ExpectedIntervalStats> {
    check_theta(theta)?;
    Ok(ExpectedIntervalStats {
        theta,
        cells: expected_cells(params, theta, 0.0, params.pulses_per_interval()),
    })
}

/// Expected cells for `pulses` emitted pulses with `theta` spread uniformly
/// over a window of `width` around `center`.
pub fn expected_cells(
    params: &SystemParams,
    center: f64,
    width: f64,
    pulses: f64,
) -> CellTable<ExpectedCell> {
    let eta = total_transmittance(params);
    let y0 = params.background_yield();
    CellTable::from_fn(|k, pair| {
        let q = expected_gain(params.mean_photon_number(k), eta, y0);
        let detections = pulses * params.cell_share(k, pair) * q;
        let e = expected_qber_windowed(pair, center, width, params.mean_photon_number(k), params);
        ExpectedCell {
            detections,
            errors: detections * e,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn noiseless() -> SystemParams {
        SystemParams {
            dark_rate: 0.0,
            visibility: 1.0,
            intrinsic_error: 0.0,
            ..SystemParams::default()
        }
    }

    #[test]
    fn default_is_valid_and_at_31_5_db() {
        let p = SystemParams::default();
        p.validate().unwrap();
        assert_abs_diff_eq!(p.total_loss_db(), 31.5, epsilon = 1e-4);
        assert_relative_eq!(
            total_transmittance(&p),
            10f64.powf(-3.15),
            max_relative = 1e-4
        );
    }

    #[test]
    fn transmittance_examples() {
        let mut p = SystemParams {
            fiber_loss_db: 0.0,
            receiver_loss_db: 0.0,
            det_efficiency: 1.0,
            ..SystemParams::default()
        };
        assert_eq!(total_transmittance(&p), 1.0);
        p.fiber_loss_db = 10.0;
        assert_relative_eq!(total_transmittance(&p), 0.1, max_relative = 1e-15);
        p.fiber_loss_db = 23.5;
        p.receiver_loss_db = 10.0;
        p.det_efficiency = 0.8;
        assert_relative_eq!(
            total_transmittance(&p),
            3.573_468_737e-4,
            max_relative = 1e-9
        );
    }

    #[test]
    fn gain_examples() {
        assert_relative_eq!(expected_gain(0.0, 0.3, 2e-6), 2e-6, max_relative = 1e-9);
        assert_eq!(expected_gain(0.5, 0.0, 0.0), 0.0);
        let q_mu = expected_gain(0.722, 7e-4, 3e-6);
        let q_nu = expected_gain(0.104, 7e-4, 3e-6);
        assert!(q_mu > q_nu && q_nu > 3e-6);
    }

    #[test]
    fn qber_examples() {
        let p = noiseless();
        assert_eq!(expected_qber(BasisPair::XX, 0.0, p.mu, &p).unwrap(), 0.0);
        assert_eq!(expected_qber(BasisPair::XY, 0.0, p.mu, &p).unwrap(), 0.5);
        assert!(expected_qber(BasisPair::XX, 2.0 * PI, p.mu, &p).is_err());

        let d = SystemParams::default();
        let z_signal = expected_qber(BasisPair::ZZ, 1.0, d.mu, &d).unwrap();
        let z_decoy = expected_qber(BasisPair::ZZ, 1.0, d.nu, &d).unwrap();
        assert!((0.004..=0.009).contains(&z_signal), "{z_signal}");
        assert!((0.017..=0.030).contains(&z_decoy), "{z_decoy}");
    }

    #[test]
    fn qber_complementary_and_periodic() {
        let p = noiseless();
        for i in 0..64 {
            let th = 2.0 * PI * i as f64 / 64.0;
            let shifted = (th + PI) % (2.0 * PI);
            let a = expected_qber(BasisPair::XX, th, p.mu, &p).unwrap();
            let b = expected_qber(BasisPair::XX, shifted, p.mu, &p).unwrap();
            assert_abs_diff_eq!(a + b, 1.0, epsilon = 1e-12);
            for pair in BasisPair::ALL {
                let x = expected_qber_windowed(pair, th, 0.0, p.mu, &p);
                let y = expected_qber_windowed(pair, th + 2.0 * PI, 0.0, p.mu, &p);
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn model_c_is_theta_independent() {
        use crate::protocol::{c_value, CorrelationSet};
        let p = SystemParams {
            dark_rate: 0.0,
            ..SystemParams::default()
        };
        let expected = 2.0 * p.effective_visibility().powi(2);
        for i in 0..100 {
            let th = 2.0 * PI * i as f64 / 100.0;
            let e = |pair| expected_qber(pair, th, p.mu, &p).unwrap();
            let corr = CorrelationSet::from_qbers(
                e(BasisPair::XX),
                e(BasisPair::XY),
                e(BasisPair::YX),
                e(BasisPair::YY),
            )
            .unwrap();
            assert_abs_diff_eq!(c_value(&corr).raw, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn window_average_matches_quadrature() {
        let p = SystemParams::default();
        let (center, width) = (0.9, 2.0 * PI / 16.0);
        for pair in BasisPair::ALL {
            let n = 20_000;
            let mut acc = 0.0;
            for j in 0..n {
                let th = center - width / 2.0 + width * (j as f64 + 0.5) / n as f64;
                acc += expected_qber(pair, th.rem_euclid(2.0 * PI), p.mu, &p).unwrap();
            }
            let quad = acc / n as f64;
            let closed = expected_qber_windowed(pair, center, width, p.mu, &p);
            assert_abs_diff_eq!(quad, closed, epsilon = 1e-9);
        }
    }

    #[test]
    fn interval_expectation_properties() {
        let vac = SystemParams {
            dark_rate: 0.0,
            ..SystemParams::default()
        };
        let stats = interval_expectation(&vac, 0.3).unwrap();
        for pair in BasisPair::ALL {
            assert_eq!(
                stats.cells[(Intensity::Vacuum, pair)],
                ExpectedCell::default()
            );
        }

        let p = SystemParams::default();
        let s = interval_expectation(&p, 1.2).unwrap();
        let rate = s.cells[(Intensity::Signal, BasisPair::ZZ)].detections / p.t_interval;
        assert!((1300.0..=5200.0).contains(&rate), "signal Z rate {rate}");
        for (_, _, c) in s.cells.iter() {
            assert!(c.errors <= c.detections && c.errors >= 0.0);
        }

        let doubled = SystemParams {
            t_interval: 2.0 * p.t_interval,
            ..p.clone()
        };
        let d = interval_expectation(&doubled, 1.2).unwrap();
        for ((_, _, a), (_, _, b)) in s.cells.iter().zip(d.cells.iter()) {
            assert_eq!(2.0 * a.detections, b.detections);
            assert_eq!(2.0 * a.errors, b.errors);
        }
    }

    #[test]
    fn validation_catches_bad_groups() {
        let p = SystemParams {
            p_decoy: 0.5,
            ..SystemParams::default()
        };
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("system.p_signal"), "{err}");
        let p = SystemParams {
            nu: 0.8,
            ..SystemParams::default()
        };
        assert!(p.validate().is_err());
        let p = SystemParams {
            m_slices: 0,
            ..SystemParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn total_loss_override() {
        let p = SystemParams::default().with_total_loss(40.0).unwrap();
        assert_abs_diff_eq!(p.total_loss_db(), 40.0, epsilon = 1e-12);
        assert!(SystemParams::default().with_total_loss(3.0).is_err());
    }
}
