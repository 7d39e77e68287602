//! Time evolution of the reference-frame misalignment angle.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Reduces an angle to `[0, 2pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TWO_PI);
    // rem_euclid can round up to exactly 2pi for tiny negative inputs
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Smallest signed difference `b - a` on the circle, in `(-pi, pi]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(TWO_PI);
    if d > PI {
        d - TWO_PI
    } else {
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftKind {
    Static,
    /// `theta = theta0 + rate * t`.
    Linear {
        rate: f64,
    },
    /// `theta = theta0 + amplitude * (1 - cos(2 pi t / period))`; an
    /// amplitude of `pi` sweeps the full circle every period.
    Sinusoidal {
        amplitude: f64,
        period: f64,
    },
    /// Gaussian increments of standard deviation `sigma * sqrt(step)` every
    /// `step` seconds, each clipped to `omega_cap * step`, linearly
    /// interpolated in between.
    BoundedRandomWalk {
        sigma: f64,
        step: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub theta0: f64,
    /// Declared bound on the angular speed (rad/s).
    pub omega_cap: f64,
    #[serde(flatten)]
    pub kind: DriftKind,
}

impl Default for DriftModel {
    /// Full-circle sinusoid repeating 29 times over a 50.7 h run.
    fn default() -> Self {
        DriftModel {
            theta0: 0.0,
            omega_cap: 6.9e-3,
            kind: DriftKind::Sinusoidal {
                amplitude: PI,
                period: 6290.0,
            },
        }
    }
}

impl DriftModel {
    pub fn fixed(theta0: f64) -> Self {
        DriftModel {
            theta0,
            omega_cap: 0.0,
            kind: DriftKind::Static,
        }
    }

    pub fn linear(theta0: f64, rate: f64) -> Self {
        DriftModel {
            theta0,
            omega_cap: rate.abs(),
            kind: DriftKind::Linear { rate },
        }
    }

    /// Peak angular speed implied by the parameters.
    pub fn peak_speed(&self) -> f64 {
        match self.kind {
            DriftKind::Static => 0.0,
            DriftKind::Linear { rate } => rate.abs(),
            DriftKind::Sinusoidal { amplitude, period } => TWO_PI * amplitude.abs() / period,
            DriftKind::BoundedRandomWalk { .. } => self.omega_cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta0.is_finite() {
            return Err(Error::config("drift.theta0", "must be finite"));
        }
        if !(self.omega_cap >= 0.0) {
            return Err(Error::config("drift.omega_cap", "must be >= 0"));
        }
        match self.kind {
            DriftKind::Static => {}
            DriftKind::Linear { rate } => {
                if !rate.is_finite() {
                    return Err(Error::config("drift.rate", "must be finite"));
                }
            }
            DriftKind::Sinusoidal { amplitude, period } => {
                if !(period > 0.0) {
                    return Err(Error::config("drift.period", "must be positive"));
                }
                if !amplitude.is_finite() {
                    return Err(Error::config("drift.amplitude", "must be finite"));
                }
            }
            DriftKind::BoundedRandomWalk { sigma, step, .. } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::config("drift.sigma", "must be finite and >= 0"));
                }
                if !(step > 0.0) {
                    return Err(Error::config("drift.step", "must be positive"));
                }
            }
        }
        let peak = self.peak_speed();
        if peak > self.omega_cap * (1.0 + 1e-12) {
            return Err(Error::config(
                "drift.omega_cap",
                format!("peak drift speed {peak} rad/s exceeds the declared cap"),
            ));
        }
        Ok(())
    }

    pub fn trajectory(&self) -> DriftTrajectory<'_> {
        DriftTrajectory::new(self)
    }
}

/// Stateful evaluator; efficient for non-decreasing query times.
pub struct DriftTrajectory<'a> {
    model: &'a DriftModel,
    walk: Option<WalkState>,
}

struct WalkState {
    theta0: f64,
    seed: u64,
    rng: ChaCha8Rng,
    increments: Normal<f64>,
    max_step: f64,
    step: f64,
    // unwrapped angle at grid points `steps_done` and `steps_done + 1`
    steps_done: u64,
    at: f64,
    next: f64,
}

impl WalkState {
    fn new(theta0: f64, sigma: f64, step: f64, seed: u64, cap: f64) -> Self {
        let mut s = WalkState {
            theta0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            increments: Normal::new(0.0, sigma * step.sqrt()).expect("validated sigma"),
            max_step: cap * step,
            step,
            steps_done: 0,
            at: theta0,
            next: theta0,
        };
        s.next = s.at + s.draw();
        s
    }

    fn restart(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.steps_done = 0;
        self.at = self.theta0;
        self.next = self.theta0 + self.draw();
    }

    fn draw(&mut self) -> f64 {
        self.increments
            .sample(&mut self.rng)
            .clamp(-self.max_step, self.max_step)
    }

    fn advance_to(&mut self, grid: u64) {
        while self.steps_done < grid {
            self.at = self.next;
            self.next = self.at + self.draw();
            self.steps_done += 1;
        }
    }
}

impl<'a> DriftTrajectory<'a> {
    pub fn new(model: &'a DriftModel) -> Self {
        let walk = match model.kind {
            DriftKind::BoundedRandomWalk { sigma, step, seed } => Some(WalkState::new(
                model.theta0,
                sigma,
                step,
                seed,
                model.omega_cap,
            )),
            _ => None,
        };
        DriftTrajectory { model, walk }
    }

    /// Unwrapped angle at time `t`.
    pub fn unwrapped_at(&mut self, t: f64) -> f64 {
        let m = self.model;
        match m.kind {
            DriftKind::Static => m.theta0,
            DriftKind::Linear { rate } => m.theta0 + rate * t,
            DriftKind::Sinusoidal { amplitude, period } => {
                m.theta0 + amplitude * (1.0 - (TWO_PI * t / period).cos())
            }
            DriftKind::BoundedRandomWalk { .. } => {
                let walk = self.walk.as_mut().expect("walk state");
                let pos = t / walk.step;
                let grid = pos.floor() as u64;
                if grid < walk.steps_done {
                    walk.restart();
                }
                walk.advance_to(grid);
                let frac = pos - grid as f64;
                walk.at + frac * (walk.next - walk.at)
            }
        }
    }

    /// Angle at time `t`, reduced to `[0, 2pi)`.
    pub fn theta_at(&mut self, t: f64) -> f64 {
        wrap_angle(self.unwrapped_at(t))
    }
}

/// Misalignment at time `t >= 0`, reduced to `[0, 2pi)`.
pub fn theta_at(t: f64, model: &DriftModel) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain("t", t, ">= 0"));
    }
    Ok(model.trajectory().theta_at(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn static_and_linear() {
        let s = DriftModel::fixed(1.0);
        assert_eq!(theta_at(1234.5, &s).unwrap(), 1.0);
        let l = DriftModel::linear(0.0, 0.01);
        assert_abs_diff_eq!(theta_at(100.0, &l).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(theta_at(700.0, &l).unwrap(), 7.0 - TWO_PI, epsilon = 1e-12);
        assert!(theta_at(-1.0, &l).is_err());
    }

    #[test]
    fn default_covers_29_periods() {
        let d = DriftModel::default();
        d.validate().unwrap();
        let DriftKind::Sinusoidal { period, .. } = d.kind else {
            panic!("default drift is sinusoidal")
        };
        let run = 50.7 * 3600.0;
        assert!(run / period >= 29.0);
        assert!(d.peak_speed() <= 6.9e-3);
    }

    #[test]
    fn cap_is_enforced_at_construction() {
        let mut l = DriftModel::linear(0.0, 0.01);
        l.omega_cap = 0.005;
        assert!(l.validate().is_err());
        let fast = DriftModel {
            theta0: 0.0,
            omega_cap: 1e-3,
            kind: DriftKind::Sinusoidal {
                amplitude: PI,
                period: 100.0,
            },
        };
        assert!(fast.validate().is_err());
    }

    #[test]
    fn random_walk_reproducible_and_capped() {
        let model = DriftModel {
            theta0: 0.5,
            omega_cap: 2e-3,
            kind: DriftKind::BoundedRandomWalk {
                sigma: 0.05,
                step: 1.0,
                seed: 11,
            },
        };
        model.validate().unwrap();
        let mut a = model.trajectory();
        let mut b = model.trajectory();
        let mut prev = a.unwrapped_at(0.0);
        for i in 1..5000 {
            let t = i as f64 * 2.5;
            let x = a.unwrapped_at(t);
            assert_eq!(x, b.unwrapped_at(t));
            assert!((x - prev).abs() <= 2e-3 * 2.5 + 1e-12);
            prev = x;
        }
        // going backwards restarts from the seed
        let early = a.theta_at(10.0);
        assert_eq!(early, theta_at(10.0, &model).unwrap());
    }

    #[test]
    fn wrap_and_difference() {
        assert_eq!(wrap_angle(-1e-300), 0.0);
        assert_abs_diff_eq!(wrap_angle(-0.5), TWO_PI - 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            angle_difference(6.2, 0.1),
            0.1 + TWO_PI - 6.2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            angle_difference(0.1, 6.2),
            -(0.1 + TWO_PI - 6.2),
            epsilon = 1e-12
        );
    }
}
