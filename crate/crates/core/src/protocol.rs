//! Pure mathematical core of the RFI protocol: binary entropy, correlators,
//! the channel-quality value `C`, Eve's information, and the drift validity
//! range.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Number of detections needed to resolve the frame drift within one
/// parameter-estimation window. Sets the lower end of the usable drift range.
pub const DRIFT_RESOLUTION_DETECTIONS: f64 = 3.0e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
    /// Time-bin key basis.
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    pub fn is_monitoring(self) -> bool {
        !matches!(self, Basis::Z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    Signal,
    Decoy,
    Vacuum,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Signal, Intensity::Decoy, Intensity::Vacuum];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Intensity::Signal => "signal",
            Intensity::Decoy => "decoy",
            Intensity::Vacuum => "vacuum",
        }
    }
}

impl fmt::Display for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A sifted (Alice basis, Bob basis) combination that produces statistics.
///
/// X/Y combinations all interfere and are kept for channel monitoring; only
/// ZZ is kept from the time-bin basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BasisPair {
    XX,
    XY,
    YX,
    YY,
    ZZ,
}

impl BasisPair {
    pub const ALL: [BasisPair; 5] = [
        BasisPair::XX,
        BasisPair::XY,
        BasisPair::YX,
        BasisPair::YY,
        BasisPair::ZZ,
    ];
    pub const MONITORING: [BasisPair; 4] =
        [BasisPair::XX, BasisPair::XY, BasisPair::YX, BasisPair::YY];

    pub fn new(alice: Basis, bob: Basis) -> Result<Self> {
        use Basis::*;
        Ok(match (alice, bob) {
            (X, X) => BasisPair::XX,
            (X, Y) => BasisPair::XY,
            (Y, X) => BasisPair::YX,
            (Y, Y) => BasisPair::YY,
            (Z, Z) => BasisPair::ZZ,
            (a, b) => return Err(Error::UnsupportedPair(a, b)),
        })
    }

    pub fn alice(self) -> Basis {
        match self {
            BasisPair::XX | BasisPair::XY => Basis::X,
            BasisPair::YX | BasisPair::YY => Basis::Y,
            BasisPair::ZZ => Basis::Z,
        }
    }

    pub fn bob(self) -> Basis {
        match self {
            BasisPair::XX | BasisPair::YX => Basis::X,
            BasisPair::XY | BasisPair::YY => Basis::Y,
            BasisPair::ZZ => Basis::Z,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            BasisPair::XX => "XX",
            BasisPair::XY => "XY",
            BasisPair::YX => "YX",
            BasisPair::YY => "YY",
            BasisPair::ZZ => "ZZ",
        }
    }
}

impl fmt::Display for BasisPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Security and post-processing constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecurityParams {
    /// Error-correction efficiency `f >= 1`.
    pub f_ec: f64,
    /// Failure probability per estimated bound.
    pub eps_pe: f64,
    /// Standard deviations applied to every observed rate.
    pub n_sigma: f64,
}

impl Default for SecurityParams {
    fn default() -> Self {
        SecurityParams {
            f_ec: 1.16,
            eps_pe: 1.0e-7,
            n_sigma: 5.3,
        }
    }
}

impl SecurityParams {
    /// Builds parameters whose `n_sigma` is the two-sided Gaussian quantile
    /// matching `eps_pe`.
    pub fn from_failure_probability(f_ec: f64, eps_pe: f64) -> Result<Self> {
        if !(eps_pe > 0.0 && eps_pe < 1.0) {
            return Err(Error::domain("eps_pe", eps_pe, "(0, 1)"));
        }
        let normal = Normal::standard();
        let n_sigma = normal.inverse_cdf(1.0 - eps_pe / 2.0);
        let sec = SecurityParams {
            f_ec,
            eps_pe,
            n_sigma,
        };
        sec.validate()?;
        Ok(sec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_ec >= 1.0) {
            return Err(Error::config("security.f_ec", "must be >= 1"));
        }
        if !(self.eps_pe > 0.0 && self.eps_pe < 1.0) {
            return Err(Error::config("security.eps_pe", "must lie in (0, 1)"));
        }
        if !(self.n_sigma >= 0.0 && self.n_sigma.is_finite()) {
            return Err(Error::config("security.n_sigma", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// The four X/Y correlators `<A_a B_b>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationSet {
    pub xx: f64,
    pub xy: f64,
    pub yx: f64,
    pub yy: f64,
}

impl CorrelationSet {
    pub fn new(xx: f64, xy: f64, yx: f64, yy: f64) -> Result<Self> {
        for (name, v) in [("xx", xx), ("xy", xy), ("yx", yx), ("yy", yy)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::domain(
                    match name {
                        "xx" => "correlator xx",
                        "xy" => "correlator xy",
                        "yx" => "correlator yx",
                        _ => "correlator yy",
                    },
                    v,
                    "[-1, 1]",
                ));
            }
        }
        Ok(CorrelationSet { xx, xy, yx, yy })
    }

    pub fn from_qbers(e_xx: f64, e_xy: f64, e_yx: f64, e_yy: f64) -> Result<Self> {
        Self::new(
            correlation_from_qber(e_xx)?,
            correlation_from_qber(e_xy)?,
            correlation_from_qber(e_yx)?,
            correlation_from_qber(e_yy)?,
        )
    }
}

/// Raw channel-quality value. Statistical fluctuations can push it above the
/// physical maximum of 2; the raw value is kept for reporting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelQuality {
    pub raw: f64,
}

impl ChannelQuality {
    pub const MAX: f64 = 2.0;

    pub fn is_physical(&self) -> bool {
        self.raw <= Self::MAX
    }

    pub fn clamped(&self) -> f64 {
        self.raw.clamp(0.0, Self::MAX)
    }
}

fn check_probability(name: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::domain(name, x, "[0, 1]"))
    }
}

/// Binary Shannon entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_probability("binary_entropy argument", x)?;
    Ok(h2(x))
}

/// Unchecked binary entropy; arguments outside (0, 1) give 0.
pub(crate) fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

/// Correlator `<AB> = 1 - 2E` for an error rate `E`.
pub fn correlation_from_qber(e: f64) -> Result<f64> {
    check_probability("qber", e)?;
    Ok(1.0 - 2.0 * e)
}

/// `C = <XX>^2 + <YY>^2 + <XY>^2 + <YX>^2`.
pub fn c_value(corr: &CorrelationSet) -> ChannelQuality {
    ChannelQuality {
        raw: corr.xx * corr.xx + corr.yy * corr.yy + corr.xy * corr.xy + corr.yx * corr.yx,
    }
}

/// Eve's information on the key basis given channel quality `c` and the
/// single-photon key-basis error rate `e_b`.
///
/// `c` above 2 is treated as 2.
pub fn eve_information(c: f64, e_b: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(Error::domain("c", c, "[0, 2]"));
    }
    if !(0.0..=0.5).contains(&e_b) {
        return Err(Error::domain("e_b", e_b, "[0, 0.5]"));
    }
    let half_c = c.min(ChannelQuality::MAX) / 2.0;
    let u_max = (half_c.sqrt() / (1.0 - e_b)).min(1.0);
    let first = (1.0 - e_b) * h2((1.0 + u_max) / 2.0);
    if e_b == 0.0 {
        return Ok(first);
    }
    let residual = (half_c - (1.0 - e_b).powi(2) * u_max * u_max).max(0.0);
    let v = (residual.sqrt() / e_b).min(1.0);
    Ok(first + e_b * h2((1.0 + v) / 2.0))
}

/// Usable drift range for a given efficiency, pulse rate and drift speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidityBounds {
    pub delta_theta_min: f64,
    pub delta_theta_max: f64,
    /// Longest sampling interval, `pi / omega`; infinite for a static frame.
    pub t_max: f64,
    pub valid: bool,
}

impl ValidityBounds {
    /// Whether a sampling interval of `t` seconds keeps the drift per
    /// interval under `pi`.
    pub fn admits_interval(&self, t: f64) -> bool {
        t < self.t_max
    }
}

pub fn validity_bounds(eta: f64, n0: f64, omega: f64) -> Result<ValidityBounds> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain("eta", eta, "(0, 1]"));
    }
    if !(n0 > 0.0) {
        return Err(Error::domain("n0", n0, "> 0"));
    }
    if !(omega >= 0.0) {
        return Err(Error::domain("omega", omega, ">= 0"));
    }
    let delta_theta_min = DRIFT_RESOLUTION_DETECTIONS / (eta * n0) * omega;
    let t_max = if omega == 0.0 {
        f64::INFINITY
    } else {
        PI / omega
    };
    Ok(ValidityBounds {
        delta_theta_min,
        delta_theta_max: PI,
        t_max,
        valid: delta_theta_min <= PI,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn entropy_fixed_points() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        // mpmath, 30 digits: 0.499915958164528...
        assert_abs_diff_eq!(
            binary_entropy(0.11).unwrap(),
            0.499_915_958_164_528,
            epsilon = 1e-14
        );
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.0001).is_err());
    }

    #[test]
    fn correlator_mapping() {
        assert_eq!(correlation_from_qber(0.0).unwrap(), 1.0);
        assert_eq!(correlation_from_qber(0.5).unwrap(), 0.0);
        assert_eq!(correlation_from_qber(1.0).unwrap(), -1.0);
        assert!(correlation_from_qber(1.5).is_err());
    }

    #[test]
    fn c_value_examples() {
        let aligned = CorrelationSet::new(1.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(c_value(&aligned).raw, 2.0);
        let depolarized = CorrelationSet::new(0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(c_value(&depolarized).raw, 0.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let rotated = CorrelationSet::new(h, h, -h, h).unwrap();
        assert_abs_diff_eq!(c_value(&rotated).raw, 2.0, epsilon = 1e-15);
        assert!(CorrelationSet::new(1.2, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn unphysical_c_is_reported_not_hidden() {
        let q = ChannelQuality { raw: 2.05 };
        assert!(!q.is_physical());
        assert_eq!(q.clamped(), 2.0);
        assert_eq!(q.raw, 2.05);
    }

    #[test]
    fn eve_information_examples() {
        assert_eq!(eve_information(2.0, 0.0).unwrap(), 0.0);
        assert_eq!(eve_information(0.0, 0.0).unwrap(), 1.0);
        let mid = eve_information(1.5, 0.01).unwrap();
        assert!(mid > 0.0 && mid < 1.0);
        // independent evaluation: u = sqrt(0.75)/0.99 < 1, v = 0
        let u = 0.75f64.sqrt() / 0.99;
        let p = (1.0 + u) / 2.0;
        let expected = 0.99 * (-p * p.log2() - (1.0 - p) * (1.0 - p).log2()) + 0.01;
        assert_abs_diff_eq!(mid, expected, epsilon = 1e-14);
        assert!(eve_information(-0.1, 0.1).is_err());
        assert!(eve_information(1.0, 0.6).is_err());
    }

    #[test]
    fn eve_information_monotone_in_c() {
        for &e in &[0.0, 0.005, 0.02, 0.05, 0.11, 0.3, 0.5] {
            let mut prev = f64::INFINITY;
            for i in 0..=400 {
                let c = 2.0 * i as f64 / 400.0;
                let ie = eve_information(c, e).unwrap();
                assert!(ie <= prev + 1e-15, "e={e} c={c}");
                assert!((0.0..=1.0 + 1e-12).contains(&ie));
                prev = ie;
            }
        }
    }

    #[test]
    fn eve_information_continuous_at_zero_error() {
        for i in 0..=100 {
            let c = 2.0 * i as f64 / 100.0;
            let d = (eve_information(c, 1e-9).unwrap() - eve_information(c, 0.0).unwrap()).abs();
            assert!(d < 1e-6, "c={c} d={d}");
        }
    }

    #[test]
    fn validity_examples() {
        let v = validity_bounds(1e-3, 8e7, 6.9e-3).unwrap();
        assert_abs_diff_eq!(v.t_max, 455.3, epsilon = 0.05);
        assert!(v.admits_interval(5.0));
        assert_eq!(v.delta_theta_max, PI);
        assert!(v.valid);

        let s = validity_bounds(0.5, 1e6, 0.0).unwrap();
        assert_eq!(s.delta_theta_min, 0.0);
        assert!(s.t_max.is_infinite());

        assert!(validity_bounds(0.0, 1.0, 1.0).is_err());
        assert!(validity_bounds(0.5, 0.0, 1.0).is_err());
        assert!(!validity_bounds(1e-9, 1.0, 1.0).unwrap().valid);
    }

    #[test]
    fn validity_scaling_is_exact() {
        let base = validity_bounds(0.01, 1e6, 1e-3).unwrap().delta_theta_min;
        let doubled_omega = validity_bounds(0.01, 1e6, 2e-3).unwrap().delta_theta_min;
        let doubled_rate = validity_bounds(0.01, 2e6, 1e-3).unwrap().delta_theta_min;
        let doubled_eta = validity_bounds(0.02, 1e6, 1e-3).unwrap().delta_theta_min;
        assert_eq!(doubled_omega, 2.0 * base);
        assert_eq!(doubled_rate, base / 2.0);
        assert_eq!(doubled_eta, base / 2.0);
    }

    #[test]
    fn pair_construction() {
        assert_eq!(BasisPair::new(Basis::Y, Basis::X).unwrap(), BasisPair::YX);
        assert!(BasisPair::new(Basis::Z, Basis::X).is_err());
        for p in BasisPair::ALL {
            assert_eq!(BasisPair::new(p.alice(), p.bob()).unwrap(), p);
        }
    }

    #[test]
    fn n_sigma_from_failure_probability() {
        let sec = SecurityParams::from_failure_probability(1.16, 1e-7).unwrap();
        assert_abs_diff_eq!(sec.n_sigma, 5.326_723_886, epsilon = 1e-6);
    }

    proptest! {
        #[test]
        fn entropy_symmetric(x in 0.0f64..=1.0) {
            let a = binary_entropy(x).unwrap();
            let b = binary_entropy(1.0 - x).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a <= 1.0);
        }

        #[test]
        fn c_invariant_under_rotation(theta in 0.0f64..(2.0 * PI), v in 0.0f64..=1.0) {
            let (s, c) = theta.sin_cos();
            let corr = CorrelationSet::new(v * c, v * s, -v * s, v * c).unwrap();
            prop_assert!((c_value(&corr).raw - 2.0 * v * v).abs() < 1e-12);
        }
    }
}
