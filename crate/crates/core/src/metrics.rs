//! Figure-of-merit algebra for spin readout: contrast, shot-noise-limited
//! SNR, the background-filtering enhancement factor, the implied measurement
//! speedup, and CW-ODMR magnetic-field sensitivity.

use crate::error::{check, Error, Result};

/// Detected counts in the two microwave channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountPair {
    /// MW off / `m_S = 0` channel.
    pub n0: f64,
    /// MW on / `m_S = ±1` channel.
    pub n1: f64,
}

impl CountPair {
    pub fn new(n0: f64, n1: f64) -> Result<Self> {
        check("n0", n0 >= 0.0 && n0.is_finite(), n0, "must be finite and >= 0")?;
        check("n1", n1 >= 0.0 && n1.is_finite(), n1, "must be finite and >= 0")?;
        Ok(Self { n0, n1 })
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            n0: self.n0 * k,
            n1: self.n1 * k,
        }
    }
}

/// Count rates (counts per second), background included, in the two channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    pub r0: f64,
    pub r1: f64,
}

impl RatePair {
    pub fn new(r0: f64, r1: f64) -> Result<Self> {
        check("r0", r0 >= 0.0 && r0.is_finite(), r0, "must be finite and >= 0")?;
        check("r1", r1 >= 0.0 && r1.is_finite(), r1, "must be finite and >= 0")?;
        Ok(Self { r0, r1 })
    }
}

/// Constants entering the sensitivity prefactor. Defaults are CODATA 2018.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// J·s
    pub planck_h: f64,
    /// Free-electron g-factor magnitude.
    pub electron_g: f64,
    /// J/T
    pub bohr_magneton: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            planck_h: 6.626_070_15e-34,
            electron_g: 2.002_319_304_362_56,
            bohr_magneton: 9.274_010_078_3e-24,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        check("planck_h", self.planck_h > 0.0, self.planck_h, "must be > 0")?;
        check("electron_g", self.electron_g > 0.0, self.electron_g, "must be > 0")?;
        check("bohr_magneton", self.bohr_magneton > 0.0, self.bohr_magneton, "must be > 0")
    }

    /// `h / (g_e μ_B)` in T/Hz.
    pub fn field_per_frequency(&self) -> f64 {
        self.planck_h / (self.electron_g * self.bohr_magneton)
    }
}

/// Lineshape factor of the maximal-slope point of a Lorentzian dip.
pub fn lorentzian_slope_factor() -> f64 {
    4.0 / (3.0 * 3.0f64.sqrt())
}

/// `(N0 - N1) / N0`; negative when the MW-on channel is brighter.
pub fn contrast(p: CountPair) -> Result<f64> {
    if p.n0 == 0.0 {
        return Err(Error::UndefinedContrast);
    }
    Ok((p.n0 - p.n1) / p.n0)
}

/// `(N0 - N1) / sqrt(N0 + N1)`.
pub fn snr(p: CountPair) -> Result<f64> {
    let total = p.n0 + p.n1;
    if total == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    Ok((p.n0 - p.n1) / total.sqrt())
}

/// Best-case SNR gain from removing a background of relative strength
/// `bg_ratio = n_BG / n_0` without losing signal.
pub fn ef_theoretical(contrast: f64, bg_ratio: f64) -> Result<f64> {
    check("contrast", (0.0..1.0).contains(&contrast), contrast, "must lie in [0, 1)")?;
    check("bg_ratio", bg_ratio >= 0.0 && bg_ratio.is_finite(), bg_ratio, "must be finite and >= 0")?;
    Ok((1.0 + 2.0 / (2.0 - contrast) * bg_ratio).sqrt())
}

/// Measurement-time reduction implied by an SNR gain.
pub fn speedup(ef: f64) -> f64 {
    ef * ef
}

/// Shot-noise-limited CW-ODMR sensitivity in T/√Hz.
pub fn sensitivity_cw(linewidth: f64, rates: RatePair, constants: &PhysicalConstants) -> Result<f64> {
    check("linewidth", linewidth > 0.0 && linewidth.is_finite(), linewidth, "must be finite and > 0")?;
    constants.validate()?;
    if !(rates.r0 > rates.r1) || rates.r1 < 0.0 {
        return Err(Error::NonPositiveDip {
            r0: rates.r0,
            r1: rates.r1,
        });
    }
    Ok(lorentzian_slope_factor() * constants.field_per_frequency() * linewidth * rates.r0.sqrt()
        / (rates.r0 - rates.r1))
}

/// Measured SNR gain of a gated readout over the ungated one.
pub fn ef_empirical(gated: CountPair, ungated: CountPair) -> Result<f64> {
    let base = snr(ungated)?;
    if !(base > 0.0) {
        return Err(Error::invalid("ungated", format!("SNR {base} must be > 0")));
    }
    Ok(snr(gated)? / base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: f64, b: f64) -> CountPair {
        CountPair::new(a, b).unwrap()
    }

    #[test]
    fn contrast_examples() {
        assert_eq!(contrast(pair(100.0, 100.0)).unwrap(), 0.0);
        assert!((contrast(pair(100.0, 85.0)).unwrap() - 0.15).abs() < 1e-15);
        assert!((contrast(pair(1000.0, 900.0)).unwrap() - 0.10).abs() < 1e-15);
        assert!(contrast(pair(100.0, 120.0)).unwrap() < 0.0);
        assert!(matches!(contrast(pair(0.0, 5.0)), Err(Error::UndefinedContrast)));
    }

    #[test]
    fn snr_examples() {
        let s = snr(pair(100.0, 85.0)).unwrap();
        assert!((s - 15.0 / 185.0f64.sqrt()).abs() < 1e-15);
        assert!((s - 1.1028).abs() < 1e-4);
        assert_eq!(snr(pair(85.0, 100.0)).unwrap(), -s);
        let k = 9.0;
        assert!((snr(pair(100.0 * k, 85.0 * k)).unwrap() - 3.0 * s).abs() < 1e-12);
        assert!(matches!(snr(pair(0.0, 0.0)), Err(Error::UndefinedSnr)));
    }

    #[test]
    fn enhancement_examples() {
        assert_eq!(ef_theoretical(0.15, 0.0).unwrap(), 1.0);
        assert!((ef_theoretical(0.0, 1.0).unwrap() - 2.0f64.sqrt()).abs() < 1e-15);
        let ef = ef_theoretical(0.15, 3.0).unwrap();
        assert!((ef - 2.06).abs() < 0.005, "{ef}");
        assert!(ef_theoretical(0.1, -1.0).is_err());
        assert!(ef_theoretical(1.0, 1.0).is_err());
    }

    #[test]
    fn speedup_examples() {
        assert_eq!(speedup(2.0), 4.0);
        assert_eq!(speedup(4.0), 16.0);
        assert_eq!(speedup(1.0), 1.0);
    }

    #[test]
    fn sensitivity_prefactors() {
        assert!((lorentzian_slope_factor() - 0.7698).abs() < 5e-5);
        // h / (g μ_B) with g rounded to 2.00232, recomputed by hand.
        let rounded = PhysicalConstants {
            electron_g: 2.00232,
            ..Default::default()
        };
        let v = rounded.field_per_frequency();
        assert!((v - 3.568e-11).abs() < 0.001e-11, "{v}");
    }

    #[test]
    fn sensitivity_example() {
        let c = PhysicalConstants::default();
        let eta = sensitivity_cw(10e6, RatePair::new(1e6, 0.98e6).unwrap(), &c).unwrap();
        // 0.76980 * 3.5682e-11 * 1e7 * 1e3 / 2e4
        assert!((eta - 1.3734e-5).abs() < 0.001e-5, "{eta}");
        let eta2 = sensitivity_cw(20e6, RatePair::new(1e6, 0.98e6).unwrap(), &c).unwrap();
        assert_eq!(eta2, 2.0 * eta);
    }

    #[test]
    fn sensitivity_rejects_inverted_dip() {
        let c = PhysicalConstants::default();
        let err = sensitivity_cw(1e7, RatePair::new(1e6, 1e6).unwrap(), &c).unwrap_err();
        assert!(matches!(err, Error::NonPositiveDip { .. }));
        assert!(sensitivity_cw(0.0, RatePair::new(2.0, 1.0).unwrap(), &c).is_err());
    }

    #[test]
    fn empirical_identity() {
        let p = pair(1234.0, 1100.0);
        assert_eq!(ef_empirical(p, p).unwrap(), 1.0);
        assert!(ef_empirical(p, pair(10.0, 12.0)).is_err());
    }
}
