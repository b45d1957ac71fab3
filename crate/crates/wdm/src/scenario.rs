//! Link geometry, physical constants, and validated configuration.
//!
//! A [`Scenario`] describes one line-of-sight link between two parallel
//! segments: a source of length `Ls` centered on the z-axis and a receiver
//! of length `Lr` at perpendicular distance `d`, sharing the same axis
//! orientation. Everything downstream (channel assembly, noise covariance,
//! receiver processing) reads from an immutable `Scenario`.
//!
//! Configuration is a flat `key = value` text file in SI units. `#` starts
//! a comment. Example:
//!
//! ```text
//! Ls = 0.2
//! Lr = 5
//! d = 5
//! lambda = 0.01
//! Ps = 1e-7
//! snr_db = 90
//! ```

use std::collections::BTreeMap;

use crate::error::{Result, WdmError};

/// Free-space constants. `z0 = mu0 * c` holds to machine precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Vacuum permeability [H/m].
    pub mu0: f64,
    /// Speed of light [m/s].
    pub c: f64,
    /// Free-space impedance [Ohm].
    pub z0: f64,
}

impl PhysicalConstants {
    pub fn standard() -> Self {
        let mu0 = 4.0 * std::f64::consts::PI * 1e-7;
        let c = 299_792_458.0;
        Self { mu0, c, z0: mu0 * c }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::standard()
    }
}

/// Floor that forgives ~1e-9 of floating-point noise, so that ratios like
/// `0.2 / 0.01` count as 20 rather than 19.
pub(crate) fn floor_tol(x: f64) -> f64 {
    (x + 1e-9).floor()
}

/// Validated physical configuration of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    /// Source segment length [m].
    pub ls: f64,
    /// Receive segment length [m]; `lr >= ls`.
    pub lr: f64,
    /// Perpendicular distance between the segments [m].
    pub d: f64,
    /// Wavelength [m].
    pub lambda: f64,
    /// Mode count (odd, at most [`Scenario::n_max`]).
    pub n: usize,
    /// Source power constraint [A^2]: (1/Ls) * integral |i|^2 <= Ps.
    pub ps: f64,
    /// EMI power angular density scale [V^2/m^2].
    pub sigma2_emi: f64,
    /// Hardware (RF-chain) noise variance [V^2].
    pub sigma2_hdw: f64,
    /// System SNR [dB].
    pub snr_db: f64,
    pub constants: PhysicalConstants,
}

impl Scenario {
    /// Free-space wavenumber `kappa = 2*pi/lambda` [rad/m].
    pub fn kappa(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.lambda
    }

    /// Effective signal power scale `P = (kappa * Z0)^2 * Ps` [V^2/m^2].
    pub fn signal_power(&self) -> f64 {
        let kz = self.kappa() * self.constants.z0;
        kz * kz * self.ps
    }

    /// Total transmit budget on the effective mode inputs.
    ///
    /// The effective inputs are `x_m = i*kappa*Z0*xi_m`, and the source
    /// constraint `sum |xi_m|^2 <= Ls*Ps` becomes `sum |x_m|^2 <= Ls*P`.
    /// Spending the whole budget makes the system SNR equal `P/sigma^2`.
    pub fn power_budget(&self) -> f64 {
        self.ls * self.signal_power()
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Total noise scale `sigma^2 = sigma2_emi + sigma2_hdw`.
    pub fn sigma2_total(&self) -> f64 {
        self.sigma2_emi + self.sigma2_hdw
    }

    /// Band limit on the mode count: `N_max = 2*floor(Ls/lambda) + 1`.
    pub fn n_max(&self) -> usize {
        2 * floor_tol(self.ls / self.lambda) as usize + 1
    }

    /// Centered index of 1-based mode `m`: `m - 1 - (N-1)/2`.
    pub fn mode_offset(&self, m: usize) -> f64 {
        (m as i64 - 1 - (self.n as i64 - 1) / 2) as f64
    }

    /// Center wavenumber of mode `m`: `2*pi*offset/Ls` [rad/m].
    pub fn mode_wavenumber(&self, m: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.mode_offset(m) / self.ls
    }

    /// Serialize to the flat `key = value` format accepted by [`validate`].
    pub fn serialize(&self) -> String {
        format!(
            "Ls = {}\nLr = {}\nd = {}\nlambda = {}\nN = {}\nPs = {}\nsnr_db = {}\nsigma2_emi = {}\nsigma2_hdw = {}\n",
            self.ls,
            self.lr,
            self.d,
            self.lambda,
            self.n,
            self.ps,
            self.snr_db,
            self.sigma2_emi,
            self.sigma2_hdw
        )
    }
}

/// Parse `key = value` lines into a map. Later duplicates win, which is how
/// `--set` overrides work.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(WdmError::BadValue {
                key: format!("line {}", lineno + 1),
                value: line.to_string(),
                reason: "expected `key = value`".to_string(),
            });
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn get_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    let raw = map
        .get(key)
        .ok_or_else(|| WdmError::MissingKey(key.to_string()))?;
    raw.parse::<f64>().map_err(|e| WdmError::BadValue {
        key: key.to_string(),
        value: raw.clone(),
        reason: e.to_string(),
    })
}

fn get_f64_opt(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<f64>()
            .map(Some)
            .map_err(|e| WdmError::BadValue {
                key: key.to_string(),
                value: raw.clone(),
                reason: e.to_string(),
            }),
    }
}

fn require_positive(name: &str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(WdmError::NonPositiveDimension {
            name: name.to_string(),
            value,
        })
    }
}

/// Validate a raw configuration map into a [`Scenario`].
///
/// Required keys: `Ls`, `Lr`, `d`, `lambda`, `Ps`, `snr_db`.
/// Optional: `N` (defaults to `N_max`), `sigma2_emi`, `sigma2_hdw`,
/// `hdw_emi_ratio`.
///
/// The noise scale defaults are derived from the SNR: the total
/// `sigma^2 = P / snr` is split as `sigma2_emi = sigma^2 / (1 + ratio)` and
/// `sigma2_hdw = ratio * sigma2_emi`, with `ratio = hdw_emi_ratio` (default
/// 0, i.e. all noise of electromagnetic origin). Explicit `sigma2_*` keys
/// override the derived split.
pub fn validate(map: &BTreeMap<String, String>) -> Result<Scenario> {
    let ls = require_positive("Ls", get_f64(map, "Ls")?)?;
    let lr = require_positive("Lr", get_f64(map, "Lr")?)?;
    let d = require_positive("d", get_f64(map, "d")?)?;
    let lambda = require_positive("lambda", get_f64(map, "lambda")?)?;
    let ps = require_positive("Ps", get_f64(map, "Ps")?)?;
    let snr_db = get_f64(map, "snr_db")?;

    if lr < ls {
        return Err(WdmError::ReceiverShorterThanSource { lr, ls });
    }

    let mut scenario = Scenario {
        ls,
        lr,
        d,
        lambda,
        n: 1,
        ps,
        sigma2_emi: 0.0,
        sigma2_hdw: 0.0,
        snr_db,
        constants: PhysicalConstants::standard(),
    };

    let n_max = scenario.n_max();
    let n = match get_f64_opt(map, "N")? {
        Some(raw) => {
            let n = raw as usize;
            if raw.fract() != 0.0 || raw < 1.0 {
                return Err(WdmError::BadValue {
                    key: "N".to_string(),
                    value: raw.to_string(),
                    reason: "mode count must be a positive integer".to_string(),
                });
            }
            n
        }
        None => n_max,
    };
    if n % 2 == 0 {
        return Err(WdmError::EvenModeCount(n));
    }
    if n > n_max {
        return Err(WdmError::ModeCountExceedsMax { n, n_max });
    }
    scenario.n = n;

    let ratio = get_f64_opt(map, "hdw_emi_ratio")?.unwrap_or(0.0);
    if ratio < 0.0 {
        return Err(WdmError::BadValue {
            key: "hdw_emi_ratio".to_string(),
            value: ratio.to_string(),
            reason: "must be nonnegative".to_string(),
        });
    }
    let total = scenario.signal_power() / scenario.snr_linear();
    let derived_emi = total / (1.0 + ratio);
    scenario.sigma2_emi = get_f64_opt(map, "sigma2_emi")?.unwrap_or(derived_emi);
    scenario.sigma2_hdw = get_f64_opt(map, "sigma2_hdw")?.unwrap_or(ratio * derived_emi);
    if scenario.sigma2_emi < 0.0 || scenario.sigma2_hdw < 0.0 {
        return Err(WdmError::BadValue {
            key: "sigma2".to_string(),
            value: format!("{} / {}", scenario.sigma2_emi, scenario.sigma2_hdw),
            reason: "noise variances must be nonnegative".to_string(),
        });
    }

    Ok(scenario)
}

/// System SNR for a given per-mode power vector `{|x_n|^2}` [linear ratio].
pub fn system_snr(scenario: &Scenario, per_mode_powers: &[f64]) -> Result<f64> {
    for (index, &p) in per_mode_powers.iter().enumerate() {
        if p < 0.0 {
            return Err(WdmError::NegativePower { index, value: p });
        }
    }
    let sum: f64 = per_mode_powers.iter().sum();
    Ok(sum / scenario.ls / scenario.sigma2_total())
}

/// The baseline configuration used throughout the experiment suite.
pub fn baseline_config() -> BTreeMap<String, String> {
    parse_config(
        "Ls = 0.2\nLr = 5\nd = 5\nlambda = 0.01\nPs = 1e-7\nsnr_db = 90\n",
    )
    .expect("baseline parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base_map() -> BTreeMap<String, String> {
        baseline_config()
    }

    #[test]
    fn impedance_is_mu0_times_c() {
        let k = PhysicalConstants::standard();
        assert_relative_eq!(k.z0, k.mu0 * k.c, max_relative = 1e-15);
        assert_relative_eq!(k.z0, 376.730, max_relative = 1e-5);
    }

    #[test]
    fn baseline_yields_41_modes_and_expected_noise() {
        let mut map = base_map();
        map.insert("Lr".into(), "1".into());
        map.insert("N".into(), "41".into());
        let s = validate(&map).unwrap();
        assert_eq!(s.n_max(), 41);
        assert_eq!(s.n, 41);
        // snr = 90 dB with Ps = 1e-7 A^2 implies sigma^2 ~ 5.6e-6 V^2/m^2.
        assert!((s.sigma2_emi - 5.6e-6).abs() / 5.6e-6 < 0.02);
        assert_eq!(s.sigma2_hdw, 0.0);
        // And the implied power-to-noise ratio is 90 dB within 2%.
        let ratio = s.signal_power() / s.sigma2_total();
        assert!((ratio - 1e9).abs() / 1e9 < 0.02);
    }

    #[test]
    fn n_defaults_to_band_limit() {
        let s = validate(&base_map()).unwrap();
        assert_eq!(s.n, 41);
        assert_eq!(s.mode_offset(1), -20.0);
        assert_eq!(s.mode_offset(21), 0.0);
        assert_eq!(s.mode_offset(41), 20.0);
    }

    #[test]
    fn even_mode_count_is_rejected() {
        let mut map = base_map();
        map.insert("N".into(), "42".into());
        assert!(matches!(validate(&map), Err(WdmError::EvenModeCount(42))));
    }

    #[test]
    fn oversized_mode_count_is_rejected() {
        let mut map = base_map();
        map.insert("N".into(), "43".into());
        assert!(matches!(
            validate(&map),
            Err(WdmError::ModeCountExceedsMax { n: 43, n_max: 41 })
        ));
    }

    #[test]
    fn short_receiver_is_rejected() {
        let mut map = base_map();
        map.insert("Lr".into(), "0.1".into());
        assert!(matches!(
            validate(&map),
            Err(WdmError::ReceiverShorterThanSource { .. })
        ));
    }

    #[test]
    fn nonpositive_dimension_is_rejected() {
        for key in ["Ls", "d", "lambda", "Ps"] {
            let mut map = base_map();
            map.insert(key.into(), "0".into());
            assert!(
                matches!(validate(&map), Err(WdmError::NonPositiveDimension { .. })),
                "{key} = 0 must fail"
            );
        }
    }

    #[test]
    fn hdw_ratio_splits_total_noise() {
        let mut map = base_map();
        map.insert("hdw_emi_ratio".into(), "10".into());
        let s = validate(&map).unwrap();
        assert_relative_eq!(s.sigma2_hdw, 10.0 * s.sigma2_emi, max_relative = 1e-12);
        let total = s.signal_power() / s.snr_linear();
        assert_relative_eq!(s.sigma2_total(), total, max_relative = 1e-12);
    }

    #[test]
    fn system_snr_basics() {
        let s = validate(&base_map()).unwrap();
        assert_eq!(system_snr(&s, &[0.0; 41]).unwrap(), 0.0);
        let p = vec![s.power_budget() / 41.0; 41];
        let snr = system_snr(&s, &p).unwrap();
        assert_relative_eq!(snr, s.snr_linear(), max_relative = 1e-9);
        let doubled: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        assert_relative_eq!(system_snr(&s, &doubled).unwrap(), 2.0 * snr, max_relative = 1e-12);
        assert!(matches!(
            system_snr(&s, &[1.0, -0.5]),
            Err(WdmError::NegativePower { index: 1, .. })
        ));
    }

    #[test]
    fn validate_serialize_validate_is_idempotent() {
        let mut map = base_map();
        map.insert("hdw_emi_ratio".into(), "3".into());
        let s1 = validate(&map).unwrap();
        let s2 = validate(&parse_config(&s1.serialize()).unwrap()).unwrap();
        assert_eq!(s1, s2);
        let s3 = validate(&parse_config(&s2.serialize()).unwrap()).unwrap();
        assert_eq!(s2, s3);
    }

    #[test]
    fn comments_and_blank_lines_parse() {
        let map = parse_config("# comment\n\nLs = 0.2 # trailing\n").unwrap();
        assert_eq!(map.get("Ls").unwrap(), "0.2");
    }
}
