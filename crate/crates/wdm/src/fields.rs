//! Scalar line-of-sight Green's function and its wavenumber spectrum.
//!
//! For two parallel segments at perpendicular distance `d`, the axial field
//! coupling is governed by
//!
//! ```text
//! g_z(z, d) = (d^2 / 4*pi) * exp(i*kappa*sqrt(z^2 + d^2)) / (z^2 + d^2)^(3/2)
//! ```
//!
//! and by its wavenumber transform `G_z(kappa_z, d)`, which is band-limited
//! to `|kappa_z| <= kappa`: outside that interval the integrand has no
//! stationary phase point and the transform is evanescent. `G_z` is needed
//! on dense wavenumber grids, so it is cached: `g_z` is sampled uniformly
//! (after truncating where its amplitude falls below 1e-6 of the peak) and
//! transformed with one FFT, then interpolated cubically. The direct
//! panel-quadrature evaluation [`green_wavenumber`] is kept as the
//! reference the cache is validated against.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Result, WdmError};
use crate::quadrature::{integrate, QuadratureSpec};
use crate::scenario::Scenario;

/// Normalized sinc: `sin(pi x) / (pi x)`, 1 at the origin.
pub fn sinc(x: f64) -> f64 {
    let t = std::f64::consts::PI * x;
    if t.abs() < 1e-8 {
        1.0 - t * t / 6.0
    } else {
        t.sin() / t
    }
}

/// Relative amplitude below which the Green's function is truncated when
/// evaluating its (formally infinite) Fourier integral.
pub const GREEN_TRUNCATION_LEVEL: f64 = 1e-6;

/// The scalar Green's kernel for a fixed geometry.
#[derive(Debug, Clone, Copy)]
pub struct GreenKernel {
    /// Perpendicular distance [m].
    pub d: f64,
    /// Free-space wavenumber [rad/m].
    pub kappa: f64,
}

impl GreenKernel {
    pub fn new(d: f64, kappa: f64) -> Result<Self> {
        if d <= 0.0 || !d.is_finite() {
            return Err(WdmError::NonPositiveDimension {
                name: "d".to_string(),
                value: d,
            });
        }
        if kappa <= 0.0 || !kappa.is_finite() {
            return Err(WdmError::NonPositiveDimension {
                name: "kappa".to_string(),
                value: kappa,
            });
        }
        Ok(Self { d, kappa })
    }

    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self {
            d: scenario.d,
            kappa: scenario.kappa(),
        }
    }

    /// Evaluate `g_z(z, d)`.
    #[inline]
    pub fn eval(&self, z: f64) -> Complex64 {
        let r2 = z * z + self.d * self.d;
        let r = r2.sqrt();
        let amplitude = self.d * self.d / (4.0 * std::f64::consts::PI * r2 * r);
        Complex64::from_polar(amplitude, self.kappa * r)
    }

    /// `|g_z(z, d)|`, without the phase evaluation.
    #[inline]
    pub fn magnitude(&self, z: f64) -> f64 {
        let r2 = z * z + self.d * self.d;
        self.d * self.d / (4.0 * std::f64::consts::PI * r2 * r2.sqrt())
    }

    /// Half-width `z` at which `|g_z|` has decayed to `level * |g_z(0)|`:
    /// solves `(1 + (z/d)^2)^(-3/2) = level`.
    pub fn decay_half_width(&self, level: f64) -> f64 {
        assert!(level > 0.0 && level < 1.0);
        self.d * (level.powf(-2.0 / 3.0) - 1.0).sqrt()
    }

    /// Truncation half-width for wavenumber transforms (1e-6 amplitude cut).
    pub fn truncation_half_width(&self) -> f64 {
        self.decay_half_width(GREEN_TRUNCATION_LEVEL)
    }

    /// Closed-form `integral of |g_z|^2` over `[z0, z1]`.
    ///
    /// `|g|^2 = (d^2/4pi)^2 (z^2+d^2)^(-3)`, whose antiderivative is
    /// elementary; used as an independent check on quadratures of `|g|^2`.
    pub fn abs_squared_integral(&self, z0: f64, z1: f64) -> f64 {
        let d = self.d;
        let anti = |z: f64| {
            let q = z * z + d * d;
            z / (4.0 * d * d * q * q) + 3.0 * z / (8.0 * d.powi(4) * q)
                + 3.0 * (z / d).atan() / (8.0 * d.powi(5))
        };
        let scale = (d * d / (4.0 * std::f64::consts::PI)).powi(2);
        scale * (anti(z1) - anti(z0))
    }
}

/// Free function form of the kernel evaluation.
pub fn scalar_green(z: f64, d: f64, kappa: f64) -> Result<Complex64> {
    Ok(GreenKernel::new(d, kappa)?.eval(z))
}

/// Planar-wavefront limit `exp(i*kappa*d) / (4*pi*d)`.
pub fn farfield_green(d: f64, kappa: f64) -> Result<Complex64> {
    if d <= 0.0 || !d.is_finite() {
        return Err(WdmError::NonPositiveDimension {
            name: "d".to_string(),
            value: d,
        });
    }
    Ok(Complex64::from_polar(
        1.0 / (4.0 * std::f64::consts::PI * d),
        kappa * d,
    ))
}

/// Direct quadrature of `G_z(kappa_z, d) = integral g_z(z,d) exp(-i kappa_z z) dz`.
///
/// The infinite integral is truncated at the 1e-6 amplitude half-width of
/// `g_z`. Deterministic for a fixed spec; this is the reference evaluation
/// used to validate the FFT-built cache.
pub fn green_wavenumber(
    kappa_z: f64,
    d: f64,
    kappa: f64,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    let kernel = GreenKernel::new(d, kappa)?;
    let z_max = kernel.truncation_half_width();
    let rate = kappa + kappa_z.abs();
    let spec = spec.with_hint(2.0 * std::f64::consts::PI / rate);
    let r = integrate(
        |z| kernel.eval(z) * Complex64::from_polar(1.0, -kappa_z * z),
        -z_max,
        z_max,
        &spec,
    )?;
    Ok(r.value)
}

/// Cached wavenumber spectrum of the Green's function on a uniform grid.
#[derive(Debug, Clone)]
pub struct WavenumberSpectrum {
    pub d: f64,
    pub kappa: f64,
    /// Grid step in kappa_z [rad/m].
    pub kz_step: f64,
    /// Grid covers `[-kz_half, kz_half]`; zero is a grid point.
    pub kz_half: f64,
    /// Samples at `kappa_z = (i - (len-1)/2) * kz_step`.
    pub samples: Vec<Complex64>,
    /// Spatial truncation half-width used for the transform [m].
    pub z_half_width: f64,
    /// Spatial sample step used for the transform [m].
    pub sample_step: f64,
}

const MAX_FFT_LEN: usize = 1 << 23;

impl WavenumberSpectrum {
    /// Build the cache for distance `d`, resolving receiver sizes up to
    /// `lr_max` (grid step at most `2*pi / (10 * lr_max)`).
    pub fn build(d: f64, kappa: f64, lr_max: f64) -> Result<Self> {
        let kernel = GreenKernel::new(d, kappa)?;
        let z_max = kernel.truncation_half_width();
        let lambda = 2.0 * std::f64::consts::PI / kappa;
        // Sampling at 2.5 kappa keeps aliases of the (evanescent) out-of-band
        // spectrum away from the stored band.
        let step = lambda / 2.5;
        // Zero-padding sets the wavenumber resolution.
        let span = (2.0 * z_max).max(10.0 * lr_max.max(lambda));
        let needed = (span / step).ceil() as usize;
        let mut n = needed.next_power_of_two();
        if n > MAX_FFT_LEN {
            return Err(WdmError::SpectrumGridTooLarge {
                needed: n,
                limit: MAX_FFT_LEN,
            });
        }
        n = n.max(1 << 10);
        let length = n as f64 * step;

        let mut buf: Vec<Complex64> = (0..n)
            .map(|j| {
                let z = -0.5 * length + j as f64 * step;
                if z.abs() <= z_max {
                    kernel.eval(z)
                } else {
                    Complex64::ZERO
                }
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);

        let kz_step = 2.0 * std::f64::consts::PI / length;
        let half_count = ((1.2 * kappa) / kz_step).ceil() as usize;
        let half_count = half_count.min(n / 2 - 1);
        let mut samples = Vec::with_capacity(2 * half_count + 1);
        for i in 0..(2 * half_count + 1) {
            let idx = i as i64 - half_count as i64;
            let kz = idx as f64 * kz_step;
            let bin = idx.rem_euclid(n as i64) as usize;
            // Undo the grid offset: the DFT assumes samples start at z = 0.
            let phase = Complex64::from_polar(1.0, kz * 0.5 * length);
            samples.push(buf[bin] * phase * step);
        }
        Ok(Self {
            d,
            kappa,
            kz_step,
            kz_half: half_count as f64 * kz_step,
            samples,
            z_half_width: z_max,
            sample_step: step,
        })
    }

    /// Cache sized for a scenario's own receiver.
    pub fn for_scenario(scenario: &Scenario) -> Result<Self> {
        Self::build(scenario.d, scenario.kappa(), scenario.lr)
    }

    /// Interpolated `G_z(kappa_z, d)`; zero outside the stored band (the
    /// spectrum is evanescent there).
    pub fn eval(&self, kappa_z: f64) -> Complex64 {
        if kappa_z.abs() >= self.kz_half {
            return Complex64::ZERO;
        }
        let x = (kappa_z + self.kz_half) / self.kz_step;
        let i1 = (x.floor() as usize).min(self.samples.len() - 2);
        let t = x - i1 as f64;
        let i0 = i1.saturating_sub(1);
        let i2 = i1 + 1;
        let i3 = (i1 + 2).min(self.samples.len() - 1);
        let (y0, y1, y2, y3) = (
            self.samples[i0],
            self.samples[i1],
            self.samples[i2],
            self.samples[i3],
        );
        // Catmull-Rom in each component.
        let t = Complex64::from(t);
        y1 + (y2 - y0 + (2.0 * y0 - 5.0 * y1 + 4.0 * y2 - y3 + (3.0 * (y1 - y2) + y3 - y0) * t) * t)
            * t
            * 0.5
    }

    /// `|G_z(0, d)|`, the spectrum peak.
    pub fn peak(&self) -> f64 {
        self.eval(0.0).norm()
    }

    /// Positive band edge where `|G_z|^2` first drops to half its peak.
    pub fn three_db_edge(&self) -> f64 {
        let target = 0.5 * self.peak().powi(2);
        let mut lo = 0.0;
        let mut hi = self.kappa;
        // Bracket the first crossing on the sample grid, then bisect.
        let steps = 2048;
        for i in 1..=steps {
            let kz = self.kappa * i as f64 / steps as f64;
            if self.eval(kz).norm_sqr() < target {
                hi = kz;
                lo = self.kappa * (i - 1) as f64 / steps as f64;
                break;
            }
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid).norm_sqr() >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Normalized radiation pattern `zeta^2(theta; m)` of source mode `m`.
///
/// `zeta(theta; m) = sin^3(theta) * sinc((Ls/lambda) cos(theta) - a_m)`
/// with `a_m = m - 1 - (N-1)/2`. Valid in the `Ls << d` regime. Modes whose
/// nominal steering direction `cos(theta_m) = lambda*a_m/Ls` falls outside
/// the visible region are rejected rather than clipped.
pub fn radiation_pattern(theta: f64, m: usize, scenario: &Scenario) -> Result<f64> {
    let steering = steering_cosine(m, scenario)?;
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(WdmError::BadValue {
            key: "theta".to_string(),
            value: theta.to_string(),
            reason: "must lie in (0, pi)".to_string(),
        });
    }
    let _ = steering;
    let s = theta.sin();
    let z = s.powi(3)
        * sinc(scenario.ls / scenario.lambda * theta.cos() - scenario.mode_offset(m));
    Ok(z * z)
}

/// Beam direction `theta_m = acos(lambda * a_m / Ls)` of source mode `m`.
pub fn beam_direction(m: usize, scenario: &Scenario) -> Result<f64> {
    Ok(steering_cosine(m, scenario)?.acos())
}

fn steering_cosine(m: usize, scenario: &Scenario) -> Result<f64> {
    if m < 1 || m > scenario.n {
        return Err(WdmError::ModeIndexOutOfRange {
            index: m,
            count: scenario.n,
        });
    }
    let steering = scenario.lambda / scenario.ls * scenario.mode_offset(m);
    if steering.abs() > 1.0 {
        return Err(WdmError::BeamOutsideVisibleRegion { mode: m, steering });
    }
    Ok(steering)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{baseline_config, validate, PhysicalConstants};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn scenario_n(n: usize) -> Scenario {
        let mut map = baseline_config();
        map.insert("N".into(), n.to_string());
        validate(&map).unwrap()
    }

    #[test]
    fn green_at_boresight() {
        let g = scalar_green(0.0, 5.0, 2.0 * PI / 0.01).unwrap();
        assert_relative_eq!(g.norm(), 1.0 / (20.0 * PI), max_relative = 1e-14);
    }

    #[test]
    fn green_magnitude_ratio() {
        let kernel = GreenKernel::new(5.0, 2.0 * PI / 0.01).unwrap();
        for z in [0.1, 1.0, 3.0, 12.0] {
            let ratio = kernel.magnitude(z) / kernel.magnitude(0.0);
            let expected = (1.0 + (z / kernel.d).powi(2)).powf(-1.5);
            assert_relative_eq!(ratio, expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn green_magnitude_unimodal_and_distance_ordering() {
        // The |g_z| profiles for d = 5, 10, 25 m: each unimodal with the
        // maximum at z = 0, and at fixed z the peak-normalized curves widen
        // with d.
        let kappa = 2.0 * PI / 0.01;
        for d in [5.0, 10.0, 25.0] {
            let kernel = GreenKernel::new(d, kappa).unwrap();
            let mut last = kernel.magnitude(0.0);
            for i in 1..200 {
                let z = 0.25 * i as f64;
                let mag = kernel.magnitude(z);
                assert!(mag < last, "not decreasing at z = {z}, d = {d}");
                last = mag;
            }
        }
        let narrow = GreenKernel::new(5.0, kappa).unwrap();
        let wide = GreenKernel::new(25.0, kappa).unwrap();
        let z = 5.0;
        assert!(
            narrow.magnitude(z) / narrow.magnitude(0.0)
                < wide.magnitude(z) / wide.magnitude(0.0)
        );
    }

    #[test]
    fn farfield_matches_boresight_and_limit() {
        let kappa = 2.0 * PI / 0.01;
        let ff = farfield_green(10.0, kappa).unwrap();
        assert_relative_eq!(ff.norm(), 1.0 / (40.0 * PI), max_relative = 1e-14);
        let g0 = scalar_green(0.0, 10.0, kappa).unwrap();
        assert_relative_eq!(g0.re, ff.re, max_relative = 1e-13);
        assert_relative_eq!(g0.im, ff.im, max_relative = 1e-13);
        // Relative deviation at fixed z vanishes as d grows; it is dominated
        // by the residual Fresnel phase kappa*z^2/(2d).
        let z = 1.0;
        let dev = |d: f64| {
            let g = scalar_green(z, d, kappa).unwrap();
            let f = farfield_green(d, kappa).unwrap();
            (g - f).norm() / f.norm()
        };
        assert!(dev(1e3) < dev(1e2));
        assert!(dev(1e4) < dev(1e3));
        assert!(dev(1e4) < 1.1 * kappa * z * z / (2.0 * 1e4));
    }

    #[test]
    fn spectrum_matches_direct_quadrature() {
        let kappa = 2.0 * PI / 0.01;
        let spectrum = WavenumberSpectrum::build(5.0, kappa, 5.0).unwrap();
        let spec = QuadratureSpec::channel();
        for frac in [0.0, 0.31, 0.57] {
            let kz = frac * kappa;
            let direct = green_wavenumber(kz, 5.0, kappa, &spec).unwrap();
            let cached = spectrum.eval(kz);
            assert!(
                (direct - cached).norm() <= 2e-6 * direct.norm(),
                "kz = {kz}: direct {direct}, cached {cached}"
            );
        }
    }

    #[test]
    fn spectrum_peak_matches_fresnel_form() {
        // Stationary-phase value at the band center:
        // G_z(0,d) ~ (1/4pi) sqrt(2 pi/(kappa d)) * exp(i(kappa d + pi/4)).
        let kappa = 2.0 * PI / 0.01;
        for d in [5.0, 10.0] {
            let spectrum = WavenumberSpectrum::build(d, kappa, 1.0).unwrap();
            let expected = (2.0 * PI / (kappa * d)).sqrt() / (4.0 * PI);
            assert_relative_eq!(spectrum.peak(), expected, max_relative = 2e-3);
        }
    }

    #[test]
    fn spectrum_is_bandlimited() {
        // Out-of-band content of G_z is at least 40 dB below the peak (it
        // is evanescent; the residual here is truncation noise).
        let kappa = 2.0 * PI / 0.01;
        let direct = green_wavenumber(1.5 * kappa, 1.0, kappa, &QuadratureSpec::channel()).unwrap();
        let peak = green_wavenumber(0.0, 1.0, kappa, &QuadratureSpec::channel()).unwrap();
        assert!(direct.norm() <= 1e-4 * peak.norm());
    }

    #[test]
    fn spectrum_is_even() {
        let kappa = 2.0 * PI / 0.01;
        let spectrum = WavenumberSpectrum::build(5.0, kappa, 1.0).unwrap();
        for kz in [0.2 * kappa, 0.55 * kappa, 0.9 * kappa] {
            let plus = spectrum.eval(kz);
            let minus = spectrum.eval(-kz);
            assert!((plus - minus).norm() <= 1e-9 * plus.norm().max(1e-12));
        }
    }

    #[test]
    fn three_db_bandwidth_near_0_6_kappa() {
        let kappa = 2.0 * PI / 0.01;
        for d in [5.0, 10.0, 25.0] {
            let spectrum = WavenumberSpectrum::build(d, kappa, 1.0).unwrap();
            let edge = spectrum.three_db_edge();
            assert!(
                (edge - 0.6 * kappa).abs() <= 0.1 * 0.6 * kappa,
                "d = {d}: edge = {} kappa",
                edge / kappa
            );
        }
    }

    #[test]
    fn parseval_between_domains() {
        let kappa = 2.0 * PI / 0.01;
        let spectrum = WavenumberSpectrum::build(5.0, kappa, 1.0).unwrap();
        let kernel = GreenKernel::new(5.0, kappa).unwrap();
        let z = spectrum.z_half_width;
        let spatial = kernel.abs_squared_integral(-z, z);
        let wavenumber: f64 = spectrum.samples.iter().map(|g| g.norm_sqr()).sum::<f64>()
            * spectrum.kz_step
            / (2.0 * PI);
        assert_relative_eq!(spatial, wavenumber, max_relative = 1e-4);
    }

    #[test]
    fn radiation_pattern_center_mode() {
        let s = scenario_n(3);
        let v = radiation_pattern(PI / 2.0, 2, &s).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-12);
        assert_relative_eq!(beam_direction(2, &s).unwrap(), PI / 2.0, max_relative = 1e-12);
        // Peak of the center beam sits at broadside.
        for theta in [PI / 3.0, 0.4 * PI, 0.6 * PI] {
            assert!(radiation_pattern(theta, 2, &s).unwrap() < 1.0);
        }
    }

    #[test]
    fn beam_directions_for_three_modes() {
        // Ls = 0.2 m, lambda = 0.01 m, N = 3: steering cosines -+0.05.
        let s = scenario_n(3);
        let t1 = beam_direction(1, &s).unwrap();
        let t2 = beam_direction(2, &s).unwrap();
        let t3 = beam_direction(3, &s).unwrap();
        assert_relative_eq!(t1.cos(), -0.05, max_relative = 1e-12);
        assert_relative_eq!(t2.cos(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(t3.cos(), 0.05, max_relative = 1e-12);
        // Each beam peaks at its own direction.
        for (m, t) in [(1usize, t1), (3, t3)] {
            let peak = radiation_pattern(t, m, &s).unwrap();
            assert!(radiation_pattern(t + 0.05, m, &s).unwrap() < peak);
            assert!(radiation_pattern(t - 0.05, m, &s).unwrap() < peak);
        }
    }

    #[test]
    fn null_to_null_beamwidth() {
        // Nulls of mode m sit at cos(theta) = lambda*(a_m +- 1)/Ls, i.e.
        // the null-to-null width in cos(theta) is 2*lambda/Ls.
        let s = scenario_n(5);
        let m = 4; // a_m = 1
        let cos_null_hi = s.lambda / s.ls * 2.0;
        let cos_null_lo = 0.0;
        for c in [cos_null_lo, cos_null_hi] {
            let v = radiation_pattern(c.acos(), m, &s).unwrap();
            assert!(v < 1e-20, "pattern at null = {v}");
        }
    }

    #[test]
    fn invisible_steering_is_flagged() {
        // Hand-built (unvalidated) scenario with N beyond the band limit.
        let s = Scenario {
            ls: 0.2,
            lr: 1.0,
            d: 5.0,
            lambda: 0.01,
            n: 61,
            ps: 1e-7,
            sigma2_emi: 5.6e-6,
            sigma2_hdw: 0.0,
            snr_db: 90.0,
            constants: PhysicalConstants::standard(),
        };
        assert!(matches!(
            radiation_pattern(PI / 2.0, 61, &s),
            Err(WdmError::BeamOutsideVisibleRegion { .. })
        ));
    }
}
