//! Spatial basis families and their closed-form wavenumber algebra.
//!
//! Every analytic family used here - Fourier modes on the source, Fourier
//! modes on the receiver, and rectangular dipole elements - is a complex
//! exponential with constant amplitude on one interval:
//!
//! ```text
//! e(x) = amplitude * exp(i * freq * x)   for |x - center| <= half_width
//! ```
//!
//! That single shape gives closed forms for the wavenumber transform and
//! for the cross-correlation of any pair of elements (products of complex
//! exponentials over interval intersections). The cross-correlation is what
//! collapses the channel and covariance double integrals into single
//! oscillatory integrals.
//!
//! Mode indexing is 1-based with the paper-style centered offset
//! `a_m = m - 1 - (N-1)/2`, so the center mode of an odd-sized family has
//! zero spatial frequency.

use num_complex::Complex64;

use crate::error::{Result, WdmError};
use crate::fields::sinc;
use crate::scenario::{floor_tol, Scenario};

/// One basis element: a windowed complex exponential.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub amplitude: f64,
    /// Spatial angular frequency [rad/m].
    pub freq: f64,
    /// Support center [m].
    pub center: f64,
    /// Support half-width [m].
    pub half_width: f64,
}

impl Element {
    #[inline]
    pub fn eval(&self, x: f64) -> Complex64 {
        if (x - self.center).abs() <= self.half_width {
            Complex64::from_polar(self.amplitude, self.freq * x)
        } else {
            Complex64::ZERO
        }
    }

    /// Wavenumber transform `integral e(x) exp(-i kz x) dx`.
    pub fn transform(&self, kappa_z: f64) -> Complex64 {
        let beta = kappa_z - self.freq;
        let width = 2.0 * self.half_width;
        Complex64::from_polar(1.0, -beta * self.center)
            * (self.amplitude * width * sinc(beta * self.half_width / std::f64::consts::PI))
    }
}

/// `integral exp(i beta x) dx` over `[lo, hi]`, stable for small `beta`.
fn interval_exp_integral(beta: f64, lo: f64, hi: f64) -> Complex64 {
    let delta = hi - lo;
    let t = beta * delta;
    if t.abs() < 1e-6 {
        let series = Complex64::new(1.0 - t * t / 6.0, 0.5 * t - t * t * t / 24.0);
        Complex64::from_polar(delta, beta * lo) * series
    } else {
        (Complex64::from_polar(1.0, t) - 1.0) / Complex64::new(0.0, beta)
            * Complex64::from_polar(1.0, beta * lo)
    }
}

/// Evenly spaced rectangular dipoles on a segment.
///
/// Element `i` (1-based) is a rect of width `size` centered at
/// `-L/2 + (i-1)*spacing`. Edge elements may overhang the segment by half a
/// dipole; the centers themselves must stay inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleLayout {
    pub segment_length: f64,
    /// Dipole size `delta` [m].
    pub size: f64,
    /// Center-to-center spacing [m].
    pub spacing: f64,
    pub count: usize,
}

impl DipoleLayout {
    /// As many elements as fit: `count = floor(L / spacing) + 1`.
    pub fn fill(segment_length: f64, size: f64, spacing: f64) -> Result<Self> {
        let count = floor_tol(segment_length / spacing) as usize + 1;
        Self::with_count(segment_length, size, spacing, count)
    }

    pub fn with_count(segment_length: f64, size: f64, spacing: f64, count: usize) -> Result<Self> {
        for (name, value) in [
            ("segment_length", segment_length),
            ("size", size),
            ("spacing", spacing),
        ] {
            if value <= 0.0 || !value.is_finite() {
                return Err(WdmError::NonPositiveDimension {
                    name: name.to_string(),
                    value,
                });
            }
        }
        if spacing < size {
            return Err(WdmError::DipoleOverlap {
                spacing,
                size,
            });
        }
        let layout = Self {
            segment_length,
            size,
            spacing,
            count,
        };
        let half = segment_length / 2.0;
        for index in [1, count] {
            let center = layout.center(index);
            if center < -half - 1e-9 || center > half + 1e-9 {
                return Err(WdmError::DipoleOutsideSegment {
                    index,
                    center,
                    half,
                });
            }
        }
        Ok(layout)
    }

    /// Center of 1-based element `i`.
    pub fn center(&self, index: usize) -> f64 {
        -self.segment_length / 2.0 + (index as f64 - 1.0) * self.spacing
    }
}

/// A finite family of basis elements on one segment.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisFamily {
    /// Orthonormal Fourier modes on the source: amplitude `1/sqrt(Ls)`,
    /// frequencies spaced by `2*pi/Ls`, support `Ls`.
    FourierSource { source_length: f64, count: usize },
    /// Unit-amplitude Fourier windows on the receiver: the frequency grid is
    /// still `2*pi/Ls` (set by the source), the support is `Lr`.
    FourierReceive {
        source_length: f64,
        receive_length: f64,
        count: usize,
    },
    /// Normalized rect dipoles (amplitude `1/sqrt(delta)`).
    DipoleSource(DipoleLayout),
    /// Unit-amplitude rect dipoles.
    DipoleReceive(DipoleLayout),
}

impl BasisFamily {
    pub fn fourier_source(scenario: &Scenario) -> Self {
        Self::FourierSource {
            source_length: scenario.ls,
            count: scenario.n,
        }
    }

    pub fn fourier_receive(scenario: &Scenario) -> Self {
        Self::FourierReceive {
            source_length: scenario.ls,
            receive_length: scenario.lr,
            count: scenario.n,
        }
    }

    pub fn count(&self) -> usize {
        match self {
            Self::FourierSource { count, .. } | Self::FourierReceive { count, .. } => *count,
            Self::DipoleSource(l) | Self::DipoleReceive(l) => l.count,
        }
    }

    pub fn support_length(&self) -> f64 {
        match self {
            Self::FourierSource { source_length, .. } => *source_length,
            Self::FourierReceive { receive_length, .. } => *receive_length,
            Self::DipoleSource(l) | Self::DipoleReceive(l) => l.segment_length,
        }
    }

    /// Descriptor of 1-based element `index`.
    pub fn element(&self, index: usize) -> Result<Element> {
        let count = self.count();
        if index < 1 || index > count {
            return Err(WdmError::ModeIndexOutOfRange { index, count });
        }
        let offset = |n: usize| (index as i64 - 1 - (n as i64 - 1) / 2) as f64;
        Ok(match self {
            Self::FourierSource {
                source_length,
                count,
            } => Element {
                amplitude: 1.0 / source_length.sqrt(),
                freq: 2.0 * std::f64::consts::PI * offset(*count) / source_length,
                center: 0.0,
                half_width: source_length / 2.0,
            },
            Self::FourierReceive {
                source_length,
                receive_length,
                count,
            } => Element {
                amplitude: 1.0,
                freq: 2.0 * std::f64::consts::PI * offset(*count) / source_length,
                center: 0.0,
                half_width: receive_length / 2.0,
            },
            Self::DipoleSource(l) => Element {
                amplitude: 1.0 / l.size.sqrt(),
                freq: 0.0,
                center: l.center(index),
                half_width: l.size / 2.0,
            },
            Self::DipoleReceive(l) => Element {
                amplitude: 1.0,
                freq: 0.0,
                center: l.center(index),
                half_width: l.size / 2.0,
            },
        })
    }

    pub fn eval(&self, index: usize, x: f64) -> Result<Complex64> {
        Ok(self.element(index)?.eval(x))
    }

    /// Closed-form wavenumber transform of element `index`.
    pub fn transform(&self, index: usize, kappa_z: f64) -> Result<Complex64> {
        Ok(self.element(index)?.transform(kappa_z))
    }
}

/// Cross-correlation `c(u) = integral a_i*(x) b_j(x - u) dx` in closed form.
///
/// Zero when the supports at lag `u` are disjoint; otherwise a single
/// complex exponential integrated over the overlap interval.
pub fn cross_correlation(
    a: &BasisFamily,
    index_a: usize,
    b: &BasisFamily,
    index_b: usize,
    lag: f64,
) -> Result<Complex64> {
    Ok(element_cross_correlation(
        &a.element(index_a)?,
        &b.element(index_b)?,
        lag,
    ))
}

pub(crate) fn element_cross_correlation(a: &Element, b: &Element, lag: f64) -> Complex64 {
    let lo = (a.center - a.half_width).max(b.center + lag - b.half_width);
    let hi = (a.center + a.half_width).min(b.center + lag + b.half_width);
    if hi <= lo {
        return Complex64::ZERO;
    }
    Complex64::from_polar(a.amplitude * b.amplitude, -b.freq * lag)
        * interval_exp_integral(b.freq - a.freq, lo, hi)
}

/// Spec-style free functions over a [`Scenario`].
pub fn fourier_source(m: usize, s_z: f64, scenario: &Scenario) -> Result<Complex64> {
    BasisFamily::fourier_source(scenario).eval(m, s_z)
}

pub fn fourier_source_transform(m: usize, kappa_z: f64, scenario: &Scenario) -> Result<Complex64> {
    BasisFamily::fourier_source(scenario).transform(m, kappa_z)
}

pub fn fourier_receive_transform(n: usize, kappa_z: f64, scenario: &Scenario) -> Result<Complex64> {
    BasisFamily::fourier_receive(scenario).transform(n, kappa_z)
}

/// Which side of the link a dipole family lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DipoleRole {
    Source,
    Receive,
}

/// Rect dipole element value (real-valued) at `position`.
pub fn dipole_basis(
    index: usize,
    position: f64,
    role: DipoleRole,
    layout: &DipoleLayout,
) -> Result<f64> {
    let family = match role {
        DipoleRole::Source => BasisFamily::DipoleSource(*layout),
        DipoleRole::Receive => BasisFamily::DipoleReceive(*layout),
    };
    Ok(family.eval(index, position)?.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadratureSpec};
    use crate::scenario::{baseline_config, validate};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn scenario_n(n: usize) -> Scenario {
        let mut map = baseline_config();
        map.insert("N".into(), n.to_string());
        validate(&map).unwrap()
    }

    fn numeric_inner(
        fam_a: &BasisFamily,
        ia: usize,
        fam_b: &BasisFamily,
        ib: usize,
    ) -> Complex64 {
        let half = fam_a.support_length().max(fam_b.support_length()) / 2.0;
        let ea = fam_a.element(ia).unwrap();
        let eb = fam_b.element(ib).unwrap();
        let hint = 2.0 * PI / (ea.freq.abs() + eb.freq.abs() + 1.0);
        let spec = QuadratureSpec::channel().with_hint(hint);
        integrate(
            |x| ea.eval(x).conj() * eb.eval(x),
            -half,
            half,
            &spec,
        )
        .unwrap()
        .value
    }

    #[test]
    fn fourier_source_is_orthonormal() {
        let s = scenario_n(5);
        let fam = BasisFamily::fourier_source(&s);
        for m in 1..=5 {
            for n in 1..=5 {
                let inner = numeric_inner(&fam, m, &fam, n);
                let expected = if m == n { 1.0 } else { 0.0 };
                assert!(
                    (inner - Complex64::from(expected)).norm() < 1e-10,
                    "({m},{n}) -> {inner}"
                );
            }
        }
    }

    #[test]
    fn center_mode_is_flat() {
        let s = scenario_n(5);
        let v = fourier_source(3, 0.07, &s).unwrap();
        assert_relative_eq!(v.re, 1.0 / s.ls.sqrt(), max_relative = 1e-14);
        assert!(v.im.abs() < 1e-15);
        assert_eq!(fourier_source(3, 0.11, &s).unwrap(), Complex64::ZERO);
    }

    #[test]
    fn source_transform_peak_and_nulls() {
        let s = scenario_n(5);
        for m in 1..=5 {
            let beta = s.mode_wavenumber(m);
            let at_peak = fourier_source_transform(m, beta, &s).unwrap();
            assert_relative_eq!(at_peak.norm(), s.ls.sqrt(), max_relative = 1e-12);
            // First nulls at beta +- 2*pi/Ls: separation 4*pi/Ls.
            for sign in [-1.0, 1.0] {
                let null = fourier_source_transform(m, beta + sign * 2.0 * PI / s.ls, &s).unwrap();
                assert!(null.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn source_transform_matches_numeric_ft() {
        let s = scenario_n(5);
        let fam = BasisFamily::fourier_source(&s);
        let spec = QuadratureSpec::channel();
        for (m, kz) in [(1usize, 37.0f64), (3, -190.0), (5, 612.0)] {
            let e = fam.element(m).unwrap();
            let hint = 2.0 * PI / (e.freq.abs() + kz.abs() + 1.0);
            let numeric = integrate(
                |x| e.eval(x) * Complex64::from_polar(1.0, -kz * x),
                -s.ls / 2.0,
                s.ls / 2.0,
                &spec.with_hint(hint),
            )
            .unwrap()
            .value;
            let closed = fam.transform(m, kz).unwrap();
            assert!(
                (numeric - closed).norm() < 1e-8,
                "mode {m} at kz {kz}: {numeric} vs {closed}"
            );
        }
    }

    #[test]
    fn receive_transform_peak_and_nulls() {
        let s = scenario_n(5);
        let n = 4;
        let beta = s.mode_wavenumber(n);
        let at_peak = fourier_receive_transform(n, beta, &s).unwrap();
        assert_relative_eq!(at_peak.norm(), s.lr, max_relative = 1e-12);
        for sign in [-1.0, 1.0] {
            let null = fourier_receive_transform(n, beta + sign * 2.0 * PI / s.lr, &s).unwrap();
            assert!(null.norm() < 1e-10);
        }
    }

    #[test]
    fn receive_transform_concentrates_as_lr_grows() {
        // (1/2pi) * Psi_n integrates to psi_n(0) = 1; as Lr grows the mass
        // concentrates into any fixed window around the center wavenumber.
        let window = 0.5 * 2.0 * PI / 0.2;
        let mut last = 0.0;
        for lr in [1.0, 5.0, 25.0] {
            let fam = BasisFamily::FourierReceive {
                source_length: 0.2,
                receive_length: lr,
                count: 5,
            };
            let e = fam.element(4).unwrap();
            let spec = QuadratureSpec::channel().with_hint(2.0 * PI / lr);
            let mass = integrate(
                |kz| e.transform(kz),
                e.freq - window,
                e.freq + window,
                &spec,
            )
            .unwrap()
            .value
                / Complex64::from(2.0 * PI);
            assert!(mass.re > last, "lr = {lr}: {} <= {last}", mass.re);
            last = mass.re;
        }
        assert!(last > 0.95 && last < 1.05);
    }

    #[test]
    fn dipole_counts_match_half_wavelength_spacing() {
        // Ls = 0.2 m at spacing lambda/2 = 0.005 m -> 41 elements.
        let src = DipoleLayout::fill(0.2, 0.005, 0.005).unwrap();
        assert_eq!(src.count, 41);
        // Lr = 5 m at the same spacing -> floor(5/0.005) + 1 = 1001.
        let rx = DipoleLayout::fill(5.0, 0.005, 0.005).unwrap();
        assert_eq!(rx.count, 1001);
        assert_relative_eq!(src.center(1), -0.1, max_relative = 1e-12);
        assert_relative_eq!(src.center(41), 0.1, max_relative = 1e-9);
    }

    #[test]
    fn dipole_layout_rejects_bad_geometry() {
        assert!(matches!(
            DipoleLayout::fill(0.2, 0.01, 0.005),
            Err(WdmError::DipoleOverlap { .. })
        ));
        assert!(matches!(
            DipoleLayout::with_count(0.2, 0.005, 0.005, 60),
            Err(WdmError::DipoleOutsideSegment { .. })
        ));
    }

    #[test]
    fn dipole_gram_is_identity() {
        let layout = DipoleLayout::fill(0.2, 0.004, 0.005).unwrap();
        let fam = BasisFamily::DipoleSource(layout);
        for m in [1usize, 7, 41] {
            for n in [1usize, 7, 41] {
                let c = cross_correlation(&fam, m, &fam, n, 0.0).unwrap();
                let expected = if m == n { 1.0 } else { 0.0 };
                assert!((c - Complex64::from(expected)).norm() < 1e-12);
            }
        }
        // Role-dependent normalization.
        let x = layout.center(3);
        assert_relative_eq!(
            dipole_basis(3, x, DipoleRole::Source, &layout).unwrap(),
            1.0 / layout.size.sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            dipole_basis(3, x, DipoleRole::Receive, &layout).unwrap(),
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn cross_correlation_support_and_center_value() {
        let s = scenario_n(5);
        let rx = BasisFamily::fourier_receive(&s);
        let src = BasisFamily::fourier_source(&s);
        let beyond = (s.ls + s.lr) / 2.0 + 1e-9;
        assert_eq!(cross_correlation(&rx, 2, &src, 4, beyond).unwrap(), Complex64::ZERO);
        assert_eq!(cross_correlation(&rx, 2, &src, 4, -beyond).unwrap(), Complex64::ZERO);
        // Same mode, zero lag, Lr = Ls: integral of (1/sqrt(Ls)) over Ls.
        let mut map = baseline_config();
        map.insert("Lr".into(), "0.2".into());
        map.insert("N".into(), "5".into());
        let eq = validate(&map).unwrap();
        let c = cross_correlation(
            &BasisFamily::fourier_receive(&eq),
            3,
            &BasisFamily::fourier_source(&eq),
            3,
            0.0,
        )
        .unwrap();
        assert_relative_eq!(c.re, eq.ls.sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn cross_correlation_matches_brute_force() {
        let s = scenario_n(7);
        let rx = BasisFamily::fourier_receive(&s);
        let src = BasisFamily::fourier_source(&s);
        let spec = QuadratureSpec::channel();
        for (n, m, u) in [
            (1usize, 1usize, 0.0),
            (2, 6, 0.37),
            (7, 3, -1.94),
            (4, 4, 2.49),
            (5, 2, 2.599),
        ] {
            let en = rx.element(n).unwrap();
            let em = src.element(m).unwrap();
            let hint = 2.0 * PI / (en.freq.abs() + em.freq.abs() + 1.0);
            // Integrate over the support overlap, where the product is smooth.
            let lo = (-s.lr / 2.0).max(u - s.ls / 2.0);
            let hi = (s.lr / 2.0).min(u + s.ls / 2.0);
            let brute = if hi > lo {
                integrate(
                    |x| en.eval(x).conj() * em.eval(x - u),
                    lo,
                    hi,
                    &spec.with_hint(hint),
                )
                .unwrap()
                .value
            } else {
                Complex64::ZERO
            };
            let closed = cross_correlation(&rx, n, &src, m, u).unwrap();
            assert!(
                (brute - closed).norm() < 1e-10,
                "({n},{m}) at u = {u}: {brute} vs {closed}"
            );
        }
    }

    #[test]
    fn cross_correlation_is_continuous() {
        let s = scenario_n(5);
        let rx = BasisFamily::fourier_receive(&s);
        let src = BasisFamily::fourier_source(&s);
        let span = (s.ls + s.lr) / 2.0;
        let step = 1e-5;
        let mut u = -span - 0.01;
        let mut prev = cross_correlation(&rx, 4, &src, 2, u).unwrap();
        while u < span + 0.01 {
            u += step;
            let next = cross_correlation(&rx, 4, &src, 2, u).unwrap();
            // Bounded difference quotient: |c'| <= amp_a*amp_b*(|freq|*overlap + 2).
            assert!(
                (next - prev).norm() < step * 2e3,
                "jump at u = {u}: {}",
                (next - prev).norm()
            );
            prev = next;
        }
    }
}
