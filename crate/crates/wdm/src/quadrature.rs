//! Oscillatory-safe one-dimensional integration.
//!
//! Every integral in this crate runs through [`integrate`]: a composite
//! Gauss-Legendre rule whose panel width is tied to the integrand's
//! oscillation wavelength, with adaptive bisection as a fallback for
//! non-oscillatory integrands. Channel kernels oscillate at up to
//! `exp(i*2*kappa*z)` with `kappa = 2*pi/lambda` over spans of tens of
//! meters (thousands of periods), where plain adaptive bisection thrashes;
//! fixed-width panels sized from the hint keep the per-panel phase small
//! enough that a 16-point rule is exact to roundoff.
//!
//! The module also provides uniform grids with Gregory end-corrected
//! trapezoid weights. Those are used where a bilinear form needs an
//! equispaced grid (Toeplitz tricks in the EMI covariance assembly).

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Result, WdmError};

/// Tolerances and panel policy for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    /// Relative tolerance on the returned value.
    pub rel_tol: f64,
    /// Absolute error floor; protects integrals whose true value is ~0.
    pub abs_floor: f64,
    /// Shortest oscillation wavelength of the integrand, in the integration
    /// variable's units. When set, panel width never exceeds `hint / 4`.
    pub osc_wavelength: Option<f64>,
    /// Hard cap on the number of panels.
    pub max_panels: usize,
}

impl QuadratureSpec {
    /// Tight tolerance used for channel and covariance matrix entries.
    pub fn channel() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_floor: 1e-13,
            osc_wavelength: None,
            max_panels: 8_000_000,
        }
    }

    /// Looser tolerance for figure-level sweeps.
    pub fn sweep() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_floor: 1e-12,
            osc_wavelength: None,
            max_panels: 8_000_000,
        }
    }

    /// Same tolerances with an oscillation-wavelength hint attached.
    pub fn with_hint(mut self, wavelength: f64) -> Self {
        assert!(wavelength > 0.0, "oscillation hint must be positive");
        self.osc_wavelength = Some(wavelength);
        self
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::channel()
    }
}

/// Value, error estimate, and effort of one integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult {
    pub value: Complex64,
    pub error: f64,
    pub panels: usize,
}

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Golub-Welsch.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eigen = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = eigen
        .eigenvalues
        .iter()
        .zip(eigen.eigenvectors.column_iter())
        .map(|(&node, col)| (node, 2.0 * col[0] * col[0]))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    CACHE.get_or_init(|| gauss_legendre(8))
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    CACHE.get_or_init(|| gauss_legendre(16))
}

/// One panel evaluated with nested 16- and 8-point rules.
/// Returns the 16-point value and |GL16 - GL8| as the error estimate.
fn eval_panel<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let (x16, w16) = gl16();
    let (x8, w8) = gl8();
    let mut fine = Complex64::ZERO;
    for (x, w) in x16.iter().zip(w16) {
        fine += f(center + half * x) * *w;
    }
    fine *= half;
    let mut coarse = Complex64::ZERO;
    for (x, w) in x8.iter().zip(w8) {
        coarse += f(center + half * x) * *w;
    }
    coarse *= half;
    (fine, (fine - coarse).norm())
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

fn kahan_sum(values: impl Iterator<Item = Complex64>) -> Complex64 {
    let mut sum = Complex64::ZERO;
    let mut comp = Complex64::ZERO;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Integrate a complex-valued function over `[a, b]`.
///
/// The estimated error of the result is at most
/// `max(rel_tol * |value|, abs_floor)`; if that cannot be met within the
/// panel budget the call fails rather than silently returning a bad value.
/// Panel evaluation order and the final summation order are fixed, so the
/// result is deterministic for a given spec.
pub fn integrate<F: Fn(f64) -> Complex64>(
    f: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult> {
    if a == b {
        return Ok(QuadratureResult {
            value: Complex64::ZERO,
            error: 0.0,
            panels: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let span = hi - lo;

    let initial = match spec.osc_wavelength {
        Some(hint) => {
            let n = (span / (hint / 4.0)).ceil() as usize;
            n.max(1)
        }
        None => 16,
    };
    if initial > spec.max_panels {
        return Err(WdmError::QuadratureNonConvergence {
            a,
            b,
            estimate: f64::INFINITY,
            target: spec.abs_floor,
            panels: initial,
        });
    }

    // First pass: fixed panels, streamed in interval order.
    let width = span / initial as f64;
    let mut values = Vec::with_capacity(initial.min(1 << 22));
    let mut total_err = 0.0;
    let stream_only = initial > (1 << 21);
    let mut streamed = Complex64::ZERO;
    let mut streamed_comp = Complex64::ZERO;
    for i in 0..initial {
        let pa = lo + i as f64 * width;
        let pb = if i + 1 == initial { hi } else { pa + width };
        let (v, e) = eval_panel(&f, pa, pb);
        total_err += e;
        if stream_only {
            let y = v - streamed_comp;
            let t = streamed + y;
            streamed_comp = (t - streamed) - y;
            streamed = t;
        } else {
            values.push(Panel {
                a: pa,
                b: pb,
                value: v,
                error: e,
            });
        }
    }
    let total = if stream_only {
        streamed
    } else {
        kahan_sum(values.iter().map(|p| p.value))
    };
    let target = |v: Complex64| (spec.rel_tol * v.norm()).max(spec.abs_floor);
    if total_err <= target(total) {
        return Ok(QuadratureResult {
            value: sign * total,
            error: total_err,
            panels: initial,
        });
    }
    if stream_only {
        return Err(WdmError::QuadratureNonConvergence {
            a,
            b,
            estimate: total_err,
            target: target(total),
            panels: initial,
        });
    }

    // Adaptive pass: bisect the worst panel until the estimate meets the
    // target or the budget runs out.
    let mut panels = values;
    let mut count = initial;
    loop {
        let sum = kahan_sum(panels.iter().map(|p| p.value));
        let err: f64 = panels.iter().map(|p| p.error).sum();
        if err <= target(sum) {
            panels.sort_by(|p, q| p.a.total_cmp(&q.a));
            let value = kahan_sum(panels.iter().map(|p| p.value));
            return Ok(QuadratureResult {
                value: sign * value,
                error: err,
                panels: count,
            });
        }
        if count + 1 > spec.max_panels || panels.len() >= (1 << 21) {
            return Err(WdmError::QuadratureNonConvergence {
                a,
                b,
                estimate: err,
                target: target(sum),
                panels: count,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("non-empty panel list");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // Interval at roundoff resolution; accept its estimate as-is.
            panels.push(p);
            let value = kahan_sum(panels.iter().map(|p| p.value));
            let err: f64 = panels.iter().map(|p| p.error).sum();
            return Ok(QuadratureResult {
                value: sign * value,
                error: err,
                panels: count,
            });
        }
        let (lv, le) = eval_panel(&f, p.a, mid);
        let (rv, re) = eval_panel(&f, mid, p.b);
        panels.push(Panel {
            a: p.a,
            b: mid,
            value: lv,
            error: le,
        });
        panels.push(Panel {
            a: mid,
            b: p.b,
            value: rv,
            error: re,
        });
        count += 1;
    }
}

/// Real-valued convenience wrapper around [`integrate`].
pub fn integrate_real<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    let r = integrate(|x| Complex64::new(f(x), 0.0), a, b, spec)?;
    Ok((r.value.re, r.error))
}

/// An equispaced grid on `[start, start + step*(len-1)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    /// Grid spanning `[a, b]` with spacing at most `max_step`.
    pub fn span(a: f64, b: f64, max_step: f64) -> Self {
        assert!(b > a && max_step > 0.0);
        let len = ((b - a) / max_step).ceil() as usize + 1;
        let len = len.max(12);
        Self {
            start: a,
            step: (b - a) / (len - 1) as f64,
            len,
        }
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.point(i))
    }

    /// Trapezoid weights with sixth-order Gregory end corrections.
    ///
    /// Interior weights equal `step`; the five nodes nearest each end carry
    /// the classical Gregory coefficients, which removes the O(h^2) boundary
    /// error of the plain trapezoid rule.
    pub fn weights_gregory6(&self) -> Vec<f64> {
        assert!(self.len >= 12, "Gregory-6 needs at least 12 nodes");
        const END: [f64; 5] = [
            95.0 / 288.0,
            317.0 / 240.0,
            23.0 / 30.0,
            793.0 / 720.0,
            157.0 / 160.0,
        ];
        let mut w = vec![self.step; self.len];
        for (k, &c) in END.iter().enumerate() {
            w[k] = c * self.step;
            w[self.len - 1 - k] = c * self.step;
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn constant_is_exact() {
        let r = integrate(|_| Complex64::new(1.0, 0.0), 0.0, 1.0, &QuadratureSpec::channel())
            .unwrap();
        assert_relative_eq!(r.value.re, 1.0, max_relative = 1e-14);
        assert!(r.value.im.abs() < 1e-15);
    }

    #[test]
    fn full_oscillation_periods_cancel() {
        // Integral of exp(i*100*x) over [0, 2*pi] is exactly zero.
        let spec = QuadratureSpec::channel().with_hint(2.0 * PI / 100.0);
        let r = integrate(
            |x| Complex64::new(0.0, 100.0 * x).exp(),
            0.0,
            2.0 * PI,
            &spec,
        )
        .unwrap();
        assert!(r.value.norm() < spec.abs_floor.max(1e-12), "|I| = {}", r.value.norm());
    }

    #[test]
    fn oscillatory_matches_closed_form() {
        // Integral of exp(i*w*x) over [a, b].
        let w = 217.3;
        let (a, b) = (-1.3, 2.7);
        let spec = QuadratureSpec::channel().with_hint(2.0 * PI / w);
        let r = integrate(|x| Complex64::new(0.0, w * x).exp(), a, b, &spec).unwrap();
        let exact = (Complex64::new(0.0, w * b).exp() - Complex64::new(0.0, w * a).exp())
            / Complex64::new(0.0, w);
        assert!((r.value - exact).norm() <= 1e-12 * exact.norm());
    }

    #[test]
    fn smooth_peak_without_hint() {
        // Narrow Lorentzian; forces the adaptive path.
        let r = integrate(
            |x| Complex64::new(1.0 / (1.0 + 1e4 * x * x), 0.0),
            -1.0,
            1.0,
            &QuadratureSpec::channel(),
        )
        .unwrap();
        let exact = 2.0 / 100.0 * (100.0f64).atan();
        assert_relative_eq!(r.value.re, exact, max_relative = 1e-9);
    }

    #[test]
    fn interval_splitting_is_consistent() {
        let w = 63.0;
        let spec = QuadratureSpec::channel().with_hint(2.0 * PI / w);
        let f = |x: f64| Complex64::new(0.0, w * x + 0.3 * x * x).exp();
        let whole = integrate(f, -2.0, 3.0, &spec).unwrap();
        let left = integrate(f, -2.0, 0.7, &spec).unwrap();
        let right = integrate(f, 0.7, 3.0, &spec).unwrap();
        let diff = (whole.value - left.value - right.value).norm();
        assert!(diff <= 2.0 * (whole.error + left.error + right.error) + 1e-12);
    }

    #[test]
    fn refinement_is_monotone() {
        // Halving the tolerance never increases the true error.
        let f = |x: f64| Complex64::new((5.0 * x).sin() / (1.0 + x * x), 0.0);
        let exact = integrate(f, 0.0, 4.0, &QuadratureSpec {
            rel_tol: 1e-13,
            abs_floor: 1e-16,
            osc_wavelength: Some(2.0 * PI / 5.0),
            max_panels: 1 << 20,
        })
        .unwrap()
        .value;
        let mut last_err = f64::INFINITY;
        for k in 2..8 {
            let spec = QuadratureSpec {
                rel_tol: 10f64.powi(-(k as i32)),
                abs_floor: 1e-16,
                osc_wavelength: None,
                max_panels: 1 << 20,
            };
            let r = integrate(f, 0.0, 4.0, &spec).unwrap();
            let err = (r.value - exact).norm();
            assert!(err <= last_err + 1e-15, "tol 1e-{k}: {err} > {last_err}");
            last_err = err;
        }
    }

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in [4, 8, 16, 40] {
            let (x, w) = gauss_legendre(n);
            assert_eq!(x.len(), n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-12);
            for pair in x.windows(2) {
                assert!(pair[0] < pair[1]);
            }
        }
    }

    #[test]
    fn gregory_weights_integrate_polynomials() {
        let grid = UniformGrid::span(0.0, 1.0, 1.0 / 40.0);
        let w = grid.weights_gregory6();
        for p in 0..=5 {
            let quad: f64 = grid
                .points()
                .zip(&w)
                .map(|(x, wi)| wi * x.powi(p))
                .sum();
            let exact = 1.0 / (p as f64 + 1.0);
            assert_relative_eq!(quad, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn gregory_handles_oscillation() {
        // exp(i*w*x): the boundary-corrected trapezoid error scales with the
        // integrand magnitude (here 1), not the heavily-cancelled integral.
        // Expect ~5e-6 at 8 samples per period and sixth-order improvement
        // when the grid is refined.
        let w = 600.0;
        let exact = (Complex64::new(0.0, w).exp() - Complex64::ONE) / Complex64::new(0.0, w);
        let err_at = |samples_per_period: f64| {
            let grid = UniformGrid::span(0.0, 1.0, 2.0 * PI / w / samples_per_period);
            let wts = grid.weights_gregory6();
            let quad: Complex64 = grid
                .points()
                .zip(&wts)
                .map(|(x, wi)| Complex64::new(0.0, w * x).exp() * *wi)
                .sum();
            (quad - exact).norm()
        };
        let coarse = err_at(8.0);
        let fine = err_at(16.0);
        assert!(coarse <= 5e-6, "coarse err = {coarse:.3e}");
        assert!(fine <= coarse / 10.0, "fine err = {fine:.3e} vs {coarse:.3e}");
        assert!(fine <= 2e-7, "fine err = {fine:.3e}");
    }

    #[test]
    fn non_convergence_is_reported() {
        // A discontinuous integrand with an absurdly tight tolerance and a
        // tiny budget must fail loudly.
        let spec = QuadratureSpec {
            rel_tol: 1e-15,
            abs_floor: 1e-18,
            osc_wavelength: None,
            max_panels: 24,
        };
        let r = integrate(
            |x| Complex64::new(if x > 0.123456 { 1.0 } else { 0.0 }, 0.0),
            0.0,
            1.0,
            &spec,
        );
        assert!(matches!(r, Err(WdmError::QuadratureNonConvergence { .. })));
    }
}
