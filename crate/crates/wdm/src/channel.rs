//! Mode-coupling matrices for every transmission scheme.
//!
//! The coupling coefficient between source mode `m` and reception mode `n`
//! is the double integral of the Green's function against the two basis
//! functions. All assemblies here reduce it to a single oscillatory
//! integral over the lag variable,
//!
//! ```text
//! H_nm = integral g_z(u, d) * c_nm(u) du,
//! c_nm(u) = integral psi_n*(r) phi_m(r - u) dr,
//! ```
//!
//! with `c_nm` in closed form. The wavenumber-domain route
//! `H_nm = (1/2pi) integral G_z * Psi_n* * Phi_m dkz` is kept as an
//! independent oracle: the two formulations must agree, and tests and the
//! acceptance suite hold them to that.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::assembly::{check_matrix_error, fourier_pair_integral, hinted_panel_count, FourierFactors};
use crate::basis::{element_cross_correlation, BasisFamily, DipoleLayout};
use crate::error::{Result, WdmError};
use crate::fields::{GreenKernel, WavenumberSpectrum};
use crate::quadrature::{integrate, QuadratureSpec, UniformGrid};
use crate::scenario::{floor_tol, Scenario};

/// Which transmission scheme a coupling matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Fourier source and receive bases (spatial-domain assembly).
    Wdm,
    /// Fourier bases assembled through the cached wavenumber spectrum.
    WdmWavenumber,
    /// Fourier source basis, channel-matched receive basis.
    EmMatchedFilter,
    /// Rect dipole bases on both sides.
    DipoleMimo,
    /// Channel-operator eigenfunction bases.
    Eigenmode,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Wdm => "wdm",
            Scheme::WdmWavenumber => "wdm-wavenumber",
            Scheme::EmMatchedFilter => "emmf",
            Scheme::DipoleMimo => "mimo",
            Scheme::Eigenmode => "eigenmode",
        }
    }
}

/// A mode-coupling matrix with its provenance.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    /// `entries[(n, m)]` couples source mode `m` into receive mode `n`.
    pub entries: DMatrix<Complex64>,
    pub scheme: Scheme,
    pub scenario: Scenario,
    pub quadrature: QuadratureSpec,
}

impl CouplingMatrix {
    /// Interference-to-signal power ratio
    /// `sum_{n != m} |H_nm|^2 / sum_n |H_nn|^2`.
    pub fn off_diagonal_ratio(&self) -> f64 {
        let mut diag = 0.0;
        let mut off = 0.0;
        for i in 0..self.entries.nrows() {
            for j in 0..self.entries.ncols() {
                let p = self.entries[(i, j)].norm_sqr();
                if i == j {
                    diag += p;
                } else {
                    off += p;
                }
            }
        }
        off / diag
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        let k = self.entries.nrows().min(self.entries.ncols());
        (0..k).map(|i| self.entries[(i, i)]).collect()
    }
}

/// Band limit on the mode count for a source of length `ls`:
/// `N_max = 2*floor(ls/lambda) + 1`.
pub fn max_modes(ls: f64, lambda: f64) -> usize {
    2 * floor_tol(ls / lambda) as usize + 1
}

/// Paraxial estimate of the mode count, forced odd:
/// `2*floor(Ls*Lr / (2*lambda*d)) + 1`.
pub fn paraxial_dof(scenario: &Scenario) -> usize {
    let eta = scenario.ls * scenario.lr / (scenario.lambda * scenario.d);
    2 * floor_tol(eta / 2.0) as usize + 1
}

/// WDM coupling matrix via the spatial-domain lag integral.
pub fn wdm_coupling(scenario: &Scenario, spec: &QuadratureSpec) -> Result<CouplingMatrix> {
    let kernel = GreenKernel::for_scenario(scenario);
    let rows = FourierFactors::from_family(&BasisFamily::fourier_receive(scenario))
        .expect("fourier family");
    let cols = FourierFactors::from_family(&BasisFamily::fourier_source(scenario))
        .expect("fourier family");
    let span = rows.half_width + cols.half_width;
    let sum = fourier_pair_integral(|u| kernel.eval(u), scenario.kappa(), &rows, &cols, spec)?;
    check_matrix_error(&sum, spec, -span, span)?;
    Ok(CouplingMatrix {
        entries: sum.value,
        scheme: Scheme::Wdm,
        scenario: *scenario,
        quadrature: *spec,
    })
}

/// Diagonal WDM couplings only (`H_nn`), one lag integral per mode.
pub fn wdm_coupling_diagonal(scenario: &Scenario, spec: &QuadratureSpec) -> Result<Vec<Complex64>> {
    let kernel = GreenKernel::for_scenario(scenario);
    let rx = BasisFamily::fourier_receive(scenario);
    let src = BasisFamily::fourier_source(scenario);
    let span = (scenario.lr + scenario.ls) / 2.0;
    (1..=scenario.n)
        .into_par_iter()
        .map(|n| {
            let a = rx.element(n)?;
            let b = src.element(n)?;
            let hint =
                2.0 * std::f64::consts::PI / (scenario.kappa() + a.freq.abs().max(b.freq.abs()));
            let r = integrate(
                |u| kernel.eval(u) * element_cross_correlation(&a, &b, u),
                -span,
                span,
                &spec.with_hint(hint),
            )?;
            Ok(r.value)
        })
        .collect()
}

/// WDM coupling matrix via the wavenumber-domain spectrum (oracle route).
///
/// The cached spectrum must resolve the receive sinc: its grid step may be
/// at most `2*pi/(10*Lr)`.
pub fn wdm_coupling_wavenumber(
    scenario: &Scenario,
    spectrum: &WavenumberSpectrum,
    spec: &QuadratureSpec,
) -> Result<CouplingMatrix> {
    let required = 2.0 * std::f64::consts::PI / (10.0 * scenario.lr);
    if spectrum.kz_step > required * (1.0 + 1e-9) {
        return Err(WdmError::DimensionMismatch(format!(
            "spectrum grid step {:.3e} rad/m too coarse for Lr = {} m (need <= {:.3e})",
            spectrum.kz_step, scenario.lr, required
        )));
    }
    let n = scenario.n;
    let rx = BasisFamily::fourier_receive(scenario);
    let src = BasisFamily::fourier_source(scenario);
    let rx_elements: Vec<_> = (1..=n).map(|i| rx.element(i).unwrap()).collect();
    let src_elements: Vec<_> = (1..=n).map(|i| src.element(i).unwrap()).collect();

    // Integrate on the spectrum's own sample grid (the interpolant is only
    // piecewise smooth, so quadrature between knots would be noise-bound).
    // A stride-2 pass provides the error estimate.
    let half = (1.1 * scenario.kappa()).min(spectrum.kz_half);
    let center = (spectrum.samples.len() - 1) / 2;
    let k_half = ((half / spectrum.kz_step).floor() as usize).min(center);
    let k_half = k_half - k_half % 2;
    let sum_over = |stride: usize| -> DMatrix<Complex64> {
        let len = 2 * (k_half / stride) + 1;
        let grid = UniformGrid {
            start: -((k_half / stride) as f64) * spectrum.kz_step * stride as f64,
            step: spectrum.kz_step * stride as f64,
            len,
        };
        let weights = grid.weights_gregory6();
        let chunk = len.div_ceil(64);
        let blocks: Vec<DMatrix<Complex64>> = (0..64usize)
            .into_par_iter()
            .map(|b| {
                let mut acc = DMatrix::<Complex64>::zeros(n, n);
                for i in (b * chunk)..((b + 1) * chunk).min(len) {
                    let kz = grid.point(i);
                    let sample = spectrum.samples[center - k_half + i * stride];
                    let g = sample * (weights[i] / (2.0 * std::f64::consts::PI));
                    let t_rx: Vec<Complex64> =
                        rx_elements.iter().map(|e| e.transform(kz).conj()).collect();
                    for (j, es) in src_elements.iter().enumerate() {
                        let col = g * es.transform(kz);
                        for (r, tr) in t_rx.iter().enumerate() {
                            acc[(r, j)] += tr * col;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut total = DMatrix::<Complex64>::zeros(n, n);
        for b in blocks {
            total += b;
        }
        total
    };
    let fine = sum_over(1);
    let coarse = sum_over(2);
    let scale = fine.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let target = (spec.rel_tol * scale).max(spec.abs_floor);
    let worst = (0..n * n)
        .map(|i| (fine[i] - coarse[i]).norm())
        .fold(0.0f64, f64::max);
    if worst > target {
        return Err(WdmError::QuadratureNonConvergence {
            a: -half,
            b: half,
            estimate: worst,
            target,
            panels: 2 * k_half + 1,
        });
    }
    Ok(CouplingMatrix {
        entries: fine,
        scheme: Scheme::WdmWavenumber,
        scenario: *scenario,
        quadrature: *spec,
    })
}

/// Large-receiver limit of the diagonal couplings:
/// `H_nn -> sqrt(Ls) * G_z(kz_n, d)`.
pub fn asymptotic_diagonal(scenario: &Scenario, spectrum: &WavenumberSpectrum) -> Vec<Complex64> {
    (1..=scenario.n)
        .map(|m| spectrum.eval(scenario.mode_wavenumber(m)) * scenario.ls.sqrt())
        .collect()
}

/// Number of communication modes whose diagonal coupling power sits within
/// 3 dB of the spectrum peak: count `n` with
/// `|H_nn|^2 / Ls >= |G_z(0, d)|^2 / 2`, forced odd by walking symmetric
/// pairs out from the center mode (a tie at the threshold counts in).
pub fn significant_mode_count(scenario: &Scenario, spec: &QuadratureSpec) -> Result<usize> {
    let diag = wdm_coupling_diagonal(scenario, spec)?;
    let spectrum = WavenumberSpectrum::build(scenario.d, scenario.kappa(), scenario.lambda)?;
    let threshold = 0.5 * spectrum.peak().powi(2) * scenario.ls;
    let center = (scenario.n - 1) / 2;
    let passes = |idx: usize| diag[idx].norm_sqr() >= threshold;
    if !passes(center) {
        return Ok(1);
    }
    let mut arm = 0;
    while center >= arm + 1
        && center + arm + 1 < scenario.n
        && passes(center - arm - 1)
        && passes(center + arm + 1)
    {
        arm += 1;
    }
    Ok(2 * arm + 1)
}

/// A basis family known only through samples on a uniform grid.
#[derive(Debug, Clone)]
pub struct SampledBasis {
    pub grid: UniformGrid,
    /// `values[(q, m)]` is element `m+1` at grid point `q`.
    pub values: DMatrix<Complex64>,
}

impl SampledBasis {
    /// Quadrature weights matching the grid.
    pub fn weights(&self) -> Vec<f64> {
        self.grid.weights_gregory6()
    }

    /// Squared norms of the sampled elements.
    pub fn norms_sqr(&self) -> Vec<f64> {
        let w = self.weights();
        (0..self.values.ncols())
            .map(|m| {
                self.values
                    .column(m)
                    .iter()
                    .zip(&w)
                    .map(|(v, wi)| wi * v.norm_sqr())
                    .sum()
            })
            .collect()
    }

    /// Gram matrix `B_nm = <e_n, e_m>` under the grid weights.
    pub fn gram(&self) -> DMatrix<Complex64> {
        let w = self.weights();
        let mut x = self.values.clone();
        for q in 0..x.nrows() {
            let s = Complex64::from(w[q].sqrt());
            for m in 0..x.ncols() {
                x[(q, m)] *= s;
            }
        }
        x.adjoint() * x
    }
}

/// Sample spacing used for receive-side function grids: fine enough that
/// band-limited fields (rates up to `2*kappa`) keep eight samples per
/// oscillation under the Gregory-corrected trapezoid.
pub(crate) fn receive_grid(scenario: &Scenario) -> UniformGrid {
    UniformGrid::span(
        -scenario.lr / 2.0,
        scenario.lr / 2.0,
        scenario.lambda / 16.0,
    )
}

/// Channel response at `r_z` to source mode `m`:
/// `theta_m(r_z) = integral g_z(r_z - s, d) phi_m(s) ds`.
pub fn emmf_receive_element(
    m: usize,
    r_z: f64,
    scenario: &Scenario,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    let kernel = GreenKernel::for_scenario(scenario);
    let src = BasisFamily::fourier_source(scenario);
    let e = src.element(m)?;
    let hint = 2.0 * std::f64::consts::PI / (scenario.kappa() + e.freq.abs());
    let r = integrate(
        |s| kernel.eval(r_z - s) * e.eval(s),
        -scenario.ls / 2.0,
        scenario.ls / 2.0,
        &spec.with_hint(hint),
    )?;
    Ok(r.value)
}

/// All matched-filter receive functions sampled on the receive grid.
///
/// The inner source integral shares its Green's-function evaluations
/// across modes, so the cost is one kernel sweep per receive point.
pub fn emmf_receive_family(scenario: &Scenario) -> Result<SampledBasis> {
    let kernel = GreenKernel::for_scenario(scenario);
    let grid = receive_grid(scenario);
    let n = scenario.n;
    let src = BasisFamily::fourier_source(scenario);

    // Gauss-Legendre panels over the source segment.
    let panels = hinted_panel_count(
        -scenario.ls / 2.0,
        scenario.ls / 2.0,
        scenario.lambda / 2.0,
    );
    let (gx, gw) = crate::quadrature::gauss_legendre(8);
    let width = scenario.ls / panels as f64;
    let mut s_nodes = Vec::with_capacity(panels * gx.len());
    let mut s_weights = Vec::with_capacity(panels * gx.len());
    for p in 0..panels {
        let a = -scenario.ls / 2.0 + p as f64 * width;
        let c = a + 0.5 * width;
        for (x, w) in gx.iter().zip(gw.iter()) {
            s_nodes.push(c + 0.5 * width * x);
            s_weights.push(0.5 * width * w);
        }
    }
    // phi[(k, m)] = w_k * phi_m(s_k)
    let phi = DMatrix::from_fn(s_nodes.len(), n, |k, m| {
        src.element(m + 1).unwrap().eval(s_nodes[k]) * s_weights[k]
    });

    let rows: Vec<Vec<Complex64>> = (0..grid.len)
        .into_par_iter()
        .map(|q| {
            let r = grid.point(q);
            let g: Vec<Complex64> = s_nodes.iter().map(|&s| kernel.eval(r - s)).collect();
            (0..n)
                .map(|m| {
                    g.iter()
                        .zip(phi.column(m).iter())
                        .map(|(gk, pk)| gk * pk)
                        .sum()
                })
                .collect()
        })
        .collect();
    let values = DMatrix::from_fn(grid.len, n, |q, m| rows[q][m]);
    Ok(SampledBasis { grid, values })
}

/// EM matched-filter coupling matrix: the Gram of the channel responses,
/// `H_nm = integral theta_n*(r) theta_m(r) dr`. Hermitian positive
/// semidefinite by construction.
pub fn emmf_coupling(scenario: &Scenario, family: &SampledBasis) -> Result<CouplingMatrix> {
    if family.values.ncols() != scenario.n {
        return Err(WdmError::DimensionMismatch(format!(
            "family has {} modes, scenario {}",
            family.values.ncols(),
            scenario.n
        )));
    }
    Ok(CouplingMatrix {
        entries: family.gram(),
        scheme: Scheme::EmMatchedFilter,
        scenario: *scenario,
        quadrature: QuadratureSpec::channel(),
    })
}

/// Dipole-MIMO coupling matrix (`N_r x N_s`), one short lag integral per
/// entry.
pub fn mimo_coupling(
    scenario: &Scenario,
    source: &DipoleLayout,
    receive: &DipoleLayout,
    spec: &QuadratureSpec,
) -> Result<CouplingMatrix> {
    let kernel = GreenKernel::for_scenario(scenario);
    let src = BasisFamily::DipoleSource(*source);
    let rx = BasisFamily::DipoleReceive(*receive);
    let hint = 2.0 * std::f64::consts::PI / scenario.kappa();
    let entries: Vec<Complex64> = (0..receive.count * source.count)
        .into_par_iter()
        .map(|idx| {
            let n = idx % receive.count;
            let m = idx / receive.count;
            let a = rx.element(n + 1)?;
            let b = src.element(m + 1)?;
            let center = a.center - b.center;
            let span = a.half_width + b.half_width;
            let r = integrate(
                |u| kernel.eval(u) * element_cross_correlation(&a, &b, u),
                center - span,
                center + span,
                &spec.with_hint(hint),
            )?;
            Ok(r.value)
        })
        .collect::<Result<_>>()?;
    Ok(CouplingMatrix {
        entries: DMatrix::from_vec(receive.count, source.count, entries),
        scheme: Scheme::DipoleMimo,
        scenario: *scenario,
        quadrature: *spec,
    })
}

/// Receive dipole layout with the same number of RF chains as WDM uses
/// (`N_max` elements spread over the receiver).
pub fn matched_receive_layout(scenario: &Scenario, delta: f64) -> Result<DipoleLayout> {
    let chains = scenario.n_max();
    let spacing = scenario.lr / (chains as f64 - 1.0);
    DipoleLayout::with_count(scenario.lr, delta, spacing, chains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{baseline_config, validate};
    use approx::assert_relative_eq;

    fn scenario(n: usize, lr: f64, d: f64) -> Scenario {
        let mut map = baseline_config();
        map.insert("N".into(), n.to_string());
        map.insert("Lr".into(), lr.to_string());
        map.insert("d".into(), d.to_string());
        validate(&map).unwrap()
    }

    #[test]
    fn mode_count_limits() {
        assert_eq!(max_modes(0.2, 0.01), 41);
        assert_eq!(max_modes(0.5, 0.01), 101);
        assert_eq!(max_modes(0.2, 0.001), 401);
        assert_eq!(max_modes(0.005, 0.01), 1);
        let s = scenario(41, 1.0, 5.0);
        assert_eq!(paraxial_dof(&s), 5);
        let s = scenario(41, 5.0, 5.0);
        assert_eq!(paraxial_dof(&s), 21);
    }

    #[test]
    fn coupling_routes_agree() {
        let s = scenario(5, 1.0, 5.0);
        let spec = QuadratureSpec::channel();
        let spatial = wdm_coupling(&s, &spec).unwrap();
        let spectrum = WavenumberSpectrum::for_scenario(&s).unwrap();
        let wavenumber = wdm_coupling_wavenumber(&s, &spectrum, &spec).unwrap();
        let gap = (&spatial.entries - &wavenumber.entries).norm() / spatial.entries.norm();
        assert!(gap < 1e-6, "relative Frobenius gap {gap:.3e}");
    }

    #[test]
    fn diagonal_helper_matches_full_matrix() {
        let s = scenario(5, 1.0, 5.0);
        let spec = QuadratureSpec::channel();
        let full = wdm_coupling(&s, &spec).unwrap();
        let diag = wdm_coupling_diagonal(&s, &spec).unwrap();
        for (i, d) in diag.iter().enumerate() {
            assert!((full.entries[(i, i)] - d).norm() < 1e-10 * d.norm());
        }
    }

    #[test]
    fn zero_spectrum_gives_zero_matrix() {
        let s = scenario(5, 1.0, 5.0);
        let mut spectrum = WavenumberSpectrum::for_scenario(&s).unwrap();
        spectrum.samples.iter_mut().for_each(|v| *v = Complex64::ZERO);
        let h = wdm_coupling_wavenumber(&s, &spectrum, &QuadratureSpec::channel()).unwrap();
        assert_eq!(h.entries.iter().map(|v| v.norm()).sum::<f64>(), 0.0);
    }

    #[test]
    fn interference_shrinks_with_receiver_and_matches_asymptote() {
        // Corollary-1 behavior at a desk scale: d = 0.5 m so Lr = 10*d is
        // affordable, N = 5 in-band modes.
        let spec = QuadratureSpec::channel();
        let mut last = f64::MAX;
        for lr in [1.0, 2.0, 5.0] {
            let s = scenario(5, lr, 0.5);
            let h = wdm_coupling(&s, &spec).unwrap();
            let ratio = h.off_diagonal_ratio();
            assert!(ratio < last, "Lr = {lr}: {ratio} vs {last}");
            last = ratio;
        }
        let s = scenario(5, 5.0, 0.5);
        let h = wdm_coupling(&s, &spec).unwrap();
        let spectrum = WavenumberSpectrum::for_scenario(&s).unwrap();
        let limit = asymptotic_diagonal(&s, &spectrum);
        for (i, l) in limit.iter().enumerate() {
            let rel = (h.entries[(i, i)] - l).norm() / l.norm();
            assert!(rel < 0.05, "mode {i}: {rel:.3}");
        }
    }

    #[test]
    fn far_field_keeps_only_center_coupling() {
        // Needs d well beyond the receiver's Fraunhofer distance 2*Lr^2/lambda
        // (200 m here) for the Fresnel leakage to die off.
        let s = scenario(5, 1.0, 1e4);
        let h = wdm_coupling(&s, &QuadratureSpec::channel()).unwrap();
        let center = h.entries[(2, 2)].norm();
        for i in 0..5 {
            for j in 0..5 {
                if (i, j) != (2, 2) {
                    assert!(
                        h.entries[(i, j)].norm() <= 1e-3 * center,
                        "({i},{j}): {:.3e} vs center {center:.3e}",
                        h.entries[(i, j)].norm()
                    );
                }
            }
        }
        // And the center matches the planar-wavefront closed form
        // Lr * sqrt(Ls) * exp(i kappa d) / (4 pi d).
        let expected = crate::fields::farfield_green(s.d, s.kappa()).unwrap()
            * Complex64::from(s.lr * s.ls.sqrt());
        // Residual Fresnel phase across the apertures leaves a ~1e-2 gap.
        assert!((h.entries[(2, 2)] - expected).norm() < 1e-2 * expected.norm());
        assert_relative_eq!(
            h.entries[(2, 2)].norm(),
            expected.norm(),
            max_relative = 2e-3
        );
    }

    #[test]
    fn significant_mode_counts_match_reference_geometries() {
        let spec = QuadratureSpec::channel();
        for (d, lr, expected) in [(5.0, 1.0, 3usize), (10.0, 1.0, 1), (10.0, 5.0, 9)] {
            let s = scenario(41, lr, d);
            let nbar = significant_mode_count(&s, &spec).unwrap();
            assert_eq!(nbar, expected, "d = {d}, Lr = {lr}");
        }
    }

    #[test]
    fn paraxial_approximates_count_when_distance_dominates() {
        let spec = QuadratureSpec::channel();
        for (d, lr) in [(5.0, 1.0), (10.0, 1.0), (20.0, 1.0)] {
            let s = scenario(41, lr, d);
            let nbar = significant_mode_count(&s, &spec).unwrap() as i64;
            let para = paraxial_dof(&s) as i64;
            assert!(
                (nbar - para).abs() <= 2,
                "d = {d}, Lr = {lr}: nbar {nbar} vs paraxial {para}"
            );
        }
    }

    #[test]
    fn emmf_element_is_linear() {
        let s = scenario(3, 1.0, 5.0);
        let spec = QuadratureSpec::channel();
        let r_z = 0.21;
        let t1 = emmf_receive_element(1, r_z, &s, &spec).unwrap();
        let t2 = emmf_receive_element(2, r_z, &s, &spec).unwrap();
        // Response to (phi_1 + phi_2)/sqrt(2).
        let kernel = GreenKernel::for_scenario(&s);
        let src = BasisFamily::fourier_source(&s);
        let combined = integrate(
            |x| {
                kernel.eval(r_z - x)
                    * (src.eval(1, x).unwrap() + src.eval(2, x).unwrap())
                    / Complex64::from(2.0f64.sqrt())
            },
            -s.ls / 2.0,
            s.ls / 2.0,
            &spec.with_hint(s.lambda / 2.0),
        )
        .unwrap()
        .value;
        assert!(
            (combined - (t1 + t2) / Complex64::from(2.0f64.sqrt())).norm() < 1e-10 * t1.norm()
        );
    }

    #[test]
    fn emmf_family_matches_pointwise_elements() {
        let s = scenario(3, 0.4, 5.0);
        let family = emmf_receive_family(&s).unwrap();
        let spec = QuadratureSpec::channel();
        for (q, m) in [(0usize, 1usize), (17, 2), (family.grid.len - 1, 3)] {
            let direct = emmf_receive_element(m, family.grid.point(q), &s, &spec).unwrap();
            let sampled = family.values[(q, m - 1)];
            assert!(
                (direct - sampled).norm() <= 1e-8 * direct.norm().max(1e-12),
                "q = {q}, m = {m}"
            );
        }
    }

    #[test]
    fn emmf_coupling_is_hermitian_psd_with_consistent_trace() {
        let s = scenario(3, 1.0, 5.0);
        let family = emmf_receive_family(&s).unwrap();
        let h = emmf_coupling(&s, &family).unwrap();
        let scale = h.entries.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        for i in 0..3 {
            for j in 0..3 {
                assert!((h.entries[(i, j)] - h.entries[(j, i)].conj()).norm() < 1e-10 * scale);
            }
        }
        let eigen = nalgebra::SymmetricEigen::new(h.entries.clone());
        let trace: f64 = eigen.eigenvalues.iter().sum();
        for v in eigen.eigenvalues.iter() {
            assert!(*v >= -1e-10 * trace);
        }
        let norms: f64 = family.norms_sqr().iter().sum();
        let trace_direct: f64 = (0..3).map(|i| h.entries[(i, i)].re).sum();
        assert_relative_eq!(norms, trace_direct, max_relative = 1e-10);
    }

    #[test]
    fn emmf_receives_source_spectrum_undistorted_when_receiver_is_long() {
        // Transform of the received response at the mode wavenumber vs the
        // free-propagation product G_z * Phi_m: nearly exact at Lr = 5 m,
        // heavily distorted at Lr = 0.4 m.
        let distortion = |lr: f64| -> f64 {
            let s = scenario(3, lr, 5.0);
            let family = emmf_receive_family(&s).unwrap();
            let spectrum = WavenumberSpectrum::for_scenario(&s).unwrap();
            let weights = family.weights();
            let src = BasisFamily::fourier_source(&s);
            let mut worst = 0.0f64;
            for m in 1..=3 {
                let kz = s.mode_wavenumber(m);
                let transform: Complex64 = family
                    .values
                    .column(m - 1)
                    .iter()
                    .enumerate()
                    .map(|(q, v)| {
                        v * weights[q] * Complex64::from_polar(1.0, -kz * family.grid.point(q))
                    })
                    .sum();
                let ideal = spectrum.eval(kz) * src.transform(m, kz).unwrap();
                worst = worst.max((transform - ideal).norm() / ideal.norm());
            }
            worst
        };
        let long = distortion(5.0);
        let short = distortion(0.4);
        assert!(long < 0.05, "long-receiver distortion {long:.3}");
        assert!(short > 5.0 * long, "short {short:.3} vs long {long:.3}");
    }

    #[test]
    fn mimo_coupling_point_sample_limit() {
        let s = scenario(3, 1.0, 5.0);
        let spec = QuadratureSpec::channel();
        let delta = 1e-4;
        let src = DipoleLayout::with_count(s.ls, delta, 0.1, 3).unwrap();
        let rx = DipoleLayout::with_count(s.lr, delta, 0.5, 3).unwrap();
        let h = mimo_coupling(&s, &src, &rx, &spec).unwrap();
        let kernel = GreenKernel::for_scenario(&s);
        let bound = delta.powf(1.5) * kernel.magnitude(0.0);
        for n in 0..3 {
            for m in 0..3 {
                let point = kernel.eval(rx.center(n + 1) - src.center(m + 1));
                let scaled = h.entries[(n, m)] / Complex64::from(delta.powf(1.5));
                assert!(
                    (scaled - point).norm() < 1e-3 * point.norm(),
                    "({n},{m}): {scaled} vs {point}"
                );
                assert!(h.entries[(n, m)].norm() <= bound * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn mimo_far_field_is_rank_one() {
        let s = scenario(5, 1.0, 1e4);
        let spec = QuadratureSpec::channel();
        let delta = s.lambda / 2.0;
        let src = DipoleLayout::fill(s.ls, delta, delta).unwrap();
        let rx = matched_receive_layout(&s, delta).unwrap();
        assert_eq!(rx.count, s.n_max());
        let h = mimo_coupling(&s, &src, &rx, &spec).unwrap();
        let gram = h.entries.adjoint() * &h.entries;
        let mut eigen: Vec<f64> = nalgebra::SymmetricEigen::new(gram)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eigen.sort_by(|a, b| b.total_cmp(a));
        let s2_over_s1 = (eigen[1].max(0.0) / eigen[0]).sqrt();
        assert!(s2_over_s1 <= 1e-2, "sigma2/sigma1 = {s2_over_s1:.3e}");
    }
}
