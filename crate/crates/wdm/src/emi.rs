//! Electromagnetic interference: correlation, density, covariance.
//!
//! The EMI field is a superposition of far-field plane waves with a
//! normalized power angular density `f(theta, phi)`. Along the receiver
//! axis this induces a spatial correlation
//!
//! ```text
//! rho(z) = double integral f(theta, phi) exp(-i*kappa*cos(theta)*z) dtheta dphi
//! ```
//!
//! Uniform coverage of the whole sphere (isotropic EMI) gives
//! `rho(z) = sinc(2 z / lambda)`, which vanishes at half-wavelength
//! multiples; restricting the elevation support narrows the wavenumber
//! density and stretches the correlation. Projecting the noise field onto
//! a receive basis yields the covariance matrix `R`, computed here by the
//! same single-integral reduction used for the coupling coefficients:
//! `R_nm = integral rho(u) * c_nm(u) du` with `c_nm` the receive-basis
//! cross-correlation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::assembly::{check_matrix_error, fourier_pair_integral, FourierFactors};
use crate::basis::{BasisFamily, DipoleLayout};
use crate::error::{Result, WdmError};
use crate::fields::sinc;
use crate::quadrature::{integrate, QuadratureSpec, UniformGrid};
use crate::scenario::Scenario;

/// Normalized power angular density of the EMI field.
#[derive(Debug, Clone, PartialEq)]
pub enum AngularDensity {
    /// Uniform over the full sphere: `f = sin(theta)/(4*pi)`.
    Isotropic,
    /// Uniform over an elevation band, all azimuths:
    /// `f = sin(theta) / (2*pi*(cos(lo) - cos(hi)))` for `theta` in `[lo, hi)`.
    ElevationBand { theta_min: f64, theta_max: f64 },
    /// Tabulated plane-wave directions `(theta, phi, weight)`; the weights
    /// are trapezoid masses and must sum to one.
    Custom(Vec<(f64, f64, f64)>),
}

impl AngularDensity {
    /// The non-isotropic reference case: elevations in `[pi/3, 2*pi/3)`.
    pub fn band_limited_elevation() -> Self {
        Self::ElevationBand {
            theta_min: std::f64::consts::PI / 3.0,
            theta_max: 2.0 * std::f64::consts::PI / 3.0,
        }
    }

    /// Check the unit-mass normalization (1e-6 tolerance).
    pub fn verify_normalized(&self) -> Result<()> {
        let mass = match self {
            Self::Isotropic => 1.0,
            Self::ElevationBand {
                theta_min,
                theta_max,
            } => {
                if !(theta_min < theta_max
                    && *theta_min >= 0.0
                    && *theta_max <= std::f64::consts::PI)
                {
                    return Err(WdmError::UnnormalizedDensity(f64::NAN));
                }
                1.0
            }
            Self::Custom(table) => table.iter().map(|&(_, _, w)| w).sum(),
        };
        if (mass - 1.0).abs() > 1e-6 {
            return Err(WdmError::UnnormalizedDensity(mass));
        }
        Ok(())
    }

    /// Support of the direction cosine `cos(theta)`, when closed-form.
    fn cos_interval(&self) -> Option<(f64, f64)> {
        match self {
            Self::Isotropic => Some((-1.0, 1.0)),
            Self::ElevationBand {
                theta_min,
                theta_max,
            } => Some((theta_max.cos(), theta_min.cos())),
            Self::Custom(_) => None,
        }
    }
}

/// Spatial correlation `rho(z)` of the EMI field at axial lag `z`.
///
/// Real for direction densities symmetric in `cos(theta)` (both built-in
/// kinds); complex in general, with `rho(-z) = conj(rho(z))`.
pub fn correlation(z: f64, density: &AngularDensity, lambda: f64) -> Complex64 {
    let kappa = 2.0 * std::f64::consts::PI / lambda;
    match density {
        AngularDensity::Isotropic => Complex64::from(sinc(2.0 * z / lambda)),
        AngularDensity::ElevationBand { .. } => {
            let (c_lo, c_hi) = density.cos_interval().expect("closed form");
            let mid = 0.5 * (c_lo + c_hi);
            let width = c_hi - c_lo;
            Complex64::from_polar(
                sinc(kappa * z * width / (2.0 * std::f64::consts::PI)),
                -kappa * z * mid,
            )
        }
        AngularDensity::Custom(table) => table
            .iter()
            .map(|&(theta, _phi, w)| Complex64::from_polar(w, -kappa * theta.cos() * z))
            .sum(),
    }
}

/// Wavenumber power density `S_z(kappa_z)`, the Fourier transform of
/// `rho(z)`.
///
/// Closed-form rectangles for the built-in densities (e.g. the isotropic
/// case is `(lambda/2) * rect(kappa_z / (2*kappa))`); a windowed numerical
/// transform for tabulated densities.
pub fn psd(kappa_z: f64, density: &AngularDensity, lambda: f64) -> f64 {
    let kappa = 2.0 * std::f64::consts::PI / lambda;
    match density.cos_interval() {
        Some((c_lo, c_hi)) => {
            let c = -kappa_z / kappa;
            if c >= c_lo && c <= c_hi {
                2.0 * std::f64::consts::PI / (kappa * (c_hi - c_lo))
            } else {
                0.0
            }
        }
        None => {
            // Tabulated density: transform rho over a finite window.
            let window = 200.0 * lambda;
            let spec = QuadratureSpec::sweep().with_hint(lambda / 2.0);
            integrate(
                |z| correlation(z, density, lambda) * Complex64::from_polar(1.0, -kappa_z * z),
                -window,
                window,
                &spec,
            )
            .map(|r| r.value.re)
            .unwrap_or(f64::NAN)
        }
    }
}

/// Covariance of the EMI samples seen through any analytic basis family:
/// `R_nm = double integral rho(x - x') a_n*(x) a_m(x') dx dx'`, reduced to
/// `integral rho(u) c_nm(u) du`.
pub fn basis_noise_covariance(
    family: &BasisFamily,
    density: &AngularDensity,
    lambda: f64,
    spec: &QuadratureSpec,
) -> Result<DMatrix<Complex64>> {
    density.verify_normalized()?;
    let kappa = 2.0 * std::f64::consts::PI / lambda;
    if let Some(factors) = FourierFactors::from_family(family) {
        let span = 2.0 * factors.half_width;
        let sum = fourier_pair_integral(
            |u| correlation(u, density, lambda),
            kappa,
            &factors,
            &factors,
            spec,
        )?;
        check_matrix_error(&sum, spec, -span, span)?;
        return Ok(sum.value);
    }
    // Dipole families: per-entry integrals over short overlaps.
    let n = family.count();
    let mut r = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a = family.element(i + 1)?;
            let b = family.element(j + 1)?;
            let center = a.center - b.center;
            let span = a.half_width + b.half_width;
            let hint = 2.0 * std::f64::consts::PI / (kappa + a.freq.abs() + b.freq.abs());
            let value = integrate(
                |u| {
                    correlation(u, density, lambda)
                        * crate::basis::element_cross_correlation(&a, &b, u)
                },
                center - span,
                center + span,
                &spec.with_hint(hint),
            )?;
            r[(i, j)] = value.value;
        }
    }
    Ok(r)
}

/// EMI covariance for the Fourier receive family (spatial-domain route).
pub fn wdm_covariance(
    scenario: &Scenario,
    density: &AngularDensity,
    spec: &QuadratureSpec,
) -> Result<DMatrix<Complex64>> {
    basis_noise_covariance(
        &BasisFamily::fourier_receive(scenario),
        density,
        scenario.lambda,
        spec,
    )
}

/// Independent wavenumber-domain route for the same covariance:
/// `R_nm = (1/2pi) integral S_z(kz) Psi_n*(kz) Psi_m(kz) dkz`.
pub fn wdm_covariance_wavenumber(
    scenario: &Scenario,
    density: &AngularDensity,
    spec: &QuadratureSpec,
) -> Result<DMatrix<Complex64>> {
    density.verify_normalized()?;
    let kappa = scenario.kappa();
    let family = BasisFamily::fourier_receive(scenario);
    let n = scenario.n;
    let (kz_lo, kz_hi) = match density.cos_interval() {
        Some((c_lo, c_hi)) => (-kappa * c_hi, -kappa * c_lo),
        None => (-kappa, kappa),
    };
    // Two sinc factors with null spacing 2*pi/Lr each.
    let hint = std::f64::consts::PI / scenario.lr;
    let n_panels = crate::assembly::hinted_panel_count(kz_lo, kz_hi, hint);
    let elements: Vec<_> = (1..=n).map(|m| family.element(m).unwrap()).collect();
    let sum = crate::assembly::panel_matrix_sum(kz_lo, kz_hi, n_panels, n, n, |kz, s, acc| {
        let sz = psd(kz, density, scenario.lambda);
        if sz == 0.0 {
            return;
        }
        let t: Vec<Complex64> = elements.iter().map(|e| e.transform(kz)).collect();
        let scale = Complex64::from(s * sz / (2.0 * std::f64::consts::PI));
        for j in 0..n {
            let col = scale * t[j];
            for i in 0..n {
                acc[(i, j)] += t[i].conj() * col;
            }
        }
    });
    check_matrix_error(&sum, spec, kz_lo, kz_hi)?;
    Ok(sum.value)
}

/// EMI covariance for a dipole receive layout.
pub fn mimo_covariance(
    scenario: &Scenario,
    layout: &DipoleLayout,
    density: &AngularDensity,
    spec: &QuadratureSpec,
) -> Result<DMatrix<Complex64>> {
    basis_noise_covariance(
        &BasisFamily::DipoleReceive(*layout),
        density,
        scenario.lambda,
        spec,
    )
}

/// EMI covariance of numerically sampled receive functions.
///
/// `samples` holds the family values column-wise on the uniform grid. The
/// quadratic form uses Gregory-corrected trapezoid weights and applies the
/// Toeplitz correlation kernel `rho(r_q - r_q')` through FFT convolution,
/// so large grids stay affordable.
pub fn sampled_covariance(
    grid: &UniformGrid,
    samples: &DMatrix<Complex64>,
    density: &AngularDensity,
    lambda: f64,
) -> Result<DMatrix<Complex64>> {
    density.verify_normalized()?;
    let q = grid.len;
    if samples.nrows() != q {
        return Err(WdmError::DimensionMismatch(format!(
            "samples have {} rows, grid has {} points",
            samples.nrows(),
            q
        )));
    }
    let n = samples.ncols();
    let weights = grid.weights_gregory6();

    let m = (2 * q).next_power_of_two();
    let mut kernel = vec![Complex64::ZERO; m];
    for k in 0..q {
        kernel[k] = correlation(k as f64 * grid.step, density, lambda);
    }
    for k in 1..q {
        kernel[m - k] = correlation(-(k as f64) * grid.step, density, lambda);
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    let ifft = planner.plan_fft_inverse(m);
    fft.process(&mut kernel);

    // X = diag(w) * samples; Y = P * X via circulant embedding.
    let mut x = DMatrix::<Complex64>::zeros(q, n);
    for j in 0..n {
        for i in 0..q {
            x[(i, j)] = samples[(i, j)] * weights[i];
        }
    }
    let mut y = DMatrix::<Complex64>::zeros(q, n);
    let mut buf = vec![Complex64::ZERO; m];
    for j in 0..n {
        buf.iter_mut().for_each(|v| *v = Complex64::ZERO);
        for i in 0..q {
            buf[i] = x[(i, j)];
        }
        fft.process(&mut buf);
        for (v, k) in buf.iter_mut().zip(kernel.iter()) {
            *v *= *k;
        }
        ifft.process(&mut buf);
        let scale = 1.0 / m as f64;
        for i in 0..q {
            y[(i, j)] = buf[i] * scale;
        }
    }
    Ok(x.adjoint() * y)
}

/// Noise model: angular density plus the EMI and hardware scales.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub density: AngularDensity,
    /// EMI power density scale [V^2/m^2].
    pub sigma2_emi: f64,
    /// Per-chain hardware noise variance [V^2].
    pub sigma2_hdw: f64,
}

/// Total noise covariance with regularization metadata.
#[derive(Debug, Clone)]
pub struct CovarianceReport {
    pub matrix: DMatrix<Complex64>,
    /// Whether the eigenvalue floor was applied.
    pub floor_applied: bool,
    pub floor_value: f64,
}

impl NoiseModel {
    pub fn isotropic(scenario: &Scenario) -> Self {
        Self {
            density: AngularDensity::Isotropic,
            sigma2_emi: scenario.sigma2_emi,
            sigma2_hdw: scenario.sigma2_hdw,
        }
    }

    /// `C = sigma2_emi * R + sigma2_hdw * I`.
    ///
    /// With no hardware noise the EMI covariance can be numerically
    /// singular; when its condition number exceeds 1e12 an eigenvalue floor
    /// of `1e-12 * trace(C) / N` is applied so whitening stays invertible.
    /// The floor is reported, never silent.
    pub fn covariance(&self, r: &DMatrix<Complex64>) -> Result<CovarianceReport> {
        if r.nrows() != r.ncols() {
            return Err(WdmError::DimensionMismatch(format!(
                "covariance must be square, got {}x{}",
                r.nrows(),
                r.ncols()
            )));
        }
        let n = r.nrows();
        let mut c = r * Complex64::from(self.sigma2_emi);
        for i in 0..n {
            c[(i, i)] += Complex64::from(self.sigma2_hdw);
        }
        if self.sigma2_hdw > 0.0 {
            return Ok(CovarianceReport {
                matrix: c,
                floor_applied: false,
                floor_value: 0.0,
            });
        }
        let eigen = nalgebra::SymmetricEigen::new(c.clone());
        let max = eigen.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
        let min = eigen.eigenvalues.iter().copied().fold(f64::MAX, f64::min);
        if max <= 0.0 {
            return Err(WdmError::NonPositiveDefiniteCovariance);
        }
        if min > max * 1e-12 {
            return Ok(CovarianceReport {
                matrix: c,
                floor_applied: false,
                floor_value: 0.0,
            });
        }
        let trace: f64 = eigen.eigenvalues.iter().sum();
        let floor = 1e-12 * trace / n as f64;
        let clamped = eigen.eigenvalues.map(|v| v.max(floor));
        let v = &eigen.eigenvectors;
        let matrix = v * DMatrix::from_diagonal(&clamped.map(Complex64::from)) * v.adjoint();
        Ok(CovarianceReport {
            matrix,
            floor_applied: true,
            floor_value: floor,
        })
    }
}

/// Eigenvalues of a covariance matrix, descending, normalized to 0 dB.
pub fn covariance_spectrum(r: &DMatrix<Complex64>) -> Vec<f64> {
    let eigen = nalgebra::SymmetricEigen::new(r.clone());
    let mut values: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let top = values[0].max(f64::MIN_POSITIVE);
    values
        .into_iter()
        .map(|v| 10.0 * (v.max(1e-300) / top).log10())
        .collect()
}
