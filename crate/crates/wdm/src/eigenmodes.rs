//! Optimal communication modes via the channel-operator eigenproblem.
//!
//! The reference transmission scheme uses the eigenfunctions of
//!
//! ```text
//! gamma_n phi_n(s) = integral K_s(s, s') phi_n(s') ds',
//! K_s(s, s') = integral g_z*(r - s, d) g_z(r - s', d) dr,
//! ```
//!
//! with receive functions `psi_n(r) = integral g_z(r - s, d) phi_n(s) ds`.
//! The solver is a Nystrom discretization on Gauss-Legendre nodes with the
//! symmetrization `A = D^(1/2) K D^(1/2)` (`D` the weight diagonal), which
//! keeps the problem Hermitian and makes the discrete eigenfunctions
//! orthonormal under the quadrature weights. The kernel matrix itself is
//! assembled as `G^H W G` from samples of the Green's function on a
//! receive-side panel grid, so it is positive semidefinite by construction
//! and the discrete identity `||psi_n||^2 = gamma_n` holds to solver
//! roundoff.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{receive_grid, SampledBasis};
use crate::emi::NoiseModel;
use crate::error::{Result, WdmError};
use crate::fields::GreenKernel;
use crate::quadrature::{gauss_legendre, integrate, QuadratureSpec};
use crate::scenario::Scenario;
use crate::transceiver::{svd_capacity, whiten, LinkResult, PowerPolicy};

/// Channel-operator kernel `K_s(s, s')` by direct quadrature over the
/// receive segment. Hermitian: `K(s, s') = K(s', s)*`.
pub fn kernel(s: f64, s_prime: f64, scenario: &Scenario, spec: &QuadratureSpec) -> Result<Complex64> {
    let green = GreenKernel::for_scenario(scenario);
    // Relative phase rate between the two factors is at most
    // kappa * |s - s'| / d, but stay conservative.
    let hint = scenario.lambda / 2.0;
    let r = integrate(
        |r| green.eval(r - s).conj() * green.eval(r - s_prime),
        -scenario.lr / 2.0,
        scenario.lr / 2.0,
        &spec.with_hint(hint),
    )?;
    Ok(r.value)
}

/// Eigen-decomposition of the discretized channel operator.
#[derive(Debug, Clone)]
pub struct ModeDecomposition {
    pub scenario: Scenario,
    /// Source-segment Gauss-Legendre nodes.
    pub nodes: Vec<f64>,
    /// Matching quadrature weights.
    pub weights: Vec<f64>,
    /// Eigenvalues, descending (all real and nonnegative up to roundoff).
    pub eigenvalues: Vec<f64>,
    /// Eigenfunction samples at the nodes, column per mode; orthonormal
    /// under the quadrature weights.
    pub source_modes: DMatrix<Complex64>,
    /// Symmetrized operator matrix `A = D^(1/2) K D^(1/2)`.
    pub operator_matrix: DMatrix<Complex64>,
}

/// Solve the eigenproblem on an `m`-point source grid.
///
/// `m` must be at least `4 * N_max` so the top of the spectrum is
/// resolved; the default used by the experiments is `max(256, 8 * N_max)`.
pub fn solve(scenario: &Scenario, m: usize, spec: &QuadratureSpec) -> Result<ModeDecomposition> {
    let n_max = scenario.n_max();
    if m < 4 * n_max {
        return Err(WdmError::BadValue {
            key: "grid size".to_string(),
            value: m.to_string(),
            reason: format!("need at least 4 * N_max = {}", 4 * n_max),
        });
    }
    let _ = spec;
    let green = GreenKernel::for_scenario(scenario);

    // Source nodes: a single Gauss-Legendre rule (the kernel oscillates at
    // most at kappa * Ls / 2 ~ pi * N_max / 2 phase across the segment,
    // far below the rule's resolution).
    let (x, w) = gauss_legendre(m);
    let half_ls = scenario.ls / 2.0;
    let nodes: Vec<f64> = x.iter().map(|t| half_ls * t).collect();
    let weights: Vec<f64> = w.iter().map(|t| half_ls * t).collect();

    // Receive panel grid: 8-point panels of half-wavelength width.
    let panels = crate::assembly::hinted_panel_count(
        -scenario.lr / 2.0,
        scenario.lr / 2.0,
        2.0 * scenario.lambda,
    );
    let (gx, gw) = gauss_legendre(8);
    let panel_width = scenario.lr / panels as f64;
    let q_total = panels * gx.len();

    // X[(q, j)] = sqrt(w_q) * g(r_q - s_j); K = X^H X.
    let x_rows: Vec<Vec<Complex64>> = (0..q_total)
        .into_par_iter()
        .map(|q| {
            let p = q / gx.len();
            let k = q % gx.len();
            let a = -scenario.lr / 2.0 + p as f64 * panel_width;
            let r = a + 0.5 * panel_width * (1.0 + gx[k]);
            let sw = (0.5 * panel_width * gw[k]).sqrt();
            nodes
                .iter()
                .map(|&s| green.eval(r - s) * sw)
                .collect()
        })
        .collect();
    let kernel_cols: Vec<Vec<Complex64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            (0..m)
                .map(|i| {
                    let mut acc = Complex64::ZERO;
                    for row in &x_rows {
                        acc += row[i].conj() * row[j];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    drop(x_rows);
    let mut a = DMatrix::from_fn(m, m, |i, j| {
        kernel_cols[j][i] * (weights[i] * weights[j]).sqrt()
    });
    // Symmetrize away the roundoff skew of the two dot-product orders.
    let at = a.adjoint();
    a = (a + at) * Complex64::from(0.5);

    let eigen = nalgebra::SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eigen.eigenvalues[j].total_cmp(&eigen.eigenvalues[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eigen.eigenvalues[i]).collect();
    let source_modes = DMatrix::from_fn(m, m, |i, c| {
        eigen.eigenvectors[(i, order[c])] / Complex64::from(weights[i].sqrt())
    });
    Ok(ModeDecomposition {
        scenario: *scenario,
        nodes,
        weights,
        eigenvalues,
        source_modes,
        operator_matrix: a,
    })
}

/// Solve and verify grid resolution: the top `N_max` eigenvalues must move
/// by less than 1% when the grid is doubled. Returns the decomposition at
/// `m` together with the measured drift.
pub fn solve_checked(
    scenario: &Scenario,
    m: usize,
    spec: &QuadratureSpec,
) -> Result<(ModeDecomposition, f64)> {
    let coarse = solve(scenario, m, spec)?;
    let fine = solve(scenario, 2 * m, spec)?;
    let top = scenario.n_max().min(coarse.eigenvalues.len());
    let scale = coarse.eigenvalues[0];
    let drift = (0..top)
        .map(|i| (coarse.eigenvalues[i] - fine.eigenvalues[i]).abs() / scale)
        .fold(0.0f64, f64::max);
    if drift > 0.01 {
        return Err(WdmError::UnderResolvedGrid {
            m,
            m2: 2 * m,
            drift,
        });
    }
    Ok((coarse, drift))
}

/// Default Nystrom grid size.
pub fn default_grid_size(scenario: &Scenario) -> usize {
    256usize.max(8 * scenario.n_max())
}

impl ModeDecomposition {
    /// Quadratic form `<f, K_s f>` of the discretized operator.
    pub fn kernel_quadratic_form<F: Fn(f64) -> Complex64>(&self, f: F) -> f64 {
        let m = self.nodes.len();
        let v = nalgebra::DVector::from_fn(m, |i, _| {
            f(self.nodes[i]) * Complex64::from(self.weights[i].sqrt())
        });
        (v.adjoint() * &self.operator_matrix * v)[(0, 0)].re
    }

    /// Discrete operator trace = sum of all eigenvalues.
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Receive functions `psi_n` of the top `count` modes, sampled on the
    /// K-assembly receive panel grid, with `||psi_n||^2` evaluated there.
    pub fn receive_norms(&self, count: usize) -> Vec<f64> {
        let scenario = &self.scenario;
        let green = GreenKernel::for_scenario(scenario);
        let panels = crate::assembly::hinted_panel_count(
            -scenario.lr / 2.0,
            scenario.lr / 2.0,
            2.0 * scenario.lambda,
        );
        let (gx, gw) = gauss_legendre(8);
        let panel_width = scenario.lr / panels as f64;
        let m = self.nodes.len();
        (0..panels * gx.len())
            .into_par_iter()
            .map(|q| {
                let p = q / gx.len();
                let k = q % gx.len();
                let a = -scenario.lr / 2.0 + p as f64 * panel_width;
                let r = a + 0.5 * panel_width * (1.0 + gx[k]);
                let wq = 0.5 * panel_width * gw[k];
                let g: Vec<Complex64> = (0..m)
                    .map(|j| green.eval(r - self.nodes[j]) * self.weights[j])
                    .collect();
                let mut norms = vec![0.0; count];
                for (c, norm) in norms.iter_mut().enumerate() {
                    let mut psi = Complex64::ZERO;
                    for j in 0..m {
                        psi += g[j] * self.source_modes[(j, c)];
                    }
                    *norm = wq * psi.norm_sqr();
                }
                norms
            })
            .reduce(
                || vec![0.0; count],
                |mut acc, part| {
                    for (a, b) in acc.iter_mut().zip(part) {
                        *a += b;
                    }
                    acc
                },
            )
    }

    /// Receive functions of the top `count` modes on the uniform receive
    /// grid (the form the EMI covariance assembly consumes).
    pub fn receive_family(&self, count: usize) -> SampledBasis {
        let scenario = &self.scenario;
        let green = GreenKernel::for_scenario(scenario);
        let grid = receive_grid(scenario);
        let m = self.nodes.len();
        let rows: Vec<Vec<Complex64>> = (0..grid.len)
            .into_par_iter()
            .map(|q| {
                let r = grid.point(q);
                let g: Vec<Complex64> = (0..m)
                    .map(|j| green.eval(r - self.nodes[j]) * self.weights[j])
                    .collect();
                (0..count)
                    .map(|c| {
                        let mut psi = Complex64::ZERO;
                        for j in 0..m {
                            psi += g[j] * self.source_modes[(j, c)];
                        }
                        psi
                    })
                    .collect()
            })
            .collect();
        SampledBasis {
            grid,
            values: DMatrix::from_fn(grid.len, count, |q, c| rows[q][c]),
        }
    }
}

/// Link evaluation of the eigenmode scheme.
#[derive(Debug, Clone)]
pub struct OptimalLink {
    pub link: LinkResult,
    /// Mode gains `gamma_n` used as the diagonal coupling.
    pub mode_gains: Vec<f64>,
    /// Whether whitening needed the covariance eigenvalue floor.
    pub covariance_floored: bool,
}

/// Spectral efficiency of the eigenmode scheme under the true (possibly
/// correlated) EMI covariance.
///
/// The coupling matrix is exactly diagonal in this basis
/// (`H_nm = <psi_n, psi_m> = gamma_n delta_nm`); the noise covariance is
/// projected onto the receive functions, whitened, and handed to the SVD
/// capacity evaluation, so the result is directly comparable with every
/// other scheme.
pub fn optimal_se(
    decomposition: &ModeDecomposition,
    scenario: &Scenario,
    noise: &NoiseModel,
    policy: PowerPolicy,
) -> Result<OptimalLink> {
    let n = scenario.n;
    if decomposition.eigenvalues.len() < n {
        return Err(WdmError::DimensionMismatch(format!(
            "{} eigenvalues for {} modes",
            decomposition.eigenvalues.len(),
            n
        )));
    }
    let gains: Vec<f64> = decomposition.eigenvalues[..n]
        .iter()
        .map(|&g| g.max(0.0))
        .collect();
    let h = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::from(gains[i])
        } else {
            Complex64::ZERO
        }
    });
    let family = decomposition.receive_family(n);
    let r = crate::emi::sampled_covariance(
        &family.grid,
        &family.values,
        &noise.density,
        scenario.lambda,
    )?;
    let report = noise.covariance(&r)?;
    let wc = whiten(&h, &report.matrix)?;
    let link = svd_capacity(&wc, scenario.power_budget(), policy)?;
    Ok(OptimalLink {
        link,
        mode_gains: gains,
        covariance_floored: report.floor_applied,
    })
}
