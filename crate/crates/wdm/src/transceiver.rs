//! Noise whitening, waterfilling, and linear receiver architectures.
//!
//! Processing follows the standard MIMO chain: the received samples are
//! premultiplied by the inverse Cholesky factor of the noise covariance so
//! the residual noise is white, and the whitened channel `H~ = L^-1 H` is
//! then handled by one of
//!
//! - `svd`: singular-value decomposition with waterfilled powers (the
//!   capacity-achieving reference),
//! - `mmse`: per-mode MMSE combining,
//! - `mr`: maximum-ratio combining,
//! - `onetap`: a bank of one-tap multipliers `H~_nn`, the cheapest
//!   receiver, asymptotically optimal as the receiver grows.
//!
//! The linear receivers use the interference-free diagonal waterfilling
//! (`gains = |H~_nn|^2`); iterative waterfilling over the interference
//! channel is deliberately not used since its convergence is not
//! guaranteed. A uniform power policy is available alongside.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Result, WdmError};

/// Relative threshold below which singular values count as zero rank.
const RANK_THRESHOLD: f64 = 1e-12;

/// A whitened channel with its singular structure.
#[derive(Debug, Clone)]
pub struct WhitenedChannel {
    /// `H~ = L^-1 H`.
    pub matrix: DMatrix<Complex64>,
    /// Lower Cholesky factor of the noise covariance.
    pub cholesky_factor: DMatrix<Complex64>,
    /// Singular values of `H~`, descending.
    pub singular_values: Vec<f64>,
    /// Left singular vectors (columns; zero where the rank is exhausted).
    pub left_basis: DMatrix<Complex64>,
    /// Right singular vectors (columns).
    pub right_basis: DMatrix<Complex64>,
}

/// Whiten a coupling matrix against a noise covariance.
pub fn whiten(h: &DMatrix<Complex64>, c: &DMatrix<Complex64>) -> Result<WhitenedChannel> {
    if c.nrows() != c.ncols() || c.nrows() != h.nrows() {
        return Err(WdmError::DimensionMismatch(format!(
            "H is {}x{}, C is {}x{}",
            h.nrows(),
            h.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let chol: Cholesky<Complex64, Dyn> =
        Cholesky::new(c.clone()).ok_or(WdmError::NonPositiveDefiniteCovariance)?;
    let l = chol.l();
    let matrix = l
        .solve_lower_triangular(h)
        .ok_or(WdmError::NonPositiveDefiniteCovariance)?;

    // Singular structure via the Hermitian eigenproblem of H~^H H~.
    let gram = matrix.adjoint() * &matrix;
    let eigen = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eigen.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eigen.eigenvalues[j].total_cmp(&eigen.eigenvalues[i]));
    let singular_values: Vec<f64> = order
        .iter()
        .map(|&i| eigen.eigenvalues[i].max(0.0).sqrt())
        .collect();
    let right_basis = DMatrix::from_fn(matrix.ncols(), order.len(), |r, c| {
        eigen.eigenvectors[(r, order[c])]
    });
    let mut left_basis = DMatrix::<Complex64>::zeros(matrix.nrows(), order.len());
    let top = singular_values.first().copied().unwrap_or(0.0);
    for (k, &sv) in singular_values.iter().enumerate() {
        if sv > RANK_THRESHOLD * top && sv > 0.0 {
            let u = &matrix * right_basis.column(k) / Complex64::from(sv);
            left_basis.set_column(k, &u);
        }
    }
    Ok(WhitenedChannel {
        matrix,
        cholesky_factor: l,
        singular_values,
        left_basis,
        right_basis,
    })
}

/// Waterfilling over nonnegative channel gains: `p_n = max(0, mu - 1/g_n)`
/// with `sum p_n = total_power`. Returns the powers and the water level,
/// found by bisection of the monotone power-residual equation.
pub fn waterfill(gains: &[f64], total_power: f64) -> Result<(Vec<f64>, f64)> {
    for (index, &g) in gains.iter().enumerate() {
        if g < 0.0 || !g.is_finite() {
            return Err(WdmError::NegativePower { index, value: g });
        }
    }
    if total_power <= 0.0 {
        return Err(WdmError::NonPositiveDimension {
            name: "total_power".to_string(),
            value: total_power,
        });
    }
    let g_max = gains.iter().copied().fold(0.0f64, f64::max);
    if g_max == 0.0 {
        return Err(WdmError::AllZeroGains);
    }
    let mut lo = 1.0 / g_max;
    let mut hi = lo + total_power;
    let allocated = |mu: f64| -> f64 {
        gains
            .iter()
            .filter(|&&g| g > 0.0)
            .map(|&g| (mu - 1.0 / g).max(0.0))
            .sum()
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if allocated(mid) < total_power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let powers: Vec<f64> = gains
        .iter()
        .map(|&g| if g > 0.0 { (mu - 1.0 / g).max(0.0) } else { 0.0 })
        .collect();
    Ok((powers, mu))
}

/// Receiver architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    Svd,
    Mmse,
    Mr,
    OneTap,
}

impl Receiver {
    pub fn label(&self) -> &'static str {
        match self {
            Receiver::Svd => "svd",
            Receiver::Mmse => "mmse",
            Receiver::Mr => "mr",
            Receiver::OneTap => "onetap",
        }
    }
}

/// How transmit power is spread over modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerPolicy {
    /// Interference-free waterfilling on the scheme's per-mode gains.
    Waterfill,
    /// `total_power / N` on every mode.
    Uniform,
}

/// Per-mode outcome of one link evaluation.
#[derive(Debug, Clone)]
pub struct LinkResult {
    pub receiver: Receiver,
    pub policy: PowerPolicy,
    /// Per-mode gains the power allocation saw.
    pub gains: Vec<f64>,
    pub powers: Vec<f64>,
    pub sinrs: Vec<f64>,
    /// Sum spectral efficiency [bit per channel use].
    pub se: f64,
    /// Water level, when waterfilling was used.
    pub water_level: Option<f64>,
}

impl LinkResult {
    fn from_sinrs(
        receiver: Receiver,
        policy: PowerPolicy,
        gains: Vec<f64>,
        powers: Vec<f64>,
        sinrs: Vec<f64>,
        water_level: Option<f64>,
    ) -> Self {
        let se = sinrs.iter().map(|s| (1.0 + s).log2()).sum();
        Self {
            receiver,
            policy,
            gains,
            powers,
            sinrs,
            se,
            water_level,
        }
    }
}

/// Capacity of the whitened channel: waterfilling over the squared
/// singular values (or uniform powers over the retained modes).
pub fn svd_capacity(
    channel: &WhitenedChannel,
    total_power: f64,
    policy: PowerPolicy,
) -> Result<LinkResult> {
    let top = channel.singular_values.first().copied().unwrap_or(0.0);
    let gains: Vec<f64> = channel
        .singular_values
        .iter()
        .map(|&sv| if sv > RANK_THRESHOLD * top { sv * sv } else { 0.0 })
        .collect();
    let (powers, level) = match policy {
        PowerPolicy::Waterfill => {
            let (p, mu) = waterfill(&gains, total_power)?;
            (p, Some(mu))
        }
        PowerPolicy::Uniform => {
            let active = gains.iter().filter(|&&g| g > 0.0).count().max(1);
            let each = total_power / active as f64;
            (
                gains.iter().map(|&g| if g > 0.0 { each } else { 0.0 }).collect(),
                None,
            )
        }
    };
    let sinrs: Vec<f64> = gains.iter().zip(&powers).map(|(g, p)| g * p).collect();
    Ok(LinkResult::from_sinrs(
        Receiver::Svd,
        policy,
        gains,
        powers,
        sinrs,
        level,
    ))
}

/// MMSE combiner columns `u_n = (sum_m p_m h_m h_m^H + I)^-1 h_n`.
pub fn mmse_combiner(h: &DMatrix<Complex64>, powers: &[f64]) -> Result<DMatrix<Complex64>> {
    if powers.len() != h.ncols() {
        return Err(WdmError::DimensionMismatch(format!(
            "{} powers for {} modes",
            powers.len(),
            h.ncols()
        )));
    }
    let nr = h.nrows();
    let mut a = DMatrix::<Complex64>::identity(nr, nr);
    for (m, &p) in powers.iter().enumerate() {
        let col = h.column(m);
        // a += p * h_m h_m^H
        for i in 0..nr {
            let hi = col[i] * p;
            for j in 0..nr {
                a[(i, j)] += hi * col[j].conj();
            }
        }
    }
    let chol = Cholesky::new(a).expect("I + sum p h h^H is positive definite");
    Ok(chol.solve(h))
}

/// Maximum-ratio combiner: the channel columns themselves.
pub fn mr_combiner(h: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    h.clone()
}

/// One-tap combiner: `u_n = H~_nn e_n`.
pub fn onetap_combiner(h: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let k = h.ncols();
    if h.nrows() < k {
        return Err(WdmError::DimensionMismatch(format!(
            "one-tap combiner needs nrows >= ncols, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let mut u = DMatrix::<Complex64>::zeros(h.nrows(), k);
    for n in 0..k {
        u[(n, n)] = h[(n, n)];
    }
    Ok(u)
}

/// SINR of every mode under a linear combiner bank, treating interference
/// as Gaussian, plus the summed spectral efficiency.
///
/// `SINR_n = p_n |u_n^H h_n|^2 / (sum_{m!=n} p_m |u_n^H h_m|^2 + ||u_n||^2)`.
pub fn sinr_and_se(
    h: &DMatrix<Complex64>,
    combiner: &DMatrix<Complex64>,
    powers: &[f64],
    receiver: Receiver,
    policy: PowerPolicy,
    gains: Vec<f64>,
    water_level: Option<f64>,
) -> Result<LinkResult> {
    if combiner.nrows() != h.nrows() || combiner.ncols() != h.ncols() {
        return Err(WdmError::DimensionMismatch(format!(
            "combiner {}x{} vs channel {}x{}",
            combiner.nrows(),
            combiner.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    if powers.len() != h.ncols() {
        return Err(WdmError::DimensionMismatch(format!(
            "{} powers for {} modes",
            powers.len(),
            h.ncols()
        )));
    }
    let m = combiner.adjoint() * h;
    let n = h.ncols();
    let mut sinrs = Vec::with_capacity(n);
    for i in 0..n {
        let noise = combiner.column(i).norm_squared();
        if noise == 0.0 {
            sinrs.push(0.0);
            continue;
        }
        let signal = powers[i] * m[(i, i)].norm_sqr();
        let interference: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| powers[j] * m[(i, j)].norm_sqr())
            .sum();
        sinrs.push(signal / (interference + noise));
    }
    Ok(LinkResult::from_sinrs(
        receiver,
        policy,
        gains,
        powers.to_vec(),
        sinrs,
        water_level,
    ))
}

/// Evaluate one receiver architecture on a whitened channel.
///
/// The linear receivers allocate power on the diagonal gains
/// `|H~_nn|^2`; `svd` allocates on the squared singular values.
pub fn evaluate(
    channel: &WhitenedChannel,
    receiver: Receiver,
    total_power: f64,
    policy: PowerPolicy,
) -> Result<LinkResult> {
    if receiver == Receiver::Svd {
        return svd_capacity(channel, total_power, policy);
    }
    let h = &channel.matrix;
    let k = h.ncols().min(h.nrows());
    let gains: Vec<f64> = (0..h.ncols())
        .map(|n| if n < k { h[(n, n)].norm_sqr() } else { 0.0 })
        .collect();
    let (powers, level) = match policy {
        PowerPolicy::Waterfill => {
            let (p, mu) = waterfill(&gains, total_power)?;
            (p, Some(mu))
        }
        PowerPolicy::Uniform => {
            let each = total_power / h.ncols() as f64;
            (vec![each; h.ncols()], None)
        }
    };
    let combiner = match receiver {
        Receiver::Mmse => mmse_combiner(h, &powers)?,
        Receiver::Mr => mr_combiner(h),
        Receiver::OneTap => onetap_combiner(h)?,
        Receiver::Svd => unreachable!(),
    };
    sinr_and_se(h, &combiner, &powers, receiver, policy, gains, level)
}
