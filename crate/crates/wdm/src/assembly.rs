//! Panel-parallel accumulation of matrix-valued oscillatory integrals.
//!
//! Coupling and covariance matrices are integrals of the form
//! `M_ij = integral W(u) * c_ij(u) du` where the expensive factor `W`
//! (Green's function or EMI correlation) is shared by every entry and the
//! per-entry factors are cheap closed forms. Evaluating all entries on one
//! fixed panel grid amortizes `W` across the whole matrix.
//!
//! Panels are sized by the caller from the oscillation hint (width at most
//! a quarter wavelength), evaluated with nested 16- and 8-point
//! Gauss-Legendre rules, and reduced in a fixed block order so results do
//! not depend on the number of worker threads.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::quadrature::gauss_legendre;

/// Number of contiguous panel blocks; fixed so the reduction order (and
/// thus the bitwise result) is independent of thread count.
const BLOCKS: usize = 64;

pub(crate) struct PanelSum {
    /// 16-point value of the matrix integral.
    pub value: DMatrix<Complex64>,
    /// Entrywise |GL16 - GL8| error estimate.
    pub error: DMatrix<f64>,
    pub panels: usize,
}

/// Accumulate `M_ij = integral f_ij(u) du` over `[a, b]` with `n_panels`
/// equal panels. `node_term(u, scaled_weight, acc)` must add
/// `scaled_weight * f_ij(u)` into `acc[(i, j)]` for every entry.
pub(crate) fn panel_matrix_sum<F>(
    a: f64,
    b: f64,
    n_panels: usize,
    rows: usize,
    cols: usize,
    node_term: F,
) -> PanelSum
where
    F: Fn(f64, f64, &mut DMatrix<Complex64>) + Sync,
{
    assert!(b > a && n_panels > 0);
    let width = (b - a) / n_panels as f64;
    let (x16, w16) = gauss_legendre(16);
    let (x8, w8) = gauss_legendre(8);

    let block_len = n_panels.div_ceil(BLOCKS);
    let blocks: Vec<(DMatrix<Complex64>, DMatrix<Complex64>)> = (0..BLOCKS)
        .into_par_iter()
        .map(|bi| {
            let mut fine = DMatrix::<Complex64>::zeros(rows, cols);
            let mut coarse = DMatrix::<Complex64>::zeros(rows, cols);
            let start = bi * block_len;
            let end = ((bi + 1) * block_len).min(n_panels);
            for p in start..end {
                let pa = a + p as f64 * width;
                let pb = if p + 1 == n_panels { b } else { pa + width };
                let center = 0.5 * (pa + pb);
                let half = 0.5 * (pb - pa);
                for (x, w) in x16.iter().zip(w16.iter()) {
                    node_term(center + half * x, half * w, &mut fine);
                }
                for (x, w) in x8.iter().zip(w8.iter()) {
                    node_term(center + half * x, half * w, &mut coarse);
                }
            }
            (fine, coarse)
        })
        .collect();

    let mut value = DMatrix::<Complex64>::zeros(rows, cols);
    let mut coarse = DMatrix::<Complex64>::zeros(rows, cols);
    for (f, c) in blocks {
        value += f;
        coarse += c;
    }
    let error = DMatrix::from_fn(rows, cols, |i, j| (value[(i, j)] - coarse[(i, j)]).norm());
    PanelSum {
        value,
        error,
        panels: n_panels,
    }
}

/// Panel count for a span `[a, b]` under an oscillation hint (panel width
/// at most `hint / 4`).
pub(crate) fn hinted_panel_count(a: f64, b: f64, hint: f64) -> usize {
    (((b - a) / (hint / 4.0)).ceil() as usize).max(1)
}

/// A Fourier-type family reduced to assembly form: common amplitude and
/// support, integer frequency offsets on a common grid `step` [rad/m].
pub(crate) struct FourierFactors {
    pub amp: f64,
    pub half_width: f64,
    pub step: f64,
    pub offsets: Vec<i64>,
}

impl FourierFactors {
    pub fn from_family(family: &crate::basis::BasisFamily) -> Option<Self> {
        use crate::basis::BasisFamily::*;
        let (length, count, support) = match family {
            FourierSource {
                source_length,
                count,
            } => (*source_length, *count, *source_length),
            FourierReceive {
                source_length,
                receive_length,
                count,
            } => (*source_length, *count, *receive_length),
            _ => return None,
        };
        let e = family.element(1).ok()?;
        Some(Self {
            amp: e.amplitude,
            half_width: support / 2.0,
            step: 2.0 * std::f64::consts::PI / length,
            offsets: (1..=count)
                .map(|m| m as i64 - 1 - (count as i64 - 1) / 2)
                .collect(),
        })
    }

    fn max_freq(&self) -> f64 {
        self.step * self.offsets.iter().map(|o| o.abs()).max().unwrap_or(0) as f64
    }
}

/// All entries of `M_ij = integral W(u) * c_ij(u) du`, where
/// `c_ij(u) = integral a_i*(x) b_j(x - u) dx` is the closed-form
/// cross-correlation of two Fourier-type families sharing a frequency grid.
///
/// Requires `a.step == b.step`. `weight_rate` is the oscillation rate of
/// `W` [rad/m]; it sets the panel width together with the basis
/// frequencies.
pub(crate) fn fourier_pair_integral<W>(
    weight: W,
    weight_rate: f64,
    a: &FourierFactors,
    b: &FourierFactors,
    spec: &crate::quadrature::QuadratureSpec,
) -> crate::error::Result<PanelSum>
where
    W: Fn(f64) -> Complex64 + Sync,
{
    assert!(
        (a.step - b.step).abs() <= 1e-12 * a.step,
        "families must share a frequency grid"
    );
    let span = a.half_width + b.half_width;
    let rate = weight_rate + a.max_freq().max(b.max_freq());
    let hint = 2.0 * std::f64::consts::PI / rate;
    // The overlap endpoints have derivative kinks at +-(wa - wb); keep them
    // on segment boundaries so every panel sees an analytic integrand.
    let kink = (a.half_width - b.half_width).abs();
    let mut breaks = vec![-span, span];
    if kink > 0.0 && kink < span {
        breaks.insert(1, -kink);
        breaks.insert(2, kink);
    } else {
        breaks.insert(1, 0.0);
    }
    let total_panels: usize = breaks
        .windows(2)
        .map(|s| hinted_panel_count(s[0], s[1], hint))
        .sum();
    if total_panels > spec.max_panels {
        return Err(crate::error::WdmError::QuadratureNonConvergence {
            a: -span,
            b: span,
            estimate: f64::INFINITY,
            target: spec.abs_floor,
            panels: total_panels,
        });
    }

    let step = a.step;
    let k_min = b.offsets.iter().min().unwrap() - a.offsets.iter().max().unwrap();
    let k_max = b.offsets.iter().max().unwrap() - a.offsets.iter().min().unwrap();
    let k_len = (k_max - k_min + 1) as usize;
    let amp = a.amp * b.amp;
    let (wa, wb) = (a.half_width, b.half_width);
    let offsets_a = &a.offsets;
    let offsets_b = &b.offsets;

    let node_term = |u: f64, s: f64, acc: &mut DMatrix<Complex64>| {
            let lo = (-wa).max(u - wb);
            let hi = wa.min(u + wb);
            if hi <= lo {
                return;
            }
            let prefactor = weight(u) * (amp * s);
            // Overlap integrals E_k = integral exp(i*step*k*x) over [lo, hi],
            // built once per node by phase recurrence over k.
            let mut table = vec![Complex64::ZERO; k_len];
            let ratio_hi = Complex64::from_polar(1.0, step * hi);
            let ratio_lo = Complex64::from_polar(1.0, step * lo);
            let mut e_hi = Complex64::from_polar(1.0, step * k_min as f64 * hi);
            let mut e_lo = Complex64::from_polar(1.0, step * k_min as f64 * lo);
            for (idx, slot) in table.iter_mut().enumerate() {
                let k = k_min + idx as i64;
                *slot = if k == 0 {
                    Complex64::from(hi - lo)
                } else {
                    (e_hi - e_lo) / Complex64::new(0.0, step * k as f64)
                };
                e_hi *= ratio_hi;
                e_lo *= ratio_lo;
            }
            let phase_ratio = Complex64::from_polar(1.0, -step * u);
            let mut phase = Complex64::from_polar(1.0, -step * offsets_b[0] as f64 * u);
            for (j, &off_b) in offsets_b.iter().enumerate() {
                let col_factor = prefactor * phase;
                for (i, &off_a) in offsets_a.iter().enumerate() {
                    let k_idx = (off_b - off_a - k_min) as usize;
                    acc[(i, j)] += col_factor * table[k_idx];
                }
                if j + 1 < offsets_b.len() {
                    let hop = offsets_b[j + 1] - off_b;
                    phase *= if hop == 1 {
                        phase_ratio
                    } else {
                        Complex64::from_polar(1.0, -step * hop as f64 * u)
                    };
                }
            }
    };

    let (rows, cols) = (offsets_a.len(), offsets_b.len());
    let mut value = DMatrix::<Complex64>::zeros(rows, cols);
    let mut error = DMatrix::<f64>::zeros(rows, cols);
    let mut panels = 0;
    for seg in breaks.windows(2) {
        let part = panel_matrix_sum(
            seg[0],
            seg[1],
            hinted_panel_count(seg[0], seg[1], hint),
            rows,
            cols,
            &node_term,
        );
        value += &part.value;
        error += &part.error;
        panels += part.panels;
    }
    Ok(PanelSum {
        value,
        error,
        panels,
    })
}

/// Enforce the per-entry error contract of a matrix integral: every entry's
/// estimate must satisfy `err <= max(rel_tol * max|M|, abs_floor)`.
pub(crate) fn check_matrix_error(
    sum: &PanelSum,
    spec: &crate::quadrature::QuadratureSpec,
    a: f64,
    b: f64,
) -> crate::error::Result<()> {
    let scale = sum
        .value
        .iter()
        .map(|v| v.norm())
        .fold(0.0f64, f64::max);
    let target = (spec.rel_tol * scale).max(spec.abs_floor);
    let worst = sum.error.iter().copied().fold(0.0f64, f64::max);
    if worst > target {
        return Err(crate::error::WdmError::QuadratureNonConvergence {
            a,
            b,
            estimate: worst,
            target,
            panels: sum.panels,
        });
    }
    Ok(())
}
