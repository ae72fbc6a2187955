use std::f64::consts::PI;

use crate::channel::{ArrayGeometry, ChannelVector, PilotBatch, PortSchedule};
use crate::linalg::{least_squares, CMatrix, CVector};
use crate::{Result, SbarError, C64};

/// OMP output over the unitary DFT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseEstimate {
    /// Selected grid columns in selection order.
    pub support: Vec<usize>,
    pub coefficients: CVector,
    pub reconstructed: ChannelVector,
    /// Residual `y - Ψ(:,Υ) h̄(Υ)` after each iteration.
    pub residuals: Vec<CVector>,
    /// Set when some least-squares step fell back to the minimum-norm solution.
    pub rank_deficient: bool,
}

/// Entry `(n, k)` of the unitary DFT matrix, `exp(j 2π n k / N) / sqrt(N)`.
#[inline]
fn dft_entry(n: usize, k: usize, size: usize) -> C64 {
    let phase = 2.0 * PI * ((n * k) % size) as f64 / size as f64;
    C64::from_polar(1.0 / (size as f64).sqrt(), phase)
}

pub fn dft_column(k: usize, size: usize) -> CVector {
    CVector::from_fn(size, |n, _| dft_entry(n, k, size))
}

/// Incident angle whose steering vector coincides with DFT column `k`.
///
/// Columns outside the visible region clamp to end-fire.
pub fn grid_angle(k: usize, geometry: &ArrayGeometry) -> f64 {
    let n = geometry.num_ports();
    let signed = if k > n / 2 { k as f64 - n as f64 } else { k as f64 };
    let cos = signed * geometry.wavelength() / (n as f64 * geometry.port_spacing());
    cos.clamp(-1.0, 1.0).acos()
}

/// Orthogonal matching pursuit over the sensing matrix `Ψ = S F`.
pub fn fas_omp(
    pilots: &PilotBatch,
    schedule: &PortSchedule,
    geometry: &ArrayGeometry,
    sparsity: usize,
) -> Result<SparseEstimate> {
    let n = geometry.num_ports();
    let rows = schedule.len();
    if schedule.num_ports() != n {
        return Err(SbarError::ScheduleMismatch(format!(
            "schedule is for {} ports, geometry has {n}",
            schedule.num_ports()
        )));
    }
    if pilots.len() != rows {
        return Err(SbarError::ScheduleMismatch(format!(
            "{rows} scheduled ports but {} pilots",
            pilots.len()
        )));
    }
    if sparsity == 0 || sparsity > rows {
        return Err(SbarError::InvalidParameter(format!(
            "sparsity must be in 1..={rows}, got {sparsity}"
        )));
    }
    let psi = CMatrix::from_fn(rows, n, |i, k| dft_entry(schedule.indices()[i], k, n));
    let psi_h = psi.adjoint();
    let y = &pilots.observations;

    let mut support: Vec<usize> = Vec::with_capacity(sparsity);
    let mut residual = y.clone();
    let mut coefficients = CVector::zeros(0);
    let mut residuals = Vec::with_capacity(sparsity);
    let mut rank_deficient = false;
    for _ in 0..sparsity {
        let gamma = &psi_h * &residual;
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (k, g) in gamma.iter().enumerate() {
            if support.contains(&k) {
                continue;
            }
            let mag = g.norm();
            if mag > best.1 {
                best = (k, mag);
            }
        }
        support.push(best.0);
        let atoms = psi.select_columns(&support);
        let (coef, deficient) = least_squares(&atoms, y);
        rank_deficient |= deficient;
        residual = y - &atoms * &coef;
        coefficients = coef;
        residuals.push(residual.clone());
    }
    let mut h = CVector::zeros(n);
    for (c, &k) in coefficients.iter().zip(&support) {
        h.axpy(*c, &dft_column(k, n), C64::new(1.0, 0.0));
    }
    Ok(SparseEstimate {
        support,
        coefficients,
        reconstructed: ChannelVector::new(h)?,
        residuals,
        rank_deficient,
    })
}
