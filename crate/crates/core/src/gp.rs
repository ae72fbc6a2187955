//! Complex Gaussian conditioning and the sequential max-variance regression
//! loop.
//!
//! With a zero-mean prior `h ~ CN(0, Σ)` and observations
//! `y = h(Ω) + z`, `z ~ CN(0, σ² I)`:
//!
//! ```text
//! μ_Ω = Σ(:,Ω) (Σ(Ω,Ω) + σ² I)⁻¹ y
//! Σ_Ω = Σ - Σ(:,Ω) (Σ(Ω,Ω) + σ² I)⁻¹ Σ(Ω,:)
//! ```
//!
//! Every solve goes through a Cholesky factor of `Σ(Ω,Ω) + σ² I`; the
//! posterior is recomputed from scratch for each new `Ω`.

use crate::channel::PilotBatch;
use crate::kernels::Kernel;
use crate::linalg::{self, CMatrix, CVector};
use crate::{Result, SbarError, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    pub mean: CVector,
    pub covariance: CMatrix,
    /// Measured ports in measurement order (0-based).
    pub measured: Vec<usize>,
    pub observations: CVector,
    pub noise_variance: f64,
}

impl PosteriorState {
    pub fn prior(kernel: &Kernel, noise_variance: f64) -> Self {
        Self {
            mean: CVector::zeros(kernel.num_ports()),
            covariance: kernel.matrix().clone(),
            measured: Vec::new(),
            observations: CVector::zeros(0),
            noise_variance,
        }
    }

    /// Real part of the posterior diagonal.
    pub fn variances(&self) -> Vec<f64> {
        (0..self.covariance.nrows())
            .map(|i| {
                let v = self.covariance[(i, i)];
                debug_assert!(v.im.abs() <= 1e-12, "complex posterior variance {v}");
                v.re
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionConfig {
    /// Stop once every posterior variance is at most this value.
    pub tolerance: f64,
    /// Hard cap on the number of measurements.
    pub max_samples: usize,
    pub noise_variance: f64,
}

fn check_indices(n: usize, omega: &[usize]) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in omega {
        if i >= n {
            return Err(SbarError::ScheduleMismatch(format!("port {} outside 1..={n}", i + 1)));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(SbarError::ScheduleMismatch(format!("port {} measured twice", i + 1)));
        }
    }
    Ok(())
}

/// Cholesky-whitened cross covariance: returns `(chol, Z)` with
/// `Z = L⁻¹ Σ(Ω,:)` where `L Lᴴ = Σ(Ω,Ω) + σ² I`.
fn whitened_cross(
    kernel: &Kernel,
    omega: &[usize],
    noise_variance: f64,
) -> Result<(nalgebra::Cholesky<C64, nalgebra::Dyn>, CMatrix)> {
    let n = kernel.num_ports();
    let all: Vec<usize> = (0..n).collect();
    let mut gram = linalg::submatrix(kernel.matrix(), omega, omega);
    for i in 0..omega.len() {
        gram[(i, i)] += C64::new(noise_variance, 0.0);
    }
    let chol = linalg::spd_factor(gram, "conditioning on measured ports")?;
    let cross = linalg::submatrix(kernel.matrix(), omega, &all);
    let z = chol
        .l()
        .solve_lower_triangular(&cross)
        .ok_or_else(|| SbarError::numerical("triangular solve", f64::INFINITY))?;
    Ok((chol, z))
}

fn validate_noise(noise_variance: f64) -> Result<()> {
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(SbarError::InvalidParameter(format!(
            "noise variance must be finite and non-negative, got {noise_variance}"
        )));
    }
    Ok(())
}

/// Posterior mean and covariance after observing `pilots` on ports `omega`.
pub fn condition(kernel: &Kernel, omega: &[usize], pilots: &PilotBatch) -> Result<PosteriorState> {
    let n = kernel.num_ports();
    if omega.len() != pilots.len() {
        return Err(SbarError::ScheduleMismatch(format!(
            "{} ports but {} observations",
            omega.len(),
            pilots.len()
        )));
    }
    validate_noise(pilots.noise_variance)?;
    check_indices(n, omega)?;
    if omega.is_empty() {
        return Ok(PosteriorState::prior(kernel, pilots.noise_variance));
    }
    let (chol, z) = whitened_cross(kernel, omega, pilots.noise_variance)?;
    let alpha = chol.solve(&pilots.observations);
    let cross = linalg::select_rows(kernel.matrix(), omega);
    let mean = cross.adjoint() * alpha;
    let reduction = z.adjoint() * &z;
    let covariance = linalg::hermitian_part(&(kernel.matrix() - reduction));
    Ok(PosteriorState {
        mean,
        covariance,
        measured: omega.to_vec(),
        observations: pilots.observations.clone(),
        noise_variance: pilots.noise_variance,
    })
}

/// Diagonal of the posterior covariance only; does not need observations.
pub fn posterior_variances(kernel: &Kernel, omega: &[usize], noise_variance: f64) -> Result<Vec<f64>> {
    validate_noise(noise_variance)?;
    check_indices(kernel.num_ports(), omega)?;
    let prior = kernel.variances();
    if omega.is_empty() {
        return Ok(prior);
    }
    let (_, z) = whitened_cross(kernel, omega, noise_variance)?;
    Ok(prior
        .iter()
        .enumerate()
        .map(|(n, v)| v - z.column(n).norm_squared())
        .collect())
}

/// Index of the largest variance among unmeasured ports, lowest index on ties.
pub fn argmax_unmeasured(variances: &[f64], measured: &[usize]) -> Result<usize> {
    let mut taken = vec![false; variances.len()];
    for &m in measured {
        if m < taken.len() {
            taken[m] = true;
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in variances.iter().enumerate() {
        if taken[i] {
            continue;
        }
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i).ok_or(SbarError::ExhaustedSchedule)
}

pub fn max_variance_index(state: &PosteriorState) -> Result<usize> {
    argmax_unmeasured(&state.variances(), &state.measured)
}

/// Measure the most uncertain port, re-condition, repeat.
///
/// Stops when every posterior variance is at most `config.tolerance` or after
/// `config.max_samples` measurements.
pub fn sequential_regression<F>(kernel: &Kernel, mut measure: F, config: RegressionConfig) -> Result<PosteriorState>
where
    F: FnMut(usize) -> Result<C64>,
{
    let n = kernel.num_ports();
    if config.max_samples == 0 || config.max_samples > n {
        return Err(SbarError::InvalidParameter(format!(
            "max_samples must be in 1..={n}, got {}",
            config.max_samples
        )));
    }
    if !(config.tolerance >= 0.0) {
        return Err(SbarError::InvalidParameter("tolerance must be non-negative".into()));
    }
    let mut state = PosteriorState::prior(kernel, config.noise_variance);
    let mut ys: Vec<C64> = Vec::new();
    loop {
        let vars = state.variances();
        let worst = vars.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if worst <= config.tolerance || state.measured.len() >= config.max_samples {
            return Ok(state);
        }
        let next = argmax_unmeasured(&vars, &state.measured)?;
        ys.push(measure(next)?);
        let mut omega = state.measured.clone();
        omega.push(next);
        let pilots = PilotBatch::new(CVector::from_vec(ys.clone()), config.noise_variance)?;
        state = condition(kernel, &omega, &pilots)?;
    }
}
