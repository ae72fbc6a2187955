use std::f64::consts::PI;

use super::omp::{fas_omp, grid_angle};
use crate::channel::{ArrayGeometry, ChannelVector, PilotBatch, PortSchedule};
use crate::linalg::{least_squares, CMatrix, CVector};
use crate::{Result, SbarError, C64};

/// Outer iteration cap used when a caller has no preference.
pub const DEFAULT_ML_ITERATIONS: usize = 50;

const RELATIVE_TOLERANCE: f64 = 1e-8;

/// Gridless path estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MlEstimate {
    pub gains: CVector,
    pub angles: Vec<f64>,
    pub reconstructed: ChannelVector,
    /// Residual energy `‖y - B(θ) g‖²` after each accepted update, starting
    /// with the initial fit.
    pub objective_history: Vec<f64>,
}

/// `B(θ) = sqrt(N/L) S [a(θ_1) ... a(θ_L)]`.
fn path_matrix(schedule: &PortSchedule, geometry: &ArrayGeometry, angles: &[f64]) -> CMatrix {
    let n = geometry.num_ports() as f64;
    let amp = (n / angles.len() as f64).sqrt() / n.sqrt();
    let ports = schedule.indices();
    CMatrix::from_fn(ports.len(), angles.len(), |i, l| {
        C64::from_polar(amp, geometry.phase_step(angles[l]) * ports[i] as f64)
    })
}

fn residual(y: &CVector, b: &CMatrix, gains: &CVector) -> CVector {
    y - b * gains
}

/// `‖y - B(θ) g‖²`.
pub fn ml_objective(
    observations: &CVector,
    schedule: &PortSchedule,
    geometry: &ArrayGeometry,
    gains: &CVector,
    angles: &[f64],
) -> f64 {
    let b = path_matrix(schedule, geometry, angles);
    residual(observations, &b, gains).norm_squared()
}

/// Analytic derivative of `‖y - B(θ) g‖²` with respect to each angle.
pub fn ml_angle_gradient(
    observations: &CVector,
    schedule: &PortSchedule,
    geometry: &ArrayGeometry,
    gains: &CVector,
    angles: &[f64],
) -> Vec<f64> {
    let b = path_matrix(schedule, geometry, angles);
    let r = residual(observations, &b, gains);
    let k = 2.0 * PI / geometry.wavelength() * geometry.port_spacing();
    let ports = schedule.indices();
    angles
        .iter()
        .enumerate()
        .map(|(l, &theta)| {
            let mut acc = C64::new(0.0, 0.0);
            for (i, &port) in ports.iter().enumerate() {
                let d_entry = b[(i, l)] * C64::new(0.0, -k * port as f64 * theta.sin());
                acc += r[i].conj() * d_entry * gains[l];
            }
            -2.0 * acc.re
        })
        .collect()
}

/// Alternating maximum-likelihood refinement initialised from OMP.
///
/// Each outer iteration refits the gains by least squares, then takes one
/// gradient step on the angles. A step that would raise the residual energy
/// is discarded; the step length halves either way.
pub fn fas_ml(
    pilots: &PilotBatch,
    schedule: &PortSchedule,
    geometry: &ArrayGeometry,
    sparsity: usize,
    max_iters: usize,
) -> Result<MlEstimate> {
    let init = fas_omp(pilots, schedule, geometry, sparsity)?;
    let mut angles: Vec<f64> = init.support.iter().map(|&k| grid_angle(k, geometry)).collect();
    let y = &pilots.observations;

    let b = path_matrix(schedule, geometry, &angles);
    let (mut gains, _) = least_squares(&b, y);
    let mut objective = residual(y, &b, &gains).norm_squared();
    let mut history = vec![objective];
    let mut zeta = 1.0;

    for _ in 0..max_iters {
        if objective == 0.0 {
            break;
        }
        let grad = ml_angle_gradient(y, schedule, geometry, &gains, &angles);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(SbarError::numerical("ML angle gradient", f64::NAN));
        }
        let trial: Vec<f64> = angles.iter().zip(&grad).map(|(t, g)| t - zeta * g).collect();
        zeta *= 0.5;
        let trial_b = path_matrix(schedule, geometry, &trial);
        if residual(y, &trial_b, &gains).norm_squared() > objective {
            continue;
        }
        let (trial_gains, _) = least_squares(&trial_b, y);
        let trial_objective = residual(y, &trial_b, &trial_gains).norm_squared();
        if !trial_objective.is_finite() {
            return Err(SbarError::numerical("ML objective", f64::NAN));
        }
        // The refit can only lower the objective further, but guard against rounding.
        if trial_objective > objective {
            continue;
        }
        let change = (objective - trial_objective) / objective;
        angles = trial;
        gains = trial_gains;
        objective = trial_objective;
        history.push(objective);
        if change < RELATIVE_TOLERANCE {
            break;
        }
    }

    let n = geometry.num_ports();
    let amp = (n as f64 / angles.len() as f64).sqrt() / (n as f64).sqrt();
    let h = CVector::from_fn(n, |p, _| {
        angles
            .iter()
            .zip(gains.iter())
            .map(|(&theta, g)| g * C64::from_polar(amp, geometry.phase_step(theta) * p as f64))
            .sum()
    });
    Ok(MlEstimate {
        gains,
        angles,
        reconstructed: ChannelVector::new(h)?,
        objective_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::random_switch_matrix;
    use crate::channel::{channel_from_rays, receive_pilots, Ray};
    use crate::seed::{complex_gaussian, rng_from_seed};
    use rand::Rng;

    #[test]
    fn gradient_matches_finite_differences() {
        let g = ArrayGeometry::ten_wavelengths(64).unwrap();
        let s = random_switch_matrix(64, 4, 4, 7).unwrap();
        let mut rng = rng_from_seed(11);
        for _ in 0..20 {
            let l = 3;
            let gains = CVector::from_fn(l, |_, _| complex_gaussian(&mut rng, 1.0));
            let angles: Vec<f64> = (0..l).map(|_| rng.random_range(0.1..3.0)).collect();
            let y = CVector::from_fn(16, |_, _| complex_gaussian(&mut rng, 1.0));
            let grad = ml_angle_gradient(&y, &s, &g, &gains, &angles);
            for j in 0..l {
                let (mut up, mut dn) = (angles.clone(), angles.clone());
                up[j] += 1e-6;
                dn[j] -= 1e-6;
                let fd = (ml_objective(&y, &s, &g, &gains, &up) - ml_objective(&y, &s, &g, &gains, &dn)) / 2e-6;
                let rel = (grad[j] - fd).abs() / fd.abs().max(1e-3);
                assert!(rel < 1e-5, "analytic {} vs fd {fd}", grad[j]);
            }
        }
    }

    #[test]
    fn exact_on_grid_solution_is_kept() {
        let g = ArrayGeometry::ten_wavelengths(32).unwrap();
        let rays = [
            Ray { gain: C64::new(1.0, 0.5), angle: grid_angle(3, &g) },
            Ray { gain: C64::new(-0.7, 0.2), angle: grid_angle(9, &g) },
        ];
        let h = channel_from_rays(&g, &rays).unwrap();
        let s = random_switch_matrix(32, 3, 4, 2).unwrap();
        let y = receive_pilots(&h, &s, 0.0, 0).unwrap();
        let est = fas_ml(&y, &s, &g, 2, 50).unwrap();
        assert!(est.objective_history[0] < 1e-20);
        assert!((est.reconstructed.entries() - h.entries()).norm() < 1e-9);
    }

    #[test]
    fn objective_never_increases() {
        let g = ArrayGeometry::ten_wavelengths(64).unwrap();
        let params = crate::channel::SscParams::sparse_default();
        for seed in 0..5 {
            let h = crate::channel::generate_ssc_channel(&g, &params, seed).unwrap();
            let s = random_switch_matrix(64, 6, 4, seed).unwrap();
            let y = receive_pilots(&h, &s, 0.01, seed).unwrap();
            let est = fas_ml(&y, &s, &g, 6, 50).unwrap();
            assert_eq!(est.angles.len(), 6);
            for w in est.objective_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }
}
