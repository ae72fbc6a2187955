//! Comparison estimators: compressed-sensing OMP, alternating maximum
//! likelihood, and equally-spaced sampling with zero-order hold.

mod ml;
mod omp;
mod selmmse;

pub use ml::{fas_ml, ml_angle_gradient, ml_objective, MlEstimate, DEFAULT_ML_ITERATIONS};
pub use omp::{dft_column, fas_omp, grid_angle, SparseEstimate};
pub use selmmse::{selmmse, selmmse_schedule};

use rand::seq::index::sample;

use crate::channel::PortSchedule;
use crate::seed::rng_from_seed;
use crate::{Result, SbarError};

/// `P·M` distinct ports drawn uniformly without replacement.
pub fn random_switch_matrix(num_ports: usize, pilots: usize, antennas: usize, seed: u64) -> Result<PortSchedule> {
    if pilots == 0 || antennas == 0 {
        return Err(SbarError::InvalidParameter("pilots and antennas must both be at least 1".into()));
    }
    let total = pilots * antennas;
    if total > num_ports {
        return Err(SbarError::Capacity {
            requested: total,
            available: num_ports,
        });
    }
    let mut rng = rng_from_seed(seed);
    let indices = sample(&mut rng, num_ports, total).into_vec();
    PortSchedule::new(indices, pilots, antennas, num_ports)
}
