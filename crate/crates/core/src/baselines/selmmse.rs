use crate::channel::{ArrayGeometry, ChannelVector, PilotBatch, PortSchedule};
use crate::linalg::CVector;
use crate::{Result, SbarError};

/// Equally spaced ports including both ends of the aperture.
pub fn selmmse_schedule(num_ports: usize, pilots: usize, antennas: usize) -> Result<PortSchedule> {
    let total = pilots * antennas;
    if total == 0 {
        return Err(SbarError::InvalidParameter("pilots and antennas must both be at least 1".into()));
    }
    if total > num_ports {
        return Err(SbarError::Capacity {
            requested: total,
            available: num_ports,
        });
    }
    let indices = if total == 1 {
        vec![0]
    } else {
        (0..total)
            .map(|i| (i as f64 * (num_ports - 1) as f64 / (total - 1) as f64).round() as usize)
            .collect()
    };
    PortSchedule::new(indices, pilots, antennas, num_ports)
}

/// Zero-order hold from the equally spaced measurements.
pub fn selmmse(pilots: &PilotBatch, geometry: &ArrayGeometry, p: usize, m: usize) -> Result<ChannelVector> {
    let n = geometry.num_ports();
    let schedule = selmmse_schedule(n, p, m)?;
    if pilots.len() != schedule.len() {
        return Err(SbarError::ScheduleMismatch(format!(
            "{} equally spaced ports but {} pilots",
            schedule.len(),
            pilots.len()
        )));
    }
    let ports = schedule.indices();
    let y = &pilots.observations;
    let mut next = 0usize;
    let h = CVector::from_fn(n, |port, _| {
        while next + 1 < ports.len() && ports[next + 1] <= port {
            next += 1;
        }
        let pick = if next + 1 < ports.len() && ports[next + 1] - port < port.abs_diff(ports[next]) {
            next + 1
        } else {
            next
        };
        y[pick]
    });
    ChannelVector::new(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::receive_pilots;
    use crate::C64;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn spacing_rule() {
        assert_eq!(selmmse_schedule(5, 3, 1).unwrap().one_based(), vec![1, 3, 5]);
        assert_eq!(selmmse_schedule(9, 1, 1).unwrap().one_based(), vec![1]);
    }

    #[test]
    fn midpoint_tie_goes_low() {
        let g = ArrayGeometry::ten_wavelengths(4).unwrap();
        let h = ChannelVector::from_vec(vec![c(1.0), c(2.0), c(3.0), c(4.0)]).unwrap();
        let s = selmmse_schedule(4, 2, 1).unwrap();
        let y = receive_pilots(&h, &s, 0.0, 0).unwrap();
        let est = selmmse(&y, &g, 2, 1).unwrap();
        assert_eq!(est.entries().as_slice(), &[c(1.0), c(1.0), c(4.0), c(4.0)]);
    }

    #[test]
    fn constant_channel_and_single_port() {
        let g = ArrayGeometry::ten_wavelengths(10).unwrap();
        let h = ChannelVector::from_vec(vec![C64::new(0.3, -1.0); 10]).unwrap();
        for (p, m) in [(1, 1), (2, 2), (3, 3)] {
            let s = selmmse_schedule(10, p, m).unwrap();
            let y = receive_pilots(&h, &s, 0.0, 0).unwrap();
            assert_eq!(selmmse(&y, &g, p, m).unwrap(), h);
        }
    }

    #[test]
    fn measured_ports_are_untouched() {
        let g = ArrayGeometry::ten_wavelengths(50).unwrap();
        let h = crate::channel::generate_rich_channel(&g, 3).unwrap();
        let s = selmmse_schedule(50, 3, 4).unwrap();
        let y = receive_pilots(&h, &s, 0.2, 8).unwrap();
        let est = selmmse(&y, &g, 3, 4).unwrap();
        for (i, &port) in s.indices().iter().enumerate() {
            assert_eq!(est.entries()[port], y.observations[i]);
        }
    }
}
