//! Port geometry, channel generators and pilot reception.
//!
//! Lengths (wavelength, aperture, port spacing) may be in any unit as long as
//! they are consistent. The experiment defaults measure everything in
//! wavelengths (`wavelength = 1`).

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;

use crate::linalg::CVector;
use crate::seed::{complex_gaussian, rng_from_seed};
use crate::{Result, SbarError, C64};

/// Uniform linear arrangement of `N` ports over an aperture `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    num_ports: usize,
    wavelength: f64,
    aperture: f64,
}

impl ArrayGeometry {
    pub fn new(num_ports: usize, wavelength: f64, aperture: f64) -> Result<Self> {
        if num_ports < 2 {
            return Err(SbarError::InvalidGeometry(format!(
                "num_ports must be at least 2, got {num_ports}"
            )));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(SbarError::InvalidGeometry(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if !(aperture > 0.0 && aperture.is_finite()) {
            return Err(SbarError::InvalidGeometry(format!(
                "aperture must be positive, got {aperture}"
            )));
        }
        Ok(Self {
            num_ports,
            wavelength,
            aperture,
        })
    }

    /// `N` ports over a 10-wavelength aperture with unit wavelength.
    pub fn ten_wavelengths(num_ports: usize) -> Result<Self> {
        Self::new(num_ports, 1.0, 10.0)
    }

    pub fn num_ports(&self) -> usize {
        self.num_ports
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    /// `d = W / (N - 1)`.
    pub fn port_spacing(&self) -> f64 {
        self.aperture / (self.num_ports - 1) as f64
    }

    /// Position of port `n` (0-based) on the line.
    pub fn port_position(&self, n: usize) -> f64 {
        n as f64 * self.port_spacing()
    }

    /// Phase advance between adjacent ports for a plane wave arriving at `theta`.
    pub fn phase_step(&self, theta: f64) -> f64 {
        2.0 * PI / self.wavelength * self.port_spacing() * theta.cos()
    }
}

/// Parameters of the spatially-sparse clustered channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SscParams {
    pub num_clusters: usize,
    pub rays_per_cluster: usize,
    /// Half-width of the uniform ray spread around each cluster centre (radians).
    pub max_angle_spread: f64,
}

impl SscParams {
    pub fn new(num_clusters: usize, rays_per_cluster: usize, max_angle_spread: f64) -> Result<Self> {
        let p = Self {
            num_clusters,
            rays_per_cluster,
            max_angle_spread,
        };
        p.validate()?;
        Ok(p)
    }

    /// 9 clusters of 100 rays, 5° spread.
    pub fn sparse_default() -> Self {
        Self {
            num_clusters: 9,
            rays_per_cluster: 100,
            max_angle_spread: 5f64.to_radians(),
        }
    }

    /// The rich-scattering proxy: 23 clusters of 20 rays, 5° spread.
    pub fn rich() -> Self {
        Self {
            num_clusters: 23,
            rays_per_cluster: 20,
            max_angle_spread: 5f64.to_radians(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0 || self.rays_per_cluster == 0 {
            return Err(SbarError::InvalidParameter(
                "clusters and rays per cluster must be at least 1".into(),
            ));
        }
        if !(0.0..=PI).contains(&self.max_angle_spread) {
            return Err(SbarError::InvalidParameter(format!(
                "max_angle_spread must lie in [0, pi], got {}",
                self.max_angle_spread
            )));
        }
        Ok(())
    }
}

/// Complex port channel `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(CVector);

impl ChannelVector {
    pub fn new(entries: CVector) -> Result<Self> {
        if entries.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(SbarError::InvalidParameter("channel entries must be finite".into()));
        }
        Ok(Self(entries))
    }

    pub fn from_vec(entries: Vec<C64>) -> Result<Self> {
        Self::new(CVector::from_vec(entries))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CVector::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &CVector {
        &self.0
    }

    pub fn into_inner(self) -> CVector {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.norm_squared()
    }
}

impl From<ChannelVector> for CVector {
    fn from(h: ChannelVector) -> Self {
        h.0
    }
}

/// Ordered port sequence `Ω` for `P` timeslots of `M` antennas.
///
/// Entry `p * M + m` is the port visited by antenna `m` in timeslot `p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PortSchedule {
    indices: Vec<usize>,
    pilots: usize,
    antennas: usize,
    num_ports: usize,
}

impl PortSchedule {
    /// Builds a schedule from 0-based port indices.
    pub fn new(indices: Vec<usize>, pilots: usize, antennas: usize, num_ports: usize) -> Result<Self> {
        if pilots == 0 || antennas == 0 {
            return Err(SbarError::InvalidParameter(
                "pilots and antennas must both be at least 1".into(),
            ));
        }
        if pilots * antennas > num_ports {
            return Err(SbarError::Capacity {
                requested: pilots * antennas,
                available: num_ports,
            });
        }
        if indices.len() != pilots * antennas {
            return Err(SbarError::ScheduleMismatch(format!(
                "schedule has {} entries, expected P*M = {}",
                indices.len(),
                pilots * antennas
            )));
        }
        let mut seen = HashSet::with_capacity(indices.len());
        for &i in &indices {
            if i >= num_ports {
                return Err(SbarError::ScheduleMismatch(format!(
                    "port {} outside 1..={num_ports}",
                    i + 1
                )));
            }
            if !seen.insert(i) {
                return Err(SbarError::ScheduleMismatch(format!("port {} scheduled twice", i + 1)));
            }
        }
        Ok(Self {
            indices,
            pilots,
            antennas,
            num_ports,
        })
    }

    /// Builds a schedule from 1-based port numbers.
    pub fn from_one_based(ports: &[usize], pilots: usize, antennas: usize, num_ports: usize) -> Result<Self> {
        let indices = ports
            .iter()
            .map(|&p| {
                p.checked_sub(1)
                    .ok_or_else(|| SbarError::ScheduleMismatch("port numbers start at 1".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices, pilots, antennas, num_ports)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn pilots(&self) -> usize {
        self.pilots
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn num_ports(&self) -> usize {
        self.num_ports
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Stacked binary switch matrix `S` of size `(P*M) x N`.
    pub fn switch_matrix(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.indices.len(), self.num_ports);
        for (row, &col) in self.indices.iter().enumerate() {
            s[(row, col)] = 1.0;
        }
        s
    }

    /// Per-timeslot `M x N` switch matrices.
    pub fn timeslot_matrices(&self) -> Vec<DMatrix<f64>> {
        self.indices
            .chunks(self.antennas)
            .map(|slot| {
                let mut s = DMatrix::zeros(self.antennas, self.num_ports);
                for (m, &n) in slot.iter().enumerate() {
                    s[(m, n)] = 1.0;
                }
                s
            })
            .collect()
    }

    /// Recovers `Ω` from a stacked switch matrix.
    pub fn from_switch_matrix(s: &DMatrix<f64>, pilots: usize, antennas: usize) -> Result<Self> {
        let mut indices = Vec::with_capacity(s.nrows());
        for row in 0..s.nrows() {
            let ones: Vec<usize> = (0..s.ncols()).filter(|&c| s[(row, c)] == 1.0).collect();
            let zeros = (0..s.ncols()).filter(|&c| s[(row, c)] == 0.0).count();
            if ones.len() != 1 || ones.len() + zeros != s.ncols() {
                return Err(SbarError::ScheduleMismatch(format!(
                    "row {} of the switch matrix is not a unit indicator",
                    row + 1
                )));
            }
            indices.push(ones[0]);
        }
        Self::new(indices, pilots, antennas, s.ncols())
    }

    /// `h(Ω)`, i.e. `S h`.
    pub fn sample(&self, channel: &ChannelVector) -> Result<CVector> {
        if channel.len() != self.num_ports {
            return Err(SbarError::ScheduleMismatch(format!(
                "schedule is for {} ports but channel has {}",
                self.num_ports,
                channel.len()
            )));
        }
        Ok(CVector::from_iterator(
            self.indices.len(),
            self.indices.iter().map(|&i| channel.entries()[i]),
        ))
    }
}

/// Received pilots `y` with the noise variance they were drawn at.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBatch {
    pub observations: CVector,
    pub noise_variance: f64,
}

impl PilotBatch {
    pub fn new(observations: CVector, noise_variance: f64) -> Result<Self> {
        if !(noise_variance >= 0.0) {
            return Err(SbarError::InvalidParameter(format!(
                "noise variance must be non-negative, got {noise_variance}"
            )));
        }
        Ok(Self {
            observations,
            noise_variance,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Steering vector for an arbitrary element count and spacing.
///
/// Entry `n` is `exp(j 2π/λ n d cos θ) / sqrt(N)`.
pub fn steering(num_ports: usize, wavelength: f64, spacing: f64, theta: f64) -> Result<ChannelVector> {
    if num_ports == 0 || !(wavelength > 0.0) {
        return Err(SbarError::InvalidGeometry(format!(
            "steering vector needs N >= 1 and a positive wavelength (N = {num_ports}, λ = {wavelength})"
        )));
    }
    let step = 2.0 * PI / wavelength * spacing * theta.cos();
    let amp = 1.0 / (num_ports as f64).sqrt();
    Ok(ChannelVector(CVector::from_fn(num_ports, |n, _| {
        C64::from_polar(amp, step * n as f64)
    })))
}

pub fn steering_vector(geometry: &ArrayGeometry, theta: f64) -> ChannelVector {
    steering(
        geometry.num_ports(),
        geometry.wavelength(),
        geometry.port_spacing(),
        theta,
    )
    .expect("validated geometry")
}

/// A single propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub gain: C64,
    pub angle: f64,
}

/// `h = sqrt(N / K) Σ_k g_k a(θ_k)` over the `K` supplied rays.
pub fn channel_from_rays(geometry: &ArrayGeometry, rays: &[Ray]) -> Result<ChannelVector> {
    if rays.is_empty() {
        return Err(SbarError::InvalidParameter("at least one ray is required".into()));
    }
    let n = geometry.num_ports();
    // sqrt(N / K) times the 1/sqrt(N) of each steering vector.
    let scale = 1.0 / (rays.len() as f64).sqrt();
    let mut h = vec![C64::new(0.0, 0.0); n];
    for ray in rays {
        // Re-anchor the phasor every 32 ports to keep the recurrence drift-free.
        let step = geometry.phase_step(ray.angle);
        let rot = C64::from_polar(1.0, step);
        let base = ray.gain * scale;
        for (block, chunk) in h.chunks_mut(32).enumerate() {
            let mut phasor = base * C64::from_polar(1.0, step * (block * 32) as f64);
            for entry in chunk.iter_mut() {
                *entry += phasor;
                phasor *= rot;
            }
        }
    }
    ChannelVector::from_vec(h)
}

/// Draws the rays of one SSC realisation.
pub fn draw_ssc_rays<R: Rng + ?Sized>(params: &SscParams, rng: &mut R) -> Vec<Ray> {
    let mut rays = Vec::with_capacity(params.num_clusters * params.rays_per_cluster);
    for _ in 0..params.num_clusters {
        let centre = rng.random_range(-PI..PI);
        for _ in 0..params.rays_per_cluster {
            let offset = if params.max_angle_spread > 0.0 {
                rng.random_range(-params.max_angle_spread..=params.max_angle_spread)
            } else {
                0.0
            };
            let gain = complex_gaussian(rng, 1.0);
            rays.push(Ray {
                gain,
                angle: centre + offset,
            });
        }
    }
    rays
}

pub fn generate_ssc_channel(geometry: &ArrayGeometry, params: &SscParams, seed: u64) -> Result<ChannelVector> {
    params.validate()?;
    let mut rng = rng_from_seed(seed);
    let rays = draw_ssc_rays(params, &mut rng);
    channel_from_rays(geometry, &rays)
}

/// Rich-scattering proxy: the SSC model with 23 clusters of 20 rays.
pub fn generate_rich_channel(geometry: &ArrayGeometry, seed: u64) -> Result<ChannelVector> {
    generate_ssc_channel(geometry, &SscParams::rich(), seed)
}

/// `y = h(Ω) + z`, `z ~ CN(0, σ² I)`.
pub fn receive_pilots(
    channel: &ChannelVector,
    schedule: &PortSchedule,
    noise_variance: f64,
    seed: u64,
) -> Result<PilotBatch> {
    if !(noise_variance >= 0.0) {
        return Err(SbarError::InvalidParameter(format!(
            "noise variance must be non-negative, got {noise_variance}"
        )));
    }
    let mut y = schedule.sample(channel)?;
    if noise_variance > 0.0 {
        let mut rng = rng_from_seed(seed);
        for v in y.iter_mut() {
            *v += complex_gaussian(&mut rng, noise_variance);
        }
    }
    PilotBatch::new(y, noise_variance)
}
