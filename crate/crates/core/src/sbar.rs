//! Two-stage successive Bayesian reconstructor.
//!
//! Stage 1 ([`design_plan`]) runs offline: it greedily picks `P·M` ports by
//! maximum posterior variance and precomputes the weight matrix
//! `W = (Σ(Ω,Ω) + σ² I)⁻¹ Σ(Ω,:)`. Neither step reads channel data. Stage 2
//! ([`reconstruct`]) is the linear map `ĥ = Wᴴ y`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::channel::{ChannelVector, PilotBatch, PortSchedule};
use crate::gp;
use crate::kernels::{read_f64, Kernel, KernelLabel};
use crate::linalg::{self, CMatrix};
use crate::{Result, SbarError, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct SbarPlan {
    pub schedule: PortSchedule,
    /// `(P·M) x N` regression weights.
    pub weights: CMatrix,
    pub design_noise_variance: f64,
    pub kernel_label: KernelLabel,
    /// SHA-256 of the serialised kernel the plan was designed from.
    pub kernel_hash: [u8; 32],
}

pub fn kernel_hash(kernel: &Kernel) -> [u8; 32] {
    Sha256::digest(kernel.to_bytes()).into()
}

fn weights_for(kernel: &Kernel, omega: &[usize], noise_variance: f64) -> Result<CMatrix> {
    let mut gram = linalg::submatrix(kernel.matrix(), omega, omega);
    for i in 0..omega.len() {
        gram[(i, i)] += C64::new(noise_variance, 0.0);
    }
    let chol = linalg::spd_factor(gram, "weight calculation")?;
    Ok(chol.solve(&linalg::select_rows(kernel.matrix(), omega)))
}

/// Greedy offline design of the port schedule and weights.
pub fn design_plan(kernel: &Kernel, pilots: usize, antennas: usize, noise_variance: f64) -> Result<SbarPlan> {
    let n = kernel.num_ports();
    if pilots == 0 || antennas == 0 {
        return Err(SbarError::InvalidParameter("pilots and antennas must both be at least 1".into()));
    }
    let total = pilots * antennas;
    if total > n {
        return Err(SbarError::Capacity {
            requested: total,
            available: n,
        });
    }
    let mut omega = Vec::with_capacity(total);
    for _ in 0..total {
        let vars = gp::posterior_variances(kernel, &omega, noise_variance)?;
        omega.push(gp::argmax_unmeasured(&vars, &omega)?);
    }
    let weights = weights_for(kernel, &omega, noise_variance)?;
    Ok(SbarPlan {
        schedule: PortSchedule::new(omega, pilots, antennas, n)?,
        weights,
        design_noise_variance: noise_variance,
        kernel_label: kernel.label(),
        kernel_hash: kernel_hash(kernel),
    })
}

impl SbarPlan {
    /// Weights for a caller-chosen schedule (no greedy selection).
    pub fn for_schedule(kernel: &Kernel, schedule: PortSchedule, noise_variance: f64) -> Result<Self> {
        if schedule.num_ports() != kernel.num_ports() {
            return Err(SbarError::ScheduleMismatch(format!(
                "schedule is for {} ports, kernel for {}",
                schedule.num_ports(),
                kernel.num_ports()
            )));
        }
        let weights = weights_for(kernel, schedule.indices(), noise_variance)?;
        Ok(Self {
            schedule,
            weights,
            design_noise_variance: noise_variance,
            kernel_label: kernel.label(),
            kernel_hash: kernel_hash(kernel),
        })
    }

    pub fn num_ports(&self) -> usize {
        self.weights.ncols()
    }

    /// Serialises the plan.
    ///
    /// Layout (little-endian): magic `SBARPLN1`, `N`, `P`, `M` as `u32`,
    /// `σ²: f64`, 32-byte kernel hash, kernel label `u8`, `Ω` as `P·M` `u32`,
    /// then `W` row-major as `(re, im)` `f64` pairs.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(PLAN_MAGIC)?;
        for v in [self.num_ports(), self.schedule.pilots(), self.schedule.antennas()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&self.design_noise_variance.to_le_bytes())?;
        w.write_all(&self.kernel_hash)?;
        w.write_all(&[self.kernel_label.code()])?;
        for &i in self.schedule.indices() {
            w.write_all(&(i as u32).to_le_bytes())?;
        }
        for i in 0..self.weights.nrows() {
            for j in 0..self.weights.ncols() {
                let z = self.weights[(i, j)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != PLAN_MAGIC {
            return Err(SbarError::Format("not a plan file".into()));
        }
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let [n, p, m] = dims;
        if n == 0 || p == 0 || m == 0 || p * m > n || n > 1 << 16 {
            return Err(SbarError::Format(format!("implausible plan header N={n} P={p} M={m}")));
        }
        let sigma2 = read_f64(&mut r)?;
        let mut kernel_hash = [0u8; 32];
        r.read_exact(&mut kernel_hash)?;
        let mut label = [0u8; 1];
        r.read_exact(&mut label)?;
        let kernel_label = KernelLabel::from_code(label[0])?;
        let mut indices = Vec::with_capacity(p * m);
        for _ in 0..p * m {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            indices.push(u32::from_le_bytes(b) as usize);
        }
        let schedule = PortSchedule::new(indices, p, m, n).map_err(|e| SbarError::Format(e.to_string()))?;
        let mut weights = CMatrix::zeros(p * m, n);
        for i in 0..p * m {
            for j in 0..n {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                weights[(i, j)] = C64::new(re, im);
            }
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(SbarError::Format("trailing bytes after plan".into()));
        }
        Ok(Self {
            schedule,
            weights,
            design_noise_variance: sigma2,
            kernel_label,
            kernel_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(fs::read(path)?.as_slice())
    }
}

const PLAN_MAGIC: &[u8; 8] = b"SBARPLN1";

/// `ĥ = Wᴴ y`.
pub fn reconstruct(plan: &SbarPlan, pilots: &PilotBatch) -> Result<ChannelVector> {
    if pilots.len() != plan.weights.nrows() {
        return Err(SbarError::ScheduleMismatch(format!(
            "plan expects {} pilots, got {}",
            plan.weights.nrows(),
            pilots.len()
        )));
    }
    ChannelVector::new(plan.weights.adjoint() * &pilots.observations)
}

/// One binary `M x N` switch matrix per timeslot.
pub fn schedule_to_switch_matrices(plan: &SbarPlan) -> Vec<DMatrix<f64>> {
    plan.schedule.timeslot_matrices()
}

/// Outcome of a [`PlanCache`] lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Miss,
    /// A cache file existed but could not be read; it was replaced.
    Rebuilt,
}

/// Directory of plan files keyed by a hash of `(kernel, P, M, σ²)`.
#[derive(Debug, Clone)]
pub struct PlanCache {
    dir: PathBuf,
}

impl PlanCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(kernel: &Kernel, pilots: usize, antennas: usize, noise_variance: f64) -> String {
        let mut hasher = Sha256::new();
        hasher.update(kernel.to_bytes());
        hasher.update((pilots as u64).to_le_bytes());
        hasher.update((antennas as u64).to_le_bytes());
        hasher.update(noise_variance.to_le_bytes());
        let digest = hasher.finalize();
        digest[..12].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn path_for(&self, kernel: &Kernel, pilots: usize, antennas: usize, noise_variance: f64) -> PathBuf {
        self.dir
            .join(format!("plan-{}.bin", Self::key(kernel, pilots, antennas, noise_variance)))
    }

    /// Loads the cached plan, or designs and stores it.
    pub fn load_or_design(
        &self,
        kernel: &Kernel,
        pilots: usize,
        antennas: usize,
        noise_variance: f64,
    ) -> Result<(SbarPlan, CacheOutcome)> {
        let path = self.path_for(kernel, pilots, antennas, noise_variance);
        let mut outcome = CacheOutcome::Miss;
        if path.exists() {
            match SbarPlan::load(&path) {
                Ok(plan)
                    if plan.kernel_hash == kernel_hash(kernel)
                        && plan.schedule.pilots() == pilots
                        && plan.schedule.antennas() == antennas
                        && plan.design_noise_variance.to_bits() == noise_variance.to_bits() =>
                {
                    return Ok((plan, CacheOutcome::Hit));
                }
                _ => outcome = CacheOutcome::Rebuilt,
            }
        }
        let plan = design_plan(kernel, pilots, antennas, noise_variance)?;
        fs::create_dir_all(&self.dir)?;
        plan.save(&path)?;
        Ok((plan, outcome))
    }
}
