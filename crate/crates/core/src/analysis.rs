//! Closed-form reconstruction error, NMSE bookkeeping and the Monte Carlo
//! experiment engine.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::baselines::{fas_ml, fas_omp, random_switch_matrix, selmmse, selmmse_schedule, DEFAULT_ML_ITERATIONS};
use crate::channel::{generate_ssc_channel, receive_pilots, ArrayGeometry, ChannelVector, PortSchedule, SscParams};
use crate::config::{EstimatorKind, EstimatorSpec, ExperimentConfig, GridPoint, KernelChoice, SnrReference};
use crate::kernels::{bessel_kernel, covariance_kernel, exponential_kernel, Kernel};
use crate::linalg::{self, hermitian_eigen, pairwise_sum, CMatrix, CVector};
use crate::sbar::{design_plan, reconstruct, CacheOutcome, PlanCache, SbarPlan};
use crate::seed::{complex_gaussian, derive_seed, rng_from_seed, stream};
use crate::{Result, SbarError, C64};

/// NMSE reported for exact recovery.
pub const NMSE_FLOOR_DB: f64 = -200.0;

/// Channels with a smaller norm are left out of the NMSE average.
pub const MIN_CHANNEL_NORM: f64 = 1e-12;

fn check_noise(noise_variance: f64) -> Result<()> {
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(SbarError::InvalidParameter(format!(
            "noise variance must be finite and non-negative, got {noise_variance}"
        )));
    }
    Ok(())
}

fn with_noise(mut a: CMatrix, noise_variance: f64) -> CMatrix {
    for i in 0..a.nrows() {
        a[(i, i)] += C64::new(noise_variance, 0.0);
    }
    a
}

/// `Σ_ij conj(a_ij) b_ij`, i.e. `Tr(aᴴ b)`.
fn frobenius_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Expected squared error of the linear reconstruction designed with `kernel`
/// when the channel is actually drawn from `CN(0, true_cov)`.
pub fn lemma1_mse(kernel: &Kernel, true_cov: &Kernel, schedule: &PortSchedule, noise_variance: f64) -> Result<f64> {
    check_noise(noise_variance)?;
    let n = kernel.num_ports();
    if true_cov.num_ports() != n || schedule.num_ports() != n {
        return Err(SbarError::Shape(format!(
            "kernel has {n} ports, true covariance {}, schedule {}",
            true_cov.num_ports(),
            schedule.num_ports()
        )));
    }
    let omega = schedule.indices();
    let sigma = kernel.matrix();
    let cov = true_cov.matrix();
    let gram = with_noise(linalg::submatrix(sigma, omega, omega), noise_variance);
    let chol = linalg::spd_factor(gram, "reconstruction error")?;
    let pi = chol.solve(&linalg::select_rows(sigma, omega));

    let observed = with_noise(linalg::submatrix(cov, omega, omega), noise_variance);
    let spread = frobenius_inner(&pi, &(observed * &pi)).re;
    let cross = frobenius_inner(&pi, &linalg::select_rows(cov, omega)).re;
    let e = spread - 2.0 * cross + true_cov.trace();
    if !e.is_finite() {
        return Err(SbarError::numerical("reconstruction error", f64::INFINITY));
    }
    Ok(e.max(0.0))
}

/// Smallest achievable expected squared error: full observation with the true
/// covariance as kernel.
pub fn lemma2_min_mse(true_cov: &Kernel, noise_variance: f64) -> Result<f64> {
    check_noise(noise_variance)?;
    let cov = true_cov.matrix();
    let chol = linalg::spd_factor(with_noise(cov.clone(), noise_variance), "minimum error")?;
    let x = chol.solve(cov);
    let reduction = frobenius_inner(cov, &x).re;
    Ok((true_cov.trace() - reduction).max(0.0))
}

/// Trial-averaged normalised error.
#[derive(Debug, Clone, PartialEq)]
pub struct NmseSummary {
    /// `10 log10` of the mean ratio, floored at [`NMSE_FLOOR_DB`].
    pub nmse_db: f64,
    pub mean_ratio: f64,
    /// Standard error of the mean ratio.
    pub stderr_ratio: f64,
    /// Standard error transported to dB to first order.
    pub stderr_db: f64,
    pub trials: usize,
    /// Trials skipped because the true channel was numerically zero.
    pub excluded: usize,
}

fn to_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
    } else {
        NMSE_FLOOR_DB
    }
}

/// Summarises per-trial ratios `‖h - ĥ‖² / ‖h‖²`; `None` marks an excluded trial.
pub fn summarize_ratios(ratios: &[Option<f64>]) -> Result<NmseSummary> {
    let kept: Vec<f64> = ratios.iter().flatten().copied().collect();
    let excluded = ratios.len() - kept.len();
    if kept.is_empty() {
        return Err(SbarError::InsufficientData(format!(
            "no usable trials ({excluded} excluded for a zero channel)"
        )));
    }
    let count = kept.len() as f64;
    let mean = pairwise_sum(&kept) / count;
    let stderr_ratio = if kept.len() > 1 {
        let dev: Vec<f64> = kept.iter().map(|r| (r - mean).powi(2)).collect();
        (pairwise_sum(&dev) / (count - 1.0) / count).sqrt()
    } else {
        0.0
    };
    let stderr_db = if mean > 0.0 {
        10.0 / std::f64::consts::LN_10 * stderr_ratio / mean
    } else {
        0.0
    };
    Ok(NmseSummary {
        nmse_db: to_db(mean),
        mean_ratio: mean,
        stderr_ratio,
        stderr_db,
        trials: kept.len(),
        excluded,
    })
}

/// Normalised error of one reconstruction, or `None` for a zero channel.
pub fn trial_ratio(estimate: &ChannelVector, truth: &ChannelVector) -> Result<Option<f64>> {
    if estimate.len() != truth.len() {
        return Err(SbarError::Shape(format!(
            "estimate has {} entries, channel {}",
            estimate.len(),
            truth.len()
        )));
    }
    let power = truth.norm_sqr();
    if power.sqrt() < MIN_CHANNEL_NORM {
        return Ok(None);
    }
    Ok(Some((estimate.entries() - truth.entries()).norm_squared() / power))
}

/// NMSE over `(estimate, truth)` pairs.
pub fn nmse(pairs: &[(ChannelVector, ChannelVector)]) -> Result<NmseSummary> {
    if pairs.is_empty() {
        return Err(SbarError::InsufficientData("NMSE needs at least one trial".into()));
    }
    let ratios = pairs
        .iter()
        .map(|(est, truth)| trial_ratio(est, truth))
        .collect::<Result<Vec<_>>>()?;
    summarize_ratios(&ratios)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    pub analytic_mse: f64,
    pub monte_carlo_mse: f64,
    pub monte_carlo_stderr: f64,
    pub min_mse: f64,
    pub trials: usize,
}

const MONTE_CARLO_CHUNK: usize = 4096;

/// `L` with `L Lᴴ = cov`, from the eigendecomposition (negative eigenvalues
/// clipped to zero).
fn covariance_root(cov: &Kernel) -> CMatrix {
    let (vals, mut vecs) = hermitian_eigen(cov.matrix());
    for (j, v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        vecs.column_mut(j).scale_mut(s);
    }
    vecs
}

/// Empirical squared error of the kernel-designed reconstruction over
/// channels drawn from `CN(0, true_cov)`, next to the closed forms.
pub fn monte_carlo_mse(
    kernel: &Kernel,
    true_cov: &Kernel,
    schedule: &PortSchedule,
    noise_variance: f64,
    trials: usize,
    seed: u64,
) -> Result<MseReport> {
    if trials < 2 {
        return Err(SbarError::InvalidParameter("Monte Carlo needs at least two trials".into()));
    }
    let analytic_mse = lemma1_mse(kernel, true_cov, schedule, noise_variance)?;
    let min_mse = lemma2_min_mse(true_cov, noise_variance).unwrap_or(f64::NAN);
    let plan = SbarPlan::for_schedule(kernel, schedule.clone(), noise_variance)?;
    let wh = plan.weights.adjoint();
    let root = covariance_root(true_cov);
    let n = kernel.num_ports();
    let omega = schedule.indices();
    let chunks = trials.div_ceil(MONTE_CARLO_CHUNK);

    let errors: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, stream::MONTE_CARLO, c as u64));
            let count = MONTE_CARLO_CHUNK.min(trials - c * MONTE_CARLO_CHUNK);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let z = CVector::from_fn(n, |_, _| complex_gaussian(&mut rng, 1.0));
                let h = &root * z;
                let y = CVector::from_fn(omega.len(), |i, _| {
                    h[omega[i]] + complex_gaussian(&mut rng, noise_variance)
                });
                out.push((&h - &wh * y).norm_squared());
            }
            out
        })
        .collect();

    let t = trials as f64;
    let mean = pairwise_sum(&errors) / t;
    let dev: Vec<f64> = errors.iter().map(|e| (e - mean).powi(2)).collect();
    Ok(MseReport {
        analytic_mse,
        monte_carlo_mse: mean,
        monte_carlo_stderr: (pairwise_sum(&dev) / (t - 1.0) / t).sqrt(),
        min_mse,
        trials,
    })
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub estimator: String,
    pub channel_model: String,
    pub kernel: String,
    pub num_ports: usize,
    pub antennas: usize,
    pub pilots: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub nmse_db: f64,
    pub nmse_stderr: f64,
    pub seed: u64,
    pub excluded: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub results: Vec<ExperimentResult>,
    /// Cache files that were unreadable or stale and have been redesigned.
    pub rebuilt_plans: Vec<PathBuf>,
    /// `E‖h‖²` estimated from held-out channels.
    pub mean_channel_power: f64,
}

pub const CSV_HEADER: &str = "estimator,channel_model,kernel,N,M,P,snr_db,trials,nmse_db,nmse_stderr,seed";

pub fn write_csv<W: Write>(mut w: W, results: &[ExperimentResult]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{:.6},{:.6},{}",
            r.estimator,
            r.channel_model,
            r.kernel,
            r.num_ports,
            r.antennas,
            r.pilots,
            r.snr_db,
            r.trials,
            r.nmse_db,
            r.nmse_stderr,
            r.seed
        )?;
    }
    Ok(())
}

/// Mean `‖h‖²` over `count` channels from the power-estimation stream.
pub fn estimate_mean_power(geometry: &ArrayGeometry, params: &SscParams, master_seed: u64, count: usize) -> Result<f64> {
    let powers = (0..count)
        .into_par_iter()
        .map(|i| {
            generate_ssc_channel(geometry, params, derive_seed(master_seed, stream::POWER, i as u64))
                .map(|h| h.norm_sqr())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&powers) / count as f64)
}

/// Noise variance for `snr_db` given the mean channel power.
pub fn noise_variance_for(mean_power: f64, num_ports: usize, snr_db: f64, reference: SnrReference) -> f64 {
    let reference_power = match reference {
        SnrReference::PerPort => mean_power / num_ports as f64,
        SnrReference::Total => mean_power,
    };
    reference_power / 10f64.powf(snr_db / 10.0)
}

fn build_kernel(
    spec: &EstimatorSpec,
    geometry: &ArrayGeometry,
    params: &SscParams,
    master_seed: u64,
) -> Result<Kernel> {
    match spec.kernel {
        Some(KernelChoice::Identity) => Ok(Kernel::identity(geometry.num_ports())),
        Some(KernelChoice::Exponential) => exponential_kernel(geometry, spec.hyper(geometry)),
        Some(KernelChoice::Bessel) => bessel_kernel(geometry, spec.hyper(geometry)),
        Some(KernelChoice::Covariance) => {
            let samples = (0..spec.training_count())
                .map(|i| generate_ssc_channel(geometry, params, derive_seed(master_seed, stream::TRAINING, i as u64)))
                .collect::<Result<Vec<_>>>()?;
            covariance_kernel(&samples)
        }
        None => Err(SbarError::Config("sbar estimator without a kernel".into())),
    }
}

fn noise_seed(master: u64, grid: usize, trial: usize) -> u64 {
    derive_seed(derive_seed(master, stream::NOISE, grid as u64), 0, trial as u64)
}

fn schedule_seed(master: u64, grid: usize, trial: usize) -> u64 {
    derive_seed(derive_seed(master, stream::SCHEDULE, grid as u64), 0, trial as u64)
}

/// Runs every estimator at every grid point.
///
/// Channel realisations are shared by all grid points and estimators, and the
/// noise of trial `t` at a grid point is the same for every estimator.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let geometry = config.geometry.geometry()?;
    let params = config.channel.params()?;
    let n = geometry.num_ports();
    let m = config.geometry.antennas;
    let master = config.run.master_seed;
    let mean_power = estimate_mean_power(&geometry, &params, master, config.run.power_estimation_channels)?;

    let channels = (0..config.run.trials)
        .into_par_iter()
        .map(|t| generate_ssc_channel(&geometry, &params, derive_seed(master, stream::CHANNEL, t as u64)))
        .collect::<Result<Vec<_>>>()?;

    let cache = config.run.plan_cache_dir.as_ref().map(PlanCache::new);
    let grid = config.grid();
    let mut output = ExperimentOutput {
        mean_channel_power: mean_power,
        ..Default::default()
    };

    for spec in &config.estimators {
        let kernel = match spec.kind {
            EstimatorKind::Sbar => Some(build_kernel(spec, &geometry, &params, master)?),
            _ => None,
        };
        for (g, point) in grid.iter().enumerate() {
            let &GridPoint { pilots, snr_db } = point;
            let sigma2 = noise_variance_for(mean_power, n, snr_db, config.run.snr_reference);
            let plan = match &kernel {
                Some(k) => Some(match &cache {
                    Some(cache) => {
                        let (plan, outcome) = cache.load_or_design(k, pilots, m, sigma2)?;
                        if outcome == CacheOutcome::Rebuilt {
                            output.rebuilt_plans.push(cache.path_for(k, pilots, m, sigma2));
                        }
                        plan
                    }
                    None => design_plan(k, pilots, m, sigma2)?,
                }),
                None => None,
            };
            let sparsity = spec
                .sparsity
                .unwrap_or(2 * params.num_clusters)
                .min(pilots * m);
            let iters = spec.max_iters.unwrap_or(DEFAULT_ML_ITERATIONS);
            let fixed_schedule = match spec.kind {
                EstimatorKind::Selmmse => Some(selmmse_schedule(n, pilots, m)?),
                _ => None,
            };

            let ratios = channels
                .par_iter()
                .enumerate()
                .map(|(t, h)| {
                    let nseed = noise_seed(master, g, t);
                    let estimate = match spec.kind {
                        EstimatorKind::Sbar => {
                            let plan = plan.as_ref().expect("plan designed for sbar");
                            reconstruct(plan, &receive_pilots(h, &plan.schedule, sigma2, nseed)?)?
                        }
                        EstimatorKind::FasOmp => {
                            let s = random_switch_matrix(n, pilots, m, schedule_seed(master, g, t))?;
                            let y = receive_pilots(h, &s, sigma2, nseed)?;
                            fas_omp(&y, &s, &geometry, sparsity)?.reconstructed
                        }
                        EstimatorKind::FasMl => {
                            let s = random_switch_matrix(n, pilots, m, schedule_seed(master, g, t))?;
                            let y = receive_pilots(h, &s, sigma2, nseed)?;
                            fas_ml(&y, &s, &geometry, sparsity, iters)?.reconstructed
                        }
                        EstimatorKind::Selmmse => {
                            let s = fixed_schedule.as_ref().expect("equally spaced schedule");
                            selmmse(&receive_pilots(h, s, sigma2, nseed)?, &geometry, pilots, m)?
                        }
                    };
                    trial_ratio(&estimate, h)
                })
                .collect::<Result<Vec<_>>>()?;
            let summary = summarize_ratios(&ratios)?;
            output.results.push(ExperimentResult {
                estimator: spec.display_label(),
                channel_model: config.channel.model.to_string(),
                kernel: spec.kernel_name().to_string(),
                num_ports: n,
                antennas: m,
                pilots,
                snr_db,
                trials: summary.trials,
                nmse_db: summary.nmse_db,
                nmse_stderr: summary.stderr_db,
                seed: master,
                excluded: summary.excluded,
            });
        }
    }
    Ok(output)
}
