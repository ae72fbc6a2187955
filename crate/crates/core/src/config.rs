//! Experiment descriptions, read from and written back to TOML.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ArrayGeometry, SscParams};
use crate::kernels::KernelHyper;
use crate::{Result, SbarError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelModel {
    Ssc,
    Rich,
}

impl fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelModel::Ssc => "ssc",
            ChannelModel::Rich => "rich",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub model: ChannelModel,
    /// Overrides for the cluster model. Missing values take the defaults of
    /// the chosen model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rays_per_cluster: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_angle_spread_deg: Option<f64>,
}

impl ChannelSection {
    pub fn params(&self) -> Result<SscParams> {
        let base = match self.model {
            ChannelModel::Ssc => SscParams::sparse_default(),
            ChannelModel::Rich => SscParams::rich(),
        };
        SscParams::new(
            self.clusters.unwrap_or(base.num_clusters),
            self.rays_per_cluster.unwrap_or(base.rays_per_cluster),
            self.max_angle_spread_deg
                .map(f64::to_radians)
                .unwrap_or(base.max_angle_spread),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub ports: usize,
    pub antennas: usize,
    #[serde(default = "one")]
    pub wavelength: f64,
    /// Aperture length in the same unit as `wavelength`.
    #[serde(default = "ten")]
    pub aperture: f64,
}

fn one() -> f64 {
    1.0
}

fn ten() -> f64 {
    10.0
}

impl GeometrySection {
    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(self.ports, self.wavelength, self.aperture)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Snr,
    Pilots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    /// Grid along `axis`; pilot counts must be whole numbers.
    pub values: Vec<f64>,
    /// Fixed SNR when sweeping pilots.
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    /// Fixed pilot count when sweeping SNR.
    #[serde(default = "default_pilots")]
    pub pilots: usize,
}

fn default_snr() -> f64 {
    20.0
}

fn default_pilots() -> usize {
    10
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub pilots: usize,
    pub snr_db: f64,
}

impl SweepSection {
    pub fn points(&self) -> Vec<GridPoint> {
        self.values
            .iter()
            .map(|&v| match self.axis {
                SweepAxis::Snr => GridPoint {
                    pilots: self.pilots,
                    snr_db: v,
                },
                SweepAxis::Pilots => GridPoint {
                    pilots: v as usize,
                    snr_db: self.snr_db,
                },
            })
            .collect()
    }
}

/// Which signal power the SNR is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SnrReference {
    /// `σ² = E‖h‖² / (N · SNR)`: SNR per observed port.
    #[default]
    PerPort,
    /// `σ² = E‖h‖² / SNR`.
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub trials: usize,
    pub master_seed: u64,
    pub output: PathBuf,
    #[serde(default)]
    pub snr_reference: SnrReference,
    #[serde(default = "default_power_channels")]
    pub power_estimation_channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_cache_dir: Option<PathBuf>,
}

fn default_power_channels() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Sbar,
    FasOmp,
    FasMl,
    Selmmse,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Sbar => "sbar",
            EstimatorKind::FasOmp => "fas-omp",
            EstimatorKind::FasMl => "fas-ml",
            EstimatorKind::Selmmse => "selmmse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelChoice {
    Identity,
    Exponential,
    Bessel,
    Covariance,
}

impl KernelChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelChoice::Identity => "identity",
            KernelChoice::Exponential => "exponential",
            KernelChoice::Bessel => "bessel",
            KernelChoice::Covariance => "covariance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Name used in the CSV; defaults to the kind, with the kernel appended
    /// for S-BAR.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bessel_order: Option<u32>,
    /// Number of held-out channels behind the covariance kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_channels: Option<usize>,
    /// Path count for OMP and ML; defaults to twice the cluster count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            label: None,
            kernel: None,
            alpha_sq: None,
            eta_sq: None,
            bessel_order: None,
            training_channels: None,
            sparsity: None,
            max_iters: None,
        }
    }

    pub fn sbar(kernel: KernelChoice) -> Self {
        Self {
            kernel: Some(kernel),
            ..Self::new(EstimatorKind::Sbar)
        }
    }

    pub fn display_label(&self) -> String {
        if let Some(label) = &self.label {
            return label.clone();
        }
        match (self.kind, self.kernel) {
            (EstimatorKind::Sbar, Some(k)) => format!("sbar-{}", k.as_str()),
            (kind, _) => kind.as_str().to_string(),
        }
    }

    pub fn kernel_name(&self) -> &'static str {
        match (self.kind, self.kernel) {
            (EstimatorKind::Sbar, Some(k)) => k.as_str(),
            _ => "none",
        }
    }

    pub fn hyper(&self, geometry: &ArrayGeometry) -> KernelHyper {
        let base = KernelHyper::default_for(geometry);
        KernelHyper {
            alpha_sq: self.alpha_sq.unwrap_or(base.alpha_sq),
            eta_sq: self.eta_sq.unwrap_or(base.eta_sq),
            bessel_order: self.bessel_order.unwrap_or(base.bessel_order),
        }
    }

    pub fn training_count(&self) -> usize {
        self.training_channels.unwrap_or(100)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: ChannelSection,
    pub geometry: GeometrySection,
    pub sweep: SweepSection,
    pub run: RunSection,
    #[serde(rename = "estimator")]
    pub estimators: Vec<EstimatorSpec>,
}

fn field_error(path: impl fmt::Display, msg: impl fmt::Display) -> SbarError {
    SbarError::Config(format!("{path}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SbarError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SbarError::Config(e.to_string()))
    }

    /// Full-size setting: 256 ports.
    pub fn paper_scale(mut self) -> Self {
        self.geometry.ports = 256;
        self
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        self.sweep.points()
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.params().map_err(|e| field_error("channel", e))?;
        let geometry = self.geometry.geometry().map_err(|e| field_error("geometry", e))?;
        if self.geometry.antennas == 0 {
            return Err(field_error("geometry.antennas", "must be at least 1"));
        }
        if self.sweep.values.is_empty() {
            return Err(field_error("sweep.values", "grid must not be empty"));
        }
        if self.sweep.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(field_error("sweep.values", "grid must be strictly increasing"));
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return Err(field_error("sweep.values", "grid values must be finite"));
        }
        if !self.sweep.snr_db.is_finite() {
            return Err(field_error("sweep.snr_db", "must be finite"));
        }
        if self.sweep.axis == SweepAxis::Pilots
            && self.sweep.values.iter().any(|&v| v < 1.0 || v.fract() != 0.0)
        {
            return Err(field_error("sweep.values", "pilot counts must be positive integers"));
        }
        let max_pilots = self.grid().iter().map(|g| g.pilots).max().unwrap_or(0);
        if max_pilots == 0 {
            return Err(field_error("sweep.pilots", "must be at least 1"));
        }
        let max_rows = max_pilots * self.geometry.antennas;
        if max_rows > self.geometry.ports {
            return Err(field_error(
                "sweep",
                format!(
                    "{max_pilots} pilots x {} antennas exceeds {} ports",
                    self.geometry.antennas, self.geometry.ports
                ),
            ));
        }
        if self.run.trials == 0 {
            return Err(field_error("run.trials", "must be at least 1"));
        }
        if self.run.power_estimation_channels == 0 {
            return Err(field_error("run.power_estimation_channels", "must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(field_error("estimator", "at least one estimator is required"));
        }
        let mut labels = Vec::new();
        for (i, est) in self.estimators.iter().enumerate() {
            let at = |field: &str| format!("estimator[{i}].{field}");
            match est.kind {
                EstimatorKind::Sbar => {
                    let Some(kernel) = est.kernel else {
                        return Err(field_error(at("kernel"), "required for sbar"));
                    };
                    if matches!(kernel, KernelChoice::Exponential | KernelChoice::Bessel) {
                        est.hyper(&geometry).validate().map_err(|e| field_error(at("kernel"), e))?;
                    }
                    if kernel == KernelChoice::Covariance && est.training_count() == 0 {
                        return Err(field_error(at("training_channels"), "must be at least 1"));
                    }
                }
                EstimatorKind::FasOmp | EstimatorKind::FasMl => {
                    if est.kernel.is_some() {
                        return Err(field_error(at("kernel"), "only sbar takes a kernel"));
                    }
                    if est.sparsity == Some(0) {
                        return Err(field_error(at("sparsity"), "must be at least 1"));
                    }
                }
                EstimatorKind::Selmmse => {
                    if est.kernel.is_some() {
                        return Err(field_error(at("kernel"), "only sbar takes a kernel"));
                    }
                }
            }
            if est.kind != EstimatorKind::FasMl && est.max_iters.is_some() {
                return Err(field_error(at("max_iters"), "only fas-ml takes an iteration cap"));
            }
            let label = est.display_label();
            if label.is_empty() || label.contains([',', '\n', ' ']) {
                return Err(field_error(at("label"), "must be non-empty without commas or whitespace"));
            }
            if labels.contains(&label) {
                return Err(field_error(at("label"), format!("duplicate estimator label `{label}`")));
            }
            labels.push(label);
        }
        Ok(())
    }
}
