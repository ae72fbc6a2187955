//! Prior covariance kernels over the port line.

use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::channel::{ArrayGeometry, ChannelVector};
use crate::linalg::{self, CMatrix};
use crate::special::bessel_j;
use crate::{Result, SbarError, C64};

/// Relative threshold below which a negative eigenvalue counts as indefinite.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Diagonal floor applied to Bessel kernels that need clamping.
pub const BESSEL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelLabel {
    Exponential,
    Bessel,
    Covariance,
    Custom,
}

impl KernelLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            KernelLabel::Exponential => "exponential",
            KernelLabel::Bessel => "bessel",
            KernelLabel::Covariance => "covariance",
            KernelLabel::Custom => "custom",
        }
    }

    pub(crate) fn code(&self) -> u8 {
        match self {
            KernelLabel::Exponential => 0,
            KernelLabel::Bessel => 1,
            KernelLabel::Covariance => 2,
            KernelLabel::Custom => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => KernelLabel::Exponential,
            1 => KernelLabel::Bessel,
            2 => KernelLabel::Covariance,
            3 => KernelLabel::Custom,
            other => return Err(SbarError::Format(format!("unknown kernel label code {other}"))),
        })
    }
}

impl std::fmt::Display for KernelLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hyperparameters of the exponential and Bessel kernels.
///
/// `eta_sq` is used as printed in both formulas: it divides a squared
/// distance in the exponential kernel and a plain distance in the Bessel
/// kernel, so its unit differs between the two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelHyper {
    pub alpha_sq: f64,
    pub eta_sq: f64,
    pub bessel_order: u32,
}

impl KernelHyper {
    /// `α² = 1`, `η² = λ / 2π`, `ν = 0`.
    pub fn default_for(geometry: &ArrayGeometry) -> Self {
        Self {
            alpha_sq: 1.0,
            eta_sq: geometry.wavelength() / (2.0 * PI),
            bessel_order: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_sq > 0.0 && self.alpha_sq.is_finite()) {
            return Err(SbarError::InvalidParameter(format!(
                "alpha_sq must be positive, got {}",
                self.alpha_sq
            )));
        }
        if !(self.eta_sq > 0.0 && self.eta_sq.is_finite()) {
            return Err(SbarError::InvalidParameter(format!(
                "eta_sq must be positive, got {}",
                self.eta_sq
            )));
        }
        Ok(())
    }
}

/// Hermitian prior covariance `Σ` over `N` ports.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    matrix: CMatrix,
    label: KernelLabel,
    hyper: Option<KernelHyper>,
}

/// Smallest eigenvalue and spectral norm of a kernel.
#[derive(Debug, Clone, Copy)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub spectral_norm: f64,
}

impl PsdReport {
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue >= -PSD_TOLERANCE * self.spectral_norm
    }
}

impl Kernel {
    /// Wraps a user-supplied matrix. The matrix must be square and Hermitian
    /// to within `1e-12` relative; the stored copy is made exactly Hermitian.
    pub fn from_matrix(matrix: CMatrix, label: KernelLabel) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(SbarError::Shape(format!(
                "kernel must be a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(SbarError::InvalidParameter("kernel entries must be finite".into()));
        }
        let deviation = linalg::hermitian_deviation(&matrix);
        if deviation > 1e-12 * linalg::max_abs(&matrix).max(f64::MIN_POSITIVE) {
            return Err(SbarError::NotHermitian { deviation });
        }
        Ok(Self {
            matrix: linalg::hermitian_part(&matrix),
            label,
            hyper: None,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: CMatrix::identity(n, n),
            label: KernelLabel::Custom,
            hyper: None,
        }
    }

    /// Real diagonal kernel.
    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(*v, 0.0);
        }
        Self {
            matrix: m,
            label: KernelLabel::Custom,
            hyper: None,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn label(&self) -> KernelLabel {
        self.label
    }

    pub fn hyper(&self) -> Option<KernelHyper> {
        self.hyper
    }

    pub fn num_ports(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.matrix[(i, j)]
    }

    /// Real diagonal `Σ(n, n)`.
    pub fn variances(&self) -> Vec<f64> {
        (0..self.num_ports()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.variances().iter().sum()
    }

    pub fn psd_report(&self) -> PsdReport {
        let vals = linalg::hermitian_eigenvalues(&self.matrix);
        let min_eigenvalue = vals.first().copied().unwrap_or(0.0);
        let spectral_norm = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        PsdReport {
            min_eigenvalue,
            spectral_norm,
        }
    }

    /// Serialises the kernel.
    ///
    /// Layout (little-endian): magic `SBARKRN1`, `N: u64`, label `u8`,
    /// hyper-present `u8`, `alpha_sq: f64`, `eta_sq: f64`, `order: u32`, then
    /// `N*N` row-major `(re, im)` pairs of `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.num_ports();
        w.write_all(KERNEL_MAGIC)?;
        w.write_all(&(n as u64).to_le_bytes())?;
        w.write_all(&[self.label.code(), self.hyper.is_some() as u8])?;
        let hyper = self.hyper.unwrap_or(KernelHyper {
            alpha_sq: 0.0,
            eta_sq: 0.0,
            bessel_order: 0,
        });
        w.write_all(&hyper.alpha_sq.to_le_bytes())?;
        w.write_all(&hyper.eta_sq.to_le_bytes())?;
        w.write_all(&hyper.bessel_order.to_le_bytes())?;
        for i in 0..n {
            for j in 0..n {
                let z = self.matrix[(i, j)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(40 + 16 * self.num_ports().pow(2));
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != KERNEL_MAGIC {
            return Err(SbarError::Format("not a kernel file".into()));
        }
        let n = read_u64(&mut r)? as usize;
        if n == 0 || n > 1 << 16 {
            return Err(SbarError::Format(format!("implausible kernel size {n}")));
        }
        let mut flags = [0u8; 2];
        r.read_exact(&mut flags)?;
        let label = KernelLabel::from_code(flags[0])?;
        let alpha_sq = read_f64(&mut r)?;
        let eta_sq = read_f64(&mut r)?;
        let mut order = [0u8; 4];
        r.read_exact(&mut order)?;
        let mut matrix = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                matrix[(i, j)] = C64::new(re, im);
            }
        }
        if linalg::hermitian_deviation(&matrix) != 0.0 {
            return Err(SbarError::Format("stored kernel is not exactly Hermitian".into()));
        }
        Ok(Self {
            matrix,
            label,
            hyper: (flags[1] != 0).then_some(KernelHyper {
                alpha_sq,
                eta_sq,
                bessel_order: u32::from_le_bytes(order),
            }),
        })
    }
}

const KERNEL_MAGIC: &[u8; 8] = b"SBARKRN1";

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn stationary_kernel(
    geometry: &ArrayGeometry,
    hyper: KernelHyper,
    label: KernelLabel,
    profile: impl Fn(f64) -> f64,
) -> Kernel {
    let n = geometry.num_ports();
    // Depends only on |n - n'|, so evaluate each lag once.
    let lags: Vec<f64> = (0..n)
        .map(|k| hyper.alpha_sq * profile(geometry.port_position(k)))
        .collect();
    let matrix = CMatrix::from_fn(n, n, |i, j| C64::new(lags[i.abs_diff(j)], 0.0));
    Kernel {
        matrix,
        label,
        hyper: Some(hyper),
    }
}

/// `Σ(n, n') = α² exp(-|x_n - x_n'|² / η²)`.
pub fn exponential_kernel(geometry: &ArrayGeometry, hyper: KernelHyper) -> Result<Kernel> {
    hyper.validate()?;
    Ok(stationary_kernel(geometry, hyper, KernelLabel::Exponential, |dist| {
        (-dist * dist / hyper.eta_sq).exp()
    }))
}

/// `Σ(n, n') = α² J_ν(|x_n - x_n'| / η²)`, followed by [`regularize_psd`]
/// with floor [`BESSEL_FLOOR`].
pub fn bessel_kernel(geometry: &ArrayGeometry, hyper: KernelHyper) -> Result<Kernel> {
    hyper.validate()?;
    let raw = stationary_kernel(geometry, hyper, KernelLabel::Bessel, |dist| {
        bessel_j(hyper.bessel_order, dist / hyper.eta_sq)
    });
    regularize_psd(&raw, BESSEL_FLOOR)
}

/// Sample second moment `(1/T) Σ_t h_t h_t^H`.
pub fn covariance_kernel(samples: &[ChannelVector]) -> Result<Kernel> {
    let first = samples
        .first()
        .ok_or_else(|| SbarError::InsufficientData("covariance kernel needs at least one sample".into()))?;
    let n = first.len();
    if n == 0 {
        return Err(SbarError::Shape("channel samples are empty".into()));
    }
    if let Some(bad) = samples.iter().find(|h| h.len() != n) {
        return Err(SbarError::Shape(format!(
            "mixed sample lengths: {} and {}",
            n,
            bad.len()
        )));
    }
    let t = samples.len() as f64;
    let mut matrix = CMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let mut acc = C64::new(0.0, 0.0);
            for h in samples {
                let e = h.entries();
                acc += e[i] * e[j].conj();
            }
            acc /= t;
            if i == j {
                matrix[(i, i)] = C64::new(acc.re, 0.0);
            } else {
                matrix[(i, j)] = acc;
                matrix[(j, i)] = acc.conj();
            }
        }
    }
    Ok(Kernel {
        matrix,
        label: KernelLabel::Covariance,
        hyper: None,
    })
}

/// Clamps negative eigenvalues of an indefinite kernel.
///
/// If the smallest eigenvalue is below `-1e-8 ‖Σ‖₂`, eigenvalues are clamped
/// at zero and `floor · tr(Σ) / N` is added to the diagonal. Otherwise the
/// kernel is returned unchanged.
pub fn regularize_psd(kernel: &Kernel, floor: f64) -> Result<Kernel> {
    if !(floor >= 0.0) {
        return Err(SbarError::InvalidParameter(format!("floor must be non-negative, got {floor}")));
    }
    let m = &kernel.matrix;
    let deviation = linalg::hermitian_deviation(m);
    if deviation > 1e-12 * linalg::max_abs(m).max(f64::MIN_POSITIVE) {
        return Err(SbarError::NotHermitian { deviation });
    }
    let (vals, vecs) = linalg::hermitian_eigen(m);
    let norm = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= -PSD_TOLERANCE * norm {
        return Ok(kernel.clone());
    }
    let n = m.nrows();
    let shift = floor * kernel.trace() / n as f64;
    let mut scaled = vecs.clone();
    for (k, v) in vals.iter().enumerate() {
        let w = v.max(0.0);
        scaled.column_mut(k).scale_mut(w);
    }
    let mut rebuilt = scaled * vecs.adjoint();
    for i in 0..n {
        rebuilt[(i, i)] += C64::new(shift, 0.0);
    }
    Ok(Kernel {
        matrix: linalg::hermitian_part(&rebuilt),
        label: kernel.label,
        hyper: kernel.hyper,
    })
}
