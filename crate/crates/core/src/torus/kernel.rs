use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::torus::fft::FftNd;
use crate::torus::geometry::min_image;
use crate::torus::interp::interpolate_values;
use crate::torus::quadrature::unit_cube_radial_average;
use crate::torus::TorusGeometry;

/// Pair distances below this floor are clamped when evaluating singular
/// kernels pointwise.
pub const PAIR_DISTANCE_FLOOR: f64 = 1e-12;

/// One Fourier mode of a kernel, `g(x) = Σ_k a_k exp(2πi k·x / T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub mode: Vec<i64>,
    pub coefficient: f64,
}

/// How a kernel is specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum KernelForm {
    /// Finite Fourier series with real, even coefficients.
    Fourier { modes: Vec<FourierMode> },
    /// Node values in row-major order.
    Tabulated { values: Vec<f64> },
    /// Periodized `|x|^{-(d-2s)}` with zero mean.
    RieszPeriodic { s: f64, images: usize },
}

/// Pairwise interaction `g` on a torus grid.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    geometry: TorusGeometry,
    form: KernelForm,
    table: Vec<f64>,
    spectrum: Vec<Complex64>,
    riesz_mean: f64,
    fft: FftNd,
}

#[derive(Serialize, Deserialize)]
struct KernelDocument {
    geometry: TorusGeometry,
    #[serde(flatten)]
    form: KernelForm,
}

impl KernelSpec {
    pub fn new(geometry: TorusGeometry, form: KernelForm) -> Result<Self> {
        let mut riesz_mean = 0.0;
        let table = match &form {
            KernelForm::Fourier { modes } => {
                check_fourier(&geometry, modes)?;
                (0..geometry.len())
                    .map(|i| fourier_eval(&geometry, modes, &geometry.node(i)))
                    .collect()
            }
            KernelForm::Tabulated { values } => {
                if values.len() != geometry.len() {
                    return Err(Error::Shape(format!(
                        "kernel table has {} values, grid has {}",
                        values.len(),
                        geometry.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Validation("kernel table has non-finite values".into()));
                }
                values.clone()
            }
            KernelForm::RieszPeriodic { s, images } => {
                let d = geometry.dim() as f64;
                if !(*s > 0.0 && *s < 1.0 && 2.0 * s < d) {
                    return Err(invalid(format!("Riesz exponent s={s} outside (0, min(1, d/2))")));
                }
                let (t, m) = riesz_table(&geometry, *s, *images);
                riesz_mean = m;
                t
            }
        };
        let fft = FftNd::new(&geometry.shape());
        let dv = geometry.cell_volume();
        let spectrum = fft.forward_real(&table).into_iter().map(|z| z * dv).collect();
        Ok(Self { geometry, form, table, spectrum, riesz_mean, fft })
    }

    /// `g ≡ 0`.
    pub fn zero(geometry: TorusGeometry) -> Self {
        Self::new(geometry, KernelForm::Fourier { modes: vec![] }).expect("zero kernel")
    }

    /// `g(x) = amplitude · Σ_a cos(2π x_a / T)`.
    pub fn cosine(geometry: TorusGeometry, amplitude: f64) -> Result<Self> {
        let d = geometry.dim();
        let mut modes = Vec::new();
        for a in 0..d {
            for sign in [1, -1] {
                let mut k = vec![0; d];
                k[a] = sign;
                modes.push(FourierMode { mode: k, coefficient: 0.5 * amplitude });
            }
        }
        Self::new(geometry, KernelForm::Fourier { modes })
    }

    pub fn tabulated(geometry: TorusGeometry, values: Vec<f64>) -> Result<Self> {
        Self::new(geometry, KernelForm::Tabulated { values })
    }

    /// Tabulate `f` at the grid nodes.
    pub fn from_fn(geometry: TorusGeometry, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..geometry.len()).map(|i| f(&geometry.node(i))).collect();
        Self::tabulated(geometry, values)
    }

    pub fn riesz_periodic(geometry: TorusGeometry, s: f64, images: usize) -> Result<Self> {
        Self::new(geometry, KernelForm::RieszPeriodic { s, images })
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn form(&self) -> &KernelForm {
        &self.form
    }

    /// Node values `g(x_i)` (cell-averaged at the origin for Riesz kernels).
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Fourier coefficients `ĝ_k = Δ · DFT(table)_k`, so `ĝ_0 = ∫g`.
    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    /// Grid integral `∫ g`.
    pub fn integral(&self) -> f64 {
        self.spectrum[0].re
    }

    pub fn is_zero(&self) -> bool {
        self.table.iter().all(|&v| v == 0.0)
    }

    pub fn is_singular(&self) -> bool {
        matches!(self.form, KernelForm::RieszPeriodic { .. })
    }

    pub(crate) fn fft(&self) -> &FftNd {
        &self.fft
    }

    /// Continuous evaluation `g(x)`; `+∞` at the origin of a singular kernel.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.form {
            KernelForm::Fourier { modes } => fourier_eval(&self.geometry, modes, x),
            KernelForm::Tabulated { values } => interpolate_values(&self.geometry, values, x),
            KernelForm::RieszPeriodic { s, images } => {
                riesz_image_sum(&self.geometry, *s, *images, x, 0.0) - self.riesz_mean
            }
        }
    }

    /// Pointwise pair energy used by samplers: like [`eval`](Self::eval) but
    /// with pair distances clamped at [`PAIR_DISTANCE_FLOOR`].
    pub fn eval_pair(&self, x: &[f64]) -> f64 {
        match &self.form {
            KernelForm::RieszPeriodic { s, images } => {
                riesz_image_sum(&self.geometry, *s, *images, x, PAIR_DISTANCE_FLOOR)
                    - self.riesz_mean
            }
            _ => self.eval(x),
        }
    }

    /// Serialize as a TOML document.
    pub fn to_toml(&self) -> Result<String> {
        let doc = KernelDocument { geometry: self.geometry, form: self.form.clone() };
        toml::to_string(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: KernelDocument = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(doc.geometry, doc.form)
    }
}

fn check_fourier(geometry: &TorusGeometry, modes: &[FourierMode]) -> Result<()> {
    for m in modes {
        if m.mode.len() != geometry.dim() {
            return Err(Error::Shape(format!("mode {:?} has wrong dimension", m.mode)));
        }
        if !m.coefficient.is_finite() {
            return Err(Error::Validation("non-finite Fourier coefficient".into()));
        }
    }
    for m in modes {
        let neg: Vec<i64> = m.mode.iter().map(|k| -k).collect();
        let partner: f64 = modes.iter().filter(|o| o.mode == neg).map(|o| o.coefficient).sum();
        let own: f64 = modes.iter().filter(|o| o.mode == m.mode).map(|o| o.coefficient).sum();
        if (partner - own).abs() > 1e-12 * (1.0 + own.abs()) {
            return Err(Error::Validation(format!(
                "Fourier coefficients of modes {:?} and {:?} differ; the kernel would not be even",
                m.mode, neg
            )));
        }
    }
    Ok(())
}

fn fourier_eval(geometry: &TorusGeometry, modes: &[FourierMode], x: &[f64]) -> f64 {
    let t = geometry.side();
    modes
        .iter()
        .map(|m| {
            let phase: f64 = m.mode.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
            m.coefficient * (2.0 * PI * phase / t).cos()
        })
        .sum()
}

/// `Σ_{|m|_∞ ≤ M} |x + mT|^{-p}` with `p = d - 2s`; distances below `floor`
/// are clamped, a zero distance with `floor = 0` yields `+∞`.
fn riesz_image_sum(geometry: &TorusGeometry, s: f64, images: usize, x: &[f64], floor: f64) -> f64 {
    let d = geometry.dim();
    let t = geometry.side();
    let p = d as f64 - 2.0 * s;
    let base: Vec<f64> = x.iter().map(|&xi| min_image(xi, t)).collect();
    let width = 2 * images + 1;
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    loop {
        let r2: f64 = (0..d)
            .map(|a| {
                let y = base[a] + (idx[a] as f64 - images as f64) * t;
                y * y
            })
            .sum();
        let r = r2.sqrt().max(floor);
        if r == 0.0 {
            return f64::INFINITY;
        }
        total += r.powf(-p);
        if !crate::torus::quadrature::advance(&mut idx, width) {
            break;
        }
    }
    total
}

fn riesz_table(geometry: &TorusGeometry, s: f64, images: usize) -> (Vec<f64>, f64) {
    let d = geometry.dim();
    let h = geometry.spacing();
    let p = d as f64 - 2.0 * s;
    let origin_cell = unit_cube_radial_average(d, p) * h.powf(-p);
    let mut table: Vec<f64> = (0..geometry.len())
        .map(|i| {
            let x = geometry.node(i);
            if i == 0 {
                // singular m = 0 term replaced by its cell average
                riesz_images_excluding_origin(geometry, s, images) + origin_cell
            } else {
                riesz_image_sum(geometry, s, images, &x, 0.0)
            }
        })
        .collect();
    let mean = table.iter().sum::<f64>() / table.len() as f64;
    table.iter_mut().for_each(|v| *v -= mean);
    (table, mean)
}

fn riesz_images_excluding_origin(geometry: &TorusGeometry, s: f64, images: usize) -> f64 {
    let d = geometry.dim();
    let t = geometry.side();
    let p = d as f64 - 2.0 * s;
    let width = 2 * images + 1;
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    loop {
        let r2: f64 = idx.iter().map(|&i| ((i as f64 - images as f64) * t).powi(2)).sum();
        if r2 > 0.0 {
            total += r2.sqrt().powf(-p);
        }
        if !crate::torus::quadrature::advance(&mut idx, width) {
            break;
        }
    }
    total
}
