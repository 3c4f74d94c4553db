use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::SpectralError;
use crate::surface::HeightMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    None,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpectrumOptions {
    /// Square transform edge; `None` picks the next power of two.
    pub transform_size: Option<usize>,
    pub window: Window,
}

impl SpectrumOptions {
    pub fn size_for(&self, rows: usize, cols: usize) -> usize {
        self.transform_size
            .unwrap_or_else(|| rows.max(cols).next_power_of_two())
    }
}

/// Upper half-plane amplitude spectrum.
///
/// Row `ky` (0..=n/2) holds `fy = ky * df`; column `c` (0..n) holds
/// `fx = (c - n/2) * df`, with `df = 1000 / (n * pitch)` cycles/mm.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSpectrum {
    n: usize,
    pitch: f64,
    amplitude: Vec<f64>,
    pub source_meta: String,
}

impl BandSpectrum {
    pub fn transform_size(&self) -> usize {
        self.n
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Frequency spacing in cycles/mm.
    pub fn df(&self) -> f64 {
        1000.0 / (self.n as f64 * self.pitch)
    }

    pub fn rows(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn at(&self, ky: usize, c: usize) -> f64 {
        self.amplitude[ky * self.n + c]
    }

    pub fn fx_axis(&self) -> Vec<f64> {
        let df = self.df();
        (0..self.n).map(|c| (c as f64 - (self.n / 2) as f64) * df).collect()
    }

    pub fn fy_axis(&self) -> Vec<f64> {
        let df = self.df();
        (0..self.rows()).map(|k| k as f64 * df).collect()
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        self.n == other.n && self.pitch == other.pitch
    }

    pub(crate) fn from_parts(n: usize, pitch: f64, amplitude: Vec<f64>) -> Self {
        assert_eq!(amplitude.len(), (n / 2 + 1) * n);
        Self {
            n,
            pitch,
            amplitude,
            source_meta: String::new(),
        }
    }
}

fn hann(i: usize, len: usize) -> f64 {
    if len < 2 {
        return 1.0;
    }
    0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos()
}

/// Complex 2-D transform of the mean-removed, centrally zero-padded map,
/// row-major in FFT index order.
fn transform(map: &HeightMap, opts: &SpectrumOptions) -> Result<(usize, Vec<Complex64>), SpectralError> {
    let (rows, cols) = (map.rows(), map.cols());
    let n = opts.size_for(rows, cols);
    if !n.is_power_of_two() {
        return Err(SpectralError::NotPowerOfTwo(n));
    }
    if n < rows.max(cols) {
        return Err(SpectralError::TransformTooSmall { n, rows, cols });
    }
    let mean = map.mean();
    let (r0, c0) = ((n - rows) / 2, (n - cols) / 2);
    let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
    for r in 0..rows {
        for c in 0..cols {
            if let Some(h) = map.get(r, c) {
                let w = match opts.window {
                    Window::None => 1.0,
                    Window::Hann => hann(r, rows) * hann(c, cols),
                };
                buf[(r + r0) * n + c + c0] = Complex64::new((h - mean) * w, 0.0);
            }
        }
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    fft.process(&mut buf);
    transpose(&mut buf, n);
    fft.process(&mut buf);
    transpose(&mut buf, n);
    Ok((n, buf))
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

/// Full-plane modulus `|H|`, `n x n` row-major in FFT index order
/// (`[ky][kx]`, negative frequencies wrapped).
pub fn full_spectrum_modulus(map: &HeightMap, opts: &SpectrumOptions) -> Result<(usize, Vec<f64>), SpectralError> {
    let (n, buf) = transform(map, opts)?;
    Ok((n, buf.iter().map(|z| z.norm()).collect()))
}

/// Mean-removed, zero-padded FFT amplitude over the `fy >= 0` half-plane.
pub fn amplitude_spectrum(map: &HeightMap, opts: &SpectrumOptions) -> Result<BandSpectrum, SpectralError> {
    let (n, buf) = transform(map, opts)?;
    let half = n / 2;
    let mut amplitude = Vec::with_capacity((half + 1) * n);
    for ky in 0..=half {
        for c in 0..n {
            let kx = (c + n - half) % n;
            amplitude.push(buf[ky * n + kx].norm());
        }
    }
    let mut s = BandSpectrum::from_parts(n, map.pitch(), amplitude);
    s.source_meta = map.meta.clone();
    Ok(s)
}
