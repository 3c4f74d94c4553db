use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::rng;
use crate::surface::HeightMap;

/// Correlation length of the synthetic field in grain diameters. The knee
/// frequency is 1 / (2 pi KNEE_GRAINS grain_scale); at this setting the
/// height-height curve leaves its power law at 2 to 4 grains.
pub const KNEE_GRAINS: f64 = 8.0;

const OVERLAPS: [f64; 3] = [0.75, 0.5, 0.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub hurst: f64,
    /// Grain size in micrometers.
    pub grain_scale: f64,
    /// Image edge in pixels.
    pub image_size: usize,
    /// Micrometers per pixel.
    pub pitch: f64,
    /// Images per surface.
    pub k: usize,
    pub overlap: f64,
    /// Per-measurement white noise, micrometers.
    pub noise_sigma: f64,
    /// Largest lateral misregistration, pixels.
    pub misalign_px: usize,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            hurst: 0.6,
            grain_scale: 30.0,
            image_size: 128,
            pitch: 4.4,
            k: 9,
            overlap: 0.75,
            noise_sigma: 0.2,
            misalign_px: 2,
            seed: 0,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Spec(m));
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return bad(format!("hurst {} must lie in (0, 1)", self.hurst));
        }
        if !(self.grain_scale.is_finite() && self.grain_scale > 0.0) {
            return bad(format!("grain_scale {} must be positive", self.grain_scale));
        }
        if !(self.pitch.is_finite() && self.pitch > 0.0) {
            return bad(format!("pitch {} must be positive", self.pitch));
        }
        if self.image_size < crate::surface::MIN_EDGE || !self.image_size.is_multiple_of(4) {
            return bad(format!(
                "image_size {} must be a multiple of 4 and at least {}",
                self.image_size,
                crate::surface::MIN_EDGE
            ));
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if !OVERLAPS.contains(&self.overlap) {
            return bad(format!("overlap {} must be one of 0.75, 0.5, 0", self.overlap));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        Ok(())
    }

    /// Window stride in pixels.
    pub fn stride(&self) -> usize {
        (self.image_size as f64 * (1.0 - self.overlap)).round() as usize
    }

    /// Strip width in pixels covered by the k windows.
    pub fn strip_width(&self) -> usize {
        self.image_size + (self.k - 1) * self.stride()
    }

    /// Knee frequency in cycles/mm.
    pub fn knee_frequency(&self) -> f64 {
        1000.0 / (2.0 * PI * KNEE_GRAINS * self.grain_scale)
    }
}

fn fft_freq(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Random-phase self-affine field, `rows x cols`, mean 0 and RMS 1 um.
fn field(spec: &SimSpec, rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let ny = (2 * rows).next_power_of_two();
    let nx = (2 * cols).next_power_of_two();
    let (dfy, dfx) = (1000.0 / (ny as f64 * spec.pitch), 1000.0 / (nx as f64 * spec.pitch));
    let fg2 = spec.knee_frequency().powi(2);
    let expo = -(1.0 + spec.hurst) / 2.0;
    let mut g = rng::seeded(seed);
    let mut buf = vec![Complex64::new(0.0, 0.0); ny * nx];
    for v in 0..ny {
        let fy = fft_freq(v, ny) * dfy;
        for u in 0..nx {
            let phase: f64 = g.random::<f64>() * 2.0 * PI;
            if u == 0 && v == 0 {
                continue;
            }
            let fx = fft_freq(u, nx) * dfx;
            let amp = (fx * fx + fy * fy + fg2).powf(expo);
            buf[v * nx + u] = Complex64::from_polar(amp, phase);
        }
    }
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_inverse(nx);
    row_fft.process(&mut buf);
    let col_fft = planner.plan_fft_inverse(ny);
    let mut col = vec![Complex64::new(0.0, 0.0); ny];
    // Only the first `cols` columns are kept.
    for c in 0..cols {
        for r in 0..ny {
            col[r] = buf[r * nx + c];
        }
        col_fft.process(&mut col);
        for r in 0..rows {
            buf[r * nx + c] = col[r];
        }
    }
    let mut h: Vec<f64> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| buf[r * nx + c].re)
        .collect();
    let n = h.len() as f64;
    let mean = h.iter().sum::<f64>() / n;
    let rms = (h.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    for v in &mut h {
        *v = (*v - mean) / rms;
    }
    h
}

/// One synthetic fracture surface as a strip of `image_size x strip_width` pixels.
pub fn synth_surface(spec: &SimSpec) -> Result<HeightMap, SimError> {
    spec.validate()?;
    let (rows, cols) = (spec.image_size, spec.strip_width());
    let h = field(spec, rows, cols, spec.seed);
    Ok(HeightMap::new(
        rows,
        cols,
        spec.pitch,
        h,
        format!("synthetic seed={}", spec.seed),
    )?)
}

/// A true surface with room for misregistration on every side.
pub(crate) struct Specimen<'a> {
    spec: &'a SimSpec,
    heights: Vec<f64>,
    cols: usize,
}

impl<'a> Specimen<'a> {
    pub(crate) fn new(spec: &'a SimSpec, seed: u64) -> Self {
        let m = spec.misalign_px;
        let (rows, cols) = (spec.image_size + 2 * m, spec.strip_width() + 2 * m);
        Self {
            spec,
            heights: field(spec, rows, cols, seed),
            cols,
        }
    }

    /// One measurement: shifted, noisy, and cut into the k windows.
    pub(crate) fn observe(&self, seed: u64) -> Vec<HeightMap> {
        let s = self.spec;
        let m = s.misalign_px as i64;
        let mut g = rng::seeded(seed);
        let dy = (m + g.random_range(-m..=m)) as usize;
        let dx = (m + g.random_range(-m..=m)) as usize;
        let (rows, cols) = (s.image_size, s.strip_width());
        let mut strip = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let noise: f64 = g.sample(StandardNormal);
                strip.push(self.heights[(r + dy) * self.cols + c + dx] + s.noise_sigma * noise);
            }
        }
        let strip = HeightMap::new(rows, cols, s.pitch, strip, "").expect("synthetic strip is valid");
        (0..s.k)
            .map(|i| {
                strip
                    .window(0, i * s.stride(), rows, rows)
                    .expect("window inside strip")
            })
            .collect()
    }
}

/// Base and tip image sets for one comparison. A matched pair observes one
/// surface twice; a non-matched pair observes two independent surfaces.
pub fn synth_pair(spec: &SimSpec, matched: bool) -> Result<(Vec<HeightMap>, Vec<HeightMap>), SimError> {
    spec.validate()?;
    let a = Specimen::new(spec, rng::derive(spec.seed, &[0]));
    let base = a.observe(rng::derive(spec.seed, &[0, 1]));
    let tip = if matched {
        a.observe(rng::derive(spec.seed, &[0, 2]))
    } else {
        Specimen::new(spec, rng::derive(spec.seed, &[1])).observe(rng::derive(spec.seed, &[1, 2]))
    };
    Ok((base, tip))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_presets() {
        let s = SimSpec::default();
        assert_eq!(s.stride(), 32);
        assert_eq!(s.strip_width(), 3 * 128);
        let s5 = SimSpec {
            k: 5,
            overlap: 0.5,
            ..s.clone()
        };
        let s3 = SimSpec {
            k: 3,
            overlap: 0.0,
            ..s.clone()
        };
        assert_eq!(s5.strip_width(), s.strip_width());
        assert_eq!(s3.strip_width(), s.strip_width());
    }

    #[test]
    fn rejects_bad_spec() {
        for s in [
            SimSpec {
                hurst: 1.0,
                ..Default::default()
            },
            SimSpec {
                overlap: 0.3,
                ..Default::default()
            },
            SimSpec {
                noise_sigma: -1.0,
                ..Default::default()
            },
            SimSpec {
                image_size: 66,
                ..Default::default()
            },
            SimSpec {
                k: 0,
                ..Default::default()
            },
        ] {
            assert!(s.validate().is_err(), "{s:?}");
        }
    }

    #[test]
    fn deterministic_and_normalized() {
        let s = SimSpec {
            seed: 5,
            ..Default::default()
        };
        let a = synth_surface(&s).unwrap();
        assert_eq!(a, synth_surface(&s).unwrap());
        assert!(a.mean().abs() < 1e-12);
        assert!((a.rms() - 1.0).abs() < 1e-12);
        assert_ne!(a, synth_surface(&SimSpec { seed: 6, ..s }).unwrap());
    }

    #[test]
    fn noiseless_match_is_identical() {
        let s = SimSpec {
            noise_sigma: 0.0,
            misalign_px: 0,
            ..Default::default()
        };
        let (b, t) = synth_pair(&s, true).unwrap();
        assert_eq!(b.len(), 9);
        assert_eq!(b, t);
        let (b, t) = synth_pair(&s, false).unwrap();
        assert_ne!(b, t);
    }
}
