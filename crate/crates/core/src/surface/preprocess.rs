//! Tilt correction and spike removal.

use nalgebra::{Matrix3, Vector3};

use super::{HeightMap, SurfaceError};

/// Least-squares plane `h = a + b * col + c * row` (pixel coordinates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub offset: f64,
    pub slope_col: f64,
    pub slope_row: f64,
}

impl Plane {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.offset + self.slope_col * col as f64 + self.slope_row * row as f64
    }
}

/// Fit the least-squares plane over the valid cells.
pub fn fit_plane(map: &HeightMap) -> Result<Plane, SurfaceError> {
    let valid = map.valid_count();
    if valid < 3 {
        return Err(SurfaceError::Underdetermined { valid });
    }
    // Centered coordinates keep the normal equations well conditioned.
    let rc = (map.rows() as f64 - 1.0) / 2.0;
    let cc = (map.cols() as f64 - 1.0) / 2.0;
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for r in 0..map.rows() {
        for c in 0..map.cols() {
            if let Some(h) = map.get(r, c) {
                let v = Vector3::new(1.0, c as f64 - cc, r as f64 - rc);
                ata += v * v.transpose();
                atb += v * h;
            }
        }
    }
    let sol = ata
        .cholesky()
        .map(|ch| ch.solve(&atb))
        .ok_or(SurfaceError::Underdetermined { valid })?;
    Ok(Plane {
        offset: sol[0] - sol[1] * cc - sol[2] * rc,
        slope_col: sol[1],
        slope_row: sol[2],
    })
}

/// Subtract the least-squares plane over the valid cells.
pub fn detrend_plane(map: &HeightMap) -> Result<HeightMap, SurfaceError> {
    let plane = fit_plane(map)?;
    let cols = map.cols();
    let mut out: Vec<f64> = map
        .heights()
        .iter()
        .enumerate()
        .map(|(i, h)| h - plane.at(i / cols, i % cols))
        .collect();
    // Remove the O(eps) residual mean the solve leaves behind.
    let (s, n) = out
        .iter()
        .zip(map.mask())
        .filter(|(_, v)| **v)
        .fold((0.0, 0usize), |(s, n), (h, _)| (s + h, n + 1));
    let m = s / n as f64;
    out.iter_mut().for_each(|h| *h -= m);
    Ok(map.with_heights(out))
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    v.sort_unstable_by(f64::total_cmp);
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Replace spikes by the local median.
///
/// A valid cell is a spike when its distance from the median of the valid
/// cells in the surrounding `window x window` neighbourhood (clipped at the
/// borders, centre included) exceeds `z_thresh * 1.4826 * MAD`. Detection runs
/// on the input map only, so replacements never cascade.
pub fn despike(map: &HeightMap, window: usize, z_thresh: f64) -> Result<HeightMap, SurfaceError> {
    if !matches!(window, 3 | 5 | 7) {
        return Err(SurfaceError::BadWindow(window));
    }
    if !(z_thresh > 0.0) {
        return Err(SurfaceError::BadThreshold(z_thresh));
    }
    let half = window / 2;
    let (rows, cols) = (map.rows(), map.cols());
    let mut out = map.heights().to_vec();
    let mut buf = Vec::with_capacity(window * window);
    let mut dev = Vec::with_capacity(window * window);
    for r in 0..rows {
        for c in 0..cols {
            let Some(h) = map.get(r, c) else { continue };
            buf.clear();
            for rr in r.saturating_sub(half)..(r + half + 1).min(rows) {
                for cc in c.saturating_sub(half)..(c + half + 1).min(cols) {
                    if let Some(v) = map.get(rr, cc) {
                        buf.push(v);
                    }
                }
            }
            let med = median_in_place(&mut buf);
            dev.clear();
            dev.extend(buf.iter().map(|v| (v - med).abs()));
            let scale = 1.4826 * median_in_place(&mut dev);
            if (h - med).abs() > z_thresh * scale {
                out[r * cols + c] = med;
            }
        }
    }
    Ok(map.with_heights(out))
}
