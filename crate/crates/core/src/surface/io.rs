//! FHM1 binary and CSV grid height-map formats.
//!
//! FHM1 layout (little-endian): magic `FHM1`, `u32` rows, `u32` cols,
//! `f64` pitch in micrometers, then `rows * cols` `f32` heights row-major.
//! `NaN` marks a masked cell.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{HeightMap, SurfaceError};

pub const FHM1_MAGIC: &[u8; 4] = b"FHM1";
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapFormat {
    Fhm1,
    /// Comma-separated grid; the pitch is not stored in the file.
    Csv {
        pitch: f64,
    },
}

impl MapFormat {
    /// Pick a format from the file extension (`.csv` needs a pitch).
    pub fn from_path(path: &Path, pitch: Option<f64>) -> Result<Self, SurfaceError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => pitch
                .map(|pitch| MapFormat::Csv { pitch })
                .ok_or_else(|| SurfaceError::MalformedHeader("CSV grids need an explicit pitch".into())),
            _ => Ok(MapFormat::Fhm1),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> SurfaceError {
    SurfaceError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_height_map(path: &Path, format: MapFormat) -> Result<HeightMap, SurfaceError> {
    let mut map = match format {
        MapFormat::Fhm1 => {
            let mut f = fs::File::open(path).map_err(|e| io_err(path, e))?;
            let mut buf = Vec::new();
            f.read_to_end(&mut buf).map_err(|e| io_err(path, e))?;
            read_fhm1(&buf)?
        }
        MapFormat::Csv { pitch } => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            parse_csv_grid(&text, pitch)?
        }
    };
    map.meta = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(map)
}

pub fn read_fhm1(buf: &[u8]) -> Result<HeightMap, SurfaceError> {
    if buf.len() < HEADER_LEN {
        return Err(SurfaceError::MalformedHeader(format!(
            "{} bytes is shorter than the {HEADER_LEN}-byte header",
            buf.len()
        )));
    }
    if &buf[..4] != FHM1_MAGIC {
        return Err(SurfaceError::MalformedHeader("missing FHM1 magic".into()));
    }
    let rows = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let pitch = f64::from_le_bytes(buf[12..20].try_into().unwrap());
    let body = &buf[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| SurfaceError::MalformedHeader(format!("absurd dimensions {rows}x{cols}")))?;
    if body.len() != expected {
        return Err(SurfaceError::MalformedHeader(format!(
            "{rows}x{cols} grid needs {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let heights = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    HeightMap::new(rows, cols, pitch, heights, "")
}

pub fn write_fhm1(map: &HeightMap, out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(FHM1_MAGIC)?;
    out.write_all(&(map.rows() as u32).to_le_bytes())?;
    out.write_all(&(map.cols() as u32).to_le_bytes())?;
    out.write_all(&map.pitch().to_le_bytes())?;
    let mut body = Vec::with_capacity(map.heights().len() * 4);
    for (&h, &ok) in map.heights().iter().zip(map.mask()) {
        let v = if ok { h as f32 } else { f32::NAN };
        body.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&body)
}

pub fn save_fhm1(map: &HeightMap, path: &Path) -> Result<(), SurfaceError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| io_err(path, e))?);
    write_fhm1(map, &mut f)
        .and_then(|_| f.flush())
        .map_err(|e| io_err(path, e))
}

/// Parse a rectangular comma-separated grid. Empty fields and `NaN` are masked.
pub fn parse_csv_grid(text: &str, pitch: f64) -> Result<HeightMap, SurfaceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut heights = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| SurfaceError::MalformedHeader(e.to_string()))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let expected = *cols.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(SurfaceError::NonRectangular {
                row,
                expected,
                found: rec.len(),
            });
        }
        for (col, field) in rec.iter().enumerate() {
            let v = if field.is_empty() {
                f64::NAN
            } else {
                field.parse::<f64>().map_err(|_| SurfaceError::BadValue {
                    row,
                    col,
                    value: field.to_string(),
                })?
            };
            heights.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| SurfaceError::MalformedHeader("empty grid".into()))?;
    HeightMap::new(rows, cols, pitch, heights, "")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fhm1_bytes(rows: u32, cols: u32, pitch: f64, f: impl Fn(usize) -> f32) -> Vec<u8> {
        let mut b = FHM1_MAGIC.to_vec();
        b.extend(rows.to_le_bytes());
        b.extend(cols.to_le_bytes());
        b.extend(pitch.to_le_bytes());
        for i in 0..(rows * cols) as usize {
            b.extend(f(i).to_le_bytes());
        }
        b
    }

    #[test]
    fn reads_instrument_scale_fhm1() {
        let b = fhm1_bytes(1024, 1024, 0.55, |i| (i % 7) as f32);
        let m = read_fhm1(&b).unwrap();
        assert_eq!((m.rows(), m.cols()), (1024, 1024));
        assert_eq!(m.pitch(), 0.55);
        assert_eq!(m.get(0, 3), Some(3.0));
    }

    #[test]
    fn fhm1_roundtrip_keeps_mask() {
        let b = fhm1_bytes(64, 80, 1.25, |i| if i == 17 { f32::NAN } else { i as f32 * 0.5 });
        let m = read_fhm1(&b).unwrap();
        let mut out = Vec::new();
        write_fhm1(&m, &mut out).unwrap();
        assert_eq!(out, b);
        let m2 = read_fhm1(&out).unwrap();
        assert_eq!(m2.mask(), m.mask());
        assert!(!m2.is_valid(0, 17));
    }

    #[test]
    fn fhm1_errors_are_distinct() {
        assert!(matches!(read_fhm1(b"FHM"), Err(SurfaceError::MalformedHeader(_))));
        let mut b = fhm1_bytes(64, 64, 1.0, |_| 0.0);
        b[0] = b'X';
        assert!(matches!(read_fhm1(&b), Err(SurfaceError::MalformedHeader(_))));
        let b = fhm1_bytes(64, 64, 0.0, |_| 0.0);
        assert!(matches!(read_fhm1(&b), Err(SurfaceError::BadPitch(_))));
        let mut b = fhm1_bytes(64, 64, 1.0, |_| 0.0);
        b.truncate(b.len() - 4);
        assert!(matches!(read_fhm1(&b), Err(SurfaceError::MalformedHeader(_))));
        let b = fhm1_bytes(64, 64, 1.0, |i| if i % 6 == 0 { f32::NAN } else { 0.0 });
        assert!(matches!(read_fhm1(&b), Err(SurfaceError::TooManyMasked { .. })));
    }

    #[test]
    fn csv_flat_grid() {
        let line = vec!["0"; 64].join(",");
        let text = vec![line; 64].join("\n");
        let m = parse_csv_grid(&text, 1.0).unwrap();
        assert_eq!((m.rows(), m.cols()), (64, 64));
        assert_eq!(m.rms(), 0.0);
    }

    #[test]
    fn csv_non_rectangular_and_bad_values() {
        let line = vec!["1.5"; 64].join(",");
        let mut lines = vec![line.clone(); 64];
        lines[10] = vec!["1.5"; 63].join(",");
        assert!(matches!(
            parse_csv_grid(&lines.join("\n"), 1.0),
            Err(SurfaceError::NonRectangular {
                row: 10,
                expected: 64,
                found: 63
            })
        ));
        let mut lines = vec![line; 64];
        lines[3] = lines[3].replacen("1.5", "abc", 1);
        assert!(matches!(
            parse_csv_grid(&lines.join("\n"), 1.0),
            Err(SurfaceError::BadValue { row: 3, col: 0, .. })
        ));
    }

    #[test]
    fn csv_nan_fraction() {
        // 15% of cells masked.
        let rows: Vec<String> = (0..64)
            .map(|r| {
                (0..64)
                    .map(|c| {
                        if (r * 64 + c) % 100 < 15 {
                            "NaN".to_string()
                        } else {
                            "2".to_string()
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        assert!(matches!(
            parse_csv_grid(&rows.join("\n"), 0.55),
            Err(SurfaceError::TooManyMasked { .. })
        ));
    }
}
