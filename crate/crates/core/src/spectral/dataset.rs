//! Long-format correlation dataset CSV:
//! `pair_id,label,band_lo,band_hi,image_index,r,z`, one row per
//! (pair, band, image). Lines starting with `#` are comments.

use std::collections::HashMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::{Band, BandPlan, Label, PairId, PairObservation, SpectralError};

const HEADER: [&str; 7] = ["pair_id", "label", "band_lo", "band_hi", "image_index", "r", "z"];

fn ds(e: impl std::fmt::Display) -> SpectralError {
    SpectralError::Dataset(e.to_string())
}

/// Write observations in the given order. `comment` lines are prefixed with `# `.
pub fn write_dataset<W: Write>(
    mut out: W,
    obs: &[PairObservation],
    comment: Option<&str>,
) -> Result<(), SpectralError> {
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(out, "# {line}").map_err(ds)?;
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER).map_err(ds)?;
    for o in obs {
        let id = o.pair_id.to_string();
        for (i, band) in o.band_plan.bands.iter().enumerate() {
            for j in 0..o.q() {
                w.write_record([
                    id.as_str(),
                    o.label.as_str(),
                    &band.lo.to_string(),
                    &band.hi.to_string(),
                    &j.to_string(),
                    &o.r[(i, j)].to_string(),
                    &o.z[(i, j)].to_string(),
                ])
                .map_err(ds)?;
            }
        }
    }
    w.flush().map_err(ds)
}

struct Group {
    label: Label,
    cells: Vec<(Band, usize, Option<f64>, Option<f64>)>,
}

fn opt_f64(s: &str, line: u64, what: &str) -> Result<Option<f64>, SpectralError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| ds(format!("line {line}: bad {what} {s:?}")))
}

/// Read a dataset, grouping rows into observations in order of first appearance.
/// Either `r` or `z` may be left empty and is then derived from the other.
pub fn read_dataset<R: Read>(input: R) -> Result<Vec<PairObservation>, SpectralError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers().map_err(ds)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ds(format!("missing column {name}")))
    };
    let idx: Vec<usize> = HEADER.iter().map(|h| col(h)).collect::<Result<_, _>>()?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Group> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(ds)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let f = |k: usize| rec.get(idx[k]).unwrap_or("");
        let id = f(0).to_string();
        let label = Label::parse(f(1)).ok_or_else(|| ds(format!("line {line}: bad label {:?}", f(1))))?;
        let lo = opt_f64(f(2), line, "band_lo")?.ok_or_else(|| ds(format!("line {line}: empty band_lo")))?;
        let hi = opt_f64(f(3), line, "band_hi")?.ok_or_else(|| ds(format!("line {line}: empty band_hi")))?;
        let j: usize = f(4)
            .parse()
            .map_err(|_| ds(format!("line {line}: bad image_index {:?}", f(4))))?;
        let r = opt_f64(f(5), line, "r")?;
        let z = opt_f64(f(6), line, "z")?;
        if r.is_none() && z.is_none() {
            return Err(ds(format!("line {line}: both r and z empty")));
        }
        let g = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Group {
                label,
                cells: Vec::new(),
            }
        });
        if g.label != label {
            return Err(ds(format!("line {line}: pair {id} has conflicting labels")));
        }
        g.cells.push((Band::new(lo, hi), j, r, z));
    }
    order
        .into_iter()
        .map(|id| {
            let g = &groups[&id];
            assemble(&id, g)
        })
        .collect()
}

fn assemble(id: &str, g: &Group) -> Result<PairObservation, SpectralError> {
    let pair_id = PairId::parse(id).unwrap_or_else(|| PairId::new(id, ""));
    let mut bands: Vec<Band> = Vec::new();
    for (b, ..) in &g.cells {
        if !bands.contains(b) {
            bands.push(*b);
        }
    }
    bands.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let plan = BandPlan::new(bands, None)?;
    let q = g.cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
    let p = plan.p();
    if g.cells.len() != p * q {
        return Err(ds(format!(
            "pair {id}: {} rows, expected {p} bands x {q} images",
            g.cells.len()
        )));
    }
    let mut r = DMatrix::from_element(p, q, f64::NAN);
    let mut z = DMatrix::from_element(p, q, f64::NAN);
    let mut seen = vec![false; p * q];
    for (b, j, rv, zv) in &g.cells {
        let i = plan.bands.iter().position(|x| x == b).unwrap();
        if std::mem::replace(&mut seen[i * q + j], true) {
            return Err(ds(format!("pair {id}: duplicate band {i} image {j}")));
        }
        let zz = match (rv, zv) {
            (_, Some(z)) => *z,
            (Some(r), None) => super::fisher_z(*r)?,
            (None, None) => unreachable!(),
        };
        if !zz.is_finite() {
            return Err(ds(format!("pair {id}: non-finite z at band {i} image {j}")));
        }
        r[(i, *j)] = rv.unwrap_or_else(|| zz.tanh());
        z[(i, *j)] = zz;
    }
    if q < 2 {
        return Err(SpectralError::TooFewImages(q));
    }
    Ok(PairObservation {
        pair_id,
        label: g.label,
        band_plan: plan,
        r,
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(id: &str, label: Label, seed: f64) -> PairObservation {
        let r = DMatrix::from_fn(2, 3, |i, j| ((i * 3 + j) as f64 * 0.1 + seed).tanh() * 0.9);
        PairObservation::from_correlations(PairId::parse(id).unwrap(), label, BandPlan::default(), r).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let data = vec![obs("A:B", Label::Match, 0.1), obs("A:C", Label::NonMatch, -0.4)];
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data, Some("fracmatch test")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# fracmatch test\npair_id,label,band_lo,band_hi,image_index,r,z\n"));
        assert_eq!(read_dataset(&buf[..]).unwrap(), data);
    }

    #[test]
    fn z_only_rows() {
        let text = "pair_id,label,band_lo,band_hi,image_index,r,z\n\
                    x:y,match,5,10,0,,1.5\nx:y,match,5,10,1,,0.5\n";
        let o = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(o[0].z[(0, 1)], 0.5);
        assert!((o[0].r[(0, 0)] - 1.5f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn incomplete_and_conflicting_rows_rejected() {
        let text = "pair_id,label,band_lo,band_hi,image_index,r,z\n\
                    x:y,match,5,10,0,0.5,\nx:y,match,5,10,2,0.5,\n";
        assert!(read_dataset(text.as_bytes()).is_err());
        let text = "pair_id,label,band_lo,band_hi,image_index,r,z\n\
                    x:y,match,5,10,0,0.5,\nx:y,non-match,5,10,1,0.5,\n";
        assert!(read_dataset(text.as_bytes()).is_err());
    }
}
