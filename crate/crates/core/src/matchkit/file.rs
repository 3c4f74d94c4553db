//! Versioned JSON model documents. Every float is written with 17
//! significant digits.

use std::io;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use super::{MatchModel, ModelError, Provenance};
use crate::mxdist::MxVtParams;
use crate::spectral::{Band, BandPlan};

pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassDoc {
    #[serde(rename = "M_row_means")]
    m_row_means: Vec<f64>,
    #[serde(rename = "Sigma")]
    sigma: Vec<Vec<f64>>,
    rho: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanDoc {
    bands: Vec<[f64; 2]>,
    angular_sector: Option<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u64,
    p: usize,
    q: usize,
    nu: f64,
    band_plan: PlanDoc,
    prior: f64,
    threshold: Option<f64>,
    #[serde(rename = "match")]
    match_: ClassDoc,
    nonmatch: ClassDoc,
    provenance: Provenance,
}

fn class_doc(p: &MxVtParams) -> ClassDoc {
    ClassDoc {
        m_row_means: p.row_means.iter().copied().collect(),
        sigma: p.sigma.row_iter().map(|r| r.iter().copied().collect()).collect(),
        rho: p.rho,
    }
}

fn class_params(d: &ClassDoc, nu: f64, p: usize, q: usize) -> Result<MxVtParams, ModelError> {
    if d.m_row_means.len() != p || d.sigma.len() != p || d.sigma.iter().any(|r| r.len() != p) {
        return Err(ModelError::File(format!("class parameters do not match p = {p}")));
    }
    let sigma = DMatrix::from_fn(p, p, |i, j| d.sigma[i][j]);
    Ok(MxVtParams::new(
        DVector::from_vec(d.m_row_means.clone()),
        sigma,
        d.rho,
        nu,
        q,
    )?)
}

/// Pretty JSON with floats as `d.dddddddddddddddde±x`.
struct ExactFloats<'a>(PrettyFormatter<'a>);

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    forward! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

impl MatchModel {
    pub fn to_json(&self) -> Result<String, ModelError> {
        self.validate()?;
        let doc = ModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            p: self.p(),
            q: self.q(),
            nu: self.nu(),
            band_plan: PlanDoc {
                bands: self.band_plan.bands.iter().map(|b| [b.lo, b.hi]).collect(),
                angular_sector: self.band_plan.angular_sector.map(|(a, b)| [a, b]),
            },
            prior: self.prior_match,
            threshold: self.threshold_logodds,
            match_: class_doc(&self.match_params),
            nonmatch: class_doc(&self.nonmatch_params),
            provenance: self.provenance.clone(),
        };
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloats(PrettyFormatter::new()));
        doc.serialize(&mut ser).map_err(|e| ModelError::File(e.to_string()))?;
        out.push(b'\n');
        Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ModelError::File(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(MODEL_FORMAT_VERSION) => {}
            Some(v) => return Err(ModelError::UnsupportedVersion(v)),
            None => return Err(ModelError::File("missing integer format_version".into())),
        }
        let doc: ModelDoc = serde_json::from_value(value).map_err(|e| ModelError::File(e.to_string()))?;
        let band_plan = BandPlan::new(
            doc.band_plan.bands.iter().map(|[lo, hi]| Band::new(*lo, *hi)).collect(),
            doc.band_plan.angular_sector.map(|[a, b]| (a, b)),
        )
        .map_err(|e| ModelError::File(e.to_string()))?;
        let model = MatchModel {
            match_params: class_params(&doc.match_, doc.nu, doc.p, doc.q)?,
            nonmatch_params: class_params(&doc.nonmatch, doc.nu, doc.p, doc.q)?,
            band_plan,
            prior_match: doc.prior,
            threshold_logodds: doc.threshold,
            provenance: doc.provenance,
        };
        model.validate()?;
        Ok(model)
    }
}
