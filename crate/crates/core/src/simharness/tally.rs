use std::io::Write;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::spectral::Label;

/// Match/non-match decision counts for one (model, k) cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyRow {
    pub model: String,
    pub k: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_pos: usize,
    pub true_neg: usize,
    pub true_match: usize,
    pub true_nonmatch: usize,
}

impl TallyRow {
    pub fn empty(model: impl Into<String>, k: usize) -> Self {
        Self {
            model: model.into(),
            k,
            false_pos: 0,
            false_neg: 0,
            true_pos: 0,
            true_neg: 0,
            true_match: 0,
            true_nonmatch: 0,
        }
    }

    /// Count one decision against its true label.
    pub fn record(&mut self, truth: Label, decided: Label) -> Result<(), SimError> {
        match (truth, decided) {
            (Label::Match, Label::Match) => self.true_pos += 1,
            (Label::Match, Label::NonMatch) => self.false_neg += 1,
            (Label::NonMatch, Label::Match) => self.false_pos += 1,
            (Label::NonMatch, Label::NonMatch) => self.true_neg += 1,
            _ => return Err(SimError::Tally(format!("cannot tally {truth:?} -> {decided:?}"))),
        }
        match truth {
            Label::Match => self.true_match += 1,
            _ => self.true_nonmatch += 1,
        }
        Ok(())
    }

    pub fn check(&self) -> Result<(), SimError> {
        if self.false_pos + self.true_neg != self.true_nonmatch || self.false_neg + self.true_pos != self.true_match {
            return Err(SimError::Tally(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TallyTable {
    rows: Vec<TallyRow>,
}

pub const TALLY_HEADER: [&str; 8] = [
    "model",
    "k",
    "false_pos",
    "false_neg",
    "true_pos",
    "true_neg",
    "true_match",
    "true_nonmatch",
];

impl TallyTable {
    /// Every row must satisfy the count identities.
    pub fn new(rows: Vec<TallyRow>) -> Result<Self, SimError> {
        for r in &rows {
            r.check()?;
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[TallyRow] {
        &self.rows
    }

    pub fn row(&self, model: &str, k: usize) -> Option<&TallyRow> {
        self.rows.iter().find(|r| r.model == model && r.k == k)
    }

    pub fn extend(&mut self, other: TallyTable) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TALLY_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.k.to_string(),
                r.false_pos.to_string(),
                r.false_neg.to_string(),
                r.true_pos.to_string(),
                r.true_neg.to_string(),
                r.true_match.to_string(),
                r.true_nonmatch.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
