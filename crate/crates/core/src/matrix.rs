//! Building the design matrix `A` and outcome vector `b` from a store.
//!
//! Unanswered cells are zero. Yes/no answers encode to ±1 and Likert answers
//! to −2..+2 so that zero sits in the middle of each categorical scale;
//! numeric answers are used as given.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{AnswerKind, Bounds, ParticipantId, QuestionId, StudyConfig, Timestamp};
use crate::store::Store;

/// Scale factor that makes the MAD a consistent estimator of a normal σ.
pub const MAD_TO_SIGMA: f64 = 1.4826;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Grid {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, Error> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Grid {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.rows).map(move |r| self.get(r, col))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub rows: Vec<ParticipantId>,
    pub cols: Vec<QuestionId>,
    pub a: Grid<f64>,
    pub b: Vec<f64>,
    pub answered_mask: Grid<bool>,
    pub built_at: Timestamp,
    pub excluded_outliers: Vec<ParticipantId>,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn k(&self) -> usize {
        self.cols.len()
    }

    /// Restricts the matrix to the given columns, in the given order.
    pub fn select_columns(&self, ids: &[QuestionId]) -> Result<DesignMatrix, Error> {
        let idx: Vec<usize> = ids
            .iter()
            .map(|id| {
                self.cols
                    .iter()
                    .position(|c| c == id)
                    .ok_or(Error::UnknownQuestion(*id))
            })
            .collect::<Result<_, _>>()?;
        let mut a = Grid::filled(self.n(), idx.len(), 0.0);
        let mut mask = Grid::filled(self.n(), idx.len(), false);
        for r in 0..self.n() {
            for (j, &src) in idx.iter().enumerate() {
                a.set(r, j, self.a.get(r, src));
                mask.set(r, j, self.answered_mask.get(r, src));
            }
        }
        Ok(DesignMatrix {
            rows: self.rows.clone(),
            cols: ids.to_vec(),
            a,
            b: self.b.clone(),
            answered_mask: mask,
            built_at: self.built_at,
            excluded_outliers: self.excluded_outliers.clone(),
        })
    }
}

/// Maps a raw answer to its model-space value.
pub fn encode_answer(kind: AnswerKind, raw_value: f64) -> Result<f64, Error> {
    if !kind.admits(raw_value, &Bounds::NONE) {
        return Err(Error::ValueOutOfDomain(raw_value));
    }
    Ok(match kind {
        AnswerKind::YesNo => 2.0 * raw_value - 1.0,
        AnswerKind::Likert5 => raw_value - 3.0,
        AnswerKind::Numeric => raw_value,
    })
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Kept and excluded `(item, value)` pairs.
pub type Split<T> = (Vec<(T, f64)>, Vec<(T, f64)>);

/// Splits candidates into kept and excluded by the scaled-MAD rule: a value
/// is excluded when its distance from the median exceeds
/// `multiplier × 1.4826 × MAD`. Nothing is excluded when the MAD is zero.
/// Both outputs keep the input order.
pub fn filter_outliers<T: Copy>(candidates: &[(T, f64)], multiplier: f64) -> Split<T> {
    if candidates.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let mut values: Vec<f64> = candidates.iter().map(|c| c.1).collect();
    let center = median(&mut values);
    let mut deviations: Vec<f64> = candidates.iter().map(|c| (c.1 - center).abs()).collect();
    let mad = median(&mut deviations);
    if mad == 0.0 {
        return (candidates.to_vec(), Vec::new());
    }
    let threshold = multiplier * MAD_TO_SIGMA * mad;
    candidates
        .iter()
        .partition(|c| (c.1 - center).abs().partial_cmp(&threshold) != Some(Ordering::Greater))
}

/// Builds the design matrix over approved questions and modelable participants.
pub fn build_design(
    store: &Store,
    config: &StudyConfig,
    built_at: Timestamp,
) -> Result<DesignMatrix, Error> {
    let questions = store.approved_questions();
    let candidates: Vec<(ParticipantId, f64)> = store
        .active_participants()
        .filter_map(|p| p.outcome.map(|b| (p.participant_id, b)))
        .collect();
    if questions.is_empty() || candidates.is_empty() {
        return Err(Error::EmptyDesign);
    }
    let (kept, excluded) = filter_outliers(&candidates, config.outlier_mad_multiplier);

    let n = kept.len();
    let k = questions.len();
    let mut a = Grid::filled(n, k, 0.0);
    let mut mask = Grid::filled(n, k, false);
    for (i, (pid, _)) in kept.iter().enumerate() {
        for (j, q) in questions.iter().enumerate() {
            if let Some(r) = store.response(*pid, q.question_id) {
                a.set(i, j, encode_answer(q.kind, r.raw_value)?);
                mask.set(i, j, true);
            }
        }
    }
    Ok(DesignMatrix {
        rows: kept.iter().map(|c| c.0).collect(),
        cols: questions.iter().map(|q| q.question_id).collect(),
        a,
        b: kept.iter().map(|c| c.1).collect(),
        answered_mask: mask,
        built_at,
        excluded_outliers: excluded.iter().map(|c| c.0).collect(),
    })
}
