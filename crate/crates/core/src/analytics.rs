//! Descriptive statistics over a study and its published models.
//!
//! Nothing here publishes a model; everything reads existing artifacts or
//! store state.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::{fit_design, fit_least_squares, model_r2, ModelArtifact};
use crate::error::Error;
use crate::matrix::Grid;
use crate::model::{Bounds, ParticipantId, QuestionId, Timestamp};
use crate::store::Store;
use crate::study::Study;

/// `(question, d)` pairs by decreasing power; equal powers keep column order.
pub fn power_ranking(artifact: &ModelArtifact) -> Vec<(QuestionId, f64)> {
    let mut ranked: Vec<(QuestionId, f64)> = artifact
        .col_ids
        .iter()
        .copied()
        .zip(artifact.d.iter().copied())
        .collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1));
    ranked
}

/// Descriptive least-squares line through `(ln rank, ln value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub fit_r2: f64,
    pub m: usize,
}

/// Fits `ln v_r = intercept + slope · ln r` over the `m` largest values,
/// ranked from 1. A set of identical values has `fit_r2 = 0`.
pub fn loglog_fit(values: &[f64], m: usize) -> Result<PowerLawFit, Error> {
    if m < 3 || values.len() < m {
        return Err(Error::TooFewValues);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let top = &sorted[..m];
    if top.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::NonPositiveValue);
    }
    let rows: Vec<Vec<f64>> = (1..=m).map(|r| alloc::vec![libm::log(r as f64)]).collect();
    let x = Grid::from_rows(&rows)?;
    let y: Vec<f64> = top.iter().map(|v| libm::log(*v)).collect();
    let c = fit_least_squares(&x, &y, 0.0)?;
    let fit_r2 = match model_r2(&c, &x, &y) {
        Ok(r2) => r2,
        Err(Error::DegenerateOutcome) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(PowerLawFit {
        slope: c[1],
        intercept: c[0],
        fit_r2,
        m,
    })
}

/// Pearson correlation, or `None` when either side has no variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponsePower {
    pub question_id: QuestionId,
    pub responses: usize,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePowerScatter {
    pub points: Vec<ResponsePower>,
    pub correlation: Option<f64>,
}

/// Response count against predictive power for every modeled question.
pub fn response_power_scatter(store: &Store, artifact: &ModelArtifact) -> ResponsePowerScatter {
    let points: Vec<ResponsePower> = artifact
        .col_ids
        .iter()
        .zip(&artifact.d)
        .map(|(q, d)| ResponsePower {
            question_id: *q,
            responses: store.response_count(*q),
            power: *d,
        })
        .collect();
    let counts: Vec<f64> = points.iter().map(|p| p.responses as f64).collect();
    let powers: Vec<f64> = points.iter().map(|p| p.power).collect();
    ResponsePowerScatter {
        correlation: pearson(&counts, &powers),
        points,
    }
}

/// Who answered what: rows in registration order, columns in posting order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationMatrix {
    pub rows: Vec<ParticipantId>,
    pub cols: Vec<QuestionId>,
    pub cells: Grid<bool>,
}

impl ParticipationMatrix {
    pub fn answered_cells(&self) -> usize {
        self.cells.as_slice().iter().filter(|c| **c).count()
    }
}

pub fn participation_matrix(store: &Store) -> ParticipationMatrix {
    let rows: Vec<ParticipantId> = store
        .active_participants()
        .map(|p| p.participant_id)
        .collect();
    let cols: Vec<QuestionId> = store
        .approved_questions()
        .iter()
        .map(|q| q.question_id)
        .collect();
    let mut cells = Grid::filled(rows.len(), cols.len(), false);
    for (i, p) in rows.iter().enumerate() {
        for (j, q) in cols.iter().enumerate() {
            if store.response(*p, *q).is_some() {
                cells.set(i, j, true);
            }
        }
    }
    ParticipationMatrix { rows, cols, cells }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DishonestResponse {
    pub participant_id: ParticipantId,
    pub question_id: QuestionId,
    pub value: f64,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DishonestyReport {
    pub flagged: Vec<DishonestResponse>,
    pub count: usize,
}

/// Stored answers that fall outside their question's current bounds,
/// including bounds set after the answer arrived.
pub fn dishonesty_scan(store: &Store) -> DishonestyReport {
    let flagged: Vec<DishonestResponse> = store
        .responses()
        .filter_map(|r| {
            let q = store.question(r.question_id).ok()?;
            (!q.bounds.contains(r.raw_value)).then_some(DishonestResponse {
                participant_id: r.participant_id,
                question_id: r.question_id,
                value: r.raw_value,
                bounds: q.bounds,
            })
        })
        .collect();
    DishonestyReport {
        count: flagged.len(),
        flagged,
    }
}

/// `(built_at, model_r2)` of every published run, oldest first.
pub fn model_quality_series(study: &Study) -> Vec<(Timestamp, f64)> {
    study.quality_series()
}

/// Refits the current design restricted to `questions`, e.g. after dropping
/// weak predictors. The study itself is untouched.
pub fn refit_subset(
    study: &Study,
    questions: &[QuestionId],
    built_at: Timestamp,
) -> Result<ModelArtifact, Error> {
    let design = study.design(built_at)?.select_columns(questions)?;
    let cfg = study.config();
    fit_design(&design, cfg.ridge_lambda, cfg.min_samples_for_power)
}
