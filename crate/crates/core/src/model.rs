//! Domain types shared by every stage of the pipeline.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Milliseconds since the Unix epoch (or since the start of a virtual clock).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const fn from_secs(secs: u64) -> Self {
        Timestamp(secs * 1000)
    }

    pub const fn millis(self) -> u64 {
        self.0
    }

    pub fn saturating_add_millis(self, ms: u64) -> Self {
        Timestamp(self.0.saturating_add(ms))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_newtype!(
    /// Row identity in the response matrix.
    ParticipantId,
    "p"
);
id_newtype!(
    /// Column identity in the response matrix.
    QuestionId,
    "q"
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerKind {
    YesNo,
    Likert5,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionStatus {
    Pending,
    Approved,
    Rejected,
}

/// Investigator's reason for turning a proposed question down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectionCode {
    IdentityRevealing,
    Profanity,
    OutcomeCorrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderingStrategy {
    Chronological,
    CommitteeDisagreement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Author {
    Investigator,
    Participant(ParticipantId),
}

/// Optional theoretical bounds of a numeric answer (both inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Bounds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl Bounds {
    pub const NONE: Bounds = Bounds {
        min: None,
        max: None,
    };

    pub fn new(min: Option<f64>, max: Option<f64>) -> Self {
        Bounds { min, max }
    }

    pub fn is_valid(&self) -> bool {
        let finite = self.min.is_none_or(f64::is_finite) && self.max.is_none_or(f64::is_finite);
        match (self.min, self.max) {
            (Some(lo), Some(hi)) => finite && lo < hi,
            _ => finite,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_none() && self.max.is_none()
    }

    pub fn contains(&self, value: f64) -> bool {
        self.min.is_none_or(|lo| value >= lo) && self.max.is_none_or(|hi| value <= hi)
    }
}

impl AnswerKind {
    /// Whether `raw` is an admissible answer of this kind under `bounds`.
    ///
    /// Bounds only constrain numeric answers.
    pub fn admits(self, raw: f64, bounds: &Bounds) -> bool {
        if !raw.is_finite() {
            return false;
        }
        match self {
            AnswerKind::YesNo => raw == 0.0 || raw == 1.0,
            AnswerKind::Likert5 => libm::trunc(raw) == raw && (1.0..=5.0).contains(&raw),
            AnswerKind::Numeric => bounds.contains(raw),
        }
    }
}

/// A question as written by its author, before moderation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionDraft {
    pub text: String,
    pub kind: AnswerKind,
    #[serde(default, skip_serializing_if = "Bounds::is_empty")]
    pub bounds: Bounds,
    /// The author's answer to their own question. Seed questions written by
    /// the investigator carry none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub own_answer: Option<f64>,
}

impl QuestionDraft {
    pub fn new(text: impl Into<String>, kind: AnswerKind) -> Self {
        QuestionDraft {
            text: text.into(),
            kind,
            bounds: Bounds::NONE,
            own_answer: None,
        }
    }

    pub fn with_bounds(mut self, min: Option<f64>, max: Option<f64>) -> Self {
        self.bounds = Bounds::new(min, max);
        self
    }

    pub fn with_own_answer(mut self, value: f64) -> Self {
        self.own_answer = Some(value);
        self
    }

    /// Checks text, bounds, and (when `require_answer`) the author's answer.
    pub fn validate(&self, require_answer: bool) -> Result<(), Error> {
        if self.text.trim().is_empty() {
            return Err(Error::InvalidDraft("question text is empty"));
        }
        if !self.bounds.is_valid() {
            return Err(Error::InvalidDraft(
                "numeric bounds must be finite with min < max",
            ));
        }
        if self.kind != AnswerKind::Numeric && !self.bounds.is_empty() {
            return Err(Error::InvalidDraft("only numeric questions take bounds"));
        }
        match self.own_answer {
            Some(v) if !self.kind.admits(v, &self.bounds) => Err(Error::InvalidDraft(
                "own answer is outside the answer domain",
            )),
            None if require_answer => Err(Error::InvalidDraft("own answer is required")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: QuestionId,
    pub text: String,
    pub kind: AnswerKind,
    pub bounds: Bounds,
    pub author: Author,
    pub posted_at: Timestamp,
    pub status: QuestionStatus,
    pub is_seed: bool,
    pub rejection_code: Option<RejectionCode>,
}

impl Question {
    /// Sort key giving the canonical column order.
    pub fn order_key(&self) -> (Timestamp, QuestionId) {
        (self.posted_at, self.question_id)
    }

    pub fn admits(&self, raw: f64) -> bool {
        self.kind.admits(raw, &self.bounds)
    }
}

/// One labelled period of a time-series outcome (e.g. a month of kWh).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodValue {
    pub period: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: ParticipantId,
    pub registered_at: Timestamp,
    pub outcome: Option<f64>,
    pub outcome_series: Option<Vec<PeriodValue>>,
    pub withdrawn: bool,
}

impl Participant {
    /// Participants that may contribute a row to a model.
    pub fn is_modelable(&self) -> bool {
        !self.withdrawn && self.outcome.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub participant_id: ParticipantId,
    pub question_id: QuestionId,
    pub raw_value: f64,
    pub answered_at: Timestamp,
    pub revision: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommitteeConfig {
    pub members: usize,
    pub seed: u64,
}

impl Default for CommitteeConfig {
    fn default() -> Self {
        CommitteeConfig {
            members: 10,
            seed: 0,
        }
    }
}

/// Study parameters. Fields after `seed_questions` can be changed while the
/// study is running; the rest are fixed at creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study_id: String,
    pub outcome_label: String,
    #[serde(default)]
    pub outcome_unit: String,
    pub outcome_min: f64,
    pub outcome_max: f64,
    pub seed_questions: Vec<QuestionDraft>,
    #[serde(default = "defaults::engine_period")]
    pub engine_period_secs: u64,
    #[serde(default = "defaults::peer_group_size")]
    pub peer_group_size: usize,
    #[serde(default = "defaults::min_samples")]
    pub min_samples_for_power: usize,
    #[serde(default)]
    pub ridge_lambda: f64,
    /// `None` disables the dynamic question budget.
    #[serde(default = "defaults::budget_alpha")]
    pub budget_alpha: Option<f64>,
    #[serde(default = "defaults::outlier_multiplier")]
    pub outlier_mad_multiplier: f64,
    #[serde(default = "defaults::ordering")]
    pub ordering_strategy: OrderingStrategy,
    #[serde(default)]
    pub committee: CommitteeConfig,
}

mod defaults {
    use super::OrderingStrategy;

    pub fn engine_period() -> u64 {
        300
    }
    pub fn peer_group_size() -> usize {
        10
    }
    pub fn min_samples() -> usize {
        3
    }
    pub fn budget_alpha() -> Option<f64> {
        Some(0.5)
    }
    pub fn outlier_multiplier() -> f64 {
        5.0
    }
    pub fn ordering() -> OrderingStrategy {
        OrderingStrategy::Chronological
    }
}

impl StudyConfig {
    /// A config with every tunable at its default.
    pub fn new(
        study_id: impl Into<String>,
        outcome_label: impl Into<String>,
        outcome_min: f64,
        outcome_max: f64,
        seed_questions: Vec<QuestionDraft>,
    ) -> Self {
        StudyConfig {
            study_id: study_id.into(),
            outcome_label: outcome_label.into(),
            outcome_unit: String::new(),
            outcome_min,
            outcome_max,
            seed_questions,
            engine_period_secs: defaults::engine_period(),
            peer_group_size: defaults::peer_group_size(),
            min_samples_for_power: defaults::min_samples(),
            ridge_lambda: 0.0,
            budget_alpha: defaults::budget_alpha(),
            outlier_mad_multiplier: defaults::outlier_multiplier(),
            ordering_strategy: defaults::ordering(),
            committee: CommitteeConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = Error::InvalidConfig;
        if !(self.outcome_min.is_finite() && self.outcome_max.is_finite())
            || self.outcome_min >= self.outcome_max
        {
            return Err(bad("outcome_min must be below outcome_max"));
        }
        if self.peer_group_size == 0 {
            return Err(bad("peer_group_size must be at least 1"));
        }
        if self.engine_period_secs == 0 {
            return Err(bad("engine period must be at least one second"));
        }
        if self.min_samples_for_power == 0 {
            return Err(bad("min_samples_for_power must be positive"));
        }
        if self.seed_questions.is_empty() {
            return Err(bad("at least one seed question is required"));
        }
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return Err(bad("ridge_lambda must be a nonnegative real"));
        }
        if let Some(alpha) = self.budget_alpha {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(bad("budget_alpha must lie in (0, 1]"));
            }
        }
        if !(self.outlier_mad_multiplier.is_finite() && self.outlier_mad_multiplier > 0.0) {
            return Err(bad("outlier_mad_multiplier must be positive"));
        }
        if self.committee.members < 2 {
            return Err(bad("committee needs at least two members"));
        }
        for draft in &self.seed_questions {
            draft.validate(false)?;
        }
        Ok(())
    }

    /// True when `other` only differs in the runtime-tunable fields.
    pub fn same_identity(&self, other: &StudyConfig) -> bool {
        self.study_id == other.study_id
            && self.outcome_label == other.outcome_label
            && self.outcome_unit == other.outcome_unit
            && self.outcome_min == other.outcome_min
            && self.outcome_max == other.outcome_max
            && self.seed_questions == other.seed_questions
    }

    pub fn outcome_in_range(&self, value: f64) -> bool {
        value.is_finite() && value >= self.outcome_min && value <= self.outcome_max
    }
}
