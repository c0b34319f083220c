use thiserror::Error;

use crate::model::{ParticipantId, QuestionId, Timestamp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("outcome {0} is outside the study's plausible range")]
    OutcomeOutOfRange(f64),
    #[error("height and weight must be positive")]
    NonPositiveDimension,
    #[error("no outcome data for the requested periods")]
    NoDataForPeriods,

    #[error("question {0} is not open for answers")]
    QuestionNotAnswerable(QuestionId),
    #[error("value {0} is outside the answer domain")]
    ValueOutOfDomain(f64),
    #[error("invalid question draft: {0}")]
    InvalidDraft(&'static str),
    #[error("question {0} has already been reviewed")]
    AlreadyReviewed(QuestionId),
    #[error("a rejection needs a code and an approval must not carry one")]
    InvalidVerdict,

    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
    #[error("unknown question {0}")]
    UnknownQuestion(QuestionId),
    #[error("participant {0} has withdrawn")]
    ParticipantWithdrawn(ParticipantId),
    #[error("participant {0} has no outcome")]
    NoOutcome(ParticipantId),

    #[error("no eligible rows or columns for a design matrix")]
    EmptyDesign,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("outcome has zero variance")]
    DegenerateOutcome,
    #[error("residual degrees of freedom must be positive")]
    InsufficientDegreesOfFreedom,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("log-log fit needs strictly positive values")]
    NonPositiveValue,
    #[error("log-log fit needs at least three values")]
    TooFewValues,

    #[error("invalid study config: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(&'static str),

    #[error("gap at seq {expected} (found {found})")]
    SequenceGap { expected: u64, found: u64 },
    #[error("event time {found} does not advance past {last}")]
    NonMonotonicTime { last: Timestamp, found: Timestamp },
    #[error("the first event must configure the study")]
    NotInitialized,
    #[error("event id {found} does not match the next id {expected}")]
    IdMismatch { expected: u64, found: u64 },
    #[error("study identity fields cannot change after creation")]
    ImmutableConfig,
    #[error("credential is already registered")]
    DuplicateCredential,
    #[error("recomputed artifact at {0} does not match the recorded digest")]
    ArtifactMismatch(Timestamp),
}
