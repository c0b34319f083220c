//! The state-changing events of a study. A study is exactly the fold of its
//! event sequence, which is what makes logs replayable.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{
    Bounds, ParticipantId, PeriodValue, QuestionDraft, QuestionId, RejectionCode, StudyConfig,
    Timestamp,
};
use crate::moderation::Verdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Action {
    /// The first event creates the study; later ones retune it.
    ConfigChanged(StudyConfig),
    ParticipantRegistered {
        participant_id: ParticipantId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outcome: Option<f64>,
        /// Digest of the participant's bearer token, when issued by a server.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        credential: Option<String>,
    },
    OutcomeSet {
        participant_id: ParticipantId,
        outcome: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        series: Option<Vec<PeriodValue>>,
    },
    ResponseSubmitted {
        participant_id: ParticipantId,
        question_id: QuestionId,
        value: f64,
    },
    QuestionProposed {
        question_id: QuestionId,
        author: ParticipantId,
        draft: QuestionDraft,
    },
    QuestionReviewed {
        question_id: QuestionId,
        verdict: Verdict,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rejection_code: Option<RejectionCode>,
        reviewer: String,
    },
    ParticipantWithdrew {
        participant_id: ParticipantId,
    },
    QuestionBoundsChanged {
        question_id: QuestionId,
        bounds: Bounds,
    },
    /// A modeling run. Replay recomputes the artifact and, when a digest was
    /// recorded, checks it.
    EngineRun {
        built_at: Timestamp,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        digest: Option<String>,
    },
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::ConfigChanged(_) => "ConfigChanged",
            Action::ParticipantRegistered { .. } => "ParticipantRegistered",
            Action::OutcomeSet { .. } => "OutcomeSet",
            Action::ResponseSubmitted { .. } => "ResponseSubmitted",
            Action::QuestionProposed { .. } => "QuestionProposed",
            Action::QuestionReviewed { .. } => "QuestionReviewed",
            Action::ParticipantWithdrew { .. } => "ParticipantWithdrew",
            Action::QuestionBoundsChanged { .. } => "QuestionBoundsChanged",
            Action::EngineRun { .. } => "EngineRun",
        }
    }
}

/// One log record: `{"seq":…,"at":…,"kind":…,"payload":…}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at: Timestamp,
    #[serde(flatten)]
    pub action: Action,
}
