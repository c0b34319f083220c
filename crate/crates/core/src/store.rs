//! In-memory state of one study: who is registered, which questions exist,
//! and the current answer in every (participant, question) cell.
//!
//! Every mutator validates completely before touching any field, so an
//! `Err` always leaves the store unchanged.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{
    Author, Participant, ParticipantId, PeriodValue, Question, QuestionDraft, QuestionId,
    QuestionStatus, Response, StudyConfig, Timestamp,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Store {
    participants: BTreeMap<ParticipantId, Participant>,
    questions: BTreeMap<QuestionId, Question>,
    /// Keyed by participant first so a row is a contiguous range.
    #[serde(with = "response_list")]
    responses: BTreeMap<(ParticipantId, QuestionId), Response>,
    /// Proposer answers held back until their question is approved.
    held_answers: BTreeMap<QuestionId, (ParticipantId, f64)>,
    credentials: BTreeMap<String, ParticipantId>,
}

/// JSON object keys must be strings, so the cell map travels as a list.
mod response_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(ParticipantId, QuestionId), Response>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.values())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(ParticipantId, QuestionId), Response>, D::Error> {
        let list = Vec::<Response>::deserialize(d)?;
        Ok(list
            .into_iter()
            .map(|r| ((r.participant_id, r.question_id), r))
            .collect())
    }
}

impl Store {
    pub fn new() -> Self {
        Store::default()
    }

    pub fn next_participant_id(&self) -> ParticipantId {
        ParticipantId(
            self.participants
                .keys()
                .next_back()
                .map_or(1, |id| id.0 + 1),
        )
    }

    pub fn next_question_id(&self) -> QuestionId {
        QuestionId(self.questions.keys().next_back().map_or(1, |id| id.0 + 1))
    }

    pub fn participant(&self, id: ParticipantId) -> Result<&Participant, Error> {
        self.participants
            .get(&id)
            .ok_or(Error::UnknownParticipant(id))
    }

    pub fn question(&self, id: QuestionId) -> Result<&Question, Error> {
        self.questions.get(&id).ok_or(Error::UnknownQuestion(id))
    }

    pub fn participant_by_credential(&self, credential: &str) -> Option<ParticipantId> {
        self.credentials.get(credential).copied()
    }

    /// All participants in registration order (ids are issued in that order).
    pub fn participants(&self) -> impl Iterator<Item = &Participant> {
        self.participants.values()
    }

    /// Non-withdrawn participants in registration order.
    pub fn active_participants(&self) -> impl Iterator<Item = &Participant> {
        self.participants.values().filter(|p| !p.withdrawn)
    }

    pub fn questions(&self) -> impl Iterator<Item = &Question> {
        self.questions.values()
    }

    /// Approved questions in column order.
    pub fn approved_questions(&self) -> Vec<&Question> {
        self.questions_with_status(QuestionStatus::Approved)
    }

    /// Questions with `status`, ordered by `(posted_at, question_id)`.
    pub fn questions_with_status(&self, status: QuestionStatus) -> Vec<&Question> {
        let mut out: Vec<&Question> = self
            .questions
            .values()
            .filter(|q| q.status == status)
            .collect();
        out.sort_by_key(|q| q.order_key());
        out
    }

    pub fn response(&self, participant: ParticipantId, question: QuestionId) -> Option<&Response> {
        self.responses.get(&(participant, question))
    }

    /// Current responses of one participant, by question id.
    pub fn responses_of(&self, participant: ParticipantId) -> impl Iterator<Item = &Response> {
        self.responses
            .range((participant, QuestionId(0))..=(participant, QuestionId(u64::MAX)))
            .map(|(_, r)| r)
    }

    pub fn responses(&self) -> impl Iterator<Item = &Response> {
        self.responses.values()
    }

    /// Number of current responses to `question` from non-withdrawn participants.
    pub fn response_count(&self, question: QuestionId) -> usize {
        self.responses
            .values()
            .filter(|r| r.question_id == question)
            .filter(|r| {
                self.participants
                    .get(&r.participant_id)
                    .is_some_and(|p| !p.withdrawn)
            })
            .count()
    }

    pub fn held_answer(&self, question: QuestionId) -> Option<(ParticipantId, f64)> {
        self.held_answers.get(&question).copied()
    }

    pub(crate) fn insert_seed(&mut self, draft: &QuestionDraft, at: Timestamp) -> QuestionId {
        let id = self.next_question_id();
        self.questions.insert(
            id,
            Question {
                question_id: id,
                text: draft.text.clone(),
                kind: draft.kind,
                bounds: draft.bounds,
                author: Author::Investigator,
                posted_at: at,
                status: QuestionStatus::Approved,
                is_seed: true,
                rejection_code: None,
            },
        );
        id
    }

    fn active(&self, id: ParticipantId) -> Result<&Participant, Error> {
        let p = self.participant(id)?;
        if p.withdrawn {
            return Err(Error::ParticipantWithdrawn(id));
        }
        Ok(p)
    }

    pub fn register_participant(
        &mut self,
        config: &StudyConfig,
        outcome: Option<f64>,
        credential: Option<String>,
        at: Timestamp,
    ) -> Result<&Participant, Error> {
        if let Some(value) = outcome {
            if !config.outcome_in_range(value) {
                return Err(Error::OutcomeOutOfRange(value));
            }
        }
        if let Some(c) = &credential {
            if self.credentials.contains_key(c) {
                return Err(Error::DuplicateCredential);
            }
        }
        let id = self.next_participant_id();
        if let Some(c) = credential {
            self.credentials.insert(c, id);
        }
        let participant = Participant {
            participant_id: id,
            registered_at: at,
            outcome,
            outcome_series: None,
            withdrawn: false,
        };
        Ok(self.participants.entry(id).or_insert(participant))
    }

    pub fn set_outcome(
        &mut self,
        config: &StudyConfig,
        participant: ParticipantId,
        outcome: f64,
        series: Option<Vec<PeriodValue>>,
    ) -> Result<(), Error> {
        self.active(participant)?;
        if !config.outcome_in_range(outcome) {
            return Err(Error::OutcomeOutOfRange(outcome));
        }
        let p = self
            .participants
            .get_mut(&participant)
            .expect("checked above");
        p.outcome = Some(outcome);
        p.outcome_series = series;
        Ok(())
    }

    /// Records (or revises) the answer of `participant` to `question`.
    pub fn submit_response(
        &mut self,
        participant: ParticipantId,
        question: QuestionId,
        raw_value: f64,
        at: Timestamp,
    ) -> Result<&Response, Error> {
        self.active(participant)?;
        let q = self.question(question)?;
        if q.status != QuestionStatus::Approved {
            return Err(Error::QuestionNotAnswerable(question));
        }
        if !q.admits(raw_value) {
            return Err(Error::ValueOutOfDomain(raw_value));
        }
        let revision = self
            .responses
            .get(&(participant, question))
            .map_or(0, |r| r.revision + 1);
        let response = Response {
            participant_id: participant,
            question_id: question,
            raw_value,
            answered_at: at,
            revision,
        };
        self.responses.insert((participant, question), response);
        Ok(&self.responses[&(participant, question)])
    }

    /// Files a participant's question for moderation. Their own answer is
    /// held until the question is approved.
    pub fn propose_question(
        &mut self,
        participant: ParticipantId,
        draft: &QuestionDraft,
        at: Timestamp,
    ) -> Result<&Question, Error> {
        self.active(participant)?;
        draft.validate(true)?;
        let id = self.next_question_id();
        let own = draft.own_answer.expect("validated");
        self.held_answers.insert(id, (participant, own));
        self.questions.insert(
            id,
            Question {
                question_id: id,
                text: draft.text.clone(),
                kind: draft.kind,
                bounds: draft.bounds,
                author: Author::Participant(participant),
                posted_at: at,
                status: QuestionStatus::Pending,
                is_seed: false,
                rejection_code: None,
            },
        );
        Ok(&self.questions[&id])
    }

    pub(crate) fn question_mut(&mut self, id: QuestionId) -> Result<&mut Question, Error> {
        self.questions
            .get_mut(&id)
            .ok_or(Error::UnknownQuestion(id))
    }

    /// Turns a held proposer answer into a live response. Silently drops it
    /// when the proposer has since withdrawn.
    pub(crate) fn activate_held_answer(&mut self, question: QuestionId, at: Timestamp) {
        if let Some((author, value)) = self.held_answers.remove(&question) {
            if self.participants.get(&author).is_some_and(|p| !p.withdrawn) {
                self.responses.insert(
                    (author, question),
                    Response {
                        participant_id: author,
                        question_id: question,
                        raw_value: value,
                        answered_at: at,
                        revision: 0,
                    },
                );
            }
        }
    }

    pub fn withdraw(&mut self, participant: ParticipantId) -> Result<(), Error> {
        self.active(participant)?;
        self.participants
            .get_mut(&participant)
            .expect("checked above")
            .withdrawn = true;
        Ok(())
    }

    /// Changes the theoretical bounds of a numeric question. Existing answers
    /// are kept; `analytics::dishonesty_scan` reports any that now violate them.
    pub fn set_bounds(
        &mut self,
        question: QuestionId,
        bounds: crate::model::Bounds,
    ) -> Result<(), Error> {
        let q = self.question(question)?;
        if q.kind != crate::model::AnswerKind::Numeric || !bounds.is_valid() {
            return Err(Error::InvalidDraft(
                "bounds only apply to numeric questions and need min < max",
            ));
        }
        self.question_mut(question)?.bounds = bounds;
        Ok(())
    }
}
