//! A running study: configuration, store, and the published model history,
//! advanced one [`Event`] at a time.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::{fit_design, predict_outcome, ModelArtifact};
use crate::error::Error;
use crate::event::{Action, Event};
use crate::matrix::{build_design, encode_answer, DesignMatrix};
use crate::model::{
    Author, ParticipantId, QuestionId, QuestionStatus, RejectionCode, StudyConfig, Timestamp,
};
use crate::moderation::{review_question, ModerationVerdict};
use crate::peers::{group_question_profile, peer_groups_in};
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    config: StudyConfig,
    store: Store,
    artifacts: Vec<Arc<ModelArtifact>>,
    last_seq: u64,
    last_at: Timestamp,
}

/// One line of the participant comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub question_id: QuestionId,
    pub text: String,
    pub own_answer: Option<f64>,
    pub lower_group_mean: Option<f64>,
    pub upper_group_mean: Option<f64>,
    pub predictive_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedProposal {
    pub question_id: QuestionId,
    pub text: String,
    pub rejection_code: Option<RejectionCode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub participant_id: ParticipantId,
    pub actual_outcome: Option<f64>,
    pub predicted_outcome: Option<f64>,
    pub model_built_at: Option<Timestamp>,
    pub lower_group_mean_outcome: Option<f64>,
    pub upper_group_mean_outcome: Option<f64>,
    pub rows: Vec<SummaryRow>,
    pub rejected_proposals: Vec<RejectedProposal>,
}

impl Study {
    /// Starts a study from its first event, which must be `ConfigChanged`
    /// with sequence number 1. Seed questions are posted at the event time.
    pub fn create(first: &Event) -> Result<Study, Error> {
        if first.seq != 1 {
            return Err(Error::SequenceGap {
                expected: 1,
                found: first.seq,
            });
        }
        let Action::ConfigChanged(config) = &first.action else {
            return Err(Error::NotInitialized);
        };
        config.validate()?;
        let mut store = Store::new();
        for draft in &config.seed_questions {
            store.insert_seed(draft, first.at);
        }
        Ok(Study {
            config: config.clone(),
            store,
            artifacts: Vec::new(),
            last_seq: 1,
            last_at: first.at,
        })
    }

    /// Folds a whole event sequence into a study.
    pub fn from_events<'e>(events: impl IntoIterator<Item = &'e Event>) -> Result<Study, Error> {
        let mut iter = events.into_iter();
        let mut study = Study::create(iter.next().ok_or(Error::NotInitialized)?)?;
        for event in iter {
            study.apply(event)?;
        }
        Ok(study)
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn last_at(&self) -> Timestamp {
        self.last_at
    }

    /// Every artifact published so far, oldest first.
    pub fn artifacts(&self) -> &[Arc<ModelArtifact>] {
        &self.artifacts
    }

    pub fn current_artifact(&self) -> Option<&Arc<ModelArtifact>> {
        self.artifacts.last()
    }

    /// `(built_at, model_r2)` of every published run.
    pub fn quality_series(&self) -> Vec<(Timestamp, f64)> {
        self.artifacts
            .iter()
            .map(|a| (a.built_at, a.model_r2))
            .collect()
    }

    pub fn design(&self, built_at: Timestamp) -> Result<DesignMatrix, Error> {
        build_design(&self.store, &self.config, built_at)
    }

    /// Runs the engine against the current state without publishing.
    pub fn build_artifact(&self, built_at: Timestamp) -> Result<ModelArtifact, Error> {
        let design = self.design(built_at)?;
        fit_design(
            &design,
            self.config.ridge_lambda,
            self.config.min_samples_for_power,
        )
    }

    /// Checks that `event` would apply cleanly, without changing anything.
    /// An `EngineRun` digest is only checked by [`Study::apply`].
    pub fn validate(&self, event: &Event) -> Result<(), Error> {
        if event.seq != self.last_seq + 1 {
            return Err(Error::SequenceGap {
                expected: self.last_seq + 1,
                found: event.seq,
            });
        }
        if event.at <= self.last_at {
            return Err(Error::NonMonotonicTime {
                last: self.last_at,
                found: event.at,
            });
        }
        let store = &self.store;
        let active = |id: ParticipantId| -> Result<(), Error> {
            if store.participant(id)?.withdrawn {
                return Err(Error::ParticipantWithdrawn(id));
            }
            Ok(())
        };
        match &event.action {
            Action::ConfigChanged(config) => {
                config.validate()?;
                if !config.same_identity(&self.config) {
                    return Err(Error::ImmutableConfig);
                }
            }
            Action::ParticipantRegistered {
                participant_id,
                outcome,
                credential,
            } => {
                let expected = store.next_participant_id();
                if *participant_id != expected {
                    return Err(Error::IdMismatch {
                        expected: expected.0,
                        found: participant_id.0,
                    });
                }
                if let Some(v) = outcome {
                    if !self.config.outcome_in_range(*v) {
                        return Err(Error::OutcomeOutOfRange(*v));
                    }
                }
                if credential
                    .as_deref()
                    .is_some_and(|c| store.participant_by_credential(c).is_some())
                {
                    return Err(Error::DuplicateCredential);
                }
            }
            Action::OutcomeSet {
                participant_id,
                outcome,
                ..
            } => {
                active(*participant_id)?;
                if !self.config.outcome_in_range(*outcome) {
                    return Err(Error::OutcomeOutOfRange(*outcome));
                }
            }
            Action::ResponseSubmitted {
                participant_id,
                question_id,
                value,
            } => {
                active(*participant_id)?;
                let q = store.question(*question_id)?;
                if q.status != QuestionStatus::Approved {
                    return Err(Error::QuestionNotAnswerable(*question_id));
                }
                if !q.admits(*value) {
                    return Err(Error::ValueOutOfDomain(*value));
                }
            }
            Action::QuestionProposed {
                question_id,
                author,
                draft,
            } => {
                active(*author)?;
                let expected = store.next_question_id();
                if *question_id != expected {
                    return Err(Error::IdMismatch {
                        expected: expected.0,
                        found: question_id.0,
                    });
                }
                draft.validate(true)?;
            }
            Action::QuestionReviewed {
                question_id,
                verdict,
                rejection_code,
                reviewer,
            } => {
                let v = ModerationVerdict {
                    question_id: *question_id,
                    verdict: *verdict,
                    rejection_code: *rejection_code,
                    reviewed_at: event.at,
                    reviewer: reviewer.clone(),
                };
                if !v.is_well_formed() {
                    return Err(Error::InvalidVerdict);
                }
                if store.question(*question_id)?.status != QuestionStatus::Pending {
                    return Err(Error::AlreadyReviewed(*question_id));
                }
            }
            Action::ParticipantWithdrew { participant_id } => active(*participant_id)?,
            Action::QuestionBoundsChanged {
                question_id,
                bounds,
            } => {
                let q = store.question(*question_id)?;
                if q.kind != crate::model::AnswerKind::Numeric || !bounds.is_valid() {
                    return Err(Error::InvalidDraft(
                        "bounds only apply to numeric questions and need min < max",
                    ));
                }
            }
            Action::EngineRun { built_at, .. } => {
                if *built_at > event.at {
                    return Err(Error::NonMonotonicTime {
                        last: event.at,
                        found: *built_at,
                    });
                }
                let has_row = store.active_participants().any(|p| p.outcome.is_some());
                if !has_row || store.approved_questions().is_empty() {
                    return Err(Error::EmptyDesign);
                }
            }
        }
        Ok(())
    }

    /// Applies `event`. On error the study is left unchanged.
    pub fn apply(&mut self, event: &Event) -> Result<(), Error> {
        self.validate(event)?;
        let at = event.at;
        match &event.action {
            Action::ConfigChanged(config) => self.config = config.clone(),
            Action::ParticipantRegistered {
                outcome,
                credential,
                ..
            } => {
                self.store
                    .register_participant(&self.config, *outcome, credential.clone(), at)?;
            }
            Action::OutcomeSet {
                participant_id,
                outcome,
                series,
            } => {
                self.store
                    .set_outcome(&self.config, *participant_id, *outcome, series.clone())?;
            }
            Action::ResponseSubmitted {
                participant_id,
                question_id,
                value,
            } => {
                self.store
                    .submit_response(*participant_id, *question_id, *value, at)?;
            }
            Action::QuestionProposed { author, draft, .. } => {
                self.store.propose_question(*author, draft, at)?;
            }
            Action::QuestionReviewed {
                question_id,
                verdict,
                rejection_code,
                reviewer,
            } => {
                let v = ModerationVerdict {
                    question_id: *question_id,
                    verdict: *verdict,
                    rejection_code: *rejection_code,
                    reviewed_at: at,
                    reviewer: reviewer.clone(),
                };
                review_question(&mut self.store, &v)?;
            }
            Action::ParticipantWithdrew { participant_id } => {
                self.store.withdraw(*participant_id)?
            }
            Action::QuestionBoundsChanged {
                question_id,
                bounds,
            } => {
                self.store.set_bounds(*question_id, *bounds)?;
            }
            Action::EngineRun { built_at, digest } => {
                let artifact = self.build_artifact(*built_at)?;
                if digest.as_ref().is_some_and(|d| *d != artifact.digest()) {
                    return Err(Error::ArtifactMismatch(*built_at));
                }
                self.artifacts.push(Arc::new(artifact));
            }
        }
        self.last_seq = event.seq;
        self.last_at = at;
        Ok(())
    }

    /// Applies an `EngineRun` whose artifact was computed off to the side
    /// from this exact state (same `last_seq`). Skips the recomputation.
    pub fn apply_prebuilt(&mut self, event: &Event, artifact: ModelArtifact) -> Result<(), Error> {
        let Action::EngineRun { built_at, digest } = &event.action else {
            return self.apply(event);
        };
        self.validate(event)?;
        if artifact.built_at != *built_at
            || digest.as_ref().is_some_and(|d| *d != artifact.digest())
        {
            return Err(Error::ArtifactMismatch(*built_at));
        }
        self.artifacts.push(Arc::new(artifact));
        self.last_seq = event.seq;
        self.last_at = event.at;
        Ok(())
    }

    /// Encoded answers and answered flags of `participant` over `cols`.
    pub fn encoded_row(
        &self,
        participant: ParticipantId,
        cols: &[QuestionId],
    ) -> Result<(Vec<f64>, Vec<bool>), Error> {
        let mut row = Vec::with_capacity(cols.len());
        let mut mask = Vec::with_capacity(cols.len());
        for q in cols {
            match self.store.response(participant, *q) {
                Some(r) => {
                    row.push(encode_answer(self.store.question(*q)?.kind, r.raw_value)?);
                    mask.push(true);
                }
                None => {
                    row.push(0.0);
                    mask.push(false);
                }
            }
        }
        Ok((row, mask))
    }

    /// Prediction for `participant` from the current artifact, or `None`
    /// before the first model is published.
    pub fn predicted_outcome(&self, participant: ParticipantId) -> Result<Option<f64>, Error> {
        self.store.participant(participant)?;
        let Some(art) = self.current_artifact() else {
            return Ok(None);
        };
        let (row, mask) = self.encoded_row(participant, &art.col_ids)?;
        predict_outcome(&art.c, &row, &mask).map(Some)
    }

    /// The comparison table shown to a participant.
    pub fn summary(&self, participant: ParticipantId) -> Result<ParticipantSummary, Error> {
        let p = self.store.participant(participant)?;
        let groups = match p.outcome {
            Some(_) => Some(peer_groups_in(
                &self.store,
                participant,
                self.config.peer_group_size,
            )?),
            None => None,
        };
        let art = self.current_artifact();
        let rows = self
            .store
            .approved_questions()
            .into_iter()
            .map(|q| SummaryRow {
                question_id: q.question_id,
                text: q.text.clone(),
                own_answer: self
                    .store
                    .response(participant, q.question_id)
                    .map(|r| r.raw_value),
                lower_group_mean: groups
                    .as_ref()
                    .and_then(|g| group_question_profile(&self.store, &g.lower, q.question_id)),
                upper_group_mean: groups
                    .as_ref()
                    .and_then(|g| group_question_profile(&self.store, &g.upper, q.question_id)),
                predictive_power: art.and_then(|a| a.power_of(q.question_id)),
            })
            .collect();
        let rejected_proposals = self
            .store
            .questions()
            .filter(|q| {
                q.author == Author::Participant(participant) && q.status == QuestionStatus::Rejected
            })
            .map(|q| RejectedProposal {
                question_id: q.question_id,
                text: q.text.clone(),
                rejection_code: q.rejection_code,
            })
            .collect();
        Ok(ParticipantSummary {
            participant_id: participant,
            actual_outcome: p.outcome,
            predicted_outcome: self.predicted_outcome(participant)?,
            model_built_at: art.map(|a| a.built_at),
            lower_group_mean_outcome: groups.as_ref().and_then(|g| g.lower_mean_outcome),
            upper_group_mean_outcome: groups.as_ref().and_then(|g| g.upper_mean_outcome),
            rows,
            rejected_proposals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnswerKind, QuestionDraft};
    use crate::moderation::Verdict;
    use alloc::vec;

    struct Log {
        events: Vec<Event>,
    }

    impl Log {
        fn new(config: StudyConfig) -> Self {
            Log {
                events: vec![Event {
                    seq: 1,
                    at: Timestamp(1000),
                    action: Action::ConfigChanged(config),
                }],
            }
        }

        fn push(&mut self, action: Action) -> &Event {
            let last = self.events.last().unwrap();
            let e = Event {
                seq: last.seq + 1,
                at: Timestamp(last.at.0 + 1000),
                action,
            };
            self.events.push(e);
            self.events.last().unwrap()
        }
    }

    fn config() -> StudyConfig {
        let mut c = StudyConfig::new(
            "bmi",
            "BMI",
            10.0,
            80.0,
            vec![QuestionDraft::new(
                "Do you think of yourself as overweight?",
                AnswerKind::YesNo,
            )],
        );
        c.budget_alpha = None;
        c
    }

    fn register(log: &mut Log, id: u64, outcome: f64) {
        log.push(Action::ParticipantRegistered {
            participant_id: ParticipantId(id),
            outcome: Some(outcome),
            credential: None,
        });
    }

    fn answer(log: &mut Log, p: u64, q: u64, value: f64) {
        log.push(Action::ResponseSubmitted {
            participant_id: ParticipantId(p),
            question_id: QuestionId(q),
            value,
        });
    }

    #[test]
    fn first_event_must_configure() {
        let e = Event {
            seq: 1,
            at: Timestamp(1),
            action: Action::ParticipantWithdrew {
                participant_id: ParticipantId(1),
            },
        };
        assert_eq!(Study::create(&e).unwrap_err(), Error::NotInitialized);
    }

    #[test]
    fn gaps_and_time_travel_rejected() {
        let mut log = Log::new(config());
        register(&mut log, 1, 20.0);
        let mut study = Study::from_events(&log.events).unwrap();
        let mut e = log.events[1].clone();
        e.seq = 5;
        assert_eq!(
            study.apply(&e).unwrap_err(),
            Error::SequenceGap {
                expected: 3,
                found: 5
            }
        );
        e.seq = 3;
        e.at = Timestamp(10);
        assert!(matches!(
            study.apply(&e).unwrap_err(),
            Error::NonMonotonicTime { .. }
        ));
    }

    #[test]
    fn validation_failure_changes_nothing() {
        let mut log = Log::new(config());
        register(&mut log, 1, 20.0);
        let mut study = Study::from_events(&log.events).unwrap();
        let before = study.clone();
        let bad = Event {
            seq: 3,
            at: Timestamp(9000),
            action: Action::ResponseSubmitted {
                participant_id: ParticipantId(1),
                question_id: QuestionId(1),
                value: 3.0,
            },
        };
        assert_eq!(study.apply(&bad).unwrap_err(), Error::ValueOutOfDomain(3.0));
        assert_eq!(study, before);
    }

    #[test]
    fn prediction_before_and_after_first_model() {
        let mut log = Log::new(config());
        for (i, (b, yes)) in [(20.0, 0.0), (30.0, 1.0), (22.0, 0.0), (32.0, 1.0)]
            .iter()
            .enumerate()
        {
            register(&mut log, i as u64 + 1, *b);
            answer(&mut log, i as u64 + 1, 1, *yes);
        }
        register(&mut log, 5, 25.0);
        let study = Study::from_events(&log.events).unwrap();
        assert_eq!(study.predicted_outcome(ParticipantId(1)), Ok(None));

        let at = Timestamp(log.events.last().unwrap().at.0 + 1);
        log.push(Action::EngineRun {
            built_at: at,
            digest: None,
        });
        let study = Study::from_events(&log.events).unwrap();
        let art = study.current_artifact().unwrap();
        // rows (x, b): (−1, 20) (1, 30) (−1, 22) (1, 32) (0, 25) → b = 25.8 + 5x
        assert!(
            (art.c[0] - 25.8).abs() < 1e-9 && (art.c[1] - 5.0).abs() < 1e-9,
            "{:?}",
            art.c
        );
        assert_eq!(
            study.predicted_outcome(ParticipantId(5)).unwrap(),
            Some(art.c[0])
        );
        assert!((study.predicted_outcome(ParticipantId(2)).unwrap().unwrap() - 30.8).abs() < 1e-9);
        assert_eq!(study.quality_series().len(), 1);
    }

    #[test]
    fn engine_run_on_empty_study_is_invalid() {
        let mut log = Log::new(config());
        log.push(Action::EngineRun {
            built_at: Timestamp(1500),
            digest: None,
        });
        assert_eq!(
            Study::from_events(&log.events).unwrap_err(),
            Error::EmptyDesign
        );
    }

    #[test]
    fn digest_mismatch_detected() {
        let mut log = Log::new(config());
        register(&mut log, 1, 20.0);
        log.push(Action::EngineRun {
            built_at: Timestamp(2500),
            digest: Some("00".into()),
        });
        assert_eq!(
            Study::from_events(&log.events).unwrap_err(),
            Error::ArtifactMismatch(Timestamp(2500))
        );
    }

    #[test]
    fn withdrawal_keeps_history() {
        let mut log = Log::new(config());
        register(&mut log, 1, 20.0);
        register(&mut log, 2, 30.0);
        log.push(Action::EngineRun {
            built_at: Timestamp(3500),
            digest: None,
        });
        log.push(Action::ParticipantWithdrew {
            participant_id: ParticipantId(2),
        });
        log.push(Action::EngineRun {
            built_at: Timestamp(5500),
            digest: None,
        });
        let study = Study::from_events(&log.events).unwrap();
        assert_eq!(study.artifacts()[0].n, 2);
        assert_eq!(study.artifacts()[1].n, 1);
        assert_eq!(
            study.design(Timestamp(6000)).unwrap().rows,
            vec![ParticipantId(1)]
        );
    }

    #[test]
    fn config_identity_is_frozen() {
        let mut log = Log::new(config());
        let mut retuned = config();
        retuned.engine_period_secs = 3600;
        log.push(Action::ConfigChanged(retuned));
        let study = Study::from_events(&log.events).unwrap();
        assert_eq!(study.config().engine_period_secs, 3600);

        let mut renamed = config();
        renamed.outcome_max = 90.0;
        log.push(Action::ConfigChanged(renamed));
        assert_eq!(
            Study::from_events(&log.events).unwrap_err(),
            Error::ImmutableConfig
        );
    }

    #[test]
    fn summary_table() {
        let mut log = Log::new(config());
        register(&mut log, 1, 20.0);
        register(&mut log, 2, 25.0);
        register(&mut log, 3, 30.0);
        answer(&mut log, 1, 1, 0.0);
        answer(&mut log, 3, 1, 1.0);
        log.push(Action::QuestionProposed {
            question_id: QuestionId(2),
            author: ParticipantId(2),
            draft: QuestionDraft::new("What is your BMI?", AnswerKind::Numeric)
                .with_own_answer(25.0),
        });
        log.push(Action::QuestionReviewed {
            question_id: QuestionId(2),
            verdict: Verdict::Reject,
            rejection_code: Some(RejectionCode::OutcomeCorrelated),
            reviewer: "investigator".into(),
        });
        let study = Study::from_events(&log.events).unwrap();
        let s = study.summary(ParticipantId(2)).unwrap();
        assert_eq!(s.actual_outcome, Some(25.0));
        assert_eq!(s.predicted_outcome, None);
        assert_eq!(s.lower_group_mean_outcome, Some(20.0));
        assert_eq!(s.upper_group_mean_outcome, Some(30.0));
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].own_answer, None);
        assert_eq!(s.rows[0].lower_group_mean, Some(0.0));
        assert_eq!(s.rows[0].upper_group_mean, Some(1.0));
        assert_eq!(s.rejected_proposals.len(), 1);
        assert_eq!(
            s.rejected_proposals[0].rejection_code,
            Some(RejectionCode::OutcomeCorrelated)
        );
    }
}
