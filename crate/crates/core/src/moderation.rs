//! Investigator review of participant-proposed questions.
//!
//! A question moves Pending → Approved or Pending → Rejected exactly once.
//! Rejected questions stay in the store for audit.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{Question, QuestionId, QuestionStatus, RejectionCode, Timestamp};
use crate::store::Store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModerationVerdict {
    pub question_id: QuestionId,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection_code: Option<RejectionCode>,
    pub reviewed_at: Timestamp,
    pub reviewer: String,
}

impl ModerationVerdict {
    pub fn approve(question_id: QuestionId, reviewer: impl Into<String>, at: Timestamp) -> Self {
        ModerationVerdict {
            question_id,
            verdict: Verdict::Approve,
            rejection_code: None,
            reviewed_at: at,
            reviewer: reviewer.into(),
        }
    }

    pub fn reject(
        question_id: QuestionId,
        code: RejectionCode,
        reviewer: impl Into<String>,
        at: Timestamp,
    ) -> Self {
        ModerationVerdict {
            question_id,
            verdict: Verdict::Reject,
            rejection_code: Some(code),
            reviewed_at: at,
            reviewer: reviewer.into(),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        match self.verdict {
            Verdict::Approve => self.rejection_code.is_none(),
            Verdict::Reject => self.rejection_code.is_some(),
        }
    }
}

/// Questions awaiting review, oldest first.
pub fn list_pending(store: &Store) -> Vec<&Question> {
    store.questions_with_status(QuestionStatus::Pending)
}

/// Applies a verdict. Approval keeps the original `posted_at` and turns the
/// proposer's held answer into a response.
pub fn review_question<'s>(
    store: &'s mut Store,
    verdict: &ModerationVerdict,
) -> Result<&'s Question, Error> {
    if !verdict.is_well_formed() {
        return Err(Error::InvalidVerdict);
    }
    let id = verdict.question_id;
    if store.question(id)?.status != QuestionStatus::Pending {
        return Err(Error::AlreadyReviewed(id));
    }
    match verdict.verdict {
        Verdict::Approve => {
            store.question_mut(id)?.status = QuestionStatus::Approved;
            store.activate_held_answer(id, verdict.reviewed_at);
        }
        Verdict::Reject => {
            let q = store.question_mut(id)?;
            q.status = QuestionStatus::Rejected;
            q.rejection_code = verdict.rejection_code;
        }
    }
    store.question(id)
}
