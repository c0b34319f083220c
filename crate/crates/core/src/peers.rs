//! Outcome-adjacent peer groups for the participant comparison view.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{ParticipantId, QuestionId};
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerGroups {
    /// Nearest outcomes at or below the target, closest first.
    pub lower: Vec<ParticipantId>,
    /// Nearest outcomes strictly above the target, closest first.
    pub upper: Vec<ParticipantId>,
    pub lower_mean_outcome: Option<f64>,
    pub upper_mean_outcome: Option<f64>,
}

/// A participant eligible for peer comparison. Slices of these are expected
/// in registration order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeerCandidate {
    pub participant_id: ParticipantId,
    pub outcome: f64,
}

fn mean_outcome(group: &[PeerCandidate]) -> Option<f64> {
    (!group.is_empty()).then(|| group.iter().map(|c| c.outcome).sum::<f64>() / group.len() as f64)
}

/// Splits `candidates` around `target`'s outcome and keeps the
/// `group_size` nearest on each side. Candidates whose outcome equals the
/// target's fall in the lower group; ties in distance go to whoever
/// registered first.
pub fn build_peer_groups(
    target: ParticipantId,
    target_outcome: Option<f64>,
    candidates: &[PeerCandidate],
    group_size: usize,
) -> Result<PeerGroups, Error> {
    let outcome = target_outcome.ok_or(Error::NoOutcome(target))?;
    let others = candidates.iter().filter(|c| c.participant_id != target);
    let (mut lower, mut upper): (Vec<PeerCandidate>, Vec<PeerCandidate>) =
        others.partition(|c| c.outcome <= outcome);
    // Stable sorts keep registration order among equal outcomes.
    lower.sort_by(|x, y| y.outcome.total_cmp(&x.outcome));
    upper.sort_by(|x, y| x.outcome.total_cmp(&y.outcome));
    lower.truncate(group_size);
    upper.truncate(group_size);
    Ok(PeerGroups {
        lower_mean_outcome: mean_outcome(&lower),
        upper_mean_outcome: mean_outcome(&upper),
        lower: lower.iter().map(|c| c.participant_id).collect(),
        upper: upper.iter().map(|c| c.participant_id).collect(),
    })
}

/// Peer candidates from a store: non-withdrawn participants with an outcome.
pub fn store_candidates(store: &Store) -> Vec<PeerCandidate> {
    store
        .active_participants()
        .filter_map(|p| {
            p.outcome.map(|outcome| PeerCandidate {
                participant_id: p.participant_id,
                outcome,
            })
        })
        .collect()
}

/// Peer groups of `target` among the store's current participants.
pub fn peer_groups_in(
    store: &Store,
    target: ParticipantId,
    group_size: usize,
) -> Result<PeerGroups, Error> {
    let p = store.participant(target)?;
    build_peer_groups(target, p.outcome, &store_candidates(store), group_size)
}

/// Mean raw answer to `question` among `group` members who answered it.
pub fn group_question_profile(
    store: &Store,
    group: &[ParticipantId],
    question: QuestionId,
) -> Option<f64> {
    let answers: Vec<f64> = group
        .iter()
        .filter_map(|p| store.response(*p, question))
        .map(|r| r.raw_value)
        .collect();
    (!answers.is_empty()).then(|| answers.iter().sum::<f64>() / answers.len() as f64)
}
