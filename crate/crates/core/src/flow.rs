//! Which unanswered questions a participant is shown next, and in what order.
//!
//! Two orderings are available: plain posting order, and query-by-committee,
//! where questions whose predictive power varies most across bootstrap
//! resamples of the data come first. Either may be cut short by the
//! question budget once questions start to outnumber participants.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::question_power;
use crate::error::Error;
use crate::matrix::{build_design, DesignMatrix};
use crate::model::{
    CommitteeConfig, OrderingStrategy, ParticipantId, QuestionId, StudyConfig, Timestamp,
};
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingDecision {
    pub participant_id: ParticipantId,
    pub questions: Vec<QuestionId>,
    pub strategy: OrderingStrategy,
    pub budget: Option<usize>,
    pub decided_at: Timestamp,
}

/// Row indices of every committee member's bootstrap sample.
///
/// Member `m` draws `n` indices uniformly with replacement; all members share
/// one ChaCha8 stream seeded from `seed`, consumed member by member.
pub fn bootstrap_samples(n: usize, members: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..members)
        .map(|_| (0..n).map(|_| rng.random_range(0..n)).collect())
        .collect()
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).max(0.0)
}

/// Per-column disagreement: the variance of the column's predictive power
/// across committee members, each fitted on its own bootstrap sample.
/// Scores are aligned with `design.cols`.
pub fn committee_disagreement(
    design: &DesignMatrix,
    committee: &CommitteeConfig,
    min_samples: usize,
) -> Result<Vec<f64>, Error> {
    if design.n() == 0 || design.k() == 0 {
        return Err(Error::EmptyDesign);
    }
    if committee.members < 2 {
        return Err(Error::InvalidConfig("committee needs at least two members"));
    }
    let samples = bootstrap_samples(design.n(), committee.members, committee.seed);
    let scores = (0..design.k())
        .map(|j| {
            let powers: Vec<f64> = samples
                .iter()
                .map(|rows| {
                    question_power(
                        rows.iter().map(|&i| {
                            (
                                design.a.get(i, j),
                                design.b[i],
                                design.answered_mask.get(i, j),
                            )
                        }),
                        min_samples,
                    )
                })
                .collect();
            sample_variance(&powers)
        })
        .collect();
    Ok(scores)
}

/// `⌊alpha·n⌋` (at least 1) once `k ≥ alpha·n`, otherwise no cap.
pub fn question_budget(n_participants: usize, k_questions: usize, alpha: f64) -> Option<usize> {
    let scaled = alpha * n_participants as f64;
    if (k_questions as f64) >= scaled {
        Some((libm::floor(scaled) as usize).max(1))
    } else {
        None
    }
}

/// Orders the approved questions `participant` has not answered yet.
///
/// Committee ordering falls back to posting order while no design matrix
/// can be built; the decision records which strategy was actually used.
pub fn next_questions(
    store: &Store,
    config: &StudyConfig,
    participant: ParticipantId,
    decided_at: Timestamp,
) -> Result<OrderingDecision, Error> {
    store.participant(participant)?;
    let approved = store.approved_questions();
    let answered = approved
        .iter()
        .filter(|q| store.response(participant, q.question_id).is_some())
        .count();
    let mut open: Vec<_> = approved
        .iter()
        .filter(|q| store.response(participant, q.question_id).is_none())
        .copied()
        .collect();

    let mut strategy = OrderingStrategy::Chronological;
    if config.ordering_strategy == OrderingStrategy::CommitteeDisagreement && !open.is_empty() {
        if let Ok(design) = build_design(store, config, decided_at) {
            let scores =
                committee_disagreement(&design, &config.committee, config.min_samples_for_power)?;
            let score_of = |q: QuestionId| {
                design
                    .cols
                    .iter()
                    .position(|c| *c == q)
                    .map_or(0.0, |j| scores[j])
            };
            let mut keyed: Vec<_> = open
                .iter()
                .map(|q| {
                    (
                        score_of(q.question_id),
                        store.response_count(q.question_id),
                        *q,
                    )
                })
                .collect();
            keyed.sort_by(|x, y| {
                y.0.total_cmp(&x.0)
                    .then(x.1.cmp(&y.1))
                    .then(x.2.order_key().cmp(&y.2.order_key()))
            });
            open = keyed.into_iter().map(|t| t.2).collect();
            strategy = OrderingStrategy::CommitteeDisagreement;
        }
    }

    let budget = config.budget_alpha.and_then(|alpha| {
        let n = store
            .active_participants()
            .filter(|p| p.outcome.is_some())
            .count();
        question_budget(n, approved.len(), alpha)
    });
    let mut questions: Vec<QuestionId> = open.iter().map(|q| q.question_id).collect();
    if let Some(cap) = budget {
        questions.truncate(cap.saturating_sub(answered));
    }
    Ok(OrderingDecision {
        participant_id: participant,
        questions,
        strategy,
        budget,
        decided_at,
    })
}
