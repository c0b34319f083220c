//! Deterministic synthetic populations driven through the real study code.
//!
//! Each agent has a latent answer to every question and an outcome generated
//! from a known linear model, `b = c*₀ + Σ c*ⱼ aⱼ + ε`, summed over the
//! questions that exist by the agent's last visit (plus any question the
//! agent proposes). Agents arrive on a fixed schedule, may come back a few
//! times, and answer whatever the study's question flow shows them. All time
//! is virtual; the engine fires on period boundaries of that clock.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analytics::{participation_matrix, ParticipationMatrix};
use crate::engine::ModelArtifact;
use crate::error::Error;
use crate::event::{Action, Event};
use crate::flow::next_questions;
use crate::matrix::encode_answer;
use crate::model::{
    AnswerKind, Bounds, OrderingStrategy, ParticipantId, QuestionDraft, QuestionId, StudyConfig,
    Timestamp,
};
use crate::moderation::Verdict;
use crate::study::Study;

const MS_PER_DAY: u64 = 86_400_000;
const LATENT_STREAM: u64 = 0;
const BEHAVIOUR_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimQuestion {
    /// Seconds after the study starts; 0 makes it a seed question.
    pub post_secs: u64,
    #[serde(default)]
    pub text: Option<String>,
    pub kind: AnswerKind,
    #[serde(default)]
    pub bounds: Bounds,
    /// Ground-truth coefficient of the encoded answer.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub seed: u64,
    pub n_users: usize,
    #[serde(default = "spec_defaults::arrival_start")]
    pub arrival_start_secs: u64,
    #[serde(default = "spec_defaults::arrival_interval")]
    pub arrival_interval_secs: u64,
    /// Visits after the first one.
    #[serde(default)]
    pub revisits: usize,
    #[serde(default = "spec_defaults::revisit_interval")]
    pub revisit_interval_secs: u64,
    /// Ground-truth intercept.
    #[serde(default)]
    pub intercept: f64,
    pub questions: Vec<SimQuestion>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "spec_defaults::answer_prob")]
    pub answer_prob: f64,
    /// The r-th question shown in a visit (from 0) is answered with
    /// probability `answer_prob · exp(−fatigue_decay · r)`.
    #[serde(default)]
    pub fatigue_decay: f64,
    #[serde(default)]
    pub dishonest_fraction: f64,
    #[serde(default = "spec_defaults::ordering")]
    pub ordering: OrderingStrategy,
}

mod spec_defaults {
    use crate::model::OrderingStrategy;

    pub fn arrival_start() -> u64 {
        60
    }
    pub fn arrival_interval() -> u64 {
        60
    }
    pub fn revisit_interval() -> u64 {
        3600
    }
    pub fn answer_prob() -> f64 {
        1.0
    }
    pub fn ordering() -> OrderingStrategy {
        OrderingStrategy::Chronological
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = Error::InvalidSpec;
        if self.n_users == 0 {
            return Err(bad("n_users must be positive"));
        }
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !unit(self.answer_prob) || !unit(self.dishonest_fraction) {
            return Err(bad("probabilities must lie in [0, 1]"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(bad("noise_sigma must be a nonnegative real"));
        }
        if !(self.fatigue_decay.is_finite() && self.fatigue_decay >= 0.0) {
            return Err(bad("fatigue_decay must be a nonnegative real"));
        }
        if !self.intercept.is_finite() {
            return Err(bad("intercept must be finite"));
        }
        if self.revisits > 0 && self.revisit_interval_secs == 0 {
            return Err(bad("revisit interval must be positive"));
        }
        if self
            .questions
            .windows(2)
            .any(|w| w[1].post_secs < w[0].post_secs)
        {
            return Err(bad("question schedule must be in nondecreasing time order"));
        }
        if self.questions.first().is_none_or(|q| q.post_secs != 0) {
            return Err(bad("at least one question must be posted at time 0"));
        }
        for q in &self.questions {
            if !q.coefficient.is_finite() || !q.bounds.is_valid() {
                return Err(bad(
                    "question coefficients must be finite and bounds min < max",
                ));
            }
            if q.kind != AnswerKind::Numeric && !q.bounds.is_empty() {
                return Err(bad("only numeric questions take bounds"));
            }
        }
        Ok(())
    }

    fn text_of(&self, idx: usize) -> String {
        self.questions[idx]
            .text
            .clone()
            .unwrap_or_else(|| format!("Synthetic question {}", idx + 1))
    }

    fn arrival_secs(&self, user: usize) -> u64 {
        self.arrival_start_secs + user as u64 * self.arrival_interval_secs
    }

    fn last_visit_secs(&self, user: usize) -> u64 {
        self.arrival_secs(user) + self.revisits as u64 * self.revisit_interval_secs
    }

    /// Study config used for a run: `base` with this spec's time-0 questions
    /// as seeds and this spec's ordering strategy.
    pub fn study_config(&self, base: &StudyConfig) -> StudyConfig {
        let mut cfg = base.clone();
        cfg.seed_questions = self
            .questions
            .iter()
            .enumerate()
            .filter(|(_, q)| q.post_secs == 0)
            .map(|(i, q)| QuestionDraft {
                text: self.text_of(i),
                kind: q.kind,
                bounds: q.bounds,
                own_answer: None,
            })
            .collect();
        cfg.ordering_strategy = self.ordering;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub built_at: Timestamp,
    pub question_id: QuestionId,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Largest absolute error over the intercept and the modeled coefficients.
    pub max_abs_error: Option<f64>,
    pub rms_error: Option<f64>,
    pub quality: Vec<(Timestamp, f64)>,
    pub power_trajectory: Vec<PowerPoint>,
    pub participation: ParticipationMatrix,
    /// `(day, accepted responses)` for every day with at least one response.
    pub responses_per_day: Vec<(u64, usize)>,
    /// Ground-truth coefficient of each study question id.
    pub truth: Vec<(QuestionId, f64)>,
    pub rejected_registrations: usize,
    pub rejected_responses: usize,
    pub dishonest_agents: usize,
    pub final_artifact: Option<ModelArtifact>,
}

/// A finished simulation: the event log it produced, the final study state,
/// and its metrics.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub events: Vec<Event>,
    pub study: Study,
    pub result: SimResult,
}

struct Agent {
    latent: Vec<f64>,
    outcome: f64,
    dishonest: bool,
    participant: Option<ParticipantId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Happening {
    // Variant order = processing order within one second.
    Post(usize),
    Visit(usize),
}

fn latent_answer(q: &SimQuestion, rng: &mut ChaCha8Rng) -> f64 {
    match q.kind {
        AnswerKind::YesNo => f64::from(u8::from(rng.random_bool(0.5))),
        AnswerKind::Likert5 => f64::from(rng.random_range(1u8..=5)),
        AnswerKind::Numeric => {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            match (q.bounds.min, q.bounds.max) {
                (Some(lo), Some(hi)) => rng.random_range(lo..=hi),
                (Some(lo), None) => lo + z.abs(),
                (None, Some(hi)) => hi - z.abs(),
                (None, None) => z,
            }
        }
    }
}

/// Dishonest agents answer bounded numeric questions uniformly over twice
/// the bounded range, centred on it.
fn dishonest_answer(q: &SimQuestion, latent: f64, rng: &mut ChaCha8Rng) -> f64 {
    match (q.kind, q.bounds.min, q.bounds.max) {
        (AnswerKind::Numeric, Some(lo), Some(hi)) => {
            let half = (hi - lo) / 2.0;
            rng.random_range(lo - half..=hi + half)
        }
        _ => latent,
    }
}

struct Runner {
    study: Study,
    events: Vec<Event>,
    period_ms: u64,
    next_run_ms: u64,
}

impl Runner {
    fn next_at(&self, base_ms: u64) -> Timestamp {
        Timestamp(base_ms.max(self.study.last_at().0 + 1))
    }

    /// Appends an event if it validates; returns whether it did.
    fn push(&mut self, base_ms: u64, action: Action) -> Result<bool, Error> {
        let event = Event {
            seq: self.study.last_seq() + 1,
            at: self.next_at(base_ms),
            action,
        };
        if self.study.validate(&event).is_err() {
            return Ok(false);
        }
        self.study.apply(&event)?;
        self.events.push(event);
        Ok(true)
    }

    fn engine_run(&mut self, base_ms: u64) -> Result<(), Error> {
        let at = self.next_at(base_ms);
        let artifact = match self.study.build_artifact(at) {
            Ok(a) => a,
            Err(Error::EmptyDesign) => return Ok(()),
            Err(e) => return Err(e),
        };
        let event = Event {
            seq: self.study.last_seq() + 1,
            at,
            action: Action::EngineRun {
                built_at: at,
                digest: Some(artifact.digest()),
            },
        };
        self.study.apply_prebuilt(&event, artifact)?;
        self.events.push(event);
        Ok(())
    }

    /// Fires one run for the latest period boundary at or before `now_ms`.
    fn catch_up(&mut self, now_ms: u64) -> Result<(), Error> {
        if now_ms < self.next_run_ms {
            return Ok(());
        }
        let boundary = now_ms - (now_ms % self.period_ms);
        self.engine_run(boundary)?;
        self.next_run_ms = boundary + self.period_ms;
        Ok(())
    }
}

/// Runs `spec` against a study configured from `base` and collects metrics.
pub fn simulate_run(spec: &SimSpec, base: &StudyConfig) -> Result<SimOutput, Error> {
    spec.validate()?;
    let config = spec.study_config(base);
    config.validate()?;

    let mut latent_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    latent_rng.set_stream(LATENT_STREAM);
    let mut behaviour_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    behaviour_rng.set_stream(BEHAVIOUR_STREAM);

    // Later questions are proposed by the most recent arrival at posting time
    // (or, before anyone arrives, by the first agent right after they register).
    let proposer: Vec<Option<usize>> = spec
        .questions
        .iter()
        .map(|q| {
            (q.post_secs > 0).then(|| {
                (0..spec.n_users)
                    .rev()
                    .find(|u| spec.arrival_secs(*u) <= q.post_secs)
                    .unwrap_or(0)
            })
        })
        .collect();
    let effective_post = |j: usize| -> u64 {
        match proposer[j] {
            Some(u) => spec.questions[j].post_secs.max(spec.arrival_secs(u)),
            None => 0,
        }
    };

    let noise =
        Normal::new(0.0, spec.noise_sigma).map_err(|_| Error::InvalidSpec("bad noise_sigma"))?;
    let mut agents = Vec::with_capacity(spec.n_users);
    let mut dishonest_agents = 0;
    for u in 0..spec.n_users {
        let latent: Vec<f64> = spec
            .questions
            .iter()
            .map(|q| latent_answer(q, &mut latent_rng))
            .collect();
        let dishonest = latent_rng.random_bool(spec.dishonest_fraction);
        dishonest_agents += usize::from(dishonest);
        let eps = if spec.noise_sigma > 0.0 {
            noise.sample(&mut latent_rng)
        } else {
            0.0
        };
        let mut outcome = spec.intercept + eps;
        for (j, q) in spec.questions.iter().enumerate() {
            if effective_post(j) <= spec.last_visit_secs(u) || proposer[j] == Some(u) {
                outcome += q.coefficient * encode_answer(q.kind, latent[j])?;
            }
        }
        agents.push(Agent {
            latent,
            outcome,
            dishonest,
            participant: None,
        });
    }

    let mut schedule: Vec<(u64, Happening)> = Vec::new();
    for (j, q) in spec.questions.iter().enumerate() {
        if q.post_secs > 0 {
            schedule.push((effective_post(j), Happening::Post(j)));
        }
    }
    for u in 0..spec.n_users {
        for v in 0..=spec.revisits {
            schedule.push((
                spec.arrival_secs(u) + v as u64 * spec.revisit_interval_secs,
                Happening::Visit(u),
            ));
        }
    }
    schedule.sort();

    let genesis = Event {
        seq: 1,
        at: Timestamp(0),
        action: Action::ConfigChanged(config.clone()),
    };
    let study = Study::create(&genesis)?;
    let period_ms = config.engine_period_secs * 1000;
    let mut runner = Runner {
        study,
        events: alloc::vec![genesis],
        period_ms,
        next_run_ms: period_ms,
    };

    let mut qid_of: BTreeMap<usize, QuestionId> = BTreeMap::new();
    for (i, (j, _)) in spec
        .questions
        .iter()
        .enumerate()
        .filter(|(_, q)| q.post_secs == 0)
        .enumerate()
    {
        qid_of.insert(j, QuestionId(i as u64 + 1));
    }
    let sim_index: BTreeMap<QuestionId, usize> = qid_of.iter().map(|(j, q)| (*q, *j)).collect();
    let mut sim_index = sim_index;
    let mut rejected_registrations = 0;
    let mut rejected_responses = 0;
    let mut registered = alloc::vec![false; spec.n_users];

    for (secs, happening) in schedule {
        let base_ms = secs * 1000;
        runner.catch_up(base_ms)?;
        match happening {
            Happening::Post(j) => {
                let author_idx = proposer[j].expect("only later questions are scheduled");
                let Some(author) = agents[author_idx].participant else {
                    continue;
                };
                let q = &spec.questions[j];
                let qid = runner.study.store().next_question_id();
                let draft = QuestionDraft {
                    text: spec.text_of(j),
                    kind: q.kind,
                    bounds: q.bounds,
                    own_answer: Some(agents[author_idx].latent[j]),
                };
                if runner.push(
                    base_ms,
                    Action::QuestionProposed {
                        question_id: qid,
                        author,
                        draft,
                    },
                )? {
                    runner.push(
                        base_ms,
                        Action::QuestionReviewed {
                            question_id: qid,
                            verdict: Verdict::Approve,
                            rejection_code: None,
                            reviewer: "investigator".into(),
                        },
                    )?;
                    qid_of.insert(j, qid);
                    sim_index.insert(qid, j);
                }
            }
            Happening::Visit(u) => {
                if !registered[u] {
                    registered[u] = true;
                    let pid = runner.study.store().next_participant_id();
                    let action = Action::ParticipantRegistered {
                        participant_id: pid,
                        outcome: Some(agents[u].outcome),
                        credential: None,
                    };
                    if runner.push(base_ms, action)? {
                        agents[u].participant = Some(pid);
                    } else {
                        rejected_registrations += 1;
                    }
                }
                let Some(pid) = agents[u].participant else {
                    continue;
                };
                let decided_at = runner.next_at(base_ms);
                let decision =
                    next_questions(runner.study.store(), runner.study.config(), pid, decided_at)?;
                for (rank, qid) in decision.questions.iter().enumerate() {
                    let p = spec.answer_prob * libm::exp(-spec.fatigue_decay * rank as f64);
                    if !behaviour_rng.random_bool(p.clamp(0.0, 1.0)) {
                        continue;
                    }
                    let j = sim_index[qid];
                    let latent = agents[u].latent[j];
                    let value = if agents[u].dishonest {
                        dishonest_answer(&spec.questions[j], latent, &mut behaviour_rng)
                    } else {
                        latent
                    };
                    let action = Action::ResponseSubmitted {
                        participant_id: pid,
                        question_id: *qid,
                        value,
                    };
                    if !runner.push(base_ms, action)? {
                        rejected_responses += 1;
                    }
                }
            }
        }
    }

    // One final run on the first boundary after the last event.
    let last_ms = runner.study.last_at().0;
    let final_ms = (last_ms / period_ms + 1) * period_ms;
    runner.next_run_ms = runner.next_run_ms.min(final_ms);
    runner.catch_up(final_ms)?;

    let Runner { study, events, .. } = runner;
    let truth: Vec<(QuestionId, f64)> = qid_of
        .iter()
        .map(|(j, q)| (*q, spec.questions[*j].coefficient))
        .collect();
    let final_artifact = study.current_artifact().map(|a| (**a).clone());
    let (max_abs_error, rms_error) = match &final_artifact {
        Some(art) => {
            let mut errors = alloc::vec![art.c[0] - spec.intercept];
            for (q, c_true) in &truth {
                if let Some(c_hat) = art.coefficient_of(*q) {
                    errors.push(c_hat - c_true);
                }
            }
            let max = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            let rms = libm::sqrt(errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64);
            (Some(max), Some(rms))
        }
        None => (None, None),
    };
    let power_trajectory = study
        .artifacts()
        .iter()
        .flat_map(|a| {
            a.col_ids.iter().zip(&a.d).map(|(q, d)| PowerPoint {
                built_at: a.built_at,
                question_id: *q,
                d: *d,
            })
        })
        .collect();
    let mut per_day: BTreeMap<u64, usize> = BTreeMap::new();
    for e in &events {
        if let Action::ResponseSubmitted { .. } = e.action {
            *per_day.entry(e.at.0 / MS_PER_DAY).or_default() += 1;
        }
    }
    let result = SimResult {
        max_abs_error,
        rms_error,
        quality: study.quality_series(),
        power_trajectory,
        participation: participation_matrix(study.store()),
        responses_per_day: per_day.into_iter().collect(),
        truth,
        rejected_registrations,
        rejected_responses,
        dishonest_agents,
        final_artifact,
    };
    Ok(SimOutput {
        events,
        study,
        result,
    })
}

/// A small ready-made spec: `k` numeric questions at time 0 with
/// coefficients `1, -1, 2, -2, …`, one visit per agent.
pub fn basic_spec(seed: u64, n_users: usize, k: usize, noise_sigma: f64) -> SimSpec {
    SimSpec {
        seed,
        n_users,
        arrival_start_secs: 60,
        arrival_interval_secs: 60,
        revisits: 0,
        revisit_interval_secs: 3600,
        intercept: 3.0,
        questions: (0..k)
            .map(|j| {
                let magnitude = (j / 2 + 1) as f64;
                SimQuestion {
                    post_secs: 0,
                    text: None,
                    kind: AnswerKind::Numeric,
                    bounds: Bounds::new(Some(0.0), Some(10.0)),
                    coefficient: if j % 2 == 0 { magnitude } else { -magnitude },
                }
            })
            .collect(),
        noise_sigma,
        answer_prob: 1.0,
        fatigue_decay: 0.0,
        dishonest_fraction: 0.0,
        ordering: OrderingStrategy::Chronological,
    }
}

/// A permissive study config for simulations: wide outcome bounds, no
/// question budget.
pub fn sim_study_config() -> StudyConfig {
    let mut cfg = StudyConfig::new(
        "sim",
        "outcome",
        -1e9,
        1e9,
        alloc::vec![QuestionDraft::new("placeholder", AnswerKind::YesNo)],
    );
    cfg.budget_alpha = None;
    cfg
}
