//! Simulation specs on disk and simulation results as a directory.
//!
//! Output layout:
//! - events.jsonl, artifact.json: the generated log and its final model
//! - quality.csv, rankings.csv, powerlaw.txt, participation.csv/.pgm: as `analyze`
//! - coefficients.csv: `question_id,true,estimated,d`
//! - power_trajectory.csv: `built_at,question_id,d`
//! - responses_per_day.csv: `day,responses`
//! - summary.json: scalar metrics

use std::path::Path;

use anyhow::Context;
use crowdfit_core::sim::{sim_study_config, simulate_run, SimOutput, SimSpec};
use crowdfit_core::StudyConfig;
use serde::Deserialize;
use serde_json::json;

use crate::export;
use crate::journal::write_log;

/// A spec file: the `SimSpec` keys at the top level, plus an optional
/// `[study]` table overriding the permissive default study config.
#[derive(Debug, Clone, Deserialize)]
pub struct SpecFile {
    #[serde(flatten)]
    pub spec: SimSpec,
    #[serde(default)]
    pub study: Option<StudyConfig>,
}

impl SpecFile {
    pub fn load(path: &Path) -> anyhow::Result<SpecFile> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: SpecFile =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        file.spec.validate()?;
        Ok(file)
    }

    pub fn base_config(&self) -> StudyConfig {
        self.study.clone().unwrap_or_else(sim_study_config)
    }
}

/// Runs `spec`, optionally overriding the seed and engine period.
pub fn run(file: &SpecFile, seed: Option<u64>, period: Option<u64>) -> anyhow::Result<SimOutput> {
    let mut spec = file.spec.clone();
    if let Some(s) = seed {
        spec.seed = s;
    }
    let mut base = file.base_config();
    if let Some(p) = period {
        base.engine_period_secs = p;
    }
    Ok(simulate_run(&spec, &base)?)
}

pub fn write_result(spec: &SimSpec, out: &SimOutput, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_log(&dir.join("events.jsonl"), &out.events)?;
    let r = &out.result;
    if let Some(art) = &r.final_artifact {
        std::fs::write(dir.join("artifact.json"), art.to_json())?;
        export::write_analysis(&out.study, art, dir)?;
        let mut w = csv::Writer::from_path(dir.join("coefficients.csv"))?;
        w.write_record(["question_id", "true", "estimated", "d"])?;
        w.write_record([
            "intercept".to_string(),
            spec.intercept.to_string(),
            art.intercept().to_string(),
            String::new(),
        ])?;
        for (q, truth) in &r.truth {
            let est = art
                .coefficient_of(*q)
                .map(|c| c.to_string())
                .unwrap_or_default();
            let d = art.power_of(*q).map(|d| d.to_string()).unwrap_or_default();
            w.write_record([q.to_string(), truth.to_string(), est, d])?;
        }
        w.flush()?;
    } else {
        export::write_quality_csv(&r.quality, std::fs::File::create(dir.join("quality.csv"))?)?;
    }

    let mut w = csv::Writer::from_path(dir.join("power_trajectory.csv"))?;
    w.write_record(["built_at", "question_id", "d"])?;
    for p in &r.power_trajectory {
        w.write_record([
            p.built_at.to_string(),
            p.question_id.to_string(),
            p.d.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("responses_per_day.csv"))?;
    w.write_record(["day", "responses"])?;
    for (day, n) in &r.responses_per_day {
        w.write_record([day.to_string(), n.to_string()])?;
    }
    w.flush()?;

    let summary = json!({
        "events": out.events.len(),
        "engine_runs": r.quality.len(),
        "max_abs_error": r.max_abs_error,
        "rms_error": r.rms_error,
        "final_model_r2": r.final_artifact.as_ref().map(|a| a.model_r2),
        "rejected_registrations": r.rejected_registrations,
        "rejected_responses": r.rejected_responses,
        "dishonest_agents": r.dishonest_agents,
    });
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(())
}
