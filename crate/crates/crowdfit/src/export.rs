//! CSV and text exports of designs, artifacts and analytics.
//!
//! Headers:
//! - design.csv: `participant_id,outcome,q1,q2,…` (encoded values, empty when unanswered)
//! - quality.csv: `built_at,model_r2`
//! - rankings.csv: `rank,question_id,text,d,coefficient,responses`
//! - participation.csv: `participant_id,q1,q2,…` with 1/0 cells
//! - dishonesty.csv: `participant_id,question_id,value,min,max`
//! - powerlaw.txt: `key = value` lines (m, slope, intercept, fit_r2)

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use crowdfit_core::analytics::{
    dishonesty_scan, loglog_fit, participation_matrix, power_ranking, DishonestyReport,
    ParticipationMatrix, PowerLawFit,
};
use crowdfit_core::{DesignMatrix, ModelArtifact, Store, Study, Timestamp};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_design_csv<W: Write>(design: &DesignMatrix, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["participant_id".to_string(), "outcome".to_string()];
    header.extend(design.cols.iter().map(|q| q.to_string()));
    w.write_record(&header)?;
    for (i, p) in design.rows.iter().enumerate() {
        let mut rec = vec![p.to_string(), design.b[i].to_string()];
        for j in 0..design.k() {
            rec.push(if design.answered_mask.get(i, j) {
                design.a.get(i, j).to_string()
            } else {
                String::new()
            });
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_quality_csv<W: Write>(series: &[(Timestamp, f64)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["built_at", "model_r2"])?;
    for (t, r2) in series {
        w.write_record([t.to_string(), r2.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rankings_csv<W: Write>(
    store: &Store,
    artifact: &ModelArtifact,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "rank",
        "question_id",
        "text",
        "d",
        "coefficient",
        "responses",
    ])?;
    for (rank, (q, d)) in power_ranking(artifact).into_iter().enumerate() {
        let text = store
            .question(q)
            .map(|q| q.text.clone())
            .unwrap_or_default();
        w.write_record([
            (rank + 1).to_string(),
            q.to_string(),
            text,
            d.to_string(),
            opt(artifact.coefficient_of(q)),
            store.response_count(q).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_participation_csv<W: Write>(m: &ParticipationMatrix, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["participant_id".to_string()];
    header.extend(m.cols.iter().map(|q| q.to_string()));
    w.write_record(&header)?;
    for (i, p) in m.rows.iter().enumerate() {
        let mut rec = vec![p.to_string()];
        rec.extend(
            m.cells
                .row(i)
                .iter()
                .map(|c| if *c { "1" } else { "0" }.to_string()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain PGM (P2): answered cells black, unanswered white.
pub fn write_participation_pgm<W: Write>(
    m: &ParticipationMatrix,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "P2\n{} {}\n1", m.cols.len(), m.rows.len())?;
    for i in 0..m.rows.len() {
        let line: Vec<&str> = m
            .cells
            .row(i)
            .iter()
            .map(|c| if *c { "0" } else { "1" })
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_dishonesty_csv<W: Write>(report: &DishonestyReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["participant_id", "question_id", "value", "min", "max"])?;
    for f in &report.flagged {
        w.write_record([
            f.participant_id.to_string(),
            f.question_id.to_string(),
            f.value.to_string(),
            opt(f.bounds.min),
            opt(f.bounds.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn powerlaw_text(fit: &PowerLawFit) -> String {
    format!(
        "m = {}\nslope = {}\nintercept = {}\nfit_r2 = {}\n",
        fit.m, fit.slope, fit.intercept, fit.fit_r2
    )
}

/// Power-law fit over every strictly positive predictive power.
pub fn powerlaw_of(artifact: &ModelArtifact) -> Result<PowerLawFit, crowdfit_core::Error> {
    let m = artifact.d.iter().filter(|d| **d > 0.0).count();
    loglog_fit(&artifact.d, m)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<std::io::BufWriter<std::fs::File>> {
    let path = dir.join(name);
    let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}

/// Writes the analytics report for `study` into `dir`, using `artifact`
/// for the power figures.
pub fn write_analysis(study: &Study, artifact: &ModelArtifact, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let store = study.store();
    write_rankings_csv(store, artifact, create(dir, "rankings.csv")?)?;
    let powerlaw = match powerlaw_of(artifact) {
        Ok(fit) => powerlaw_text(&fit),
        Err(e) => format!("unavailable: {e}\n"),
    };
    std::fs::write(dir.join("powerlaw.txt"), powerlaw)?;
    let pm = participation_matrix(store);
    write_participation_csv(&pm, create(dir, "participation.csv")?)?;
    write_participation_pgm(&pm, create(dir, "participation.pgm")?)?;
    write_quality_csv(&study.quality_series(), create(dir, "quality.csv")?)?;
    write_dishonesty_csv(&dishonesty_scan(store), create(dir, "dishonesty.csv")?)?;
    if let Ok(design) = study.design(artifact.built_at) {
        write_design_csv(&design, create(dir, "design.csv")?)?;
    }
    Ok(())
}
