use std::io::Write;

use solvertune_core::journal::ExperimentView;

fn best(v: &ExperimentView) -> String {
    v.best.as_ref().map_or_else(|| "-".to_string(), |b| b.objective.to_string())
}

pub fn progress(v: &ExperimentView) -> String {
    let c = v.counts();
    format!(
        "{} gen {} | {}/{} trials ({} running, {} failed) | best {}",
        v.status,
        v.current_generation(),
        c.terminal(),
        v.config.max_trials,
        c.running,
        c.failed + c.timeout,
        best(v)
    )
}

pub fn status_table(out: &mut impl Write, views: &[ExperimentView]) -> std::io::Result<()> {
    let rows: Vec<[String; 5]> = views
        .iter()
        .map(|v| {
            [
                v.id.clone(),
                v.status.to_string(),
                format!("{}/{}", v.counts().terminal(), v.config.max_trials),
                v.config.tuner.kind.to_string(),
                best(v),
            ]
        })
        .collect();
    let header = ["ID", "STATUS", "TRIALS", "TUNER", "BEST"];
    let mut width = header.map(str::len);
    for r in &rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |out: &mut dyn Write, cells: &[&str]| {
        let padded: Vec<String> = cells.iter().zip(width).map(|(c, w)| format!("{c:<w$}")).collect();
        writeln!(out, "{}", padded.join("  ").trim_end())
    };
    line(out, &header)?;
    for r in &rows {
        line(out, &r.each_ref().map(String::as_str))?;
    }
    Ok(())
}

pub fn status_csv(out: &mut impl Write, views: &[ExperimentView]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "status", "trials_done", "max_trials", "tuner", "best_objective"])?;
    for v in views {
        w.write_record([
            v.id.clone(),
            v.status.to_string(),
            v.counts().terminal().to_string(),
            v.config.max_trials.to_string(),
            v.config.tuner.kind.to_string(),
            v.best.as_ref().map_or(String::new(), |b| b.objective.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
