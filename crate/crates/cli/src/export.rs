use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde_json::json;
use solvertune_api::ApiState;
use solvertune_core::journal::TrialView;

use crate::{api_failure, CmdResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Csv,
    Json,
}

/// Terminal trials in id order; trials still running are left out.
pub fn run(dir: &Path, id: &str, format: ExportFormat, output: Option<&Path>) -> CmdResult {
    let view = ApiState::new(dir).view(id).map_err(api_failure)?;
    let space = view.config.space.clone().ok_or_else(|| anyhow::anyhow!("journal of `{id}` has no search space"))?;
    let trials: Vec<&TrialView> = view.trials.values().filter(|t| t.status.is_terminal()).collect();
    let mut out: Box<dyn Write> = match output {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            let mut header = vec!["id".to_string(), "generation".to_string()];
            header.extend(space.names().map(String::from));
            header.extend(["objective", "status", "elapsed"].map(String::from));
            w.write_record(&header)?;
            for t in &trials {
                let mut row = vec![t.id.to_string(), t.generation.to_string()];
                row.extend(space.names().map(|n| t.configuration.get(n).map_or(String::new(), |v| v.to_string())));
                row.push(t.objective.map_or(String::new(), |o| o.to_string()));
                row.push(t.status.name().to_string());
                row.push(t.elapsed.map_or(String::new(), |e| e.to_string()));
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        ExportFormat::Json => {
            let rows: Vec<_> = trials
                .iter()
                .map(|t| {
                    json!({
                        "id": t.id,
                        "generation": t.generation,
                        "configuration": t.configuration,
                        "objective": t.objective,
                        "status": t.status.name(),
                        "elapsed": t.elapsed,
                    })
                })
                .collect();
            serde_json::to_writer_pretty(&mut out, &rows)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}
