//! CSV writers. Floats use the shortest representation that parses back to
//! the same value.

use crate::CliError;
use jmsglmb::glmb::MultiTargetEstimate;
use jmsglmb::metrics::OspaRow;
use std::fs::File;
use std::io::Write;
use std::path::Path;

pub(crate) fn num(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub(crate) fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_estimates(path: &Path, run: usize, estimates: &[MultiTargetEstimate], state_dim: usize) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header = vec!["run", "step", "label_birth", "label_idx", "mode", "x", "vx", "y", "vy"];
    if state_dim > 4 {
        header.push("omega");
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for est in estimates {
        for t in &est.targets {
            let mut row = vec![
                run.to_string(),
                est.time.to_string(),
                t.label.birth_time.to_string(),
                t.label.birth_index.to_string(),
                (t.mode + 1).to_string(),
            ];
            row.extend(t.mean.iter().take(header.len() - 5).map(|&v| num(v)));
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
    }
    finish(w, path)
}

pub fn write_modes(path: &Path, run: usize, estimates: &[MultiTargetEstimate], modes: usize) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = ["run", "step", "label_birth", "label_idx"].map(String::from).to_vec();
    header.extend((1..=modes).map(|r| format!("p_mode_{r}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for est in estimates {
        for t in &est.targets {
            let mut row = vec![
                run.to_string(),
                est.time.to_string(),
                t.label.birth_time.to_string(),
                t.label.birth_index.to_string(),
            ];
            row.extend(t.mode_probs.iter().map(|&p| num(p)));
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
    }
    finish(w, path)
}

pub fn write_ospa(path: &Path, rows: &[OspaRow]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["step", "ospa_total", "ospa_loc", "ospa_card", "card_truth", "card_est"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            num(r.ospa_total),
            num(r.ospa_loc),
            num(r.ospa_card),
            r.card_truth.to_string(),
            r.card_est.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(w, path)
}

/// Writes `header` then `rows` verbatim.
pub(crate) fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    finish(w, path)
}
