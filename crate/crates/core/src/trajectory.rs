//! Harvests reward-positive transitions under the deterministic policy
//! and persists them as CSV.

use std::path::Path;

use rand::Rng;

use crate::blackbox::OutputValue;
use crate::env::ExplorerEnv;
use crate::error::{Error, Result};
use crate::rl::AgentModel;

/// One boundary-crossing transition: the output differed between
/// `state` and `next_state`.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualRecord {
    pub state: Vec<f64>,
    /// The clamped perturbation that was actually applied, so
    /// `next_state == clamp(state + action, bounds)`.
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub prev_output: OutputValue,
    pub curr_output: OutputValue,
    pub reward: f64,
}

/// Runs `episodes` full episodes under the deterministic policy and
/// returns every transition whose reward is positive, in encounter order.
pub fn collect_counterfactuals<R: Rng>(
    model: &AgentModel,
    env: &mut ExplorerEnv<'_>,
    episodes: usize,
    rng: &mut R,
) -> Result<Vec<CounterfactualRecord>> {
    let mut records = Vec::new();
    for _ in 0..episodes {
        let results = env.run_episode(|s| model.predict_deterministic(s), rng)?;
        for r in results {
            if r.reward > 0.0 {
                records.push(CounterfactualRecord {
                    state: r.state,
                    action: r.action,
                    next_state: r.next_state,
                    prev_output: r.prev_output,
                    curr_output: r.curr_output,
                    reward: r.reward,
                });
            }
        }
    }
    Ok(records)
}

fn output_to_field(o: &OutputValue) -> String {
    match o {
        OutputValue::Label(s) => s.clone(),
        OutputValue::Score(n) => n.to_string(),
    }
}

/// Integer-parseable fields read back as scores, everything else as labels.
fn field_to_output(s: &str) -> OutputValue {
    match s.parse::<i64>() {
        Ok(n) => OutputValue::Score(n),
        Err(_) => OutputValue::Label(s.to_string()),
    }
}

pub fn write_csv(records: &[CounterfactualRecord], dim: usize, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::Other(e.to_string()))?;
    let mut header = Vec::new();
    for i in 0..dim {
        header.push(format!("state_{i}"));
    }
    for i in 0..dim {
        header.push(format!("action_{i}"));
    }
    for i in 0..dim {
        header.push(format!("next_state_{i}"));
    }
    header.extend(["prev_output".into(), "curr_output".into(), "reward".into()]);
    wtr.write_record(&header).map_err(|e| Error::Other(e.to_string()))?;
    for r in records {
        let mut row = Vec::new();
        for v in r.state.iter().chain(&r.action).chain(&r.next_state) {
            row.push(format!("{v}"));
        }
        row.push(output_to_field(&r.prev_output));
        row.push(output_to_field(&r.curr_output));
        row.push(format!("{}", r.reward));
        wtr.write_record(&row).map_err(|e| Error::Other(e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CounterfactualRecord>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .clone();
    let n_cols = header.len();
    if n_cols < 6 || (n_cols - 3) % 3 != 0 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected column count {n_cols}"),
        });
    }
    let dim = (n_cols - 3) / 3;

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let row = row.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if row.len() != n_cols {
            return Err(Error::Parse {
                line,
                msg: format!("expected {n_cols} fields, got {}", row.len()),
            });
        }
        let parse_f64 = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("not a number: {s:?}"),
            })
        };
        let mut floats = Vec::with_capacity(3 * dim);
        for j in 0..3 * dim {
            floats.push(parse_f64(&row[j])?);
        }
        records.push(CounterfactualRecord {
            state: floats[0..dim].to_vec(),
            action: floats[dim..2 * dim].to_vec(),
            next_state: floats[2 * dim..3 * dim].to_vec(),
            prev_output: field_to_output(&row[3 * dim]),
            curr_output: field_to_output(&row[3 * dim + 1]),
            reward: parse_f64(&row[3 * dim + 2])?,
        });
    }
    Ok(records)
}

/// `<out_dir>/<system_name>_trajectories.csv`
pub fn trajectories_path(out_dir: &Path, system_name: &str) -> std::path::PathBuf {
    out_dir.join(format!("{system_name}_trajectories.csv"))
}
