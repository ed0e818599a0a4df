//! Writing reports into the output directory.

use std::fs::File;
use std::path::PathBuf;

use polysquare::diophantine::RELATION_TOL;
use polysquare::dynamics::SINGULAR_TOL;
use polysquare::stats::{TrendPoint, UniformityReport, IDENTITY_TOL};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::InputRecord;
use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct Out {
    pub dir: Option<PathBuf>,
}

impl Out {
    fn path(&self, name: &str) -> Result<Option<PathBuf>, CliError> {
        match &self.dir {
            None => Ok(None),
            Some(d) => {
                std::fs::create_dir_all(d)?;
                Ok(Some(d.join(name)))
            }
        }
    }

    pub fn json(&self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        if let Some(p) = self.path(name)? {
            let mut text = serde_json::to_string_pretty(value)
                .map_err(|e| CliError::Output(e.to_string()))?;
            text.push('\n');
            std::fs::write(p, text)?;
        }
        Ok(())
    }

    pub fn csv(&self, name: &str) -> Result<Option<csv::Writer<File>>, CliError> {
        Ok(match self.path(name)? {
            Some(p) => Some(csv::Writer::from_path(p)?),
            None => None,
        })
    }

    /// Rows of a uniformity report, one per test set, plus its trend series.
    pub fn uniformity(&self, prefix: &str, r: &UniformityReport) -> Result<(), CliError> {
        if let Some(mut w) = self.csv(&format!("{prefix}report.csv"))? {
            for row in &r.rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        self.trend(&format!("{prefix}trend.csv"), &r.trend)
    }

    pub fn trend(&self, name: &str, trend: &[TrendPoint]) -> Result<(), CliError> {
        if let Some(mut w) = self.csv(name)? {
            for t in trend {
                w.serialize(t)?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

pub fn tolerances() -> Value {
    json!({
        "singular_vertex": SINGULAR_TOL,
        "relation_residual": RELATION_TOL,
        "identity_relative": IDENTITY_TOL,
    })
}

/// Common wrapper of every report: command, height, tolerances and inputs.
pub fn envelope(command: &str, height: u64, inputs: &[InputRecord], result: Value) -> Value {
    json!({
        "command": command,
        "height": height,
        "tolerances": tolerances(),
        "inputs": inputs,
        "result": result,
    })
}
