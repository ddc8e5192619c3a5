//! Output artifacts: every file starts with a metadata header carrying the
//! code version, the effective seed, a timestamp, and the full normalized
//! config, so a run can be reproduced from its own output.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::config::RunConfig;
use crate::error::{io_err, CliError};
use metts::sampler::SampleRecord;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Header {
    pub version: String,
    pub seed: u64,
    pub timestamp: String,
    pub config: RunConfig,
}

impl Header {
    pub fn new(config: &RunConfig) -> Self {
        Header {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.sampling.as_ref().map(|s| s.seed).unwrap_or(0),
            timestamp: OffsetDateTime::now_utc()
                .format(&Rfc3339)
                .unwrap_or_else(|_| "unknown".into()),
            config: config.clone(),
        }
    }
}

/// Sample sink writing one JSON object per record, flushed after every
/// line so an interrupted run still leaves a valid, analyzable prefix.
pub struct JsonlSink<W: Write> {
    w: W,
    count: u64,
}

impl<W: Write> JsonlSink<W> {
    pub fn create(mut w: W, header: &Header) -> std::io::Result<Self> {
        let line = serde_json::to_string(header).expect("header serializes");
        writeln!(w, "{line}")?;
        w.flush()?;
        Ok(JsonlSink { w, count: 0 })
    }

    pub fn write(&mut self, record: &SampleRecord) -> std::io::Result<()> {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(self.w, "{line}")?;
        self.w.flush()?;
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// CSV sink with the metadata header as a leading `#` comment line.
pub fn create_csv(
    path: &Path,
    header: &Header,
    columns: &[&str],
) -> Result<csv::Writer<File>, CliError> {
    let mut file = File::create(path).map_err(io_err(path))?;
    let meta = serde_json::to_string(header).expect("header serializes");
    writeln!(file, "# {meta}").map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(columns).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(w)
}

pub fn csv_row<S: Serialize>(
    w: &mut csv::Writer<File>,
    path: &Path,
    row: S,
) -> Result<(), CliError> {
    w.serialize(row)
        .and_then(|_| w.flush().map_err(csv::Error::from))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
