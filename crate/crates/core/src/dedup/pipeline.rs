//! JSONL in, JSONL + JSON report out.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use super::{dedup, DatasetRecord, DedupConfig, DedupError, DedupReport, EmbeddingProvider};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Dedup(#[from] DedupError),
}

impl PipelineError {
    /// 1-based input line of a malformed record.
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Malformed { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub input: usize,
    pub kept: usize,
    pub removed: usize,
    pub pairs_compared: u64,
    #[serde(with = "millis")]
    pub wall_time: Duration,
}

impl std::fmt::Display for PipelineSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "input {} kept {} removed {} pairs {} in {:.3}s",
            self.input,
            self.kept,
            self.removed,
            self.pairs_compared,
            self.wall_time.as_secs_f64()
        )
    }
}

mod millis {
    use std::time::Duration;

    pub fn serialize<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u128(d.as_millis())
    }
}

/// Reads `{id, text[, embedding]}` lines. Blank lines are skipped; the
/// original line text is returned alongside each record so kept rows can be
/// written back unchanged.
pub fn read_records(path: &Path) -> Result<Vec<(DatasetRecord, String)>, PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(&line).map_err(|e| PipelineError::Malformed {
            line: index + 1,
            reason: e.to_string(),
        })?;
        if record.text.trim().is_empty() {
            return Err(PipelineError::Malformed {
                line: index + 1,
                reason: format!("record {:?} has empty text", record.id),
            });
        }
        out.push((record, line));
    }
    Ok(out)
}

pub fn run_pipeline(
    input: &Path,
    output: &Path,
    report_path: &Path,
    provider: &dyn EmbeddingProvider,
    config: &DedupConfig,
) -> Result<(DedupReport, PipelineSummary), PipelineError> {
    let start = Instant::now();
    // Open outputs first so an unwritable path fails before any embedding work.
    let out_file = create(output)?;
    let report_file = create(report_path)?;

    let rows = read_records(input)?;
    let input_count = rows.len();
    let (records, lines): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let (_, report) = dedup(records, provider, config)?;

    let mut writer = BufWriter::new(out_file);
    let mut kept = report.kept_ids.iter().peekable();
    let io_out = |source| PipelineError::Io {
        path: output.to_path_buf(),
        source,
    };
    for (id, line) in ids.iter().zip(&lines) {
        if kept.peek() == Some(&id) {
            kept.next();
            writeln!(writer, "{line}").map_err(io_out)?;
        }
    }
    writer.flush().map_err(io_out)?;

    let mut report_writer = BufWriter::new(report_file);
    let io_report = |source| PipelineError::Io {
        path: report_path.to_path_buf(),
        source,
    };
    serde_json::to_writer_pretty(&mut report_writer, &report).map_err(|e| io_report(e.into()))?;
    writeln!(report_writer).map_err(io_report)?;
    report_writer.flush().map_err(io_report)?;

    let summary = PipelineSummary {
        input: input_count,
        kept: report.kept_ids.len(),
        removed: report.removed.len(),
        pairs_compared: report.pairs_compared,
        wall_time: start.elapsed(),
    };
    tracing::info!(%summary, "dedup finished");
    Ok((report, summary))
}

fn create(path: &Path) -> Result<File, PipelineError> {
    File::create(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}
