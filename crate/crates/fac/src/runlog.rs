//! Run logs and their CSV serialization.
//!
//! Every driver run produces a sequence of sampled rows with a fixed column
//! schema (see [`CSV_HEADER`]). Columns that do not apply to a configuration
//! (for example the surrogate-gradient norm under the gradient-corrected
//! critic, or the critic error when the reference system is singular) hold
//! the sentinel `-1`. A run cut short by divergence ends with a comment
//! marker `# diverged_at=T` after the final row.
//!
//! Numbers are written with the default float formatting, which is the
//! shortest string that parses back to the same value, so a read after a
//! write reproduces the log exactly. Wall-clock times are the one
//! nondeterministic column; [`strip_wall_ms`] removes them when two logs are
//! compared for byte equality.

use std::fs;
use std::path::Path;

use thiserror::Error;

/// The exact header line of every run CSV.
pub const CSV_HEADER: &str =
    "t,J,grad_norm,G_norm,critic_err,bias_norm,xi_norm,w_norm,wall_ms";

/// One logged row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    /// Environment step at which the row was sampled.
    pub t: u64,
    /// Objective of the current target policy.
    pub j: f64,
    /// Norm of the exact objective gradient.
    pub grad_norm: f64,
    /// Norm of the exact surrogate gradient, `-1` when not applicable.
    pub g_norm: f64,
    /// Distance from the critic iterate to its current-policy fixed point,
    /// `-1` when that fixed point is unavailable.
    pub critic_err: f64,
    /// Norm of the surrogate bias term, `-1` when not applicable.
    pub bias_norm: f64,
    /// Norm of the critic parameter vector.
    pub xi_norm: f64,
    /// Norm of the auxiliary vector (target weights or correction weights),
    /// `-1` when the critic has none.
    pub w_norm: f64,
    /// Milliseconds elapsed since the run started.
    pub wall_ms: f64,
}

impl RunRecord {
    /// Whether every numeric entry is finite, as the log schema requires.
    pub fn is_finite(&self) -> bool {
        [
            self.j,
            self.grad_norm,
            self.g_norm,
            self.critic_err,
            self.bias_norm,
            self.xi_norm,
            self.w_norm,
            self.wall_ms,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// A complete run: logged rows plus an optional divergence marker.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<RunRecord>,
    /// Step at which an iterate norm crossed the divergence threshold, if any.
    pub diverged_at: Option<u64>,
}

/// Errors from parsing a run CSV.
#[derive(Debug, Error)]
pub enum LogError {
    #[error("bad header: expected {CSV_HEADER:?}, got {0:?}")]
    BadHeader(String),
    #[error("line {0}: expected 9 comma-separated fields")]
    BadRow(usize),
    #[error("line {line}: cannot parse {field:?} as a number")]
    BadNumber { line: usize, field: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RunLog {
    pub fn last(&self) -> Option<&RunRecord> {
        self.records.last()
    }

    /// Renders the log as CSV text, header included.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.t,
                r.j,
                r.grad_norm,
                r.g_norm,
                r.critic_err,
                r.bias_norm,
                r.xi_norm,
                r.w_norm,
                r.wall_ms
            ));
        }
        if let Some(t) = self.diverged_at {
            out.push_str(&format!("# diverged_at={t}\n"));
        }
        out
    }

    /// Parses CSV text produced by [`RunLog::to_csv`].
    ///
    /// # Errors
    ///
    /// [`LogError`] on a wrong header, malformed row, or unparsable number.
    pub fn from_csv(text: &str) -> Result<Self, LogError> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        if header != CSV_HEADER {
            return Err(LogError::BadHeader(header.to_string()));
        }
        let mut log = RunLog::default();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# diverged_at=") {
                let t = rest.trim().parse().map_err(|_| LogError::BadNumber {
                    line: lineno,
                    field: rest.to_string(),
                })?;
                log.diverged_at = Some(t);
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(LogError::BadRow(lineno));
            }
            let num = |f: &str| -> Result<f64, LogError> {
                f.parse().map_err(|_| LogError::BadNumber {
                    line: lineno,
                    field: f.to_string(),
                })
            };
            log.records.push(RunRecord {
                t: fields[0].parse().map_err(|_| LogError::BadNumber {
                    line: lineno,
                    field: fields[0].to_string(),
                })?,
                j: num(fields[1])?,
                grad_norm: num(fields[2])?,
                g_norm: num(fields[3])?,
                critic_err: num(fields[4])?,
                bias_norm: num(fields[5])?,
                xi_norm: num(fields[6])?,
                w_norm: num(fields[7])?,
                wall_ms: num(fields[8])?,
            });
        }
        Ok(log)
    }

    /// Writes the CSV rendering to `path`.
    ///
    /// # Errors
    ///
    /// Propagates I/O failures.
    pub fn write_csv(&self, path: &Path) -> Result<(), LogError> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Reads a CSV file written by [`RunLog::write_csv`].
    ///
    /// # Errors
    ///
    /// [`LogError`] on I/O or parse failure.
    pub fn read_csv(path: &Path) -> Result<Self, LogError> {
        Self::from_csv(&fs::read_to_string(path)?)
    }
}

/// Drops the final (wall-clock) column from every non-comment line, for
/// comparing two runs that should agree in everything but timing.
pub fn strip_wall_ms(csv: &str) -> String {
    let mut out = String::with_capacity(csv.len());
    for line in csv.lines() {
        if line.starts_with('#') {
            out.push_str(line);
        } else if let Some((head, _)) = line.rsplit_once(',') {
            out.push_str(head);
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}
