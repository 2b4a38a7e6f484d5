use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::Failure;

/// Writes `contents` next to `path` and renames it into place, so readers
/// never see a half-written report.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| Failure::Usage(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Sends the JSON report to `out`, or to stdout when no path is given.
pub fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
    text.push('\n');
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Human-readable lines go to stdout unless stdout carries the report.
pub struct Console {
    to_stdout: bool,
}

impl Console {
    pub fn new(report_to_file: bool) -> Self {
        Self {
            to_stdout: report_to_file,
        }
    }

    pub fn line(&self, s: impl AsRef<str>) {
        if self.to_stdout {
            println!("{}", s.as_ref());
        } else {
            eprintln!("{}", s.as_ref());
        }
    }
}
