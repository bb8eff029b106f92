//! Line-delimited JSON helpers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Reads every non-blank line of `path`; the first malformed line is an error.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let (records, skipped) = read_impl(path, false)?;
    debug_assert!(skipped.is_empty());
    Ok(records)
}

/// Like [`read`], but malformed lines are skipped and reported by line number.
pub fn read_lenient<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, Vec<usize>)> {
    read_impl(path, true)
}

fn read_impl<T: DeserializeOwned>(path: &Path, lenient: bool) -> Result<(Vec<T>, Vec<usize>)> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(record) => records.push(record),
            Err(_) if lenient => skipped.push(i + 1),
            Err(e) => return Err(Error::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() }),
        }
    }
    Ok((records, skipped))
}

pub fn write<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut out = BufWriter::new(file);
    write_to(&mut out, records).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    out.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn write_to<W: Write, T: Serialize>(out: &mut W, records: &[T]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
