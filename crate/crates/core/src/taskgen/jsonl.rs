//! One story per line, fields in declaration order.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::StoryInstance;

pub fn to_jsonl(instances: &[StoryInstance]) -> Result<String> {
    let mut out = Vec::new();
    write_jsonl(&mut out, instances)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

pub fn write_jsonl(mut w: impl Write, instances: &[StoryInstance]) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Blank lines are skipped; errors carry the 1-based line number.
pub fn read_jsonl(r: impl Read) -> Result<Vec<StoryInstance>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: StoryInstance = serde_json::from_str(&line).map_err(|e| Error::Data {
            line: i + 1,
            msg: e.to_string(),
        })?;
        inst.validate().map_err(|e| Error::Data {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(inst);
    }
    Ok(out)
}

pub fn read_jsonl_file(path: impl AsRef<Path>) -> Result<Vec<StoryInstance>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    read_jsonl(f)
}
