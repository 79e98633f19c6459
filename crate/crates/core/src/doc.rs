//! Versioned newline-delimited JSON documents.
//!
//! Every persisted artifact is a UTF-8 text file whose first line is an
//! envelope `{"format": <kind>, "version": <int>, "header": {...}}` and whose
//! remaining lines are one JSON record each. Floats are written with
//! shortest round-trip formatting, so a save/load cycle is lossless.

use std::io::Write;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize)]
struct EnvelopeOut<'a, H> {
    format: &'a str,
    version: u32,
    header: &'a H,
}

#[derive(Deserialize)]
struct EnvelopeIn<H> {
    format: String,
    version: u32,
    header: H,
}

#[derive(Deserialize)]
struct Probe {
    format: String,
    version: u32,
}

pub fn write_doc<W, H, R, I>(mut out: W, format: &str, version: u32, header: &H, records: I) -> Result<()>
where
    W: Write,
    H: Serialize,
    R: Serialize,
    I: IntoIterator<Item = R>,
{
    let env = EnvelopeOut { format, version, header };
    serde_json::to_writer(&mut out, &env).map_err(io_err)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, &r).map_err(io_err)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_string<H, R, I>(format: &str, version: u32, header: &H, records: I) -> Result<String>
where
    H: Serialize,
    R: Serialize,
    I: IntoIterator<Item = R>,
{
    let mut buf = Vec::new();
    write_doc(&mut buf, format, version, header, records)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Returns `(format, version)` of a document without decoding its body.
pub fn probe(text: &str) -> Result<(String, u32)> {
    let first = text.lines().next().ok_or_else(|| parse_error(1, 0, "empty document"))?;
    let p: Probe = serde_json::from_str(first).map_err(|e| parse_error(1, 0, e))?;
    Ok((p.format, p.version))
}

pub fn read_doc<H, R>(text: &str, format: &str, version: u32) -> Result<(H, Vec<R>)>
where
    H: DeserializeOwned,
    R: DeserializeOwned,
{
    let mut offset = 0usize;
    let mut lines = text.split_inclusive('\n').enumerate();
    let (_, first) = lines.next().ok_or_else(|| parse_error(1, 0, "empty document"))?;
    let probe: Probe =
        serde_json::from_str(first.trim_end()).map_err(|e| parse_error(1, e.column().saturating_sub(1), e))?;
    if probe.format != format {
        return Err(parse_error(
            1,
            0,
            format!("expected `{format}` document, found `{}`", probe.format),
        ));
    }
    if probe.version != version {
        return Err(Error::Version {
            kind: format.to_string(),
            found: probe.version,
            expected: version,
        });
    }
    let env: EnvelopeIn<H> =
        serde_json::from_str(first.trim_end()).map_err(|e| parse_error(1, e.column().saturating_sub(1), e))?;
    debug_assert_eq!(env.format, format);
    debug_assert_eq!(env.version, version);
    offset += first.len();

    let mut records = Vec::new();
    for (i, line) in lines {
        let body = line.trim_end();
        if !body.is_empty() {
            let rec = serde_json::from_str(body)
                .map_err(|e| parse_error(i + 1, offset + e.column().saturating_sub(1), e))?;
            records.push(rec);
        }
        offset += line.len();
    }
    Ok((env.header, records))
}

fn parse_error(line: usize, offset: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse {
        line,
        offset,
        message: msg.to_string(),
    }
}

fn io_err(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_record_reports_line_and_offset() {
        let text = "{\"format\":\"x\",\"version\":1,\"header\":0}\n[1]\n[2,\n";
        let err = read_doc::<u32, Vec<u32>>(text, "x", 1).unwrap_err();
        match err {
            Error::Parse { line, offset, .. } => {
                assert_eq!(line, 3);
                assert!(offset >= 42, "offset {offset}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let text = "{\"format\":\"x\",\"version\":7,\"header\":0}\n";
        assert!(matches!(
            read_doc::<u32, u32>(text, "x", 1),
            Err(Error::Version { found: 7, expected: 1, .. })
        ));
    }
}
