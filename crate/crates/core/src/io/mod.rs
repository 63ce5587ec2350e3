//! On-disk formats.
//!
//! Every metadata file is line-delimited JSON. The first line is a header
//! naming the format and its schema version; each following line is one
//! record. Loaders refuse unknown formats and versions.

pub mod annotations;
pub mod detections;
pub mod manifest;
pub mod predictions;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    schema_version: u32,
}

/// Renders a header line plus one JSON line per record.
pub fn encode_records<'a, T, I>(format: &str, records: I) -> Result<String>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let header = Header {
        format: format.to_owned(),
        schema_version: SCHEMA_VERSION,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for r in records {
        let line =
            serde_json::to_string(r).map_err(|e| Error::InvalidInput(format!("cannot serialize record: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Parses text produced by [`encode_records`]. `origin` only labels errors.
pub fn decode_records<T: DeserializeOwned>(format: &str, text: &str, origin: &Path) -> Result<Vec<T>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::Parse {
        path: origin.to_owned(),
        line: 1,
        message: "empty file, expected a header line".into(),
    })?;
    let header: Header = serde_json::from_str(first).map_err(|e| Error::Parse {
        path: origin.to_owned(),
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if header.format != format || header.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema {
            path: origin.to_owned(),
            expected: format!("{format} v{SCHEMA_VERSION}"),
            found: format!("{} v{}", header.format, header.schema_version),
        });
    }
    lines
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: origin.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_records<'a, T, I>(path: &Path, format: &str, records: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let text = encode_records(format, records)?;
    write_text(path, &text)
}

pub fn read_records<T: DeserializeOwned>(path: &Path, format: &str) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_records(format, &text, path)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Rec {
        a: u32,
    }

    #[test]
    fn header_is_checked() {
        let p = PathBuf::from("x.jsonl");
        let text = encode_records("test.rec", &[Rec { a: 1 }, Rec { a: 2 }]).unwrap();
        assert_eq!(
            text,
            "{\"format\":\"test.rec\",\"schema_version\":1}\n{\"a\":1}\n{\"a\":2}\n"
        );
        assert_eq!(decode_records::<Rec>("test.rec", &text, &p).unwrap().len(), 2);
        assert!(matches!(
            decode_records::<Rec>("other", &text, &p),
            Err(Error::Schema { .. })
        ));
        let future = text.replace("\"schema_version\":1", "\"schema_version\":2");
        assert!(matches!(
            decode_records::<Rec>("test.rec", &future, &p),
            Err(Error::Schema { .. })
        ));
        assert!(decode_records::<Rec>("test.rec", "", &p).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let p = PathBuf::from("x.jsonl");
        let text = "{\"format\":\"t\",\"schema_version\":1}\n{\"a\":1}\n{\"a\":\"no\"}\n";
        match decode_records::<Rec>("t", text, &p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
