//! CSV and hashing helpers shared by the stage readers and writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Reader that skips `#` provenance lines written by [`ArtifactWriter`].
pub fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sha256_str(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

/// CSV writer whose first line names the producing stage and parameter hash.
pub struct ArtifactWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl ArtifactWriter {
    pub fn create(path: &Path, stage: &str, param_hash: &str) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = BufWriter::new(file);
        writeln!(buf, "# stage={stage} params={param_hash}").map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner: csv::WriterBuilder::new().from_writer(buf),
        })
    }

    pub fn row<I, T>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io("<artifact>", e))?;
        Ok(())
    }
}

/// Shortest round-trip representation, so artifacts re-read bit-exactly.
pub fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("not a number: {s:?}"))),
    }
}
