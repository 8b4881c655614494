//! Input digests and the header every output carries.
//!
//! CSV outputs start with `#` comment lines:
//!
//! ```text
//! # nvcav 0.1.0 sweep
//! # input run.toml sha256=9f86d0...
//! # seed 7
//! ```
//!
//! JSON outputs carry the same facts in a `provenance` object. No clock or
//! host information is recorded, so identical runs give identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Context, Result};

pub const TOOL: &str = concat!("nvcav ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub command: String,
    pub inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        Provenance { tool: TOOL, command: command.to_string(), inputs: Vec::new(), seed: None }
    }

    /// Reads a UTF-8 input file and records its digest.
    pub fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).context(format_args!("reading {}", path.display()))?;
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        String::from_utf8(bytes).map_err(|_| crate::error::CliError::input(format!("{} is not UTF-8", path.display())))
    }

    pub fn header(&self) -> String {
        let mut s = format!("# {} {}\n", self.tool, self.command);
        for i in &self.inputs {
            s.push_str(&format!("# input {} sha256={}\n", i.path, i.sha256));
        }
        if let Some(seed) = self.seed {
            s.push_str(&format!("# seed {seed}\n"));
        }
        s
    }
}

/// Where a command writes its result: a file, or standard output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Output(pub Option<PathBuf>);

impl Output {
    pub fn write(&self, text: &str) -> Result<()> {
        match &self.0 {
            Some(p) => fs::write(p, text).context(format_args!("writing {}", p.display())),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
                Ok(out.flush()?)
            }
        }
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_exactly() {
        for v in [1.8e-26, 0.1 + 0.2, 5.158e6, -0.0, 1.0 / 3.0, f64::MIN_POSITIVE, 12345678.9] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn digest_of_known_input() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
