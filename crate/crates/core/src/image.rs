//! Program images: a sparse word memory plus an entry point.
//!
//! Text form, one item per line:
//!
//! ```text
//! entry: 00000000
//! 00000000: 00A00093
//! 00000004: 00000073
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: address 0x{addr:08x} is not word aligned")]
    Unaligned { line: usize, addr: u32 },
    #[error("missing `entry:` line")]
    NoEntry,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProgramImage {
    pub entry: u32,
    /// Byte address -> word. Addresses are word aligned.
    pub words: BTreeMap<u32, u32>,
}

impl ProgramImage {
    pub fn word(&self, addr: u32) -> u32 {
        self.words.get(&addr).copied().unwrap_or(0)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "entry: {:08X}", self.entry);
        for (addr, word) in &self.words {
            let _ = writeln!(out, "{addr:08X}: {word:08X}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<ProgramImage, ImageError> {
        let mut entry = None;
        let mut words = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (lhs, rhs) = l.split_once(':').ok_or_else(|| ImageError::Syntax {
                line,
                msg: format!("expected `<addr>: <word>`, got `{l}`"),
            })?;
            let hex = |s: &str| {
                let s = s.trim();
                let s = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
                u32::from_str_radix(s, 16).map_err(|e| ImageError::Syntax {
                    line,
                    msg: format!("bad hex `{s}`: {e}"),
                })
            };
            if lhs.trim() == "entry" {
                entry = Some(hex(rhs)?);
                continue;
            }
            let addr = hex(lhs)?;
            if addr % 4 != 0 {
                return Err(ImageError::Unaligned { line, addr });
            }
            words.insert(addr, hex(rhs)?);
        }
        Ok(ProgramImage { entry: entry.ok_or(ImageError::NoEntry)?, words })
    }
}
