// SPDX-License-Identifier: MIT OR Apache-2.0

//! Versioned text tables for sorted Monte Carlo samples.
//!
//! Layout, one item per line:
//!
//! ```text
//! exactcp-table 1
//! <key> <value>            (any number of header fields)
//! samples <distinct>
//! <f64 bits as 16 hex digits>:<multiplicity>
//! ```
//!
//! Values are stored as IEEE-754 bit patterns so a round trip is lossless and
//! independent of platform endianness. Runs of equal values are collapsed.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &str = "exactcp-table";
const VERSION: u32 = 1;

pub(crate) struct Table {
    pub header: BTreeMap<String, String>,
    pub samples: Vec<f64>,
}

pub(crate) fn write(path: &Path, header: &[(&str, String)], samples: &[f64]) -> Result<()> {
    let mut out = format!("{MAGIC} {VERSION}\n");
    for (k, v) in header {
        out.push_str(&format!("{k} {v}\n"));
    }
    let mut runs: Vec<(u64, usize)> = Vec::new();
    for &x in samples {
        let bits = x.to_bits();
        match runs.last_mut() {
            Some((b, n)) if *b == bits => *n += 1,
            _ => runs.push((bits, 1)),
        }
    }
    out.push_str(&format!("samples {}\n", runs.len()));
    for (b, n) in runs {
        out.push_str(&format!("{b:016x}:{n}\n"));
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    // Write to a sibling temp file then rename, so readers never see a torn table.
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::File::create(&tmp)?.write_all(out.as_bytes())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn read(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let bad = |row: usize, msg: &str| Error::parse(row + 1, 1, format!("{}: {msg}", path.display()));
    match lines.next() {
        Some((_, l)) if l == format!("{MAGIC} {VERSION}") => {}
        Some((r, _)) => return Err(bad(r, "unsupported table version")),
        None => return Err(bad(0, "empty table")),
    }
    let mut header = BTreeMap::new();
    let mut distinct = None;
    for (r, line) in lines.by_ref() {
        let (k, v) = line.split_once(' ').ok_or_else(|| bad(r, "malformed header line"))?;
        if k == "samples" {
            distinct = Some(v.parse::<usize>().map_err(|_| bad(r, "bad sample count"))?);
            break;
        }
        header.insert(k.to_string(), v.to_string());
    }
    let distinct = distinct.ok_or_else(|| bad(0, "missing samples section"))?;
    let mut samples = Vec::new();
    let mut seen = 0;
    for (r, line) in lines {
        let (b, n) = line.split_once(':').ok_or_else(|| bad(r, "malformed sample run"))?;
        let bits = u64::from_str_radix(b, 16).map_err(|_| bad(r, "bad sample bits"))?;
        let n: usize = n.parse().map_err(|_| bad(r, "bad multiplicity"))?;
        samples.extend(std::iter::repeat_n(f64::from_bits(bits), n));
        seen += 1;
    }
    if seen != distinct {
        return Err(bad(0, "truncated sample section"));
    }
    Ok(Table { header, samples })
}
