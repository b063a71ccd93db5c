//! Run manifest: every command appends one line to `<out>/manifest.txt`
//! naming its inputs and outputs with content digests, so any artifact
//! can be traced back to the exact bytes that produced it. Lines carry
//! no timestamps; rerunning an identical command appends an identical
//! line.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

pub fn sha256_hex(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

pub fn append(
    out_dir: &Path,
    command: &str,
    seeds: &[u64],
    inputs: &[(&str, &Path)],
    outputs: &[(&str, &Path)],
) -> io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let mut line = format!("command={command} seeds={}", seeds.join(","));
    for (kind, files) in [("input", inputs), ("output", outputs)] {
        for (label, path) in files {
            let _ = write!(line, " {kind}:{label}={} sha256={}", path.display(), sha256_hex(path)?);
        }
    }
    let mut file =
        OpenOptions::new().create(true).append(true).open(out_dir.join("manifest.txt"))?;
    writeln!(file, "{line}")
}
