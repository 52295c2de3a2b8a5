//! Corpus listing and file I/O.

use std::fs;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use trackfill::midi::{parse_smf, QuantizedSong, Song};
use walkdir::WalkDir;

use crate::InputError;

pub const SCHEMA_VERSION: u32 = 1;

/// A MIDI file in a corpus: absolute path plus the `/`-separated path
/// relative to the corpus root, used as the file's id.
#[derive(Debug, Clone)]
pub struct CorpusFile {
    pub path: PathBuf,
    pub id: String,
}

fn is_midi(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
}

/// Every `.mid`/`.midi` file under `root` (or `root` itself), sorted by id.
pub fn list_corpus(root: &Path) -> Result<Vec<CorpusFile>> {
    if !root.exists() {
        return Err(InputError(format!("input {} does not exist", root.display())).into());
    }
    if root.is_file() {
        let id = root
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        return Ok(vec![CorpusFile {
            path: root.to_path_buf(),
            id,
        }]);
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| InputError(format!("walking {}: {e}", root.display())))?;
        if entry.file_type().is_file() && is_midi(entry.path()) {
            let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
            let id = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            out.push(CorpusFile {
                path: entry.path().to_path_buf(),
                id,
            });
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| InputError(format!("cannot read {}: {e}", path.display())).into())
}

pub fn read_song(path: &Path) -> Result<Song> {
    let bytes = read_bytes(path)?;
    parse_smf(&bytes).map_err(|e| InputError(format!("{}: {e}", path.display())).into())
}

/// A song that is already on the 24-tick grid, or is put there.
pub fn read_quantized(path: &Path) -> Result<QuantizedSong> {
    let song = read_song(path)?;
    match QuantizedSong::new(song.clone()) {
        Ok(q) => Ok(q),
        Err(_) => QuantizedSong::quantize(&song)
            .map_err(|e| InputError(format!("{}: {e}", path.display())).into()),
    }
}

/// Reads `path`, or stdin for `-`.
pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        io::stdin().read_to_end(&mut buf).context("reading stdin")?;
        Ok(buf)
    } else {
        read_bytes(path)
    }
}

/// Writes to `path`, or stdout for `-` or no path. Parent directories are created.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        None => write_stdout(bytes),
        Some(p) if p == Path::new("-") => write_stdout(bytes),
        Some(p) => write_file(p, bytes),
    }
}

fn write_stdout(bytes: &[u8]) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(bytes).context("writing stdout")?;
    out.flush().context("writing stdout")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| InputError(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, bytes)
        .map_err(|e| InputError(format!("cannot write {}: {e}", path.display())).into())
}

/// One JSON value per line.
pub fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut out = BufWriter::new(Vec::new());
    for item in items {
        serde_json::to_writer(&mut out, &item).context("serializing a report line")?;
        out.write_all(b"\n")?;
    }
    out.into_inner().context("flushing report")
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = read_bytes(path)?;
    let mut out = Vec::new();
    for (i, line) in bytes.lines().enumerate() {
        let line = line.map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| InputError(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

/// `root/id`, with the extension replaced by `.mid`.
pub fn output_path(root: &Path, id: &str) -> PathBuf {
    root.join(id).with_extension("mid")
}
