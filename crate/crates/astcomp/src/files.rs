//! On-disk formats: shards, vocabularies, JSON documents and the metrics log.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use astcomp_core::training::{EncodedProgram, Fingerprints, Shard};
use astcomp_core::vocab::{Specials, Vocab};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SHARD_FILE: &str = "shard.jsonl";
pub const SHARD_MANIFEST_FILE: &str = "shard.manifest.json";
pub const TYPE_VOCAB_FILE: &str = "types.vocab.json";
pub const VALUE_VOCAB_FILE: &str = "values.vocab.json";

/// Writes through a temporary sibling and renames it into place; the
/// temporary file is removed if anything fails.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let name = path.file_name().ok_or_else(|| Error::Usage(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        let file = w.into_inner().map_err(io::IntoInnerError::into_error)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::Io { path: path.to_owned(), source: e });
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(Error::io(path))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(Error::io(path))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(Error::io(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabKind {
    Type,
    Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct SpecialIds {
    pad: u32,
    unk: u32,
    empty: u32,
}

/// Vocabulary file contents. Byte-identical for identical inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct VocabFile {
    kind: VocabKind,
    /// Frequency cutoff for value vocabularies.
    k: Option<usize>,
    specials: SpecialIds,
    fingerprint: String,
    /// Hash over the input files the vocabulary was counted from.
    corpus_fingerprint: String,
    tokens: Vec<String>,
}

pub fn write_vocab(path: &Path, vocab: &Vocab, kind: VocabKind, corpus_fingerprint: &str) -> Result<()> {
    let Specials { pad, unk, empty } = vocab.specials();
    let file = VocabFile {
        kind,
        k: vocab.max_values(),
        specials: SpecialIds { pad, unk, empty },
        fingerprint: vocab.fingerprint(),
        corpus_fingerprint: corpus_fingerprint.into(),
        tokens: vocab.tokens().to_vec(),
    };
    write_json(path, &file)
}

pub fn read_vocab(path: &Path, kind: VocabKind) -> Result<Vocab> {
    let file: VocabFile = read_json(path)?;
    if file.kind != kind {
        return Err(Error::format(path, format!("expected a {kind:?} vocabulary, found {:?}", file.kind)));
    }
    let vocab = Vocab::from_tokens(file.tokens, file.k).map_err(|e| Error::format(path, e))?;
    let s = vocab.specials();
    if (s.pad, s.unk, s.empty) != (file.specials.pad, file.specials.unk, file.specials.empty) {
        return Err(Error::format(path, "special ids disagree with the token list"));
    }
    if vocab.fingerprint() != file.fingerprint {
        return Err(Error::format(path, "fingerprint does not match the token list"));
    }
    Ok(vocab)
}

/// Both vocabularies from a directory written by `preprocess` or `train`.
pub fn read_vocabs(dir: &Path) -> Result<(Vocab, Vocab)> {
    Ok((
        read_vocab(&dir.join(TYPE_VOCAB_FILE), VocabKind::Type)?,
        read_vocab(&dir.join(VALUE_VOCAB_FILE), VocabKind::Value)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ShardHeader {
    format: String,
    version: u32,
    path_len: usize,
    programs: usize,
    fingerprints: Fingerprints,
}

const SHARD_FORMAT: &str = "astcomp-shard";

/// JSON lines: a header, then one encoded program per line.
pub fn write_shard(path: &Path, shard: &Shard) -> Result<()> {
    let header = ShardHeader {
        format: SHARD_FORMAT.into(),
        version: 1,
        path_len: shard.path_len,
        programs: shard.programs.len(),
        fingerprints: shard.fingerprints.clone(),
    };
    write_atomic(path, |w| {
        serde_json::to_writer(&mut *w, &header)?;
        writeln!(w)?;
        for p in &shard.programs {
            serde_json::to_writer(&mut *w, p)?;
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Accepts the shard file itself or a directory holding [`SHARD_FILE`].
pub fn shard_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(SHARD_FILE)
    } else {
        path.to_owned()
    }
}

pub fn read_shard(path: &Path) -> Result<Shard> {
    let path = shard_path(path);
    let file = File::open(&path).map_err(Error::io(&path))?;
    let mut lines = BufReader::new(file).lines();
    let header_line =
        lines.next().ok_or_else(|| Error::format(&path, "empty shard file"))?.map_err(Error::io(&path))?;
    let header: ShardHeader = serde_json::from_str(&header_line).map_err(|e| Error::format(&path, e))?;
    if header.format != SHARD_FORMAT || header.version != 1 {
        return Err(Error::format(&path, format!("unsupported shard format {} v{}", header.format, header.version)));
    }
    let mut programs = Vec::with_capacity(header.programs);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(Error::io(&path))?;
        let program: EncodedProgram = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.clone(),
            line: i + 2,
            source: astcomp_core::Error::Parse(e.to_string()),
        })?;
        program.validate(header.path_len).map_err(|e| Error::Record { path: path.clone(), line: i + 2, source: e })?;
        programs.push(program);
    }
    if programs.len() != header.programs {
        return Err(Error::format(
            &path,
            format!("header lists {} programs, found {}", header.programs, programs.len()),
        ));
    }
    Ok(Shard { path_len: header.path_len, fingerprints: header.fingerprints, programs })
}

/// Per-input-file entry of a shard manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub sha256: String,
    /// Index of the file's first program in the shard.
    pub first_program: usize,
    pub programs: usize,
    pub nodes: usize,
    pub failed_lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub programs: usize,
    pub nodes: usize,
    pub avg_nodes: f64,
    pub max_nodes: usize,
    pub distinct_types: usize,
    pub type_vocab_size: usize,
    pub value_vocab_size: usize,
    /// Fraction of value tokens outside the value vocabulary.
    pub value_unk_rate: f64,
    pub failed_lines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardManifest {
    pub stats: CorpusStats,
    pub path_len: usize,
    pub fingerprints: Fingerprints,
    pub files: Vec<FileEntry>,
}

/// Append-only JSON-lines log, flushed after every record.
pub struct JsonLines {
    path: PathBuf,
    file: File,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path).map_err(Error::io(path))?;
        Ok(Self { path: path.to_owned(), file })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let mut line = serde_json::to_string(record).map_err(|e| Error::format(&self.path, e))?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(Error::io(&self.path))?;
        self.file.flush().map_err(Error::io(&self.path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_write_leaves_no_trace() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out.bin");
        fs::write(&target, b"old").unwrap();
        let err = write_atomic(&target, |w| {
            w.write_all(&[0u8; 100_000])?;
            Err(io::Error::new(io::ErrorKind::StorageFull, "disk full"))
        })
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert_eq!(fs::read(&target).unwrap(), b"old");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn write_into_missing_directory_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("missing").join("x.json");
        assert!(write_json(&target, &1).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
