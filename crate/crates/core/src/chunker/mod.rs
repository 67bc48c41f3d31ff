//! Chunk identification and logging instrumentation for a small C-like language.
//!
//! A chunk is a maximal run of straight-line statements. A branch or loop
//! condition closes the chunk it appears in; each branch arm and loop body
//! opens a new chunk, as does the code after the join and every function
//! body. Calls do not break chunks.
//!
//! The supported subset: function definitions, declarations, assignments,
//! calls, `return`/`break`/`continue`, `if`/`else`, `while` and `for`, with
//! braced bodies and one statement per line. No preprocessor, `switch`,
//! `goto` or `do`.

mod lexer;
mod parser;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::records::DEFAULT_CLASS;
use parser::{Span, Stmt};

/// Name of the logging call injected at every chunk entry.
pub const LOG_CALL: &str = "RESID_LOG";

pub const CHUNK_DB_HEADER: &str = "# resid-chunkdb v1";
pub const RULES_HEADER: &str = "# resid-rules v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChunkError {
    #[error("{file}:{line}:{col}: {message}")]
    Syntax {
        file: String,
        line: u32,
        col: u32,
        message: String,
    },
    #[error("{file}:{line}: {message}")]
    Layout {
        file: String,
        line: u32,
        message: String,
    },
    #[error("duplicate source {0}")]
    DuplicateSource(String),
    #[error("chunk id prefix {stem:?} is shared by {first} and {second}")]
    DuplicateStem {
        stem: String,
        first: String,
        second: String,
    },
    #[error("chunk database is stale: built from digest {expected}, sources hash to {found}")]
    StaleDatabase { expected: String, found: String },
    #[error("invalid classification rule on line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("malformed chunk database line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: PathBuf,
    pub text: String,
}

impl SourceFile {
    pub fn new(path: impl Into<PathBuf>, text: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub file: PathBuf,
    pub first_line: u32,
    pub last_line: u32,
    /// Non-blank programmer-written lines in the chunk; injected log lines excluded.
    pub line_count: u32,
    pub class_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkDb {
    chunks: Vec<Chunk>,
    source_digest: String,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ChunkDb {
    pub fn new(chunks: Vec<Chunk>, source_digest: String) -> Result<Self, ChunkError> {
        let mut index = HashMap::with_capacity(chunks.len());
        let mut by_file: BTreeMap<&Path, Vec<&Chunk>> = BTreeMap::new();
        for (i, c) in chunks.iter().enumerate() {
            if index.insert(c.id.clone(), i).is_some() {
                return Err(ChunkError::Format {
                    line: i + 1,
                    message: format!("duplicate chunk id {}", c.id),
                });
            }
            if c.first_line == 0 || c.first_line > c.last_line {
                return Err(ChunkError::Format {
                    line: i + 1,
                    message: format!("chunk {} has an empty line range", c.id),
                });
            }
            by_file.entry(&c.file).or_default().push(c);
        }
        for chunks in by_file.values_mut() {
            chunks.sort_by_key(|c| c.first_line);
            if let Some(w) = chunks
                .windows(2)
                .find(|w| w[1].first_line <= w[0].last_line)
            {
                return Err(ChunkError::Format {
                    line: 0,
                    message: format!("chunks {} and {} overlap", w[0].id, w[1].id),
                });
            }
        }
        Ok(Self {
            chunks,
            source_digest,
            index,
        })
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    pub fn get(&self, id: &str) -> Option<&Chunk> {
        self.index.get(id).map(|&i| &self.chunks[i])
    }

    pub fn class_map(&self) -> BTreeMap<String, String> {
        self.chunks
            .iter()
            .filter_map(|c| Some((c.id.clone(), c.class_label.clone()?)))
            .collect()
    }

    /// Tab-separated text, one chunk per line, after a versioned header.
    pub fn to_text(&self) -> String {
        let mut out = format!("{CHUNK_DB_HEADER}\n# digest {}\n", self.source_digest);
        out.push_str("# id\tfile\tfirst_line\tlast_line\tline_count\tclass_label\n");
        for c in &self.chunks {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                c.id,
                c.file.display(),
                c.first_line,
                c.last_line,
                c.line_count,
                c.class_label.as_deref().unwrap_or("-")
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ChunkError> {
        let bad = |line: usize, message: String| ChunkError::Format { line, message };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == CHUNK_DB_HEADER => {}
            _ => return Err(bad(1, format!("expected header {CHUNK_DB_HEADER:?}"))),
        }
        let digest = match lines.next() {
            Some((_, l)) => l
                .strip_prefix("# digest ")
                .map(|d| d.trim().to_string())
                .ok_or_else(|| bad(2, "expected '# digest <hex>'".into()))?,
            None => return Err(bad(2, "missing digest line".into())),
        };
        let mut chunks = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, file, first, last, count, class] = fields[..] else {
                return Err(bad(
                    n,
                    format!("expected 6 tab-separated fields, got {}", fields.len()),
                ));
            };
            let num = |s: &str, what: &str| {
                s.parse::<u32>()
                    .map_err(|_| bad(n, format!("{what} {s:?} is not a line number")))
            };
            chunks.push(Chunk {
                id: id.to_string(),
                file: PathBuf::from(file),
                first_line: num(first, "first_line")?,
                last_line: num(last, "last_line")?,
                line_count: num(count, "line_count")?,
                class_label: (class != "-").then(|| class.to_string()),
            });
        }
        Self::new(chunks, digest)
    }
}

/// SHA-256 over the sources in path order.
pub fn source_digest(sources: &[SourceFile]) -> String {
    let mut ordered: Vec<&SourceFile> = sources.iter().collect();
    ordered.sort_by(|a, b| a.path.cmp(&b.path));
    let mut hasher = Sha256::new();
    for s in ordered {
        let path = s.path.to_string_lossy();
        hasher.update((path.len() as u64).to_le_bytes());
        hasher.update(path.as_bytes());
        hasher.update((s.text.len() as u64).to_le_bytes());
        hasher.update(s.text.as_bytes());
    }
    hasher
        .finalize()
        .iter()
        .fold(String::with_capacity(64), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

#[derive(Default)]
struct Builder {
    open: Option<Span>,
    closed: Vec<Span>,
}

impl Builder {
    fn extend(&mut self, span: Span) {
        self.open = Some(match self.open {
            Some(cur) => Span {
                first_line: cur.first_line,
                last_line: span.last_line,
            },
            None => span,
        });
    }

    fn close(&mut self) {
        if let Some(span) = self.open.take() {
            self.closed.push(span);
        }
    }

    fn walk(&mut self, stmts: &[Stmt], logs: &mut BTreeSet<u32>) {
        for stmt in stmts {
            match stmt {
                Stmt::Simple(span) => self.extend(*span),
                Stmt::Log(span) => logs.extend(span.first_line..=span.last_line),
                Stmt::Block(inner) => self.walk(inner, logs),
                Stmt::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    self.extend(*cond);
                    self.close();
                    self.walk(then_body, logs);
                    self.close();
                    if let Some(body) = else_body {
                        self.walk(body, logs);
                        self.close();
                    }
                }
                Stmt::Loop { header, body } => {
                    self.extend(*header);
                    self.close();
                    self.walk(body, logs);
                    self.close();
                }
            }
        }
    }
}

fn chunk_file(source: &SourceFile) -> Result<Vec<Chunk>, ChunkError> {
    let name = source.path.to_string_lossy().into_owned();
    let tokens = lexer::tokenize(&name, &source.text)?;
    let functions = parser::parse(&name, &tokens)?;

    let mut builder = Builder::default();
    let mut log_lines = BTreeSet::new();
    for f in &functions {
        builder.close();
        builder.walk(&f.body, &mut log_lines);
        builder.close();
    }
    let mut spans = builder.closed;
    spans.sort_by_key(|s| s.first_line);
    if let Some(w) = spans.windows(2).find(|w| w[1].first_line <= w[0].last_line) {
        return Err(ChunkError::Layout {
            file: name,
            line: w[1].first_line,
            message: "two chunks share this line; put each statement and each body on its own line"
                .into(),
        });
    }

    let lines: Vec<&str> = source.text.lines().collect();
    let prefix = stem(&source.path);
    Ok(spans
        .iter()
        .enumerate()
        .map(|(i, span)| {
            let line_count = (span.first_line..=span.last_line)
                .filter(|n| !log_lines.contains(n))
                .filter(|&n| {
                    lines
                        .get(n as usize - 1)
                        .is_some_and(|l| !l.trim().is_empty())
                })
                .count() as u32;
            Chunk {
                id: format!("{prefix}:{}", i + 1),
                file: source.path.clone(),
                first_line: span.first_line,
                last_line: span.last_line,
                line_count,
                class_label: None,
            }
        })
        .collect())
}

/// Builds the chunk database for a set of sources, merged in path order.
pub fn identify_chunks(sources: &[SourceFile]) -> Result<ChunkDb, ChunkError> {
    let mut ordered: Vec<&SourceFile> = sources.iter().collect();
    ordered.sort_by(|a, b| a.path.cmp(&b.path));
    let mut stems: HashMap<String, &Path> = HashMap::new();
    for pair in ordered.windows(2) {
        if pair[0].path == pair[1].path {
            return Err(ChunkError::DuplicateSource(
                pair[0].path.display().to_string(),
            ));
        }
    }
    for s in &ordered {
        if let Some(prev) = stems.insert(stem(&s.path), &s.path) {
            return Err(ChunkError::DuplicateStem {
                stem: stem(&s.path),
                first: prev.display().to_string(),
                second: s.path.display().to_string(),
            });
        }
    }

    let mut chunks = Vec::new();
    for s in ordered {
        chunks.extend(chunk_file(s)?);
    }
    ChunkDb::new(chunks, source_digest(sources))
}

fn check_digest(sources: &[SourceFile], db: &ChunkDb) -> Result<(), ChunkError> {
    let found = source_digest(sources);
    if found != db.source_digest() {
        return Err(ChunkError::StaleDatabase {
            expected: db.source_digest().to_string(),
            found,
        });
    }
    Ok(())
}

/// Inserts `RESID_LOG("<chunk-id>");` on its own line before every chunk.
pub fn instrument(sources: &[SourceFile], db: &ChunkDb) -> Result<Vec<SourceFile>, ChunkError> {
    check_digest(sources, db)?;
    let mut ordered: Vec<&SourceFile> = sources.iter().collect();
    ordered.sort_by(|a, b| a.path.cmp(&b.path));

    Ok(ordered
        .into_iter()
        .map(|src| {
            let entries: HashMap<u32, &str> = db
                .chunks()
                .iter()
                .filter(|c| c.file == src.path)
                .map(|c| (c.first_line, c.id.as_str()))
                .collect();
            let mut out = String::with_capacity(src.text.len() + entries.len() * 32);
            for (i, line) in src.text.split_inclusive('\n').enumerate() {
                if let Some(id) = entries.get(&(i as u32 + 1)) {
                    let indent: String = line
                        .chars()
                        .take_while(|c| *c == ' ' || *c == '\t')
                        .collect();
                    let _ = writeln!(out, "{indent}{LOG_CALL}(\"{id}\");");
                }
                out.push_str(line);
            }
            SourceFile {
                path: src.path.clone(),
                text: out,
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct ClassRule {
    pub label: String,
    pub pattern: Regex,
}

impl ClassRule {
    pub fn new(label: impl Into<String>, pattern: &str) -> Result<Self, ChunkError> {
        let pattern = Regex::new(pattern).map_err(|e| ChunkError::Config {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(Self {
            label: label.into(),
            pattern,
        })
    }
}

/// Parses a rules file: a versioned header, then `<label> <regex>` per line.
pub fn parse_rules(text: &str) -> Result<Vec<ClassRule>, ChunkError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == RULES_HEADER => {}
        _ => {
            return Err(ChunkError::Config {
                line: 1,
                message: format!("expected header {RULES_HEADER:?}"),
            })
        }
    }
    let mut rules = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((label, pattern)) = line.split_once(char::is_whitespace) else {
            return Err(ChunkError::Config {
                line: i + 1,
                message: "expected '<label> <pattern>'".into(),
            });
        };
        let rule = ClassRule::new(label, pattern.trim()).map_err(|e| match e {
            ChunkError::Config { message, .. } => ChunkError::Config {
                line: i + 1,
                message,
            },
            other => other,
        })?;
        rules.push(rule);
    }
    Ok(rules)
}

/// Labels every chunk with the first rule whose pattern matches its text.
pub fn classify_chunks(
    db: &ChunkDb,
    sources: &[SourceFile],
    rules: &[ClassRule],
) -> Result<ChunkDb, ChunkError> {
    check_digest(sources, db)?;
    let texts: HashMap<&Path, Vec<&str>> = sources
        .iter()
        .map(|s| (s.path.as_path(), s.text.lines().collect()))
        .collect();
    let chunks = db
        .chunks()
        .iter()
        .map(|c| {
            let body = texts
                .get(c.file.as_path())
                .map(|lines| {
                    let lo = (c.first_line as usize - 1).min(lines.len());
                    let hi = (c.last_line as usize).min(lines.len());
                    lines[lo..hi].join("\n")
                })
                .unwrap_or_default();
            let label = rules
                .iter()
                .find(|r| r.pattern.is_match(&body))
                .map(|r| r.label.clone())
                .unwrap_or_else(|| DEFAULT_CLASS.to_string());
            Chunk {
                class_label: Some(label),
                ..c.clone()
            }
        })
        .collect();
    ChunkDb::new(chunks, db.source_digest().to_string())
}
