use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cfkit_core::corpus::parse_conllu;
use cfkit_core::Dataset;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// A path where `-` means stdin.
pub fn open(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Box::new(BufReader::new(f)))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    parse_conllu(open(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Non-blank lines with their 1-based line numbers.
pub fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, line)| serde_json::from_str(&line).with_context(|| format!("{}:{n}", path.display())))
        .collect()
}

pub struct Output {
    inner: Box<dyn Write>,
    path: Option<PathBuf>,
}

impl Output {
    /// A file, or stdout when `path` is `None`.
    pub fn create(path: Option<&Path>) -> Result<Self> {
        let inner: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        Ok(Output { inner, path: path.map(Path::to_path_buf) })
    }

    fn ctx(&self) -> String {
        self.path.as_ref().map_or_else(|| "writing stdout".into(), |p| format!("writing {}", p.display()))
    }

    pub fn jsonl<T: Serialize>(&mut self, item: &T) -> Result<()> {
        let line = serde_json::to_string(item)?;
        writeln!(self.inner, "{line}").with_context(|| self.ctx())
    }

    pub fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.inner, "{text}").with_context(|| self.ctx())
    }

    pub fn text(&mut self, text: &str) -> Result<()> {
        self.inner.write_all(text.as_bytes()).with_context(|| self.ctx())
    }

    pub fn finish(mut self) -> Result<()> {
        let ctx = self.ctx();
        self.inner.flush().context(ctx)
    }
}
